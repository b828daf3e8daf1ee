//! Straight-line reference model of the shared workspace, plus a driver that
//! replays random command streams against a live server and the model.
//!
//! The model keeps every write a group ever received. The live table is
//! derived on demand as the last write per name, so it shares no structure
//! with the server's table.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use gridmesh::client::{Client, ClientError};
use gridmesh::value::{encode_named_values, NamedValues, Value};
use gridmesh::server::ServerHandle;
use gridmesh::wire::TransportKind;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

struct Write {
    name: String,
    author: u64,
    value: Value,
}

#[derive(Default)]
struct Group {
    members: BTreeSet<u64>,
    log: Vec<Write>,
}

impl Group {
    /// Log indices that still hold the latest value for their name.
    fn live(&self) -> Vec<usize> {
        (0..self.log.len())
            .filter(|&i| self.log[i + 1..].iter().all(|w| w.name != self.log[i].name))
            .collect()
    }
}

#[derive(Default)]
pub struct Model {
    groups: BTreeMap<String, Group>,
    /// session -> (group -> number of log entries already walked)
    cursors: HashMap<u64, BTreeMap<String, usize>>,
}

impl Model {
    pub fn connect(&mut self, session: u64) {
        self.cursors.insert(session, BTreeMap::new());
    }

    pub fn disconnect(&mut self, session: u64) {
        let joined: Vec<String> = self.cursors.remove(&session).unwrap().into_keys().collect();
        self.leave(session, &joined, false);
    }

    pub fn join(&mut self, session: u64, groups: &[String]) {
        for g in groups {
            self.groups.entry(g.clone()).or_default().members.insert(session);
            self.cursors.get_mut(&session).unwrap().entry(g.clone()).or_insert(0);
        }
    }

    pub fn leave(&mut self, session: u64, groups: &[String], forget: bool) {
        for g in groups {
            if forget && self.cursors.get_mut(&session).unwrap().remove(g).is_none() {
                continue;
            }
            let group = self.groups.get_mut(g).unwrap();
            group.members.remove(&session);
            if group.members.is_empty() {
                self.groups.remove(g);
            }
        }
    }

    pub fn send(&mut self, session: u64, groups: &[String], payload: &NamedValues) -> Result<(), Vec<String>> {
        let mut targets: Vec<String> = Vec::new();
        for g in groups {
            if !targets.contains(g) {
                targets.push(g.clone());
            }
        }
        let missing: Vec<String> = targets.iter().filter(|g| !self.groups.contains_key(*g)).cloned().collect();
        if !missing.is_empty() {
            return Err(missing);
        }
        for g in &targets {
            self.write(session, g, payload);
        }
        Ok(())
    }

    pub fn broadcast(&mut self, session: u64, payload: &NamedValues) {
        let all: Vec<String> = self.groups.keys().cloned().collect();
        for g in &all {
            self.write(session, g, payload);
        }
    }

    fn write(&mut self, session: u64, group: &str, payload: &NamedValues) {
        let log = &mut self.groups.get_mut(group).unwrap().log;
        for (name, value) in payload.iter() {
            log.push(Write { name: name.to_owned(), author: session, value: value.clone() });
        }
    }

    pub fn sync(&mut self, session: u64, max_n: Option<usize>) -> Vec<(String, Value)> {
        let mut out: Vec<(String, Value)> = Vec::new();
        let mut taken = 0;
        let cursors = self.cursors.get_mut(&session).unwrap();
        for (g, cursor) in cursors.iter_mut() {
            let group = &self.groups[g];
            for i in group.live() {
                if i < *cursor {
                    continue;
                }
                if max_n.is_some_and(|n| taken >= n) {
                    return out;
                }
                *cursor = i + 1;
                let w = &group.log[i];
                if w.author == session {
                    continue;
                }
                taken += 1;
                match out.iter_mut().find(|(n, _)| *n == w.name) {
                    Some(slot) => slot.1 = w.value.clone(),
                    None => out.push((w.name.clone(), w.value.clone())),
                }
            }
        }
        out
    }

    pub fn has_pending(&self, session: u64) -> bool {
        self.cursors[&session].iter().any(|(g, &cursor)| {
            let group = &self.groups[g];
            group.live().into_iter().any(|i| i >= cursor && group.log[i].author != session)
        })
    }

    /// (name, members, writes) for every live group, by name.
    pub fn list(&self) -> Vec<(String, usize, u64)> {
        self.groups.iter().map(|(n, g)| (n.clone(), g.members.len(), g.log.len() as u64)).collect()
    }
}

#[derive(Debug, Default)]
pub struct OracleReport {
    pub commands: usize,
    pub syncs: usize,
    pub deliveries: usize,
    pub mismatches: Vec<String>,
    /// Deliveries of a write that reached none of the receiver's groups.
    pub isolation_violations: usize,
}

pub const CLIENTS: usize = 5;
pub const GROUPS: [&str; 4] = ["alpha", "beta", "delta", "gamma"];
const NAMES: [&str; 5] = ["f", "p", "q", "v", "w"];

fn pick_groups(rng: &mut StdRng) -> Vec<String> {
    (0..rng.gen_range(1..=3)).map(|_| GROUPS[rng.gen_range(0..GROUPS.len())].to_owned()).collect()
}

fn canon(pairs: &[(String, Value)]) -> Vec<u8> {
    let mut nv = NamedValues::new();
    for (n, v) in pairs {
        nv.push(n.clone(), v.clone()).unwrap();
    }
    encode_named_values(&nv).unwrap()
}

/// Runs `commands` random operations against a fresh TCP `server` and the
/// model in lockstep, recording every disagreement.
pub fn run(server: &ServerHandle, seed: u64, commands: usize) -> OracleReport {
    let binding = server.binding(TransportKind::Tcp).expect("tcp binding");
    let mut rng = StdRng::seed_from_u64(seed);
    let mut model = Model::default();
    let mut report = OracleReport::default();
    let mut clients: Vec<Client> = Vec::new();
    let mut sessions: Vec<u64> = Vec::new();
    let mut next_session = 0u64;
    // write uid -> groups it landed in
    let mut provenance: HashMap<i64, BTreeSet<String>> = HashMap::new();
    let mut next_uid = 0i64;
    let mut joined: Vec<BTreeSet<String>> = vec![BTreeSet::new(); CLIENTS];

    for _ in 0..CLIENTS {
        clients.push(Client::connect(binding).unwrap());
        sessions.push(next_session);
        model.connect(next_session);
        next_session += 1;
    }

    for step in 0..commands {
        let c = rng.gen_range(0..CLIENTS);
        let me = sessions[c];
        let mut mismatch = |what: String| report.mismatches.push(format!("step {step} client {c}: {what}"));
        let op = rng.gen_range(0..100);
        match op {
            0..=14 => {
                let gs = pick_groups(&mut rng);
                clients[c].join(&gs).unwrap();
                model.join(me, &gs);
                joined[c].extend(gs);
            }
            15..=22 => {
                let gs = pick_groups(&mut rng);
                clients[c].leave(&gs).unwrap();
                model.leave(me, &gs, true);
                for g in &gs {
                    joined[c].remove(g);
                }
            }
            23..=55 => {
                let broadcast = op >= 48;
                let mut payload = NamedValues::new();
                for _ in 0..rng.gen_range(1..=3) {
                    let name = NAMES[rng.gen_range(0..NAMES.len())];
                    if payload.get(name).is_none() {
                        let value = Value::List(vec![Value::Int(next_uid), Value::Double(rng.gen())]);
                        payload.push(name, value).unwrap();
                    }
                }
                let uid_groups = provenance.entry(next_uid).or_default();
                if broadcast {
                    uid_groups.extend(model.list().into_iter().map(|(n, _, _)| n));
                    model.broadcast(me, &payload);
                    clients[c].broadcast_values(payload).unwrap();
                } else {
                    let gs = pick_groups(&mut rng);
                    let expect = model.send(me, &gs, &payload);
                    if expect.is_ok() {
                        uid_groups.extend(gs.iter().cloned());
                    }
                    match (clients[c].send_values(&gs, payload), expect) {
                        (Ok(()), Ok(())) => {}
                        (Err(ClientError::UnknownGroup(got)), Err(want)) if got == want => {}
                        (got, want) => mismatch(format!("send {gs:?}: server {got:?}, model {want:?}")),
                    }
                }
                next_uid += 1;
            }
            56..=85 => {
                let max_n = if rng.gen_bool(0.5) { None } else { Some(rng.gen_range(0..4)) };
                let want = model.sync(me, max_n);
                let got = clients[c].sync_r(max_n).unwrap();
                report.syncs += 1;
                report.deliveries += got.len();
                if encode_named_values(&got).unwrap() != canon(&want) {
                    mismatch(format!("sync {max_n:?}: server {got:?}, model {want:?}"));
                }
                for (_, v) in got.iter() {
                    let uid = v.as_list().and_then(|l| l[0].as_i64()).expect("tagged value");
                    if provenance[&uid].is_disjoint(&joined[c]) {
                        report.isolation_violations += 1;
                    }
                }
            }
            86..=92 => {
                let got = clients[c].wait(Some(std::time::Duration::ZERO)).unwrap();
                let want = model.has_pending(me);
                if got != want {
                    mismatch(format!("wait(0): server {got}, model {want}"));
                }
            }
            93..=96 => {
                let got: Vec<(String, usize, u64)> =
                    clients[c].list().unwrap().into_iter().map(|g| (g.name, g.members, g.writes)).collect();
                let want = model.list();
                if got != want {
                    mismatch(format!("list: server {got:?}, model {want:?}"));
                }
            }
            _ => {
                clients[c].close();
                model.disconnect(me);
                joined[c].clear();
                // bye has no reply; wait until the server has dropped the session.
                while server.session_count() >= CLIENTS {
                    std::thread::sleep(std::time::Duration::from_millis(1));
                }
                clients[c] = Client::connect(binding).unwrap();
                sessions[c] = next_session;
                model.connect(next_session);
                next_session += 1;
            }
        }
        report.commands += 1;
    }
    report
}
