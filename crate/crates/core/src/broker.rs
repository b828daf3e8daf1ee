//! The shared-workspace state machine.
//!
//! Each group owns a table holding the latest value per variable name, each
//! write stamped with a per-group sequence number. Every client keeps a
//! cursor per joined group; `sync` hands out entries newer than the cursor
//! that the client did not author itself. Intermediate values written to the
//! same name between two syncs are coalesced.
//!
//! This type is transport-agnostic and fully synchronous. The network server
//! wraps it in a mutex so commands apply one at a time.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use thiserror::Error;

use crate::value::{NamedValues, Value};

pub type ClientId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub max_sessions: usize,
    pub max_groups: usize,
    pub max_vars_per_group: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_sessions: 4096,
            max_groups: 1024,
            max_vars_per_group: 65536,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BrokerError {
    #[error("unknown group(s): {}", .0.join(", "))]
    UnknownGroup(Vec<String>),
    #[error("session limit of {0} reached")]
    TooManySessions(usize),
    #[error("group limit of {0} reached")]
    TooManyGroups(usize),
    #[error("group {group:?} would exceed {limit} variables")]
    TooManyVariables { group: String, limit: usize },
    #[error("no session {0}")]
    UnknownSession(ClientId),
}

impl BrokerError {
    /// Short machine-readable code carried in `err` frames.
    pub fn code(&self) -> &'static str {
        match self {
            BrokerError::UnknownGroup(_) => "unknown_group",
            BrokerError::TooManySessions(_) => "too_many_sessions",
            BrokerError::TooManyGroups(_) => "too_many_groups",
            BrokerError::TooManyVariables { .. } => "too_many_variables",
            BrokerError::UnknownSession(_) => "unknown_session",
        }
    }
}

#[derive(Debug, Clone)]
struct Entry {
    value: Arc<Value>,
    seq: u64,
    author: ClientId,
}

#[derive(Debug)]
struct GroupTable {
    entries: HashMap<String, Entry>,
    /// seq -> name for live entries only; overwritten seqs are removed.
    by_seq: BTreeMap<u64, String>,
    next_seq: u64,
    members: BTreeSet<ClientId>,
}

impl Default for GroupTable {
    fn default() -> Self {
        GroupTable {
            entries: HashMap::new(),
            by_seq: BTreeMap::new(),
            next_seq: 1,
            members: BTreeSet::new(),
        }
    }
}

impl GroupTable {
    fn write(&mut self, name: &str, value: Arc<Value>, author: ClientId) {
        let seq = self.next_seq;
        self.next_seq += 1;
        let entry = Entry { value, seq, author };
        if let Some(old) = self.entries.insert(name.to_owned(), entry) {
            self.by_seq.remove(&old.seq);
        }
        self.by_seq.insert(seq, name.to_owned());
    }

    fn new_names<'a>(&self, names: impl Iterator<Item = &'a str>) -> usize {
        names.filter(|n| !self.entries.contains_key(*n)).count()
    }

    fn pending_for(&self, cursor: u64, client: ClientId) -> bool {
        self.by_seq
            .range(cursor + 1..)
            .any(|(_, name)| self.entries[name].author != client)
    }
}

#[derive(Debug, Default)]
struct Session {
    /// group name -> last seq delivered (or skipped) for this client.
    cursors: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupInfo {
    pub name: String,
    pub members: usize,
    pub writes: u64,
}

/// Variables handed out by one sync, names unique, in delivery order.
#[derive(Debug, Clone, Default)]
pub struct SyncBatch {
    pairs: Vec<(String, Arc<Value>)>,
}

impl SyncBatch {
    fn upsert(&mut self, name: &str, value: Arc<Value>) {
        match self.pairs.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = value,
            None => self.pairs.push((name.to_owned(), value)),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = (&str, &Value)> + Clone {
        self.pairs.iter().map(|(n, v)| (n.as_str(), v.as_ref()))
    }

    pub fn to_named_values(&self) -> NamedValues {
        let mut nv = NamedValues::new();
        for (n, v) in &self.pairs {
            nv.upsert(n, Value::clone(v));
        }
        nv
    }
}

#[derive(Debug, Default)]
pub struct Broker {
    limits: Limits,
    groups: BTreeMap<String, GroupTable>,
    sessions: HashMap<ClientId, Session>,
    next_client: ClientId,
}

impl Broker {
    pub fn new(limits: Limits) -> Self {
        Broker {
            limits,
            groups: BTreeMap::new(),
            sessions: HashMap::new(),
            next_client: 1,
        }
    }

    pub fn limits(&self) -> Limits {
        self.limits
    }

    pub fn open_session(&mut self) -> Result<ClientId, BrokerError> {
        if self.sessions.len() >= self.limits.max_sessions {
            return Err(BrokerError::TooManySessions(self.limits.max_sessions));
        }
        let id = self.next_client;
        self.next_client += 1;
        self.sessions.insert(id, Session::default());
        Ok(id)
    }

    /// Drops the session and its memberships, deleting groups left empty.
    pub fn close_session(&mut self, id: ClientId) {
        if let Some(session) = self.sessions.remove(&id) {
            for group in session.cursors.keys() {
                self.drop_member(group, id);
            }
        }
    }

    pub fn session_count(&self) -> usize {
        self.sessions.len()
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn memberships(&self, id: ClientId) -> Vec<String> {
        self.sessions
            .get(&id)
            .map(|s| s.cursors.keys().cloned().collect())
            .unwrap_or_default()
    }

    fn session_mut(&mut self, id: ClientId) -> Result<&mut Session, BrokerError> {
        self.sessions.get_mut(&id).ok_or(BrokerError::UnknownSession(id))
    }

    fn drop_member(&mut self, group: &str, id: ClientId) {
        if let Some(table) = self.groups.get_mut(group) {
            table.members.remove(&id);
            if table.members.is_empty() {
                self.groups.remove(group);
            }
        }
    }

    /// Joins each named group, creating missing ones with an empty table.
    /// Newly joined groups start with cursor 0, so the first sync returns the
    /// current table contents.
    pub fn join<S: AsRef<str>>(&mut self, id: ClientId, groups: &[S]) -> Result<(), BrokerError> {
        if !self.sessions.contains_key(&id) {
            return Err(BrokerError::UnknownSession(id));
        }
        let fresh: BTreeSet<&str> = groups
            .iter()
            .map(AsRef::as_ref)
            .filter(|g| !self.groups.contains_key(*g))
            .collect();
        if self.groups.len() + fresh.len() > self.limits.max_groups {
            return Err(BrokerError::TooManyGroups(self.limits.max_groups));
        }
        for g in groups {
            let g = g.as_ref();
            self.groups
                .entry(g.to_owned())
                .or_default()
                .members
                .insert(id);
            self.session_mut(id)?.cursors.entry(g.to_owned()).or_insert(0);
        }
        Ok(())
    }

    pub fn leave<S: AsRef<str>>(&mut self, id: ClientId, groups: &[S]) -> Result<(), BrokerError> {
        let session = self.session_mut(id)?;
        let left: Vec<String> = groups
            .iter()
            .filter_map(|g| session.cursors.remove_entry(g.as_ref()).map(|(k, _)| k))
            .collect();
        for g in left {
            self.drop_member(&g, id);
        }
        Ok(())
    }

    fn check_capacity(&self, groups: &[&str], payload: &NamedValues) -> Result<(), BrokerError> {
        let limit = self.limits.max_vars_per_group;
        for g in groups {
            let table = &self.groups[*g];
            if table.entries.len() + table.new_names(payload.names()) > limit {
                return Err(BrokerError::TooManyVariables {
                    group: (*g).to_owned(),
                    limit,
                });
            }
        }
        Ok(())
    }

    fn write_all(&mut self, id: ClientId, groups: &[&str], payload: NamedValues) -> Vec<ClientId> {
        let values: Vec<(String, Arc<Value>)> = payload.into_iter().map(|(n, v)| (n, Arc::new(v))).collect();
        let mut woken = BTreeSet::new();
        for g in groups {
            let table = self.groups.get_mut(*g).expect("validated group");
            for (name, value) in &values {
                table.write(name, Arc::clone(value), id);
            }
            if !values.is_empty() {
                woken.extend(table.members.iter().copied().filter(|m| *m != id));
            }
        }
        woken.into_iter().collect()
    }

    /// Writes every pair into each named group's table. All-or-nothing: if
    /// any group is missing nothing changes. The sender need not be a member.
    /// Returns the clients that may now have pending data.
    pub fn send<S: AsRef<str>>(
        &mut self,
        id: ClientId,
        groups: &[S],
        payload: NamedValues,
    ) -> Result<Vec<ClientId>, BrokerError> {
        if !self.sessions.contains_key(&id) {
            return Err(BrokerError::UnknownSession(id));
        }
        let mut targets: Vec<&str> = Vec::with_capacity(groups.len());
        for g in groups.iter().map(AsRef::as_ref) {
            if !targets.contains(&g) {
                targets.push(g);
            }
        }
        let missing: Vec<String> = targets
            .iter()
            .filter(|g| !self.groups.contains_key(**g))
            .map(|g| (*g).to_owned())
            .collect();
        if !missing.is_empty() {
            return Err(BrokerError::UnknownGroup(missing));
        }
        self.check_capacity(&targets, &payload)?;
        Ok(self.write_all(id, &targets, payload))
    }

    /// Writes every pair into every group that currently exists.
    pub fn broadcast(&mut self, id: ClientId, payload: NamedValues) -> Result<Vec<ClientId>, BrokerError> {
        if !self.sessions.contains_key(&id) {
            return Err(BrokerError::UnknownSession(id));
        }
        let names: Vec<String> = self.groups.keys().cloned().collect();
        let targets: Vec<&str> = names.iter().map(String::as_str).collect();
        self.check_capacity(&targets, &payload)?;
        Ok(self.write_all(id, &targets, payload))
    }

    /// Collects entries newer than the client's cursors, walking groups by
    /// name and then by sequence. Self-authored entries are skipped but still
    /// advance the cursor. With `max_n`, at most that many entries are taken
    /// and nothing beyond the last taken entry is examined. When a name
    /// qualifies from several groups the later one overwrites the earlier in
    /// place.
    pub fn sync(&mut self, id: ClientId, max_n: Option<usize>) -> Result<SyncBatch, BrokerError> {
        let session = self.sessions.get_mut(&id).ok_or(BrokerError::UnknownSession(id))?;
        let mut batch = SyncBatch::default();
        let mut taken = 0usize;
        'groups: for (group, cursor) in session.cursors.iter_mut() {
            let table = &self.groups[group];
            for (&seq, name) in table.by_seq.range(*cursor + 1..) {
                if max_n.is_some_and(|n| taken >= n) {
                    break 'groups;
                }
                *cursor = seq;
                let entry = &table.entries[name];
                if entry.author != id {
                    batch.upsert(name, Arc::clone(&entry.value));
                    taken += 1;
                }
            }
        }
        Ok(batch)
    }

    /// True when a sync would return at least one entry.
    pub fn has_pending(&self, id: ClientId) -> bool {
        self.sessions.get(&id).is_some_and(|s| {
            s.cursors
                .iter()
                .any(|(g, &c)| self.groups[g].pending_for(c, id))
        })
    }

    pub fn list(&self) -> Vec<GroupInfo> {
        self.groups
            .iter()
            .map(|(name, t)| GroupInfo {
                name: name.clone(),
                members: t.members.len(),
                writes: t.next_seq - 1,
            })
            .collect()
    }

    #[cfg(test)]
    fn check_invariants(&self) {
        for (id, s) in &self.sessions {
            for (g, &c) in &s.cursors {
                let t = self.groups.get(g).expect("member of missing group");
                assert!(t.members.contains(id));
                assert!(c < t.next_seq);
            }
        }
        for (g, t) in &self.groups {
            assert!(!t.members.is_empty(), "empty group {g} retained");
            assert_eq!(t.entries.len(), t.by_seq.len());
            for (name, e) in &t.entries {
                assert_eq!(&t.by_seq[&e.seq], name);
            }
        }
    }
}
