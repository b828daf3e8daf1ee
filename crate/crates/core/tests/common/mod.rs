#![allow(dead_code)]

pub mod gen;
pub mod geometry;
pub mod oracle;
pub mod reference;
