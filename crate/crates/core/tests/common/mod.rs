#![allow(dead_code)]

pub mod criteria;
pub mod fixtures;
pub mod oracles;
