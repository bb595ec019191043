#![allow(dead_code)]

pub mod degeneracy;
pub mod fixtures;
pub mod gradcheck;
pub mod replay;
pub mod threat;
