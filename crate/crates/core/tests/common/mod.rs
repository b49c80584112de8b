#![allow(dead_code)]

pub mod bigc;
pub mod dense;
