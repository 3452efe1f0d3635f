#![cfg_attr(not(test), no_std)]
extern crate alloc;

pub mod evolution;
pub mod floatfmt;
pub mod linalg;
pub mod model;
pub mod quadratic;
pub mod tsp;
