#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod backend;
pub mod baseline;
pub mod dataset;
pub mod harness;
pub mod ir;
pub mod pipeline;
pub mod plan;
pub mod schema;
pub mod sim;
pub mod timestamp;
pub mod validator;
