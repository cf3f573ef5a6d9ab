#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod bootstrap;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod models;
pub mod rectangle;
pub mod rng;
