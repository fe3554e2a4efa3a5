pub mod cli;
pub mod config;
pub mod distances;
pub mod engine;
pub mod error;
pub mod exec;
pub mod harness;
pub mod io;
pub mod models;
pub mod numerics;
pub mod streams;
pub mod theory;

pub use error::{Error, Result};
