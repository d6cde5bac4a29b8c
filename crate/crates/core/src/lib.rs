pub mod chain;
pub mod config;
pub mod error;
pub mod fock;
pub mod io;
pub mod link;
pub mod noise;
pub mod optics;
pub mod swap;
pub mod verify;

pub use error::{Error, Result};
