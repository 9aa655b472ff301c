#![allow(clippy::needless_range_loop)]

pub mod codec;
pub mod construction;
pub mod error;
pub mod gf;
pub mod info;
pub mod oracle;
mod par;
pub mod region;
pub mod rng;
pub mod source;
pub mod timeshare;

pub use error::{Error, Result};
