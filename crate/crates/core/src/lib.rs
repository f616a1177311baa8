pub mod error;
pub mod format;
pub mod frontier;
pub mod games;
pub mod matcore;
pub mod nonlocality;
pub mod optimize;
pub mod seeding;
pub mod states;
pub mod verify;

pub use error::{Error, Result};
