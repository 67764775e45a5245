pub mod basis;
pub mod cli;
pub mod dgp;
pub mod error;
pub mod estimators;
pub mod fields;
pub mod mc;
pub mod oracle;
pub mod pls;
pub mod report;
pub mod seed;

pub use error::{Error, Result};
