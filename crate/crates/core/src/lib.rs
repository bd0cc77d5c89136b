pub mod coarea;
pub mod error;
pub mod gpc;
pub mod nullfield;
pub mod oracle;
pub mod par;
pub mod pipeline;
pub mod quadrature;
pub mod shape;
pub mod specfun;

pub use error::{Error, Result};
