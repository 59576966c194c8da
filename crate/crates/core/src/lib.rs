//! Thermal model of a continuous casting strand and identification of the
//! secondary-cooling heat-transfer coefficient.

pub mod chtc;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod ident_lsq;
pub mod ident_sa;
pub mod material;
pub mod solver;

pub use error::{CoreError, ErrorKind, Result};
