pub mod concurrence;
pub mod correlators;
pub mod ed;
pub mod error;
pub mod gmn;
pub mod io;
pub mod linalg;
pub mod model;
pub mod quadrature;
pub mod rdm;
pub mod scaling;
pub mod sdp;
pub mod separability;
pub mod wick;

pub use error::{Error, Result};
pub use nalgebra;
