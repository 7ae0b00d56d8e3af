pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod fit;
pub mod gibbs;
pub mod grid;
pub mod linalg;
pub mod morse;
pub mod noise;
pub mod objective;
pub mod pde;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
