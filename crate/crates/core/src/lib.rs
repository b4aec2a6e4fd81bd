//! Mass-preserving random-feature decoders for the manifold pre-image
//! problem, with Diffusion-Maps encoding, baseline decoders, conservative PDE
//! dataset generators and a benchmark harness.

pub mod bench;
pub mod cli;
pub mod decoders;
pub mod dmap;
pub mod error;
pub mod io;
pub mod linalg;
pub mod pdesolvers;
pub mod randfeat;
pub mod rng;
pub mod synthdata;

pub use error::{Error, Result};
