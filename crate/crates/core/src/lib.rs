//! Data-driven state-feedback synthesis for linear parameter-varying systems
//! from a single noisy trajectory.
//!
//! The pipeline is: simulate or load data ([`lpv`], [`data`]), build the set of
//! systems consistent with it ([`consistency`]), solve a vertex LMI program
//! ([`synthesis`]) and certify the result against sampled compatible systems
//! ([`verify`]). [`experiment`] ties the steps together for the two-state
//! example.

pub mod consistency;
pub mod data;
pub mod error;
pub mod experiment;
pub mod io;
pub mod linalg;
pub mod lpv;
pub mod lyapunov;
pub mod seeds;
pub mod synthesis;
pub mod verify;

pub use error::{Error, Result};
