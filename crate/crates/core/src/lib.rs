//! Numerical bifurcation analysis of a Lotka-Volterra predator-prey model
//! with constant prey harvesting/stocking, and of the minimal models that
//! unfold its saddle-node–transcritical interactions.

pub mod algebra;
pub mod continuation;
pub mod diagram;
pub mod equilibria;
pub mod error;
pub mod global;
pub mod integrate;
pub mod models;
pub mod normalform;
pub mod portrait;
pub mod verify;
pub mod walk;

pub use error::{Error, Result};
