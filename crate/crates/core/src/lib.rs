//! Geodesic Markov automata for finitely generated groups, the spectral
//! analysis of their transition matrices, and Cesaro averages of spherical
//! averages of a group action on a matrix algebra with a faithful state.

pub mod algebra;
pub mod automaton;
pub mod averages;
pub mod cli;
pub mod covering;
pub mod error;
pub mod spectral;
pub mod words;

pub use error::{Error, Result};
