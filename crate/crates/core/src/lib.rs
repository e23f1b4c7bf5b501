//! Discretization of harmonic functions and tensors on covers of compact surfaces.

pub mod covering;
pub mod geometry;
pub mod bundle;
pub mod rng;
pub mod stats;
pub mod density;
pub mod lyons_sullivan;
pub mod groupoid;
pub mod laplacian;
pub mod holonomy;
pub mod harness;
