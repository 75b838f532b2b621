//! H∞ PID parallel-distributed-compensation synthesis for Takagi–Sugeno fuzzy
//! plants, posed as rank-constrained semidefinite programs and solved by
//! sequences of convex surrogates.

extern crate openblas_src;

pub mod algorithms;
pub mod fuzzy;
pub mod linalg;
pub mod refine;
pub mod sdp;
pub mod simulation;
pub mod synthesis;
