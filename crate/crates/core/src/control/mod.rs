//! Worked control families: evolution systems, a 1-D elliptic problem,
//! a binary-tree stochastic model and a 1-D wave observation problem.

pub mod elliptic;
pub mod evolution;
pub mod tree;
pub mod wave;
