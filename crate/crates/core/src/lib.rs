//! Discontinuous Galerkin solver for the 2D biharmonic problem with a
//! patch-reconstructed approximation space: one unknown per polygonal cell,
//! lifted to a piecewise degree-`m` polynomial by local least squares, and
//! a symmetric interior-penalty formulation.

pub mod assembly;
pub mod mesh;
pub mod patch;
pub mod poly;
pub mod problems;
pub mod quadrature;
pub mod recon;
pub mod solve;
pub mod sparse;
pub mod study;
