//! Cauchy-Fantappie kernel calculus, model CR patch geometry, tube-limit
//! integral operators, Cech globalization over abstract section spaces,
//! CR deformation algebra, and the embedding iteration with its
//! inequality ledger.

// index loops mirror the matrix/determinant formulas throughout
#![allow(clippy::needless_range_loop)]
#![allow(clippy::too_many_arguments)]
#![allow(clippy::manual_is_multiple_of)]
#![allow(clippy::excessive_precision)]

pub mod form;
pub mod barrier;
pub mod cech;
pub mod deform;
pub mod geometry;
pub mod kernels;
pub mod nash_moser;
pub mod num;
