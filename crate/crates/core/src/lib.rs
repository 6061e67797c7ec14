//! Discrete toroidal pseudo-differential operators and fractional wave solvers.
//!
//! Functions live on the uniform grid of the torus `T^n` with `G` points per
//! axis, and frequencies on the cube `max_i |xi_i| <= N`. Symbols `a(x, xi)`
//! are tabulated on both, operators act by toroidal quantization, and the
//! hyperbolic module integrates fractional wave equations `u_tt + P u = w`.

pub mod calculus;
pub mod error;
pub mod grid;
pub mod hyperbolic;
pub mod io;
pub mod quantize;
pub mod shells;
pub mod symbol;

pub use error::{Error, Result};
pub use grid::{
    forward_transform, freq, inverse_transform, japanese_bracket, l2_inner_product, make_exponential,
    sobolev_norm, sobolev_norm_sq, spectral_tail, Freq, GridFunction, GridSpec, Lattice,
    SpectralCoeffs,
};
pub use quantize::DenseOperator;
pub use symbol::{BuiltinSymbol, FourierSeries, MatrixSymbol, MultiIndex, ScalarSymbol, SymbolClass};
