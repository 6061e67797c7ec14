#![allow(dead_code)]

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use toroidal::grid::{inverse_transform, SpectralCoeffs};
use toroidal::quantize::{materialize, symmetrize_positive};
use toroidal::symbol::builtin_symbol;
use toroidal::{BuiltinSymbol, DenseOperator, FourierSeries, GridFunction, GridSpec, ScalarSymbol, SymbolClass};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_complex(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

pub fn random_band_limited(spec: GridSpec, channels: usize, rng: &mut ChaCha8Rng) -> GridFunction {
    let n = channels * spec.lattice().len();
    let coeffs = (0..n).map(|_| random_complex(rng)).collect();
    inverse_transform(&SpectralCoeffs::new(spec, channels, coeffs).unwrap())
}

pub fn random_symbol(spec: GridSpec, margin: usize, rng: &mut ChaCha8Rng) -> ScalarSymbol {
    let len = toroidal::Lattice::new(spec.dim(), spec.freq_cutoff() + margin).len() * spec.num_points();
    let values = (0..len).map(|_| random_complex(rng)).collect();
    ScalarSymbol::tabulated(spec, SymbolClass::classical(0.0), margin, values).unwrap()
}

/// `(-Delta)^{nu/2}` as a positive operator.
pub fn frac_p(spec: GridSpec, nu: f64) -> DenseOperator {
    let a = builtin_symbol(spec, &BuiltinSymbol::FracLaplacian { nu }, 0).unwrap();
    symmetrize_positive(&materialize(&a), 0.0).unwrap()
}

/// `Lambda^s` as a positive operator.
pub fn bessel_p(spec: GridSpec, s: f64) -> DenseOperator {
    let a = builtin_symbol(spec, &BuiltinSymbol::Bessel { s }, 0).unwrap();
    symmetrize_positive(&materialize(&a), 0.0).unwrap()
}

/// Coefficient used for variable-coefficient samples.
pub fn coefficient(dim: usize) -> FourierSeries {
    let q = FourierSeries::sine(0.5, 0, 1);
    if dim == 1 {
        q
    } else {
        q.plus(FourierSeries::cosine(0.3, 1, 1))
    }
}

/// Symmetrized `(1 + q(x)) (2 pi)^nu |xi|^nu` shifted by `2 I` (`4 I` in 2D,
/// where the symmetrized part dips to about -2.2).
pub fn variable_p(spec: GridSpec, nu: f64) -> DenseOperator {
    let a = builtin_symbol(
        spec,
        &BuiltinSymbol::VariableFracLaplacian {
            nu,
            coefficient: coefficient(spec.dim()),
        },
        0,
    )
    .unwrap();
    let shift = if spec.dim() == 1 { 2.0 } else { 4.0 };
    symmetrize_positive(&materialize(&a), shift).unwrap()
}

pub fn real_fn(spec: GridSpec, f: impl Fn(&[f64]) -> f64) -> GridFunction {
    GridFunction::from_fn(spec, |x| Complex64::new(f(x), 0.0)).unwrap()
}
