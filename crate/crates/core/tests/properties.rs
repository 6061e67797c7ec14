mod common;

use num_complex::Complex64;
use proptest::prelude::*;
use toroidal::grid::{forward_transform, inverse_transform, l2_inner_product, sobolev_norm, SpectralCoeffs};
use toroidal::quantize::{apply_symbol, materialize, spectral_norm};
use toroidal::symbol::{class_membership_probe, forward_difference, x_derivative};
use toroidal::{GridSpec, MultiIndex, ScalarSymbol, SymbolClass};

use common::*;

fn specs() -> impl Strategy<Value = GridSpec> {
    prop_oneof![
        Just(GridSpec::new(1, 16, 7).unwrap()),
        Just(GridSpec::new(1, 12, 4).unwrap()),
        Just(GridSpec::new(2, 8, 3).unwrap()),
        Just(GridSpec::new(3, 4, 1).unwrap()),
    ]
}

fn multi_index(dim: usize, max: u32) -> impl Strategy<Value = MultiIndex> {
    proptest::collection::vec(0..=max, dim).prop_map(|c| MultiIndex::new(&c))
}

fn max_dist(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn inverse_then_forward_is_identity(spec in specs(), seed in any::<u64>()) {
        let mut r = rng(seed);
        let u = random_band_limited(spec, 2, &mut r);
        let c = forward_transform(&u);
        let back = inverse_transform(&c);
        prop_assert!(max_dist(back.values(), u.values()) < 1e-12);
        let again = forward_transform(&back);
        prop_assert!(max_dist(again.coeffs(), c.coeffs()) < 1e-12);
    }

    #[test]
    fn parseval_holds(spec in specs(), seed in any::<u64>()) {
        let mut r = rng(seed);
        let u = random_band_limited(spec, 1, &mut r);
        let c = forward_transform(&u);
        let spectral: f64 = c.coeffs().iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        prop_assert!((spectral - u.l2_norm()).abs() <= 1e-12 * spectral.max(1.0));
        prop_assert!((sobolev_norm(&u, 0.0) - u.l2_norm()).abs() <= 1e-12 * spectral.max(1.0));
        let ip = l2_inner_product(&u, &u).unwrap();
        prop_assert!((ip.re - u.l2_norm().powi(2)).abs() <= 1e-11 * ip.re.max(1.0));
    }

    #[test]
    fn sobolev_norm_is_monotone_in_s(spec in specs(), seed in any::<u64>(), s in -2.0f64..2.0) {
        let mut r = rng(seed);
        let u = random_band_limited(spec, 1, &mut r);
        prop_assert!(sobolev_norm(&u, s) <= sobolev_norm(&u, s + 0.5) * (1.0 + 1e-14));
    }

    #[test]
    fn differences_are_linear(spec in specs(), seed in any::<u64>(), k in 0u32..=2) {
        let mut r = rng(seed);
        let a = random_symbol(spec, 4, &mut r);
        let b = random_symbol(spec, 4, &mut r);
        let mut comps = vec![0; spec.dim()];
        comps[0] = k;
        let alpha = MultiIndex::unit(spec.dim(), spec.dim() - 1).add(&MultiIndex::new(&comps));
        let c = Complex64::new(0.7, -1.3);
        let lhs = forward_difference(&a.add(&b.scale(c)).unwrap(), &alpha).unwrap();
        let rhs = forward_difference(&a, &alpha).unwrap().add(&forward_difference(&b, &alpha).unwrap().scale(c)).unwrap();
        prop_assert!(lhs.max_diff(&rhs).unwrap() < 1e-12);
    }

    #[test]
    fn differences_compose(seed in any::<u64>(), (dim, alpha, gamma) in (1usize..=2).prop_flat_map(|d| (Just(d), multi_index(d, 2), multi_index(d, 2)))) {
        let spec = if dim == 1 { GridSpec::new(1, 16, 7).unwrap() } else { GridSpec::new(2, 8, 3).unwrap() };
        let mut r = rng(seed);
        let a = random_symbol(spec, 8, &mut r);
        let stepwise = forward_difference(&forward_difference(&a, &alpha).unwrap(), &gamma).unwrap();
        let direct = forward_difference(&a, &alpha.add(&gamma)).unwrap();
        prop_assert!(stepwise.max_diff(&direct).unwrap() < 1e-11);
    }

    #[test]
    fn x_derivatives_compose(seed in any::<u64>(), beta in multi_index(1, 2), gamma in multi_index(1, 2)) {
        let spec = GridSpec::new(1, 16, 7).unwrap();
        let mut r = rng(seed);
        let a = random_symbol(spec, 0, &mut r);
        let stepwise = x_derivative(&x_derivative(&a, &beta), &gamma);
        let direct = x_derivative(&a, &beta.add(&gamma));
        let scale = direct.max_abs().max(1.0);
        prop_assert!(stepwise.max_diff(&direct).unwrap() <= 1e-10 * scale);
    }

    #[test]
    fn quantization_is_linear(spec in specs(), seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = random_symbol(spec, 0, &mut r);
        let b = random_symbol(spec, 0, &mut r);
        let u = random_band_limited(spec, 1, &mut r);
        let v = random_band_limited(spec, 1, &mut r);
        let c = Complex64::new(-0.4, 2.0);
        let lhs = apply_symbol(&a.add(&b.scale(c)).unwrap(), &u.add(&v).unwrap()).unwrap();
        let rhs = apply_symbol(&a, &u).unwrap()
            .add(&apply_symbol(&a, &v).unwrap()).unwrap()
            .add(&apply_symbol(&b, &u).unwrap().scale(c)).unwrap()
            .add(&apply_symbol(&b, &v).unwrap().scale(c)).unwrap();
        prop_assert!(max_dist(lhs.values(), rhs.values()) < 1e-11);
    }

    #[test]
    fn dense_and_direct_quantization_agree(spec in specs(), seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = random_symbol(spec, 0, &mut r);
        let u = random_band_limited(spec, 1, &mut r);
        let direct = apply_symbol(&a, &u).unwrap();
        let dense = materialize(&a).apply(&u).unwrap();
        prop_assert!(max_dist(direct.values(), dense.values()) < 1e-11);
    }
}

#[test]
fn white_noise_symbol_fails_its_class() {
    let spec = GridSpec::new(1, 128, 63).unwrap();
    let mut r = rng(11);
    let noise = random_symbol(spec, 4, &mut r).with_class(SymbolClass::classical(0.0));
    let report = class_membership_probe(&noise, 2, 0).unwrap();
    assert!(!report.passed, "unstructured data should not look like an order-0 symbol");
}

#[test]
fn order_zero_symbols_stay_bounded_as_cutoff_grows() {
    let norms: Vec<f64> = [(32, 15), (64, 31), (128, 63)]
        .into_iter()
        .map(|(g, n)| {
            let spec = GridSpec::new(1, g, n).unwrap();
            let a = ScalarSymbol::from_fn(
                spec,
                SymbolClass::classical(0.0),
                0,
                toroidal::symbol::Provenance::Tabulated,
                |x, xi| {
                    let b = toroidal::japanese_bracket(&xi[..1]);
                    Complex64::new((2.0 * std::f64::consts::PI * x[0]).sin(), 0.0) * Complex64::from_polar(1.0, xi[0] as f64 / b)
                },
            )
            .unwrap();
            spectral_norm(materialize(&a).matrix())
        })
        .collect();
    for w in norms.windows(2) {
        assert!(w[1] / w[0] <= 1.1, "norms {norms:?}");
    }
}

#[test]
fn multiplier_keeps_data_band_limited() {
    let spec = GridSpec::new(1, 64, 31).unwrap();
    let p = frac_p(spec, 2.0);
    let mut r = rng(3);
    let u = random_band_limited(spec, 1, &mut r);
    let pu = p.apply(&u).unwrap();
    assert!(toroidal::spectral_tail(&pu, 31) <= 1e-10);
    let coeffs = vec![Complex64::new(1.0, 0.0); spec.lattice().len()];
    assert!(SpectralCoeffs::new(spec, 1, coeffs).is_ok());
}
