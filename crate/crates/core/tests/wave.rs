mod common;

use proptest::prelude::*;
use toroidal::hyperbolic::{
    build_first_order_system, ledger_drift, relative_l2_error, solve_wave, structural_identities,
    verify_energy_estimate, CauchyData, Integrator, SolverConfig, ZeroForcing,
};
use toroidal::{Error, GridFunction, GridSpec};

use common::*;

fn real_random(spec: GridSpec, seed: u64) -> GridFunction {
    let u = random_band_limited(spec, 1, &mut rng(seed));
    u.add(&u.conj()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn exp_midpoint_conserves_energy_without_forcing(seed in any::<u64>(), nu in 0.5f64..2.5) {
        let spec = GridSpec::new(1, 32, 15).unwrap();
        let sys = build_first_order_system(&frac_p(spec, nu)).unwrap();
        let data = CauchyData::new(real_random(spec, seed), real_random(spec, seed ^ 1), 0.0, nu, 0.5).unwrap();
        let mut cfg = SolverConfig::rk4(1e-2);
        cfg.integrator = Integrator::ExpMidpoint;
        let sol = solve_wave(&sys, &data, &ZeroForcing::new(spec, 1), &cfg).unwrap();
        let drift = ledger_drift(&sol.ledger).relative.unwrap();
        prop_assert!(drift < 1e-12, "drift {drift}");
    }

    #[test]
    fn integrators_agree_on_smooth_data(seed in any::<u64>()) {
        let spec = GridSpec::new(1, 32, 15).unwrap();
        let sys = build_first_order_system(&variable_p(spec, 1.0)).unwrap();
        let data = CauchyData::new(real_random(spec, seed), real_random(spec, !seed), 0.0, 1.0, 0.5).unwrap();
        let zero = ZeroForcing::new(spec, 1);
        let rk = solve_wave(&sys, &data, &zero, &SolverConfig::rk4(1e-3)).unwrap();
        let mut cfg = SolverConfig::rk4(1e-3);
        cfg.integrator = Integrator::ExpMidpoint;
        let em = solve_wave(&sys, &data, &zero, &cfg).unwrap();
        let err = relative_l2_error(rk.u.last().unwrap(), em.u.last().unwrap()).unwrap();
        prop_assert!(err < 1e-8, "rk4 vs exponential {err}");
    }

    #[test]
    fn energy_estimate_holds_for_random_data(seed in any::<u64>()) {
        let spec = GridSpec::new(1, 32, 15).unwrap();
        let sys = build_first_order_system(&bessel_p(spec, 1.0)).unwrap();
        let data = CauchyData::new(real_random(spec, seed), real_random(spec, seed.rotate_left(7)), 0.5, 1.0, 0.5).unwrap();
        let sol = solve_wave(&sys, &data, &ZeroForcing::new(spec, 1), &SolverConfig::rk4(1e-3).with_stride(10)).unwrap();
        let report = verify_energy_estimate(&sol.ledger, 0.0);
        let c = report.c_star.unwrap();
        prop_assert!(c <= 5.0 && verify_energy_estimate(&sol.ledger, c).holds);
    }
}

#[test]
fn structural_identities_hold_in_three_dimensions() {
    let spec = GridSpec::new(3, 4, 1).unwrap();
    for nu in [1.0, 2.0] {
        let sys = build_first_order_system(&frac_p(spec, nu)).unwrap();
        assert!(structural_identities(&sys).unwrap().passed);
    }
}

#[test]
fn rk4_without_substeps_refuses_unstable_steps() {
    let spec = GridSpec::new(1, 128, 63).unwrap();
    let sys = build_first_order_system(&frac_p(spec, 3.0)).unwrap();
    let data = CauchyData::new(real_random(spec, 5), GridFunction::zeros(spec, 1), 0.0, 3.0, 0.1).unwrap();
    let res = solve_wave(&sys, &data, &ZeroForcing::new(spec, 1), &SolverConfig::rk4(1e-3));
    assert!(matches!(res, Err(Error::Unstable { .. })));
}
