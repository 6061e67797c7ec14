use std::f64::consts::PI;
use std::fmt::Write as _;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use toroidal::calculus::{adjoint_expansion, check_expansion, composition_expansion, write_expansion_csv};
use toroidal::grid::inverse_transform;
use toroidal::hyperbolic::{
    build_first_order_system, check_zero_order_condition, ledger_drift, manufactured_cosine,
    negative_control_generator, relative_l2_error, solve_wave, structural_identities,
    verify_energy_estimate, zero_order_report, CauchyData, EnergyLedger, Forcing, SeparableForcing,
    SolverConfig, ZeroForcing,
};
use toroidal::quantize::{materialize, symmetrize_positive};
use toroidal::shells::ShellSample;
use toroidal::symbol::{
    builtin_symbol, class_membership_probe, strong_ellipticity_check, symbol_shell_suprema, Provenance,
};
use toroidal::{
    freq, make_exponential, japanese_bracket, BuiltinSymbol, DenseOperator, GridFunction, GridSpec,
    ScalarSymbol, SpectralCoeffs, SymbolClass,
};

use crate::config::{Expansion, ExperimentConfig, ForcingKind, OperatorKind, Scenario};
use crate::report::{Plot, RunReport, Series, Verdict};

type Outcome = toroidal::Result<Body>;

/// Scenario output before the common fields are attached.
#[derive(Default)]
struct Body {
    metrics: Vec<(String, f64)>,
    verdicts: Vec<Verdict>,
    tables: Vec<(String, String)>,
    plot: Option<Plot>,
}

impl Body {
    fn metric(&mut self, name: &str, v: f64) {
        self.metrics.push((name.into(), v));
    }
}

/// Names, descriptions, exercised results and CSV columns, as printed by `list`.
pub const CATALOG: [(Scenario, &str, &str, &[&str]); 6] = [
    (
        Scenario::ExactMode,
        "single Fourier mode under a multiplier P against the closed-form cosine solution",
        "Corollary, fractional wave",
        &["errors: t,rel_error", "ledger: t,u_norm,ut_norm,forcing_integral,energy,bound_rhs"],
    ),
    (
        Scenario::Manufactured,
        "manufactured solution cos(t) sin(2 pi x0) at dt and dt/2",
        "main well-posedness theorem, time convergence",
        &["errors: t,rel_error_dt,rel_error_half_dt"],
    ),
    (
        Scenario::EnergyStudy,
        "random data (seeded), optional forcing; fits C* and checks the energy inequality",
        "energy estimate, Gronwall bound",
        &["ledger: t,u_norm,ut_norm,forcing_integral,energy,bound_rhs"],
    ),
    (
        Scenario::SymbolOrder,
        "dyadic-shell regression of differences and x-derivatives against a symbol class",
        "toroidal symbol inequalities",
        &["probe: alpha,beta,shells_used,slope,class_exponent,pass", "shells: alpha,shell,bracket,sup"],
    ),
    (
        Scenario::CalculusCheck,
        "remainder orders of truncated adjoint or composition expansions",
        "asymptotic expansion",
        &["remainder: N,outer,shell,sup,fitted_slope,claimed_order,pass"],
    ),
    (
        Scenario::SymmetrizerCheck,
        "shell norms of K + K* for the first-order reduction (control=true drops A^-1)",
        "K + K* of order zero",
        &["shells: shell,inner,outer,bracket,norm"],
    ),
];

pub fn run(cfg: &ExperimentConfig) -> toroidal::Result<RunReport> {
    let start = Instant::now();
    let body = match cfg.scenario {
        Scenario::ExactMode => exact_mode(cfg),
        Scenario::Manufactured => manufactured(cfg),
        Scenario::EnergyStudy => energy_study(cfg),
        Scenario::SymbolOrder => symbol_order(cfg),
        Scenario::CalculusCheck => calculus_check(cfg),
        Scenario::SymmetrizerCheck => symmetrizer_check(cfg),
    }?;
    Ok(RunReport {
        name: cfg.name.clone(),
        scenario: cfg.scenario.id().into(),
        config: cfg.echo.clone(),
        metrics: body.metrics,
        verdicts: body.verdicts,
        tables: body.tables,
        plot: body.plot,
        wall_clock: start.elapsed().as_secs_f64(),
    })
}

fn builtin(cfg: &ExperimentConfig, kind: OperatorKind) -> BuiltinSymbol {
    match kind {
        OperatorKind::FracLaplacian => BuiltinSymbol::FracLaplacian { nu: cfg.nu },
        OperatorKind::Bessel => BuiltinSymbol::Bessel { s: cfg.nu },
        OperatorKind::Oscillating => BuiltinSymbol::Oscillating {
            nu: cfg.nu,
            rho: cfg.rho,
        },
        OperatorKind::Variable => BuiltinSymbol::VariableFracLaplacian {
            nu: cfg.nu,
            coefficient: cfg.coefficient.clone(),
        },
    }
}

fn positive_operator(cfg: &ExperimentConfig) -> toroidal::Result<DenseOperator> {
    let a = builtin_symbol(cfg.grid, &builtin(cfg, cfg.operator), 0)?;
    symmetrize_positive(&materialize(&a), cfg.shift)
}

fn solver(cfg: &ExperimentConfig, dt: f64, stride: usize) -> SolverConfig {
    let mut s = SolverConfig::rk4(dt).with_stride(stride);
    s.integrator = cfg.integrator;
    s.substep = cfg.substep;
    s
}

fn ledger_csv(ledger: &EnergyLedger) -> toroidal::Result<String> {
    let mut buf = Vec::new();
    ledger.write_csv(&mut buf)?;
    Ok(String::from_utf8(buf).expect("ledger CSV is ASCII"))
}

fn fit_ledger(ledger: &mut EnergyLedger, body: &mut Body) {
    let report = verify_energy_estimate(ledger, 0.0);
    ledger.fitted_c = report.c_star;
    let c = report.c_star.unwrap_or(f64::INFINITY);
    body.metric("c_star", c);
    body.verdicts.push(Verdict::at_most("c_star", c, 5.0));
    let holds = report.c_star.is_some_and(|c| verify_energy_estimate(ledger, c).holds);
    body.verdicts.push(Verdict::flag("estimate_holds_at_c_star", holds));
}

fn exact_mode(cfg: &ExperimentConfig) -> Outcome {
    let spec = cfg.grid;
    let p = positive_operator(cfg)?;
    let sys = build_first_order_system(&p)?;
    let xi0 = freq(&cfg.xi0);
    let f0 = make_exponential(&spec, &xi0, 1, 0)?;
    let symbol = builtin_symbol(spec, &builtin(cfg, cfg.operator), 0)?;
    let lambda = (symbol.value(0, &xi0).expect("xi0 validated").re + cfg.shift).sqrt();
    let data = CauchyData::new(f0.clone(), GridFunction::zeros(spec, 1), cfg.s, cfg.nu, cfg.t_final)?;
    let mut sol = solve_wave(&sys, &data, &ZeroForcing::new(spec, 1), &solver(cfg, cfg.dt, cfg.stride))?;

    // Errors are measured against ||f0||: the exact solution itself vanishes
    // whenever cos(lambda t) does.
    let mut table = String::from("t,rel_error\n");
    let mut errors = Vec::new();
    let scale = f0.l2_norm();
    for (t, u) in sol.times.iter().zip(&sol.u) {
        let exact = f0.scale(Complex64::new((lambda * t).cos(), 0.0));
        let e = u.sub(&exact)?.l2_norm() / scale;
        let _ = writeln!(table, "{t:.10e},{e:.16e}");
        errors.push((*t, e));
    }
    let max_err = errors.iter().map(|e| e.1).fold(0.0, f64::max);
    let mut body = Body::default();
    body.metric("lambda", lambda);
    body.metric("final_rel_error", errors.last().map_or(0.0, |e| e.1));
    body.metric("max_rel_error", max_err);
    body.metric("substeps", sol.substeps as f64);
    body.metric("dt_used", sol.dt);
    body.verdicts.push(Verdict::at_most("max_rel_error", max_err, 1e-6));
    fit_ledger(&mut sol.ledger, &mut body);
    body.tables.push(("errors".into(), table));
    body.tables.push(("ledger".into(), ledger_csv(&sol.ledger)?));
    body.plot = Some(Plot {
        title: format!("{}: relative L2 error", cfg.name),
        x_label: "t".into(),
        y_label: "relative error".into(),
        log_y: true,
        series: vec![Series {
            label: "rel_error".into(),
            points: errors,
        }],
    });
    Ok(body)
}

fn manufactured(cfg: &ExperimentConfig) -> Outcome {
    let spec = cfg.grid;
    let p = positive_operator(cfg)?;
    let sys = build_first_order_system(&p)?;
    let phi = GridFunction::from_fn(spec, |x| Complex64::new((2.0 * PI * x[0]).sin(), 0.0))?;
    let w = manufactured_cosine(&sys.p, &phi)?;
    let data = CauchyData::new(phi.clone(), GridFunction::zeros(spec, 1), cfg.s, cfg.nu, cfg.t_final)?;
    let errors = |dt: f64, stride: usize| -> toroidal::Result<Vec<(f64, f64)>> {
        let sol = solve_wave(&sys, &data, &w, &solver(cfg, dt, stride))?;
        sol.times
            .iter()
            .zip(&sol.u)
            .map(|(&t, u)| Ok((t, relative_l2_error(u, &phi.scale(Complex64::new(t.cos(), 0.0)))?)))
            .collect()
    };
    let coarse = errors(cfg.dt, cfg.stride)?;
    let fine = errors(0.5 * cfg.dt, 2 * cfg.stride)?;
    let sup = |e: &[(f64, f64)]| e.iter().map(|v| v.1).fold(0.0, f64::max);
    let (sup_coarse, sup_fine) = (sup(&coarse), sup(&fine));
    let (final_coarse, final_fine) = (coarse.last().unwrap().1, fine.last().unwrap().1);
    let ratio = final_coarse / final_fine;

    let mut table = String::from("t,rel_error_dt,rel_error_half_dt\n");
    for (a, b) in coarse.iter().zip(&fine) {
        let _ = writeln!(table, "{:.10e},{:.16e},{:.16e}", a.0, a.1, b.1);
    }
    let mut body = Body::default();
    body.metric("sup_rel_error_dt", sup_coarse);
    body.metric("sup_rel_error_half_dt", sup_fine);
    body.metric("final_rel_error_dt", final_coarse);
    body.metric("final_rel_error_half_dt", final_fine);
    body.verdicts.push(Verdict::at_most("sup_rel_error_dt", sup_coarse, 1e-5));
    body.verdicts.push(Verdict::within("refinement_ratio", ratio, 12.0, 20.0));
    body.tables.push(("errors".into(), table));
    body.plot = Some(Plot {
        title: format!("{}: manufactured-solution error", cfg.name),
        x_label: "t".into(),
        y_label: "relative error".into(),
        log_y: true,
        series: vec![
            Series {
                label: "dt".into(),
                points: coarse,
            },
            Series {
                label: "dt/2".into(),
                points: fine,
            },
        ],
    });
    Ok(body)
}

/// Real band-limited sample with coefficients decaying like `<xi>^-2`.
fn random_smooth(spec: GridSpec, rng: &mut ChaCha8Rng) -> toroidal::Result<GridFunction> {
    let coeffs = spec
        .lattice()
        .points()
        .map(|xi| {
            let decay = japanese_bracket(&xi[..spec.dim()]).powi(-2);
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * decay
        })
        .collect();
    let u = inverse_transform(&SpectralCoeffs::new(spec, 1, coeffs)?);
    u.add(&u.conj())
}

fn energy_study(cfg: &ExperimentConfig) -> Outcome {
    let spec = cfg.grid;
    let p = positive_operator(cfg)?;
    let sys = build_first_order_system(&p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let f0 = random_smooth(spec, &mut rng)?;
    let f1 = random_smooth(spec, &mut rng)?;
    let data = CauchyData::new(f0, f1, cfg.s, cfg.nu, cfg.t_final)?;
    let w: Box<dyn Forcing> = match cfg.forcing {
        ForcingKind::None => Box::new(ZeroForcing::new(spec, 1)),
        ForcingKind::Separable => Box::new(SeparableForcing::new(random_smooth(spec, &mut rng)?, |t| (3.0 * t).cos())),
    };
    let mut sol = solve_wave(&sys, &data, w.as_ref(), &solver(cfg, cfg.dt, cfg.stride))?;
    let mut body = Body::default();
    fit_ledger(&mut sol.ledger, &mut body);
    if let Some(c) = sol.ledger.fitted_c {
        let mut tampered = sol.ledger.clone();
        if let Some(last) = tampered.u_norms.last_mut() {
            *last *= 2.0;
        }
        body.verdicts.push(Verdict::flag(
            "tampered_ledger_rejected",
            !verify_energy_estimate(&tampered, c).holds,
        ));
    }
    let drift = ledger_drift(&sol.ledger);
    let drift_value = drift.relative.unwrap_or(drift.max_abs_drift);
    body.metric("energy_drift", drift_value);
    body.metric("substeps", sol.substeps as f64);
    if cfg.forcing == ForcingKind::None {
        body.verdicts.push(Verdict::at_most("energy_drift", drift_value, 1e-7));
    }
    let ledger = &sol.ledger;
    let c = ledger.fitted_c.unwrap_or(f64::NAN);
    body.plot = Some(Plot {
        title: format!("{}: energy inequality", cfg.name),
        x_label: "t".into(),
        y_label: "squared norm".into(),
        log_y: true,
        series: vec![
            Series {
                label: "||u||^2".into(),
                points: ledger.times.iter().zip(&ledger.u_norms).map(|(&t, &u)| (t, u * u)).collect(),
            },
            Series {
                label: "bound at C*".into(),
                points: (0..ledger.times.len()).map(|i| (ledger.times[i], ledger.bound(i, c))).collect(),
            },
        ],
    });
    body.tables.push(("ledger".into(), ledger_csv(ledger)?));
    Ok(body)
}

fn shells_series(label: String, samples: &[ShellSample]) -> Series {
    Series {
        label,
        points: samples.iter().map(|s| (s.bracket.ln(), s.sup)).collect(),
    }
}

fn symbol_order(cfg: &ExperimentConfig) -> Outcome {
    let a = builtin_symbol(cfg.grid, &builtin(cfg, cfg.operator), cfg.max_alpha)?;
    let class = SymbolClass::new(a.class().order, cfg.class_rho, 0.0)?;
    let a = a.with_class(class);
    let report = class_membership_probe(&a, cfg.max_alpha, cfg.max_beta)?;
    let mut body = Body::default();
    let mut table = String::from("alpha,beta,shells_used,slope,class_exponent,pass\n");
    for e in &report.entries {
        let _ = writeln!(
            table,
            "{},{},{},{:.10e},{:.10e},{}",
            e.alpha.order(),
            e.beta.order(),
            e.fit.shells_used,
            e.fit.slope,
            e.class_exponent,
            e.passed
        );
        if e.beta.order() == 0 && e.alpha.components().iter().skip(1).all(|&c| c == 0) {
            body.metric(&format!("slope_alpha{}", e.alpha.order()), e.fit.slope);
        }
    }
    body.verdicts.push(Verdict::flag("class_membership", report.passed));
    if cfg.operator != OperatorKind::Oscillating {
        let ell = strong_ellipticity_check(&a, 1)?;
        body.metric("ellipticity_c0", ell.c0);
        body.verdicts.push(Verdict::flag("strongly_elliptic", ell.elliptic));
    }

    let mut shells = String::from("alpha,shell,bracket,sup\n");
    let mut series = Vec::new();
    for k in 0..=cfg.max_alpha {
        let mut comps = vec![0u32; cfg.grid.dim()];
        comps[0] = k as u32;
        let d = toroidal::symbol::forward_difference(&a, &toroidal::MultiIndex::new(&comps))?;
        let samples = symbol_shell_suprema(&d);
        for s in &samples {
            let _ = writeln!(shells, "{k},{},{:.10e},{:.16e}", s.shell.k, s.bracket, s.sup);
        }
        series.push(shells_series(format!("alpha={k}"), &samples));
    }
    body.tables.push(("probe".into(), table));
    body.tables.push(("shells".into(), shells));
    body.plot = Some(Plot {
        title: format!("{}: shell suprema of differences", cfg.name),
        x_label: "ln <xi>".into(),
        y_label: "sup |Delta^alpha a|".into(),
        log_y: true,
        series,
    });
    Ok(body)
}

fn corpus_symbol(
    cfg: &ExperimentConfig,
    order: f64,
    f: impl Fn(&[f64], f64) -> Complex64 + Sync,
) -> toroidal::Result<ScalarSymbol> {
    let dim = cfg.grid.dim();
    let q = cfg.coefficient.clone();
    let margin = cfg.truncation.max(1) + 1;
    ScalarSymbol::from_fn(cfg.grid, SymbolClass::classical(order), margin, Provenance::Tabulated, move |x, xi| {
        let b = japanese_bracket(&xi[..dim]);
        f(x, b) * (Complex64::new(1.0, 0.0) + q.eval(&x[..dim]))
    })
}

fn calculus_check(cfg: &ExperimentConfig) -> Outcome {
    let nu = cfg.nu;
    let mut reports = Vec::new();
    match cfg.expansion {
        Expansion::Adjoint => {
            let a = corpus_symbol(cfg, nu, |x, b| Complex64::from_polar(b.powf(nu), 2.0 * PI * x[0]))?;
            for n in 0..=cfg.truncation {
                reports.push(check_expansion(&adjoint_expansion(&a, n)?)?);
            }
        }
        Expansion::Composition => {
            let a1 = corpus_symbol(cfg, nu, |_, b| Complex64::new(b.powf(nu), 0.0))?;
            let a2 = corpus_symbol(cfg, 0.0, |x, _| Complex64::new(2.0 + (2.0 * PI * x[0]).sin(), 0.0))?;
            for n in 0..=cfg.truncation {
                reports.push(check_expansion(&composition_expansion(&a1, &a2, n)?)?);
            }
        }
    }
    let mut body = Body::default();
    for r in &reports {
        let claimed = r.checks[0].claimed_order;
        body.metric(&format!("slope_N{}", r.order), r.slope());
        body.metric(&format!("split_defect_N{}", r.order), r.split_defect);
        body.verdicts.push(Verdict::at_most(
            &format!("slope_N{}", r.order),
            r.slope(),
            claimed + toroidal::symbol::CLASS_SLACK,
        ));
        body.verdicts.push(Verdict::flag(&format!("differenced_checks_N{}", r.order), r.passed));
    }
    for pair in reports.windows(2) {
        let gain = pair[0].slope() - pair[1].slope();
        body.verdicts.push(Verdict::at_least(
            &format!("improvement_N{}_to_N{}", pair[0].order, pair[1].order),
            gain,
            0.7,
        ));
    }
    let mut buf = Vec::new();
    write_expansion_csv(&mut buf, &reports)?;
    body.tables.push(("remainder".into(), String::from_utf8(buf).expect("ASCII")));
    body.plot = Some(Plot {
        title: format!("{}: remainder shell suprema", cfg.name),
        x_label: "ln <xi>".into(),
        y_label: "sup |r_N|".into(),
        log_y: true,
        series: reports
            .iter()
            .map(|r| shells_series(format!("N={}", r.order), &r.checks[0].samples))
            .collect(),
    });
    Ok(body)
}

fn symmetrizer_check(cfg: &ExperimentConfig) -> Outcome {
    let p = positive_operator(cfg)?;
    let sys = build_first_order_system(&p)?;
    let structural = structural_identities(&sys)?;
    let report = if cfg.control {
        zero_order_report(&negative_control_generator(&sys)?)?
    } else {
        check_zero_order_condition(&sys)?
    };
    let mut body = Body::default();
    body.metric("square_defect", structural.square_defect);
    body.metric("inverse_defect", structural.inverse_defect);
    body.metric("k_plus_k_star_norm", sys.defect);
    body.metric("slope", report.fit.slope);
    body.verdicts.push(Verdict::flag("structural_identities", structural.passed));
    body.verdicts.push(Verdict::at_most(
        "shell_norm_slope",
        report.fit.slope,
        toroidal::hyperbolic::ZERO_ORDER_SLOPE,
    ));
    let mut table = String::from("shell,inner,outer,bracket,norm\n");
    for s in &report.samples {
        let _ = writeln!(
            table,
            "{},{},{},{:.10e},{:.16e}",
            s.shell.k, s.shell.inner, s.shell.outer, s.bracket, s.sup
        );
    }
    body.tables.push(("shells".into(), table));
    body.plot = Some(Plot {
        title: format!("{}: shell norms of K + K*", cfg.name),
        x_label: "ln <2^k>".into(),
        y_label: "norm".into(),
        log_y: true,
        series: vec![shells_series("K + K*".into(), &report.samples)],
    });
    Ok(body)
}
