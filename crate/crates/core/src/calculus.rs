//! Asymptotic expansions for adjoints and compositions of toroidal
//! pseudo-differential operators, checked against materialized references.
//!
//! On the torus the expansions are exact Newton series in the frequency
//! variable:
//!
//! ```text
//! sigma_{A*}     = sum_alpha (1/alpha!) Delta^alpha D_x^(alpha) conj(a)
//! sigma_{A1 A2}  = sum_alpha (1/alpha!) (Delta^alpha a1) (D_x^(alpha) a2)
//! ```
//!
//! where `D_x^(alpha)` multiplies the x-Fourier mode `k` by the falling
//! factorials `k_j (k_j - 1) ... (k_j - alpha_j + 1)`.

use std::io::Write;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quantize::{adjoint, compose, extract_symbol, materialize};
use crate::shells::{complete_shells, fit_order, shell_suprema, ShellSample, SlopeFit, ZERO_FLOOR};
use crate::symbol::{
    forward_difference, x_falling_derivative, MultiIndex, ScalarSymbol, SymbolClass, CLASS_SLACK,
    MIN_SHELLS,
};

#[derive(Clone, Debug)]
pub struct ExpansionResult {
    /// Truncation order.
    pub order: usize,
    pub partial_sum: ScalarSymbol,
    /// Symbol recovered from the materialized operator.
    pub reference: ScalarSymbol,
    /// `reference - partial_sum` on grid x `L`.
    pub remainder: ScalarSymbol,
    pub claimed_remainder_order: f64,
    /// `rho - delta` of the classes involved.
    pub gain: f64,
}

fn zero_like(a: &ScalarSymbol) -> ScalarSymbol {
    a.crop(0).expect("zero margin always fits").scale(Complex64::new(0.0, 0.0))
}

/// Partial sum of the adjoint expansion to order `n` and its remainder.
pub fn adjoint_expansion(a: &ScalarSymbol, n: usize) -> Result<ExpansionResult> {
    a.class().require_calculus()?;
    if n > a.margin() {
        return Err(Error::MarginExhausted {
            needed: n,
            available: a.margin(),
        });
    }
    let b = a.conj();
    let mut partial = zero_like(a);
    for alpha in MultiIndex::up_to(a.spec().dim(), n) {
        let d = x_falling_derivative(&b, &alpha);
        let term = forward_difference(&d, &alpha)?
            .crop(0)?
            .scale(Complex64::new(1.0 / alpha.factorial(), 0.0));
        partial = partial.add(&term)?;
    }
    let reference = extract_symbol(&adjoint(&materialize(&a.crop(0)?)))?;
    finish(partial, reference, n, *a.class(), a.class().order)
}

/// Partial sum of the composition expansion to order `n` and its remainder.
pub fn composition_expansion(a1: &ScalarSymbol, a2: &ScalarSymbol, n: usize) -> Result<ExpansionResult> {
    if a1.spec() != a2.spec() {
        return Err(Error::ShapeMismatch("symbols live on different grids".into()));
    }
    a1.class().require_calculus()?;
    a2.class().require_calculus()?;
    if n > a1.margin() {
        return Err(Error::MarginExhausted {
            needed: n,
            available: a1.margin(),
        });
    }
    let mut partial = zero_like(a1);
    for alpha in MultiIndex::up_to(a1.spec().dim(), n) {
        let left = forward_difference(a1, &alpha)?.crop(0)?;
        let right = x_falling_derivative(a2, &alpha).crop(0)?;
        let term = left
            .mul(&right)?
            .scale(Complex64::new(1.0 / alpha.factorial(), 0.0));
        partial = partial.add(&term)?;
    }
    let product = compose(&materialize(&a1.crop(0)?), &materialize(&a2.crop(0)?))?;
    let reference = extract_symbol(&product)?;
    let class = SymbolClass {
        order: a1.class().order + a2.class().order,
        rho: a1.class().rho.min(a2.class().rho),
        delta: a1.class().delta.max(a2.class().delta),
    };
    finish(partial, reference, n, class, class.order)
}

fn finish(
    partial: ScalarSymbol,
    reference: ScalarSymbol,
    n: usize,
    class: SymbolClass,
    order: f64,
) -> Result<ExpansionResult> {
    let gain = class.rho - class.delta;
    let claimed = order - gain * (n as f64 + 1.0);
    let remainder = reference.sub(&partial)?.with_class(SymbolClass { order: claimed, ..class });
    Ok(ExpansionResult {
        order: n,
        partial_sum: partial.with_class(SymbolClass { order, ..class }),
        reference: reference.with_class(SymbolClass { order, ..class }),
        remainder,
        claimed_remainder_order: claimed,
        gain,
    })
}

/// Order of `r` by dyadic-shell regression of `sup_x |r(x, xi)|` over its core lattice.
pub fn remainder_order_estimate(r: &ScalarSymbol) -> Result<SlopeFit> {
    remainder_fit(r, ZERO_FLOOR).map(|(fit, _)| fit)
}

fn remainder_fit(r: &ScalarSymbol, floor: f64) -> Result<(SlopeFit, Vec<ShellSample>)> {
    let lattice = r.spec().lattice();
    let shells = complete_shells(lattice.radius());
    let samples = shell_suprema(&shells, lattice.points(), |xi| {
        r.row(xi).unwrap().iter().map(|v| v.norm()).fold(0.0, f64::max)
    });
    let fit = fit_order(&samples, floor, MIN_SHELLS)?;
    Ok((fit, samples))
}

/// One regression of the remainder (or of a difference of it) against its claimed order.
#[derive(Clone, Debug)]
pub struct RemainderCheck {
    /// Outer difference applied before the regression.
    pub outer: MultiIndex,
    pub samples: Vec<ShellSample>,
    pub fit: SlopeFit,
    pub claimed_order: f64,
    pub passed: bool,
}

#[derive(Clone, Debug)]
pub struct ExpansionReport {
    pub order: usize,
    /// `sup |partial_sum + remainder - reference|`
    pub split_defect: f64,
    pub checks: Vec<RemainderCheck>,
    pub passed: bool,
}

impl ExpansionReport {
    /// Slope of the undifferenced remainder.
    pub fn slope(&self) -> f64 {
        self.checks[0].fit.slope
    }
}

/// Regresses the remainder over `|xi| <= N/2`, with no outer difference and
/// with one forward difference along each axis.
pub fn check_expansion(e: &ExpansionResult) -> Result<ExpansionReport> {
    let spec = *e.remainder.spec();
    let half = spec.freq_cutoff() / 2;
    let inner = e.remainder.with_cutoff(half)?;
    let floor = ZERO_FLOOR.max(1e-12 * e.reference.max_abs());
    let dim = spec.dim();
    let mut outers = vec![MultiIndex::zero(dim)];
    outers.extend((0..dim).map(|axis| MultiIndex::unit(dim, axis)));
    let mut checks = Vec::new();
    for outer in outers {
        let r = forward_difference(&inner, &outer)?;
        let (fit, samples) = remainder_fit(&r, floor)?;
        let claimed_order = e.claimed_remainder_order - e.remainder.class().rho * outer.order() as f64;
        let passed = fit.slope <= claimed_order + CLASS_SLACK;
        checks.push(RemainderCheck {
            outer,
            samples,
            fit,
            claimed_order,
            passed,
        });
    }
    let recombined = e.partial_sum.add(&e.remainder)?;
    let split_defect = recombined.max_diff(&e.reference)?;
    let passed = checks.iter().all(|c| c.passed);
    Ok(ExpansionReport {
        order: e.order,
        split_defect,
        checks,
        passed,
    })
}

/// CSV rows `N,outer,shell,sup,fitted_slope,claimed_order,pass`.
pub fn write_expansion_csv<W: Write>(out: &mut W, reports: &[ExpansionReport]) -> Result<()> {
    writeln!(out, "N,outer,shell,sup,fitted_slope,claimed_order,pass")?;
    for r in reports {
        for c in &r.checks {
            let outer: Vec<String> = c.outer.components().iter().map(|v| v.to_string()).collect();
            for s in &c.samples {
                writeln!(
                    out,
                    "{},{},{},{:.16e},{:.6},{:.6},{}",
                    r.order,
                    outer.join(" "),
                    s.shell.k,
                    s.sup,
                    c.fit.slope,
                    c.claimed_order,
                    c.passed
                )?;
            }
        }
    }
    Ok(())
}
