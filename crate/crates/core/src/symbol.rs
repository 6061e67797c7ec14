//! Tabulated toroidal symbols `a(x, xi)` on grid x lattice.
//!
//! Symbols carry a frequency margin: values are stored on the inflated cube
//! `max_i |xi_i| <= N + margin` so that forward differences of order up to
//! `margin` are exact on the core lattice.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftDirection;

use crate::error::{Error, Result};
use crate::grid::{japanese_bracket, norm_sq, Freq, GridSpec, Lattice, NdFft, MAX_DIM};
use crate::shells::{complete_shells, fit_order, shell_suprema, SlopeFit, ZERO_FLOOR};

/// Default inflated-lattice margin.
pub const DEFAULT_MARGIN: usize = 4;

/// Exponent slack for dyadic-shell class membership.
pub const CLASS_SLACK: f64 = 0.3;

/// Minimum number of complete shells for order regressions.
pub const MIN_SHELLS: usize = 4;

/// Lower bounds at or below this are not counted as elliptic.
pub const ELLIPTIC_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymbolClass {
    pub order: f64,
    pub rho: f64,
    pub delta: f64,
}

impl SymbolClass {
    pub fn new(order: f64, rho: f64, delta: f64) -> Result<Self> {
        if !order.is_finite() {
            return Err(Error::InvalidParameter(format!("order must be finite, got {order}")));
        }
        for (name, v) in [("rho", rho), ("delta", delta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!("{name} must lie in [0,1], got {v}")));
            }
        }
        Ok(SymbolClass { order, rho, delta })
    }

    /// Class `(m, 1, 0)`.
    pub fn classical(order: f64) -> Self {
        SymbolClass {
            order,
            rho: 1.0,
            delta: 0.0,
        }
    }

    /// The calculus needs `delta < rho`.
    pub fn require_calculus(&self) -> Result<()> {
        if self.delta < self.rho {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "calculus requires delta < rho, got rho = {}, delta = {}",
                self.rho, self.delta
            )))
        }
    }

    /// `m - rho |alpha| + delta |beta|`
    pub fn exponent(&self, alpha: &MultiIndex, beta: &MultiIndex) -> f64 {
        self.order - self.rho * alpha.order() as f64 + self.delta * beta.order() as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    dim: usize,
    comps: [u32; MAX_DIM],
}

impl MultiIndex {
    pub fn new(comps: &[u32]) -> Self {
        assert!(!comps.is_empty() && comps.len() <= MAX_DIM);
        let mut c = [0; MAX_DIM];
        c[..comps.len()].copy_from_slice(comps);
        MultiIndex {
            dim: comps.len(),
            comps: c,
        }
    }

    pub fn zero(dim: usize) -> Self {
        MultiIndex {
            dim,
            comps: [0; MAX_DIM],
        }
    }

    /// `delta_j`, the unit index along `axis`.
    pub fn unit(dim: usize, axis: usize) -> Self {
        let mut m = MultiIndex::zero(dim);
        m.comps[axis] = 1;
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[u32] {
        &self.comps[..self.dim]
    }

    pub fn order(&self) -> usize {
        self.components().iter().map(|&c| c as usize).sum()
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        assert_eq!(self.dim, other.dim);
        let mut out = *self;
        for i in 0..self.dim {
            out.comps[i] += other.comps[i];
        }
        out
    }

    /// `alpha!`
    pub fn factorial(&self) -> f64 {
        self.components()
            .iter()
            .map(|&c| (1..=c).map(f64::from).product::<f64>())
            .product()
    }

    /// Every multi-index `beta <= self` componentwise.
    pub fn lower_set(&self) -> Vec<MultiIndex> {
        let mut out = vec![MultiIndex::zero(self.dim)];
        for axis in 0..self.dim {
            let mut next = Vec::new();
            for m in &out {
                for v in 0..=self.comps[axis] {
                    let mut n = *m;
                    n.comps[axis] = v;
                    next.push(n);
                }
            }
            out = next;
        }
        out
    }

    /// Every multi-index of dimension `dim` with `|alpha| <= max_order`.
    pub fn up_to(dim: usize, max_order: usize) -> Vec<MultiIndex> {
        let mut cube = MultiIndex::zero(dim);
        for c in cube.comps[..dim].iter_mut() {
            *c = max_order as u32;
        }
        let mut all: Vec<MultiIndex> = cube
            .lower_set()
            .into_iter()
            .filter(|m| m.order() <= max_order)
            .collect();
        all.sort_by_key(|m| (m.order(), m.comps));
        all
    }

    fn as_freq(&self) -> Freq {
        let mut out = [0; MAX_DIM];
        for i in 0..self.dim {
            out[i] = self.comps[i] as i64;
        }
        out
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

#[derive(Clone, Debug, PartialEq)]
pub enum Provenance {
    ClosedForm(String),
    Tabulated,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarSymbol {
    spec: GridSpec,
    class: SymbolClass,
    margin: usize,
    /// `values[lattice_index * G^n + point]`
    values: Vec<Complex64>,
    provenance: Provenance,
}

impl ScalarSymbol {
    /// Tabulates `f(x, xi)` on the grid and the inflated lattice.
    pub fn from_fn<F>(
        spec: GridSpec,
        class: SymbolClass,
        margin: usize,
        provenance: Provenance,
        f: F,
    ) -> Result<Self>
    where
        F: Fn(&[f64], &Freq) -> Complex64 + Sync,
    {
        let dim = spec.dim();
        let coords: Vec<[f64; MAX_DIM]> = (0..spec.num_points()).map(|p| spec.coordinates(p)).collect();
        ScalarSymbol::from_indexed_fn(spec, class, margin, provenance, |p, xi| {
            f(&coords[p][..dim], xi)
        })
    }

    /// As [`ScalarSymbol::from_fn`] with the flat grid index in place of `x`.
    pub fn from_indexed_fn<F>(
        spec: GridSpec,
        class: SymbolClass,
        margin: usize,
        provenance: Provenance,
        f: F,
    ) -> Result<Self>
    where
        F: Fn(usize, &Freq) -> Complex64 + Sync,
    {
        let lattice = Lattice::new(spec.dim(), spec.freq_cutoff() + margin);
        let npts = spec.num_points();
        let mut values = vec![Complex64::new(0.0, 0.0); lattice.len() * npts];
        values
            .par_chunks_mut(npts)
            .enumerate()
            .for_each(|(li, row)| {
                let xi = lattice.point(li);
                for (p, slot) in row.iter_mut().enumerate() {
                    *slot = f(p, &xi);
                }
            });
        ScalarSymbol::tabulated_with(spec, class, margin, values, provenance)
    }

    /// Wraps raw values laid out as `values[lattice_index * G^n + point]`.
    pub fn tabulated(
        spec: GridSpec,
        class: SymbolClass,
        margin: usize,
        values: Vec<Complex64>,
    ) -> Result<Self> {
        ScalarSymbol::tabulated_with(spec, class, margin, values, Provenance::Tabulated)
    }

    fn tabulated_with(
        spec: GridSpec,
        class: SymbolClass,
        margin: usize,
        values: Vec<Complex64>,
        provenance: Provenance,
    ) -> Result<Self> {
        let expected = Lattice::new(spec.dim(), spec.freq_cutoff() + margin).len() * spec.num_points();
        if values.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "symbol table needs {expected} values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite("symbol table"));
        }
        Ok(ScalarSymbol {
            spec,
            class,
            margin,
            values,
            provenance,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn class(&self) -> &SymbolClass {
        &self.class
    }

    pub fn margin(&self) -> usize {
        self.margin
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// The inflated lattice the table is stored on.
    pub fn lattice(&self) -> Lattice {
        Lattice::new(self.spec.dim(), self.spec.freq_cutoff() + self.margin)
    }

    pub fn with_class(&self, class: SymbolClass) -> ScalarSymbol {
        ScalarSymbol {
            class,
            ..self.clone()
        }
    }

    /// Values `x -> a(x, xi)` at every grid point, if `xi` is stored.
    pub fn row(&self, xi: &Freq) -> Option<&[Complex64]> {
        let npts = self.spec.num_points();
        self.lattice()
            .index(xi)
            .map(|i| &self.values[i * npts..(i + 1) * npts])
    }

    pub fn value(&self, point: usize, xi: &Freq) -> Option<Complex64> {
        self.row(xi).map(|r| r[point])
    }

    /// Restricts the stored lattice to a smaller margin.
    pub fn crop(&self, margin: usize) -> Result<ScalarSymbol> {
        if margin > self.margin {
            return Err(Error::MarginExhausted {
                needed: margin,
                available: self.margin,
            });
        }
        if margin == self.margin {
            return Ok(self.clone());
        }
        let target = Lattice::new(self.spec.dim(), self.spec.freq_cutoff() + margin);
        let npts = self.spec.num_points();
        let mut values = Vec::with_capacity(target.len() * npts);
        for xi in target.points() {
            values.extend_from_slice(self.row(&xi).expect("target lattice is inside"));
        }
        Ok(ScalarSymbol {
            spec: self.spec,
            class: self.class,
            margin,
            values,
            provenance: self.provenance.clone(),
        })
    }

    /// Reinterprets the same table with a smaller core cutoff; the freed
    /// frequencies become margin.
    pub fn with_cutoff(&self, cutoff: usize) -> Result<ScalarSymbol> {
        let radius = self.spec.freq_cutoff() + self.margin;
        if cutoff > radius {
            return Err(Error::InvalidParameter(format!(
                "cutoff {cutoff} exceeds stored radius {radius}"
            )));
        }
        let spec = self.spec.with_cutoff(cutoff)?;
        Ok(ScalarSymbol {
            spec,
            class: self.class,
            margin: radius - cutoff,
            values: self.values.clone(),
            provenance: self.provenance.clone(),
        })
    }

    pub fn conj(&self) -> ScalarSymbol {
        self.map(|v| v.conj())
    }

    pub fn scale(&self, s: Complex64) -> ScalarSymbol {
        self.map(|v| v * s)
    }

    fn map(&self, f: impl Fn(Complex64) -> Complex64) -> ScalarSymbol {
        ScalarSymbol {
            values: self.values.iter().map(|&v| f(v)).collect(),
            provenance: Provenance::Tabulated,
            ..self.clone()
        }
    }

    /// Pointwise sum; the result keeps the smaller margin and `self`'s class.
    pub fn add(&self, other: &ScalarSymbol) -> Result<ScalarSymbol> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarSymbol) -> Result<ScalarSymbol> {
        self.zip(other, |a, b| a - b)
    }

    /// Pointwise product; orders add.
    pub fn mul(&self, other: &ScalarSymbol) -> Result<ScalarSymbol> {
        let mut out = self.zip(other, |a, b| a * b)?;
        out.class.order = self.class.order + other.class.order;
        Ok(out)
    }

    fn zip(
        &self,
        other: &ScalarSymbol,
        f: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Result<ScalarSymbol> {
        if self.spec != other.spec {
            return Err(Error::ShapeMismatch("symbols live on different grids".into()));
        }
        let margin = self.margin.min(other.margin);
        let a = self.crop(margin)?;
        let b = other.crop(margin)?;
        Ok(ScalarSymbol {
            spec: self.spec,
            class: self.class,
            margin,
            values: a.values.iter().zip(&b.values).map(|(&x, &y)| f(x, y)).collect(),
            provenance: Provenance::Tabulated,
        })
    }

    /// `max |a|` over grid x core lattice.
    pub fn max_abs(&self) -> f64 {
        let lattice = self.spec.lattice();
        lattice
            .points()
            .flat_map(|xi| self.row(&xi).unwrap().iter().map(|v| v.norm()))
            .fold(0.0, f64::max)
    }

    /// Largest pointwise difference over grid x core lattice.
    pub fn max_diff(&self, other: &ScalarSymbol) -> Result<f64> {
        if self.spec.lattice() != other.spec.lattice() || self.spec != other.spec {
            return Err(Error::ShapeMismatch("symbols live on different grids".into()));
        }
        let mut worst: f64 = 0.0;
        for xi in self.spec.lattice().points() {
            for (a, b) in self.row(&xi).unwrap().iter().zip(other.row(&xi).unwrap()) {
                worst = worst.max((a - b).norm());
            }
        }
        Ok(worst)
    }

    /// Single forward difference along `axis`; the margin shrinks by one.
    fn difference_axis(&self, axis: usize) -> ScalarSymbol {
        let target = Lattice::new(self.spec.dim(), self.spec.freq_cutoff() + self.margin - 1);
        let npts = self.spec.num_points();
        let mut values = Vec::with_capacity(target.len() * npts);
        for xi in target.points() {
            let mut shifted = xi;
            shifted[axis] += 1;
            let hi = self.row(&shifted).unwrap();
            let lo = self.row(&xi).unwrap();
            values.extend(hi.iter().zip(lo).map(|(h, l)| h - l));
        }
        ScalarSymbol {
            spec: self.spec,
            class: self.class,
            margin: self.margin - 1,
            values,
            provenance: Provenance::Tabulated,
        }
    }

    /// Applies a Fourier multiplier in x to every frequency row.
    fn x_multiplier(&self, mult: impl Fn(&Freq) -> Complex64 + Sync) -> ScalarSymbol {
        let spec = self.spec;
        let npts = spec.num_points();
        let weights: Vec<Complex64> = (0..npts)
            .map(|b| mult(&spec.bin_frequency(b)) / npts as f64)
            .collect();
        let fwd = NdFft::new(&spec, FftDirection::Forward);
        let inv = NdFft::new(&spec, FftDirection::Inverse);
        let mut values = self.values.clone();
        values.par_chunks_mut(npts).for_each(|row| {
            fwd.process(row);
            for (v, w) in row.iter_mut().zip(&weights) {
                *v *= w;
            }
            inv.process(row);
        });
        ScalarSymbol {
            spec,
            class: self.class,
            margin: self.margin,
            values,
            provenance: Provenance::Tabulated,
        }
    }
}

/// `Delta_xi^alpha a` by iterated single differences.
pub fn forward_difference(a: &ScalarSymbol, alpha: &MultiIndex) -> Result<ScalarSymbol> {
    check_margin(a, alpha)?;
    let mut out = a.clone();
    for (axis, &count) in alpha.components().iter().enumerate() {
        for _ in 0..count {
            out = out.difference_axis(axis);
        }
    }
    out.class.order = a.class.order - a.class.rho * alpha.order() as f64;
    Ok(out)
}

/// `Delta_xi^alpha a(xi) = sum_{beta <= alpha} (-1)^{|alpha - beta|} C(alpha, beta) a(xi + beta)`.
pub fn difference_binomial(a: &ScalarSymbol, alpha: &MultiIndex) -> Result<ScalarSymbol> {
    check_margin(a, alpha)?;
    let k = alpha.order();
    let target = Lattice::new(a.spec.dim(), a.spec.freq_cutoff() + a.margin - k);
    let terms: Vec<(Freq, f64)> = alpha
        .lower_set()
        .into_iter()
        .map(|beta| {
            let mut coeff = if (k - beta.order()).is_multiple_of(2) { 1.0 } else { -1.0 };
            for (&al, &be) in alpha.components().iter().zip(beta.components()) {
                coeff *= binomial(al, be);
            }
            (beta.as_freq(), coeff)
        })
        .collect();
    let npts = a.spec.num_points();
    let mut values = vec![Complex64::new(0.0, 0.0); target.len() * npts];
    values
        .par_chunks_mut(npts)
        .enumerate()
        .for_each(|(li, out)| {
            let xi = target.point(li);
            for (beta, coeff) in &terms {
                let mut shifted = xi;
                for i in 0..MAX_DIM {
                    shifted[i] += beta[i];
                }
                let row = a.row(&shifted).unwrap();
                for (o, v) in out.iter_mut().zip(row) {
                    *o += v * coeff;
                }
            }
        });
    Ok(ScalarSymbol {
        spec: a.spec,
        class: SymbolClass {
            order: a.class.order - a.class.rho * k as f64,
            ..a.class
        },
        margin: a.margin - k,
        values,
        provenance: Provenance::Tabulated,
    })
}

fn check_margin(a: &ScalarSymbol, alpha: &MultiIndex) -> Result<()> {
    if alpha.dim() != a.spec.dim() {
        return Err(Error::ShapeMismatch(format!(
            "multi-index of dimension {} for a {}-dimensional symbol",
            alpha.dim(),
            a.spec.dim()
        )));
    }
    if alpha.order() > a.margin {
        return Err(Error::MarginExhausted {
            needed: alpha.order(),
            available: a.margin,
        });
    }
    Ok(())
}

/// Spectral `partial_x^beta`: x-mode `k` is multiplied by `(2 pi i k)^beta`.
///
/// The Nyquist mode is dropped on differentiated axes, so the x-dependence is
/// assumed band-limited below `G/2`.
pub fn x_derivative(a: &ScalarSymbol, beta: &MultiIndex) -> ScalarSymbol {
    if beta.order() == 0 {
        return a.clone();
    }
    let g = a.spec.points_per_axis() as i64;
    let b = *beta;
    let mut out = a.x_multiplier(move |k| {
        let mut m = Complex64::new(1.0, 0.0);
        for (axis, &p) in b.components().iter().enumerate() {
            if p == 0 {
                continue;
            }
            if k[axis] == -g / 2 {
                return Complex64::new(0.0, 0.0);
            }
            let factor = Complex64::new(0.0, 2.0 * std::f64::consts::PI * k[axis] as f64);
            m *= factor.powu(p);
        }
        m
    });
    out.class.order = a.class.order + a.class.delta * beta.order() as f64;
    out
}

/// `D_x^{(alpha)}`: x-mode `k` is multiplied by the falling factorials
/// `prod_j k_j (k_j - 1) ... (k_j - alpha_j + 1)`.
pub fn x_falling_derivative(a: &ScalarSymbol, alpha: &MultiIndex) -> ScalarSymbol {
    if alpha.order() == 0 {
        return a.clone();
    }
    let g = a.spec.points_per_axis() as i64;
    let al = *alpha;
    let mut out = a.x_multiplier(move |k| {
        let mut m = 1.0;
        for (axis, &p) in al.components().iter().enumerate() {
            if p == 0 {
                continue;
            }
            if k[axis] == -g / 2 {
                return Complex64::new(0.0, 0.0);
            }
            for l in 0..p as i64 {
                m *= (k[axis] - l) as f64;
            }
        }
        Complex64::new(m, 0.0)
    });
    out.class.order = a.class.order + a.class.delta * alpha.order() as f64;
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeminormEstimate {
    pub value: f64,
    pub point: usize,
    pub xi: Freq,
}

/// `sup <xi>^{rho|alpha| - delta|beta| - m} |partial_x^beta Delta_xi^alpha a|` over
/// grid x core lattice, using the class declared on `a`.
pub fn seminorm_estimate(
    a: &ScalarSymbol,
    alpha: &MultiIndex,
    beta: &MultiIndex,
) -> Result<SeminormEstimate> {
    let d = x_derivative(&forward_difference(a, alpha)?, beta);
    let exponent = -a.class.exponent(alpha, beta);
    let mut best = SeminormEstimate {
        value: 0.0,
        point: 0,
        xi: [0; MAX_DIM],
    };
    for xi in a.spec.lattice().points() {
        let w = japanese_bracket(&xi[..a.spec.dim()]).powf(exponent);
        for (p, v) in d.row(&xi).unwrap().iter().enumerate() {
            let val = w * v.norm();
            if val > best.value {
                best = SeminormEstimate { value: val, point: p, xi };
            }
        }
    }
    Ok(best)
}

/// Shell suprema of `sup_x |a(x, xi)|` over the core lattice, one per complete shell.
pub fn symbol_shell_suprema(a: &ScalarSymbol) -> Vec<crate::shells::ShellSample> {
    let lattice = a.spec.lattice();
    let shells = complete_shells(lattice.radius());
    shell_suprema(&shells, lattice.points(), |xi| {
        a.row(xi).unwrap().iter().map(|v| v.norm()).fold(0.0, f64::max)
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeEntry {
    pub alpha: MultiIndex,
    pub beta: MultiIndex,
    pub fit: SlopeFit,
    /// `m - rho|alpha| + delta|beta|` for the declared class.
    pub class_exponent: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassReport {
    pub class: SymbolClass,
    pub entries: Vec<ProbeEntry>,
    pub passed: bool,
}

/// Dyadic-shell regression of `sup |partial_x^beta Delta_xi^alpha a|` for every
/// `|alpha| <= max_alpha`, `|beta| <= max_beta`, compared with the declared class.
pub fn class_membership_probe(
    a: &ScalarSymbol,
    max_alpha: usize,
    max_beta: usize,
) -> Result<ClassReport> {
    let found = complete_shells(a.spec.freq_cutoff()).len();
    if found < MIN_SHELLS {
        return Err(Error::TooFewShells {
            needed: MIN_SHELLS,
            found,
        });
    }
    if max_alpha > a.margin {
        return Err(Error::MarginExhausted {
            needed: max_alpha,
            available: a.margin,
        });
    }
    let floor = ZERO_FLOOR.max(1e-12 * a.max_abs());
    let dim = a.spec.dim();
    let mut entries = Vec::new();
    for alpha in MultiIndex::up_to(dim, max_alpha) {
        let diffed = forward_difference(a, &alpha)?;
        for beta in MultiIndex::up_to(dim, max_beta) {
            let d = x_derivative(&diffed, &beta);
            let fit = fit_order(&symbol_shell_suprema(&d), floor, MIN_SHELLS)?;
            let class_exponent = a.class.exponent(&alpha, &beta);
            let passed = fit.slope <= class_exponent + CLASS_SLACK;
            entries.push(ProbeEntry {
                alpha,
                beta,
                fit,
                class_exponent,
                passed,
            });
        }
    }
    let passed = entries.iter().all(|e| e.passed);
    Ok(ClassReport {
        class: a.class,
        entries,
        passed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EllipticityReport {
    pub elliptic: bool,
    /// Infimum of the weighted lower bound over the sampled region.
    pub c0: f64,
    pub point: usize,
    pub xi: Freq,
}

/// `C0 = min_{|xi| >= n0, x} |a(x, xi)| / <xi>^m`.
pub fn ellipticity_check(a: &ScalarSymbol, n0: usize) -> Result<EllipticityReport> {
    lower_bound(a, n0, |v| v.norm())
}

/// As [`ellipticity_check`] with `Re a` in place of `|a|`.
pub fn strong_ellipticity_check(a: &ScalarSymbol, n0: usize) -> Result<EllipticityReport> {
    lower_bound(a, n0, |v| v.re)
}

fn lower_bound(
    a: &ScalarSymbol,
    n0: usize,
    measure: impl Fn(Complex64) -> f64,
) -> Result<EllipticityReport> {
    let dim = a.spec.dim();
    let n0sq = (n0 * n0) as i64;
    let mut best: Option<EllipticityReport> = None;
    for xi in a.spec.lattice().points() {
        if norm_sq(&xi) < n0sq {
            continue;
        }
        let w = japanese_bracket(&xi[..dim]).powf(-a.class.order);
        for (p, v) in a.row(&xi).unwrap().iter().enumerate() {
            let c = measure(*v) * w;
            if best.is_none_or(|b| c < b.c0) {
                best = Some(EllipticityReport {
                    elliptic: false,
                    c0: c,
                    point: p,
                    xi,
                });
            }
        }
    }
    let mut report = best.ok_or(Error::EmptyShell(n0 as f64))?;
    report.elliptic = report.c0 > ELLIPTIC_FLOOR;
    Ok(report)
}

/// Real trigonometric polynomial `q(x) = sum_k c_k exp(2 pi i k . x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierSeries {
    pub terms: Vec<(Freq, Complex64)>,
}

impl FourierSeries {
    pub fn zero() -> Self {
        FourierSeries { terms: Vec::new() }
    }

    /// `amplitude * sin(2 pi k x_axis)`.
    pub fn sine(amplitude: f64, axis: usize, k: i64) -> Self {
        let mut plus = [0; MAX_DIM];
        plus[axis] = k;
        let mut minus = [0; MAX_DIM];
        minus[axis] = -k;
        let c = Complex64::new(0.0, -0.5 * amplitude);
        FourierSeries {
            terms: vec![(plus, c), (minus, c.conj())],
        }
    }

    /// `amplitude * cos(2 pi k x_axis)`.
    pub fn cosine(amplitude: f64, axis: usize, k: i64) -> Self {
        let mut plus = [0; MAX_DIM];
        plus[axis] = k;
        let mut minus = [0; MAX_DIM];
        minus[axis] = -k;
        let c = Complex64::new(0.5 * amplitude, 0.0);
        FourierSeries {
            terms: vec![(plus, c), (minus, c)],
        }
    }

    /// `c` times the constant function.
    pub fn constant(c: f64) -> Self {
        FourierSeries {
            terms: vec![([0; MAX_DIM], Complex64::new(c, 0.0))],
        }
    }

    pub fn plus(mut self, other: FourierSeries) -> Self {
        self.terms.extend(other.terms);
        self
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        self.terms
            .iter()
            .map(|(k, c)| {
                let dot: f64 = x.iter().zip(k).map(|(xi, ki)| xi * *ki as f64).sum();
                c * Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * dot)
            })
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BuiltinSymbol {
    /// `(2 pi)^nu |xi|^nu`, class `(nu, 1, 0)`.
    FracLaplacian { nu: f64 },
    /// `<xi>^s`, class `(s, 1, 0)`.
    Bessel { s: f64 },
    /// `(2 pi)^nu |xi|^nu exp(i (2 pi |xi|)^{1 - rho})`, class `(nu, rho, 0)`.
    Oscillating { nu: f64, rho: f64 },
    /// `(1 + q(x)) (2 pi)^nu |xi|^nu` with `q > -1`, class `(nu, 1, 0)`.
    VariableFracLaplacian { nu: f64, coefficient: FourierSeries },
}

fn frac_multiplier(nu: f64, xi: &[i64]) -> f64 {
    let r2 = norm_sq(xi);
    if r2 == 0 {
        0.0
    } else {
        (2.0 * std::f64::consts::PI).powf(nu) * (r2 as f64).powf(0.5 * nu)
    }
}

pub fn builtin_symbol(spec: GridSpec, kind: &BuiltinSymbol, margin: usize) -> Result<ScalarSymbol> {
    let dim = spec.dim();
    let positive = |name: &str, v: f64| {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
        }
    };
    match kind {
        BuiltinSymbol::FracLaplacian { nu } => {
            positive("nu", *nu)?;
            let nu = *nu;
            ScalarSymbol::from_fn(
                spec,
                SymbolClass::classical(nu),
                margin,
                Provenance::ClosedForm(format!("frac_laplacian(nu={nu})")),
                move |_, xi| Complex64::new(frac_multiplier(nu, &xi[..dim]), 0.0),
            )
        }
        BuiltinSymbol::Bessel { s } => {
            if !s.is_finite() {
                return Err(Error::InvalidParameter("s must be finite".into()));
            }
            let s = *s;
            ScalarSymbol::from_fn(
                spec,
                SymbolClass::classical(s),
                margin,
                Provenance::ClosedForm(format!("bessel(s={s})")),
                move |_, xi| Complex64::new(japanese_bracket(&xi[..dim]).powf(s), 0.0),
            )
        }
        BuiltinSymbol::Oscillating { nu, rho } => {
            positive("nu", *nu)?;
            if !(*rho > 0.0 && *rho <= 1.0) {
                return Err(Error::InvalidParameter(format!("rho must lie in (0,1], got {rho}")));
            }
            let (nu, rho) = (*nu, *rho);
            ScalarSymbol::from_fn(
                spec,
                SymbolClass::new(nu, rho, 0.0)?,
                margin,
                Provenance::ClosedForm(format!("oscillating(nu={nu}, rho={rho})")),
                move |_, xi| {
                    let r = (norm_sq(&xi[..dim]) as f64).sqrt();
                    let phase = (2.0 * std::f64::consts::PI * r).powf(1.0 - rho);
                    frac_multiplier(nu, &xi[..dim]) * Complex64::from_polar(1.0, phase)
                },
            )
        }
        BuiltinSymbol::VariableFracLaplacian { nu, coefficient } => {
            positive("nu", *nu)?;
            let half = (spec.points_per_axis() / 2) as i64;
            for (k, _) in &coefficient.terms {
                if k[..dim].iter().any(|v| v.abs() >= half) || k[dim..].iter().any(|&v| v != 0) {
                    return Err(Error::InvalidParameter(format!(
                        "coefficient frequency {:?} is not resolved by the grid",
                        &k[..dim]
                    )));
                }
            }
            let q: Vec<Complex64> = (0..spec.num_points())
                .map(|p| coefficient.eval(&spec.coordinates(p)[..dim]))
                .collect();
            if let Some(bad) = q.iter().find(|v| v.im.abs() > 1e-12) {
                return Err(Error::InvalidParameter(format!(
                    "coefficient q must be real, found imaginary part {:.3e}",
                    bad.im
                )));
            }
            let qmin = q.iter().map(|v| v.re).fold(f64::INFINITY, f64::min);
            if qmin <= -1.0 {
                return Err(Error::InvalidParameter(format!(
                    "coefficient must satisfy q > -1, min q = {qmin}"
                )));
            }
            let nu = *nu;
            let q_re: Vec<f64> = q.iter().map(|v| v.re).collect();
            ScalarSymbol::from_indexed_fn(
                spec,
                SymbolClass::classical(nu),
                margin,
                Provenance::ClosedForm(format!("variable_frac_laplacian(nu={nu})")),
                move |p, xi| Complex64::new((1.0 + q_re[p]) * frac_multiplier(nu, &xi[..dim]), 0.0),
            )
        }
    }
}

/// `l x l` matrix of scalar symbols on a common grid.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixSymbol {
    size: usize,
    entries: Vec<ScalarSymbol>,
}

impl MatrixSymbol {
    /// `entries` in row-major order.
    pub fn new(size: usize, entries: Vec<ScalarSymbol>) -> Result<Self> {
        if size == 0 || entries.len() != size * size {
            return Err(Error::ShapeMismatch(format!(
                "{size}x{size} matrix symbol needs {} entries, got {}",
                size * size,
                entries.len()
            )));
        }
        let spec = entries[0].spec;
        if entries.iter().any(|e| e.spec != spec) {
            return Err(Error::ShapeMismatch("matrix entries on different grids".into()));
        }
        Ok(MatrixSymbol { size, entries })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn spec(&self) -> &GridSpec {
        &self.entries[0].spec
    }

    pub fn entry(&self, i: usize, j: usize) -> &ScalarSymbol {
        &self.entries[i * self.size + j]
    }

    /// Largest order among the entries.
    pub fn order(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.class.order)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::freq;
    use std::f64::consts::PI;

    fn spec1() -> GridSpec {
        GridSpec::new(1, 16, 7).unwrap()
    }

    fn bracket_symbol(spec: GridSpec, m: f64) -> ScalarSymbol {
        builtin_symbol(spec, &BuiltinSymbol::Bessel { s: m }, DEFAULT_MARGIN).unwrap()
    }

    #[test]
    fn constant_symbol_has_vanishing_differences() {
        let spec = spec1();
        let a = ScalarSymbol::from_fn(
            spec,
            SymbolClass::classical(0.0),
            4,
            Provenance::Tabulated,
            |_, _| Complex64::new(2.5, -1.0),
        )
        .unwrap();
        for k in 1..=4 {
            let d = forward_difference(&a, &MultiIndex::new(&[k])).unwrap();
            assert_eq!(d.max_abs(), 0.0);
        }
    }

    #[test]
    fn linear_symbol_differences() {
        let spec = spec1();
        let a = ScalarSymbol::from_fn(
            spec,
            SymbolClass::classical(1.0),
            4,
            Provenance::Tabulated,
            |_, xi| Complex64::new(xi[0] as f64, 0.0),
        )
        .unwrap();
        let d1 = forward_difference(&a, &MultiIndex::new(&[1])).unwrap();
        let d2 = forward_difference(&a, &MultiIndex::new(&[2])).unwrap();
        for xi in spec.lattice().points() {
            assert!(d1.row(&xi).unwrap().iter().all(|v| *v == Complex64::new(1.0, 0.0)));
            assert!(d2.row(&xi).unwrap().iter().all(|v| v.norm() == 0.0));
        }
        assert_eq!(d1.margin(), 3);
        assert_eq!(d1.class().order, 0.0);
    }

    #[test]
    fn second_difference_matches_three_point_formula() {
        let spec = spec1();
        let a = bracket_symbol(spec, 1.5);
        let d2 = forward_difference(&a, &MultiIndex::new(&[2])).unwrap();
        for xi in spec.lattice().points() {
            let f = |k: i64| japanese_bracket(&[xi[0] + k]).powf(1.5);
            let expect = f(2) - 2.0 * f(1) + f(0);
            assert!((d2.value(0, &xi).unwrap().re - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn binomial_difference_of_bracket_at_origin() {
        let a = bracket_symbol(spec1(), 1.0);
        let d = difference_binomial(&a, &MultiIndex::new(&[1])).unwrap();
        let v = d.value(3, &freq(&[0])).unwrap();
        assert!((v.re - (2f64.sqrt() - 1.0)).abs() < 1e-15);
        let same = difference_binomial(&a, &MultiIndex::zero(1)).unwrap();
        assert_eq!(same.values(), a.values());
    }

    #[test]
    fn margin_exhaustion_is_reported() {
        let a = bracket_symbol(spec1(), 1.0);
        assert!(matches!(
            forward_difference(&a, &MultiIndex::new(&[5])),
            Err(Error::MarginExhausted { needed: 5, available: 4 })
        ));
        assert!(difference_binomial(&a, &MultiIndex::new(&[5])).is_err());
    }

    #[test]
    fn integer_symbols_agree_bitwise() {
        let spec = GridSpec::new(2, 8, 3).unwrap();
        let a = ScalarSymbol::from_fn(
            spec,
            SymbolClass::classical(3.0),
            4,
            Provenance::Tabulated,
            |x, xi| {
                let j = (x[0] * 8.0).round() as i64;
                Complex64::new((xi[0] * xi[0] * xi[1] + j) as f64, (xi[1] - 2 * xi[0]) as f64)
            },
        )
        .unwrap();
        for alpha in MultiIndex::up_to(2, 4) {
            let r = forward_difference(&a, &alpha).unwrap();
            let b = difference_binomial(&a, &alpha).unwrap();
            assert_eq!(r.values(), b.values(), "alpha = {alpha:?}");
        }
    }

    #[test]
    fn x_derivative_of_sine_symbol() {
        let spec = GridSpec::new(1, 32, 10).unwrap();
        let a = ScalarSymbol::from_fn(
            spec,
            SymbolClass::classical(1.0),
            2,
            Provenance::Tabulated,
            |x, xi| Complex64::new((2.0 * PI * x[0]).sin() * japanese_bracket(&xi[..1]), 0.0),
        )
        .unwrap();
        let d = x_derivative(&a, &MultiIndex::new(&[1]));
        for xi in spec.lattice().points() {
            for p in 0..spec.num_points() {
                let x = spec.coordinates(p)[0];
                let expect = 2.0 * PI * (2.0 * PI * x).cos() * japanese_bracket(&xi[..1]);
                assert!((d.value(p, &xi).unwrap() - expect).norm() < 1e-10);
            }
        }
        let flat = bracket_symbol(spec, 2.0);
        assert!(x_derivative(&flat, &MultiIndex::new(&[2])).max_abs() < 1e-9);
    }

    #[test]
    fn seminorm_examples() {
        let spec = GridSpec::new(1, 32, 15).unwrap();
        let a = bracket_symbol(spec, 1.0);
        let zero = MultiIndex::zero(1);
        let one = MultiIndex::new(&[1]);
        assert!((seminorm_estimate(&a, &zero, &zero).unwrap().value - 1.0).abs() < 1e-14);
        // mean value bound: |<xi+1> - <xi>| <= 1 and the weight <xi>^{1-1} = 1
        assert!(seminorm_estimate(&a, &one, &zero).unwrap().value <= 1.0);

        let s = ScalarSymbol::from_fn(
            spec,
            SymbolClass::classical(1.0),
            4,
            Provenance::Tabulated,
            |x, xi| Complex64::new((2.0 * PI * x[0]).sin() * japanese_bracket(&xi[..1]), 0.0),
        )
        .unwrap();
        let est = seminorm_estimate(&s, &zero, &one).unwrap();
        assert!((est.value - 2.0 * PI).abs() < 1e-8);
    }

    #[test]
    fn ellipticity_examples() {
        let spec = GridSpec::new(1, 32, 15).unwrap();
        let frac = builtin_symbol(spec, &BuiltinSymbol::FracLaplacian { nu: 2.0 }, 4).unwrap();
        let r = ellipticity_check(&frac, 1).unwrap();
        // brute force: min over |xi| >= 1 of (2 pi)^2 xi^2 / (1 + xi^2)
        let oracle = (1..=15)
            .map(|k| (2.0 * PI).powi(2) * (k * k) as f64 / (1 + k * k) as f64)
            .fold(f64::INFINITY, f64::min);
        assert!(r.elliptic);
        assert!((r.c0 - oracle).abs() < 1e-12);
        assert!((oracle - (2.0 * PI).powi(2) / 2.0).abs() < 1e-12);
        assert!(strong_ellipticity_check(&frac, 1).unwrap().elliptic);

        let vanishing = ScalarSymbol::from_fn(
            spec,
            SymbolClass::classical(1.0),
            0,
            Provenance::Tabulated,
            |x, xi| Complex64::new((2.0 * PI * x[0]).sin() * japanese_bracket(&xi[..1]), 0.0),
        )
        .unwrap();
        assert!(!ellipticity_check(&vanishing, 1).unwrap().elliptic);

        let bessel = bracket_symbol(spec, 1.0);
        let r = ellipticity_check(&bessel, 1).unwrap();
        assert!(r.elliptic && (r.c0 - 1.0).abs() < 1e-14);

        let rotated = bessel.scale(Complex64::new(0.0, 1.0));
        assert!(ellipticity_check(&rotated, 1).unwrap().elliptic);
        assert!(!strong_ellipticity_check(&rotated, 1).unwrap().elliptic);
        let negative = bessel.scale(Complex64::new(-1.0, 0.0));
        assert!(!strong_ellipticity_check(&negative, 1).unwrap().elliptic);

        assert!(matches!(ellipticity_check(&bessel, 40), Err(Error::EmptyShell(_))));
    }

    #[test]
    fn builtin_values_and_classes() {
        let spec = GridSpec::new(2, 8, 3).unwrap();
        let frac = builtin_symbol(spec, &BuiltinSymbol::FracLaplacian { nu: 0.7 }, 2).unwrap();
        assert_eq!(frac.value(0, &freq(&[0, 0])).unwrap(), Complex64::new(0.0, 0.0));
        assert_eq!(*frac.class(), SymbolClass::classical(0.7));
        let bessel = builtin_symbol(spec, &BuiltinSymbol::Bessel { s: -1.3 }, 2).unwrap();
        assert_eq!(bessel.value(5, &freq(&[0, 0])).unwrap(), Complex64::new(1.0, 0.0));
        let osc = builtin_symbol(spec, &BuiltinSymbol::Oscillating { nu: 1.0, rho: 0.4 }, 2).unwrap();
        assert_eq!(*osc.class(), SymbolClass::new(1.0, 0.4, 0.0).unwrap());
        let var = builtin_symbol(
            spec,
            &BuiltinSymbol::VariableFracLaplacian {
                nu: 0.7,
                coefficient: FourierSeries::zero(),
            },
            2,
        )
        .unwrap();
        assert_eq!(var.values(), frac.values());

        assert!(builtin_symbol(spec, &BuiltinSymbol::FracLaplacian { nu: 0.0 }, 2).is_err());
        assert!(builtin_symbol(spec, &BuiltinSymbol::Oscillating { nu: 1.0, rho: 0.0 }, 2).is_err());
        let too_big = BuiltinSymbol::VariableFracLaplacian {
            nu: 2.0,
            coefficient: FourierSeries::sine(1.5, 0, 1),
        };
        assert!(builtin_symbol(spec, &too_big, 2).is_err());
    }

    #[test]
    fn bessel_symbol_passes_its_class_and_fails_when_understated() {
        let spec = GridSpec::new(1, 128, 63).unwrap();
        let a = bracket_symbol(spec, 1.5);
        assert!(class_membership_probe(&a, 3, 1).unwrap().passed);
        let understated = a.with_class(SymbolClass::classical(0.5));
        assert!(!class_membership_probe(&understated, 3, 1).unwrap().passed);
    }

    #[test]
    fn understated_order_makes_seminorm_grow_with_radius() {
        let small = bracket_symbol(GridSpec::new(1, 32, 15).unwrap(), 1.0)
            .with_class(SymbolClass::classical(0.0));
        let large = bracket_symbol(GridSpec::new(1, 128, 63).unwrap(), 1.0)
            .with_class(SymbolClass::classical(0.0));
        let z = MultiIndex::zero(1);
        let s = seminorm_estimate(&small, &z, &z).unwrap().value;
        let l = seminorm_estimate(&large, &z, &z).unwrap().value;
        assert!(l > 3.0 * s);
    }

    #[test]
    fn probe_needs_enough_shells() {
        let a = bracket_symbol(GridSpec::new(1, 16, 7).unwrap(), 1.0);
        assert!(matches!(
            class_membership_probe(&a, 1, 0),
            Err(Error::TooFewShells { .. })
        ));
    }

    #[test]
    fn with_cutoff_keeps_values() {
        let a = bracket_symbol(GridSpec::new(1, 32, 15).unwrap(), 1.0);
        let r = a.with_cutoff(7).unwrap();
        assert_eq!(r.margin(), 12);
        assert_eq!(r.value(0, &freq(&[10])), a.value(0, &freq(&[10])));
    }
}
