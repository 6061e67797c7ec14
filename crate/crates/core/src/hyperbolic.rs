//! Fractional wave equations `u_tt + P u = w` on the torus, solved through the
//! first-order reduction
//!
//! ```text
//! v = (A u, u_t),   A = (I + P)^{1/2},   dv/dt = K v + (0, w),
//! K = [[0, A], [-P A^{-1}, 0]].
//! ```
//!
//! `K + K*` reduces to `[[0, A^{-1}], [A^{-1}, 0]]`, an operator of order zero,
//! which is what makes the energy estimate close.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{sobolev_norm_sq, GridFunction, GridSpec};
use crate::quantize::{adjoint, spectral_norm, shell_operator_norms, DenseOperator, EigenDecomposition};
use crate::shells::{complete_shells, fit_order, ShellSample, SlopeFit, ZERO_FLOOR};

/// Classical RK4 is stable for `dt * rho(K) <= 2.6` on imaginary spectra.
pub const RK4_STABILITY_LIMIT: f64 = 2.6;
pub const STABILITY_SAFETY: f64 = 0.9;

/// Shell-norm growth slope of `K + K*` accepted as order zero.
pub const ZERO_ORDER_SLOPE: f64 = 0.15;

/// Fewest shells for the operator-level regression.
pub const MIN_OPERATOR_SHELLS: usize = 3;

/// Relative and absolute tolerances of the structural identities.
pub const STRUCTURAL_TOL: f64 = 1e-9;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Debug, PartialEq)]
pub struct CauchyData {
    pub f0: GridFunction,
    pub f1: GridFunction,
    /// Sobolev index.
    pub s: f64,
    /// Order of `P`.
    pub nu: f64,
    pub t_final: f64,
}

impl CauchyData {
    pub fn new(f0: GridFunction, f1: GridFunction, s: f64, nu: f64, t_final: f64) -> Result<Self> {
        if f0.spec() != f1.spec() || f0.channels() != 1 || f1.channels() != 1 {
            return Err(Error::ShapeMismatch("f0 and f1 must be scalar functions on one grid".into()));
        }
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::InvalidParameter(format!("nu must be positive, got {nu}")));
        }
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::InvalidParameter(format!("T must be positive, got {t_final}")));
        }
        if !s.is_finite() {
            return Err(Error::InvalidParameter("s must be finite".into()));
        }
        Ok(CauchyData { f0, f1, s, nu, t_final })
    }
}

/// Time-dependent source term.
pub trait Forcing: Send + Sync {
    fn channels(&self) -> usize;
    fn eval(&self, t: f64) -> GridFunction;
    /// Lets solvers skip evaluations.
    fn is_zero(&self) -> bool {
        false
    }
}

pub struct ZeroForcing {
    spec: GridSpec,
    channels: usize,
}

impl ZeroForcing {
    pub fn new(spec: GridSpec, channels: usize) -> Self {
        ZeroForcing { spec, channels }
    }
}

impl Forcing for ZeroForcing {
    fn channels(&self) -> usize {
        self.channels
    }

    fn eval(&self, _t: f64) -> GridFunction {
        GridFunction::zeros(self.spec, self.channels)
    }

    fn is_zero(&self) -> bool {
        true
    }
}

/// `w(t, x) = g(t) W(x)`.
pub struct SeparableForcing {
    profile: GridFunction,
    temporal: Box<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl SeparableForcing {
    pub fn new(profile: GridFunction, temporal: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        SeparableForcing {
            profile,
            temporal: Box::new(temporal),
        }
    }
}

impl Forcing for SeparableForcing {
    fn channels(&self) -> usize {
        self.profile.channels()
    }

    fn eval(&self, t: f64) -> GridFunction {
        self.profile.scale(Complex64::new((self.temporal)(t), 0.0))
    }
}

/// Forcing given by an arbitrary closure.
pub struct FnForcing<F> {
    channels: usize,
    f: F,
}

impl<F: Fn(f64) -> GridFunction + Send + Sync> FnForcing<F> {
    pub fn new(channels: usize, f: F) -> Self {
        FnForcing { channels, f }
    }
}

impl<F: Fn(f64) -> GridFunction + Send + Sync> Forcing for FnForcing<F> {
    fn channels(&self) -> usize {
        self.channels
    }

    fn eval(&self, t: f64) -> GridFunction {
        (self.f)(t)
    }
}

/// `(0, w)` from a scalar `w`.
struct Lifted<'a>(&'a dyn Forcing);

impl Forcing for Lifted<'_> {
    fn channels(&self) -> usize {
        2
    }

    fn eval(&self, t: f64) -> GridFunction {
        let w = self.0.eval(t);
        let zero = GridFunction::zeros(*w.spec(), 1);
        GridFunction::stack(&[&zero, &w]).expect("same grid")
    }

    fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
}

/// The reduction of `u_tt + P u = w` to `dv/dt = K v + (0, w)`.
#[derive(Clone, Debug)]
pub struct FirstOrderSystem {
    pub p: DenseOperator,
    /// `(I + P)^{1/2}`
    pub a: DenseOperator,
    /// `(I + P)^{-1/2}`
    pub ainv: DenseOperator,
    /// `[[0, A], [-P A^{-1}, 0]]` on two channels.
    pub k: DenseOperator,
    /// Spectral norm of `K + K*`.
    pub defect: f64,
    /// `P A^{-1}`
    lower: DMatrix<Complex64>,
    /// Eigenvectors of `I + P`.
    basis: DMatrix<Complex64>,
    /// Per-mode `(a, omega)` with `a^2 = 1 + omega^2` the eigenvalue of `I + P`.
    modes: Vec<(f64, f64)>,
    spectral_radius: f64,
}

pub fn build_first_order_system(p: &DenseOperator) -> Result<FirstOrderSystem> {
    if p.channels() != 1 {
        return Err(Error::ShapeMismatch("P must act on scalar functions".into()));
    }
    let p = if p.is_positive() {
        p.clone()
    } else {
        p.clone().check_positive()?
    };
    let spec = *p.spec();
    let ip = DenseOperator::identity(spec, 1).add(&p)?;
    let eig = EigenDecomposition::of(&ip)?;
    let a = eig.function(spec, 1, |l| Some(l.sqrt()), 0.5 * p.order())?;
    let ainv = eig.function(spec, 1, |l| (l > 0.0).then(|| 1.0 / l.sqrt()), -0.5 * p.order())?;
    let lower = p.matrix() * ainv.matrix();
    let n = spec.num_points();
    let mut km = DMatrix::zeros(2 * n, 2 * n);
    km.view_mut((0, n), (n, n)).copy_from(a.matrix());
    km.view_mut((n, 0), (n, n)).copy_from(&(-&lower));
    let k = DenseOperator::new(spec, 2, km, 0.5 * p.order())?;
    let sym = k.matrix() + k.matrix().adjoint();
    let defect = spectral_norm(&sym);
    let lambdas = eig.clamped_eigenvalues()?;
    let modes: Vec<(f64, f64)> = lambdas
        .iter()
        .map(|&l| (l.sqrt(), (l - 1.0).max(0.0).sqrt()))
        .collect();
    let spectral_radius = modes.iter().map(|m| m.1).fold(0.0, f64::max);
    Ok(FirstOrderSystem {
        p,
        a,
        ainv,
        k,
        defect,
        lower,
        basis: eig.eigenvectors,
        modes,
        spectral_radius,
    })
}

impl FirstOrderSystem {
    pub fn spec(&self) -> &GridSpec {
        self.p.spec()
    }

    /// `rho(K) = max sqrt(lambda(P))`.
    pub fn spectral_radius(&self) -> f64 {
        self.spectral_radius
    }

    fn apply_k(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        let n = self.spec().num_points();
        let top = self.a.matrix() * v.rows(n, n);
        let bottom = -(&self.lower * v.rows(0, n));
        let mut out = DVector::zeros(2 * n);
        out.rows_mut(0, n).copy_from(&top);
        out.rows_mut(n, n).copy_from(&bottom);
        out
    }

    /// `v -> E(t) v` with the exact per-mode propagator.
    fn propagate(&self, v: &DVector<Complex64>, t: f64) -> DVector<Complex64> {
        let n = self.spec().num_points();
        let c1 = self.basis.adjoint() * v.rows(0, n);
        let c2 = self.basis.adjoint() * v.rows(n, n);
        let mut d1 = DVector::zeros(n);
        let mut d2 = DVector::zeros(n);
        for (i, &(a, w)) in self.modes.iter().enumerate() {
            let z = w * t;
            let sinc = if z.abs() < 1e-8 { 1.0 - z * z / 6.0 } else { z.sin() / z };
            let cos = z.cos();
            d1[i] = c1[i] * cos + c2[i] * (a * t * sinc);
            d2[i] = c2[i] * cos - c1[i] * (w * w * t * sinc / a);
        }
        let mut out = DVector::zeros(2 * n);
        out.rows_mut(0, n).copy_from(&(&self.basis * d1));
        out.rows_mut(n, n).copy_from(&(&self.basis * d2));
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StructuralReport {
    /// `||A^2 - (I + P)|| / ||I + P||`
    pub square_defect: f64,
    /// `||A A^{-1} - I||`
    pub inverse_defect: f64,
    /// Largest entry of the diagonal blocks of `K`.
    pub diagonal_blocks: f64,
    /// `||(K + K*) - [[0, A^{-1}], [A^{-1}, 0]]|| / ||K + K*||`
    pub symmetrizer_defect: f64,
    pub passed: bool,
}

pub fn structural_identities(sys: &FirstOrderSystem) -> Result<StructuralReport> {
    let spec = *sys.spec();
    let n = spec.num_points();
    let ip = DenseOperator::identity(spec, 1).add(&sys.p)?;
    let a = sys.a.matrix();
    let square_defect = spectral_norm(&(a * a - ip.matrix())) / spectral_norm(ip.matrix());
    let inverse_defect = spectral_norm(&(a * sys.ainv.matrix() - DMatrix::<Complex64>::identity(n, n)));
    let k = sys.k.matrix();
    let diagonal_blocks = k
        .view((0, 0), (n, n))
        .iter()
        .chain(k.view((n, n), (n, n)).iter())
        .map(|v| v.norm())
        .fold(0.0, f64::max);
    let sym = k + k.adjoint();
    let mut expected = DMatrix::zeros(2 * n, 2 * n);
    expected.view_mut((0, n), (n, n)).copy_from(sys.ainv.matrix());
    expected.view_mut((n, 0), (n, n)).copy_from(sys.ainv.matrix());
    let symmetrizer_defect = spectral_norm(&(&sym - expected)) / spectral_norm(&sym).max(1.0);
    let passed = square_defect <= STRUCTURAL_TOL
        && inverse_defect <= STRUCTURAL_TOL
        && diagonal_blocks == 0.0;
    Ok(StructuralReport {
        square_defect,
        inverse_defect,
        diagonal_blocks,
        symmetrizer_defect,
        passed,
    })
}

#[derive(Clone, Debug)]
pub struct ZeroOrderReport {
    pub samples: Vec<ShellSample>,
    pub fit: SlopeFit,
    pub passed: bool,
}

/// Shell-wise norms of `K + K*` and their growth slope in `<2^k>`; passes when
/// the slope stays below [`ZERO_ORDER_SLOPE`].
pub fn check_zero_order_condition(sys: &FirstOrderSystem) -> Result<ZeroOrderReport> {
    zero_order_report(&sys.k)
}

/// As [`check_zero_order_condition`] for an arbitrary two-channel generator.
pub fn zero_order_report(k: &DenseOperator) -> Result<ZeroOrderReport> {
    let shells = complete_shells(k.spec().freq_cutoff());
    if shells.len() < MIN_OPERATOR_SHELLS {
        return Err(Error::TooFewShells {
            needed: MIN_OPERATOR_SHELLS,
            found: shells.len(),
        });
    }
    let sym = k.add(&adjoint(k))?;
    let norms = shell_operator_norms(&sym, &shells);
    let samples: Vec<ShellSample> = shells
        .iter()
        .zip(norms)
        .map(|(&shell, sup)| ShellSample {
            shell,
            sup,
            bracket: shell.inner_bracket(),
        })
        .collect();
    let fit = fit_order(&samples, ZERO_FLOOR, MIN_OPERATOR_SHELLS)?;
    let passed = fit.slope <= ZERO_ORDER_SLOPE;
    Ok(ZeroOrderReport { samples, fit, passed })
}

/// `[[0, A], [-P, 0]]`: the reduction without the `A^{-1}` factor.
pub fn negative_control_generator(sys: &FirstOrderSystem) -> Result<DenseOperator> {
    let spec = *sys.spec();
    let zero = DenseOperator::zeros(spec, 1);
    DenseOperator::from_blocks(
        2,
        &[zero.clone(), sys.a.clone(), sys.p.scale(Complex64::new(-1.0, 0.0)), zero],
    )
    .map(|k| k.with_order(sys.p.order()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Integrator {
    Rk4,
    ExpMidpoint,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub dt: f64,
    pub integrator: Integrator,
    /// Record every `record_stride` steps (the final time is always recorded).
    pub record_stride: usize,
    /// Split RK4 steps that violate the stability bound into equal substeps
    /// instead of failing.
    pub substep: bool,
}

impl SolverConfig {
    pub fn rk4(dt: f64) -> Self {
        SolverConfig {
            dt,
            integrator: Integrator::Rk4,
            record_stride: 1,
            substep: false,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    pub fn with_substeps(mut self) -> Self {
        self.substep = true;
        self
    }

    fn validate(&self, t_final: f64) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if self.dt > t_final {
            return Err(Error::InvalidParameter(format!(
                "dt = {} exceeds the horizon T = {t_final}",
                self.dt
            )));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidParameter("record stride must be positive".into()));
        }
        Ok(())
    }
}

fn stability_limit() -> f64 {
    RK4_STABILITY_LIMIT * STABILITY_SAFETY
}

fn to_vector(f: &GridFunction) -> DVector<Complex64> {
    DVector::from_column_slice(f.values())
}

fn to_function(spec: GridSpec, channels: usize, v: &DVector<Complex64>) -> GridFunction {
    GridFunction::new(spec, channels, v.as_slice().to_vec()).expect("state is finite")
}

fn eval_forcing(w: &dyn Forcing, t: f64, len: usize) -> DVector<Complex64> {
    if w.is_zero() {
        DVector::zeros(len)
    } else {
        to_vector(&w.eval(t))
    }
}

fn rk4_step(
    sys: &FirstOrderSystem,
    v: &DVector<Complex64>,
    t: f64,
    h: f64,
    w: &dyn Forcing,
) -> DVector<Complex64> {
    let len = v.len();
    let w0 = eval_forcing(w, t, len);
    let wm = eval_forcing(w, t + 0.5 * h, len);
    let w1 = eval_forcing(w, t + h, len);
    let h_c = Complex64::new(h, 0.0);
    let half = Complex64::new(0.5 * h, 0.0);
    let k1 = sys.apply_k(v) + &w0;
    let k2 = sys.apply_k(&(v + &k1 * half)) + &wm;
    let k3 = sys.apply_k(&(v + &k2 * half)) + &wm;
    let k4 = sys.apply_k(&(v + &k3 * h_c)) + &w1;
    v + (k1 + k2 * Complex64::new(2.0, 0.0) + k3 * Complex64::new(2.0, 0.0) + k4) * (h_c / 6.0)
}

fn exp_midpoint_step(
    sys: &FirstOrderSystem,
    v: &DVector<Complex64>,
    t: f64,
    h: f64,
    w: &dyn Forcing,
) -> DVector<Complex64> {
    let mut out = sys.propagate(v, h);
    if !w.is_zero() {
        let wm = eval_forcing(w, t + 0.5 * h, v.len());
        out += sys.propagate(&wm, 0.5 * h) * Complex64::new(h, 0.0);
    }
    out
}

/// One step of `dv/dt = K v + omega(t)` from `t` to `t + dt`.
///
/// RK4 steps fail with [`Error::Unstable`] when `dt * rho(K)` exceeds the
/// safety-reduced stability limit.
pub fn step(
    sys: &FirstOrderSystem,
    v: &GridFunction,
    t: f64,
    dt: f64,
    w: &dyn Forcing,
    integrator: Integrator,
) -> Result<GridFunction> {
    if v.channels() != 2 || v.spec() != sys.spec() || w.channels() != 2 {
        return Err(Error::ShapeMismatch("state and forcing must be two-channel".into()));
    }
    let x = to_vector(v);
    let out = match integrator {
        Integrator::Rk4 => {
            let product = dt * sys.spectral_radius;
            if product > stability_limit() {
                return Err(Error::Unstable {
                    product,
                    limit: stability_limit(),
                });
            }
            rk4_step(sys, &x, t, dt, w)
        }
        Integrator::ExpMidpoint => exp_midpoint_step(sys, &x, t, dt, w),
    };
    Ok(to_function(*sys.spec(), 2, &out))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EstimateForm {
    /// `||u||^2_{H^s} <= C e^{Ct} (||f0||^2_{H^s} + ||f1||^2_{H^{s-nu/2}} + int ||w||^2_{H^{s-nu/2}})`
    Wave,
    /// `||v||^2_{H^s} <= e^{Ct} (||v0||^2_{H^s} + int ||omega||^2_{H^s})`
    FirstOrder,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyLedger {
    pub form: EstimateForm,
    pub s: f64,
    pub times: Vec<f64>,
    /// `||u(t)||_{H^s}` (wave form) or `||v(t)||_{H^s}` (first-order form).
    pub u_norms: Vec<f64>,
    /// `||u_t(t)||_{H^{s - nu/2}}`; zero-filled in first-order form.
    pub ut_norms: Vec<f64>,
    /// Running integral of the squared forcing norm.
    pub forcing_integral: Vec<f64>,
    /// `||u_t||^2_{L^2} + Re (P u, u)`
    pub conserved_energy: Vec<f64>,
    /// Squared data norm on the right-hand side of the estimate.
    pub data_norm_sq: f64,
    pub fitted_c: Option<f64>,
}

impl EnergyLedger {
    /// `C e^{Ct} (data + forcing)` or `e^{Ct} (data + forcing)` at the `i`-th time.
    pub fn bound(&self, i: usize, c: f64) -> f64 {
        let rhs = self.data_norm_sq + self.forcing_integral[i];
        let t = self.times[i];
        match self.form {
            EstimateForm::Wave => c * (c * t).exp() * rhs,
            EstimateForm::FirstOrder => (c * t).exp() * rhs,
        }
    }

    /// CSV rows `t,u_norm,ut_norm,forcing_integral,energy,bound_rhs`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "t,u_norm,ut_norm,forcing_integral,energy,bound_rhs")?;
        let c = self.fitted_c.unwrap_or(f64::NAN);
        for i in 0..self.times.len() {
            writeln!(
                out,
                "{:.10e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.times[i],
                self.u_norms[i],
                self.ut_norms[i],
                self.forcing_integral[i],
                self.conserved_energy[i],
                self.bound(i, c)
            )?;
        }
        Ok(())
    }
}

/// Recorded trajectory of `v` with its ledger.
#[derive(Clone, Debug)]
pub struct FirstOrderSolution {
    pub times: Vec<f64>,
    pub states: Vec<GridFunction>,
    pub ledger: EnergyLedger,
    /// RK4 substeps per macro step (1 unless substepping was requested and needed).
    pub substeps: usize,
    /// Macro step actually used, `T / ceil(T / dt)`.
    pub dt: f64,
}

#[derive(Clone, Debug)]
pub struct WaveSolution {
    pub times: Vec<f64>,
    pub u: Vec<GridFunction>,
    pub ut: Vec<GridFunction>,
    pub ledger: EnergyLedger,
    pub substeps: usize,
    pub dt: f64,
}

struct Trajectory {
    times: Vec<f64>,
    states: Vec<GridFunction>,
    forcing_integral: Vec<f64>,
    substeps: usize,
    dt: f64,
}

fn l2_sq(v: &DVector<Complex64>, npts: usize) -> f64 {
    v.norm_squared() / npts as f64
}

/// Shared time loop; `forcing_norm_sq` weighs the forcing for the ledger integral.
fn integrate(
    sys: &FirstOrderSystem,
    v0: &GridFunction,
    w: &dyn Forcing,
    t_final: f64,
    cfg: &SolverConfig,
    forcing_norm_sq: &dyn Fn(&GridFunction) -> f64,
) -> Result<Trajectory> {
    cfg.validate(t_final)?;
    let spec = *sys.spec();
    if v0.channels() != 2 || v0.spec() != &spec || w.channels() != 2 {
        return Err(Error::ShapeMismatch("state and forcing must be two-channel on the system grid".into()));
    }
    let npts = spec.num_points();
    let steps = (t_final / cfg.dt - 1e-9).ceil().max(1.0) as usize;
    let h = t_final / steps as f64;
    let substeps = match cfg.integrator {
        Integrator::Rk4 => {
            let product = h * sys.spectral_radius;
            if product <= stability_limit() {
                1
            } else if cfg.substep {
                (product / stability_limit()).ceil() as usize
            } else {
                return Err(Error::Unstable {
                    product,
                    limit: stability_limit(),
                });
            }
        }
        Integrator::ExpMidpoint => 1,
    };
    let hs = h / substeps as f64;

    let mut v = to_vector(v0);
    let v0_sq = l2_sq(&v, npts);
    let growth = sys.defect + 1.0;
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![v0.clone()],
        forcing_integral: vec![0.0],
        substeps,
        dt: h,
    };
    let mut integral = 0.0;
    let mut l2_integral = 0.0;
    let weigh = |t: f64| -> (f64, f64) {
        if w.is_zero() {
            (0.0, 0.0)
        } else {
            let f = w.eval(t);
            let l2 = f.values().iter().map(|z| z.norm_sqr()).sum::<f64>() / npts as f64;
            (forcing_norm_sq(&f), l2)
        }
    };
    let mut left = weigh(0.0);
    for n in 0..steps {
        let t = n as f64 * h;
        for j in 0..substeps {
            let ts = t + j as f64 * hs;
            v = match cfg.integrator {
                Integrator::Rk4 => rk4_step(sys, &v, ts, hs, w),
                Integrator::ExpMidpoint => exp_midpoint_step(sys, &v, ts, hs, w),
            };
        }
        let mid = weigh(t + 0.5 * h);
        let right = weigh(t + h);
        integral += h / 6.0 * (left.0 + 4.0 * mid.0 + right.0);
        l2_integral += h / 6.0 * (left.1 + 4.0 * mid.1 + right.1);
        left = right;

        let t_next = (n + 1) as f64 * h;
        let norm_sq = l2_sq(&v, npts);
        if !norm_sq.is_finite() {
            return Err(Error::NonFinite("solution state"));
        }
        let envelope = 10.0 * (growth * t_next).exp() * (v0_sq + l2_integral) + 1e-24;
        if norm_sq > envelope {
            return Err(Error::Diverged {
                time: t_next,
                norm_sq,
                envelope,
            });
        }
        if (n + 1) % cfg.record_stride == 0 || n + 1 == steps {
            traj.times.push(t_next);
            traj.states.push(to_function(spec, 2, &v));
            traj.forcing_integral.push(integral);
        }
    }
    Ok(traj)
}

fn conserved_energy(sys: &FirstOrderSystem, u: &GridFunction, ut: &GridFunction) -> Result<f64> {
    let pu = sys.p.apply(u)?;
    let kinetic = crate::grid::l2_inner_product(ut, ut)?.re;
    let potential = crate::grid::l2_inner_product(&pu, u)?.re;
    Ok(kinetic + potential)
}

fn split(sys: &FirstOrderSystem, v: &GridFunction) -> Result<(GridFunction, GridFunction)> {
    let u = sys.ainv.apply(&v.extract_channel(0))?;
    Ok((u, v.extract_channel(1)))
}

/// Solves `dv/dt = K v + omega` on `[0, T]` and records `||v||_{H^s}`.
pub fn solve_first_order(
    sys: &FirstOrderSystem,
    v0: &GridFunction,
    w: &dyn Forcing,
    t_final: f64,
    s: f64,
    cfg: &SolverConfig,
) -> Result<FirstOrderSolution> {
    let traj = integrate(sys, v0, w, t_final, cfg, &|f| sobolev_norm_sq(f, s))?;
    let mut ledger = EnergyLedger {
        form: EstimateForm::FirstOrder,
        s,
        times: traj.times.clone(),
        u_norms: Vec::new(),
        ut_norms: vec![0.0; traj.times.len()],
        forcing_integral: traj.forcing_integral,
        conserved_energy: Vec::new(),
        data_norm_sq: sobolev_norm_sq(v0, s),
        fitted_c: None,
    };
    for v in &traj.states {
        ledger.u_norms.push(sobolev_norm_sq(v, s).sqrt());
        let (u, ut) = split(sys, v)?;
        ledger.conserved_energy.push(conserved_energy(sys, &u, &ut)?);
    }
    ledger.fitted_c = verify_energy_estimate(&ledger, 0.0).c_star;
    Ok(FirstOrderSolution {
        times: traj.times,
        states: traj.states,
        ledger,
        substeps: traj.substeps,
        dt: traj.dt,
    })
}

/// Solves `u_tt + P u = w`, `u(0) = f0`, `u_t(0) = f1` through `v0 = (A f0, f1)`.
pub fn solve_wave(
    sys: &FirstOrderSystem,
    data: &CauchyData,
    w: &dyn Forcing,
    cfg: &SolverConfig,
) -> Result<WaveSolution> {
    if data.f0.spec() != sys.spec() {
        return Err(Error::ShapeMismatch("Cauchy data and operator live on different grids".into()));
    }
    if w.channels() != 1 {
        return Err(Error::ShapeMismatch("wave forcing must be scalar".into()));
    }
    let s = data.s;
    let weak = s - 0.5 * data.nu;
    let v0 = GridFunction::stack(&[&sys.a.apply(&data.f0)?, &data.f1])?;
    let lifted = Lifted(w);
    let traj = integrate(sys, &v0, &lifted, data.t_final, cfg, &|f| {
        sobolev_norm_sq(&f.extract_channel(1), weak)
    })?;
    let mut ledger = EnergyLedger {
        form: EstimateForm::Wave,
        s,
        times: traj.times.clone(),
        u_norms: Vec::new(),
        ut_norms: Vec::new(),
        forcing_integral: traj.forcing_integral,
        conserved_energy: Vec::new(),
        data_norm_sq: sobolev_norm_sq(&data.f0, s) + sobolev_norm_sq(&data.f1, weak),
        fitted_c: None,
    };
    let mut us = Vec::with_capacity(traj.states.len());
    let mut uts = Vec::with_capacity(traj.states.len());
    for v in &traj.states {
        let (u, ut) = split(sys, v)?;
        ledger.u_norms.push(sobolev_norm_sq(&u, s).sqrt());
        ledger.ut_norms.push(sobolev_norm_sq(&ut, weak).sqrt());
        ledger.conserved_energy.push(conserved_energy(sys, &u, &ut)?);
        us.push(u);
        uts.push(ut);
    }
    ledger.fitted_c = verify_energy_estimate(&ledger, 0.0).c_star;
    Ok(WaveSolution {
        times: traj.times,
        u: us,
        ut: uts,
        ledger,
        substeps: traj.substeps,
        dt: traj.dt,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyReport {
    pub c: f64,
    pub holds: bool,
    /// `min_t (bound - lhs)` at the supplied `C`.
    pub margin: f64,
    /// Smallest `C` (to within `1e-3`) for which the estimate holds; `None` if no
    /// finite `C` below `1e6` works.
    pub c_star: Option<f64>,
}

const C_TOLERANCE: f64 = 1e-3;
const C_CEILING: f64 = 1e6;

fn estimate_holds(ledger: &EnergyLedger, c: f64) -> bool {
    (0..ledger.times.len()).all(|i| {
        let lhs = ledger.u_norms[i] * ledger.u_norms[i];
        let bound = ledger.bound(i, c);
        lhs <= bound * (1.0 + 1e-12)
    })
}

/// Checks the energy estimate at every recorded time for the given `C`, and
/// bisects for the smallest admissible `C`.
pub fn verify_energy_estimate(ledger: &EnergyLedger, c: f64) -> EnergyReport {
    let margin = (0..ledger.times.len())
        .map(|i| ledger.bound(i, c) - ledger.u_norms[i] * ledger.u_norms[i])
        .fold(f64::INFINITY, f64::min);
    let holds = estimate_holds(ledger, c);
    let c_star = if estimate_holds(ledger, 0.0) {
        Some(0.0)
    } else {
        let mut hi = 1.0;
        while !estimate_holds(ledger, hi) && hi < C_CEILING {
            hi *= 2.0;
        }
        if !estimate_holds(ledger, hi) {
            None
        } else {
            let mut lo = 0.0;
            while hi - lo > C_TOLERANCE {
                let mid = 0.5 * (lo + hi);
                if estimate_holds(ledger, mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            Some(hi)
        }
    };
    EnergyReport {
        c,
        holds,
        margin,
        c_star,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DriftReport {
    pub initial: f64,
    pub max_abs_drift: f64,
    /// `max |E(t) - E(0)| / E(0)`; `None` when `E(0) = 0`.
    pub relative: Option<f64>,
}

/// Drift of `E(t) = ||u_t||^2 + Re (P u, u)` along a trajectory.
pub fn conserved_energy_probe(p: &DenseOperator, u: &[GridFunction], ut: &[GridFunction]) -> Result<DriftReport> {
    if u.len() != ut.len() || u.is_empty() {
        return Err(Error::ShapeMismatch("trajectory needs matching, non-empty u and u_t".into()));
    }
    let mut energies = Vec::with_capacity(u.len());
    for (a, b) in u.iter().zip(ut) {
        let pu = p.apply(a)?;
        let e = crate::grid::l2_inner_product(b, b)?.re + crate::grid::l2_inner_product(&pu, a)?.re;
        energies.push(e);
    }
    Ok(drift(&energies))
}

/// As [`conserved_energy_probe`] from the energies stored in a ledger.
pub fn ledger_drift(ledger: &EnergyLedger) -> DriftReport {
    drift(&ledger.conserved_energy)
}

fn drift(energies: &[f64]) -> DriftReport {
    let e0 = energies[0];
    let max_abs_drift = energies.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max);
    DriftReport {
        initial: e0,
        max_abs_drift,
        relative: (e0 != 0.0).then(|| max_abs_drift / e0.abs()),
    }
}

/// `u*(t) = cos(t) phi` solves `u_tt + P u = cos(t) (P phi - phi)` with `u(0) = phi`, `u_t(0) = 0`.
pub fn manufactured_cosine(p: &DenseOperator, phi: &GridFunction) -> Result<SeparableForcing> {
    let profile = p.apply(phi)?.sub(phi)?;
    Ok(SeparableForcing::new(profile, f64::cos))
}

/// Relative L^2 distance `||a - b|| / ||b||` (absolute when `b = 0`).
pub fn relative_l2_error(a: &GridFunction, b: &GridFunction) -> Result<f64> {
    let diff = a.sub(b)?.l2_norm();
    let scale = b.l2_norm();
    Ok(if scale > 0.0 { diff / scale } else { diff })
}

/// Zero state helper.
pub fn zero_state(spec: GridSpec) -> GridFunction {
    GridFunction::new(spec, 2, vec![ZERO; 2 * spec.num_points()]).expect("zeros are finite")
}
