//! Discretization of the torus `T^n = [0,1)^n` and of the frequency lattice.
//!
//! A [`GridSpec`] fixes `G` sample points per axis and a symmetric lattice
//! truncation `L = { xi : max_i |xi_i| <= N }` with `2N + 1 <= G`, so every
//! trigonometric polynomial with frequencies in `L` is represented without
//! aliasing. The forward transform is normalized as a grid mean, which makes
//! `e_xi(x) = exp(2 pi i x . xi)` have a unit coefficient.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 3;

/// A lattice point; components beyond the grid dimension are zero.
pub type Freq = [i64; MAX_DIM];

/// Builds a [`Freq`] from a slice of at most three components.
pub fn freq(components: &[i64]) -> Freq {
    let mut out = [0; MAX_DIM];
    out[..components.len()].copy_from_slice(components);
    out
}

/// The discrete Japanese bracket `<xi> = (1 + |xi|^2)^(1/2)`.
pub fn japanese_bracket(xi: &[i64]) -> f64 {
    (1.0 + norm_sq(xi) as f64).sqrt()
}

pub fn norm_sq(xi: &[i64]) -> i64 {
    xi.iter().map(|v| v * v).sum()
}

/// Cube `[-radius, radius]^dim` of integer frequencies, flattened row-major.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Lattice {
    dim: usize,
    radius: usize,
}

impl Lattice {
    pub fn new(dim: usize, radius: usize) -> Self {
        Lattice { dim, radius }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn len(&self) -> usize {
        self.side().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, xi: &Freq) -> bool {
        let r = self.radius as i64;
        xi[..self.dim].iter().all(|v| v.abs() <= r) && xi[self.dim..].iter().all(|&v| v == 0)
    }

    pub fn index(&self, xi: &Freq) -> Option<usize> {
        if !self.contains(xi) {
            return None;
        }
        let side = self.side() as i64;
        let r = self.radius as i64;
        let mut idx = 0i64;
        for &v in &xi[..self.dim] {
            idx = idx * side + (v + r);
        }
        Some(idx as usize)
    }

    pub fn point(&self, mut idx: usize) -> Freq {
        let side = self.side();
        let mut out = [0; MAX_DIM];
        for axis in (0..self.dim).rev() {
            out[axis] = (idx % side) as i64 - self.radius as i64;
            idx /= side;
        }
        out
    }

    pub fn points(&self) -> impl Iterator<Item = Freq> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }
}

/// Spatial grid and frequency truncation shared by every discrete object.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridSpec {
    dim: usize,
    points_per_axis: usize,
    freq_cutoff: usize,
}

impl GridSpec {
    pub fn new(dim: usize, points_per_axis: usize, freq_cutoff: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidGrid(format!(
                "dimension must be in 1..={MAX_DIM}, got {dim}"
            )));
        }
        if points_per_axis == 0 || !points_per_axis.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be a positive even integer, got {points_per_axis}"
            )));
        }
        if freq_cutoff == 0 {
            return Err(Error::InvalidGrid("frequency cutoff must be positive".into()));
        }
        if 2 * freq_cutoff + 1 > points_per_axis {
            return Err(Error::InvalidGrid(format!(
                "2N+1 <= G violated: N = {freq_cutoff}, G = {points_per_axis}"
            )));
        }
        Ok(GridSpec {
            dim,
            points_per_axis,
            freq_cutoff,
        })
    }

    /// Largest admissible cutoff for a given resolution, `N = G/2 - 1`.
    pub fn with_max_cutoff(dim: usize, points_per_axis: usize) -> Result<Self> {
        GridSpec::new(dim, points_per_axis, (points_per_axis / 2).saturating_sub(1))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn freq_cutoff(&self) -> usize {
        self.freq_cutoff
    }

    /// Same grid, smaller lattice. Used to discard boundary frequencies.
    pub fn with_cutoff(&self, freq_cutoff: usize) -> Result<Self> {
        GridSpec::new(self.dim, self.points_per_axis, freq_cutoff)
    }

    pub fn num_points(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    pub fn lattice(&self) -> Lattice {
        Lattice::new(self.dim, self.freq_cutoff)
    }

    pub fn grid_point(&self, mut idx: usize) -> [usize; MAX_DIM] {
        let g = self.points_per_axis;
        let mut out = [0; MAX_DIM];
        for axis in (0..self.dim).rev() {
            out[axis] = idx % g;
            idx /= g;
        }
        out
    }

    pub fn coordinates(&self, idx: usize) -> [f64; MAX_DIM] {
        let j = self.grid_point(idx);
        let g = self.points_per_axis as f64;
        let mut out = [0.0; MAX_DIM];
        for axis in 0..self.dim {
            out[axis] = j[axis] as f64 / g;
        }
        out
    }

    /// FFT bin holding frequency `xi` (each component reduced mod G).
    pub(crate) fn bin(&self, xi: &Freq) -> usize {
        let g = self.points_per_axis as i64;
        let mut idx = 0i64;
        for &v in &xi[..self.dim] {
            idx = idx * g + v.rem_euclid(g);
        }
        idx as usize
    }

    /// Signed frequency of an FFT bin, in `[-G/2, G/2)`.
    pub(crate) fn bin_frequency(&self, idx: usize) -> Freq {
        let g = self.points_per_axis as i64;
        let j = self.grid_point(idx);
        let mut out = [0; MAX_DIM];
        for axis in 0..self.dim {
            let k = j[axis] as i64;
            out[axis] = if k >= g / 2 { k - g } else { k };
        }
        out
    }

    /// `(x_j . xi) * G mod G`, the exponent of `exp(2 pi i x_j . xi)` in units of `1/G`.
    pub(crate) fn phase_index(&self, point: usize, xi: &Freq) -> usize {
        let g = self.points_per_axis as i64;
        let j = self.grid_point(point);
        let mut acc = 0i64;
        for axis in 0..self.dim {
            acc += j[axis] as i64 * xi[axis];
        }
        acc.rem_euclid(g) as usize
    }

    pub(crate) fn unit_roots(&self) -> Vec<Complex64> {
        unit_roots(self.points_per_axis)
    }
}

/// `exp(2 pi i k / g)` for `k = 0..g`, evaluated exactly at the symmetry points.
pub(crate) fn unit_roots(g: usize) -> Vec<Complex64> {
    (0..g)
        .map(|k| {
            if 8 * k % g == 0 {
                // multiples of pi/4 are tabulated to avoid sin(pi) != 0 noise
                let octant = 8 * k / g;
                let h = std::f64::consts::FRAC_1_SQRT_2;
                match octant {
                    0 => Complex64::new(1.0, 0.0),
                    1 => Complex64::new(h, h),
                    2 => Complex64::new(0.0, 1.0),
                    3 => Complex64::new(-h, h),
                    4 => Complex64::new(-1.0, 0.0),
                    5 => Complex64::new(-h, -h),
                    6 => Complex64::new(0.0, -1.0),
                    _ => Complex64::new(h, -h),
                }
            } else {
                let theta = 2.0 * std::f64::consts::PI * k as f64 / g as f64;
                Complex64::new(theta.cos(), theta.sin())
            }
        })
        .collect()
}

/// In-place unnormalized n-dimensional FFT over a `G^n` block.
pub(crate) struct NdFft {
    dim: usize,
    g: usize,
    plan: Arc<dyn Fft<f64>>,
}

impl NdFft {
    pub fn new(spec: &GridSpec, direction: FftDirection) -> Self {
        let mut planner = FftPlanner::new();
        NdFft {
            dim: spec.dim,
            g: spec.points_per_axis,
            plan: planner.plan_fft(spec.points_per_axis, direction),
        }
    }

    pub fn process(&self, data: &mut [Complex64]) {
        let g = self.g;
        if self.dim == 1 {
            self.plan.process(data);
            return;
        }
        let total = data.len();
        let mut line = vec![Complex64::new(0.0, 0.0); g];
        for axis in 0..self.dim {
            let stride = g.pow((self.dim - 1 - axis) as u32);
            let block = stride * g;
            for outer in (0..total).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    for (k, slot) in line.iter_mut().enumerate() {
                        *slot = data[base + k * stride];
                    }
                    self.plan.process(&mut line);
                    for (k, v) in line.iter().enumerate() {
                        data[base + k * stride] = *v;
                    }
                }
            }
        }
    }
}

/// Sampled periodic function with `channels` components, channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    spec: GridSpec,
    channels: usize,
    values: Vec<Complex64>,
}

impl GridFunction {
    pub fn new(spec: GridSpec, channels: usize, values: Vec<Complex64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::ShapeMismatch("at least one channel required".into()));
        }
        if values.len() != channels * spec.num_points() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} values, got {}",
                channels * spec.num_points(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite("grid function"));
        }
        Ok(GridFunction {
            spec,
            channels,
            values,
        })
    }

    pub fn zeros(spec: GridSpec, channels: usize) -> Self {
        GridFunction {
            spec,
            channels,
            values: vec![Complex64::new(0.0, 0.0); channels * spec.num_points()],
        }
    }

    /// Samples `f(x)` into a single channel.
    pub fn from_fn(spec: GridSpec, f: impl Fn(&[f64]) -> Complex64) -> Result<Self> {
        let values = (0..spec.num_points())
            .map(|i| f(&spec.coordinates(i)[..spec.dim]))
            .collect();
        GridFunction::new(spec, 1, values)
    }

    /// Stacks single- or multi-channel functions on the same grid.
    pub fn stack(parts: &[&GridFunction]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::ShapeMismatch("nothing to stack".into()))?;
        let mut values = Vec::new();
        let mut channels = 0;
        for p in parts {
            if p.spec != first.spec {
                return Err(Error::ShapeMismatch("grid specs differ".into()));
            }
            values.extend_from_slice(&p.values);
            channels += p.channels;
        }
        Ok(GridFunction {
            spec: first.spec,
            channels,
            values,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn channel(&self, c: usize) -> &[Complex64] {
        let n = self.spec.num_points();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn extract_channel(&self, c: usize) -> GridFunction {
        GridFunction {
            spec: self.spec,
            channels: 1,
            values: self.channel(c).to_vec(),
        }
    }

    pub fn conj(&self) -> GridFunction {
        self.map(|v| v.conj())
    }

    pub fn scale(&self, s: Complex64) -> GridFunction {
        self.map(|v| v * s)
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> GridFunction {
        GridFunction {
            spec: self.spec,
            channels: self.channels,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add(&self, other: &GridFunction) -> Result<GridFunction> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.zip(other, |a, b| a - b)
    }

    fn zip(
        &self,
        other: &GridFunction,
        f: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Result<GridFunction> {
        check_same_shape(self, other)?;
        Ok(GridFunction {
            spec: self.spec,
            channels: self.channels,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Grid-mean L^2 norm.
    pub fn l2_norm(&self) -> f64 {
        let n = self.spec.num_points() as f64;
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() / n).sqrt()
    }
}

fn check_same_shape(u: &GridFunction, v: &GridFunction) -> Result<()> {
    if u.spec != v.spec || u.channels != v.channels {
        return Err(Error::ShapeMismatch(format!(
            "({:?}, {} ch) vs ({:?}, {} ch)",
            u.spec, u.channels, v.spec, v.channels
        )));
    }
    Ok(())
}

/// Fourier coefficients on the truncated lattice, one block of `|L|` per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralCoeffs {
    spec: GridSpec,
    channels: usize,
    coeffs: Vec<Complex64>,
}

impl SpectralCoeffs {
    pub fn new(spec: GridSpec, channels: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        if channels == 0 || coeffs.len() != channels * spec.lattice().len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} coefficients over {} channels, got {}",
                channels * spec.lattice().len(),
                channels,
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite("spectral coefficients"));
        }
        Ok(SpectralCoeffs {
            spec,
            channels,
            coeffs,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn channel(&self, c: usize) -> &[Complex64] {
        let n = self.spec.lattice().len();
        &self.coeffs[c * n..(c + 1) * n]
    }

    /// Coefficient at `xi`, or zero if `xi` is outside the lattice.
    pub fn get(&self, xi: &Freq, channel: usize) -> Complex64 {
        match self.spec.lattice().index(xi) {
            Some(i) => self.channel(channel)[i],
            None => Complex64::new(0.0, 0.0),
        }
    }
}

/// `coeffs(xi) = G^{-n} sum_j exp(-2 pi i x_j . xi) u(x_j)` for `xi` in `L`.
pub fn forward_transform(u: &GridFunction) -> SpectralCoeffs {
    let spec = u.spec;
    let fft = NdFft::new(&spec, FftDirection::Forward);
    let lattice = spec.lattice();
    let bins: Vec<usize> = lattice.points().map(|xi| spec.bin(&xi)).collect();
    let scale = 1.0 / spec.num_points() as f64;
    let mut coeffs = Vec::with_capacity(u.channels * lattice.len());
    for c in 0..u.channels {
        let mut buf = u.channel(c).to_vec();
        fft.process(&mut buf);
        coeffs.extend(bins.iter().map(|&b| buf[b] * scale));
    }
    SpectralCoeffs {
        spec,
        channels: u.channels,
        coeffs,
    }
}

/// `u(x_j) = sum_{xi in L} exp(2 pi i x_j . xi) c(xi)`.
pub fn inverse_transform(c: &SpectralCoeffs) -> GridFunction {
    let spec = c.spec;
    let fft = NdFft::new(&spec, FftDirection::Inverse);
    let lattice = spec.lattice();
    let n = spec.num_points();
    let bins: Vec<usize> = lattice.points().map(|xi| spec.bin(&xi)).collect();
    let mut values = Vec::with_capacity(c.channels * n);
    for ch in 0..c.channels {
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for (&b, &v) in bins.iter().zip(c.channel(ch)) {
            buf[b] = v;
        }
        fft.process(&mut buf);
        values.extend(buf);
    }
    GridFunction {
        spec,
        channels: c.channels,
        values,
    }
}

/// Truncated-lattice Sobolev norm; channels combine as a root sum of squares.
pub fn sobolev_norm(u: &GridFunction, s: f64) -> f64 {
    sobolev_norm_sq(u, s).sqrt()
}

pub fn sobolev_norm_sq(u: &GridFunction, s: f64) -> f64 {
    let coeffs = forward_transform(u);
    let lattice = u.spec.lattice();
    let weights: Vec<f64> = lattice
        .points()
        .map(|xi| (1.0 + norm_sq(&xi) as f64).powf(s))
        .collect();
    (0..u.channels)
        .map(|c| {
            coeffs
                .channel(c)
                .iter()
                .zip(&weights)
                .map(|(v, w)| w * v.norm_sqr())
                .sum::<f64>()
        })
        .sum()
}

/// Grid-mean inner product, conjugate-linear in the second argument.
pub fn l2_inner_product(u: &GridFunction, v: &GridFunction) -> Result<Complex64> {
    check_same_shape(u, v)?;
    let sum: Complex64 = u
        .values
        .iter()
        .zip(&v.values)
        .map(|(a, b)| a * b.conj())
        .sum();
    Ok(sum / u.spec.num_points() as f64)
}

/// Samples of `e_xi0` placed in channel `slot` of a `channels`-component function.
pub fn make_exponential(
    spec: &GridSpec,
    xi0: &Freq,
    channels: usize,
    slot: usize,
) -> Result<GridFunction> {
    if !spec.lattice().contains(xi0) {
        return Err(Error::OutsideLattice(xi0[..spec.dim].to_vec()));
    }
    if slot >= channels {
        return Err(Error::ShapeMismatch(format!(
            "channel slot {slot} out of range for {channels} channels"
        )));
    }
    let roots = spec.unit_roots();
    let n = spec.num_points();
    let mut values = vec![Complex64::new(0.0, 0.0); channels * n];
    for p in 0..n {
        values[slot * n + p] = roots[spec.phase_index(p, xi0)];
    }
    Ok(GridFunction {
        spec: *spec,
        channels,
        values,
    })
}

/// Largest coefficient magnitude outside the band `max_i |xi_i| <= band`, over all FFT bins.
pub fn spectral_tail(u: &GridFunction, band: usize) -> f64 {
    let spec = u.spec;
    let fft = NdFft::new(&spec, FftDirection::Forward);
    let scale = 1.0 / spec.num_points() as f64;
    let mut tail: f64 = 0.0;
    for c in 0..u.channels {
        let mut buf = u.channel(c).to_vec();
        fft.process(&mut buf);
        for (b, v) in buf.iter().enumerate() {
            let xi = spec.bin_frequency(b);
            if xi.iter().any(|k| k.unsigned_abs() as usize > band) {
                tail = tail.max(v.norm() * scale);
            }
        }
    }
    tail
}
