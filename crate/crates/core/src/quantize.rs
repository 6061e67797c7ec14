//! Toroidal quantization `Op(a) f(x) = sum_{xi in L} exp(2 pi i x . xi) a(x, xi) f^(xi)`,
//! dense finite sections of the resulting operators, and Hermitian functional
//! calculus on them.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftDirection;

use crate::error::{Error, Result};
use crate::grid::{forward_transform, GridFunction, GridSpec, NdFft};
use crate::shells::Shell;
use crate::symbol::{MatrixSymbol, Provenance, ScalarSymbol, SymbolClass};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Hermitian and eigenvalue checks use `1e-10 * max(1, scale)`.
pub const RELATIVE_TOL: f64 = 1e-10;

fn tolerance(scale: f64) -> f64 {
    RELATIVE_TOL * scale.max(1.0)
}

/// Finite section of an operator acting on `channels` stacked grid functions.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseOperator {
    spec: GridSpec,
    channels: usize,
    matrix: DMatrix<Complex64>,
    order: f64,
    hermitian: bool,
    positive: bool,
}

impl DenseOperator {
    pub fn new(spec: GridSpec, channels: usize, matrix: DMatrix<Complex64>, order: f64) -> Result<Self> {
        let n = channels * spec.num_points();
        if channels == 0 || matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::ShapeMismatch(format!(
                "operator on {channels} channels needs a {n}x{n} matrix, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite("operator matrix"));
        }
        let mut op = DenseOperator {
            spec,
            channels,
            matrix,
            order,
            hermitian: false,
            positive: false,
        };
        op.hermitian = op.hermitian_defect() <= tolerance(op.max_abs());
        Ok(op)
    }

    pub fn identity(spec: GridSpec, channels: usize) -> Self {
        let n = channels * spec.num_points();
        DenseOperator {
            spec,
            channels,
            matrix: DMatrix::identity(n, n),
            order: 0.0,
            hermitian: true,
            positive: true,
        }
    }

    pub fn zeros(spec: GridSpec, channels: usize) -> Self {
        let n = channels * spec.num_points();
        DenseOperator {
            spec,
            channels,
            matrix: DMatrix::zeros(n, n),
            order: f64::NEG_INFINITY,
            hermitian: true,
            positive: true,
        }
    }

    /// Orthogonal projector onto trigonometric polynomials with frequencies in `L`.
    pub fn band_projector(spec: GridSpec, channels: usize) -> Self {
        let one = ScalarSymbol::from_indexed_fn(
            spec,
            SymbolClass::classical(0.0),
            0,
            Provenance::ClosedForm("one".into()),
            |_, _| ONE,
        )
        .expect("constant symbol is finite");
        let block = materialize(&one);
        let mut op = DenseOperator::block_diagonal(&vec![block; channels]).expect("blocks agree");
        op.positive = true;
        op
    }

    /// Assembles an `l x l` block operator from single-channel blocks in row-major order.
    pub fn from_blocks(size: usize, blocks: &[DenseOperator]) -> Result<Self> {
        if size == 0 || blocks.len() != size * size {
            return Err(Error::ShapeMismatch(format!(
                "{size}x{size} block operator needs {} blocks, got {}",
                size * size,
                blocks.len()
            )));
        }
        let spec = blocks[0].spec;
        if blocks.iter().any(|b| b.spec != spec || b.channels != 1) {
            return Err(Error::ShapeMismatch("blocks must be single-channel on one grid".into()));
        }
        let n = spec.num_points();
        let mut m = DMatrix::zeros(size * n, size * n);
        for i in 0..size {
            for j in 0..size {
                m.view_mut((i * n, j * n), (n, n))
                    .copy_from(&blocks[i * size + j].matrix);
            }
        }
        let order = blocks.iter().map(|b| b.order).fold(f64::NEG_INFINITY, f64::max);
        DenseOperator::new(spec, size, m, order)
    }

    pub fn block_diagonal(blocks: &[DenseOperator]) -> Result<Self> {
        let size = blocks.len();
        if size == 0 {
            return Err(Error::ShapeMismatch("no diagonal blocks".into()));
        }
        let spec = blocks[0].spec;
        let zero = DenseOperator::zeros(spec, 1);
        let mut all = Vec::with_capacity(size * size);
        for i in 0..size {
            for j in 0..size {
                all.push(if i == j { blocks[i].clone() } else { zero.clone() });
            }
        }
        DenseOperator::from_blocks(size, &all)
    }

    /// Single-channel block `(i, j)`.
    pub fn block(&self, i: usize, j: usize) -> DenseOperator {
        let n = self.spec.num_points();
        let m = self.matrix.view((i * n, j * n), (n, n)).into_owned();
        DenseOperator::new(self.spec, 1, m, self.order).expect("block of a valid operator")
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    pub fn with_order(mut self, order: f64) -> Self {
        self.order = order;
        self
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn is_positive(&self) -> bool {
        self.positive
    }

    /// `max |M - M*|`
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.matrix.nrows();
        let mut worst: f64 = 0.0;
        for j in 0..n {
            for i in 0..=j {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.matrix.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        if f.spec() != &self.spec || f.channels() != self.channels {
            return Err(Error::ShapeMismatch(format!(
                "operator on {} channels applied to a {}-channel function",
                self.channels,
                f.channels()
            )));
        }
        let v = DVector::from_column_slice(f.values());
        let out = &self.matrix * v;
        GridFunction::new(self.spec, self.channels, out.as_slice().to_vec())
    }

    fn check_same(&self, other: &DenseOperator) -> Result<()> {
        if self.spec != other.spec || self.channels != other.channels {
            return Err(Error::ShapeMismatch("operators act on different spaces".into()));
        }
        Ok(())
    }

    pub fn add(&self, other: &DenseOperator) -> Result<DenseOperator> {
        self.check_same(other)?;
        DenseOperator::new(
            self.spec,
            self.channels,
            &self.matrix + &other.matrix,
            self.order.max(other.order),
        )
    }

    pub fn sub(&self, other: &DenseOperator) -> Result<DenseOperator> {
        self.check_same(other)?;
        DenseOperator::new(
            self.spec,
            self.channels,
            &self.matrix - &other.matrix,
            self.order.max(other.order),
        )
    }

    pub fn scale(&self, s: Complex64) -> DenseOperator {
        DenseOperator::new(self.spec, self.channels, &self.matrix * s, self.order)
            .expect("scaling keeps the shape")
    }

    /// Recomputes the positivity flag from the spectrum.
    pub fn check_positive(mut self) -> Result<DenseOperator> {
        let eig = EigenDecomposition::of(&self)?;
        let min = eig.min_eigenvalue();
        if min < -tolerance(eig.spectral_scale()) {
            return Err(Error::NotPositive(min));
        }
        self.positive = true;
        Ok(self)
    }
}

/// Direct evaluation of the quantization sum; scalar symbols act channelwise.
pub fn apply_symbol(a: &ScalarSymbol, f: &GridFunction) -> Result<GridFunction> {
    if a.spec() != f.spec() {
        return Err(Error::ShapeMismatch("symbol and function live on different grids".into()));
    }
    let mut values = Vec::with_capacity(f.values().len());
    for c in 0..f.channels() {
        values.extend(quantize_channel(a, &f.extract_channel(c)));
    }
    GridFunction::new(*f.spec(), f.channels(), values)
}

/// `(Op(a) f)_i = sum_j Op(a_ij) f_j`.
pub fn apply_matrix_symbol(a: &MatrixSymbol, f: &GridFunction) -> Result<GridFunction> {
    if a.spec() != f.spec() || a.size() != f.channels() {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} matrix symbol applied to a {}-channel function",
            a.size(),
            a.size(),
            f.channels()
        )));
    }
    let l = a.size();
    let npts = f.spec().num_points();
    let parts: Vec<GridFunction> = (0..l).map(|c| f.extract_channel(c)).collect();
    let mut values = vec![ZERO; l * npts];
    for i in 0..l {
        for (j, part) in parts.iter().enumerate() {
            let contrib = quantize_channel(a.entry(i, j), part);
            for (o, v) in values[i * npts..(i + 1) * npts].iter_mut().zip(contrib) {
                *o += v;
            }
        }
    }
    GridFunction::new(*f.spec(), l, values)
}

fn quantize_channel(a: &ScalarSymbol, f: &GridFunction) -> Vec<Complex64> {
    let spec = *a.spec();
    let coeffs = forward_transform(f);
    let lattice = spec.lattice();
    let roots = spec.unit_roots();
    let npts = spec.num_points();
    let terms: Vec<_> = lattice
        .points()
        .zip(coeffs.channel(0))
        .filter(|(_, c)| c.norm_sqr() > 0.0)
        .map(|(xi, &c)| (xi, c, a.row(&xi).expect("core lattice is stored")))
        .collect();
    let chunk = 64;
    let mut out = vec![ZERO; npts];
    out.par_chunks_mut(chunk).enumerate().for_each(|(ci, block)| {
        let start = ci * chunk;
        for (xi, c, row) in &terms {
            for (k, o) in block.iter_mut().enumerate() {
                let p = start + k;
                *o += roots[spec.phase_index(p, xi)] * row[p] * c;
            }
        }
    });
    out
}

/// Per-point index of `x_i - x_j` on the periodic grid.
fn difference_index(spec: &GridSpec, i: usize, j: usize) -> usize {
    let g = spec.points_per_axis();
    let a = spec.grid_point(i);
    let b = spec.grid_point(j);
    let mut idx = 0;
    for axis in 0..spec.dim() {
        idx = idx * g + (a[axis] + g - b[axis]) % g;
    }
    idx
}

/// Dense matrix of `Op(a)`: `M[x, y] = G^{-n} sum_{xi in L} exp(2 pi i (x - y) . xi) a(x, xi)`.
pub fn materialize(a: &ScalarSymbol) -> DenseOperator {
    let spec = *a.spec();
    let npts = spec.num_points();
    let lattice = spec.lattice();
    let bins: Vec<usize> = lattice.points().map(|xi| spec.bin(&xi)).collect();
    let rows_xi: Vec<&[Complex64]> = lattice.points().map(|xi| a.row(&xi).unwrap()).collect();
    let fft = NdFft::new(&spec, FftDirection::Inverse);
    let scale = 1.0 / npts as f64;
    let diff: Vec<usize> = (0..npts * npts)
        .map(|k| difference_index(&spec, k / npts, k % npts))
        .collect();
    let rows: Vec<Vec<Complex64>> = (0..npts)
        .into_par_iter()
        .map(|x| {
            let mut h = vec![ZERO; npts];
            for (&b, row) in bins.iter().zip(&rows_xi) {
                h[b] = row[x];
            }
            fft.process(&mut h);
            (0..npts).map(|y| h[diff[x * npts + y]] * scale).collect()
        })
        .collect();
    let m = DMatrix::from_fn(npts, npts, |i, j| rows[i][j]);
    DenseOperator::new(spec, 1, m, a.class().order).expect("materialized symbol is finite")
}

pub fn materialize_matrix(a: &MatrixSymbol) -> DenseOperator {
    let l = a.size();
    let blocks: Vec<DenseOperator> = (0..l * l)
        .map(|k| materialize(a.entry(k / l, k % l)))
        .collect();
    DenseOperator::from_blocks(l, &blocks).expect("matrix symbol entries share a grid")
}

/// `a(x, xi) = exp(-2 pi i x . xi) (A e_xi)(x)` on grid x `L`, with zero margin.
pub fn extract_symbol(op: &DenseOperator) -> Result<ScalarSymbol> {
    if op.channels != 1 {
        return Err(Error::ShapeMismatch(format!(
            "symbol recovery needs a single-channel operator, got {} channels",
            op.channels
        )));
    }
    let spec = op.spec;
    let npts = spec.num_points();
    let lattice = spec.lattice();
    let bins: Vec<usize> = lattice.points().map(|xi| spec.bin(&xi)).collect();
    let points: Vec<_> = lattice.points().collect();
    let roots = spec.unit_roots();
    let fft = NdFft::new(&spec, FftDirection::Inverse);
    // r[x][xi] = sum_y M[x, y] exp(2 pi i y . xi)
    let per_row: Vec<Vec<Complex64>> = (0..npts)
        .into_par_iter()
        .map(|x| {
            let mut r: Vec<Complex64> = op.matrix.row(x).iter().copied().collect();
            fft.process(&mut r);
            bins.iter()
                .zip(&points)
                .map(|(&b, xi)| r[b] * roots[spec.phase_index(x, xi)].conj())
                .collect()
        })
        .collect();
    let mut values = Vec::with_capacity(lattice.len() * npts);
    for li in 0..lattice.len() {
        values.extend(per_row.iter().map(|r| r[li]));
    }
    let order = if op.order.is_finite() { op.order } else { 0.0 };
    ScalarSymbol::tabulated(spec, SymbolClass::classical(order), 0, values)
}

/// Adjoint with respect to the grid-mean inner product (the conjugate transpose).
pub fn adjoint(op: &DenseOperator) -> DenseOperator {
    DenseOperator {
        matrix: op.matrix.adjoint(),
        ..op.clone()
    }
}

pub fn compose(a: &DenseOperator, b: &DenseOperator) -> Result<DenseOperator> {
    a.check_same(b)?;
    DenseOperator::new(a.spec, a.channels, &a.matrix * &b.matrix, a.order + b.order)
}

/// Hermitian eigendecomposition with eigenvalues in ascending order.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<Complex64>,
}

impl EigenDecomposition {
    /// Fails with [`Error::NotHermitian`] unless `M` is Hermitian to relative tolerance.
    pub fn of(op: &DenseOperator) -> Result<Self> {
        let defect = op.hermitian_defect();
        if defect > tolerance(op.max_abs()) {
            return Err(Error::NotHermitian(defect));
        }
        let m = &op.matrix;
        let sym = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
        let eig = sym.symmetric_eigen();
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let eigenvalues = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
        let eigenvectors = DMatrix::from_fn(m.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
        Ok(EigenDecomposition {
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }

    /// `max |lambda|`
    pub fn spectral_scale(&self) -> f64 {
        self.min_eigenvalue().abs().max(self.max_eigenvalue().abs())
    }

    /// `V diag(d) V*`
    pub fn reconstruct(&self, diag: &[f64]) -> DMatrix<Complex64> {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (c, &d) in diag.iter().enumerate() {
            scaled.column_mut(c).scale_mut(d);
        }
        scaled * v.adjoint()
    }

    /// Eigenvalues with those in `[-tol, tol]` set to zero; fails below `-tol`.
    pub fn clamped_eigenvalues(&self) -> Result<Vec<f64>> {
        let tol = tolerance(self.spectral_scale());
        let min = self.min_eigenvalue();
        if min < -tol {
            return Err(Error::NotPositive(min));
        }
        Ok(self
            .eigenvalues
            .iter()
            .map(|&l| if l.abs() <= tol { 0.0 } else { l })
            .collect())
    }

    /// `g(M)` for a positive operator; `g` returns `None` where it is undefined.
    pub fn function(
        &self,
        spec: GridSpec,
        channels: usize,
        g: impl Fn(f64) -> Option<f64>,
        order: f64,
    ) -> Result<DenseOperator> {
        let lambdas = self.clamped_eigenvalues()?;
        let mut diag = Vec::with_capacity(lambdas.len());
        for &l in &lambdas {
            match g(l) {
                Some(v) if v.is_finite() => diag.push(v),
                _ => return Err(Error::UndefinedOnSpectrum(l)),
            }
        }
        let positive = diag.iter().all(|&d| d >= 0.0);
        let mut op = DenseOperator::new(spec, channels, self.reconstruct(&diag), order)?;
        op.hermitian = true;
        op.positive = positive;
        Ok(op)
    }
}

/// `g(A) = V g(Lambda) V*` for Hermitian `A` with spectrum `>= -tol`.
pub fn operator_function(
    a: &DenseOperator,
    g: impl Fn(f64) -> Option<f64>,
    order: f64,
) -> Result<DenseOperator> {
    EigenDecomposition::of(a)?.function(a.spec, a.channels, g, order)
}

pub fn operator_sqrt(a: &DenseOperator) -> Result<DenseOperator> {
    operator_function(a, |l| Some(l.sqrt()), 0.5 * a.order)
}

pub fn operator_inverse(a: &DenseOperator) -> Result<DenseOperator> {
    operator_function(a, |l| (l > 0.0).then(|| 1.0 / l), -a.order)
}

pub fn operator_inverse_sqrt(a: &DenseOperator) -> Result<DenseOperator> {
    operator_function(a, |l| (l > 0.0).then(|| 1.0 / l.sqrt()), -0.5 * a.order)
}

/// `A^p`; negative powers need a strictly positive spectrum.
pub fn operator_power(a: &DenseOperator, p: f64) -> Result<DenseOperator> {
    operator_function(a, |l| (p >= 0.0 || l > 0.0).then(|| l.powf(p)), p * a.order)
}

/// `Pi (A + A*)/2 Pi + c I`, with `Pi` the projector onto frequencies in `L`.
///
/// Fails with [`Error::NotPositive`] when the result has an eigenvalue below the tolerance.
pub fn symmetrize_positive(a: &DenseOperator, c: f64) -> Result<DenseOperator> {
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!("shift c must be >= 0, got {c}")));
    }
    let pi = DenseOperator::band_projector(a.spec, a.channels);
    let half = (&a.matrix + a.matrix.adjoint()) * Complex64::new(0.5, 0.0);
    let mut m = &pi.matrix * half * &pi.matrix;
    for i in 0..m.nrows() {
        m[(i, i)] += c;
    }
    // exact Hermitian symmetry before the spectral check
    let m = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let op = DenseOperator::new(a.spec, a.channels, m, a.order)?;
    op.check_positive()
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<Complex64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

/// `F M F*` with `F` the unitary DFT on every channel; index `channel * G^n + bin`.
pub fn fourier_representation(op: &DenseOperator) -> DMatrix<Complex64> {
    let spec = op.spec;
    let npts = spec.num_points();
    let channels = op.channels;
    let fft = NdFft::new(&spec, FftDirection::Forward);
    let scale = 1.0 / (npts as f64).sqrt();
    let transform_columns = |m: &DMatrix<Complex64>| -> DMatrix<Complex64> {
        let mut out = m.clone();
        for mut col in out.column_iter_mut() {
            let data = col.as_mut_slice();
            for c in 0..channels {
                let part = &mut data[c * npts..(c + 1) * npts];
                fft.process(part);
                for v in part.iter_mut() {
                    *v *= scale;
                }
            }
        }
        out
    };
    let fm = transform_columns(&op.matrix);
    transform_columns(&fm.adjoint()).adjoint()
}

/// `|| M Pi_k ||` for each shell, where `Pi_k` keeps lattice frequencies in shell `k`
/// on every channel.
pub fn shell_operator_norms(op: &DenseOperator, shells: &[Shell]) -> Vec<f64> {
    let spec = op.spec;
    let npts = spec.num_points();
    let rep = fourier_representation(op);
    let lattice = spec.lattice();
    shells
        .par_iter()
        .map(|shell| {
            let cols: Vec<usize> = (0..op.channels)
                .flat_map(|c| {
                    lattice
                        .points()
                        .filter(|xi| shell.contains(&xi[..spec.dim()]))
                        .map(move |xi| c * npts + spec.bin(&xi))
                        .collect::<Vec<_>>()
                })
                .collect();
            if cols.is_empty() {
                return 0.0;
            }
            let sub = rep.select_columns(cols.iter());
            let gram = sub.adjoint() * &sub;
            let gram = (&gram + gram.adjoint()) * Complex64::new(0.5, 0.0);
            gram.symmetric_eigenvalues()
                .iter()
                .copied()
                .fold(0.0, f64::max)
                .max(0.0)
                .sqrt()
        })
        .collect()
}
