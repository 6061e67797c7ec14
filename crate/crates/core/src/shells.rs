//! Dyadic frequency shells and log-log order estimation.
//!
//! Shell `k` collects lattice points with `2^k <= |xi| < 2^{k+1}`. Only shells
//! that fit entirely inside a cube of radius `R` are used, which requires
//! `2^{k+1} - 1 <= R`. The empirical order of a quantity is the least-squares
//! slope of `ln sup_shell |q|` against `ln <xi>`.

use crate::error::{Error, Result};
use crate::grid::{japanese_bracket, norm_sq, Freq};

/// Shell suprema below this are treated as exact zeros.
pub const ZERO_FLOOR: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Shell {
    pub k: u32,
    /// `2^k`
    pub inner: i64,
    /// `2^{k+1}` (exclusive)
    pub outer: i64,
}

impl Shell {
    pub fn contains(&self, xi: &[i64]) -> bool {
        let r2 = norm_sq(xi);
        r2 >= self.inner * self.inner && r2 < self.outer * self.outer
    }

    /// `<xi>` at the inner radius of the shell.
    pub fn inner_bracket(&self) -> f64 {
        (1.0 + (self.inner * self.inner) as f64).sqrt()
    }
}

/// All complete dyadic shells inside a cube of the given radius.
pub fn complete_shells(radius: usize) -> Vec<Shell> {
    let mut out = Vec::new();
    let mut k = 0u32;
    while (1i64 << (k + 1)) - 1 <= radius as i64 {
        out.push(Shell {
            k,
            inner: 1 << k,
            outer: 1 << (k + 1),
        });
        k += 1;
    }
    out
}

/// Supremum of a quantity over one shell, with the `<xi>` of the maximizer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShellSample {
    pub shell: Shell,
    pub sup: f64,
    /// Regression abscissa: `<xi>` where the supremum is attained.
    pub bracket: f64,
}

/// Collects shell suprema of `value(xi)` over the points yielded by `points`.
pub fn shell_suprema<I, F>(shells: &[Shell], points: I, mut value: F) -> Vec<ShellSample>
where
    I: IntoIterator<Item = Freq>,
    F: FnMut(&Freq) -> f64,
{
    let mut samples: Vec<ShellSample> = shells
        .iter()
        .map(|&shell| ShellSample {
            shell,
            sup: 0.0,
            bracket: shell.inner_bracket(),
        })
        .collect();
    for xi in points {
        let r2 = norm_sq(&xi);
        if r2 == 0 {
            continue;
        }
        let Some(sample) = samples.iter_mut().find(|s| s.shell.contains(&xi)) else {
            continue;
        };
        let v = value(&xi);
        if v > sample.sup {
            sample.sup = v;
            sample.bracket = japanese_bracket(&xi);
        }
    }
    samples
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlopeFit {
    /// `-inf` when every shell is below the zero floor.
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
    pub shells_used: usize,
}

impl SlopeFit {
    pub fn is_vanishing(&self) -> bool {
        self.slope == f64::NEG_INFINITY
    }
}

/// Least-squares fit of `ln sup` against `ln <xi>`, ignoring shells at or below `floor`.
///
/// Requires at least `min_shells` shells. If fewer than two shells survive
/// the floor, or if the outermost shell is at or below it (compact support in
/// frequency), the quantity is reported as vanishing (`slope = -inf`).
pub fn fit_order(samples: &[ShellSample], floor: f64, min_shells: usize) -> Result<SlopeFit> {
    if samples.len() < min_shells {
        return Err(Error::TooFewShells {
            needed: min_shells,
            found: samples.len(),
        });
    }
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.sup > floor)
        .map(|s| (s.bracket.ln(), s.sup.ln()))
        .collect();
    let outer_vanishes = samples.last().is_some_and(|s| s.sup <= floor);
    if pts.len() < 2 || outer_vanishes {
        return Ok(SlopeFit {
            slope: f64::NEG_INFINITY,
            intercept: f64::NEG_INFINITY,
            residual: 0.0,
            shells_used: pts.len(),
        });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(SlopeFit {
        slope,
        intercept,
        residual,
        shells_used: pts.len(),
    })
}
