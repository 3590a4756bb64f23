//! Spectral gap of the symmetrized long-jump walk on a finite interval.
//!
//! The interval `{1, .., ell}` carries the walk with rates `s(y-x)` and no
//! periodization; jumps leaving the interval are suppressed. The gap is the
//! smallest nonzero eigenvalue of the negated generator and scales as
//! `ell^{-alpha}`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::kernel::KernelParams;
use crate::stats;
use crate::{Error, Result};

/// Dense generator of the symmetrized walk on `{1, .., ell}`: off-diagonal
/// `G[x][y] = s(y - x)`, diagonal the negated row sum.
pub struct IntervalGenerator {
    ell: usize,
    matrix: DMatrix<f64>,
}

impl IntervalGenerator {
    pub fn new(params: &KernelParams, ell: usize) -> Result<Self> {
        if ell < 2 {
            return Err(Error::InvalidParams("interval needs at least 2 sites".into()));
        }
        params.validate()?;
        let mut m = DMatrix::zeros(ell, ell);
        for x in 0..ell {
            let mut row_sum = 0.0;
            for y in 0..ell {
                if x == y {
                    continue;
                }
                let s = params.decompose(y as i64 - x as i64).0;
                m[(x, y)] = s;
                row_sum += s;
            }
            m[(x, x)] = -row_sum;
        }
        Ok(Self { ell, matrix: m })
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// All eigenvalues of `-G`, ascending.
    pub fn neg_spectrum(&self) -> Vec<f64> {
        let eig = SymmetricEigen::new(-self.matrix.clone());
        let mut vals: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals
    }
}

/// Smallest nonzero eigenvalue of `-G`; the constant vector spans the kernel.
pub fn spectral_gap(gen: &IntervalGenerator) -> Result<f64> {
    let vals = gen.neg_spectrum();
    let scale = vals.last().copied().unwrap_or(1.0).max(1.0);
    if vals[0].abs() > 1e-9 * scale {
        return Err(Error::DegenerateSpectrum(vals[0]));
    }
    let gap = vals[1];
    if gap < 1e-12 {
        return Err(Error::DegenerateSpectrum(gap));
    }
    Ok(gap)
}

#[derive(Debug, Clone, Copy)]
pub struct GapRow {
    pub ell: usize,
    pub lambda: f64,
    pub lambda_ell_alpha: f64,
}

#[derive(Debug, Clone)]
pub struct GapScalingReport {
    pub rows: Vec<GapRow>,
    /// Least-squares slope of log lambda against log ell.
    pub slope: f64,
}

/// Gaps over a ladder of interval lengths, with the fitted scaling exponent.
pub fn gap_scaling_report(params: &KernelParams, ells: &[usize]) -> Result<GapScalingReport> {
    if ells.len() < 2 || ells.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParams("need a sorted ladder of lengths".into()));
    }
    if *ells.last().unwrap() > 4096 {
        return Err(Error::InvalidParams("dense eigensolve capped at ell = 4096".into()));
    }
    let mut rows = Vec::with_capacity(ells.len());
    let mut monotone_ok = true;
    for &ell in ells {
        let lambda = spectral_gap(&IntervalGenerator::new(params, ell)?)?;
        if let Some(prev) = rows.last() {
            let prev: &GapRow = prev;
            if lambda > prev.lambda {
                monotone_ok = false;
            }
        }
        rows.push(GapRow {
            ell,
            lambda,
            lambda_ell_alpha: lambda * (ell as f64).powf(params.alpha),
        });
    }
    if !monotone_ok {
        // Interlacing-style sanity: flagged, not asserted.
        eprintln!("gap ladder is not monotone nonincreasing: {rows:?}");
    }
    let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.ell as f64, r.lambda)).collect();
    let fit = stats::scaling_fit(&pairs, 200, 17)?;
    Ok(GapScalingReport {
        rows,
        slope: fit.slope,
    })
}

/// The interval identity `sum_{x,y} (f(y)-f(x))^2 = 2 ell sum_x f(x)^2` for
/// mean-zero `f`; rejects non-mean-zero inputs.
pub fn mean_zero_identity_check(values: &[f64]) -> Result<bool> {
    let ell = values.len();
    if ell < 2 {
        return Err(Error::InvalidParams("need at least 2 values".into()));
    }
    let sum: f64 = values.iter().sum();
    let scale: f64 = values.iter().map(|v| v.abs()).sum::<f64>().max(1e-300);
    if sum.abs() > 1e-10 * scale {
        return Err(Error::InvalidParams(format!(
            "identity requires mean zero, got sum {sum}"
        )));
    }
    let mut lhs = 0.0;
    for &a in values {
        for &b in values {
            lhs += (b - a) * (b - a);
        }
    }
    let rhs = 2.0 * ell as f64 * values.iter().map(|v| v * v).sum::<f64>();
    Ok((lhs - rhs).abs() <= 1e-10 * rhs.max(1e-300))
}
