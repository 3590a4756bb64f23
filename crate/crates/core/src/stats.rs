//! Statistical tests and fits used to compare simulation output against the
//! numerical oracles: moment summaries, one- and two-sample KS tests,
//! chi-square goodness of fit, log-log scaling fits with bootstrap intervals,
//! and cross-covariance comparison.

use rand::Rng;
use rand::SeedableRng;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::{Error, Result, SimRng};

/// Sample moments with the standard errors used for acceptance bands.
#[derive(Debug, Clone)]
pub struct MomentSummary {
    pub n: usize,
    pub mean: f64,
    pub se_mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    /// Standard error of the variance under approximate normality.
    pub se_variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

pub fn moments(xs: &[f64]) -> Result<MomentSummary> {
    let n = xs.len();
    if n < 2 {
        return Err(Error::Stats("need at least two samples".into()));
    }
    let nf = n as f64;
    let mean = xs.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in xs {
        let d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    let variance = m2 * nf / (nf - 1.0);
    Ok(MomentSummary {
        n,
        mean,
        se_mean: (variance / nf).sqrt(),
        variance,
        se_variance: variance * (2.0 / (nf - 1.0)).sqrt(),
        skewness: m3 / m2.powf(1.5),
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
    })
}

/// Kolmogorov survival function `Q(lambda) = 2 sum (-1)^{k-1} exp(-2 k^2 lambda^2)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut acc = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64).powi(2) * lambda * lambda).exp();
        if term < 1e-18 {
            break;
        }
        acc += if k % 2 == 1 { term } else { -term };
    }
    (2.0 * acc).clamp(0.0, 1.0)
}

/// Critical value `lambda` with `Q(lambda) = level`.
pub fn kolmogorov_critical(level: f64) -> f64 {
    let (mut lo, mut hi) = (0.2, 3.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_sf(mid) > level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// One-sample KS statistic of `samples` against a CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - f).abs());
    }
    d
}

#[derive(Debug, Clone)]
pub struct KsTest {
    pub statistic: f64,
    /// Statistic after subtracting the discretization allowance.
    pub adjusted: f64,
    pub threshold: f64,
    pub level: f64,
    pub pass: bool,
}

/// One-sample KS test at the given level, with an additive allowance on the
/// statistic for lattice-valued samples.
pub fn ks_test(
    samples: &[f64],
    cdf: impl Fn(f64) -> f64,
    level: f64,
    allowance: f64,
) -> Result<KsTest> {
    if samples.len() < 100 {
        return Err(Error::Stats("KS test needs at least 100 samples".into()));
    }
    let d = ks_statistic(samples, cdf);
    let threshold = kolmogorov_critical(level) / (samples.len() as f64).sqrt();
    let adjusted = (d - allowance).max(0.0);
    Ok(KsTest {
        statistic: d,
        adjusted,
        threshold,
        level,
        pass: adjusted <= threshold,
    })
}

/// Two-sample KS statistic.
pub fn two_sample_ks(a: &[f64], b: &[f64]) -> f64 {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(|x, y| x.partial_cmp(y).unwrap());
    xb.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (na, nb) = (xa.len(), xb.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < na && j < nb {
        let v = xa[i].min(xb[j]);
        while i < na && xa[i] == v {
            i += 1;
        }
        while j < nb && xb[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    d
}

/// Two-sample KS test with the asymptotic Kolmogorov null.
pub fn two_sample_ks_test(a: &[f64], b: &[f64], level: f64) -> Result<KsTest> {
    if a.len() < 50 || b.len() < 50 {
        return Err(Error::Stats("two-sample KS needs >= 50 samples each".into()));
    }
    let d = two_sample_ks(a, b);
    let n_eff = (a.len() * b.len()) as f64 / (a.len() + b.len()) as f64;
    let threshold = kolmogorov_critical(level) / n_eff.sqrt();
    Ok(KsTest {
        statistic: d,
        adjusted: d,
        threshold,
        level,
        pass: d <= threshold,
    })
}

#[derive(Debug, Clone)]
pub struct ChiSquareReport {
    pub statistic: f64,
    pub dof: usize,
    pub critical_999: f64,
    pub pass: bool,
}

/// Pearson chi-square of observed counts against cell probabilities, checked
/// at the 99.9% quantile.
pub fn chi_square_gof(counts: &[u64], probs: &[f64]) -> Result<ChiSquareReport> {
    if counts.len() != probs.len() || counts.len() < 2 {
        return Err(Error::Stats("counts/probs shape mismatch".into()));
    }
    let total: u64 = counts.iter().sum();
    let mut stat = 0.0;
    for (&c, &p) in counts.iter().zip(probs) {
        let expect = total as f64 * p;
        if expect <= 0.0 {
            return Err(Error::Stats("zero expected cell".into()));
        }
        stat += (c as f64 - expect).powi(2) / expect;
    }
    let dof = counts.len() - 1;
    let chi = ChiSquared::new(dof as f64).map_err(|e| Error::Stats(e.to_string()))?;
    let critical_999 = chi.inverse_cdf(0.999);
    Ok(ChiSquareReport {
        statistic: stat,
        dof,
        critical_999,
        pass: stat < critical_999,
    })
}

#[derive(Debug, Clone)]
pub struct GaussianReport {
    pub moments: MomentSummary,
    pub target_variance: f64,
    pub ks: KsTest,
    pub mean_ok: bool,
    pub variance_ok: bool,
    pub kurtosis_ok: bool,
    pub pass: bool,
}

/// Check that samples look like N(0, target_variance): mean and variance
/// within 3 standard errors, excess kurtosis within 4, KS at the given level.
pub fn gaussian_test(samples: &[f64], target_variance: f64, level: f64) -> Result<GaussianReport> {
    if samples.len() < 500 {
        return Err(Error::Stats("gaussian test needs >= 500 samples".into()));
    }
    let m = moments(samples)?;
    let normal = Normal::new(0.0, target_variance.sqrt()).map_err(|e| Error::Stats(e.to_string()))?;
    let ks = ks_test(samples, |x| normal.cdf(x), level, 0.0)?;
    let nf = samples.len() as f64;
    let se_var = target_variance * (2.0 / (nf - 1.0)).sqrt();
    let mean_ok = m.mean.abs() <= 3.0 * m.se_mean;
    let variance_ok = (m.variance - target_variance).abs() <= 3.0 * se_var;
    let kurtosis_ok = m.excess_kurtosis.abs() <= 4.0 * (24.0 / nf).sqrt();
    let pass = mean_ok && variance_ok && kurtosis_ok && ks.pass;
    Ok(GaussianReport {
        moments: m,
        target_variance,
        ks,
        mean_ok,
        variance_ok,
        kurtosis_ok,
        pass,
    })
}

#[derive(Debug, Clone)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    /// Percentile bootstrap 95% interval on the slope.
    pub ci: (f64, f64),
}

fn ols_loglog(pairs: &[(f64, f64)]) -> (f64, f64) {
    let n = pairs.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(u, v) in pairs {
        let (x, y) = (u.ln(), v.ln());
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    (slope, (sy - slope * sx) / n)
}

/// Least-squares slope of log v against log u with a pairs-bootstrap CI.
pub fn scaling_fit(pairs: &[(f64, f64)], bootstrap: usize, seed: u64) -> Result<ScalingFit> {
    if pairs.len() < 4 {
        return Err(Error::Stats("scaling fit needs >= 4 points".into()));
    }
    if pairs.iter().any(|&(u, v)| u <= 0.0 || v <= 0.0) {
        return Err(Error::Stats("scaling fit needs positive data".into()));
    }
    let umin = pairs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let umax = pairs.iter().map(|p| p.0).fold(0.0f64, f64::max);
    if umax / umin < 10.0 {
        return Err(Error::Stats("scaling fit needs a decade of span".into()));
    }
    let (slope, intercept) = ols_loglog(pairs);
    let mut rng = SimRng::seed_from_u64(seed);
    let mut slopes = Vec::with_capacity(bootstrap);
    while slopes.len() < bootstrap {
        let resample: Vec<(f64, f64)> = (0..pairs.len())
            .map(|_| pairs[rng.random_range(0..pairs.len())])
            .collect();
        let distinct = {
            let first = resample[0].0;
            resample.iter().any(|p| p.0 != first)
        };
        if !distinct {
            continue;
        }
        slopes.push(ols_loglog(&resample).0);
    }
    slopes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = slopes[(0.025 * bootstrap as f64) as usize];
    let hi = slopes[((0.975 * bootstrap as f64) as usize).min(bootstrap - 1)];
    Ok(ScalingFit {
        slope,
        intercept,
        ci: (lo, hi),
    })
}

#[derive(Debug, Clone)]
pub struct CovCompareRow {
    pub t: f64,
    pub empirical: f64,
    pub se: f64,
    pub oracle: f64,
    pub standardized: f64,
}

/// Empirical cross-covariance of `(y_t, y_0)` pairs per time against oracle
/// values; returns per-time rows with standardized deviations.
pub fn covariance_compare(rows: &[(f64, Vec<(f64, f64)>, f64)]) -> Result<Vec<CovCompareRow>> {
    let mut out = Vec::with_capacity(rows.len());
    for (t, pairs, oracle) in rows {
        if pairs.len() < 30 {
            return Err(Error::Stats("covariance compare needs >= 30 replicates".into()));
        }
        let n = pairs.len() as f64;
        let mean_a = pairs.iter().map(|p| p.0).sum::<f64>() / n;
        let mean_b = pairs.iter().map(|p| p.1).sum::<f64>() / n;
        let prods: Vec<f64> = pairs.iter().map(|p| (p.0 - mean_a) * (p.1 - mean_b)).collect();
        let cov = prods.iter().sum::<f64>() / n;
        let var_prod = prods.iter().map(|p| (p - cov).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var_prod / n).sqrt();
        out.push(CovCompareRow {
            t: *t,
            empirical: cov,
            se,
            oracle: *oracle,
            standardized: (cov - oracle) / se,
        });
    }
    Ok(out)
}
