//! Partial-plus-tail evaluation of power-law series.
//!
//! All infinite sums in the kernel and generator modules reduce to
//! `sum_{k >= a} k^{-s}` with `s > 1`. They are evaluated by a direct partial
//! sum up to a cutoff plus an Euler-Maclaurin tail; the first neglected
//! correction is of order `s^5 a^{-s-5}`, far below the 1e-9 contract at the
//! cutoffs used here.

/// `sum_{k >= a} k^{-s}` for real `a >= 1`, `s > 1`.
pub fn tail_power_sum(a: f64, s: f64) -> f64 {
    debug_assert!(s > 1.0 && a >= 1.0);
    let t1 = a.powf(1.0 - s) / (s - 1.0);
    let t2 = 0.5 * a.powf(-s);
    let t3 = s * a.powf(-s - 1.0) / 12.0;
    let t4 = -s * (s + 1.0) * (s + 2.0) * a.powf(-s - 3.0) / 720.0;
    t1 + t2 + t3 + t4
}

/// `sum_{k=1}^{n} k^{-s}` by direct summation, smallest terms first.
pub fn partial_power_sum(n: u64, s: f64) -> f64 {
    let mut acc = 0.0;
    for k in (1..=n).rev() {
        acc += (k as f64).powf(-s);
    }
    acc
}

const ZETA_CUTOFF: u64 = 20_000;

/// Riemann zeta for `s > 1`: partial sum plus Euler-Maclaurin tail.
pub fn zeta(s: f64) -> f64 {
    debug_assert!(s > 1.0);
    partial_power_sum(ZETA_CUTOFF, s) + tail_power_sum((ZETA_CUTOFF + 1) as f64, s)
}
