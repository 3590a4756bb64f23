//! The long-jump transition rate, its symmetric/antisymmetric decomposition,
//! centering constants, and the periodized sampler driving the simulator.

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::sums::{partial_power_sum, tail_power_sum, zeta};
use crate::{Error, Result};

/// Regime of the stability index; the three cases of the centering constant
/// and of the generator compensation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphaRegime {
    Sub,
    One,
    Super,
}

pub(crate) fn alpha_regime(alpha: f64) -> AlphaRegime {
    if (alpha - 1.0).abs() <= 1e-12 {
        AlphaRegime::One
    } else if alpha < 1.0 {
        AlphaRegime::Sub
    } else {
        AlphaRegime::Super
    }
}

/// Parameters of the jump rate `p(z) = c(z)/|z|^{1+alpha} + lambda n^{3/2-alpha} 1(z=1)`,
/// with `c(z) = c_plus` for `z > 0` and `c_minus` for `z < 0`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KernelParams {
    pub alpha: f64,
    pub c_plus: f64,
    pub c_minus: f64,
    /// Nearest-neighbor weak-asymmetry amplitude; 0 disables the term.
    #[serde(default)]
    pub weak_lambda: f64,
    /// Scaling parameter entering the weak-asymmetry term only.
    #[serde(default = "default_scale_n")]
    pub scale_n: u32,
}

fn default_scale_n() -> u32 {
    1
}

impl KernelParams {
    pub fn new(alpha: f64, c_plus: f64, c_minus: f64) -> Result<Self> {
        let p = Self {
            alpha,
            c_plus,
            c_minus,
            weak_lambda: 0.0,
            scale_n: 1,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn symmetric(alpha: f64, c: f64) -> Result<Self> {
        Self::new(alpha, c, c)
    }

    pub fn with_weak_asymmetry(mut self, lambda: f64, scale_n: u32) -> Result<Self> {
        self.weak_lambda = lambda;
        self.scale_n = scale_n;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return Err(Error::InvalidParams(format!(
                "alpha must lie in (0, 2), got {}",
                self.alpha
            )));
        }
        if self.c_plus < 0.0 || self.c_minus < 0.0 || self.c_plus + self.c_minus <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "need c_plus, c_minus >= 0 with positive sum, got ({}, {})",
                self.c_plus, self.c_minus
            )));
        }
        if self.weak_lambda < 0.0 {
            return Err(Error::InvalidParams("weak_lambda must be >= 0".into()));
        }
        if self.weak_lambda > 0.0 && self.scale_n == 0 {
            return Err(Error::InvalidParams(
                "weak asymmetry requires scale_n >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn regime(&self) -> AlphaRegime {
        alpha_regime(self.alpha)
    }

    /// The additive nearest-neighbor term `lambda n^{3/2 - alpha}`.
    pub fn weak_term(&self) -> f64 {
        if self.weak_lambda == 0.0 {
            0.0
        } else {
            self.weak_lambda * (self.scale_n as f64).powf(1.5 - self.alpha)
        }
    }

    /// Transition rate `p(z)`; total over all of `z`, zero at the origin.
    pub fn rate(&self, z: i64) -> f64 {
        if z == 0 {
            return 0.0;
        }
        let c = if z > 0 { self.c_plus } else { self.c_minus };
        let mut r = c * (z.unsigned_abs() as f64).powf(-(1.0 + self.alpha));
        if z == 1 {
            r += self.weak_term();
        }
        r
    }

    /// `(s(z), a(z))` with `s(z) = (p(z)+p(-z))/2`, `a(z) = (p(z)-p(-z))/2`.
    pub fn decompose(&self, z: i64) -> (f64, f64) {
        let p = self.rate(z);
        let q = self.rate(-z);
        (0.5 * (p + q), 0.5 * (p - q))
    }

    pub fn is_symmetric(&self) -> bool {
        self.c_plus == self.c_minus && self.weak_lambda == 0.0
    }
}

/// A jump kernel with its derived total rate and mean.
#[derive(Debug, Clone)]
pub struct JumpKernel {
    params: KernelParams,
    p_star: f64,
    /// `sum_{y>0} y a(y)`, finite only for alpha > 1.
    mean_m: Option<f64>,
}

impl JumpKernel {
    pub fn new(params: KernelParams) -> Result<Self> {
        params.validate()?;
        let p_star = (params.c_plus + params.c_minus) * zeta(1.0 + params.alpha) + params.weak_term();
        let mean_m = match params.regime() {
            AlphaRegime::Super => Some(
                0.5 * ((params.c_plus - params.c_minus) * zeta(params.alpha) + params.weak_term()),
            ),
            _ => None,
        };
        Ok(Self {
            params,
            p_star,
            mean_m,
        })
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    /// Total jump rate `p* = sum_z p(z)`.
    pub fn p_star(&self) -> f64 {
        self.p_star
    }

    /// The mean `m = sum_{y>0} y a(y)`; rejects `alpha <= 1` where it diverges.
    pub fn mean_drift(&self) -> Result<f64> {
        self.mean_m.ok_or(Error::InvalidRegime(self.params.alpha))
    }

    /// Centering constant `m_n^alpha`: 0 for alpha < 1, `n sum_{|x|<=n} x p(x)`
    /// for alpha = 1, `n^alpha sum_x x p(x)` for alpha > 1.
    pub fn centering_constant(&self, n: u32) -> f64 {
        assert!(n >= 1, "scaling parameter must be >= 1");
        let p = &self.params;
        match p.regime() {
            AlphaRegime::Sub => 0.0,
            AlphaRegime::One => {
                let mut acc = 0.0;
                for x in 1..=(n as i64) {
                    acc += x as f64 * (p.rate(x) - p.rate(-x));
                }
                n as f64 * acc
            }
            AlphaRegime::Super => {
                let full = (p.c_plus - p.c_minus) * zeta(p.alpha) + p.weak_term();
                (n as f64).powf(p.alpha) * full
            }
        }
    }

    /// Periodize onto a ring of `ring_size` sites by image summation.
    pub fn fold_to_ring(&self, ring_size: usize) -> Result<RingKernel> {
        RingKernel::new(self, ring_size)
    }

    /// Sampler for the untruncated jump law on the integers.
    pub fn sampler(&self) -> Result<JumpSampler> {
        JumpSampler::new(self)
    }
}

/// `sum_{m>=0} (a0 + m*step)^{-s}` by direct terms plus Euler-Maclaurin tail.
fn arithmetic_power_sum(a0: f64, step: f64, s: f64) -> f64 {
    const DIRECT: usize = 256;
    let mut acc = 0.0;
    for m in (0..DIRECT).rev() {
        acc += (a0 + m as f64 * step).powf(-s);
    }
    let a = a0 + DIRECT as f64 * step;
    acc + a.powf(1.0 - s) / (step * (s - 1.0))
        + 0.5 * a.powf(-s)
        + s * step * a.powf(-s - 1.0) / 12.0
        - s * (s + 1.0) * (s + 2.0) * step.powi(3) * a.powf(-s - 3.0) / 720.0
}

/// The kernel folded onto a periodic ring, with an alias-method sampler over
/// displacement classes `d = 0..N-1`.
///
/// The class `d = 0` collects jumps by exact multiples of `N`: on the ring
/// the particle targets its own (occupied) site, so the attempt is suppressed
/// and only time advances — exactly the unfolded dynamics. Keeping the class
/// makes `q* = p*` an identity rather than a truncation.
pub struct RingKernel {
    params: KernelParams,
    ring_size: usize,
    folded: Vec<f64>,
    q_star: f64,
    alias: WeightedAliasIndex<f64>,
}

impl RingKernel {
    fn new(kernel: &JumpKernel, ring_size: usize) -> Result<Self> {
        if ring_size < 4 || ring_size % 2 != 0 {
            return Err(Error::InvalidParams(format!(
                "ring size must be even and >= 4, got {ring_size}"
            )));
        }
        let p = kernel.params;
        let s = 1.0 + p.alpha;
        let nn = ring_size as f64;
        let mut folded = Vec::with_capacity(ring_size);
        folded.push((p.c_plus + p.c_minus) * arithmetic_power_sum(nn, nn, s));
        for d in 1..ring_size {
            let df = d as f64;
            let mut q = p.c_plus * arithmetic_power_sum(df, nn, s)
                + p.c_minus * arithmetic_power_sum(nn - df, nn, s);
            if d == 1 {
                q += p.weak_term();
            }
            folded.push(q);
        }
        let q_star: f64 = folded.iter().sum();
        let rel = ((q_star - kernel.p_star) / kernel.p_star).abs();
        if rel > 1e-10 {
            return Err(Error::Truncation(format!(
                "periodized mass off by {rel:.3e} relative (ring size {ring_size})"
            )));
        }
        let alias = WeightedAliasIndex::new(folded.clone())
            .map_err(|e| Error::InvalidParams(format!("alias table: {e}")))?;
        Ok(Self {
            params: p,
            ring_size,
            folded,
            q_star,
            alias,
        })
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn ring_size(&self) -> usize {
        self.ring_size
    }

    /// Folded rate `q(d) = sum_k p(d + kN)` for `d = 0..N-1`.
    pub fn folded_rate(&self, d: usize) -> f64 {
        self.folded[d]
    }

    pub fn q_star(&self) -> f64 {
        self.q_star
    }

    /// Draw a displacement class in `0..=N-1` with probability `q(d)/q*`.
    pub fn sample_displacement<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.alias.sample(rng)
    }
}

const MAGNITUDE_TABLE: u64 = 1 << 16;

/// Sampler for the untruncated law `p(z)/p*` on the integers: alias table for
/// magnitudes up to 2^16, analytic inverse-tail lookup beyond.
pub struct JumpSampler {
    alpha: f64,
    /// Probability that a draw comes from the weak-asymmetry unit jump.
    prob_weak: f64,
    /// P(positive side) among power-law jumps.
    prob_pos: f64,
    /// P(magnitude within the table) among power-law jumps.
    prob_table: f64,
    table: WeightedAliasIndex<f64>,
    tail_mass: f64,
    tail_start: u64,
}

impl JumpSampler {
    fn new(kernel: &JumpKernel) -> Result<Self> {
        let p = kernel.params;
        let s = 1.0 + p.alpha;
        let z = zeta(s);
        let weights: Vec<f64> = (1..=MAGNITUDE_TABLE).map(|k| (k as f64).powf(-s)).collect();
        let table = WeightedAliasIndex::new(weights)
            .map_err(|e| Error::InvalidParams(format!("alias table: {e}")))?;
        let in_table = partial_power_sum(MAGNITUDE_TABLE, s);
        let tail_mass = tail_power_sum((MAGNITUDE_TABLE + 1) as f64, s);
        Ok(Self {
            alpha: p.alpha,
            prob_weak: p.weak_term() / kernel.p_star,
            prob_pos: p.c_plus / (p.c_plus + p.c_minus),
            prob_table: in_table / z,
            table,
            tail_mass,
            tail_start: MAGNITUDE_TABLE + 1,
        })
    }

    /// Draw one signed jump from `p(z)/p*`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        if self.prob_weak > 0.0 && rng.random::<f64>() < self.prob_weak {
            return 1;
        }
        let positive = rng.random::<f64>() < self.prob_pos;
        let mag = if rng.random::<f64>() < self.prob_table {
            self.table.sample(rng) as i64 + 1
        } else {
            self.sample_tail(rng)
        };
        if positive {
            mag
        } else {
            -mag
        }
    }

    fn sample_tail<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        let s = 1.0 + self.alpha;
        let v = rng.random::<f64>() * self.tail_mass;
        // Solve tail(x) = v from the leading term, then walk to the exact cell.
        let x = (self.alpha * v).powf(-1.0 / self.alpha);
        let mut k = (x.floor() as u64).max(self.tail_start);
        while tail_power_sum(k as f64, s) < v && k > self.tail_start {
            k -= 1;
        }
        while tail_power_sum((k + 1) as f64, s) >= v {
            k += 1;
        }
        k as i64
    }
}
