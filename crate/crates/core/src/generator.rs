//! Discrete and continuous fractional generators and their Dirichlet forms.
//!
//! The discrete operator is the generator of the rescaled long-jump walk,
//!
//! ```text
//! L_n f(x/n) = n^alpha sum_y p(y) (f((x+y)/n) - f(x/n)) - (m_n^alpha/n) f'(x/n),
//! ```
//!
//! and its skewed variant replaces `p(y)` by `(1-rho) p(y) + rho p(-y)` and the
//! drift constant by `(1-2 rho) m_n^alpha`. The continuous operator is the
//! compensated integral
//!
//! ```text
//! L f(x) = int c(y)/|y|^{1+alpha} (f(x+y) - f(x) - theta^alpha(y) f'(x)) dy,
//! ```
//!
//! with `theta^alpha(y) = 0, y 1(|y|<=1), y` for `alpha` below, at and above 1.
//! Probes must vanish at infinity (see [`crate::probe::Probe`]); sums and
//! integrals are truncated at the probe's effective support with analytic
//! tails, keeping absolute errors near 1e-9.

use crate::kernel::{alpha_regime, AlphaRegime, JumpKernel, KernelParams};
use crate::probe::Probe;
use crate::quad;
use crate::sums::tail_power_sum;
use crate::{Error, Result};

/// Coefficient pair of a continuum stable generator.
#[derive(Debug, Clone, Copy)]
pub struct StableCoeffs {
    pub alpha: f64,
    pub c_plus: f64,
    pub c_minus: f64,
}

impl StableCoeffs {
    pub fn new(alpha: f64, c_plus: f64, c_minus: f64) -> Result<Self> {
        KernelParams::new(alpha, c_plus, c_minus)?;
        Ok(Self {
            alpha,
            c_plus,
            c_minus,
        })
    }

    /// Continuum coefficients of a lattice kernel; the weak-asymmetry delta is
    /// a lattice term with no continuum counterpart.
    pub fn from_kernel(p: &KernelParams) -> Result<Self> {
        if p.weak_lambda != 0.0 {
            return Err(Error::InvalidParams(
                "weak-asymmetry kernels have no continuum coefficient pair".into(),
            ));
        }
        Self::new(p.alpha, p.c_plus, p.c_minus)
    }

    /// Coefficients of the symmetric part `S = L(c_sym, c_sym)`.
    pub fn symmetric_part(&self) -> Self {
        let c = 0.5 * (self.c_plus + self.c_minus);
        Self {
            alpha: self.alpha,
            c_plus: c,
            c_minus: c,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.c_plus == self.c_minus
    }
}

/// Coefficients of the skewed generator: `c_rho_plus = c+(1-rho) + c- rho` on
/// the positive side and the swap on the negative side. The adjoint swaps the
/// pair, i.e. corresponds to density `1 - rho`; the symmetric part does not
/// depend on `rho`.
#[derive(Debug, Clone, Copy)]
pub struct RhoCoefficients {
    pub c_rho_plus: f64,
    pub c_rho_minus: f64,
    pub rho: f64,
}

impl RhoCoefficients {
    pub fn new(params: &KernelParams, rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::InvalidParams(format!(
                "density must lie in (0, 1), got {rho}"
            )));
        }
        Ok(Self {
            c_rho_plus: params.c_plus * (1.0 - rho) + params.c_minus * rho,
            c_rho_minus: params.c_plus * rho + params.c_minus * (1.0 - rho),
            rho,
        })
    }

    pub fn adjoint(&self) -> Self {
        Self {
            c_rho_plus: self.c_rho_minus,
            c_rho_minus: self.c_rho_plus,
            rho: 1.0 - self.rho,
        }
    }

    pub fn coeffs(&self, alpha: f64) -> StableCoeffs {
        StableCoeffs {
            alpha,
            c_plus: self.c_rho_plus,
            c_minus: self.c_rho_minus,
        }
    }
}

/// Which lattice generator to apply.
#[derive(Debug, Clone, Copy)]
pub enum DiscreteVariant {
    Plain,
    /// The skewed operator at the given density.
    Skewed(f64),
}

/// Evaluate the discrete generator at lattice sites `x` (value at `x/n`).
pub fn apply_discrete_generator<P: Probe>(
    kernel: &JumpKernel,
    variant: DiscreteVariant,
    f: &P,
    n: u32,
    sites: &[i64],
) -> Result<Vec<f64>> {
    let nf = n as f64;
    let args: Vec<f64> = sites.iter().map(|&x| x as f64 / nf).collect();
    discrete_generator_profile(kernel, variant, f, n, &args)
}

/// The discrete generator as a function of a real argument.
///
/// `L_n f` is defined pointwise for any real `v` (the lattice enters only
/// through the displacement sum); this is what Lagrangian-frame observers
/// evaluate at shifted positions.
pub fn discrete_generator_profile<P: Probe>(
    kernel: &JumpKernel,
    variant: DiscreteVariant,
    f: &P,
    n: u32,
    args: &[f64],
) -> Result<Vec<f64>> {
    if args.is_empty() {
        return Ok(Vec::new());
    }
    let p = *kernel.params();
    let nf = n as f64;
    let rad = f.radius_for(1e-16);
    if !rad.is_finite() {
        return Err(Error::Truncation(
            "probe support radius must be finite".into(),
        ));
    }
    let center = f.center();
    let na = nf.powf(p.alpha);
    let (rho_mix, drift) = match variant {
        DiscreteVariant::Plain => (None, kernel.centering_constant(n)),
        DiscreteVariant::Skewed(rho) => {
            if !(rho > 0.0 && rho < 1.0) {
                return Err(Error::InvalidParams(format!("density {rho} out of (0,1)")));
            }
            (Some(rho), (1.0 - 2.0 * rho) * kernel.centering_constant(n))
        }
    };

    let vmin = args.iter().cloned().fold(f64::INFINITY, f64::min);
    let vmax = args.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let zmin = ((center - rad - vmax) * nf).floor() as i64 - 1;
    let zmax = ((center + rad - vmin) * nf).ceil() as i64 + 1;
    let table: Vec<f64> = (zmin..=zmax)
        .map(|z| match rho_mix {
            None => p.rate(z),
            Some(rho) => (1.0 - rho) * p.rate(z) + rho * p.rate(-z),
        })
        .collect();

    let mut out = Vec::with_capacity(args.len());
    for &v in args {
        let lo = (((center - rad - v) * nf).floor() as i64 - 1).max(zmin);
        let hi = (((center + rad - v) * nf).ceil() as i64 + 1).min(zmax);
        let mut acc = 0.0;
        for z in lo..=hi {
            acc += table[(z - zmin) as usize] * f.value(v + z as f64 / nf);
        }
        out.push(na * (acc - kernel.p_star() * f.value(v)) - drift / nf * f.d1(v));
    }
    Ok(out)
}

/// Scale of a probe used to make quadrature targets amplitude-proportional,
/// so that the evaluation is exactly linear in the probe.
fn probe_scale<P: Probe>(f: &P) -> f64 {
    let c = f.center();
    let r = f.radius().max(1e-6);
    let mut m = 0.0f64;
    for i in 0..=64 {
        let x = c - r + 2.0 * r * i as f64 / 64.0;
        m = m
            .max(f.value(x).abs())
            .max(f.d1(x).abs())
            .max(f.d2(x).abs());
    }
    m.max(1e-300)
}

/// Evaluate the continuous generator at the given points by split quadrature.
pub fn apply_continuous_generator<P: Probe>(
    coeffs: &StableCoeffs,
    f: &P,
    points: &[f64],
) -> Result<Vec<f64>> {
    let scale = probe_scale(f);
    points
        .iter()
        .map(|&x| continuous_generator_at(coeffs, f, x, scale))
        .collect()
}

fn continuous_generator_at<P: Probe>(
    coeffs: &StableCoeffs,
    f: &P,
    x: f64,
    scale: f64,
) -> Result<f64> {
    let alpha = coeffs.alpha;
    let regime = alpha_regime(alpha);
    let rad = f.radius_for(1e-16);
    let center = f.center();
    let delta = 1e-4_f64;
    let target = 2.5e-9 * scale;

    let mut total = 0.0;
    for (sign, c_side) in [(1.0, coeffs.c_plus), (-1.0, coeffs.c_minus)] {
        if c_side == 0.0 {
            continue;
        }
        let fx = f.value(x);
        let d1 = f.d1(x);
        let d2 = f.d2(x);
        let d3 = f.d3(x);

        // Inner [0, delta]: Taylor-regularized, integrated in closed form.
        let mut inner = d2 / 2.0 * delta.powf(2.0 - alpha) / (2.0 - alpha)
            + sign * d3 / 6.0 * delta.powf(3.0 - alpha) / (3.0 - alpha);
        if regime == AlphaRegime::Sub {
            inner += sign * d1 * delta.powf(1.0 - alpha) / (1.0 - alpha);
        }

        // Middle [delta, 1]: compensated integrand unless alpha < 1.
        let comp_mid = regime != AlphaRegime::Sub;
        let mid = quad::integrate_breaks(
            |y: f64| {
                let mut num = f.value(x + sign * y) - fx;
                if comp_mid {
                    num -= sign * y * d1;
                }
                num * y.powf(-1.0 - alpha)
            },
            &quad::geometric_breaks(delta, 1.0),
            target,
        )?;

        // Outer [1, E] up to the support edge, then the analytic tail.
        let comp_outer = regime == AlphaRegime::Super;
        let edge = if sign > 0.0 {
            center + rad - x
        } else {
            x - (center - rad)
        };
        let e = edge.max(1.0);
        let outer = if e > 1.0 {
            quad::integrate_breaks(
                |y: f64| {
                    let mut num = f.value(x + sign * y) - fx;
                    if comp_outer {
                        num -= sign * y * d1;
                    }
                    num * y.powf(-1.0 - alpha)
                },
                &quad::uniform_breaks(1.0, e, 0.5),
                target,
            )?
        } else {
            0.0
        };
        let mut tail = -fx * e.powf(-alpha) / alpha;
        if comp_outer {
            tail -= sign * d1 * e.powf(1.0 - alpha) / (alpha - 1.0);
        }

        total += c_side * (inner + mid + outer + tail);
    }
    Ok(total)
}

/// Continuous Dirichlet form
/// `E(f) = (c+ + c-)/4 * double-integral (f(y)-f(x))^2 / |y-x|^{1+alpha}`.
pub fn dirichlet_form_continuous<P: Probe>(coeffs: &StableCoeffs, f: &P) -> Result<f64> {
    let alpha = coeffs.alpha;
    let csum = coeffs.c_plus + coeffs.c_minus;
    let rad = f.radius();
    let center = f.center();
    let scale2 = probe_scale(f).powi(2);

    let panel = rad / 12.0;
    let norm = |g: &dyn Fn(f64) -> f64| {
        quad::integrate_smooth(
            |x| g(x) * g(x),
            center - rad,
            center + rad,
            panel,
            1e-13 * scale2 * rad.max(1.0),
        )
    };
    let i2 = norm(&|x| f.value(x))?;
    let np1 = norm(&|x| f.d1(x))?;
    let np2 = norm(&|x| f.d2(x))?;

    // G(z) = int (f(x+z) - f(x))^2 dx, expanded to z^4 near zero.
    let delta = 1e-3_f64;
    let inner = np1 * delta.powf(2.0 - alpha) / (2.0 - alpha)
        - np2 / 12.0 * delta.powf(4.0 - alpha) / (4.0 - alpha);

    let z_cut = 2.0 * rad + 1.0;
    let g_of = |z: f64| -> f64 {
        quad::integrate_fixed(
            |x| {
                let d = f.value(x + z) - f.value(x);
                d * d
            },
            &quad::uniform_breaks(center - rad - z, center + rad, panel),
        )
    };
    let mid = quad::integrate_breaks(
        |z: f64| z.powf(-1.0 - alpha) * g_of(z),
        &quad::geometric_breaks(delta, z_cut),
        1e-9 * scale2,
    )?;

    let tail = 2.0 * i2 * z_cut.powf(-alpha) / alpha;
    Ok(csum / 2.0 * (inner + mid + tail))
}

/// Discrete Dirichlet form
/// `E_n(f) = (n^{alpha-1}/2) sum_{x,y} s(y-x) (f(y/n) - f(x/n))^2`,
/// optionally truncated at displacement `cutoff` (used to match the
/// quadratic-variation observer exactly).
pub fn dirichlet_form_discrete<P: Probe>(
    kernel: &JumpKernel,
    f: &P,
    n: u32,
    cutoff: Option<u64>,
) -> Result<f64> {
    let p = kernel.params();
    let nf = n as f64;
    let rad = f.radius_for(1e-16);
    let center = f.center();
    let z_num = match cutoff {
        Some(k) => k as i64,
        None => (2.0 * rad * nf).ceil() as i64 + 2,
    };
    let lo = ((center - rad) * nf).floor() as i64 - 1;
    let hi = ((center + rad) * nf).ceil() as i64 + 1;
    // f on the lattice over [lo - z_num, hi]; zero outside (beyond support).
    let tab_lo = lo - z_num;
    let table: Vec<f64> = (tab_lo..=hi).map(|x| f.value(x as f64 / nf)).collect();
    let get = |x: i64| -> f64 {
        if x < tab_lo || x > hi {
            0.0
        } else {
            table[(x - tab_lo) as usize]
        }
    };

    let mut acc = 0.0;
    for z in 1..=z_num {
        let s_z = p.decompose(z).0;
        let mut w = 0.0;
        for x in (lo - z)..=hi {
            let d = get(x + z) - get(x);
            w += d * d;
        }
        acc += s_z * w;
    }
    if cutoff.is_none() {
        let s2: f64 = (lo..=hi).map(|x| get(x).powi(2)).sum();
        acc += 0.5 * (p.c_plus + p.c_minus) * tail_power_sum((z_num + 1) as f64, 1.0 + p.alpha)
            * 2.0
            * s2;
    }
    Ok(nf.powf(p.alpha - 1.0) * acc)
}
