//! Test functions probing the fields and operators.
//!
//! Everything that evaluates a field or an operator is generic over [`Probe`]:
//! a smooth, rapidly decaying function with closed-form derivatives and a
//! finite effective support. The concrete, serializable family used by
//! experiment configs is [`TestFunction`]: Hermite polynomials times a
//! Gaussian, which covers plain Gaussians (degree 0) and stays closed under
//! differentiation.

use serde::{Deserialize, Serialize};

use crate::quad;
use crate::{Error, Result};

/// A smooth probe function with analytic derivatives up to third order and an
/// effective support radius.
pub trait Probe {
    fn value(&self, x: f64) -> f64;
    fn d1(&self, x: f64) -> f64;
    fn d2(&self, x: f64) -> f64;
    fn d3(&self, x: f64) -> f64;
    /// Center of the support window.
    fn center(&self) -> f64;
    /// Radius r such that |f|, |f'|, |f''| < tol outside [center-r, center+r].
    fn radius_for(&self, tol: f64) -> f64;
    fn radius(&self) -> f64 {
        self.radius_for(1e-14)
    }
}

impl<P: Probe + ?Sized> Probe for &P {
    fn value(&self, x: f64) -> f64 {
        (**self).value(x)
    }
    fn d1(&self, x: f64) -> f64 {
        (**self).d1(x)
    }
    fn d2(&self, x: f64) -> f64 {
        (**self).d2(x)
    }
    fn d3(&self, x: f64) -> f64 {
        (**self).d3(x)
    }
    fn center(&self) -> f64 {
        (**self).center()
    }
    fn radius_for(&self, tol: f64) -> f64 {
        (**self).radius_for(tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeFamily {
    Gaussian,
    HermiteGaussian,
}

/// `A * H_k((x-c)/w) * exp(-((x-c)/w)^2)`.
///
/// With `phi_j(u) = H_j(u) exp(-u^2)` one has `phi_j' = -phi_{j+1}`, so every
/// derivative stays in the family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestFunction {
    pub family: ProbeFamily,
    #[serde(default)]
    pub center: f64,
    #[serde(default = "one")]
    pub width: f64,
    #[serde(default)]
    pub hermite_degree: u32,
    #[serde(default = "one")]
    pub amplitude: f64,
}

fn one() -> f64 {
    1.0
}

impl TestFunction {
    pub fn gaussian(center: f64, width: f64) -> Self {
        Self {
            family: ProbeFamily::Gaussian,
            center,
            width,
            hermite_degree: 0,
            amplitude: 1.0,
        }
    }

    pub fn hermite_gaussian(center: f64, width: f64, degree: u32) -> Self {
        Self {
            family: ProbeFamily::HermiteGaussian,
            center,
            width,
            hermite_degree: degree,
            amplitude: 1.0,
        }
    }

    pub fn with_amplitude(mut self, a: f64) -> Self {
        self.amplitude = a;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0) || !self.width.is_finite() {
            return Err(Error::InvalidParams(format!(
                "test function width must be positive, got {}",
                self.width
            )));
        }
        if self.family == ProbeFamily::Gaussian && self.hermite_degree != 0 {
            return Err(Error::InvalidParams(
                "gaussian family has hermite_degree 0".into(),
            ));
        }
        if self.hermite_degree > 30 {
            return Err(Error::InvalidParams(
                "hermite_degree above 30 is numerically fragile".into(),
            ));
        }
        Ok(())
    }

    fn degree(&self) -> u32 {
        match self.family {
            ProbeFamily::Gaussian => 0,
            ProbeFamily::HermiteGaussian => self.hermite_degree,
        }
    }

    /// m-th derivative, m <= 3.
    fn deriv(&self, x: f64, m: u32) -> f64 {
        let u = (x - self.center) / self.width;
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        sign * self.amplitude * self.width.powi(-(m as i32)) * phi(self.degree() + m, u)
    }
}

/// `H_j(u) * exp(-u^2)` via the Hermite recurrence.
fn phi(j: u32, u: f64) -> f64 {
    let e = (-u * u).exp();
    if e == 0.0 {
        return 0.0;
    }
    let mut h_prev = 1.0;
    if j == 0 {
        return e;
    }
    let mut h = 2.0 * u;
    for i in 1..j {
        let next = 2.0 * u * h - 2.0 * (i as f64) * h_prev;
        h_prev = h;
        h = next;
    }
    h * e
}

impl Probe for TestFunction {
    fn value(&self, x: f64) -> f64 {
        self.deriv(x, 0)
    }
    fn d1(&self, x: f64) -> f64 {
        self.deriv(x, 1)
    }
    fn d2(&self, x: f64) -> f64 {
        self.deriv(x, 2)
    }
    fn d3(&self, x: f64) -> f64 {
        self.deriv(x, 3)
    }
    fn center(&self) -> f64 {
        self.center
    }

    fn radius_for(&self, tol: f64) -> f64 {
        let k = self.degree();
        let scale = self.amplitude.abs().max(1e-300) * self.width.powi(-2).max(1.0);
        // Beyond the last Hermite zero the envelope decays like exp(-u^2);
        // scan outward until f, f', f'' are all below tolerance.
        let mut u = (k as f64 + 1.0).sqrt();
        loop {
            let m = phi(k, u)
                .abs()
                .max(phi(k + 1, u).abs())
                .max(phi(k + 2, u).abs());
            if m * scale < tol {
                return u * self.width;
            }
            u += 0.01;
            if u > 1e3 {
                return 1e3 * self.width;
            }
        }
    }
}

/// Pointwise-scaled sum of two probes; the closure under linear combination
/// used by linearity checks.
pub struct LinearComb<'a, P: Probe, Q: Probe> {
    pub a: f64,
    pub f: &'a P,
    pub b: f64,
    pub g: &'a Q,
}

impl<P: Probe, Q: Probe> Probe for LinearComb<'_, P, Q> {
    fn value(&self, x: f64) -> f64 {
        self.a * self.f.value(x) + self.b * self.g.value(x)
    }
    fn d1(&self, x: f64) -> f64 {
        self.a * self.f.d1(x) + self.b * self.g.d1(x)
    }
    fn d2(&self, x: f64) -> f64 {
        self.a * self.f.d2(x) + self.b * self.g.d2(x)
    }
    fn d3(&self, x: f64) -> f64 {
        self.a * self.f.d3(x) + self.b * self.g.d3(x)
    }
    fn center(&self) -> f64 {
        0.5 * (self.f.center() + self.g.center())
    }
    fn radius_for(&self, tol: f64) -> f64 {
        let c = self.center();
        let rf = (self.f.center() - c).abs() + self.f.radius_for(tol / (2.0 * self.a.abs().max(1.0)));
        let rg = (self.g.center() - c).abs() + self.g.radius_for(tol / (2.0 * self.b.abs().max(1.0)));
        rf.max(rg)
    }
}

/// `int f(x) g(x) dx` over the joint support.
pub fn l2_inner<P: Probe, Q: Probe>(f: &P, g: &Q) -> Result<f64> {
    let lo = (f.center() - f.radius()).min(g.center() - g.radius());
    let hi = (f.center() + f.radius()).max(g.center() + g.radius());
    let panel = f.radius().min(g.radius()) / 12.0;
    quad::integrate_smooth(|x| f.value(x) * g.value(x), lo, hi, panel, 1e-13)
}

/// `int f(x)^2 dx`.
pub fn l2_norm2<P: Probe>(f: &P) -> Result<f64> {
    l2_inner(f, f)
}
