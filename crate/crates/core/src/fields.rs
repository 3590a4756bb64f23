//! Observables of the exclusion process: the density fluctuation field in the
//! Lagrangian frame, the drift field, the quadratic-variation integrand,
//! block averages and their conditional-expectation identity, the mollified
//! energy field, the occupation time, and the static drift-variance
//! diagnostic.
//!
//! All evaluators read an immutable [`LatticeState`] snapshot. Ring sites are
//! unwrapped around the Lagrangian shift `(1-2 rho) m_n^alpha t`; probes see
//! the coordinate `(u - shift)/n` of the unwrapped representative `u`. When a
//! probe's support window does not fit in the ring (small test systems) the
//! evaluators fall back to one full sweep of the ring; experiment-grade
//! observers ([`MeshTables`]) require the window to stay below half the ring.

use serde::{Deserialize, Serialize};

use crate::generator::{discrete_generator_profile, DiscreteVariant};
use crate::kernel::{JumpKernel, KernelParams};
use crate::probe::{Probe, TestFunction};
use crate::simulator::{macro_mesh, LatticeState, RunSink};
use crate::sums::tail_power_sum;
use crate::{Error, Result};

/// Lagrangian frame position at macroscopic time `t`, in site units.
pub fn lagrangian_shift(kernel: &JumpKernel, n: u32, rho: f64, t: f64) -> f64 {
    (1.0 - 2.0 * rho) * kernel.centering_constant(n) * t
}

fn wrap(u: i64, ring: usize) -> usize {
    u.rem_euclid(ring as i64) as usize
}

/// Unwrapped coordinate window covering the probe support around the shift;
/// falls back to the full ring when the support does not fit.
fn window_bounds(ring: usize, n: u32, shift: f64, center: f64, rad: f64) -> (i64, i64) {
    let nf = n as f64;
    let lo = (shift + (center - rad) * nf).floor() as i64 - 1;
    let hi = (shift + (center + rad) * nf).ceil() as i64 + 1;
    if (hi - lo + 1) as usize >= ring {
        let lo = (shift - ring as f64 / 2.0).ceil() as i64;
        (lo, lo + ring as i64 - 1)
    } else {
        (lo, hi)
    }
}

/// `Y_t^n(f) = n^{-1/2} sum_x etabar(x) f((x - shift)/n)` at a given shift.
pub fn fluctuation_field_at_shift<P: Probe>(
    state: &LatticeState,
    f: &P,
    n: u32,
    shift: f64,
) -> f64 {
    let ring = state.ring_size();
    let (lo, hi) = window_bounds(ring, n, shift, f.center(), f.radius());
    let nf = n as f64;
    let mut acc = 0.0;
    for u in lo..=hi {
        acc += state.eta_bar(wrap(u, ring)) * f.value((u as f64 - shift) / nf);
    }
    acc / nf.sqrt()
}

/// The density fluctuation field in the Lagrangian frame at macro time `t`.
pub fn fluctuation_field<P: Probe>(
    state: &LatticeState,
    f: &P,
    n: u32,
    t: f64,
    kernel: &JumpKernel,
) -> f64 {
    fluctuation_field_at_shift(state, f, n, lagrangian_shift(kernel, n, state.rho, t))
}

fn check_cutoff(k_cut: u32, ring: usize) -> Result<()> {
    if k_cut as usize > ring / 2 {
        return Err(Error::InvalidParams(format!(
            "pair cutoff {k_cut} exceeds half the ring {}",
            ring / 2
        )));
    }
    Ok(())
}

/// Integrand of the drift field `A_t^n(f)`:
/// `n^{alpha-1/2} sum_{0<|y-x|<=K} a(y-x) etabar(y) etabar(x) (f_y - f_x)`.
pub fn drift_field_increment_at_shift<P: Probe>(
    state: &LatticeState,
    params: &KernelParams,
    f: &P,
    n: u32,
    shift: f64,
    k_cut: u32,
) -> Result<f64> {
    check_cutoff(k_cut, state.ring_size())?;
    if params.is_symmetric() {
        return Ok(0.0);
    }
    let rates: Vec<f64> = (1..=k_cut as i64).map(|d| params.decompose(d).1).collect();
    let sum = pair_sum(state, f, n, shift, &rates, PairKind::Drift);
    Ok(2.0 * (n as f64).powf(params.alpha - 0.5) * sum)
}

pub fn drift_field_increment<P: Probe>(
    state: &LatticeState,
    kernel: &JumpKernel,
    f: &P,
    n: u32,
    t: f64,
    k_cut: u32,
) -> Result<f64> {
    let shift = lagrangian_shift(kernel, n, state.rho, t);
    drift_field_increment_at_shift(state, kernel.params(), f, n, shift, k_cut)
}

/// Integrand of the quadratic variation:
/// `n^{alpha-1} sum_{0<|y-x|<=K} p(y-x) (eta(y)-eta(x))^2 (f_y - f_x)^2`.
pub fn qv_increment_at_shift<P: Probe>(
    state: &LatticeState,
    params: &KernelParams,
    f: &P,
    n: u32,
    shift: f64,
    k_cut: u32,
) -> Result<f64> {
    check_cutoff(k_cut, state.ring_size())?;
    let rates: Vec<f64> = (1..=k_cut as i64).map(|d| params.decompose(d).0).collect();
    let sum = pair_sum(state, f, n, shift, &rates, PairKind::Qv);
    Ok(2.0 * (n as f64).powf(params.alpha - 1.0) * sum)
}

pub fn qv_increment<P: Probe>(
    state: &LatticeState,
    kernel: &JumpKernel,
    f: &P,
    n: u32,
    t: f64,
    k_cut: u32,
) -> Result<f64> {
    let shift = lagrangian_shift(kernel, n, state.rho, t);
    qv_increment_at_shift(state, kernel.params(), f, n, shift, k_cut)
}

enum PairKind {
    Drift,
    Qv,
}

/// `sum_d rate(d) sum_x w(x, x+d)` over the probe window (or the whole ring),
/// with `w` the drift or QV pair weight.
fn pair_sum<P: Probe>(
    state: &LatticeState,
    f: &P,
    n: u32,
    shift: f64,
    rates: &[f64],
    kind: PairKind,
) -> f64 {
    let ring = state.ring_size();
    let k_cut = rates.len() as i64;
    let (lo, hi) = window_bounds(ring, n, shift, f.center(), f.radius());
    let full_ring = (hi - lo + 1) as usize >= ring;
    let nf = n as f64;

    // etabar and f over [lo - K, hi + K] (absolute coordinates); in full-ring
    // mode each partner site uses its own representative's coordinate.
    let (blo, bhi) = if full_ring { (lo, hi) } else { (lo - k_cut, hi + k_cut) };
    let len = (bhi - blo + 1) as usize;
    let mut eta = Vec::with_capacity(len);
    let mut fv = Vec::with_capacity(len);
    for u in blo..=bhi {
        eta.push(state.eta_bar(wrap(u, ring)));
        fv.push(f.value((u as f64 - shift) / nf));
    }

    let mut total = 0.0;
    for (di, &rate) in rates.iter().enumerate() {
        if rate == 0.0 {
            continue;
        }
        let d = di + 1;
        let mut acc = 0.0;
        if full_ring {
            for i in 0..len {
                let j = (i + d) % len;
                let w = match kind {
                    PairKind::Drift => eta[i] * eta[j] * (fv[j] - fv[i]),
                    PairKind::Qv => {
                        let de = eta[j] - eta[i];
                        let df = fv[j] - fv[i];
                        de * de * df * df
                    }
                };
                acc += w;
            }
        } else {
            for i in 0..len - d {
                let w = match kind {
                    PairKind::Drift => eta[i] * eta[i + d] * (fv[i + d] - fv[i]),
                    PairKind::Qv => {
                        let de = eta[i + d] - eta[i];
                        let df = fv[i + d] - fv[i];
                        de * de * df * df
                    }
                };
                acc += w;
            }
        }
        total += rate * acc;
    }
    total
}

/// Block density `eta^ell(x) = (1/ell) sum_{i=0}^{ell-1} eta(x+i)`, ring-wrapped.
pub fn block_average(state: &LatticeState, x: usize, ell: usize) -> f64 {
    assert!(ell >= 1 && ell <= state.ring_size());
    let ring = state.ring_size();
    let mut acc = 0.0;
    for i in 0..ell {
        acc += state.occupied((x + i) % ring) as u8 as f64;
    }
    acc / ell as f64
}

/// Conditional expectation `E[etabar(x) etabar(x+1) | eta^ell(x)]` evaluated
/// through the closed identity in the block density.
pub fn psi_block(state: &LatticeState, x: usize, ell: usize, rho: f64) -> f64 {
    assert!(ell >= 2);
    let eb = block_average(state, x, ell) - rho;
    psi_block_of_density(eb, ell, rho)
}

/// The identity as a function of the centered block density.
pub fn psi_block_of_density(eta_bar_block: f64, ell: usize, rho: f64) -> f64 {
    let l = ell as f64;
    l / (l - 1.0) * (eta_bar_block * eta_bar_block - rho * (1.0 - rho) / l)
        + (2.0 * rho - 1.0) / (l - 1.0) * eta_bar_block
}

/// Spatial integrand of the mollified energy field:
/// `(1/n) sum_x (Y * iota_eps)(x/n)^2 f'((x - shift)/n)` with the box
/// mollifier identity `(Y * iota_eps)(x/n) = (1/(eps sqrt n)) sum_{i=1}^{eps n} etabar(x+i)`.
pub fn energy_increment_at_shift<P: Probe>(
    state: &LatticeState,
    f: &P,
    n: u32,
    eps: f64,
    shift: f64,
) -> Result<f64> {
    let m = (eps * n as f64).round() as usize;
    if m < 1 {
        return Err(Error::InvalidParams(format!(
            "mollifier needs eps*n >= 1, got {}",
            eps * n as f64
        )));
    }
    let ring = state.ring_size();
    let (lo, hi) = window_bounds(ring, n, shift, f.center(), f.radius());
    let nf = n as f64;
    let norm = 1.0 / (eps * nf.sqrt());
    // Sliding block sum of etabar over (u, u+m].
    let mut conv = 0.0;
    for i in 1..=m {
        conv += state.eta_bar(wrap(lo + i as i64, ring));
    }
    let mut acc = 0.0;
    for u in lo..=hi {
        let y = conv * norm;
        acc += y * y * f.d1((u as f64 - shift) / nf);
        conv -= state.eta_bar(wrap(u + 1, ring));
        conv += state.eta_bar(wrap(u + 1 + m as i64, ring));
    }
    Ok(acc / nf)
}

/// Time integral of the energy increments over `[s, t]` on the mesh.
pub fn energy_field(mesh: &[f64], increments: &[f64], s: f64, t: f64) -> Result<f64> {
    if mesh.len() != increments.len() {
        return Err(Error::MeshMismatch("mesh/series length".into()));
    }
    let pos = |v: f64| -> Result<usize> {
        mesh.iter()
            .position(|&m| (m - v).abs() < 1e-9)
            .ok_or_else(|| Error::MeshMismatch(format!("time {v} not on mesh")))
    };
    let (i, j) = (pos(s)?, pos(t)?);
    let mut acc = 0.0;
    for k in i..j {
        acc += 0.5 * (increments[k] + increments[k + 1]) * (mesh[k + 1] - mesh[k]);
    }
    Ok(acc)
}

/// Rescale the exact microscopic origin integral to the occupation-time
/// process `sqrt(n) int_0^t (eta^n_s(0) - rho) ds`.
pub fn occupation_time(raw_micro_integrals: &[f64], n: u32, alpha: f64) -> Vec<f64> {
    let scale = (n as f64).sqrt() / (n as f64).powf(alpha);
    raw_micro_integrals.iter().map(|v| v * scale).collect()
}

/// Static variance diagnostic of the drift field:
/// `n^{2 alpha - 1} sum_{x,y} a(y-x)^2 (f(y/n) - f(x/n))^2`.
pub fn afield_static_variance<P: Probe>(kernel: &JumpKernel, f: &P, n: u32) -> f64 {
    let p = kernel.params();
    if p.is_symmetric() {
        return 0.0;
    }
    let nf = n as f64;
    let rad = f.radius_for(1e-16);
    let center = f.center();
    let d_num = (2.0 * rad * nf).ceil() as i64 + 2;
    let lo = ((center - rad) * nf).floor() as i64 - 1;
    let hi = ((center + rad) * nf).ceil() as i64 + 1;
    let tab_lo = lo - d_num;
    let table: Vec<f64> = (tab_lo..=hi).map(|x| f.value(x as f64 / nf)).collect();
    let get = |x: i64| -> f64 {
        if x < tab_lo || x > hi {
            0.0
        } else {
            table[(x - tab_lo) as usize]
        }
    };
    let mut acc = 0.0;
    for d in 1..=d_num {
        let a = p.decompose(d).1;
        if a == 0.0 {
            continue;
        }
        let mut w = 0.0;
        for x in (lo - d)..=hi {
            let diff = get(x + d) - get(x);
            w += diff * diff;
        }
        acc += a * a * w;
    }
    // Far pairs: disjoint supports, a(d)^2 is a pure power beyond d = 1.
    let s2: f64 = (lo..=hi).map(|x| get(x).powi(2)).sum();
    let a_amp = 0.5 * (p.c_plus - p.c_minus);
    acc += a_amp * a_amp * tail_power_sum((d_num + 1) as f64, 2.0 + 2.0 * p.alpha) * 2.0 * s2;
    nf.powf(2.0 * p.alpha - 1.0) * 2.0 * acc
}

/// Cumulative trapezoid of a mesh series; entry 0 is 0.
pub fn cumulative_trapezoid(mesh: &[f64], values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..values.len() {
        acc += 0.5 * (values[k] + values[k - 1]) * (mesh[k] - mesh[k - 1]);
        out.push(acc);
    }
    out
}

/// Assemble the martingale
/// `M_t = Y_t - Y_0 - int_0^t Y_s(L_n^rho f) ds + A_t`
/// from the Y series, the generator-field series and the drift integrand.
pub fn martingale_residual(
    mesh: &[f64],
    y: &[f64],
    gen_field: &[f64],
    a_integrand: &[f64],
) -> Result<Vec<f64>> {
    if y.len() != mesh.len() || gen_field.len() != mesh.len() || a_integrand.len() != mesh.len() {
        return Err(Error::MeshMismatch("martingale series lengths differ".into()));
    }
    let int_gen = cumulative_trapezoid(mesh, gen_field);
    let a_t = cumulative_trapezoid(mesh, a_integrand);
    Ok((0..mesh.len())
        .map(|k| y[k] - y[0] - int_gen[k] + a_t[k])
        .collect())
}

/// Observer configuration, matching the JSON experiment schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "field")]
pub enum ObserverSpec {
    /// Density fluctuation field `Y_t^n(f)`.
    #[serde(rename = "Y")]
    Fluctuation { f: TestFunction },
    /// Drift-field integrand with pair cutoff (default K = n).
    #[serde(rename = "A")]
    Drift {
        f: TestFunction,
        #[serde(default)]
        cutoff_k: Option<u32>,
    },
    /// Quadratic-variation integrand with pair cutoff (default K = n).
    #[serde(rename = "QV")]
    Qv {
        f: TestFunction,
        #[serde(default)]
        cutoff_k: Option<u32>,
    },
    /// `Y_t^n(L_n^rho f)`, the integral term of the martingale decomposition.
    #[serde(rename = "gen")]
    Generator { f: TestFunction },
    /// `psi_0^ell` at the origin block.
    #[serde(rename = "psi")]
    PsiBlock { ell: u32 },
    /// Spatial integrand of the mollified energy field.
    #[serde(rename = "energy")]
    Energy { f: TestFunction, eps: f64 },
    /// Occupation-time process at the origin (event-exact).
    #[serde(rename = "occupation")]
    Occupation,
}

impl ObserverSpec {
    fn probe(&self) -> Option<&TestFunction> {
        match self {
            ObserverSpec::Fluctuation { f }
            | ObserverSpec::Drift { f, .. }
            | ObserverSpec::Qv { f, .. }
            | ObserverSpec::Generator { f }
            | ObserverSpec::Energy { f, .. } => Some(f),
            _ => None,
        }
    }
}

enum ObsTable {
    /// Per mesh time: window start and probe values over the window.
    Window { lo: Vec<i64>, fv: Vec<Vec<f64>> },
    /// Window extended by the cutoff, with per-displacement rates.
    Pairs {
        lo: Vec<i64>,
        fv: Vec<Vec<f64>>,
        rates: Vec<f64>,
        prefactor: f64,
        drift: bool,
        skip: bool,
    },
    /// Window with values of the discrete skewed generator of f.
    GenField { lo: Vec<i64>, gv: Vec<Vec<f64>> },
    /// Window with f' values and the mollifier length.
    EnergyT {
        lo: Vec<i64>,
        fpv: Vec<Vec<f64>>,
        m: usize,
        eps: f64,
    },
    Psi { ell: usize },
    Occupation { scale: f64 },
}

/// Precomputed per-mesh evaluation tables, shared read-only across replicates.
pub struct MeshTables {
    pub mesh: Vec<f64>,
    pub t_end: f64,
    pub dt: f64,
    pub n: u32,
    pub ring: usize,
    pub rho: f64,
    pub specs: Vec<ObserverSpec>,
    tables: Vec<ObsTable>,
}

impl MeshTables {
    pub fn new(
        kernel: &JumpKernel,
        n: u32,
        ring: usize,
        rho: f64,
        t_end: f64,
        dt: f64,
        specs: &[ObserverSpec],
    ) -> Result<Self> {
        let mesh = macro_mesh(t_end, dt)?;
        let shifts: Vec<f64> = mesh
            .iter()
            .map(|&t| lagrangian_shift(kernel, n, rho, t))
            .collect();
        let nf = n as f64;
        let alpha = kernel.params().alpha;

        let mut tables = Vec::with_capacity(specs.len());
        for spec in specs {
            // Experiment-grade windows must fit in half the ring.
            if let Some(f) = spec.probe() {
                f.validate()?;
                let window = (2.0 * f.radius() * nf).ceil() as usize + 4;
                if window >= ring / 2 {
                    return Err(Error::WindowOverflow { window, ring });
                }
            }
            let windows = |f: &TestFunction, margin: i64| -> (Vec<i64>, Vec<(i64, i64)>) {
                let mut los = Vec::with_capacity(mesh.len());
                let mut spans = Vec::with_capacity(mesh.len());
                for &s in &shifts {
                    let (lo, hi) = window_bounds(ring, n, s, f.center(), f.radius());
                    los.push(lo - margin);
                    spans.push((lo - margin, hi + margin));
                }
                (los, spans)
            };
            let table = match spec {
                ObserverSpec::Fluctuation { f } => {
                    let (los, spans) = windows(f, 0);
                    let fv = spans
                        .iter()
                        .zip(&shifts)
                        .map(|(&(lo, hi), &s)| {
                            (lo..=hi).map(|u| f.value((u as f64 - s) / nf)).collect()
                        })
                        .collect();
                    ObsTable::Window { lo: los, fv }
                }
                ObserverSpec::Drift { f, cutoff_k } | ObserverSpec::Qv { f, cutoff_k } => {
                    let drift = matches!(spec, ObserverSpec::Drift { .. });
                    let k_cut = cutoff_k.unwrap_or(n);
                    check_cutoff(k_cut, ring)?;
                    let rates: Vec<f64> = (1..=k_cut as i64)
                        .map(|d| {
                            let (s, a) = kernel.params().decompose(d);
                            if drift {
                                a
                            } else {
                                s
                            }
                        })
                        .collect();
                    let skip = drift && kernel.params().is_symmetric();
                    let (los, spans) = windows(f, k_cut as i64);
                    let fv = if skip {
                        vec![Vec::new(); mesh.len()]
                    } else {
                        spans
                            .iter()
                            .zip(&shifts)
                            .map(|(&(lo, hi), &s)| {
                                (lo..=hi).map(|u| f.value((u as f64 - s) / nf)).collect()
                            })
                            .collect()
                    };
                    let prefactor = if drift {
                        2.0 * nf.powf(alpha - 0.5)
                    } else {
                        2.0 * nf.powf(alpha - 1.0)
                    };
                    ObsTable::Pairs {
                        lo: los,
                        fv,
                        rates,
                        prefactor,
                        drift,
                        skip,
                    }
                }
                ObserverSpec::Generator { f } => {
                    let (los, spans) = windows(f, 0);
                    let mut gv = Vec::with_capacity(mesh.len());
                    for (&(lo, hi), &s) in spans.iter().zip(&shifts) {
                        let args: Vec<f64> =
                            (lo..=hi).map(|u| (u as f64 - s) / nf).collect();
                        gv.push(discrete_generator_profile(
                            kernel,
                            DiscreteVariant::Skewed(rho),
                            f,
                            n,
                            &args,
                        )?);
                    }
                    ObsTable::GenField { lo: los, gv }
                }
                ObserverSpec::Energy { f, eps } => {
                    let m = (eps * nf).round() as usize;
                    if m < 1 {
                        return Err(Error::InvalidParams("energy mollifier: eps*n < 1".into()));
                    }
                    let (los, spans) = windows(f, 0);
                    let fpv = spans
                        .iter()
                        .zip(&shifts)
                        .map(|(&(lo, hi), &s)| {
                            (lo..=hi).map(|u| f.d1((u as f64 - s) / nf)).collect()
                        })
                        .collect();
                    ObsTable::EnergyT {
                        lo: los,
                        fpv,
                        m,
                        eps: *eps,
                    }
                }
                ObserverSpec::PsiBlock { ell } => {
                    if *ell < 2 || *ell as usize > ring {
                        return Err(Error::InvalidParams("psi block needs 2 <= ell <= N".into()));
                    }
                    ObsTable::Psi { ell: *ell as usize }
                }
                ObserverSpec::Occupation => ObsTable::Occupation {
                    scale: nf.sqrt() / nf.powf(alpha),
                },
            };
            tables.push(table);
        }
        Ok(Self {
            mesh,
            t_end,
            dt,
            n,
            ring,
            rho,
            specs: specs.to_vec(),
            tables,
        })
    }
}

/// One stationary-start replicate: the Bernoulli initial configuration and
/// the dynamics both draw from a single stream seeded per replicate.
pub fn run_trajectory(
    ring: &crate::kernel::RingKernel,
    tables: &MeshTables,
    seed: u64,
) -> Result<FieldTrajectory> {
    use rand::SeedableRng;
    let mut rng = crate::SimRng::seed_from_u64(seed);
    let mut state = LatticeState::init(tables.ring, tables.rho, tables.n, &mut rng)?;
    let mut rec = TrajectoryRecorder::new(tables);
    let record = crate::simulator::run(
        &mut state,
        ring,
        tables.t_end,
        tables.dt,
        &mut rec,
        &mut rng,
    )?;
    Ok(FieldTrajectory {
        mesh: tables.mesh.clone(),
        series: rec.series,
        seed,
        events: record.events,
        rejected: record.rejected,
    })
}

/// Time-stamped observer series of one trajectory.
#[derive(Debug, Clone)]
pub struct FieldTrajectory {
    pub mesh: Vec<f64>,
    /// One series per observer, aligned with the mesh.
    pub series: Vec<Vec<f64>>,
    pub seed: u64,
    pub events: u64,
    pub rejected: u64,
}

/// Per-replicate recorder driving the observer tables.
pub struct TrajectoryRecorder<'a> {
    tables: &'a MeshTables,
    pub series: Vec<Vec<f64>>,
    eta: Vec<f64>,
}

impl<'a> TrajectoryRecorder<'a> {
    pub fn new(tables: &'a MeshTables) -> Self {
        let series = tables
            .tables
            .iter()
            .map(|_| Vec::with_capacity(tables.mesh.len()))
            .collect();
        Self {
            tables,
            series,
            eta: Vec::new(),
        }
    }

    fn eta_buffer(&mut self, state: &LatticeState, lo: i64, len: usize) {
        self.eta.clear();
        self.eta.reserve(len);
        let ring = state.ring_size();
        let mut site = wrap(lo, ring);
        for _ in 0..len {
            self.eta.push(state.eta_bar(site));
            site += 1;
            if site == ring {
                site = 0;
            }
        }
    }
}

impl RunSink for TrajectoryRecorder<'_> {
    fn at_mesh(&mut self, state: &LatticeState, t_macro: f64, idx: usize) {
        let t = self.tables;
        let nf = t.n as f64;
        let _ = t_macro;
        for (oi, table) in t.tables.iter().enumerate() {
            let value = match table {
                ObsTable::Window { lo, fv } => {
                    let f = &fv[idx];
                    self.eta_buffer(state, lo[idx], f.len());
                    let mut acc = 0.0;
                    for (e, w) in self.eta.iter().zip(f) {
                        acc += e * w;
                    }
                    acc / nf.sqrt()
                }
                ObsTable::Pairs {
                    lo,
                    fv,
                    rates,
                    prefactor,
                    drift,
                    skip,
                } => {
                    if *skip {
                        0.0
                    } else {
                        let f = &fv[idx];
                        self.eta_buffer(state, lo[idx], f.len());
                        let eta = &self.eta;
                        let len = f.len();
                        let mut total = 0.0;
                        for (di, &rate) in rates.iter().enumerate() {
                            if rate == 0.0 {
                                continue;
                            }
                            let d = di + 1;
                            let mut acc = 0.0;
                            if *drift {
                                for i in 0..len - d {
                                    acc += eta[i] * eta[i + d] * (f[i + d] - f[i]);
                                }
                            } else {
                                for i in 0..len - d {
                                    let de = eta[i + d] - eta[i];
                                    let df = f[i + d] - f[i];
                                    acc += de * de * df * df;
                                }
                            }
                            total += rate * acc;
                        }
                        prefactor * total
                    }
                }
                ObsTable::GenField { lo, gv } => {
                    let g = &gv[idx];
                    self.eta_buffer(state, lo[idx], g.len());
                    let mut acc = 0.0;
                    for (e, w) in self.eta.iter().zip(g) {
                        acc += e * w;
                    }
                    acc / nf.sqrt()
                }
                ObsTable::EnergyT { lo, fpv, m, eps } => {
                    let fp = &fpv[idx];
                    let len = fp.len() + m;
                    self.eta_buffer(state, lo[idx], len);
                    let eta = &self.eta;
                    let norm = 1.0 / (eps * nf.sqrt());
                    let mut conv: f64 = eta[1..=*m].iter().sum();
                    let mut acc = 0.0;
                    for (i, w) in fp.iter().enumerate() {
                        let y = conv * norm;
                        acc += y * y * w;
                        if i + 1 < fp.len() {
                            conv -= eta[i + 1];
                            conv += eta[i + 1 + m];
                        }
                    }
                    acc / nf
                }
                ObsTable::Psi { ell } => psi_block(state, 0, *ell, t.rho),
                ObsTable::Occupation { scale } => {
                    state.origin_integral_at(state.micro_time) * scale
                }
            };
            self.series[oi].push(value);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{JumpKernel, KernelParams};
    use crate::probe::LinearComb;
    use crate::simulator::run;
    use crate::SimRng;
    use rand::SeedableRng;

    fn kernel(alpha: f64, cp: f64, cm: f64) -> JumpKernel {
        JumpKernel::new(KernelParams::new(alpha, cp, cm).unwrap()).unwrap()
    }

    fn checkerboard(ring: usize, rho: f64, n: u32) -> LatticeState {
        let occ: Vec<bool> = (0..ring).map(|i| i % 2 == 0).collect();
        LatticeState::from_occupancy(occ, rho, n).unwrap()
    }

    #[test]
    fn fluctuation_hand_oracle_small_ring() {
        // n=2, N=8, rho=1/2, occupied at {0,2,4,6}: unwrapped coordinates
        // {-4..3} and Y = (1/sqrt 2) sum etabar(x) e^{-(x/2)^2}.
        let st = checkerboard(8, 0.5, 2);
        let f = TestFunction::gaussian(0.0, 1.0);
        let got = fluctuation_field_at_shift(&st, &f, 2, 0.0);
        let g = |x: f64| (-(x / 2.0) * (x / 2.0)).exp();
        let occupied = [0.0f64, 2.0, -4.0, -2.0];
        let empty = [1.0f64, 3.0, -3.0, -1.0];
        let hand = (occupied.iter().map(|&x| 0.5 * g(x)).sum::<f64>()
            - empty.iter().map(|&x| 0.5 * g(x)).sum::<f64>())
            / 2f64.sqrt();
        assert!((got - hand).abs() < 1e-14, "{got} vs {hand}");
    }

    #[test]
    fn fluctuation_variance_at_time_zero() {
        let k = kernel(1.5, 1.0, 1.0);
        let n = 64u32;
        let ring = 32 * n as usize;
        let f = TestFunction::gaussian(0.0, 1.0);
        let rho = 0.5;
        let reps = 4000;
        let mut vals = Vec::with_capacity(reps);
        for r in 0..reps {
            let st = LatticeState::init(ring, rho, n, &mut SimRng::seed_from_u64(1000 + r as u64))
                .unwrap();
            vals.push(fluctuation_field(&st, &f, n, 0.0, &k));
        }
        let m = crate::stats::moments(&vals).unwrap();
        // Pre-limit variance: rho(1-rho) n^{-1} sum f(x/n)^2.
        let target = rho * (1.0 - rho) / n as f64
            * (-(10 * n as i64)..=(10 * n as i64))
                .map(|x| f.value(x as f64 / n as f64).powi(2))
                .sum::<f64>();
        assert!(m.mean.abs() < 4.0 * m.se_mean, "mean {} se {}", m.mean, m.se_mean);
        assert!(
            (m.variance - target).abs() < 3.0 * m.se_variance,
            "var {} vs {target}",
            m.variance
        );
    }

    #[test]
    fn fluctuation_linear_in_probe() {
        let st = checkerboard(4096, 0.5, 32);
        let f = TestFunction::gaussian(0.0, 1.0);
        let g = TestFunction::gaussian(0.7, 1.3);
        let comb = LinearComb {
            a: 2.0,
            f: &f,
            b: -3.0,
            g: &g,
        };
        let yf = fluctuation_field_at_shift(&st, &f, 32, 1.5);
        let yg = fluctuation_field_at_shift(&st, &g, 32, 1.5);
        let yc = fluctuation_field_at_shift(&st, &comb, 32, 1.5);
        assert!((yc - (2.0 * yf - 3.0 * yg)).abs() < 1e-12);
    }

    #[test]
    fn drift_increment_symmetric_kernel_exactly_zero() {
        let k = kernel(1.5, 1.0, 1.0);
        let st = checkerboard(512, 0.5, 8);
        let f = TestFunction::gaussian(0.0, 1.0);
        let v = drift_field_increment(&st, &k, &f, 8, 0.3, 8).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn drift_increment_full_occupancy_telescopes() {
        let k = kernel(1.2, 1.0, 0.0);
        let st = LatticeState::from_occupancy(vec![true; 512], 0.5, 8).unwrap();
        let f = TestFunction::gaussian(0.0, 1.0);
        let v = drift_field_increment(&st, &k, &f, 8, 0.0, 8).unwrap();
        assert!(v.abs() < 1e-10, "telescoped drift {v}");
    }

    #[test]
    fn drift_increment_brute_oracle_small_ring() {
        // n=2, N=8, K=2, c+=1, c-=0, alpha=1.2, checkerboard, zero shift.
        let k = kernel(1.2, 1.0, 0.0);
        let st = checkerboard(8, 0.5, 2);
        let f = TestFunction::gaussian(0.0, 1.0);
        let got = drift_field_increment_at_shift(&st, k.params(), &f, 2, 0.0, 2).unwrap();

        // Brute force over ordered ring pairs with each site's own
        // representative in [-4, 4).
        let rep = |u: usize| -> f64 {
            let mut v = u as f64;
            if v >= 4.0 {
                v -= 8.0;
            }
            v
        };
        let mut hand = 0.0;
        for x in 0..8usize {
            for dd in [-2i64, -1, 1, 2] {
                let y = (x as i64 + dd).rem_euclid(8) as usize;
                let a = k.params().decompose(dd).1;
                hand += a
                    * st.eta_bar(y)
                    * st.eta_bar(x)
                    * (f.value(rep(y) / 2.0) - f.value(rep(x) / 2.0));
            }
        }
        hand *= 2f64.powf(1.2 - 0.5);
        assert!((got - hand).abs() < 1e-12, "{got} vs {hand}");
    }

    #[test]
    fn qv_increment_trivial_states() {
        let k = kernel(1.5, 2.0, 1.0);
        let full = LatticeState::from_occupancy(vec![true; 256], 0.5, 4).unwrap();
        let empty = LatticeState::from_occupancy(vec![false; 256], 0.5, 4).unwrap();
        let f = TestFunction::gaussian(0.0, 1.0);
        assert_eq!(qv_increment(&full, &k, &f, 4, 0.0, 4).unwrap(), 0.0);
        assert_eq!(qv_increment(&empty, &k, &f, 4, 0.0, 4).unwrap(), 0.0);
    }

    #[test]
    fn qv_increment_quadratic_in_probe() {
        let k = kernel(1.5, 2.0, 1.0);
        let st = checkerboard(2048, 0.5, 16);
        let f = TestFunction::gaussian(0.0, 1.0);
        let f2 = f.clone().with_amplitude(2.0);
        let a = qv_increment(&st, &k, &f, 16, 0.2, 16).unwrap();
        let b = qv_increment(&st, &k, &f2, 16, 0.2, 16).unwrap();
        assert!((b - 4.0 * a).abs() < 1e-12 * a.abs());
    }

    #[test]
    fn qv_increment_stationary_mean_matches_dirichlet_form() {
        let k = kernel(1.5, 1.0, 1.0);
        let n = 32u32;
        let ring = 32 * n as usize;
        let f = TestFunction::gaussian(0.0, 1.0);
        let k_cut = n;
        let reps = 3000;
        let mut vals = Vec::with_capacity(reps);
        for r in 0..reps {
            let st =
                LatticeState::init(ring, 0.5, n, &mut SimRng::seed_from_u64(7000 + r as u64))
                    .unwrap();
            vals.push(qv_increment(&st, &k, &f, n, 0.0, k_cut).unwrap());
        }
        let m = crate::stats::moments(&vals).unwrap();
        let target = 4.0 * 0.25
            * crate::generator::dirichlet_form_discrete(&k, &f, n, Some(k_cut as u64)).unwrap();
        assert!(
            (m.mean - target).abs() < 3.0 * m.se_mean,
            "qv mean {} vs {target} (se {})",
            m.mean,
            m.se_mean
        );
    }

    #[test]
    fn block_average_patterns() {
        let st = checkerboard(16, 0.5, 2);
        assert_eq!(block_average(&st, 0, 4), 0.5);
        let full = LatticeState::from_occupancy(vec![true; 16], 0.5, 2).unwrap();
        assert_eq!(block_average(&full, 3, 5), 1.0);
        let empty = LatticeState::from_occupancy(vec![false; 16], 0.5, 2).unwrap();
        assert_eq!(block_average(&empty, 0, 16), 0.0);
    }

    #[test]
    fn psi_block_two_site_values() {
        let mut occ = vec![false; 8];
        occ[0] = true;
        occ[1] = true;
        let both = LatticeState::from_occupancy(occ.clone(), 0.5, 2).unwrap();
        assert!((psi_block(&both, 0, 2, 0.5) - 0.25).abs() < 1e-15);
        occ[1] = false;
        let one = LatticeState::from_occupancy(occ, 0.5, 2).unwrap();
        assert!((psi_block(&one, 0, 2, 0.5) + 0.25).abs() < 1e-15);
    }

    #[test]
    fn psi_block_exact_mean_zero() {
        // E_mu[psi] = 0: exact binomial average of the identity.
        for &(ell, rho) in &[(3usize, 0.3_f64), (5, 0.5), (9, 0.7)] {
            let mut mean = 0.0;
            for k in 0..=ell {
                let pk = binom(ell, k) * rho.powi(k as i32) * (1.0 - rho).powi((ell - k) as i32);
                mean += pk * psi_block_of_density(k as f64 / ell as f64 - rho, ell, rho);
            }
            assert!(mean.abs() < 1e-14, "ell={ell} rho={rho}: {mean}");
        }
    }

    fn binom(n: usize, k: usize) -> f64 {
        let mut v = 1.0;
        for i in 0..k {
            v = v * (n - i) as f64 / (i + 1) as f64;
        }
        v
    }

    proptest::proptest! {
        /// The closed identity equals the exhaustive conditional expectation
        /// over all block configurations with the given particle count.
        #[test]
        fn psi_identity_vs_enumeration(ell in 2usize..12, kfrac in 0.0f64..1.0, rho in 0.05f64..0.95) {
            let k = ((ell as f64 + 1.0) * kfrac) as usize;
            let k = k.min(ell);
            let mut acc = 0.0;
            let mut count = 0u64;
            for mask in 0u32..(1 << ell) {
                if mask.count_ones() as usize != k {
                    continue;
                }
                count += 1;
                let b0 = (mask & 1) as f64;
                let b1 = ((mask >> 1) & 1) as f64;
                acc += (b0 - rho) * (b1 - rho);
            }
            let expect = acc / count as f64;
            let got = psi_block_of_density(k as f64 / ell as f64 - rho, ell, rho);
            proptest::prop_assert!(
                (got - expect).abs() < 1e-12,
                "ell={} k={} rho={}: {} vs {}", ell, k, rho, got, expect
            );
        }
    }

    #[test]
    fn energy_increment_brute_oracle() {
        // Single mu_rho draw, n=4, N=128, eps=0.5: nested-sum evaluation.
        let n = 4u32;
        let ring = 128usize;
        let eps = 0.5;
        let st = LatticeState::init(ring, 0.5, n, &mut SimRng::seed_from_u64(17)).unwrap();
        let f = TestFunction::gaussian(0.0, 1.0);
        let got = energy_increment_at_shift(&st, &f, n, eps, 0.0).unwrap();

        let m = (eps * n as f64).round() as usize;
        let norm = 1.0 / (eps * (n as f64).sqrt());
        let mut hand = 0.0;
        for u in -64i64..64 {
            let mut conv = 0.0;
            for i in 1..=m {
                conv += st.eta_bar((u + i as i64).rem_euclid(ring as i64) as usize);
            }
            let y = conv * norm;
            hand += y * y * f.d1(u as f64 / n as f64);
        }
        hand /= n as f64;
        assert!((got - hand).abs() < 1e-12, "{got} vs {hand}");
    }

    #[test]
    fn energy_field_time_integral() {
        let mesh = [0.0, 0.5, 1.0, 1.5];
        let inc = [1.0, 1.0, 3.0, 3.0];
        assert_eq!(energy_field(&mesh, &inc, 0.5, 0.5).unwrap(), 0.0);
        let v = energy_field(&mesh, &inc, 0.0, 1.5).unwrap();
        assert!((v - (0.5 + 1.0 + 1.5)).abs() < 1e-15);
        assert!(energy_field(&mesh, &inc, 0.0, 0.7).is_err());
    }

    #[test]
    fn afield_static_variance_symmetric_zero_and_scaling() {
        let f = TestFunction::gaussian(0.0, 1.0);
        assert_eq!(afield_static_variance(&kernel(1.0, 1.0, 1.0), &f, 64), 0.0);

        // alpha=0.8: decreasing in n; alpha=1: within a factor-2 band.
        let k08 = kernel(0.8, 1.0, 0.0);
        let v08: Vec<f64> = [64u32, 128, 256]
            .iter()
            .map(|&n| afield_static_variance(&k08, &f, n))
            .collect();
        assert!(v08[0] > v08[1] && v08[1] > v08[2], "{v08:?}");

        let k1 = kernel(1.0, 1.0, 0.0);
        let v1: Vec<f64> = [64u32, 128, 256]
            .iter()
            .map(|&n| afield_static_variance(&k1, &f, n))
            .collect();
        let vmax = v1.iter().cloned().fold(0.0f64, f64::max);
        let vmin = v1.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(vmax / vmin < 2.0, "{v1:?}");
    }

    #[test]
    fn afield_static_variance_brute_oracle() {
        let k = kernel(1.2, 1.0, 0.0);
        let f = TestFunction::gaussian(0.0, 1.0);
        let n = 16u32;
        let got = afield_static_variance(&k, &f, n);
        let range = 3000i64;
        let mut hand = 0.0;
        for x in -range..=range {
            for y in -range..=range {
                if x == y {
                    continue;
                }
                let a = k.params().decompose(y - x).1;
                let d = f.value(y as f64 / 16.0) - f.value(x as f64 / 16.0);
                hand += a * a * d * d;
            }
        }
        hand *= 16f64.powf(2.0 * 1.2 - 1.0);
        assert!(
            ((got - hand) / hand).abs() < 1e-4,
            "{got} vs brute {hand}"
        );
    }

    #[test]
    fn martingale_residual_assembly() {
        let mesh = [0.0, 1.0, 2.0];
        let y = [0.5, 0.7, 0.4];
        let gen = [0.1, 0.1, 0.1];
        let a = [0.0, 0.2, 0.2];
        let m = martingale_residual(&mesh, &y, &gen, &a).unwrap();
        assert_eq!(m[0], 0.0);
        assert!((m[1] - (0.7 - 0.5 - 0.1 + 0.1)).abs() < 1e-15);
        assert!((m[2] - (0.4 - 0.5 - 0.2 + 0.3)).abs() < 1e-15);
        assert!(martingale_residual(&mesh, &y[..2], &gen, &a).is_err());
    }

    #[test]
    fn recorder_matches_standalone_evaluators() {
        let k = kernel(1.2, 1.0, 0.0);
        let n = 16u32;
        let ring = 32 * n as usize;
        let rho = 0.4;
        let ringk = k.fold_to_ring(ring).unwrap();
        let f = TestFunction::gaussian(0.0, 1.0);
        let specs = vec![
            ObserverSpec::Fluctuation { f: f.clone() },
            ObserverSpec::Drift {
                f: f.clone(),
                cutoff_k: Some(n),
            },
            ObserverSpec::Qv {
                f: f.clone(),
                cutoff_k: Some(n),
            },
            ObserverSpec::Energy {
                f: f.clone(),
                eps: 0.25,
            },
            ObserverSpec::PsiBlock { ell: 8 },
            ObserverSpec::Occupation,
        ];
        let tables = MeshTables::new(&k, n, ring, rho, 0.2, 0.05, &specs).unwrap();
        let mut st = LatticeState::init(ring, rho, n, &mut SimRng::seed_from_u64(21)).unwrap();
        let mut rec = TrajectoryRecorder::new(&tables);
        let mut rng = SimRng::seed_from_u64(22);
        run(&mut st, &ringk, 0.2, 0.05, &mut rec, &mut rng).unwrap();

        // Re-run the same dynamics and evaluate standalone at the end time.
        let mut st2 = LatticeState::init(ring, rho, n, &mut SimRng::seed_from_u64(21)).unwrap();
        let mut sink = crate::simulator::CountingSink::default();
        let mut rng2 = SimRng::seed_from_u64(22);
        run(&mut st2, &ringk, 0.2, 0.05, &mut sink, &mut rng2).unwrap();
        let t_last = *tables.mesh.last().unwrap();
        let last = tables.mesh.len() - 1;

        let y = fluctuation_field(&st2, &f, n, t_last, &k);
        assert!((rec.series[0][last] - y).abs() < 1e-12);
        let a = drift_field_increment(&st2, &k, &f, n, t_last, n).unwrap();
        assert!((rec.series[1][last] - a).abs() < 1e-11);
        let qv = qv_increment(&st2, &k, &f, n, t_last, n).unwrap();
        assert!((rec.series[2][last] - qv).abs() < 1e-11);
        let shift = lagrangian_shift(&k, n, rho, t_last);
        let en = energy_increment_at_shift(&st2, &f, n, 0.25, shift).unwrap();
        assert!((rec.series[3][last] - en).abs() < 1e-12);
        let psi = psi_block(&st2, 0, 8, rho);
        assert!((rec.series[4][last] - psi).abs() < 1e-15);
        let occ = st2.origin_integral_at(st2.micro_time) * (n as f64).sqrt()
            / (n as f64).powf(1.2);
        assert!((rec.series[5][last] - occ).abs() < 1e-12);
    }

    #[test]
    fn qv_series_nondecreasing_and_drift_zero_for_symmetric() {
        let k = kernel(1.5, 1.0, 1.0);
        let n = 8u32;
        let ring = 32 * n as usize;
        let ringk = k.fold_to_ring(ring).unwrap();
        let f = TestFunction::gaussian(0.0, 1.0);
        let specs = vec![
            ObserverSpec::Drift {
                f: f.clone(),
                cutoff_k: None,
            },
            ObserverSpec::Qv {
                f: f.clone(),
                cutoff_k: None,
            },
        ];
        let tables = MeshTables::new(&k, n, ring, 0.5, 0.5, 0.05, &specs).unwrap();
        let mut st = LatticeState::init(ring, 0.5, n, &mut SimRng::seed_from_u64(31)).unwrap();
        let mut rec = TrajectoryRecorder::new(&tables);
        run(&mut st, &ringk, 0.5, 0.05, &mut rec, &mut SimRng::seed_from_u64(32)).unwrap();
        assert!(rec.series[0].iter().all(|&v| v == 0.0));
        assert!(rec.series[1].iter().all(|&v| v >= 0.0));
        let qv_t = cumulative_trapezoid(&tables.mesh, &rec.series[1]);
        for w in qv_t.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn window_overflow_detected() {
        let k = kernel(1.5, 1.0, 1.0);
        let f = TestFunction::gaussian(0.0, 1.0);
        let specs = vec![ObserverSpec::Fluctuation { f }];
        // Ring of 4n: the gaussian window (~12n) cannot fit.
        let err = MeshTables::new(&k, 32, 128, 0.5, 0.1, 0.05, &specs);
        assert!(matches!(err, Err(Error::WindowOverflow { .. })));
    }
}
