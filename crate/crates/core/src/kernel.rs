//! Heat kernels by cubature over the dual.
//!
//! After the scaling `theta = u / c` every generic representation reduces to
//! the normalized operator `H(b) = -d^2/du^2 + (u^2 + b)^2`, so the dual
//! integral is taken in a scale variable (`c` with `lambda = +-2c^3` on the
//! Engel group, `rho` with `lambda^2 + mu^2 = 4 rho^3` on the Cartan group),
//! the normalized well parameter `b` and, on the Cartan group, an angle.
//! The scale axis is split into dyadic bands. Within a band the eigenfamily
//! of `H(b)` on a half-integer grid `u_k = (k + 1/2) h` is computed once per
//! `b` node and reused at every scale node, every angle and every target.
//!
//! Shallow wells are solved on the half line with even and odd blocks; deep
//! double wells (tunnelling below `exp(-40)`) on a window around one well,
//! the mirror well contributing the same trace.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::group::{GroupPoint, GroupTag};
use crate::interp::cubic_weights;
use crate::par;
use crate::propagator::{assemble_hamiltonian, default_mode_count, psi_eval, DecompositionCache, ThetaGrid};
use crate::quadrature::{self, Rule};
use crate::representation::{dual_to_quartic, phase_coefficients, DualPoint};
use crate::tridiag::SymTridiag;

/// Plancherel density of the Engel group in `(lambda, mu)`.
pub const PLANCHEREL_G4: f64 = 1.0 / (16.0 * PI * PI * PI);
/// Plancherel density of the Cartan group in `(lambda, mu, nu)`.
pub const PLANCHEREL_G5: f64 = 1.0 / (32.0 * PI * PI * PI * PI);

/// WKB barrier integral beyond which eigenfunctions are treated as zero.
const BARRIER: f64 = 40.0;
/// Decay rate of the band-weight proxy; slightly below the infimum of the
/// ground energies of `H(b)` over `b`.
const PROXY_DECAY: f64 = 0.905;
const MAX_STEP: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureConfig {
    /// Dropped eigenmodes, scale truncation and well-parameter truncation
    /// are all cut at this relative weight.
    pub tail_tol: f64,
    /// Engel exclusion band `|lambda| < eps_lambda`.
    pub eps_lambda: f64,
    /// Cartan exclusion band `lambda^2 + mu^2 < eps_s`.
    pub eps_s: f64,
    /// Grid step of the normalized variable in units of the diffusion length
    /// `sqrt(tau)`, for the band carrying the most weight. Lighter bands get
    /// coarser steps, growing like the inverse square root of their weight.
    pub step: f64,
    pub step_max: f64,
    /// Gauss-Legendre order and minimum panel count on the scale axis.
    pub scale_order: usize,
    pub scale_panels: usize,
    /// Gauss-Legendre order on the well-parameter axis.
    pub well_order: usize,
    /// Minimum number of angles (Cartan).
    pub angle_nodes: usize,
    /// Phase advance allowed across one panel, in radians.
    pub panel_phase: f64,
    /// Results with `tail_estimate > tolerance * |value|` are flagged.
    pub tolerance: f64,
    /// Rerun at half resolution and fold the difference into the tail
    /// estimate.
    pub error_estimate: bool,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            tail_tol: 1e-9,
            eps_lambda: 1e-2,
            eps_s: 1e-2,
            step: 0.04,
            step_max: 0.25,
            scale_order: 8,
            scale_panels: 2,
            well_order: 8,
            angle_nodes: 32,
            panel_phase: 2.0,
            tolerance: 1e-2,
            error_estimate: true,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tail_tol", self.tail_tol),
            ("eps_lambda", self.eps_lambda),
            ("eps_s", self.eps_s),
            ("step", self.step),
            ("step_max", self.step_max),
            ("panel_phase", self.panel_phase),
            ("tolerance", self.tolerance),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(contract(format!("{name} must be positive, got {v}")));
            }
        }
        if self.tail_tol >= 1.0 {
            return Err(contract("tail_tol must be below 1"));
        }
        if self.step_max < self.step {
            return Err(contract("step_max must be at least step"));
        }
        let counts = [
            ("scale_order", self.scale_order),
            ("scale_panels", self.scale_panels),
            ("well_order", self.well_order),
            ("angle_nodes", self.angle_nodes),
        ];
        for (name, v) in counts {
            if v == 0 || v % 2 != 0 {
                return Err(contract(format!("{name} must be even and positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Every node count doubled, every step halved.
    pub fn refined(&self) -> Self {
        Self {
            step: self.step / 2.0,
            step_max: self.step_max / 2.0,
            scale_order: self.scale_order * 2,
            well_order: self.well_order * 2,
            angle_nodes: self.angle_nodes * 2,
            panel_phase: self.panel_phase / 2.0,
            ..*self
        }
    }

    /// Every node count halved, every step doubled.
    pub fn coarsened(&self) -> Self {
        Self {
            step: self.step * 2.0,
            step_max: self.step_max * 2.0,
            scale_order: (self.scale_order / 2).max(2) & !1,
            well_order: (self.well_order / 2).max(2) & !1,
            angle_nodes: (self.angle_nodes / 2).max(4) & !1,
            panel_phase: self.panel_phase * 2.0,
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelResult {
    pub value: f64,
    pub imag_residual: f64,
    pub tail_estimate: f64,
    pub node_count: u64,
    /// Wall time of the evaluation (shared by all results of a batch).
    pub wall_time: Duration,
    /// `tail_estimate` exceeds the requested tolerance.
    pub tail_exceeded: bool,
}

/// A coordinate held fixed, or integrated over `[-a, a]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extent {
    At(f64),
    Over(f64),
}

impl Extent {
    fn magnitude(self) -> f64 {
        match self {
            Extent::At(x) => x.abs(),
            Extent::Over(a) => a,
        }
    }

    /// `int exp(i k x)` over the extent (or its value at the point).
    #[inline]
    fn factor(self, k: f64) -> Complex64 {
        match self {
            Extent::At(x) => Complex64::cis(k * x),
            Extent::Over(a) => {
                let z = k * a;
                let s = if z.abs() < 1e-4 { 1.0 - z * z / 6.0 } else { z.sin() / z };
                Complex64::new(2.0 * a * s, 0.0)
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Target {
    Engel { x1: Extent, rest: [Extent; 3], point: bool },
    Cartan(GroupPoint),
}

pub fn heat_kernel_g4(x: &GroupPoint, t: f64, cfg: &QuadratureConfig) -> Result<KernelResult> {
    if x.tag() != GroupTag::Engel {
        return Err(contract("heat_kernel_g4 needs an Engel point"));
    }
    Ok(heat_kernel_batch(std::slice::from_ref(x), t, cfg)?.remove(0))
}

pub fn heat_kernel_g5(x: &GroupPoint, t: f64, cfg: &QuadratureConfig) -> Result<KernelResult> {
    if x.tag() != GroupTag::Cartan {
        return Err(contract("heat_kernel_g5 needs a Cartan point"));
    }
    Ok(heat_kernel_batch(std::slice::from_ref(x), t, cfg)?.remove(0))
}

/// Kernel values at several points of one group, sharing the eigenfamilies.
pub fn heat_kernel_batch(points: &[GroupPoint], t: f64, cfg: &QuadratureConfig) -> Result<Vec<KernelResult>> {
    let Some(first) = points.first() else {
        return Ok(Vec::new());
    };
    let tag = first.tag();
    if points.iter().any(|p| p.tag() != tag) {
        return Err(contract("all points of a batch must belong to one group"));
    }
    let targets: Vec<Target> = points
        .iter()
        .map(|p| match tag {
            GroupTag::Engel => Target::Engel {
                x1: Extent::At(p.x(1)),
                rest: [Extent::At(p.x(2)), Extent::At(p.x(3)), Extent::At(p.x(4))],
                point: true,
            },
            GroupTag::Cartan => Target::Cartan(*p),
        })
        .collect();
    evaluate(tag, &targets, t, cfg)
}

/// Integrals of the Engel kernel over products of fixed coordinates and
/// symmetric intervals.
pub fn engel_regions(regions: &[[Extent; 4]], t: f64, cfg: &QuadratureConfig) -> Result<Vec<KernelResult>> {
    for r in regions {
        for e in r {
            let ok = match e {
                Extent::At(x) => x.is_finite(),
                Extent::Over(a) => *a > 0.0 && a.is_finite(),
            };
            if !ok {
                return Err(contract(format!("invalid extent {e:?}")));
            }
        }
    }
    let targets: Vec<Target> = regions
        .iter()
        .map(|r| Target::Engel {
            x1: r[0],
            rest: [r[1], r[2], r[3]],
            point: r.iter().all(|e| matches!(e, Extent::At(_))),
        })
        .collect();
    evaluate(GroupTag::Engel, &targets, t, cfg)
}

/// `int int p_t(x1, x2, x3, x4) dx3 dx4` over `|x3| <= a3`, `|x4| <= a4`.
pub fn marginal_x1x2_g4(
    x1: f64,
    x2: f64,
    a3: f64,
    a4: f64,
    t: f64,
    cfg: &QuadratureConfig,
) -> Result<KernelResult> {
    let r = [Extent::At(x1), Extent::At(x2), Extent::Over(a3), Extent::Over(a4)];
    Ok(engel_regions(&[r], t, cfg)?.remove(0))
}

/// Mass of the Engel kernel in the box `|x_i| <= half_widths[i]`.
pub fn box_mass_g4(half_widths: [f64; 4], t: f64, cfg: &QuadratureConfig) -> Result<KernelResult> {
    let r = half_widths.map(Extent::Over);
    Ok(engel_regions(&[r], t, cfg)?.remove(0))
}

/// The dual-space integrand `exp(i phase) Psi` at one dual point, through the
/// public propagator on its default grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrandValue {
    pub value: Complex64,
    pub truncated: bool,
}

static INTEGRAND_CACHE: std::sync::LazyLock<DecompositionCache> =
    std::sync::LazyLock::new(DecompositionCache::new);

pub fn integrand(d: &DualPoint, theta: f64, x: &GroupPoint, t: f64) -> Result<IntegrandValue> {
    if !(t > 0.0) {
        return Err(contract(format!("t must be positive, got {t}")));
    }
    let ([c0, c1, c2], shift) = phase_coefficients(d, x)?;
    let p = dual_to_quartic(d)?;
    let tau = p.time_scale * t;
    let grid = ThetaGrid::default_for(&p);
    let h = assemble_hamiltonian(&p, &grid);
    let k = default_mode_count(&h, tau)?;
    let dec = INTEGRAND_CACHE.get_or_compute(&p, &grid, k)?;
    let psi = psi_eval(&dec, tau, theta + shift, theta)?;
    let phase = c0 + theta * (c1 + theta * c2);
    Ok(IntegrandValue { value: Complex64::cis(phase) * psi.value, truncated: psi.truncated })
}

// ---------------------------------------------------------------------------
// band planning

fn weight_proxy(tau: f64) -> f64 {
    PI * PI / 8.0 / (tau * tau) * (1.0 + tau).powf(1.5) * (-PROXY_DECAY * tau).exp()
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    tag: GroupTag,
    t: f64,
    /// Largest `|x_i|` (or interval half-width) over the targets; on the
    /// Cartan group slot 0 holds `|(x1, x2)|` and slot 3 `|(x4, x5)|`.
    ext: [f64; 5],
}

impl Geometry {
    fn tau(&self, s: f64) -> f64 {
        match self.tag {
            GroupTag::Engel => s * s * self.t,
            GroupTag::Cartan => s * self.t,
        }
    }

    /// Proxy for the weight density of the scale variable at the identity.
    fn density(&self, s: f64) -> f64 {
        match self.tag {
            GroupTag::Engel => s.powi(6) * weight_proxy(self.tau(s)),
            GroupTag::Cartan => s.powi(4) * weight_proxy(self.tau(s)),
        }
    }

    /// Constant turning the scale integral of the per-node trace into `p_t(e)`.
    fn prefactor(&self) -> f64 {
        match self.tag {
            GroupTag::Engel => 48.0 * PLANCHEREL_G4,
            GroupTag::Cartan => 48.0 * PI * PLANCHEREL_G5,
        }
    }

    fn s_min(&self, cfg: &QuadratureConfig) -> f64 {
        match self.tag {
            GroupTag::Engel => (cfg.eps_lambda / 2.0).cbrt(),
            GroupTag::Cartan => (cfg.eps_s / 4.0).cbrt(),
        }
    }

    /// Scale where the proxy density becomes negligible for any purpose.
    fn s_far(&self) -> f64 {
        let tau = 120.0 / PROXY_DECAY;
        match self.tag {
            GroupTag::Engel => (tau / self.t).sqrt(),
            GroupTag::Cartan => tau / self.t,
        }
    }

    fn rate_u(&self, s: f64, u: f64) -> f64 {
        let e = &self.ext;
        match self.tag {
            GroupTag::Engel => 2.0 * s * s * e[2] + 2.0 * s * e[1] * u,
            GroupTag::Cartan => {
                2.0 * s * (2.0 * e[0] * e[0] + e[2]) + 2.0 * 2f64.sqrt() * s.sqrt() * e[0] * u
            }
        }
    }

    /// Phase rate per unit `b` on the shallow side.
    fn rate_b(&self, s: f64) -> f64 {
        match self.tag {
            GroupTag::Engel => s * self.ext[1],
            GroupTag::Cartan => s.sqrt() * self.ext[0],
        }
    }

    /// Phase rate per unit `v`, `b = -v^2`, on the deep side.
    fn rate_v(&self, s: f64) -> f64 {
        let e = &self.ext;
        match self.tag {
            GroupTag::Engel => 2.0 * s * s * e[2] + 2.0 * s * e[1],
            GroupTag::Cartan => 2.0 * s * (e[2] + 2.0 * e[0] * e[0]) + 2.0 * 2f64.sqrt() * s.sqrt() * e[0],
        }
    }

    fn rate_s(&self, lo: f64, hi: f64, e_max: f64, u_eff: f64) -> f64 {
        let e = &self.ext;
        let st = self.t.sqrt();
        match self.tag {
            GroupTag::Engel => {
                e[1] * e_max.sqrt() + 6.0 * hi * hi * e[3] + 4.0 * hi * e[2] * u_eff + e[0] / st
            }
            GroupTag::Cartan => {
                1.5 * hi.sqrt() * e[3]
                    + 2.0 * (e[2] + e[0] * e[0]) * u_eff
                    + e[0] * e_max.sqrt() / lo.sqrt()
                    + 0.5 * hi.sqrt() * e[0].powi(3)
                    + e[0] / (lo * st)
            }
        }
    }

    /// Amplitude of the angular phase variation (Cartan).
    fn angular_amplitude(&self, hi: f64, e_max: f64, u_eff: f64) -> f64 {
        let e = &self.ext;
        let r = 2.0 * hi.powf(1.5);
        r * e[3]
            + hi.sqrt() * e[0] * e_max.sqrt()
            + 2.0 * hi * e[0] * e[0] * u_eff
            + 0.5 * r * e[0].powi(3)
            + 2.0 * e[0] / self.t.sqrt()
    }
}

#[derive(Debug, Clone)]
struct Band {
    k_cut: f64,
    hi: f64,
    e_max: f64,
    h_max: f64,
    u_phase: f64,
    scale: Rule,
    well: Rule,
    angles: usize,
}

#[derive(Debug, Clone)]
struct Plan {
    bands: Vec<Band>,
    /// Bound on the dropped small-scale band at the identity.
    exclusion: f64,
    /// Proxy estimate of the dropped large-scale tail at the identity.
    truncation: f64,
}

fn panel_breaks(mut coarse: Vec<f64>, rate: f64, max_phase: f64) -> Vec<f64> {
    coarse.dedup();
    let mut out = vec![coarse[0]];
    for w in coarse.windows(2) {
        let pieces = ((rate * (w[1] - w[0]) / max_phase).ceil() as usize).max(1);
        for i in 1..=pieces {
            out.push(w[0] + (w[1] - w[0]) * i as f64 / pieces as f64);
        }
    }
    out
}

fn geometric_breaks(first: &[f64], ratio: f64, end: f64) -> Vec<f64> {
    let mut b: Vec<f64> = first.iter().copied().filter(|v| *v < end).collect();
    let mut last = *b.last().unwrap();
    while last * ratio < end {
        last *= ratio;
        b.push(last);
    }
    b.push(end);
    b
}

fn plan(geo: &Geometry, cfg: &QuadratureConfig) -> Plan {
    let s_min = geo.s_min(cfg);
    let s_far = geo.s_far().max(4.0 * s_min);
    let fine = |a: f64, b: f64| {
        let n = ((b / a).log2().ceil() as usize).max(1) * 4;
        quadrature::panels(&geometric_breaks(&[a], (b / a).powf(1.0 / n as f64), b), 16)
    };
    let dens = |s: f64| geo.density(s);
    let total = fine(s_min, s_far).integrate(dens);
    // largest scale: proxy tail beyond it below tail_tol
    let (mut a, mut b) = (s_min, s_far);
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        if fine(m, s_far).integrate(dens) > cfg.tail_tol * total {
            a = m;
        } else {
            b = m;
        }
    }
    let s_max = b;
    let truncation = geo.prefactor() * fine(s_max, s_far).integrate(dens);
    let exclusion = geo.prefactor() * PI * PI / 8.0 * s_min.powi(3) / (3.0 * geo.t * geo.t);

    let mut edges = vec![s_min];
    while *edges.last().unwrap() * 2.0 < s_max {
        let next = edges.last().unwrap() * 2.0;
        edges.push(next);
    }
    edges.push(s_max);
    let weights: Vec<f64> =
        edges.windows(2).map(|w| quadrature::uniform(w[0], w[1], 2, 16).integrate(dens) / total).collect();
    let w_max = weights.iter().cloned().fold(0.0, f64::max);

    let bands = edges
        .windows(2)
        .zip(&weights)
        .map(|(w, &wb)| {
            let (lo, hi) = (w[0], w[1]);
            let tau_lo = geo.tau(lo);
            // modes, wells and domains are cut relative to the band's share
            let k_band = (wb / cfg.tail_tol).ln().max(5.0);
            let e_max = k_band / tau_lo;
            let q = (cfg.step * (w_max / wb.max(1e-300)).sqrt()).min(cfg.step_max);
            let h_max = (q * tau_lo.sqrt()).min(MAX_STEP);
            // light bands get half-order rules
            let halve = |o: usize| if q >= cfg.step_max { (o / 2).max(2) } else { o };
            let v_top = ((e_max + 1.0) / 2.0).max(1.0);
            let u_eff = e_max.powf(0.25).max(v_top.min(4.0 / tau_lo)) + 1.0;

            let b_top = e_max.sqrt();
            // an n-point panel resolves about n/4 times the configured phase
            let well_order = halve(cfg.well_order);
            let well_phase = cfg.panel_phase * well_order as f64 / 4.0;
            let pos =
                panel_breaks(geometric_breaks(&[0.0, 0.5, 1.0], 2.0, b_top), geo.rate_b(hi), well_phase);
            let mut well = quadrature::panels(&pos, well_order);
            let neg = panel_breaks(
                geometric_breaks(&[0.0, 0.5, 1.0, 1.5, 2.0], 1.5, v_top),
                geo.rate_v(hi),
                well_phase,
            );
            well.extend(quadrature::panels(&neg, well_order).map(|v| -v * v, |v| 2.0 * v));

            let scale_order = halve(cfg.scale_order);
            let scale_phase = cfg.panel_phase * scale_order as f64 / 4.0;
            let rate_s = geo.rate_s(lo, hi, e_max, u_eff);
            let n_s = ((rate_s * (hi - lo) / scale_phase).ceil() as usize).max(cfg.scale_panels);
            let scale = quadrature::uniform(lo, hi, n_s, scale_order);

            let angles = match geo.tag {
                GroupTag::Engel => 2,
                GroupTag::Cartan => {
                    let amp = geo.angular_amplitude(hi, e_max, u_eff);
                    let extra = (1.25 * amp * cfg.angle_nodes as f64 / 32.0).ceil() as usize;
                    (cfg.angle_nodes + extra).div_ceil(4) * 4
                }
            };
            Band { k_cut: k_band, hi, e_max, h_max, u_phase: cfg.panel_phase / 2.0, scale, well, angles }
        })
        .collect();
    Plan { bands, exclusion, truncation }
}

// ---------------------------------------------------------------------------
// eigenfamilies of H(b)

#[derive(Debug, Clone)]
struct Family {
    h: f64,
    /// Index of the first stored node.
    k0: isize,
    len: usize,
    energies: Vec<f64>,
    modes: Vec<Vec<f64>>,
    /// Parity sign of each mode (0 for single-well window modes).
    mirror: Vec<f64>,
}

fn potential(b: f64, u: f64) -> f64 {
    let w = u * u + b;
    w * w
}

/// Marches from `start` in direction `dir` until the barrier integral of
/// `sqrt(V - e)` reaches `BARRIER`, or `stop` is reached (returned as `None`).
fn march(b: f64, e: f64, start: f64, dir: f64, step: f64, stop: Option<f64>) -> Option<f64> {
    let mut u = start;
    let mut acc = 0.0;
    loop {
        let next = u + dir * step;
        if let Some(s) = stop {
            if (next - s) * dir >= 0.0 {
                return None;
            }
        }
        acc += step * (potential(b, u + 0.5 * dir * step) - e).max(0.0).sqrt();
        u = next;
        if acc >= BARRIER {
            return Some(u);
        }
    }
}

impl Family {
    fn build(b: f64, e_max: f64, h_max: f64, u_phase: f64, rate_u: impl Fn(f64) -> f64) -> Option<Family> {
        let root_e = e_max.sqrt();
        let outer2 = root_e - b;
        if outer2 <= 0.0 {
            return None;
        }
        let step = h_max / 4.0;
        let u_out = march(b, e_max, outer2.sqrt(), 1.0, step, None).unwrap();
        let inner2 = -b - root_e;
        let u_in = if inner2 > 0.0 { march(b, e_max, inner2.sqrt(), -1.0, step, Some(0.0)) } else { None };
        let width = u_out - u_in.unwrap_or(0.0);
        // chirp plus mode bandwidth kept well inside the Nyquist limit
        let rate = rate_u(u_out);
        let mut h = h_max.min(width / 8.0);
        if rate > 0.0 {
            h = h.min(u_phase / (rate + 2.0 * root_e));
        }
        let k_hi = (u_out / h - 0.5).ceil() as isize;
        let k0 = match u_in {
            Some(a) => ((a / h - 0.5).floor() as isize).max(0),
            None => 0,
        };
        let len = (k_hi - k0 + 1) as usize;
        let inv_h2 = 1.0 / (h * h);
        let diag: Vec<f64> =
            (0..len).map(|i| 2.0 * inv_h2 + potential(b, (k0 as f64 + i as f64 + 0.5) * h)).collect();
        let off = vec![-inv_h2; len - 1];
        let mut pairs: Vec<(f64, Vec<f64>, f64)> = Vec::new();
        let mut solve = |t: SymTridiag, norm: f64, sign: f64| {
            let count = t.count_below(e_max);
            let evals = if 8 * count > t.len() {
                let mut all = t.all_eigenvalues();
                all.truncate(count);
                all
            } else {
                t.lowest_eigenvalues(count)
            };
            let vecs = t.eigenvectors_clustered(&evals, 1e-10);
            for (e, v) in evals.into_iter().zip(vecs) {
                pairs.push((e, v.into_iter().map(|x| x * norm).collect(), sign));
            }
        };
        if u_in.is_some() {
            solve(SymTridiag::new(diag, off), h.recip().sqrt(), 0.0);
        } else {
            let half = (2.0 * h).recip().sqrt();
            let mut even = diag.clone();
            even[0] -= inv_h2;
            let mut odd = diag;
            odd[0] += inv_h2;
            solve(SymTridiag::new(even, off.clone()), half, 1.0);
            solve(SymTridiag::new(odd, off), half, -1.0);
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut fam = Family {
            h,
            k0,
            len,
            energies: Vec::with_capacity(pairs.len()),
            modes: Vec::with_capacity(pairs.len()),
            mirror: Vec::with_capacity(pairs.len()),
        };
        for (e, v, s) in pairs {
            fam.energies.push(e);
            fam.modes.push(v);
            fam.mirror.push(s);
        }
        Some(fam)
    }

    fn u(&self, i: usize) -> f64 {
        (self.k0 as f64 + i as f64 + 0.5) * self.h
    }

    /// `out[i] += sum_n w_n phi_n(k0 + i + m) phi_n(k0 + i)`.
    fn accumulate_shifted(&self, m: isize, w: &[f64], out: &mut [f64]) {
        let len = self.len as isize;
        for (n, &wn) in w.iter().enumerate() {
            let phi = &self.modes[n];
            let lo = (-m).max(0);
            let hi = (len - m).min(len);
            for i in lo..hi {
                out[i as usize] += wn * phi[(i + m) as usize] * phi[i as usize];
            }
            // reflected part of a parity mode: k < 0 maps to -k - 1
            let s = self.mirror[n];
            if s != 0.0 && m < 0 {
                let sw = s * wn;
                for i in 0..(-m).min(len) {
                    let j = -i - m - 1;
                    if j < len {
                        out[i as usize] += sw * phi[j as usize] * phi[i as usize];
                    }
                }
            }
        }
    }

    /// Antiderivatives `int_{-inf}^{u_k} phi_n` on the full line, indexed
    /// from `first`.
    fn antiderivatives(&self) -> (isize, Vec<Vec<f64>>) {
        let parity = self.mirror.first().is_some_and(|s| *s != 0.0);
        let first = if parity { -(self.len as isize) } else { self.k0 };
        let cum = self
            .modes
            .iter()
            .zip(&self.mirror)
            .map(|(phi, &s)| {
                let full: Vec<f64> = if parity {
                    phi.iter().rev().map(|v| s * v).chain(phi.iter().copied()).collect()
                } else {
                    phi.clone()
                };
                let at = |i: isize| {
                    if i < 0 || i as usize >= full.len() {
                        0.0
                    } else {
                        full[i as usize]
                    }
                };
                let mut c = vec![0.0; full.len()];
                // first node sits half a cell past the support
                let mut acc = 0.5 * self.h * at(0);
                c[0] = acc;
                for i in 0..full.len() as isize - 1 {
                    acc += self.h / 2.0 * (at(i) + at(i + 1))
                        - self.h / 24.0 * (at(i + 2) - at(i + 1) - at(i) + at(i - 1));
                    c[(i + 1) as usize] = acc;
                }
                c
            })
            .collect();
        (first, cum)
    }
}

/// Shifted diagonals of the truncated kernel at one scale node.
struct ShiftCache<'a> {
    fam: &'a Family,
    w: Vec<f64>,
    diag: HashMap<isize, Vec<f64>>,
    cum: Option<(isize, Vec<Vec<f64>>)>,
    cum_diag: HashMap<isize, Vec<f64>>,
}

impl<'a> ShiftCache<'a> {
    fn new(fam: &'a Family, w: Vec<f64>, cum: Option<(isize, Vec<Vec<f64>>)>) -> Self {
        Self { fam, w, diag: HashMap::new(), cum, cum_diag: HashMap::new() }
    }

    fn diagonal(&mut self, m: isize) -> &Vec<f64> {
        let (fam, w) = (self.fam, &self.w);
        self.diag.entry(m).or_insert_with(|| {
            let mut out = vec![0.0; fam.len];
            fam.accumulate_shifted(m, w, &mut out);
            out
        })
    }

    fn cum_diagonal(&mut self, m: isize) -> &Vec<f64> {
        let (fam, w) = (self.fam, &self.w);
        let (first, cum) = self.cum.as_ref().expect("antiderivatives");
        self.cum_diag.entry(m).or_insert_with(|| {
            let mut out = vec![0.0; fam.len];
            for (n, &wn) in w.iter().enumerate() {
                let c = &cum[n];
                let last = *c.last().unwrap();
                for (i, o) in out.iter_mut().enumerate() {
                    let j = fam.k0 + i as isize + m - first;
                    let v = if j < 0 {
                        0.0
                    } else if j as usize >= c.len() {
                        last
                    } else {
                        c[j as usize]
                    };
                    *o += wn * v * fam.modes[n][i];
                }
            }
            out
        })
    }

    fn combine(&mut self, delta: f64, cumulative: bool) -> Vec<f64> {
        let s = delta / self.fam.h;
        let mut m = s.floor();
        let mut f = s - m;
        if f > 1.0 - 1e-9 {
            m += 1.0;
            f = 0.0;
        }
        let m = m as isize;
        let len = self.fam.len;
        let mut get = |k: isize| -> Vec<f64> {
            if cumulative {
                self.cum_diagonal(k).clone()
            } else {
                self.diagonal(k).clone()
            }
        };
        if f < 1e-9 {
            return get(m);
        }
        let cw = cubic_weights(f);
        let mut out = vec![0.0; len];
        for (i, c) in cw.iter().enumerate() {
            let d = get(m - 1 + i as isize);
            out.iter_mut().zip(&d).for_each(|(o, v)| *o += c * v);
        }
        out
    }

    /// `R(u_k; delta) = sum_n w_n phi_n(u_k + delta) phi_n(u_k)`.
    fn shifted(&mut self, delta: f64) -> Vec<f64> {
        self.combine(delta, false)
    }

    /// `int_{-a}^{a} R(u_k; c x) dx`.
    fn integrated(&mut self, c: f64, a: f64) -> Vec<f64> {
        let hi = self.combine(c * a, true);
        let lo = self.combine(-c * a, true);
        hi.iter().zip(&lo).map(|(p, q)| (p - q) / c).collect()
    }
}

/// `sum_i r[i] exp(i (a + b u_i + q u_i^2))`, `u_i = (k0 + i + 1/2) h`.
fn chirp_sum(fam: &Family, r: &[f64], a: f64, b: f64, q: f64) -> Complex64 {
    let h = fam.h;
    let phase = |u: f64| a + u * (b + q * u);
    let rot2 = Complex64::cis(2.0 * q * h * h);
    let mut acc = Complex64::new(0.0, 0.0);
    let mut z = Complex64::new(0.0, 0.0);
    let mut step = Complex64::new(0.0, 0.0);
    for (i, &ri) in r.iter().enumerate() {
        if i % 32 == 0 {
            let u = fam.u(i);
            z = Complex64::cis(phase(u));
            step = Complex64::cis(phase(u + h) - phase(u));
        } else {
            z *= step;
            step *= rot2;
        }
        acc += z * ri;
    }
    acc
}

// ---------------------------------------------------------------------------
// assembly

fn extents(tag: GroupTag, targets: &[Target]) -> [f64; 5] {
    let mut e = [0.0f64; 5];
    for tg in targets {
        match tg {
            Target::Engel { x1, rest, .. } => {
                e[0] = e[0].max(x1.magnitude());
                for i in 0..3 {
                    e[i + 1] = e[i + 1].max(rest[i].magnitude());
                }
            }
            Target::Cartan(p) => {
                let x = p.raw();
                e[0] = e[0].max(x[0].hypot(x[1]));
                e[2] = e[2].max(x[2].abs());
                e[3] = e[3].max(x[3].hypot(x[4]));
            }
        }
    }
    debug_assert!(tag == GroupTag::Cartan || e[4] == 0.0);
    e
}

struct Raw {
    sums: Vec<Complex64>,
    nodes: u64,
}

fn well_node(geo: &Geometry, band: &Band, b: f64, wb: f64, targets: &[Target]) -> Raw {
    let mut sums = vec![Complex64::new(0.0, 0.0); targets.len()];
    let mut nodes = 0u64;
    let rate = |u: f64| geo.rate_u(band.hi, u);
    let Some(fam) = Family::build(b, band.e_max, band.h_max, band.u_phase, rate) else {
        return Raw { sums, nodes };
    };
    let needs_cum = targets.iter().any(|t| matches!(t, Target::Engel { x1: Extent::Over(_), .. }));
    let cum = needs_cum.then(|| fam.antiderivatives());
    let h = fam.h;
    let us: Vec<f64> = (0..fam.len).map(|i| fam.u(i)).collect();

    for (&s, &ws) in band.scale.nodes.iter().zip(&band.scale.weights) {
        let tau = geo.tau(s);
        let w: Vec<f64> =
            fam.energies.iter().take_while(|e| **e * tau <= band.k_cut).map(|e| (-e * tau).exp()).collect();
        if w.is_empty() {
            continue;
        }
        let mut cache = ShiftCache::new(&fam, w, cum.clone());
        match geo.tag {
            GroupTag::Engel => {
                let weight = wb * ws * 24.0 * s.powi(6) * PLANCHEREL_G4 * h;
                let c = s;
                for (out, tg) in sums.iter_mut().zip(targets) {
                    let Target::Engel { x1, rest, point } = tg else { unreachable!() };
                    let (rp, rm) = match *x1 {
                        Extent::At(v) => (cache.shifted(c * v), cache.shifted(-c * v)),
                        Extent::Over(a) => {
                            let r = cache.integrated(c, a);
                            (r.clone(), r)
                        }
                    };
                    let mut total = Complex64::new(0.0, 0.0);
                    for sign in [1.0, -1.0] {
                        if *point {
                            let [Extent::At(x2), Extent::At(x3), Extent::At(x4)] = *rest else {
                                unreachable!()
                            };
                            let a = sign * (c * x2 * b + 2.0 * c.powi(3) * x4);
                            let bl = -2.0 * sign * c * c * x3;
                            let q = sign * c * x2;
                            total += chirp_sum(&fam, &rp, a, bl, q) + chirp_sum(&fam, &rm, a, -bl, q);
                        } else {
                            let k4 = rest[2].factor(2.0 * sign * c.powi(3));
                            for (i, &u) in us.iter().enumerate() {
                                let k2 = rest[0].factor(sign * c * (b + u * u));
                                let k3p = rest[1].factor(-2.0 * sign * c * c * u);
                                let k3m = rest[1].factor(2.0 * sign * c * c * u);
                                total += k2 * k4 * (k3p * rp[i] + k3m * rm[i]);
                            }
                        }
                    }
                    *out += total * weight;
                    nodes += 4 * fam.len as u64;
                }
            }
            GroupTag::Cartan => {
                let c = 2.0 * s * s;
                let r = 2.0 * s.powf(1.5);
                let nu = 2.0 * c * b;
                let n_phi = band.angles;
                let weight = wb * ws * 24.0 * s.powi(4) * PLANCHEREL_G5 * h * 2.0 * PI / n_phi as f64;
                for j in 0..n_phi {
                    let phi = 2.0 * PI * j as f64 / n_phi as f64;
                    let (sn, cs) = phi.sin_cos();
                    let d = DualPoint::cartan(r * cs, r * sn, nu).expect("generic dual point");
                    for (out, tg) in sums.iter_mut().zip(targets) {
                        let Target::Cartan(x) = tg else { unreachable!() };
                        let ([c0, c1, c2], shift) = phase_coefficients(&d, x).expect("matching tags");
                        let delta = c * shift;
                        let rp = cache.shifted(delta);
                        let rm = cache.shifted(-delta);
                        let bl = c1 / c;
                        let q = c2 / (c * c);
                        let v = chirp_sum(&fam, &rp, c0, bl, q) + chirp_sum(&fam, &rm, c0, -bl, q);
                        *out += v * weight;
                        nodes += 2 * fam.len as u64;
                    }
                }
            }
        }
    }
    Raw { sums, nodes }
}

struct Pass {
    sums: Vec<Complex64>,
    nodes: u64,
    plan: Plan,
}

fn assemble(geo: &Geometry, targets: &[Target], cfg: &QuadratureConfig) -> Pass {
    let plan = plan(geo, cfg);
    let mut sums = vec![Complex64::new(0.0, 0.0); targets.len()];
    let mut nodes = 0;
    for band in &plan.bands {
        let items: Vec<(f64, f64)> =
            band.well.nodes.iter().copied().zip(band.well.weights.iter().copied()).collect();
        let raws = par::map_collect(&items, |&(b, wb)| well_node(geo, band, b, wb, targets));
        // fixed summation order: independent of the thread count
        for raw in raws {
            for (s, v) in sums.iter_mut().zip(&raw.sums) {
                *s += v;
            }
            nodes += raw.nodes;
        }
    }
    Pass { sums, nodes, plan }
}

fn evaluate(tag: GroupTag, targets: &[Target], t: f64, cfg: &QuadratureConfig) -> Result<Vec<KernelResult>> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(contract(format!("t must be positive, got {t}")));
    }
    cfg.validate()?;
    let start = Instant::now();
    let geo = Geometry { tag, t, ext: extents(tag, targets) };
    let main = assemble(&geo, targets, cfg);
    let coarse = cfg.error_estimate.then(|| assemble(&geo, targets, &cfg.coarsened()));
    let wall_time = start.elapsed();
    let base_tail = main.plan.exclusion + main.plan.truncation;
    Ok(targets
        .iter()
        .enumerate()
        .map(|(i, tg)| {
            let v = main.sums[i];
            // the identity bounds scale with the box volume for region targets
            let scale = match tg {
                Target::Engel { x1, rest, point: false } => {
                    std::iter::once(x1).chain(rest).fold(1.0, |acc, e| match e {
                        Extent::Over(a) => acc * 2.0 * a,
                        Extent::At(_) => acc,
                    })
                }
                _ => 1.0,
            };
            let mut tail = base_tail * scale;
            if let Some(c) = &coarse {
                tail += (c.sums[i].re - v.re).abs();
            }
            KernelResult {
                value: v.re,
                imag_residual: v.im.abs(),
                tail_estimate: tail,
                node_count: main.nodes + coarse.as_ref().map_or(0, |c| c.nodes),
                wall_time,
                tail_exceeded: tail > cfg.tolerance * v.re.abs(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parity_family_trace_matches_direct_sum() {
        // H(b) with b = -1.3, compared with the full-line decomposition
        let fam = Family::build(-1.3, 60.0, 0.01, 1.0, |_| 0.0).unwrap();
        assert!(fam.mirror.iter().all(|s| *s != 0.0));
        let tau = 0.4;
        let w: Vec<f64> = fam.energies.iter().map(|e| (-e * tau).exp()).collect();
        let mut d0 = vec![0.0; fam.len];
        fam.accumulate_shifted(0, &w, &mut d0);
        let trace: f64 = 2.0 * fam.h * d0.iter().sum::<f64>();
        assert!((trace - w.iter().sum::<f64>()).abs() < 1e-10);

        let p = crate::QuarticParams::new(1.0, -1.3).unwrap();
        let g = ThetaGrid::new(8.0, 1601).unwrap();
        let dec = crate::propagator::spectrum(&assemble_hamiltonian(&p, &g), 40).unwrap();
        let e0 = dec.energies[0];
        assert!((fam.energies[0] - e0).abs() < 1e-3, "{} {e0}", fam.energies[0]);
        // off-diagonal values through the reflected part
        let mut cache = ShiftCache::new(&fam, w, None);
        let delta = -0.537;
        let r = cache.shifted(delta);
        for i in [0usize, 3, 40, 120] {
            let u = fam.u(i);
            let direct = psi_eval(&dec, tau, u + delta, u).unwrap().value;
            assert!((r[i] - direct).abs() < 2e-3 * direct.abs().max(0.05), "{i} {} {direct}", r[i]);
        }
    }

    #[test]
    fn window_family_matches_parity_family_in_deep_well() {
        let b = -36.0;
        let e_max = 40.0;
        let win = Family::build(b, e_max, 0.01, 1.0, |_| 0.0).unwrap();
        assert!(win.mirror.iter().all(|s| *s == 0.0));
        assert!(win.k0 > 0);
        // the even/odd pair is degenerate, so each window level appears twice
        let tau = 0.3;
        let w_win: f64 = win.energies.iter().map(|e| 2.0 * (-e * tau).exp()).sum();
        let h = win.h;
        let grid_n = (2.0 * 8.0 / h).round() as usize + 1;
        let p = crate::QuarticParams::new(1.0, b).unwrap();
        let g = ThetaGrid::new(8.0, grid_n).unwrap();
        let dec = crate::propagator::spectrum(&assemble_hamiltonian(&p, &g), 12).unwrap();
        let w_full: f64 = dec.energies.iter().filter(|e| **e < e_max).map(|e| (-e * tau).exp()).sum();
        assert!((w_win - w_full).abs() < 1e-3 * w_full, "{w_win} {w_full}");
    }

    #[test]
    fn antiderivative_integrates_shift() {
        let fam = Family::build(0.3, 80.0, 0.01, 1.0, |_| 0.0).unwrap();
        let tau = 0.25;
        let w: Vec<f64> = fam.energies.iter().map(|e| (-e * tau).exp()).collect();
        let cum = fam.antiderivatives();
        let mut cache = ShiftCache::new(&fam, w, Some(cum));
        let (c, a) = (1.7, 0.6);
        let integ = cache.integrated(c, a);
        // compare with Gauss-Legendre over the shift
        let rule = quadrature::uniform(-a, a, 8, 8);
        let mut direct = vec![0.0; fam.len];
        for (x, wx) in rule.nodes.iter().zip(&rule.weights) {
            let r = cache.shifted(c * x);
            direct.iter_mut().zip(&r).for_each(|(d, v)| *d += wx * v);
        }
        for i in [0usize, 10, 50, 100] {
            assert!((integ[i] - direct[i]).abs() < 1e-4, "{i} {} {}", integ[i], direct[i]);
        }
    }

    #[test]
    fn chirp_recurrence_matches_direct() {
        let fam = Family::build(0.0, 50.0, 0.01, 1.0, |_| 0.0).unwrap();
        let r: Vec<f64> = (0..fam.len).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let (a, b, q) = (0.3, -2.1, 0.77);
        let got = chirp_sum(&fam, &r, a, b, q);
        let want: Complex64 = r
            .iter()
            .enumerate()
            .map(|(i, ri)| {
                let u = fam.u(i);
                Complex64::cis(a + b * u + q * u * u) * ri
            })
            .sum();
        assert!((got - want).norm() < 1e-11);
    }

    #[test]
    fn config_contract() {
        assert!(QuadratureConfig::default().validate().is_ok());
        let bad = QuadratureConfig { scale_order: 7, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = QuadratureConfig { tail_tol: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let c = QuadratureConfig::default().coarsened();
        assert!(c.validate().is_ok());
    }
}
