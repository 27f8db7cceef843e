//! Monte Carlo simulation of the hypoelliptic diffusion generated by
//! `X1^2 + X2^2`, used as an independent check on the kernel.
//!
//! The Stratonovich SDE `dg = sqrt(2) X1(g) o dW1 + sqrt(2) X2(g) o dW2` is
//! integrated from the identity. On the Engel group the Ito and
//! Stratonovich forms coincide; on the Cartan group the Ito form carries the
//! drift `x1` on `x5`.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{contract, Result};
use crate::group::{GroupPoint, GroupTag};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Euler-Maruyama on the Ito form.
    #[default]
    ItoCorrected,
    /// Stochastic Heun (predictor-corrector) on the Stratonovich form.
    Heun,
}

impl std::str::FromStr for Scheme {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ito" | "ito-corrected" => Ok(Scheme::ItoCorrected),
            "heun" => Ok(Scheme::Heun),
            _ => Err(crate::Error::Parse(format!("unknown scheme '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub tag: GroupTag,
    pub t: f64,
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub scheme: Scheme,
}

impl SimConfig {
    pub fn new(tag: GroupTag, t: f64, n_paths: usize, n_steps: usize, seed: u64) -> Self {
        Self { tag, t, n_paths, n_steps, seed, scheme: Scheme::ItoCorrected }
    }

    pub fn with_scheme(self, scheme: Scheme) -> Self {
        Self { scheme, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t > 0.0 && self.t.is_finite()) {
            return Err(contract(format!("t must be positive, got {}", self.t)));
        }
        if self.n_steps < 100 {
            return Err(contract(format!("n_steps must be at least 100, got {}", self.n_steps)));
        }
        if self.n_paths == 0 {
            return Err(contract("n_paths must be positive"));
        }
        Ok(())
    }
}

/// Endpoints of the simulated paths at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub config: SimConfig,
    coords: Vec<f64>,
}

impl SampleSet {
    /// Wraps raw coordinates (row-major, `tag.dim()` per sample).
    pub fn from_coords(config: SimConfig, coords: Vec<f64>) -> Result<Self> {
        let d = config.tag.dim();
        if !coords.len().is_multiple_of(d) {
            return Err(contract("coordinate count is not a multiple of the dimension"));
        }
        Ok(Self { config, coords })
    }

    pub fn dim(&self) -> usize {
        self.config.tag.dim()
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.coords[i * d..(i + 1) * d]
    }

    pub fn point(&self, i: usize) -> GroupPoint {
        GroupPoint::new(self.config.tag, self.coords(i)).expect("finite sample")
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.coords.chunks(self.dim()).map(|c| c[j]).collect()
    }

    /// One row per path, coordinates in `{:.16e}`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let d = self.dim();
        let header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for row in self.coords.chunks(d) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// `sqrt(2)` times the horizontal frame applied to `(dw1, dw2)`.
#[inline]
fn diffusion_step(cartan: bool, x: &[f64; 5], dw1: f64, dw2: f64) -> [f64; 5] {
    let s = std::f64::consts::SQRT_2;
    let (x1, x2) = (x[0], x[1]);
    [s * dw1, s * dw2, -s * x1 * dw2, 0.5 * s * x1 * x1 * dw2, if cartan { s * x1 * x2 * dw2 } else { 0.0 }]
}

fn simulate_path(cfg: &SimConfig, path: u64) -> [f64; 5] {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(path);
    let cartan = cfg.tag == GroupTag::Cartan;
    let dt = cfg.t / cfg.n_steps as f64;
    let sd = dt.sqrt();
    let mut x = [0.0f64; 5];
    for _ in 0..cfg.n_steps {
        let z1: f64 = StandardNormal.sample(&mut rng);
        let z2: f64 = StandardNormal.sample(&mut rng);
        let (dw1, dw2) = (sd * z1, sd * z2);
        let a = diffusion_step(cartan, &x, dw1, dw2);
        match cfg.scheme {
            Scheme::ItoCorrected => {
                let drift = if cartan { x[0] * dt } else { 0.0 };
                for i in 0..5 {
                    x[i] += a[i];
                }
                x[4] += drift;
            }
            Scheme::Heun => {
                let mut pred = x;
                for i in 0..5 {
                    pred[i] += a[i];
                }
                let b = diffusion_step(cartan, &pred, dw1, dw2);
                for i in 0..5 {
                    x[i] += 0.5 * (a[i] + b[i]);
                }
            }
        }
    }
    x
}

/// Simulates `n_paths` independent paths. Path `i` draws from its own
/// ChaCha stream, so the result does not depend on the thread count.
pub fn simulate(cfg: &SimConfig) -> Result<SampleSet> {
    cfg.validate()?;
    let d = cfg.tag.dim();
    const CHUNK: usize = 1024;
    let chunks = cfg.n_paths.div_ceil(CHUNK);
    let parts = par::map_range(chunks, |c| {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(cfg.n_paths);
        let mut out = Vec::with_capacity((hi - lo) * d);
        for p in lo..hi {
            out.extend_from_slice(&simulate_path(cfg, p as u64)[..d]);
        }
        out
    });
    Ok(SampleSet { config: *cfg, coords: parts.concat() })
}

/// Mean and variance of one coordinate with their standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub mean: f64,
    pub mean_se: f64,
    pub var: f64,
    pub var_se: f64,
}

pub fn moments(s: &SampleSet) -> Vec<Moments> {
    (0..s.dim()).map(|j| column_moments(&s.column(j))).collect()
}

fn column_moments(x: &[f64]) -> Moments {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for v in x {
        let d = (v - mean) * (v - mean);
        m2 += d;
        m4 += d * d;
    }
    let var = m2 / (n - 1.0);
    let m4 = m4 / n;
    Moments { mean, mean_se: (var / n).sqrt(), var, var_se: ((m4 - var * var).max(0.0) / n).sqrt() }
}

/// Per-coordinate Silverman bandwidths scaled by 0.8.
pub fn default_bandwidths(s: &SampleSet) -> Vec<f64> {
    let d = s.dim() as f64;
    let n = s.len() as f64;
    let factor = (4.0 / ((d + 2.0) * n)).powf(1.0 / (d + 4.0));
    moments(s).iter().map(|m| 0.8 * factor * m.var.sqrt()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

pub const KDE_BATCHES: usize = 50;

/// Product-Gaussian kernel density estimate at `x`; the standard error
/// comes from `KDE_BATCHES` contiguous batch means.
pub fn kde_estimate(s: &SampleSet, x: &GroupPoint, bandwidths: &[f64]) -> Result<Estimate> {
    if s.is_empty() {
        return Err(contract("empty sample set"));
    }
    if x.tag() != s.config.tag {
        return Err(contract("evaluation point from another group"));
    }
    let d = s.dim();
    if bandwidths.len() != d || bandwidths.iter().any(|b| !(*b > 0.0)) {
        return Err(contract(format!("need {d} positive bandwidths")));
    }
    let n = s.len();
    let batches = KDE_BATCHES.min(n);
    let norm: f64 = bandwidths.iter().map(|b| 1.0 / (b * (2.0 * std::f64::consts::PI).sqrt())).product();
    let inv: Vec<f64> = bandwidths.iter().map(|b| 1.0 / b).collect();
    let xc = x.coords();
    let means = par::map_range(batches, |b| {
        let lo = b * n / batches;
        let hi = (b + 1) * n / batches;
        let mut acc = 0.0;
        for i in lo..hi {
            let c = s.coords(i);
            let mut q = 0.0;
            for j in 0..d {
                let z = (c[j] - xc[j]) * inv[j];
                q += z * z;
            }
            if q < 80.0 {
                acc += (-0.5 * q).exp();
            }
        }
        norm * acc / (hi - lo) as f64
    });
    let mean = means.iter().sum::<f64>() / batches as f64;
    let var = if batches > 1 {
        means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (batches - 1) as f64
    } else {
        0.0
    };
    Ok(Estimate { value: mean, stderr: (var / batches as f64).sqrt() })
}

/// Density at `x` by conditioning on the `x1` path.
///
/// The `x1` path is drawn as a Brownian bridge pinned at `x[0]`. Given that
/// path, `(x2, x3, x4)` is a linear image of the `W2` increments, so its
/// conditional density is Gaussian and is evaluated exactly. On the Engel
/// group that is the whole estimator, unbiased up to the time step, and
/// `x5_bandwidth` is ignored. On the Cartan group the increments are then
/// drawn conditionally on `(x2, x3, x4)`, `x5` is integrated along the
/// piecewise linear path, and a one-dimensional Gaussian kernel of width
/// `x5_bandwidth` is applied in `x5` only. Path `i` uses stream `i` of `seed`.
pub fn bridge_density(
    x: &GroupPoint,
    t: f64,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
    x5_bandwidth: f64,
) -> Result<Estimate> {
    let cartan = x.tag() == GroupTag::Cartan;
    if !(t > 0.0) || n_paths < 2 || n_steps < 2 {
        return Err(contract("need t > 0, n_paths >= 2 and n_steps >= 2"));
    }
    if cartan && !(x5_bandwidth > 0.0) {
        return Err(contract("need a positive x5 bandwidth"));
    }
    let c = x.coords();
    const CHUNK: usize = 256;
    let chunks = n_paths.div_ceil(CHUNK);
    let parts = par::map_range(chunks, |k| {
        let lo = k * CHUNK;
        let hi = (lo + CHUNK).min(n_paths);
        let mut bridge = Bridge::new(n_steps, t, c, x5_bandwidth);
        let (mut sum, mut sum2) = (0.0, 0.0);
        for p in lo..hi {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(p as u64);
            let g = bridge.sample(&mut rng, cartan);
            sum += g;
            sum2 += g * g;
        }
        (sum, sum2)
    });
    let (sum, sum2) = parts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = n_paths as f64;
    let mean = sum / n;
    let var = (sum2 / n - mean * mean).max(0.0) * n / (n - 1.0);
    let p1 = (-c[0] * c[0] / (4.0 * t)).exp() / (4.0 * std::f64::consts::PI * t).sqrt();
    Ok(Estimate { value: p1 * mean, stderr: p1 * (var / n).sqrt() })
}

struct Bridge<'a> {
    x: &'a [f64],
    dt: f64,
    h5: f64,
    x1: Vec<f64>,
    xi: Vec<f64>,
    rows: Vec<[f64; 3]>,
}

impl<'a> Bridge<'a> {
    fn new(n_steps: usize, t: f64, x: &'a [f64], h5: f64) -> Self {
        Bridge {
            x,
            dt: t / n_steps as f64,
            h5,
            x1: vec![0.0; n_steps + 1],
            xi: vec![0.0; n_steps],
            rows: vec![[0.0; 3]; n_steps],
        }
    }

    /// One step on which `x1` is a Brownian bridge from `a` to `b`. Returns the
    /// mean `W2` coefficients of the `(x2, x3, x4)` increments and the exact
    /// expected covariance contribution `2 int v v^T ds`, `v = (1, -x1, x1^2/2)`.
    fn step(a: f64, b: f64, dt: f64) -> ([f64; 3], [f64; 3]) {
        // three-point Gauss-Legendre on [0, 1]: exact through degree five
        const U: [f64; 3] = [0.112_701_665_379_258_3, 0.5, 0.887_298_334_620_741_7];
        const W: [f64; 3] = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];
        let mut e = [0.0f64; 5];
        for (u, w) in U.iter().zip(W) {
            let l = a + (b - a) * u;
            let v = 2.0 * dt * u * (1.0 - u);
            e[1] += w * l;
            e[2] += w * (l * l + v);
            e[3] += w * (l * l * l + 3.0 * l * v);
            e[4] += w * (l.powi(4) + 6.0 * l * l * v + 3.0 * v * v);
        }
        let s = std::f64::consts::SQRT_2;
        let row = [s, -s * e[1], 0.5 * s * e[2]];
        // (x3, x3), (x3, x4), (x4, x4); the x2 entries are exact in the row
        let c = [2.0 * dt * e[2], -dt * e[3], 0.5 * dt * e[4]];
        (row, c)
    }
    fn sample(&mut self, rng: &mut ChaCha8Rng, cartan: bool) -> f64 {
        let m = self.xi.len();
        let dt = self.dt;
        let sd = (2.0 * dt).sqrt();
        for k in 0..m {
            let z: f64 = StandardNormal.sample(rng);
            self.x1[k + 1] = self.x1[k] + sd * z;
        }
        let shift = self.x1[m] - self.x[0];
        for (k, v) in self.x1.iter_mut().enumerate() {
            *v -= shift * k as f64 / m as f64;
        }
        let mut cov = [[0.0f64; 3]; 3];
        let mut extra = [0.0f64; 3];
        for k in 0..m {
            let (a, c) = Self::step(self.x1[k], self.x1[k + 1], dt);
            for i in 0..3 {
                for j in i..3 {
                    cov[i][j] += dt * a[i] * a[j];
                }
            }
            extra[0] += c[0] - dt * a[1] * a[1];
            extra[1] += c[1] - dt * a[1] * a[2];
            extra[2] += c[2] - dt * a[2] * a[2];
            self.rows[k] = a;
        }
        // the part of (x3, x4) not carried by the step increments of W2
        cov[1][1] += extra[0];
        cov[1][2] += extra[1];
        cov[2][2] += extra[2];
        let y = [self.x[1], self.x[2], self.x[3]];
        let g = gaussian3(&cov, &y);
        if !cartan || g == 0.0 {
            return g;
        }
        // draw (xi, eta) conditioned on A xi + eta = y
        let sd = dt.sqrt();
        let mut lin = [0.0f64; 3];
        for k in 0..m {
            let z: f64 = StandardNormal.sample(rng);
            self.xi[k] = sd * z;
            for i in 0..3 {
                lin[i] += self.rows[k][i] * self.xi[k];
            }
        }
        let l11 = extra[0].max(0.0).sqrt();
        let l21 = if l11 > 0.0 { extra[1] / l11 } else { 0.0 };
        let l22 = (extra[2] - l21 * l21).max(0.0).sqrt();
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        lin[1] += l11 * z1;
        lin[2] += l21 * z1 + l22 * z2;
        let r = [y[0] - lin[0], y[1] - lin[1], y[2] - lin[2]];
        let Some(lam) = solve3(&cov, &r) else { return 0.0 };
        let s2 = std::f64::consts::SQRT_2;
        let (mut x2, mut x5) = (0.0f64, 0.0f64);
        // dx5 = x1 x2 dx2 integrated along the piecewise linear path
        for k in 0..m {
            let (x1, d1) = (self.x1[k], self.x1[k + 1] - self.x1[k]);
            let a = self.rows[k];
            let d2 = s2 * (self.xi[k] + dt * (a[0] * lam[0] + a[1] * lam[1] + a[2] * lam[2]));
            x5 += d2 * (x1 * x2 + 0.5 * (x1 * d2 + d1 * x2) + d1 * d2 / 3.0);
            x2 += d2;
        }
        let z = (self.x[4] - x5) / self.h5;
        g * (-0.5 * z * z).exp() / (self.h5 * (2.0 * std::f64::consts::PI).sqrt())
    }
}

/// Solves `C v = r` for a symmetric 3x3 `C` in upper triangular storage.
fn solve3(cov: &[[f64; 3]; 3], r: &[f64; 3]) -> Option<[f64; 3]> {
    let (a, b, c, d, e, f) = (cov[0][0], cov[0][1], cov[0][2], cov[1][1], cov[1][2], cov[2][2]);
    let c00 = d * f - e * e;
    let c01 = c * e - b * f;
    let c02 = b * e - c * d;
    let c11 = a * f - c * c;
    let c12 = b * c - a * e;
    let c22 = a * d - b * b;
    let det = a * c00 + b * c01 + c * c02;
    if !(det > 0.0) {
        return None;
    }
    Some([
        (c00 * r[0] + c01 * r[1] + c02 * r[2]) / det,
        (c01 * r[0] + c11 * r[1] + c12 * r[2]) / det,
        (c02 * r[0] + c12 * r[1] + c22 * r[2]) / det,
    ])
}

/// Centered Gaussian density in three dimensions; `cov` is upper triangular storage.
fn gaussian3(cov: &[[f64; 3]; 3], y: &[f64; 3]) -> f64 {
    let (a, b, c, d, e, f) = (cov[0][0], cov[0][1], cov[0][2], cov[1][1], cov[1][2], cov[2][2]);
    let c00 = d * f - e * e;
    let c01 = c * e - b * f;
    let c02 = b * e - c * d;
    let c11 = a * f - c * c;
    let c12 = b * c - a * e;
    let c22 = a * d - b * b;
    let det = a * c00 + b * c01 + c * c02;
    if !(det > 0.0) {
        return 0.0;
    }
    let q = (c00 * y[0] * y[0]
        + c11 * y[1] * y[1]
        + c22 * y[2] * y[2]
        + 2.0 * (c01 * y[0] * y[1] + c02 * y[0] * y[2] + c12 * y[1] * y[2]))
        / det;
    (-0.5 * q).exp() / ((2.0 * std::f64::consts::PI).powi(3) * det).sqrt()
}

/// One-sample Kolmogorov-Smirnov test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Asymptotic Kolmogorov survival function with the Stephens correction.
fn kolmogorov_p(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lam = (sn + 0.12 + 0.11 / sn) * d;
    if lam < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lam * lam).exp();
        sum += if k as i64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

pub fn ks_standard_normal(values: &[f64]) -> KsResult {
    let normal = Normal::standard();
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len() as f64;
    let mut d = 0.0f64;
    for (i, x) in v.iter().enumerate() {
        let f = normal.cdf(*x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    KsResult { statistic: d, p_value: kolmogorov_p(d, v.len()) }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarginalReport {
    pub ks_x1: KsResult,
    pub ks_x2: KsResult,
    pub correlation: f64,
    pub correlation_se: f64,
}

/// KS tests of `x1 / sqrt(2t)` and `x2 / sqrt(2t)` against the standard
/// normal, and the sample correlation of `(x1, x2)`.
pub fn marginal_check(s: &SampleSet) -> MarginalReport {
    let scale = 1.0 / (2.0 * s.config.t).sqrt();
    let x1: Vec<f64> = s.column(0).iter().map(|v| v * scale).collect();
    let x2: Vec<f64> = s.column(1).iter().map(|v| v * scale).collect();
    let n = x1.len() as f64;
    let (m1, m2) = (x1.iter().sum::<f64>() / n, x2.iter().sum::<f64>() / n);
    let (mut c, mut v1, mut v2) = (0.0, 0.0, 0.0);
    for (a, b) in x1.iter().zip(&x2) {
        c += (a - m1) * (b - m2);
        v1 += (a - m1) * (a - m1);
        v2 += (b - m2) * (b - m2);
    }
    MarginalReport {
        ks_x1: ks_standard_normal(&x1),
        ks_x2: ks_standard_normal(&x2),
        correlation: c / (v1 * v2).sqrt(),
        correlation_se: 1.0 / n.sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kolmogorov_tail_values() {
        // Q(1.36) ~ 0.049, Q(1.63) ~ 0.01
        assert!((kolmogorov_p(1.36 / 1e3, 1_000_000) - 0.0494).abs() < 2e-3);
        assert!((kolmogorov_p(1.628 / 1e3, 1_000_000) - 0.0100).abs() < 1e-3);
        assert_eq!(kolmogorov_p(0.0, 100), 1.0);
    }

    #[test]
    fn path_streams_are_distinct_and_reproducible() {
        let cfg = SimConfig::new(GroupTag::Cartan, 0.5, 4, 100, 7);
        let a = simulate_path(&cfg, 1);
        assert_eq!(a, simulate_path(&cfg, 1));
        assert_ne!(a, simulate_path(&cfg, 2));
        assert_ne!(a, simulate_path(&SimConfig { seed: 8, ..cfg }, 1));
    }

    #[test]
    fn config_contract() {
        assert!(SimConfig::new(GroupTag::Engel, 0.0, 10, 100, 1).validate().is_err());
        assert!(SimConfig::new(GroupTag::Engel, 1.0, 10, 99, 1).validate().is_err());
        assert!(SimConfig::new(GroupTag::Engel, 1.0, 0, 100, 1).validate().is_err());
        assert!("heun".parse::<Scheme>().is_ok() && "x".parse::<Scheme>().is_err());
    }

    #[test]
    fn gaussian3_matches_diagonal_product() {
        let cov = [[0.5, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 0.1]];
        let y = [0.3, -1.0, 0.2];
        let one = |v: f64, s2: f64| (-v * v / (2.0 * s2)).exp() / (2.0 * std::f64::consts::PI * s2).sqrt();
        let want = one(0.3, 0.5) * one(-1.0, 2.0) * one(0.2, 0.1);
        assert!((gaussian3(&cov, &y) - want).abs() < 1e-14 * want);
    }
}
