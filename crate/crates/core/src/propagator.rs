//! Heat kernel `Psi_tau(theta, theta_bar; alpha, beta)` of
//! `H = -d^2/dtheta^2 + (alpha theta^2 + beta)^2` by eigen-expansion of a
//! second-order finite-difference discretization with Dirichlet walls.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::error::{contract, Error, Result};
use crate::interp::cubic_at;
use crate::representation::QuarticParams;
use crate::tridiag::SymTridiag;

/// Relative weight below which a dropped mode counts as negligible.
pub const MODE_TOLERANCE: f64 = 1e-12;

/// Uniform grid `theta_j = -L + j h`, `h = 2L / (n - 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaGrid {
    half_width: f64,
    n: usize,
}

impl ThetaGrid {
    pub fn new(half_width: f64, n: usize) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(contract("grid half-width must be positive"));
        }
        if n < 16 {
            return Err(contract("grid needs at least 16 nodes"));
        }
        Ok(Self { half_width, n })
    }

    /// Default half-width `max(8, 3 theta0 + 8 / sqrt(omega))`, where
    /// `theta0` is the well position and `omega` the harmonic frequency
    /// there (floored at the quartic scale `|alpha|^(1/3)`), and a spacing
    /// resolving the well.
    pub fn default_for(p: &QuarticParams) -> Self {
        let (a, b) = (p.alpha.abs(), if p.alpha < 0.0 { -p.beta } else { p.beta });
        let theta0 = if a > 0.0 { (-b / a).max(0.0).sqrt() } else { 0.0 };
        let omega = (2.0 * a * theta0).max((2.0 * a * b.abs()).sqrt()).max(a.cbrt());
        let l = if omega > 0.0 { (3.0 * theta0 + 8.0 / omega.sqrt()).max(8.0) } else { 8.0 };
        let h = 0.02 * omega.max(1.0).sqrt().recip();
        let n = ((2.0 * l / h).ceil() as usize + 1).max(2048);
        Self { half_width: l, n }
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.n - 1) as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.spacing()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.node(j)).collect()
    }

    /// The same grid stretched by `c` (`L -> c L`, same node count).
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.half_width * c, self.n)
    }
}

/// The discretized operator `H` together with what it was built from.
#[derive(Debug, Clone)]
pub struct QuarticHamiltonian {
    pub params: QuarticParams,
    pub grid: ThetaGrid,
    pub op: SymTridiag,
}

pub fn assemble_hamiltonian(p: &QuarticParams, grid: &ThetaGrid) -> QuarticHamiltonian {
    let h = grid.spacing();
    let k = 1.0 / (h * h);
    let diag = (0..grid.n).map(|j| 2.0 * k + p.potential(grid.node(j))).collect();
    QuarticHamiltonian { params: *p, grid: *grid, op: SymTridiag::new(diag, vec![-k; grid.n - 1]) }
}

/// Lowest eigenpairs; `modes[k][j]` is normalized so that `h sum_j modes[k][j]^2 = 1`.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub params: QuarticParams,
    pub grid: ThetaGrid,
    pub energies: Vec<f64>,
    pub modes: Vec<Vec<f64>>,
}

/// The operator restricted to even and odd grid functions.
struct ParityBlocks {
    even: SymTridiag,
    odd: Option<SymTridiag>,
    centered: bool,
}

fn parity_blocks(h: &QuarticHamiltonian) -> ParityBlocks {
    let n = h.grid.n;
    let d = &h.op.diag;
    let k = -h.op.off[0];
    if n.is_multiple_of(2) {
        let m = n / 2;
        let mut even: Vec<f64> = d[m..].to_vec();
        let mut odd = even.clone();
        even[0] -= k;
        odd[0] += k;
        ParityBlocks {
            even: SymTridiag::new(even, vec![-k; m - 1]),
            odd: Some(SymTridiag::new(odd, vec![-k; m - 1])),
            centered: false,
        }
    } else {
        let c = n / 2;
        let even_diag = d[c..].to_vec();
        let mut even_off = vec![-k; c];
        even_off[0] = -std::f64::consts::SQRT_2 * k;
        let odd = (c > 0).then(|| SymTridiag::new(d[c + 1..].to_vec(), vec![-k; c - 1]));
        ParityBlocks { even: SymTridiag::new(even_diag, even_off), odd, centered: true }
    }
}

impl ParityBlocks {
    fn count_below(&self, e: f64) -> usize {
        self.even.count_below(e) + self.odd.as_ref().map_or(0, |o| o.count_below(e))
    }

    fn norm(&self) -> f64 {
        self.even.norm_bound().max(self.odd.as_ref().map_or(0.0, |o| o.norm_bound()))
    }

    /// Smallest `e` with at least `k` eigenvalues `<= e`.
    fn level(&self, k: usize) -> f64 {
        let (mut lo, mut hi) = self.even.gershgorin();
        if let Some(o) = &self.odd {
            let (a, b) = o.gershgorin();
            lo = lo.min(a);
            hi = hi.max(b);
        }
        hi += 1e-9 * (hi - lo).abs() + 1e-300;
        let tol = 4.0 * f64::EPSILON * self.norm();
        while hi - lo > tol {
            let m = 0.5 * (lo + hi);
            if self.count_below(m) >= k {
                hi = m;
            } else {
                lo = m;
            }
        }
        hi
    }
}

fn assemble_full(blocks: &ParityBlocks, n: usize, h: f64, half: &[f64], even: bool) -> Vec<f64> {
    let mut v = vec![0.0; n];
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let sign = if even { 1.0 } else { -1.0 };
    if !blocks.centered {
        let m = n / 2;
        for (k, u) in half.iter().enumerate() {
            v[m + k] = u * r;
            v[m - 1 - k] = sign * u * r;
        }
    } else {
        let c = n / 2;
        if even {
            v[c] = half[0];
            for (k, u) in half.iter().enumerate().skip(1) {
                v[c + k] = u * r;
                v[c - k] = u * r;
            }
        } else {
            for (k, u) in half.iter().enumerate() {
                v[c + 1 + k] = u * r;
                v[c - 1 - k] = -u * r;
            }
        }
    }
    let s = h.sqrt().recip();
    v.iter_mut().for_each(|x| *x *= s);
    v
}

/// Lowest `k_max` eigenpairs of `H`, computed separately on the even and odd
/// subspaces so that every mode has exact parity.
pub fn spectrum(h: &QuarticHamiltonian, k_max: usize) -> Result<SpectralDecomposition> {
    let n = h.grid.n;
    if k_max > n {
        return Err(contract(format!("k_max = {k_max} exceeds grid size {n}")));
    }
    let blocks = parity_blocks(h);
    let mut pairs: Vec<(f64, bool, Vec<f64>)> = Vec::new();
    if k_max > 0 {
        let top = blocks.level(k_max);
        let (ee, ev) = {
            let e = blocks.even.eigenvalues_below(top * (1.0 + 1e-14) + 1e-300);
            let v = blocks.even.eigenvectors(&e);
            (e, v)
        };
        pairs.extend(ee.into_iter().zip(ev).map(|(e, v)| (e, true, v)));
        if let Some(o) = &blocks.odd {
            let e = o.eigenvalues_below(top * (1.0 + 1e-14) + 1e-300);
            let v = o.eigenvectors(&e);
            pairs.extend(e.into_iter().zip(v).map(|(e, v)| (e, false, v)));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.truncate(k_max);
    let hs = h.grid.spacing();
    let (energies, modes) =
        pairs.into_iter().map(|(e, even, half)| (e, assemble_full(&blocks, n, hs, &half, even))).unzip();
    Ok(SpectralDecomposition { params: h.params, grid: h.grid, energies, modes })
}

/// Mode count needed for times `>= tau_min`: every mode with
/// `exp(-(E_k - E_0) tau_min) >= MODE_TOLERANCE` plus one, capped at `n / 4`.
pub fn default_mode_count(h: &QuarticHamiltonian, tau_min: f64) -> Result<usize> {
    if !(tau_min > 0.0) {
        return Err(contract("tau_min must be positive"));
    }
    let blocks = parity_blocks(h);
    let e0 = blocks.level(1);
    let cut = e0 - MODE_TOLERANCE.ln() / tau_min;
    Ok((blocks.count_below(cut) + 1).min(h.grid.n / 4).max(1))
}

pub fn spectrum_for_time(h: &QuarticHamiltonian, tau_min: f64) -> Result<SpectralDecomposition> {
    spectrum(h, default_mode_count(h, tau_min)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagatorValue {
    pub tau: f64,
    pub value: f64,
    /// Relative weight `exp(-(E_last - E_0) tau)` of the last retained mode.
    pub tail_bound: f64,
    /// Set when `tail_bound` exceeds [`MODE_TOLERANCE`].
    pub truncated: bool,
}

impl SpectralDecomposition {
    /// All retained modes interpolated at `theta`.
    pub fn modes_at(&self, theta: f64) -> Result<Vec<f64>> {
        let l = self.grid.half_width;
        let h = self.grid.spacing();
        if !(theta.abs() <= l * (1.0 + 1e-12)) {
            return Err(Error::OutOfDomain(format!("theta = {theta} outside [-{l}, {l}]")));
        }
        Ok(self.modes.iter().map(|m| cubic_at(m, -l, h, theta).unwrap_or(0.0)).collect())
    }

    pub fn tail_bound(&self, tau: f64) -> f64 {
        match (self.energies.first(), self.energies.last()) {
            (Some(e0), Some(el)) if self.energies.len() < self.grid.n => (-(el - e0) * tau).exp(),
            _ => 0.0,
        }
    }

    /// `Psi_tau` between all pairs of grid nodes (row-major `n x n`).
    pub fn kernel_matrix(&self, tau: f64, stride: usize) -> Result<Vec<f64>> {
        if !(tau > 0.0) {
            return Err(contract("tau must be positive"));
        }
        let idx: Vec<usize> = (0..self.grid.n).step_by(stride.max(1)).collect();
        let m = idx.len();
        let mut out = vec![0.0; m * m];
        for (e, mode) in self.energies.iter().zip(&self.modes) {
            let w = (-e * tau).exp();
            for (a, &i) in idx.iter().enumerate() {
                let wi = w * mode[i];
                for (b, &j) in idx.iter().enumerate() {
                    out[a * m + b] += wi * mode[j];
                }
            }
        }
        Ok(out)
    }
}

/// `Psi_tau(theta, theta_bar) = sum_n exp(-E_n tau) phi_n(theta) phi_n(theta_bar)`.
pub fn psi_eval(
    dec: &SpectralDecomposition,
    tau: f64,
    theta: f64,
    theta_bar: f64,
) -> Result<PropagatorValue> {
    if !(tau > 0.0) {
        return Err(contract(format!("tau must be positive, got {tau}")));
    }
    let a = dec.modes_at(theta)?;
    let b = dec.modes_at(theta_bar)?;
    let value = dec.energies.iter().zip(a.iter().zip(&b)).map(|(e, (x, y))| (-e * tau).exp() * x * y).sum();
    let tail_bound = dec.tail_bound(tau);
    Ok(PropagatorValue { tau, value, tail_bound, truncated: tail_bound > MODE_TOLERANCE })
}

/// Ground energy on the default grid.
pub fn ground_energy(p: &QuarticParams) -> f64 {
    let grid = ThetaGrid::default_for(p);
    let h = assemble_hamiltonian(p, &grid);
    parity_blocks(&h).even.lowest_eigenvalues(1)[0]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct CacheKey {
    alpha: u64,
    beta: u64,
    half_width: u64,
    n: usize,
    k: usize,
}

/// Thread-safe memo of decompositions keyed by the sign-normalized
/// `(alpha, beta)`, the grid and the mode count.
#[derive(Debug, Default)]
pub struct DecompositionCache {
    map: Mutex<HashMap<CacheKey, Arc<SpectralDecomposition>>>,
}

impl DecompositionCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get_or_compute(
        &self,
        p: &QuarticParams,
        grid: &ThetaGrid,
        k_max: usize,
    ) -> Result<Arc<SpectralDecomposition>> {
        let q = p.sign_normalized();
        let key = CacheKey {
            alpha: q.alpha.to_bits(),
            beta: (q.beta + 0.0).to_bits(),
            half_width: grid.half_width.to_bits(),
            n: grid.n,
            k: k_max,
        };
        if let Some(d) = self.map.lock().unwrap().get(&key) {
            return Ok(d.clone());
        }
        // computed outside the lock; a racing duplicate is harmless
        let q1 = QuarticParams { time_scale: 1.0, ..q };
        let dec = Arc::new(spectrum(&assemble_hamiltonian(&q1, grid), k_max)?);
        Ok(self.map.lock().unwrap().entry(key).or_insert(dec).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(a: f64, b: f64) -> QuarticParams {
        QuarticParams::new(a, b).unwrap()
    }

    #[test]
    fn grid_contract() {
        assert!(ThetaGrid::new(1.0, 15).is_err());
        assert!(ThetaGrid::new(0.0, 100).is_err());
        let g = ThetaGrid::new(2.0, 21).unwrap();
        assert_eq!(g.node(0), -2.0);
        assert!((g.node(20) - 2.0).abs() < 1e-15);
        assert!(g.node(10).abs() < 1e-15);
    }

    #[test]
    fn free_spectrum_is_discrete_sine() {
        for n in [64, 65] {
            let g = ThetaGrid::new(3.0, n).unwrap();
            let h = assemble_hamiltonian(&params(0.0, 0.0), &g);
            let dec = spectrum(&h, 6).unwrap();
            let hs = g.spacing();
            for (k, e) in dec.energies.iter().enumerate() {
                let th = (k + 1) as f64 * std::f64::consts::PI / (2.0 * (n + 1) as f64);
                let exact = 4.0 / (hs * hs) * th.sin().powi(2);
                assert!((e - exact).abs() < 1e-9 * exact.max(1.0), "{n} {k}");
                // sine mode shape
                let mode = &dec.modes[k];
                let j0 = 0;
                let ratio = mode[j0]
                    / (((j0 + 1) as f64) * (k + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).sin();
                for j in [n / 4, n / 2 + 3] {
                    let s = (((j + 1) * (k + 1)) as f64 * std::f64::consts::PI / (n + 1) as f64).sin();
                    assert!((mode[j] - ratio * s).abs() < 1e-9, "{n} {k} {j}");
                }
            }
        }
    }

    #[test]
    fn constant_potential_shift() {
        let g = ThetaGrid::new(5.0, 200).unwrap();
        let e0 = spectrum(&assemble_hamiltonian(&params(0.0, 0.0), &g), 5).unwrap();
        let e1 = spectrum(&assemble_hamiltonian(&params(0.0, 1.5), &g), 5).unwrap();
        for (a, b) in e0.energies.iter().zip(&e1.energies) {
            assert!((b - a - 2.25).abs() < 1e-10);
        }
    }

    #[test]
    fn too_many_modes_is_a_contract_error() {
        let g = ThetaGrid::new(5.0, 20).unwrap();
        assert!(spectrum(&assemble_hamiltonian(&params(1.0, 0.0), &g), 21).is_err());
        assert_eq!(spectrum(&assemble_hamiltonian(&params(1.0, 0.0), &g), 20).unwrap().energies.len(), 20);
    }

    #[test]
    fn psi_rejects_bad_input() {
        let g = ThetaGrid::new(5.0, 100).unwrap();
        let dec = spectrum(&assemble_hamiltonian(&params(1.0, 0.0), &g), 10).unwrap();
        assert!(psi_eval(&dec, 0.0, 0.0, 0.0).is_err());
        assert!(psi_eval(&dec, 0.1, 6.0, 0.0).is_err());
        let v = psi_eval(&dec, 0.001, 0.0, 0.0).unwrap();
        assert!(v.truncated);
    }

    #[test]
    fn cache_shares_sign_pairs() {
        let cache = DecompositionCache::new();
        let g = ThetaGrid::new(6.0, 256).unwrap();
        let a = cache.get_or_compute(&params(1.0, -2.0), &g, 8).unwrap();
        let b = cache.get_or_compute(&params(-1.0, 2.0), &g, 8).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(cache.len(), 1);
    }
}
