//! Validation suites: randomized property checks and oracle comparisons for
//! every layer, each reported as a table of named PASS/FAIL checks.

use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::diffusion::{self, Scheme, SimConfig};
use crate::error::{Error, Result};
use crate::group::{
    bracket, exp_coords, frame, from_matrix, inverse, log_coords, multiply, to_matrix, AlgebraVector,
    GroupPoint, GroupTag,
};
use crate::kernel::{self, KernelResult, QuadratureConfig};
use crate::propagator::{
    assemble_hamiltonian, ground_energy, psi_eval, spectrum, spectrum_for_time, SpectralDecomposition,
    ThetaGrid,
};
use crate::representation::{
    drep, dual_to_quartic, gft_laplacian, rep_apply_with, second_derivative, DualPoint, Interpolation,
    QuarticParams, WaveFunction,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Group,
    Rep,
    Propagator,
    Kernel,
    Mc,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Group, Suite::Rep, Suite::Propagator, Suite::Kernel, Suite::Mc];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Group => "group",
            Suite::Rep => "rep",
            Suite::Propagator => "propagator",
            Suite::Kernel => "kernel",
            Suite::Mc => "mc",
        }
    }

    /// `"all"` or a single suite name.
    pub fn parse_selection(s: &str) -> Result<Vec<Suite>> {
        if s == "all" {
            return Ok(Self::ALL.to_vec());
        }
        Self::ALL.iter().copied().find(|x| x.name() == s).map(|x| vec![x]).ok_or_else(|| {
            Error::Parse(format!("unknown suite '{s}' (expected group, rep, propagator, kernel, mc or all)"))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<Check>,
    pub wall_seconds: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// One `PASS`/`FAIL` line per check.
    pub fn table(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let mark = if c.passed { "PASS" } else { "FAIL" };
            s.push_str(&format!("{mark}  {}/{}  {}\n", self.suite, c.name, c.detail));
        }
        s
    }
}

#[derive(Default)]
struct Recorder {
    checks: Vec<Check>,
}

impl Recorder {
    fn check(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(Check { name: name.to_string(), passed, detail });
    }

    /// Records a check whose computation may fail; an error counts as FAIL.
    fn attempt(&mut self, name: &str, f: impl FnOnce() -> Result<(bool, String)>) {
        match f() {
            Ok((ok, detail)) => self.check(name, ok, detail),
            Err(e) => self.check(name, false, format!("error: {e}")),
        }
    }

    fn finish(self, suite: &str, start: Instant) -> SuiteReport {
        SuiteReport {
            suite: suite.to_string(),
            checks: self.checks,
            wall_seconds: start.elapsed().as_secs_f64(),
        }
    }
}

pub fn run(suite: Suite) -> SuiteReport {
    match suite {
        Suite::Group => group_suite(),
        Suite::Rep => rep_suite(),
        Suite::Propagator => propagator_suite(),
        Suite::Kernel => {
            let a = kernel_g4_suite();
            let b = kernel_g5_suite();
            let mut checks = a.checks;
            checks.extend(b.checks);
            SuiteReport { suite: "kernel".into(), checks, wall_seconds: a.wall_seconds + b.wall_seconds }
        }
        Suite::Mc => mc_suite(),
    }
}

const TAGS: [GroupTag; 2] = [GroupTag::Engel, GroupTag::Cartan];

fn rng(stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(0x006e_696c_6865_6174);
    r.set_stream(stream);
    r
}

fn random_coords(r: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| r.random_range(-scale..scale)).collect()
}

fn random_point(r: &mut ChaCha8Rng, tag: GroupTag, scale: f64) -> GroupPoint {
    GroupPoint::new(tag, &random_coords(r, tag.dim(), scale)).unwrap()
}

fn random_algebra(r: &mut ChaCha8Rng, tag: GroupTag, scale: f64) -> AlgebraVector {
    AlgebraVector::new(tag, &random_coords(r, tag.dim(), scale)).unwrap()
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.2e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik != 0.0 {
                for j in 0..n {
                    c[i * n + j] += aik * b[k * n + j];
                }
            }
        }
    }
    c
}

// ---------------------------------------------------------------- group

pub const GROUP_TRIALS: usize = 10_000;

/// Expected `[l_i, l_j]` from the bracket tables.
fn table_bracket(tag: GroupTag, i: usize, j: usize) -> Vec<f64> {
    let mut out = vec![0.0; tag.dim()];
    let mut set = |k: usize, v: f64| {
        if k <= tag.dim() {
            out[k - 1] = v;
        }
    };
    match (i, j) {
        (1, 2) => set(3, 1.0),
        (2, 1) => set(3, -1.0),
        (1, 3) => set(4, 1.0),
        (3, 1) => set(4, -1.0),
        (2, 3) if tag == GroupTag::Cartan => set(5, 1.0),
        (3, 2) if tag == GroupTag::Cartan => set(5, -1.0),
        _ => {}
    }
    out
}

/// Classical fourth-order Runge-Kutta along the frame field `X_i`.
fn frame_flow(i: usize, x: &GroupPoint, s: f64, steps: usize) -> GroupPoint {
    let tag = x.tag();
    let d = tag.dim();
    let f = |y: &[f64]| -> Vec<f64> {
        frame(i, &GroupPoint::new(tag, y).unwrap()).unwrap().components().to_vec()
    };
    let h = s / steps as f64;
    let mut y = x.coords().to_vec();
    for _ in 0..steps {
        let k1 = f(&y);
        let y2: Vec<f64> = (0..d).map(|j| y[j] + 0.5 * h * k1[j]).collect();
        let k2 = f(&y2);
        let y3: Vec<f64> = (0..d).map(|j| y[j] + 0.5 * h * k2[j]).collect();
        let k3 = f(&y3);
        let y4: Vec<f64> = (0..d).map(|j| y[j] + h * k3[j]).collect();
        let k4 = f(&y4);
        for j in 0..d {
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
    GroupPoint::new(tag, &y).unwrap()
}

pub fn group_suite() -> SuiteReport {
    let start = Instant::now();
    let mut rec = Recorder::default();
    let n = GROUP_TRIALS;
    for (stream, tag) in TAGS.iter().copied().enumerate() {
        let g = tag.name();
        let d = tag.dim();
        let mut r = rng(100 + stream as u64);

        let mut exact = true;
        for i in 1..=d {
            for j in 1..=d {
                let a = AlgebraVector::basis(tag, i).unwrap();
                let b = AlgebraVector::basis(tag, j).unwrap();
                exact &= bracket(&a, &b).unwrap().coeffs() == table_bracket(tag, i, j).as_slice();
            }
        }
        rec.check(&format!("{g}/structure-constants"), exact, format!("all {} basis pairs", d * d));

        let mut worst = 0.0f64;
        for _ in 0..n {
            let a = random_algebra(&mut r, tag, 2.0);
            let b = random_algebra(&mut r, tag, 2.0);
            let (ma, mb) = (a.to_matrix(), b.to_matrix());
            let m = tag.matrix_size();
            let ba = matmul(&mb, &ma, m);
            let ab = matmul(&ma, &mb, m);
            let comm: Vec<f64> = ba.iter().zip(&ab).map(|(x, y)| x - y).collect();
            worst = worst.max(max_abs_diff(&bracket(&a, &b).unwrap().to_matrix(), &comm));
        }
        rec.check(
            &format!("{g}/bracket-vs-commutator"),
            worst <= 1e-12,
            format!("max err {worst:.2e} over {n}"),
        );

        let mut worst = 0.0f64;
        let mut nil = 0.0f64;
        for _ in 0..n {
            let a = random_algebra(&mut r, tag, 2.0);
            let b = random_algebra(&mut r, tag, 2.0);
            let c = random_algebra(&mut r, tag, 2.0);
            let br = |x: &AlgebraVector, y: &AlgebraVector| bracket(x, y).unwrap();
            let j = br(&a, &br(&b, &c)).add(&br(&b, &br(&c, &a))).unwrap().add(&br(&c, &br(&a, &b))).unwrap();
            worst = worst.max(j.coeffs().iter().fold(0.0, |m, v| m.max(v.abs())));
            let e = random_algebra(&mut r, tag, 2.0);
            let deep = br(&e, &br(&c, &br(&a, &b)));
            nil = nil.max(deep.coeffs().iter().fold(0.0, |m, v| m.max(v.abs())));
        }
        rec.check(&format!("{g}/jacobi"), worst <= 1e-12, format!("max {worst:.2e} over {n}"));
        rec.check(&format!("{g}/nilpotency"), nil == 0.0, format!("max four-fold bracket {nil:.2e}"));

        let mut worst = 0.0f64;
        for _ in 0..n {
            let (a, b, c) = (
                random_point(&mut r, tag, 2.0),
                random_point(&mut r, tag, 2.0),
                random_point(&mut r, tag, 2.0),
            );
            let l = multiply(&multiply(&a, &b).unwrap(), &c).unwrap();
            let rr = multiply(&a, &multiply(&b, &c).unwrap()).unwrap();
            worst = worst.max(max_abs_diff(l.coords(), rr.coords()));
        }
        rec.check(&format!("{g}/associativity"), worst <= 1e-12, format!("max err {worst:.2e} over {n}"));

        let mut worst = 0.0f64;
        for _ in 0..n {
            let a = random_point(&mut r, tag, 2.0);
            let ai = inverse(&a);
            let e1 = multiply(&a, &ai).unwrap();
            let e2 = multiply(&ai, &a).unwrap();
            worst = worst.max(max_abs_diff(e1.coords(), &vec![0.0; d]));
            worst = worst.max(max_abs_diff(e2.coords(), &vec![0.0; d]));
        }
        rec.check(&format!("{g}/inverse"), worst <= 1e-12, format!("max err {worst:.2e} over {n}"));

        let mut worst = 0.0f64;
        let mut round = 0.0f64;
        for _ in 0..n {
            let a = random_point(&mut r, tag, 2.0);
            let b = random_point(&mut r, tag, 2.0);
            let m = tag.matrix_size();
            let prod = matmul(to_matrix(&a).entries(), to_matrix(&b).entries(), m);
            worst = worst.max(max_abs_diff(to_matrix(&multiply(&a, &b).unwrap()).entries(), &prod));
            let back = from_matrix(&to_matrix(&a)).unwrap();
            round = round.max(max_abs_diff(back.coords(), a.coords()));
        }
        rec.check(
            &format!("{g}/matrix-homomorphism"),
            worst <= 1e-12,
            format!("max err {worst:.2e} over {n}"),
        );
        rec.check(&format!("{g}/matrix-roundtrip"), round <= 1e-12, format!("max err {round:.2e} over {n}"));

        let mut worst = 0.0f64;
        for _ in 0..n {
            let a = random_point(&mut r, tag, 2.0);
            worst = worst.max(max_abs_diff(exp_coords(&log_coords(&a)).coords(), a.coords()));
        }
        rec.check(&format!("{g}/exp-log"), worst <= 1e-12, format!("max err {worst:.2e} over {n}"));

        let mut worst = 0.0f64;
        for k in 0..n {
            let x = random_point(&mut r, tag, 1.5);
            let i = 1 + k % d;
            let s = r.random_range(-1.0..1.0);
            let flow = frame_flow(i, &x, s, 32);
            let step = AlgebraVector::basis(tag, i).unwrap().scale(s);
            let want = multiply(&x, &exp_coords(&step)).unwrap();
            worst = worst.max(max_abs_diff(flow.coords(), want.coords()));
        }
        rec.check(&format!("{g}/frame-flow"), worst <= 1e-8, format!("max err {worst:.2e} over {n}"));
    }
    rec.finish("group", start)
}

// ---------------------------------------------------------------- representations

fn random_dual(r: &mut ChaCha8Rng, tag: GroupTag) -> DualPoint {
    loop {
        let l: f64 = r.random_range(-1.0..1.0);
        let m = r.random_range(-1.0..1.0);
        let n = r.random_range(-1.0..1.0);
        let ok = match tag {
            GroupTag::Engel => l.abs() > 0.3,
            GroupTag::Cartan => l * l + m * m > 0.3,
        };
        if ok {
            return DualPoint::new(tag, l, m, n).unwrap();
        }
    }
}

fn gaussian(l: f64, n: usize, center: f64, width: f64) -> WaveFunction {
    WaveFunction::from_fn(l, n, |th| {
        let z = (th - center) / width;
        Complex64::new((-0.5 * z * z).exp(), 0.0)
    })
    .unwrap()
}

fn combine(
    a: &WaveFunction,
    b: &WaveFunction,
    f: impl Fn(Complex64, Complex64) -> Complex64,
) -> WaveFunction {
    WaveFunction::new(a.half_width(), a.values().iter().zip(b.values()).map(|(x, y)| f(*x, *y)).collect())
        .unwrap()
}

fn l2(values: &[Complex64], h: f64) -> f64 {
    (h * values.iter().map(|v| v.norm_sqr()).sum::<f64>()).sqrt()
}

/// `||gft_laplacian psi - (dX1^2 + dX2^2) psi||`, restricted to every
/// `stride`-th node.
fn operator_gap(d: &DualPoint, psi: &WaveFunction) -> Result<Vec<Complex64>> {
    let lap = gft_laplacian(d, psi)?;
    let s1 = drep(1, d, &drep(1, d, psi)?)?;
    let s2 = drep(2, d, &drep(2, d, psi)?)?;
    Ok((0..psi.len()).map(|j| lap.values()[j] - s1.values()[j] - s2.values()[j]).collect())
}

/// Method-of-lines RK4 for `u' = A u` over time `t`.
fn rk4_evolve(
    psi: &WaveFunction,
    t: f64,
    steps: usize,
    op: impl Fn(&WaveFunction) -> Result<WaveFunction>,
) -> Result<WaveFunction> {
    let dt = t / steps as f64;
    let mut u = psi.clone();
    let axpy = |u: &WaveFunction, k: &WaveFunction, a: f64| combine(u, k, |x, y| x + y * a);
    for _ in 0..steps {
        let k1 = op(&u)?;
        let k2 = op(&axpy(&u, &k1, 0.5 * dt))?;
        let k3 = op(&axpy(&u, &k2, 0.5 * dt))?;
        let k4 = op(&axpy(&u, &k3, dt))?;
        let vals = (0..u.len())
            .map(|j| {
                u.values()[j]
                    + (k1.values()[j] + k2.values()[j] * 2.0 + k3.values()[j] * 2.0 + k4.values()[j])
                        * (dt / 6.0)
            })
            .collect();
        u = WaveFunction::new(u.half_width(), vals)?;
    }
    Ok(u)
}

/// `d^2/dtheta^2 - (alpha theta^2 + beta)^2`, scaled by the time factor.
fn quartic_operator(p: &QuarticParams, psi: &WaveFunction) -> Result<WaveFunction> {
    let d2 = second_derivative(psi.values(), psi.spacing())?;
    let vals = (0..psi.len())
        .map(|j| (d2[j] - psi.values()[j] * p.potential(psi.theta(j))) * p.time_scale)
        .collect();
    WaveFunction::new(psi.half_width(), vals)
}

pub fn rep_suite() -> SuiteReport {
    let start = Instant::now();
    let mut rec = Recorder::default();
    let (l, n) = (12.0, 2048);
    for (stream, tag) in TAGS.iter().copied().enumerate() {
        let g = tag.name();
        let mut r = rng(200 + stream as u64);

        rec.attempt(&format!("{g}/unitarity"), || {
            let mut worst = 0.0f64;
            for _ in 0..100 {
                let d = random_dual(&mut r, tag);
                let x = random_point(&mut r, tag, 0.5);
                let psi = gaussian(l, n, r.random_range(-1.0..1.0), 1.0);
                let out = rep_apply_with(&d, &x, &psi, Interpolation::Trigonometric)?;
                worst = worst.max((out.norm() / psi.norm() - 1.0).abs());
            }
            Ok((worst <= 1e-10, format!("max relative norm change {worst:.2e} over 100")))
        });

        rec.attempt(&format!("{g}/homomorphism"), || {
            let mut worst = 0.0f64;
            for _ in 0..100 {
                let d = random_dual(&mut r, tag);
                let a = random_point(&mut r, tag, 0.5);
                let b = random_point(&mut r, tag, 0.5);
                let psi = gaussian(l, n, 0.0, 1.0);
                let ab = rep_apply_with(&d, &multiply(&a, &b)?, &psi, Interpolation::Trigonometric)?;
                let inner = rep_apply_with(&d, &b, &psi, Interpolation::Trigonometric)?;
                let seq = rep_apply_with(&d, &a, &inner, Interpolation::Trigonometric)?;
                worst = worst.max(ab.sup_distance(&seq));
            }
            Ok((worst <= 1e-8, format!("max sup-norm gap {worst:.2e} over 100")))
        });

        for i in 1..=2 {
            rec.attempt(&format!("{g}/infinitesimal-order-X{i}"), || {
                let d = random_dual(&mut r, tag);
                let psi = gaussian(l, n, 0.3, 1.0);
                let want = drep(i, &d, &psi)?;
                let hs = [0.02, 0.01, 0.005, 0.0025];
                let mut errs = Vec::new();
                for &h in &hs {
                    let step = exp_coords(&AlgebraVector::basis(tag, i)?.scale(h));
                    let moved = rep_apply_with(&d, &step, &psi, Interpolation::Trigonometric)?;
                    let fd = combine(&moved, &psi, |a, b| (a - b) / h);
                    let diff = combine(&fd, &want, |a, b| a - b);
                    errs.push(diff.norm() / psi.norm());
                }
                let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
                let min = orders.iter().copied().fold(f64::INFINITY, f64::min);
                Ok((min >= 1.0 - 1e-3, format!("errors {}, orders {:.3?}", sci(&errs), orders)))
            });
        }

        rec.attempt(&format!("{g}/operator-consistency"), || {
            // the gap is pure discretization error; compare it with the
            // grid error estimated from the change under halving the spacing
            let mut worst = 0.0f64;
            for _ in 0..20 {
                let d = random_dual(&mut r, tag);
                let c = r.random_range(-0.5..0.5);
                let coarse = gaussian(8.0, 801, c, 0.8);
                let fine = gaussian(8.0, 1601, c, 0.8);
                let gap = operator_gap(&d, &coarse)?;
                let sq = |p: &WaveFunction| -> Result<Vec<Complex64>> {
                    let s1 = drep(1, &d, &drep(1, &d, p)?)?;
                    let s2 = drep(2, &d, &drep(2, &d, p)?)?;
                    Ok((0..p.len()).map(|j| s1.values()[j] + s2.values()[j]).collect())
                };
                let (a, b) = (sq(&coarse)?, sq(&fine)?);
                let grid_err: Vec<Complex64> = (0..coarse.len()).map(|j| a[j] - b[2 * j]).collect();
                let h = coarse.spacing();
                let bound = l2(&grid_err, h);
                let ratio = l2(&gap, h) / (10.0 * bound).max(1e-300);
                worst = worst.max(ratio);
            }
            Ok((worst <= 1.0, format!("max gap / (10 x grid error) = {worst:.3} over 20")))
        });

        rec.attempt(&format!("{g}/parameter-map"), || {
            let mut worst = 0.0f64;
            for _ in 0..5 {
                let d = random_dual(&mut r, tag);
                let q = dual_to_quartic(&d)?;
                let psi = gaussian(6.0, 241, 0.2, 0.7);
                let t = 0.01;
                let steps = 400;
                let a = rk4_evolve(&psi, t, steps, |u| gft_laplacian(&d, u))?;
                let b = rk4_evolve(&psi, t, steps, |u| quartic_operator(&q, u))?;
                worst =
                    worst.max(a.sup_distance(&b) / a.values().iter().map(|v| v.norm()).fold(0.0, f64::max));
            }
            Ok((worst <= 1e-6, format!("max relative gap {worst:.2e} over 5")))
        });
    }
    rec.finish("rep", start)
}

// ---------------------------------------------------------------- propagator

/// Grid-node values `Psi_tau(theta_i, theta_j)` for the given node indices.
fn psi_nodes(dec: &SpectralDecomposition, tau: f64, i: usize, j: usize) -> f64 {
    dec.energies.iter().zip(&dec.modes).map(|(e, m)| (-e * tau).exp() * m[i] * m[j]).sum()
}

/// Ground energy of the pure quartic `-d^2 + theta^4` on `[-8, 8]`,
/// Richardson-extrapolated from `n` in {1024, 2048, 4096}.
pub fn pure_quartic_oracle() -> Result<f64> {
    let p = QuarticParams::new(1.0, 0.0)?;
    let mut e = Vec::new();
    for n in [1024, 2048, 4096] {
        let g = ThetaGrid::new(8.0, n)?;
        e.push(spectrum(&assemble_hamiltonian(&p, &g), 1)?.energies[0]);
    }
    // spacing ratio is (n - 1) based; close enough to 2 that the two-level
    // extrapolation uses the exact ratios
    let h: Vec<f64> = [1024.0, 2048.0, 4096.0].iter().map(|n| 16.0 / (n - 1.0)).collect();
    let r1 = |a: f64, b: f64, ha: f64, hb: f64, p: i32| {
        let q = (ha / hb).powi(p);
        (q * b - a) / (q - 1.0)
    };
    let e12 = r1(e[0], e[1], h[0], h[1], 2);
    let e23 = r1(e[1], e[2], h[1], h[2], 2);
    Ok(r1(e12, e23, h[0], h[1], 4))
}

pub fn propagator_suite() -> SuiteReport {
    let start = Instant::now();
    let mut rec = Recorder::default();

    rec.attempt("constant-potential", || {
        let b = 0.7;
        let p = QuarticParams::new(0.0, b)?;
        let g = ThetaGrid::new(8.0, 24001)?;
        let h = assemble_hamiltonian(&p, &g);
        let dec = spectrum_for_time(&h, 0.05)?;
        let mut worst = 0.0f64;
        for tau in [0.05, 0.25, 1.0] {
            for &tb in &[-3.0, 0.0, 1.5, 4.0] {
                let j = ((tb + 8.0) / g.spacing()).round() as usize;
                let tb = g.node(j);
                let exact = |th: f64| {
                    (-b * b * tau).exp() / (4.0 * PI * tau).sqrt() * (-(th - tb).powi(2) / (4.0 * tau)).exp()
                };
                let peak = exact(tb);
                for i in (0..g.len()).step_by(7) {
                    let th = g.node(i);
                    if th.abs() > 4.0 + 1e-9 {
                        continue;
                    }
                    let v = psi_nodes(&dec, tau, i, j);
                    worst = worst.max((v - exact(th)).abs() / peak);
                }
            }
        }
        Ok((
            worst <= 1e-6,
            format!("max error {worst:.2e} relative to the peak, tau in [0.05, 1], |theta| <= L/2"),
        ))
    });

    rec.attempt("pure-quartic-ground", || {
        let oracle = pure_quartic_oracle()?;
        let e0 = ground_energy(&QuarticParams::new(1.0, 0.0)?);
        let ok = (oracle - 1.0604).abs() <= 1e-3 && (e0 - oracle).abs() <= 1e-3;
        Ok((ok, format!("oracle {oracle:.7}, default grid {e0:.7}")))
    });

    rec.attempt("double-well-splitting", || {
        let p = QuarticParams::new(1.0, -4.0)?;
        let g = ThetaGrid::default_for(&p);
        let fine = ThetaGrid::new(g.half_width(), 2 * g.len() - 1)?;
        let a = spectrum(&assemble_hamiltonian(&p, &g), 2)?;
        let b = spectrum(&assemble_hamiltonian(&p, &fine), 2)?;
        let (s, sf) = (a.energies[1] - a.energies[0], b.energies[1] - b.energies[0]);
        let ok = s < 0.05 * a.energies[0] && (s - sf).abs() <= 0.02 * sf;
        Ok((ok, format!("E1 - E0 = {s:.6e} (fine grid {sf:.6e}), E0 = {:.5}", a.energies[0])))
    });

    rec.attempt("double-well-ground", || {
        let e = ground_energy(&QuarticParams::new(1.0, -4.0)?);
        let approx = 2.0 * 4.0f64.sqrt();
        Ok(((e / approx - 1.0).abs() <= 0.3, format!("E0 = {e:.4} vs harmonic {approx}")))
    });

    rec.attempt("ground-monotone-in-beta", || {
        let es: Vec<f64> = [0.0, 0.5, 1.0, 2.0, 4.0]
            .iter()
            .map(|b| ground_energy(&QuarticParams::new(1.0, *b).unwrap()))
            .collect();
        Ok((es.windows(2).all(|w| w[1] >= w[0]), format!("{es:.4?}")))
    });

    let params = [(1.0, 0.0), (1.0, -2.0), (0.5, 1.0)];
    for &(a, b) in &params {
        let name = |s: &str| format!("{s}(a={a},b={b})");
        let p = QuarticParams::new(a, b).unwrap();
        let g = ThetaGrid::default_for(&p);
        let h = assemble_hamiltonian(&p, &g);
        let dec = match spectrum_for_time(&h, 0.1) {
            Ok(d) => d,
            Err(e) => {
                rec.check(&name("spectrum"), false, format!("error: {e}"));
                continue;
            }
        };
        let hs = g.spacing();
        let k = dec.energies.len();

        let mut orth = 0.0f64;
        let mut resid = 0.0f64;
        let norm_h = 4.0 / (hs * hs) + p.potential(g.half_width());
        for i in 0..k {
            for j in 0..=i {
                let dot: f64 = hs * dec.modes[i].iter().zip(&dec.modes[j]).map(|(x, y)| x * y).sum::<f64>();
                orth = orth.max((dot - if i == j { 1.0 } else { 0.0 }).abs());
            }
            let m = &dec.modes[i];
            let kk = 1.0 / (hs * hs);
            let mut r2 = 0.0;
            for jj in 0..m.len() {
                let left = if jj > 0 { m[jj - 1] } else { 0.0 };
                let right = if jj + 1 < m.len() { m[jj + 1] } else { 0.0 };
                let hv = (2.0 * kk + p.potential(g.node(jj))) * m[jj] - kk * (left + right);
                r2 += hs * (hv - dec.energies[i] * m[jj]).powi(2);
            }
            resid = resid.max(r2.sqrt() / norm_h);
        }
        let sorted = dec.energies.windows(2).all(|w| w[0] <= w[1]);
        rec.check(
            &name("eigenpairs"),
            orth <= 1e-10 && resid <= 1e-9 && sorted,
            format!("{k} modes, orthonormality {orth:.1e}, residual/|H| {resid:.1e}, sorted {sorted}"),
        );

        let n = g.len();
        let mut parity = 0.0f64;
        for (i, m) in dec.modes.iter().enumerate() {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            let scale = m.iter().fold(0.0f64, |s, v| s.max(v.abs()));
            for j in 0..n / 2 {
                parity = parity.max((m[j] - sign * m[n - 1 - j]).abs() / scale);
            }
        }
        rec.check(
            &name("mode-parity"),
            parity <= 1e-8,
            format!("max alternating-parity defect {parity:.1e}"),
        );

        let stride = (n / 160).max(1);
        let inner = g.half_width() / 2.0;
        let idx: Vec<usize> = (0..n).step_by(stride).filter(|&i| g.node(i).abs() <= inner).collect();
        let peak_at = |d: &SpectralDecomposition, tau: f64| {
            idx.iter().map(|&i| psi_nodes(d, tau, i, i)).fold(0.0f64, f64::max)
        };
        let kernel_checks = || -> Result<[(f64, f64, f64, f64); 1]> {
            let tau_s = [0.1, 0.3, 0.5];
            let mut semigroup = 0.0f64;
            let (mut pos, mut sym, mut mass) = (0.0f64, 0.0f64, 0.0f64);
            for &s in &tau_s {
                for &t in &[0.1, 0.4] {
                    let full_s = dec.kernel_matrix(s, 1)?;
                    let full_t = dec.kernel_matrix(t, 1)?;
                    let peak = peak_at(&dec, s + t);
                    for &i in idx.iter().step_by(8) {
                        for &j in idx.iter().step_by(8) {
                            let conv: f64 = (0..n).map(|m| hs * full_s[i * n + m] * full_t[m * n + j]).sum();
                            let direct = psi_nodes(&dec, s + t, i, j);
                            semigroup = semigroup.max((conv - direct).abs() / peak);
                        }
                    }
                }
                let km = dec.kernel_matrix(s, 1)?;
                let top = km.iter().fold(0.0f64, |m, v| m.max(*v));
                for &i in &idx {
                    for &j in &idx {
                        pos = pos.max(-km[i * n + j] / top);
                        sym = sym.max((km[i * n + j] - km[(n - 1 - i) * n + (n - 1 - j)]).abs() / top);
                    }
                    let col: f64 = (0..n).map(|m| hs * km[m * n + i]).sum();
                    mass = mass.max(col);
                }
            }
            Ok([(semigroup, pos, sym, mass)])
        };
        match kernel_checks() {
            Ok([(semigroup, pos, sym, mass)]) => {
                rec.check(
                    &name("semigroup"),
                    semigroup <= 1e-4,
                    format!("max defect {semigroup:.1e} relative to the kernel maximum, |theta| <= L/2"),
                );
                rec.check(&name("positivity"), pos <= 1e-8, format!("min Psi / max Psi = {:.1e}", -pos));
                rec.check(&name("parity"), sym <= 1e-10, format!("max defect {sym:.1e}"));
                rec.check(&name("mass-bound"), mass <= 1.0 + 1e-6, format!("max column mass {mass:.8}"));
            }
            Err(e) => rec.check(&name("kernel-matrix"), false, format!("error: {e}")),
        }

        rec.attempt(&name("sign-pair"), || {
            let q = QuarticParams::new(-a, -b)?;
            let other = spectrum(&assemble_hamiltonian(&q, &g), k)?;
            let de = max_abs_diff(&dec.energies, &other.energies);
            let dm = dec
                .modes
                .iter()
                .zip(&other.modes)
                .map(|(x, y)| {
                    let s = if x.iter().zip(y).map(|(u, v)| u * v).sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
                    x.iter().zip(y).map(|(u, v)| (u - s * v).abs()).fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            Ok((
                de <= 1e-12 * dec.energies[k - 1].abs().max(1.0) && dm <= 1e-12,
                format!("energies {de:.1e}, modes {dm:.1e}"),
            ))
        });

        rec.attempt(&name("scaling-law"), || {
            let mut worst = 0.0f64;
            for c in [0.5f64, 2.0] {
                let q = QuarticParams::new(a / c.powi(3), b / c)?;
                let gs = g.scaled(c)?;
                let other = spectrum(&assemble_hamiltonian(&q, &gs), k)?;
                for tau in [0.1, 0.3] {
                    let peak = peak_at(&dec, tau);
                    for &i in idx.iter().step_by(10) {
                        for &j in idx.iter().step_by(10) {
                            let v = psi_nodes(&dec, tau, i, j);
                            let w = c * psi_nodes(&other, c * c * tau, i, j);
                            worst = worst.max((v - w).abs() / peak);
                        }
                    }
                }
            }
            Ok((
                worst <= 1e-5,
                format!("max defect {worst:.1e} relative to the kernel maximum, c in {{0.5, 2}}"),
            ))
        });

        rec.attempt(&name("grid-convergence"), || {
            // off-node values through interpolation; the doubled grid shares the walls
            let fine = ThetaGrid::new(g.half_width(), 2 * n - 1)?;
            let df = spectrum_for_time(&assemble_hamiltonian(&p, &fine), 0.1)?;
            let tol = 1e-4;
            let mut worst = 0.0f64;
            for tau in [0.1, 0.5] {
                for &(x, y) in &[(0.0, 0.0), (0.3, -0.2), (1.0, 0.5), (-0.7, -0.7)] {
                    let v = psi_eval(&dec, tau, x, y)?.value;
                    let w = psi_eval(&df, tau, x, y)?.value;
                    let peak = psi_eval(&df, tau, y, y)?.value;
                    worst = worst.max((v - w).abs() / peak);
                }
            }
            Ok((worst <= 4.0 * tol, format!("max relative change {worst:.1e}, claimed tolerance {tol:.0e}")))
        });
    }

    rec.attempt("truncation-flag", || {
        let p = QuarticParams::new(1.0, 0.0)?;
        let g = ThetaGrid::new(6.0, 400)?;
        let dec = spectrum(&assemble_hamiltonian(&p, &g), 5)?;
        let short = psi_eval(&dec, 0.001, 0.0, 0.0)?;
        let long = psi_eval(&dec, 20.0, 0.0, 0.0)?;
        Ok((
            short.truncated && !long.truncated,
            format!("tau=0.001 flagged {}, tau=20 flagged {}", short.truncated, long.truncated),
        ))
    });

    rec.finish("propagator", start)
}

const KERNEL_T: f64 = 0.25;

const ENGEL_PROBES: [[f64; 4]; 5] = [
    [0.3, 0.2, 0.1, 0.05],
    [-0.4, 0.1, 0.2, -0.05],
    [0.2, -0.5, 0.1, 0.1],
    [0.5, 0.3, -0.15, 0.0],
    [0.1, 0.1, 0.3, 0.1],
];

/// The two sign automorphisms of the Engel group in coordinates.
fn engel_flip(x: &[f64], which: usize) -> [f64; 4] {
    match which {
        0 => [-x[0], x[1], -x[2], x[3]],
        _ => [x[0], -x[1], -x[2], -x[3]],
    }
}

/// Rotation of the Cartan generators by a quarter turn, acting on the group
/// through the exponential coordinates.
fn cartan_rotate(x: &GroupPoint) -> Result<GroupPoint> {
    let a = log_coords(x);
    let c = a.coeffs();
    let r = AlgebraVector::new(GroupTag::Cartan, &[-c[1], c[0], c[2], -c[4], c[3]])?;
    Ok(exp_coords(&r))
}

fn agree(a: &KernelResult, b: &KernelResult) -> (bool, f64, f64) {
    let gap = (a.value - b.value).abs();
    let tol = a.tail_estimate + b.tail_estimate;
    (gap <= tol, gap, tol)
}

fn refinement_check(rec: &mut Recorder, name: &str, tag: GroupTag, x: &[f64]) {
    rec.attempt(name, || {
        let p = GroupPoint::new(tag, x)?;
        let cfg = QuadratureConfig::default();
        let base = kernel::heat_kernel_batch(std::slice::from_ref(&p), KERNEL_T, &cfg)?.remove(0);
        let fine = QuadratureConfig { error_estimate: false, ..cfg.refined() };
        let r = kernel::heat_kernel_batch(std::slice::from_ref(&p), KERNEL_T, &fine)?.remove(0);
        let change = (r.value - base.value).abs();
        Ok((
            change <= base.tail_estimate,
            format!(
                "p {:.6} -> {:.6} with every node count doubled, change {change:.2e}, tail {:.2e}",
                base.value, r.value, base.tail_estimate
            ),
        ))
    });
}

pub fn kernel_g4_suite() -> SuiteReport {
    let start = Instant::now();
    let mut rec = Recorder::default();
    let tag = GroupTag::Engel;
    let cfg = QuadratureConfig::default();

    let batch = || -> Result<Vec<KernelResult>> {
        let mut points = vec![GroupPoint::identity(tag)];
        for x in &ENGEL_PROBES {
            let p = GroupPoint::new(tag, x)?;
            points.push(inverse(&p));
            points.push(GroupPoint::new(tag, &engel_flip(x, 0))?);
            points.push(GroupPoint::new(tag, &engel_flip(x, 1))?);
            points.push(p);
        }
        kernel::heat_kernel_batch(&points, KERNEL_T, &cfg)
    };
    match batch() {
        Err(e) => rec.check("probe-batch", false, format!("error: {e}")),
        Ok(rs) => {
            let e = &rs[0];
            rec.check("identity-positive", e.value > 0.0, format!("p(e) = {:.8}", e.value));
            let rel = e.imag_residual / e.value.abs();
            rec.check("imaginary-residual", rel <= 1e-3, format!("|Im| / p(e) = {rel:.2e}"));
            for (label, k) in [("inverse-symmetry", 0), ("flip-x1-symmetry", 1), ("flip-x2-symmetry", 2)] {
                let mut ok = true;
                let mut worst = 0.0f64;
                for i in 0..ENGEL_PROBES.len() {
                    let base = &rs[1 + 4 * i + 3];
                    let (good, gap, tol) = agree(base, &rs[1 + 4 * i + k]);
                    ok &= good;
                    worst = worst.max(gap / tol);
                }
                rec.check(label, ok, format!("5 probes, worst gap {:.2} of the combined tail", worst));
            }
            let flagged = rs.iter().filter(|r| r.tail_exceeded).count();
            rec.check(
                "identity-tail",
                !e.tail_exceeded,
                format!(
                    "tail / p(e) = {:.2e}; {flagged} of {} probe results carry the tail warning",
                    e.tail_estimate / e.value,
                    rs.len()
                ),
            );
        }
    }

    let fast = QuadratureConfig { error_estimate: false, ..cfg };
    rec.attempt("marginal-law", || {
        let grid = [(0.0, 0.0), (0.5, 0.0), (0.0, 0.5), (0.5, 0.5), (-0.5, 0.25), (0.25, -0.5)];
        let mut worst = 0.0f64;
        for (x1, x2) in grid {
            let r = kernel::marginal_x1x2_g4(x1, x2, MARGINAL_BOX[0], MARGINAL_BOX[1], KERNEL_T, &fast)?;
            let exact = (-(x1 * x1 + x2 * x2) / (4.0 * KERNEL_T)).exp() / (4.0 * PI * KERNEL_T);
            worst = worst.max((r.value / exact - 1.0).abs());
        }
        Ok((
            worst <= 0.05,
            format!(
                "6 points with |x1|, |x2| <= 0.5, |x3| <= {}, |x4| <= {}: max relative error {worst:.2e}",
                MARGINAL_BOX[0], MARGINAL_BOX[1]
            ),
        ))
    });

    rec.attempt("box-mass", || {
        let coarse = QuadratureConfig { error_estimate: false, ..cfg.coarsened() };
        let r = kernel::box_mass_g4(MASS_BOX, KERNEL_T, &coarse)?;
        Ok(((0.96..=1.02).contains(&r.value), format!("mass {:.5} over half-widths {:?}", r.value, MASS_BOX)))
    });

    refinement_check(&mut rec, "refinement-identity", tag, &[0.0; 4]);
    refinement_check(&mut rec, "refinement-probe", tag, &ENGEL_PROBES[0]);

    rec.finish("kernel-g4", start)
}

const MARGINAL_BOX: [f64; 2] = [0.6, 0.25];
const MASS_BOX: [f64; 4] = [2.1, 2.1, 1.1, 0.55];

pub fn kernel_g5_suite() -> SuiteReport {
    let start = Instant::now();
    let mut rec = Recorder::default();
    let tag = GroupTag::Cartan;
    let cfg = QuadratureConfig::default();

    rec.attempt("identity", || {
        let e = kernel::heat_kernel_batch(&[GroupPoint::identity(tag)], KERNEL_T, &cfg)?.remove(0);
        let rel = e.imag_residual / e.value.abs();
        Ok((e.value > 0.0 && rel <= 1e-2, format!("p(e) = {:.6}, |Im| / p(e) = {rel:.2e}", e.value)))
    });

    rec.attempt("rotation-symmetry", || {
        let x = GroupPoint::new(tag, &[0.3, 0.1, 0.05, 0.02, -0.03])?;
        let y = cartan_rotate(&x)?;
        let rs = kernel::heat_kernel_batch(&[x, y], KERNEL_T, &cfg)?;
        let (ok, gap, tol) = agree(&rs[0], &rs[1]);
        Ok((
            ok,
            format!(
                "p {:.6} vs {:.6} at the rotated point {}, gap {gap:.2e}, combined tail {tol:.2e}",
                rs[0].value,
                rs[1].value,
                sci(y.coords())
            ),
        ))
    });

    refinement_check(&mut rec, "refinement-identity", tag, &[0.0; 5]);
    refinement_check(&mut rec, "refinement-probe", tag, &[0.0, 0.0, 0.2, 0.0, 0.0]);

    rec.finish("kernel-g5", start)
}

const MC_T: f64 = 0.25;
const MC_PATHS: usize = 1_000_000;
const MC_STEPS: usize = 400;

fn within(a: f64, b: f64, se: f64, k: f64) -> bool {
    (a - b).abs() <= k * se
}

/// Means and variances of two sample sets agree coordinate by coordinate
/// within `k` combined standard errors; returns the worst ratio.
fn moments_agree(a: &diffusion::SampleSet, b: &diffusion::SampleSet) -> f64 {
    let (ma, mb) = (diffusion::moments(a), diffusion::moments(b));
    let mut worst = 0.0f64;
    for (x, y) in ma.iter().zip(&mb) {
        worst = worst.max((x.mean - y.mean).abs() / x.mean_se.hypot(y.mean_se));
        worst = worst.max((x.var - y.var).abs() / x.var_se.hypot(y.var_se));
    }
    worst
}

fn synthetic_normal(n: usize, stream: u64) -> Result<diffusion::SampleSet> {
    let mut r = rng(stream);
    let coords: Vec<f64> = (0..4 * n).map(|_| r.sample(rand_distr::StandardNormal)).collect();
    diffusion::SampleSet::from_coords(SimConfig::new(GroupTag::Engel, 0.5, n, 100, 0), coords)
}

/// Probes for the density cross-check, identity first.
pub const CROSS_PROBES_G4: [[f64; 4]; 3] = [[0.0; 4], [0.0, 0.0, 0.2, 0.0], [0.5, 0.0, 0.0, 0.0]];
pub const CROSS_PROBES_G5: [[f64; 5]; 3] = [[0.0; 5], [0.0, 0.0, 0.2, 0.0, 0.0], [0.3, 0.0, 0.0, 0.0, 0.0]];
/// Time steps and `x5` kernel width of the conditional estimator.
pub const BRIDGE_STEPS_G4: usize = 200;
pub const BRIDGE_STEPS_G5: usize = 800;
pub const BRIDGE_X5_WIDTH: f64 = 1e-3;

pub fn mc_suite() -> SuiteReport {
    let start = Instant::now();
    let mut rec = Recorder::default();

    let engel = simulate_or_record(&mut rec, SimConfig::new(GroupTag::Engel, MC_T, MC_PATHS, MC_STEPS, 1));
    let cartan = simulate_or_record(&mut rec, SimConfig::new(GroupTag::Cartan, MC_T, MC_PATHS, MC_STEPS, 2));

    if let Some(s) = &engel {
        let m = diffusion::moments(s);
        let t = MC_T;
        let want = [2.0 * t, 2.0 * t, 2.0 * t * t, 2.0 * t * t * t];
        let mut ok = true;
        let mut parts = Vec::new();
        for (j, (mj, w)) in m.iter().zip(want).enumerate() {
            ok &= within(mj.var, w, mj.var_se, 3.0);
            parts.push(format!("var x{} {:.5} (want {w:.5}, se {:.1e})", j + 1, mj.var, mj.var_se));
        }
        rec.check("engel-variances", ok, parts.join(", "));
    }
    if let Some(s) = &cartan {
        let m = diffusion::moments(s);
        let ok = m[..2].iter().all(|mj| within(mj.var, 2.0 * MC_T, mj.var_se, 3.0));
        rec.check(
            "cartan-variances",
            ok,
            format!("var x1 {:.5}, var x2 {:.5} (want {:.5})", m[0].var, m[1].var, 2.0 * MC_T),
        );
    }

    for tag in TAGS {
        let n = 200_000;
        let seed = 10 * tag.dim() as u64;
        rec.attempt(&format!("scheme-agreement-{}", tag.name()), || {
            // common random numbers: both schemes see the same increments
            let a = diffusion::simulate(&SimConfig::new(tag, MC_T, n, MC_STEPS, seed + 1))?;
            let b = diffusion::simulate(
                &SimConfig::new(tag, MC_T, n, MC_STEPS, seed + 1).with_scheme(Scheme::Heun),
            )?;
            let w = moments_agree(&a, &b);
            Ok((w <= 3.0, format!("{n} shared paths, worst gap {w:.2} combined stderr")))
        });
        rec.attempt(&format!("step-halving-{}", tag.name()), || {
            let a = diffusion::simulate(&SimConfig::new(tag, MC_T, n, MC_STEPS / 2, seed + 3))?;
            let b = diffusion::simulate(&SimConfig::new(tag, MC_T, n, MC_STEPS, seed + 4))?;
            let w = moments_agree(&a, &b);
            Ok((
                w <= 3.0,
                format!("{} vs {} steps, worst gap {w:.2} combined stderr", MC_STEPS / 2, MC_STEPS),
            ))
        });
        rec.attempt(&format!("planar-marginal-{}", tag.name()), || {
            let s = diffusion::simulate(&SimConfig::new(tag, MC_T, 100_000, MC_STEPS, seed + 5))?;
            let r = diffusion::marginal_check(&s);
            let ok = r.ks_x1.p_value > 0.01
                && r.ks_x2.p_value > 0.01
                && r.correlation.abs() <= 3.0 * r.correlation_se;
            Ok((
                ok,
                format!(
                    "KS p-values {:.3} / {:.3}, correlation {:.1e} (se {:.1e})",
                    r.ks_x1.p_value, r.ks_x2.p_value, r.correlation, r.correlation_se
                ),
            ))
        });
    }

    rec.attempt("seed-determinism", || {
        let cfg = SimConfig::new(GroupTag::Cartan, MC_T, 2000, 100, 21);
        let a = diffusion::simulate(&cfg)?;
        let b = diffusion::simulate(&cfg)?;
        let c = diffusion::simulate(&SimConfig { seed: 22, ..cfg })?;
        let same = (0..a.len())
            .all(|i| a.coords(i).iter().zip(b.coords(i)).all(|(x, y)| x.to_bits() == y.to_bits()));
        let differs = (0..a.len()).any(|i| a.coords(i) != c.coords(i));
        Ok((same && differs, format!("repeat bit-identical {same}, other seed differs {differs}")))
    });

    rec.attempt("kde-gaussian-oracle", || {
        let reps = 20;
        let mut z = Vec::with_capacity(reps);
        for k in 0..reps {
            let s = synthetic_normal(200_000, 300 + k as u64)?;
            let bw = diffusion::default_bandwidths(&s);
            let e = diffusion::kde_estimate(&s, &GroupPoint::identity(GroupTag::Engel), &bw)?;
            let want: f64 = bw.iter().map(|h| 1.0 / (2.0 * PI * (1.0 + h * h)).sqrt()).product();
            z.push((e.value - want) / e.stderr);
        }
        let mean = z.iter().sum::<f64>() / reps as f64;
        let sd = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
        Ok((
            mean.abs() * (reps as f64).sqrt() <= 3.0 && (0.6..=1.4).contains(&sd),
            format!("{reps} samples of 2e5 normals against the smoothed density: mean z {mean:.3}, sd of z {sd:.3}"),
        ))
    });

    rec.attempt("kde-normalization", || {
        let s = synthetic_normal(1000, 32)?;
        let bw = diffusion::default_bandwidths(&s);
        let m = 21usize;
        let h = 10.0 / (m - 1) as f64;
        let node = |k: usize| -5.0 + k as f64 * h;
        let mut total = 0.0;
        for idx in 0..m.pow(4) {
            let c = [idx % m, idx / m % m, idx / (m * m) % m, idx / (m * m * m)].map(node);
            total += diffusion::kde_estimate(&s, &GroupPoint::new(GroupTag::Engel, &c)?, &bw)?.value;
        }
        total *= h.powi(4);
        Ok(((total - 1.0).abs() <= 0.03, format!("integral {total:.5} over [-5, 5]^4")))
    });

    if let Some(s) = &engel {
        rec.attempt("mirror-symmetry", || {
            let bw = diffusion::default_bandwidths(s);
            let mut worst = 0.0f64;
            for x in [[0.3, 0.1, 0.1, 0.02], [-0.5, 0.4, -0.1, 0.05], [0.6, -0.2, 0.2, -0.05]] {
                let a = diffusion::kde_estimate(s, &GroupPoint::new(GroupTag::Engel, &x)?, &bw)?;
                let y = [-x[0], x[1], -x[2], x[3]];
                let b = diffusion::kde_estimate(s, &GroupPoint::new(GroupTag::Engel, &y)?, &bw)?;
                worst = worst.max((a.value - b.value).abs() / a.stderr.hypot(b.stderr));
            }
            Ok((worst <= 3.0, format!("3 mirrored pairs, worst gap {worst:.2} combined stderr")))
        });
    }

    for tag in TAGS {
        let sample = if tag == GroupTag::Engel { &engel } else { &cartan };
        rec.attempt(&format!("cross-validation-{}", tag.name()), || {
            let probes: Vec<Vec<f64>> = match tag {
                GroupTag::Engel => CROSS_PROBES_G4.iter().map(|p| p.to_vec()).collect(),
                GroupTag::Cartan => CROSS_PROBES_G5.iter().map(|p| p.to_vec()).collect(),
            };
            let points = probes.iter().map(|p| GroupPoint::new(tag, p)).collect::<Result<Vec<_>>>()?;
            let quad = kernel::heat_kernel_batch(&points, MC_T, &QuadratureConfig::default())?;
            let steps = if tag == GroupTag::Engel { BRIDGE_STEPS_G4 } else { BRIDGE_STEPS_G5 };
            let bw = sample.as_ref().map(diffusion::default_bandwidths);
            let mut ok = true;
            let mut parts = Vec::new();
            for (k, (p, q)) in points.iter().zip(&quad).enumerate() {
                let e = diffusion::bridge_density(p, MC_T, MC_PATHS, steps, 40 + k as u64, BRIDGE_X5_WIDTH)?;
                let allowed = (3.0 * e.stderr).max(0.1 * q.value.abs());
                ok &= (q.value - e.value).abs() <= allowed;
                let kde = match (sample, &bw) {
                    (Some(s), Some(bw)) => {
                        let d = diffusion::kde_estimate(s, p, bw)?;
                        format!("{:.4}", d.value)
                    }
                    _ => "n/a".into(),
                };
                parts.push(format!(
                    "{} quad {:.4} mc {:.4}+-{:.4} (plain KDE {kde})",
                    sci(p.coords()),
                    q.value,
                    e.value,
                    e.stderr
                ));
            }
            Ok((ok, parts.join("; ")))
        });
    }

    rec.finish("mc", start)
}

fn simulate_or_record(rec: &mut Recorder, cfg: SimConfig) -> Option<diffusion::SampleSet> {
    match diffusion::simulate(&cfg) {
        Ok(s) => Some(s),
        Err(e) => {
            rec.check(&format!("simulate-{}", cfg.tag.name()), false, format!("error: {e}"));
            None
        }
    }
}
