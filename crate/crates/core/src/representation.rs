//! Unitary irreducible representations on `L^2(R)`, their differentials,
//! the Fourier image of the hypoelliptic Laplacian and the reduction of
//! that image to a quartic oscillator.
//!
//! Engel representations are labelled by `(lambda, mu)` with `lambda != 0`:
//!
//! ```text
//! (X(x) psi)(theta) = exp(i phi_x(theta)) psi(theta + x1)
//! phi_x(theta) = -(mu / 2 lambda) x2 + lambda x4 - lambda x3 theta + (lambda / 2) x2 theta^2
//! ```
//!
//! Cartan representations are labelled by `(lambda, mu, nu)` with
//! `S = lambda^2 + mu^2 != 0`; the argument is shifted by
//! `(lambda x1 + mu x2) / S` and the phase is [`phase_k5`].

use num_complex::Complex64;

use crate::error::{contract, Error, Result};
use crate::group::{GroupPoint, GroupTag};
use crate::interp::{cubic_at_complex, fourier_shift};

/// Point of the generic part of the dual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualPoint {
    tag: GroupTag,
    pub lambda: f64,
    pub mu: f64,
    pub nu: f64,
}

impl DualPoint {
    pub fn new(tag: GroupTag, lambda: f64, mu: f64, nu: f64) -> Result<Self> {
        if !(lambda.is_finite() && mu.is_finite() && nu.is_finite()) {
            return Err(contract("dual point has non-finite entries"));
        }
        match tag {
            GroupTag::Engel if lambda == 0.0 => Err(contract("Engel dual point needs lambda != 0")),
            GroupTag::Cartan if lambda * lambda + mu * mu == 0.0 => {
                Err(contract("Cartan dual point needs lambda^2 + mu^2 != 0"))
            }
            _ => Ok(Self { tag, lambda, mu, nu: if tag == GroupTag::Engel { 0.0 } else { nu } }),
        }
    }

    pub fn engel(lambda: f64, mu: f64) -> Result<Self> {
        Self::new(GroupTag::Engel, lambda, mu, 0.0)
    }

    pub fn cartan(lambda: f64, mu: f64, nu: f64) -> Result<Self> {
        Self::new(GroupTag::Cartan, lambda, mu, nu)
    }

    pub fn tag(&self) -> GroupTag {
        self.tag
    }

    /// `lambda^2 + mu^2`.
    pub fn s(&self) -> f64 {
        self.lambda * self.lambda + self.mu * self.mu
    }
}

/// Samples of a function on the grid `theta_j = -L + j h`, `h = 2L / (n - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    half_width: f64,
    values: Vec<Complex64>,
}

impl WaveFunction {
    pub fn new(half_width: f64, values: Vec<Complex64>) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(contract("wave function needs L > 0"));
        }
        if values.len() < 2 {
            return Err(contract("wave function needs at least 2 samples"));
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(contract("wave function has non-finite samples"));
        }
        Ok(Self { half_width, values })
    }

    pub fn from_fn(half_width: f64, n: usize, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        let h = 2.0 * half_width / (n.max(2) - 1) as f64;
        Self::new(half_width, (0..n).map(|j| f(-half_width + j as f64 * h)).collect())
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.values.len() - 1) as f64
    }

    pub fn theta(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.spacing()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Discrete `L^2` norm with weight `h`.
    pub fn norm(&self) -> f64 {
        (self.spacing() * self.values.iter().map(|v| v.norm_sqr()).sum::<f64>()).sqrt()
    }

    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    fn with_values(&self, values: Vec<Complex64>) -> Self {
        Self { half_width: self.half_width, values }
    }

    /// Range of `theta` outside which every sample is below `1e-12` of the peak.
    fn support(&self) -> Option<(f64, f64)> {
        let peak = self.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if peak == 0.0 {
            return None;
        }
        let cut = 1e-12 * peak;
        let first = self.values.iter().position(|v| v.norm() > cut)?;
        let last = self.values.iter().rposition(|v| v.norm() > cut)?;
        Some((self.theta(first), self.theta(last)))
    }
}

/// Quartic oscillator parameters: potential `(alpha theta^2 + beta)^2`,
/// propagated for `time_scale * t`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QuarticParams {
    pub alpha: f64,
    pub beta: f64,
    pub time_scale: f64,
}

impl QuarticParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        Self::with_time_scale(alpha, beta, 1.0)
    }

    pub fn with_time_scale(alpha: f64, beta: f64, time_scale: f64) -> Result<Self> {
        if !(alpha.is_finite() && beta.is_finite()) {
            return Err(contract("quartic parameters must be finite"));
        }
        if !(time_scale > 0.0 && time_scale.is_finite()) {
            return Err(contract("time scale must be positive and finite"));
        }
        Ok(Self { alpha, beta, time_scale })
    }

    pub fn potential(&self, theta: f64) -> f64 {
        let q = self.alpha * theta * theta + self.beta;
        q * q
    }

    /// Representative of `{(alpha, beta), (-alpha, -beta)}` with `alpha >= 0`
    /// (and `beta >= 0` when `alpha == 0`).
    pub fn sign_normalized(&self) -> Self {
        let flip = self.alpha < 0.0 || (self.alpha == 0.0 && self.beta < 0.0);
        if flip {
            Self { alpha: -self.alpha, beta: -self.beta, time_scale: self.time_scale }
        } else {
            *self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    #[default]
    Cubic,
    Trigonometric,
}

fn check_tags(d: &DualPoint, g: &GroupPoint) -> Result<()> {
    if d.tag != g.tag() {
        return Err(contract(format!(
            "dual point for {} applied to a {} element",
            d.tag.name(),
            g.tag().name()
        )));
    }
    Ok(())
}

/// Coefficients `(c0, c1, c2)` of the phase `c0 + c1 theta + c2 theta^2`
/// and the argument shift of the representation of `x`.
pub fn phase_coefficients(d: &DualPoint, x: &GroupPoint) -> Result<([f64; 3], f64)> {
    check_tags(d, x)?;
    let [x1, x2, x3, x4, x5] = x.raw();
    let (l, m, n) = (d.lambda, d.mu, d.nu);
    Ok(match d.tag {
        GroupTag::Engel => ([-(m / (2.0 * l)) * x2 + l * x4, -l * x3, 0.5 * l * x2], x1),
        GroupTag::Cartan => {
            let s = d.s();
            let c0 = n / (2.0 * s) * (l * x2 - m * x1) + l * x4 + m * x5
                - m / (6.0 * s)
                    * (l * l * x1.powi(3) + 3.0 * l * m * x1 * x1 * x2 + 3.0 * m * m * x1 * x2 * x2
                        - l * m * x2.powi(3));
            let c1 = -0.5 * l * m * x1 * x1 - m * m * x1 * x2 + 0.5 * l * m * x2 * x2 - s * x3;
            let c2 = 0.5 * s * (l * x2 - m * x1);
            ([c0, c1, c2], (l * x1 + m * x2) / s)
        }
    })
}

/// The Cartan phase `K^{lambda,mu,nu}_x(theta)`.
///
/// This is the phase for which `x -> exp(i K_x) psi(. + s_x)` is a
/// homomorphism whose differential is [`drep`]; it satisfies
/// `K_{xy}(theta) = K_x(theta) + K_y(theta + s_x)`.
pub fn phase_k5(d: &DualPoint, x: &GroupPoint, theta: f64) -> Result<f64> {
    if d.tag != GroupTag::Cartan {
        return Err(contract("phase_k5 needs a Cartan dual point"));
    }
    let ([c0, c1, c2], _) = phase_coefficients(d, x)?;
    Ok(c0 + theta * (c1 + theta * c2))
}

pub fn rep_apply(d: &DualPoint, g: &GroupPoint, psi: &WaveFunction) -> Result<WaveFunction> {
    rep_apply_with(d, g, psi, Interpolation::Cubic)
}

pub fn rep_apply_with(
    d: &DualPoint,
    g: &GroupPoint,
    psi: &WaveFunction,
    interp: Interpolation,
) -> Result<WaveFunction> {
    let ([c0, c1, c2], shift) = phase_coefficients(d, g)?;
    let l = psi.half_width;
    if let Some((lo, hi)) = psi.support() {
        if lo - shift < -l || hi - shift > l {
            return Err(Error::OutOfDomain(format!(
                "shift {shift} moves the support [{lo}, {hi}] off the grid [-{l}, {l}]"
            )));
        }
    }
    let h = psi.spacing();
    let shifted = if shift == 0.0 {
        psi.values.clone()
    } else {
        match interp {
            Interpolation::Cubic => (0..psi.len())
                .map(|j| {
                    cubic_at_complex(&psi.values, -l, h, psi.theta(j) + shift)
                        .unwrap_or(Complex64::new(0.0, 0.0))
                })
                .collect(),
            Interpolation::Trigonometric => fourier_shift(&psi.values, h, shift),
        }
    };
    let values = shifted
        .into_iter()
        .enumerate()
        .map(|(j, v)| {
            let th = psi.theta(j);
            v * Complex64::cis(c0 + th * (c1 + th * c2))
        })
        .collect();
    Ok(psi.with_values(values))
}

/// Fourth-order first derivative with one-sided closures.
pub(crate) fn derivative(f: &[Complex64], h: f64) -> Result<Vec<Complex64>> {
    let n = f.len();
    if n < 5 {
        return Err(contract("differentiation needs at least 5 samples"));
    }
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    let s = 1.0 / (12.0 * h);
    for j in 2..n - 2 {
        out[j] = (-f[j + 2] + f[j + 1] * 8.0 - f[j - 1] * 8.0 + f[j - 2]) * s;
    }
    out[0] = (f[0] * -25.0 + f[1] * 48.0 - f[2] * 36.0 + f[3] * 16.0 - f[4] * 3.0) * s;
    out[1] = (f[0] * -3.0 - f[1] * 10.0 + f[2] * 18.0 - f[3] * 6.0 + f[4]) * s;
    let k = n - 1;
    out[k] = -(f[k] * -25.0 + f[k - 1] * 48.0 - f[k - 2] * 36.0 + f[k - 3] * 16.0 - f[k - 4] * 3.0) * s;
    out[k - 1] = -(f[k] * -3.0 - f[k - 1] * 10.0 + f[k - 2] * 18.0 - f[k - 3] * 6.0 + f[k - 4]) * s;
    Ok(out)
}

/// Fourth-order second derivative with one-sided closures.
pub(crate) fn second_derivative(f: &[Complex64], h: f64) -> Result<Vec<Complex64>> {
    let n = f.len();
    if n < 6 {
        return Err(contract("second differences need at least 6 samples"));
    }
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    let s = 1.0 / (12.0 * h * h);
    for j in 2..n - 2 {
        out[j] = (-f[j + 2] + f[j + 1] * 16.0 - f[j] * 30.0 + f[j - 1] * 16.0 - f[j - 2]) * s;
    }
    let left = |g: &dyn Fn(usize) -> Complex64| {
        (
            (g(0) * 45.0 - g(1) * 154.0 + g(2) * 214.0 - g(3) * 156.0 + g(4) * 61.0 - g(5) * 10.0) * s,
            (g(0) * 10.0 - g(1) * 15.0 - g(2) * 4.0 + g(3) * 14.0 - g(4) * 6.0 + g(5)) * s,
        )
    };
    let (a, b) = left(&|i| f[i]);
    out[0] = a;
    out[1] = b;
    let (a, b) = left(&|i| f[n - 1 - i]);
    out[n - 1] = a;
    out[n - 2] = b;
    Ok(out)
}

/// Differential of the representation along `X_i`, `i` in `{1, 2}`.
///
/// Engel: `dX1 = d/dtheta`, `dX2 = i(-mu/(2 lambda) + lambda theta^2 / 2)`.
/// Cartan: `dX1 = -(i/2)(mu nu / S + mu S theta^2) + (lambda / S) d/dtheta`,
/// `dX2 = (i/2)(lambda nu / S + lambda S theta^2) + (mu / S) d/dtheta`.
pub fn drep(i: usize, d: &DualPoint, psi: &WaveFunction) -> Result<WaveFunction> {
    if i != 1 && i != 2 {
        return Err(contract(format!("drep index {i} not in {{1, 2}}")));
    }
    let (l, m, n) = (d.lambda, d.mu, d.nu);
    let (mult, deriv): (Box<dyn Fn(f64) -> f64>, f64) = match (d.tag, i) {
        (GroupTag::Engel, 1) => (Box::new(|_| 0.0), 1.0),
        (GroupTag::Engel, _) => (Box::new(move |th| -m / (2.0 * l) + 0.5 * l * th * th), 0.0),
        (GroupTag::Cartan, 1) => {
            let s = d.s();
            (Box::new(move |th| -0.5 * (m * n / s + m * s * th * th)), l / s)
        }
        (GroupTag::Cartan, _) => {
            let s = d.s();
            (Box::new(move |th| 0.5 * (l * n / s + l * s * th * th)), m / s)
        }
    };
    let dpsi = if deriv != 0.0 { Some(derivative(&psi.values, psi.spacing())?) } else { None };
    let values = (0..psi.len())
        .map(|j| {
            let mut v = psi.values[j] * Complex64::new(0.0, mult(psi.theta(j)));
            if let Some(dp) = &dpsi {
                v += dp[j] * deriv;
            }
            v
        })
        .collect();
    Ok(psi.with_values(values))
}

/// Fourier image of the hypoelliptic Laplacian.
///
/// Engel: `d^2/dtheta^2 - (lambda theta^2 - mu/lambda)^2 / 4`.
/// Cartan: `(1/S) d^2/dtheta^2 - (nu + S^2 theta^2)^2 / (4 S)`.
pub fn gft_laplacian(d: &DualPoint, psi: &WaveFunction) -> Result<WaveFunction> {
    let d2 = second_derivative(&psi.values, psi.spacing())?;
    let (l, m, n) = (d.lambda, d.mu, d.nu);
    let values = (0..psi.len())
        .map(|j| {
            let th = psi.theta(j);
            match d.tag {
                GroupTag::Engel => {
                    let q = l * th * th - m / l;
                    d2[j] - psi.values[j] * (0.25 * q * q)
                }
                GroupTag::Cartan => {
                    let s = d.s();
                    let q = n + s * s * th * th;
                    d2[j] / s - psi.values[j] * (q * q / (4.0 * s))
                }
            }
        })
        .collect();
    Ok(psi.with_values(values))
}

/// Quartic parameters whose evolution over `time_scale * t` equals the
/// evolution of [`gft_laplacian`] over `t`.
///
/// Engel: `(lambda/2, -mu/(2 lambda))`, time scale 1.
/// Cartan: `(S^2/2, nu/2)`, time scale `1/S`.
pub fn dual_to_quartic(d: &DualPoint) -> Result<QuarticParams> {
    let d = DualPoint::new(d.tag, d.lambda, d.mu, d.nu)?;
    match d.tag {
        GroupTag::Engel => QuarticParams::new(0.5 * d.lambda, -d.mu / (2.0 * d.lambda)),
        GroupTag::Cartan => {
            let s = d.s();
            QuarticParams::with_time_scale(0.5 * s * s, 0.5 * d.nu, 1.0 / s)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(l: f64, n: usize, c: f64) -> WaveFunction {
        WaveFunction::from_fn(l, n, |th| Complex64::new((-(th - c) * (th - c) / 2.0).exp(), 0.0)).unwrap()
    }

    #[test]
    fn identity_acts_trivially() {
        let psi = gaussian(10.0, 201, 0.3);
        for d in [DualPoint::engel(1.3, -0.4).unwrap(), DualPoint::cartan(0.4, 0.9, 1.2).unwrap()] {
            let e = GroupPoint::identity(d.tag());
            assert_eq!(rep_apply(&d, &e, &psi).unwrap(), psi);
        }
    }

    #[test]
    fn engel_x1_is_pure_translation() {
        let h = 0.05;
        let psi = gaussian(10.0, 401, 0.0);
        let d = DualPoint::engel(2.0, 1.0).unwrap();
        let g = GroupPoint::new(GroupTag::Engel, &[4.0 * h, 0.0, 0.0, 0.0]).unwrap();
        let out = rep_apply(&d, &g, &psi).unwrap();
        for j in 0..397 {
            assert!((out.values()[j] - psi.values()[j + 4]).norm() < 1e-15);
        }
    }

    #[test]
    fn phase_k5_examples() {
        let d = DualPoint::cartan(1.5, -0.5, 2.0).unwrap();
        let e = GroupPoint::identity(GroupTag::Cartan);
        assert_eq!(phase_k5(&d, &e, 0.7).unwrap(), 0.0);
        let x = GroupPoint::new(GroupTag::Cartan, &[0.0, 0.0, 0.0, 0.8, 0.0]).unwrap();
        for th in [-1.0, 0.0, 2.5] {
            assert!((phase_k5(&d, &x, th).unwrap() - 1.5 * 0.8).abs() < 1e-15);
        }
        let de = DualPoint::engel(1.0, 1.0).unwrap();
        assert!(phase_k5(&de, &GroupPoint::identity(GroupTag::Engel), 0.0).is_err());
    }

    #[test]
    fn phase_k5_reference_value() {
        // lambda = mu = 1, nu = 2, x = (1,1,1,1,1), theta = 1/2, S = 2:
        // constant  (2/4)(0) + 1 + 1 - (1/12)(1 + 3 + 3 - 1) = 3/2
        // linear    (-1/2 - 1 + 1/2 - 2) theta = -3/2
        // quadratic (1/2)(2)(0) theta^2 = 0
        let d = DualPoint::cartan(1.0, 1.0, 2.0).unwrap();
        let x = GroupPoint::new(GroupTag::Cartan, &[1.0; 5]).unwrap();
        assert!((phase_k5(&d, &x, 0.5).unwrap() - 0.0).abs() < 1e-15);
    }

    #[test]
    fn dual_point_invariants() {
        assert!(DualPoint::engel(0.0, 1.0).is_err());
        assert!(DualPoint::cartan(0.0, 0.0, 1.0).is_err());
        assert!(DualPoint::cartan(0.0, 1e-3, 1.0).is_ok());
    }

    #[test]
    fn dual_to_quartic_examples() {
        let q = dual_to_quartic(&DualPoint::engel(2.0, 0.0).unwrap()).unwrap();
        assert_eq!((q.alpha, q.beta, q.time_scale), (1.0, 0.0, 1.0));
        let q = dual_to_quartic(&DualPoint::cartan(1.0, 0.0, 0.0).unwrap()).unwrap();
        assert_eq!((q.alpha, q.beta, q.time_scale), (0.5, 0.0, 1.0));
        let q = dual_to_quartic(&DualPoint::engel(-2.0, 3.0).unwrap()).unwrap();
        assert_eq!((q.alpha, q.beta), (-1.0, 0.75));
        assert_eq!(q.sign_normalized().alpha, 1.0);
        assert_eq!(q.sign_normalized().beta, -0.75);
    }

    #[test]
    fn engel_drep2_multiplier() {
        let psi = gaussian(6.0, 121, 0.0);
        let d = DualPoint::engel(2.0, 1.0).unwrap();
        let out = drep(2, &d, &psi).unwrap();
        for j in 0..psi.len() {
            let th = psi.theta(j);
            let want = psi.values()[j] * Complex64::new(0.0, -0.25 + th * th);
            assert!((out.values()[j] - want).norm() < 1e-14);
        }
    }

    #[test]
    fn cartan_drep2_lambda_one() {
        let psi = gaussian(6.0, 121, 0.0);
        let d = DualPoint::cartan(1.0, 0.0, 0.0).unwrap();
        let out = drep(2, &d, &psi).unwrap();
        for j in 0..psi.len() {
            let th = psi.theta(j);
            let want = psi.values()[j] * Complex64::new(0.0, 0.5 * th * th);
            assert!((out.values()[j] - want).norm() < 1e-14);
        }
    }

    #[test]
    fn engel_drep1_of_gaussian() {
        let psi = gaussian(8.0, 1601, 0.0);
        let d = DualPoint::engel(1.0, 0.0).unwrap();
        let out = drep(1, &d, &psi).unwrap();
        for j in 0..psi.len() {
            let th = psi.theta(j);
            let want = -th * (-th * th / 2.0).exp();
            assert!((out.values()[j].re - want).abs() < 1e-7);
        }
    }

    #[test]
    fn laplacian_examples() {
        let psi = gaussian(8.0, 1601, 0.0);
        // Engel lambda = 2, mu = 0: psi'' - theta^4 psi
        let out = gft_laplacian(&DualPoint::engel(2.0, 0.0).unwrap(), &psi).unwrap();
        // Cartan lambda = 1: psi'' - theta^4 psi / 4
        let out5 = gft_laplacian(&DualPoint::cartan(1.0, 0.0, 0.0).unwrap(), &psi).unwrap();
        for j in 0..psi.len() {
            let th = psi.theta(j);
            let g = (-th * th / 2.0).exp();
            let d2 = (th * th - 1.0) * g;
            assert!((out.values()[j].re - (d2 - th.powi(4) * g)).abs() < 1e-6);
            assert!((out5.values()[j].re - (d2 - 0.25 * th.powi(4) * g)).abs() < 1e-6);
        }
    }

    #[test]
    fn out_of_domain_shift() {
        let psi = gaussian(5.0, 201, 0.0);
        let d = DualPoint::engel(1.0, 0.0).unwrap();
        let g = GroupPoint::new(GroupTag::Engel, &[3.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(rep_apply(&d, &g, &psi), Err(Error::OutOfDomain(_))));
    }
}
