//! Interpolation on uniform grids.

use num_complex::Complex64;
use rustfft::FftPlanner;

/// Four-point Lagrange weights for nodes at offsets -1, 0, 1, 2 evaluated at
/// fractional position `f`.
#[inline]
pub fn cubic_weights(f: f64) -> [f64; 4] {
    let fm1 = f - 1.0;
    let fm2 = f - 2.0;
    let fp1 = f + 1.0;
    [-f * fm1 * fm2 / 6.0, fp1 * fm1 * fm2 / 2.0, -fp1 * f * fm2 / 2.0, fp1 * f * fm1 / 6.0]
}

/// Cubic Lagrange interpolation of samples `y` at nodes `x0 + j h`.
///
/// Interior points use the centered four-point stencil, the first and last
/// cells a one-sided one; points outside the grid return `None`.
pub fn cubic_at(y: &[f64], x0: f64, h: f64, x: f64) -> Option<f64> {
    let n = y.len();
    let s = (x - x0) / h;
    let last = (n - 1) as f64;
    if !(s >= -1e-9 * last.max(1.0) && s <= last * (1.0 + 1e-12) + 1e-9) {
        return None;
    }
    let s = s.clamp(0.0, last);
    let j = s.round();
    if (s - j).abs() < 1e-12 {
        return Some(y[j as usize]);
    }
    if n < 4 {
        let j = (s.floor() as usize).min(n - 2);
        let f = s - j as f64;
        return Some(y[j] * (1.0 - f) + y[j + 1] * f);
    }
    let j = (s.floor() as usize).clamp(1, n - 3);
    let w = cubic_weights(s - j as f64);
    Some(w[0] * y[j - 1] + w[1] * y[j] + w[2] * y[j + 1] + w[3] * y[j + 2])
}

pub fn cubic_at_complex(y: &[Complex64], x0: f64, h: f64, x: f64) -> Option<Complex64> {
    let n = y.len();
    let s = (x - x0) / h;
    let last = (n - 1) as f64;
    if !(s >= -1e-9 * last.max(1.0) && s <= last * (1.0 + 1e-12) + 1e-9) {
        return None;
    }
    let s = s.clamp(0.0, last);
    let j = s.round();
    if (s - j).abs() < 1e-12 {
        return Some(y[j as usize]);
    }
    if n < 4 {
        let j = (s.floor() as usize).min(n - 2);
        let f = s - j as f64;
        return Some(y[j] * (1.0 - f) + y[j + 1] * f);
    }
    let j = (s.floor() as usize).clamp(1, n - 3);
    let w = cubic_weights(s - j as f64);
    Some(y[j - 1] * w[0] + y[j] * w[1] + y[j + 1] * w[2] + y[j + 2] * w[3])
}

/// Band-limited translation: returns samples of `y(x + shift)` treating the
/// samples as one period of a periodic function with spacing `h`.
pub fn fourier_shift(y: &[Complex64], h: f64, shift: f64) -> Vec<Complex64> {
    let n = y.len();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut buf = y.to_vec();
    fwd.process(&mut buf);
    let period = n as f64 * h;
    for (k, c) in buf.iter_mut().enumerate() {
        let kk = if 2 * k < n {
            k as f64
        } else if 2 * k == n {
            0.0 // Nyquist term: keep it real-symmetric
        } else {
            k as f64 - n as f64
        };
        let omega = 2.0 * std::f64::consts::PI * kk / period;
        if 2 * k == n {
            *c *= (std::f64::consts::PI * shift / h).cos();
        } else {
            *c *= Complex64::from_polar(1.0, omega * shift);
        }
    }
    inv.process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter_mut().for_each(|c| *c *= scale);
    buf
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_reproduces_cubics() {
        let h = 0.1;
        let f = |x: f64| 1.0 - 2.0 * x + 0.5 * x * x - 0.3 * x * x * x;
        let y: Vec<f64> = (0..20).map(|j| f(-1.0 + j as f64 * h)).collect();
        for &x in &[-1.0, -0.97, -0.5, 0.0133, 0.8, 0.85, 0.9] {
            let v = cubic_at(&y, -1.0, h, x).unwrap();
            assert!((v - f(x)).abs() < 1e-12, "{x}");
        }
        assert!(cubic_at(&y, -1.0, h, 0.95).is_none());
        assert!(cubic_at(&y, -1.0, h, -1.01).is_none());
    }

    #[test]
    fn weights_sum_to_one() {
        for i in 0..=10 {
            let w = cubic_weights(i as f64 / 10.0);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
        assert_eq!(cubic_weights(0.0), [0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn fourier_shift_of_trig_polynomial_is_exact() {
        let n = 64;
        let h = 2.0 * std::f64::consts::PI / n as f64;
        let y: Vec<Complex64> = (0..n)
            .map(|j| {
                let x = j as f64 * h;
                Complex64::new((3.0 * x).sin(), (5.0 * x).cos())
            })
            .collect();
        let s = 0.377;
        let z = fourier_shift(&y, h, s);
        for (j, v) in z.iter().enumerate() {
            let x = j as f64 * h + s;
            assert!((v.re - (3.0 * x).sin()).abs() < 1e-12);
            assert!((v.im - (5.0 * x).cos()).abs() < 1e-12);
        }
    }
}
