//! Small numeric helpers shared across modules.

use std::f64::consts::{PI, TAU};

/// Wraps an angle into (−π, π].
pub(crate) fn wrap_pi(x: f64) -> f64 {
    let y = x - TAU * (x / TAU).round();
    if y <= -PI {
        y + TAU
    } else {
        y
    }
}

/// Bisection on a monotone bracket. `f(lo)` and `f(hi)` must have opposite signs.
pub(crate) fn bisect(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    bisect_tol(lo, hi, 0.0, f)
}

/// Bisection stopping once the bracket is narrower than `tol`.
pub(crate) fn bisect_tol(mut lo: f64, mut hi: f64, tol: f64, f: impl Fn(f64) -> f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo < tol {
            break;
        }
        let fm = f(mid);
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Gauss–Hermite nodes and weights for ∫ e^{−x²} f(x) dx (Newton on the orthonormal
/// recurrence, Numerical Recipes style).
pub(crate) fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    let pim4 = PI.powf(-0.25);
    let mut out = vec![(0.0, 0.0); n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * out[0].0,
            3 => 1.91 * z - 0.91 * out[1].0,
            _ => 2.0 * z - out[i - 2].0,
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-14 {
                break;
            }
        }
        let w = 2.0 / (pp * pp);
        out[i] = (z, w);
        out[n - 1 - i] = (-z, w);
    }
    out
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub(crate) fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

pub(crate) fn rms(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt()
}

/// (skewness, excess kurtosis)
pub(crate) fn shape_moments(xs: &[f64]) -> (f64, f64) {
    let m = mean(xs);
    let n = xs.len() as f64;
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m3 = xs.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    if m2 == 0.0 {
        return (0.0, 0.0);
    }
    (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
}

/// Least-squares slope of `ys` against equally spaced abscissae with spacing `dx`.
pub(crate) fn regression_slope(ys: &[f64], dx: f64) -> f64 {
    let n = ys.len() as f64;
    let xm = (n - 1.0) / 2.0;
    let ym = mean(ys);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx_i = i as f64 - xm;
        sxy += dx_i * (y - ym);
        sxx += dx_i * dx_i;
    }
    sxy / sxx / dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_pi_range() {
        for x in [-10.0, -PI, -1.0, 0.0, PI, 3.5, 100.0] {
            let y = wrap_pi(x);
            assert!(y > -PI - 1e-12 && y <= PI + 1e-12, "{x} -> {y}");
            assert!(((x - y) / TAU - ((x - y) / TAU).round()).abs() < 1e-9);
        }
    }

    #[test]
    fn gauss_hermite_moments() {
        let gh = gauss_hermite(24);
        let total: f64 = gh.iter().map(|(_, w)| w).sum();
        assert!((total - PI.sqrt()).abs() < 1e-12);
        // ∫ x² e^{−x²} = √π/2; ∫ cos(x) e^{−x²} = √π e^{−1/4}
        let m2: f64 = gh.iter().map(|(x, w)| w * x * x).sum();
        assert!((m2 - PI.sqrt() / 2.0).abs() < 1e-12);
        let c: f64 = gh.iter().map(|(x, w)| w * x.cos()).sum();
        assert!((c - PI.sqrt() * (-0.25f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn bisect_finds_sqrt2() {
        let r = bisect(0.0, 2.0, |x| x * x - 2.0);
        assert!((r - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn slope_of_line() {
        let ys: Vec<f64> = (0..50).map(|i| 3.0 + 0.5 * i as f64 * 0.1).collect();
        assert!((regression_slope(&ys, 0.1) - 0.5).abs() < 1e-12);
    }
}
