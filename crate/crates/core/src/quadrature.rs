//! Gauss-Legendre rules and trapezoid sums.

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[a, b]`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p1 = z;
                p0 = 1.0;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = mid - half * z;
        x[n - 1 - i] = mid + half * z;
        w[i] = half * wi;
        w[n - 1 - i] = half * wi;
    }
    (x, w)
}

/// Trapezoid rule on a (possibly nonuniform) increasing abscissa.
pub fn trapezoid(t: &[f64], f: &[f64]) -> f64 {
    t.windows(2).zip(f.windows(2)).map(|(tt, ff)| 0.5 * (tt[1] - tt[0]) * (ff[0] + ff[1])).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        for n in [1, 2, 5, 32, 64] {
            let (x, w) = gauss_legendre(n, -1.0, 3.0);
            let deg = 2 * n - 1;
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
            let exact = (3f64.powi(deg as i32 + 1) - 1.0) / (deg as f64 + 1.0);
            assert!((q - exact).abs() <= 1e-11 * exact.abs(), "n={n}: {q} vs {exact}");
        }
    }

    #[test]
    fn gaussian_integral() {
        let (x, w) = gauss_legendre(64, -12.0, 12.0);
        let q: f64 = x.iter().zip(&w).map(|(x, w)| w * (-x * x / 4.0).exp()).sum();
        assert!((q - 2.0 * std::f64::consts::PI.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn trapezoid_linear() {
        let t = [0.0, 0.5, 2.0];
        assert!((trapezoid(&t, &[1.0, 2.0, 5.0]) - 6.0).abs() < 1e-15);
    }
}
