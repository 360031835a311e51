//! Quadrature weights and a uniform-grid cubic spline.

use gauss_quad::GaussLegendre;

/// Gauss-Legendre rule mapped to [0, 1]; weights sum to 1.
pub(crate) fn gauss_legendre_unit(n: usize) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(n).expect("rule degree >= 2");
    rule.as_node_weight_pairs().iter().map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w)).collect()
}

/// Trapezoid weights with fourth-order Gregory end corrections for
/// `n_points` equispaced samples (unit spacing).
pub(crate) fn gregory_weights(n_points: usize) -> Vec<f64> {
    assert!(n_points >= 8, "need at least 8 points");
    let mut w = vec![1.0; n_points];
    let ends = [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0];
    for (i, &e) in ends.iter().enumerate() {
        w[i] = e;
        w[n_points - 1 - i] = e;
    }
    w
}

/// Factorization of the clamped cubic-spline system on a uniform grid with
/// `n + 1` knots. Shared by every line of the same length.
#[derive(Clone, Debug)]
pub(crate) struct SplineFactor {
    n: usize,
    h: f64,
    cp: Vec<f64>,
    inv: Vec<f64>,
}

impl SplineFactor {
    pub(crate) fn new(n: usize, h: f64) -> Self {
        // rows: [2 1], [1 4 1]..., [1 2]
        let m = n + 1;
        let mut cp = vec![0.0; m];
        let mut inv = vec![0.0; m];
        let diag = |j: usize| if j == 0 || j == n { 2.0 } else { 4.0 };
        inv[0] = 1.0 / diag(0);
        cp[0] = inv[0];
        for j in 1..m {
            let d = diag(j) - cp[j - 1];
            inv[j] = 1.0 / d;
            cp[j] = inv[j];
        }
        Self { n, h, cp, inv }
    }

    /// Second derivatives of the clamped spline through `y` with zero end slopes.
    pub(crate) fn second_derivatives(&self, y: &[f64], m2: &mut [f64]) {
        let n = self.n;
        let h2 = 6.0 / (self.h * self.h);
        // right-hand side, forward sweep
        m2[0] = h2 * (y[1] - y[0]) * self.inv[0];
        for j in 1..n {
            let r = h2 * (y[j + 1] - 2.0 * y[j] + y[j - 1]);
            m2[j] = (r - m2[j - 1]) * self.inv[j];
        }
        let r = h2 * (y[n - 1] - y[n]);
        m2[n] = (r - m2[n - 1]) * self.inv[n];
        for j in (0..n).rev() {
            m2[j] -= self.cp[j] * m2[j + 1];
        }
    }

    /// Evaluates the spline at `x` (grid origin `x0`); clamped to the end
    /// values outside the knot range.
    #[inline]
    pub(crate) fn eval(&self, y: &[f64], m2: &[f64], x0: f64, x: f64) -> f64 {
        let s = (x - x0) / self.h;
        if s <= 0.0 {
            return y[0];
        }
        if s >= self.n as f64 {
            return y[self.n];
        }
        let j = (s.floor() as usize).min(self.n - 1);
        let t = s - j as f64;
        let u = 1.0 - t;
        let c = self.h * self.h / 6.0;
        u * y[j] + t * y[j + 1] + c * ((u * u * u - u) * m2[j] + (t * t * t - t) * m2[j + 1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gregory_integrates_cubics_exactly() {
        let n = 33;
        let h = 1.0 / (n - 1) as f64;
        let w = gregory_weights(n);
        let s: f64 = (0..n)
            .map(|i| {
                let x = i as f64 * h;
                w[i] * (x * x * x - 2.0 * x + 1.0)
            })
            .sum::<f64>()
            * h;
        assert!((s - 0.25).abs() < 1e-14);
    }

    #[test]
    fn gauss_unit_rule_sums_to_one() {
        let r = gauss_legendre_unit(5);
        let s: f64 = r.iter().map(|p| p.1).sum();
        assert!((s - 1.0).abs() < 1e-15);
        let m4: f64 = r.iter().map(|p| p.1 * p.0.powi(4)).sum();
        assert!((m4 - 0.2).abs() < 1e-15);
    }

    #[test]
    fn spline_reproduces_smooth_function() {
        let n = 64;
        let h = 6.0 / n as f64;
        let y: Vec<f64> = (0..=n).map(|j| (-(j as f64 * h - 3.0).powi(2)).exp()).collect();
        let f = SplineFactor::new(n, h);
        let mut m2 = vec![0.0; n + 1];
        f.second_derivatives(&y, &mut m2);
        for k in 0..200 {
            let x = 0.013 + k as f64 * 0.0297;
            let exact = (-(x - 3.0).powi(2)).exp();
            assert!((f.eval(&y, &m2, 0.0, x) - exact).abs() < 2e-5);
        }
        assert_eq!(f.eval(&y, &m2, 0.0, -1.0), y[0]);
        assert_eq!(f.eval(&y, &m2, 0.0, 9.0), y[n]);
    }
}
