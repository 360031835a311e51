//! Homogeneous equilibria `mu(v)`, their Fourier transforms and the
//! `eps`-dependent moment constants entering the field equations.
//!
//! Every supported family is a finite sum of separable Gaussian products, so
//! values, gradients and transforms are evaluated in closed form. The sampled
//! values on the velocity grid are used for deposition and quadrature.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{invalid, Result};

/// One-dimensional velocity profile, the building block of every descriptor.
#[derive(Clone, Debug, PartialEq)]
pub enum Profile {
    Maxwellian {
        sigma: f64,
    },
    /// Two counter-propagating beams at `+u` and `-u`.
    TwoStream {
        u: f64,
        sigma: f64,
    },
    /// Bulk plus a beam of density `n_b` at `u_b`. The bulk drifts at
    /// `-n_b u_b / (1 - n_b)` so that the net momentum vanishes.
    BumpOnTail {
        n_b: f64,
        u_b: f64,
        sigma_b: f64,
        sigma: f64,
    },
}

/// Analytic equilibrium family.
#[derive(Clone, Debug, PartialEq)]
pub enum Descriptor {
    /// Isotropic Gaussian in all velocity dimensions.
    Maxwellian { sigma: f64 },
    /// Two-stream profile along `v1`, Maxwellian with the same `sigma` across.
    TwoStream { u: f64, sigma: f64 },
    /// Bump-on-tail along `v1`, Maxwellian with width `sigma` across.
    BumpOnTail { n_b: f64, u_b: f64, sigma_b: f64, sigma: f64 },
    /// Product `mu_1(v1) mu_2(v2) ...`, one profile per velocity dimension.
    AnisotropicProduct(Vec<Profile>),
}

#[derive(Clone, Copy, Debug)]
struct Gauss1 {
    w: f64,
    m: f64,
    s: f64,
}

#[derive(Clone, Copy, Debug)]
struct Term {
    weight: f64,
    mean: [f64; 3],
    sigma: [f64; 3],
    /// Normalized amplitude and inverse widths, filled by `finish`.
    coef: f64,
    inv_sigma: [f64; 3],
}

impl Term {
    fn finish(&mut self, dim: usize) {
        self.coef = self.weight * (2.0 * PI).powf(-0.5 * dim as f64);
        for d in 0..dim {
            self.inv_sigma[d] = 1.0 / self.sigma[d];
            self.coef *= self.inv_sigma[d];
        }
    }
}

impl Profile {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Profile::Maxwellian { sigma } => sigma > 0.0,
            Profile::TwoStream { u, sigma } => sigma > 0.0 && u.is_finite(),
            Profile::BumpOnTail { n_b, u_b, sigma_b, sigma } => {
                sigma > 0.0 && sigma_b > 0.0 && (0.0..1.0).contains(&n_b) && u_b.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            invalid(format!("bad profile parameters {self:?}"))
        }
    }

    fn mixture(&self) -> Vec<Gauss1> {
        match *self {
            Profile::Maxwellian { sigma } => vec![Gauss1 { w: 1.0, m: 0.0, s: sigma }],
            Profile::TwoStream { u, sigma } => {
                vec![Gauss1 { w: 0.5, m: u, s: sigma }, Gauss1 { w: 0.5, m: -u, s: sigma }]
            }
            Profile::BumpOnTail { n_b, u_b, sigma_b, sigma } => vec![
                Gauss1 { w: 1.0 - n_b, m: -n_b * u_b / (1.0 - n_b), s: sigma },
                Gauss1 { w: n_b, m: u_b, s: sigma_b },
            ],
        }
    }

    fn is_even(&self) -> bool {
        !matches!(self, Profile::BumpOnTail { n_b, u_b, .. } if *n_b > 0.0 && *u_b != 0.0)
    }

    fn width(&self) -> f64 {
        match *self {
            Profile::Maxwellian { sigma } => sigma,
            Profile::TwoStream { u, sigma } => u.abs() + sigma,
            Profile::BumpOnTail { u_b, sigma_b, sigma, n_b } => {
                sigma.max(u_b.abs() + sigma_b).max(n_b * u_b.abs() / (1.0 - n_b) + sigma)
            }
        }
    }
}

impl Descriptor {
    fn profiles(&self, dim_v: usize) -> Result<Vec<Profile>> {
        let across = |sigma: f64| Profile::Maxwellian { sigma };
        let out = match self {
            Descriptor::Maxwellian { sigma } => vec![across(*sigma); dim_v],
            Descriptor::TwoStream { u, sigma } => {
                let mut p = vec![Profile::TwoStream { u: *u, sigma: *sigma }];
                p.extend(std::iter::repeat(across(*sigma)).take(dim_v - 1));
                p
            }
            Descriptor::BumpOnTail { n_b, u_b, sigma_b, sigma } => {
                let mut p = vec![Profile::BumpOnTail { n_b: *n_b, u_b: *u_b, sigma_b: *sigma_b, sigma: *sigma }];
                p.extend(std::iter::repeat(across(*sigma)).take(dim_v - 1));
                p
            }
            Descriptor::AnisotropicProduct(ps) => {
                if ps.len() != dim_v {
                    return invalid(format!("anisotropic product has {} factors for d_v = {dim_v}", ps.len()));
                }
                ps.clone()
            }
        };
        for p in &out {
            p.validate()?;
        }
        Ok(out)
    }
}

/// Uniform cell-centred velocity grid on `[-v_max, v_max]^dim`, `n` nodes per
/// dimension. The first velocity index is the fastest-varying one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VelocityGrid {
    pub dim: usize,
    pub n: usize,
    pub v_max: f64,
}

impl VelocityGrid {
    pub fn new(dim: usize, n: usize, v_max: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) || n < 8 || v_max <= 0.0 {
            return invalid(format!("velocity grid dim={dim} n={n} v_max={v_max}"));
        }
        Ok(Self { dim, n, v_max })
    }

    pub fn h(&self) -> f64 {
        2.0 * self.v_max / self.n as f64
    }

    /// Quadrature weight of one node, `h^dim`.
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.dim as i32)
    }

    /// Coordinate of node `i` along one axis.
    pub fn node(&self, i: usize) -> f64 {
        -self.v_max + (i as f64 + 0.5) * self.h()
    }

    /// Coordinate of face `i` (`0..=n`) along one axis.
    pub fn face(&self, i: usize) -> f64 {
        -self.v_max + i as f64 * self.h()
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Velocity point of flat node index `iv`; unused components are zero.
    pub fn point(&self, iv: usize) -> [f64; 3] {
        let mut p = [0.0; 3];
        let mut r = iv;
        for c in p.iter_mut().take(self.dim) {
            *c = self.node(r % self.n);
            r /= self.n;
        }
        p
    }
}

/// Relativistic factor `sqrt(1 + eps^2 |v|^2)`.
#[inline]
pub fn gamma(v: &[f64], eps: f64) -> f64 {
    let v2: f64 = v.iter().map(|x| x * x).sum();
    (1.0 + eps * eps * v2).sqrt()
}

/// Homogeneous equilibrium with its analytic form and sampled values.
#[derive(Clone, Debug)]
pub struct Equilibrium {
    pub descriptor: Descriptor,
    pub dim_v: usize,
    pub v_grid: VelocityGrid,
    pub values: Vec<f64>,
    terms: Vec<Term>,
    even: bool,
    width: f64,
}

/// Constants of `mu` entering the shift identity `j(f) = j(g) - eps Lambda A`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentConstants {
    pub eps: f64,
    /// `tr(Lambda) / d_v`; equals the scalar constant for radial `mu`.
    pub lambda: f64,
    /// `int mu / gamma^3`.
    pub lambda_tilde: f64,
    /// `Phi_ij = int v_i v_j mu / gamma^3`.
    pub phi_matrix: [[f64; 3]; 3],
    /// `Lambda_ij = int (delta_ij / gamma - eps^2 v_i v_j / gamma^3) mu`.
    pub lambda_matrix: [[f64; 3]; 3],
    pub dim_v: usize,
}

impl MomentConstants {
    /// `phi(A) = Phi A - tr(Phi) A`, the cubic correction of the general shift identity.
    pub fn phi_apply(&self, a: &[f64]) -> [f64; 3] {
        let d = self.dim_v;
        let tr: f64 = (0..d).map(|i| self.phi_matrix[i][i]).sum();
        let mut out = [0.0; 3];
        for i in 0..d {
            out[i] = (0..d).map(|j| self.phi_matrix[i][j] * a[j]).sum::<f64>() - tr * a[i];
        }
        out
    }

    /// `Lambda A`.
    pub fn lambda_apply(&self, a: &[f64]) -> [f64; 3] {
        let d = self.dim_v;
        let mut out = [0.0; 3];
        for i in 0..d {
            out[i] = (0..d).map(|j| self.lambda_matrix[i][j] * a[j]).sum();
        }
        out
    }
}

impl Equilibrium {
    /// Builds the equilibrium and samples it on `v_grid`. Fails when the grid
    /// does not resolve the profile (mass off by more than 1e-10).
    pub fn new(descriptor: Descriptor, v_grid: VelocityGrid) -> Result<Self> {
        let dim_v = v_grid.dim;
        let profiles = descriptor.profiles(dim_v)?;
        let mut terms = vec![Term { weight: 1.0, mean: [0.0; 3], sigma: [1.0; 3], coef: 0.0, inv_sigma: [1.0; 3] }];
        for (d, p) in profiles.iter().enumerate() {
            let mut next = Vec::new();
            for t in &terms {
                for g in p.mixture() {
                    let mut nt = *t;
                    nt.weight *= g.w;
                    nt.mean[d] = g.m;
                    nt.sigma[d] = g.s;
                    next.push(nt);
                }
            }
            terms = next;
        }
        for t in terms.iter_mut() {
            t.finish(dim_v);
        }
        let even = profiles.iter().all(Profile::is_even);
        let width = profiles.iter().map(Profile::width).fold(0.0, f64::max);
        let mut eq = Self { descriptor, dim_v, v_grid, values: Vec::new(), terms, even, width };
        eq.values = (0..v_grid.len()).map(|iv| eq.eval(&v_grid.point(iv)[..dim_v])).collect();
        let mass = eq.values.iter().sum::<f64>() * v_grid.cell_volume();
        if (mass - 1.0).abs() > 1e-10 {
            return invalid(format!("velocity grid does not resolve mu: quadrature mass {mass}"));
        }
        Ok(eq)
    }

    /// True for the isotropic Maxwellian (and any even profile when `d_v = 1`).
    pub fn is_radial(&self) -> bool {
        match &self.descriptor {
            Descriptor::Maxwellian { .. } => true,
            _ => self.dim_v == 1 && self.even,
        }
    }

    /// True when `mu(-v) = mu(v)`.
    pub fn is_even(&self) -> bool {
        self.even
    }

    /// Largest drift-plus-width scale of the profile; the grid should reach a
    /// few of these.
    pub fn width(&self) -> f64 {
        self.width
    }

    #[inline]
    fn term_value(&self, t: &Term, v: &[f64]) -> f64 {
        let mut arg = 0.0;
        for d in 0..self.dim_v {
            let z = (v[d] - t.mean[d]) * t.inv_sigma[d];
            arg += z * z;
        }
        t.coef * (-0.5 * arg).exp()
    }

    /// `mu(v)`.
    pub fn eval(&self, v: &[f64]) -> f64 {
        self.terms.iter().map(|t| self.term_value(t, v)).sum()
    }

    /// `grad_v mu(v)`; unused components are zero.
    pub fn grad(&self, v: &[f64]) -> [f64; 3] {
        let mut g = [0.0; 3];
        for t in &self.terms {
            let val = self.term_value(t, v);
            for d in 0..self.dim_v {
                g[d] -= val * (v[d] - t.mean[d]) / (t.sigma[d] * t.sigma[d]);
            }
        }
        g
    }

    /// Characteristic function `int mu(v) e^{-i xi.v} dv`.
    pub fn char_fn(&self, xi: &[f64]) -> Complex64 {
        self.terms
            .iter()
            .map(|t| {
                let mut phase = 0.0;
                let mut decay = 0.0;
                for d in 0..self.dim_v {
                    phase -= xi[d] * t.mean[d];
                    decay -= 0.5 * (t.sigma[d] * xi[d]).powi(2);
                }
                Complex64::from_polar(t.weight * decay.exp(), phase)
            })
            .sum()
    }

    /// `mu_hat(xi) = (2 pi)^{-d} int mu e^{-i xi.v} dv`.
    pub fn fourier(&self, xi: &[f64]) -> Complex64 {
        self.char_fn(xi) * (2.0 * PI).powi(-(self.dim_v as i32))
    }

    /// Fraction of the mass of `mu` in `[a, b]` along `axis`, times the other
    /// factors evaluated at `v`, i.e. `int_a^b mu(.., w, ..) dw`.
    pub fn line_integral(&self, axis: usize, v: &[f64], a: f64, b: f64, rule: &[(f64, f64)]) -> f64 {
        let mut w = [v[0], if self.dim_v > 1 { v[1] } else { 0.0 }, if self.dim_v > 2 { v[2] } else { 0.0 }];
        let len = b - a;
        let mut s = 0.0;
        for &(x, wt) in rule {
            w[axis] = a + x * len;
            s += wt * self.eval(&w[..self.dim_v]);
        }
        s * len
    }

    /// Moment constants at speed-of-light inverse `eps`, by quadrature on the
    /// equilibrium grid.
    pub fn moment_constants(&self, eps: f64) -> Result<MomentConstants> {
        if !(eps >= 0.0) {
            return invalid(format!("eps must be >= 0, got {eps}"));
        }
        let d = self.dim_v;
        let vol = self.v_grid.cell_volume();
        let mut lt = 0.0;
        let mut inv_g = 0.0;
        let mut phi = [[0.0; 3]; 3];
        for (iv, &mu) in self.values.iter().enumerate() {
            let v = self.v_grid.point(iv);
            let g = gamma(&v[..d], eps);
            let w3 = mu / (g * g * g);
            lt += w3;
            inv_g += mu / g;
            for i in 0..d {
                for j in 0..d {
                    phi[i][j] += v[i] * v[j] * w3;
                }
            }
        }
        lt *= vol;
        inv_g *= vol;
        let mut lam = [[0.0; 3]; 3];
        for i in 0..d {
            for j in 0..d {
                phi[i][j] *= vol;
            }
        }
        for i in 0..d {
            for j in 0..d {
                lam[i][j] = if i == j { inv_g } else { 0.0 } - eps * eps * phi[i][j];
            }
        }
        let lambda = (0..d).map(|i| lam[i][i]).sum::<f64>() / d as f64;
        Ok(MomentConstants { eps, lambda, lambda_tilde: lt, phi_matrix: phi, lambda_matrix: lam, dim_v: d })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn maxw(dim: usize) -> Equilibrium {
        Equilibrium::new(Descriptor::Maxwellian { sigma: 1.0 }, VelocityGrid::new(dim, 64, 9.0).unwrap()).unwrap()
    }

    fn two_stream() -> Equilibrium {
        Equilibrium::new(Descriptor::TwoStream { u: 2.4, sigma: 1.0 }, VelocityGrid::new(1, 256, 12.0).unwrap())
            .unwrap()
    }

    #[test]
    fn maxwellian_closed_forms() {
        let eq = maxw(1);
        assert!((eq.eval(&[0.0]) - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-15);
        assert!(eq.eval(&[10.5]) < 1e-15);
        for xi in [0.0, 0.7, 2.0] {
            let want = (-0.5 * xi * xi as f64).exp() / (2.0 * PI);
            assert!((eq.fourier(&[xi]) - Complex64::new(want, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn product_descriptor_factorizes() {
        let p1 = Profile::TwoStream { u: 1.0, sigma: 0.8 };
        let p2 = Profile::Maxwellian { sigma: 1.3 };
        let g2 = VelocityGrid::new(2, 64, 10.0).unwrap();
        let eq = Equilibrium::new(Descriptor::AnisotropicProduct(vec![p1.clone(), p2.clone()]), g2).unwrap();
        let e1 = Equilibrium::new(Descriptor::AnisotropicProduct(vec![p1]), VelocityGrid::new(1, 64, 10.0).unwrap())
            .unwrap();
        let e2 = Equilibrium::new(Descriptor::AnisotropicProduct(vec![p2]), VelocityGrid::new(1, 64, 10.0).unwrap())
            .unwrap();
        let v = [0.4, -1.1];
        assert!((eq.eval(&v) - e1.eval(&v[..1]) * e2.eval(&v[1..])).abs() < 1e-16);
    }

    #[test]
    fn normalization_and_zero_current() {
        let descs = [
            Descriptor::Maxwellian { sigma: 1.0 },
            Descriptor::TwoStream { u: 2.4, sigma: 1.0 },
            Descriptor::BumpOnTail { n_b: 0.1, u_b: 4.0, sigma_b: 0.5, sigma: 1.0 },
        ];
        for desc in descs {
            for dim in [1, 2] {
                let eq = Equilibrium::new(desc.clone(), VelocityGrid::new(dim, 128, 14.0).unwrap()).unwrap();
                assert!(eq.values.iter().all(|&m| m >= 0.0));
                if !eq.is_even() {
                    continue;
                }
                for eps in [0.0, 0.1, 0.5, 1.0] {
                    let mut j = [0.0; 2];
                    for (iv, &m) in eq.values.iter().enumerate() {
                        let v = eq.v_grid.point(iv);
                        let g = gamma(&v[..dim], eps);
                        for d in 0..dim {
                            j[d] += v[d] / g * m;
                        }
                    }
                    for d in 0..dim {
                        assert!((j[d] * eq.v_grid.cell_volume()).abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn fourier_matches_direct_quadrature_two_stream() {
        let eq = two_stream();
        let fine = VelocityGrid::new(1, 4096, 14.0).unwrap();
        let xi = 1.3;
        let mut s = Complex64::new(0.0, 0.0);
        for i in 0..fine.n {
            let v = fine.node(i);
            s += Complex64::from_polar(eq.eval(&[v]), -xi * v);
        }
        s *= fine.h() / (2.0 * PI);
        assert!((s - eq.fourier(&[xi])).norm() < 1e-8);
    }

    #[test]
    fn moment_constants_at_eps_zero() {
        for dim in [1, 2, 3] {
            let eq = Equilibrium::new(Descriptor::Maxwellian { sigma: 1.0 }, VelocityGrid::new(dim, 32, 8.0).unwrap())
                .unwrap();
            let mc = eq.moment_constants(0.0).unwrap();
            assert!((mc.lambda - 1.0).abs() < 1e-10);
            assert!((mc.lambda_tilde - 1.0).abs() < 1e-10);
        }
    }

    // Oracle: a separate 4x finer midpoint quadrature of the three-dimensional
    // radial formula int (1 + 2/3 eps^2 |v|^2) gamma^{-3} mu dv.
    #[test]
    fn lambda_3d_matches_fine_quadrature() {
        let eps = 0.1;
        let eq =
            Equilibrium::new(Descriptor::Maxwellian { sigma: 1.0 }, VelocityGrid::new(3, 24, 8.0).unwrap()).unwrap();
        let mc = eq.moment_constants(eps).unwrap();
        let n = 96;
        let h = 16.0 / n as f64;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let v = [-8.0 + (i as f64 + 0.5) * h, -8.0 + (j as f64 + 0.5) * h, -8.0 + (k as f64 + 0.5) * h];
                    let r2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
                    let g = (1.0 + eps * eps * r2).sqrt();
                    let mu = (-0.5 * r2).exp() / (2.0 * PI).powf(1.5);
                    s += (1.0 + 2.0 / 3.0 * eps * eps * r2) / (g * g * g) * mu;
                }
            }
        }
        s *= h * h * h;
        assert!((mc.lambda - s).abs() < 1e-9, "{} vs {}", mc.lambda, s);
        assert!(mc.lambda > 0.0 && mc.lambda <= 1.0);
    }

    // Both forms of the shift correction agree for radial mu on a basis of A.
    #[test]
    fn shift_forms_agree_for_radial_mu() {
        for dim in [1, 2, 3] {
            let eq = Equilibrium::new(Descriptor::Maxwellian { sigma: 1.0 }, VelocityGrid::new(dim, 32, 8.0).unwrap())
                .unwrap();
            let mc = eq.moment_constants(0.3).unwrap();
            for b in 0..dim {
                let mut a = [0.0; 3];
                a[b] = 1.0;
                let lhs = mc.lambda_apply(&a);
                let ph = mc.phi_apply(&a);
                for i in 0..dim {
                    let rhs = mc.lambda_tilde * a[i] - 0.09 * ph[i];
                    assert!((lhs[i] - rhs).abs() < 1e-12);
                    assert!((lhs[i] - mc.lambda * a[i]).abs() < 1e-8);
                }
            }
            for i in 0..dim {
                for j in 0..dim {
                    assert_eq!(mc.phi_matrix[i][j], mc.phi_matrix[j][i]);
                }
            }
        }
    }

    #[test]
    fn rejects_unresolving_grid() {
        let r = Equilibrium::new(Descriptor::TwoStream { u: 2.4, sigma: 1.0 }, VelocityGrid::new(1, 64, 4.0).unwrap());
        assert!(r.is_err());
    }

    proptest! {
        #[test]
        fn lambda_in_true_range(eps in 0.0f64..1.0, sigma in 0.5f64..1.5, dim in 1usize..3) {
            let eq = Equilibrium::new(Descriptor::Maxwellian { sigma }, VelocityGrid::new(dim, 64, 12.0 * sigma).unwrap()).unwrap();
            let mc = eq.moment_constants(eps).unwrap();
            prop_assert!(mc.lambda > 0.0 && mc.lambda <= 1.0 + 1e-12);
            prop_assert!(mc.lambda_tilde <= mc.lambda + 1e-12);
        }

        #[test]
        fn fourier_conjugate_symmetric(xi in -5.0f64..5.0, u in 0.0f64..3.0) {
            let eq = Equilibrium::new(Descriptor::BumpOnTail { n_b: 0.2, u_b: u, sigma_b: 0.6, sigma: 1.0 },
                VelocityGrid::new(1, 256, 14.0).unwrap()).unwrap();
            let a = eq.fourier(&[xi]);
            let b = eq.fourier(&[-xi]);
            prop_assert!((a - b.conj()).norm() < 1e-15);
        }

        #[test]
        fn fourier_agrees_with_quadrature(xi in -4.0f64..4.0) {
            let eq = two_stream();
            let h = eq.v_grid.h();
            let mut s = Complex64::new(0.0, 0.0);
            for (i, &m) in eq.values.iter().enumerate() {
                s += Complex64::from_polar(m, -xi * eq.v_grid.node(i));
            }
            s *= h / (2.0 * PI);
            prop_assert!((s - eq.fourier(&[xi])).norm() < 1e-8);
        }
    }
}
