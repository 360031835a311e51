//! Fourier-space field operators on the periodic line: Poisson, Helmholtz
//! `(-Delta + eps^2 lambda)^{-1}`, the Leray projector, the exact per-mode
//! wave integrator and the Darwin hierarchy.
//!
//! In 1D2V a vector field is `(u1, u2)(x)`. The divergence is `d_x u1`, so the
//! projector keeps only the mean of `u1`, and `curl A = d_x A2 e3`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Error, Result};

mod hierarchy;

pub use hierarchy::{build_hierarchy, darwin_potentials, darwin_potentials_from_f, DarwinHierarchy};

type C = Complex64;

/// FFT plans and wavenumbers for a periodic grid of `n` points on `[0, length)`.
#[derive(Clone)]
pub struct Spectral {
    pub n: usize,
    pub length: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("n", &self.n).field("length", &self.length).finish()
    }
}

impl Spectral {
    pub fn new(n: usize, length: f64) -> Self {
        let mut planner = FftPlanner::new();
        Self { n, length, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) }
    }

    /// Signed wavenumber `2 pi m / L` of FFT index `m`. The Nyquist index gets
    /// the positive value.
    pub fn kappa(&self, m: usize) -> f64 {
        let k = if m <= self.n / 2 { m as f64 } else { m as f64 - self.n as f64 };
        2.0 * std::f64::consts::PI * k / self.length
    }

    pub fn is_nyquist(&self, m: usize) -> bool {
        self.n % 2 == 0 && m == self.n / 2
    }

    /// Normalized coefficients `u_hat_m = (1/n) sum_x u e^{-i kappa x}`.
    pub fn forward(&self, u: &[f64]) -> Vec<C> {
        let mut buf: Vec<C> = u.iter().map(|&x| C::new(x, 0.0)).collect();
        self.forward_in_place(&mut buf);
        buf
    }

    pub(crate) fn forward_in_place(&self, buf: &mut [C]) {
        self.fwd.process(buf);
        let s = 1.0 / self.n as f64;
        for b in buf.iter_mut() {
            *b *= s;
        }
    }

    /// Real part of `sum_m u_hat_m e^{i kappa x}`.
    pub fn inverse(&self, uh: &[C]) -> Vec<f64> {
        let mut buf = uh.to_vec();
        self.inv.process(&mut buf);
        buf.iter().map(|c| c.re).collect()
    }

    /// Unnormalized inverse transform in place.
    pub(crate) fn inverse_in_place(&self, buf: &mut [C]) {
        self.inv.process(buf);
    }

    /// Applies a real-symmetric multiplier `m(kappa)` to a real field.
    pub fn multiply(&self, u: &[f64], mult: impl Fn(usize, f64) -> C) -> Vec<f64> {
        let mut uh = self.forward(u);
        for (m, c) in uh.iter_mut().enumerate() {
            *c *= mult(m, self.kappa(m));
        }
        self.inverse(&uh)
    }

    /// `d_x^order u`; the Nyquist mode is dropped for odd orders.
    pub fn derivative_n(&self, u: &[f64], order: u32) -> Vec<f64> {
        self.multiply(u, |m, k| {
            if order % 2 == 1 && self.is_nyquist(m) {
                C::new(0.0, 0.0)
            } else {
                C::new(0.0, k).powu(order)
            }
        })
    }

    pub fn derivative(&self, u: &[f64]) -> Vec<f64> {
        self.derivative_n(u, 1)
    }

    pub fn mean(&self, u: &[f64]) -> f64 {
        u.iter().sum::<f64>() / u.len() as f64
    }

    /// `||u||_{L2}` with the `dx` quadrature weight.
    pub fn l2_norm(&self, u: &[f64]) -> f64 {
        (u.iter().map(|x| x * x).sum::<f64>() * self.length / self.n as f64).sqrt()
    }

    /// `||u||_{H^n}` with symbol `(1 + kappa^2)^{n/2}`.
    pub fn sobolev_norm(&self, u: &[f64], n: u32) -> f64 {
        let uh = self.forward(u);
        let s: f64 =
            uh.iter().enumerate().map(|(m, c)| (1.0 + self.kappa(m).powi(2)).powi(n as i32) * c.norm_sqr()).sum();
        (s * self.length).sqrt()
    }
}

/// Vector field sampled on the x-grid, one array per velocity component.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub comps: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn new(comps: Vec<Vec<f64>>) -> Self {
        Self { comps }
    }

    pub fn zeros(dim: usize, n: usize) -> Self {
        Self { comps: vec![vec![0.0; n]; dim] }
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    pub fn len(&self) -> usize {
        self.comps.first().map_or(0, |c| c.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self { comps: self.comps.iter().map(|c| c.iter().map(|x| a * x).collect()).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            comps: self
                .comps
                .iter()
                .zip(&other.comps)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scaled(-1.0))
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// `-Delta phi = rho - <rho>`, `<phi> = 0`.
pub fn poisson_solve(sp: &Spectral, rho: &[f64]) -> Vec<f64> {
    sp.multiply(rho, |m, k| if m == 0 { C::new(0.0, 0.0) } else { C::new(1.0 / (k * k), 0.0) })
}

/// Leray projection: longitudinal fluctuations removed, means kept.
pub fn leray_project(sp: &Spectral, u: &VectorField) -> VectorField {
    let mut out = u.clone();
    if let Some(c0) = out.comps.first_mut() {
        let m = sp.mean(c0);
        c0.iter_mut().for_each(|x| *x = m);
    }
    out
}

/// `(-Delta + eps^2 lambda)^{-1}` applied componentwise.
pub fn helmholtz_solve(sp: &Spectral, src: &VectorField, eps: f64, lambda: f64) -> Result<VectorField> {
    if !(lambda > 0.0 && lambda <= 5.0 / 3.0) || !(eps >= 0.0) {
        return invalid(format!("helmholtz_solve: lambda = {lambda}, eps = {eps}"));
    }
    let shift = eps * eps * lambda;
    let mut comps = Vec::with_capacity(src.dim());
    for c in &src.comps {
        if shift == 0.0 {
            let scale = c.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if sp.mean(c).abs() > 1e-14 * scale.max(1e-300) {
                return Err(Error::SingularMean);
            }
        }
        comps.push(sp.multiply(c, |m, k| {
            let d = k * k + shift;
            if m == 0 && shift == 0.0 {
                C::new(0.0, 0.0)
            } else {
                C::new(1.0 / d, 0.0)
            }
        }));
    }
    Ok(VectorField::new(comps))
}

/// Electromagnetic state in Coulomb gauge: potentials and `d_t A`, real space.
#[derive(Clone, Debug, PartialEq)]
pub struct EMState {
    pub phi: Vec<f64>,
    pub a: VectorField,
    pub dta: VectorField,
    pub eps: f64,
    pub lambda: f64,
}

impl EMState {
    pub fn zeros(dim_v: usize, n: usize, eps: f64, lambda: f64) -> Self {
        Self { phi: vec![0.0; n], a: VectorField::zeros(dim_v, n), dta: VectorField::zeros(dim_v, n), eps, lambda }
    }

    /// `E = -grad phi - eps d_t A`.
    pub fn e_field(&self, sp: &Spectral) -> VectorField {
        let mut e = self.dta.scaled(-self.eps);
        let dphi = sp.derivative(&self.phi);
        for (x, d) in e.comps[0].iter_mut().zip(dphi) {
            *x -= d;
        }
        e
    }

    /// `B3 = d_x A2` in 1D2V; `None` in 1D1V.
    pub fn b_field(&self, sp: &Spectral) -> Option<Vec<f64>> {
        (self.a.dim() > 1).then(|| sp.derivative(&self.a.comps[1]))
    }

    /// Largest per-mode divergence `|kappa A1_hat|` of `A` and `d_t A`.
    pub fn gauge_residual(&self, sp: &Spectral) -> f64 {
        let mut r: f64 = 0.0;
        for u in [&self.a.comps[0], &self.dta.comps[0]] {
            for (m, c) in sp.forward(u).iter().enumerate() {
                r = r.max(sp.kappa(m).abs() * c.norm());
            }
        }
        r
    }

    /// `max |d_x E1 - (rho - <rho>)|`.
    pub fn gauss_residual(&self, sp: &Spectral, rho: &[f64]) -> f64 {
        let e = self.e_field(sp);
        let de = sp.derivative(&e.comps[0]);
        let m = sp.mean(rho);
        de.iter().zip(rho).fold(0.0, |acc, (d, r)| acc.max((d - (r - m)).abs()))
    }
}

/// Sine/cosine factors of the oscillator with squared frequency `w2` over time
/// `t`: `(cos, sin(wt)/w, (1 - cos wt)/w^2)`, stable as `w -> 0`.
pub(crate) fn osc_factors(w2: f64, t: f64) -> (f64, f64, f64) {
    let x = w2 * t * t;
    if x < 1e-2 {
        let c = 1.0 - x / 2.0 + x * x / 24.0 - x * x * x / 720.0 + x.powi(4) / 40320.0;
        let s = t * (1.0 - x / 6.0 + x * x / 120.0 - x * x * x / 5040.0 + x.powi(4) / 362880.0);
        let c2 = t * t * (0.5 - x / 24.0 + x * x / 720.0 - x * x * x / 40320.0 + x.powi(4) / 3628800.0);
        (c, s, c2)
    } else {
        let w = w2.sqrt();
        let (sn, cs) = (w * t).sin_cos();
        (cs, sn / w, (1.0 - cs) / w2)
    }
}

/// Exact update of `eps^2 A'' + (kappa^2 + eps^2 lambda) A = s` for one mode
/// with a constant source.
#[inline]
pub(crate) fn oscillator<T>(a: T, da: T, s: T, w2: f64, eps2: f64, t: f64) -> (T, T)
where
    T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
{
    let (c, sn, c2) = osc_factors(w2, t);
    let se = s * (1.0 / eps2);
    (a * c + da * sn + se * c2, a * (-w2 * sn) + da * c + se * sn)
}

/// Exact per-mode step of `eps^2 A'' - Delta A + eps^2 lambda A = source`
/// with the source held constant over `dt`. The mean mode oscillates with
/// `omega^2 = lambda`.
pub fn wave_step(sp: &Spectral, state: &EMState, source: &VectorField, dt: f64) -> Result<EMState> {
    let eps = state.eps;
    if !(eps > 0.0) || !(dt > 0.0) {
        return invalid(format!("wave_step needs eps > 0 and dt > 0 (eps = {eps}, dt = {dt})"));
    }
    let eps2 = eps * eps;
    let mut out = state.clone();
    for c in 0..state.a.dim() {
        let ah = sp.forward(&state.a.comps[c]);
        let dh = sp.forward(&state.dta.comps[c]);
        let sh = sp.forward(&source.comps[c]);
        let mut na = Vec::with_capacity(sp.n);
        let mut nd = Vec::with_capacity(sp.n);
        for m in 0..sp.n {
            let k = sp.kappa(m);
            let w2 = (k * k + eps2 * state.lambda) / eps2;
            let (x, y) = oscillator(ah[m], dh[m], sh[m], w2, eps2, dt);
            na.push(x);
            nd.push(y);
        }
        out.a.comps[c] = sp.inverse(&na);
        out.dta.comps[c] = sp.inverse(&nd);
    }
    Ok(out)
}

/// Wave energy `eps^2 |A'|^2 + |d_x A|^2 + eps^2 lambda |A|^2`, integrated.
pub fn wave_energy(sp: &Spectral, state: &EMState) -> f64 {
    let eps2 = state.eps * state.eps;
    let mut e = 0.0;
    for c in 0..state.a.dim() {
        let da = sp.derivative(&state.a.comps[c]);
        e += eps2 * sp.l2_norm(&state.dta.comps[c]).powi(2)
            + sp.l2_norm(&da).powi(2)
            + eps2 * state.lambda * sp.l2_norm(&state.a.comps[c]).powi(2);
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn sp() -> Spectral {
        Spectral::new(32, 3.0)
    }

    fn xs(sp: &Spectral) -> Vec<f64> {
        (0..sp.n).map(|i| i as f64 * sp.length / sp.n as f64).collect()
    }

    fn rand_field(sp: &Spectral, seed: u64) -> Vec<f64> {
        xs(sp)
            .iter()
            .map(|&x| {
                let k = 2.0 * PI / sp.length;
                (1..6)
                    .map(|m| ((seed as f64 + 1.3 * m as f64) * 0.77).sin() * (m as f64 * k * x + seed as f64).cos())
                    .sum::<f64>()
                    + 0.3
            })
            .collect()
    }

    #[test]
    fn poisson_single_mode_and_constant() {
        let s = sp();
        let k = 2.0 * PI / s.length;
        let rho: Vec<f64> = xs(&s).iter().map(|x| (k * x).cos()).collect();
        let phi = poisson_solve(&s, &rho);
        for (p, r) in phi.iter().zip(&rho) {
            assert!((p - r / (k * k)).abs() < 1e-14);
        }
        assert!(poisson_solve(&s, &[2.5; 32]).iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn poisson_residual() {
        let s = sp();
        let rho = rand_field(&s, 3);
        let phi = poisson_solve(&s, &rho);
        let lap = s.derivative_n(&phi, 2);
        let m = s.mean(&rho);
        let res: f64 = lap.iter().zip(&rho).map(|(l, r)| (l + r - m).powi(2)).sum::<f64>().sqrt();
        assert!(res < 1e-12);
        assert!(s.mean(&phi).abs() < 1e-15);
    }

    #[test]
    fn leray_examples() {
        let s = sp();
        let psi = rand_field(&s, 1);
        let grad = VectorField::new(vec![s.derivative(&psi), vec![0.0; s.n]]);
        assert!(leray_project(&s, &grad).max_abs() < 1e-13);
        let u = VectorField::new(vec![rand_field(&s, 2), rand_field(&s, 5)]);
        let pu = leray_project(&s, &u);
        let m = s.mean(&u.comps[0]);
        assert!(pu.comps[0].iter().all(|x| (x - m).abs() < 1e-15));
        assert_eq!(pu.comps[1], u.comps[1]);
        assert!(leray_project(&s, &pu).sub(&pu).max_abs() < 1e-15);
    }

    #[test]
    fn helmholtz_single_mode_and_errors() {
        let s = sp();
        let k = 2.0 * PI / s.length;
        let (eps, lam) = (0.3, 0.9);
        let src = VectorField::new(vec![vec![0.0; s.n], xs(&s).iter().map(|x| (k * x).cos()).collect()]);
        let out = helmholtz_solve(&s, &src, eps, lam).unwrap();
        for (o, i) in out.comps[1].iter().zip(&src.comps[1]) {
            assert!((o - i / (k * k + eps * eps * lam)).abs() < 1e-14);
        }
        let zero = VectorField::zeros(2, s.n);
        assert_eq!(helmholtz_solve(&s, &zero, eps, lam).unwrap(), zero);
        let c = VectorField::new(vec![vec![1.0; s.n]]);
        assert_eq!(helmholtz_solve(&s, &c, 0.0, 1.0), Err(Error::SingularMean));
        assert!(helmholtz_solve(&s, &c, 0.1, 2.0).is_err());
    }

    #[test]
    fn helmholtz_forward_residual() {
        let s = sp();
        let (eps, lam) = (0.2, 0.8);
        let src = VectorField::new(vec![rand_field(&s, 7), rand_field(&s, 8)]);
        let u = helmholtz_solve(&s, &src, eps, lam).unwrap();
        for c in 0..2 {
            let lap = s.derivative_n(&u.comps[c], 2);
            for i in 0..s.n {
                let r = -lap[i] + eps * eps * lam * u.comps[c][i] - src.comps[c][i];
                assert!(r.abs() < 1e-12 * u.max_abs(), "{r}");
            }
        }
    }

    fn single_mode_state(s: &Spectral, eps: f64) -> EMState {
        let k = 2.0 * PI / s.length;
        let mut st = EMState::zeros(2, s.n, eps, 0.9);
        st.a.comps[1] = xs(s).iter().map(|x| (k * x).cos()).collect();
        st.dta.comps[1] = xs(s).iter().map(|x| 0.4 * (k * x).sin()).collect();
        st
    }

    #[test]
    fn wave_zero_source_conserves_energy() {
        let s = sp();
        let mut st = single_mode_state(&s, 0.1);
        let e0 = wave_energy(&s, &st);
        let zero = VectorField::zeros(2, s.n);
        for _ in 0..1000 {
            st = wave_step(&s, &st, &zero, 0.037).unwrap();
        }
        assert!(((wave_energy(&s, &st) - e0) / e0).abs() < 1e-12);
    }

    #[test]
    fn wave_constant_source_closed_form() {
        let s = sp();
        let eps = 0.25;
        let lam = 0.9;
        let k = 2.0 * PI / s.length;
        let st = EMState::zeros(2, s.n, eps, lam);
        let src = VectorField::new(vec![vec![0.0; s.n], xs(&s).iter().map(|x| 0.7 * (k * x).cos()).collect()]);
        let t = 0.83;
        let out = wave_step(&s, &st, &src, t).unwrap();
        let w2 = (k * k + eps * eps * lam) / (eps * eps);
        for (i, x) in xs(&s).iter().enumerate() {
            let want = 0.7 * (k * x).cos() / (eps * eps * w2) * (1.0 - (w2.sqrt() * t).cos());
            assert!((out.a.comps[1][i] - want).abs() < 1e-13);
        }
    }

    // Oracle: Richardson slope against a fine-step reference for a source
    // varying in time, sampled at the step midpoint.
    #[test]
    fn wave_step_second_order_with_midpoint_source() {
        let s = Spectral::new(16, 2.0 * PI);
        let eps = 0.5;
        let run = |n: usize| {
            let dt = 2.0 / n as f64;
            let mut st = single_mode_state(&s, eps);
            for i in 0..n {
                let t = (i as f64 + 0.5) * dt;
                let src = VectorField::new(vec![
                    vec![0.0; s.n],
                    xs(&s).iter().map(|x| (x + t).sin() * (1.0 + t * t)).collect(),
                ]);
                st = wave_step(&s, &st, &src, dt).unwrap();
            }
            st.a.comps[1].clone()
        };
        let reference = run(4096);
        let err = |n: usize| run(n).iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let order = (err(64) / err(128)).log2();
        assert!(order > 1.8, "order {order}");
    }

    #[test]
    fn osc_factor_series_matches_closed_form() {
        for &(w2, t) in &[(1e-3, 0.5), (0.04, 0.49), (2.0, 0.07)] {
            let (c, s, c2) = osc_factors(w2, t);
            let w: f64 = w2.sqrt();
            assert!((c - (w * t).cos()).abs() < 1e-15);
            assert!((s - (w * t).sin() / w).abs() < 1e-15);
            assert!((c2 - (1.0 - (w * t).cos()) / w2).abs() < 1e-13);
        }
    }

    #[test]
    fn derived_fields_and_gauge() {
        let s = sp();
        let st = single_mode_state(&s, 0.2);
        let e = st.e_field(&s);
        for i in 0..s.n {
            assert!((e.comps[1][i] + 0.2 * st.dta.comps[1][i]).abs() < 1e-15);
        }
        let b = st.b_field(&s).unwrap();
        let k = 2.0 * PI / s.length;
        for (i, x) in xs(&s).iter().enumerate() {
            assert!((b[i] + k * (k * x).sin()).abs() < 1e-12);
        }
        assert!(st.gauge_residual(&s) < 1e-12);
    }

    proptest! {
        #[test]
        fn leray_idempotent_and_divergence_free(seed in 0u64..500) {
            let s = sp();
            let u = VectorField::new(vec![rand_field(&s, seed), rand_field(&s, seed + 1)]);
            let pu = leray_project(&s, &u);
            let div = s.derivative(&pu.comps[0]);
            prop_assert!(div.iter().all(|d| d.abs() < 1e-13));
            prop_assert!(leray_project(&s, &pu).sub(&pu).max_abs() < 1e-15);
        }
    }
}
