//! Penrose stability symbol, stability margin and dispersion roots.
//!
//! With `z = gamma + i tau` and wavevector `kappa = 2 pi k / L` the classical
//! symbol is `1 + int_0^inf e^{-z s} s chi(kappa s) ds`, where
//! `chi(xi) = int mu e^{-i xi.v} dv`. A root at `z` is a mode `e^{-i omega t}`
//! with `omega = i z`, so `Im omega = gamma` is the growth rate.
//!
//! For `eps > 0` the symbol is rebuilt in the variable `p = vhat`:
//! in one velocity dimension `chi` is replaced by the transform of
//! `nu(p) = mu(v(p))`; in more dimensions the kernel is the transform of the
//! marginal of `U(p) = grad mu(v(p)) (1 - eps^2 |p|^2)^{-(d+2)/2}` along `kappa`.

use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::equilibria::Equilibrium;
use crate::error::{invalid, Error, Result};
use crate::quad::gregory_weights;

type C = Complex64;

const KERNEL_TOL: f64 = 1e-13;

/// Stability classification of an equilibrium.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Classification {
    Stable,
    Unstable,
    Marginal,
}

/// Root of the (continued) dispersion function.
#[derive(Clone, Debug, PartialEq)]
pub struct DispersionRoot {
    /// Wavevector `kappa` (physical units, not the integer index).
    pub kappa: Vec<f64>,
    /// Complex frequency: `Re` oscillation, `Im > 0` growth, `Im < 0` damping.
    pub omega: C,
    pub residual: f64,
}

impl DispersionRoot {
    pub fn growth_rate(&self) -> f64 {
        self.omega.im
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport {
    /// Minimum of `|symbol|` over the sampled grid.
    pub margin: f64,
    pub k_worst: Vec<f64>,
    pub classification: Classification,
    /// Right-half-plane roots certified by the winding count, per wavevector.
    pub roots: Vec<DispersionRoot>,
    /// Winding number of the symbol around the search rectangle, per wavevector.
    pub winding: Vec<(Vec<f64>, i64)>,
}

/// Kernel `K(s)` sampled on `[0, s_max]` for one wavevector, `eps > 0`.
#[derive(Clone, Debug)]
struct KernelTable {
    key: Vec<u64>,
    h: f64,
    values: Vec<C>,
}

/// Evaluator of the Penrose symbol for one equilibrium.
#[derive(Debug)]
pub struct PenroseSymbol<'a> {
    pub eq: &'a Equilibrium,
    /// Inverse speed of light; 0 selects the classical symbol.
    pub eps: f64,
    /// Fixed truncation of the Laplace integral; `None` chooses it from the
    /// decay of the kernel.
    pub s_max: Option<f64>,
    pub n_s: usize,
    /// Box length used to turn integer wavevectors into `kappa`.
    pub length: f64,
    /// Points per dimension of the `p`-quadrature for `eps > 0`.
    pub n_p: usize,
    cache: Mutex<Vec<Arc<KernelTable>>>,
}

impl<'a> PenroseSymbol<'a> {
    pub fn new(eq: &'a Equilibrium, eps: f64) -> Self {
        let n_p = match eq.dim_v {
            1 => 4096,
            2 => 512,
            _ => 96,
        };
        Self { eq, eps, s_max: None, n_s: 4096, length: 2.0 * PI, n_p, cache: Mutex::new(Vec::new()) }
    }

    pub fn with_length(mut self, length: f64) -> Self {
        self.length = length;
        self
    }

    /// `kappa = 2 pi k / L`, zero-padded to `d_v` components.
    pub fn kappa_of(&self, k: &[i64]) -> Result<Vec<f64>> {
        if k.iter().all(|&x| x == 0) {
            return Err(Error::ZeroMode);
        }
        if k.len() > self.eq.dim_v {
            return invalid(format!("wavevector {k:?} has more components than d_v = {}", self.eq.dim_v));
        }
        let mut out = vec![0.0; self.eq.dim_v];
        for (o, &x) in out.iter_mut().zip(k) {
            *o = 2.0 * PI * x as f64 / self.length;
        }
        Ok(out)
    }

    /// Symbol at `z = gamma + i tau` for integer wavevector `k`.
    pub fn symbol(&self, gamma: f64, tau: f64, k: &[i64]) -> Result<C> {
        if !(gamma > 0.0) {
            return invalid(format!("gamma must be > 0, got {gamma}"));
        }
        let kappa = self.kappa_of(k)?;
        self.symbol_at(C::new(gamma, tau), &kappa)
    }

    /// Symbol at complex `z` for a physical wavevector. For `eps = 0` the
    /// integral is entire in `z` and gives the continuation into `Re z <= 0`.
    pub fn symbol_at(&self, z: C, kappa: &[f64]) -> Result<C> {
        let kn = norm(kappa);
        if kn == 0.0 {
            return Err(Error::ZeroMode);
        }
        if self.eps == 0.0 {
            let g_neg = (-z.re).max(0.0);
            let kern = |s: f64| -> C {
                let xi: Vec<f64> = kappa.iter().map(|k| k * s).collect();
                self.eq.char_fn(&xi) * (-s)
            };
            let s_max = self.s_max.unwrap_or_else(|| self.decay_cutoff(&kern, g_neg, kn));
            Ok(C::new(1.0, 0.0) - laplace(&kern, z, s_max, self.n_s))
        } else {
            if z.re < 0.0 {
                return invalid("the relativistic symbol is evaluated for Re z >= 0 only");
            }
            let table = self.kernel_table(kappa)?;
            let n = table.values.len();
            let w = gregory_weights(n);
            let mut s = C::new(0.0, 0.0);
            for (i, kv) in table.values.iter().enumerate() {
                s += (-z * (i as f64 * table.h)).exp() * kv * w[i];
            }
            Ok(C::new(1.0, 0.0) - s * table.h)
        }
    }

    /// Smallest `s` past which `|K(s)| e^{g_neg s} < tol`, probing on a grid
    /// scaled by `1/|kappa|`.
    fn decay_cutoff(&self, kern: &dyn Fn(f64) -> C, g_neg: f64, kn: f64) -> f64 {
        let step = 0.25 / kn.max(1e-3);
        let mut s = step;
        let mut last_big = 0.0;
        let limit = 400.0 / kn.max(1e-3);
        while s < limit {
            if kern(s).norm() * (g_neg * s).exp() > KERNEL_TOL {
                last_big = s;
            } else if s > 2.0 * last_big + 8.0 * step {
                break;
            }
            s += step;
        }
        (last_big + 2.0 * step).max(8.0 * step)
    }

    /// Relativistic kernel `K(s)` for `kappa` along `e1`.
    fn kernel_table(&self, kappa: &[f64]) -> Result<Arc<KernelTable>> {
        if kappa.iter().skip(1).any(|&x| x != 0.0) {
            return Err(Error::Unsupported("relativistic symbol needs kappa along e1".into()));
        }
        let key: Vec<u64> = kappa.iter().map(|x| x.to_bits()).collect();
        {
            let cache = self.cache.lock().unwrap();
            if let Some(t) = cache.iter().find(|t| t.key == key) {
                return Ok(t.clone());
            }
        }
        let (p, dp, dens) = self.p_density(kappa[0] < 0.0);
        let kn = kappa[0].abs();
        let d1 = self.eq.dim_v == 1;
        let kern = |s: f64| -> C {
            let mut acc = C::new(0.0, 0.0);
            for (pi, di) in p.iter().zip(&dens) {
                acc += C::from_polar(*di, -kn * pi * s);
            }
            acc *= dp;
            if d1 {
                // K = -s nu_tilde(kappa s)
                acc * (-s)
            } else {
                acc * C::new(0.0, 1.0 / kn)
            }
        };
        let s_max = self.s_max.unwrap_or_else(|| self.decay_cutoff(&kern, 0.0, kn));
        let n = self.n_s;
        let h = s_max / (n - 1) as f64;
        let values: Vec<C> = (0..n).into_par_iter().map(|i| kern(i as f64 * h)).collect();
        let t = Arc::new(KernelTable { key, h, values });
        self.cache.lock().unwrap().push(t.clone());
        Ok(t)
    }

    /// Grid in `p_1` and the density to transform: `nu(p)` for `d_v = 1`,
    /// the marginal of `d_1 mu(v(p)) J(p)` otherwise. `flip` reverses the axis.
    fn p_density(&self, flip: bool) -> (Vec<f64>, f64, Vec<f64>) {
        let eps = self.eps;
        let d = self.eq.dim_v;
        let v_cut = self.eq.v_grid.v_max;
        let p_cut = v_cut / (1.0 + eps * eps * v_cut * v_cut).sqrt();
        let n = self.n_p;
        let dp = 2.0 * p_cut / n as f64;
        let p: Vec<f64> = (0..n).map(|i| -p_cut + (i as f64 + 0.5) * dp).collect();
        let sgn = if flip { -1.0 } else { 1.0 };
        let v_of = |q: &[f64]| -> Option<Vec<f64>> {
            let q2: f64 = q.iter().map(|x| x * x).sum();
            let r = 1.0 - eps * eps * q2;
            (r > 0.0).then(|| q.iter().map(|x| x / r.sqrt()).collect())
        };
        let jac = |q: &[f64]| -> f64 {
            let q2: f64 = q.iter().map(|x| x * x).sum();
            (1.0 - eps * eps * q2).powf(-((d + 2) as f64) / 2.0)
        };
        let dens: Vec<f64> = p
            .par_iter()
            .map(|&p1| {
                let p1 = sgn * p1;
                match d {
                    1 => v_of(&[p1]).map_or(0.0, |v| self.eq.eval(&v)),
                    2 => {
                        let mut s = 0.0;
                        for &p2 in &p {
                            let q = [p1, p2];
                            if let Some(v) = v_of(&q) {
                                s += sgn * self.eq.grad(&v)[0] * jac(&q);
                            }
                        }
                        s * dp
                    }
                    _ => {
                        let mut s = 0.0;
                        for &p2 in &p {
                            for &p3 in &p {
                                let q = [p1, p2, p3];
                                if let Some(v) = v_of(&q) {
                                    s += sgn * self.eq.grad(&v)[0] * jac(&q);
                                }
                            }
                        }
                        s * dp * dp
                    }
                }
            })
            .collect();
        (p, dp, dens)
    }

    /// Minimum of `|symbol|` over the grid, with argument-principle root
    /// counts on `[gamma_min, gamma_max] x [tau_min, tau_max]` per wavevector.
    pub fn stability_margin(
        &self,
        k_set: &[Vec<i64>],
        gamma_grid: &[f64],
        tau_grid: &[f64],
    ) -> Result<StabilityReport> {
        let kappas: Vec<Vec<f64>> = k_set.iter().map(|k| self.kappa_of(k)).collect::<Result<_>>()?;
        self.stability_margin_kappa(&kappas, gamma_grid, tau_grid, 1e-2)
    }

    /// As [`Self::stability_margin`] on physical wavevectors, with explicit
    /// tolerance below which a root-free scan is called marginal.
    pub fn stability_margin_kappa(
        &self,
        kappas: &[Vec<f64>],
        gamma_grid: &[f64],
        tau_grid: &[f64],
        tol_margin: f64,
    ) -> Result<StabilityReport> {
        if kappas.is_empty() || gamma_grid.is_empty() || tau_grid.is_empty() {
            return invalid("stability_margin: empty grid");
        }
        if gamma_grid.iter().any(|&g| !(g > 0.0)) {
            return invalid("stability_margin: gamma grid must be strictly positive");
        }
        let mut margin = f64::INFINITY;
        let mut k_worst = kappas[0].clone();
        let mut roots = Vec::new();
        let mut winding = Vec::new();
        for kappa in kappas {
            let cells: Vec<(f64, f64)> =
                gamma_grid.iter().flat_map(|&g| tau_grid.iter().map(move |&t| (g, t))).collect();
            let vals: Vec<f64> = cells
                .par_iter()
                .map(|&(g, t)| self.symbol_at(C::new(g, t), kappa).map(|s| s.norm()))
                .collect::<Result<_>>()?;
            let m = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            if m < margin {
                margin = m;
                k_worst = kappa.clone();
            }
            let g_lo = gamma_grid.iter().cloned().fold(f64::INFINITY, f64::min);
            let g_hi = gamma_grid.iter().cloned().fold(0.0, f64::max).max(g_lo * 2.0);
            let t_lo = tau_grid.iter().cloned().fold(f64::INFINITY, f64::min);
            let t_hi = tau_grid.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let w = self.winding_number(kappa, (g_lo, g_hi), (t_lo, t_hi))?;
            winding.push((kappa.clone(), w));
            if w > 0 {
                let found = self.refine_roots(kappa, (g_lo, g_hi), (t_lo, t_hi), 24, 48)?;
                roots.extend(found.into_iter().filter(|r| r.omega.im > 0.0));
            }
        }
        let classification = if winding.iter().any(|(_, w)| *w > 0) {
            Classification::Unstable
        } else if margin < tol_margin {
            Classification::Marginal
        } else {
            Classification::Stable
        };
        Ok(StabilityReport { margin, k_worst, classification, roots, winding })
    }

    /// Number of zeros inside the rectangle, by tracking the argument along
    /// its boundary with adaptive refinement.
    pub fn winding_number(&self, kappa: &[f64], gamma: (f64, f64), tau: (f64, f64)) -> Result<i64> {
        let corners = [C::new(gamma.0, tau.0), C::new(gamma.1, tau.0), C::new(gamma.1, tau.1), C::new(gamma.0, tau.1)];
        let mut total = 0.0;
        for e in 0..4 {
            let a = corners[e];
            let b = corners[(e + 1) % 4];
            total += self.arg_change(kappa, a, b, 0)?;
        }
        Ok((total / (2.0 * PI)).round() as i64)
    }

    fn arg_change(&self, kappa: &[f64], a: C, b: C, depth: usize) -> Result<f64> {
        let n = 64;
        let mut vals = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let z = a + (b - a) * (i as f64 / n as f64);
            vals.push(self.symbol_at(z, kappa)?);
        }
        let mut total = 0.0;
        for i in 0..n {
            let d = (vals[i + 1] / vals[i]).arg();
            if d.abs() > PI / 4.0 && depth < 6 {
                let za = a + (b - a) * (i as f64 / n as f64);
                let zb = a + (b - a) * ((i + 1) as f64 / n as f64);
                total += self.arg_change(kappa, za, zb, depth + 1)?;
            } else {
                total += d;
            }
        }
        Ok(total)
    }

    /// Local minima of `|symbol|` on a coarse grid, refined by the secant
    /// method; roots with residual below 1e-8 are returned, deduplicated and
    /// sorted by decreasing growth rate.
    pub fn refine_roots(
        &self,
        kappa: &[f64],
        gamma: (f64, f64),
        tau: (f64, f64),
        ng: usize,
        nt: usize,
    ) -> Result<Vec<DispersionRoot>> {
        let gz: Vec<f64> = (0..=ng).map(|i| gamma.0 + (gamma.1 - gamma.0) * i as f64 / ng as f64).collect();
        let tz: Vec<f64> = (0..=nt).map(|i| tau.0 + (tau.1 - tau.0) * i as f64 / nt as f64).collect();
        let cells: Vec<(usize, usize)> = (0..=ng).flat_map(|i| (0..=nt).map(move |j| (i, j))).collect();
        let vals: Vec<f64> = cells
            .par_iter()
            .map(|&(i, j)| self.symbol_at(C::new(gz[i], tz[j]), kappa).map(|s| s.norm()))
            .collect::<Result<_>>()?;
        let at = |i: usize, j: usize| vals[i * (nt + 1) + j];
        let mut seeds = Vec::new();
        for i in 0..=ng {
            for j in 0..=nt {
                let v = at(i, j);
                let mut is_min = true;
                for (di, dj) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                    let (ii, jj) = (i as i64 + di, j as i64 + dj);
                    if ii < 0 || jj < 0 || ii > ng as i64 || jj > nt as i64 {
                        continue;
                    }
                    if at(ii as usize, jj as usize) < v {
                        is_min = false;
                    }
                }
                if is_min && v < 0.5 {
                    seeds.push(C::new(gz[i], tz[j]));
                }
            }
        }
        let step = C::new((gamma.1 - gamma.0) / ng as f64, (tau.1 - tau.0) / nt as f64).norm() * 0.1;
        let mut roots: Vec<DispersionRoot> = Vec::new();
        for z0 in seeds {
            if let Some((z, res)) = self.secant(kappa, z0, z0 + step)? {
                if roots.iter().all(|r| (r.omega - C::new(0.0, 1.0) * z).norm() > 1e-6) {
                    roots.push(DispersionRoot { kappa: kappa.to_vec(), omega: C::new(0.0, 1.0) * z, residual: res });
                }
            }
        }
        roots.sort_by(|a, b| b.omega.im.partial_cmp(&a.omega.im).unwrap());
        Ok(roots)
    }

    fn secant(&self, kappa: &[f64], mut z0: C, mut z1: C) -> Result<Option<(C, f64)>> {
        if self.eps > 0.0 && (z0.re < 0.0 || z1.re < 0.0) {
            return Ok(None);
        }
        let mut f0 = self.symbol_at(z0, kappa)?;
        let mut f1 = self.symbol_at(z1, kappa)?;
        for _ in 0..60 {
            let den = f1 - f0;
            if den.norm() == 0.0 {
                break;
            }
            let z2 = z1 - f1 * (z1 - z0) / den;
            if !z2.re.is_finite() || (self.eps > 0.0 && z2.re < 0.0) {
                return Ok(None);
            }
            z0 = z1;
            f0 = f1;
            z1 = z2;
            f1 = self.symbol_at(z1, kappa)?;
            if f1.norm() < 1e-12 || (z1 - z0).norm() < 1e-14 {
                break;
            }
        }
        let res = f1.norm();
        Ok((res < 1e-8).then_some((z1, res)))
    }

    /// Roots nearest the real `omega` axis for integer wavevector `k`.
    pub fn dispersion_roots(&self, k: &[i64]) -> Result<Vec<DispersionRoot>> {
        let kappa = self.kappa_of(k)?;
        self.dispersion_roots_kappa(&kappa)
    }

    /// Roots in the window `Im omega in [-1.5, 5]`, `|Re omega| <= 12`
    /// (classical) or `Im omega in [1e-3, 5]` (relativistic).
    pub fn dispersion_roots_kappa(&self, kappa: &[f64]) -> Result<Vec<DispersionRoot>> {
        if norm(kappa) == 0.0 {
            return Err(Error::ZeroMode);
        }
        let g_lo = if self.eps == 0.0 { -1.5 } else { 1e-3 };
        self.refine_roots(kappa, (g_lo, 5.0), (-12.0, 12.0), 65, 192)
    }
}

fn norm(k: &[f64]) -> f64 {
    k.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `int_0^{s_max} e^{-z s} K(s) ds`, trapezoid with Gregory end corrections.
fn laplace(kern: &dyn Fn(f64) -> C, z: C, s_max: f64, n: usize) -> C {
    let w = gregory_weights(n);
    let h = s_max / (n - 1) as f64;
    let mut s = C::new(0.0, 0.0);
    for (i, wi) in w.iter().enumerate() {
        let t = i as f64 * h;
        s += (-z * t).exp() * kern(t) * *wi;
    }
    s * h
}
