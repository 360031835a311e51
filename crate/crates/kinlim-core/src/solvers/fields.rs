//! Instantaneous fields of a distribution for each model, and the time
//! derivative of the shifted moments that drives `d_t A`.
//!
//! With `g = f - eps A . grad mu` the perturbation Vlasov equation gives,
//! for any weight `w(v)`,
//! `d_t int w g = -d_x int w vhat_1 f + d_x phi int w d_1 mu
//!   - eps B3 int w (vhat_2 d_1 mu - vhat_1 d_2 mu) + delta int (grad w . F) f`.
//! `d_t A` enters only through `F` in the last term, which is resolved by a
//! short fixed-point iteration.

use num_complex::Complex64;

use crate::equilibria::{gamma, Equilibrium};
use crate::error::{Error, Result};
use crate::phase_space::{deposit_moments, weighted_moments, DistField, MomentSet, PhaseGrid};
use crate::spectral_fields::{build_hierarchy, oscillator, poisson_solve, DarwinHierarchy, EMState, Spectral};

use super::Model;

type C = Complex64;

/// Evolved electromagnetic variables that are not slaved to `f`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmVars {
    /// Spatial means of `A` and `d_t A`, per component.
    pub mean_a: [f64; 2],
    pub mean_da: [f64; 2],
    /// Spectrum of the radiative remainder `A2 - A_1` (VM only).
    pub rad: Vec<C>,
    pub drad: Vec<C>,
    /// Last transverse `d_t A` spectrum, the fixed-point starting guess.
    pub da_guess: Vec<C>,
}

impl EmVars {
    pub fn zeros(n: usize) -> Self {
        let z = vec![C::new(0.0, 0.0); n];
        Self { mean_a: [0.0; 2], mean_da: [0.0; 2], rad: z.clone(), drad: z.clone(), da_guess: z }
    }
}

/// Fields evaluated from `f` and the evolved variables.
#[derive(Clone, Debug)]
pub struct Instant {
    pub moments: MomentSet,
    pub em: EMState,
    /// Transverse spectra of the hierarchy levels `A_j` and their `d_t`.
    pub a_levels: Vec<Vec<C>>,
    pub da_levels: Vec<Vec<C>>,
}

struct DtTables {
    wv1: Vec<usize>,
    grad_tables: Vec<[Vec<f64>; 3]>,
    c1: Vec<f64>,
    cb: Vec<f64>,
}

/// Field evaluator for one model on one grid.
pub struct FieldModel<'a> {
    pub model: Model,
    /// `eps` of the field equations and of `vhat` (0 for VP).
    pub eps: f64,
    pub delta: f64,
    pub eq: &'a Equilibrium,
    pub grid: PhaseGrid,
    pub sp: Spectral,
    pub hier: Option<DarwinHierarchy>,
    pub max_ell: usize,
    tables: Option<DtTables>,
}

impl<'a> FieldModel<'a> {
    pub fn new(model: Model, eps: f64, delta: f64, eq: &'a Equilibrium, grid: PhaseGrid) -> Result<Self> {
        let sp = grid.spectral();
        let d = grid.dim_v();
        let eps = if model == Model::VP { 0.0 } else { eps };
        let levels = match model {
            Model::VP => 0,
            Model::VM => 1,
            Model::VD(n) => n,
        };
        if d == 1 && matches!(model, Model::VD(_)) {
            return Err(Error::Unsupported("the Darwin models need d_v = 2".into()));
        }
        let (hier, tables, max_ell) = if d == 2 && levels > 0 {
            let h = build_hierarchy(eq, eps, levels, &sp)?;
            let t = dt_tables(eq, eps, levels);
            (Some(h), Some(t), 2 * levels)
        } else {
            (None, None, 1)
        };
        Ok(Self { model, eps, delta, eq, grid, sp, hier, max_ell, tables })
    }

    pub fn lambda_t(&self) -> f64 {
        self.hier.as_ref().map_or(0.0, |h| h.lambda_t)
    }

    fn transverse_kappa2(&self, m: usize) -> Option<f64> {
        if m == 0 || self.sp.is_nyquist(m) {
            None
        } else {
            let k = self.sp.kappa(m);
            Some(k * k)
        }
    }

    pub(super) fn em_state(&self, phi: Vec<f64>, vars: &EmVars, a_hat: &[C], da_hat: &[C]) -> EMState {
        let n = self.grid.n_x;
        let d = self.grid.dim_v();
        let lambda = self.eq.moment_constants(self.eps).map(|m| m.lambda).unwrap_or(1.0);
        let mut em = EMState::zeros(d, n, self.eps, lambda.max(f64::MIN_POSITIVE));
        em.phi = phi;
        if self.model == Model::VP {
            return em;
        }
        em.a.comps[0] = vec![vars.mean_a[0]; n];
        em.dta.comps[0] = vec![vars.mean_da[0]; n];
        if d == 2 {
            let mut ah = a_hat.to_vec();
            let mut dh = da_hat.to_vec();
            ah[0] = C::new(vars.mean_a[1], 0.0);
            dh[0] = C::new(vars.mean_da[1], 0.0);
            em.a.comps[1] = self.sp.inverse(&ah);
            em.dta.comps[1] = self.sp.inverse(&dh);
        }
        em
    }

    /// Fields of `f` given the evolved variables.
    pub fn instant(&self, f: &DistField, vars: &EmVars) -> Result<Instant> {
        let moments = deposit_moments(f, self.eps, self.max_ell)?;
        let phi = poisson_solve(&self.sp, &moments.rho);
        let n = self.grid.n_x;
        let zero = vec![C::new(0.0, 0.0); n];
        let Some(h) = self.hier.as_ref() else {
            let em = self.em_state(phi, vars, &zero, &zero);
            return Ok(Instant { moments, em, a_levels: Vec::new(), da_levels: Vec::new() });
        };
        let eps = self.eps;
        let j2 = self.sp.forward(&moments.j[1]);
        let ms: Vec<Vec<C>> = (0..h.n)
            .map(|j| if j == 0 { zero.clone() } else { self.sp.forward(moments.component(2 * j + 1, 1)) })
            .collect();
        let mut a_levels: Vec<Vec<C>> = match self.model {
            Model::VM => {
                let lt = h.lambda_t;
                let a1 = (0..n)
                    .map(|m| match self.transverse_kappa2(m) {
                        Some(k2) => (j2[m] * eps + vars.rad[m] * (eps * eps * lt)) / k2,
                        None => C::new(0.0, 0.0),
                    })
                    .collect();
                vec![a1]
            }
            _ => transpose(h.potentials_from_f_spectra(&j2, &ms), h.n, n),
        };
        for lvl in a_levels.iter_mut() {
            for m in 0..n {
                if self.transverse_kappa2(m).is_none() {
                    lvl[m] = C::new(0.0, 0.0);
                }
            }
        }
        let mut a_hat = sum_levels(&a_levels, n);
        if self.model == Model::VM {
            for m in 0..n {
                a_hat[m] += vars.rad[m];
            }
        }
        let mut da_hat = vars.da_guess.clone();
        let iters = if self.delta == 0.0 { 1 } else { 3 };
        let mut da_levels = Vec::new();
        for _ in 0..iters {
            let em = self.em_state(phi.clone(), vars, &a_hat, &da_hat);
            let (dj2, dms) = self.dt_g_spectra(f, &moments, &em)?;
            da_levels = transpose(h.potentials_from_g_spectra(&dj2, &dms), h.n, n);
            da_hat = sum_levels(&da_levels, n);
            for m in 0..n {
                if self.transverse_kappa2(m).is_none() {
                    da_hat[m] = C::new(0.0, 0.0);
                } else if self.model == Model::VM {
                    da_hat[m] += vars.drad[m];
                }
            }
        }
        let em = self.em_state(phi, vars, &a_hat, &da_hat);
        Ok(Instant { moments, em, a_levels, da_levels })
    }

    /// Spectra of `d_t j2(g)` and `d_t m_{2j+1}(g)` (one transverse index),
    /// `j = 1..N-1`, with `g` shifted by the total potential of `em`.
    pub fn dt_g_spectra(&self, f: &DistField, moments: &MomentSet, em: &EMState) -> Result<(Vec<C>, Vec<Vec<C>>)> {
        let t = self.tables.as_ref().ok_or_else(|| Error::Unsupported("no transverse field model".into()))?;
        let sp = &self.sp;
        let n = self.grid.n_x;
        let levels = t.c1.len();
        let dphi = sp.derivative(&em.phi);
        let e = em.e_field(sp);
        let b = em.b_field(sp).unwrap_or_else(|| vec![0.0; n]);
        let fmom = if self.delta != 0.0 {
            let flat: Vec<&[f64]> = t.grad_tables.iter().flat_map(|g| g.iter().map(|x| x.as_slice())).collect();
            Some(weighted_moments(f, &flat))
        } else {
            None
        };
        let mut out = Vec::with_capacity(levels);
        for j in 0..levels {
            let flux = sp.derivative(moments.component(t.wv1[j], 1));
            let mut s = vec![0.0; n];
            for ix in 0..n {
                s[ix] = -flux[ix] + dphi[ix] * t.c1[j] - self.eps * b[ix] * t.cb[j];
                if let Some(fm) = &fmom {
                    let (g1, g2, gr) = (&fm[3 * j], &fm[3 * j + 1], &fm[3 * j + 2]);
                    s[ix] +=
                        self.delta * (e.comps[0][ix] * g1[ix] + e.comps[1][ix] * g2[ix] + self.eps * b[ix] * gr[ix]);
                }
            }
            out.push(sp.forward(&s));
        }
        let dj2 = out[0].clone();
        let mut dms = out;
        dms[0] = vec![C::new(0.0, 0.0); n];
        Ok((dj2, dms))
    }

    /// Exact flow of the evolved variables over `t` with frozen sources:
    /// means under `eps^2 <A''> = eps <j(f)>`, the remainder under
    /// `eps^2 R'' + (kappa^2 + eps^2 Lambda_22) R = c`.
    pub fn wave_flow(&self, vars: &mut EmVars, mean_j: [f64; 2], c: &[C], t: f64) {
        if self.model == Model::VP {
            return;
        }
        let eps2 = self.eps * self.eps;
        for i in 0..self.grid.dim_v().min(2) {
            let (a, da) = oscillator(vars.mean_a[i], vars.mean_da[i], self.eps * mean_j[i], 0.0, eps2, t);
            vars.mean_a[i] = a;
            vars.mean_da[i] = da;
        }
        if self.model != Model::VM || self.hier.is_none() {
            return;
        }
        let lt = self.lambda_t();
        for m in 0..self.grid.n_x {
            match self.transverse_kappa2(m) {
                Some(k2) => {
                    let w2 = (k2 + eps2 * lt) / eps2;
                    let (a, da) = oscillator(vars.rad[m], vars.drad[m], c[m], w2, eps2, t);
                    vars.rad[m] = a;
                    vars.drad[m] = da;
                }
                None => {
                    vars.rad[m] = C::new(0.0, 0.0);
                    vars.drad[m] = C::new(0.0, 0.0);
                }
            }
        }
    }

    /// Response of the remainder to a constant source `c` from rest over `t`.
    pub fn remainder_response(&self, c: &[C], t: f64) -> (Vec<C>, Vec<C>) {
        let eps2 = self.eps * self.eps;
        let lt = self.lambda_t();
        let zero = C::new(0.0, 0.0);
        (0..self.grid.n_x)
            .map(|m| match self.transverse_kappa2(m) {
                Some(k2) => oscillator(zero, zero, c[m], (k2 + eps2 * lt) / eps2, eps2, t),
                None => (zero, zero),
            })
            .unzip()
    }
}

fn transpose(per_mode: Vec<Vec<C>>, levels: usize, n: usize) -> Vec<Vec<C>> {
    (0..levels).map(|j| (0..n).map(|m| per_mode[m][j]).collect()).collect()
}

fn sum_levels(levels: &[Vec<C>], n: usize) -> Vec<C> {
    let mut s = vec![C::new(0.0, 0.0); n];
    for l in levels {
        for (a, b) in s.iter_mut().zip(l) {
            *a += b;
        }
    }
    s
}

/// Weight tables for the moment time derivative at levels `j = 0..levels`,
/// with `w_j = vhat_1^{2j} vhat_2`.
fn dt_tables(eq: &Equilibrium, eps: f64, levels: usize) -> DtTables {
    let vg = eq.v_grid;
    let vol = vg.cell_volume();
    let mut grad_tables = Vec::with_capacity(levels);
    let mut c1 = vec![0.0; levels];
    let mut cb = vec![0.0; levels];
    for j in 0..levels {
        let a = 2 * j;
        let mut t1 = Vec::with_capacity(vg.len());
        let mut t2 = Vec::with_capacity(vg.len());
        let mut tr = Vec::with_capacity(vg.len());
        for iv in 0..vg.len() {
            let p = vg.point(iv);
            let v = [p[0], p[1]];
            let g = gamma(&v, eps);
            let vh = [v[0] / g, v[1] / g];
            let jac = |i: usize, k: usize| (if i == k { 1.0 / g } else { 0.0 }) - eps * eps * v[i] * v[k] / (g * g * g);
            let p1 = |e: usize| if e == 0 { 1.0 } else { vh[0].powi(e as i32) };
            let dw = |k: usize| {
                let d1 = if a == 0 { 0.0 } else { a as f64 * p1(a - 1) * vh[1] * jac(0, k) };
                d1 + p1(a) * jac(1, k)
            };
            let (d1w, d2w) = (dw(0), dw(1));
            t1.push(d1w);
            t2.push(d2w);
            tr.push(vh[1] * d1w - vh[0] * d2w);
            let w = p1(a) * vh[1];
            let gr = eq.grad(&v);
            c1[j] += w * gr[0] * vol;
            cb[j] += w * (vh[1] * gr[0] - vh[0] * gr[1]) * vol;
        }
        grad_tables.push([t1, t2, tr]);
    }
    DtTables { wv1: (0..levels).map(|j| 2 * j + 2).collect(), grad_tables, c1, cb }
}
