//! Split advection of a distribution: exact spectral shift in `x` with
//! velocity `vhat`, conservative semi-Lagrangian sweeps in `v` under
//! `F = E + eps vhat x B`.
//!
//! The `v`-step treats grid values as cell averages. For each direction the
//! primitive of `f` is interpolated by a clamped cubic spline, and the new
//! cell average is the mass between the backward feet of the two cell faces.
//! Boundary faces do not move, so the discrete mass is conserved exactly.
//! In the perturbation role the update is applied to `mu + delta f`, and the
//! `mu` contribution is integrated analytically over the traced interval.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::equilibria::{gamma, Equilibrium};
use crate::error::{invalid, Error, Result};
use crate::phase_space::{DistField, Role};
use crate::quad::{gauss_legendre_unit, SplineFactor};
use crate::spectral_fields::{EMState, Spectral, VectorField};

type C = Complex64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Strang,
    Lie,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VInterp {
    CubicSpline,
    Spectral,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitStepPlan {
    pub dt: f64,
    pub scheme: Scheme,
    pub v_interp: VInterp,
    /// Number of equal sub-steps of the `v`-step.
    pub substeps: usize,
}

impl SplitStepPlan {
    pub fn strang(dt: f64) -> Self {
        Self { dt, scheme: Scheme::Strang, v_interp: VInterp::CubicSpline, substeps: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return invalid(format!("dt must be positive, got {}", self.dt));
        }
        if self.substeps == 0 {
            return invalid("substeps must be >= 1");
        }
        if self.v_interp == VInterp::Spectral {
            return Err(Error::Unsupported("spectral v-interpolation is not conservative on a bounded v-grid".into()));
        }
        Ok(())
    }
}

/// Shift in `x` by `vhat_1(v) dt` at every velocity node; the Nyquist mode is
/// dropped.
pub fn advect_x(f: &DistField, eps: f64, dt: f64) -> DistField {
    let g = f.grid;
    let nx = g.n_x;
    let nv = g.n_vnodes();
    let d = g.dim_v();
    let sp = g.spectral();
    let cols: Vec<Vec<f64>> = (0..nv)
        .into_par_iter()
        .map(|iv| {
            let v = g.v.point(iv);
            let vh = v[0] / gamma(&v[..d], eps);
            let mut buf: Vec<C> = (0..nx).map(|ix| C::new(f.values[ix * nv + iv], 0.0)).collect();
            sp.forward_in_place(&mut buf);
            for (m, b) in buf.iter_mut().enumerate() {
                if sp.is_nyquist(m) {
                    *b = C::new(0.0, 0.0);
                } else {
                    *b *= C::from_polar(1.0, -sp.kappa(m) * vh * dt);
                }
            }
            sp.inverse_in_place(&mut buf);
            buf.iter().map(|c| c.re).collect()
        })
        .collect();
    let mut out = DistField::zeros(g, f.role);
    out.values.par_chunks_mut(nv).enumerate().for_each(|(ix, row)| {
        for (iv, r) in row.iter_mut().enumerate() {
            *r = cols[iv][ix];
        }
    });
    out
}

/// One conservative sweep along `axis` over time `dt` for a single line.
struct Sweep<'a> {
    spline: &'a SplineFactor,
    n: usize,
    h: f64,
    v0: f64,
    rule: &'a [(f64, f64)],
}

impl Sweep<'_> {
    /// `line` holds cell averages; `force(w)` is the force component along
    /// the line at coordinate `w`; `speed` multiplies it for the transport.
    /// `mu_line(w)` evaluates `mu` on the line in the perturbation role.
    fn apply(
        &self,
        line: &mut [f64],
        force: &dyn Fn(f64) -> f64,
        speed: f64,
        dt: f64,
        mu_line: Option<&dyn Fn(f64) -> f64>,
        prim: &mut [f64],
        m2: &mut [f64],
        fluxes: &mut [f64],
        mu_shift: &mut [f64],
    ) {
        let n = self.n;
        prim[0] = 0.0;
        for i in 0..n {
            prim[i + 1] = prim[i] + line[i] * self.h;
        }
        self.spline.second_derivatives(prim, m2);
        fluxes[0] = prim[0];
        fluxes[n] = prim[n];
        mu_shift.fill(0.0);
        for j in 1..n {
            let face = self.v0 + j as f64 * self.h;
            let mid = face - 0.5 * speed * dt * force(face);
            let dd = -dt * force(mid);
            let foot = face + speed * dd;
            fluxes[j] = self.spline.eval(prim, m2, self.v0, foot);
            if let Some(mu) = mu_line {
                let len = speed * dd;
                let avg: f64 = self.rule.iter().map(|&(x, w)| w * mu(face + x * len)).sum();
                mu_shift[j] = dd * avg;
            }
        }
        for i in 0..n {
            line[i] = (fluxes[i + 1] - fluxes[i] + mu_shift[i + 1] - mu_shift[i]) / self.h;
        }
    }
}

/// Velocity step under `E + eps vhat x B`. Full role: `f` is transported with
/// `F`. Perturbation role: `mu + delta f` is transported with `delta F` and
/// the result is mapped back to `f`; `eq` is required.
pub fn advect_v(
    f: &DistField,
    e: &VectorField,
    b3: Option<&[f64]>,
    eps: f64,
    delta: f64,
    dt: f64,
    eq: Option<&Equilibrium>,
) -> Result<DistField> {
    let g = f.grid;
    let d = g.dim_v();
    let nx = g.n_x;
    if e.dim() < d || e.len() != nx || b3.is_some_and(|b| b.len() != nx) {
        return Err(Error::GridMismatch("fields are not sampled on the x-grid".into()));
    }
    let (speed, eq) = match f.role {
        Role::Full => (1.0, None),
        Role::Perturbation => match eq {
            Some(eq) if eq.v_grid == g.v => (delta, Some(eq)),
            Some(_) => return Err(Error::GridMismatch("equilibrium velocity grid differs".into())),
            None => return Err(Error::RoleMismatch),
        },
    };
    let n = g.v.n;
    let h = g.v.h();
    let v0 = -g.v.v_max;
    let spline = SplineFactor::new(n, h);
    let rule = gauss_legendre_unit(4);
    let sweep = Sweep { spline: &spline, n, h, v0, rule: &rule };
    let nv = g.n_vnodes();
    let mut out = f.clone();
    out.values.par_chunks_mut(nv).enumerate().try_for_each(|(ix, row)| -> Result<()> {
        let e1 = e.comps[0][ix];
        let e2 = if d > 1 { e.comps[1][ix] } else { 0.0 };
        let b = b3.map_or(0.0, |b| b[ix]);
        let mut prim = vec![0.0; n + 1];
        let mut m2 = vec![0.0; n + 1];
        let mut fl = vec![0.0; n + 1];
        let mut ms = vec![0.0; n + 1];
        let mut line = vec![0.0; n];
        if d == 1 {
            let force = |_w: f64| e1;
            let mu = eq.map(|eq| move |w: f64| eq.eval(&[w]));
            sweep.apply(
                row,
                &force,
                speed,
                dt,
                mu.as_ref().map(|m| m as &dyn Fn(f64) -> f64),
                &mut prim,
                &mut m2,
                &mut fl,
                &mut ms,
            );
            return Ok(());
        }
        if d != 2 {
            return Err(Error::Unsupported("advect_v supports d_v = 1 or 2".into()));
        }
        let sweep1 = |row: &mut [f64],
                      tau: f64,
                      line: &mut Vec<f64>,
                      prim: &mut Vec<f64>,
                      m2: &mut Vec<f64>,
                      fl: &mut Vec<f64>,
                      ms: &mut Vec<f64>| {
            for i2 in 0..n {
                let v2 = g.v.node(i2);
                line.copy_from_slice(&row[i2 * n..(i2 + 1) * n]);
                let force = |w: f64| e1 + eps * b * v2 / gamma(&[w, v2], eps);
                let mu = eq.map(|eq| move |w: f64| eq.eval(&[w, v2]));
                sweep.apply(line, &force, speed, tau, mu.as_ref().map(|m| m as &dyn Fn(f64) -> f64), prim, m2, fl, ms);
                row[i2 * n..(i2 + 1) * n].copy_from_slice(line);
            }
        };
        sweep1(row, 0.5 * dt, &mut line, &mut prim, &mut m2, &mut fl, &mut ms);
        for i1 in 0..n {
            let v1 = g.v.node(i1);
            for i2 in 0..n {
                line[i2] = row[i2 * n + i1];
            }
            let force = |w: f64| e2 - eps * b * v1 / gamma(&[v1, w], eps);
            let mu = eq.map(|eq| move |w: f64| eq.eval(&[v1, w]));
            sweep.apply(
                &mut line,
                &force,
                speed,
                dt,
                mu.as_ref().map(|m| m as &dyn Fn(f64) -> f64),
                &mut prim,
                &mut m2,
                &mut fl,
                &mut ms,
            );
            for i2 in 0..n {
                row[i2 * n + i1] = line[i2];
            }
        }
        sweep1(row, 0.5 * dt, &mut line, &mut prim, &mut m2, &mut fl, &mut ms);
        Ok(())
    })?;
    Ok(out)
}

/// Split step with frozen fields taken from `em`:
/// Strang `X(dt/2) V(dt) X(dt/2)` or Lie `X(dt) V(dt)`.
pub fn strang_step(
    f: &DistField,
    em: &EMState,
    sp: &Spectral,
    plan: &SplitStepPlan,
    delta: f64,
    eq: Option<&Equilibrium>,
) -> Result<DistField> {
    plan.validate()?;
    let e = em.e_field(sp);
    let b = em.b_field(sp);
    let eps = em.eps;
    let vstep = |f: &DistField| -> Result<DistField> {
        let sub = plan.dt / plan.substeps as f64;
        let mut g = f.clone();
        for _ in 0..plan.substeps {
            g = advect_v(&g, &e, b.as_deref(), eps, delta, sub, eq)?;
        }
        Ok(g)
    };
    match plan.scheme {
        Scheme::Strang => {
            let h = advect_x(f, eps, 0.5 * plan.dt);
            let h = vstep(&h)?;
            Ok(advect_x(&h, eps, 0.5 * plan.dt))
        }
        Scheme::Lie => vstep(&advect_x(f, eps, plan.dt)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::Descriptor;
    use crate::phase_space::PhaseGrid;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn gauss(v: &[f64]) -> f64 {
        let r2: f64 = v.iter().map(|x| x * x).sum();
        (2.0 * PI).powf(-0.5 * v.len() as f64) * (-0.5 * r2).exp()
    }

    fn max_diff(a: &DistField, b: &DistField) -> f64 {
        a.values.iter().zip(&b.values).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn x_shift_single_mode_and_composition() {
        let g = PhaseGrid::new(32, 2.0 * PI, 1, 32, 6.0).unwrap();
        let f = DistField::from_fn(g, Role::Full, |x, v| x.cos() * gauss(v));
        let eps = 0.3;
        let out = advect_x(&f, eps, 0.7);
        let exact = DistField::from_fn(g, Role::Full, |x, v| {
            let vh = v[0] / gamma(v, eps);
            (x - vh * 0.7).cos() * gauss(v)
        });
        assert!(max_diff(&out, &exact) < 1e-13);
        let twice = advect_x(&advect_x(&f, eps, 0.35), eps, 0.35);
        assert!(max_diff(&twice, &out) < 1e-14);
        let flat = DistField::from_fn(g, Role::Full, |_, v| gauss(v));
        assert!(max_diff(&advect_x(&flat, eps, 1.3), &flat) < 1e-15);
        assert!((out.mass() - f.mass()).abs() < 1e-13);
    }

    #[test]
    fn zero_fields_are_identity_in_v() {
        let g = PhaseGrid::new(8, 1.0, 2, 16, 5.0).unwrap();
        let f = DistField::from_fn(g, Role::Full, |x, v| (1.0 + x) * gauss(v));
        let e = VectorField::zeros(2, 8);
        let out = advect_v(&f, &e, Some(&[0.0; 8]), 0.2, 1.0, 0.3, None).unwrap();
        assert!(max_diff(&out, &f) < 1e-15);
    }

    #[test]
    fn perturbation_role_needs_equilibrium() {
        let g = PhaseGrid::new(8, 1.0, 1, 16, 5.0).unwrap();
        let f = DistField::zeros(g, Role::Perturbation);
        let e = VectorField::zeros(1, 8);
        assert_eq!(advect_v(&f, &e, None, 0.0, 1.0, 0.1, None), Err(Error::RoleMismatch));
    }

    // Oracle: uniform E transports mu rigidly, f(t, v) = mu(v - E t).
    #[test]
    fn uniform_drift_converges_at_interpolation_order() {
        let err = |nv: usize| {
            let g = PhaseGrid::new(8, 1.0, 1, nv, 8.0).unwrap();
            let mut f = DistField::from_fn(g, Role::Full, |_, v| gauss(v));
            let e = VectorField::new(vec![vec![0.37; 8]]);
            for _ in 0..10 {
                f = advect_v(&f, &e, None, 0.0, 1.0, 0.1, None).unwrap();
            }
            let exact = DistField::from_fn(g, Role::Full, |_, v| gauss(&[v[0] - 0.37]));
            max_diff(&f, &exact)
        };
        let (a, b) = (err(64), err(128));
        assert!(a < 1e-3);
        assert!((a / b).log2() >= 2.5, "{a} {b}");
    }

    // Oracle: a pure magnetic field rotates v, so a radial profile is steady.
    #[test]
    fn magnetic_rotation_preserves_radial_profile() {
        let g = PhaseGrid::new(8, 1.0, 2, 192, 8.0).unwrap();
        let f0 = DistField::from_fn(g, Role::Full, |_, v| gauss(v));
        let e = VectorField::zeros(2, 8);
        let b = vec![1.0; 8];
        let mut f = f0.clone();
        for _ in 0..20 {
            f = advect_v(&f, &e, Some(&b), 0.5, 1.0, 0.05, None).unwrap();
        }
        let drift = (f.l2_norm() - f0.l2_norm()).abs() / f0.l2_norm();
        assert!(drift < 1e-6, "{drift}");
        assert!(max_diff(&f, &f0) < 1e-5);
        assert!((f.mass() - f0.mass()).abs() < 1e-13);
    }

    #[test]
    fn free_streaming_is_exact() {
        let g = PhaseGrid::new(32, 2.0 * PI, 2, 16, 6.0).unwrap();
        let f0 = DistField::from_fn(g, Role::Full, |x, v| (1.0 + 0.3 * (2.0 * x).sin()) * gauss(v));
        let em = EMState::zeros(2, 32, 0.4, 1.0);
        let sp = g.spectral();
        let plan = SplitStepPlan::strang(0.25);
        let mut f = f0.clone();
        for _ in 0..8 {
            f = strang_step(&f, &em, &sp, &plan, 1.0, None).unwrap();
        }
        let exact = DistField::from_fn(g, Role::Full, |x, v| {
            let vh = v[0] / gamma(v, 0.4);
            (1.0 + 0.3 * (2.0 * (x - 2.0 * vh)).sin()) * gauss(v)
        });
        assert!(max_diff(&f, &exact) < 1e-13);
    }

    #[test]
    fn strang_is_second_order_for_frozen_fields() {
        let g = PhaseGrid::new(16, 2.0 * PI, 1, 64, 8.0).unwrap();
        let eq = Equilibrium::new(Descriptor::Maxwellian { sigma: 1.0 }, g.v).unwrap();
        let sp = g.spectral();
        let mut em = EMState::zeros(1, 16, 0.0, 1.0);
        em.phi = (0..16).map(|i| 0.5 * g.x(i).sin()).collect();
        let f0 = DistField::from_fn(g, Role::Perturbation, |x, v| 0.5 * x.cos() * gauss(v));
        let run = |dt: f64| {
            let plan = SplitStepPlan::strang(dt);
            let mut f = f0.clone();
            for _ in 0..(1.0 / dt).round() as usize {
                f = strang_step(&f, &em, &sp, &plan, 0.5, Some(&eq)).unwrap();
            }
            f
        };
        let (a, b, c) = (run(0.1), run(0.05), run(0.025));
        let order = (max_diff(&a, &b) / max_diff(&b, &c)).log2();
        assert!(order >= 1.9, "order {order}");
    }

    #[test]
    fn zero_delta_equilibrium_is_fixed() {
        let g = PhaseGrid::new(8, 1.0, 2, 32, 8.0).unwrap();
        let eq = Equilibrium::new(Descriptor::Maxwellian { sigma: 1.0 }, g.v).unwrap();
        let f = DistField::zeros(g, Role::Perturbation);
        let e = VectorField::zeros(2, 8);
        let out = advect_v(&f, &e, Some(&[0.0; 8]), 0.1, 0.0, 0.1, Some(&eq)).unwrap();
        assert!(out.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn spectral_interp_is_rejected() {
        let mut p = SplitStepPlan::strang(0.1);
        p.v_interp = VInterp::Spectral;
        assert!(matches!(p.validate(), Err(Error::Unsupported(_))));
        p.v_interp = VInterp::CubicSpline;
        p.dt = 0.0;
        assert!(p.validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn v_step_conserves_mass(e1 in -2.0f64..2.0, e2 in -2.0f64..2.0, b in -3.0f64..3.0,
                                 eps in 0.0f64..0.5, delta in 0.0f64..1.0, dt in 0.01f64..0.5) {
            let g = PhaseGrid::new(8, 2.0 * PI, 2, 24, 8.0).unwrap();
            let eq = Equilibrium::new(Descriptor::Maxwellian { sigma: 1.0 }, g.v).unwrap();
            let f = DistField::from_fn(g, Role::Perturbation, |x, v| (x.cos() + 0.3 * v[1]) * gauss(v));
            let e = VectorField::new(vec![
                (0..8).map(|i| e1 * (1.0 + (i as f64).sin())).collect(),
                (0..8).map(|i| e2 * (i as f64).cos()).collect(),
            ]);
            let bb: Vec<f64> = (0..8).map(|i| b * (0.5 + (i as f64 * 0.7).cos())).collect();
            let out = advect_v(&f, &e, Some(&bb), eps, delta, dt, Some(&eq)).unwrap();
            prop_assert!((out.mass() - f.mass()).abs() < 1e-12 * f.abs_mass());
        }
    }
}
