//! Scaling maps between speeds of light and a discrete residual of the full
//! system used to check them.
//!
//! Both maps act on full-f snapshots by relabelling the grid, so a snapshot
//! at `eps` becomes an exact grid sample of a solution at `lambda eps`:
//! - velocity: `F' = lambda^(d-2) F(t/lambda, x, lambda v)`, fields `lambda^-2`;
//! - space-time: `F' = lambda^(d-6) F(t/lambda^3, x/lambda^2, lambda v)`,
//!   fields `lambda^-4`.

use crate::equilibria::gamma;
use crate::error::{invalid, Error, Result};
use crate::phase_space::{DistField, PhaseGrid, Role};
use crate::spectral_fields::{Spectral, VectorField};

use super::Snapshot;

/// Full distribution `F = mu + delta f` with fields `delta E`, `delta B`.
#[derive(Clone, Debug, PartialEq)]
pub struct FullSnapshot {
    pub t: f64,
    pub eps: f64,
    pub f: DistField,
    pub e: VectorField,
    /// `B3`, zero for `d_v = 1`.
    pub b: Vec<f64>,
}

impl FullSnapshot {
    pub fn from_perturbation(s: &Snapshot, eq: &crate::equilibria::Equilibrium, delta: f64) -> Result<Self> {
        let grid = s.f.grid;
        let sp = grid.spectral();
        let mu = DistField::from_equilibrium(grid, eq)?;
        let mut f = mu.lincomb(1.0, &s.f, delta);
        f.role = Role::Full;
        let e = s.em.e_field(&sp).scaled(delta);
        let b = s.em.b_field(&sp).map_or(vec![0.0; grid.n_x], |b| b.iter().map(|x| delta * x).collect());
        Ok(Self { t: s.t, eps: s.em.eps, f, e, b })
    }
}

fn rescale(
    s: &FullSnapshot,
    lambda: f64,
    x_factor: f64,
    t_factor: f64,
    f_exp: i32,
    field_exp: i32,
) -> Result<FullSnapshot> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return invalid("lambda must be positive");
    }
    let g = s.f.grid;
    let d = g.dim_v();
    let grid = PhaseGrid::new(g.n_x, g.length * x_factor, d, g.v.n, g.v.v_max / lambda)?;
    let af = lambda.powi(d as i32 + f_exp);
    let ae = lambda.powi(field_exp);
    let f = DistField { grid, values: s.f.values.iter().map(|x| af * x).collect(), role: s.f.role };
    Ok(FullSnapshot {
        t: s.t * t_factor,
        eps: s.eps * lambda,
        f,
        e: s.e.scaled(ae),
        b: s.b.iter().map(|x| ae * x).collect(),
    })
}

/// Velocity scaling: `eps -> lambda eps`, `t -> lambda t`, `v -> v/lambda`.
pub fn rescale_velocity(s: &FullSnapshot, lambda: f64) -> Result<FullSnapshot> {
    rescale(s, lambda, 1.0, lambda, -2, -2)
}

/// Space-time scaling: `eps -> lambda eps`, `t -> lambda^3 t`,
/// `x -> lambda^2 x`, `v -> v/lambda`.
pub fn rescale_spacetime(s: &FullSnapshot, lambda: f64) -> Result<FullSnapshot> {
    rescale(s, lambda, lambda * lambda, lambda.powi(3), -6, -4)
}

/// Relative residuals of the full system at the middle of three equally
/// spaced snapshots, each normalized by the sum of its term norms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualReport {
    pub vlasov: f64,
    pub faraday: f64,
    pub ampere_transverse: f64,
    pub ampere_longitudinal: f64,
    pub gauss: f64,
}

impl ResidualReport {
    pub fn max(&self) -> f64 {
        [self.vlasov, self.faraday, self.ampere_transverse, self.ampere_longitudinal, self.gauss]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

fn l2(u: &[f64]) -> f64 {
    u.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn relative(terms: &[&[f64]]) -> f64 {
    let n = terms[0].len();
    let r: Vec<f64> = (0..n).map(|i| terms.iter().map(|t| t[i]).sum()).collect();
    let scale: f64 = terms.iter().map(|t| l2(t)).sum();
    if scale == 0.0 {
        0.0
    } else {
        l2(&r) / scale
    }
}

/// Fourth-order centred derivative along velocity axis `axis` (zero at the
/// two outermost node layers).
fn v_derivative(f: &DistField, axis: usize) -> Vec<f64> {
    let g = f.grid;
    let n = g.v.n;
    let h = g.v.h();
    let nv = g.n_vnodes();
    let stride = if axis == 0 { 1 } else { n };
    let mut out = vec![0.0; f.values.len()];
    for ix in 0..g.n_x {
        let row = &f.values[ix * nv..(ix + 1) * nv];
        for iv in 0..nv {
            let i = if axis == 0 { iv % n } else { iv / n };
            if i < 2 || i + 2 >= n {
                continue;
            }
            let at = |o: isize| row[(iv as isize + o * stride as isize) as usize];
            out[ix * nv + iv] = (at(-2) - 8.0 * at(-1) + 8.0 * at(1) - at(2)) / (12.0 * h);
        }
    }
    out
}

fn x_derivative(f: &DistField, sp: &Spectral) -> Vec<f64> {
    let g = f.grid;
    let nv = g.n_vnodes();
    let mut out = vec![0.0; f.values.len()];
    for iv in 0..nv {
        let col: Vec<f64> = (0..g.n_x).map(|ix| f.values[ix * nv + iv]).collect();
        for (ix, d) in sp.derivative(&col).into_iter().enumerate() {
            out[ix * nv + iv] = d;
        }
    }
    out
}

/// Residual of the system at `eps = s[1].eps` on the snapshots `s`.
/// With `target_length`, the box length must match it.
pub fn system_residual(s: [&FullSnapshot; 3], target_length: Option<f64>) -> Result<ResidualReport> {
    let g = s[1].f.grid;
    for o in [s[0], s[2]] {
        if o.f.grid != g || o.eps != s[1].eps {
            return Err(Error::GridMismatch("snapshots differ in grid or eps".into()));
        }
    }
    if let Some(l) = target_length {
        if (l - g.length).abs() > 1e-12 * l {
            return Err(Error::GridMismatch(format!("box length {} does not match the target {l}", g.length)));
        }
    }
    let dt = s[1].t - s[0].t;
    if !(dt > 0.0) || ((s[2].t - s[1].t) - dt).abs() > 1e-9 * dt {
        return invalid("snapshots must be equally spaced in time");
    }
    let eps = s[1].eps;
    let d = g.dim_v();
    let n = g.n_x;
    let nv = g.n_vnodes();
    let sp = g.spectral();
    let f = &s[1].f;
    let dtf: Vec<f64> = s[2].f.values.iter().zip(&s[0].f.values).map(|(a, b)| (a - b) / (2.0 * dt)).collect();
    let dxf = x_derivative(f, &sp);
    let dv: Vec<Vec<f64>> = (0..d).map(|a| v_derivative(f, a)).collect();
    let mut stream = vec![0.0; f.values.len()];
    let mut force = vec![0.0; f.values.len()];
    let (e, b) = (&s[1].e, &s[1].b);
    let mut rho = vec![0.0; n];
    let mut j = vec![vec![0.0; n]; d];
    let vol = g.v.cell_volume();
    for ix in 0..n {
        for iv in 0..nv {
            let p = g.v.point(iv);
            let gm = gamma(&p[..d], eps);
            let k = ix * nv + iv;
            let vh1 = p[0] / gm;
            stream[k] = vh1 * dxf[k];
            rho[ix] += f.values[k] * vol;
            j[0][ix] += vh1 * f.values[k] * vol;
            if d == 1 {
                force[k] = e.comps[0][ix] * dv[0][k];
            } else {
                let vh2 = p[1] / gm;
                j[1][ix] += vh2 * f.values[k] * vol;
                force[k] =
                    (e.comps[0][ix] + eps * vh2 * b[ix]) * dv[0][k] + (e.comps[1][ix] - eps * vh1 * b[ix]) * dv[1][k];
            }
        }
    }
    let vlasov = relative(&[&dtf, &stream, &force]);
    let mean_rho = sp.mean(&rho);
    let drho: Vec<f64> = rho.iter().map(|r| -(r - mean_rho)).collect();
    let gauss = relative(&[&sp.derivative(&e.comps[0]), &drho]);
    let de1: Vec<f64> = (0..n).map(|i| (s[2].e.comps[0][i] - s[0].e.comps[0][i]) / (2.0 * dt)).collect();
    let ampere_longitudinal = relative(&[&de1, &j[0]]);
    let (faraday, ampere_transverse) = if d == 2 {
        let db: Vec<f64> = (0..n).map(|i| eps * (s[2].b[i] - s[0].b[i]) / (2.0 * dt)).collect();
        let de2: Vec<f64> = (0..n).map(|i| eps * (s[2].e.comps[1][i] - s[0].e.comps[1][i]) / (2.0 * dt)).collect();
        let ej2: Vec<f64> = j[1].iter().map(|x| eps * x).collect();
        (relative(&[&db, &sp.derivative(&e.comps[1])]), relative(&[&de2, &sp.derivative(b), &ej2]))
    } else {
        (0.0, 0.0)
    };
    Ok(ResidualReport { vlasov, faraday, ampere_transverse, ampere_longitudinal, gauss })
}
