//! Initial data: well-prepared fields from the Darwin hierarchy, explicit
//! field modes, and the conversion to the evolved variables of each model.
//!
//! Data of order `p` take `A|0 = sum_{j <= N} A_j` and `d_t A|0 = sum d_t A_j`
//! with `N = p/2 - 2`, so `p = 4` starts from `A = d_t A = 0`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::equilibria::Equilibrium;
use crate::error::{invalid, Error, Result};
use crate::phase_space::{deposit_moments, DistField};
use crate::spectral_fields::{poisson_solve, Spectral, VectorField};

use super::fields::{EmVars, FieldModel};
use super::{FieldComponent, Model, RunConfig};

type C = Complex64;

/// Order of the hierarchy reference used by [`well_prepared_residual`].
const REFERENCE_LEVELS: usize = 4;

/// Initial fields of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedData {
    pub phi: Vec<f64>,
    /// Transverse potential `A_2` and its time derivative (empty for `d_v = 1`).
    pub a: Vec<f64>,
    pub da: Vec<f64>,
    pub e: VectorField,
    pub b: Option<Vec<f64>>,
}

/// Distribution and evolved field variables at `t = 0`.
#[derive(Clone, Debug)]
pub struct InitialState {
    pub f: DistField,
    pub vars: EmVars,
}

fn truncation(p: u32) -> Result<usize> {
    match p {
        4 => Ok(0),
        6 => Ok(1),
        8 => Ok(2),
        _ => Err(Error::Unsupported(format!("well-prepared order {p}; supported: 4, 6, 8"))),
    }
}

/// Spectra of `sum_{j <= n} A_j` and `sum d_t A_j` for `f`.
fn hierarchy_spectra(eq: &Equilibrium, eps: f64, delta: f64, f: &DistField, n: usize) -> Result<(Vec<C>, Vec<C>)> {
    let nx = f.grid.n_x;
    let zero = vec![C::new(0.0, 0.0); nx];
    if n == 0 || f.grid.dim_v() < 2 {
        return Ok((zero.clone(), zero));
    }
    let fm = FieldModel::new(Model::VD(n), eps, delta, eq, f.grid)?;
    let inst = fm.instant(f, &EmVars::zeros(nx))?;
    let sum = |levels: &[Vec<C>]| {
        let mut s = zero.clone();
        for l in levels {
            for (a, b) in s.iter_mut().zip(l) {
                *a += b;
            }
        }
        s
    };
    Ok((sum(&inst.a_levels), sum(&inst.da_levels)))
}

fn fields_from_potentials(sp: &Spectral, eps: f64, phi: Vec<f64>, a: Vec<f64>, da: Vec<f64>) -> PreparedData {
    let mut e = VectorField::new(vec![sp.derivative(&phi).iter().map(|x| -x).collect()]);
    let b = if a.is_empty() {
        None
    } else {
        e.comps.push(da.iter().map(|x| -eps * x).collect());
        Some(sp.derivative(&a))
    };
    PreparedData { phi, a, da, e, b }
}

/// Well-prepared fields of order `p` for the perturbation `f0`.
pub fn well_prepared_init(cfg: &RunConfig, eq: &Equilibrium, f0: &DistField, p: u32) -> Result<PreparedData> {
    let n = truncation(p)?;
    if n > 0 && !(cfg.eps > 0.0) {
        return invalid("well-prepared orders 6 and 8 need eps > 0");
    }
    let sp = f0.grid.spectral();
    let rho = deposit_moments(f0, cfg.eps, 1)?.rho;
    let phi = poisson_solve(&sp, &rho);
    if f0.grid.dim_v() < 2 {
        return Ok(fields_from_potentials(&sp, cfg.eps, phi, Vec::new(), Vec::new()));
    }
    let (ah, dah) = hierarchy_spectra(eq, cfg.eps, cfg.delta, f0, n)?;
    Ok(fields_from_potentials(&sp, cfg.eps, phi, sp.inverse(&ah), sp.inverse(&dah)))
}

/// `||A|0 - A_ref||_{H^1} + ||eps (d_t A|0 - d_t A_ref)||_2` with the
/// reference truncated at four hierarchy levels.
pub fn well_prepared_residual(cfg: &RunConfig, eq: &Equilibrium, f0: &DistField, p: u32) -> Result<f64> {
    if f0.grid.dim_v() < 2 {
        return Err(Error::Unsupported("the residual needs d_v = 2".into()));
    }
    let data = well_prepared_init(cfg, eq, f0, p)?;
    let sp = f0.grid.spectral();
    let (ah, dah) = hierarchy_spectra(eq, cfg.eps, cfg.delta, f0, REFERENCE_LEVELS)?;
    let a_ref = sp.inverse(&ah);
    let da_ref = sp.inverse(&dah);
    let da: Vec<f64> = data.a.iter().zip(&a_ref).map(|(x, y)| x - y).collect();
    let dda: Vec<f64> = data.da.iter().zip(&da_ref).map(|(x, y)| cfg.eps * (x - y)).collect();
    Ok(sp.sobolev_norm(&da, 1) + sp.l2_norm(&dda))
}

/// Fields given mode by mode, checked against Gauss's law for `f0`.
fn explicit_fields(cfg: &RunConfig, f0: &DistField) -> Result<(PreparedData, [f64; 2])> {
    let g = f0.grid;
    let sp = g.spectral();
    let n = g.n_x;
    let d = g.dim_v();
    let eps = cfg.eps;
    let rho = deposit_moments(f0, eps, 1)?.rho;
    let phi = poisson_solve(&sp, &rho);
    let mut e1 = vec![0.0; n];
    let mut e2 = vec![0.0; n];
    let mut b3 = vec![0.0; n];
    for m in &cfg.field_modes {
        let target = match m.component {
            FieldComponent::E1 => &mut e1,
            FieldComponent::E2 => &mut e2,
            FieldComponent::B3 => &mut b3,
        };
        for (ix, t) in target.iter_mut().enumerate() {
            *t += m.amplitude * (2.0 * PI * m.k as f64 * g.x(ix) / g.length + m.phase).cos();
        }
    }
    let mean_e1 = sp.mean(&e1);
    let mean_e2 = sp.mean(&e2);
    let e_phi: Vec<f64> = sp.derivative(&phi).iter().map(|x| -x).collect();
    let has_e1 = cfg.field_modes.iter().any(|m| m.component == FieldComponent::E1 && m.k != 0);
    if has_e1 {
        let scale = e_phi.iter().chain(&e1).fold(1.0f64, |a, x| a.max(x.abs()));
        let mismatch = e1.iter().zip(&e_phi).map(|(a, b)| (a - mean_e1 - b).abs()).fold(0.0, f64::max);
        if mismatch > 1e-8 * scale {
            return invalid(format!("Gauss law violated: d_x E1 differs from rho(f0) by {mismatch:e}"));
        }
    }
    if cfg.model == Model::VP
        && (mean_e1.abs() > 1e-12 || d > 1 && cfg.field_modes.iter().any(|m| m.component != FieldComponent::E1))
    {
        return invalid("VP admits no mean E1 and no transverse field data");
    }
    if d < 2 {
        let mut data = fields_from_potentials(&sp, eps, phi, Vec::new(), Vec::new());
        for x in data.e.comps[0].iter_mut() {
            *x += mean_e1;
        }
        let means = if eps > 0.0 { [-mean_e1 / eps, 0.0] } else { [0.0; 2] };
        return Ok((data, means));
    }
    let bh = sp.forward(&b3);
    let ah: Vec<C> = (0..n)
        .map(|m| if m == 0 || sp.is_nyquist(m) { C::new(0.0, 0.0) } else { bh[m] / C::new(0.0, sp.kappa(m)) })
        .collect();
    let a = sp.inverse(&ah);
    let da: Vec<f64> = if eps > 0.0 { e2.iter().map(|x| -(x - mean_e2) / eps).collect() } else { vec![0.0; n] };
    let mut data = fields_from_potentials(&sp, eps, phi, a, da);
    for x in data.e.comps[0].iter_mut() {
        *x += mean_e1;
    }
    for x in data.e.comps[1].iter_mut() {
        *x += mean_e2;
    }
    let means = if eps > 0.0 { [-mean_e1 / eps, -mean_e2 / eps] } else { [0.0; 2] };
    Ok((data, means))
}

/// Initial state of the configured model for the perturbation `f0`.
pub fn initial_state(cfg: &RunConfig, eq: &Equilibrium, f0: &DistField) -> Result<InitialState> {
    let n = f0.grid.n_x;
    let mut vars = EmVars::zeros(n);
    let (data, mean_da) = if cfg.prepared_order == 0 {
        explicit_fields(cfg, f0)?
    } else {
        (well_prepared_init(cfg, eq, f0, cfg.prepared_order)?, [0.0; 2])
    };
    if cfg.model == Model::VP {
        return Ok(InitialState { f: f0.clone(), vars });
    }
    vars.mean_da = mean_da;
    if cfg.model == Model::VM && f0.grid.dim_v() == 2 {
        let fm = FieldModel::new(Model::VM, cfg.eps, cfg.delta, eq, f0.grid)?;
        let h = fm.hier.as_ref().expect("VM in d_v = 2 builds the first level");
        let sp = &fm.sp;
        let eps = fm.eps;
        let lt = h.lambda_t;
        let moments = deposit_moments(f0, eps, fm.max_ell)?;
        let j2 = sp.forward(&moments.j[1]);
        let ah = sp.forward(&data.a);
        let dah = sp.forward(&data.da);
        for m in 1..n {
            if sp.is_nyquist(m) {
                continue;
            }
            let k2 = sp.kappa(m).powi(2);
            let a1 = (j2[m] * eps + ah[m] * (eps * eps * lt)) / (k2 + eps * eps * lt);
            vars.rad[m] = ah[m] - a1;
        }
        let em = fm.em_state(data.phi.clone(), &vars, &ah, &dah);
        let (dj2, dms) = fm.dt_g_spectra(f0, &moments, &em)?;
        let da1 = h.potentials_from_g_spectra(&dj2, &dms);
        for m in 1..n {
            if !sp.is_nyquist(m) {
                vars.drad[m] = dah[m] - da1[m][0];
            }
        }
        vars.da_guess = dah;
    }
    Ok(InitialState { f: f0.clone(), vars })
}
