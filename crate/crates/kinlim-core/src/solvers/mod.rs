//! Time loops for the Vlasov-Maxwell (VM), Vlasov-Poisson (VP) and
//! Vlasov-Darwin of order `N` (VD) models in perturbation variables, with
//! conservation diagnostics, well-prepared initial data and the scaling maps.
//!
//! One step is `X(dt/2) W(dt/2) V(dt) W(dt/2) X(dt/2)`: `X` shifts in space,
//! `W` advances the field variables that are not slaved to `f`, and `V` is
//! the velocity step with fields taken at the midpoint of the step.
//! In VM the transverse potential is `A_1 + R`: `A_1` is the first Darwin
//! level of `f` and `R` a radiative remainder integrated exactly per mode.

mod fields;
mod prepared;
mod scaling;

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::equilibria::{gamma, Descriptor, Equilibrium};
use crate::error::{invalid, Error, Result};
use crate::phase_space::{bootstrap_norm, DistField, MomentSet, PhaseGrid, Role};
use crate::spectral_fields::{EMState, VectorField};
use crate::transport::{advect_v, advect_x};

pub use fields::{EmVars, FieldModel, Instant};
pub use prepared::{initial_state, well_prepared_init, well_prepared_residual, InitialState, PreparedData};
pub use scaling::{rescale_spacetime, rescale_velocity, system_residual, FullSnapshot, ResidualReport};

type C = Complex64;

/// Field model of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Model {
    VM,
    VP,
    /// Darwin hierarchy truncated at `N` levels.
    VD(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub n_x: usize,
    pub length: f64,
    pub dim_v: usize,
    pub n_v: usize,
    pub v_max: f64,
}

impl GridSpec {
    pub fn phase_grid(&self) -> Result<PhaseGrid> {
        PhaseGrid::new(self.n_x, self.length, self.dim_v, self.n_v, self.v_max)
    }
}

/// Velocity weight of a perturbation mode, multiplying `mu(v)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VWeight {
    One,
    V1,
    V2,
}

/// `amplitude cos(kappa x + phase) w(v) mu(v)` with `kappa = 2 pi k / L`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerturbationMode {
    pub k: i64,
    pub amplitude: f64,
    pub phase: f64,
    pub weight: VWeight,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldComponent {
    E1,
    E2,
    B3,
}

/// `amplitude cos(kappa x + phase)` added to one field component at `t = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldMode {
    pub component: FieldComponent,
    pub k: i64,
    pub amplitude: f64,
    pub phase: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: Model,
    pub eps: f64,
    pub delta: f64,
    pub t_final: f64,
    pub dt: f64,
    pub grid: GridSpec,
    pub equilibrium: Descriptor,
    pub perturbation: Vec<PerturbationMode>,
    /// Explicit initial fields, used with `prepared_order = 0`.
    pub field_modes: Vec<FieldMode>,
    /// 0 (explicit fields) or 4, 6, 8 (well-prepared data).
    pub prepared_order: u32,
    /// Diagnostics and field records every this many steps.
    pub output_every: usize,
    /// Distribution snapshots every this many steps; 0 keeps only the last.
    pub snapshot_every: usize,
}

impl RunConfig {
    /// Small 1D1V Landau-damping run, a convenient base for tests.
    pub fn landau_1d(k: f64, delta: f64) -> Self {
        Self {
            model: Model::VP,
            eps: 0.0,
            delta,
            t_final: 20.0,
            dt: 0.1,
            grid: GridSpec { n_x: 32, length: 2.0 * PI / k, dim_v: 1, n_v: 128, v_max: 8.0 },
            equilibrium: Descriptor::Maxwellian { sigma: 1.0 },
            perturbation: vec![PerturbationMode { k: 1, amplitude: 1.0, phase: 0.0, weight: VWeight::One }],
            field_modes: Vec::new(),
            prepared_order: 4,
            output_every: 1,
            snapshot_every: 0,
        }
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.t_final > 0.0) {
            return invalid("dt and t_final must be positive");
        }
        if ((self.t_final / self.dt).round() * self.dt - self.t_final).abs() > 1e-9 * self.t_final {
            return invalid(format!("t_final = {} is not a multiple of dt = {}", self.t_final, self.dt));
        }
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return invalid("delta must be finite and >= 0");
        }
        match self.model {
            Model::VM | Model::VD(_) if !(self.eps > 0.0) => return invalid("VM and VD need eps > 0"),
            Model::VD(0) => return invalid("VD order must be >= 1"),
            Model::VD(_) if self.grid.dim_v != 2 => return Err(Error::Unsupported("VD needs d_v = 2".into())),
            _ => {}
        }
        if !(self.eps >= 0.0) {
            return invalid("eps must be >= 0");
        }
        match self.prepared_order {
            0 | 4 => {}
            6 | 8 if self.grid.dim_v == 2 && self.model != Model::VP => {}
            6 | 8 => return Err(Error::Unsupported("prepared orders 6 and 8 need d_v = 2 and eps > 0".into())),
            p => return Err(Error::Unsupported(format!("prepared order {p}; supported: 0, 4, 6, 8"))),
        }
        if self.prepared_order != 0 && !self.field_modes.is_empty() {
            return invalid("explicit field modes need prepared_order = 0");
        }
        if self.output_every == 0 {
            return invalid("output_every must be >= 1");
        }
        for m in &self.perturbation {
            if m.k == 0 {
                return invalid("perturbation modes need k != 0 (the data are normalized to zero mean)");
            }
            if m.weight == VWeight::V2 && self.grid.dim_v < 2 {
                return invalid("weight v2 needs d_v = 2");
            }
        }
        for m in &self.field_modes {
            if m.component == FieldComponent::B3 && m.k == 0 {
                return Err(Error::Unsupported("a mean B3 is not representable by a periodic potential".into()));
            }
            if m.component != FieldComponent::E1 && self.grid.dim_v < 2 {
                return invalid("E2 and B3 need d_v = 2");
            }
        }
        self.grid.phase_grid()?;
        Ok(())
    }

    pub fn equilibrium(&self) -> Result<Equilibrium> {
        let g = self.grid.phase_grid()?;
        Equilibrium::new(self.equilibrium.clone(), g.v)
    }

    /// Initial perturbation `f_0`.
    pub fn initial_f(&self, eq: &Equilibrium) -> Result<DistField> {
        let g = self.grid.phase_grid()?;
        let l = self.grid.length;
        let modes = self.perturbation.clone();
        let f = DistField::from_fn(g, Role::Perturbation, |x, v| {
            let mut s = 0.0;
            for m in &modes {
                let w = match m.weight {
                    VWeight::One => 1.0,
                    VWeight::V1 => v[0],
                    VWeight::V2 => v[1],
                };
                s += m.amplitude * (2.0 * PI * m.k as f64 * x / l + m.phase).cos() * w;
            }
            s * eq.eval(v)
        });
        Ok(f)
    }
}

/// Field sample used for model comparisons.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldRecord {
    pub t: f64,
    pub e: VectorField,
    pub b: Option<Vec<f64>>,
    pub rho: Vec<f64>,
}

/// Distribution and fields at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub step: usize,
    pub f: DistField,
    pub em: EMState,
}

/// Time series recorded at the output cadence.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    pub t: Vec<f64>,
    /// `int int f dv dx`.
    pub charge: Vec<f64>,
    /// `int int e_eps f + (delta/2) int (|E|^2 + |B|^2)`.
    pub energy: Vec<f64>,
    pub e_norm: Vec<f64>,
    pub b_norm: Vec<f64>,
    /// `||(E, B)||_{H^1}`.
    pub field_h1: Vec<f64>,
    /// `<j(g)>`, per component.
    pub mean_jg: Vec<[f64; 2]>,
    pub gauge: Vec<f64>,
    pub gauss: Vec<f64>,
    pub boundary: Vec<f64>,
    /// Cumulative bootstrap norm of the recorded moments.
    pub bootstrap: Vec<f64>,
    /// `(t, ||d_t rho + d_x j_1||_2)` every step, centred in time.
    pub continuity: Vec<(f64, f64)>,
}

/// Result of a run. A non-finite state stops the loop; the last finite
/// snapshot is kept and the error recorded.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub config: RunConfig,
    pub diagnostics: Diagnostics,
    pub fields: Vec<FieldRecord>,
    pub snapshots: Vec<Snapshot>,
    pub aborted: Option<Error>,
    pub warnings: Vec<String>,
}

impl Trajectory {
    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("a trajectory holds at least one snapshot")
    }
}

/// `e_eps(v) = (sqrt(1 + eps^2 |v|^2) - 1) / eps^2`, `|v|^2 / 2` at `eps = 0`.
pub fn kinetic_weight(v: &[f64], eps: f64) -> f64 {
    let v2: f64 = v.iter().map(|x| x * x).sum();
    if eps == 0.0 {
        0.5 * v2
    } else {
        v2 / (gamma(v, eps) + 1.0)
    }
}

/// Runs the configured model.
pub fn run(cfg: &RunConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let eq = cfg.equilibrium()?;
    let f0 = cfg.initial_f(&eq)?;
    let init = initial_state(cfg, &eq, &f0)?;
    run_from(cfg, &eq, init)
}

/// As [`run`], stopping after the first output at which `stop` holds.
pub fn run_until(cfg: &RunConfig, stop: &dyn Fn(&Diagnostics) -> bool) -> Result<Trajectory> {
    cfg.validate()?;
    let eq = cfg.equilibrium()?;
    let f0 = cfg.initial_f(&eq)?;
    let init = initial_state(cfg, &eq, &f0)?;
    run_inner(cfg, &eq, init, Some(stop))
}

pub fn vm_run(cfg: &RunConfig) -> Result<Trajectory> {
    if cfg.model != Model::VM {
        return invalid("vm_run needs model = VM");
    }
    run(cfg)
}

pub fn vp_run(cfg: &RunConfig) -> Result<Trajectory> {
    if cfg.model != Model::VP {
        return invalid("vp_run needs model = VP");
    }
    run(cfg)
}

/// VD run of order `n`, overriding the model of `cfg`.
pub fn vd_run(cfg: &RunConfig, n: usize) -> Result<Trajectory> {
    let mut c = cfg.clone();
    c.model = Model::VD(n);
    run(&c)
}

/// Time loop from an explicit initial state.
pub fn run_from(cfg: &RunConfig, eq: &Equilibrium, init: InitialState) -> Result<Trajectory> {
    run_inner(cfg, eq, init, None)
}

fn run_inner(
    cfg: &RunConfig,
    eq: &Equilibrium,
    init: InitialState,
    stop: Option<&dyn Fn(&Diagnostics) -> bool>,
) -> Result<Trajectory> {
    cfg.validate()?;
    let fm = FieldModel::new(cfg.model, cfg.eps, cfg.delta, eq, init.f.grid)?;
    let dt = cfg.dt;
    let n_steps = cfg.n_steps();
    let eps_t = fm.eps;
    let n = fm.grid.n_x;
    let mut f = init.f;
    let mut vars = init.vars;
    let mut traj = Trajectory {
        config: cfg.clone(),
        diagnostics: Diagnostics::default(),
        fields: Vec::new(),
        snapshots: Vec::new(),
        aborted: None,
        warnings: Vec::new(),
    };
    let ke: Vec<f64> =
        (0..f.grid.n_vnodes()).map(|iv| kinetic_weight(&f.grid.v.point(iv)[..f.grid.dim_v()], eps_t)).collect();
    let mut inst = fm.instant(&f, &vars)?;
    vars.da_guess = transverse_spectrum(&fm, &inst.em);
    let mut history: Vec<MomentSet> = Vec::new();
    record(&fm, cfg, &f, &inst, &vars, &ke, 0.0, &mut traj, &mut history);
    traj.snapshots.push(Snapshot { t: 0.0, step: 0, f: f.clone(), em: inst.em.clone() });

    let zero = vec![C::new(0.0, 0.0); n];
    let mut da1_prev = inst.da_levels.first().cloned().unwrap_or_else(|| zero.clone());
    let mut c_hist: Vec<Vec<C>> = Vec::new();
    let mut rho_prev: Option<Vec<f64>> = None;
    let mut rho_cur = inst.moments.rho.clone();
    let mut j_cur = inst.moments.j[0].clone();
    let mut leak_warned = false;

    for step in 1..=n_steps {
        let t_new = step as f64 * dt;
        let c_pred = match c_hist.len() {
            0 => zero.clone(),
            1 => c_hist[0].clone(),
            k => c_hist[k - 1].iter().zip(&c_hist[k - 2]).map(|(a, b)| 2.0 * a - b).collect(),
        };
        let last_good = f.clone();

        f = advect_x(&f, eps_t, 0.5 * dt);
        let mj = mean_current(&fm, &f)?;
        fm.wave_flow(&mut vars, mj, &c_pred, 0.5 * dt);
        let star = fm.instant(&f, &vars)?;
        let fields_mid = if cfg.model == Model::VP {
            star.em
        } else {
            vars.da_guess = transverse_spectrum(&fm, &star.em);
            let e = star.em.e_field(&fm.sp);
            let b = star.em.b_field(&fm.sp);
            let f_half = advect_v(&f, &e, b.as_deref(), eps_t, cfg.delta, 0.5 * dt, Some(eq))?;
            let mid = fm.instant(&f_half, &vars)?;
            vars.da_guess = transverse_spectrum(&fm, &mid.em);
            mid.em
        };
        let e = fields_mid.e_field(&fm.sp);
        let b = fields_mid.b_field(&fm.sp);
        f = advect_v(&f, &e, b.as_deref(), eps_t, cfg.delta, dt, Some(eq))?;
        let mj = mean_current(&fm, &f)?;
        fm.wave_flow(&mut vars, mj, &c_pred, 0.5 * dt);
        f = advect_x(&f, eps_t, 0.5 * dt);

        if !f.is_finite() {
            let err = Error::NonFinite { step, time: t_new };
            traj.snapshots.push(Snapshot { t: t_new - dt, step: step - 1, f: last_good, em: inst.em.clone() });
            traj.aborted = Some(err);
            return Ok(traj);
        }

        inst = fm.instant(&f, &vars)?;
        if cfg.model == Model::VM && f.grid.dim_v() == 2 {
            let da1 = inst.da_levels[0].clone();
            let eps2 = fm.eps * fm.eps;
            let c_true: Vec<C> = da1.iter().zip(&da1_prev).map(|(a, b)| (a - b) * (-eps2 / dt)).collect();
            let dc: Vec<C> = c_true.iter().zip(&c_pred).map(|(a, b)| a - b).collect();
            let (ra, rda) = fm.remainder_response(&dc, dt);
            for m in 0..n {
                vars.rad[m] += ra[m];
                vars.drad[m] += rda[m];
            }
            c_hist.push(c_true);
            if c_hist.len() > 2 {
                c_hist.remove(0);
            }
            inst = fm.instant(&f, &vars)?;
            da1_prev = inst.da_levels[0].clone();
        }
        vars.da_guess = transverse_spectrum(&fm, &inst.em);

        if let Some(rp) = &rho_prev {
            let dj = fm.sp.derivative(&j_cur);
            let r: Vec<f64> = (0..n).map(|ix| (inst.moments.rho[ix] - rp[ix]) / (2.0 * dt) + dj[ix]).collect();
            traj.diagnostics.continuity.push((t_new - dt, fm.sp.l2_norm(&r)));
        }
        rho_prev = Some(std::mem::replace(&mut rho_cur, inst.moments.rho.clone()));
        j_cur = inst.moments.j[0].clone();

        if !leak_warned && f.boundary_max() > 1e-8 {
            traj.warnings.push(format!("velocity-boundary leakage above 1e-8 at t = {t_new}"));
            leak_warned = true;
        }
        let mut stopped = false;
        if step % cfg.output_every == 0 || step == n_steps {
            record(&fm, cfg, &f, &inst, &vars, &ke, t_new, &mut traj, &mut history);
            stopped = stop.is_some_and(|s| s(&traj.diagnostics));
        }
        if (cfg.snapshot_every > 0 && step % cfg.snapshot_every == 0) || step == n_steps || stopped {
            traj.snapshots.push(Snapshot { t: t_new, step, f: f.clone(), em: inst.em.clone() });
        }
        if stopped {
            break;
        }
    }
    let out_dt = cfg.dt * cfg.output_every as f64;
    traj.diagnostics.bootstrap = bootstrap_norm(&history, out_dt, 0, &fm.sp);
    Ok(traj)
}

fn transverse_spectrum(fm: &FieldModel, em: &EMState) -> Vec<C> {
    if em.dta.dim() < 2 {
        return vec![C::new(0.0, 0.0); fm.grid.n_x];
    }
    let mut s = fm.sp.forward(&em.dta.comps[1]);
    s[0] = C::new(0.0, 0.0);
    s
}

fn mean_current(fm: &FieldModel, f: &DistField) -> Result<[f64; 2]> {
    if fm.model == Model::VP {
        return Ok([0.0; 2]);
    }
    let d = f.grid.dim_v();
    let nv = f.grid.n_vnodes();
    let vol = f.grid.cell_volume() / f.grid.length;
    let mut s = [0.0; 2];
    for ix in 0..f.grid.n_x {
        let row = &f.values[ix * nv..(ix + 1) * nv];
        for (iv, val) in row.iter().enumerate() {
            let p = f.grid.v.point(iv);
            let g = gamma(&p[..d], fm.eps);
            for i in 0..d.min(2) {
                s[i] += val * p[i] / g;
            }
        }
    }
    Ok([s[0] * vol, s[1] * vol])
}

#[allow(clippy::too_many_arguments)]
fn record(
    fm: &FieldModel,
    cfg: &RunConfig,
    f: &DistField,
    inst: &Instant,
    vars: &EmVars,
    ke: &[f64],
    t: f64,
    traj: &mut Trajectory,
    history: &mut Vec<MomentSet>,
) {
    let sp = &fm.sp;
    let e = inst.em.e_field(sp);
    let b = if fm.model == Model::VP { None } else { inst.em.b_field(sp) };
    let e2: f64 = e.comps.iter().map(|c| sp.l2_norm(c).powi(2)).sum();
    let b2 = b.as_ref().map_or(0.0, |b| sp.l2_norm(b).powi(2));
    let mut h1 = e2 + b2;
    for c in &e.comps {
        h1 += sp.l2_norm(&sp.derivative(c)).powi(2);
    }
    if let Some(b) = &b {
        h1 += sp.l2_norm(&sp.derivative(b)).powi(2);
    }
    let kin: f64 =
        f.values.chunks(ke.len()).map(|row| row.iter().zip(ke).map(|(a, w)| a * w).sum::<f64>()).sum::<f64>()
            * f.grid.cell_volume();
    let d = &mut traj.diagnostics;
    d.t.push(t);
    d.charge.push(f.mass());
    d.energy.push(kin + 0.5 * cfg.delta * (e2 + b2));
    d.e_norm.push(e2.sqrt());
    d.b_norm.push(b2.sqrt());
    d.field_h1.push(h1.sqrt());
    let mut mjg = [inst.moments.means[1][0], inst.moments.means[1].get(1).copied().unwrap_or(0.0)];
    if fm.model != Model::VP {
        if let Ok(mc) = fm.eq.moment_constants(fm.eps) {
            for (i, m) in mjg.iter_mut().enumerate().take(f.grid.dim_v().min(2)) {
                for k in 0..f.grid.dim_v().min(2) {
                    *m += fm.eps * mc.lambda_matrix[i][k] * vars.mean_a[k];
                }
            }
        }
    }
    d.mean_jg.push(mjg);
    d.gauge.push(inst.em.gauge_residual(sp));
    d.gauss.push(inst.em.gauss_residual(sp, &inst.moments.rho));
    d.boundary.push(f.boundary_max());
    history.push(inst.moments.clone());
    traj.fields.push(FieldRecord { t, e, b, rho: inst.moments.rho.clone() });
}

/// Discrete `L^2(0, T; L^2_x)` distance between the `(E, B)` records of two
/// runs sampled at the same times; a missing `B` counts as zero.
pub fn field_distance(a: &[FieldRecord], b: &[FieldRecord], length: f64) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::GridMismatch("field records differ in length".into()));
    }
    let mut acc = 0.0;
    for (i, (ra, rb)) in a.iter().zip(b).enumerate() {
        if (ra.t - rb.t).abs() > 1e-9 {
            return Err(Error::GridMismatch(format!("record times differ: {} vs {}", ra.t, rb.t)));
        }
        let n = ra.rho.len();
        let dx = length / n as f64;
        let mut s = 0.0;
        let dims = ra.e.dim().max(rb.e.dim());
        for c in 0..dims {
            for ix in 0..n {
                let x = ra.e.comps.get(c).map_or(0.0, |v| v[ix]);
                let y = rb.e.comps.get(c).map_or(0.0, |v| v[ix]);
                s += (x - y).powi(2);
            }
        }
        for ix in 0..n {
            let x = ra.b.as_ref().map_or(0.0, |v| v[ix]);
            let y = rb.b.as_ref().map_or(0.0, |v| v[ix]);
            s += (x - y).powi(2);
        }
        let w = if i == 0 || i == a.len() - 1 { 0.5 } else { 1.0 };
        acc += w * s * dx * (a[1].t - a[0].t);
    }
    Ok(acc.sqrt())
}

/// Least-squares slope and intercept of `y` against `x`, with the standard
/// error of the slope and the coefficient of determination.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - icpt - slope * a).powi(2)).sum();
    let se = if x.len() > 2 { (ss_res / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    (slope, icpt, se, r2)
}

/// Slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly).0
}

/// First time the field norm `delta ||E||_2` exceeds `threshold`.
pub fn threshold_time(traj: &Trajectory, threshold: f64) -> Option<f64> {
    let d = &traj.diagnostics;
    let delta = traj.config.delta;
    for i in 1..d.t.len() {
        let (a, b) = (delta * d.e_norm[i - 1], delta * d.e_norm[i]);
        if b >= threshold {
            if a >= threshold || b == a {
                return Some(d.t[i]);
            }
            // log-linear interpolation between samples
            let s = (threshold.ln() - a.ln()) / (b.ln() - a.ln());
            return Some(d.t[i - 1] + s * (d.t[i] - d.t[i - 1]));
        }
    }
    None
}

#[cfg(test)]
mod tests;
