//! Experiment drivers: stability scans, Landau damping, model convergence
//! sweeps, instability timing, hierarchy checks and scaling checks.
//!
//! Sweep points run on the current rayon pool. A failing point is recorded
//! in the report and the rest of the sweep proceeds.

use std::f64::consts::PI;

use kinlim_core::linear_response::{extract_rate, volterra_solve, VolterraProblem};
use kinlim_core::penrose::{Classification, PenroseSymbol, StabilityReport};
use kinlim_core::phase_space::{deposit_moments, DistField, PhaseGrid, Role};
use kinlim_core::solvers::{
    field_distance, linear_fit, log_log_slope, rescale_spacetime, rescale_velocity, run, run_until, system_residual,
    threshold_time, well_prepared_residual, Diagnostics, FieldRecord, FullSnapshot, Model, RunConfig, Trajectory,
};
use kinlim_core::spectral_fields::{build_hierarchy, darwin_potentials};
use kinlim_core::{Complex64, Descriptor, Equilibrium, Error, Result, VelocityGrid};
use rayon::prelude::*;

/// Slope of a log-log (or linear) fit with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub r2: f64,
}

impl Fit {
    pub fn linear(x: &[f64], y: &[f64]) -> Self {
        let (slope, intercept, stderr, r2) = linear_fit(x, y);
        Self { slope, intercept, stderr, r2 }
    }

    pub fn log_log(x: &[f64], y: &[f64]) -> Self {
        let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
        let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
        Self::linear(&lx, &ly)
    }

    /// Half-width of the 95% interval of the slope (normal approximation).
    pub fn ci95(&self) -> f64 {
        1.96 * self.stderr
    }
}

/// Penrose classification of one equilibrium on a wavevector scan.
pub fn penrose_scan(eq: &Equilibrium, eps: f64, length: f64, k_max: i64) -> Result<StabilityReport> {
    let sym = PenroseSymbol::new(eq, eps).with_length(length);
    let ks: Vec<Vec<i64>> = (1..=k_max).map(|k| vec![k]).collect();
    let gamma: Vec<f64> = (0..12).map(|i| 0.02 * 1.6f64.powi(i)).collect();
    let tau: Vec<f64> = (0..=48).map(|i| -12.0 + 0.5 * i as f64).collect();
    sym.stability_margin(&ks, &gamma, &tau)
}

pub fn is_unstable(r: &StabilityReport) -> bool {
    r.classification == Classification::Unstable && !r.roots.is_empty()
}

/// Damping or growth rates of one Fourier mode from three independent routes.
#[derive(Clone, Debug, PartialEq)]
pub struct LandauResult {
    pub kappa: f64,
    /// Rate fitted to the simulated field mode.
    pub simulated: f64,
    /// `Im omega` of the least damped dispersion root.
    pub root: f64,
    /// Rate fitted to the linear-response density.
    pub volterra: f64,
    /// Sampled `|E_k(t)|`.
    pub t: Vec<f64>,
    pub e_mode: Vec<f64>,
}

/// Complex amplitude of Fourier mode `m` of the longitudinal field.
fn e_mode(rec: &FieldRecord, m: usize) -> Complex64 {
    let n = rec.e.comps[0].len();
    let mut acc = Complex64::new(0.0, 0.0);
    for (ix, v) in rec.e.comps[0].iter().enumerate() {
        acc += Complex64::from_polar(*v, -2.0 * PI * (m * ix) as f64 / n as f64);
    }
    acc / n as f64
}

/// Single-mode run of `cfg` compared with the dispersion root and the
/// Volterra solution, all fitted on `window`.
pub fn landau(cfg: &RunConfig, window: (f64, f64)) -> Result<LandauResult> {
    let tr = run(cfg)?;
    if let Some(e) = tr.aborted {
        return Err(e);
    }
    let eq = cfg.equilibrium()?;
    let k = cfg.perturbation.first().map_or(1, |m| m.k);
    let kappa = 2.0 * PI * k as f64 / cfg.grid.length;
    let dt_out = cfg.dt * cfg.output_every as f64;
    let series: Vec<Complex64> = tr.fields.iter().map(|r| e_mode(r, k as usize)).collect();
    let simulated = extract_rate(&series, dt_out, window)?.re;

    let sym = PenroseSymbol::new(&eq, 0.0).with_length(cfg.grid.length);
    let mut kv = vec![0.0; eq.dim_v];
    kv[0] = kappa;
    let roots = sym.dispersion_roots_kappa(&kv)?;
    let root = roots.iter().map(|r| r.growth_rate()).fold(f64::NEG_INFINITY, f64::max);

    let eps = if cfg.model == Model::VP { 0.0 } else { cfg.eps };
    let weight = cfg.perturbation.first().map(|m| m.weight);
    let h = move |v: &[f64]| {
        let w = match weight {
            Some(kinlim_core::solvers::VWeight::V1) => v[0],
            Some(kinlim_core::solvers::VWeight::V2) => v[1],
            _ => 1.0,
        };
        Complex64::new(w * eq.eval(v), 0.0)
    };
    let eq2 = cfg.equilibrium()?;
    let p = VolterraProblem::new(&eq2, eps, &kv, &h, dt_out, window.1)?;
    let rho = volterra_solve(&p)?;
    let volterra = extract_rate(&rho, dt_out, window)?.re;
    Ok(LandauResult {
        kappa,
        simulated,
        root,
        volterra,
        t: tr.diagnostics.t.clone(),
        e_mode: series.iter().map(|c| c.norm()).collect(),
    })
}

/// Error of a model against VM at one `eps`.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub eps: f64,
    pub error: std::result::Result<f64, Error>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceResult {
    pub target: Model,
    pub points: Vec<SweepPoint>,
    /// Log-log fit over the successful points.
    pub fit: Option<Fit>,
}

fn fit_points(points: &[SweepPoint]) -> Option<Fit> {
    let ok: Vec<(f64, f64)> = points.iter().filter_map(|p| p.error.as_ref().ok().map(|e| (p.eps, *e))).collect();
    if ok.len() < 2 {
        return None;
    }
    let (x, y): (Vec<f64>, Vec<f64>) = ok.into_iter().unzip();
    Some(Fit::log_log(&x, &y))
}

fn finished(cfg: &RunConfig) -> Result<Trajectory> {
    let tr = run(cfg)?;
    match tr.aborted {
        Some(e) => Err(e),
        None => Ok(tr),
    }
}

/// `||(E, B)_VM - (E, B)_target||_{L^2(0,T; L^2)}` over the `eps` sweep.
/// `base.model` is ignored; VP is run once since it does not depend on `eps`.
pub fn convergence(base: &RunConfig, target: Model, eps_values: &[f64]) -> Result<ConvergenceResult> {
    if eps_values.is_empty() {
        return Err(Error::InvalidArgument("empty eps sweep".into()));
    }
    let vp = if target == Model::VP {
        let mut c = base.clone();
        c.model = Model::VP;
        Some(finished(&c))
    } else {
        None
    };
    let points = eps_values
        .par_iter()
        .map(|&eps| {
            let error = (|| {
                let mut vm = base.clone();
                vm.model = Model::VM;
                vm.eps = eps;
                let tv = finished(&vm)?;
                let other = match &vp {
                    Some(r) => r.clone()?,
                    None => {
                        let mut c = vm.clone();
                        c.model = target;
                        finished(&c)?
                    }
                };
                field_distance(&tv.fields, &other.fields, base.grid.length)
            })();
            SweepPoint { eps, error }
        })
        .collect::<Vec<_>>();
    let fit = fit_points(&points);
    Ok(ConvergenceResult { target, points, fit })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimingResult {
    pub eps: Vec<f64>,
    /// First crossing of the threshold, `None` if never reached.
    pub t_star: Vec<Option<f64>>,
    /// Fit of `t*` against `log(1/eps)`.
    pub fit: Option<Fit>,
}

/// Instability timing: `delta = eps^power`, first time `delta ||E||_2`
/// exceeds `threshold`.
pub fn instability_timing(base: &RunConfig, eps_values: &[f64], power: i32, threshold: f64) -> Result<TimingResult> {
    let t_star: Vec<Option<f64>> = eps_values
        .par_iter()
        .map(|&eps| {
            let mut c = base.clone();
            c.eps = eps;
            c.delta = eps.powi(power);
            let delta = c.delta;
            let stop = move |d: &Diagnostics| d.e_norm.last().is_some_and(|e| delta * e >= threshold);
            let tr = run_until(&c, &stop).ok()?;
            threshold_time(&tr, threshold)
        })
        .collect();
    let ok: Vec<(f64, f64)> =
        eps_values.iter().zip(&t_star).filter_map(|(e, t)| t.map(|t| ((1.0 / e).ln(), t))).collect();
    let fit = (ok.len() >= 2).then(|| {
        let (x, y): (Vec<f64>, Vec<f64>) = ok.into_iter().unzip();
        Fit::linear(&x, &y)
    });
    Ok(TimingResult { eps: eps_values.to_vec(), t_star, fit })
}

/// Growth of the magnetic energy for an anisotropic equilibrium.
#[derive(Clone, Debug, PartialEq)]
pub struct WeibelResult {
    pub t: Vec<f64>,
    pub b_norm: Vec<f64>,
    /// Rate fitted to `||B||_2` on the window.
    pub rate: f64,
}

pub fn weibel(cfg: &RunConfig, window: (f64, f64)) -> Result<WeibelResult> {
    let tr = finished(cfg)?;
    let d = &tr.diagnostics;
    let (x, y): (Vec<f64>, Vec<f64>) =
        d.t.iter()
            .zip(&d.b_norm)
            .filter(|(t, b)| **t >= window.0 && **t <= window.1 && **b > 0.0)
            .map(|(t, b)| (*t, b.ln()))
            .unzip();
    if x.len() < 3 {
        return Err(Error::DegenerateFit("too few samples in the window".into()));
    }
    Ok(WeibelResult { t: d.t.clone(), b_norm: d.b_norm.clone(), rate: Fit::linear(&x, &y).slope })
}

/// Sizes of the hierarchy levels for a frozen smooth `g`.
#[derive(Clone, Debug, PartialEq)]
pub struct HierarchyResult {
    pub eps: Vec<f64>,
    /// `norms[i][j] = ||A_{j+1}||_2` at `eps[i]`.
    pub norms: Vec<Vec<f64>>,
    /// Log-log slope of each level.
    pub slopes: Vec<f64>,
    /// Base-case deviations at the smallest `eps`: `max |S_11 + 1|`,
    /// `max |Delta_{eps,1} - Delta_eps|`, `max |S_22 - 1|`.
    pub base_cases: [f64; 3],
    /// `max |S_22 - 1|` per `eps`.
    pub s22_deviation: Vec<f64>,
}

/// Frozen smooth perturbation with transverse current at every moment order.
pub fn smooth_g(grid: PhaseGrid, eq: &Equilibrium) -> DistField {
    DistField::from_fn(grid, Role::Perturbation, |x, v| {
        eq.eval(v)
            * (0.3 * v[1] * x.cos() + 0.2 * v[0] * v[1] * (2.0 * x).sin() + 0.1 * v[0].powi(3) * v[1] * (x + 0.3).cos())
    })
}

pub fn hierarchy_check(levels: usize, eps_values: &[f64]) -> Result<HierarchyResult> {
    let grid = PhaseGrid::new(16, 2.0 * PI, 2, 48, 8.0)?;
    let eq = Equilibrium::new(Descriptor::Maxwellian { sigma: 1.0 }, grid.v)?;
    let sp = grid.spectral();
    let g = smooth_g(grid, &eq);
    let ms = deposit_moments(&g, 0.0, 2 * levels - 1)?;
    let mut norms = Vec::new();
    let mut s22_deviation = Vec::new();
    for &eps in eps_values {
        let h = build_hierarchy(&eq, eps, levels, &sp)?;
        let a = darwin_potentials(&h, &sp, &ms)?;
        norms.push(a.iter().map(|x| sp.l2_norm(&x.comps[1])).collect::<Vec<_>>());
        s22_deviation.push((1..sp.n).map(|m| (h.op_skj[2][2][m] - 1.0).abs()).fold(0.0, f64::max));
    }
    let slopes = (0..levels)
        .map(|j| {
            let y: Vec<f64> = norms.iter().map(|n| n[j]).collect();
            log_log_slope(eps_values, &y)
        })
        .collect();
    let base_cases = hierarchy_base_cases(&eq, &sp, 1e-4)?;
    Ok(HierarchyResult { eps: eps_values.to_vec(), norms, slopes, base_cases, s22_deviation })
}

/// Base-case deviations of the hierarchy at `eps`.
pub fn hierarchy_base_cases(eq: &Equilibrium, sp: &kinlim_core::Spectral, eps: f64) -> Result<[f64; 3]> {
    let h = build_hierarchy(eq, eps, 2, sp)?;
    let mut out = [0.0f64; 3];
    for m in 1..sp.n {
        let k = sp.kappa(m);
        let delta_eps = -(k * k + eps * eps * h.lambda_t);
        out[0] = out[0].max((h.op_skj[1][1][m] + 1.0).abs());
        out[1] = out[1].max((h.delta_eps_k[1][m] - delta_eps).abs());
        out[2] = out[2].max((h.op_skj[2][2][m] - 1.0).abs());
    }
    Ok(out)
}

/// Residual slopes of well-prepared data of orders 4, 6, 8.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedResult {
    pub eps: Vec<f64>,
    /// `residual[p_index][eps_index]` for `p = 4, 6, 8`.
    pub residual: Vec<Vec<f64>>,
    pub slopes: Vec<f64>,
}

pub fn prepared_check(base: &RunConfig, eps_values: &[f64]) -> Result<PreparedResult> {
    let eq = base.equilibrium()?;
    let f0 = base.initial_f(&eq)?;
    let mut residual = Vec::new();
    for p in [4, 6, 8] {
        let r = eps_values
            .iter()
            .map(|&eps| {
                let mut c = base.clone();
                c.eps = eps;
                well_prepared_residual(&c, &eq, &f0, p)
            })
            .collect::<Result<Vec<f64>>>()?;
        residual.push(r);
    }
    let slopes = residual.iter().map(|r| log_log_slope(eps_values, r)).collect();
    Ok(PreparedResult { eps: eps_values.to_vec(), residual, slopes })
}

/// Residuals of scaled snapshots against the native residual.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingResult {
    pub native: f64,
    /// `(lambda, velocity-map residual, space-time-map residual)`.
    pub scaled: Vec<(f64, f64, f64)>,
    /// Largest pointwise difference after `lambda` then `1/lambda`.
    pub round_trip: f64,
}

/// Runs `cfg` at `eps = 1`, takes three consecutive snapshots after `skip`
/// steps, and checks both scaling maps for each `lambda`.
pub fn scaling_check(cfg: &RunConfig, lambdas: &[f64], skip: usize) -> Result<ScalingResult> {
    let mut c = cfg.clone();
    c.model = Model::VM;
    c.eps = 1.0;
    c.t_final = (skip + 3) as f64 * c.dt;
    c.snapshot_every = 1;
    let tr = finished(&c)?;
    let eq = c.equilibrium()?;
    let snaps: Vec<FullSnapshot> = tr.snapshots[skip..skip + 3]
        .iter()
        .map(|s| FullSnapshot::from_perturbation(s, &eq, c.delta))
        .collect::<Result<_>>()?;
    let res = |s: &[FullSnapshot], l: Option<f64>| system_residual([&s[0], &s[1], &s[2]], l).map(|r| r.max());
    let native = res(&snaps, None)?;
    let mut scaled = Vec::new();
    let mut round_trip = 0.0f64;
    for &lambda in lambdas {
        let v: Vec<FullSnapshot> = snaps.iter().map(|s| rescale_velocity(s, lambda)).collect::<Result<_>>()?;
        let st: Vec<FullSnapshot> = snaps.iter().map(|s| rescale_spacetime(s, lambda)).collect::<Result<_>>()?;
        let target_l = c.grid.length * lambda * lambda;
        scaled.push((lambda, res(&v, None)?, res(&st, Some(target_l))?));
        for (orig, fw) in snaps.iter().zip(&v) {
            let back = rescale_velocity(fw, 1.0 / lambda)?;
            let scale = orig.f.values.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            let d = back.f.values.iter().zip(&orig.f.values).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            round_trip = round_trip.max(d / scale);
        }
    }
    Ok(ScalingResult { native, scaled, round_trip })
}

/// Default velocity grid for penrose-only scans of `d`-dimensional profiles.
pub fn scan_grid(dim: usize, v_max: f64) -> Result<VelocityGrid> {
    VelocityGrid::new(dim, if dim == 1 { 512 } else { 128 }, v_max)
}

/// Conservation diagnostics of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct ConservationLevel {
    pub dt: f64,
    pub steps: usize,
    pub charge_drift: f64,
    /// Signed relative energy change over the run.
    pub energy_drift: f64,
    /// RMS over time of the continuity residual.
    pub continuity: f64,
    pub gauge: f64,
    pub gauss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConservationResult {
    /// Levels from the coarsest `dt` to the finest.
    pub levels: Vec<ConservationLevel>,
    /// `(D(4h) - D(2h)) / (D(2h) - D(h))` for the energy drift `D`, which
    /// cancels the part of the drift that does not depend on `dt`.
    pub energy_ratio: f64,
    /// `D(2h) / D(h)` without that cancellation.
    pub energy_halving: f64,
    pub continuity_order: f64,
}

/// Runs `cfg` at `dt`, `2 dt` and `4 dt` over the same `t_final`.
pub fn conservation(cfg: &RunConfig) -> Result<ConservationResult> {
    let levels = [4.0, 2.0, 1.0]
        .iter()
        .map(|&m| {
            let mut c = cfg.clone();
            c.dt = cfg.dt * m;
            c.output_every = 1;
            let tr = finished(&c)?;
            let d = &tr.diagnostics;
            let e0 = d.energy[0];
            let scale = if e0.abs() > 0.0 { e0.abs() } else { 1.0 };
            let max_of = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max);
            let cont = &d.continuity;
            Ok(ConservationLevel {
                dt: c.dt,
                steps: c.n_steps(),
                charge_drift: d.charge.iter().fold(0.0f64, |a, q| a.max((q - d.charge[0]).abs())),
                energy_drift: (d.energy.last().copied().unwrap_or(e0) - e0) / scale,
                continuity: (cont.iter().map(|x| x.1 * x.1).sum::<f64>() / cont.len().max(1) as f64).sqrt(),
                gauge: max_of(&d.gauge),
                gauss: max_of(&d.gauss),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let dr = |i: usize| levels[i].energy_drift;
    let energy_ratio = (dr(0) - dr(1)) / (dr(1) - dr(2));
    let energy_halving = dr(1) / dr(2);
    let continuity_order = (levels[1].continuity / levels[2].continuity).log2();
    Ok(ConservationResult { levels, energy_ratio, energy_halving, continuity_order })
}
