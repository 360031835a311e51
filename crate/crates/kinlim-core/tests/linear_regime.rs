use std::f64::consts::PI;

use kinlim_core::linear_response::{volterra_solve, VolterraProblem};
use kinlim_core::solvers::{vp_run, RunConfig};
use kinlim_core::Complex64;

// Oracle: at small delta the nonlinear VP run follows the linear Volterra
// density of each mode.
#[test]
fn small_amplitude_vp_follows_the_volterra_density() {
    let mut cfg = RunConfig::landau_1d(0.5, 1e-5);
    cfg.grid.n_v = 256;
    cfg.dt = 0.05;
    let tr = vp_run(&cfg).unwrap();
    let n = cfg.grid.n_x;
    let mode: Vec<Complex64> = tr
        .fields
        .iter()
        .map(|r| {
            r.rho
                .iter()
                .enumerate()
                .map(|(ix, v)| Complex64::from_polar(*v, -2.0 * PI * ix as f64 / n as f64))
                .sum::<Complex64>()
                / n as f64
        })
        .collect();
    let eq = cfg.equilibrium().unwrap();
    let h = |v: &[f64]| Complex64::new(eq.eval(v), 0.0);
    let p = VolterraProblem::new(&eq, 0.0, &[0.5], &h, cfg.dt, cfg.t_final).unwrap();
    // cos(kappa x) carries half its amplitude in the e^{i kappa x} mode
    let lin: Vec<Complex64> = volterra_solve(&p).unwrap().iter().map(|r| 0.5 * r).collect();
    assert_eq!(mode.len(), lin.len());
    let diff: f64 = mode.iter().zip(&lin).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    let size: f64 = lin.iter().map(|b| b.norm_sqr()).sum::<f64>().sqrt();
    assert!(diff / size < 0.01, "relative L2 difference {}", diff / size);
}
