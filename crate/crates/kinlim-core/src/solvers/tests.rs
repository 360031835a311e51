use super::*;
use crate::phase_space::deposit_moments;
use crate::spectral_fields::darwin_potentials_from_f;

fn base_2d(model: Model, eps: f64, delta: f64) -> RunConfig {
    RunConfig {
        model,
        eps,
        delta,
        t_final: 1.0,
        dt: 0.1,
        grid: GridSpec { n_x: 16, length: 2.0 * PI / 0.5, dim_v: 2, n_v: 32, v_max: 8.0 },
        equilibrium: Descriptor::Maxwellian { sigma: 1.0 },
        perturbation: vec![
            PerturbationMode { k: 1, amplitude: 1.0, phase: 0.0, weight: VWeight::One },
            PerturbationMode { k: 1, amplitude: 0.5, phase: 0.3, weight: VWeight::V2 },
        ],
        field_modes: Vec::new(),
        prepared_order: 4,
        output_every: 1,
        snapshot_every: 0,
    }
}

fn max_abs(u: &[f64]) -> f64 {
    u.iter().fold(0.0, |a, x| a.max(x.abs()))
}

#[test]
fn zero_data_stays_zero_for_all_models() {
    for model in [Model::VM, Model::VP, Model::VD(2)] {
        let mut cfg = base_2d(model, 0.2, 0.0);
        cfg.perturbation.clear();
        cfg.t_final = 0.5;
        let tr = run(&cfg).unwrap();
        assert!(tr.aborted.is_none());
        assert!(max_abs(&tr.last().f.values) < 1e-11, "{model:?}");
        assert!(tr.diagnostics.e_norm.iter().all(|&e| e < 1e-11));
    }
}

#[test]
fn charge_gauge_and_gauss_hold_on_a_vm_run() {
    let cfg = base_2d(Model::VM, 0.3, 0.05);
    let tr = vm_run(&cfg).unwrap();
    let d = &tr.diagnostics;
    for &q in &d.charge {
        assert!((q - d.charge[0]).abs() < 1e-12, "charge drift {}", q - d.charge[0]);
    }
    assert!(d.gauge.iter().all(|&g| g < 1e-12));
    assert!(d.gauss.iter().all(|&g| g < 1e-10));
    assert!(d.e_norm.iter().all(|e| e.is_finite()));
}

#[test]
fn vp_energy_drift_is_second_order() {
    let drift = |dt: f64| {
        let mut cfg = RunConfig::landau_1d(0.5, 0.05);
        cfg.t_final = 4.0;
        cfg.dt = dt;
        let tr = vp_run(&cfg).unwrap();
        let en = &tr.diagnostics.energy;
        en.iter().fold(0.0f64, |a, x| a.max((x - en[0]).abs()))
    };
    let (a, b) = (drift(0.2), drift(0.1));
    eprintln!("drift {a:e} {b:e} ratio {}", a / b);
    assert!(a / b > 3.0, "{a:e} {b:e}");
}

#[test]
fn frozen_vd_potentials_match_the_hierarchy() {
    let cfg = base_2d(Model::VD(2), 0.2, 0.0);
    let eq = cfg.equilibrium().unwrap();
    let f0 = cfg.initial_f(&eq).unwrap();
    let fm = FieldModel::new(Model::VD(2), cfg.eps, 0.0, &eq, f0.grid).unwrap();
    let inst = fm.instant(&f0, &EmVars::zeros(f0.grid.n_x)).unwrap();
    let m = deposit_moments(&f0, cfg.eps, 4).unwrap();
    let reference = darwin_potentials_from_f(fm.hier.as_ref().unwrap(), &fm.sp, &m).unwrap();
    let total: Vec<f64> = (0..f0.grid.n_x).map(|ix| reference.iter().map(|a| a.comps[1][ix]).sum()).collect();
    let diff: Vec<f64> = inst.em.a.comps[1].iter().zip(&total).map(|(a, b)| a - b).collect();
    assert!(max_abs(&diff) <= 1e-14 * max_abs(&total).max(1e-300), "{}", max_abs(&diff));
    assert!(max_abs(&total) > 0.0);
}

#[test]
fn vd1_matches_vm_without_remainder() {
    let cfg = base_2d(Model::VM, 0.2, 0.0);
    let eq = cfg.equilibrium().unwrap();
    let f0 = cfg.initial_f(&eq).unwrap();
    let n = f0.grid.n_x;
    let vm = FieldModel::new(Model::VM, cfg.eps, 0.0, &eq, f0.grid).unwrap();
    let vd = FieldModel::new(Model::VD(1), cfg.eps, 0.0, &eq, f0.grid).unwrap();
    let a = vm.instant(&f0, &EmVars::zeros(n)).unwrap().em;
    let b = vd.instant(&f0, &EmVars::zeros(n)).unwrap().em;
    for c in 0..2 {
        for ix in 0..n {
            assert!((a.a.comps[c][ix] - b.a.comps[c][ix]).abs() < 1e-15);
            assert!((a.dta.comps[c][ix] - b.dta.comps[c][ix]).abs() < 1e-13);
        }
    }
}

#[test]
fn zero_perturbation_gives_zero_prepared_fields() {
    let mut cfg = base_2d(Model::VM, 0.1, 0.01);
    cfg.perturbation.clear();
    let eq = cfg.equilibrium().unwrap();
    let f0 = cfg.initial_f(&eq).unwrap();
    for p in [4, 6, 8] {
        let d = well_prepared_init(&cfg, &eq, &f0, p).unwrap();
        assert!(d.e.max_abs() == 0.0 && max_abs(d.b.as_ref().unwrap()) == 0.0);
    }
    assert!(matches!(well_prepared_init(&cfg, &eq, &f0, 5), Err(Error::Unsupported(_))));
}

#[test]
fn prepared_residual_shrinks_with_order() {
    let cfg = base_2d(Model::VM, 0.1, 0.0);
    let eq = cfg.equilibrium().unwrap();
    let f0 = cfg.initial_f(&eq).unwrap();
    let r: Vec<f64> = [4, 6, 8].iter().map(|&p| well_prepared_residual(&cfg, &eq, &f0, p).unwrap()).collect();
    assert!(r[0] > 10.0 * r[1] && r[1] > 10.0 * r[2], "{r:?}");
}

#[test]
fn explicit_fields_respect_gauss() {
    let mut cfg = RunConfig::landau_1d(0.5, 1e-3);
    cfg.prepared_order = 0;
    cfg.field_modes = vec![FieldMode { component: FieldComponent::E1, k: 1, amplitude: 0.3, phase: 0.0 }];
    assert!(matches!(run(&cfg), Err(Error::InvalidArgument(m)) if m.contains("Gauss")));
    // the consistent choice: -d_x phi with -phi'' = cos(kx) gives E1 = sin(kx)/k
    cfg.field_modes[0] = FieldMode { component: FieldComponent::E1, k: 1, amplitude: 2.0, phase: -PI / 2.0 };
    cfg.t_final = 0.2;
    assert!(run(&cfg).is_ok());
}

#[test]
fn mean_b3_is_rejected() {
    let mut cfg = base_2d(Model::VM, 0.2, 1e-3);
    cfg.prepared_order = 0;
    cfg.field_modes = vec![FieldMode { component: FieldComponent::B3, k: 0, amplitude: 1.0, phase: 0.0 }];
    assert!(matches!(cfg.validate(), Err(Error::Unsupported(_))));
}

#[test]
fn explicit_vm_fields_are_reproduced() {
    let mut cfg = base_2d(Model::VM, 0.2, 1e-3);
    cfg.prepared_order = 0;
    cfg.field_modes = vec![
        FieldMode { component: FieldComponent::B3, k: 1, amplitude: 0.7, phase: 0.2 },
        FieldMode { component: FieldComponent::E2, k: 2, amplitude: -0.4, phase: 0.0 },
    ];
    let eq = cfg.equilibrium().unwrap();
    let f0 = cfg.initial_f(&eq).unwrap();
    let init = initial_state(&cfg, &eq, &f0).unwrap();
    let fm = FieldModel::new(Model::VM, cfg.eps, cfg.delta, &eq, f0.grid).unwrap();
    let inst = fm.instant(&init.f, &init.vars).unwrap();
    let b = inst.em.b_field(&fm.sp).unwrap();
    let e = inst.em.e_field(&fm.sp);
    let g = f0.grid;
    for ix in 0..g.n_x {
        let x = g.x(ix) * 2.0 * PI / g.length;
        assert!((b[ix] - 0.7 * (x + 0.2).cos()).abs() < 1e-12);
        assert!((e.comps[1][ix] + 0.4 * (2.0 * x).cos()).abs() < 1e-12);
    }
}

fn short_vm_snapshots(dt: f64) -> (Vec<FullSnapshot>, Equilibrium) {
    let mut cfg = base_2d(Model::VM, 1.0, 0.05);
    cfg.dt = dt;
    cfg.t_final = 3.0 * dt;
    cfg.snapshot_every = 1;
    let tr = vm_run(&cfg).unwrap();
    let eq = cfg.equilibrium().unwrap();
    let s = tr.snapshots[1..4].iter().map(|s| FullSnapshot::from_perturbation(s, &eq, cfg.delta).unwrap()).collect();
    (s, eq)
}

#[test]
fn scaling_identity_and_round_trip() {
    let (s, _) = short_vm_snapshots(0.05);
    let id = rescale_velocity(&s[0], 1.0).unwrap();
    assert_eq!(id, s[0]);
    for lambda in [0.5, 2.0] {
        let back = rescale_velocity(&rescale_velocity(&s[0], lambda).unwrap(), 1.0 / lambda).unwrap();
        let err = back.f.values.iter().zip(&s[0].f.values).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        assert!(err < 1e-13, "{err}");
        assert!((back.eps - s[0].eps).abs() < 1e-15 && (back.t - s[0].t).abs() < 1e-14);
    }
}

#[test]
fn scaled_snapshots_keep_the_residual() {
    let (s, _) = short_vm_snapshots(0.05);
    let native = system_residual([&s[0], &s[1], &s[2]], None).unwrap();
    for lambda in [0.5, 2.0] {
        let v: Vec<FullSnapshot> = s.iter().map(|x| rescale_velocity(x, lambda).unwrap()).collect();
        let r = system_residual([&v[0], &v[1], &v[2]], None).unwrap();
        assert!((r.max() - native.max()).abs() < 1e-8 * native.max().max(1e-12));
        let st: Vec<FullSnapshot> = s.iter().map(|x| rescale_spacetime(x, lambda).unwrap()).collect();
        let r = system_residual([&st[0], &st[1], &st[2]], Some(s[0].f.grid.length * lambda * lambda)).unwrap();
        assert!((r.max() - native.max()).abs() < 1e-8 * native.max().max(1e-12));
        assert!(matches!(system_residual([&st[0], &st[1], &st[2]], Some(1.0)), Err(Error::GridMismatch(_))));
    }
    assert!(native.gauss < 1e-10);
}

#[test]
fn validation_rejects_bad_configs() {
    let mut cfg = base_2d(Model::VM, 0.0, 1e-3);
    assert!(cfg.validate().is_err());
    cfg.eps = 0.1;
    cfg.prepared_order = 5;
    assert!(cfg.validate().is_err());
    cfg.prepared_order = 4;
    cfg.perturbation[0].k = 0;
    assert!(cfg.validate().is_err());
    cfg.perturbation[0].k = 1;
    cfg.dt = 0.3;
    assert!(cfg.validate().is_err());
}

#[test]
fn linear_fit_recovers_a_line() {
    let x = [0.0, 1.0, 2.0, 3.0];
    let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
    let (s, c, se, r2) = linear_fit(&x, &y);
    assert!((s - 2.0).abs() < 1e-14 && (c + 1.0).abs() < 1e-14 && se < 1e-12 && (r2 - 1.0).abs() < 1e-14);
    assert!((log_log_slope(&[1.0, 2.0, 4.0], &[1.0, 8.0, 64.0]) - 3.0).abs() < 1e-12);
}
