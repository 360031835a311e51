//! Linearized Vlasov-Poisson response of one Fourier mode.
//!
//! For a mode `kappa` the density obeys the Volterra equation
//! `rho(t) = S(t) + int_0^t K(t - s) rho(s) ds`, with
//! `K(tau) = (i/|kappa|^2) int e^{-i kappa.vhat tau} kappa.grad mu dv` and
//! `S(t) = int h(v) e^{-i kappa.vhat t} dv` for an initial perturbation
//! `h(v) e^{i kappa x}`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::equilibria::{gamma, Equilibrium};
use crate::error::{invalid, Error, Result};

type C = Complex64;

/// Velocity quadrature reduced to phase coefficients `a_i = kappa.vhat_i`
/// and weights; integrals become `sum_i w_i e^{-i a_i t}`.
#[derive(Clone, Debug)]
struct PhaseQuadrature {
    a: Vec<f64>,
    w: Vec<C>,
}

impl PhaseQuadrature {
    fn eval(&self, t: f64) -> C {
        self.a.iter().zip(&self.w).map(|(a, w)| w * C::from_polar(1.0, -a * t)).sum()
    }

    fn series(&self, dt: f64, n: usize) -> Vec<C> {
        (0..n).into_par_iter().map(|i| self.eval(i as f64 * dt)).collect()
    }
}

fn fine_points(eq: &Equilibrium) -> usize {
    match eq.dim_v {
        1 => 4096,
        2 => 256,
        _ => 48,
    }
}

/// Nodes of a uniform midpoint grid on `[-v_max, v_max]^d` with weights
/// `weight(v) h^d`; for `eps = 0` and `kappa` along `e1` the transverse
/// directions are summed out first.
fn phase_quadrature(
    eq: &Equilibrium,
    eps: f64,
    kappa: &[f64],
    weight: &(dyn Fn(&[f64]) -> C + Sync),
) -> Result<PhaseQuadrature> {
    let d = eq.dim_v;
    if kappa.len() != d {
        return invalid(format!("kappa has {} components, expected {d}", kappa.len()));
    }
    if kappa.iter().all(|&k| k == 0.0) {
        return Err(Error::ZeroMode);
    }
    let n = fine_points(eq);
    let vm = eq.v_grid.v_max;
    let h = 2.0 * vm / n as f64;
    let node = |i: usize| -vm + (i as f64 + 0.5) * h;
    let along_e1 = kappa.iter().skip(1).all(|&k| k == 0.0);
    if d == 1 || (eps == 0.0 && along_e1) {
        let n1 = if d == 1 { n } else { 2048 };
        let h1 = 2.0 * vm / n1 as f64;
        let tn = n.pow((d - 1) as u32);
        let (a, w): (Vec<f64>, Vec<C>) = (0..n1)
            .into_par_iter()
            .map(|i| {
                let v1 = -vm + (i as f64 + 0.5) * h1;
                let mut s = C::new(0.0, 0.0);
                let mut v = vec![v1; d];
                for t in 0..tn {
                    let mut r = t;
                    for c in 1..d {
                        v[c] = node(r % n);
                        r /= n;
                    }
                    s += weight(&v);
                }
                let vh = v1 / gamma(&[v1], eps);
                (kappa[0] * vh, s * h1 * h.powi(d as i32 - 1))
            })
            .unzip();
        return Ok(PhaseQuadrature { a, w });
    }
    let total = n.pow(d as u32);
    let dv = h.powi(d as i32);
    let (a, w): (Vec<f64>, Vec<C>) = (0..total)
        .into_par_iter()
        .map(|idx| {
            let mut v = vec![0.0; d];
            let mut r = idx;
            for c in v.iter_mut() {
                *c = node(r % n);
                r /= n;
            }
            let g = gamma(&v, eps);
            let a: f64 = kappa.iter().zip(&v).map(|(k, x)| k * x / g).sum();
            (a, weight(&v) * dv)
        })
        .unzip();
    Ok(PhaseQuadrature { a, w })
}

fn kernel_quadrature(eq: &Equilibrium, eps: f64, kappa: &[f64]) -> Result<PhaseQuadrature> {
    let k2: f64 = kappa.iter().map(|k| k * k).sum();
    let kv = kappa.to_vec();
    let weight = move |v: &[f64]| -> C {
        let g = eq.grad(v);
        let kg: f64 = kv.iter().enumerate().map(|(i, k)| k * g[i]).sum();
        C::new(0.0, kg / k2)
    };
    phase_quadrature(eq, eps, kappa, &weight)
}

/// Kernel `K(kappa, tau)` of the mode equation.
pub fn volterra_kernel(eq: &Equilibrium, eps: f64, kappa: &[f64], tau: f64) -> Result<C> {
    if !(tau >= 0.0) {
        return invalid(format!("tau must be >= 0, got {tau}"));
    }
    Ok(kernel_quadrature(eq, eps, kappa)?.eval(tau))
}

/// `K(kappa, i dt)` for `i = 0..n`.
pub fn kernel_series(eq: &Equilibrium, eps: f64, kappa: &[f64], dt: f64, n: usize) -> Result<Vec<C>> {
    Ok(kernel_quadrature(eq, eps, kappa)?.series(dt, n))
}

/// Free-streaming density `S(i dt)` of the initial profile `h(v)`.
pub fn free_source(
    eq: &Equilibrium,
    eps: f64,
    kappa: &[f64],
    h: &(dyn Fn(&[f64]) -> C + Sync),
    dt: f64,
    n: usize,
) -> Result<Vec<C>> {
    Ok(phase_quadrature(eq, eps, kappa, h)?.series(dt, n))
}

/// One-mode Volterra problem on the grid `t_i = i dt`, `i = 0..=T/dt`.
#[derive(Clone, Debug)]
pub struct VolterraProblem {
    pub kappa: Vec<f64>,
    pub kernel: Vec<C>,
    pub source: Vec<C>,
    pub dt: f64,
    pub t_final: f64,
}

impl VolterraProblem {
    /// Samples kernel and source for the perturbation `h(v) e^{i kappa x}`.
    pub fn new(
        eq: &Equilibrium,
        eps: f64,
        kappa: &[f64],
        h: &(dyn Fn(&[f64]) -> C + Sync),
        dt: f64,
        t_final: f64,
    ) -> Result<Self> {
        if !(dt > 0.0) || !(t_final > 0.0) {
            return invalid("dt and T must be positive");
        }
        let n = (t_final / dt).round() as usize + 1;
        Ok(Self {
            kappa: kappa.to_vec(),
            kernel: kernel_series(eq, eps, kappa, dt, n)?,
            source: free_source(eq, eps, kappa, h, dt, n)?,
            dt,
            t_final,
        })
    }
}

/// Trapezoid marching; explicit because `K(0) = 0`.
pub fn volterra_solve(p: &VolterraProblem) -> Result<Vec<C>> {
    if !(p.dt > 0.0) {
        return invalid("dt must be positive");
    }
    let n = p.source.len();
    if p.kernel.len() < n {
        return invalid("kernel series shorter than source");
    }
    let k = &p.kernel;
    let dt = p.dt;
    let mut rho: Vec<C> = Vec::with_capacity(n);
    for i in 0..n {
        let mut s = C::new(0.0, 0.0);
        if i > 0 {
            s += 0.5 * k[i] * rho[0];
            for j in 1..i {
                s += k[i - j] * rho[j];
            }
        }
        let den = C::new(1.0, 0.0) - 0.5 * dt * k[0];
        rho.push((p.source[i] + dt * s) / den);
    }
    Ok(rho)
}

/// Residual of the discrete equation, relative to `max |rho|`.
pub fn volterra_residual(p: &VolterraProblem, rho: &[C]) -> f64 {
    let k = &p.kernel;
    let mut worst: f64 = 0.0;
    for i in 0..rho.len() {
        let mut s = 0.5 * k[0] * rho[i];
        if i > 0 {
            s += 0.5 * k[i] * rho[0];
            for j in 1..i {
                s += k[i - j] * rho[j];
            }
        }
        worst = worst.max((rho[i] - p.source[i] - p.dt * s).norm());
    }
    let m = rho.iter().map(|r| r.norm()).fold(0.0, f64::max);
    if m == 0.0 {
        worst
    } else {
        worst / m
    }
}

/// Rate `s` with `series ~ C e^{s t}` on `t in [window.0, window.1]`.
///
/// `Re s` comes from a least-squares fit of `log |rho|` and `Im s` from the
/// unwrapped phase. When `|rho|` itself oscillates (a real standing mode),
/// the fit uses its local maxima instead and `Im s` is `pi` over the peak
/// spacing.
pub fn extract_rate(series: &[C], dt: f64, window: (f64, f64)) -> Result<C> {
    let i0 = (window.0 / dt).ceil().max(0.0) as usize;
    let i1 = ((window.1 / dt).floor() as usize).min(series.len().saturating_sub(1));
    if !(dt > 0.0) || i1 <= i0 + 2 {
        return invalid("extract_rate: window outside the series");
    }
    let seg = &series[i0..=i1];
    if seg.iter().any(|z| z.norm() == 0.0 || !z.norm().is_finite()) {
        return Err(Error::DegenerateFit("series vanishes inside the window".into()));
    }
    let t: Vec<f64> = (i0..=i1).map(|i| i as f64 * dt).collect();
    let mag: Vec<f64> = seg.iter().map(|z| z.norm().ln()).collect();

    let mut peaks = Vec::new();
    for i in 1..seg.len() - 1 {
        if mag[i] > mag[i - 1] && mag[i] >= mag[i + 1] {
            let (a, b, c) = (mag[i - 1], mag[i], mag[i + 1]);
            let den = a - 2.0 * b + c;
            let off = if den != 0.0 { 0.5 * (a - c) / den } else { 0.0 };
            peaks.push((t[i] + off * dt, b - 0.25 * (a - c) * off));
        }
    }
    let rate = if peaks.len() >= 3 {
        let (pt, pv): (Vec<f64>, Vec<f64>) = peaks.iter().cloned().unzip();
        let (slope, _) = line_fit(&pt, &pv);
        let spacing = (pt[pt.len() - 1] - pt[0]) / (pt.len() - 1) as f64;
        C::new(slope, std::f64::consts::PI / spacing)
    } else {
        let mut ph = Vec::with_capacity(seg.len());
        let mut acc = seg[0].arg();
        ph.push(acc);
        for w in seg.windows(2) {
            acc += (w[1] / w[0]).arg();
            ph.push(acc);
        }
        let spread = |x: &[f64]| {
            x.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - x.iter().cloned().fold(f64::INFINITY, f64::min)
        };
        if spread(&mag) < 1e-12 && spread(&ph) < 1e-12 {
            return Err(Error::DegenerateFit("flat signal".into()));
        }
        C::new(line_fit(&t, &mag).0, line_fit(&t, &ph).0)
    };
    Ok(rate)
}

fn line_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
