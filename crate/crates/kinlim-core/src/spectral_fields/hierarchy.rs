//! Higher-order Darwin hierarchy on the transverse component.
//!
//! Per Fourier mode every operator of the hierarchy acts on the transverse
//! (`e2`) component only, so the tables are scalars per mode. The full 2x2
//! symbols of `S_j` are kept for inspection and symmetry checks.

use num_complex::Complex64;

use crate::equilibria::{gamma, Equilibrium};
use crate::error::{invalid, Error, Result};
use crate::phase_space::MomentSet;

use super::{Spectral, VectorField};

type C = Complex64;

/// Per-mode tables of the hierarchy at order `n`. Level indices are 1-based;
/// entry 0 of every level table is unused.
#[derive(Clone, Debug)]
pub struct DarwinHierarchy {
    pub n: usize,
    pub eps: f64,
    /// Transverse shift constant `Lambda_22`.
    pub lambda_t: f64,
    /// `Lambda_21`, coupling the mean of `A1` into the transverse current.
    pub lambda_21: f64,
    pub kappa: Vec<f64>,
    /// `sym_sk[j][mode]`: full 2x2 symbol of `S_j`.
    pub sym_sk: Vec<Vec<[[f64; 2]; 2]>>,
    /// `op_skj[k][j][mode]`: transverse symbol of `S_{k,j}`.
    pub op_skj: Vec<Vec<Vec<f64>>>,
    /// `delta_eps_k[k][mode]`: symbol of `Delta_{eps,k}` (negative).
    pub delta_eps_k: Vec<Vec<f64>>,
    /// `m_weight[j][mode]`: symbol of `(-Delta_eps)^{-j} (i kappa)^{2j}`.
    pub m_weight: Vec<Vec<f64>>,
}

/// Assembles the hierarchy for `mu`, `eps` and order `n` on the Fourier modes of `sp`.
pub fn build_hierarchy(eq: &Equilibrium, eps: f64, n: usize, sp: &Spectral) -> Result<DarwinHierarchy> {
    if n < 1 {
        return invalid("hierarchy order must be >= 1");
    }
    if eq.dim_v != 2 {
        return Err(Error::Unsupported("the Darwin hierarchy needs d_v = 2".into()));
    }
    if !(eps > 0.0) {
        return invalid("the Darwin hierarchy needs eps > 0");
    }
    let mc = eq.moment_constants(eps)?;
    let lambda_t = mc.lambda_matrix[1][1];
    let lambda_21 = mc.lambda_matrix[1][0];
    let nm = sp.n;
    let kappa: Vec<f64> = (0..nm).map(|m| sp.kappa(m)).collect();
    let d1: Vec<f64> = kappa.iter().map(|k| k * k + eps * eps * lambda_t).collect();

    // velocity integrals I_j[i][m] = int vhat_i vhat_1^{2j} d_m mu
    let vg = eq.v_grid;
    let vol = vg.cell_volume();
    let mut ints = vec![[[0.0; 2]; 2]; n + 1];
    for iv in 0..vg.len() {
        let p = vg.point(iv);
        let g = gamma(&p[..2], eps);
        let vh = [p[0] / g, p[1] / g];
        let gr = eq.grad(&p[..2]);
        let mut pw = 1.0;
        for item in ints.iter_mut().skip(1) {
            pw *= vh[0] * vh[0];
            for i in 0..2 {
                for m in 0..2 {
                    item[i][m] += vh[i] * pw * gr[m] * vol;
                }
            }
        }
    }

    let mut m_weight = vec![vec![0.0; nm]; n + 1];
    let mut sym_sk = vec![vec![[[0.0; 2]; 2]; nm]; n + 1];
    for j in 1..=n {
        for mode in 1..nm {
            let w = (-1f64).powi(j as i32) * (kappa[mode] * kappa[mode] / d1[mode]).powi(j as i32);
            m_weight[j][mode] = w;
            for i in 0..2 {
                for m in 0..2 {
                    sym_sk[j][mode][i][m] = w * ints[j][i][m];
                }
            }
        }
    }

    let s_t = |j: usize, mode: usize| sym_sk[j][mode][1][1];
    let mut dk = vec![vec![0.0; nm]; n + 1];
    let mut skj = vec![vec![vec![0.0; nm]; n + 1]; n + 1];
    for mode in 1..nm {
        dk[1][mode] = d1[mode];
        skj[1][1][mode] = -1.0;
    }
    for k in 1..n {
        let e2k2 = eps.powi(2 * k as i32 + 2);
        for mode in 1..nm {
            let corr: f64 = (1..=k).map(|j| skj[k][j][mode] * s_t(j, mode)).sum();
            let dn = dk[k][mode] - e2k2 * corr;
            if dn.abs() < 1e-10 {
                return Err(Error::HierarchyAssembly { level: k + 1, mode, symbol: -dn });
            }
            dk[k + 1][mode] = dn;
            for jj in 1..=k + 1 {
                let mut bracket = d1[mode] * skj[k][jj - 1][mode];
                for i in 1..=k {
                    for l in jj..=k {
                        bracket -= eps.powi(2 * l as i32) * skj[k][i][mode] * s_t(i, mode) * skj[l][jj][mode];
                    }
                }
                skj[k + 1][jj][mode] = -bracket / dn;
            }
        }
    }
    let delta_eps_k = dk.iter().map(|row| row.iter().map(|d| -d).collect()).collect();
    Ok(DarwinHierarchy { n, eps, lambda_t, lambda_21, kappa, sym_sk, op_skj: skj, delta_eps_k, m_weight })
}

/// Affine quantity `a + b X` in the unknown total transverse potential `X`.
#[derive(Clone, Copy, Debug)]
struct Aff {
    a: C,
    b: f64,
}

impl Aff {
    fn add(self, o: Aff) -> Aff {
        Aff { a: self.a + o.a, b: self.b + o.b }
    }
    fn scale(self, s: f64) -> Aff {
        Aff { a: self.a * s, b: self.b * s }
    }
}

impl DarwinHierarchy {
    /// Transverse spectra `A_1..A_N` of one mode from the transverse current
    /// `j2` and moment spectra `ms[j]` (`j = 1..N-1`) of `g`, with `g`'s
    /// dependence on the total potential `X` given by `(dj, dm[j])`.
    fn mode_potentials(&self, mode: usize, j2: Aff, ms: &[Aff]) -> Vec<Aff> {
        let eps = self.eps;
        let d1 = -self.delta_eps_k[1][mode];
        let mut out = vec![j2.scale(eps / d1)];
        for k in 1..self.n {
            let sum_a = out.iter().fold(Aff { a: C::new(0.0, 0.0), b: 0.0 }, |s, x| s.add(*x));
            let mut acc = Aff { a: C::new(0.0, 0.0), b: 0.0 };
            for j in 1..=k {
                let s_j = self.sym_sk[j][mode][1][1];
                let mj = Aff { a: ms[j].a * self.m_weight[j][mode], b: ms[j].b * self.m_weight[j][mode] };
                acc = acc.add(mj.add(sum_a.scale(eps * s_j)).scale(self.op_skj[k][j][mode]));
            }
            let dk1 = -self.delta_eps_k[k + 1][mode];
            out.push(acc.scale(eps.powi(2 * k as i32 + 1) / dk1));
        }
        out
    }

    fn collect(&self, sp: &Spectral, per_mode: Vec<Vec<C>>) -> Vec<VectorField> {
        (0..self.n)
            .map(|j| {
                let spec: Vec<C> = per_mode.iter().map(|v| v[j]).collect();
                VectorField::new(vec![vec![0.0; sp.n], sp.inverse(&spec)])
            })
            .collect()
    }

    /// Spectra of `A_1..A_N` from spectra of the `g`-moments.
    /// `j2` is the transverse current, `ms[j]` the component of `m_{2j+1}`
    /// with one transverse index (`ms[0]` unused).
    pub fn potentials_from_g_spectra(&self, j2: &[C], ms: &[Vec<C>]) -> Vec<Vec<C>> {
        let nm = j2.len();
        let zero = C::new(0.0, 0.0);
        (0..nm)
            .map(|mode| {
                if mode == 0 {
                    return vec![zero; self.n];
                }
                let jm = Aff { a: j2[mode], b: 0.0 };
                let mm: Vec<Aff> =
                    (0..self.n).map(|j| Aff { a: if j == 0 { zero } else { ms[j][mode] }, b: 0.0 }).collect();
                self.mode_potentials(mode, jm, &mm).into_iter().map(|x| x.a).collect()
            })
            .collect()
    }

    /// Spectra of `A_1..A_N` from `f`-moments, with `g = f - eps A . grad mu`
    /// and `A` the hierarchy potential itself (solved exactly per mode).
    pub fn potentials_from_f_spectra(&self, j2: &[C], ms: &[Vec<C>]) -> Vec<Vec<C>> {
        let eps = self.eps;
        let nm = j2.len();
        let zero = C::new(0.0, 0.0);
        (0..nm)
            .map(|mode| {
                if mode == 0 {
                    return vec![zero; self.n];
                }
                // j2(g) = j2(f) + eps Lambda22 X ; M_j(g) = M_j(f) - eps s_j X
                let jm = Aff { a: j2[mode], b: eps * self.lambda_t };
                let mm: Vec<Aff> = (0..self.n)
                    .map(|j| {
                        if j == 0 {
                            return Aff { a: zero, b: 0.0 };
                        }
                        let w = self.m_weight[j][mode];
                        let s_j = self.sym_sk[j][mode][1][1];
                        // raw moment affine part so that w * (a + b X) = M_j(f) - eps s_j X
                        Aff { a: ms[j][mode], b: -eps * s_j / w }
                    })
                    .collect();
                let aff = self.mode_potentials(mode, jm, &mm);
                let tot = aff.iter().fold(Aff { a: zero, b: 0.0 }, |s, x| s.add(*x));
                let x = tot.a / (1.0 - tot.b);
                aff.into_iter().map(|p| p.a + x * p.b).collect()
            })
            .collect()
    }

    /// Per-mode table rows `(mode, kappa, level, name, value)` for export.
    pub fn table_rows(&self) -> Vec<(usize, f64, usize, &'static str, f64)> {
        let mut rows = Vec::new();
        for mode in 0..self.kappa.len() {
            let k = self.kappa[mode];
            for lvl in 1..=self.n {
                rows.push((mode, k, lvl, "delta_eps_k", self.delta_eps_k[lvl][mode]));
                rows.push((mode, k, lvl, "s_j", self.sym_sk[lvl][mode][1][1]));
                for j in 1..=lvl {
                    rows.push((mode, k, lvl * 100 + j, "s_kj", self.op_skj[lvl][j][mode]));
                }
            }
        }
        rows
    }
}

fn moment_spectra(h: &DarwinHierarchy, sp: &Spectral, moments: &MomentSet) -> Result<(Vec<C>, Vec<Vec<C>>)> {
    if moments.j.len() < 2 {
        return Err(Error::Unsupported("Darwin potentials need d_v = 2 moments".into()));
    }
    let need = 2 * h.n - 1;
    if h.n > 1 && moments.max_ell < need {
        return invalid(format!("hierarchy of order {} needs moments up to {need}", h.n));
    }
    let j2 = sp.forward(&moments.j[1]);
    let ms = (0..h.n)
        .map(|j| if j == 0 { vec![C::new(0.0, 0.0); sp.n] } else { sp.forward(moments.component(2 * j + 1, 1)) })
        .collect();
    Ok((j2, ms))
}

/// `A_1..A_N` from the moments of the shifted distribution `g`.
pub fn darwin_potentials(h: &DarwinHierarchy, sp: &Spectral, moments_g: &MomentSet) -> Result<Vec<VectorField>> {
    let (j2, ms) = moment_spectra(h, sp, moments_g)?;
    Ok(h.collect(sp, h.potentials_from_g_spectra(&j2, &ms)))
}

/// `A_1..A_N` from the moments of `f`, with the shift taken self-consistently
/// with `A = sum_j A_j`.
pub fn darwin_potentials_from_f(h: &DarwinHierarchy, sp: &Spectral, moments_f: &MomentSet) -> Result<Vec<VectorField>> {
    let (j2, ms) = moment_spectra(h, sp, moments_f)?;
    Ok(h.collect(sp, h.potentials_from_f_spectra(&j2, &ms)))
}
