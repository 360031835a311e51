//! Experiment dispatch and on-disk output: CSV tables, SVG plots, binary
//! snapshots and a manifest, under one directory per configuration hash.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use kinlim_core::solvers::{run, Model, Snapshot};
use kinlim_core::Equilibrium;

use crate::config::{ExperimentKind, ExperimentSpec};
use crate::experiments::{self as ex, Fit};

/// Rows of one CSV file. The config hash is prepended on write.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push<I: IntoIterator<Item = String>>(&mut self, row: I) {
        self.rows.push(row.into_iter().collect());
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Plot {
    pub name: String,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

/// Everything an experiment produces.
#[derive(Clone, Debug, Default)]
pub struct Report {
    pub tables: Vec<Table>,
    pub plots: Vec<Plot>,
    /// Headline numbers, written to the manifest and printed.
    pub summary: Vec<(String, String)>,
    pub snapshots: Vec<Snapshot>,
}

fn num(x: f64) -> String {
    format!("{x:.12e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_else(|| "nan".into())
}

fn fit_summary(r: &mut Report, name: &str, fit: &Option<Fit>) {
    if let Some(f) = fit {
        r.summary.push((format!("{name}_slope"), num(f.slope)));
        r.summary.push((format!("{name}_ci95"), num(f.ci95())));
        r.summary.push((format!("{name}_r2"), num(f.r2)));
    } else {
        r.summary.push((format!("{name}_slope"), "nan".into()));
    }
}

fn series(label: &str, x: &[f64], y: &[f64]) -> Series {
    Series { label: label.into(), points: x.iter().copied().zip(y.iter().copied()).collect() }
}

fn plot(name: &str, title: &str, x: &str, y: &str, log_x: bool, log_y: bool, series: Vec<Series>) -> Plot {
    Plot { name: name.into(), title: title.into(), x_label: x.into(), y_label: y.into(), log_x, log_y, series }
}

/// Penrose scan of the configured equilibrium on a dedicated velocity grid.
pub fn penrose_report(spec: &ExperimentSpec) -> anyhow::Result<Report> {
    let b = &spec.base;
    let eq = Equilibrium::new(b.equilibrium.clone(), ex::scan_grid(b.grid.dim_v, b.grid.v_max)?)?;
    let rep = ex::penrose_scan(&eq, b.eps, b.grid.length, spec.k_max)?;
    let mut r = Report::default();
    let mut t = Table::new("penrose", &["kappa", "winding"]);
    for (k, w) in &rep.winding {
        t.push([num(k[0]), w.to_string()]);
    }
    let mut roots = Table::new("roots", &["kappa", "re_omega", "im_omega"]);
    for root in &rep.roots {
        roots.push([num(root.kappa[0]), num(root.omega.re), num(root.omega.im)]);
    }
    r.summary.push(("classification".into(), format!("{:?}", rep.classification)));
    r.summary.push(("margin".into(), num(rep.margin)));
    r.summary.push(("k_worst".into(), num(rep.k_worst.first().copied().unwrap_or(f64::NAN))));
    r.tables.push(t);
    r.tables.push(roots);
    Ok(r)
}

/// A single run of the base configuration.
pub fn run_report(spec: &ExperimentSpec) -> anyhow::Result<Report> {
    let tr = run(&spec.base)?;
    let d = &tr.diagnostics;
    let mut t = Table::new(
        "diagnostics",
        &["t", "charge", "energy", "e_norm", "b_norm", "field_h1", "gauge", "gauss", "bootstrap"],
    );
    for i in 0..d.t.len() {
        t.push(
            [
                d.t[i],
                d.charge[i],
                d.energy[i],
                d.e_norm[i],
                d.b_norm[i],
                d.field_h1[i],
                d.gauge[i],
                d.gauss[i],
                d.bootstrap[i],
            ]
            .map(num),
        );
    }
    let mut r = Report::default();
    r.plots.push(plot("e_norm", "field norms", "t", "norm", false, true, {
        let mut s = vec![series("||E||", &d.t, &d.e_norm)];
        if d.b_norm.iter().any(|b| *b > 0.0) {
            s.push(series("||B||", &d.t, &d.b_norm));
        }
        s
    }));
    r.tables.push(t);
    r.summary.push(("steps".into(), tr.last().step.to_string()));
    r.summary.push(("t_end".into(), num(tr.last().t)));
    if let Some(e) = &tr.aborted {
        r.summary.push(("aborted".into(), e.to_string()));
    }
    for (i, w) in tr.warnings.iter().enumerate() {
        r.summary.push((format!("warning_{i}"), w.clone()));
    }
    r.snapshots = tr.snapshots;
    Ok(r)
}

/// Runs the configured experiment.
pub fn run_experiment(spec: &ExperimentSpec) -> anyhow::Result<Report> {
    let base = &spec.base;
    let mut r = Report::default();
    match spec.kind {
        ExperimentKind::PenroseScan => return penrose_report(spec),
        ExperimentKind::Landau => {
            let resolutions = if spec.resolutions.is_empty() { vec![base.grid.n_v] } else { spec.resolutions.clone() };
            let mut t = Table::new("landau", &["n_v", "kappa", "simulated", "root", "volterra"]);
            let mut curves = Vec::new();
            for &n_v in &resolutions {
                let mut c = base.clone();
                c.grid.n_v = n_v;
                let l = ex::landau(&c, spec.window)?;
                t.push([n_v.to_string(), num(l.kappa), num(l.simulated), num(l.root), num(l.volterra)]);
                curves.push(series(&format!("n_v = {n_v}"), &l.t, &l.e_mode));
                r.summary.push((format!("rate_n{n_v}"), num(l.simulated)));
                r.summary.push((format!("root_n{n_v}"), num(l.root)));
                r.summary.push((format!("volterra_n{n_v}"), num(l.volterra)));
            }
            r.tables.push(t);
            r.plots.push(plot("e_mode", "|E_k(t)|", "t", "|E_k|", false, true, curves));
        }
        ExperimentKind::TwoStreamTiming => {
            let res = ex::instability_timing(base, &spec.eps_values, spec.delta_power, spec.threshold)?;
            let mut t = Table::new("timing", &["eps", "t_star"]);
            let mut pts = Vec::new();
            for (e, ts) in res.eps.iter().zip(&res.t_star) {
                t.push([num(*e), opt(*ts)]);
                if let Some(ts) = ts {
                    pts.push(((1.0 / e).ln(), *ts));
                }
            }
            r.tables.push(t);
            r.plots.push(plot(
                "timing",
                "threshold time",
                "log(1/eps)",
                "t*",
                false,
                false,
                vec![Series { label: "t*".into(), points: pts }],
            ));
            fit_summary(&mut r, "t_star", &res.fit);
        }
        ExperimentKind::Weibel => {
            let w = ex::weibel(base, spec.window)?;
            let mut t = Table::new("weibel", &["t", "b_norm"]);
            for (a, b) in w.t.iter().zip(&w.b_norm) {
                t.push([num(*a), num(*b)]);
            }
            r.tables.push(t);
            r.plots.push(plot("b_norm", "||B||", "t", "||B||", false, true, vec![series("||B||", &w.t, &w.b_norm)]));
            r.summary.push(("rate".into(), num(w.rate)));
        }
        ExperimentKind::ConvVmVp | ExperimentKind::ConvVmVd(_) => {
            let target = match spec.kind {
                ExperimentKind::ConvVmVd(n) => Model::VD(n),
                _ => Model::VP,
            };
            let res = ex::convergence(base, target, &spec.eps_values)?;
            let mut t = Table::new("convergence", &["eps", "error", "status"]);
            let mut pts = Vec::new();
            for p in &res.points {
                match &p.error {
                    Ok(e) => {
                        t.push([num(p.eps), num(*e), "ok".into()]);
                        pts.push((p.eps, *e));
                    }
                    Err(err) => t.push([num(p.eps), "nan".into(), err.to_string()]),
                }
            }
            r.tables.push(t);
            r.plots.push(plot(
                "convergence",
                "field distance",
                "eps",
                "error",
                true,
                true,
                vec![Series { label: spec.kind.name(), points: pts }],
            ));
            fit_summary(&mut r, "error", &res.fit);
        }
        ExperimentKind::HierarchyCheck => {
            let h = ex::hierarchy_check(spec.levels, &spec.eps_values)?;
            let cols: Vec<String> = (1..=spec.levels).map(|j| format!("a{j}")).collect();
            let mut names = vec!["eps"];
            names.extend(cols.iter().map(|s| s.as_str()));
            names.push("s22_deviation");
            let mut t = Table::new("hierarchy", &names);
            for (i, e) in h.eps.iter().enumerate() {
                let mut row = vec![num(*e)];
                row.extend(h.norms[i].iter().map(|x| num(*x)));
                row.push(num(h.s22_deviation[i]));
                t.push(row);
            }
            r.tables.push(t);
            let curves = (0..spec.levels)
                .map(|j| series(&format!("A_{}", j + 1), &h.eps, &h.norms.iter().map(|n| n[j]).collect::<Vec<_>>()))
                .collect();
            r.plots.push(plot("hierarchy", "hierarchy levels", "eps", "||A_j||", true, true, curves));
            for (j, s) in h.slopes.iter().enumerate() {
                r.summary.push((format!("slope_a{}", j + 1), num(*s)));
            }
            for (name, v) in ["s11_plus_one", "delta_eps1_minus_delta_eps", "s22_minus_one"].iter().zip(h.base_cases) {
                r.summary.push((name.to_string(), num(v)));
            }
        }
        ExperimentKind::ScalingCheck => {
            let s = ex::scaling_check(base, &spec.lambdas, 2)?;
            let mut t = Table::new("scaling", &["lambda", "velocity_residual", "spacetime_residual"]);
            for (l, v, st) in &s.scaled {
                t.push([num(*l), num(*v), num(*st)]);
            }
            r.tables.push(t);
            r.summary.push(("native_residual".into(), num(s.native)));
            r.summary.push(("round_trip".into(), num(s.round_trip)));
        }
        ExperimentKind::Conservation => {
            let mut c = base.clone();
            if let Some(dt) = spec.dt_values.first() {
                c.dt = *dt;
            }
            let res = ex::conservation(&c)?;
            let mut t =
                Table::new("conservation", &["dt", "steps", "charge", "energy", "continuity", "gauge", "gauss"]);
            for l in &res.levels {
                t.push([
                    num(l.dt),
                    l.steps.to_string(),
                    num(l.charge_drift),
                    num(l.energy_drift),
                    num(l.continuity),
                    num(l.gauge),
                    num(l.gauss),
                ]);
            }
            r.tables.push(t);
            r.summary.push(("energy_ratio".into(), num(res.energy_ratio)));
            r.summary.push(("energy_halving".into(), num(res.energy_halving)));
            r.summary.push(("continuity_order".into(), num(res.continuity_order)));
        }
        ExperimentKind::PreparedCheck => {
            let p = ex::prepared_check(base, &spec.eps_values)?;
            let mut t = Table::new("prepared", &["eps", "p4", "p6", "p8"]);
            for (i, e) in p.eps.iter().enumerate() {
                t.push([num(*e), num(p.residual[0][i]), num(p.residual[1][i]), num(p.residual[2][i])]);
            }
            r.tables.push(t);
            let curves =
                ["p = 4", "p = 6", "p = 8"].iter().zip(&p.residual).map(|(l, y)| series(l, &p.eps, y)).collect();
            r.plots.push(plot("prepared", "well-prepared residual", "eps", "residual", true, true, curves));
            for (p_, s) in [4, 6, 8].iter().zip(&p.slopes) {
                r.summary.push((format!("slope_p{p_}"), num(*s)));
            }
        }
    }
    Ok(r)
}

/// Output directory of a configuration: `<output_dir>/<kind>-<hash12>`.
pub fn run_dir(spec: &ExperimentSpec, root: Option<&Path>, label: &str) -> PathBuf {
    root.unwrap_or(&spec.output_dir).join(format!("{label}-{}", spec.short_hash()))
}

pub fn write_csv(path: &Path, table: &Table, hash: &str) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    let mut header = vec!["config_hash".to_string()];
    header.extend(table.columns.iter().cloned());
    w.write_record(&header)?;
    for row in &table.rows {
        let mut rec = vec![hash.to_string()];
        rec.extend(row.iter().cloned());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Little-endian binary snapshot: magic `KLSNAP01`, `t`, step, `n_x`,
/// `d_v`, `n_v`, `L`, `v_max`, then the values in storage order.
pub fn write_snapshot(path: &Path, s: &Snapshot) -> anyhow::Result<()> {
    let g = s.f.grid;
    let mut buf = Vec::with_capacity(64 + 8 * s.f.values.len());
    buf.extend_from_slice(b"KLSNAP01");
    buf.extend_from_slice(&s.t.to_le_bytes());
    for n in [s.step, g.n_x, g.v.dim, g.v.n] {
        buf.extend_from_slice(&(n as u64).to_le_bytes());
    }
    buf.extend_from_slice(&g.length.to_le_bytes());
    buf.extend_from_slice(&g.v.v_max.to_le_bytes());
    for v in &s.f.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).with_context(|| format!("writing {}", path.display()))
}

/// Reads a snapshot header and values back: `(t, step, [n_x, d_v, n_v], values)`.
pub fn read_snapshot(path: &Path) -> anyhow::Result<(f64, usize, [usize; 3], Vec<f64>)> {
    let b = fs::read(path)?;
    anyhow::ensure!(b.len() >= 64 && &b[..8] == b"KLSNAP01", "{} is not a snapshot", path.display());
    let word = |i: usize| <[u8; 8]>::try_from(&b[8 + 8 * i..16 + 8 * i]).unwrap();
    let t = f64::from_le_bytes(word(0));
    let u = |i: usize| u64::from_le_bytes(word(i)) as usize;
    let values = b[64..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((t, u(1), [u(2), u(3), u(4)], values))
}

fn axis_map(lo: f64, hi: f64, log: bool, a: f64, b: f64) -> impl Fn(f64) -> f64 {
    let (lo, hi) = if log { (lo.log10(), hi.log10()) } else { (lo, hi) };
    let span = if hi > lo { hi - lo } else { 1.0 };
    move |x: f64| {
        let x = if log { x.log10() } else { x };
        a + (x - lo) / span * (b - a)
    }
}

/// Renders a line plot as standalone SVG.
pub fn render_svg(p: &Plot) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
    let usable = |x: f64, log: bool| x.is_finite() && (!log || x > 0.0);
    let pts: Vec<(f64, f64)> = p
        .series
        .iter()
        .flat_map(|s| s.points.iter().copied())
        .filter(|&(x, y)| usable(x, p.log_x) && usable(y, p.log_y))
        .collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if pts.is_empty() {
        (x0, x1, y0, y1) = (1.0, 2.0, 1.0, 2.0);
    }
    let (l, r, t, b) = (70.0, W - 20.0, 40.0, H - 50.0);
    let fx = axis_map(x0, x1, p.log_x, l, r);
    let fy = axis_map(y0, y1, p.log_y, b, t);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#, r - l, b - t);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, xml(&p.title));
    let _ =
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (l + r) / 2.0, H - 12.0, xml(&p.x_label));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        (t + b) / 2.0,
        (t + b) / 2.0,
        xml(&p.y_label)
    );
    for (v, px) in [(x0, l), (x1, r)] {
        let _ = writeln!(s, r#"<text x="{px}" y="{}" text-anchor="middle">{v:.3e}</text>"#, b + 16.0);
    }
    for (v, py) in [(y0, b), (y1, t)] {
        let _ = writeln!(s, r#"<text x="{}" y="{py}" text-anchor="end">{v:.3e}</text>"#, l - 4.0);
    }
    for (i, ser) in p.series.iter().enumerate() {
        let c = COLORS[i % COLORS.len()];
        let path: Vec<String> = ser
            .points
            .iter()
            .filter(|&&(x, y)| usable(x, p.log_x) && usable(y, p.log_y))
            .map(|&(x, y)| format!("{:.2},{:.2}", fx(x), fy(y)))
            .collect();
        if !path.is_empty() {
            let _ =
                writeln!(s, r#"<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{c}">{}</text>"#,
            l + 8.0,
            t + 16.0 + 14.0 * i as f64,
            xml(&ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn xml(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes the manifest, tables, plots and snapshots of `report` into `dir`.
pub fn write_report(spec: &ExperimentSpec, report: &Report, dir: &Path, command: &str) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let hash = spec.short_hash();
    for t in &report.tables {
        write_csv(&dir.join(format!("{}.csv", t.name)), t, hash)?;
    }
    for p in &report.plots {
        fs::write(dir.join(format!("{}.svg", p.name)), render_svg(p))?;
    }
    if !report.snapshots.is_empty() {
        let sd = dir.join("snapshots");
        fs::create_dir_all(&sd)?;
        for s in &report.snapshots {
            write_snapshot(&sd.join(format!("f_{:06}.bin", s.step)), s)?;
        }
    }
    let mut m = String::new();
    let _ = writeln!(m, "command = \"{command}\"");
    let _ = writeln!(m, "kind = \"{}\"", spec.kind.name());
    let _ = writeln!(m, "config_hash = \"{}\"", spec.hash);
    let _ = writeln!(m, "seed = {}", spec.seed);
    let _ = writeln!(m, "kinlim_version = \"{}\"", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(m, "\n[summary]");
    for (k, v) in &report.summary {
        let _ = writeln!(m, "{k} = {}", toml::Value::String(v.clone()));
    }
    let cfg: toml::Table = toml::from_str(&spec.resolved)?;
    let mut wrapped = toml::Table::new();
    wrapped.insert("config".into(), toml::Value::Table(cfg));
    let _ = writeln!(m, "\n# resolved configuration");
    m.push_str(&toml::to_string(&wrapped)?);
    let mut f = fs::File::create(dir.join("manifest.toml"))?;
    f.write_all(m.as_bytes())?;
    Ok(())
}

/// Markdown summary of every `manifest.toml` below `dir`.
pub fn summarize(dir: &Path) -> anyhow::Result<String> {
    let mut manifests = Vec::new();
    collect_manifests(dir, &mut manifests)?;
    manifests.sort();
    let mut out = String::from("| run | kind | key | value |\n|---|---|---|---|\n");
    for path in manifests {
        let text = fs::read_to_string(&path)?;
        let v: toml::Table = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let run =
            path.parent().and_then(|p| p.file_name()).map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let kind = v.get("kind").and_then(|k| k.as_str()).unwrap_or("?");
        if let Some(toml::Value::Table(s)) = v.get("summary") {
            for (k, val) in s {
                let _ = writeln!(out, "| {run} | {kind} | {k} | {} |", val.as_str().unwrap_or(&val.to_string()));
            }
        }
    }
    Ok(out)
}

fn collect_manifests(dir: &Path, out: &mut Vec<PathBuf>) -> anyhow::Result<()> {
    for e in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let p = e?.path();
        if p.is_dir() {
            collect_manifests(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == "manifest.toml") {
            out.push(p);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_has_one_polyline_per_series() {
        let p = plot(
            "p",
            "a < b",
            "x",
            "y",
            true,
            true,
            vec![series("one", &[1.0, 10.0], &[1.0, 100.0]), series("two", &[1.0, 10.0, 0.0], &[2.0, 3.0, 4.0])],
        );
        let s = render_svg(&p);
        assert_eq!(s.matches("<polyline").count(), 2);
        assert!(s.contains("a &lt; b"));
        assert!(s.starts_with("<svg"));
    }

    #[test]
    fn empty_plot_renders() {
        let p = plot("p", "t", "x", "y", false, false, vec![]);
        assert!(render_svg(&p).ends_with("</svg>\n"));
    }
}
