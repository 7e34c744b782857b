//! Hand-written SVG figures. Every number is printed with fixed precision so
//! the bytes are reproducible.

use std::fmt::Write as _;

use crate::assays::report::CohortSummary;
use crate::assays::stats::{median, summarize, Summary};
use crate::assays::{AssaySummary, RunAssay};
use crate::trainer::Cohort;

const W: f64 = 360.0;
const H: f64 = 260.0;
const LEFT: f64 = 56.0;
const RIGHT: f64 = 16.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 44.0;

fn color(c: Cohort) -> &'static str {
    match c {
        Cohort::Full => "#1f77b4",
        Cohort::NoConation => "#d62728",
        Cohort::NoBodyToG => "#2ca02c",
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One panel with linear axes.
struct Panel {
    x: (f64, f64),
    y: (f64, f64),
    body: String,
}

impl Panel {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let widen = |(a, b): (f64, f64)| {
            if !(a.is_finite() && b.is_finite()) {
                (0.0, 1.0)
            } else if (b - a).abs() < 1e-12 {
                (a - 0.5, b + 0.5)
            } else {
                (a, b)
            }
        };
        Panel {
            x: widen(x),
            y: widen(y),
            body: String::new(),
        }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }

    fn line(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, stroke: &str, width: f64) {
        let (a, b, c, d) = (self.px(x0), self.py(y0), self.px(x1), self.py(y1));
        writeln!(
            self.body,
            r#"<line x1="{a:.2}" y1="{b:.2}" x2="{c:.2}" y2="{d:.2}" stroke="{stroke}" stroke-width="{width:.1}"/>"#
        )
        .unwrap();
    }

    fn rect(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, fill: &str, opacity: f64) {
        let (a, b) = (self.px(x0.min(x1)), self.py(y0.max(y1)));
        let (w, h) = (self.px(x0.max(x1)) - a, self.py(y0.min(y1)) - b);
        writeln!(
            self.body,
            r#"<rect x="{a:.2}" y="{b:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}" fill-opacity="{opacity:.2}"/>"#
        )
        .unwrap();
    }

    fn dot(&mut self, x: f64, y: f64, fill: &str) {
        if x.is_finite() && y.is_finite() {
            let (a, b) = (self.px(x), self.py(y));
            writeln!(
                self.body,
                r#"<circle cx="{a:.2}" cy="{b:.2}" r="2.2" fill="{fill}" fill-opacity="0.7"/>"#
            )
            .unwrap();
        }
    }

    fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str) {
        let mut s = String::new();
        for &(x, y) in pts.iter().filter(|(x, y)| x.is_finite() && y.is_finite()) {
            write!(s, "{:.2},{:.2} ", self.px(x), self.py(y)).unwrap();
        }
        writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="1.5"/>"#,
            s.trim_end()
        )
        .unwrap();
    }

    fn text(&mut self, x: f64, y: f64, s: &str, anchor: &str, size: f64) {
        writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" font-size="{size:.0}" text-anchor="{anchor}">{}</text>"#,
            esc(s)
        )
        .unwrap();
    }

    fn y_axis(&mut self, label: &str) {
        let (y0, y1) = self.y;
        for i in 0..=4 {
            let v = y0 + (y1 - y0) * i as f64 / 4.0;
            let py = self.py(v);
            self.text(LEFT - 4.0, py + 3.0, &format!("{v:.3}"), "end", 9.0);
            writeln!(
                self.body,
                r##"<line x1="{LEFT:.2}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#ddd" stroke-width="0.5"/>"##,
                W - RIGHT
            )
            .unwrap();
        }
        let mid = (TOP + H - BOTTOM) / 2.0;
        writeln!(
            self.body,
            r#"<text x="12" y="{mid:.2}" font-size="10" text-anchor="middle" transform="rotate(-90 12 {mid:.2})">{}</text>"#,
            esc(label)
        )
        .unwrap();
    }

    fn x_axis(&mut self, label: &str, ticks: bool) {
        if ticks {
            let (x0, x1) = self.x;
            for i in 0..=4 {
                let v = x0 + (x1 - x0) * i as f64 / 4.0;
                let px = self.px(v);
                self.text(px, H - BOTTOM + 12.0, &format!("{v:.3}"), "middle", 9.0);
            }
        }
        self.text((LEFT + W - RIGHT) / 2.0, H - 8.0, label, "middle", 10.0);
    }

    fn finish(mut self, title: &str, config_hash: &str) -> String {
        self.text(W / 2.0, 16.0, title, "middle", 12.0);
        let mut out = String::new();
        writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#).unwrap();
        writeln!(out, "<!-- config_hash: {config_hash} -->").unwrap();
        writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W:.0}" height="{H:.0}" viewBox="0 0 {W:.0} {H:.0}" font-family="sans-serif">"#
        )
        .unwrap();
        writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
        writeln!(
            out,
            r#"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black" stroke-width="0.8"/>"#,
            W - LEFT - RIGHT,
            H - TOP - BOTTOM
        )
        .unwrap();
        out.push_str(&self.body);
        out.push_str("</svg>\n");
        out
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
}

fn pad((a, b): (f64, f64)) -> (f64, f64) {
    let m = 0.05 * (b - a).abs().max(1e-9);
    (a - m, b + m)
}

/// Median bars with IQR whiskers, one bar per cohort.
fn bar_panel(title: &str, ylabel: &str, cohorts: &[(Cohort, Summary)], config_hash: &str) -> String {
    let top = cohorts.iter().map(|(_, s)| s.q3).fold(0.0f64, f64::max).max(1e-3);
    let mut p = Panel::new((0.0, cohorts.len() as f64), (0.0, top * 1.1));
    p.y_axis(ylabel);
    for (i, (c, s)) in cohorts.iter().enumerate() {
        let x = i as f64;
        p.rect(x + 0.2, 0.0, x + 0.8, s.median, color(*c), 0.8);
        p.line(x + 0.5, s.q1, x + 0.5, s.q3, "black", 1.2);
        p.line(x + 0.4, s.q1, x + 0.6, s.q1, "black", 1.2);
        p.line(x + 0.4, s.q3, x + 0.6, s.q3, "black", 1.2);
        let (lx, ly) = (p.px(x + 0.5), H - BOTTOM + 14.0);
        p.text(lx, ly, c.label(), "middle", 10.0);
    }
    p.x_axis("", false);
    p.finish(title, config_hash)
}

fn cohort_stat(cohorts: &[CohortSummary], f: fn(&CohortSummary) -> Summary) -> Vec<(Cohort, Summary)> {
    cohorts.iter().map(|c| (c.cohort, f(c))).collect()
}

/// Tukey-style boxes (IQR box, median line, range whiskers) over per-seed values.
fn box_panel(title: &str, ylabel: &str, groups: &[(Cohort, Vec<f64>)], config_hash: &str) -> String {
    let (lo, hi) = range(groups.iter().flat_map(|(_, v)| v.iter().copied()));
    let mut p = Panel::new((0.0, groups.len() as f64), pad((lo.min(0.0), hi)));
    p.y_axis(ylabel);
    for (i, (c, v)) in groups.iter().enumerate() {
        if v.is_empty() {
            continue;
        }
        let s = summarize(v);
        let (mn, mx) = range(v.iter().copied());
        let x = i as f64;
        p.line(x + 0.5, mn, x + 0.5, mx, "black", 1.0);
        p.rect(x + 0.25, s.q1, x + 0.75, s.q3, color(*c), 0.6);
        p.line(x + 0.25, s.median, x + 0.75, s.median, "black", 2.0);
        for &y in v {
            p.dot(x + 0.5, y, "black");
        }
        let (lx, ly) = (p.px(x + 0.5), H - BOTTOM + 14.0);
        p.text(lx, ly, c.label(), "middle", 10.0);
    }
    p.x_axis("", false);
    p.finish(title, config_hash)
}

fn legend(p: &mut Panel) {
    for (i, c) in Cohort::ALL.iter().enumerate() {
        let y = TOP + 12.0 + 12.0 * i as f64;
        writeln!(
            p.body,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}"/>"#,
            LEFT + 10.0,
            y - 3.0,
            color(*c)
        )
        .unwrap();
        p.text(LEFT + 16.0, y, c.label(), "start", 9.0);
    }
}

/// Every figure as `(file name, contents)`.
pub fn figures(
    config_hash: &str,
    shock_window: (usize, usize),
    runs: &[RunAssay],
    summary: &AssaySummary,
) -> Vec<(String, String)> {
    let mut out = Vec::new();
    out.push((
        "occupancy_top_right.svg".into(),
        bar_panel(
            "Top-right zone occupancy (last episodes)",
            "fraction of steps",
            &cohort_stat(&summary.cohorts, |c| c.top_right_occupancy.clone()),
            config_hash,
        ),
    ));
    out.push((
        "occupancy_bottom.svg".into(),
        bar_panel(
            "Bottom zone occupancy (last episodes)",
            "fraction of steps",
            &cohort_stat(&summary.cohorts, |c| c.bottom_occupancy.clone()),
            config_hash,
        ),
    ));

    // Calibration: pooled scatter, every 5th sampled state.
    let (xr, yr) = (
        range(runs.iter().flat_map(|r| r.calibration.oracle.iter().copied())),
        range(runs.iter().flat_map(|r| r.calibration.predicted.iter().copied())),
    );
    let mut p = Panel::new(pad(xr), pad(yr));
    p.y_axis("predicted eta(UP) - eta(DOWN)");
    for r in runs {
        for (x, y) in r.calibration.oracle.iter().zip(&r.calibration.predicted).step_by(5) {
            p.dot(*x, *y, color(r.row.cohort));
        }
    }
    legend(&mut p);
    p.x_axis("environment eta(UP) - eta(DOWN)", true);
    out.push(("calibration.svg".into(), p.finish("Tendency calibration", config_hash)));

    // Readiness: median q per action and cohort.
    let mut p = Panel::new((0.0, 5.0), (0.0, 0.4));
    p.y_axis("q(a)");
    for (ci, c) in summary.cohorts.iter().enumerate() {
        for (a, s) in c.q_by_action.iter().enumerate() {
            let x = a as f64 + 0.15 + 0.23 * ci as f64;
            p.rect(x, 0.0, x + 0.2, s.median, color(c.cohort), 0.8);
        }
    }
    for (a, name) in ["UP", "DOWN", "LEFT", "RIGHT", "STAY"].iter().enumerate() {
        let (lx, ly) = (p.px(a as f64 + 0.5), H - BOTTOM + 14.0);
        p.text(lx, ly, name, "middle", 10.0);
    }
    p.line(0.0, 0.2, 5.0, 0.2, "#888", 0.8);
    legend(&mut p);
    p.x_axis("", false);
    out.push(("readiness.svg".into(), p.finish("Conative target q (median)", config_hash)));

    // Time-resolved control-vs-shock distance in PC space, cohort medians.
    let len = runs.iter().map(|r| r.displacement_trajectory.len()).min().unwrap_or(0);
    let curves: Vec<(Cohort, Vec<(f64, f64)>)> = Cohort::ALL
        .iter()
        .map(|&c| {
            let mine: Vec<&RunAssay> = runs.iter().filter(|r| r.row.cohort == c).collect();
            let pts = (0..len)
                .map(|t| {
                    let v: Vec<f64> = mine.iter().map(|r| r.displacement_trajectory[t]).collect();
                    (t as f64, median(&v))
                })
                .collect();
            (c, pts)
        })
        .collect();
    let yr = range(curves.iter().flat_map(|(_, p)| p.iter().map(|q| q.1)));
    let mut p = Panel::new((0.0, len.max(1) as f64), pad((0.0, yr.1.max(0.0))));
    p.y_axis("|control - shock| in PC space");
    let y1 = p.y.1;
    p.rect(shock_window.0 as f64, 0.0, shock_window.1 as f64 + 1.0, y1, "#999", 0.2);
    for (c, pts) in &curves {
        p.polyline(pts, color(*c));
    }
    legend(&mut p);
    p.x_axis("rollout step", true);
    out.push(("displacement_trajectory.svg".into(), p.finish("Recovery trajectory", config_hash)));

    let groups = |f: fn(&RunAssay) -> f64| -> Vec<(Cohort, Vec<f64>)> {
        Cohort::ALL
            .iter()
            .map(|&c| (c, runs.iter().filter(|r| r.row.cohort == c).map(f).collect()))
            .collect()
    };
    out.push((
        "pca_displacement.svg".into(),
        box_panel("Recovery PCA displacement", "displacement", &groups(|r| r.row.pca_displacement), config_hash),
    ));
    out.push((
        "spectrum_distance.svg".into(),
        box_panel(
            "Same-state metric spectrum distance",
            "spectrum distance",
            &groups(|r| r.row.spectrum_distance),
            config_hash,
        ),
    ));

    // Seed-level coupling.
    let xr = range(runs.iter().map(|r| r.row.pca_displacement));
    let yr = range(runs.iter().map(|r| r.row.spectrum_distance));
    let mut p = Panel::new(pad(xr), pad(yr));
    p.y_axis("spectrum distance");
    for r in runs {
        p.dot(r.row.pca_displacement, r.row.spectrum_distance, color(r.row.cohort));
    }
    legend(&mut p);
    if let Some(c) = &summary.residue {
        let s = format!("rho = {:.2}, p = {:.3}", c.rho, c.p);
        p.text(W - RIGHT - 4.0, TOP + 12.0, &s, "end", 9.0);
    }
    p.x_axis("PCA displacement", true);
    out.push(("residue_coupling.svg".into(), p.finish("Displacement vs geometry", config_hash)));
    out
}
