//! Self-contained SVG figures: treatment pattern, event study and
//! sensitivity curve. Output depends only on the inputs, so figures are
//! byte-stable across runs.

use std::fmt::Write;

use paneldid::diagnostics::EventStudyTable;
use paneldid::panel::{CellStatus, StatusSummary};
use paneldid::sensitivity::CsPoint;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: (f64, f64, f64, f64) = (60.0, 20.0, 40.0, 50.0); // left, right, top, bottom

const CONTROL: &str = "#d9e6f2";
const TREATED: &str = "#1f4e79";
const MISSING: &str = "#ffffff";
const PRE: &str = "#7f7f7f";
const POST: &str = "#1f4e79";
const HOLDOUT: &str = "#c55a11";

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn num(x: f64) -> String {
    format!("{x:.2}")
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let pad = |(lo, hi): (f64, f64)| {
            if hi - lo < 1e-12 {
                (lo - 1.0, hi + 1.0)
            } else {
                let d = 0.08 * (hi - lo);
                (lo - d, hi + d)
            }
        };
        Self { x: pad(x), y: pad(y) }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN.0 + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - MARGIN.0 - MARGIN.1)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN.3 - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - MARGIN.2 - MARGIN.3)
    }
}

fn open(out: &mut String, w: f64, h: f64, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" font-size="14" text-anchor="middle">{}</text>"#, w / 2.0, escape(title));
}

/// Nice tick values covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= 6.0).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    out
}

fn axes(out: &mut String, f: &Frame, xlabel: &str, ylabel: &str, integer_x: bool) {
    let (x0, x1) = (MARGIN.0, WIDTH - MARGIN.1);
    let (y0, y1) = (HEIGHT - MARGIN.3, MARGIN.2);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for t in ticks(f.y.0, f.y.1) {
        let y = num(f.py(t));
        let _ = writeln!(out, r#"<line x1="{}" y1="{y}" x2="{x0}" y2="{y}" stroke="black"/>"#, x0 - 4.0);
        let _ = writeln!(out, r#"<text x="{}" y="{y}" text-anchor="end" dy="4">{}</text>"#, x0 - 6.0, fmt_tick(t));
    }
    let xt: Vec<f64> = if integer_x {
        let (lo, hi) = (f.x.0.ceil() as i64, f.x.1.floor() as i64);
        let step = ((hi - lo) / 12 + 1).max(1);
        (lo..=hi).filter(|v| v % step == 0).map(|v| v as f64).collect()
    } else {
        ticks(f.x.0, f.x.1)
    };
    for t in xt {
        let x = num(f.px(t));
        let _ = writeln!(out, r#"<line x1="{x}" y1="{y0}" x2="{x}" y2="{}" stroke="black"/>"#, y0 + 4.0);
        let _ = writeln!(out, r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#, y0 + 16.0, fmt_tick(t));
    }
    let _ =
        writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, HEIGHT - 12.0, escape(xlabel));
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(ylabel)
    );
}

fn fmt_tick(t: f64) -> String {
    let s = format!("{t:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

fn zero_line(out: &mut String, f: &Frame) {
    if f.y.0 < 0.0 && f.y.1 > 0.0 {
        let y = num(f.py(0.0));
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="black" stroke-dasharray="4 3" stroke-width="0.8"/>"#,
            MARGIN.0,
            WIDTH - MARGIN.1
        );
    }
}

/// Unit × period grid coloured by status; units as rows.
pub fn treatment_pattern(summary: &StatusSummary, unit_ids: &[String], time_ids: &[String]) -> String {
    let (n, t) = (summary.n_units, summary.n_times);
    let cell_w = ((WIDTH - MARGIN.0 - MARGIN.1) / t as f64).min(40.0);
    let cell_h = (600.0 / n as f64).clamp(1.0, 16.0);
    let w = MARGIN.0 + cell_w * t as f64 + 120.0;
    let h = MARGIN.2 + cell_h * n as f64 + MARGIN.3;
    let mut out = String::new();
    open(&mut out, w, h, "Treatment status");
    for (u, id) in unit_ids.iter().enumerate().take(n) {
        for s in 0..t {
            let fill = match summary.cells[u * t + s] {
                CellStatus::Control => CONTROL,
                CellStatus::Treated => TREATED,
                CellStatus::Missing => MISSING,
            };
            let _ = writeln!(
                out,
                r##"<rect x="{}" y="{}" width="{}" height="{}" fill="{fill}" stroke="#bbbbbb" stroke-width="0.2"/>"##,
                num(MARGIN.0 + s as f64 * cell_w),
                num(MARGIN.2 + u as f64 * cell_h),
                num(cell_w),
                num(cell_h)
            );
        }
        if cell_h >= 8.0 {
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" text-anchor="end" dy="3">{}</text>"#,
                MARGIN.0 - 4.0,
                num(MARGIN.2 + (u as f64 + 0.5) * cell_h),
                escape(id)
            );
        }
    }
    let step = (t / 12).max(1);
    for s in (0..t).step_by(step) {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            num(MARGIN.0 + (s as f64 + 0.5) * cell_w),
            num(h - MARGIN.3 + 14.0),
            escape(&time_ids[s])
        );
    }
    let lx = MARGIN.0 + cell_w * t as f64 + 16.0;
    for (i, (label, fill)) in [("control", CONTROL), ("treated", TREATED), ("missing", MISSING)].iter().enumerate() {
        let y = MARGIN.2 + 18.0 * i as f64;
        let _ =
            writeln!(out, r#"<rect x="{lx}" y="{y}" width="12" height="12" fill="{fill}" stroke="black" stroke-width="0.5"/>"#);
        let _ = writeln!(out, r#"<text x="{}" y="{}">{label}</text>"#, lx + 18.0, y + 10.0);
    }
    out.push_str("</svg>\n");
    out
}

/// Point estimates with CI whiskers, the reference period shaded and
/// holdout periods marked.
pub fn event_study(title: &str, table: &EventStudyTable, holdout: &[i64]) -> String {
    let mut out = String::new();
    open(&mut out, WIDTH, HEIGHT, title);
    if table.rows.is_empty() {
        let _ =
            writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">no dynamic estimates</text>"#, WIDTH / 2.0, HEIGHT / 2.0);
        out.push_str("</svg>\n");
        return out;
    }
    let mut ls: Vec<f64> = table.rows.iter().map(|r| r.l as f64).collect();
    ls.extend(table.reference_period.map(|l| l as f64));
    ls.extend(holdout.iter().map(|&l| l as f64));
    let mut ys = vec![0.0];
    for r in &table.rows {
        ys.push(r.estimate);
        if let Some((lo, hi)) = r.ci {
            ys.extend([lo, hi]);
        }
    }
    let ys: Vec<f64> = ys.into_iter().filter(|v| v.is_finite()).collect();
    let minmax =
        |v: &[f64]| (v.iter().copied().fold(f64::INFINITY, f64::min), v.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    let f = Frame::new(minmax(&ls), minmax(&ys));
    let half = (f.px(1.0) - f.px(0.0)) / 2.0;

    if let Some(r) = table.reference_period {
        let _ = writeln!(
            out,
            r##"<rect x="{}" y="{}" width="{}" height="{}" fill="#eeeeee"/>"##,
            num(f.px(r as f64) - half),
            MARGIN.2,
            num(2.0 * half),
            HEIGHT - MARGIN.2 - MARGIN.3
        );
    }
    for &h in holdout {
        let _ = writeln!(
            out,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{HOLDOUT}" fill-opacity="0.12"/>"#,
            num(f.px(h as f64) - half),
            MARGIN.2,
            num(2.0 * half),
            HEIGHT - MARGIN.2 - MARGIN.3
        );
    }
    axes(&mut out, &f, "period relative to treatment onset", "estimate", true);
    zero_line(&mut out, &f);
    for r in &table.rows {
        if !r.estimate.is_finite() {
            continue;
        }
        let x = num(f.px(r.l as f64));
        let is_holdout = holdout.contains(&r.l);
        let color = if is_holdout {
            HOLDOUT
        } else if r.pre {
            PRE
        } else {
            POST
        };
        if let Some((lo, hi)) = r.ci {
            let _ = writeln!(
                out,
                r#"<line x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="{color}" stroke-width="1.5"/>"#,
                num(f.py(lo)),
                num(f.py(hi))
            );
        }
        let y = num(f.py(r.estimate));
        let fill = if r.low_support { "white" } else { color };
        if is_holdout {
            let (xc, yc) = (f.px(r.l as f64), f.py(r.estimate));
            let _ = writeln!(
                out,
                r#"<polygon points="{},{} {},{} {},{}" fill="{fill}" stroke="{color}" stroke-width="1.5"/>"#,
                num(xc),
                num(yc - 5.0),
                num(xc - 5.0),
                num(yc + 4.0),
                num(xc + 5.0),
                num(yc + 4.0)
            );
        } else {
            let _ = writeln!(out, r#"<circle cx="{x}" cy="{y}" r="3.5" fill="{fill}" stroke="{color}" stroke-width="1.5"/>"#);
        }
    }
    let mut legend = vec![("pre-treatment", PRE), ("post-treatment", POST)];
    if !holdout.is_empty() {
        legend.push(("held out (placebo)", HOLDOUT));
    }
    for (i, (label, color)) in legend.iter().enumerate() {
        let y = MARGIN.2 + 6.0 + 14.0 * i as f64;
        let _ = writeln!(out, r#"<circle cx="{}" cy="{y}" r="3.5" fill="{color}"/>"#, MARGIN.0 + 12.0);
        let _ = writeln!(out, r#"<text x="{}" y="{}">{label}</text>"#, MARGIN.0 + 20.0, y + 4.0);
    }
    out.push_str("</svg>\n");
    out
}

/// Robust confidence sets against the bound `M`, with the breakdown value
/// marked when it falls inside the plotted range.
pub fn sensitivity_curve(title: &str, points: &[CsPoint], breakdown: Option<f64>) -> String {
    let mut out = String::new();
    open(&mut out, WIDTH, HEIGHT, title);
    let mut xs: Vec<f64> = points.iter().map(|p| p.mbar).collect();
    let mut ys: Vec<f64> = points.iter().flat_map(|p| [p.lower, p.upper]).collect();
    ys.push(0.0);
    if let Some(b) = breakdown {
        xs.push(b);
    }
    let minmax =
        |v: &[f64]| (v.iter().copied().fold(f64::INFINITY, f64::min), v.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    let f = Frame::new(minmax(&xs), minmax(&ys));
    axes(&mut out, &f, "M (bound relative to the largest placebo violation)", "robust confidence set", false);
    zero_line(&mut out, &f);
    for p in points {
        let x = num(f.px(p.mbar));
        let _ = writeln!(
            out,
            r#"<line x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="{POST}" stroke-width="2"/>"#,
            num(f.py(p.lower)),
            num(f.py(p.upper))
        );
        for v in [p.lower, p.upper] {
            let y = num(f.py(v));
            let _ = writeln!(
                out,
                r#"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="{POST}" stroke-width="2"/>"#,
                f.px(p.mbar) - 5.0,
                f.px(p.mbar) + 5.0
            );
        }
    }
    if let Some(b) = breakdown {
        let x = num(f.px(b));
        let _ = writeln!(
            out,
            r#"<line x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="{HOLDOUT}" stroke-dasharray="5 3"/>"#,
            MARGIN.2,
            HEIGHT - MARGIN.3
        );
        let _ = writeln!(
            out,
            r#"<text x="{x}" y="{}" text-anchor="middle" fill="{HOLDOUT}">breakdown {}</text>"#,
            MARGIN.2 - 4.0,
            fmt_tick(b)
        );
    }
    out.push_str("</svg>\n");
    out
}
