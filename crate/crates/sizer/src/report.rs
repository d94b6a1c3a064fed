//! Best-so-far curves merged across runs.

use std::fmt::Write as _;

use gcn_sizer_core::SearchTrace;

/// Best-so-far value of every trace at each step, plus the max across runs.
/// Traces shorter than the longest keep their final best.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub labels: Vec<String>,
    /// `curves[r][s]` is run `r`'s best FoM after step `s + 1`.
    pub curves: Vec<Vec<f64>>,
    pub merged: Vec<f64>,
}

pub fn merge(labeled: &[(String, SearchTrace)]) -> Report {
    let len = labeled.iter().map(|(_, t)| t.len()).max().unwrap_or(0);
    let curves: Vec<Vec<f64>> = labeled
        .iter()
        .map(|(_, t)| {
            let mut c: Vec<f64> = t.steps.iter().map(|s| s.best_fom).collect();
            let last = c.last().copied().unwrap_or(f64::NAN);
            c.resize(len, last);
            c
        })
        .collect();
    let merged = (0..len)
        .map(|s| curves.iter().map(|c| c[s]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    Report {
        labels: labeled.iter().map(|(l, _)| l.clone()).collect(),
        curves,
        merged,
    }
}

impl Report {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step");
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push_str(",max\n");
        for (s, m) in self.merged.iter().enumerate() {
            let _ = write!(out, "{}", s + 1);
            for c in &self.curves {
                let _ = write!(out, ",{}", c[s]);
            }
            let _ = writeln!(out, ",{m}");
        }
        out
    }
}

const COLORS: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

/// Line plot of the given curves on shared axes.
pub fn svg_plot(title: &str, curves: &[(&str, &[f64])]) -> String {
    let (w, h, margin) = (640.0, 400.0, 50.0);
    let len = curves.iter().map(|(_, c)| c.len()).max().unwrap_or(0).max(2);
    let finite = curves.iter().flat_map(|(_, c)| c.iter().copied()).filter(|v| v.is_finite());
    let (mut lo, mut hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo, hi) = (lo - 0.5, hi + 0.5);
    }
    let x = |s: usize| margin + (w - 2.0 * margin) * s as f64 / (len - 1) as f64;
    let y = |v: f64| h - margin - (h - 2.0 * margin) * (v - lo) / (hi - lo);

    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" font-size="14" text-anchor="middle">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(
        out,
        r#"<path d="M{m} {m} V{b} H{r}" stroke="black" fill="none"/>"#,
        m = margin,
        b = h - margin,
        r = w - margin
    );
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{hi:.4}</text>"#, margin - 4.0, margin + 4.0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{lo:.4}</text>"#, margin - 4.0, h - margin);
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{len}</text>"#, w - margin, h - margin + 16.0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="11" text-anchor="middle">step</text>"#, w / 2.0, h - 12.0);
    for (i, (label, c)) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let points: Vec<String> = c
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(s, v)| format!("{:.2},{:.2}", x(s), y(*v)))
            .collect();
        let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, points.join(" "));
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="11" fill="{color}">{}</text>"#,
            margin + 8.0,
            margin + 14.0 * (i + 1) as f64,
            escape(label)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
