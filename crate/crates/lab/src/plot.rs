//! Integer histograms of indices and standalone SVG plots.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use sympwalk_core::stats::{excess_kurtosis, mean, variance};

use crate::error::LabResult;
use crate::moments::{MomentTable, SlopeFit};

/// One bar per index value between the smallest and largest observed value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramReport {
    pub values: Vec<i64>,
    pub counts: Vec<usize>,
    pub mean: f64,
    pub variance: f64,
    /// NaN when fewer than two distinct values were seen.
    pub excess_kurtosis: f64,
    /// Expected counts per bar under a normal law with the sample mean and
    /// variance, integrated over [v - 1/2, v + 1/2]. Empty when the variance
    /// vanishes.
    pub normal_counts: Vec<f64>,
}

impl HistogramReport {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn write_csv(&self, path: &Path) -> LabResult<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["index", "count", "normal"])?;
        for (i, (v, n)) in self.values.iter().zip(&self.counts).enumerate() {
            let normal = self.normal_counts.get(i).map_or(String::new(), |x| x.to_string());
            w.write_record([v.to_string(), n.to_string(), normal])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_svg(&self, title: &str) -> String {
        let mut plot = Canvas::new(title, "index", "count");
        let lo = self.values.first().copied().unwrap_or(0) as f64 - 0.5;
        let hi = self.values.last().copied().unwrap_or(0) as f64 + 0.5;
        let top = self
            .counts
            .iter()
            .map(|&c| c as f64)
            .chain(self.normal_counts.iter().copied())
            .fold(1.0_f64, f64::max);
        plot.set_range((lo, hi), (0.0, top * 1.05));
        for (&v, &n) in self.values.iter().zip(&self.counts) {
            plot.bar(v as f64 - 0.45, v as f64 + 0.45, n as f64);
        }
        if !self.normal_counts.is_empty() {
            let pts: Vec<(f64, f64)> =
                self.values.iter().zip(&self.normal_counts).map(|(&v, &e)| (v as f64, e)).collect();
            plot.polyline(&pts, "#d62728");
        }
        plot.note(&format!("excess kurtosis {:.3}", self.excess_kurtosis));
        plot.finish()
    }
}

pub fn histogram_report(indices: &[i64]) -> HistogramReport {
    let (Some(&lo), Some(&hi)) = (indices.iter().min(), indices.iter().max()) else {
        return HistogramReport {
            values: Vec::new(),
            counts: Vec::new(),
            mean: f64::NAN,
            variance: f64::NAN,
            excess_kurtosis: f64::NAN,
            normal_counts: Vec::new(),
        };
    };
    let values: Vec<i64> = (lo..=hi).collect();
    let mut counts = vec![0usize; values.len()];
    for &i in indices {
        counts[(i - lo) as usize] += 1;
    }
    let xs: Vec<f64> = indices.iter().map(|&i| i as f64).collect();
    let m = mean(&xs);
    let var = if xs.len() > 1 { variance(&xs) } else { 0.0 };
    let normal_counts = match Normal::new(m, var.sqrt()) {
        Ok(law) if var > 0.0 => values
            .iter()
            .map(|&v| xs.len() as f64 * (law.cdf(v as f64 + 0.5) - law.cdf(v as f64 - 0.5)))
            .collect(),
        _ => Vec::new(),
    };
    HistogramReport {
        values,
        counts,
        mean: m,
        variance: var,
        excess_kurtosis: if var > 0.0 { excess_kurtosis(&xs) } else { f64::NAN },
        normal_counts,
    }
}

/// log M_k against log c for the given moments, with their fitted lines.
pub fn moment_plot_svg(table: &MomentTable, fits: &[SlopeFit], ks: &[u32]) -> String {
    const COLORS: [&str; 4] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd"];
    let mut plot = Canvas::new("moments against c (log-log)", "log c", "log M_k");
    let mut pts_by_k = Vec::new();
    for &k in ks {
        let pts: Vec<(f64, f64)> = table
            .rows
            .iter()
            .filter(|r| r.moment(k).value > 0.0 && r.c > 0.0)
            .map(|r| (r.c.ln(), r.moment(k).value.ln()))
            .collect();
        pts_by_k.push((k, pts));
    }
    let all: Vec<(f64, f64)> = pts_by_k.iter().flat_map(|(_, p)| p.iter().copied()).collect();
    if all.is_empty() {
        plot.set_range((0.0, 1.0), (0.0, 1.0));
        return plot.finish();
    }
    let span = |f: fn(&(f64, f64)) -> f64| {
        let lo = all.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = all.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        let pad = ((hi - lo) * 0.05).max(0.1);
        (lo - pad, hi + pad)
    };
    let (xr, yr) = (span(|p| p.0), span(|p| p.1));
    plot.set_range(xr, yr);
    for (i, (k, pts)) in pts_by_k.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        for &(x, y) in pts {
            plot.dot(x, y, color);
        }
        if let Some(f) = fits.iter().find(|f| f.k == *k) {
            let line = [xr.0, xr.1].map(|x| (x, f.fit.intercept + f.fit.slope * x));
            plot.polyline(&line, color);
            plot.note(&format!("M{k}: slope {:.3} \u{b1} {:.3}", f.fit.slope, f.fit.slope_se));
        }
    }
    plot.finish()
}

/// A density curve p(x).
pub fn density_svg(x: &[f64], p: &[f64], title: &str) -> String {
    let mut plot = Canvas::new(title, "x", "p");
    let (lo, hi) = (x.first().copied().unwrap_or(0.0), x.last().copied().unwrap_or(1.0));
    let top = p.iter().copied().fold(f64::MIN_POSITIVE, f64::max);
    plot.set_range((lo, hi), (0.0, top * 1.05));
    let pts: Vec<(f64, f64)> = x.iter().copied().zip(p.iter().copied()).collect();
    plot.polyline(&pts, "#1f77b4");
    plot.finish()
}

pub fn write_svg(path: &Path, svg: &str) -> LabResult<()> {
    std::fs::write(path, svg)?;
    Ok(())
}

/// A minimal fixed-size SVG plot area with linear axes.
struct Canvas {
    body: String,
    notes: Vec<String>,
    x: (f64, f64),
    y: (f64, f64),
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 56.0;

impl Canvas {
    fn new(title: &str, xlabel: &str, ylabel: &str) -> Self {
        let mut body = String::new();
        let _ = write!(
            body,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>
<text x="{}" y="{}" text-anchor="middle">{}</text>
<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>
"#,
            WIDTH / 2.0,
            escape(title),
            WIDTH / 2.0,
            HEIGHT - 12.0,
            escape(xlabel),
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(ylabel),
        );
        Canvas { body, notes: Vec::new(), x: (0.0, 1.0), y: (0.0, 1.0) }
    }

    fn set_range(&mut self, x: (f64, f64), y: (f64, f64)) {
        self.x = x;
        self.y = y;
        let (l, r, t, b) = (MARGIN, WIDTH - MARGIN / 2.0, MARGIN / 1.5, HEIGHT - MARGIN);
        let _ = writeln!(self.body, r#"<path d="M{l} {t} L{l} {b} L{r} {b}" fill="none" stroke="black"/>"#);
        for i in 0..=4 {
            let fx = x.0 + (x.1 - x.0) * i as f64 / 4.0;
            let fy = y.0 + (y.1 - y.0) * i as f64 / 4.0;
            let _ = writeln!(
                self.body,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                self.px(fx),
                b + 16.0,
                tick(fx)
            );
            let _ = writeln!(
                self.body,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                l - 4.0,
                self.py(fy) + 4.0,
                tick(fy)
            );
        }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 1.5 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - MARGIN - MARGIN / 1.5)
    }

    fn bar(&mut self, x0: f64, x1: f64, h: f64) {
        let (a, b) = (self.px(x0), self.px(x1));
        let (top, base) = (self.py(h), self.py(0.0));
        let _ = writeln!(
            self.body,
            r##"<rect x="{a:.1}" y="{top:.1}" width="{:.1}" height="{:.1}" fill="#8fb8de" stroke="#1f4e79"/>"##,
            b - a,
            base - top
        );
    }

    fn dot(&mut self, x: f64, y: f64, color: &str) {
        let _ = writeln!(self.body, r#"<circle cx="{:.1}" cy="{:.1}" r="3.5" fill="{color}"/>"#, self.px(x), self.py(y));
    }

    fn polyline(&mut self, pts: &[(f64, f64)], color: &str) {
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.1},{:.1}", self.px(x), self.py(y))).collect();
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            coords.join(" ")
        );
    }

    fn note(&mut self, text: &str) {
        self.notes.push(text.to_string());
    }

    fn finish(mut self) -> String {
        for (i, n) in self.notes.iter().enumerate() {
            let _ = writeln!(
                self.body,
                r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
                WIDTH - MARGIN / 2.0,
                MARGIN + 16.0 * i as f64,
                escape(n)
            );
        }
        self.body.push_str("</svg>\n");
        self.body
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 1e4 || (v != 0.0 && v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
