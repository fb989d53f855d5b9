//! Minimal deterministic SVG line plots.

use std::fmt::Write;

use crate::error::{Error, Result};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const MARGIN_LEFT: f64 = 90.0;
const MARGIN_RIGHT: f64 = 40.0;
const MARGIN_TOP: f64 = 50.0;
const MARGIN_BOTTOM: f64 = 70.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_log: bool,
    pub y_log: bool,
    pub series: Vec<Series>,
}

struct Axis {
    log: bool,
    lo: f64,
    hi: f64,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            let t = if log { v.log10() } else { v };
            lo = lo.min(t);
            hi = hi.max(t);
        }
        if hi - lo < 1e-12 * lo.abs().max(1.0) {
            lo -= 0.5;
            hi += 0.5;
        }
        Self { log, lo, hi }
    }

    fn unit(&self, v: f64) -> f64 {
        let t = if self.log { v.log10() } else { v };
        (t - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            let (a, b) = (self.lo.floor() as i32, self.hi.ceil() as i32);
            let step = ((b - a) / 8).max(1);
            (a..=b)
                .step_by(step as usize)
                .map(|e| e as f64)
                .filter(|e| *e >= self.lo - 1e-9 && *e <= self.hi + 1e-9)
                .map(|e| (e, format!("1e{e}")))
                .collect()
        } else {
            (0..=5)
                .map(|i| {
                    let t = self.lo + (self.hi - self.lo) * i as f64 / 5.0;
                    (t, format!("{:.3}", t))
                })
                .collect()
        }
    }

    fn unit_raw(&self, t: f64) -> f64 {
        (t - self.lo) / (self.hi - self.lo)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Renders `plot` as an 800x600 SVG document. The output is a pure function
/// of the input.
pub fn emit_svg(plot: &Plot) -> Result<String> {
    if plot.series.is_empty() || plot.series.iter().all(|s| s.points.is_empty()) {
        return Err(Error::InvalidInput("plot has no data".into()));
    }
    let flat: Vec<(f64, f64)> = plot
        .series
        .iter()
        .flat_map(|s| s.points.iter().copied())
        .collect();
    let bad: Vec<usize> = flat
        .iter()
        .enumerate()
        .filter(|(_, (x, y))| !x.is_finite() || !y.is_finite())
        .map(|(i, _)| i)
        .collect();
    if !bad.is_empty() {
        return Err(Error::NonFinite(bad));
    }
    if plot.x_log && flat.iter().any(|p| p.0 <= 0.0) {
        return Err(Error::InvalidInput(
            "log x axis needs positive values".into(),
        ));
    }
    if plot.y_log && flat.iter().any(|p| p.1 <= 0.0) {
        return Err(Error::InvalidInput(
            "log y axis needs positive values".into(),
        ));
    }

    let xa = Axis::fit(flat.iter().map(|p| p.0), plot.x_log);
    let ya = Axis::fit(flat.iter().map(|p| p.1), plot.y_log);
    let pw = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let ph = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let px = |u: f64| MARGIN_LEFT + u * pw;
    let py = |u: f64| MARGIN_TOP + (1.0 - u) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="13">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="28" text-anchor="middle" font-size="16">{}</text>"#,
        WIDTH / 2.0,
        escape(&plot.title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for (t, label) in xa.ticks() {
        let x = px(xa.unit_raw(t));
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#ccc"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{label}</text>"##,
            MARGIN_TOP,
            MARGIN_TOP + ph,
            MARGIN_TOP + ph + 18.0
        );
    }
    for (t, label) in ya.ticks() {
        let y = py(ya.unit_raw(t));
        let _ = writeln!(
            s,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ccc"/><text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"##,
            MARGIN_LEFT,
            MARGIN_LEFT + pw,
            MARGIN_LEFT - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        MARGIN_LEFT + pw / 2.0,
        HEIGHT - 20.0,
        escape(&plot.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">{}</text>"#,
        MARGIN_TOP + ph / 2.0,
        MARGIN_TOP + ph / 2.0,
        escape(&plot.y_label)
    );

    for (i, series) in plot.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = series
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(xa.unit(x)), py(ya.unit(y))))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        );
        for p in &pts {
            let (cx, cy) = p.split_once(',').expect("formatted pair");
            let _ = writeln!(s, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#);
        }
        let ly = MARGIN_TOP + 16.0 + 18.0 * i as f64;
        let lx = MARGIN_LEFT + pw - 200.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 24.0,
            lx + 30.0,
            ly + 4.0,
            escape(&series.label)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plot(points: Vec<(f64, f64)>) -> Plot {
        Plot {
            title: "cost".into(),
            x_label: "1/eps".into(),
            y_label: "|f|".into(),
            x_log: true,
            y_log: true,
            series: vec![Series {
                label: "a<b".into(),
                points,
            }],
        }
    }

    #[test]
    fn deterministic_and_well_formed() {
        let p = plot(vec![(1e2, 1.0), (1e4, 3.0), (1e6, 10.0)]);
        let a = emit_svg(&p).unwrap();
        assert_eq!(a, emit_svg(&p).unwrap());
        assert!(a.starts_with("<svg"));
        assert!(a.contains(r#"viewBox="0 0 800 600""#));
        assert_eq!(a.matches("<polyline").count(), 1);
        assert_eq!(a.matches("<circle").count(), 3);
        assert!(a.contains("a&lt;b"));
    }

    #[test]
    fn rejects_bad_data() {
        assert!(emit_svg(&plot(vec![])).is_err());
        let e = emit_svg(&plot(vec![
            (1.0, 1.0),
            (2.0, f64::NAN),
            (f64::INFINITY, 1.0),
        ]));
        assert_eq!(e, Err(Error::NonFinite(vec![1, 2])));
        assert!(emit_svg(&plot(vec![(1.0, 0.0)])).is_err());
    }

    #[test]
    fn single_point_is_plotted() {
        let mut p = plot(vec![(1.0, 1.0)]);
        p.x_log = false;
        p.y_log = false;
        let s = emit_svg(&p).unwrap();
        assert!(!s.contains("NaN"));
    }
}
