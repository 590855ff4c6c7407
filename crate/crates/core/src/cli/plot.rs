//! Minimal deterministic SVG line plots of a trajectory.

use std::fmt::Write as _;

use crate::sim::Trajectory;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub series: Vec<(String, Vec<(f64, f64)>)>,
}

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let start = (lo / step).ceil() as i64;
    let end = (hi / step).floor() as i64;
    (start..=end).map(|k| k as f64 * step).collect()
}

fn label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

impl LinePlot {
    fn transform(&self, y: f64) -> Option<f64> {
        if self.log_y {
            (y > 0.0 && y.is_finite()).then(|| y.log10())
        } else {
            y.is_finite().then_some(y)
        }
    }

    pub fn render(&self) -> String {
        let pts: Vec<(f64, f64)> = self
            .series
            .iter()
            .flat_map(|(_, s)| s.iter().filter_map(|(x, y)| self.transform(*y).map(|ty| (*x, ty))))
            .collect();
        let (mut x0, mut x1, mut y0, mut y1) = pts.iter().fold(
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
            |(a, b, c, d), (x, y)| (a.min(*x), b.max(*x), c.min(*y), d.max(*y)),
        );
        if pts.is_empty() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 - x0 <= 0.0 {
            x1 = x0 + 1.0;
        }
        if y1 - y0 <= 0.0 {
            let pad = if y0 == 0.0 { 1.0 } else { 0.1 * y0.abs() };
            y0 -= pad;
            y1 += pad;
        }
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            LEFT + pw / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            out,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        for t in nice_ticks(x0, x1) {
            let _ = writeln!(
                out,
                r##"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="#ddd"/><text x="{0:.2}" y="{3:.2}" text-anchor="middle">{4}</text>"##,
                sx(t),
                TOP,
                TOP + ph,
                TOP + ph + 16.0,
                label(t)
            );
        }
        let y_ticks = if self.log_y {
            let (lo, hi) = (y0.ceil() as i64, y1.floor() as i64);
            let stride = ((hi - lo) / 6 + 1).max(1);
            (lo..=hi).filter(|k| (k - lo) % stride == 0).map(|k| k as f64).collect()
        } else {
            nice_ticks(y0, y1)
        };
        for t in y_ticks {
            let text = if self.log_y { format!("1e{}", t as i64) } else { label(t) };
            let _ = writeln!(
                out,
                r##"<line x1="{0:.2}" y1="{1:.2}" x2="{2:.2}" y2="{1:.2}" stroke="#ddd"/><text x="{3:.2}" y="{4:.2}" text-anchor="end">{5}</text>"##,
                LEFT,
                sy(t),
                LEFT + pw,
                LEFT - 6.0,
                sy(t) + 4.0,
                text
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="16" y="{0:.1}" text-anchor="middle" transform="rotate(-90 16 {0:.1})">{1}</text>"#,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );
        for (k, (name, s)) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            // Break the polyline wherever a point cannot be drawn.
            let mut runs: Vec<Vec<String>> = vec![Vec::new()];
            for (x, y) in s {
                match self.transform(*y) {
                    Some(ty) => runs.last_mut().unwrap().push(format!("{:.2},{:.2}", sx(*x), sy(ty))),
                    None => runs.push(Vec::new()),
                }
            }
            for run in runs.iter().filter(|r| r.len() > 1) {
                let _ = writeln!(
                    out,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                    run.join(" ")
                );
            }
            let ly = TOP + 14.0 + 18.0 * k as f64;
            let lx = LEFT + pw + 12.0;
            let _ = writeln!(
                out,
                r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
                lx + 20.0,
                lx + 26.0,
                ly + 4.0,
                escape(name)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// `(file name, svg)` for the χ-norms, the inputs and the boundary traces.
pub fn trajectory_plots(traj: &Trajectory) -> Vec<(String, String)> {
    let mode = traj.mode.as_str();
    let t = traj.times();
    let column = |f: &dyn Fn(&crate::sim::Sample) -> f64| -> Vec<(f64, f64)> {
        t.iter().zip(&traj.samples).map(|(t, s)| (*t, f(s))).collect()
    };
    let (_, n, m, _) = traj.dims;
    let ns = traj.stations.len();

    let mut chi = vec![("state".to_string(), column(&|s| s.chi_state))];
    if traj.samples.iter().any(|s| s.chi_error.is_finite()) {
        chi.push(("observer error".into(), column(&|s| s.chi_error)));
    }
    let inputs = (0..n)
        .map(|i| (format!("U_{i}"), column(&|s| s.input[i])))
        .collect();
    let mut traces: Vec<(String, Vec<(f64, f64)>)> = (0..n)
        .map(|i| (format!("y_{i} = u{i}(1)"), column(&|s| s.y[i])))
        .collect();
    let left = traj
        .stations
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, x)| (k, *x));
    if let Some((k, x)) = left {
        for j in 0..m {
            traces.push((format!("v{j}({x})"), column(&|s| s.v[j * ns + k])));
        }
    }
    let plots = [
        ("chi", "χ-norms", "χ", true, chi),
        ("input", "Control input", "U", false, inputs),
        ("boundary", "Boundary traces", "value", false, traces),
    ];
    plots
        .into_iter()
        .map(|(file, title, y, log_y, series)| {
            let p = LinePlot {
                title: format!("{title} ({mode})"),
                x_label: "t".into(),
                y_label: y.into(),
                log_y,
                series,
            };
            (format!("{file}_{mode}.svg"), p.render())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plot(log_y: bool, ys: &[f64]) -> LinePlot {
        LinePlot {
            title: "a < b".into(),
            x_label: "t".into(),
            y_label: "y".into(),
            log_y,
            series: vec![("s".into(), ys.iter().enumerate().map(|(i, y)| (i as f64, *y)).collect())],
        }
    }

    #[test]
    fn renders_deterministically() {
        let p = plot(false, &[1.0, -2.0, 3.0]);
        let a = p.render();
        assert_eq!(a, p.render());
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert!(a.contains("a &lt; b"));
        assert_eq!(a.matches("<polyline").count(), 1);
    }

    #[test]
    fn log_scale_breaks_at_non_positive_values() {
        let s = plot(true, &[1.0, 0.1, 0.0, 0.01, 0.001]).render();
        assert_eq!(s.matches("<polyline").count(), 2);
        assert!(s.contains("1e-3"));
    }

    #[test]
    fn degenerate_ranges() {
        let s = plot(false, &[2.0, 2.0]).render();
        assert!(!s.contains("NaN") && !s.contains("inf"));
        let s = plot(true, &[]).render();
        assert!(!s.contains("NaN"));
    }

    #[test]
    fn ticks_are_round() {
        assert_eq!(nice_ticks(0.0, 10.0), vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        assert_eq!(nice_ticks(-1.0, 1.0), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    }
}
