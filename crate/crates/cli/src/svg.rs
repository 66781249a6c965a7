//! Minimal line-chart SVG writer. Output depends only on the input data.

use std::fmt::Write;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 770.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 540.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Default)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub logx: bool,
    pub logy: bool,
    /// Dashed horizontal line at this `y`.
    pub reference_y: Option<f64>,
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Option<Axis> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return None;
        }
        if hi - lo < 1e-12 {
            let pad = if lo.abs() > 0.0 { lo.abs() * 0.05 } else { 1.0 };
            (lo, hi) = (lo - pad, hi + pad);
        }
        Some(Axis { lo, hi, log })
    }

    fn unit(&self, v: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }

    /// Tick positions in data units.
    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let (a, b) = (self.lo.ceil() as i32, self.hi.floor() as i32);
            if b >= a {
                return (a..=b).map(|k| 10f64.powi(k)).collect();
            }
            return vec![10f64.powf(self.lo), 10f64.powf(self.hi)];
        }
        let raw = (self.hi - self.lo) / 5.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0]
            .iter()
            .map(|k| k * mag)
            .find(|s| *s >= raw)
            .unwrap_or(10.0 * mag);
        let first = (self.lo / step).ceil() as i64;
        let last = (self.hi / step).floor() as i64;
        (first..=last).map(|k| k as f64 * step).collect()
    }
}

fn label(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-3) {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders the chart. Points with non-finite coordinates, or non-positive
/// ones on a log axis, are skipped.
pub fn render(chart: &Chart, series: &[Series]) -> Result<String, String> {
    let keep = |&(x, y): &(f64, f64)| {
        x.is_finite() && y.is_finite() && (!chart.logx || x > 0.0) && (!chart.logy || y > 0.0)
    };
    let kept: Vec<Vec<(f64, f64)>> = series.iter().map(|s| s.points.iter().copied().filter(keep).collect()).collect();
    let all = || kept.iter().flatten();
    let xa = Axis::fit(all().map(|p| p.0), chart.logx).ok_or("nothing to plot")?;
    let extra_y = chart.reference_y.filter(|y| !chart.logy || *y > 0.0);
    let ya = Axis::fit(all().map(|p| p.1).chain(extra_y), chart.logy).ok_or("nothing to plot")?;
    let px = |x: f64| LEFT + xa.unit(x) * (RIGHT - LEFT);
    let py = |y: f64| BOTTOM - ya.unit(y) * (BOTTOM - TOP);

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" width=\"{WIDTH}\" height=\"{HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(s, "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>",
        (LEFT + RIGHT) / 2.0,
        escape(&chart.title)
    );
    let _ = writeln!(s, "<g stroke=\"black\" stroke-width=\"1\">");
    let _ = writeln!(s, "<line x1=\"{LEFT}\" y1=\"{BOTTOM}\" x2=\"{RIGHT}\" y2=\"{BOTTOM}\"/>");
    let _ = writeln!(s, "<line x1=\"{LEFT}\" y1=\"{BOTTOM}\" x2=\"{LEFT}\" y2=\"{TOP}\"/>");
    for t in xa.ticks() {
        let x = px(t);
        let _ = writeln!(s, "<line x1=\"{x:.2}\" y1=\"{BOTTOM}\" x2=\"{x:.2}\" y2=\"{}\"/>", BOTTOM + 5.0);
    }
    for t in ya.ticks() {
        let y = py(t);
        let _ = writeln!(s, "<line x1=\"{}\" y1=\"{y:.2}\" x2=\"{LEFT}\" y2=\"{y:.2}\"/>", LEFT - 5.0);
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, "<g>");
    for t in xa.ticks() {
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
            px(t),
            BOTTOM + 20.0,
            label(t)
        );
    }
    for t in ya.ticks() {
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>",
            LEFT - 8.0,
            py(t) + 4.0,
            label(t)
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
        (LEFT + RIGHT) / 2.0,
        HEIGHT - 20.0,
        escape(&chart.x_label)
    );
    let _ = writeln!(
        s,
        "<text x=\"20\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 20 {})\">{}</text>",
        (TOP + BOTTOM) / 2.0,
        (TOP + BOTTOM) / 2.0,
        escape(&chart.y_label)
    );
    let _ = writeln!(s, "</g>");
    if let Some(y) = extra_y {
        let _ = writeln!(
            s,
            "<line x1=\"{LEFT}\" y1=\"{0:.2}\" x2=\"{RIGHT}\" y2=\"{0:.2}\" stroke=\"black\" stroke-dasharray=\"6 4\"/>",
            py(y)
        );
    }
    for (i, (ser, pts)) in series.iter().zip(&kept).enumerate() {
        if pts.is_empty() {
            continue;
        }
        let mut d = String::new();
        for (k, &(x, y)) in pts.iter().enumerate() {
            let _ = write!(d, "{}{:.2} {:.2}", if k == 0 { "M" } else { " L" }, px(x), py(y));
        }
        let _ = writeln!(
            s,
            "<path d=\"{d}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.2\"><title>{}</title></path>",
            PALETTE[i % PALETTE.len()],
            escape(&ser.label)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}
