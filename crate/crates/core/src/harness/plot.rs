//! Log-log SVG of median error against horizon, drawn from a report alone.

use std::fmt::Write as _;

use crate::harness::report::{ExperimentReport, SERIES_OLS_FULL, SERIES_OLS_PAIRS, SERIES_SON_SG};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 24.0;
const BOTTOM: f64 = 56.0;
const COLORS: [&str; 3] = ["#1f77b4", "#d62728", "#2ca02c"];

struct Axis {
    lo: f64,
    hi: f64,
    px_lo: f64,
    px_hi: f64,
}

impl Axis {
    /// Log10 range padded to whole decades when the data span is tiny.
    fn new(min: f64, max: f64, px_lo: f64, px_hi: f64) -> Self {
        let (mut lo, mut hi) = (min.log10(), max.log10());
        if hi - lo < 0.3 {
            let mid = 0.5 * (lo + hi);
            lo = mid - 0.5;
            hi = mid + 0.5;
        } else {
            let pad = 0.05 * (hi - lo);
            lo -= pad;
            hi += pad;
        }
        Axis {
            lo,
            hi,
            px_lo,
            px_hi,
        }
    }

    fn map(&self, v: f64) -> f64 {
        self.px_lo + (v.log10() - self.lo) / (self.hi - self.lo) * (self.px_hi - self.px_lo)
    }

    fn decades(&self) -> impl Iterator<Item = i32> {
        (self.lo.ceil() as i32)..=(self.hi.floor() as i32)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Median error per horizon for each available series, with a dashed
/// reference line of slope -1/2 through the first estimator point.
pub fn render_svg(report: &ExperimentReport) -> String {
    let horizons = report.horizons();
    let series: Vec<(&str, Vec<(f64, f64)>)> = [SERIES_SON_SG, SERIES_OLS_PAIRS, SERIES_OLS_FULL]
        .into_iter()
        .map(|name| {
            let pts = horizons
                .iter()
                .filter_map(|&h| {
                    report
                        .aggregate_for(name, h)
                        .filter(|a| a.median > 0.0 && a.median.is_finite())
                        .map(|a| (h as f64, a.median))
                })
                .collect::<Vec<_>>();
            (name, pts)
        })
        .filter(|(_, pts)| !pts.is_empty())
        .collect();

    let reference: Vec<(f64, f64)> = series
        .iter()
        .find(|(n, _)| *n == SERIES_SON_SG)
        .or(series.first())
        .map(|(_, pts)| {
            let (t0, e0) = pts[0];
            let t1 = horizons.last().map(|&h| h as f64).unwrap_or(t0);
            vec![(t0, e0), (t1, e0 * (t1 / t0).powf(-0.5))]
        })
        .unwrap_or_default();

    let all: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|(_, p)| p.iter().cloned())
        .chain(reference.iter().cloned())
        .collect();
    let (xmin, xmax, ymin, ymax) = if all.is_empty() {
        (1.0, 10.0, 0.1, 1.0)
    } else {
        all.iter().fold(
            (f64::INFINITY, 0.0f64, f64::INFINITY, 0.0f64),
            |(a, b, c, d), &(x, y)| (a.min(x), b.max(x), c.min(y), d.max(y)),
        )
    };
    let xa = Axis::new(xmin, xmax, LEFT, WIDTH - RIGHT);
    let ya = Axis::new(ymin, ymax, HEIGHT - BOTTOM, TOP);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM, TOP);
    let _ = writeln!(
        s,
        r#"<g class="axes" stroke="black" fill="none"><line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}"/><line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}"/></g>"#
    );
    for k in xa.decades() {
        let px = xa.map(10f64.powi(k));
        let _ = writeln!(
            s,
            r#"<line class="tick" x1="{px:.2}" y1="{y0}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">1e{k}</text>"#,
            y0 + 5.0,
            y0 + 18.0
        );
    }
    for k in ya.decades() {
        let py = ya.map(10f64.powi(k));
        let _ = writeln!(
            s,
            r#"<line class="tick" x1="{:.2}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{k}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">horizon T (log scale)</text>"#,
        0.5 * (x0 + x1),
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(16,{:.2}) rotate(-90)" text-anchor="middle">median error (log scale)</text>"#,
        0.5 * (y0 + y1)
    );

    if reference.len() == 2 {
        let _ = writeln!(
            s,
            r#"<polyline class="reference" data-slope="-0.5" points="{:.2},{:.2} {:.2},{:.2}" fill="none" stroke="gray" stroke-dasharray="6,4"/>"#,
            xa.map(reference[0].0),
            ya.map(reference[0].1),
            xa.map(reference[1].0),
            ya.map(reference[1].1)
        );
    }
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let points = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", xa.map(x), ya.map(y)))
            .collect::<Vec<_>>()
            .join(" ");
        let _ = writeln!(
            s,
            r#"<g class="series" data-name="{}"><polyline points="{points}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            escape(name)
        );
        for &(x, y) in pts {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                xa.map(x),
                ya.map(y)
            );
        }
        s.push_str("</g>\n");
    }

    let lx = WIDTH - RIGHT + 12.0;
    for (i, (name, _)) in series.iter().enumerate() {
        let y = TOP + 16.0 + 18.0 * i as f64;
        let color = COLORS[i % COLORS.len()];
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{y}" x2="{:.2}" y2="{y}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            y + 4.0,
            escape(name)
        );
    }
    if reference.len() == 2 {
        let y = TOP + 16.0 + 18.0 * series.len() as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{y}" x2="{:.2}" y2="{y}" stroke="gray" stroke-dasharray="6,4"/><text x="{:.2}" y="{:.2}">slope -1/2</text>"#,
            lx + 20.0,
            lx + 26.0,
            y + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}
