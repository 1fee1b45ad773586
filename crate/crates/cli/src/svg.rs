//! Minimal SVG line plot with a shaded mean ± std band.

use std::fmt::Write as _;

const WIDTH: f64 = 560.0;
const HEIGHT: f64 = 360.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 52.0;
const TICKS: usize = 5;

/// Points of one series, sorted by `x`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BandSeries {
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl BandSeries {
    fn finite_points(&self) -> Vec<(f64, f64, f64)> {
        self.x
            .iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((&x, &m), &s)| (x, m, if s.is_finite() { s } else { 0.0 }))
            .filter(|(x, m, _)| x.is_finite() && m.is_finite())
            .collect()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn range(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
        let pad = if lo == 0.0 { 0.5 } else { lo.abs() * 0.1 };
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

pub fn format_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e4).contains(&a) {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.2e}")
    }
}

/// A complete SVG document plotting `series` with its ±std band.
pub fn band_plot(title: &str, x_label: &str, y_label: &str, series: &BandSeries) -> String {
    let pts = series.finite_points();
    let (x0, x1) = range(
        pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min),
        pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max),
    );
    let (y0, y1) = range(
        pts.iter().map(|p| p.1 - p.2).fold(f64::INFINITY, f64::min),
        pts.iter().map(|p| p.1 + p.2).fold(f64::NEG_INFINITY, f64::max),
    );
    let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ =
        writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    let _ = writeln!(s, r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##);
    for i in 0..TICKS {
        let t = i as f64 / (TICKS - 1) as f64;
        let (xv, yv) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(
            s,
            r##"<line x1="{px:.2}" y1="{}" x2="{px:.2}" y2="{}" stroke="#444"/><text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"##,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 19.0,
            format_tick(xv)
        );
        let _ = writeln!(
            s,
            r##"<line x1="{}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="#444"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT - 5.0,
            LEFT - 8.0,
            py + 4.0,
            format_tick(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
        TOP + ph / 2.0,
        escape(y_label)
    );
    if !pts.is_empty() {
        let upper = pts.iter().map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1 + p.2)));
        let lower = pts.iter().rev().map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1 - p.2)));
        let band: Vec<String> = upper.chain(lower).collect();
        let _ =
            writeln!(s, r##"<polygon points="{}" fill="#4878d0" fill-opacity="0.25" stroke="none"/>"##, band.join(" "));
        let line: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1))).collect();
        let _ =
            writeln!(s, r##"<polyline points="{}" fill="none" stroke="#4878d0" stroke-width="2"/>"##, line.join(" "));
        for p in &pts {
            let _ = writeln!(s, r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#4878d0"/>"##, sx(p.0), sy(p.1));
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_band_line_and_markers() {
        let series = BandSeries { x: vec![0.0, 0.25, 0.75], mean: vec![1.0, 2.0, 1.5], std: vec![0.1, 0.3, 0.0] };
        let svg = band_plot("tail <coverage>", "sigma", "score", &series);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<polygon").count(), 1);
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.contains("tail &lt;coverage&gt;"));
        let band = svg.split("<polygon points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(band.split(' ').count(), 6);
    }

    #[test]
    fn constant_and_non_finite_series_stay_drawable() {
        let flat = BandSeries { x: vec![1.0, 1.0], mean: vec![0.0, 0.0], std: vec![0.0, f64::NAN] };
        let svg = band_plot("t", "x", "y", &flat);
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
        let missing = BandSeries { x: vec![0.0, 1.0], mean: vec![f64::NAN, 2.0], std: vec![0.0, 0.0] };
        let svg = band_plot("t", "x", "y", &missing);
        assert_eq!(svg.matches("<circle").count(), 1);
        let empty = band_plot("t", "x", "y", &BandSeries::default());
        assert!(!empty.contains("<polyline"));
    }

    #[test]
    fn tick_labels() {
        assert_eq!(format_tick(0.0), "0");
        assert_eq!(format_tick(0.25), "0.25");
        assert_eq!(format_tick(12.0), "12");
        assert_eq!(format_tick(1.5e-5), "1.50e-5");
    }
}
