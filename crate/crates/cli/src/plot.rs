//! Static SVG line plots: axes, polylines and a legend.

use std::fmt::Write as _;

const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 260.0;
const MARGIN_L: f64 = 62.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 36.0;
const MAX_POINTS: usize = 2000;

pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub values: &'a [f64],
}

pub struct Panel<'a> {
    pub title: String,
    pub y_label: &'a str,
    pub series: Vec<Series<'a>>,
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{}", (v * 1000.0).round() / 1000.0)
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = lo.abs().max(1.0) * 0.05;
        (lo - pad, hi + pad)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

fn panel(svg: &mut String, x0: f64, y0: f64, t: &[f64], p: &Panel) {
    let (w, h) = (PANEL_W - MARGIN_L - MARGIN_R, PANEL_H - MARGIN_T - MARGIN_B);
    let (ox, oy) = (x0 + MARGIN_L, y0 + MARGIN_T);
    let (t0, t1) = (
        t.first().copied().unwrap_or(0.0),
        t.last().copied().unwrap_or(1.0).max(1e-12),
    );
    let (lo, hi) = range(p.series.iter().flat_map(|s| s.values.iter().copied()));
    let sx = |v: f64| ox + (v - t0) / (t1 - t0).max(1e-12) * w;
    let sy = |v: f64| oy + h - (v - lo) / (hi - lo) * h;

    let _ = writeln!(
        svg,
        r#"<rect x="{ox:.1}" y="{oy:.1}" width="{w:.1}" height="{h:.1}" fill="none" stroke="dimgray"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="13">{}</text>"#,
        ox + w / 2.0,
        y0 + 18.0,
        p.title
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (tv, yv) = (t0 + f * (t1 - t0), lo + f * (hi - lo));
        let (x, y) = (sx(tv), sy(yv));
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="dimgray"/><text x="{x:.1}" y="{:.1}" text-anchor="middle" font-size="10">{}</text>"#,
            oy + h,
            oy + h + 4.0,
            oy + h + 15.0,
            fmt_tick(tv)
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{:.1}" y1="{y:.1}" x2="{ox:.1}" y2="{y:.1}" stroke="dimgray"/><text x="{:.1}" y="{:.1}" text-anchor="end" font-size="10">{}</text>"#,
            ox - 4.0,
            ox - 6.0,
            y + 3.0,
            fmt_tick(yv)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="11">t [s]</text>"#,
        ox + w / 2.0,
        y0 + PANEL_H - 4.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" font-size="11" transform="rotate(-90 {:.1} {:.1})" text-anchor="middle">{}</text>"#,
        x0 + 12.0,
        oy + h / 2.0,
        x0 + 12.0,
        oy + h / 2.0,
        p.y_label
    );

    let stride = (t.len() / MAX_POINTS).max(1);
    for (i, s) in p.series.iter().enumerate() {
        let mut points = String::new();
        for (k, (tv, v)) in t.iter().zip(s.values).enumerate() {
            if (k % stride == 0 || k + 1 == t.len()) && v.is_finite() {
                let _ = write!(points, "{:.2},{:.2} ", sx(*tv), sy(*v));
            }
        }
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.3" points="{}"/>"#,
            s.color,
            points.trim_end()
        );
        let ly = oy + 12.0 + 14.0 * i as f64;
        let lx = ox + w - 110.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{}" stroke-width="2"/><text x="{:.1}" y="{:.1}" font-size="10">{}</text>"#,
            lx + 18.0,
            s.color,
            lx + 22.0,
            ly + 3.0,
            s.label
        );
    }
}

/// Lays panels out in a grid with `columns` columns.
pub fn render(t: &[f64], panels: &[Panel], columns: usize) -> String {
    let columns = columns.clamp(1, panels.len().max(1));
    let rows = panels.len().div_ceil(columns).max(1);
    let (width, height) = (PANEL_W * columns as f64, PANEL_H * rows as f64);
    let mut svg = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif">
<rect width="100%" height="100%" fill="white"/>
"#
    );
    for (i, p) in panels.iter().enumerate() {
        let (c, r) = (i % columns, i / columns);
        panel(&mut svg, c as f64 * PANEL_W, r as f64 * PANEL_H, t, p);
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_one_polyline_per_series() {
        let t = [0.0, 1.0, 2.0];
        let a = [1.0, 2.0, 3.0];
        let b = [3.0, 2.0, 1.0];
        let panels = [Panel {
            title: "demo".into(),
            y_label: "y",
            series: vec![
                Series {
                    label: "a",
                    color: "red",
                    values: &a,
                },
                Series {
                    label: "b",
                    color: "blue",
                    values: &b,
                },
            ],
        }];
        let svg = render(&t, &panels, 2);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn constant_series_has_finite_coordinates() {
        let t = [0.0, 1.0];
        let a = [0.5, 0.5];
        let panels = [Panel {
            title: "flat".into(),
            y_label: "y",
            series: vec![Series {
                label: "a",
                color: "red",
                values: &a,
            }],
        }];
        let svg = render(&t, &panels, 1);
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }
}
