//! Minimal static SVG line plots. Numeric verification runs on the CSV
//! outputs; these files exist only for eyeballing trends.

use super::HarnessError;
use std::fmt::Write as _;
use std::path::Path;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

impl LinePlot {
    fn transform(&self, p: (f64, f64)) -> Option<(f64, f64)> {
        let x = if self.log_x {
            if p.0 <= 0.0 {
                return None;
            }
            p.0.ln()
        } else {
            p.0
        };
        let y = if self.log_y {
            if p.1 <= 0.0 {
                return None;
            }
            p.1.ln()
        } else {
            p.1
        };
        (x.is_finite() && y.is_finite()).then_some((x, y))
    }

    pub fn render(&self) -> String {
        let pts: Vec<Vec<(f64, f64)>> = self
            .series
            .iter()
            .map(|s| s.points.iter().filter_map(|&p| self.transform(p)).collect())
            .collect();
        let all: Vec<(f64, f64)> = pts.iter().flatten().copied().collect();
        let (mut x0, mut x1, mut y0, mut y1) = (
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
        );
        for &(x, y) in &all {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if all.is_empty() || x0 == x1 {
            x0 = 0.0;
            x1 = 1.0;
        }
        if all.is_empty() || y0 == y1 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
        let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

        let mut svg = String::new();
        writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
        )
        .unwrap();
        writeln!(
            svg,
            r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
        )
        .unwrap();
        writeln!(
            svg,
            r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="16">{}</text>"#,
            WIDTH / 2.0,
            xml_escape(&self.title)
        )
        .unwrap();
        // Axes.
        writeln!(
            svg,
            r#"<line x1="{m}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{m}" y1="{t}" x2="{m}" y2="{b}" stroke="black"/>"#,
            m = MARGIN,
            r = WIDTH - MARGIN,
            t = MARGIN,
            b = HEIGHT - MARGIN
        )
        .unwrap();
        let fmt_tick = |v: f64, log: bool| {
            if log {
                format!("{:.3e}", v.exp())
            } else {
                format!("{v:.3}")
            }
        };
        writeln!(
            svg,
            r#"<text x="{m}" y="{b}" font-size="11">{lo}</text><text x="{r}" y="{b}" text-anchor="end" font-size="11">{hi}</text>"#,
            m = MARGIN,
            r = WIDTH - MARGIN,
            b = HEIGHT - MARGIN + 18.0,
            lo = fmt_tick(x0, self.log_x),
            hi = fmt_tick(x1, self.log_x),
        )
        .unwrap();
        writeln!(
            svg,
            r#"<text x="{x}" y="{t}" font-size="11">{hi}</text><text x="{x}" y="{b}" font-size="11">{lo}</text>"#,
            x = 4.0,
            t = MARGIN,
            b = HEIGHT - MARGIN,
            hi = fmt_tick(y1, self.log_y),
            lo = fmt_tick(y0, self.log_y),
        )
        .unwrap();
        writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="13">{}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 14.0,
            xml_escape(&self.x_label)
        )
        .unwrap();
        writeln!(
            svg,
            r#"<text x="16" y="{:.1}" font-size="13" transform="rotate(-90 16 {:.1})" text-anchor="middle">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            xml_escape(&self.y_label)
        )
        .unwrap();

        for (si, (series, pts)) in self.series.iter().zip(&pts).enumerate() {
            let color = PALETTE[si % PALETTE.len()];
            if pts.len() >= 2 {
                let path: Vec<String> = pts
                    .iter()
                    .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                    .collect();
                writeln!(
                    svg,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                    path.join(" ")
                )
                .unwrap();
            }
            for &(x, y) in pts {
                writeln!(
                    svg,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#,
                    sx(x),
                    sy(y)
                )
                .unwrap();
            }
            writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" font-size="12" fill="{color}">{}</text>"#,
                WIDTH - MARGIN - 180.0,
                MARGIN + 16.0 * (si as f64 + 1.0),
                xml_escape(&series.label)
            )
            .unwrap();
        }
        svg.push_str("</svg>\n");
        svg
    }

    pub fn write(&self, path: &Path) -> Result<(), HarnessError> {
        std::fs::write(path, self.render())?;
        Ok(())
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
