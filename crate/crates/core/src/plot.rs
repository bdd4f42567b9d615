//! Minimal deterministic SVG charts. Coordinates are printed with fixed
//! precision so repeated runs produce byte-identical files.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

#[derive(Clone, Copy, Debug)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub fn new(min: f64, max: f64) -> Self {
        Range { min, max }
    }

    /// Smallest range covering `values`, padded when degenerate.
    pub fn covering(values: impl IntoIterator<Item = f64>) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.into_iter().filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return Range::new(0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            let pad = if lo.abs() > 1e-12 { lo.abs() * 0.1 } else { 1.0 };
            return Range::new(lo - pad, hi + pad);
        }
        Range::new(lo, hi)
    }

    fn fraction(&self, v: f64) -> f64 {
        (v - self.min) / (self.max - self.min)
    }
}

pub struct Chart {
    x: Range,
    y: Range,
    body: String,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Chart {
    pub fn new(title: &str, x_label: &str, y_label: &str, x: Range, y: Range) -> Self {
        let mut body = String::new();
        let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
        let _ = writeln!(
            body,
            r#"<rect x="{l:.2}" y="{t:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
            r - l,
            b - t
        );
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let xv = x.min + f * (x.max - x.min);
            let yv = y.min + f * (y.max - y.min);
            let px = l + f * (r - l);
            let py = b - f * (b - t);
            let _ = writeln!(
                body,
                r#"<text x="{px:.2}" y="{:.2}" font-size="11" text-anchor="middle">{xv:.3}</text>"#,
                b + 16.0
            );
            let _ = writeln!(
                body,
                r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{yv:.3}</text>"#,
                l - 6.0,
                py + 4.0
            );
        }
        let _ = writeln!(
            body,
            r#"<text x="{:.2}" y="{:.2}" font-size="15" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            MARGIN / 2.0,
            escape(title)
        );
        let _ = writeln!(
            body,
            r#"<text x="{:.2}" y="{:.2}" font-size="13" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 15.0,
            escape(x_label)
        );
        let _ = writeln!(
            body,
            r#"<text x="15" y="{:.2}" font-size="13" text-anchor="middle" transform="rotate(-90 15 {:.2})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(y_label)
        );
        Chart { x, y, body }
    }

    fn px(&self, v: f64) -> f64 {
        MARGIN + self.x.fraction(v) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, v: f64) -> f64 {
        HEIGHT - MARGIN - self.y.fraction(v) * (HEIGHT - 2.0 * MARGIN)
    }

    pub fn reference_line(&mut self, from: (f64, f64), to: (f64, f64)) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="4 4"/>"#,
            self.px(from.0),
            self.py(from.1),
            self.px(to.0),
            self.py(to.1)
        );
    }

    pub fn labelled_point(&mut self, x: f64, y: f64, label: &str) {
        let (px, py) = (self.px(x), self.py(y));
        let _ = writeln!(
            self.body,
            r#"<circle cx="{px:.2}" cy="{py:.2}" r="3" fill="{}"/>"#,
            PALETTE[0]
        );
        let _ = writeln!(
            self.body,
            r#"<text x="{:.2}" y="{:.2}" font-size="10">{}</text>"#,
            px + 4.0,
            py - 4.0,
            escape(label)
        );
    }

    pub fn polyline(&mut self, points: &[(f64, f64)], series: usize, name: &str) {
        if points.is_empty() {
            return;
        }
        let mut coords = String::new();
        for &(x, y) in points {
            let _ = write!(coords, "{:.2},{:.2} ", self.px(x), self.py(y));
        }
        let colour = PALETTE[series % PALETTE.len()];
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#,
            coords.trim_end()
        );
        let _ = writeln!(
            self.body,
            r#"<text x="{:.2}" y="{:.2}" font-size="10" fill="{colour}">{}</text>"#,
            WIDTH - MARGIN + 4.0,
            MARGIN + 12.0 * (series as f64 + 1.0),
            escape(name)
        );
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n{}</svg>\n",
            self.body
        )
    }
}
