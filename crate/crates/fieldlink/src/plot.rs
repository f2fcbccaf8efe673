//! Minimal SVG emission: a mean line with a +/-1 std band, histograms and
//! the mission timeline all render through this module. Output is plain
//! text built with fixed-precision coordinates, so identical inputs always
//! produce identical bytes.

use std::fmt::Write as _;

pub const PALETTE: [&str; 6] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
];

fn px(v: f64) -> String {
    format!("{v:.2}")
}

fn esc(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Bare SVG document builder.
pub struct Svg {
    width: f64,
    height: f64,
    body: String,
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        Self {
            width,
            height,
            body: String::new(),
        }
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, opacity: f64) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{}" fill-opacity="{opacity:.2}"/>"#,
            px(x),
            px(y),
            px(w),
            px(h),
            fill
        );
    }

    pub fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{}" stroke-width="{width:.1}"/>"#,
            px(x1),
            px(y1),
            px(x2),
            px(y2),
            stroke
        );
    }

    pub fn dashed_line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{}" stroke-width="{width:.1}" stroke-dasharray="6 4"/>"#,
            px(x1),
            px(y1),
            px(x2),
            px(y2),
            stroke
        );
    }

    pub fn polyline(&mut self, points: &[(f64, f64)], stroke: &str, width: f64) {
        if points.is_empty() {
            return;
        }
        let pts: Vec<String> = points
            .iter()
            .map(|(x, y)| format!("{},{}", px(*x), px(*y)))
            .collect();
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="{width:.1}"/>"#,
            pts.join(" "),
            stroke
        );
    }

    pub fn polygon(&mut self, points: &[(f64, f64)], fill: &str, opacity: f64) {
        if points.is_empty() {
            return;
        }
        let pts: Vec<String> = points
            .iter()
            .map(|(x, y)| format!("{},{}", px(*x), px(*y)))
            .collect();
        let _ = writeln!(
            self.body,
            r#"<polygon points="{}" fill="{}" fill-opacity="{opacity:.2}"/>"#,
            pts.join(" "),
            fill
        );
    }

    pub fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, content: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{}" y="{}" font-size="{size:.0}" font-family="sans-serif" text-anchor="{anchor}">{}</text>"#,
            px(x),
            px(y),
            esc(content)
        );
    }

    pub fn render(&self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
             <rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n{body}</svg>\n",
            w = px(self.width),
            h = px(self.height),
            body = self.body
        )
    }
}

/// Maps data coordinates into a framed plot area and draws axes with ticks.
pub struct ChartFrame {
    pub x0: f64,
    pub y0: f64,
    pub w: f64,
    pub h: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl ChartFrame {
    pub fn x(&self, v: f64) -> f64 {
        let span = (self.x_max - self.x_min).max(f64::MIN_POSITIVE);
        self.x0 + (v - self.x_min) / span * self.w
    }

    pub fn y(&self, v: f64) -> f64 {
        let span = (self.y_max - self.y_min).max(f64::MIN_POSITIVE);
        self.y0 + self.h - (v - self.y_min) / span * self.h
    }

    pub fn draw_axes(&self, svg: &mut Svg, x_label: &str, y_label: &str) {
        svg.line(
            self.x0,
            self.y0 + self.h,
            self.x0 + self.w,
            self.y0 + self.h,
            "#333333",
            1.0,
        );
        svg.line(self.x0, self.y0, self.x0, self.y0 + self.h, "#333333", 1.0);
        for i in 0..=4 {
            let fx = self.x_min + (self.x_max - self.x_min) * i as f64 / 4.0;
            let fy = self.y_min + (self.y_max - self.y_min) * i as f64 / 4.0;
            let xp = self.x(fx);
            let yp = self.y(fy);
            svg.line(
                xp,
                self.y0 + self.h,
                xp,
                self.y0 + self.h + 4.0,
                "#333333",
                1.0,
            );
            svg.text(xp, self.y0 + self.h + 16.0, 10.0, "middle", &trim_tick(fx));
            svg.line(self.x0 - 4.0, yp, self.x0, yp, "#333333", 1.0);
            svg.text(self.x0 - 6.0, yp + 3.0, 10.0, "end", &trim_tick(fy));
        }
        svg.text(
            self.x0 + self.w / 2.0,
            self.y0 + self.h + 32.0,
            11.0,
            "middle",
            x_label,
        );
        // y label drawn horizontally above the axis to keep the emitter simple
        svg.text(self.x0, self.y0 - 8.0, 11.0, "start", y_label);
    }
}

fn trim_tick(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else if v.abs() >= 1.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.2}")
    }
}

/// One named series for [`band_chart`]: a mean line and its +/-1 std band.
pub struct BandSeries {
    pub label: String,
    /// (x, mean, std) per point.
    pub points: Vec<(f64, f64, f64)>,
}

/// Time-series chart with a solid mean line centred in a +/-1 std shaded
/// region, one colour per series.
pub fn band_chart(title: &str, x_label: &str, y_label: &str, series: &[BandSeries]) -> String {
    let (width, height) = (640.0, 360.0);
    let mut svg = Svg::new(width, height);
    svg.text(width / 2.0, 20.0, 13.0, "middle", title);

    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min: f64 = 0.0;
    let mut y_max = f64::NEG_INFINITY;
    for s in series {
        for &(x, mean, std) in &s.points {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(mean - std);
            y_max = y_max.max(mean + std);
        }
    }
    if !x_min.is_finite() {
        x_min = 0.0;
        x_max = 1.0;
        y_max = 1.0;
    }
    if y_max <= y_min {
        y_max = y_min + 1.0;
    }
    let pad = (y_max - y_min) * 0.08;
    let frame = ChartFrame {
        x0: 60.0,
        y0: 36.0,
        w: width - 80.0,
        h: height - 96.0,
        x_min,
        x_max: if x_max > x_min { x_max } else { x_min + 1.0 },
        y_min,
        y_max: y_max + pad,
    };
    frame.draw_axes(&mut svg, x_label, y_label);

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let upper: Vec<(f64, f64)> = s
            .points
            .iter()
            .map(|&(x, m, sd)| (frame.x(x), frame.y(m + sd)))
            .collect();
        let mut band = upper.clone();
        band.extend(
            s.points
                .iter()
                .rev()
                .map(|&(x, m, sd)| (frame.x(x), frame.y(m - sd))),
        );
        svg.polygon(&band, color, 0.18);
        let mean_line: Vec<(f64, f64)> = s
            .points
            .iter()
            .map(|&(x, m, _)| (frame.x(x), frame.y(m)))
            .collect();
        svg.polyline(&mean_line, color, 1.6);
        // legend swatch
        let ly = 30.0 + i as f64 * 14.0;
        svg.rect(width - 150.0, ly - 8.0, 10.0, 10.0, color, 1.0);
        svg.text(width - 136.0, ly, 10.0, "start", &s.label);
    }
    svg.render()
}

/// Simple bar histogram of raw values.
pub fn histogram(title: &str, x_label: &str, values: &[f64], bins: usize) -> String {
    let (width, height) = (640.0, 360.0);
    let mut svg = Svg::new(width, height);
    svg.text(width / 2.0, 20.0, 13.0, "middle", title);
    if values.is_empty() || bins == 0 {
        svg.text(width / 2.0, height / 2.0, 12.0, "middle", "no samples");
        return svg.render();
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &v in values {
        let idx = (((v - lo) / span) * bins as f64) as usize;
        counts[idx.min(bins - 1)] += 1;
    }
    let peak = *counts.iter().max().unwrap() as f64;
    let frame = ChartFrame {
        x0: 60.0,
        y0: 36.0,
        w: width - 80.0,
        h: height - 96.0,
        x_min: lo,
        x_max: lo + span,
        y_min: 0.0,
        y_max: peak,
    };
    frame.draw_axes(&mut svg, x_label, "count");
    let bar_w = frame.w / bins as f64;
    for (i, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let x = frame.x0 + i as f64 * bar_w;
        let y = frame.y(c as f64);
        svg.rect(x, y, bar_w - 1.0, frame.y0 + frame.h - y, PALETTE[0], 0.85);
    }
    svg.render()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_inputs_render_identical_bytes() {
        let series = [BandSeries {
            label: "A".into(),
            points: vec![(0.0, 10.0, 1.0), (1.0, 12.0, 2.0), (2.0, 11.0, 0.5)],
        }];
        let a = band_chart("t", "x", "y", &series);
        let b = band_chart("t", "x", "y", &series);
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.contains("polygon"));
    }

    #[test]
    fn zero_std_band_has_zero_width() {
        let series = [BandSeries {
            label: "flat".into(),
            points: vec![(0.0, 5.0, 0.0), (1.0, 5.0, 0.0)],
        }];
        let svg = band_chart("t", "x", "y", &series);
        // upper and lower band edges coincide when std is zero
        let band_line = svg.lines().find(|l| l.starts_with("<polygon")).unwrap();
        let pts: Vec<&str> = band_line.split('"').nth(1).unwrap().split(' ').collect();
        assert_eq!(pts[0], pts[3]);
        assert_eq!(pts[1], pts[2]);
    }

    #[test]
    fn histogram_handles_empty_input() {
        let svg = histogram("h", "ms", &[], 10);
        assert!(svg.contains("no samples"));
    }

    #[test]
    fn text_is_escaped() {
        let mut svg = Svg::new(10.0, 10.0);
        svg.text(0.0, 0.0, 10.0, "start", "a < b & c");
        assert!(svg.render().contains("a &lt; b &amp; c"));
    }
}
