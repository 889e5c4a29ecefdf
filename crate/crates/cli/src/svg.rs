//! Minimal SVG emitter for log-log scatter charts.
//!
//! A chart is a few hundred shapes, so the markup is written directly
//! instead of through a plotting dependency. Every coordinate is formatted
//! with two decimals and nothing depends on iteration order or time, so a
//! fixed chart renders to byte-identical files.
//!
//! Visual conventions: both axes log-scaled with gridlines at powers of
//! ten, point fill color encodes a third quantity (blue low, red high, log
//! scale), point radius encodes a fourth (log scale), and optional
//! overlays draw the lower-envelope step function and a fitted law curve.

pub struct Point {
    pub x: f64,
    pub y: f64,
    /// Value encoded as fill color.
    pub color: f64,
    /// Value encoded as radius.
    pub size: f64,
}

pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub color_label: String,
    pub size_label: String,
    pub points: Vec<Point>,
    /// Step-function vertices, already in data coordinates.
    pub envelope: Option<Vec<(f64, f64)>>,
    /// Smooth curve vertices, already in data coordinates.
    pub curve: Option<Vec<(f64, f64)>>,
}

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 600.0;
const LEFT: f64 = 70.0;
const TOP: f64 = 46.0;
const PLOT_W: f64 = 700.0;
const PLOT_H: f64 = 498.0;
/// Left edge of the legend column.
const LEGEND_X: f64 = 792.0;

const BLUE: [f64; 3] = [31.0, 119.0, 180.0];
const RED: [f64; 3] = [214.0, 39.0, 40.0];

fn fmt2(v: f64) -> String {
    format!("{v:.2}")
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Decade exponents spanning all finite positive values, widened so the
/// span is never empty.
fn exp_range<I: Iterator<Item = f64>>(values: I) -> (i32, i32) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        if v.is_finite() && v > 0.0 {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() {
        return (0, 1);
    }
    let lo_e = lo.log10().floor() as i32;
    let hi_e = hi.log10().ceil() as i32;
    if hi_e > lo_e {
        (lo_e, hi_e)
    } else {
        (lo_e, lo_e + 1)
    }
}

/// Position of `v` in [0, 1] between two decade exponents, log scale.
fn log_frac(v: f64, lo_e: i32, hi_e: i32) -> f64 {
    let t = (v.log10() - lo_e as f64) / (hi_e - lo_e) as f64;
    t.clamp(0.0, 1.0)
}

/// Position of `v` in [0, 1] between `lo` and `hi`, log scale; midpoint
/// when the range is degenerate.
// The negated comparison routes NaN endpoints to the midpoint fallback.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
fn span_frac(v: f64, lo: f64, hi: f64) -> f64 {
    let (a, b) = (lo.ln(), hi.ln());
    if !(b > a) {
        return 0.5;
    }
    ((v.ln() - a) / (b - a)).clamp(0.0, 1.0)
}

fn color_at(t: f64) -> String {
    let ch = |i: usize| (BLUE[i] + t * (RED[i] - BLUE[i])).round() as u8;
    format!("rgb({},{},{})", ch(0), ch(1), ch(2))
}

fn radius_at(t: f64) -> f64 {
    2.5 + 3.5 * t
}

struct Frame {
    x_lo: i32,
    x_hi: i32,
    y_lo: i32,
    y_hi: i32,
}

impl Frame {
    fn px(&self, v: f64) -> f64 {
        LEFT + log_frac(v, self.x_lo, self.x_hi) * PLOT_W
    }

    fn py(&self, v: f64) -> f64 {
        TOP + (1.0 - log_frac(v, self.y_lo, self.y_hi)) * PLOT_H
    }
}

fn polyline(s: &mut String, frame: &Frame, pts: &[(f64, f64)], stroke: &str, width: f64) {
    let coords: Vec<String> =
        pts.iter().map(|&(x, y)| format!("{},{}", fmt2(frame.px(x)), fmt2(frame.py(y)))).collect();
    s.push_str(&format!(
        "<polyline fill=\"none\" stroke=\"{stroke}\" stroke-width=\"{}\" points=\"{}\"/>\n",
        fmt2(width),
        coords.join(" ")
    ));
}

fn text(s: &mut String, x: f64, y: f64, anchor: &str, size: u32, content: &str) {
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"{anchor}\" font-size=\"{size}\">{}</text>\n",
        fmt2(x),
        fmt2(y),
        esc(content)
    ));
}

pub fn render(c: &Chart) -> String {
    let usable: Vec<&Point> = c
        .points
        .iter()
        .filter(|p| {
            [p.x, p.y, p.color, p.size].iter().all(|v| v.is_finite() && *v > 0.0)
        })
        .collect();

    let overlay_x = c.envelope.iter().chain(c.curve.iter()).flatten().map(|p| p.0);
    let overlay_y = c.envelope.iter().chain(c.curve.iter()).flatten().map(|p| p.1);
    let (x_lo, x_hi) = exp_range(usable.iter().map(|p| p.x).chain(overlay_x));
    let (y_lo, y_hi) = exp_range(usable.iter().map(|p| p.y).chain(overlay_y));
    let frame = Frame { x_lo, x_hi, y_lo, y_hi };

    let color_min = usable.iter().map(|p| p.color).fold(f64::INFINITY, f64::min);
    let color_max = usable.iter().map(|p| p.color).fold(0.0, f64::max);
    let size_min = usable.iter().map(|p| p.size).fold(f64::INFINITY, f64::min);
    let size_max = usable.iter().map(|p| p.size).fold(0.0, f64::max);

    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    s.push_str("<defs>\n<linearGradient id=\"cmap\" x1=\"0\" y1=\"1\" x2=\"0\" y2=\"0\">\n");
    for stop in 0..=4 {
        let t = stop as f64 / 4.0;
        s.push_str(&format!(
            "<stop offset=\"{}\" stop-color=\"{}\"/>\n",
            fmt2(t),
            color_at(t)
        ));
    }
    s.push_str("</linearGradient>\n</defs>\n");
    s.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"#ffffff\"/>\n"
    ));
    s.push_str("<g font-family=\"Helvetica, Arial, sans-serif\" font-size=\"12\" fill=\"#222222\">\n");

    text(&mut s, LEFT + PLOT_W / 2.0, 26.0, "middle", 15, &c.title);

    // Decade gridlines and tick labels.
    for k in x_lo..=x_hi {
        let x = frame.px(10f64.powi(k));
        s.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n",
            fmt2(x),
            fmt2(TOP),
            fmt2(TOP + PLOT_H)
        ));
        text(&mut s, x, TOP + PLOT_H + 18.0, "middle", 12, &format!("1e{k}"));
    }
    for k in y_lo..=y_hi {
        let y = frame.py(10f64.powi(k));
        s.push_str(&format!(
            "<line x1=\"{1}\" y1=\"{0}\" x2=\"{2}\" y2=\"{0}\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n",
            fmt2(y),
            fmt2(LEFT),
            fmt2(LEFT + PLOT_W)
        ));
        text(&mut s, LEFT - 8.0, y + 4.0, "end", 12, &format!("1e{k}"));
    }
    s.push_str(&format!(
        "<rect x=\"{}\" y=\"{}\" width=\"{PLOT_W}\" height=\"{PLOT_H}\" fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>\n",
        fmt2(LEFT),
        fmt2(TOP)
    ));
    text(&mut s, LEFT + PLOT_W / 2.0, HEIGHT - 14.0, "middle", 13, &c.x_label);
    s.push_str(&format!(
        "<text x=\"20\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 20 {0})\">{1}</text>\n",
        fmt2(TOP + PLOT_H / 2.0),
        esc(&c.y_label)
    ));

    // Scatter.
    for p in &usable {
        let ct = span_frac(p.color, color_min, color_max);
        let st = span_frac(p.size, size_min, size_max);
        s.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{}\" fill-opacity=\"0.75\"/>\n",
            fmt2(frame.px(p.x)),
            fmt2(frame.py(p.y)),
            fmt2(radius_at(st)),
            color_at(ct)
        ));
    }

    if let Some(env) = &c.envelope {
        polyline(&mut s, &frame, env, "#444444", 1.5);
    }
    if let Some(curve) = &c.curve {
        polyline(&mut s, &frame, curve, "#1f77b4", 2.0);
    }

    // Legend column: color bar, size samples, overlay keys.
    let mut ly = 60.0;
    if !usable.is_empty() {
        text(&mut s, LEGEND_X, ly, "start", 12, &c.color_label);
        s.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"14\" height=\"120\" fill=\"url(#cmap)\" stroke=\"#333333\" stroke-width=\"0.5\"/>\n",
            fmt2(LEGEND_X),
            fmt2(ly + 10.0)
        ));
        text(&mut s, LEGEND_X + 22.0, ly + 22.0, "start", 11, &format!("{color_max:.1e}"));
        text(&mut s, LEGEND_X + 22.0, ly + 128.0, "start", 11, &format!("{color_min:.1e}"));
        ly += 160.0;

        text(&mut s, LEGEND_X, ly, "start", 12, &c.size_label);
        for (t, v) in [(0.0, size_min), (1.0, size_max)] {
            ly += 22.0;
            s.push_str(&format!(
                "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"#888888\"/>\n",
                fmt2(LEGEND_X + 7.0),
                fmt2(ly - 4.0),
                fmt2(radius_at(t))
            ));
            text(&mut s, LEGEND_X + 22.0, ly, "start", 11, &format!("{v:.1e}"));
        }
        ly += 36.0;
    }
    if c.envelope.is_some() {
        s.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"#444444\" stroke-width=\"1.50\"/>\n",
            fmt2(LEGEND_X),
            fmt2(ly - 4.0),
            fmt2(LEGEND_X + 16.0)
        ));
        text(&mut s, LEGEND_X + 22.0, ly, "start", 11, "lower envelope");
        ly += 22.0;
    }
    if c.curve.is_some() {
        s.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"#1f77b4\" stroke-width=\"2.00\"/>\n",
            fmt2(LEGEND_X),
            fmt2(ly - 4.0),
            fmt2(LEGEND_X + 16.0)
        ));
        text(&mut s, LEGEND_X + 22.0, ly, "start", 11, "fitted law");
    }

    s.push_str("</g>\n</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_chart() -> Chart {
        let points = (0..40)
            .map(|i| {
                let x = 10f64.powf(2.0 + 4.0 * i as f64 / 39.0);
                Point { x, y: 3.0 * x.powf(-0.3), color: x * 2.0, size: 50.0 + i as f64 }
            })
            .collect();
        Chart {
            title: "nmae vs compute (system ball)".into(),
            x_label: "compute c".into(),
            y_label: "nmae".into(),
            color_label: "data d [s]".into(),
            size_label: "parameters p".into(),
            points,
            envelope: Some(vec![(100.0, 0.8), (1000.0, 0.8), (1000.0, 0.3), (1e6, 0.3)]),
            curve: Some(vec![(100.0, 0.9), (1000.0, 0.5), (1e6, 0.2)]),
        }
    }

    fn assert_well_formed(doc: &str) {
        let mut stack: Vec<String> = Vec::new();
        let mut rest = doc;
        while let Some(i) = rest.find('<') {
            rest = &rest[i + 1..];
            let j = rest.find('>').expect("unterminated tag");
            let tag = &rest[..j];
            rest = &rest[j + 1..];
            if tag.starts_with('?') || tag.starts_with('!') {
                continue;
            }
            if let Some(name) = tag.strip_prefix('/') {
                assert_eq!(stack.pop().as_deref(), Some(name.trim()), "mismatched close tag");
            } else if !tag.ends_with('/') {
                stack.push(tag.split_whitespace().next().unwrap().to_string());
            }
        }
        assert!(stack.is_empty(), "unclosed tags: {stack:?}");
    }

    #[test]
    fn render_is_deterministic_and_well_formed() {
        let chart = sample_chart();
        let a = render(&chart);
        let b = render(&chart);
        assert_eq!(a, b);
        assert!(a.starts_with("<?xml"));
        assert!(a.ends_with("</svg>\n"));
        assert_well_formed(&a);
        assert_eq!(a.matches("<circle").count(), 40 + 2, "points plus size legend");
        assert_eq!(a.matches("<polyline").count(), 2);
    }

    #[test]
    fn pure_scatter_has_no_overlays() {
        let mut chart = sample_chart();
        chart.envelope = None;
        chart.curve = None;
        let doc = render(&chart);
        assert_well_formed(&doc);
        assert_eq!(doc.matches("<polyline").count(), 0);
        assert!(!doc.contains("lower envelope"));
        assert!(!doc.contains("fitted law"));
    }

    #[test]
    fn color_scale_runs_blue_to_red() {
        assert_eq!(color_at(0.0), "rgb(31,119,180)");
        assert_eq!(color_at(1.0), "rgb(214,39,40)");
        assert_eq!(color_at(0.5), "rgb(123,79,110)");
    }

    #[test]
    fn radius_scale_is_bounded() {
        assert_eq!(radius_at(0.0), 2.5);
        assert_eq!(radius_at(1.0), 6.0);
    }

    #[test]
    fn decade_ranges_widen_degenerate_input() {
        assert_eq!(exp_range([5.0].into_iter()), (0, 1));
        assert_eq!(exp_range([10.0].into_iter()), (1, 2));
        assert_eq!(exp_range([0.2, 3000.0].into_iter()), (-1, 4));
        assert_eq!(exp_range(std::iter::empty()), (0, 1));
        assert_eq!(exp_range([f64::NAN, -3.0].into_iter()), (0, 1));
    }

    #[test]
    fn single_valued_chart_still_renders() {
        let chart = Chart {
            title: "one point".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            color_label: "c".into(),
            size_label: "s".into(),
            points: vec![Point { x: 50.0, y: 0.5, color: 1.0, size: 1.0 }],
            envelope: None,
            curve: None,
        };
        let doc = render(&chart);
        assert_well_formed(&doc);
        assert_eq!(doc.matches("<circle").count(), 1 + 2);
    }

    #[test]
    fn labels_are_escaped() {
        let mut chart = sample_chart();
        chart.title = "a < b & c".into();
        let doc = render(&chart);
        assert!(doc.contains("a &lt; b &amp; c"));
        assert_well_formed(&doc);
    }
}
