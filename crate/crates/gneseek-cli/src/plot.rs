//! Self-contained SVG renderers for the run artifacts. CSVs are the ground
//! truth; these plots exist so a run can be eyeballed without extra tooling.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 500.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 50.0;
const MARGIN_BOTTOM: f64 = 60.0;

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn new(mut x_min: f64, mut x_max: f64, mut y_min: f64, mut y_max: f64) -> Self {
        // degenerate spans still need a drawable window
        if x_max <= x_min {
            x_min -= 0.5;
            x_max = x_min + 1.0;
        }
        if y_max <= y_min {
            y_min -= 0.5;
            y_max = y_min + 1.0;
        }
        Frame {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    fn sx(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn sy(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_BOTTOM
            - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 1e4 || v.abs() < 1e-3 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn open_svg(title: &str) -> String {
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"monospace\">"
    );
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n");
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"28\" font-size=\"16\" fill=\"#222222\">{title}</text>",
        MARGIN_LEFT
    );
    svg
}

fn draw_axes(svg: &mut String, frame: &Frame, x_label: &str, y_label: &str) {
    let x0 = MARGIN_LEFT;
    let x1 = WIDTH - MARGIN_RIGHT;
    let y0 = HEIGHT - MARGIN_BOTTOM;
    let y1 = MARGIN_TOP;
    let _ = write!(
        svg,
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"#333333\"/>\n\
         <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"#333333\"/>\n"
    );
    for s in 0..=5 {
        let fx = frame.x_min + (frame.x_max - frame.x_min) * s as f64 / 5.0;
        let px = frame.sx(fx);
        let _ = write!(
            svg,
            "<line x1=\"{px}\" y1=\"{y0}\" x2=\"{px}\" y2=\"{}\" stroke=\"#333333\"/>\n\
             <text x=\"{px}\" y=\"{}\" font-size=\"12\" fill=\"#333333\" text-anchor=\"middle\">{}</text>\n",
            y0 + 6.0,
            y0 + 22.0,
            tick_label(fx)
        );
        let fy = frame.y_min + (frame.y_max - frame.y_min) * s as f64 / 5.0;
        let py = frame.sy(fy);
        let _ = write!(
            svg,
            "<line x1=\"{}\" y1=\"{py}\" x2=\"{x0}\" y2=\"{py}\" stroke=\"#333333\"/>\n\
             <text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"#333333\" text-anchor=\"end\">{}</text>\n",
            x0 - 6.0,
            x0 - 10.0,
            py + 4.0,
            tick_label(fy)
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-size=\"13\" fill=\"#222222\" text-anchor=\"middle\">{x_label}</text>",
        (x0 + x1) / 2.0,
        HEIGHT - 14.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"20\" y=\"{}\" font-size=\"13\" fill=\"#222222\" text-anchor=\"middle\" \
         transform=\"rotate(-90 20 {})\">{y_label}</text>",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
}

/// Writes a single-series line plot of `ys` over `xs`.
pub fn line_plot(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    xs: &[f64],
    ys: &[f64],
) -> io::Result<()> {
    let finite: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|(&x, &y)| (x, y))
        .collect();
    let x_min = finite.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let x_max = finite.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let y_min = finite.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let y_max = finite.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let frame = if finite.is_empty() {
        Frame::new(0.0, 1.0, 0.0, 1.0)
    } else {
        Frame::new(x_min, x_max, y_min.min(0.0), y_max)
    };

    let mut svg = open_svg(title);
    draw_axes(&mut svg, &frame, x_label, y_label);
    if finite.len() == 1 {
        let (x, y) = finite[0];
        let _ = writeln!(
            svg,
            "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"#2a6fb0\"/>",
            frame.sx(x),
            frame.sy(y)
        );
    } else if !finite.is_empty() {
        svg.push_str("<polyline fill=\"none\" stroke=\"#2a6fb0\" stroke-width=\"1.5\" points=\"");
        for (x, y) in &finite {
            let _ = write!(svg, "{:.2},{:.2} ", frame.sx(*x), frame.sy(*y));
        }
        svg.push_str("\"/>\n");
    }
    svg.push_str("</svg>\n");
    fs::write(path, svg)
}

/// Writes a raster of event times: one horizontal lane per player, one tick
/// per broadcast.
pub fn event_raster(
    path: &Path,
    title: &str,
    n_players: usize,
    horizon: f64,
    events: &[(usize, f64)],
) -> io::Result<()> {
    let frame = Frame::new(0.0, horizon.max(0.0), 0.5, n_players as f64 + 0.5);
    let mut svg = open_svg(title);

    let x0 = MARGIN_LEFT;
    let x1 = WIDTH - MARGIN_RIGHT;
    let y0 = HEIGHT - MARGIN_BOTTOM;
    let _ = writeln!(
        svg,
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"#333333\"/>"
    );
    for s in 0..=5 {
        let fx = frame.x_min + (frame.x_max - frame.x_min) * s as f64 / 5.0;
        let px = frame.sx(fx);
        let _ = write!(
            svg,
            "<line x1=\"{px}\" y1=\"{y0}\" x2=\"{px}\" y2=\"{}\" stroke=\"#333333\"/>\n\
             <text x=\"{px}\" y=\"{}\" font-size=\"12\" fill=\"#333333\" text-anchor=\"middle\">{}</text>\n",
            y0 + 6.0,
            y0 + 22.0,
            tick_label(fx)
        );
    }
    for i in 0..n_players {
        let lane = frame.sy((i + 1) as f64);
        let _ = write!(
            svg,
            "<line x1=\"{x0}\" y1=\"{lane}\" x2=\"{x1}\" y2=\"{lane}\" stroke=\"#dddddd\"/>\n\
             <text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"#333333\" text-anchor=\"end\">p{}</text>\n",
            x0 - 8.0,
            lane + 4.0,
            i + 1
        );
    }
    for &(i, t) in events {
        let px = frame.sx(t);
        let lane = frame.sy((i + 1) as f64);
        let _ = writeln!(
            svg,
            "<line x1=\"{px}\" y1=\"{}\" x2=\"{px}\" y2=\"{}\" stroke=\"#b02a2a\"/>",
            lane - 7.0,
            lane + 7.0
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-size=\"13\" fill=\"#222222\" text-anchor=\"middle\">t</text>",
        (x0 + x1) / 2.0,
        HEIGHT - 14.0
    );
    svg.push_str("</svg>\n");
    fs::write(path, svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_plot_handles_degenerate_series() {
        let dir = tempfile::tempdir().unwrap();
        let single = dir.path().join("single.svg");
        line_plot(&single, "one point", "t", "y", &[0.0], &[0.0]).unwrap();
        let text = fs::read_to_string(&single).unwrap();
        assert!(text.starts_with("<svg"));
        assert!(text.contains("circle"));

        let empty = dir.path().join("empty.svg");
        line_plot(&empty, "empty", "t", "y", &[], &[]).unwrap();
        assert!(fs::read_to_string(&empty).unwrap().contains("</svg>"));
    }

    #[test]
    fn line_plot_emits_polyline() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("line.svg");
        let xs: Vec<f64> = (0..100).map(|i| i as f64 * 0.01).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
        line_plot(&path, "quadratic", "t", "y", &xs, &ys).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("polyline"));
        assert!(text.ends_with("</svg>\n"));
    }

    #[test]
    fn event_raster_marks_each_event() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("raster.svg");
        let events = vec![(0, 0.1), (1, 0.2), (0, 0.4)];
        event_raster(&path, "events", 2, 1.0, &events).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.matches("#b02a2a").count(), 3);
        assert!(text.contains("p1"));
        assert!(text.contains("p2"));
    }
}
