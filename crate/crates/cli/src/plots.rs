//! Minimal SVG plotting: line charts and box plots with axes, ticks, and a
//! legend. No rendering dependency; output is plain markup whose numbers
//! come straight from the data, so plots are as deterministic as the CSVs.

/// One polyline on a line chart.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Five-number summary drawn as one box.
#[derive(Debug, Clone)]
pub struct BoxStats {
    pub label: String,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 55.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn from_ranges(xs: impl Iterator<Item = f64>, ys: impl Iterator<Item = f64>) -> Frame {
        let mut x_min = f64::INFINITY;
        let mut x_max = f64::NEG_INFINITY;
        for x in xs {
            if x.is_finite() {
                x_min = x_min.min(x);
                x_max = x_max.max(x);
            }
        }
        let mut y_min = f64::INFINITY;
        let mut y_max = f64::NEG_INFINITY;
        for y in ys {
            if y.is_finite() {
                y_min = y_min.min(y);
                y_max = y_max.max(y);
            }
        }
        if !x_min.is_finite() || x_min == x_max {
            x_min -= 0.5;
            x_max += 0.5;
        }
        if !y_min.is_finite() {
            y_min = 0.0;
            y_max = 1.0;
        }
        if y_min == y_max {
            y_min -= 0.5;
            y_max += 0.5;
        }
        // A little headroom so lines never sit on the frame.
        let pad = (y_max - y_min) * 0.05;
        Frame {
            x_min,
            x_max,
            y_min: y_min - pad,
            y_max: y_max + pad,
        }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_BOTTOM
            - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if a >= 1e4 || a < 1e-3 {
        format!("{v:.1e}")
    } else if a >= 100.0 {
        format!("{v:.0}")
    } else if a >= 1.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.3}")
    }
}

fn open_svg(out: &mut String, title: &str) {
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    out.push_str(&format!(
        "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        WIDTH / 2.0,
        escape(title)
    ));
}

fn axes(out: &mut String, frame: &Frame, x_label: &str, y_label: &str) {
    let x0 = MARGIN_LEFT;
    let x1 = WIDTH - MARGIN_RIGHT;
    let y0 = HEIGHT - MARGIN_BOTTOM;
    let y1 = MARGIN_TOP;
    out.push_str(&format!(
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>\n"
    ));
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let xv = frame.x_min + t * (frame.x_max - frame.x_min);
        let yv = frame.y_min + t * (frame.y_max - frame.y_min);
        let xp = frame.px(xv);
        let yp = frame.py(yv);
        out.push_str(&format!(
            "<line x1=\"{xp}\" y1=\"{y0}\" x2=\"{xp}\" y2=\"{}\" stroke=\"black\"/>\n",
            y0 + 5.0
        ));
        out.push_str(&format!(
            "<text x=\"{xp}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            y0 + 20.0,
            tick_label(xv)
        ));
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{yp}\" x2=\"{x0}\" y2=\"{yp}\" stroke=\"black\"/>\n",
            x0 - 5.0
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            x0 - 9.0,
            yp + 4.0,
            tick_label(yv)
        ));
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
        (x0 + x1) / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    ));
    out.push_str(&format!(
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    ));
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Render one or more series as a line chart.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let frame = Frame::from_ranges(
        series.iter().flat_map(|s| s.points.iter().map(|p| p.0)),
        series.iter().flat_map(|s| s.points.iter().map(|p| p.1)),
    );
    let mut out = String::new();
    open_svg(&mut out, title);
    axes(&mut out, &frame, x_label, y_label);

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y)))
            .collect();
        if pts.len() > 1 {
            out.push_str(&format!(
                "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
                pts.join(" ")
            ));
        }
        for p in &pts {
            let (x, y) = p.split_once(',').expect("point is x,y");
            out.push_str(&format!("<circle cx=\"{x}\" cy=\"{y}\" r=\"2.5\" fill=\"{color}\"/>\n"));
        }
        let ly = MARGIN_TOP + 16.0 * i as f64;
        let lx = WIDTH - MARGIN_RIGHT + 12.0;
        out.push_str(&format!(
            "<line x1=\"{lx}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            lx + 18.0
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\">{}</text>\n",
            lx + 24.0,
            ly + 4.0,
            escape(&s.label)
        ));
    }
    out.push_str("</svg>\n");
    out
}

/// Render five-number summaries as a box plot, one box per entry.
pub fn box_chart(title: &str, y_label: &str, boxes: &[BoxStats]) -> String {
    let frame = Frame::from_ranges(
        (0..boxes.len()).map(|i| i as f64),
        boxes.iter().flat_map(|b| [b.min, b.max].into_iter()),
    );
    let mut out = String::new();
    open_svg(&mut out, title);

    // Category axis: one slot per box, drawn by hand rather than from the
    // numeric frame.
    let x0 = MARGIN_LEFT;
    let x1 = WIDTH - MARGIN_RIGHT;
    let y0 = HEIGHT - MARGIN_BOTTOM;
    let y1 = MARGIN_TOP;
    out.push_str(&format!(
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>\n"
    ));
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let yv = frame.y_min + t * (frame.y_max - frame.y_min);
        let yp = frame.py(yv);
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            x0 - 9.0,
            yp + 4.0,
            tick_label(yv)
        ));
    }
    out.push_str(&format!(
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    ));

    let slot = (x1 - x0) / boxes.len().max(1) as f64;
    let half_box = (slot * 0.3).min(40.0);
    for (i, b) in boxes.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let cx = x0 + slot * (i as f64 + 0.5);
        let (top, bottom) = (frame.py(b.q3), frame.py(b.q1));
        out.push_str(&format!(
            "<line x1=\"{cx}\" y1=\"{}\" x2=\"{cx}\" y2=\"{}\" stroke=\"{color}\"/>\n",
            frame.py(b.max),
            top
        ));
        out.push_str(&format!(
            "<line x1=\"{cx}\" y1=\"{}\" x2=\"{cx}\" y2=\"{}\" stroke=\"{color}\"/>\n",
            bottom,
            frame.py(b.min)
        ));
        out.push_str(&format!(
            "<rect x=\"{}\" y=\"{top}\" width=\"{}\" height=\"{}\" fill=\"{color}\" \
             fill-opacity=\"0.25\" stroke=\"{color}\"/>\n",
            cx - half_box,
            2.0 * half_box,
            bottom - top
        ));
        let my = frame.py(b.median);
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{my}\" x2=\"{}\" y2=\"{my}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            cx - half_box,
            cx + half_box
        ));
        out.push_str(&format!(
            "<text x=\"{cx}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            y0 + 20.0,
            escape(&b.label)
        ));
    }
    out.push_str("</svg>\n");
    out
}
