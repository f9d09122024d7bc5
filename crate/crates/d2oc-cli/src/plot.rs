//! Minimal SVG renderings of a finished run: the error-norm ratio and
//! Wasserstein time series, and trajectory snapshots. Plots are derived
//! artifacts only; they are generated after the CSVs and never feed back
//! into the metrics.

use d2oc::analysis::BoundReport;
use d2oc::metrics::{ControllerKind, MetricsLog, Snapshot};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 52.0;

const AGENT_COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
    body: String,
}

impl Frame {
    fn new(x_range: (f64, f64), y_range: (f64, f64)) -> Self {
        Self {
            x_min: x_range.0,
            x_max: x_range.1,
            y_min: y_range.0,
            y_max: y_range.1,
            body: String::new(),
        }
    }

    fn x(&self, v: f64) -> f64 {
        MARGIN + (v - self.x_min) / (self.x_max - self.x_min) * (WIDTH - 2.0 * MARGIN)
    }

    fn y(&self, v: f64) -> f64 {
        HEIGHT - MARGIN - (v - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - 2.0 * MARGIN)
    }

    fn polyline(&mut self, points: &[(f64, f64)], color: &str, dashed: bool) {
        if points.is_empty() {
            return;
        }
        let coords: Vec<String> = points
            .iter()
            .map(|&(px, py)| format!("{:.2},{:.2}", self.x(px), self.y(py)))
            .collect();
        let dash = if dashed { " stroke-dasharray=\"6 4\"" } else { "" };
        self.body.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.2\"{dash} points=\"{}\"/>\n",
            coords.join(" ")
        ));
    }

    fn hline(&mut self, y: f64, color: &str) {
        self.polyline(&[(self.x_min, y), (self.x_max, y)], color, true);
    }

    fn dot(&mut self, x: f64, y: f64, radius: f64, color: &str) {
        self.body.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{radius}\" fill=\"{color}\"/>\n",
            self.x(x),
            self.y(y)
        ));
    }

    fn text(&mut self, px: f64, py: f64, size: f64, content: &str) {
        self.body.push_str(&format!(
            "<text x=\"{px:.1}\" y=\"{py:.1}\" font-family=\"sans-serif\" font-size=\"{size}\" fill=\"#333\">{content}</text>\n"
        ));
    }

    fn render(mut self, title: &str, x_label: &str, y_label: &str) -> String {
        let axes = format!(
            "<rect x=\"{m}\" y=\"{m}\" width=\"{w}\" height=\"{h}\" fill=\"none\" stroke=\"#444\" stroke-width=\"1\"/>\n",
            m = MARGIN,
            w = WIDTH - 2.0 * MARGIN,
            h = HEIGHT - 2.0 * MARGIN
        );
        self.text(MARGIN, MARGIN - 12.0, 14.0, title);
        self.text(WIDTH / 2.0 - 30.0, HEIGHT - 12.0, 12.0, x_label);
        self.text(8.0, MARGIN - 12.0, 12.0, y_label);
        for frac in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let xv = self.x_min + frac * (self.x_max - self.x_min);
            let yv = self.y_min + frac * (self.y_max - self.y_min);
            let tx = self.x(xv);
            let ty = self.y(yv);
            self.text(tx - 10.0, HEIGHT - MARGIN + 16.0, 10.0, &format!("{xv:.0}"));
            self.text(6.0, ty + 3.0, 10.0, &format!("{yv:.2}"));
        }
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{axes}{}</svg>\n",
            self.body
        )
    }
}

/// Error-norm ratio of each feedforward agent over time, with the 0.5
/// reference level.
pub fn ratio_plot(log: &MetricsLog, n_agents: usize) -> String {
    let points: Vec<Vec<(f64, f64)>> = (0..n_agents)
        .map(|agent| {
            log.series(agent, ControllerKind::Feedforward)
                .iter()
                .filter_map(|r| r.ratio.map(|ratio| (r.step as f64, ratio)))
                .collect()
        })
        .collect();
    let max_step = log.records.last().map_or(1.0, |r| r.step as f64);
    let y_max = points
        .iter()
        .flatten()
        .map(|&(_, r)| r)
        .fold(0.6f64, f64::max);
    let mut frame = Frame::new((0.0, max_step.max(1.0)), (0.0, y_max * 1.05));
    frame.hline(0.5, "#777777");
    for (agent, series) in points.iter().enumerate() {
        let color = AGENT_COLORS[agent % AGENT_COLORS.len()];
        for &(s, r) in series {
            frame.dot(s, r, 2.0, color);
        }
    }
    frame.render("Horizon error-norm ratio vs time", "step", "ratio")
}

/// Local Wasserstein distance per agent: nominal dashed, feedforward solid,
/// with each feedforward agent's ultimate bound dotted.
pub fn wasserstein_plot(log: &MetricsLog, reports: &[BoundReport], n_agents: usize) -> String {
    let max_step = log.records.last().map_or(1.0, |r| r.step as f64);
    let y_max = log
        .records
        .iter()
        .map(|r| r.wasserstein)
        .fold(1.0f64, f64::max);
    let mut frame = Frame::new((0.0, max_step.max(1.0)), (0.0, y_max * 1.05));
    for agent in 0..n_agents {
        let color = AGENT_COLORS[agent % AGENT_COLORS.len()];
        for (kind, dashed) in [
            (ControllerKind::Nominal, true),
            (ControllerKind::Feedforward, false),
        ] {
            let series: Vec<(f64, f64)> = log
                .series(agent, kind)
                .iter()
                .map(|r| (r.step as f64, r.wasserstein))
                .collect();
            frame.polyline(&series, color, dashed);
        }
        if let Some(bound) = reports
            .iter()
            .find(|r| r.agent == agent && r.controller == ControllerKind::Feedforward.label())
            .and_then(|r| r.bound)
        {
            frame.hline(bound, color);
        }
    }
    frame.render(
        "Local Wasserstein distance vs time (nominal dashed, ff solid, bound dotted)",
        "step",
        "W (m)",
    )
}

/// Up to five snapshot panels: samples in gray, nominal agents as open
/// squares, feedforward agents as filled circles.
pub fn trajectory_plot(snapshots: &[Snapshot], domain: [f64; 4]) -> String {
    let shown: Vec<&Snapshot> = if snapshots.len() <= 5 {
        snapshots.iter().collect()
    } else {
        let last = snapshots.len() - 1;
        (0..5).map(|i| &snapshots[i * last / 4]).collect()
    };
    let panel = 240.0;
    let pad = 14.0;
    let width = pad + shown.len() as f64 * (panel + pad);
    let height = panel + 2.0 * pad + 18.0;
    let [x0, y0, x1, y1] = domain;
    let sx = |v: f64, off: f64| off + (v - x0) / (x1 - x0) * panel;
    let sy = |v: f64| pad + 18.0 + (1.0 - (v - y0) / (y1 - y0)) * panel;

    let mut body = String::new();
    for (i, snap) in shown.iter().enumerate() {
        let off = pad + i as f64 * (panel + pad);
        body.push_str(&format!(
            "<rect x=\"{off}\" y=\"{}\" width=\"{panel}\" height=\"{panel}\" fill=\"none\" stroke=\"#444\"/>\n",
            pad + 18.0
        ));
        body.push_str(&format!(
            "<text x=\"{off}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#333\">k = {}</text>\n",
            pad + 12.0,
            snap.step
        ));
        for q in &snap.samples {
            body.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"1.1\" fill=\"#b0b0b0\"/>\n",
                sx(q.x, off),
                sy(q.y)
            ));
        }
        for a in &snap.agents {
            let (cx, cy) = (sx(a.position.x, off), sy(a.position.y));
            match a.controller {
                ControllerKind::Nominal => body.push_str(&format!(
                    "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"7\" height=\"7\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.6\"/>\n",
                    cx - 3.5,
                    cy - 3.5
                )),
                ControllerKind::Feedforward => body.push_str(&format!(
                    "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"3.6\" fill=\"#d62728\"/>\n"
                )),
            }
        }
    }
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{body}</svg>\n"
    )
}
