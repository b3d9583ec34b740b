//! Trajectory persistence and SVG rendering.
//!
//! CSVs carry floats with 17 significant digits so parsing them back is
//! lossless. The SVG output is plain generated markup with data-driven axis
//! ranges (5% padding); rendering identical trajectories yields byte
//! identical files.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::{AggregateTrajectory, IterationRecord, RunTrajectory};
use crate::sf::WeightMatrix;

/// Canvas size for one figure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlotStyle {
    pub width: u32,
    pub height: u32,
}

impl Default for PlotStyle {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
        }
    }
}

/// Marker for the first plotted iteration.
pub const START_MARKER_COLOR: &str = "green";
/// Marker for the last plotted iteration.
pub const END_MARKER_COLOR: &str = "red";
/// Trace color for intermediate information-plane dots.
const TRACE_COLOR: &str = "#4e79a7";

/// Color cycle for per-run traces. Ten distinct colors, one per repetition
/// of a default batch.
pub const RUN_COLORS: [&str; 10] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc949", "#b07aa1", "#ff9da7",
    "#9c755f", "#bab0ac",
];

fn fmt_full(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_px(v: f64) -> String {
    format!("{v:.2}")
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes one CSV per run plus the aggregate CSV into `out_dir`, returning
/// the written paths. Run files are named `run_<sim>_<rep>.csv`, the
/// aggregate `aggregate_<sim>.csv`.
pub fn export_csv(
    runs: &[RunTrajectory],
    aggregate: &AggregateTrajectory,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    if runs.is_empty() {
        return Err(Error::Config("no runs to export".into()));
    }
    fs::create_dir_all(out_dir).map_err(|source| Error::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let sim_id = runs[0].sim_id;
    let mut written = Vec::with_capacity(runs.len() + 1);

    for run in runs {
        let path = out_dir.join(format!("run_{}_{}.csv", run.sim_id, run.repetition));
        export_trajectory_csv(&run.records, &path)?;
        written.push(path);
    }

    let mut csv = String::from("iteration,mean_mi_xt_bits,mean_entropy_t_bits,mean_objective\n");
    for i in 0..aggregate.len() {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            i,
            fmt_full(aggregate.mean_mi[i]),
            fmt_full(aggregate.mean_entropy[i]),
            fmt_full(aggregate.mean_objective[i]),
        ));
    }
    let path = out_dir.join(format!("aggregate_{sim_id}.csv"));
    write_file(&path, &csv)?;
    written.push(path);
    Ok(written)
}

/// Writes one trajectory as CSV with the per-run header and one row per
/// record.
pub fn export_trajectory_csv(records: &[IterationRecord], path: &Path) -> Result<()> {
    let mut csv = String::from("iteration,objective,mi_xt_bits,entropy_t_bits,weight_delta\n");
    for record in records {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            record.iteration,
            fmt_full(record.objective),
            fmt_full(record.mi_xt),
            fmt_full(record.entropy_t),
            fmt_full(record.weight_delta),
        ));
    }
    write_file(path, &csv)
}

/// Writes a weight matrix as CSV, one feature per row, 17 significant digits.
pub fn export_weights_csv(weights: &WeightMatrix, path: &Path) -> Result<()> {
    let mut csv = String::new();
    for row in weights.values().rows() {
        let fields: Vec<String> = row.iter().map(|&v| fmt_full(v)).collect();
        csv.push_str(&fields.join(","));
        csv.push('\n');
    }
    write_file(path, &csv)
}

/// An axis-aligned plotting region with data-space ranges.
struct Frame {
    px: f64,
    py: f64,
    pw: f64,
    ph: f64,
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let fx = self.px + (x - self.x_min) / (self.x_max - self.x_min) * self.pw;
        let fy = self.py + self.ph - (y - self.y_min) / (self.y_max - self.y_min) * self.ph;
        (fx, fy)
    }

    fn polyline(&self, points: impl Iterator<Item = (f64, f64)>, color: &str) -> String {
        let coords: Vec<String> = points
            .map(|(x, y)| {
                let (fx, fy) = self.map(x, y);
                format!("{},{}", fmt_px(fx), fmt_px(fy))
            })
            .collect();
        format!(
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            color,
            coords.join(" ")
        )
    }

    fn axes(&self, x_label: &str, y_label: &str) -> String {
        let mut s = String::new();
        let bottom = self.py + self.ph;
        let right = self.px + self.pw;
        s.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
            fmt_px(self.px),
            fmt_px(bottom),
            fmt_px(right),
            fmt_px(bottom)
        ));
        s.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
            fmt_px(self.px),
            fmt_px(self.py),
            fmt_px(self.px),
            fmt_px(bottom)
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\">{}</text>\n",
            fmt_px(self.px + self.pw / 2.0),
            fmt_px(bottom + 32.0),
            x_label
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 {} {})\">{}</text>\n",
            fmt_px(self.px - 40.0),
            fmt_px(self.py + self.ph / 2.0),
            fmt_px(self.px - 40.0),
            fmt_px(self.py + self.ph / 2.0),
            y_label
        ));
        // Range annotations at the axis ends.
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"start\" font-size=\"10\">{:.3}</text>\n",
            fmt_px(self.px),
            fmt_px(bottom + 14.0),
            self.x_min
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"10\">{:.3}</text>\n",
            fmt_px(right),
            fmt_px(bottom + 14.0),
            self.x_max
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"10\">{:.3}</text>\n",
            fmt_px(self.px - 4.0),
            fmt_px(bottom),
            self.y_min
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"10\">{:.3}</text>\n",
            fmt_px(self.px - 4.0),
            fmt_px(self.py + 10.0),
            self.y_max
        ));
        s
    }
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    let span = hi - lo;
    let pad = if span > 0.0 { 0.05 * span } else { 0.5 };
    (lo - pad, hi + pad)
}

fn svg_header(style: &PlotStyle) -> String {
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
        w = style.width,
        h = style.height
    )
}

fn circle(x: f64, y: f64, r: f64, color: &str) -> String {
    format!(
        "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{}\"/>\n",
        fmt_px(x),
        fmt_px(y),
        r,
        color
    )
}

/// Renders the averaged information-plane trajectory: one dot per iteration
/// at `(mean I[X;T], mean H[T])`, green start marker, red end marker.
pub fn information_plane_svg(aggregate: &AggregateTrajectory, style: &PlotStyle) -> Result<String> {
    if aggregate.is_empty() {
        return Err(Error::Config("cannot render an empty aggregate".into()));
    }
    let (x_min, x_max) = padded_range(aggregate.mean_mi.iter().copied());
    let (y_min, y_max) = padded_range(aggregate.mean_entropy.iter().copied());
    let frame = Frame {
        px: 70.0,
        py: 20.0,
        pw: style.width as f64 - 90.0,
        ph: style.height as f64 - 80.0,
        x_min,
        x_max,
        y_min,
        y_max,
    };

    let mut svg = svg_header(style);
    svg.push_str(&frame.axes("I[X;T] (bits)", "H[T] (bits)"));
    let points = || {
        aggregate
            .mean_mi
            .iter()
            .zip(aggregate.mean_entropy.iter())
            .map(|(&mi, &h)| (mi, h))
    };
    if aggregate.len() > 1 {
        svg.push_str(&frame.polyline(points(), TRACE_COLOR));
    }
    let n = aggregate.len();
    for (i, (mi, h)) in points().enumerate() {
        if i == 0 || i == n - 1 {
            continue;
        }
        let (fx, fy) = frame.map(mi, h);
        svg.push_str(&circle(fx, fy, 2.5, TRACE_COLOR));
    }
    let (sx, sy) = frame.map(aggregate.mean_mi[0], aggregate.mean_entropy[0]);
    svg.push_str(&circle(sx, sy, 4.0, START_MARKER_COLOR));
    let (ex, ey) = frame.map(aggregate.mean_mi[n - 1], aggregate.mean_entropy[n - 1]);
    svg.push_str(&circle(ex, ey, 4.0, END_MARKER_COLOR));
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn render_information_plane(
    aggregate: &AggregateTrajectory,
    style: &PlotStyle,
    path: &Path,
) -> Result<()> {
    write_file(path, &information_plane_svg(aggregate, style)?)
}

/// Renders the four per-run dynamics panels: (a) mutual information,
/// (b) entropy and (c) weight change against the iteration index, and
/// (d) the per-run information-plane traces. One polyline per run per panel,
/// colored by the run color cycle.
pub fn dynamics_panels_svg(runs: &[RunTrajectory], style: &PlotStyle) -> Result<String> {
    if runs.is_empty() {
        return Err(Error::Config("cannot render zero runs".into()));
    }
    let w = style.width as f64;
    let h = style.height as f64;
    let mut svg = svg_header(style);

    let iteration_max = runs
        .iter()
        .map(|r| r.records.len().saturating_sub(1))
        .max()
        .unwrap_or(0) as f64;
    let (it_min, it_max) = padded_range([0.0, iteration_max].into_iter());

    struct Panel<'a> {
        id: &'a str,
        title: &'a str,
        x_label: &'a str,
        y_label: &'a str,
    }
    let panels = [
        Panel {
            id: "panel-a",
            title: "(a) Mutual information",
            x_label: "iteration",
            y_label: "I[X;T] (bits)",
        },
        Panel {
            id: "panel-b",
            title: "(b) Entropy",
            x_label: "iteration",
            y_label: "H[T] (bits)",
        },
        Panel {
            id: "panel-c",
            title: "(c) Weight change (L2)",
            x_label: "iteration",
            y_label: "|dW|",
        },
        Panel {
            id: "panel-d",
            title: "(d) Information plane",
            x_label: "I[X;T] (bits)",
            y_label: "H[T] (bits)",
        },
    ];

    for (index, panel) in panels.iter().enumerate() {
        let col = (index % 2) as f64;
        let row = (index / 2) as f64;
        let cell_w = w / 2.0;
        let cell_h = h / 2.0;
        let px = col * cell_w + 58.0;
        let py = row * cell_h + 26.0;
        let pw = cell_w - 74.0;
        let ph = cell_h - 68.0;

        let values = |f: &dyn Fn(&crate::harness::IterationRecord) -> f64| -> Vec<f64> {
            runs.iter().flat_map(|r| r.records.iter().map(f)).collect()
        };
        let (x_min, x_max, y_min, y_max) = match index {
            0 => {
                let (lo, hi) = padded_range(values(&|r| r.mi_xt).into_iter());
                (it_min, it_max, lo, hi)
            }
            1 => {
                let (lo, hi) = padded_range(values(&|r| r.entropy_t).into_iter());
                (it_min, it_max, lo, hi)
            }
            2 => {
                let (lo, hi) = padded_range(values(&|r| r.weight_delta).into_iter());
                (it_min, it_max, lo, hi)
            }
            _ => {
                let (xlo, xhi) = padded_range(values(&|r| r.mi_xt).into_iter());
                let (ylo, yhi) = padded_range(values(&|r| r.entropy_t).into_iter());
                (xlo, xhi, ylo, yhi)
            }
        };
        let frame = Frame {
            px,
            py,
            pw,
            ph,
            x_min,
            x_max,
            y_min,
            y_max,
        };

        svg.push_str(&format!("<g id=\"{}\">\n", panel.id));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\" font-weight=\"bold\">{}</text>\n",
            fmt_px(px + pw / 2.0),
            fmt_px(py - 8.0),
            panel.title
        ));
        svg.push_str(&frame.axes(panel.x_label, panel.y_label));
        for (run_index, run) in runs.iter().enumerate() {
            let color = RUN_COLORS[run_index % RUN_COLORS.len()];
            let line = match index {
                0 => frame.polyline(
                    run.records.iter().map(|r| (r.iteration as f64, r.mi_xt)),
                    color,
                ),
                1 => frame.polyline(
                    run.records
                        .iter()
                        .map(|r| (r.iteration as f64, r.entropy_t)),
                    color,
                ),
                2 => frame.polyline(
                    run.records
                        .iter()
                        .map(|r| (r.iteration as f64, r.weight_delta)),
                    color,
                ),
                _ => frame.polyline(run.records.iter().map(|r| (r.mi_xt, r.entropy_t)), color),
            };
            svg.push_str(&line);
        }
        svg.push_str("</g>\n");
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn render_dynamics_panels(
    runs: &[RunTrajectory],
    style: &PlotStyle,
    path: &Path,
) -> Result<()> {
    write_file(path, &dynamics_panels_svg(runs, style)?)
}
