//! Figure emission. Scatter plots of pooled metric means against task scores
//! (one point per sweep setting) and a heatmap of the correlation matrix.
//! Hand-assembled SVG with fixed formatting so identical inputs produce
//! byte-identical files.

use std::collections::BTreeMap;

use crate::analysis::correlate::{CorrelationMatrix, METRIC_NAMES};
use crate::analysis::scores::ScoreTable;
use crate::analysis::SweepAggregate;
use crate::perturb::PerturbKind;

/// Metrics that get a scatter figure. dnd tracks idc closely and adds no
/// visual information.
pub const SCATTER_METRICS: [&str; 3] = ["chrf", "idc", "comp"];

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const PLOT_LEFT: f64 = 64.0;
const PLOT_RIGHT: f64 = 624.0;
const PLOT_TOP: f64 = 40.0;
const PLOT_BOTTOM: f64 = 432.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterPoint {
    pub setting_id: String,
    pub kind: PerturbKind,
    pub x: f64,
    pub y: f64,
}

/// Operator kind recovered from a setting id. Ids this tool generates embed
/// the operator name; foreign ids fall back to the benchmark style.
pub fn kind_hint(setting_id: &str) -> PerturbKind {
    if setting_id.contains("full_shuffle") {
        PerturbKind::FullShuffle
    } else if setting_id.contains("flip") {
        PerturbKind::NeighborFlip
    } else if setting_id.contains("phrase") {
        PerturbKind::PhraseShuffle
    } else {
        PerturbKind::None
    }
}

fn kind_color(kind: PerturbKind) -> &'static str {
    match kind {
        PerturbKind::None => "#000000",
        PerturbKind::FullShuffle => "#d62728",
        PerturbKind::NeighborFlip => "#1f77b4",
        PerturbKind::PhraseShuffle => "#2ca02c",
    }
}

/// One point per setting: x is the metric mean pooled over languages
/// (weighted by each cell's sample count), y is the mean score for that
/// setting. Settings missing the metric or missing scores are dropped.
pub fn scatter_points(
    aggs: &[SweepAggregate],
    scores: &ScoreTable,
    metric: &str,
) -> Vec<ScatterPoint> {
    // setting -> (weighted metric sum, weight)
    let mut pooled: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for a in aggs {
        let value = match metric {
            "chrf" => Some(a.chrf.mean),
            "idc" => Some(a.idc.mean),
            "dnd" => Some(a.dnd.mean),
            "comp" => a.comp.map(|c| c.mean),
            _ => None,
        };
        let Some(value) = value else { continue };
        let cell = pooled.entry(a.setting_id.as_str()).or_insert((0.0, 0.0));
        cell.0 += value * a.n as f64;
        cell.1 += a.n as f64;
    }

    let mut score_sums: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for row in &scores.rows {
        let cell = score_sums.entry(row.setting_id.as_str()).or_insert((0.0, 0.0));
        cell.0 += row.score;
        cell.1 += 1.0;
    }

    pooled
        .into_iter()
        .filter(|(_, (_, w))| *w > 0.0)
        .filter_map(|(setting, (sum, w))| {
            let (score_sum, score_n) = score_sums.get(setting)?;
            Some(ScatterPoint {
                setting_id: setting.to_string(),
                kind: kind_hint(setting),
                x: sum / w,
                y: score_sum / score_n,
            })
        })
        .collect()
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Value range with 5% padding; degenerate ranges get a fixed half-width so
/// the projection never divides by zero.
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
    if lo == hi {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

/// Scatter of metric (x) against score (y). `invert_x` flips the x axis so
/// that "more structure preserved" always reads rightward; tick labels keep
/// the true values.
pub fn scatter_svg(
    metric_label: &str,
    score_label: &str,
    invert_x: bool,
    points: &[ScatterPoint],
) -> String {
    let (x_lo, x_hi) = padded_range(points.iter().map(|p| p.x));
    let (y_lo, y_hi) = padded_range(points.iter().map(|p| p.y));
    let px = |x: f64| -> f64 {
        let t = (x - x_lo) / (x_hi - x_lo);
        let t = if invert_x { 1.0 - t } else { t };
        PLOT_LEFT + t * (PLOT_RIGHT - PLOT_LEFT)
    };
    let py = |y: f64| -> f64 {
        let t = (y - y_lo) / (y_hi - y_lo);
        PLOT_BOTTOM - t * (PLOT_BOTTOM - PLOT_TOP)
    };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"#ffffff\"/>\n"
    ));

    // Gridlines and ticks at 5 evenly spaced values per axis.
    for i in 0..5 {
        let t = i as f64 / 4.0;
        let xv = x_lo + t * (x_hi - x_lo);
        let yv = y_lo + t * (y_hi - y_lo);
        let gx = px(xv);
        let gy = py(yv);
        svg.push_str(&format!(
            "<line x1=\"{gx:.1}\" y1=\"{PLOT_TOP}\" x2=\"{gx:.1}\" y2=\"{PLOT_BOTTOM}\" \
             stroke=\"#eeeeee\"/>\n"
        ));
        svg.push_str(&format!(
            "<line x1=\"{PLOT_LEFT}\" y1=\"{gy:.1}\" x2=\"{PLOT_RIGHT}\" y2=\"{gy:.1}\" \
             stroke=\"#eeeeee\"/>\n"
        ));
        svg.push_str(&format!(
            "<text x=\"{gx:.1}\" y=\"{:.1}\" text-anchor=\"middle\" fill=\"#333333\">{xv:.3}</text>\n",
            PLOT_BOTTOM + 16.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" fill=\"#333333\">{yv:.3}</text>\n",
            PLOT_LEFT - 6.0,
            gy + 4.0
        ));
    }
    svg.push_str(&format!(
        "<line x1=\"{PLOT_LEFT}\" y1=\"{PLOT_BOTTOM}\" x2=\"{PLOT_RIGHT}\" y2=\"{PLOT_BOTTOM}\" \
         stroke=\"#333333\"/>\n\
         <line x1=\"{PLOT_LEFT}\" y1=\"{PLOT_TOP}\" x2=\"{PLOT_LEFT}\" y2=\"{PLOT_BOTTOM}\" \
         stroke=\"#333333\"/>\n"
    ));

    let x_title = if invert_x {
        format!("{metric_label} (axis inverted)")
    } else {
        metric_label.to_string()
    };
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" fill=\"#111111\">{}</text>\n",
        (PLOT_LEFT + PLOT_RIGHT) / 2.0,
        PLOT_BOTTOM + 38.0,
        xml_escape(&x_title)
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" fill=\"#111111\" \
         transform=\"rotate(-90 16 {:.1})\">{}</text>\n",
        (PLOT_TOP + PLOT_BOTTOM) / 2.0,
        (PLOT_TOP + PLOT_BOTTOM) / 2.0,
        xml_escape(score_label)
    ));

    // Legend: only kinds that actually appear, in fixed order.
    let kinds = [
        PerturbKind::None,
        PerturbKind::FullShuffle,
        PerturbKind::NeighborFlip,
        PerturbKind::PhraseShuffle,
    ];
    let mut legend_x = PLOT_LEFT;
    for kind in kinds {
        if !points.iter().any(|p| p.kind == kind) {
            continue;
        }
        svg.push_str(&format!(
            "<rect x=\"{legend_x:.1}\" y=\"14\" width=\"10\" height=\"10\" fill=\"{}\"/>\n",
            kind_color(kind)
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"23\" fill=\"#111111\">{}</text>\n",
            legend_x + 14.0,
            kind.as_str()
        ));
        legend_x += 14.0 + 8.0 * kind.as_str().len() as f64 + 24.0;
    }

    for p in points {
        svg.push_str(&format!(
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"4\" fill=\"{}\" fill-opacity=\"0.85\">\
             <title>{}: ({:.4}, {:.4})</title></circle>\n",
            px(p.x),
            py(p.y),
            kind_color(p.kind),
            xml_escape(&p.setting_id),
            p.x,
            p.y
        ));
    }

    svg.push_str("</svg>\n");
    svg
}

fn lerp_channel(a: u8, b: u8, t: f64) -> u8 {
    (a as f64 + (b as f64 - a as f64) * t).round() as u8
}

/// Diverging blue-white-red map over rho in [-1, 1].
fn diverging_color(rho: f64) -> String {
    let rho = rho.clamp(-1.0, 1.0);
    let (from, to, t) = if rho < 0.0 {
        ((0x21, 0x66, 0xac), (0xff, 0xff, 0xff), 1.0 + rho)
    } else {
        ((0xff, 0xff, 0xff), (0xb2, 0x18, 0x2b), rho)
    };
    format!(
        "#{:02x}{:02x}{:02x}",
        lerp_channel(from.0, to.0, t),
        lerp_channel(from.1, to.1, t),
        lerp_channel(from.2, to.2, t)
    )
}

/// Heatmap of the correlation matrix: one row per group, one column per
/// metric, missing cells in grey.
pub fn heatmap_svg(matrix: &CorrelationMatrix) -> String {
    const CELL_W: f64 = 96.0;
    const CELL_H: f64 = 36.0;
    const GUTTER: f64 = 150.0;
    const TOP: f64 = 56.0;

    let rows = matrix.cells.len();
    let width = GUTTER + CELL_W * METRIC_NAMES.len() as f64 + 16.0;
    let height = TOP + CELL_H * rows.max(1) as f64 + 16.0;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!("<rect width=\"{width}\" height=\"{height}\" fill=\"#ffffff\"/>\n"));
    svg.push_str(&format!(
        "<text x=\"8\" y=\"20\" fill=\"#111111\">{} correlation with score, by {}</text>\n",
        xml_escape(&matrix.method),
        xml_escape(&matrix.grouping)
    ));
    for (c, metric) in METRIC_NAMES.iter().enumerate() {
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" fill=\"#111111\">{metric}</text>\n",
            GUTTER + CELL_W * (c as f64 + 0.5),
            TOP - 10.0
        ));
    }

    for (r, (group, metrics)) in matrix.cells.iter().enumerate() {
        let y = TOP + CELL_H * r as f64;
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" fill=\"#111111\">{}</text>\n",
            GUTTER - 8.0,
            y + CELL_H / 2.0 + 4.0,
            xml_escape(group)
        ));
        for (c, metric) in METRIC_NAMES.iter().enumerate() {
            let x = GUTTER + CELL_W * c as f64;
            match metrics.get(*metric) {
                Some(cell) => {
                    let fill = diverging_color(cell.rho);
                    let text_fill = if cell.rho.abs() > 0.55 { "#ffffff" } else { "#111111" };
                    svg.push_str(&format!(
                        "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{CELL_W}\" height=\"{CELL_H}\" \
                         fill=\"{fill}\" stroke=\"#ffffff\"/>\n"
                    ));
                    svg.push_str(&format!(
                        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" \
                         fill=\"{text_fill}\">{:.2}</text>\n",
                        x + CELL_W / 2.0,
                        y + CELL_H / 2.0 + 4.0,
                        cell.rho
                    ));
                }
                None => {
                    svg.push_str(&format!(
                        "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{CELL_W}\" height=\"{CELL_H}\" \
                         fill=\"#cfcfcf\" stroke=\"#ffffff\"/>\n"
                    ));
                }
            }
        }
    }

    svg.push_str("</svg>\n");
    svg
}
