//! CSV tables and minimal SVG line charts for training curves and sweeps.

use std::fmt::Write as _;

use shgt_core::train::TrainLog;

pub const CURVE_COLUMNS: [&str; 8] = [
    "epoch",
    "loss_total",
    "loss_classification",
    "loss_reconstruction",
    "alpha",
    "val_w_f1",
    "val_recall_at_10",
    "val_recall_at_20",
];

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// One row per epoch under [`CURVE_COLUMNS`]. Recall cells are empty when the
/// log was written with other cut-offs.
pub fn curves_csv(log: &TrainLog) -> String {
    let mut out = CURVE_COLUMNS.join(",");
    out.push('\n');
    for r in &log.records {
        let row = [
            r.epoch.to_string(),
            r.loss.total.to_string(),
            r.loss.classification.to_string(),
            r.loss.reconstruction.to_string(),
            r.loss.alpha.to_string(),
            r.val_w_f1.to_string(),
            cell(r.val_recall.get(&10).copied()),
            cell(r.val_recall.get(&20).copied()),
        ];
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];
const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;

fn bounds(series: &[Series<'_>]) -> (f64, f64, f64, f64) {
    let pts = series
        .iter()
        .flat_map(|s| s.points.iter())
        .filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        return (0.0, 1.0, 0.0, 1.0);
    }
    // flat data still needs a non-degenerate axis
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    (x0, x1, y0, y1)
}

/// Line chart with axes, min/max tick labels and a legend.
pub fn line_chart_svg(title: &str, x_label: &str, series: &[Series<'_>]) -> String {
    let (x0, x1, y0, y1) = bounds(series);
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        svg,
        r#"<path d="M{left} {top} L{left} {bottom} L{right} {bottom}" stroke="black" fill="none"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{left}" y="{}" text-anchor="middle">{}</text>"#,
        bottom + 16.0,
        fmt_tick(x0)
    );
    let _ = writeln!(
        svg,
        r#"<text x="{right}" y="{}" text-anchor="middle">{}</text>"#,
        bottom + 16.0,
        fmt_tick(x1)
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
        left - 4.0,
        bottom,
        fmt_tick(y0)
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
        left - 4.0,
        top + 4.0,
        fmt_tick(y1)
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    for (i, s) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        if !path.is_empty() {
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" stroke="{colour}" stroke-width="1.5" fill="none"/>"#,
                path.join(" ")
            );
        }
        let ly = top + 16.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{colour}"/>"#,
            right - 150.0,
            ly - 9.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{ly}">{}</text>"#,
            right - 135.0,
            escape(s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

pub fn loss_svg(log: &TrainLog) -> String {
    let pick = |f: fn(&shgt_core::train::EpochRecord) -> f64| -> Vec<(f64, f64)> {
        log.records.iter().map(|r| (r.epoch as f64, f(r))).collect()
    };
    line_chart_svg(
        "Training loss",
        "epoch",
        &[
            Series {
                label: "total",
                points: pick(|r| r.loss.total),
            },
            Series {
                label: "classification",
                points: pick(|r| r.loss.classification),
            },
            Series {
                label: "reconstruction",
                points: pick(|r| r.loss.reconstruction),
            },
        ],
    )
}

pub fn validation_svg(log: &TrainLog) -> String {
    let ks: Vec<usize> = log
        .records
        .first()
        .map(|r| r.val_recall.keys().copied().collect())
        .unwrap_or_default();
    let labels: Vec<String> = ks.iter().map(|k| format!("R@{k}")).collect();
    let mut series = vec![Series {
        label: "w-F1",
        points: log
            .records
            .iter()
            .map(|r| (r.epoch as f64, r.val_w_f1))
            .collect(),
    }];
    for (k, label) in ks.iter().zip(&labels) {
        series.push(Series {
            label,
            points: log
                .records
                .iter()
                .filter_map(|r| r.val_recall.get(k).map(|&v| (r.epoch as f64, v)))
                .collect(),
        });
    }
    line_chart_svg("Validation metrics", "epoch", &series)
}
