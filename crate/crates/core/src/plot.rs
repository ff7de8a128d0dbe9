//! Dependency-free SVG emitters for the two report figures: a ROC
//! polyline plot and an attribution beeswarm (one horizontal band per
//! feature, points coloured by the underlying raw value, grey when the
//! value is missing). Output strings are fully deterministic.

use crate::dataset::{Column, ColumnData, Dataset};
use crate::error::{Error, Result};
use crate::harness::derive_seed;
use crate::metrics::RocCurve;
use crate::shap::ShapMatrix;

const ROC_SIZE: f64 = 560.0;
const ROC_X0: f64 = 70.0;
const ROC_Y0: f64 = 30.0;
const ROC_X1: f64 = 530.0;
const ROC_Y1: f64 = 490.0;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

const MISSING_GREY: &str = "#9e9e9e";
const LOW_COLOUR: (f64, f64, f64) = (59.0, 76.0, 192.0);
const HIGH_COLOUR: (f64, f64, f64) = (180.0, 4.0, 38.0);

fn heat_colour(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        lerp(LOW_COLOUR.0, HIGH_COLOUR.0),
        lerp(LOW_COLOUR.1, HIGH_COLOUR.1),
        lerp(LOW_COLOUR.2, HIGH_COLOUR.2)
    )
}

/// Deterministic jitter in (-0.5, 0.5) for point (feature, row).
fn jitter(feature: usize, row: usize) -> f64 {
    let bits = derive_seed(0x0BEE, feature as u64, row as u64);
    (bits >> 11) as f64 / (1u64 << 53) as f64 - 0.5
}

/// ROC plot with one polyline per labelled curve plus the chance diagonal.
pub fn roc_svg(curves: &[(String, RocCurve)]) -> String {
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{ROC_SIZE}\" height=\"{ROC_SIZE}\" \
         viewBox=\"0 0 {ROC_SIZE} {ROC_SIZE}\" font-family=\"sans-serif\" font-size=\"13\">\n"
    ));
    svg.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{ROC_SIZE}\" height=\"{ROC_SIZE}\" fill=\"white\"/>\n"
    ));
    let x = |fpr: f64| ROC_X0 + fpr * (ROC_X1 - ROC_X0);
    let y = |tpr: f64| ROC_Y1 - tpr * (ROC_Y1 - ROC_Y0);
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        svg.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{ROC_Y0}\" x2=\"{:.1}\" y2=\"{ROC_Y1}\" stroke=\"#dddddd\"/>\n",
            x(v),
            x(v)
        ));
        svg.push_str(&format!(
            "<line x1=\"{ROC_X0}\" y1=\"{:.1}\" x2=\"{ROC_X1}\" y2=\"{:.1}\" stroke=\"#dddddd\"/>\n",
            y(v),
            y(v)
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{v:.1}</text>\n",
            x(v),
            ROC_Y1 + 20.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{v:.1}</text>\n",
            ROC_X0 - 8.0,
            y(v) + 4.0
        ));
    }
    svg.push_str(&format!(
        "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#999999\" \
         stroke-dasharray=\"6 4\"/>\n",
        x(0.0),
        y(0.0),
        x(1.0),
        y(1.0)
    ));
    for (index, (label, curve)) in curves.iter().enumerate() {
        let colour = PALETTE[index % PALETTE.len()];
        let points: Vec<String> = curve
            .points
            .iter()
            .map(|&(fpr, tpr)| format!("{:.2},{:.2}", x(fpr), y(tpr)))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{colour}\" stroke-width=\"2\" points=\"{}\"/>\n",
            points.join(" ")
        ));
        let ly = ROC_Y1 - 14.0 - 18.0 * (curves.len() - 1 - index) as f64;
        svg.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"{colour}\" \
             stroke-width=\"2\"/>\n",
            ROC_X1 - 180.0,
            ly - 4.0,
            ROC_X1 - 150.0,
            ly - 4.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\">{label}</text>\n",
            ROC_X1 - 142.0,
            ly
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">False positive rate</text>\n",
        (ROC_X0 + ROC_X1) / 2.0,
        ROC_Y1 + 46.0
    ));
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" \
         transform=\"rotate(-90 {:.1} {:.1})\">True positive rate</text>\n",
        20.0,
        (ROC_Y0 + ROC_Y1) / 2.0,
        20.0,
        (ROC_Y0 + ROC_Y1) / 2.0
    ));
    svg.push_str("</svg>\n");
    svg
}

/// Raw cell values mapped to [0, 1] for colouring: numeric columns by
/// min–max position, text columns by rank among the sorted distinct
/// values; `None` marks missing cells.
fn normalized_values(column: &Column) -> Vec<Option<f64>> {
    let n = column.missing.len();
    match &column.data {
        ColumnData::Numeric(values) => {
            let seen: Vec<f64> = (0..n)
                .filter(|&r| !column.missing[r])
                .map(|r| values[r])
                .collect();
            let lo = seen.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = seen.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (0..n)
                .map(|r| {
                    if column.missing[r] {
                        None
                    } else if hi > lo {
                        Some((values[r] - lo) / (hi - lo))
                    } else {
                        Some(0.5)
                    }
                })
                .collect()
        }
        ColumnData::Text(values) => {
            let mut distinct: Vec<&str> = (0..n)
                .filter(|&r| !column.missing[r])
                .map(|r| values[r].as_str())
                .collect();
            distinct.sort_unstable();
            distinct.dedup();
            (0..n)
                .map(|r| {
                    if column.missing[r] {
                        None
                    } else if distinct.len() > 1 {
                        let rank = distinct
                            .binary_search(&values[r].as_str())
                            .expect("seen value");
                        Some(rank as f64 / (distinct.len() - 1) as f64)
                    } else {
                        Some(0.5)
                    }
                })
                .collect()
        }
        ColumnData::Date(_) => vec![None; n],
    }
}

/// Beeswarm summary plot: features in the matrix's ranking order (one band
/// each, most important on top), x = attribution, colour = raw value from
/// blue (low) to red (high), grey = missing.
pub fn beeswarm_svg(matrix: &ShapMatrix, dataset: &Dataset) -> Result<String> {
    let band = 36.0;
    let top = 56.0;
    let left_gutter = 190.0;
    let x0 = 200.0;
    let x1 = 740.0;
    let width = 780.0;
    let height = top + band * matrix.n_features() as f64 + 46.0;
    let max_abs = matrix
        .values
        .iter()
        .flatten()
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    let scale = if max_abs > 0.0 { max_abs } else { 1.0 };
    let x = |phi: f64| (x0 + x1) / 2.0 + phi / scale * (x1 - x0) / 2.0;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height:.0}\" \
         viewBox=\"0 0 {width} {height:.0}\" font-family=\"sans-serif\" font-size=\"13\">\n"
    ));
    svg.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{width}\" height=\"{height:.0}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{x0}\" y=\"24\">feature value: <tspan fill=\"{}\">low</tspan> → \
         <tspan fill=\"{}\">high</tspan>, <tspan fill=\"{MISSING_GREY}\">grey = missing</tspan></text>\n",
        heat_colour(0.0),
        heat_colour(1.0)
    ));
    svg.push_str(&format!(
        "<line x1=\"{:.1}\" y1=\"{top}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#bbbbbb\"/>\n",
        x(0.0),
        x(0.0),
        top + band * matrix.n_features() as f64
    ));
    for (fi, name) in matrix.feature_names.iter().enumerate() {
        let column = dataset
            .column(name)
            .ok_or_else(|| Error::Schema(format!("dataset lacks plotted feature '{name}'")))?;
        let colours = normalized_values(column);
        let cy0 = top + band * (fi as f64 + 0.5);
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{name}</text>\n",
            left_gutter - 6.0,
            cy0 + 4.0
        ));
        for (row, phi_row) in matrix.values.iter().enumerate() {
            let fill = match colours[row] {
                Some(t) => heat_colour(t),
                None => MISSING_GREY.to_string(),
            };
            let cx = x(phi_row[fi]);
            let cy = cy0 + jitter(fi, row) * (band - 10.0);
            svg.push_str(&format!(
                "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"2.5\" fill=\"{fill}\" \
                 fill-opacity=\"0.8\"/>\n"
            ));
        }
    }
    let axis_y = top + band * matrix.n_features() as f64 + 26.0;
    for tick in [-max_abs, 0.0, max_abs] {
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{axis_y:.1}\" text-anchor=\"middle\">{tick:.2}</text>\n",
            x(if max_abs > 0.0 { tick } else { 0.0 })
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">attribution (log-odds)</text>\n",
        (x0 + x1) / 2.0,
        axis_y + 18.0
    ));
    svg.push_str("</svg>\n");
    Ok(svg)
}
