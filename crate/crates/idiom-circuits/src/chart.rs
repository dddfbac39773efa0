// SPDX-License-Identifier: MIT OR Apache-2.0

//! Self-contained SVG threshold-sweep charts: final cosine similarity on
//! the left axis, log₁₀ edge count on the right axis, both plotted against
//! the threshold. Output is a deterministic function of the sweep data.

use std::fmt::Write as _;

use crate::circuit_io::SweepTable;

const WIDTH: f32 = 640.0;
const HEIGHT: f32 = 400.0;
const MARGIN_LEFT: f32 = 60.0;
const MARGIN_RIGHT: f32 = 60.0;
const MARGIN_TOP: f32 = 30.0;
const MARGIN_BOTTOM: f32 = 50.0;

fn fmt(v: f32) -> String {
    format!("{:.2}", v)
}

/// Renders the sweep as an SVG document. Empty sweeps produce axes only; a
/// single-point sweep gets one marker per series. Edge counts of zero sit
/// on the right axis floor (log of zero is drawn at log₁₀ 1).
pub fn export_sweep_chart(table: &SweepTable) -> String {
    let n = table.grid.len();
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;

    let (tau_min, tau_max) = match (table.grid.first(), table.grid.last()) {
        (Some(&a), Some(&b)) if b > a => (a, b),
        (Some(&a), _) => (a - 0.5, a + 0.5),
        _ => (0.0, 1.0),
    };
    let x = |tau: f32| MARGIN_LEFT + (tau - tau_min) / (tau_max - tau_min) * plot_w;
    // Left axis: cosine in [0, 1].
    let y_cos = |c: f32| MARGIN_TOP + (1.0 - c.clamp(0.0, 1.0)) * plot_h;
    // Right axis: log10 edge count from 0 to the next integer decade.
    let log_max = table
        .edge_counts
        .iter()
        .map(|&c| (c.max(1) as f32).log10())
        .fold(1.0f32, f32::max)
        .ceil();
    let y_cnt = |c: usize| MARGIN_TOP + (1.0 - (c.max(1) as f32).log10() / log_max) * plot_h;

    let mut svg = String::new();
    writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">",
        w = WIDTH,
        h = HEIGHT
    )
    .unwrap();
    writeln!(svg, "<rect width=\"{}\" height=\"{}\" fill=\"white\"/>", WIDTH, HEIGHT).unwrap();

    // Axes.
    let x0 = MARGIN_LEFT;
    let x1 = WIDTH - MARGIN_RIGHT;
    let y0 = MARGIN_TOP;
    let y1 = HEIGHT - MARGIN_BOTTOM;
    for (xa, ya, xb, yb) in [(x0, y1, x1, y1), (x0, y0, x0, y1), (x1, y0, x1, y1)] {
        writeln!(
            svg,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
            fmt(xa),
            fmt(ya),
            fmt(xb),
            fmt(yb)
        )
        .unwrap();
    }

    // Left ticks (cosine) and right ticks (log10 count decades).
    for i in 0..=5 {
        let c = i as f32 / 5.0;
        let y = y_cos(c);
        writeln!(
            svg,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
            fmt(x0 - 4.0),
            fmt(y),
            fmt(x0),
            fmt(y)
        )
        .unwrap();
        writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"end\">{}</text>",
            fmt(x0 - 7.0),
            fmt(y + 3.0),
            fmt(c)
        )
        .unwrap();
    }
    let mut decade = 0;
    while decade as f32 <= log_max {
        let y = MARGIN_TOP + (1.0 - decade as f32 / log_max) * plot_h;
        writeln!(
            svg,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
            fmt(x1),
            fmt(y),
            fmt(x1 + 4.0),
            fmt(y)
        )
        .unwrap();
        writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"start\">1e{}</text>",
            fmt(x1 + 7.0),
            fmt(y + 3.0),
            decade
        )
        .unwrap();
        decade += 1;
    }
    // Threshold ticks at the first/last grid points.
    for &tau in [table.grid.first(), table.grid.last()].into_iter().flatten() {
        writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"middle\">{}</text>",
            fmt(x(tau)),
            fmt(y1 + 16.0),
            tau
        )
        .unwrap();
    }

    // Axis titles.
    writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">threshold</text>",
        fmt((x0 + x1) / 2.0),
        fmt(HEIGHT - 12.0)
    )
    .unwrap();
    writeln!(
        svg,
        "<text x=\"14\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\" transform=\"rotate(-90 14 {y})\">cosine similarity</text>",
        fmt((y0 + y1) / 2.0),
        y = fmt((y0 + y1) / 2.0)
    )
    .unwrap();
    writeln!(
        svg,
        "<text x=\"{x}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\" transform=\"rotate(90 {x} {y})\">edge count (log scale)</text>",
        fmt((y0 + y1) / 2.0),
        x = fmt(WIDTH - 14.0),
        y = fmt((y0 + y1) / 2.0)
    )
    .unwrap();

    // Series: cosine (blue, left axis) and edge count (red, right axis).
    let series = [
        (
            "blue",
            (0..n)
                .map(|i| (x(table.grid[i]), y_cos(table.cosines[i])))
                .collect::<Vec<_>>(),
        ),
        (
            "red",
            (0..n)
                .map(|i| (x(table.grid[i]), y_cnt(table.edge_counts[i])))
                .collect::<Vec<_>>(),
        ),
    ];
    for (color, points) in &series {
        if points.len() > 1 {
            let path: Vec<String> = points
                .iter()
                .map(|&(px, py)| format!("{},{}", fmt(px), fmt(py)))
                .collect();
            writeln!(
                svg,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>",
                path.join(" "),
                color
            )
            .unwrap();
        }
        for &(px, py) in points {
            writeln!(
                svg,
                "<circle cx=\"{}\" cy=\"{}\" r=\"2.5\" fill=\"{}\"/>",
                fmt(px),
                fmt(py),
                color
            )
            .unwrap();
        }
    }

    svg.push_str("</svg>\n");
    svg
}
