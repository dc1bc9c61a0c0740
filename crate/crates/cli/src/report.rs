//! CSV tables and SVG line plots.
//!
//! Every CSV starts with a `# <schema>` comment naming the table and its
//! version, followed by a fixed header row.

use std::fmt::Write as _;
use std::io::Write;

use ssrcbf::filter::Trajectory;
use ssrcbf::Result;

use crate::bench::BenchRow;

pub const BENCH_SENSORS_SCHEMA: &str = "ssrcbf-bench-sensors/1";
pub const BENCH_SUBSPACES_SCHEMA: &str = "ssrcbf-bench-subspaces/1";
pub const CLOSEDLOOP_SCHEMA: &str = "ssrcbf-closedloop/1";
pub const SSR_SCHEMA: &str = "ssrcbf-ssr/1";

fn csv_err(e: csv::Error) -> ssrcbf::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io.into(),
        other => ssrcbf::Error::InvalidParameter(format!("csv: {other:?}")),
    }
}

fn writer<W: Write>(mut out: W, schema: &str) -> Result<csv::Writer<W>> {
    writeln!(out, "# {schema}")?;
    Ok(csv::Writer::from_writer(out))
}

fn fmt_f(x: f64) -> String {
    format!("{x:e}")
}

/// Bench table. `axis` names the swept column (`p` or `r`).
pub fn write_bench<W: Write>(out: W, axis: &str, rows: &[BenchRow]) -> Result<()> {
    let schema = if axis == "p" {
        BENCH_SENSORS_SCHEMA
    } else {
        BENCH_SUBSPACES_SCHEMA
    };
    let mut w = writer(out, schema)?;
    w.write_record([axis, "method", "runs", "work", "bound", "mean_s", "std_s"])
        .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.point.to_string(),
            r.method.to_string(),
            r.runs.to_string(),
            fmt_f(r.work),
            r.bound.map(|b| b.to_string()).unwrap_or_default(),
            fmt_f(r.mean_s),
            fmt_f(r.std_s),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Closed-loop table, one row per (step, method), with `n` state and `m`
/// input columns.
pub fn write_closedloop<W: Write>(out: W, n: usize, m: usize, runs: &[Trajectory]) -> Result<()> {
    let mut w = writer(out, CLOSEDLOOP_SCHEMA)?;
    let mut header: Vec<String> = ["tau", "method", "filtered", "h_min", "cost", "set_size"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..n).map(|k| format!("x{k}")));
    header.extend((0..m).map(|k| format!("u{k}")));
    header.push("seconds".into());
    w.write_record(&header).map_err(csv_err)?;
    for traj in runs {
        let method = traj.method.to_string();
        for step in &traj.steps {
            let mut rec = vec![
                step.tau.to_string(),
                method.clone(),
                step.filtered.to_string(),
                fmt_f(step.h_min),
                fmt_f(step.cost),
                step.set_size.map(|c| c.to_string()).unwrap_or_default(),
            ];
            rec.extend(step.x.iter().map(|v| fmt_f(*v)));
            rec.extend(step.u.iter().map(|v| fmt_f(*v)));
            rec.push(fmt_f(step.seconds));
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One named polyline.
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Line plot with axes, tick labels at the data extremes, and a legend.
pub fn svg_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (w, h, pad) = (640.0, 400.0, 56.0);
    let all = series
        .iter()
        .flat_map(|s| s.points.iter())
        .filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{title}</text>"#,
        w / 2.0
    );
    let _ = writeln!(
        svg,
        r#"<path d="M{pad},{pad} V{} H{}" fill="none" stroke="black"/>"#,
        h - pad,
        w - pad
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#,
        w / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{y_label}</text>"#,
        h / 2.0,
        h / 2.0
    );
    for (v, x, y, anchor) in [
        (x0, sx(x0), h - pad + 16.0, "middle"),
        (x1, sx(x1), h - pad + 16.0, "middle"),
        (y0, pad - 6.0, sy(y0), "end"),
        (y1, pad - 6.0, sy(y1), "end"),
    ] {
        let _ = writeln!(
            svg,
            r#"<text x="{x:.1}" y="{y:.1}" text-anchor="{anchor}">{v:.3}</text>"#
        );
    }
    if y0 < 0.0 && y1 > 0.0 {
        let _ = writeln!(
            svg,
            r#"<line x1="{pad}" x2="{}" y1="{z:.1}" y2="{z:.1}" stroke="gray" stroke-dasharray="4 3"/>"#,
            w - pad,
            z = sy(0.0)
        );
    }
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            pts.join(" ")
        );
        let ly = pad + 16.0 * k as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{}" x2="{}" y1="{ly}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            w - pad - 120.0,
            w - pad - 100.0,
            w - pad - 95.0,
            ly + 4.0,
            s.label
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// `h_min` and filter cost over time, one series per method.
pub fn closedloop_plots(runs: &[Trajectory]) -> (String, String) {
    let series = |f: &dyn Fn(&ssrcbf::filter::StepRecord) -> f64| -> Vec<Series> {
        runs.iter()
            .map(|t| Series {
                label: t.method.to_string(),
                points: t.steps.iter().map(|s| (s.tau as f64, f(s))).collect(),
            })
            .collect()
    };
    (
        svg_plot("Safety margin", "step", "min h(x)", &series(&|s| s.h_min)),
        svg_plot("Filter cost", "step", "|u - u_nom|", &series(&|s| s.cost)),
    )
}

/// Mean time against the sweep parameter, log scale on the y axis.
pub fn bench_plot(axis: &str, rows: &[BenchRow]) -> String {
    let series: Vec<Series> = crate::bench::METHODS
        .iter()
        .map(|m| Series {
            label: m.to_string(),
            points: rows
                .iter()
                .filter(|r| r.method == *m)
                .map(|r| (r.point as f64, r.mean_s.max(1e-12).log10()))
                .collect(),
        })
        .collect();
    svg_plot("Mean reconstruction time", axis, "log10 seconds", &series)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bench_csv_layout() {
        let rows = vec![BenchRow {
            point: 8,
            method: "brute",
            mean_s: 0.5,
            std_s: 0.0,
            runs: 1,
            work: 56.0,
            bound: None,
        }];
        let mut buf = Vec::new();
        write_bench(&mut buf, "p", &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# ssrcbf-bench-sensors/1");
        assert_eq!(lines[1], "p,method,runs,work,bound,mean_s,std_s");
        assert_eq!(lines[2], "8,brute,1,5.6e1,,5e-1,0e0");
    }

    #[test]
    fn svg_has_one_polyline_per_series() {
        let s = |l: &str| Series {
            label: l.into(),
            points: vec![(0.0, 1.0), (1.0, -1.0)],
        };
        let svg = svg_plot("t", "x", "y", &[s("a"), s("b")]);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }
}
