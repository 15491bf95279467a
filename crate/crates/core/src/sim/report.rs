//! CSV, table and SVG rendering of simulation results.
//!
//! Every renderer is a pure function of its input, so identical runs give
//! byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use super::engine::SimOutput;
use super::kpi::RunSummary;
use super::ledger::CommLedger;
use super::metrics::normalized_accuracy;
use super::sweep::{SweepParam, SweepRow};
use crate::error::{FlareError, Result};

pub const METRICS_FILE: &str = "metrics.csv";
pub const LEDGER_FILE: &str = "ledger.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

pub const SUMMARY_HEADER: [&str; 7] = [
    "scheduler",
    "max_drop_pct",
    "final_accuracy_diff_pct",
    "avg_latency_s",
    "uplink_bytes",
    "downlink_bytes",
    "fl_bytes",
];

/// `time_s,sensor,accuracy,normalized_accuracy,ks`; `ks` is empty before the
/// first inference batch.
pub fn metrics_csv(output: &SimOutput) -> Result<String> {
    let series = normalized_accuracy(&output.metrics)?;
    let mut cursor = vec![0usize; series.len()];
    let mut out = String::from("time_s,sensor,accuracy,normalized_accuracy,ks\n");
    for s in &output.metrics.samples {
        let norm = series[s.sensor][cursor[s.sensor]].value;
        cursor[s.sensor] += 1;
        let ks = s.ks.map(|k| format!("{k:.6}")).unwrap_or_default();
        let _ = writeln!(out, "{},{},{:.6},{:.6},{}", s.time_s, s.sensor, s.accuracy, norm, ks);
    }
    Ok(out)
}

/// `time_s,link,bytes,reason,client,sensor`; `sensor` is empty for FL transfers.
pub fn ledger_csv(ledger: &CommLedger) -> String {
    let mut out = String::from("time_s,link,bytes,reason,client,sensor\n");
    for r in ledger.records() {
        let sensor = r.sensor.map(|s| s.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{},{},{}", r.time_s, r.link, r.bytes, r.reason, r.client, sensor);
    }
    out
}

fn latency_cell(summary: &RunSummary) -> String {
    summary
        .latency
        .average_s
        .map(|s| format!("{s:.1}"))
        .unwrap_or_else(|| "undetected".into())
}

fn summary_cells(s: &RunSummary) -> [String; 7] {
    [
        s.scheduler.clone(),
        format!("{:.2}", s.max_drop_pct),
        format!("{:.2}", s.final_accuracy_diff_pct),
        latency_cell(s),
        s.uplink_bytes.to_string(),
        s.downlink_bytes.to_string(),
        s.fl_bytes.to_string(),
    ]
}

pub fn summary_csv(summaries: &[RunSummary]) -> String {
    let mut out = SUMMARY_HEADER.join(",");
    out.push('\n');
    for s in summaries {
        let cells = summary_cells(s);
        // Scheduler labels such as "fixed(300,350)" contain commas.
        let _ = writeln!(out, "\"{}\",{}", cells[0], cells[1..].join(","));
    }
    out
}

/// Fixed-width table with the same columns as [`summary_csv`].
pub fn summary_table(summaries: &[RunSummary]) -> String {
    let header = [
        "scheduler",
        "max drop %",
        "final acc diff %",
        "avg latency s",
        "uplink B",
        "downlink B",
        "FL B",
    ];
    let rows: Vec<[String; 7]> = summaries.iter().map(summary_cells).collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let mut parts = Vec::with_capacity(cells.len());
        for (i, c) in cells.iter().enumerate() {
            if i == 0 {
                parts.push(format!("{c:<w$}", w = widths[i]));
            } else {
                parts.push(format!("{c:>w$}", w = widths[i]));
            }
        }
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    };
    line(header.to_vec(), &mut out);
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    line(rule.iter().map(String::as_str).collect(), &mut out);
    for row in &rows {
        line(row.iter().map(String::as_str).collect(), &mut out);
    }
    out
}

pub fn sweep_csv(param: SweepParam, rows: &[SweepRow]) -> String {
    let mut out = format!(
        "{param},instability_flags,drift_triggers,deployments,uploads,client_sensor_bytes,final_accuracy_diff_pct\n"
    );
    for r in rows {
        let s = &r.summary;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{:.2}",
            r.value,
            s.instability_flags,
            s.drift_triggers,
            s.deployments,
            s.uploads,
            s.client_sensor_bytes(),
            s.final_accuracy_diff_pct
        );
    }
    out
}

/// Writes `contents` to a sibling temporary file, then renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| FlareError::config(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = dir.join(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(FlareError::io(path, e));
    }
    Ok(())
}

/// Writes the three run CSVs into `dir`, creating it if needed.
pub fn write_run(dir: &Path, output: &SimOutput, summary: &RunSummary) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| FlareError::io(dir, e))?;
    let files = [
        (METRICS_FILE, metrics_csv(output)?),
        (LEDGER_FILE, ledger_csv(&output.ledger)),
        (SUMMARY_FILE, summary_csv(std::slice::from_ref(summary))),
    ];
    let mut paths = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = dir.join(name);
        write_atomic(&path, &body)?;
        paths.push(path);
    }
    Ok(paths)
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Line chart of normalized accuracy over time, one line per labelled run.
/// Each run contributes the mean over its drift-affected sensors (all sensors
/// without drift).
pub fn accuracy_svg(runs: &[(&str, &SimOutput)]) -> Result<String> {
    const W: f64 = 720.0;
    const H: f64 = 360.0;
    const PAD: f64 = 48.0;
    let mut lines = Vec::new();
    let (mut t_min, mut t_max) = (u64::MAX, 0u64);
    let mut y_min: f64 = 1.0;
    for (label, out) in runs {
        let series = normalized_accuracy(&out.metrics)?;
        let mut focus = out.metrics.affected_sensors();
        if focus.is_empty() {
            focus = (0..series.len()).collect();
        }
        let len = focus.iter().map(|&s| series[s].len()).min().unwrap_or(0);
        let points: Vec<(u64, f64)> = (0..len)
            .map(|i| {
                let mean = focus.iter().map(|&s| series[s][i].value).sum::<f64>() / focus.len() as f64;
                (series[focus[0]][i].time_s, mean)
            })
            .collect();
        for &(t, v) in &points {
            t_min = t_min.min(t);
            t_max = t_max.max(t);
            y_min = y_min.min(v);
        }
        lines.push((*label, points));
    }
    let y_lo = (y_min * 10.0).floor() / 10.0;
    let y_lo = y_lo.clamp(0.0, 0.9);
    let y_hi = 1.05;
    let span_t = (t_max.saturating_sub(t_min)).max(1) as f64;
    let x = |t: u64| PAD + (t - t_min) as f64 / span_t * (W - 2.0 * PAD);
    let y = |v: f64| H - PAD - (v - y_lo) / (y_hi - y_lo) * (H - 2.0 * PAD);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<line x1="{PAD}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{b}" stroke="black"/>"#,
        b = H - PAD,
        r = W - PAD
    );
    let mut tick = (y_lo * 10.0).round() as i64;
    while (tick as f64) / 10.0 <= 1.0 + 1e-9 {
        let v = tick as f64 / 10.0;
        let _ = writeln!(
            svg,
            r##"<text x="{tx:.1}" y="{ty:.1}" text-anchor="end">{v:.1}</text><line x1="{PAD}" y1="{ty0:.1}" x2="{r}" y2="{ty0:.1}" stroke="#ddd"/>"##,
            tx = PAD - 4.0,
            ty = y(v) + 4.0,
            ty0 = y(v),
            r = W - PAD
        );
        tick += 1;
    }
    let _ = writeln!(
        svg,
        r#"<text x="{PAD}" y="{ty}">{t_min} s</text><text x="{r}" y="{ty}" text-anchor="end">{t_max} s</text>"#,
        ty = H - PAD + 16.0,
        r = W - PAD
    );
    for (k, (label, points)) in lines.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let path: Vec<String> = points.iter().map(|&(t, v)| format!("{:.1},{:.1}", x(t), y(v))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            path.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="{lx}" y="{ly}" fill="{color}">{label}</text>"#,
            lx = PAD + 8.0,
            ly = PAD + 14.0 * (k as f64 + 1.0)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::ledger::{Link, Reason, TransferRecord};
    use crate::sim::{LatencyReport, RunSummary};

    fn summary(label: &str) -> RunSummary {
        RunSummary {
            scheduler: label.into(),
            max_drop_pct: 12.345,
            final_normalized_accuracy: 0.98,
            final_accuracy_diff_pct: -2.0,
            latency: LatencyReport {
                events: vec![],
                average_s: None,
            },
            uplink_bytes: 10,
            downlink_bytes: 20,
            fl_bytes: 30,
            deployments: 1,
            uploads: 0,
            instability_flags: 0,
            drift_triggers: 0,
        }
    }

    #[test]
    fn summary_csv_quotes_labels() {
        let csv = summary_csv(&[summary("fixed(300,350)")]);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), SUMMARY_HEADER.join(","));
        assert_eq!(lines.next().unwrap(), "\"fixed(300,350)\",12.35,-2.00,undetected,10,20,30");
    }

    #[test]
    fn table_has_one_line_per_run() {
        let t = summary_table(&[summary("flare"), summary("none")]);
        assert_eq!(t.lines().count(), 4);
        assert!(t.lines().next().unwrap().starts_with("scheduler"));
    }

    #[test]
    fn ledger_rows_leave_sensor_blank_for_fl() {
        let mut l = CommLedger::default();
        l.append(TransferRecord {
            time_s: 5,
            link: Link::Fl,
            bytes: 7,
            reason: Reason::Aggregate,
            client: 1,
            sensor: None,
        })
        .unwrap();
        assert_eq!(ledger_csv(&l).lines().nth(1).unwrap(), "5,fl,7,aggregate,1,");
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        write_atomic(&p, "one").unwrap();
        write_atomic(&p, "two").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
