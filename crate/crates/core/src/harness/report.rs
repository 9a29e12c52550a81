//! CSV and SVG artifacts of an experiment.

use std::fmt::Write as _;
use std::path::Path;

use super::experiment::{EnvelopeSelection, ExperimentConfig, ExperimentOutcome, OutputMode};
use super::io::write_file;
use super::HarnessError;
use crate::eval::MetricReport;
use crate::nn::EpochLog;

/// Names of the target channels, in model output order.
pub fn channel_names(config: &ExperimentConfig) -> Vec<&'static str> {
    match (config.output_mode, config.envelope_selection) {
        (OutputMode::PcaSingle, _) => vec!["pca"],
        (_, EnvelopeSelection::Upper) => vec!["upper"],
        (_, EnvelopeSelection::Lower) => vec!["lower"],
        (_, EnvelopeSelection::Both) => vec!["upper", "lower"],
    }
}

pub fn metrics_csv(report: &MetricReport) -> String {
    format!("{}\n{}\n", MetricReport::CSV_HEADER, report.csv_row())
}

pub fn log_csv(log: &[EpochLog]) -> String {
    let mut s = String::from("epoch,train_loss,val_loss\n");
    for l in log {
        let val = l.val_loss.map(|v| format!("{v:.8}")).unwrap_or_default();
        let _ = writeln!(s, "{},{:.8},{}", l.epoch, l.train_loss, val);
    }
    s
}

/// One row per sample of every test window.
pub fn predictions_csv(outcome: &ExperimentOutcome) -> String {
    let names = channel_names(&outcome.config);
    let mut s = String::from("window,record_id,time_s,fecg");
    for n in &names {
        let _ = write!(s, ",true_{n}");
    }
    for n in &names {
        let _ = write!(s, ",pred_{n}");
    }
    s.push('\n');
    let fs = crate::signal::TARGET_FS;
    for (w, (win, pred)) in outcome.test.iter().zip(&outcome.predictions).enumerate() {
        for i in 0..win.len() {
            let _ = write!(s, "{w},{},{:.6},{:.6}", win.record_id, win.t_start + i as f64 / fs, win.x[i]);
            for ch in &win.y {
                let _ = write!(s, ",{:.6}", ch[i]);
            }
            for ch in pred {
                let _ = write!(s, ",{:.6}", ch[i]);
            }
            s.push('\n');
        }
    }
    s
}

/// A stacked line-plot panel.
#[derive(Debug, Clone)]
pub struct Panel {
    pub title: String,
    /// (legend label, stroke colour, samples)
    pub series: Vec<(String, &'static str, Vec<f64>)>,
}

const PANEL_W: f64 = 720.0;
const PANEL_H: f64 = 140.0;
const MARGIN: f64 = 30.0;

/// Panels share the horizontal axis; each is scaled to its own range.
pub fn svg_plot(panels: &[Panel], x_step: f64) -> String {
    let height = panels.len() as f64 * (PANEL_H + MARGIN) + MARGIN;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"11\">\n",
        PANEL_W + 2.0 * MARGIN
    );
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    for (p, panel) in panels.iter().enumerate() {
        let top = MARGIN + p as f64 * (PANEL_H + MARGIN);
        let _ = writeln!(
            s,
            "<rect x=\"{MARGIN}\" y=\"{top}\" width=\"{PANEL_W}\" height=\"{PANEL_H}\" fill=\"none\" stroke=\"#999\"/>"
        );
        let _ = writeln!(s, "<text x=\"{MARGIN}\" y=\"{}\">{}</text>", top - 6.0, escape(&panel.title));
        let all = panel.series.iter().flat_map(|(_, _, v)| v.iter().copied());
        let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let span = if hi > lo { hi - lo } else { 1.0 };
        let n_max = panel.series.iter().map(|(_, _, v)| v.len()).max().unwrap_or(0);
        let dx = if n_max > 1 { PANEL_W / (n_max - 1) as f64 } else { 0.0 };
        for (k, (label, colour, values)) in panel.series.iter().enumerate() {
            let pts: Vec<String> = values
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let x = MARGIN + i as f64 * dx;
                    let y = top + PANEL_H - (v - lo) / span * PANEL_H;
                    format!("{x:.2},{y:.2}")
                })
                .collect();
            let _ = writeln!(
                s,
                "<polyline fill=\"none\" stroke=\"{colour}\" stroke-width=\"1.2\" points=\"{}\"/>",
                pts.join(" ")
            );
            let _ = writeln!(
                s,
                "<text x=\"{}\" y=\"{}\" fill=\"{colour}\">{}</text>",
                MARGIN + PANEL_W - 120.0,
                top + 14.0 + 13.0 * k as f64,
                escape(label)
            );
        }
        let duration = (n_max.max(1) - 1) as f64 * x_step;
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{duration:.2} s</text>",
            MARGIN + PANEL_W,
            top + PANEL_H + 12.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// fECG on top, then true and predicted curves per target channel, for one
/// test window.
pub fn window_plot(outcome: &ExperimentOutcome, index: usize) -> Option<String> {
    let win = outcome.test.get(index)?;
    let pred = outcome.predictions.get(index)?;
    let mut panels = vec![Panel {
        title: format!("fECG ({} at {:.2} s)", win.record_id, win.t_start),
        series: vec![("fECG".into(), "#333333", win.x.clone())],
    }];
    for ((name, truth), p) in channel_names(&outcome.config).iter().zip(&win.y).zip(pred) {
        panels.push(Panel {
            title: format!("{name} envelope"),
            series: vec![
                ("ground truth".into(), "#1f77b4", truth.clone()),
                ("predicted".into(), "#d62728", p.clone()),
            ],
        });
    }
    Some(svg_plot(&panels, 1.0 / crate::signal::TARGET_FS))
}

/// metrics.csv, train_log.csv, predictions.csv, plot.svg and config.json.
pub fn write_experiment_artifacts(outcome: &ExperimentOutcome, dir: &Path) -> Result<(), HarnessError> {
    write_file(&dir.join("metrics.csv"), metrics_csv(&outcome.report).as_bytes())?;
    write_file(&dir.join("train_log.csv"), log_csv(&outcome.log).as_bytes())?;
    write_file(&dir.join("predictions.csv"), predictions_csv(outcome).as_bytes())?;
    if let Some(svg) = window_plot(outcome, 0) {
        write_file(&dir.join("plot.svg"), svg.as_bytes())?;
    }
    write_file(
        &dir.join("config.json"),
        serde_json::to_string_pretty(&outcome.config)?.as_bytes(),
    )
}
