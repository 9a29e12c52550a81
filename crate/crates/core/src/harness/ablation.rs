//! Ablation grids laid out like the published result tables.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::experiment::{run_experiment, EnvelopeSelection, ExperimentConfig, ModelKind, OutputMode};
use super::io::write_file;
use super::preprocess::PreprocessedRecord;
use super::HarnessError;
use crate::eval::MetricReport;
use crate::signal::{Polarity, WaveConfig};

pub const GRID_NAMES: [&str; 6] = ["table1", "table2", "table3", "table4", "table5", "table6"];

/// Rendering of a cell whose experiment failed.
pub const FAILED_CELL: &str = "×";

/// One varied setting and the values it takes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", content = "values", rename_all = "snake_case")]
pub enum Axis {
    WindowS(Vec<f64>),
    BatchSize(Vec<usize>),
    WaveConfig(Vec<WaveConfig>),
    EnvelopeSelection(Vec<EnvelopeSelection>),
    PolarityFilter(Vec<Polarity>),
    OutputMode(Vec<OutputMode>),
    Model(Vec<ModelKind>),
}

impl Axis {
    pub fn name(&self) -> &'static str {
        match self {
            Axis::WindowS(_) => "window_s",
            Axis::BatchSize(_) => "batch_size",
            Axis::WaveConfig(_) => "wave_config",
            Axis::EnvelopeSelection(_) => "envelope_selection",
            Axis::PolarityFilter(_) => "polarity_filter",
            Axis::OutputMode(_) => "output_mode",
            Axis::Model(_) => "model",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Axis::WindowS(v) => v.len(),
            Axis::BatchSize(v) => v.len(),
            Axis::WaveConfig(v) => v.len(),
            Axis::EnvelopeSelection(v) => v.len(),
            Axis::PolarityFilter(v) => v.len(),
            Axis::OutputMode(v) => v.len(),
            Axis::Model(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sets value `i` on `cfg` and returns its table label.
    fn apply(&self, i: usize, cfg: &mut ExperimentConfig) -> String {
        match self {
            Axis::WindowS(v) => {
                cfg.window_s = v[i];
                format!("{}", v[i])
            }
            Axis::BatchSize(v) => {
                cfg.batch_size = v[i];
                v[i].to_string()
            }
            Axis::WaveConfig(v) => {
                cfg.wave_config = v[i];
                v[i].label().into()
            }
            Axis::EnvelopeSelection(v) => {
                cfg.envelope_selection = v[i];
                v[i].label().into()
            }
            Axis::PolarityFilter(v) => {
                cfg.polarity_filter = v[i];
                v[i].label().into()
            }
            Axis::OutputMode(v) => {
                cfg.output_mode = v[i];
                v[i].label().into()
            }
            Axis::Model(v) => {
                cfg.model = v[i];
                v[i].label().into()
            }
        }
    }
}

/// Row axes nest left to right (the last varies fastest); the column axis
/// spreads across the table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub name: String,
    #[serde(default)]
    pub base: ExperimentConfig,
    pub rows: Vec<Axis>,
    pub columns: Axis,
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(HarnessError::InvalidConfig(format!("grid name {:?}", self.name)));
        }
        if self.rows.is_empty() || self.rows.iter().chain([&self.columns]).any(Axis::is_empty) {
            return Err(HarnessError::InvalidConfig("grid axes must be non-empty".into()));
        }
        let mut names: Vec<&str> = self.rows.iter().chain([&self.columns]).map(Axis::name).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(HarnessError::InvalidConfig("an axis appears twice".into()));
        }
        self.base.validate()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.iter().map(Axis::len).product()
    }

    pub fn n_cells(&self) -> usize {
        self.n_rows() * self.columns.len()
    }

    /// Configs in row-major table order with their row and column labels.
    pub fn cells(&self) -> Vec<(Vec<String>, String, ExperimentConfig)> {
        let mut out = Vec::with_capacity(self.n_cells());
        for r in 0..self.n_rows() {
            let mut cfg = self.base.clone();
            let mut rem = r;
            let mut idx = vec![0; self.rows.len()];
            for (k, axis) in self.rows.iter().enumerate().rev() {
                idx[k] = rem % axis.len();
                rem /= axis.len();
            }
            let labels: Vec<String> = self.rows.iter().zip(&idx).map(|(a, &i)| a.apply(i, &mut cfg)).collect();
            for c in 0..self.columns.len() {
                let mut cell = cfg.clone();
                let col = self.columns.apply(c, &mut cell);
                out.push((labels.clone(), col, cell));
            }
        }
        out
    }
}

const WAVES: [WaveConfig; 3] = [WaveConfig::EAPlus, WaveConfig::EAMinus, WaveConfig::Group];

/// The six published layouts, with every fixed setting taken from `base`
/// unless the table pins it.
pub fn grid_by_name(name: &str, base: &ExperimentConfig) -> Result<GridSpec, HarnessError> {
    let mut base = base.clone();
    let (rows, columns) = match name {
        "table1" => {
            base.wave_config = WaveConfig::Group;
            base.envelope_selection = EnvelopeSelection::Both;
            (
                vec![Axis::WindowS(vec![0.25, 0.5, 0.75, 1.0, 2.0])],
                Axis::BatchSize(vec![32, 64, 128, 256, 512]),
            )
        }
        "table2" => {
            base.batch_size = 128;
            base.envelope_selection = EnvelopeSelection::Both;
            (vec![Axis::WaveConfig(WAVES.to_vec())], Axis::WindowS(vec![0.75, 1.0, 2.0]))
        }
        "table3" => {
            base.window_s = 2.0;
            base.batch_size = 128;
            (
                vec![Axis::WaveConfig(WAVES.to_vec())],
                Axis::EnvelopeSelection(vec![
                    EnvelopeSelection::Upper,
                    EnvelopeSelection::Lower,
                    EnvelopeSelection::Both,
                ]),
            )
        }
        "table4" => {
            base.batch_size = 128;
            base.envelope_selection = EnvelopeSelection::Both;
            (
                vec![
                    Axis::PolarityFilter(vec![Polarity::Positive, Polarity::Negative, Polarity::Group]),
                    Axis::WaveConfig(WAVES.to_vec()),
                ],
                Axis::WindowS(vec![0.75, 2.0]),
            )
        }
        "table5" => {
            base.batch_size = 128;
            base.envelope_selection = EnvelopeSelection::Both;
            (
                vec![
                    Axis::OutputMode(vec![OutputMode::Original, OutputMode::PcaSingle]),
                    Axis::WaveConfig(WAVES.to_vec()),
                ],
                Axis::WindowS(vec![0.75, 2.0]),
            )
        }
        "table6" => {
            base.window_s = 0.75;
            base.batch_size = 128;
            base.envelope_selection = EnvelopeSelection::Both;
            (
                vec![Axis::Model(vec![
                    ModelKind::Linear,
                    ModelKind::Ridge,
                    ModelKind::Lasso,
                    ModelKind::PwDRecNet,
                ])],
                Axis::WaveConfig(WAVES.to_vec()),
            )
        }
        other => return Err(HarnessError::InvalidConfig(format!("unknown grid {other:?}"))),
    };
    Ok(GridSpec {
        name: name.to_string(),
        base,
        rows,
        columns,
    })
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub row_labels: Vec<String>,
    pub column_label: String,
    pub config: ExperimentConfig,
    pub outcome: Result<MetricReport, HarnessError>,
}

impl CellResult {
    pub fn rendered(&self) -> &str {
        match &self.outcome {
            Ok(r) => &r.rendered_r,
            Err(_) => FAILED_CELL,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AblationResult {
    pub grid: GridSpec,
    pub cells: Vec<CellResult>,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl AblationResult {
    /// Long format: one line per cell with every metric.
    pub fn results_csv(&self) -> String {
        let mut s = String::new();
        for a in &self.grid.rows {
            let _ = write!(s, "{},", a.name());
        }
        let _ = writeln!(s, "{},status,{}", self.grid.columns.name(), MetricReport::CSV_HEADER);
        for cell in &self.cells {
            for l in &cell.row_labels {
                let _ = write!(s, "{},", csv_field(l));
            }
            let _ = write!(s, "{},", csv_field(&cell.column_label));
            match &cell.outcome {
                Ok(r) => {
                    let _ = writeln!(s, "ok,{}", r.csv_row());
                }
                Err(e) => {
                    let _ = writeln!(s, "{},,{FAILED_CELL},,,,", e.kind());
                }
            }
        }
        s
    }

    /// The table as printed: row labels, then one rendered r per column.
    pub fn table_csv(&self) -> String {
        let mut s = String::new();
        let names: Vec<&str> = self.grid.rows.iter().map(Axis::name).collect();
        s.push_str(&names.join(","));
        let n_cols = self.grid.columns.len();
        for cell in self.cells.iter().take(n_cols) {
            let _ = write!(s, ",{}", csv_field(&cell.column_label));
        }
        s.push('\n');
        for row in self.cells.chunks(n_cols) {
            let labels: Vec<String> = row[0].row_labels.iter().map(|l| csv_field(l)).collect();
            s.push_str(&labels.join(","));
            for cell in row {
                let _ = write!(s, ",{}", csv_field(cell.rendered()));
            }
            s.push('\n');
        }
        s
    }

    /// Printed cells, failed ones included.
    pub fn n_printed_cells(&self) -> usize {
        self.cells.len()
    }

    /// `results.csv` and `<name>.csv` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        write_file(&dir.join("results.csv"), self.results_csv().as_bytes())?;
        write_file(&dir.join(format!("{}.csv", self.grid.name)), self.table_csv().as_bytes())
    }
}

/// Runs every cell; failures are recorded in place instead of aborting.
pub fn run_ablation(grid: &GridSpec, data: &[PreprocessedRecord]) -> Result<AblationResult, HarnessError> {
    grid.validate()?;
    let cells = grid
        .cells()
        .into_par_iter()
        .map(|(row_labels, column_label, config)| {
            let outcome = run_experiment(&config, data).map(|o| o.report);
            CellResult {
                row_labels,
                column_label,
                config,
                outcome,
            }
        })
        .collect();
    Ok(AblationResult {
        grid: grid.clone(),
        cells,
    })
}
