//! On-disk formats: the population file, experiment reports and the flat
//! CSV emissions. All floats in CSV are written with 17 significant
//! digits so files are diffable and every number round-trips exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use flmarket_core::model::{ClientOutcome, ClientProfile, GameSolution};
use flmarket_core::population::PopulationSpec;
use flmarket_core::SystemConfig;

use crate::errors::CliError;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Serialized population with full provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PopulationFile {
    pub version: String,
    pub seed: u64,
    pub spec: PopulationSpec,
    pub clients: Vec<ClientProfile>,
}

impl PopulationFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        let file: PopulationFile = serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        file.spec
            .validate()
            .map_err(|e| CliError::Input(e.to_string()))?;
        for c in &file.clients {
            c.validate().map_err(|e| CliError::Input(e.to_string()))?;
        }
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Failure(format!("serialization: {e}")))?;
        text.push('\n');
        std::fs::write(path, text)
            .map_err(|e| CliError::Failure(format!("cannot write {}: {e}", path.display())))?;
        Ok(())
    }

    pub fn digest(&self) -> String {
        population_digest(&self.clients)
    }
}

/// Hex SHA-256 over the canonical serialization of the client list.
pub fn population_digest(clients: &[ClientProfile]) -> String {
    let json = serde_json::to_string(clients).expect("client profiles always serialize");
    let mut hasher = Sha256::new();
    hasher.update(json.as_bytes());
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

/// One solved game.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    /// Selection seed of the run (meaningful for seeded algorithms).
    pub seed: u64,
    pub population_seed: u64,
    pub population_digest: String,
    pub selected: Vec<u32>,
    pub q: f64,
    pub t: f64,
    pub gamma: f64,
    pub total_payment: f64,
    pub outcomes: Vec<ClientOutcome>,
}

impl RunRecord {
    pub fn from_solution(
        solution: &GameSolution,
        candidates: &[ClientProfile],
        sys: &SystemConfig,
        seed: u64,
        population_seed: u64,
        population_digest: String,
    ) -> Result<Self, CliError> {
        let gamma = flmarket_core::model::gamma_bound(
            solution.selected_data(candidates),
            sys.global_rounds,
        )?;
        Ok(Self {
            seed,
            population_seed,
            population_digest,
            selected: solution.selected.iter().map(|id| id.0).collect(),
            q: solution.ps_utility,
            t: solution.system_latency,
            gamma,
            total_payment: solution.total_payment(),
            outcomes: solution.outcomes.clone(),
        })
    }

    /// Population variance of the participating clients' utilities.
    pub fn utility_variance(&self) -> f64 {
        let us: Vec<f64> = self
            .outcomes
            .iter()
            .filter(|o| o.participating)
            .map(|o| o.utility)
            .collect();
        if us.is_empty() {
            return 0.0;
        }
        let mean = us.iter().sum::<f64>() / us.len() as f64;
        us.iter().map(|u| (u - mean) * (u - mean)).sum::<f64>() / us.len() as f64
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Aggregate {
    pub runs: usize,
    pub mean_q: f64,
    pub std_q: f64,
    pub mean_t: f64,
    pub std_t: f64,
    pub mean_gamma: f64,
    pub mean_total_payment: f64,
    pub mean_utility_variance: f64,
}

impl Aggregate {
    pub fn over(runs: &[RunRecord]) -> Self {
        let n = runs.len().max(1) as f64;
        let mean = |f: &dyn Fn(&RunRecord) -> f64| runs.iter().map(f).sum::<f64>() / n;
        let mean_q = mean(&|r| r.q);
        let mean_t = mean(&|r| r.t);
        let sample_std = |vals: Vec<f64>, m: f64| {
            if vals.len() < 2 {
                0.0
            } else {
                (vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (vals.len() - 1) as f64)
                    .sqrt()
            }
        };
        Aggregate {
            runs: runs.len(),
            mean_q,
            std_q: sample_std(runs.iter().map(|r| r.q).collect(), mean_q),
            mean_t,
            std_t: sample_std(runs.iter().map(|r| r.t).collect(), mean_t),
            mean_gamma: mean(&|r| r.gamma),
            mean_total_payment: mean(&|r| r.total_payment),
            mean_utility_variance: mean(&|r| r.utility_variance()),
        }
    }
}

/// Per-algorithm report over one or more runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub version: String,
    pub algo: String,
    pub n0: usize,
    pub system: SystemConfig,
    pub runs: Vec<RunRecord>,
    pub aggregate: Aggregate,
}

impl ExperimentReport {
    pub fn new(
        experiment: impl Into<String>,
        algo: impl Into<String>,
        n0: usize,
        system: SystemConfig,
        runs: Vec<RunRecord>,
    ) -> Self {
        let aggregate = Aggregate::over(&runs);
        Self {
            experiment: experiment.into(),
            version: TOOL_VERSION.to_string(),
            algo: algo.into(),
            n0,
            system,
            runs,
            aggregate,
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        save_reports(std::slice::from_ref(self), path)
    }
}

pub fn save_reports(reports: &[ExperimentReport], path: &Path) -> Result<(), CliError> {
    let mut text = if reports.len() == 1 {
        serde_json::to_string_pretty(&reports[0])
    } else {
        serde_json::to_string_pretty(reports)
    }
    .map_err(|e| CliError::Failure(format!("serialization: {e}")))?;
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|e| CliError::Failure(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

/// 17 significant digits, '.' decimal separator, round-trip exact.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub const RUN_CSV_HEADER: [&str; 14] = [
    "experiment",
    "seed",
    "algo",
    "n0",
    "client_id",
    "selected",
    "alpha",
    "freq_hz",
    "latency_s",
    "utility",
    "payment",
    "Q",
    "T",
    "Gamma",
];

/// One CSV row per candidate client of one run.
pub fn run_csv_rows(
    experiment: &str,
    algo: &str,
    n0: usize,
    record: &RunRecord,
) -> Vec<Vec<String>> {
    record
        .outcomes
        .iter()
        .map(|o| {
            vec![
                experiment.to_string(),
                record.seed.to_string(),
                algo.to_string(),
                n0.to_string(),
                o.client_id.0.to_string(),
                o.participating.to_string(),
                fmt_f64(o.price),
                fmt_f64(o.frequency),
                fmt_f64(o.latency),
                fmt_f64(o.utility),
                fmt_f64(o.payment),
                fmt_f64(record.q),
                fmt_f64(record.t),
                fmt_f64(record.gamma),
            ]
        })
        .collect()
}

/// RFC-4180 CSV: CRLF rows, UTF-8, header first.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_path(path)
        .map_err(|e| CliError::Failure(format!("cannot write {}: {e}", path.display())))?;
    writer
        .write_record(header)
        .map_err(|e| CliError::Failure(format!("csv: {e}")))?;
    for row in rows {
        writer
            .write_record(row)
            .map_err(|e| CliError::Failure(format!("csv: {e}")))?;
    }
    writer
        .flush()
        .map_err(|e| CliError::Failure(format!("csv: {e}")))?;
    Ok(())
}
