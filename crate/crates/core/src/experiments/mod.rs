//! The five experiment families, their sweep specs and on-disk layout.
//!
//! Every run writes `<out>/<family>/<run-id>/{metrics.csv,summary.json}`
//! plus family-specific SVGs; each family writes `<out>/<family>/manifest.json`
//! holding the full spec, so a sweep can be replayed from its manifest.

mod flat;
mod parity;
mod pwl;
mod stocks;
mod tuples;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plot::{Plot, Series};
use crate::trainers::{RunRecord, RunStatus};

pub use flat::{
    adjacent_error_share, run_flat, FlatOutcome, FlatRun, FlatSpec, FlatTeacher, FlatVariant,
};
pub use parity::{run_parity, sign_accuracy, ParityOutcome, ParityRun, ParitySpec};
pub use pwl::{run_pwl, PwlOutcome, PwlRun, PwlSpec, PwlVariant, Snapshot};
pub use stocks::{run_stocks, StocksApproach, StocksOutcome, StocksRun, StocksSpec};
pub use tuples::{run_tuples, Approach, TupleModel, TuplesOutcome, TuplesRun, TuplesSpec};

/// One sweep of one family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ExperimentSpec {
    Parity(ParitySpec),
    Tuples(TuplesSpec),
    Pwl(PwlSpec),
    Flat(FlatSpec),
    Stocks(StocksSpec),
}

impl ExperimentSpec {
    pub fn family(&self) -> &'static str {
        match self {
            ExperimentSpec::Parity(_) => "parity",
            ExperimentSpec::Tuples(_) => "tuples",
            ExperimentSpec::Pwl(_) => "pwl",
            ExperimentSpec::Flat(_) => "flat",
            ExperimentSpec::Stocks(_) => "stocks",
        }
    }
}

/// A named pass/fail check over an experiment's results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub run_id: String,
    pub dir: String,
    pub status: RunStatus,
    pub final_eval: Option<f64>,
    pub final_params_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: ExperimentSpec,
    pub runs: Vec<ManifestEntry>,
    pub checks: Vec<Check>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Results of any family.
#[derive(Debug, Clone)]
pub enum Outcome {
    Parity(ParityOutcome),
    Tuples(TuplesOutcome),
    Pwl(PwlOutcome),
    Flat(FlatOutcome),
    Stocks(StocksOutcome),
}

impl Outcome {
    pub fn records(&self) -> Vec<&RunRecord> {
        match self {
            Outcome::Parity(o) => o.runs.iter().map(|r| &r.record).collect(),
            Outcome::Tuples(o) => o.runs.iter().map(|r| &r.record).collect(),
            Outcome::Pwl(o) => o.runs.iter().map(|r| &r.record).collect(),
            Outcome::Flat(o) => o.runs.iter().map(|r| &r.record).collect(),
            Outcome::Stocks(o) => o.runs.iter().map(|r| &r.record).collect(),
        }
    }

    /// The family's acceptance checks, evaluated on whatever was run.
    pub fn checks(&self) -> Vec<Check> {
        match self {
            Outcome::Parity(o) => o.checks(),
            Outcome::Tuples(o) => o.checks(),
            Outcome::Pwl(o) => o.checks(),
            Outcome::Flat(o) => o.checks(),
            Outcome::Stocks(o) => o.checks(),
        }
    }

    pub fn any_diverged(&self) -> bool {
        self.records().iter().any(|r| r.diverged())
    }
}

/// Runs a spec with up to `jobs` concurrent sweep points and, when `out` is
/// given, writes every run directory and the family manifest.
pub fn run_experiment(spec: &ExperimentSpec, out: Option<&Path>, jobs: usize) -> Result<Outcome> {
    let outcome = match spec {
        ExperimentSpec::Parity(s) => Outcome::Parity(run_parity(s, jobs)?),
        ExperimentSpec::Tuples(s) => Outcome::Tuples(run_tuples(s, jobs)?),
        ExperimentSpec::Pwl(s) => Outcome::Pwl(run_pwl(s, jobs)?),
        ExperimentSpec::Flat(s) => Outcome::Flat(run_flat(s, jobs)?),
        ExperimentSpec::Stocks(s) => Outcome::Stocks(run_stocks(s, jobs)?),
    };
    if let Some(out) = out {
        write_outcome(spec, &outcome, out)?;
    }
    Ok(outcome)
}

fn write_outcome(spec: &ExperimentSpec, outcome: &Outcome, out: &Path) -> Result<()> {
    let family_dir = out.join(spec.family());
    let mut runs = Vec::new();
    for rec in outcome.records() {
        let dir = family_dir.join(&rec.run_id);
        rec.write(&dir)?;
        std::fs::write(dir.join("curve.svg"), metric_plot(rec).to_svg())?;
        runs.push(ManifestEntry {
            run_id: rec.run_id.clone(),
            dir: rec.run_id.clone(),
            status: rec.status.clone(),
            final_eval: rec.last().map(|p| p.eval_metric),
            final_params_digest: rec.final_params_digest.clone(),
        });
    }
    match outcome {
        Outcome::Pwl(o) => o.write_extras(&family_dir)?,
        Outcome::Flat(o) => o.write_extras(&family_dir)?,
        Outcome::Parity(o) => o.write_extras(&family_dir)?,
        Outcome::Tuples(o) => o.write_extras(&family_dir)?,
        Outcome::Stocks(o) => o.write_extras(&family_dir)?,
    }
    let manifest = Manifest {
        spec: spec.clone(),
        runs,
        checks: outcome.checks(),
    };
    std::fs::write(
        family_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

/// Eval metric against iteration for one run.
pub fn metric_plot(rec: &RunRecord) -> Plot {
    Plot::new(&rec.run_id, "iteration", "eval metric").with(Series::line(
        &rec.run_id,
        rec.series
            .iter()
            .map(|p| (p.iteration as f64, p.eval_metric))
            .collect(),
    ))
}

/// Eval metric curves of several runs on one chart.
pub fn comparison_plot(title: &str, y_label: &str, records: &[&RunRecord]) -> Plot {
    records
        .iter()
        .fold(Plot::new(title, "iteration", y_label), |p, rec| {
            p.with(Series::line(
                &rec.run_id,
                rec.series
                    .iter()
                    .map(|p| (p.iteration as f64, p.eval_metric))
                    .collect(),
            ))
        })
}

/// Maps `items` through `f` on a pool of `jobs` threads, preserving order.
pub(crate) fn par_map<I, T, F>(jobs: usize, items: Vec<I>, f: F) -> Result<Vec<T>>
where
    I: Send,
    T: Send,
    F: Fn(I) -> Result<T> + Sync + Send,
{
    if jobs <= 1 {
        return items.into_iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    pool.install(|| items.into_par_iter().map(f).collect())
}

pub(crate) fn write_svg(path: PathBuf, plot: &Plot) -> Result<()> {
    std::fs::write(path, plot.to_svg())?;
    Ok(())
}
