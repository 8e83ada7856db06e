use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub eval_every: usize,
    /// Radius of the Euclidean ball parameters are projected onto.
    pub projection_radius: Option<f64>,
    pub record_grad_norms: bool,
}

impl TrainConfig {
    pub fn new(iterations: usize, batch_size: usize, learning_rate: f64, seed: u64) -> Self {
        Self {
            iterations,
            batch_size,
            learning_rate,
            seed,
            eval_every: (iterations / 20).max(1),
            projection_radius: None,
            record_grad_norms: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::invalid("batch_size and eval_every must be positive"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(
                "learning rate must be finite and non-negative",
            ));
        }
        if let Some(b) = self.projection_radius {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::invalid("projection radius must be positive"));
            }
        }
        Ok(())
    }

    /// Seed for held-out evaluation data.
    pub fn eval_seed(&self) -> u64 {
        self.seed.wrapping_add(EVAL_SEED_OFFSET)
    }

    /// True at iterations where a series point is recorded.
    pub fn is_checkpoint(&self, iteration: usize) -> bool {
        iteration % self.eval_every == 0 || iteration == self.iterations
    }
}

pub const EVAL_SEED_OFFSET: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub iteration: usize,
    pub train_loss: f64,
    pub eval_metric: f64,
    pub grad_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Diverged { iteration: usize, reason: String },
}

/// Everything a run leaves behind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub config: TrainConfig,
    pub status: RunStatus,
    pub series: Vec<SeriesPoint>,
    pub final_params_digest: String,
    pub wall_time_secs: f64,
    /// Named scalar results beyond the series.
    pub metrics: BTreeMap<String, f64>,
}

impl RunRecord {
    pub fn new(run_id: impl Into<String>, config: TrainConfig) -> Self {
        Self {
            run_id: run_id.into(),
            config,
            status: RunStatus::Completed,
            series: Vec::new(),
            final_params_digest: String::new(),
            wall_time_secs: 0.0,
            metrics: BTreeMap::new(),
        }
    }

    pub fn diverged(&self) -> bool {
        matches!(self.status, RunStatus::Diverged { .. })
    }

    pub fn push(&mut self, point: SeriesPoint) -> Result<()> {
        if let Some(last) = self.series.last() {
            if point.iteration <= last.iteration {
                return Err(Error::invalid(format!(
                    "series iteration {} does not follow {}",
                    point.iteration, last.iteration
                )));
            }
        }
        self.series.push(point);
        Ok(())
    }

    pub fn last(&self) -> Option<&SeriesPoint> {
        self.series.last()
    }

    /// Eval metric at the last checkpoint not after `iteration`.
    pub fn eval_at(&self, iteration: usize) -> Option<f64> {
        self.series
            .iter()
            .take_while(|p| p.iteration <= iteration)
            .last()
            .map(|p| p.eval_metric)
    }

    /// First checkpoint whose eval metric satisfies `pred`.
    pub fn first_reaching(&self, pred: impl Fn(f64) -> bool) -> Option<usize> {
        self.series
            .iter()
            .find(|p| pred(p.eval_metric))
            .map(|p| p.iteration)
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    /// Writes `metrics.csv` and `summary.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("metrics.csv"))?;
        w.write_record(["iteration", "train_loss", "eval_metric", "grad_norm"])?;
        for p in &self.series {
            w.write_record([
                p.iteration.to_string(),
                p.train_loss.to_string(),
                p.eval_metric.to_string(),
                p.grad_norm.map(|g| g.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        std::fs::write(
            dir.join("summary.json"),
            serde_json::to_string_pretty(self)?,
        )?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join("summary.json"))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// `(iteration, eval_metric)` pairs from a `metrics.csv` file.
pub fn read_metrics_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Malformed(format!("{} lacks a {name} column", path.display())))
    };
    let (it, ev) = (col("iteration")?, col("eval_metric")?);
    let mut out = Vec::new();
    for row in r.records() {
        let row = row?;
        let parse = |i: usize| -> Result<f64> {
            row.get(i)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Malformed(format!("bad number in {}", path.display())))
        };
        out.push((parse(it)?, parse(ev)?));
    }
    Ok(out)
}
