//! Timed trials and seeded ensembles run on a bounded worker pool.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use sparsense_core::bench::{run_pipeline, split_for_trial, summarize, PipelineKind, PipelineSpec, Summary};
use sparsense_core::snapshots::{SnapshotMatrix, SplitStrategy};

use crate::artifacts::{hex, SensorsFile};
use crate::error::{Error, Result};
use crate::formats::{write_bytes, write_json};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialReport {
    pub pipeline: PipelineKind,
    pub n_sensors: usize,
    pub trial: usize,
    pub seed: u64,
    pub spec_fingerprint: String,
    pub sensor_set: SensorsFile,
    pub relative_error: f64,
    pub per_sample_errors: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_condition: Option<f64>,
    /// Seconds; the only field that varies between identical reruns.
    pub wall_time: f64,
    #[serde(skip)]
    pub example_reconstruction: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialFailure {
    pub pipeline: PipelineKind,
    pub n_sensors: usize,
    pub trial: usize,
    pub seed: u64,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub pipeline: PipelineKind,
    pub n_sensors: usize,
    #[serde(flatten)]
    pub summary: Summary,
}

/// One unit of work: a fully specified pipeline run. `spec.seed` is the
/// trial's master seed and also fixes its train/test split.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialJob {
    pub spec: PipelineSpec,
    pub trial: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitPlan {
    pub train_count: usize,
    pub strategy: SplitStrategy,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnsembleResult {
    /// Successful trials in job order.
    pub reports: Vec<TrialReport>,
    pub failures: Vec<TrialFailure>,
    /// One row per `(pipeline, n_sensors)` in order of first appearance.
    pub summaries: Vec<SummaryRow>,
}

/// Runs one pipeline on an existing split and times it.
pub fn run_trial(spec: &PipelineSpec, train: &SnapshotMatrix, test: &SnapshotMatrix, trial: usize) -> Result<TrialReport> {
    let start = Instant::now();
    let out = run_pipeline(spec, train, test)?;
    let wall_time = start.elapsed().as_secs_f64();
    Ok(TrialReport {
        pipeline: out.kind,
        n_sensors: out.n_sensors,
        trial,
        seed: out.seed,
        spec_fingerprint: hex(out.spec_fingerprint),
        sensor_set: SensorsFile {
            indices: out.sensors.indices().to_vec(),
            m: out.sensors.m(),
            method: out.sensors.method(),
            seed: out.sensors.seed(),
            coordinates: None,
        },
        relative_error: out.relative_error,
        per_sample_errors: out.per_sample_errors,
        max_condition: out.max_condition,
        wall_time,
        example_reconstruction: out.example_reconstruction,
    })
}

fn run_job(data: &SnapshotMatrix, job: &TrialJob, split: SplitPlan) -> Result<TrialReport> {
    let (train, test) = split_for_trial(data, split.train_count, split.strategy, job.spec.seed)?;
    run_trial(&job.spec, &train, &test, job.trial)
}

/// Callback invoked as each trial finishes, from the worker that ran it.
pub type Progress = dyn Fn(&TrialJob, &Result<TrialReport>) + Sync;

/// Runs every job on a pool of `workers` threads (0: one per core) and
/// reduces the results sequentially in job order. A failed trial is
/// recorded and left out of its summary.
pub fn run_ensemble(
    data: &SnapshotMatrix,
    jobs: &[TrialJob],
    split: SplitPlan,
    workers: usize,
    progress: Option<&Progress>,
) -> Result<EnsembleResult> {
    if jobs.is_empty() {
        return Err(Error::Config("an ensemble needs at least one trial".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let outcomes: Vec<Result<TrialReport>> = pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let r = run_job(data, job, split);
                if let Some(cb) = progress {
                    cb(job, &r);
                }
                r
            })
            .collect()
    });

    let mut result = EnsembleResult::default();
    let mut groups: Vec<(PipelineKind, usize, Vec<f64>, usize)> = Vec::new();
    for (job, outcome) in jobs.iter().zip(outcomes) {
        let key = (job.spec.kind, job.spec.n_sensors);
        let idx = match groups.iter().position(|g| (g.0, g.1) == key) {
            Some(i) => i,
            None => {
                groups.push((key.0, key.1, Vec::new(), 0));
                groups.len() - 1
            }
        };
        match outcome {
            Ok(report) => {
                groups[idx].2.push(report.relative_error);
                result.reports.push(report);
            }
            Err(e) => {
                groups[idx].3 += 1;
                result.failures.push(TrialFailure {
                    pipeline: key.0,
                    n_sensors: key.1,
                    trial: job.trial,
                    seed: job.spec.seed,
                    kind: e.kind().to_string(),
                    message: e.to_string(),
                });
            }
        }
    }
    result.summaries = groups
        .into_iter()
        .map(|(pipeline, n_sensors, values, failures)| SummaryRow {
            pipeline,
            n_sensors,
            summary: summarize(&values, failures),
        })
        .collect();
    Ok(result)
}

pub fn trials_csv(reports: &[TrialReport]) -> String {
    let mut out = String::from("pipeline,n_sensors,seed,re,wall_time\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{:?},{:.6}",
            r.pipeline.as_str(),
            r.n_sensors,
            r.seed,
            r.relative_error,
            r.wall_time
        );
    }
    out
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("pipeline,n_sensors,trials,failures,mean_re,std_re,stderr_re,min_re,max_re\n");
    for row in rows {
        let s = &row.summary;
        let _ = writeln!(
            out,
            "{},{},{},{},{:?},{:?},{:?},{:?},{:?}",
            row.pipeline.as_str(),
            row.n_sensors,
            s.count,
            s.failures,
            s.mean,
            s.std,
            s.std_err,
            s.min,
            s.max
        );
    }
    out
}

pub fn failures_csv(failures: &[TrialFailure]) -> String {
    let mut out = String::from("pipeline,n_sensors,trial,seed,kind,message\n");
    for f in failures {
        let msg = f.message.replace('"', "\"\"");
        let _ = writeln!(out, "{},{},{},{},{},\"{msg}\"", f.pipeline.as_str(), f.n_sensors, f.trial, f.seed, f.kind);
    }
    out
}

/// Writes `trials.csv`, `trials.json`, `summary.csv` and, when any trial
/// failed, `failures.csv` into `dir`.
pub fn write_ensemble(dir: &Path, result: &EnsembleResult) -> Result<()> {
    write_bytes(&dir.join("trials.csv"), trials_csv(&result.reports).as_bytes())?;
    write_json(&dir.join("trials.json"), &result.reports)?;
    write_bytes(&dir.join("summary.csv"), summary_csv(&result.summaries).as_bytes())?;
    if !result.failures.is_empty() {
        write_bytes(&dir.join("failures.csv"), failures_csv(&result.failures).as_bytes())?;
    }
    Ok(())
}
