//! Scheduler x drop experiment matrices.
//!
//! Output directory layout:
//!
//! ```text
//! INCOMPLETE                      present until every file below is written
//! config.toml                     effective spec
//! <scheduler>/drop_<d>.json       per-drop summary
//! <scheduler>/drop_<d>.csv        per-TTI records, when requested
//! <scheduler>/aggregate.json      all drops merged
//! comparison.csv                  one row per scheduler, when requested
//! ```
//!
//! Every file depends only on the spec, never on `jobs` or timing.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use xrsched_core::engine::{drop_channel, run_drop_with, SimConfig, TtiRecord};
use xrsched_core::metrics::{jain_index, BoxStats, GoodputGroups, RunSummary};
use xrsched_core::scheduler::SchedulerKind;

use crate::config::{to_document, ExperimentSpec};
use crate::output::{write_atomic, write_atomic_with};
use crate::trace::{TraceError, TraceReader};

pub const RECORDS_VERSION: u32 = 1;
pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; 0 lets the pool pick.
    pub jobs: usize,
    /// Replays this trace in every drop instead of generating channels.
    pub trace: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{scheduler} drop {drop}: {source}")]
    Simulation {
        scheduler: &'static str,
        drop: u32,
        source: xrsched_core::Error,
    },
    #[error("{scheduler} drop {drop}: {source}")]
    Trace {
        scheduler: &'static str,
        drop: u32,
        source: TraceError,
    },
    #[error("thread pool: {0}")]
    Pool(String),
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Spread of a per-drop statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Spread {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub std: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DropReport {
    pub scheduler: &'static str,
    pub drop: u32,
    pub xr_capacity: f64,
    pub mean_paoi: f64,
    pub below_cap_fraction: f64,
    pub summary: RunSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub scheduler: &'static str,
    pub drops: usize,
    pub ttis: u64,
    pub xr_capacity: f64,
    /// Per-drop XR capacity spread.
    pub xr_capacity_per_drop: Spread,
    pub mean_paoi: f64,
    pub paoi_box: BoxStats,
    /// Delivered packets per UE.
    pub goodput: GoodputGroups,
    pub goodput_jain: f64,
    pub cosched_pmf: Vec<f64>,
    pub below_cap_fraction: f64,
    pub objective: f64,
    pub conserves_bits: bool,
    pub summary: RunSummary,
}

impl Aggregate {
    pub fn new(kind: SchedulerKind, drops: &[DropReport]) -> Self {
        let summary = RunSummary::merge_all(drops.iter().map(|d| d.summary.clone()))
            .expect("an experiment has at least one drop");
        let per_drop: Vec<f64> = drops.iter().map(|d| d.xr_capacity).collect();
        Self {
            scheduler: kind.name(),
            drops: drops.len(),
            ttis: summary.tti_count(),
            xr_capacity: summary.xr_capacity(),
            xr_capacity_per_drop: Spread::of(&per_drop),
            mean_paoi: summary.mean_paoi(),
            paoi_box: summary.paoi_box(),
            goodput: summary.goodput_groups(),
            goodput_jain: jain_index(&summary.goodput()),
            cosched_pmf: summary.cosched_pmf(),
            below_cap_fraction: summary.below_cap_fraction(),
            objective: summary.objective_value(),
            conserves_bits: summary.conserves_bits(),
            summary,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    /// In the order of `spec.schedulers`.
    pub aggregates: Vec<Aggregate>,
    pub drops: Vec<Vec<DropReport>>,
}

impl ExperimentReport {
    pub fn aggregate(&self, kind: SchedulerKind) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.scheduler == kind.name())
    }

    pub fn drops_of(&self, kind: SchedulerKind) -> Option<&[DropReport]> {
        self.aggregates
            .iter()
            .position(|a| a.scheduler == kind.name())
            .map(|i| self.drops[i].as_slice())
    }
}

const COMPARISON_HEADER: &str = "scheduler,drops,ttis,xr_capacity,xr_min,xr_max,xr_std,mean_paoi,median_paoi,\
top95_goodput,bottom5_goodput,bottom10_goodput,goodput_jain,below_cap_fraction,objective";

/// Side-by-side CSV of the aggregates.
pub fn comparison_csv(aggregates: &[Aggregate]) -> String {
    let mut out = String::from(COMPARISON_HEADER);
    out.push('\n');
    for a in aggregates {
        let x = &a.xr_capacity_per_drop;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            a.scheduler,
            a.drops,
            a.ttis,
            a.xr_capacity,
            x.min,
            x.max,
            x.std,
            a.mean_paoi,
            a.paoi_box.median,
            a.goodput.top95.arithmetic,
            a.goodput.bottom5.arithmetic,
            a.goodput.bottom10.arithmetic,
            a.goodput_jain,
            a.below_cap_fraction,
            a.objective,
        ));
    }
    out
}

/// Human-readable version of [`comparison_csv`].
pub fn comparison_table(aggregates: &[Aggregate]) -> String {
    let mut out = format!(
        "{:<11} {:>6} {:>15} {:>9} {:>9} {:>9} {:>9}\n",
        "scheduler", "xr", "xr per drop", "PAoI", "top95", "bottom10", "below"
    );
    for a in aggregates {
        let x = &a.xr_capacity_per_drop;
        out.push_str(&format!(
            "{:<11} {:>6.3} {:>7.2}..{:<6.2} {:>9.2} {:>9.1} {:>9.1} {:>9.3}\n",
            a.scheduler,
            a.xr_capacity,
            x.min,
            x.max,
            a.mean_paoi,
            a.goodput.top95.arithmetic,
            a.goodput.bottom10.arithmetic,
            a.below_cap_fraction,
        ));
    }
    out
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(";")
}

fn bits(v: &[bool]) -> String {
    v.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

const RECORD_COLUMNS: &str = "tti,q_sum,cosched,ue_cap,max_feasible,age,weighted_age,weight,q_avg,\
lambda,bsr,q,scheduled,s,tb_bits,delivered,expired,expired_bits,phi";

/// One CSV line per TTI; per-UE columns are `;`-joined lists and flag
/// columns are `0`/`1` strings indexed by UE.
pub fn record_line(r: &TtiRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        r.tti,
        r.q_sum,
        r.cosched,
        r.ue_cap,
        r.max_feasible,
        join(&r.age),
        join(&r.weighted_age),
        join(&r.weight),
        join(&r.q_avg),
        join(&r.lambda),
        join(&r.bsr),
        join(&r.q),
        bits(&r.scheduled),
        bits(&r.s),
        join(&r.tb_bits),
        bits(&r.delivered),
        bits(&r.expired),
        join(&r.expired_bits),
        bits(&r.phi),
    )
}

struct Job {
    kind: SchedulerKind,
    drop: u32,
}

fn run_job(spec: &ExperimentSpec, opts: &RunOptions, job: &Job) -> Result<DropReport, ExperimentError> {
    let mut cfg: SimConfig = spec.base.clone();
    cfg.scheduler.kind = job.kind;
    let scheduler = job.kind.name();
    let dir = spec.output_dir.join(scheduler);
    let sim_err = |source| ExperimentError::Simulation {
        scheduler,
        drop: job.drop,
        source,
    };

    let simulate = |sink: &mut dyn FnMut(&TtiRecord)| -> Result<RunSummary, ExperimentError> {
        match &opts.trace {
            Some(path) => {
                let reader = TraceReader::open(path, &cfg).map_err(|source| ExperimentError::Trace {
                    scheduler,
                    drop: job.drop,
                    source,
                })?;
                run_drop_with(&cfg, job.drop, reader, sink).map_err(sim_err)
            }
            None => run_drop_with(&cfg, job.drop, drop_channel(&cfg, job.drop), sink).map_err(sim_err),
        }
    };

    let summary = if spec.emit_tti_records {
        let path = dir.join(format!("drop_{:03}.csv", job.drop));
        let mut outcome = None;
        let written = write_atomic_with(&path, |w| -> io::Result<()> {
            writeln!(
                w,
                "# xrsched tti-records v{RECORDS_VERSION} scheduler={scheduler} drop={} n_ues={}",
                job.drop, cfg.n_ues
            )?;
            writeln!(w, "{RECORD_COLUMNS}")?;
            let mut failed = None;
            let result = simulate(&mut |r| {
                if failed.is_none() {
                    if let Err(e) = writeln!(w, "{}", record_line(r)) {
                        failed = Some(e);
                    }
                }
            });
            let ok = result.is_ok();
            outcome = Some(result);
            match failed {
                Some(e) => Err(e),
                None if ok => Ok(()),
                None => Err(io::Error::other("simulation failed")),
            }
        });
        match (outcome, written) {
            (Some(Err(e)), _) => return Err(e),
            (_, Err(e)) => return Err(io_at(&path)(e)),
            (Some(Ok(s)), Ok(())) => s,
            (None, Ok(())) => unreachable!("the writer ran the simulation"),
        }
    } else {
        simulate(&mut |_| {})?
    };

    let report = DropReport {
        scheduler,
        drop: job.drop,
        xr_capacity: summary.xr_capacity(),
        mean_paoi: summary.mean_paoi(),
        below_cap_fraction: summary.below_cap_fraction(),
        summary,
    };
    write_json(&dir.join(format!("drop_{:03}.json", job.drop)), &report)?;
    Ok(report)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExperimentError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("reports serialize");
    bytes.push(b'\n');
    write_atomic(path, &bytes).map_err(io_at(path))
}

/// Runs every scheduler on every drop and writes the output directory.
///
/// On failure the `INCOMPLETE` marker is left in place and holds the error.
pub fn run_experiment(spec: &ExperimentSpec, opts: &RunOptions) -> Result<ExperimentReport, ExperimentError> {
    let out = &spec.output_dir;
    fs::create_dir_all(out).map_err(io_at(out))?;
    let marker = out.join(INCOMPLETE_MARKER);
    fs::write(&marker, "run in progress\n").map_err(io_at(&marker))?;

    match run_inner(spec, opts) {
        Ok(report) => {
            fs::remove_file(&marker).map_err(io_at(&marker))?;
            Ok(report)
        }
        Err(e) => {
            let _ = fs::write(&marker, format!("run failed: {e}\n"));
            Err(e)
        }
    }
}

fn run_inner(spec: &ExperimentSpec, opts: &RunOptions) -> Result<ExperimentReport, ExperimentError> {
    let out = &spec.output_dir;
    let config_path = out.join("config.toml");
    write_atomic(&config_path, to_document(spec).as_bytes()).map_err(io_at(&config_path))?;

    let jobs: Vec<Job> = spec
        .schedulers
        .iter()
        .flat_map(|&kind| (0..spec.base.drops).map(move |drop| Job { kind, drop }))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))?;
    let results: Vec<Result<DropReport, ExperimentError>> =
        pool.install(|| jobs.par_iter().map(|job| run_job(spec, opts, job)).collect());

    let mut drops: Vec<Vec<DropReport>> = spec.schedulers.iter().map(|_| Vec::new()).collect();
    for (job, result) in jobs.iter().zip(results) {
        let k = spec.schedulers.iter().position(|&s| s == job.kind).expect("job scheduler is listed");
        drops[k].push(result?);
    }

    let mut aggregates = Vec::new();
    for (&kind, reports) in spec.schedulers.iter().zip(&drops) {
        let agg = Aggregate::new(kind, reports);
        write_json(&out.join(kind.name()).join("aggregate.json"), &agg)?;
        aggregates.push(agg);
    }
    if spec.compare {
        let path = out.join("comparison.csv");
        write_atomic(&path, comparison_csv(&aggregates).as_bytes()).map_err(io_at(&path))?;
    }
    Ok(ExperimentReport { aggregates, drops })
}
