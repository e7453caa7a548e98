//! Multi-seed experiments and their aggregation.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::data::{
    load_femnist_json, load_idx, partition_by_writer, partition_iid, pool_writers, FederatedDataset, RawDataset,
    WriterDataset,
};
use crate::error::{Error, Result};
use crate::matrix::ParamMatrix;
use crate::model::LocalLoss;
use crate::optimizer::Trainer;

use super::config::{parse_config, DatasetSource, ExperimentConfig, RESOLVED_CONFIG};
use super::metrics::{cumulative_epsilon, evaluate_test_error, MetricsRow, RunMetrics};

pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const BEST_FILE: &str = "best.csv";

/// `run_seed{seed}.csv`.
pub fn run_file_name(seed: u64) -> String {
    format!("run_seed{seed}.csv")
}

fn find_idx(dir: &Path, stem: &str) -> Result<PathBuf> {
    for name in [stem.to_string(), format!("{stem}.gz")] {
        let p = dir.join(name);
        if p.is_file() {
            return Ok(p);
        }
    }
    Err(Error::Unavailable(format!("{} has no {stem}[.gz]", dir.display())))
}

fn align_classes(a: RawDataset, b: RawDataset) -> Result<(RawDataset, RawDataset)> {
    let k = a.num_classes().max(b.num_classes());
    Ok((a.with_num_classes(k)?, b.with_num_classes(k)?))
}

/// Loads and splits the data named by `cfg`.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<FederatedDataset> {
    match &cfg.dataset {
        DatasetSource::Mnist { dir } => {
            let mut train = load_idx(
                &find_idx(dir, "train-images-idx3-ubyte")?,
                &find_idx(dir, "train-labels-idx1-ubyte")?,
            )?;
            let mut test = load_idx(
                &find_idx(dir, "t10k-images-idx3-ubyte")?,
                &find_idx(dir, "t10k-labels-idx1-ubyte")?,
            )?;
            if let Some(n) = cfg.max_train {
                train = train.truncated(n)?;
            }
            if let Some(n) = cfg.max_test {
                test = test.truncated(n)?;
            }
            let (mut train, mut test) = align_classes(train, test)?;
            if cfg.bias {
                train = train.with_bias();
                test = test.with_bias();
            }
            partition_iid(&train, test, cfg.agents, cfg.partition_seed)
        }
        DatasetSource::Femnist { train, test } => {
            if cfg.max_train.is_some() {
                return Err(Error::Config {
                    line: 0,
                    reason: "max_train applies to IDX data only".into(),
                });
            }
            let writers = load_femnist_json(train)?;
            let test_writers = load_femnist_json(test)?;
            let mut test = pool_writers(&test_writers)?;
            if let Some(n) = cfg.max_test {
                test = test.truncated(n)?;
            }
            let k = writers
                .iter()
                .map(|w| w.data.num_classes())
                .chain([test.num_classes()])
                .max()
                .unwrap_or(1);
            let writers = writers
                .into_iter()
                .map(|w| {
                    let data = w.data.with_num_classes(k)?;
                    Ok(WriterDataset {
                        writer: w.writer,
                        data: if cfg.bias { data.with_bias() } else { data },
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let mut test = test.with_num_classes(k)?;
            if cfg.bias {
                test = test.with_bias();
            }
            partition_by_writer(&writers, test)
        }
    }
}

/// Trains one seed and records a row every `eval_every` rounds and at `T`.
pub fn run_seed(cfg: &ExperimentConfig, data: &FederatedDataset, seed: u64) -> Result<RunMetrics> {
    let losses = data.losses(cfg.beta);
    let tc = cfg.trainer_config(seed)?;
    let mut trainer = Trainer::new(losses, tc)?;
    let mut rows = Vec::with_capacity(cfg.rounds / cfg.eval_every + 1);
    let test = &data.test_set;
    let (rounds, every) = (cfg.rounds, cfg.eval_every);
    let eval_losses = data.losses(cfg.beta);
    let result = trainer.run(|r| {
        if r.t % every == 0 || r.t == rounds {
            rows.push(MetricsRow {
                t: r.t,
                test_error: evaluate_test_error(r.w, test)?,
                avg_noise_magnitude: r.noise_magnitude(),
                consensus_residual: r.consensus_residual(),
                global_objective: global_objective(&eval_losses, r.w),
                cumulative_epsilon: cumulative_epsilon(r.t, cfg.local_updates, cfg.eps_bar),
            });
            log::debug!(
                "seed {seed} t={} error {:.4}",
                r.t,
                rows.last().map_or(0.0, |x| x.test_error)
            );
        }
        Ok(())
    });
    if let Err(e) = result {
        log::error!("{} seed {seed}: {e}", cfg.mode.name());
        return Err(e);
    }
    Ok(RunMetrics { seed, rows })
}

/// `F(w) = sum_p f_p(w)`.
pub fn global_objective<L: LocalLoss>(losses: &[L], w: &ParamMatrix) -> f64 {
    losses.iter().map(|l| l.objective(w)).sum()
}

/// What [`run_experiment`] produced.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub runs: Vec<RunMetrics>,
    pub aggregate: Aggregate,
    pub output_dir: PathBuf,
}

/// Runs every seed of `cfg`, writes one CSV per seed, the echoed config and
/// the aggregates into `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    fs::create_dir_all(&cfg.output_dir)?;
    fs::write(cfg.output_dir.join(RESOLVED_CONFIG), cfg.to_config_string())?;
    log::info!(
        "{}: P={} I={} J={} K={} T={} E={} eps_bar={}",
        cfg.mode.name(),
        data.num_agents(),
        data.total_samples(),
        data.dims.0,
        data.dims.1,
        cfg.rounds,
        cfg.local_updates,
        cfg.eps_bar
    );
    let mut runs = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let run = run_seed(cfg, &data, seed)?;
        run.write_csv(&cfg.output_dir.join(run_file_name(seed)))?;
        if let Some(last) = run.final_row() {
            log::info!("seed {seed}: final test error {:.4}", last.test_error);
        }
        runs.push(run);
    }
    let aggregate = aggregate(&cfg.output_dir)?;
    Ok(ExperimentOutput {
        runs,
        aggregate,
        output_dir: cfg.output_dir.clone(),
    })
}

/// Per-`t` summary across seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub t: usize,
    pub test_error_mean: f64,
    pub test_error_p20: f64,
    pub test_error_p80: f64,
    pub avg_noise_magnitude_mean: f64,
    pub avg_noise_magnitude_p20: f64,
    pub avg_noise_magnitude_p80: f64,
    pub consensus_residual_mean: f64,
    pub consensus_residual_p20: f64,
    pub consensus_residual_p80: f64,
    pub global_objective_mean: f64,
    pub global_objective_p20: f64,
    pub global_objective_p80: f64,
    pub cumulative_epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BestRow {
    pub mode: String,
    pub eps_bar: Option<f64>,
    #[serde(rename = "E")]
    pub local_updates: Option<usize>,
    pub runs: usize,
    pub best_final_test_error: f64,
    pub best_final_seed: u64,
    pub best_overall_test_error: f64,
    pub best_overall_seed: u64,
    pub best_overall_t: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub rows: Vec<AggregateRow>,
    pub best: BestRow,
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = (n - 1) as f64 * q;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

fn summarize(values: &mut [f64]) -> (f64, f64, f64) {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.sort_by(f64::total_cmp);
    (mean, percentile(values, 0.2), percentile(values, 0.8))
}

/// Seeds and paths of the per-run CSVs in `dir`, sorted by seed.
pub fn run_files(dir: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if let Some(seed) = name
            .strip_prefix("run_seed")
            .and_then(|s| s.strip_suffix(".csv"))
            .and_then(|s| s.parse::<u64>().ok())
        {
            out.push((seed, path));
        }
    }
    out.sort();
    Ok(out)
}

/// Reads every `run_seed*.csv` in `dir` and writes `aggregate.csv` and
/// `best.csv` next to them.
pub fn aggregate(dir: &Path) -> Result<Aggregate> {
    let files = run_files(dir)?;
    if files.is_empty() {
        return Err(Error::Unavailable(format!(
            "no run_seed*.csv files in {}",
            dir.display()
        )));
    }
    let runs = files
        .iter()
        .map(|(seed, path)| RunMetrics::read_csv(path, *seed))
        .collect::<Result<Vec<_>>>()?;
    let ts: Vec<usize> = runs[0].rows.iter().map(|r| r.t).collect();
    if ts.is_empty() {
        return Err(Error::Unavailable("runs have no rows".into()));
    }
    for (run, (_, path)) in runs.iter().zip(&files) {
        if run.rows.iter().map(|r| r.t).ne(ts.iter().copied()) {
            return Err(Error::Format {
                path: path.clone(),
                offset: 0,
                reason: "evaluation rounds differ from the other runs".into(),
            });
        }
    }

    let mut rows = Vec::with_capacity(ts.len());
    for (i, &t) in ts.iter().enumerate() {
        let column = |f: fn(&MetricsRow) -> f64| -> Vec<f64> { runs.iter().map(|r| f(&r.rows[i])).collect() };
        let (te, te20, te80) = summarize(&mut column(|r| r.test_error));
        let (nm, nm20, nm80) = summarize(&mut column(|r| r.avg_noise_magnitude));
        let (cr, cr20, cr80) = summarize(&mut column(|r| r.consensus_residual));
        let (go, go20, go80) = summarize(&mut column(|r| r.global_objective));
        rows.push(AggregateRow {
            t,
            test_error_mean: te,
            test_error_p20: te20,
            test_error_p80: te80,
            avg_noise_magnitude_mean: nm,
            avg_noise_magnitude_p20: nm20,
            avg_noise_magnitude_p80: nm80,
            consensus_residual_mean: cr,
            consensus_residual_p20: cr20,
            consensus_residual_p80: cr80,
            global_objective_mean: go,
            global_objective_p20: go20,
            global_objective_p80: go80,
            cumulative_epsilon: runs[0].rows[i].cumulative_epsilon,
        });
    }

    let resolved = dir.join(RESOLVED_CONFIG);
    let cfg = if resolved.is_file() {
        Some(parse_config(&resolved)?)
    } else {
        None
    };
    let mut best = BestRow {
        mode: cfg.as_ref().map_or("unknown", |c| c.mode.name()).to_string(),
        eps_bar: cfg.as_ref().map(|c| c.eps_bar),
        local_updates: cfg.as_ref().map(|c| c.local_updates),
        runs: runs.len(),
        best_final_test_error: f64::INFINITY,
        best_final_seed: 0,
        best_overall_test_error: f64::INFINITY,
        best_overall_seed: 0,
        best_overall_t: 0,
    };
    for run in &runs {
        let last = run.rows.last().expect("non-empty");
        if last.test_error < best.best_final_test_error {
            best.best_final_test_error = last.test_error;
            best.best_final_seed = run.seed;
        }
        for r in &run.rows {
            if r.test_error < best.best_overall_test_error {
                best.best_overall_test_error = r.test_error;
                best.best_overall_seed = run.seed;
                best.best_overall_t = r.t;
            }
        }
    }

    let mut w = csv::Writer::from_path(dir.join(AGGREGATE_FILE))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join(BEST_FILE))?;
    w.serialize(&best)?;
    w.flush()?;
    Ok(Aggregate { rows, best })
}
