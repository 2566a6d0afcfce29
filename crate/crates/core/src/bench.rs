//! Batch benchmark on synthetic phantom pairs: every pair is registered
//! under every (image loss, edge weight, regularization weight) cell, and
//! the results are tabulated per run and per cell.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{baseline_dice, evaluate_registration};
use crate::register::{register_pair, EdgeLoss, ImageLoss, RegistrationConfig, TransformModel};
use crate::synth::{make_pair, PhantomPair};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "EDGEREG_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub pairs: usize,
    /// Pair `i` is generated from `seed + i`.
    pub seed: u64,
    pub size: usize,
    pub max_disp: f64,
    pub losses: Vec<ImageLoss>,
    pub lambda2: Vec<f64>,
    pub lambda3: Vec<f64>,
    /// Settings shared by every run; the swept fields are overwritten.
    pub base: RegistrationConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            pairs: 10,
            seed: 7,
            size: 192,
            max_disp: 8.0,
            losses: vec![ImageLoss::Lncc, ImageLoss::Nmi, ImageLoss::Ngf],
            lambda2: vec![0.0, 0.5, 1.0, 2.0],
            lambda3: vec![0.01, 0.1, 1.0],
            base: RegistrationConfig::default(),
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pairs == 0 {
            return Err(Error::invalid("bench needs at least one pair"));
        }
        if self.losses.is_empty() || self.lambda2.is_empty() || self.lambda3.is_empty() {
            return Err(Error::invalid("bench sweep lists must not be empty"));
        }
        for cfg in self.cells() {
            cfg.validate()?;
        }
        Ok(())
    }

    /// Registration configs of all cells, loss-major.
    pub fn cells(&self) -> Vec<RegistrationConfig> {
        let mut out = Vec::new();
        for &im_sim in &self.losses {
            for &lambda2 in &self.lambda2 {
                for &lambda3 in &self.lambda3 {
                    out.push(RegistrationConfig {
                        im_sim,
                        lambda2,
                        lambda3,
                        ..self.base.clone()
                    });
                }
            }
        }
        out
    }
}

/// One registration of the benchmark. Runtime is left out so that repeated
/// runs produce identical tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub pair: usize,
    pub seed: u64,
    pub model: TransformModel,
    pub im_sim: ImageLoss,
    pub ed_sim: EdgeLoss,
    pub lambda2: f64,
    pub lambda3: f64,
    /// `ok` or `diverged`.
    pub status: String,
    pub dice_pre: f64,
    pub dice_mean: Option<f64>,
    pub fold_ratio: Option<f64>,
    pub grad_jac_mean: Option<f64>,
}

impl BenchRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Aggregate over the pairs of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub model: TransformModel,
    pub im_sim: ImageLoss,
    pub ed_sim: EdgeLoss,
    pub lambda2: f64,
    pub lambda3: f64,
    pub runs: usize,
    pub diverged: usize,
    pub dice_pre_mean: f64,
    pub dice_mean: f64,
    pub dice_std: f64,
    pub fold_ratio_mean: f64,
    pub fold_ratio_max: f64,
    pub grad_jac_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOutcome {
    pub rows: Vec<BenchRow>,
    pub summary: Vec<BenchSummary>,
}

impl BenchOutcome {
    /// Summary row of one cell, if it was run.
    pub fn cell(&self, im_sim: ImageLoss, lambda2: f64, lambda3: f64) -> Option<&BenchSummary> {
        self.summary
            .iter()
            .find(|s| s.im_sim == im_sim && s.lambda2 == lambda2 && s.lambda3 == lambda3)
    }
}

/// Worker count from [`THREADS_ENV`], if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .filter(|&n| n > 0)
}

fn run_cell(pair_index: usize, pair: &PhantomPair, dice_pre: f64, cfg: &RegistrationConfig) -> Result<BenchRow> {
    let mut row = BenchRow {
        pair: pair_index,
        seed: pair.seed,
        model: cfg.model,
        im_sim: cfg.im_sim,
        ed_sim: if cfg.edge_branch_active() { cfg.ed_sim } else { EdgeLoss::None },
        lambda2: cfg.lambda2,
        lambda3: cfg.lambda3,
        status: "ok".into(),
        dice_pre,
        dice_mean: None,
        fold_ratio: None,
        grad_jac_mean: None,
    };
    match register_pair(&pair.fixed, &pair.moving, cfg) {
        Ok(result) => {
            let report = evaluate_registration(pair, &result, cfg)?;
            row.dice_mean = report.dice_mean;
            row.fold_ratio = Some(report.fold_ratio);
            row.grad_jac_mean = Some(report.grad_jac_mean);
        }
        Err(Error::Divergence { .. }) => row.status = "diverged".into(),
        Err(e) => return Err(e),
    }
    Ok(row)
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn summarize(rows: &[BenchRow], cells: &[RegistrationConfig]) -> Vec<BenchSummary> {
    cells
        .iter()
        .map(|cfg| {
            let runs: Vec<&BenchRow> = rows
                .iter()
                .filter(|r| r.im_sim == cfg.im_sim && r.lambda2 == cfg.lambda2 && r.lambda3 == cfg.lambda3)
                .collect();
            let ok: Vec<&&BenchRow> = runs.iter().filter(|r| r.is_ok()).collect();
            let dice: Vec<f64> = ok.iter().filter_map(|r| r.dice_mean).collect();
            let folds: Vec<f64> = ok.iter().filter_map(|r| r.fold_ratio).collect();
            let grads: Vec<f64> = ok.iter().filter_map(|r| r.grad_jac_mean).collect();
            let pre: Vec<f64> = runs.iter().map(|r| r.dice_pre).collect();
            let dice_mean = mean(&dice);
            let dice_std = mean(&dice.iter().map(|d| (d - dice_mean).powi(2)).collect::<Vec<_>>()).sqrt();
            BenchSummary {
                model: cfg.model,
                im_sim: cfg.im_sim,
                ed_sim: if cfg.edge_branch_active() { cfg.ed_sim } else { EdgeLoss::None },
                lambda2: cfg.lambda2,
                lambda3: cfg.lambda3,
                runs: runs.len(),
                diverged: runs.len() - ok.len(),
                dice_pre_mean: mean(&pre),
                dice_mean,
                dice_std,
                fold_ratio_mean: mean(&folds),
                fold_ratio_max: folds.iter().copied().fold(f64::NAN, f64::max),
                grad_jac_mean: mean(&grads),
            }
        })
        .collect()
}

/// Runs the benchmark on `threads` workers (all cores when `None`).
/// `progress` is called after each finished registration with the number
/// done so far and the total.
pub fn run_bench(
    cfg: &BenchConfig,
    threads: Option<usize>,
    progress: &(dyn Fn(usize, usize) + Sync),
) -> Result<BenchOutcome> {
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;

    pool.install(|| {
        let pairs: Vec<(PhantomPair, f64)> = (0..cfg.pairs)
            .into_par_iter()
            .map(|i| {
                let pair = make_pair(cfg.seed.wrapping_add(i as u64), cfg.size, cfg.max_disp)?;
                let pre = baseline_dice(&pair)?.unwrap_or(f64::NAN);
                Ok((pair, pre))
            })
            .collect::<Result<_>>()?;

        let cells = cfg.cells();
        let jobs: Vec<(usize, usize)> = (0..pairs.len())
            .flat_map(|p| (0..cells.len()).map(move |c| (p, c)))
            .collect();
        let done = std::sync::atomic::AtomicUsize::new(0);
        let rows: Vec<BenchRow> = jobs
            .par_iter()
            .map(|&(p, c)| {
                let row = run_cell(p, &pairs[p].0, pairs[p].1, &cells[c]);
                let n = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
                progress(n, jobs.len());
                row
            })
            .collect::<Result<_>>()?;
        let summary = summarize(&rows, &cells);
        Ok(BenchOutcome { rows, summary })
    })
}

fn write_csv<T: Serialize>(items: &[T], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for item in items {
        w.serialize(item)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn write_rows_csv(rows: &[BenchRow], out: impl Write) -> Result<()> {
    write_csv(rows, out)
}

pub fn write_summary_csv(summary: &[BenchSummary], out: impl Write) -> Result<()> {
    write_csv(summary, out)
}
