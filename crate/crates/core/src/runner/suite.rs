//! Canned ablation grids, each run over three seeds.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::run::run;
use crate::engine::Mode;
use crate::error::{Error, Result};
use crate::metrics::fmt_real;

pub const SEEDS_PER_CELL: u64 = 3;
const RANK_LEVELS: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];
const PARTICIPATION_LEVELS: [f64; 4] = [1.0, 0.9, 0.7, 0.5];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    /// `E_lora` from 0 to `E`.
    EloraSweep,
    /// 5×5 grid over `R_c` × `R_l`.
    RankGrid,
    /// Alternating versus simultaneous training.
    Alternating,
    /// Personalized low-rank part versus personalized full-rank part.
    Reverse,
    /// Participation fractions 1.0, 0.9, 0.7, 0.5.
    Partial,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::EloraSweep,
        Suite::RankGrid,
        Suite::Alternating,
        Suite::Reverse,
        Suite::Partial,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::EloraSweep => "elora-sweep",
            Suite::RankGrid => "rank-grid",
            Suite::Alternating => "alternating",
            Suite::Reverse => "reverse",
            Suite::Partial => "partial",
        }
    }

    /// Named cells derived from `base`, in grid order.
    pub fn cells(self, base: &ExperimentConfig) -> Vec<(String, ExperimentConfig)> {
        let with = |f: &dyn Fn(&mut ExperimentConfig)| {
            let mut c = base.clone();
            f(&mut c);
            c
        };
        match self {
            Suite::EloraSweep => (0..=base.epochs)
                .map(|e| {
                    (
                        format!("E_lora={e}"),
                        with(&|c| {
                            c.mode = Mode::FedDecomp;
                            c.lora_epochs = e;
                        }),
                    )
                })
                .collect(),
            Suite::RankGrid => RANK_LEVELS
                .iter()
                .flat_map(|&rc| RANK_LEVELS.iter().map(move |&rl| (rc, rl)))
                .map(|(rc, rl)| {
                    (
                        format!("R_c={rc} R_l={rl}"),
                        with(&|c| {
                            c.mode = Mode::FedDecomp;
                            c.ratio_conv = rc;
                            c.ratio_fc = rl;
                        }),
                    )
                })
                .collect(),
            Suite::Alternating => [Mode::FedDecomp, Mode::Simultaneous]
                .into_iter()
                .map(|m| (m.to_string(), with(&|c| c.mode = m)))
                .collect(),
            Suite::Reverse => [Mode::FedDecomp, Mode::FedDecompReverse]
                .into_iter()
                .map(|m| (m.to_string(), with(&|c| c.mode = m)))
                .collect(),
            Suite::Partial => PARTICIPATION_LEVELS
                .iter()
                .map(|&f| {
                    (
                        format!("participation={f}"),
                        with(&|c| {
                            c.mode = Mode::FedDecomp;
                            c.participation = f;
                        }),
                    )
                })
                .collect(),
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Suite::ALL.into_iter().find(|x| x.as_str() == s).ok_or_else(|| {
            let names: Vec<_> = Suite::ALL.iter().map(|x| x.as_str()).collect();
            format!("unknown suite `{s}` (expected one of {})", names.join(" | "))
        })
    }
}

/// One (cell, seed) result. `mean` and `std` summarize the cell over its seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteRow {
    pub cell: String,
    pub seed: u64,
    pub best: Option<f64>,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug)]
pub struct SuiteOutcome {
    pub rows: Vec<SuiteRow>,
    pub merged_csv: PathBuf,
    /// Alternating suite only: the better cell per seed (ties go to the first cell).
    pub winners: Vec<(u64, String)>,
}

/// Mean and population standard deviation of the finite entries.
fn summarize(values: &[Option<f64>]) -> (f64, f64) {
    let xs: Vec<f64> = values.iter().flatten().copied().collect();
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn render(rows: &[SuiteRow]) -> String {
    let mut out = String::from("cell,seed,best,mean,std\n");
    for r in rows {
        let best = r.best.map_or_else(|| "none".to_string(), fmt_real);
        writeln!(out, "{},{},{},{},{}", r.cell, r.seed, best, fmt_real(r.mean), fmt_real(r.std))
            .expect("string write");
    }
    out
}

/// Runs every cell of `suite` for seeds `root`, `root+1`, `root+2`; each run
/// writes its own reports under `out/cell_XX/seed_S`, and the merged table
/// goes to `out/<suite>.csv`.
pub fn run_suite(suite: Suite, base: &ExperimentConfig, out: &Path, root: u64) -> Result<SuiteOutcome> {
    let cells = suite.cells(base);
    let jobs: Vec<(usize, u64, ExperimentConfig)> = cells
        .iter()
        .enumerate()
        .flat_map(|(i, (_, cfg))| {
            (0..SEEDS_PER_CELL).map(move |k| {
                let seed = root.wrapping_add(k);
                let mut c = cfg.clone();
                c.seed = seed;
                c.output_dir = out.join(format!("cell_{i:02}")).join(format!("seed_{seed}"));
                (i, seed, c)
            })
        })
        .collect();
    let bests: Vec<Option<f64>> = jobs
        .par_iter()
        .map(|(_, _, c)| run(c).map(|o| o.report.best_mean_accuracy))
        .collect::<Result<_>>()?;

    let per_cell = SEEDS_PER_CELL as usize;
    let mut rows = Vec::with_capacity(jobs.len());
    for (ci, (name, _)) in cells.iter().enumerate() {
        let slice = &bests[ci * per_cell..(ci + 1) * per_cell];
        let (mean, std) = summarize(slice);
        for (k, best) in slice.iter().enumerate() {
            rows.push(SuiteRow {
                cell: name.clone(),
                seed: jobs[ci * per_cell + k].1,
                best: *best,
                mean,
                std,
            });
        }
    }

    let mut winners = Vec::new();
    if suite == Suite::Alternating {
        for k in 0..per_cell {
            let a = &rows[k];
            let b = &rows[per_cell + k];
            let first_wins = a.best.unwrap_or(f64::NEG_INFINITY) >= b.best.unwrap_or(f64::NEG_INFINITY);
            winners.push((a.seed, if first_wins { a.cell.clone() } else { b.cell.clone() }));
        }
    }

    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let merged_csv = out.join(format!("{}.csv", suite.as_str()));
    std::fs::write(&merged_csv, render(&rows)).map_err(|e| Error::io(&merged_csv, e))?;
    if !winners.is_empty() {
        let path = out.join(format!("{}_winners.csv", suite.as_str()));
        let mut text = String::from("seed,winner\n");
        for (seed, cell) in &winners {
            writeln!(text, "{seed},{cell}").expect("string write");
        }
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(SuiteOutcome {
        rows,
        merged_csv,
        winners,
    })
}
