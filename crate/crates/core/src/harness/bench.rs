//! Wall-clock comparison of the three update strategies.
//!
//! Only model work is timed: initialization plus every update, each followed either
//! by the operator work alone or by full model extraction. Batch follows its naive
//! definition: the pseudoinverse operator `A = Y X⁺` of all data so far, then an
//! eigendecomposition of that `N × N` matrix. The general method extracts from its
//! `r × r` reduced operator; the long-term method eigendecomposes its `N × N` state.
//! Each measurement is preceded by one identical untimed warm-up run and reports the
//! fastest of `TIMED_PASSES` passes.
//!
//! Rows follow the listed order batch, general, long-term in both the "online" and
//! "with eigendecomposition" blocks of the reference timing table.

use std::time::Instant;

use faer::{Mat, MatRef};

use crate::dmd::SnapshotPair;
use crate::error::Result;
use crate::field::{self, Workspace};
use crate::harness::config::{ExperimentConfig, Method};
use crate::harness::engine::Engine;
use crate::linalg;
use crate::online;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BenchEnv {
    /// Number of time steps (pairs) in the stream.
    pub steps: usize,
    pub width: usize,
    pub height: usize,
    pub init_t: usize,
    pub update_every: usize,
}

impl BenchEnv {
    pub fn label(&self) -> String {
        format!("{}x{}/{}/T{}/tau{}", self.width, self.height, self.steps, self.init_t, self.update_every)
    }

    pub fn updates(&self) -> usize {
        (self.steps - self.init_t).div_ceil(self.update_every)
    }
}

pub const PAPER_ENVS: [BenchEnv; 4] = [
    BenchEnv { steps: 500, width: 10, height: 10, init_t: 100, update_every: 10 },
    BenchEnv { steps: 500, width: 10, height: 10, init_t: 100, update_every: 100 },
    BenchEnv { steps: 1000, width: 20, height: 20, init_t: 400, update_every: 100 },
    BenchEnv { steps: 2000, width: 20, height: 10, init_t: 200, update_every: 100 },
];

#[derive(Clone, Debug, PartialEq)]
pub struct TimingRow {
    pub env: BenchEnv,
    pub method: Method,
    pub updates: usize,
    pub seconds_no_eig: f64,
    pub seconds_with_eig: f64,
}

pub const TIMED_PASSES: usize = 3;

pub const TIMING_HEADER: &str = "env,method,updates,seconds_no_eig,seconds_with_eig";

/// Damped oscillation with additive noise, `steps + 1` snapshots.
pub fn bench_data(env: &BenchEnv, cfg: &ExperimentConfig, seed: u64) -> Result<Mat<f64>> {
    let ws = Workspace::grid(env.width, env.height)?;
    let clean = field::gen_damped_oscillation_series(&ws, env.steps + 1, cfg.dt)?;
    Ok(field::inject_noise_series(&clean, cfg.noise_variance, seed)?.to_matrix())
}

fn extract(engine: &Engine, with_eig: bool) -> Result<()> {
    match (engine, with_eig) {
        (_, false) => engine.operator_work(),
        (Engine::Batch { x, y, n, .. }, true) => {
            let cols = x.len() / n;
            let a = online::batch_operator(
                MatRef::from_column_major_slice(x, *n, cols),
                MatRef::from_column_major_slice(y, *n, cols),
            )?;
            linalg::eigen_real(a.as_ref())?;
            Ok(())
        }
        (_, true) => engine.model().map(|_| ()),
    }
}

/// Seconds spent on model work for one full pass over the stream.
pub fn time_pass(method: Method, data: MatRef<'_, f64>, env: &BenchEnv, cfg: &ExperimentConfig, with_eig: bool) -> Result<f64> {
    let last = data.ncols() - 1;
    let pair = SnapshotPair::new(data.subcols(0, env.init_t).to_owned(), data.subcols(1, env.init_t).to_owned(), cfg.dt)?;
    let mut elapsed = 0.0;
    let clock = Instant::now();
    let mut engine = Engine::init(method, &pair, cfg)?;
    extract(&engine, with_eig)?;
    elapsed += clock.elapsed().as_secs_f64();
    let mut fed = env.init_t;
    while fed < last {
        let to = (fed + env.update_every).min(last);
        // slicing is bookkeeping, not model work
        let x = data.subcols(fed, to - fed);
        let y = data.subcols(fed + 1, to - fed);
        let clock = Instant::now();
        engine.update(x, y)?;
        extract(&engine, with_eig)?;
        elapsed += clock.elapsed().as_secs_f64();
        fed = to;
    }
    Ok(elapsed)
}

pub fn run_timing_benchmark(envs: &[BenchEnv], cfg: &ExperimentConfig) -> Result<Vec<TimingRow>> {
    let seed = cfg.require_seed()?;
    let mut rows = Vec::new();
    for (i, env) in envs.iter().enumerate() {
        let data = bench_data(env, cfg, crate::rng::child_seed(seed, i as u64))?;
        for method in Method::ALL {
            let mut secs = [0.0; 2];
            for (slot, with_eig) in [false, true].into_iter().enumerate() {
                time_pass(method, data.as_ref(), env, cfg, with_eig)?;
                let mut best = f64::INFINITY;
                for _ in 0..TIMED_PASSES {
                    best = best.min(time_pass(method, data.as_ref(), env, cfg, with_eig)?);
                }
                secs[slot] = best;
            }
            rows.push(TimingRow {
                env: *env,
                method,
                updates: env.updates(),
                seconds_no_eig: secs[0],
                seconds_with_eig: secs[1],
            });
        }
    }
    Ok(rows)
}

pub fn find(rows: &[TimingRow], env: &BenchEnv, method: Method) -> Option<TimingRow> {
    rows.iter().find(|r| r.env == *env && r.method == method).cloned()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_benchmark_runs() {
        let cfg = ExperimentConfig { seed: Some(1), ..ExperimentConfig::bench_preset() };
        let env = BenchEnv { steps: 60, width: 4, height: 4, init_t: 20, update_every: 15 };
        assert_eq!(env.updates(), 3);
        let rows = run_timing_benchmark(&[env], &cfg).unwrap();
        assert_eq!(rows.len(), 3);
        for r in &rows {
            assert!(r.seconds_no_eig >= 0.0 && r.seconds_with_eig > 0.0);
        }
    }

    #[test]
    fn paper_envs_satisfy_long_term_rank_requirement() {
        for env in PAPER_ENVS {
            assert!(env.init_t >= env.width * env.height);
        }
    }
}
