//! Repeated noisy LTI trials tracking the dominant continuous-time eigenvalue.
//!
//! Trial `k` of noise level `v` uses spatial modes seeded by `(seed, k)` and noise
//! from stream `v_index * 2^20 + k`, so the three methods see identical data.

use rayon::prelude::*;

use crate::dmd::SnapshotPair;
use crate::error::{Error, Result};
use crate::field::{self, FieldSnapshot, LtiField, SnapshotSeries};
use crate::harness::config::{ExperimentConfig, Method};
use crate::harness::engine::Engine;
use crate::rng::{self, Purpose};

#[derive(Clone, Debug, PartialEq)]
pub struct TracePoint {
    pub method: Method,
    pub variance: f64,
    pub trial: usize,
    pub step: usize,
    pub time: f64,
    pub omega_re: f64,
    pub omega_im: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialSummary {
    pub method: Method,
    pub variance: f64,
    /// Trace points at or after `summary_after`, pooled over trials.
    pub count: usize,
    pub median_re: f64,
    pub q1_re: f64,
    pub q3_re: f64,
    pub median_im: f64,
    pub q1_im: f64,
    pub q3_im: f64,
}

impl TrialSummary {
    pub fn iqr_re(&self) -> f64 {
        self.q3_re - self.q1_re
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrialsReport {
    pub traces: Vec<TracePoint>,
    pub summaries: Vec<TrialSummary>,
}

impl TrialsReport {
    pub fn summary(&self, method: Method, variance: f64) -> Option<&TrialSummary> {
        self.summaries.iter().find(|s| s.method == method && s.variance == variance)
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// The noisy series for one (variance, trial) cell.
pub fn trial_series(cfg: &ExperimentConfig, seed: u64, variance_index: usize, variance: f64, trial: usize) -> Result<SnapshotSeries> {
    let ws = cfg.full_workspace()?;
    let lti = LtiField::new(&ws, &cfg.lti_eigs(), rng::child_seed(seed, trial as u64))?;
    let scale = cfg.lti_amplitude * (ws.len() as f64).sqrt();
    let clean = lti.series(cfg.t_total + 1, cfg.dt)?;
    let mut noise = rng::stream(seed, ((variance_index as u64) << 20) | trial as u64, Purpose::Noise);
    let snaps = clean
        .snapshots()
        .iter()
        .map(|s| {
            let scaled = FieldSnapshot { values: s.values.iter().map(|v| v * scale).collect(), time: s.time };
            field::inject_noise_with(&scaled, variance, &mut noise)
        })
        .collect::<Result<Vec<_>>>()?;
    SnapshotSeries::new(snaps, cfg.dt)
}

/// Dominant `ω` after the initial fit and after every update.
pub fn track(method: Method, series: &SnapshotSeries, cfg: &ExperimentConfig) -> Result<Vec<(usize, f64, f64)>> {
    let m = series.to_matrix();
    let dt = series.dt();
    let last = series.len() - 1;
    let pair = SnapshotPair::new(m.subcols(0, cfg.init_t).to_owned(), m.subcols(1, cfg.init_t).to_owned(), dt)?;
    let mut engine = Engine::init(method, &pair, cfg)?;
    let mut out = Vec::new();
    let mut fed = cfg.init_t;
    loop {
        let model = engine.model()?;
        let lam = model.dominant_eigenvalue().ok_or(Error::ZeroData("model"))?;
        let w = if lam.norm() > 0.0 { lam.ln() / dt } else { crate::c64::new(f64::NAN, f64::NAN) };
        out.push((fed, w.re, w.im));
        if fed >= last {
            break;
        }
        let to = (fed + cfg.update_every).min(last);
        engine.update(m.subcols(fed, to - fed), m.subcols(fed + 1, to - fed))?;
        fed = to;
    }
    Ok(out)
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

pub fn run_eigenvalue_trials(cfg: &ExperimentConfig, methods: &[Method]) -> Result<TrialsReport> {
    cfg.validate_trials()?;
    let seed = cfg.require_seed()?;
    let cells: Vec<(Method, usize, f64, usize)> = methods
        .iter()
        .flat_map(|&m| {
            cfg.variances
                .iter()
                .enumerate()
                .flat_map(move |(vi, &v)| (0..cfg.trials).map(move |t| (m, vi, v, t)))
        })
        .collect();

    let results: Vec<Result<Vec<TracePoint>>> = pool(cfg.threads)?.install(|| {
        cells
            .par_iter()
            .map(|&(method, vi, variance, trial)| {
                let series = trial_series(cfg, seed, vi, variance, trial)?;
                Ok(track(method, &series, cfg)?
                    .into_iter()
                    .map(|(step, re, im)| TracePoint {
                        method,
                        variance,
                        trial,
                        step,
                        time: step as f64 * cfg.dt,
                        omega_re: re,
                        omega_im: im,
                    })
                    .collect())
            })
            .collect()
    });
    let mut traces = Vec::new();
    for r in results {
        traces.extend(r?);
    }

    let mut summaries = Vec::new();
    for &method in methods {
        for &variance in &cfg.variances {
            let pick = |f: fn(&TracePoint) -> f64| {
                let mut v: Vec<f64> = traces
                    .iter()
                    .filter(|p| p.method == method && p.variance == variance && p.time >= cfg.summary_after - 1e-9)
                    .map(f)
                    .filter(|x| x.is_finite())
                    .collect();
                v.sort_by(f64::total_cmp);
                v
            };
            let re = pick(|p| p.omega_re);
            let im = pick(|p| p.omega_im);
            summaries.push(TrialSummary {
                method,
                variance,
                count: re.len(),
                median_re: quantile(&re, 0.5),
                q1_re: quantile(&re, 0.25),
                q3_re: quantile(&re, 0.75),
                median_im: quantile(&im, 0.5),
                q1_im: quantile(&im, 0.25),
                q3_im: quantile(&im, 0.75),
            });
        }
    }
    Ok(TrialsReport { traces, summaries })
}

impl ExperimentConfig {
    fn validate_trials(&self) -> Result<()> {
        if self.init_t < 2 || self.update_every == 0 || self.t_total <= self.init_t {
            return Err(Error::Config("need 2 <= init_t < t_total and update_every >= 1".into()));
        }
        if self.trials == 0 || self.variances.is_empty() {
            return Err(Error::Config("need at least one trial and one variance".into()));
        }
        if self.cont_eigs.is_empty() {
            return Err(Error::Config("the LTI generator needs cont_eigs".into()));
        }
        Ok(())
    }
}
