//! Long-term updates with different forgetting factors on switched and stationary
//! LTI streams.
//!
//! The tracked eigenvalue is the first entry of `switch_eigs` (switched regime) or of
//! `cont_eigs` (stationary regime); the error of a final model is the distance from
//! its dominant continuous eigenvalue to that target or its conjugate.

use rayon::prelude::*;

use crate::c64;
use crate::dmd::{DmdModel, SnapshotPair};
use crate::error::{Error, Result};
use crate::field::{self, FieldSnapshot, LtiField, SnapshotSeries};
use crate::harness::config::{ExperimentConfig, Method};
use crate::harness::engine::Engine;
use crate::linalg;
use crate::online::{self, AmplitudeAnchor};
use crate::rng::{self, Purpose};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    Switched,
    Stationary,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::Switched => "switched",
            Regime::Stationary => "stationary",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForgettingRow {
    pub regime: Regime,
    /// `None` for the batch pseudoinverse operator on all data.
    pub gamma: Option<f64>,
    pub trial: usize,
    pub omega_re: f64,
    pub omega_im: f64,
    pub error: f64,
}

pub const FORGETTING_HEADER: &str = "regime,estimator,trial,omega_re,omega_im,error";

pub fn stream(cfg: &ExperimentConfig, seed: u64, trial: usize, regime: Regime) -> Result<SnapshotSeries> {
    let ws = cfg.full_workspace()?;
    let lti = LtiField::new(&ws, &cfg.lti_eigs(), rng::child_seed(seed, trial as u64))?;
    let clean = match regime {
        Regime::Switched => lti.switched_series(&cfg.lti_switch_eigs(), cfg.switch_step, cfg.t_total + 1, cfg.dt)?,
        Regime::Stationary => lti.series(cfg.t_total + 1, cfg.dt)?,
    };
    let scale = cfg.lti_amplitude * (ws.len() as f64).sqrt();
    let mut noise = rng::stream(seed, trial as u64, Purpose::Noise);
    let snaps = clean
        .snapshots()
        .iter()
        .map(|s| {
            let scaled = FieldSnapshot { values: s.values.iter().map(|v| v * scale).collect(), time: s.time };
            field::inject_noise_with(&scaled, cfg.noise_variance, &mut noise)
        })
        .collect::<Result<Vec<_>>>()?;
    SnapshotSeries::new(snaps, cfg.dt)
}

fn target(cfg: &ExperimentConfig, regime: Regime) -> Result<c64> {
    let eigs = match regime {
        Regime::Switched => cfg.lti_switch_eigs(),
        Regime::Stationary => cfg.lti_eigs(),
    };
    eigs.first().copied().ok_or_else(|| Error::Config("no eigenvalue to track".into()))
}

fn score(m: &DmdModel, goal: c64) -> Result<(c64, f64)> {
    let lam = m.dominant_eigenvalue().ok_or(Error::ZeroData("model"))?;
    if lam.norm() == 0.0 {
        return Err(Error::ZeroEigenvalue { index: 0 });
    }
    let w = lam.ln() / m.dt;
    Ok((w, (w - goal).norm().min((w - goal.conj()).norm())))
}

/// Final long-term model for one forgetting factor.
pub fn final_longterm(series: &SnapshotSeries, cfg: &ExperimentConfig, gamma: f64) -> Result<DmdModel> {
    let m = series.to_matrix();
    let last = series.len() - 1;
    let pair = SnapshotPair::new(m.subcols(0, cfg.init_t).to_owned(), m.subcols(1, cfg.init_t).to_owned(), series.dt())?;
    let cfg = ExperimentConfig { gamma, anchor: AmplitudeAnchor::Latest, ..cfg.clone() };
    let mut engine = Engine::init(Method::Longterm, &pair, &cfg)?;
    let mut fed = cfg.init_t;
    while fed < last {
        let to = (fed + cfg.update_every).min(last);
        engine.update(m.subcols(fed, to - fed), m.subcols(fed + 1, to - fed))?;
        fed = to;
    }
    engine.model()
}

/// `Y X⁺` over the whole stream, amplitudes at the last snapshot.
pub fn final_batch(series: &SnapshotSeries) -> Result<DmdModel> {
    let m = series.to_matrix();
    let last = series.len() - 1;
    let a = online::batch_operator(m.subcols(0, last), m.subcols(1, last))?;
    let (eigs, modes) = linalg::eigen_real(a.as_ref())?;
    DmdModel::from_eigenpairs(modes, eigs, &linalg::column_vec(m.as_ref(), last), last, series.dt(), None, None)
}

pub fn run_forgetting_comparison(cfg: &ExperimentConfig, regimes: &[Regime]) -> Result<Vec<ForgettingRow>> {
    let seed = cfg.require_seed()?;
    if cfg.gammas.is_empty() || cfg.trials == 0 {
        return Err(Error::Config("need at least one gamma and one trial".into()));
    }
    if cfg.switch_eigs.is_empty() && regimes.contains(&Regime::Switched) {
        return Err(Error::Config("the switched regime needs switch_eigs".into()));
    }
    let n = cfg.full_workspace()?.len();
    if cfg.init_t < n {
        return Err(Error::Config(format!("the long-term method needs init_t >= N = {n}")));
    }
    let cells: Vec<(Regime, usize)> =
        regimes.iter().flat_map(|&r| (0..cfg.trials).map(move |t| (r, t))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<Vec<ForgettingRow>>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(regime, trial)| {
                let series = stream(cfg, seed, trial, regime)?;
                let goal = target(cfg, regime)?;
                let mut rows = Vec::new();
                let mut push = |gamma: Option<f64>, model: DmdModel| -> Result<()> {
                    let (w, error) = score(&model, goal)?;
                    rows.push(ForgettingRow { regime, gamma, trial, omega_re: w.re, omega_im: w.im, error });
                    Ok(())
                };
                for &g in &cfg.gammas {
                    push(Some(g), final_longterm(&series, cfg, g)?)?;
                }
                push(None, final_batch(&series)?)?;
                Ok(rows)
            })
            .collect()
    });
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    Ok(rows)
}

/// Error of `estimator` (a gamma, or `None` for batch) in each trial, in trial order.
pub fn errors(rows: &[ForgettingRow], regime: Regime, gamma: Option<f64>) -> Vec<f64> {
    rows.iter().filter(|r| r.regime == regime && r.gamma == gamma).map(|r| r.error).collect()
}
