//! The closed sensing/modeling loop.
//!
//! Every stream step the aerial robots sense the field on the coarse grid and the
//! result is upsampled to the model (marine) grid. At marine steps the marine robots
//! measure their sensing regions and the full field is estimated from those samples
//! through the current model. The stream feeds the model; after every assimilation
//! the marine regions are re-chosen from the model and the aerial robots move to a
//! centroidal configuration of the model's temporal density.
//!
//! A marine-only baseline runs alongside on its own stream and model. It sees only
//! the marine samples: nearest-sample fill before its first model, then gappy
//! estimates at marine steps and model prediction in between.

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::coverage::{self, DensityMap, LloydOptions, RobotConfiguration};
use crate::dmd::{self, DmdModel, SnapshotPair};
use crate::error::{Error, Result};
use crate::field::{self, FieldSnapshot, LtiField, Workspace};
use crate::fusion::{bilinear_upsample, mse};
use crate::harness::config::{ExperimentConfig, Generator, MvOnlyPlacement};
use crate::harness::engine::Engine;
use crate::io::{self, SnapshotMatrix};
use crate::placement::{self, Placement};
use crate::recon::{self, ObservationSet};
use crate::rng::{self, Purpose};

/// One row per assimilation step (the initial fit is not one).
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    /// Stream index of the newest snapshot in the model.
    pub step: usize,
    pub time: f64,
    pub mse_heterogeneous: f64,
    pub mse_av_only: f64,
    pub mse_mv_only: f64,
    /// Dominant continuous-time eigenvalue; NaN when it is undefined.
    pub omega_re: f64,
    pub omega_im: f64,
    pub rank: usize,
    /// Centers of the marine regions chosen after this step.
    pub placement: Vec<usize>,
    /// Heterogeneous-model update plus extraction.
    pub wall_clock_s: f64,
}

#[derive(Clone, Debug)]
pub struct ScenarioOutput {
    pub records: Vec<MetricsRecord>,
    pub model: Option<DmdModel>,
    pub placement: Placement,
    pub model_workspace: Workspace,
}

/// Generator-step source of ground truth on the full grid.
pub enum Truth {
    Damped,
    Lti { field: LtiField, scale: f64 },
    External(SnapshotMatrix),
}

impl Truth {
    pub fn from_config(cfg: &ExperimentConfig, seed: u64) -> Result<(Self, Workspace, f64)> {
        match cfg.generator {
            Generator::DampedOscillation => Ok((Truth::Damped, cfg.full_workspace()?, cfg.dt)),
            Generator::Lti => {
                let ws = cfg.full_workspace()?;
                let field = LtiField::new(&ws, &cfg.lti_eigs(), rng::child_seed(seed, 0))?;
                let scale = cfg.lti_amplitude * (ws.len() as f64).sqrt();
                Ok((Truth::Lti { field, scale }, ws, cfg.dt))
            }
            Generator::ExternalSeries => {
                let path = cfg.series_path.as_ref().ok_or_else(|| Error::Config("series_path missing".into()))?;
                let m = io::load_snapshots(path)?;
                let ws = m.workspace()?.ok_or_else(|| {
                    Error::Config(format!("{} carries no grid shape (width/height)", path.display()))
                })?;
                let dt = m.dt;
                Ok((Truth::External(m), ws, dt))
            }
        }
    }

    pub fn at(&self, ws: &Workspace, step: usize, dt: f64) -> Result<FieldSnapshot> {
        let t = step as f64 * dt;
        match self {
            Truth::Damped => Ok(field::gen_damped_oscillation(ws, t)),
            Truth::Lti { field, scale } => {
                Ok(FieldSnapshot { values: field.evaluate(t).into_iter().map(|v| v * scale).collect(), time: t })
            }
            Truth::External(m) => {
                if step >= m.values.ncols() {
                    return Err(Error::Config(format!(
                        "external series has {} snapshots, step {step} requested",
                        m.values.ncols()
                    )));
                }
                Ok(FieldSnapshot { values: m.values.col(step).iter().copied().collect(), time: m.t0 + t })
            }
        }
    }
}

fn noisy<R: Rng + ?Sized>(values: Vec<f64>, variance: f64, rng: &mut R) -> Vec<f64> {
    if variance == 0.0 {
        return values;
    }
    let sd = variance.sqrt();
    values.into_iter().map(|v| v + sd * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Each grid point takes the value of the nearest sampled point (lowest index on ties).
pub fn nearest_fill(ws: &Workspace, obs: &ObservationSet, values: &[f64]) -> Vec<f64> {
    (0..ws.len())
        .map(|i| {
            let (x, y) = ws.position(i);
            let mut best = (f64::INFINITY, 0.0);
            for (k, &p) in obs.indices().iter().enumerate() {
                let (px, py) = ws.position(p);
                let d = (px - x).powi(2) + (py - y).powi(2);
                if d < best.0 {
                    best = (d, values[k]);
                }
            }
            best.1
        })
        .collect()
}

fn overwrite(mut base: Vec<f64>, obs: &ObservationSet, values: &[f64]) -> Vec<f64> {
    for (&i, &v) in obs.indices().iter().zip(values) {
        base[i] = v;
    }
    base
}

fn pair_block(stream: &[Vec<f64>], from: usize, to: usize) -> (faer::Mat<f64>, faer::Mat<f64>) {
    let n = stream[0].len();
    let x = faer::Mat::from_fn(n, to - from, |i, j| stream[from + j][i]);
    let y = faer::Mat::from_fn(n, to - from, |i, j| stream[from + j + 1][i]);
    (x, y)
}

/// Projection of `values` onto the model's modes.
fn model_estimate(m: &DmdModel, values: &[f64]) -> Result<Vec<f64>> {
    Ok(recon::reconstruct_full(m, &ObservationSet::all(values.len()), values)?.values)
}

fn dominant_omega(m: &DmdModel) -> (f64, f64) {
    match m.dominant_eigenvalue() {
        Some(l) if l.norm() > 0.0 => {
            let w = l.ln() / m.dt;
            (w.re, w.im)
        }
        _ => (f64::NAN, f64::NAN),
    }
}

fn to_av(ws_av: &Workspace, cfg: &RobotConfiguration) -> Result<RobotConfiguration> {
    RobotConfiguration::new(cfg.positions().iter().map(|&p| ws_av.clamp(p)).collect(), ws_av)
}

struct Pipeline {
    stream: Vec<Vec<f64>>,
    engine: Option<Engine>,
    model: Option<DmdModel>,
}

impl Pipeline {
    fn new() -> Self {
        Self { stream: Vec::new(), engine: None, model: None }
    }

    /// Folds the pairs `fed..k` into the model and re-extracts it.
    fn assimilate(&mut self, cfg: &ExperimentConfig, fed: usize, k: usize, dt: f64) -> Result<()> {
        let (x, y) = pair_block(&self.stream, fed, k);
        match &mut self.engine {
            None => {
                let pair = SnapshotPair::new(x, y, dt)?;
                self.engine = Some(Engine::init(cfg.method, &pair, cfg)?);
            }
            Some(e) => e.update(x.as_ref(), y.as_ref())?,
        }
        self.model = Some(self.engine.as_ref().expect("engine set").model()?);
        Ok(())
    }
}

pub fn run_scenario(cfg: &ExperimentConfig) -> Result<ScenarioOutput> {
    cfg.validate()?;
    let seed = cfg.require_seed()?;
    let (truth, full_ws, gen_dt) = Truth::from_config(cfg, seed)?;
    let av_ws = field::downsample_workspace(&full_ws, cfg.av_step, cfg.av_step)?;
    let mv_ws = field::downsample_workspace(&full_ws, cfg.mv_step, cfg.mv_step)?;
    let n = mv_ws.len();
    if cfg.method == crate::harness::config::Method::Longterm && cfg.init_t < n {
        return Err(Error::Config(format!("method = \"longterm\" needs init_t >= N = {n}")));
    }
    let model_dt = cfg.av_time_step as f64 * gen_dt;
    let mv_every = cfg.mv_time_step / cfg.av_time_step;

    let mut rng_init = rng::stream(seed, 0, Purpose::RobotInit);
    let mut rng_av = rng::stream(seed, 0, Purpose::AerialNoise);
    let mut rng_mv = rng::stream(seed, 0, Purpose::MarineNoise);
    let mut rng_mv_only = rng::stream(seed, 1, Purpose::MarineNoise);
    let mut rng_place = rng::stream(seed, 0, Purpose::Placement);

    let lloyd_opts = LloydOptions { max_iters: cfg.lloyd_max_iters, tol: cfg.lloyd_tol };
    let start = RobotConfiguration::random(cfg.av_count, &mv_ws, &mut rng_init)?;
    let mut av_robots = coverage::lloyd(&mv_ws, &start, &DensityMap::uniform(n), lloyd_opts)?.config;

    // Infeasible region counts surface here, before any work is done.
    let mut placement = placement::random_placement(&mv_ws, cfg.sensing_radius, cfg.mv_count, &mut rng_place)?;
    let mut mv_only_placement = placement.clone();

    let mut het = Pipeline::new();
    let mut solo = Pipeline::new();
    let mut fed = 0;
    let mut records = Vec::new();
    let sigma0 = cfg.noise_variance.sqrt();

    for k in 0..=cfg.t_total {
        let gstep = k * cfg.av_time_step;
        let full = truth.at(&full_ws, gstep, gen_dt)?;
        let (truth_mv, _) = field::downsample(&full, &full_ws, cfg.mv_step, cfg.mv_step)?;
        let (truth_av, _) = field::downsample(&full, &full_ws, cfg.av_step, cfg.av_step)?;

        let av_obs = coverage::av_sense(&truth_av, &av_ws, &to_av(&av_ws, &av_robots)?, sigma0, cfg.av_beta, &mut rng_av)?;
        let av_up = bilinear_upsample(&av_obs, &av_ws, &mv_ws)?.values;

        let het_k;
        let solo_k;
        if k % mv_every == 0 {
            let obs = placement.observations(n)?;
            let meas = noisy(recon::observe(&truth_mv, &obs), cfg.mv_noise(), &mut rng_mv);
            het_k = match &het.model {
                Some(m) => recon::reconstruct_full(m, &obs, &meas)?.values,
                None => overwrite(av_up.clone(), &obs, &meas),
            };
            let (obs2, meas2) = if mv_only_placement == placement {
                (obs, meas)
            } else {
                let o = mv_only_placement.observations(n)?;
                let m = noisy(recon::observe(&truth_mv, &o), cfg.mv_noise(), &mut rng_mv_only);
                (o, m)
            };
            solo_k = match &solo.model {
                Some(m) => recon::reconstruct_full(m, &obs2, &meas2)?.values,
                None => nearest_fill(&mv_ws, &obs2, &meas2),
            };
        } else {
            het_k = av_up.clone();
            solo_k = match &solo.model {
                Some(m) => dmd::reconstruct(m, k.saturating_sub(m.anchor)).values,
                None => solo.stream.last().cloned().unwrap_or_else(|| vec![0.0; n]),
            };
        }
        het.stream.push(het_k);
        solo.stream.push(solo_k);

        let due = k == cfg.init_t || (k > cfg.init_t && ((k - cfg.init_t) % cfg.update_every == 0 || k == cfg.t_total));
        if !due {
            continue;
        }
        let clock = Instant::now();
        het.assimilate(cfg, fed, k, model_dt)?;
        let wall = clock.elapsed().as_secs_f64();
        solo.assimilate(cfg, fed, k, model_dt)?;
        fed = k;

        let model = het.model.as_ref().expect("model after assimilation");
        placement = placement::optimal_placement(model, &mv_ws, cfg.sensing_radius, cfg.mv_count)?;
        let density = coverage::density_from_temporal(model, cfg.density_exponent)?;
        av_robots = coverage::lloyd(&mv_ws, &av_robots, &density, lloyd_opts)?.config;
        mv_only_placement = match cfg.mv_only_placement {
            MvOnlyPlacement::Optimal => placement.clone(),
            MvOnlyPlacement::Random => {
                placement::random_placement(&mv_ws, cfg.sensing_radius, cfg.mv_count, &mut rng_place)?
            }
        };

        if k > cfg.init_t {
            let truth_snap = FieldSnapshot { values: truth_mv.values.clone(), time: truth_mv.time };
            let est = FieldSnapshot { values: model_estimate(model, het.stream.last().expect("nonempty"))?, time: 0.0 };
            let av_snap = FieldSnapshot { values: av_up, time: 0.0 };
            let solo_snap = FieldSnapshot { values: solo.stream.last().expect("nonempty").clone(), time: 0.0 };
            let (omega_re, omega_im) = dominant_omega(model);
            records.push(MetricsRecord {
                step: k,
                time: k as f64 * model_dt,
                mse_heterogeneous: mse(&est, &truth_snap)?,
                mse_av_only: mse(&av_snap, &truth_snap)?,
                mse_mv_only: mse(&solo_snap, &truth_snap)?,
                omega_re,
                omega_im,
                rank: model.rank(),
                placement: placement.centers(),
                wall_clock_s: wall,
            });
        }
    }
    Ok(ScenarioOutput { records, model: het.model, placement, model_workspace: mv_ws })
}

/// Mean of `f` over the records in the final third of the run.
pub fn final_third_mean(records: &[MetricsRecord], f: impl Fn(&MetricsRecord) -> f64) -> f64 {
    let from = records.len() - records.len() / 3;
    let tail = &records[from.min(records.len().saturating_sub(1))..];
    tail.iter().map(f).sum::<f64>() / tail.len() as f64
}
