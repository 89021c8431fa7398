//! Experiment configuration.
//!
//! One flat table of keys, read from TOML. Units: `t_total`, `init_t` and
//! `update_every` count model-stream steps (snapshot pairs), so a run covers
//! `t_total + 1` stream snapshots. One stream step is `av_time_step` generator
//! steps of length `dt`; high-fidelity data arrives every `mv_time_step`
//! generator steps (a multiple of `av_time_step`).

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dmd::{RankPolicy, DEFAULT_RANK_TOL};
use crate::error::{Error, Result};
use crate::field::{downsample_workspace, Workspace};
use crate::online::AmplitudeAnchor;
use crate::c64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Batch,
    General,
    Longterm,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Batch, Method::General, Method::Longterm];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Batch => "batch",
            Method::General => "general",
            Method::Longterm => "longterm",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    DampedOscillation,
    Lti,
    ExternalSeries,
}

/// Where the marine-only baseline takes its measurements.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MvOnlyPlacement {
    /// The placements chosen from the heterogeneous model.
    Optimal,
    /// Fresh random disjoint regions at every update.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub generator: Generator,
    /// Snapshot file for `generator = "external_series"`; must carry its grid shape.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub series_path: Option<PathBuf>,

    pub full_width: usize,
    pub full_height: usize,
    /// Spatial sampling step of the aerial (low-fidelity) grid.
    pub av_step: usize,
    /// Spatial sampling step of the marine (high-fidelity) grid, which is also the model grid.
    pub mv_step: usize,

    pub t_total: usize,
    pub dt: f64,
    pub init_t: usize,
    pub update_every: usize,
    pub av_time_step: usize,
    pub mv_time_step: usize,

    pub noise_variance: f64,
    /// Marine measurement noise; defaults to `noise_variance`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mv_noise_variance: Option<f64>,
    /// Aerial noise growth per unit distance from the owning robot.
    pub av_beta: f64,

    pub sensing_radius: f64,
    pub mv_count: usize,
    pub av_count: usize,

    pub method: Method,
    pub gamma: f64,
    /// 0 selects the relative singular-value threshold `rank_tol`.
    pub rank: usize,
    pub rank_tol: f64,
    pub anchor: AmplitudeAnchor,
    /// General method keeps one of every `time_stride` pairs.
    pub time_stride: usize,

    pub density_exponent: f64,
    pub lloyd_max_iters: usize,
    pub lloyd_tol: f64,
    pub mv_only_placement: MvOnlyPlacement,

    /// Continuous-time eigenvalues `[re, im]` of the LTI generator.
    pub cont_eigs: Vec<[f64; 2]>,
    /// Per-point RMS of each LTI mode at `t = 0`.
    pub lti_amplitude: f64,

    pub trials: usize,
    pub variances: Vec<f64>,
    /// Summary statistics use trace points at or after this time (seconds).
    pub summary_after: f64,

    pub gammas: Vec<f64>,
    /// Generator step at which the LTI rates switch to `switch_eigs`.
    pub switch_step: usize,
    pub switch_eigs: Vec<[f64; 2]>,

    /// Worker threads for independent trials; 0 lets the pool decide.
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: None,
            generator: Generator::DampedOscillation,
            series_path: None,
            full_width: 40,
            full_height: 40,
            av_step: 4,
            mv_step: 2,
            t_total: 120,
            dt: 0.05,
            init_t: 20,
            update_every: 5,
            av_time_step: 1,
            mv_time_step: 1,
            noise_variance: 0.01,
            mv_noise_variance: None,
            av_beta: 0.0,
            sensing_radius: 2.0,
            mv_count: 3,
            av_count: 2,
            method: Method::General,
            gamma: 1.0,
            rank: 4,
            rank_tol: DEFAULT_RANK_TOL,
            anchor: AmplitudeAnchor::Latest,
            time_stride: 1,
            density_exponent: 1.0,
            lloyd_max_iters: 50,
            lloyd_tol: 1e-6,
            mv_only_placement: MvOnlyPlacement::Optimal,
            cont_eigs: vec![[-1.0, 0.0]],
            lti_amplitude: 1.0,
            trials: 10,
            variances: vec![0.01, 0.04, 0.1],
            summary_after: 5.0,
            gammas: vec![1.0, 0.9],
            switch_step: 300,
            switch_eigs: Vec::new(),
            threads: 0,
        }
    }
}

fn to_c64(v: &[[f64; 2]]) -> Vec<c64> {
    v.iter().map(|&[re, im]| c64::new(re, im)).collect()
}

impl ExperimentConfig {
    /// The eigenvalue-tracking setup: 20×20 grid, 1000 steps over 10 s, first
    /// model from 400 steps, updates every 10.
    pub fn eigtrials_preset() -> Self {
        Self {
            generator: Generator::Lti,
            full_width: 20,
            full_height: 20,
            av_step: 1,
            mv_step: 1,
            t_total: 1000,
            dt: 0.01,
            init_t: 400,
            update_every: 10,
            rank: 1,
            anchor: AmplitudeAnchor::First,
            cont_eigs: vec![[-1.0, 0.0]],
            lti_amplitude: 3.0,
            ..Self::default()
        }
    }

    /// Timing runs: damped oscillation with `N(0, 0.4)` noise; the general method keeps
    /// a fixed rank of 10.
    pub fn bench_preset() -> Self {
        Self { dt: 0.01, noise_variance: 0.4, rank: 10, ..Self::default() }
    }

    /// Small long-term setup whose dominant oscillation changes frequency mid-stream.
    pub fn forgetting_preset() -> Self {
        Self {
            generator: Generator::Lti,
            full_width: 2,
            full_height: 2,
            av_step: 1,
            mv_step: 1,
            t_total: 600,
            dt: 0.05,
            init_t: 20,
            update_every: 10,
            noise_variance: 1e-4,
            method: Method::Longterm,
            anchor: AmplitudeAnchor::Latest,
            cont_eigs: vec![[-0.05, 2.0], [-0.3, 5.0]],
            switch_eigs: vec![[-0.05, 3.0], [-0.3, 5.0]],
            switch_step: 300,
            lti_amplitude: 1.0,
            gammas: vec![1.0, 0.9],
            ..Self::default()
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        Self::default().merged(s)
    }

    /// Applies the keys in a TOML document on top of `self`.
    pub fn merged(&self, toml_text: &str) -> Result<Self> {
        let table: toml::Table = toml_text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        let mut out = self.clone();
        for (k, v) in table {
            out = out.with_value(&k, v)?;
        }
        Ok(out)
    }

    /// Applies one `key=value` override. The value is read as a TOML value
    /// (`3`, `0.5`, `"general"`, `[0.01, 0.1]`); bare words are taken as strings.
    pub fn apply_override(&mut self, key: &str, raw: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let value = match format!("v = {raw}").parse::<toml::Table>() {
            Ok(mut t) => t.remove("v").expect("key present"),
            Err(_) => toml::Value::String(raw.to_string()),
        };
        *self = self.with_value(&key, value)?;
        Ok(())
    }

    fn with_value(&self, key: &str, value: toml::Value) -> Result<Self> {
        let mut table = toml::Table::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        table.insert(key.to_string(), value);
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("key {key:?}: {}", e.message())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn rank_policy(&self) -> RankPolicy {
        if self.rank == 0 {
            RankPolicy::Threshold(self.rank_tol)
        } else {
            RankPolicy::Fixed(self.rank)
        }
    }

    pub fn mv_noise(&self) -> f64 {
        self.mv_noise_variance.unwrap_or(self.noise_variance)
    }

    pub fn lti_eigs(&self) -> Vec<c64> {
        to_c64(&self.cont_eigs)
    }

    pub fn lti_switch_eigs(&self) -> Vec<c64> {
        to_c64(&self.switch_eigs)
    }

    pub fn full_workspace(&self) -> Result<Workspace> {
        Workspace::grid(self.full_width, self.full_height)
    }

    pub fn av_workspace(&self) -> Result<Workspace> {
        downsample_workspace(&self.full_workspace()?, self.av_step, self.av_step)
    }

    /// The high-fidelity grid, on which the model lives.
    pub fn mv_workspace(&self) -> Result<Workspace> {
        downsample_workspace(&self.full_workspace()?, self.mv_step, self.mv_step)
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| Error::Config("a seed is required for this command".into()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.init_t < 2 {
            return bad(format!("init_t must be at least 2, got {}", self.init_t));
        }
        if self.update_every < 1 {
            return bad("update_every must be at least 1".into());
        }
        if self.t_total <= self.init_t {
            return bad(format!("t_total ({}) must exceed init_t ({})", self.t_total, self.init_t));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if self.full_width == 0 || self.full_height == 0 {
            return bad("grid dimensions must be positive".into());
        }
        if self.av_step == 0 || self.mv_step == 0 || self.av_time_step == 0 || self.mv_time_step == 0 {
            return bad("sampling steps must be at least 1".into());
        }
        if self.av_step < self.mv_step {
            return bad("the aerial grid cannot be finer than the marine grid".into());
        }
        if self.mv_time_step % self.av_time_step != 0 {
            return bad("mv_time_step must be a multiple of av_time_step".into());
        }
        if self.time_stride == 0 {
            return bad("time_stride must be at least 1".into());
        }
        if !(self.noise_variance >= 0.0) || !(self.mv_noise() >= 0.0) || !(self.av_beta >= 0.0) {
            return bad("noise parameters must be nonnegative".into());
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        if self.gammas.iter().any(|g| !(*g > 0.0 && *g <= 1.0)) {
            return bad("every entry of gammas must lie in (0, 1]".into());
        }
        if self.variances.iter().any(|v| !(*v >= 0.0)) {
            return bad("variances must be nonnegative".into());
        }
        if self.mv_count == 0 || self.av_count == 0 {
            return bad("mv_count and av_count must be positive".into());
        }
        if self.generator == Generator::ExternalSeries && self.series_path.is_none() {
            return bad("generator = \"external_series\" needs series_path".into());
        }
        if self.generator == Generator::Lti && self.cont_eigs.is_empty() {
            return bad("the LTI generator needs cont_eigs".into());
        }
        if self.method == Method::Longterm && self.generator != Generator::ExternalSeries {
            let n = self.mv_workspace()?.len();
            if self.init_t < n {
                return bad(format!(
                    "method = \"longterm\" needs init_t >= N = {n} model grid points, got {}",
                    self.init_t
                ));
            }
        }
        Ok(())
    }
}
