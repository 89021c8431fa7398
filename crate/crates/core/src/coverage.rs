//! Coverage control for the low-fidelity (aerial) robots.
//!
//! The density over the grid comes from the model's temporal spectrum: each mode
//! contributes `|Φ_{p,i}| · |ln|λ_i||^exponent`, so points dominated by strongly
//! growing or decaying modes attract robots. Robots then run Lloyd's algorithm on the
//! coverage cost `H = Σ_q ‖q − p(q)‖² φ(q)`, `p(q)` being the robot owning `q`.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::dmd::DmdModel;
use crate::error::{Error, Result};
use crate::field::{FieldSnapshot, Workspace};

pub const DENSITY_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMap {
    weights: Vec<f64>,
}

impl DensityMap {
    /// Normalizes nonnegative weights to unit sum; an all-zero input becomes uniform.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidInput("empty density".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidInput("density weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total == 0.0 {
            return Ok(Self::uniform(weights.len()));
        }
        Ok(Self { weights: weights.into_iter().map(|w| w / total).collect() })
    }

    pub fn uniform(n: usize) -> Self {
        Self { weights: vec![1.0 / n as f64; n] }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    fn floored(self) -> Self {
        let floored: Vec<f64> = self.weights.iter().map(|w| w + DENSITY_FLOOR).collect();
        let total: f64 = floored.iter().sum();
        Self { weights: floored.into_iter().map(|w| w / total).collect() }
    }
}

/// Weight `Σ_i |Φ_{p,i}| · |ln|λ_i||^exponent`, normalized, with a small floor so every
/// point keeps some mass. Falls back to uniform when no mode grows or decays.
pub fn density_from_temporal(m: &DmdModel, exponent: f64) -> Result<DensityMap> {
    if m.rank() == 0 {
        return Err(Error::InvalidInput("model has no modes".into()));
    }
    let rates: Vec<f64> = m
        .eigenvalues
        .iter()
        .map(|l| l.norm().max(f64::MIN_POSITIVE).ln().abs().powf(exponent))
        .collect();
    let n = m.n_points();
    let weights: Vec<f64> = (0..n)
        .map(|p| rates.iter().enumerate().map(|(i, r)| m.modes[(p, i)].norm() * r).sum())
        .collect();
    Ok(DensityMap::new(weights)?.floored())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RobotConfiguration {
    positions: Vec<(f64, f64)>,
}

impl RobotConfiguration {
    pub fn new(positions: Vec<(f64, f64)>, ws: &Workspace) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidInput("need at least one robot".into()));
        }
        if let Some(p) = positions.iter().find(|p| !ws.contains(**p)) {
            return Err(Error::InvalidInput(format!("robot position {p:?} outside the workspace")));
        }
        Ok(Self { positions })
    }

    /// Uniformly random positions inside the workspace rectangle.
    pub fn random<R: Rng + ?Sized>(count: usize, ws: &Workspace, rng: &mut R) -> Result<Self> {
        let (ex, ey) = ws.extent();
        let positions = (0..count).map(|_| (rng.random::<f64>() * ex, rng.random::<f64>() * ey)).collect();
        Self::new(positions, ws)
    }

    pub fn positions(&self) -> &[(f64, f64)] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}

/// Owner of every grid point: the nearest robot, lowest index on ties.
pub fn voronoi_partition(ws: &Workspace, cfg: &RobotConfiguration) -> Vec<usize> {
    ws.positions()
        .map(|q| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, &p) in cfg.positions.iter().enumerate() {
                let d = dist2(q, p);
                if d < best_d {
                    best = j;
                    best_d = d;
                }
            }
            best
        })
        .collect()
}

fn check_density(ws: &Workspace, density: &DensityMap) -> Result<()> {
    if density.len() != ws.len() {
        return Err(Error::DimensionMismatch { what: "density length", expected: ws.len(), found: density.len() });
    }
    Ok(())
}

/// Moves each robot to the density-weighted centroid of its cell; a robot whose cell
/// carries no mass stays put.
pub fn lloyd_step(ws: &Workspace, cfg: &RobotConfiguration, density: &DensityMap) -> Result<RobotConfiguration> {
    check_density(ws, density)?;
    let owner = voronoi_partition(ws, cfg);
    let mut acc = vec![(0.0, 0.0, 0.0); cfg.len()];
    for (i, q) in ws.positions().enumerate() {
        let w = density.weights[i];
        let a = &mut acc[owner[i]];
        a.0 += w * q.0;
        a.1 += w * q.1;
        a.2 += w;
    }
    let positions = acc
        .iter()
        .zip(&cfg.positions)
        .map(|(&(sx, sy, m), &p)| if m > 0.0 { ws.clamp((sx / m, sy / m)) } else { p })
        .collect();
    Ok(RobotConfiguration { positions })
}

/// `Σ_q ‖q − p(q)‖² φ(q)`.
pub fn coverage_cost(ws: &Workspace, cfg: &RobotConfiguration, density: &DensityMap) -> Result<f64> {
    check_density(ws, density)?;
    let owner = voronoi_partition(ws, cfg);
    Ok(ws
        .positions()
        .enumerate()
        .map(|(i, q)| dist2(q, cfg.positions[owner[i]]) * density.weights[i])
        .sum())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LloydOptions {
    pub max_iters: usize,
    /// Stop once no robot moves farther than this (physical units).
    pub tol: f64,
}

impl Default for LloydOptions {
    fn default() -> Self {
        Self { max_iters: 100, tol: 1e-6 }
    }
}

#[derive(Clone, Debug)]
pub struct LloydResult {
    pub config: RobotConfiguration,
    /// Cost before the first step and after every step.
    pub costs: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn lloyd(ws: &Workspace, cfg: &RobotConfiguration, density: &DensityMap, opts: LloydOptions) -> Result<LloydResult> {
    let mut current = cfg.clone();
    let mut costs = vec![coverage_cost(ws, &current, density)?];
    for it in 0..opts.max_iters {
        let next = lloyd_step(ws, &current, density)?;
        let moved = current
            .positions
            .iter()
            .zip(&next.positions)
            .map(|(a, b)| dist2(*a, *b).sqrt())
            .fold(0.0, f64::max);
        current = next;
        costs.push(coverage_cost(ws, &current, density)?);
        if moved < opts.tol {
            return Ok(LloydResult { config: current, costs, iterations: it + 1, converged: true });
        }
    }
    Ok(LloydResult { config: current, costs, iterations: opts.max_iters, converged: false })
}

/// Low-fidelity measurement of `truth`: each point is read by its Voronoi owner with
/// Gaussian noise of standard deviation `sigma0 · (1 + beta · d)`, `d` the distance to
/// that robot.
pub fn av_sense<R: Rng + ?Sized>(
    truth: &FieldSnapshot,
    ws: &Workspace,
    cfg: &RobotConfiguration,
    sigma0: f64,
    beta: f64,
    rng: &mut R,
) -> Result<FieldSnapshot> {
    truth.check_workspace(ws)?;
    if !(sigma0 >= 0.0 && beta >= 0.0) {
        return Err(Error::InvalidInput("sigma0 and beta must be nonnegative".into()));
    }
    if sigma0 == 0.0 {
        return Ok(truth.clone());
    }
    let owner = voronoi_partition(ws, cfg);
    let values = ws
        .positions()
        .enumerate()
        .map(|(i, q)| {
            let d = dist2(q, cfg.positions[owner[i]]).sqrt();
            let std = sigma0 * (1.0 + beta * d);
            truth.values[i] + Normal::new(0.0, std).expect("finite std").sample(rng)
        })
        .collect();
    Ok(FieldSnapshot { values, time: truth.time })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Purpose};
    use faer::{c64, Mat};
    use proptest::prelude::*;
    use rand::Rng;

    fn model(modes: Mat<c64>, eigs: Vec<c64>) -> DmdModel {
        let r = eigs.len();
        DmdModel {
            modes,
            eigenvalues: eigs,
            amplitudes: vec![c64::new(1.0, 0.0); r],
            svd: None,
            dt: 1.0,
            anchor: 0,
            span_residual: None,
        }
    }

    fn line() -> Workspace {
        Workspace::grid(10, 1).unwrap()
    }

    #[test]
    fn density_cases() {
        let unit = model(Mat::from_fn(4, 2, |i, j| c64::new((i + j) as f64, 1.0)), vec![c64::new(0.0, 1.0), c64::new(-1.0, 0.0)]);
        let d = density_from_temporal(&unit, 1.0).unwrap();
        assert!(d.weights().iter().all(|w| (w - 0.25).abs() < 1e-15));

        let e1 = model(Mat::from_fn(3, 1, |i, _| c64::new(if i == 0 { 1.0 } else { 0.0 }, 0.0)), vec![c64::new(0.5, 0.0)]);
        let d = density_from_temporal(&e1, 1.0).unwrap();
        let expect_rest = 1e-12 / (1.0 + 3e-12);
        assert!((d.weights()[0] - (1.0 + 1e-12) / (1.0 + 3e-12)).abs() < 1e-15);
        assert!((d.weights()[1] - expect_rest).abs() < 1e-20);

        // Equal |ln|λ||, disjoint supports with magnitudes 3 and 1.
        let two = model(
            Mat::from_fn(2, 2, |i, j| c64::new(if i == j { [3.0, 1.0][i] } else { 0.0 }, 0.0)),
            vec![c64::new(0.5, 0.0), c64::new(2.0, 0.0)],
        );
        let d = density_from_temporal(&two, 1.0).unwrap();
        assert!((d.weights()[0] / d.weights()[1] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn density_ignores_global_phase() {
        let base = Mat::from_fn(5, 2, |i, j| c64::new(i as f64 - j as f64, 0.5 * j as f64));
        let rot = c64::from_polar(1.0, 0.7);
        let a = model(base.clone(), vec![c64::new(0.9, 0.1), c64::new(0.3, 0.0)]);
        let b = model(Mat::from_fn(5, 2, |i, j| base[(i, j)] * rot), a.eigenvalues.clone());
        let (da, db) = (density_from_temporal(&a, 1.0).unwrap(), density_from_temporal(&b, 1.0).unwrap());
        for (x, y) in da.weights().iter().zip(db.weights()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn voronoi_cases() {
        let ws = line();
        let one = RobotConfiguration::new(vec![(3.3, 0.0)], &ws).unwrap();
        assert!(voronoi_partition(&ws, &one).iter().all(|&o| o == 0));
        let two = RobotConfiguration::new(vec![(0.0, 0.0), (9.0, 0.0)], &ws).unwrap();
        assert_eq!(voronoi_partition(&ws, &two), vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
        let sq = Workspace::grid(4, 4).unwrap();
        let mirrored = RobotConfiguration::new(vec![(0.5, 1.5), (2.5, 1.5)], &sq).unwrap();
        let owner = voronoi_partition(&sq, &mirrored);
        assert_eq!(owner.iter().filter(|&&o| o == 0).count(), 8);
    }

    #[test]
    fn lloyd_on_line() {
        let ws = line();
        let d = DensityMap::uniform(10);
        let cfg = RobotConfiguration::new(vec![(0.0, 0.0), (9.0, 0.0)], &ws).unwrap();
        let step = lloyd_step(&ws, &cfg, &d).unwrap();
        assert!((step.positions()[0].0 - 2.0).abs() < 1e-12 && (step.positions()[1].0 - 7.0).abs() < 1e-12);
        let res = lloyd(&ws, &cfg, &d, LloydOptions::default()).unwrap();
        assert!(res.converged);
        assert!((res.config.positions()[0].0 - 2.0).abs() < 1e-6 && (res.config.positions()[1].0 - 7.0).abs() < 1e-6);
        let again = lloyd_step(&ws, &res.config, &d).unwrap();
        assert_eq!(again, res.config);
    }

    #[test]
    fn cost_cases() {
        let ws = Workspace::grid(5, 5).unwrap();
        let mut w = vec![0.0; 25];
        w[7] = 1.0;
        let point = DensityMap::new(w).unwrap();
        let at = RobotConfiguration::new(vec![ws.position(7)], &ws).unwrap();
        assert_eq!(coverage_cost(&ws, &at, &point).unwrap(), 0.0);

        let uniform = DensityMap::uniform(25);
        let mut best = (f64::INFINITY, 0);
        for i in 0..25 {
            let c = coverage_cost(&ws, &RobotConfiguration::new(vec![ws.position(i)], &ws).unwrap(), &uniform).unwrap();
            if c < best.0 {
                best = (c, i);
            }
        }
        assert_eq!(best.1, ws.index_of(2, 2));

        let wide = Workspace::new(5, 5, 2.0).unwrap();
        let cfg = RobotConfiguration::new(vec![(1.0, 3.0)], &ws).unwrap();
        let cfg2 = RobotConfiguration::new(vec![(2.0, 6.0)], &wide).unwrap();
        let (c1, c2) = (coverage_cost(&ws, &cfg, &uniform).unwrap(), coverage_cost(&wide, &cfg2, &uniform).unwrap());
        assert!((c2 - 4.0 * c1).abs() < 1e-12);
    }

    #[test]
    fn av_sense_noise_model() {
        let ws = line();
        let truth = FieldSnapshot::new((0..10).map(|i| i as f64).collect(), 0.0).unwrap();
        let cfg = RobotConfiguration::new(vec![(0.0, 0.0), (9.0, 0.0)], &ws).unwrap();
        let mut r = rng::stream(1, 0, Purpose::AerialNoise);
        assert_eq!(av_sense(&truth, &ws, &cfg, 0.0, 2.0, &mut r).unwrap(), truth);

        let (sigma0, beta) = (0.3, 0.5);
        let trials = 10_000;
        let (mut near, mut far) = (0.0, 0.0);
        for _ in 0..trials {
            let s = av_sense(&truth, &ws, &cfg, sigma0, beta, &mut r).unwrap();
            near += (s.values[0] - truth.values[0]).powi(2);
            far += (s.values[4] - truth.values[4]).powi(2);
        }
        let ratio = far / near;
        let expected = ((1.0 + beta * 4.0) / (1.0 + beta * 0.0)).powi(2);
        assert!((ratio / expected - 1.0).abs() < 0.1, "{ratio} vs {expected}");

        let flat: Vec<f64> = (0..trials).map(|_| av_sense(&truth, &ws, &cfg, sigma0, 0.0, &mut r).unwrap().values[4] - 4.0).collect();
        let var = flat.iter().map(|v| v * v).sum::<f64>() / trials as f64;
        assert!((var / (sigma0 * sigma0) - 1.0).abs() < 0.1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn lloyd_cost_never_increases(seed in 0u64..100_000, robots in 1usize..5) {
            let ws = Workspace::grid(8, 6).unwrap();
            let mut r = rng::stream(seed, 0, Purpose::Misc);
            let density = DensityMap::new((0..48).map(|_| r.random::<f64>()).collect()).unwrap();
            let cfg = RobotConfiguration::random(robots, &ws, &mut r).unwrap();
            let owner = voronoi_partition(&ws, &cfg);
            prop_assert_eq!(owner.len(), 48);
            let res = lloyd(&ws, &cfg, &density, LloydOptions::default()).unwrap();
            for w in res.costs.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12);
            }
            let total: f64 = density.weights().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }
}
