//! Grid workspace, snapshot containers, synthetic field generators, noise and
//! spatial downsampling.

use faer::{c64, Mat, MatRef};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

/// Rectangular grid discretization of the field domain.
///
/// Points are stored row-major: `index = y * width + x`. Physical coordinates of
/// a point are `(x * spacing_x, y * spacing_y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    width: usize,
    height: usize,
    spacing_x: f64,
    spacing_y: f64,
}

impl Workspace {
    pub fn new(width: usize, height: usize, spacing: f64) -> Result<Self> {
        Self::with_spacing(width, height, spacing, spacing)
    }

    pub fn with_spacing(width: usize, height: usize, spacing_x: f64, spacing_y: f64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!(
                "workspace must have at least one cell, got {width}x{height}"
            )));
        }
        if !(spacing_x > 0.0 && spacing_y > 0.0 && spacing_x.is_finite() && spacing_y.is_finite()) {
            return Err(Error::InvalidInput("grid spacing must be positive and finite".into()));
        }
        Ok(Self { width, height, spacing_x, spacing_y })
    }

    /// Unit-spaced grid.
    pub fn grid(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, 1.0)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn spacing(&self) -> (f64, f64) {
        (self.spacing_x, self.spacing_y)
    }

    /// Number of grid points N.
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index_of(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y * self.width + x
    }

    pub fn point_of(&self, index: usize) -> (usize, usize) {
        debug_assert!(index < self.len());
        (index % self.width, index / self.width)
    }

    pub fn position(&self, index: usize) -> (f64, f64) {
        let (x, y) = self.point_of(index);
        (x as f64 * self.spacing_x, y as f64 * self.spacing_y)
    }

    /// Upper corner of the workspace rectangle `[0, ex] x [0, ey]`.
    pub fn extent(&self) -> (f64, f64) {
        (
            (self.width - 1) as f64 * self.spacing_x,
            (self.height - 1) as f64 * self.spacing_y,
        )
    }

    pub fn contains(&self, p: (f64, f64)) -> bool {
        let (ex, ey) = self.extent();
        let tol = 1e-9 * (1.0 + ex.max(ey));
        p.0 >= -tol && p.1 >= -tol && p.0 <= ex + tol && p.1 <= ey + tol
    }

    pub fn clamp(&self, p: (f64, f64)) -> (f64, f64) {
        let (ex, ey) = self.extent();
        (p.0.clamp(0.0, ex), p.1.clamp(0.0, ey))
    }

    /// Grid coordinates mapped affinely onto `[-1, 1]` per axis (0 for a single-cell axis).
    pub fn normalized(&self, index: usize) -> (f64, f64) {
        let (x, y) = self.point_of(index);
        (centered(x, self.width), centered(y, self.height))
    }

    /// Grid coordinates mapped onto `[0, 1]` per axis (0 for a single-cell axis).
    pub fn unit_coords(&self, index: usize) -> (f64, f64) {
        let (x, y) = self.point_of(index);
        (affine_unit(x, self.width), affine_unit(y, self.height))
    }

    pub fn positions(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..self.len()).map(|i| self.position(i))
    }
}

fn affine_unit(i: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        i as f64 / (n - 1) as f64
    }
}

fn centered(i: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        2.0 * i as f64 / (n - 1) as f64 - 1.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSnapshot {
    pub values: Vec<f64>,
    pub time: f64,
}

impl FieldSnapshot {
    pub fn new(values: Vec<f64>, time: f64) -> Result<Self> {
        if !(time >= 0.0 && time.is_finite()) {
            return Err(Error::InvalidInput(format!("snapshot time must be finite and nonnegative, got {time}")));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("snapshot value at index {i} is not finite")));
        }
        Ok(Self { values, time })
    }

    pub fn zeros(n: usize, time: f64) -> Self {
        Self { values: vec![0.0; n], time }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_workspace(&self, ws: &Workspace) -> Result<()> {
        if self.values.len() != ws.len() {
            return Err(Error::DimensionMismatch {
                what: "snapshot length vs workspace size",
                expected: ws.len(),
                found: self.values.len(),
            });
        }
        Ok(())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Time-ordered, uniformly spaced snapshots of one workspace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotSeries {
    snapshots: Vec<FieldSnapshot>,
    dt: f64,
}

impl SnapshotSeries {
    pub fn new(snapshots: Vec<FieldSnapshot>, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
        }
        if let Some(first) = snapshots.first() {
            let n = first.len();
            for (k, s) in snapshots.iter().enumerate() {
                if s.len() != n {
                    return Err(Error::DimensionMismatch { what: "snapshot length in series", expected: n, found: s.len() });
                }
                if k > 0 {
                    let gap = s.time - snapshots[k - 1].time;
                    if gap <= 0.0 {
                        return Err(Error::InvalidInput(format!("snapshot times must strictly increase (index {k})")));
                    }
                    if ((gap - dt) / dt).abs() > 1e-9 {
                        return Err(Error::InvalidInput(format!(
                            "snapshot spacing {gap} at index {k} differs from dt = {dt}"
                        )));
                    }
                }
            }
        }
        Ok(Self { snapshots, dt })
    }

    /// Builds a series from the columns of an `N x T` matrix, starting at `t0`.
    pub fn from_matrix(m: MatRef<'_, f64>, dt: f64, t0: f64) -> Result<Self> {
        let snaps = (0..m.ncols())
            .map(|j| FieldSnapshot::new(m.col(j).iter().copied().collect(), t0 + j as f64 * dt))
            .collect::<Result<Vec<_>>>()?;
        Self::new(snaps, dt)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn n_points(&self) -> usize {
        self.snapshots.first().map_or(0, |s| s.len())
    }

    pub fn snapshots(&self) -> &[FieldSnapshot] {
        &self.snapshots
    }

    pub fn get(&self, k: usize) -> Option<&FieldSnapshot> {
        self.snapshots.get(k)
    }

    pub fn into_snapshots(self) -> Vec<FieldSnapshot> {
        self.snapshots
    }

    /// Columns-as-snapshots matrix over `range` of snapshot indices.
    pub fn matrix_range(&self, start: usize, end: usize) -> Mat<f64> {
        let n = self.n_points();
        Mat::from_fn(n, end - start, |i, j| self.snapshots[start + j].values[i])
    }

    pub fn to_matrix(&self) -> Mat<f64> {
        self.matrix_range(0, self.len())
    }

    /// Keeps every `stride`-th snapshot; `dt` scales accordingly.
    pub fn subsample_time(&self, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::InvalidInput("time stride must be at least 1".into()));
        }
        let snaps = self.snapshots.iter().step_by(stride).cloned().collect();
        Self::new(snaps, self.dt * stride as f64)
    }
}

/// `(1.9 i)^(-t)` on the principal branch.
fn damped_factor(t: f64) -> c64 {
    let log_base = c64::new(1.9f64.ln(), std::f64::consts::FRAC_PI_2);
    (-log_base * t).exp()
}

/// Complex damped-oscillation field `senh(x) senh(y) (1.9i)^(-t)` with
/// `senh(z) = (e^z + e^-z) / 2` taken exactly as defined, on `[-1, 1]^2` coordinates.
pub fn damped_oscillation_complex(ws: &Workspace, t: f64) -> Vec<c64> {
    let f = damped_factor(t);
    (0..ws.len())
        .map(|i| {
            let (x, y) = ws.normalized(i);
            f * (senh(x) * senh(y))
        })
        .collect()
}

fn senh(z: f64) -> f64 {
    (z.exp() + (-z).exp()) / 2.0
}

/// Observable (real part) of the damped-oscillation field at time `t`.
pub fn gen_damped_oscillation(ws: &Workspace, t: f64) -> FieldSnapshot {
    assert!(t >= 0.0, "time must be nonnegative");
    let values = damped_oscillation_complex(ws, t).into_iter().map(|v| v.re).collect();
    FieldSnapshot { values, time: t }
}

pub fn gen_damped_oscillation_series(ws: &Workspace, steps: usize, dt: f64) -> Result<SnapshotSeries> {
    let snaps = (0..steps).map(|k| gen_damped_oscillation(ws, k as f64 * dt)).collect();
    SnapshotSeries::new(snaps, dt)
}

/// One excitation slot of an LTI field: a real rate with one spatial vector, or a
/// complex rate (standing in for itself and its conjugate) with two.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Slot {
    Real(f64),
    Pair(c64),
}

impl Slot {
    fn width(&self) -> usize {
        match self {
            Slot::Real(_) => 1,
            Slot::Pair(_) => 2,
        }
    }
}

fn group_slots(cont_eigs: &[c64]) -> Vec<Slot> {
    let mut used = vec![false; cont_eigs.len()];
    let mut slots = Vec::new();
    for i in 0..cont_eigs.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let w = cont_eigs[i];
        if w.im == 0.0 {
            slots.push(Slot::Real(w.re));
            continue;
        }
        if let Some(j) = (i + 1..cont_eigs.len()).find(|&j| !used[j] && cont_eigs[j] == w.conj()) {
            used[j] = true;
        }
        slots.push(Slot::Pair(if w.im > 0.0 { w } else { w.conj() }));
    }
    slots
}

/// Linear time-invariant field: fixed orthonormal spatial vectors whose
/// amplitudes evolve as `exp(omega t)`.
///
/// A real rate `omega` contributes `q exp(omega t)`. A complex rate contributes
/// `Re((a + i b) exp(omega t))`, which excites both `omega` and its conjugate.
/// All amplitudes are one at `t = 0`.
#[derive(Clone, Debug)]
pub struct LtiField {
    basis: Mat<f64>,
    slots: Vec<Slot>,
}

impl LtiField {
    pub fn new(ws: &Workspace, cont_eigs: &[c64], mode_seed: u64) -> Result<Self> {
        if cont_eigs.is_empty() {
            return Err(Error::InvalidInput("at least one continuous-time eigenvalue is required".into()));
        }
        let n = ws.len();
        let slots = group_slots(cont_eigs);
        let needed: usize = slots.iter().map(Slot::width).sum();
        if cont_eigs.len() > n || needed > n {
            return Err(Error::InvalidInput(format!(
                "{} modes need {needed} spatial directions but the workspace has only N = {n}",
                cont_eigs.len()
            )));
        }
        let mut rng = rng::stream(mode_seed, 0, Purpose::Modes);
        let gauss = Mat::from_fn(n, needed, |_, _| rng.sample::<f64, _>(StandardNormal));
        let basis = gauss.qr().compute_thin_Q();
        Ok(Self { basis, slots })
    }

    pub fn n_points(&self) -> usize {
        self.basis.nrows()
    }

    /// Field at continuous time `t`, with slot-wise rates overridden by `rates`.
    fn evaluate_with(&self, rates: &[Slot], amps: &[c64], t_local: f64) -> Vec<f64> {
        let n = self.basis.nrows();
        let mut out = vec![0.0; n];
        let mut col = 0;
        for (slot, amp) in rates.iter().zip(amps) {
            match *slot {
                Slot::Real(w) => {
                    let c = (amp * (w * t_local).exp()).re;
                    for i in 0..n {
                        out[i] += c * self.basis[(i, col)];
                    }
                    col += 1;
                }
                Slot::Pair(w) => {
                    let z = amp * (w * t_local).exp();
                    for i in 0..n {
                        out[i] += z.re * self.basis[(i, col)] - z.im * self.basis[(i, col + 1)];
                    }
                    col += 2;
                }
            }
        }
        out
    }

    pub fn evaluate(&self, t: f64) -> Vec<f64> {
        let ones = vec![c64::new(1.0, 0.0); self.slots.len()];
        self.evaluate_with(&self.slots, &ones, t)
    }

    pub fn series(&self, steps: usize, dt: f64) -> Result<SnapshotSeries> {
        let snaps = (0..steps)
            .map(|k| {
                let t = k as f64 * dt;
                FieldSnapshot { values: self.evaluate(t), time: t }
            })
            .collect();
        SnapshotSeries::new(snaps, dt)
    }

    /// Series whose rates switch from this field's to `after` at step `switch_step`.
    /// Slot amplitudes are continuous across the switch.
    pub fn switched_series(&self, after: &[c64], switch_step: usize, steps: usize, dt: f64) -> Result<SnapshotSeries> {
        let after_slots = group_slots(after);
        let compatible = after_slots.len() == self.slots.len()
            && after_slots.iter().zip(&self.slots).all(|(a, b)| a.width() == b.width());
        if !compatible {
            return Err(Error::InvalidInput(
                "post-switch eigenvalues must have the same real/complex structure as the pre-switch ones".into(),
            ));
        }
        let t_switch = switch_step as f64 * dt;
        let amps_at_switch: Vec<c64> = self
            .slots
            .iter()
            .map(|s| match *s {
                Slot::Real(w) => c64::new((w * t_switch).exp(), 0.0),
                Slot::Pair(w) => (w * t_switch).exp(),
            })
            .collect();
        let ones = vec![c64::new(1.0, 0.0); self.slots.len()];
        let snaps = (0..steps)
            .map(|k| {
                let t = k as f64 * dt;
                let values = if k < switch_step {
                    self.evaluate_with(&self.slots, &ones, t)
                } else {
                    self.evaluate_with(&after_slots, &amps_at_switch, t - t_switch)
                };
                FieldSnapshot { values, time: t }
            })
            .collect();
        SnapshotSeries::new(snaps, dt)
    }
}

/// Synthesizes `steps` snapshots `x(k dt)` of an LTI field with the given
/// continuous-time eigenvalues and seeded orthonormal spatial modes.
pub fn gen_lti_field(ws: &Workspace, cont_eigs: &[c64], mode_seed: u64, steps: usize, dt: f64) -> Result<SnapshotSeries> {
    if steps < 2 {
        return Err(Error::InvalidInput("an LTI series needs at least 2 snapshots".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidInput("dt must be positive".into()));
    }
    LtiField::new(ws, cont_eigs, mode_seed)?.series(steps, dt)
}

/// Adds i.i.d. `N(0, variance)` samples drawn from the seeded noise stream.
pub fn inject_noise(s: &FieldSnapshot, variance: f64, seed: u64) -> Result<FieldSnapshot> {
    let mut rng = rng::stream(seed, 0, Purpose::Noise);
    inject_noise_with(s, variance, &mut rng)
}

pub fn inject_noise_with<R: Rng + ?Sized>(s: &FieldSnapshot, variance: f64, rng: &mut R) -> Result<FieldSnapshot> {
    if !(variance >= 0.0) {
        return Err(Error::InvalidInput(format!("noise variance must be nonnegative, got {variance}")));
    }
    if variance == 0.0 {
        return Ok(s.clone());
    }
    let std = variance.sqrt();
    let values = s
        .values
        .iter()
        .map(|v| v + std * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(FieldSnapshot { values, time: s.time })
}

/// Noise for a whole series from one stream, snapshot by snapshot.
pub fn inject_noise_series(s: &SnapshotSeries, variance: f64, seed: u64) -> Result<SnapshotSeries> {
    let mut rng = rng::stream(seed, 0, Purpose::Noise);
    let snaps = s
        .snapshots()
        .iter()
        .map(|f| inject_noise_with(f, variance, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    SnapshotSeries::new(snaps, s.dt())
}

/// Coarse workspace made of every `step_x`-th column and `step_y`-th row.
pub fn downsample_workspace(ws: &Workspace, step_x: usize, step_y: usize) -> Result<Workspace> {
    if step_x == 0 || step_y == 0 {
        return Err(Error::InvalidInput("downsampling steps must be at least 1".into()));
    }
    let (sx, sy) = ws.spacing();
    Workspace::with_spacing(
        ws.width().div_ceil(step_x),
        ws.height().div_ceil(step_y),
        sx * step_x as f64,
        sy * step_y as f64,
    )
}

pub fn downsample(s: &FieldSnapshot, ws: &Workspace, step_x: usize, step_y: usize) -> Result<(FieldSnapshot, Workspace)> {
    s.check_workspace(ws)?;
    let coarse = downsample_workspace(ws, step_x, step_y)?;
    let values = (0..coarse.len())
        .map(|i| {
            let (cx, cy) = coarse.point_of(i);
            s.values[ws.index_of(cx * step_x, cy * step_y)]
        })
        .collect();
    Ok((FieldSnapshot { values, time: s.time }, coarse))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> c64 {
        c64::new(re, im)
    }

    #[test]
    fn index_mapping_round_trips() {
        let ws = Workspace::grid(7, 5).unwrap();
        for i in 0..ws.len() {
            let (x, y) = ws.point_of(i);
            assert_eq!(ws.index_of(x, y), i);
        }
        assert_eq!(ws.len(), 35);
    }

    #[test]
    fn rejects_empty_workspace() {
        assert!(Workspace::grid(0, 3).is_err());
        assert!(Workspace::new(2, 2, 0.0).is_err());
    }

    #[test]
    fn damped_oscillation_single_point_at_origin_is_one() {
        let ws = Workspace::grid(1, 1).unwrap();
        let s = gen_damped_oscillation(&ws, 0.0);
        assert_eq!(s.values, vec![1.0]);
    }

    #[test]
    fn damped_oscillation_matches_closed_form_at_t1() {
        // (1.9i)^-1 = -i / 1.9, purely imaginary: the observable collapses to ~0.
        let ws = Workspace::grid(4, 3).unwrap();
        let s = gen_damped_oscillation(&ws, 1.0);
        let z = damped_oscillation_complex(&ws, 1.0);
        for i in 0..ws.len() {
            let (x, y) = ws.normalized(i);
            let mag = x.cosh() * y.cosh() / 1.9;
            assert!((z[i].norm() - mag).abs() < 1e-12);
            assert!((z[i].im + mag).abs() < 1e-12);
            assert!(s.values[i].abs() < 1e-12);
        }
    }

    #[test]
    fn damped_oscillation_envelope() {
        let ws = Workspace::grid(6, 6).unwrap();
        let max0 = damped_oscillation_complex(&ws, 0.0).iter().map(|v| v.norm()).fold(0.0, f64::max);
        for &t in &[0.3, 1.7, 2.0, 5.5] {
            let maxt = damped_oscillation_complex(&ws, t).iter().map(|v| v.norm()).fold(0.0, f64::max);
            assert!((maxt / max0 - 1.9f64.powf(-t)).abs() < 1e-9);
        }
        // The observable attains the envelope when the phase is a multiple of pi.
        let real0 = gen_damped_oscillation(&ws, 0.0).values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let real2 = gen_damped_oscillation(&ws, 2.0).values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!((real2 / real0 - 1.9f64.powi(-2)).abs() < 1e-9);
    }

    #[test]
    fn lti_zero_rate_is_constant() {
        let ws = Workspace::grid(3, 3).unwrap();
        let s = gen_lti_field(&ws, &[c(0.0, 0.0)], 4, 5, 0.1).unwrap();
        for snap in s.snapshots() {
            for (a, b) in snap.values.iter().zip(&s.snapshots()[0].values) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn lti_conjugate_pair_decays_with_envelope() {
        let ws = Workspace::grid(4, 4).unwrap();
        let dt = 0.05;
        let s = gen_lti_field(&ws, &[c(-1.0, 2.0), c(-1.0, -2.0)], 11, 60, dt).unwrap();
        // x(t) = e^{-t}(a cos 2t - b sin 2t) with a, b orthonormal: |x(t)| = e^{-t}.
        for (k, snap) in s.snapshots().iter().enumerate() {
            let t = k as f64 * dt;
            assert!((snap.norm() - (-t).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn lti_rejects_more_modes_than_points() {
        let ws = Workspace::grid(2, 1).unwrap();
        let eigs = [c(-1.0, 0.0), c(-2.0, 0.0), c(-3.0, 0.0)];
        assert!(gen_lti_field(&ws, &eigs, 0, 10, 0.1).is_err());
        // A lone complex rate needs two directions.
        let ws1 = Workspace::grid(1, 1).unwrap();
        assert!(gen_lti_field(&ws1, &[c(-1.0, 1.0)], 0, 10, 0.1).is_err());
    }

    #[test]
    fn lti_real_negative_rates_decrease_norm() {
        let ws = Workspace::grid(5, 4).unwrap();
        let s = gen_lti_field(&ws, &[c(-0.5, 0.0), c(-2.0, 0.0), c(-0.1, 0.0)], 3, 40, 0.1).unwrap();
        let norms: Vec<f64> = s.snapshots().iter().map(FieldSnapshot::norm).collect();
        assert!(norms.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn switched_series_is_continuous() {
        let ws = Workspace::grid(3, 2).unwrap();
        let f = LtiField::new(&ws, &[c(-0.2, 1.0), c(-0.2, -1.0), c(-0.5, 0.0)], 9).unwrap();
        let s = f.switched_series(&[c(-0.1, 2.0), c(-0.1, -2.0), c(-1.5, 0.0)], 10, 20, 0.1).unwrap();
        let plain = f.series(11, 0.1).unwrap();
        assert_eq!(s.snapshots()[9].values, plain.snapshots()[9].values);
        for (a, b) in s.snapshots()[10].values.iter().zip(&plain.snapshots()[10].values) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_is_deterministic_and_seed_dependent() {
        let s = FieldSnapshot::zeros(50, 0.0);
        assert_eq!(inject_noise(&s, 0.0, 1).unwrap(), s);
        let a = inject_noise(&s, 0.04, 5).unwrap();
        let b = inject_noise(&s, 0.04, 5).unwrap();
        let c = inject_noise(&s, 0.04, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(inject_noise(&s, -1.0, 0).is_err());
    }

    #[test]
    fn noise_sample_variance() {
        let s = FieldSnapshot::zeros(100_000, 0.0);
        let noisy = inject_noise(&s, 0.04, 2024).unwrap();
        let n = noisy.len() as f64;
        let mean = noisy.values.iter().sum::<f64>() / n;
        let var = noisy.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var - 0.04).abs() < 0.05 * 0.04, "sample variance {var}");
    }

    #[test]
    fn downsample_cases() {
        let ws = Workspace::grid(4, 4).unwrap();
        let s = FieldSnapshot::new((0..16).map(f64::from).collect(), 0.0).unwrap();
        let (same, ws1) = downsample(&s, &ws, 1, 1).unwrap();
        assert_eq!(same, s);
        assert_eq!(ws1, ws);
        let (coarse, cws) = downsample(&s, &ws, 2, 2).unwrap();
        assert_eq!((cws.width(), cws.height()), (2, 2));
        assert_eq!(coarse.values, vec![0.0, 2.0, 8.0, 10.0]);
        assert_eq!(cws.spacing(), (2.0, 2.0));

        let big = Workspace::grid(96, 384).unwrap();
        let mv = downsample_workspace(&big, 2, 2).unwrap();
        assert_eq!((mv.width(), mv.height()), (48, 192));
        let av = downsample_workspace(&big, 10, 10).unwrap();
        assert_eq!((av.width(), av.height()), (10, 39));
    }

    #[test]
    fn downsample_size_is_ceiling() {
        for (w, h, sx, sy) in [(5, 7, 2, 3), (1, 9, 4, 1), (10, 10, 3, 3)] {
            let ws = Workspace::grid(w, h).unwrap();
            let c = downsample_workspace(&ws, sx, sy).unwrap();
            assert_eq!(c.len(), w.div_ceil(sx) * h.div_ceil(sy));
        }
    }

    #[test]
    fn series_rejects_nonuniform_times() {
        let a = FieldSnapshot::zeros(2, 0.0);
        let b = FieldSnapshot::zeros(2, 0.1);
        let c = FieldSnapshot::zeros(2, 0.25);
        assert!(SnapshotSeries::new(vec![a.clone(), b.clone()], 0.1).is_ok());
        assert!(SnapshotSeries::new(vec![a, b, c], 0.1).is_err());
    }
}
