//! Gappy reconstruction of a full field from sparse measurements through a mode basis.

use faer::{c64, Mat, MatRef, Side};

use crate::dmd::DmdModel;
use crate::error::{Error, Result};
use crate::field::FieldSnapshot;
use crate::linalg;

/// Observed grid indices, strictly increasing.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ObservationSet {
    indices: Vec<usize>,
}

impl ObservationSet {
    pub fn new(indices: Vec<usize>, n_points: usize) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= n_points) {
            return Err(Error::InvalidInput(format!("observation index {bad} outside [0, {n_points})")));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("observation indices must be strictly increasing".into()));
        }
        Ok(Self { indices })
    }

    /// Sorts and deduplicates before validating.
    pub fn from_unsorted(mut indices: Vec<usize>, n_points: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        Self::new(indices, n_points)
    }

    pub fn all(n_points: usize) -> Self {
        Self { indices: (0..n_points).collect() }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    pub fn union(&self, other: &ObservationSet) -> ObservationSet {
        let mut v: Vec<usize> = self.indices.iter().chain(&other.indices).copied().collect();
        v.sort_unstable();
        v.dedup();
        ObservationSet { indices: v }
    }
}

pub fn observe(s: &FieldSnapshot, obs: &ObservationSet) -> Vec<f64> {
    obs.indices.iter().map(|&i| s.values[i]).collect()
}

/// `C_L Φ`: the rows of the mode matrix at the observed indices.
pub fn selected_modes(modes: MatRef<'_, c64>, obs: &ObservationSet) -> Mat<c64> {
    Mat::from_fn(obs.len(), modes.ncols(), |i, j| modes[(obs.indices[i], j)])
}

/// `â = (C_L Φ)† x_L`.
pub fn estimate_amplitudes(m: &DmdModel, obs: &ObservationSet, x_l: &[f64]) -> Result<Vec<c64>> {
    if obs.is_empty() {
        return Err(Error::InvalidInput("no observations".into()));
    }
    if x_l.len() != obs.len() {
        return Err(Error::DimensionMismatch { what: "measurement count", expected: obs.len(), found: x_l.len() });
    }
    if let Some(&last) = obs.indices.last() {
        if last >= m.n_points() {
            return Err(Error::InvalidInput(format!("observation index {last} outside model with {} points", m.n_points())));
        }
    }
    let cphi = selected_modes(m.modes.as_ref(), obs);
    if cphi.norm_max() == 0.0 {
        return Err(Error::ZeroData("observed mode content"));
    }
    let rhs: Vec<c64> = x_l.iter().map(|&v| c64::new(v, 0.0)).collect();
    linalg::lstsq_vec(cphi.as_ref(), &rhs)
}

/// `Re(Φ (C_L Φ)† x_L)`. The returned snapshot carries time 0; callers stamp it.
pub fn reconstruct_full(m: &DmdModel, obs: &ObservationSet, x_l: &[f64]) -> Result<FieldSnapshot> {
    let a = estimate_amplitudes(m, obs, x_l)?;
    Ok(FieldSnapshot { values: combine_modes(m.modes.as_ref(), &a), time: 0.0 })
}

/// `Re(Φ a)`.
pub fn combine_modes(modes: MatRef<'_, c64>, a: &[c64]) -> Vec<f64> {
    (0..modes.nrows())
        .map(|p| a.iter().enumerate().map(|(k, ak)| (modes[(p, k)] * ak).re).sum())
        .collect()
}

/// Eigenvalues of the Gram matrix at or below this fraction of `‖Φ‖_F²` count as zero.
pub const LOGDET_TOL: f64 = 1e-12;

/// `ln det(Bᴴ B)`, or `-∞` when an eigenvalue is at or below `floor`.
pub fn log_det_gram(b: MatRef<'_, c64>, floor: f64) -> f64 {
    let r = b.ncols();
    if r == 0 {
        return 0.0;
    }
    if b.nrows() < r {
        return f64::NEG_INFINITY;
    }
    let g = b.adjoint() * b;
    let Ok(eigs) = g.self_adjoint_eigenvalues(Side::Lower) else {
        return f64::NEG_INFINITY;
    };
    let mut acc = 0.0;
    for e in eigs {
        if !(e > floor) {
            return f64::NEG_INFINITY;
        }
        acc += e.ln();
    }
    acc
}

/// `ln det[(C_L Φ)ᴴ (C_L Φ)]`; `-∞` when the selection does not determine every amplitude.
///
/// The zero threshold scales with `‖Φ‖_F²` only, so adding indices never turns a
/// finite value into `-∞`.
pub fn placement_objective(m: &DmdModel, obs: &ObservationSet) -> f64 {
    let floor = LOGDET_TOL * m.modes.norm_l2().powi(2);
    log_det_gram(selected_modes(m.modes.as_ref(), obs).as_ref(), floor)
}
