//! Batch dynamic mode decomposition.
//!
//! Given snapshot matrices `X = [x0 .. x_{T-1}]` and `Y = [x1 .. x_T]`, the
//! reduced operator is `Ã = Uᵀ Y W Σ⁻¹` where `X ≈ U Σ Wᵀ` is the truncated SVD.
//! Its eigenpairs `Ã V = V Λ` lift to exact DMD modes `Φ = Y W Σ⁻¹ V`, and the
//! amplitudes solve `Φ α = x_anchor` in least squares.

use faer::{c64, Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldSnapshot, SnapshotSeries};
use crate::linalg;

/// How many singular triplets to keep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum RankPolicy {
    /// Keep `σ_i > tol · σ_0`.
    Threshold(f64),
    /// Keep the leading `r` triplets (fewer if the matrix has lower numerical rank).
    Fixed(usize),
}

impl Default for RankPolicy {
    fn default() -> Self {
        RankPolicy::Threshold(DEFAULT_RANK_TOL)
    }
}

pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Singular values below this fraction of the largest are never kept, whatever the policy.
const NUMERICAL_ZERO: f64 = 1e-14;

impl RankPolicy {
    /// Number of leading singular values to keep from a descending list.
    pub fn select(&self, sigma: &[f64]) -> usize {
        let Some(&s0) = sigma.first() else { return 0 };
        if s0 <= 0.0 {
            return 0;
        }
        let numerical = sigma.iter().take_while(|&&s| s > NUMERICAL_ZERO * s0).count();
        match *self {
            RankPolicy::Threshold(tol) => sigma.iter().take_while(|&&s| s > tol * s0).count().min(numerical),
            RankPolicy::Fixed(r) => r.min(numerical),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedSvd {
    pub u: Mat<f64>,
    pub sigma: Vec<f64>,
    pub w: Mat<f64>,
}

impl TruncatedSvd {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// `U diag(Σ) Wᵀ`.
    pub fn product(&self) -> Mat<f64> {
        let mut us = self.u.clone();
        for (j, s) in self.sigma.iter().enumerate() {
            for i in 0..us.nrows() {
                us[(i, j)] *= s;
            }
        }
        &us * self.w.transpose()
    }
}

pub fn truncated_svd(m: MatRef<'_, f64>, policy: RankPolicy) -> Result<TruncatedSvd> {
    if m.nrows() == 0 || m.ncols() == 0 || m.norm_max() == 0.0 {
        return Err(Error::ZeroData("snapshot matrix"));
    }
    let (u, sigma, v) = linalg::thin_svd(m)?;
    let r = policy.select(&sigma);
    if r == 0 {
        return Err(Error::ZeroData("snapshot matrix"));
    }
    Ok(TruncatedSvd {
        u: u.subcols(0, r).to_owned(),
        sigma: sigma[..r].to_vec(),
        w: v.subcols(0, r).to_owned(),
    })
}

/// Time-shifted snapshot matrices with `Y = A X`.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotPair {
    x: Mat<f64>,
    y: Mat<f64>,
    dt: f64,
}

impl SnapshotPair {
    pub fn new(x: Mat<f64>, y: Mat<f64>, dt: f64) -> Result<Self> {
        if x.nrows() != y.nrows() {
            return Err(Error::DimensionMismatch { what: "X/Y row count", expected: x.nrows(), found: y.nrows() });
        }
        if x.ncols() != y.ncols() {
            return Err(Error::DimensionMismatch { what: "X/Y column count", expected: x.ncols(), found: y.ncols() });
        }
        if x.ncols() == 0 {
            return Err(Error::InvalidInput("snapshot pair needs at least one column".into()));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidInput("dt must be positive".into()));
        }
        Ok(Self { x, y, dt })
    }

    pub fn x(&self) -> MatRef<'_, f64> {
        self.x.as_ref()
    }

    pub fn y(&self) -> MatRef<'_, f64> {
        self.y.as_ref()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_points(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.x.ncols()
    }

    pub fn into_parts(self) -> (Mat<f64>, Mat<f64>, f64) {
        (self.x, self.y, self.dt)
    }
}

pub fn make_pair(series: &SnapshotSeries) -> Result<SnapshotPair> {
    let t = series.len();
    if t < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 snapshots to form X/Y, got {t}")));
    }
    SnapshotPair::new(series.matrix_range(0, t - 1), series.matrix_range(1, t), series.dt())
}

/// Fitted DMD model.
///
/// `amplitudes` solve `Φ α = x_anchor` where `anchor` counts time steps from the
/// first training snapshot; [`reconstruct`] evolves forward from that snapshot.
/// Modes have unit 2-norm and are ordered by descending `|α_i| |λ_i|`, ties by descending `|λ_i|`, then
/// by descending imaginary part; conjugate partners share the larger score.
#[derive(Clone, Debug)]
pub struct DmdModel {
    pub modes: Mat<c64>,
    pub eigenvalues: Vec<c64>,
    pub amplitudes: Vec<c64>,
    pub svd: Option<TruncatedSvd>,
    pub dt: f64,
    pub anchor: usize,
    /// `‖Y − U Uᵀ Y‖_F / ‖Y‖_F` when an SVD basis is available. Large values mean
    /// `Y` leaves the span of `X` and the reduced eigenpairs are unreliable.
    pub span_residual: Option<f64>,
}

pub const ORDERING_CONVENTION: &str = "descending |alpha|*|lambda|, ties by descending |lambda| then descending Im(lambda)";

impl DmdModel {
    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn n_points(&self) -> usize {
        self.modes.nrows()
    }

    /// Assembles a model from unordered eigenpairs and sorts it.
    pub fn from_eigenpairs(
        modes: Mat<c64>,
        eigenvalues: Vec<c64>,
        anchor_snapshot: &[f64],
        anchor: usize,
        dt: f64,
        svd: Option<TruncatedSvd>,
        span_residual: Option<f64>,
    ) -> Result<Self> {
        if anchor_snapshot.len() != modes.nrows() {
            return Err(Error::DimensionMismatch {
                what: "anchor snapshot length",
                expected: modes.nrows(),
                found: anchor_snapshot.len(),
            });
        }
        // Unit-norm modes make |α| comparable across modes, which the ordering relies on.
        let mut modes = modes;
        for j in 0..modes.ncols() {
            let norm = modes.col(j).norm_l2();
            if norm > 0.0 {
                let inv = 1.0 / norm;
                modes.col_mut(j).iter_mut().for_each(|v| *v *= inv);
            }
        }
        let rhs: Vec<c64> = anchor_snapshot.iter().map(|&v| c64::new(v, 0.0)).collect();
        let amplitudes = linalg::lstsq_vec(modes.as_ref(), &rhs)?;
        let mut model = Self { modes, eigenvalues, amplitudes, svd, dt, anchor, span_residual };
        model.sort_modes();
        Ok(model)
    }

    fn sort_modes(&mut self) {
        let r = self.rank();
        let mut score: Vec<f64> = (0..r).map(|i| self.amplitudes[i].norm() * self.eigenvalues[i].norm()).collect();
        for i in 0..r {
            for j in (i + 1)..r {
                let (a, b) = (self.eigenvalues[i], self.eigenvalues[j]);
                if a.im != 0.0 && (a - b.conj()).norm() <= 1e-12 * a.norm().max(1e-300) {
                    let s = score[i].max(score[j]);
                    score[i] = s;
                    score[j] = s;
                }
            }
        }
        let mut order: Vec<usize> = (0..r).collect();
        order.sort_by(|&i, &j| {
            score[j]
                .total_cmp(&score[i])
                .then(self.eigenvalues[j].norm().total_cmp(&self.eigenvalues[i].norm()))
                .then(self.eigenvalues[j].im.total_cmp(&self.eigenvalues[i].im))
                .then(i.cmp(&j))
        });
        let modes = Mat::from_fn(self.modes.nrows(), r, |p, k| self.modes[(p, order[k])]);
        self.eigenvalues = order.iter().map(|&i| self.eigenvalues[i]).collect();
        self.amplitudes = order.iter().map(|&i| self.amplitudes[i]).collect();
        self.modes = modes;
    }

    /// Most dominant eigenvalue under the ordering convention.
    pub fn dominant_eigenvalue(&self) -> Option<c64> {
        self.eigenvalues.first().copied()
    }
}

/// Reduced operator, eigenpairs and modes from a truncated SVD of `X` and the matching `Y`.
pub(crate) fn model_from_svd(
    svd: TruncatedSvd,
    y: MatRef<'_, f64>,
    anchor_snapshot: &[f64],
    anchor: usize,
    dt: f64,
) -> Result<DmdModel> {
    if y.ncols() != svd.w.nrows() {
        return Err(Error::DimensionMismatch { what: "Y columns vs W rows", expected: svd.w.nrows(), found: y.ncols() });
    }
    // Y W Σ⁻¹
    let mut ywsinv = y * &svd.w;
    for (j, s) in svd.sigma.iter().enumerate() {
        let inv = 1.0 / s;
        for i in 0..ywsinv.nrows() {
            ywsinv[(i, j)] *= inv;
        }
    }
    let a_tilde = svd.u.transpose() * &ywsinv;
    let (eigenvalues, v) = linalg::eigen_real(a_tilde.as_ref())?;
    let modes = linalg::to_complex(ywsinv.as_ref()) * &v;

    let y_norm = y.norm_l2();
    let span_residual = if y_norm > 0.0 {
        let proj = &svd.u * (svd.u.transpose() * y);
        Some((y - &proj).norm_l2() / y_norm)
    } else {
        None
    };
    DmdModel::from_eigenpairs(modes, eigenvalues, anchor_snapshot, anchor, dt, Some(svd), span_residual)
}

pub fn fit_dmd(pair: &SnapshotPair, policy: RankPolicy) -> Result<DmdModel> {
    let svd = truncated_svd(pair.x(), policy)?;
    let x0 = linalg::column_vec(pair.x(), 0);
    model_from_svd(svd, pair.y(), &x0, 0, pair.dt())
}

/// `Re(Φ Λ^steps α)`: the state `steps` time steps after the model's anchor snapshot.
pub fn reconstruct(m: &DmdModel, steps: usize) -> FieldSnapshot {
    let n = m.n_points();
    let mut values = vec![0.0; n];
    for k in 0..m.rank() {
        let coef = m.amplitudes[k] * m.eigenvalues[k].powi(steps as i32);
        for (p, v) in values.iter_mut().enumerate() {
            *v += (m.modes[(p, k)] * coef).re;
        }
    }
    FieldSnapshot { values, time: (m.anchor + steps) as f64 * m.dt }
}

/// `ω_i = ln(λ_i) / dt` on the principal branch.
pub fn continuous_eigenvalues(m: &DmdModel) -> Result<Vec<c64>> {
    m.eigenvalues
        .iter()
        .enumerate()
        .map(|(i, &lam)| {
            if lam.norm() == 0.0 {
                Err(Error::ZeroEigenvalue { index: i })
            } else {
                Ok(lam.ln() / m.dt)
            }
        })
        .collect()
}
