//! Streaming DMD updates.
//!
//! [`GeneralOnlineState`] keeps a truncated SVD of the accumulated `X` plus every
//! retained `Y` column and updates the SVD by appending columns. Its memory grows
//! with the stream. [`LongTermOnlineState`] keeps only the `N × N` operator `A`
//! and `S = (X Xᵀ)⁻¹`, updated by the Woodbury identity with an optional
//! forgetting factor; its memory is fixed at `O(N²)`.

use faer::linalg::solvers::Solve;
use faer::{Mat, MatRef, Side};
use serde::{Deserialize, Serialize};

use crate::dmd::{self, DmdModel, RankPolicy, SnapshotPair, TruncatedSvd};
use crate::error::{Error, Result};
use crate::linalg;

/// Snapshot the amplitudes are solved against after online updates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeAnchor {
    /// Always the very first snapshot of the stream.
    First,
    /// The most recent snapshot once at least one update has been applied.
    #[default]
    Latest,
}

/// Condition estimate beyond which the `Γ⁻¹` factorization is rejected.
pub const MAX_GAMMA_CONDITION: f64 = 1e12;

fn check_update_dims(n: usize, x_new: MatRef<'_, f64>, y_new: MatRef<'_, f64>) -> Result<()> {
    if x_new.nrows() != n {
        return Err(Error::DimensionMismatch { what: "X_new rows", expected: n, found: x_new.nrows() });
    }
    if y_new.nrows() != n {
        return Err(Error::DimensionMismatch { what: "Y_new rows", expected: n, found: y_new.nrows() });
    }
    if x_new.ncols() != y_new.ncols() {
        return Err(Error::DimensionMismatch { what: "X_new/Y_new columns", expected: x_new.ncols(), found: y_new.ncols() });
    }
    if x_new.ncols() == 0 {
        return Err(Error::InvalidInput("update needs at least one column".into()));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct GeneralOnlineState {
    pub(crate) svd: TruncatedSvd,
    /// Retained `Y` columns, column-major `N × t_acc`.
    pub(crate) y_all: Vec<f64>,
    pub(crate) n: usize,
    pub(crate) dt: f64,
    pub(crate) policy: RankPolicy,
    /// Keep one of every `stride` incoming pairs.
    pub(crate) stride: usize,
    pub(crate) anchor: AmplitudeAnchor,
    pub(crate) x_first: Vec<f64>,
    pub(crate) pairs_seen: usize,
    pub(crate) updates: usize,
}

pub fn init_general(pair: &SnapshotPair, policy: RankPolicy) -> Result<GeneralOnlineState> {
    init_general_with(pair, policy, 1, AmplitudeAnchor::default())
}

pub fn init_general_with(
    pair: &SnapshotPair,
    policy: RankPolicy,
    stride: usize,
    anchor: AmplitudeAnchor,
) -> Result<GeneralOnlineState> {
    if stride == 0 {
        return Err(Error::InvalidInput("time stride must be at least 1".into()));
    }
    let keep: Vec<usize> = (0..pair.n_cols()).step_by(stride).collect();
    let x = Mat::from_fn(pair.n_points(), keep.len(), |i, j| pair.x()[(i, keep[j])]);
    let svd = dmd::truncated_svd(x.as_ref(), policy)?;
    let mut y_all = Vec::with_capacity(pair.n_points() * keep.len());
    for &j in &keep {
        y_all.extend(pair.y().col(j).iter());
    }
    Ok(GeneralOnlineState {
        svd,
        y_all,
        n: pair.n_points(),
        dt: pair.dt(),
        policy,
        stride,
        anchor,
        x_first: linalg::column_vec(pair.x(), 0),
        pairs_seen: pair.n_cols(),
        updates: 0,
    })
}

impl GeneralOnlineState {
    pub fn svd(&self) -> &TruncatedSvd {
        &self.svd
    }

    pub fn rank(&self) -> usize {
        self.svd.rank()
    }

    pub fn n_points(&self) -> usize {
        self.n
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn retained_columns(&self) -> usize {
        self.y_all.len() / self.n
    }

    pub fn y_all(&self) -> MatRef<'_, f64> {
        MatRef::from_column_major_slice(&self.y_all, self.n, self.retained_columns())
    }

    pub fn pairs_seen(&self) -> usize {
        self.pairs_seen
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    /// Number of stored floating-point values; grows with the retained stream.
    pub fn stored_values(&self) -> usize {
        self.svd.u.nrows() * self.svd.u.ncols()
            + self.svd.sigma.len()
            + self.svd.w.nrows() * self.svd.w.ncols()
            + self.y_all.len()
            + self.x_first.len()
    }

    /// The most recent retained `Y` column (the latest snapshot when `stride = 1`).
    pub fn latest_snapshot(&self) -> &[f64] {
        &self.y_all[self.y_all.len() - self.n..]
    }
}

/// Appends the columns `X_new`, `Y_new` to the state by an incremental SVD update.
pub fn update_general(st: &mut GeneralOnlineState, x_new: MatRef<'_, f64>, y_new: MatRef<'_, f64>) -> Result<()> {
    check_update_dims(st.n, x_new, y_new)?;
    let keep: Vec<usize> = (0..x_new.ncols()).filter(|j| (st.pairs_seen + j) % st.stride == 0).collect();
    st.pairs_seen += x_new.ncols();
    st.updates += 1;
    if keep.is_empty() {
        return Ok(());
    }
    let x_new = Mat::from_fn(st.n, keep.len(), |i, j| x_new[(i, keep[j])]);
    for &j in &keep {
        st.y_all.extend(y_new.col(j).iter());
    }

    let u = &st.svd.u;
    let r = st.svd.rank();
    let tau = x_new.ncols();

    let mut l = u.transpose() * &x_new;
    let mut h = &x_new - u * &l;
    // One reorthogonalization pass keeps [U J] orthonormal in floating point.
    let l2 = u.transpose() * &h;
    h -= u * &l2;
    l += &l2;

    let qr = h.qr();
    let j_basis = qr.compute_thin_Q();
    let p = j_basis.transpose() * &h;
    let q = j_basis.ncols();

    let z = Mat::from_fn(r + q, r + tau, |i, k| {
        if i < r {
            if k < r {
                if i == k {
                    st.svd.sigma[i]
                } else {
                    0.0
                }
            } else {
                l[(i, k - r)]
            }
        } else if k < r {
            0.0
        } else {
            p[(i - r, k - r)]
        }
    });
    let (uz, sz, wz) = linalg::thin_svd(z.as_ref())?;
    let keep_r = st.policy.select(&sz);
    if keep_r == 0 {
        return Err(Error::ZeroData("accumulated snapshot matrix"));
    }

    let uj = linalg::hcat(u.as_ref(), j_basis.as_ref())?;
    let new_u = &uj * uz.subcols(0, keep_r);

    let t_old = st.svd.w.nrows();
    let wz = wz.subcols(0, keep_r);
    let w_top = &st.svd.w * wz.subrows(0, r);
    let new_w = Mat::from_fn(t_old + tau, keep_r, |i, k| if i < t_old { w_top[(i, k)] } else { wz[(r + i - t_old, k)] });

    st.svd = TruncatedSvd { u: new_u, sigma: sz[..keep_r].to_vec(), w: new_w };
    Ok(())
}

/// `Ã = Uᵀ Y W Σ⁻¹`, the `r × r` operator the general model is extracted from.
pub fn reduced_operator(st: &GeneralOnlineState) -> Mat<f64> {
    let mut yw = st.y_all() * &st.svd.w;
    for (j, s) in st.svd.sigma.iter().enumerate() {
        let inv = 1.0 / s;
        for i in 0..yw.nrows() {
            yw[(i, j)] *= inv;
        }
    }
    st.svd.u.transpose() * yw
}

pub fn general_model(st: &GeneralOnlineState) -> Result<DmdModel> {
    let (snap, anchor) = match st.anchor {
        AmplitudeAnchor::Latest if st.updates > 0 => (st.latest_snapshot().to_vec(), st.pairs_seen),
        _ => (st.x_first.clone(), 0),
    };
    dmd::model_from_svd(st.svd.clone(), st.y_all(), &snap, anchor, st.dt)
}

#[derive(Clone, Debug)]
pub struct LongTermOnlineState {
    pub(crate) a_op: Mat<f64>,
    pub(crate) s_mat: Mat<f64>,
    pub(crate) gamma: f64,
    pub(crate) dt: f64,
    pub(crate) anchor: AmplitudeAnchor,
    pub(crate) x_first: Vec<f64>,
    pub(crate) latest: Vec<f64>,
    pub(crate) pairs_seen: usize,
    pub(crate) updates: usize,
}

pub fn init_longterm(pair: &SnapshotPair, gamma: f64) -> Result<LongTermOnlineState> {
    init_longterm_with(pair, gamma, AmplitudeAnchor::default())
}

pub fn init_longterm_with(pair: &SnapshotPair, gamma: f64, anchor: AmplitudeAnchor) -> Result<LongTermOnlineState> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidInput(format!("forgetting factor must lie in (0, 1], got {gamma}")));
    }
    let n = pair.n_points();
    let t = pair.n_cols();
    if t < n {
        return Err(Error::NotFullRowRank { n, detail: format!("only {t} snapshot pairs available") });
    }
    let (u, sigma, v) = linalg::thin_svd(pair.x())?;
    let smax = sigma[0];
    let smin = sigma[n - 1];
    if !(smax > 0.0) || smin <= 1e-10 * smax {
        return Err(Error::NotFullRowRank {
            n,
            detail: format!("smallest singular value {smin:.3e} vs largest {smax:.3e}"),
        });
    }
    // X = U Σ Vᵀ  ⇒  (X Xᵀ)⁻¹ = U Σ⁻² Uᵀ  and  A = Y Xᵀ (X Xᵀ)⁻¹ = Y V Σ⁻¹ Uᵀ.
    let mut u_sinv = u.clone();
    let mut u_sinv2 = u.clone();
    for (j, s) in sigma.iter().enumerate() {
        for i in 0..n {
            u_sinv[(i, j)] /= s;
            u_sinv2[(i, j)] /= s * s;
        }
    }
    let a_op = pair.y() * &v * u_sinv.transpose();
    let mut s_mat = &u * u_sinv2.transpose();
    linalg::symmetrize(&mut s_mat);
    Ok(LongTermOnlineState {
        a_op,
        s_mat,
        gamma,
        dt: pair.dt(),
        anchor,
        x_first: linalg::column_vec(pair.x(), 0),
        latest: linalg::column_vec(pair.y(), t - 1),
        pairs_seen: t,
        updates: 0,
    })
}

impl LongTermOnlineState {
    pub fn a_op(&self) -> MatRef<'_, f64> {
        self.a_op.as_ref()
    }

    pub fn latest_snapshot(&self) -> &[f64] {
        &self.latest
    }

    pub fn s_mat(&self) -> MatRef<'_, f64> {
        self.s_mat.as_ref()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn set_gamma(&mut self, gamma: f64) -> Result<()> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidInput(format!("forgetting factor must lie in (0, 1], got {gamma}")));
        }
        self.gamma = gamma;
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_points(&self) -> usize {
        self.a_op.nrows()
    }

    pub fn pairs_seen(&self) -> usize {
        self.pairs_seen
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    /// Number of stored floating-point values; independent of stream length.
    pub fn stored_values(&self) -> usize {
        let n = self.n_points();
        2 * n * n + 2 * n
    }
}

/// Woodbury update with forgetting:
/// `Γ = (γI + X_newᵀ S X_new)⁻¹`, `A ← A + (Y_new − A X_new) Γ X_newᵀ S`,
/// `S ← (S − S X_new Γ X_newᵀ S) / γ`.
pub fn update_longterm(st: &mut LongTermOnlineState, x_new: MatRef<'_, f64>, y_new: MatRef<'_, f64>) -> Result<()> {
    let n = st.n_points();
    check_update_dims(n, x_new, y_new)?;
    let tau = x_new.ncols();
    let sx = &st.s_mat * x_new;
    let mut gamma_inv = x_new.transpose() * &sx;
    for i in 0..tau {
        gamma_inv[(i, i)] += st.gamma;
    }
    linalg::symmetrize(&mut gamma_inv);
    let llt = gamma_inv
        .llt(Side::Lower)
        .map_err(|_| Error::IllConditioned { condition: f64::INFINITY })?;
    let lf = llt.L();
    let (mut dmax, mut dmin) = (0.0f64, f64::INFINITY);
    for i in 0..tau {
        let d = lf[(i, i)].abs();
        dmax = dmax.max(d);
        dmin = dmin.min(d);
    }
    let condition = if dmin > 0.0 { (dmax / dmin).powi(2) } else { f64::INFINITY };
    if !(condition <= MAX_GAMMA_CONDITION) {
        return Err(Error::IllConditioned { condition });
    }
    // K = Γ X_newᵀ S = Γ (S X_new)ᵀ
    let k = llt.solve(sx.transpose());
    let innovation = y_new - &st.a_op * x_new;
    st.a_op += &innovation * &k;
    let mut s_new = &st.s_mat - &sx * &k;
    if st.gamma != 1.0 {
        s_new *= faer::Scale(1.0 / st.gamma);
    }
    linalg::symmetrize(&mut s_new);
    st.s_mat = s_new;
    st.latest = linalg::column_vec(y_new, tau - 1);
    st.pairs_seen += tau;
    st.updates += 1;
    Ok(())
}

pub fn longterm_model(st: &LongTermOnlineState) -> Result<DmdModel> {
    let (eigenvalues, modes) = linalg::eigen_real(st.a_op.as_ref())?;
    let (snap, anchor) = match st.anchor {
        AmplitudeAnchor::Latest if st.updates > 0 => (&st.latest, st.pairs_seen),
        _ => (&st.x_first, 0),
    };
    DmdModel::from_eigenpairs(modes, eigenvalues, snap, anchor, st.dt, None, None)
}

/// Refits from scratch on all accumulated data.
pub fn batch_baseline(x_acc: MatRef<'_, f64>, y_acc: MatRef<'_, f64>, dt: f64, policy: RankPolicy) -> Result<DmdModel> {
    let pair = SnapshotPair::new(x_acc.to_owned(), y_acc.to_owned(), dt)?;
    dmd::fit_dmd(&pair, policy)
}

/// `Y X⁺` through the SVD pseudoinverse; the oracle for the long-term operator.
pub fn batch_operator(x_acc: MatRef<'_, f64>, y_acc: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let svd = dmd::truncated_svd(x_acc, RankPolicy::Threshold(linalg::LSTSQ_RCOND))?;
    let mut v_sinv = svd.w.clone();
    for (j, s) in svd.sigma.iter().enumerate() {
        for i in 0..v_sinv.nrows() {
            v_sinv[(i, j)] /= s;
        }
    }
    Ok(y_acc * &v_sinv * svd.u.transpose())
}
