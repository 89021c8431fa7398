use faer::MatRef;

use crate::dmd::{self, DmdModel, RankPolicy, SnapshotPair};
use crate::error::Result;
use crate::harness::config::{ExperimentConfig, Method};
use crate::linalg;
use crate::online::{self, AmplitudeAnchor, GeneralOnlineState, LongTermOnlineState};

/// One model-update strategy behind a common interface.
#[derive(Clone, Debug)]
pub enum Engine {
    /// Refits from all accumulated pairs on every update.
    Batch { x: Vec<f64>, y: Vec<f64>, n: usize, dt: f64, policy: RankPolicy, anchor: AmplitudeAnchor, updates: usize },
    General(GeneralOnlineState),
    Longterm(LongTermOnlineState),
}

impl Engine {
    pub fn init(method: Method, pair: &SnapshotPair, cfg: &ExperimentConfig) -> Result<Self> {
        Self::init_with(method, pair, cfg.rank_policy(), cfg.gamma, cfg.anchor, cfg.time_stride)
    }

    pub fn init_with(
        method: Method,
        pair: &SnapshotPair,
        policy: RankPolicy,
        gamma: f64,
        anchor: AmplitudeAnchor,
        stride: usize,
    ) -> Result<Self> {
        Ok(match method {
            Method::Batch => {
                // surface rank problems at init like the online engines do
                dmd::truncated_svd(pair.x(), policy)?;
                Engine::Batch {
                    x: flat(pair.x()),
                    y: flat(pair.y()),
                    n: pair.n_points(),
                    dt: pair.dt(),
                    policy,
                    anchor,
                    updates: 0,
                }
            }
            Method::General => Engine::General(online::init_general_with(pair, policy, stride, anchor)?),
            Method::Longterm => Engine::Longterm(online::init_longterm_with(pair, gamma, anchor)?),
        })
    }

    pub fn update(&mut self, x_new: MatRef<'_, f64>, y_new: MatRef<'_, f64>) -> Result<()> {
        match self {
            Engine::Batch { x, y, n, updates, .. } => {
                if x_new.nrows() != *n || y_new.nrows() != *n || x_new.ncols() != y_new.ncols() {
                    return Err(crate::Error::DimensionMismatch {
                        what: "batch update block",
                        expected: *n,
                        found: x_new.nrows(),
                    });
                }
                x.extend(flat(x_new));
                y.extend(flat(y_new));
                *updates += 1;
                Ok(())
            }
            Engine::General(st) => online::update_general(st, x_new, y_new),
            Engine::Longterm(st) => online::update_longterm(st, x_new, y_new),
        }
    }

    pub fn model(&self) -> Result<DmdModel> {
        match self {
            Engine::Batch { x, y, n, dt, policy, anchor, updates } => {
                let cols = x.len() / n;
                let xm = MatRef::from_column_major_slice(x, *n, cols);
                let ym = MatRef::from_column_major_slice(y, *n, cols);
                let m = dmd::fit_dmd(&SnapshotPair::new(xm.to_owned(), ym.to_owned(), *dt)?, *policy)?;
                if *anchor == AmplitudeAnchor::Latest && *updates > 0 {
                    let last = linalg::column_vec(ym, cols - 1);
                    return DmdModel::from_eigenpairs(m.modes, m.eigenvalues, &last, cols, *dt, m.svd, m.span_residual);
                }
                Ok(m)
            }
            Engine::General(st) => online::general_model(st),
            Engine::Longterm(st) => online::longterm_model(st),
        }
    }

    /// Per-update work short of an eigendecomposition: the pseudoinverse operator for
    /// batch and the reduced operator for the general method. The long-term operator
    /// is its state, so there is nothing left to do.
    pub fn operator_work(&self) -> Result<()> {
        match self {
            Engine::Batch { x, y, n, .. } => {
                let cols = x.len() / n;
                online::batch_operator(
                    MatRef::from_column_major_slice(x, *n, cols),
                    MatRef::from_column_major_slice(y, *n, cols),
                )?;
            }
            Engine::General(st) => {
                online::reduced_operator(st);
            }
            Engine::Longterm(_) => {}
        }
        Ok(())
    }

    pub fn pairs_seen(&self) -> usize {
        match self {
            Engine::Batch { x, n, .. } => x.len() / n,
            Engine::General(st) => st.pairs_seen(),
            Engine::Longterm(st) => st.pairs_seen(),
        }
    }
}

fn flat(m: MatRef<'_, f64>) -> Vec<f64> {
    let mut v = Vec::with_capacity(m.nrows() * m.ncols());
    for j in 0..m.ncols() {
        v.extend(m.col(j).iter());
    }
    v
}
