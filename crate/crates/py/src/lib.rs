//! Python bindings. Snapshot sequences cross the boundary as lists of snapshots, each
//! a list of `N` floats (grid point `x + y * width`); eigenvalues as Python complex.

use std::path::PathBuf;

use faer::Mat;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use hetsense::c64;
use hetsense::coverage::{self, DensityMap, LloydOptions, RobotConfiguration};
use hetsense::dmd::{self, DmdModel, RankPolicy, SnapshotPair};
use hetsense::field::{self, FieldSnapshot, Workspace};
use hetsense::harness::metrics::write_metrics_csv;
use hetsense::harness::{run_scenario, ExperimentConfig};
use hetsense::io::{self, Checkpoint};
use hetsense::online::{self, AmplitudeAnchor, GeneralOnlineState, LongTermOnlineState};
use hetsense::placement;
use hetsense::recon::{self, ObservationSet};

fn err(e: hetsense::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_matrix(snapshots: &[Vec<f64>]) -> PyResult<Mat<f64>> {
    let n = snapshots.first().map_or(0, Vec::len);
    if n == 0 || snapshots.iter().any(|s| s.len() != n) {
        return Err(PyValueError::new_err("snapshots must be non-empty lists of equal length"));
    }
    Ok(Mat::from_fn(n, snapshots.len(), |i, j| snapshots[j][i]))
}

fn to_lists(m: &Mat<f64>) -> Vec<Vec<f64>> {
    (0..m.ncols()).map(|j| m.col(j).iter().copied().collect()).collect()
}

fn pair_of(snapshots: &[Vec<f64>], dt: f64) -> PyResult<SnapshotPair> {
    let m = to_matrix(snapshots)?;
    if m.ncols() < 2 {
        return Err(PyValueError::new_err("need at least two snapshots"));
    }
    let t = m.ncols() - 1;
    SnapshotPair::new(m.subcols(0, t).to_owned(), m.subcols(1, t).to_owned(), dt).map_err(err)
}

/// Pairs that continue a stream whose last snapshot is `latest`.
fn continuation(latest: &[f64], snapshots: &[Vec<f64>]) -> PyResult<(Mat<f64>, Mat<f64>)> {
    let y = to_matrix(snapshots)?;
    if y.nrows() != latest.len() {
        return Err(PyValueError::new_err(format!("snapshots have {} points, the state has {}", y.nrows(), latest.len())));
    }
    let x = Mat::from_fn(y.nrows(), y.ncols(), |i, j| if j == 0 { latest[i] } else { y[(i, j - 1)] });
    Ok((x, y))
}

fn policy(rank: Option<usize>) -> RankPolicy {
    rank.map_or(RankPolicy::default(), RankPolicy::Fixed)
}

#[pyclass(name = "DmdModel", module = "pyhetsense")]
struct PyDmdModel {
    inner: DmdModel,
}

#[pymethods]
impl PyDmdModel {
    /// Batch DMD; `rank=None` keeps singular values above 1e-10 of the largest.
    #[staticmethod]
    #[pyo3(signature = (snapshots, dt, rank=None))]
    fn fit(snapshots: Vec<Vec<f64>>, dt: f64, rank: Option<usize>) -> PyResult<Self> {
        let pair = pair_of(&snapshots, dt)?;
        Ok(Self { inner: dmd::fit_dmd(&pair, policy(rank)).map_err(err)? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        match io::load_checkpoint(&path).map_err(err)? {
            Checkpoint::Model(m) => Ok(Self { inner: m }),
            Checkpoint::General(st) => Ok(Self { inner: online::general_model(&st).map_err(err)? }),
            Checkpoint::LongTerm(st) => Ok(Self { inner: online::longterm_model(&st).map_err(err)? }),
        }
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        io::save_checkpoint(&path, &Checkpoint::Model(self.inner.clone())).map_err(err)
    }

    #[getter]
    fn rank(&self) -> usize {
        self.inner.rank()
    }

    #[getter]
    fn n_points(&self) -> usize {
        self.inner.n_points()
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt
    }

    #[getter]
    fn eigenvalues(&self) -> Vec<c64> {
        self.inner.eigenvalues.clone()
    }

    #[getter]
    fn amplitudes(&self) -> Vec<c64> {
        self.inner.amplitudes.clone()
    }

    /// Columns of the mode matrix, one list per mode.
    #[getter]
    fn modes(&self) -> Vec<Vec<c64>> {
        let m = &self.inner.modes;
        (0..m.ncols()).map(|j| m.col(j).iter().copied().collect()).collect()
    }

    fn continuous_eigenvalues(&self) -> PyResult<Vec<c64>> {
        dmd::continuous_eigenvalues(&self.inner).map_err(err)
    }

    /// Dominant `ω = ln(λ)/dt`, or `None` when the model is empty or `λ = 0`.
    fn dominant_omega(&self) -> Option<c64> {
        self.inner.dominant_eigenvalue().filter(|l| l.norm() > 0.0).map(|l| l.ln() / self.inner.dt)
    }

    /// The field `steps` time steps after the model's anchor snapshot.
    fn reconstruct(&self, steps: usize) -> Vec<f64> {
        dmd::reconstruct(&self.inner, steps).values
    }

    /// Full-field estimate from measurements at `indices`.
    fn reconstruct_from(&self, indices: Vec<usize>, values: Vec<f64>) -> PyResult<Vec<f64>> {
        let obs = ObservationSet::new(indices, self.inner.n_points()).map_err(err)?;
        Ok(recon::reconstruct_full(&self.inner, &obs, &values).map_err(err)?.values)
    }

    /// `ln det` of the observed-mode Gram matrix for a set of indices.
    fn placement_objective(&self, indices: Vec<usize>) -> PyResult<f64> {
        let obs = ObservationSet::from_unsorted(indices, self.inner.n_points()).map_err(err)?;
        Ok(recon::placement_objective(&self.inner, &obs))
    }

    fn __repr__(&self) -> String {
        format!("DmdModel(rank={}, n_points={}, dt={})", self.inner.rank(), self.inner.n_points(), self.inner.dt)
    }
}

#[pyclass(name = "GeneralOnline", module = "pyhetsense")]
struct PyGeneralOnline {
    inner: GeneralOnlineState,
}

#[pymethods]
impl PyGeneralOnline {
    #[new]
    #[pyo3(signature = (snapshots, dt, rank=None, stride=1, anchor_latest=true))]
    fn new(snapshots: Vec<Vec<f64>>, dt: f64, rank: Option<usize>, stride: usize, anchor_latest: bool) -> PyResult<Self> {
        let pair = pair_of(&snapshots, dt)?;
        let anchor = if anchor_latest { AmplitudeAnchor::Latest } else { AmplitudeAnchor::First };
        Ok(Self { inner: online::init_general_with(&pair, policy(rank), stride, anchor).map_err(err)? })
    }

    /// Appends snapshots that continue the stream.
    fn update(&mut self, snapshots: Vec<Vec<f64>>) -> PyResult<()> {
        let (x, y) = continuation(self.inner.latest_snapshot(), &snapshots)?;
        online::update_general(&mut self.inner, x.as_ref(), y.as_ref()).map_err(err)
    }

    fn model(&self) -> PyResult<PyDmdModel> {
        Ok(PyDmdModel { inner: online::general_model(&self.inner).map_err(err)? })
    }

    #[getter]
    fn rank(&self) -> usize {
        self.inner.rank()
    }

    #[getter]
    fn pairs_seen(&self) -> usize {
        self.inner.pairs_seen()
    }

    #[getter]
    fn singular_values(&self) -> Vec<f64> {
        self.inner.svd().sigma.clone()
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        io::save_checkpoint(&path, &Checkpoint::General(self.inner.clone())).map_err(err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        match io::load_checkpoint(&path).map_err(err)? {
            Checkpoint::General(st) => Ok(Self { inner: st }),
            other => Err(PyValueError::new_err(format!("{} holds a {}", path.display(), other.kind()))),
        }
    }
}

#[pyclass(name = "LongTermOnline", module = "pyhetsense")]
struct PyLongTermOnline {
    inner: LongTermOnlineState,
}

#[pymethods]
impl PyLongTermOnline {
    /// Needs at least `N` linearly independent initial snapshots.
    #[new]
    #[pyo3(signature = (snapshots, dt, gamma=1.0, anchor_latest=true))]
    fn new(snapshots: Vec<Vec<f64>>, dt: f64, gamma: f64, anchor_latest: bool) -> PyResult<Self> {
        let pair = pair_of(&snapshots, dt)?;
        let anchor = if anchor_latest { AmplitudeAnchor::Latest } else { AmplitudeAnchor::First };
        Ok(Self { inner: online::init_longterm_with(&pair, gamma, anchor).map_err(err)? })
    }

    fn update(&mut self, snapshots: Vec<Vec<f64>>) -> PyResult<()> {
        let (x, y) = continuation(self.inner.latest_snapshot(), &snapshots)?;
        online::update_longterm(&mut self.inner, x.as_ref(), y.as_ref()).map_err(err)
    }

    fn model(&self) -> PyResult<PyDmdModel> {
        Ok(PyDmdModel { inner: online::longterm_model(&self.inner).map_err(err)? })
    }

    /// The `N × N` operator, as a list of rows.
    fn operator(&self) -> Vec<Vec<f64>> {
        let a = self.inner.a_op();
        (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect()).collect()
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma()
    }

    #[getter]
    fn pairs_seen(&self) -> usize {
        self.inner.pairs_seen()
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        io::save_checkpoint(&path, &Checkpoint::LongTerm(self.inner.clone())).map_err(err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        match io::load_checkpoint(&path).map_err(err)? {
            Checkpoint::LongTerm(st) => Ok(Self { inner: st }),
            other => Err(PyValueError::new_err(format!("{} holds a {}", path.display(), other.kind()))),
        }
    }
}

/// `steps` snapshots of the damped oscillation on a `width × height` grid.
#[pyfunction]
fn damped_oscillation(width: usize, height: usize, steps: usize, dt: f64) -> PyResult<Vec<Vec<f64>>> {
    let ws = Workspace::grid(width, height).map_err(err)?;
    Ok(to_lists(&field::gen_damped_oscillation_series(&ws, steps, dt).map_err(err)?.to_matrix()))
}

/// `steps` snapshots of a linear system with the given continuous-time eigenvalues
/// (list conjugate pairs explicitly); spatial modes are drawn from `seed`.
#[pyfunction]
fn lti_field(width: usize, height: usize, cont_eigs: Vec<c64>, seed: u64, steps: usize, dt: f64) -> PyResult<Vec<Vec<f64>>> {
    let ws = Workspace::grid(width, height).map_err(err)?;
    Ok(to_lists(&field::gen_lti_field(&ws, &cont_eigs, seed, steps, dt).map_err(err)?.to_matrix()))
}

#[pyfunction]
fn inject_noise(values: Vec<f64>, variance: f64, seed: u64) -> PyResult<Vec<f64>> {
    let s = FieldSnapshot { values, time: 0.0 };
    Ok(field::inject_noise(&s, variance, seed).map_err(err)?.values)
}

/// Disjoint sensing regions of `radius` cells: `(centers, weights)`.
#[pyfunction]
fn optimal_placement(model: &PyDmdModel, width: usize, height: usize, radius: f64, count: usize) -> PyResult<(Vec<usize>, Vec<f64>)> {
    let ws = Workspace::grid(width, height).map_err(err)?;
    let p = placement::optimal_placement(&model.inner, &ws, radius, count).map_err(err)?;
    Ok((p.centers(), p.weights.clone()))
}

/// Lloyd iterations on a grid with unit spacing: `(final positions, costs)`.
#[pyfunction]
#[pyo3(signature = (width, height, positions, weights=None, max_iters=100, tol=1e-6))]
fn lloyd(
    width: usize,
    height: usize,
    positions: Vec<(f64, f64)>,
    weights: Option<Vec<f64>>,
    max_iters: usize,
    tol: f64,
) -> PyResult<(Vec<(f64, f64)>, Vec<f64>)> {
    let ws = Workspace::grid(width, height).map_err(err)?;
    let density = match weights {
        Some(w) => DensityMap::new(w).map_err(err)?,
        None => DensityMap::uniform(ws.len()),
    };
    let start = RobotConfiguration::new(positions, &ws).map_err(err)?;
    let res = coverage::lloyd(&ws, &start, &density, LloydOptions { max_iters, tol }).map_err(err)?;
    Ok((res.config.positions().to_vec(), res.costs))
}

/// Runs the closed-loop scenario; `config` is TOML with any config keys. Returns the metrics CSV.
#[pyfunction]
#[pyo3(signature = (seed, config=""))]
fn scenario(seed: u64, config: &str) -> PyResult<String> {
    let mut cfg = ExperimentConfig::default().merged(config).map_err(err)?;
    cfg.seed = Some(seed);
    let res = run_scenario(&cfg).map_err(err)?;
    let mut buf = Vec::new();
    write_metrics_csv(&mut buf, &res.records).map_err(err)?;
    String::from_utf8(buf).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn pyhetsense(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", io::LIBRARY_VERSION)?;
    m.add_class::<PyDmdModel>()?;
    m.add_class::<PyGeneralOnline>()?;
    m.add_class::<PyLongTermOnline>()?;
    m.add_function(wrap_pyfunction!(damped_oscillation, m)?)?;
    m.add_function(wrap_pyfunction!(lti_field, m)?)?;
    m.add_function(wrap_pyfunction!(inject_noise, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_placement, m)?)?;
    m.add_function(wrap_pyfunction!(lloyd, m)?)?;
    m.add_function(wrap_pyfunction!(scenario, m)?)?;
    Ok(())
}
