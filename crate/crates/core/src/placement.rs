//! Sensing-region selection by greedy (block) pivoted QR on `Φ Φᴴ`.
//!
//! The greedy runs on any matrix whose columns correspond to grid points. Forming
//! the `N × N` Gram is wasteful, so [`compressed_gram`] returns `C = R Φᴴ` (with
//! `Φ = Q R`): `Φ Φᴴ = Q C` and `Q` has orthonormal columns, so column norms and
//! orthogonal projections of `C` match those of `Φ Φᴴ` exactly.

use faer::{c64, Mat, MatRef};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::dmd::DmdModel;
use crate::error::{Error, Result};
use crate::field::Workspace;
use crate::recon::{placement_objective, ObservationSet};

/// Grid points within Euclidean distance `radius` (in cells) of `center`.
#[derive(Clone, Debug, PartialEq)]
pub struct SensingRegion {
    pub center: usize,
    pub radius: f64,
    pub members: Vec<usize>,
}

impl SensingRegion {
    pub fn new(ws: &Workspace, center: usize, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::InvalidInput(format!("sensing radius must be finite and non-negative, got {radius}")));
        }
        if center >= ws.len() {
            return Err(Error::InvalidInput(format!("region center {center} outside workspace")));
        }
        let (cx, cy) = ws.point_of(center);
        let reach = radius.floor() as usize;
        let r2 = radius * radius + 1e-9;
        let mut members = Vec::new();
        for y in cy.saturating_sub(reach)..=(cy + reach).min(ws.height() - 1) {
            for x in cx.saturating_sub(reach)..=(cx + reach).min(ws.width() - 1) {
                let (dx, dy) = (x as f64 - cx as f64, y as f64 - cy as f64);
                if dx * dx + dy * dy <= r2 {
                    members.push(ws.index_of(x, y));
                }
            }
        }
        Ok(Self { center, radius, members })
    }

    pub fn overlaps(&self, other: &SensingRegion) -> bool {
        let (mut i, mut j) = (0, 0);
        while i < self.members.len() && j < other.members.len() {
            match self.members[i].cmp(&other.members[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => return true,
            }
        }
        false
    }
}

/// One candidate disk per grid point, clipped at the workspace boundary.
pub fn enumerate_candidates(ws: &Workspace, radius: f64) -> Result<Vec<SensingRegion>> {
    (0..ws.len()).map(|c| SensingRegion::new(ws, c, radius)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Placement {
    pub regions: Vec<SensingRegion>,
    /// `‖selected block‖₂ / Σ column norms`, both on the matrix as it stood when the region was picked.
    pub weights: Vec<f64>,
}

impl Placement {
    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn centers(&self) -> Vec<usize> {
        self.regions.iter().map(|r| r.center).collect()
    }

    pub fn observations(&self, n_points: usize) -> Result<ObservationSet> {
        ObservationSet::from_unsorted(self.regions.iter().flat_map(|r| r.members.iter().copied()).collect(), n_points)
    }

    pub fn is_disjoint(&self) -> bool {
        self.regions
            .iter()
            .enumerate()
            .all(|(i, a)| self.regions[i + 1..].iter().all(|b| !a.overlaps(b)))
    }
}

/// `Φ Φᴴ`; only practical for small grids.
pub fn gram(model: &DmdModel) -> Mat<c64> {
    &model.modes * model.modes.adjoint()
}

/// `R Φᴴ` where `Φ = Q R`; see the module docs.
pub fn compressed_gram(model: &DmdModel) -> Mat<c64> {
    let qr = model.modes.qr();
    let r = qr.thin_R();
    r * model.modes.adjoint()
}

fn column_norms(c: MatRef<'_, c64>) -> Vec<f64> {
    (0..c.ncols()).map(|j| c.col(j).norm_l2()).collect()
}

fn select_columns(c: MatRef<'_, c64>, cols: &[usize]) -> Mat<c64> {
    Mat::from_fn(c.nrows(), cols.len(), |i, j| c[(i, cols[j])])
}

/// Removes from every column its orthogonal projection onto the span of `block`.
/// Returns the spectral norm of `block`.
fn deflate(c: &mut Mat<c64>, block: MatRef<'_, c64>) -> Result<f64> {
    let svd = block.thin_svd().map_err(|e| Error::Decomposition(format!("svd: {e:?}")))?;
    let s: Vec<f64> = svd.S().column_vector().iter().map(|v| v.re).collect();
    let smax = s.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return Ok(0.0);
    }
    let rank = s.iter().take_while(|&&v| v > 1e-10 * smax).count();
    let q = svd.U().subcols(0, rank);
    // Two passes: classical Gram-Schmidt twice is enough for orthogonality to working precision.
    for _ in 0..2 {
        let coef = q.adjoint() * &*c;
        *c -= q * &coef;
    }
    Ok(smax)
}

/// Residual column-norm total, relative to the starting total, below which the
/// matrix counts as exhausted.
const EXHAUSTED: f64 = 1e-10;

/// Once the picked regions span the whole column space the deflated matrix is pure
/// round-off; the search then restarts from the undeflated matrix so later picks still
/// follow informativeness (among the remaining disjoint candidates) instead of noise.
fn greedy(mut c: Mat<c64>, candidates: Vec<SensingRegion>, count: usize) -> Result<Placement> {
    let n = c.ncols();
    let original = c.clone();
    let initial_total: f64 = column_norms(c.as_ref()).iter().sum();
    let mut occupied = vec![false; n];
    let mut alive: Vec<bool> = vec![true; candidates.len()];
    let mut picked = Vec::with_capacity(count);
    let mut weights = Vec::with_capacity(count);
    for it in 0..count {
        let norms = column_norms(c.as_ref());
        let total: f64 = norms.iter().sum();
        let mut best: Option<(usize, f64)> = None;
        for (j, cand) in candidates.iter().enumerate() {
            if !alive[j] {
                continue;
            }
            if cand.members.iter().any(|&p| occupied[p]) {
                alive[j] = false;
                continue;
            }
            let score: f64 = cand.members.iter().map(|&p| norms[p]).sum();
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((j, score));
            }
        }
        let Some((j, _)) = best else {
            return Err(Error::Infeasible { requested: count, feasible: it });
        };
        let region = candidates[j].clone();
        for &p in &region.members {
            occupied[p] = true;
        }
        alive[j] = false;
        let block = select_columns(c.as_ref(), &region.members);
        let spectral = deflate(&mut c, block.as_ref())?;
        weights.push(if total > 0.0 { spectral / total } else { 0.0 });
        picked.push(region);
        let residual: f64 = column_norms(c.as_ref()).iter().sum();
        if residual <= EXHAUSTED * initial_total {
            c.copy_from(&original);
        }
    }
    Ok(Placement { regions: picked, weights })
}

/// Point-wise pivoted QR: repeatedly pick the column of largest norm (lowest index on
/// ties) and remove its direction from every column.
pub fn pivoted_qr_points(m: MatRef<'_, c64>, count: usize) -> Result<Vec<usize>> {
    if count > m.ncols() {
        return Err(Error::Infeasible { requested: count, feasible: m.ncols() });
    }
    let candidates = (0..m.ncols()).map(|j| SensingRegion { center: j, radius: 0.0, members: vec![j] }).collect();
    Ok(greedy(m.to_owned(), candidates, count)?.centers())
}

/// Block pivoted QR over disks of `radius` cells. `m` has one column per grid point,
/// e.g. [`gram`] or [`compressed_gram`].
pub fn block_pivoted_qr(m: MatRef<'_, c64>, ws: &Workspace, radius: f64, count: usize) -> Result<Placement> {
    if m.ncols() != ws.len() {
        return Err(Error::DimensionMismatch { what: "placement matrix columns", expected: ws.len(), found: m.ncols() });
    }
    if count == 0 {
        return Err(Error::InvalidInput("need at least one sensing region".into()));
    }
    let placement = greedy(m.to_owned(), enumerate_candidates(ws, radius)?, count)?;
    debug_assert!(placement.is_disjoint());
    Ok(placement)
}

pub fn optimal_placement(model: &DmdModel, ws: &Workspace, radius: f64, count: usize) -> Result<Placement> {
    block_pivoted_qr(compressed_gram(model).as_ref(), ws, radius, count)
}

/// Uniformly shuffled first-fit packing of `count` disjoint disks; weights are uniform.
/// Retries a few shuffles before reporting the placement infeasible.
pub fn random_placement<R: Rng + ?Sized>(ws: &Workspace, radius: f64, count: usize, rng: &mut R) -> Result<Placement> {
    if count == 0 {
        return Err(Error::InvalidInput("need at least one sensing region".into()));
    }
    let mut candidates = enumerate_candidates(ws, radius)?;
    let mut most = 0;
    for _ in 0..64 {
        candidates.shuffle(rng);
        let mut picked: Vec<SensingRegion> = Vec::with_capacity(count);
        for c in &candidates {
            if picked.iter().all(|p| !p.overlaps(c)) {
                picked.push(c.clone());
                if picked.len() == count {
                    return Ok(Placement { regions: picked, weights: vec![1.0 / count as f64; count] });
                }
            }
        }
        most = most.max(picked.len());
    }
    Err(Error::Infeasible { requested: count, feasible: most })
}

pub const BRUTE_FORCE_LIMIT: u128 = 5_000_000;

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i as u128 + 1))
}

/// Exhaustive maximization of [`placement_objective`] over disjoint `count`-tuples of
/// candidate regions. Returns the first maximizer in lexicographic center order and
/// its objective. Weights are uniform, since no greedy ordering exists.
pub fn brute_force_placement(model: &DmdModel, ws: &Workspace, radius: f64, count: usize) -> Result<(Placement, f64)> {
    if count == 0 || count > 3 {
        return Err(Error::InvalidInput(format!("exhaustive placement supports 1 to 3 regions, got {count}")));
    }
    let size = binomial(ws.len(), count);
    if size > BRUTE_FORCE_LIMIT {
        return Err(Error::SizeGuard { size, limit: BRUTE_FORCE_LIMIT });
    }
    let candidates = enumerate_candidates(ws, radius)?;
    let n = ws.len();
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut stack: Vec<usize> = Vec::with_capacity(count);

    fn recurse(
        start: usize,
        count: usize,
        stack: &mut Vec<usize>,
        candidates: &[SensingRegion],
        eval: &mut dyn FnMut(&[usize]),
    ) {
        if stack.len() == count {
            eval(stack);
            return;
        }
        for j in start..candidates.len() {
            if stack.iter().any(|&s| candidates[s].overlaps(&candidates[j])) {
                continue;
            }
            stack.push(j);
            recurse(j + 1, count, stack, candidates, eval);
            stack.pop();
        }
    }

    let mut eval = |tuple: &[usize]| {
        let members: Vec<usize> = tuple.iter().flat_map(|&j| candidates[j].members.iter().copied()).collect();
        let obs = ObservationSet::from_unsorted(members, n).expect("candidate members lie in the workspace");
        let value = placement_objective(model, &obs);
        if best.as_ref().is_none_or(|(_, b)| value > *b) {
            best = Some((tuple.to_vec(), value));
        }
    };
    recurse(0, count, &mut stack, &candidates, &mut eval);

    let Some((tuple, value)) = best else {
        return Err(Error::Infeasible { requested: count, feasible: 0 });
    };
    let regions: Vec<SensingRegion> = tuple.iter().map(|&j| candidates[j].clone()).collect();
    let weights = vec![1.0 / count as f64; count];
    Ok((Placement { regions, weights }, value))
}
