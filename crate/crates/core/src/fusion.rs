//! Bringing low- and high-fidelity data onto one grid, and error metrics.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::field::{FieldSnapshot, SnapshotSeries, Workspace};

/// Resamples a snapshot from one grid to another covering the same domain.
pub trait Upsampler {
    fn upsample(&self, s: &FieldSnapshot, from: &Workspace, to: &Workspace) -> Result<FieldSnapshot>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Bilinear;

impl Upsampler for Bilinear {
    fn upsample(&self, s: &FieldSnapshot, from: &Workspace, to: &Workspace) -> Result<FieldSnapshot> {
        bilinear_upsample(s, from, to)
    }
}

fn source_coord(u: f64, n: usize) -> (usize, usize, f64) {
    if n <= 1 {
        return (0, 0, 0.0);
    }
    let f = (u * (n - 1) as f64).clamp(0.0, (n - 1) as f64);
    let i0 = (f.floor() as usize).min(n - 2);
    (i0, i0 + 1, f - i0 as f64)
}

/// Bilinear interpolation with both grids mapped onto the unit square.
pub fn bilinear_upsample(s: &FieldSnapshot, from: &Workspace, to: &Workspace) -> Result<FieldSnapshot> {
    s.check_workspace(from)?;
    if to.width() < from.width() || to.height() < from.height() {
        return Err(Error::InvalidInput(format!(
            "target grid {}x{} is coarser than source {}x{}",
            to.width(),
            to.height(),
            from.width(),
            from.height()
        )));
    }
    let v = &s.values;
    let values = (0..to.len())
        .map(|i| {
            let (u, w) = to.unit_coords(i);
            let (x0, x1, tx) = source_coord(u, from.width());
            let (y0, y1, ty) = source_coord(w, from.height());
            let at = |x, y| v[from.index_of(x, y)];
            let top = (1.0 - tx) * at(x0, y0) + tx * at(x1, y0);
            let bottom = (1.0 - tx) * at(x0, y1) + tx * at(x1, y1);
            (1.0 - ty) * top + ty * bottom
        })
        .collect();
    Ok(FieldSnapshot { values, time: s.time })
}

/// Replaces the low-fidelity estimate by the high-fidelity reconstruction wherever one
/// exists for that time index.
pub fn assemble_combined(av: &SnapshotSeries, mv: &BTreeMap<usize, FieldSnapshot>) -> Result<SnapshotSeries> {
    let n = av.n_points();
    if let Some((&k, _)) = mv.range(av.len()..).next() {
        return Err(Error::InvalidInput(format!("high-fidelity time index {k} beyond the {} available steps", av.len())));
    }
    let mut out = Vec::with_capacity(av.len());
    for (k, s) in av.snapshots().iter().enumerate() {
        match mv.get(&k) {
            Some(r) => {
                if r.len() != n {
                    return Err(Error::DimensionMismatch { what: "reconstruction length", expected: n, found: r.len() });
                }
                out.push(FieldSnapshot { values: r.values.clone(), time: s.time });
            }
            None => out.push(s.clone()),
        }
    }
    SnapshotSeries::new(out, av.dt())
}

/// `(1/N) Σ (x̂_i − x_i)²`.
pub fn mse(est: &FieldSnapshot, truth: &FieldSnapshot) -> Result<f64> {
    if est.len() != truth.len() {
        return Err(Error::DimensionMismatch { what: "snapshot length", expected: truth.len(), found: est.len() });
    }
    if est.is_empty() {
        return Err(Error::InvalidInput("empty snapshot".into()));
    }
    Ok(est.values.iter().zip(&truth.values).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / est.len() as f64)
}

/// Snapshot MSE averaged over time.
pub fn mse_series(est: &SnapshotSeries, truth: &SnapshotSeries) -> Result<f64> {
    if est.len() != truth.len() {
        return Err(Error::DimensionMismatch { what: "series length", expected: truth.len(), found: est.len() });
    }
    let mut acc = 0.0;
    for (a, b) in est.snapshots().iter().zip(truth.snapshots()) {
        acc += mse(a, b)?;
    }
    Ok(acc / est.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Purpose};
    use proptest::prelude::*;
    use rand::Rng;

    fn snap(v: Vec<f64>) -> FieldSnapshot {
        FieldSnapshot::new(v, 0.0).unwrap()
    }

    #[test]
    fn upsample_cases() {
        let from = Workspace::grid(2, 2).unwrap();
        let to = Workspace::grid(3, 3).unwrap();
        let up = bilinear_upsample(&snap(vec![0.0, 1.0, 1.0, 2.0]), &from, &to).unwrap();
        assert!((up.values[4] - 1.0).abs() < 1e-15);
        assert_eq!(up.values[0], 0.0);
        assert_eq!(up.values[8], 2.0);

        let c = bilinear_upsample(&snap(vec![3.5; 4]), &from, &Workspace::grid(7, 5).unwrap()).unwrap();
        assert!(c.values.iter().all(|&v| (v - 3.5).abs() < 1e-15));

        let s = snap((0..6).map(|i| (i * i) as f64).collect());
        let ws = Workspace::grid(3, 2).unwrap();
        assert_eq!(bilinear_upsample(&s, &ws, &ws).unwrap(), s);

        assert!(bilinear_upsample(&s, &ws, &Workspace::grid(2, 2).unwrap()).is_err());
    }

    #[test]
    fn upsample_single_row_source() {
        let from = Workspace::grid(3, 1).unwrap();
        let to = Workspace::grid(5, 2).unwrap();
        let up = bilinear_upsample(&snap(vec![0.0, 2.0, 4.0]), &from, &to).unwrap();
        assert_eq!(up.values, vec![0.0, 1.0, 2.0, 3.0, 4.0, 0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    fn series(values: &[f64], n: usize) -> SnapshotSeries {
        SnapshotSeries::new(values.iter().enumerate().map(|(k, &v)| FieldSnapshot { values: vec![v; n], time: k as f64 }).collect(), 1.0)
            .unwrap()
    }

    #[test]
    fn assemble_cases() {
        let av = series(&[0.0; 11], 3);
        assert_eq!(assemble_combined(&av, &BTreeMap::new()).unwrap(), av);

        let all: BTreeMap<usize, FieldSnapshot> = (0..11).map(|k| (k, snap(vec![k as f64 + 1.0; 3]))).collect();
        let out = assemble_combined(&av, &all).unwrap();
        assert!(out.snapshots().iter().enumerate().all(|(k, s)| s.values[0] == k as f64 + 1.0));

        let every5: BTreeMap<usize, FieldSnapshot> = (0..11).step_by(5).map(|k| (k, snap(vec![1.0; 3]))).collect();
        let out = assemble_combined(&av, &every5).unwrap();
        assert_eq!(out.snapshots().iter().filter(|s| s.values[0] == 1.0).count(), 10 / 5 + 1);
        assert_eq!(assemble_combined(&out, &every5).unwrap(), out);

        let late: BTreeMap<usize, FieldSnapshot> = [(11, snap(vec![1.0; 3]))].into();
        assert!(assemble_combined(&av, &late).is_err());
        let wrong: BTreeMap<usize, FieldSnapshot> = [(1, snap(vec![1.0; 2]))].into();
        assert!(assemble_combined(&av, &wrong).is_err());
    }

    #[test]
    fn mse_cases() {
        let t = snap(vec![1.0, -2.0, 0.5]);
        assert_eq!(mse(&t, &t).unwrap(), 0.0);
        let shifted = snap(t.values.iter().map(|v| v + 0.3).collect());
        assert!((mse(&shifted, &t).unwrap() - 0.09).abs() < 1e-15);
        assert!(mse(&t, &snap(vec![1.0])).is_err());

        let mut r = rng::stream(2, 0, Purpose::Misc);
        let a: Vec<f64> = (0..50).map(|_| r.random()).collect();
        let b: Vec<f64> = (0..50).map(|_| r.random()).collect();
        let mut reference = 0.0;
        for i in 0..50 {
            let d = a[i] - b[i];
            reference += d * d;
        }
        reference /= 50.0;
        assert!((mse(&snap(a), &snap(b)).unwrap() - reference).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn upsample_stays_within_bounds(values in proptest::collection::vec(-10.0f64..10.0, 12), tw in 4usize..12, th in 3usize..9) {
            let from = Workspace::grid(4, 3).unwrap();
            let to = Workspace::grid(tw, th).unwrap();
            let up = bilinear_upsample(&snap(values.clone()), &from, &to).unwrap();
            let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(up.values.iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
        }

        #[test]
        fn mse_symmetric(a in proptest::collection::vec(-5.0f64..5.0, 8), b in proptest::collection::vec(-5.0f64..5.0, 8)) {
            let (x, y) = (snap(a), snap(b));
            prop_assert_eq!(mse(&x, &y).unwrap(), mse(&y, &x).unwrap());
        }
    }
}
