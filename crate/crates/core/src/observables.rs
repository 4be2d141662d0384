//! Quantities measured on a trajectory: the uncertainty product Δ(t), its
//! time average Δ_a, and stroboscopic Poincaré sections of (⟨Φ⟩, ⟨Q⟩).

use std::f64::consts::TAU;
use std::io::Write;

use crate::circuit::DimensionlessModel;
use crate::error::{Error, Result};
use crate::qsd::TrajectoryRecord;

/// Number of samples per drive period of `tr`, checked to be an integer.
pub fn samples_per_period(tr: &TrajectoryRecord, m: &DimensionlessModel) -> Result<usize> {
    let spacing = tr.sample_spacing();
    if !(spacing > 0.0) {
        return Err(Error::InsufficientData("trajectory needs at least two samples".into()));
    }
    let ratio = m.period() / spacing;
    if (ratio - ratio.round()).abs() > 1e-6 * ratio || ratio.round() < 1.0 {
        return Err(Error::InvalidParameter {
            field: "sample_stride",
            reason: format!("sampling ({ratio:.6} samples/period) is not commensurate with the drive"),
        });
    }
    Ok(ratio.round() as usize)
}

#[derive(Clone, Debug, PartialEq)]
pub struct UncertaintySeries {
    pub times: Vec<f64>,
    pub delta: Vec<f64>,
    pub delta_a: f64,
}

impl UncertaintySeries {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,delta")?;
        for (t, d) in self.times.iter().zip(&self.delta) {
            writeln!(w, "{t:.16e},{d:.16e}")?;
        }
        Ok(())
    }
}

/// Δ(t) for every sample and its mean over `window_periods` drive periods
/// following the first `skip_periods`.
pub fn uncertainty_series(
    tr: &TrajectoryRecord,
    m: &DimensionlessModel,
    skip_periods: usize,
    window_periods: usize,
) -> Result<UncertaintySeries> {
    if window_periods < 100 {
        log::warn!("averaging window of {window_periods} periods is shorter than 100 periods");
    }
    if window_periods == 0 {
        return Err(Error::InvalidParameter { field: "window_periods", reason: "must be >= 1".into() });
    }
    let spp = samples_per_period(tr, m)?;
    let start = skip_periods * spp;
    let end = start + window_periods * spp;
    if end > tr.len() {
        return Err(Error::InsufficientData(format!(
            "need {end} samples for {skip_periods}+{window_periods} periods, trajectory has {}",
            tr.len()
        )));
    }
    let delta: Vec<f64> = (0..tr.len()).map(|i| tr.uncertainty(i)).collect();
    let delta_a = delta[start..end].iter().sum::<f64>() / (end - start) as f64;
    Ok(UncertaintySeries { times: tr.times.clone(), delta, delta_a })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoincareSection {
    pub points: Vec<(f64, f64)>,
    /// Drive phase ω_d t (mod 2π) at which points are taken.
    pub phase: f64,
    /// Drive-period indices of the first and last point.
    pub period_index_range: (usize, usize),
}

impl PoincareSection {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "mean_phi,mean_q")?;
        for (p, q) in &self.points {
            writeln!(w, "{p:.16e},{q:.16e}")?;
        }
        Ok(())
    }
}

/// Sample indices of the section: one per period at drive phase `phase`,
/// starting after `skip_periods` periods. The phase is rounded to the
/// nearest sample.
pub fn section_indices(
    tr: &TrajectoryRecord,
    m: &DimensionlessModel,
    phase: f64,
    count: usize,
    skip_periods: usize,
) -> Result<Vec<usize>> {
    let spp = samples_per_period(tr, m)?;
    let t0 = tr.times[0];
    // phase offset of the target relative to the first sample, in samples
    let target = phase.rem_euclid(TAU) / TAU - (m.omega_d_ratio * t0).rem_euclid(TAU) / TAU;
    let offset = ((target * spp as f64).round() as i64).rem_euclid(spp as i64) as usize;
    let first = skip_periods * spp + offset;
    let last = first + count.saturating_sub(1) * spp;
    if count == 0 || last >= tr.len() {
        return Err(Error::InsufficientData(format!(
            "section of {count} points after {skip_periods} periods needs sample {last}, trajectory has {}",
            tr.len()
        )));
    }
    Ok((0..count).map(|k| first + k * spp).collect())
}

/// Stroboscopic section of `count` points.
pub fn poincare(
    tr: &TrajectoryRecord,
    m: &DimensionlessModel,
    phase: f64,
    count: usize,
    skip_periods: usize,
) -> Result<PoincareSection> {
    let idx = section_indices(tr, m, phase, count, skip_periods)?;
    let spp = samples_per_period(tr, m)?;
    let points = idx.iter().map(|&i| (tr.mean_phi[i], tr.mean_q[i])).collect();
    Ok(PoincareSection {
        points,
        phase: phase.rem_euclid(TAU),
        period_index_range: (idx[0] / spp, idx[idx.len() - 1] / spp),
    })
}

/// Default linkage radius: 5% of the section's bounding-box diagonal.
pub fn default_linkage_radius(sec: &PoincareSection) -> f64 {
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &sec.points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    0.05 * (x1 - x0).hypot(y1 - y0)
}

/// Number of single-linkage clusters: connected components of the graph
/// linking points closer than `linkage_radius` (default radius when `None`).
pub fn cluster_count(sec: &PoincareSection, linkage_radius: Option<f64>) -> usize {
    let n = sec.points.len();
    if n == 0 {
        return 0;
    }
    let r = linkage_radius.unwrap_or_else(|| default_linkage_radius(sec));
    let r2 = r * r;
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (sec.points[i], sec.points[j]);
            let d2 = (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2);
            if d2 <= r2 {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
    }
    (0..n).filter(|&i| find(&mut parent, i) == i).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SPP: usize = 16;

    /// Synthetic record with `periods` drive periods at `SPP` samples each.
    fn synthetic(m: &DimensionlessModel, periods: usize, f: impl Fn(usize) -> (f64, f64, f64, f64)) -> TrajectoryRecord {
        let dt = m.period() / SPP as f64;
        let mut tr = TrajectoryRecord::default();
        for i in 0..=periods * SPP {
            let (p, q, vp, vq) = f(i);
            tr.times.push(i as f64 * dt);
            tr.mean_phi.push(p);
            tr.mean_q.push(q);
            tr.var_phi.push(vp);
            tr.var_q.push(vq);
            tr.leakage.push(0.0);
            tr.norm_drift.push(0.0);
        }
        tr
    }

    fn model() -> DimensionlessModel {
        DimensionlessModel::from_reduced(1.0, 1.0, 1.0, 1.14)
    }

    #[test]
    fn coherent_and_squeezed_floors() {
        let m = model();
        let tr = synthetic(&m, 130, |_| (0.0, 0.0, 0.5, 0.5));
        let u = uncertainty_series(&tr, &m, 20, 100).unwrap();
        assert!(u.delta.iter().all(|d| (*d - 0.5).abs() < 1e-15));
        assert!((u.delta_a - 0.5).abs() < 1e-15);
        let tr = synthetic(&m, 130, |_| (0.0, 0.0, 1.0, 0.25));
        let u = uncertainty_series(&tr, &m, 20, 100).unwrap();
        assert!((u.delta_a - 0.5).abs() < 1e-15);
    }

    #[test]
    fn short_trajectory_is_insufficient() {
        let m = model();
        let tr = synthetic(&m, 50, |_| (0.0, 0.0, 0.5, 0.5));
        assert!(matches!(uncertainty_series(&tr, &m, 20, 100), Err(Error::InsufficientData(_))));
        assert!(matches!(poincare(&tr, &m, 0.0, 500, 20), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn period_one_orbit_is_a_fixed_point() {
        let m = model();
        let tr = synthetic(&m, 530, |i| {
            let th = TAU * (i % SPP) as f64 / SPP as f64;
            (2.0 * th.cos(), -th.sin(), 0.5, 0.5)
        });
        let sec = poincare(&tr, &m, 0.0, 500, 20).unwrap();
        assert_eq!(sec.len(), 500);
        let (x0, y0) = sec.points[0];
        assert!(sec.points.iter().all(|&(x, y)| (x - x0).abs() < 1e-9 && (y - y0).abs() < 1e-9));
        assert_eq!(sec.period_index_range, (20, 519));
        assert_eq!(cluster_count(&sec, None), 1);
    }

    #[test]
    fn period_three_orbit_gives_three_clusters() {
        let m = model();
        let tr = synthetic(&m, 530, |i| {
            let k = (i / SPP) % 3;
            let jitter = 1e-3 * ((i * 7919) % 13) as f64;
            ([0.0, 5.0, 2.0][k] + jitter, [0.0, 1.0, 4.0][k], 0.5, 0.5)
        });
        let sec = poincare(&tr, &m, 0.0, 500, 20).unwrap();
        assert_eq!(cluster_count(&sec, None), 3);
    }

    #[test]
    fn blobs_and_identical_points() {
        let same = PoincareSection { points: vec![(1.0, 1.0); 10], phase: 0.0, period_index_range: (0, 9) };
        assert_eq!(cluster_count(&same, None), 1);
        let mut pts = Vec::new();
        for (cx, cy) in [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)] {
            for k in 0..20 {
                let a = k as f64 * 0.3;
                pts.push((cx + 0.1 * a.cos(), cy + 0.1 * a.sin()));
            }
        }
        let blobs = PoincareSection { points: pts, phase: 0.0, period_index_range: (0, 59) };
        assert_eq!(cluster_count(&blobs, None), 3);
        assert_eq!(cluster_count(&blobs, Some(100.0)), 1);
    }

    #[test]
    fn csv_headers() {
        let sec = PoincareSection { points: vec![(1.0, 2.0)], phase: 0.0, period_index_range: (0, 0) };
        let mut buf = Vec::new();
        sec.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("mean_phi,mean_q\n"));
        let u = UncertaintySeries { times: vec![0.0], delta: vec![0.5], delta_a: 0.5 };
        let mut buf = Vec::new();
        u.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("t,delta\n"));
    }

    proptest! {
        #[test]
        fn phase_wraps(phase in 0.0f64..TAU) {
            let m = model();
            let tr = synthetic(&m, 40, |i| (i as f64, 0.0, 0.5, 0.5));
            let a = section_indices(&tr, &m, phase, 10, 2).unwrap();
            let b = section_indices(&tr, &m, phase + TAU, 10, 2).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn delta_a_is_period_shift_invariant(shift in 0usize..5, seed in 0u64..1000) {
            // periodic-in-period signal: shifting by whole periods leaves Δ_a unchanged
            let m = model();
            let f = move |i: usize| {
                let x = ((i % SPP) as u64 * 2654435761 + seed) % 1000;
                (0.0, 0.0, 0.5 + x as f64 * 1e-3, 0.6)
            };
            let tr = synthetic(&m, 140, f);
            let a = uncertainty_series(&tr, &m, 20, 100).unwrap().delta_a;
            let b = uncertainty_series(&tr, &m, 20 + shift, 100).unwrap().delta_a;
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
