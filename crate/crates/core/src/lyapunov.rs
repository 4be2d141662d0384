//! Maximal Lyapunov exponent of a scalar series by delay embedding and the
//! Kantz stretching-factor method.
//!
//! For each reference vector `v_i` with ε-neighbourhood `U_i` (maximum norm,
//! Theiler window excluded) the stretching curve is
//!
//! ```text
//! S(Δn) = ⟨ ln( 1/|U_i| Σ_{j∈U_i} |x_{i+o+Δn} − x_{j+o+Δn}| ) ⟩_i,   o = (m−1)·d
//! ```
//!
//! and λ is the slope of its linear region.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::qsd::TrajectoryRecord;

/// References per reduction chunk. Chunk boundaries do not depend on the
/// thread count, so the reduction order (and the result) is fixed.
const CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Divergence {
    /// Distance of the last embedding coordinate projected forward.
    #[default]
    Scalar,
    /// Maximum-norm distance of the whole forward-shifted delay vectors.
    Vector,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmbeddingConfig {
    /// Delay d in samples.
    pub delay: usize,
    /// Embedding dimension m.
    pub dim: usize,
    /// Neighbours closer in time than this many samples are excluded.
    pub theiler: usize,
    /// Neighbourhood radius as a fraction of the series' extent.
    pub scale: f64,
    pub max_horizon: usize,
    pub min_neighbors: usize,
    /// Number of reference points, evenly spaced; `None` uses all.
    pub references: Option<usize>,
    pub divergence: Divergence,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            delay: 3,
            dim: 3,
            theiler: 64,
            scale: 0.014,
            max_horizon: 256,
            min_neighbors: 5,
            references: None,
            divergence: Divergence::Scalar,
        }
    }
}

impl EmbeddingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &'static str, reason: &str| Err(Error::InvalidParameter { field, reason: reason.into() });
        if self.delay < 1 {
            return bad("delay", "must be >= 1");
        }
        if self.dim < 1 {
            return bad("dim", "must be >= 1");
        }
        if !(self.scale > 0.0 && self.scale < 1.0) {
            return bad("scale", "must lie in (0, 1)");
        }
        if self.min_neighbors < 1 {
            return bad("min_neighbors", "must be >= 1");
        }
        Ok(())
    }

    /// Offset of the last embedding coordinate, `(m−1)·d`.
    pub fn span(&self) -> usize {
        (self.dim - 1) * self.delay
    }
}

/// Delay vectors `v_i = (x_i, x_{i+d}, …, x_{i+(m−1)d})`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DelayCloud {
    pub dim: usize,
    pub delay: usize,
    data: Vec<f64>,
}

impl DelayCloud {
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn max_dist(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.vector(i), self.vector(j));
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }
}

pub fn embed(series: &[f64], cfg: &EmbeddingConfig) -> Result<DelayCloud> {
    cfg.validate()?;
    let need = cfg.span() + cfg.max_horizon + 1;
    if series.len() <= need {
        return Err(Error::InsufficientData(format!(
            "series of {} samples too short for embedding span {} and horizon {}",
            series.len(),
            cfg.span(),
            cfg.max_horizon
        )));
    }
    let count = series.len() - cfg.span();
    let mut data = Vec::with_capacity(count * cfg.dim);
    for i in 0..count {
        for k in 0..cfg.dim {
            data.push(series[i + k * cfg.delay]);
        }
    }
    Ok(DelayCloud { dim: cfg.dim, delay: cfg.delay, data })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StretchingCurve {
    pub horizons: Vec<usize>,
    pub s_values: Vec<f64>,
    pub valid_refs: usize,
}

impl StretchingCurve {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "horizon,s_value,valid_refs")?;
        for (h, s) in self.horizons.iter().zip(&self.s_values) {
            writeln!(w, "{h},{s:.16e},{}", self.valid_refs)?;
        }
        Ok(())
    }
}

/// Neighbour statistics for one reference, exposed for instrumentation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NeighborSet {
    pub reference: usize,
    pub neighbors: Vec<usize>,
}

struct Search<'a> {
    cloud: &'a DelayCloud,
    /// Candidate indices sorted by first coordinate.
    sorted: Vec<usize>,
    keys: Vec<f64>,
    eps: f64,
    theiler: usize,
}

impl<'a> Search<'a> {
    fn new(cloud: &'a DelayCloud, candidates: usize, eps: f64, theiler: usize) -> Self {
        let mut sorted: Vec<usize> = (0..candidates).collect();
        sorted.sort_by(|&a, &b| cloud.vector(a)[0].total_cmp(&cloud.vector(b)[0]).then(a.cmp(&b)));
        let keys = sorted.iter().map(|&i| cloud.vector(i)[0]).collect();
        Self { cloud, sorted, keys, eps, theiler }
    }

    fn neighbors(&self, i: usize) -> Vec<usize> {
        let x = self.cloud.vector(i)[0];
        let lo = self.keys.partition_point(|&k| k <= x - self.eps);
        let hi = self.keys.partition_point(|&k| k < x + self.eps);
        let mut out: Vec<usize> = self.sorted[lo..hi]
            .iter()
            .copied()
            .filter(|&j| j.abs_diff(i) > self.theiler && self.cloud.max_dist(i, j) < self.eps)
            .collect();
        out.sort_unstable();
        out
    }
}

fn extent(series: &[f64]) -> f64 {
    let (lo, hi) = series
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    hi - lo
}

/// Reference indices: all candidates, or `n` evenly spaced ones.
fn reference_indices(candidates: usize, references: Option<usize>) -> Vec<usize> {
    match references {
        Some(n) if n < candidates && n > 0 => (0..n).map(|k| k * candidates / n).collect(),
        _ => (0..candidates).collect(),
    }
}

/// Neighbour sets of every reference point (instrumentation and tests).
pub fn neighbor_sets(cloud: &DelayCloud, series: &[f64], cfg: &EmbeddingConfig) -> Vec<NeighborSet> {
    let candidates = cloud.len().saturating_sub(cfg.max_horizon);
    let search = Search::new(cloud, candidates, cfg.scale * extent(series), cfg.theiler);
    reference_indices(candidates, cfg.references)
        .into_iter()
        .map(|i| NeighborSet { reference: i, neighbors: search.neighbors(i) })
        .collect()
}

pub fn stretching(cloud: &DelayCloud, series: &[f64], cfg: &EmbeddingConfig, exec: Execution) -> Result<StretchingCurve> {
    cfg.validate()?;
    if cloud.len() + cfg.span() != series.len() {
        return Err(Error::DimensionMismatch { expected: series.len() - cfg.span(), got: cloud.len() });
    }
    let candidates = cloud.len().saturating_sub(cfg.max_horizon);
    if candidates == 0 {
        return Err(Error::InsufficientData("no reference point has a full horizon".into()));
    }
    let eps = cfg.scale * extent(series);
    // distances below the float resolution of the data are indistinguishable
    let floor = f64::EPSILON * series.iter().fold(f64::MIN_POSITIVE, |m, x| m.max(x.abs()));
    let search = Search::new(cloud, candidates, eps, cfg.theiler);
    let refs = reference_indices(candidates, cfg.references);
    let horizons = cfg.max_horizon + 1;
    let off = cfg.span();

    let chunks: Vec<&[usize]> = refs.chunks(CHUNK).collect();
    let partial = exec.map(&chunks, |chunk| {
        let mut sums = vec![0.0; horizons];
        let mut valid = 0usize;
        let mut logs = vec![0.0; horizons];
        for &i in chunk.iter() {
            let nb = search.neighbors(i);
            if nb.len() < cfg.min_neighbors {
                continue;
            }
            for (h, slot) in logs.iter_mut().enumerate() {
                let dist: f64 = match cfg.divergence {
                    Divergence::Scalar => {
                        let xi = series[i + off + h];
                        nb.iter().map(|&j| (xi - series[j + off + h]).abs()).sum()
                    }
                    Divergence::Vector => nb.iter().map(|&j| cloud.max_dist(i + h, j + h)).sum(),
                };
                let mean = dist / nb.len() as f64;
                *slot = mean.max(floor).ln();
            }
            if logs.iter().all(|&l| l <= floor.ln()) {
                // neighbour futures coincide with the reference's: no information
                continue;
            }
            valid += 1;
            for (s, l) in sums.iter_mut().zip(&logs) {
                *s += l;
            }
        }
        (sums, valid)
    });
    let mut sums = vec![0.0; horizons];
    let mut valid = 0;
    for (s, v) in partial {
        valid += v;
        for (acc, x) in sums.iter_mut().zip(s) {
            *acc += x;
        }
    }
    if valid == 0 {
        return Err(Error::EstimationFailure(format!(
            "no reference point has {} non-degenerate neighbours within eps = {eps:.3e}; increase `scale`",
            cfg.min_neighbors
        )));
    }
    Ok(StretchingCurve {
        horizons: (0..horizons).collect(),
        s_values: sums.iter().map(|s| s / valid as f64).collect(),
        valid_refs: valid,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LyapunovEstimate {
    pub lambda_per_sample: f64,
    pub lambda_per_unit_time: f64,
    /// Inclusive horizon range of the fit.
    pub fit_range: (usize, usize),
    /// RMS residual of the line fit.
    pub fit_residual: f64,
    /// The curve was constant over the fit range.
    pub flat: bool,
}

/// Least-squares line `S ≈ a + λ·n` over `fit_range` (inclusive).
/// `sample_spacing` converts the slope to nats per unit time.
pub fn fit_lambda(curve: &StretchingCurve, fit_range: (usize, usize), sample_spacing: f64) -> Result<LyapunovEstimate> {
    let (n1, n2) = fit_range;
    if n2 >= curve.s_values.len() || n1 > n2 || n2 - n1 + 1 < 3 {
        return Err(Error::InvalidParameter {
            field: "fit_range",
            reason: format!("[{n1}, {n2}] must hold >= 3 horizons within 0..{}", curve.s_values.len()),
        });
    }
    let (slope, rms) = line_fit(&curve.horizons[n1..=n2], &curve.s_values[n1..=n2]);
    let flat = curve.s_values[n1..=n2].iter().all(|&s| s == curve.s_values[n1]);
    let (slope, rms) = if flat { (0.0, 0.0) } else { (slope, rms) };
    Ok(LyapunovEstimate {
        lambda_per_sample: slope,
        lambda_per_unit_time: slope / sample_spacing,
        fit_range,
        fit_residual: rms,
        flat,
    })
}

fn line_fit(x: &[usize], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().map(|&v| v as f64).sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        let dx = xi as f64 - mx;
        sxy += dx * (yi - my);
        sxx += dx * dx;
    }
    let slope = sxy / sxx;
    let ss: f64 = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let r = yi - my - slope * (xi as f64 - mx);
            r * r
        })
        .sum();
    (slope, (ss / n).sqrt())
}

/// Automatic fit window.
///
/// The growth phase runs from S(0) to the end of the initial monotone rise
/// (the first horizon after which S decreases). Horizons within 5% of that
/// rise of either end are excluded as noise floor and saturation. Inside the
/// remaining region, the longest window of at least `min_points` horizons
/// whose RMS residual stays within twice the best `min_points`-window
/// residual is chosen (earliest on ties). A curve that never rises is fitted
/// over its whole length.
pub fn auto_fit_range(curve: &StretchingCurve, min_points: usize) -> (usize, usize) {
    let s = &curve.s_values;
    let last = s.len() - 1;
    let min_points = min_points.clamp(3, s.len());
    let s0 = s[0];
    let peak_at = (0..last).find(|&n| s[n + 1] < s[n]).unwrap_or(last);
    let rise = s[peak_at] - s0;
    if !(rise > 0.0) {
        return (0, last);
    }
    let lo = (0..=peak_at).find(|&n| s[n] >= s0 + 0.05 * rise).unwrap_or(0);
    let hi = (lo..=peak_at).rev().find(|&n| s[n] <= s[peak_at] - 0.05 * rise).unwrap_or(peak_at);
    if hi + 1 < lo + min_points {
        // region too short: take the minimal window anchored at its start
        let lo = lo.min(s.len() - min_points);
        return (lo, lo + min_points - 1);
    }

    let rms = |a: usize, b: usize| line_fit(&curve.horizons[a..=b], &s[a..=b]).1;
    let best_short = (lo..=hi + 1 - min_points)
        .map(|a| rms(a, a + min_points - 1))
        .fold(f64::INFINITY, f64::min);
    let tol = 2.0 * best_short + 1e-12;
    for len in (min_points..=hi - lo + 1).rev() {
        for a in lo..=hi + 1 - len {
            if rms(a, a + len - 1) <= tol {
                return (a, a + len - 1);
            }
        }
    }
    (lo, lo + min_points - 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum FitRange {
    #[default]
    Auto,
    Manual(usize, usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct LyapunovAnalysis {
    pub curve: StretchingCurve,
    pub estimate: LyapunovEstimate,
}

/// embed → stretching → fit on a scalar series.
pub fn lambda_of_series(
    series: &[f64],
    sample_spacing: f64,
    cfg: &EmbeddingConfig,
    fit: FitRange,
    min_fit_points: usize,
    exec: Execution,
) -> Result<LyapunovAnalysis> {
    let cloud = embed(series, cfg)?;
    let curve = stretching(&cloud, series, cfg, exec)?;
    let range = match fit {
        FitRange::Auto => auto_fit_range(&curve, min_fit_points),
        FitRange::Manual(a, b) => (a, b),
    };
    let estimate = fit_lambda(&curve, range, sample_spacing)?;
    Ok(LyapunovAnalysis { curve, estimate })
}

/// λ_m of the ⟨Φ(t)⟩ series of a (transient-trimmed) trajectory.
pub fn lambda_of_trajectory(
    tr: &TrajectoryRecord,
    cfg: &EmbeddingConfig,
    fit: FitRange,
    exec: Execution,
) -> Result<LyapunovAnalysis> {
    lambda_of_series(&tr.mean_phi, tr.sample_spacing(), cfg, fit, 8, exec)
}

/// Reference maps with exponents from tangent-space (Benettin) iteration,
/// independent of the embedding estimator.
pub mod oracles {
    /// x-coordinate of the Hénon map `(x, y) → (1 − a x² + y, b x)`.
    pub fn henon_series(n: usize, a: f64, b: f64) -> Vec<f64> {
        let (mut x, mut y) = (0.1, 0.1);
        for _ in 0..1000 {
            (x, y) = (1.0 - a * x * x + y, b * x);
        }
        (0..n)
            .map(|_| {
                (x, y) = (1.0 - a * x * x + y, b * x);
                x
            })
            .collect()
    }

    /// Largest exponent of the Hénon map from the Jacobian `[[−2ax, 1], [b, 0]]`
    /// applied to a renormalized tangent vector.
    pub fn henon_tangent_exponent(n: usize, a: f64, b: f64) -> f64 {
        let (mut x, mut y) = (0.1, 0.1);
        for _ in 0..1000 {
            (x, y) = (1.0 - a * x * x + y, b * x);
        }
        let (mut u, mut v) = (1.0f64, 0.0f64);
        let mut sum = 0.0;
        for _ in 0..n {
            let (nu, nv) = (-2.0 * a * x * u + v, b * u);
            (x, y) = (1.0 - a * x * x + y, b * x);
            let norm = nu.hypot(nv);
            sum += norm.ln();
            (u, v) = (nu / norm, nv / norm);
        }
        sum / n as f64
    }

    pub fn logistic_series(n: usize, r: f64) -> Vec<f64> {
        let mut x = 0.123456789;
        for _ in 0..1000 {
            x = r * x * (1.0 - x);
        }
        (0..n)
            .map(|_| {
                x = r * x * (1.0 - x);
                x
            })
            .collect()
    }

    /// Mean of `ln|r(1 − 2x)|` along the orbit.
    pub fn logistic_tangent_exponent(n: usize, r: f64) -> f64 {
        let mut x = 0.123456789;
        for _ in 0..1000 {
            x = r * x * (1.0 - x);
        }
        let mut sum = 0.0;
        for _ in 0..n {
            sum += (r * (1.0 - 2.0 * x)).abs().ln();
            x = r * x * (1.0 - x);
        }
        sum / n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::oracles::*;
    use super::*;
    use proptest::prelude::*;

    fn cfg_small() -> EmbeddingConfig {
        EmbeddingConfig { theiler: 0, max_horizon: 2, ..EmbeddingConfig::default() }
    }

    #[test]
    fn embedding_examples() {
        let series: Vec<f64> = (1..=10).map(f64::from).collect();
        let cloud = embed(&series, &cfg_small()).unwrap();
        assert_eq!(cloud.len(), 4);
        assert_eq!(cloud.vector(0), &[1.0, 4.0, 7.0]);
        assert_eq!(cloud.vector(3), &[4.0, 7.0, 10.0]);

        let constant = vec![2.5; 12];
        let cloud = embed(&constant, &cfg_small()).unwrap();
        assert!((0..cloud.len()).all(|i| cloud.vector(i) == [2.5, 2.5, 2.5]));

        let identity = EmbeddingConfig { delay: 1, dim: 1, max_horizon: 0, ..cfg_small() };
        let cloud = embed(&series, &identity).unwrap();
        assert_eq!((0..cloud.len()).map(|i| cloud.vector(i)[0]).collect::<Vec<_>>(), series);

        let long = EmbeddingConfig { max_horizon: 3, ..cfg_small() };
        assert!(matches!(embed(&series, &long), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn rejects_bad_config() {
        let series = vec![0.0; 100];
        for bad in [
            EmbeddingConfig { delay: 0, ..cfg_small() },
            EmbeddingConfig { scale: 0.0, ..cfg_small() },
            EmbeddingConfig { scale: 1.0, ..cfg_small() },
            EmbeddingConfig { min_neighbors: 0, ..cfg_small() },
        ] {
            assert!(embed(&series, &bad).is_err());
        }
    }

    #[test]
    fn duplicated_trajectory_is_degenerate() {
        // a trajectory followed by an exact copy: every neighbour is the twin
        // and its future distance is exactly zero
        let base = henon_series(500, 1.4, 0.3);
        let series: Vec<f64> = base.iter().chain(&base).copied().collect();
        let cfg = EmbeddingConfig { delay: 1, dim: 2, theiler: 10, scale: 1e-9, max_horizon: 5, min_neighbors: 1, ..Default::default() };
        let cloud = embed(&series, &cfg).unwrap();
        let err = stretching(&cloud, &series, &cfg, Execution::Sequential);
        assert!(matches!(err, Err(Error::EstimationFailure(_))), "{err:?}");
    }

    #[test]
    fn line_fits() {
        let flat = StretchingCurve { horizons: (0..10).collect(), s_values: vec![1.5; 10], valid_refs: 1 };
        let e = fit_lambda(&flat, (0, 9), 1.0).unwrap();
        assert_eq!(e.lambda_per_sample, 0.0);
        assert_eq!(e.fit_residual, 0.0);
        assert!(e.flat);

        let line = StretchingCurve {
            horizons: (0..20).collect(),
            s_values: (0..20).map(|n| 0.1 * n as f64 + 2.0).collect(),
            valid_refs: 1,
        };
        let e = fit_lambda(&line, (2, 15), 0.5).unwrap();
        assert!((e.lambda_per_sample - 0.1).abs() < 1e-12);
        assert_eq!(e.lambda_per_unit_time, e.lambda_per_sample / 0.5);
        assert!(e.fit_residual < 1e-12);
        assert!(fit_lambda(&line, (3, 4), 1.0).is_err());
        assert!(fit_lambda(&line, (0, 20), 1.0).is_err());
    }

    #[test]
    fn auto_range_finds_linear_region() {
        // floor, linear rise, saturation
        let s: Vec<f64> = (0..100)
            .map(|n| match n {
                0..=9 => -5.0,
                10..=59 => -5.0 + 0.1 * (n - 9) as f64,
                _ => 0.0,
            })
            .collect();
        let curve = StretchingCurve { horizons: (0..100).collect(), s_values: s, valid_refs: 1 };
        let (a, b) = auto_fit_range(&curve, 8);
        assert!(a >= 10 && b <= 59 && b - a >= 30, "({a}, {b})");
        let e = fit_lambda(&curve, (a, b), 1.0).unwrap();
        assert!((e.lambda_per_sample - 0.1).abs() < 1e-9);
    }

    #[test]
    fn pure_sine_has_zero_exponent() {
        let series: Vec<f64> = (0..20_000).map(|i| (std::f64::consts::TAU * i as f64 / 64.0).sin()).collect();
        let cfg = EmbeddingConfig::default();
        let a = lambda_of_series(&series, 1.0, &cfg, FitRange::Auto, 8, Execution::Parallel).unwrap();
        assert!(a.estimate.lambda_per_sample.abs() <= 0.002, "{:?}", a.estimate);
    }

    #[test]
    fn kantz_recovers_map_exponents() {
        let cfg = EmbeddingConfig { delay: 1, dim: 2, max_horizon: 40, ..Default::default() };
        let h = lambda_of_series(&henon_series(10_000, 1.4, 0.3), 1.0, &cfg, FitRange::Auto, 5, Execution::Parallel).unwrap();
        assert!((h.estimate.lambda_per_sample - 0.419).abs() < 0.05, "{:?}", h.estimate);

        let cfg = EmbeddingConfig { dim: 1, ..cfg };
        let l = lambda_of_series(&logistic_series(10_000, 4.0), 1.0, &cfg, FitRange::Auto, 5, Execution::Parallel).unwrap();
        assert!((l.estimate.lambda_per_sample - std::f64::consts::LN_2).abs() < 0.07, "{:?}", l.estimate);
    }

    #[test]
    fn tangent_oracles() {
        let h = henon_tangent_exponent(100_000, 1.4, 0.3);
        assert!((h - 0.419).abs() < 0.005, "{h}");
        let l = logistic_tangent_exponent(100_000, 4.0);
        assert!((l - std::f64::consts::LN_2).abs() < 0.01, "{l}");
    }

    #[test]
    fn theiler_window_is_respected() {
        let series = henon_series(3000, 1.4, 0.3);
        let cfg = EmbeddingConfig { delay: 1, dim: 2, theiler: 25, scale: 0.02, max_horizon: 10, ..Default::default() };
        let cloud = embed(&series, &cfg).unwrap();
        let sets = neighbor_sets(&cloud, &series, &cfg);
        let pairs: usize = sets.iter().map(|s| s.neighbors.len()).sum();
        assert!(pairs > 0);
        assert!(sets.iter().all(|s| s.neighbors.iter().all(|&j| j.abs_diff(s.reference) > 25)));
    }

    #[test]
    fn sequential_and_parallel_agree_bitwise() {
        let series = henon_series(5000, 1.4, 0.3);
        let cfg = EmbeddingConfig { delay: 1, dim: 2, theiler: 5, max_horizon: 20, ..Default::default() };
        let cloud = embed(&series, &cfg).unwrap();
        let a = stretching(&cloud, &series, &cfg, Execution::Sequential).unwrap();
        let b = stretching(&cloud, &series, &cfg, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn affine_invariance(a in 0.2f64..5.0, b in -3.0f64..3.0) {
            let series = henon_series(4000, 1.4, 0.3);
            let cfg = EmbeddingConfig { delay: 1, dim: 2, theiler: 5, max_horizon: 15, ..Default::default() };
            let mapped: Vec<f64> = series.iter().map(|x| a * x + b).collect();
            let r1 = lambda_of_series(&series, 1.0, &cfg, FitRange::Manual(1, 8), 8, Execution::Sequential).unwrap();
            let r2 = lambda_of_series(&mapped, 1.0, &cfg, FitRange::Manual(1, 8), 8, Execution::Sequential).unwrap();
            prop_assert!((r1.estimate.lambda_per_sample - r2.estimate.lambda_per_sample).abs() < 1e-9);
            prop_assert!(r1.curve.valid_refs.abs_diff(r2.curve.valid_refs) <= r1.curve.valid_refs / 100 + 2);
        }
    }
}
