//! Parameter-set × coupling sweep: one trajectory per cell, reduced to
//! λ_m, Δ_a and the composite λ_m/D, plus the statistics run on the table.
//!
//! Every cell is written to `cells/` as soon as it finishes; a rerun skips
//! cells whose file carries the current config hash. The assembled
//! `sweep.csv` is sorted, so it does not depend on completion order.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use crate::config::{Config, LambdaUnit, ParameterSet};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::lyapunov::{lambda_of_series, LyapunovAnalysis};
use crate::noise::NoiseStream;
use crate::observables::{cluster_count, poincare, uncertainty_series, PoincareSection, UncertaintySeries};
use crate::qsd::{evolve, TrajectoryRecord};

pub const SWEEP_HEADER: &str = "label,D,seed,lambda_m,delta_a,composite,fit_residual,leakage_max,cluster_count,status";

/// Identifies one cell of the sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct CellSpec {
    pub set: ParameterSet,
    pub d_index: usize,
    pub coupling: f64,
    pub replicate: u64,
}

impl CellSpec {
    /// Per-cell seed: the master seed offset by the replicate index.
    pub fn seed(&self, master_seed: u64) -> u64 {
        master_seed.wrapping_add(self.replicate)
    }

    /// The noise stream depends on the coupling index and replicate only,
    /// so all parameter sets see the same increments at equal D.
    pub fn noise(&self, master_seed: u64) -> NoiseStream {
        NoiseStream::new(self.seed(master_seed), self.d_index as u64)
    }

    pub fn file_stem(&self) -> String {
        format!("{}_d{:02}_r{}", self.set.label, self.d_index, self.replicate)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepCell {
    pub label: String,
    pub coupling: f64,
    pub seed: u64,
    pub lambda_m: f64,
    pub delta_a: f64,
    pub composite: f64,
    pub fit_residual: f64,
    pub leakage_max: f64,
    pub cluster_count: usize,
    pub status: String,
}

impl SweepCell {
    fn failed(spec: &CellSpec, seed: u64, err: &Error) -> Self {
        Self {
            label: spec.set.label.clone(),
            coupling: spec.coupling,
            seed,
            lambda_m: f64::NAN,
            delta_a: f64::NAN,
            composite: f64::NAN,
            fit_residual: f64::NAN,
            leakage_max: f64::NAN,
            cluster_count: 0,
            status: err.status_tag().to_string(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.label,
            self.coupling,
            self.seed,
            self.lambda_m,
            self.delta_a,
            self.composite,
            self.fit_residual,
            self.leakage_max,
            self.cluster_count,
            self.status
        )
    }

    pub fn from_csv_row(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 10 {
            return Err(Error::Parse(format!("sweep row needs 10 fields, got {}: `{line}`", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("`{s}`: {e}")));
        Ok(Self {
            label: f[0].to_string(),
            coupling: num(f[1])?,
            seed: f[2].parse().map_err(|e| Error::Parse(format!("seed `{}`: {e}", f[2])))?,
            lambda_m: num(f[3])?,
            delta_a: num(f[4])?,
            composite: num(f[5])?,
            fit_residual: num(f[6])?,
            leakage_max: num(f[7])?,
            cluster_count: f[8].parse().map_err(|e| Error::Parse(format!("cluster_count `{}`: {e}", f[8])))?,
            status: f[9].to_string(),
        })
    }
}

/// Everything computed for one cell; the row plus the intermediate objects.
#[derive(Clone, Debug)]
pub struct CellOutput {
    pub cell: SweepCell,
    pub trajectory: TrajectoryRecord,
    pub uncertainty: UncertaintySeries,
    pub section: PoincareSection,
    pub lyapunov: LyapunovAnalysis,
}

/// Simulate and analyse one cell. Errors are returned, not folded into the row.
pub fn compute_cell(cfg: &Config, spec: &CellSpec, exec: Execution) -> Result<CellOutput> {
    let model = spec.set.model()?;
    let icfg = cfg.integrator.build(&model)?;
    let emb = cfg.embedding.build()?;
    let sw = &cfg.sweep;
    let mut noise = spec.noise(sw.master_seed);
    let t_end = cfg.integrator.total_periods() as f64 * model.period();
    let trajectory = evolve(cfg.physical.alpha0(), &model, spec.coupling, t_end, &icfg, &mut noise)?;

    if let Some(i) = (0..trajectory.len()).find(|&i| trajectory.uncertainty(i) < 0.5 - 1e-6) {
        return Err(Error::UncertaintyFloor { time: trajectory.times[i], value: trajectory.uncertainty(i) });
    }
    let uncertainty = uncertainty_series(&trajectory, &model, sw.delta_skip_periods, sw.delta_window_periods)?;
    let section = poincare(&trajectory, &model, sw.poincare_phase, sw.poincare_points, sw.poincare_skip_periods)?;
    let clusters = cluster_count(&section, sw.linkage());

    let spp = cfg.integrator.samples_per_period as usize;
    let recorded = trajectory.skip(cfg.integrator.transient_periods * spp);
    let spacing = recorded.sample_spacing();
    let lyapunov = lambda_of_series(&recorded.mean_phi, spacing, &emb, cfg.embedding.fit(), cfg.embedding.min_fit_points, exec)?;
    let lambda_m = match cfg.embedding.lambda_unit {
        LambdaUnit::PerTime => lyapunov.estimate.lambda_per_unit_time,
        LambdaUnit::PerSample => lyapunov.estimate.lambda_per_sample,
    };
    let cell = SweepCell {
        label: spec.set.label.clone(),
        coupling: spec.coupling,
        seed: spec.seed(sw.master_seed),
        lambda_m,
        delta_a: uncertainty.delta_a,
        composite: lambda_m / spec.coupling,
        fit_residual: lyapunov.estimate.fit_residual,
        leakage_max: trajectory.max_leakage(),
        cluster_count: clusters,
        status: "ok".into(),
    };
    Ok(CellOutput { cell, trajectory, uncertainty, section, lyapunov })
}

/// The row for one cell, with failures recorded in `status`.
pub fn run_cell(cfg: &Config, spec: &CellSpec, exec: Execution) -> SweepCell {
    match compute_cell(cfg, spec, exec) {
        Ok(out) => out.cell,
        Err(e) => {
            log::warn!("cell {} failed: {e}", spec.file_stem());
            SweepCell::failed(spec, spec.seed(cfg.sweep.master_seed), &e)
        }
    }
}

/// All cells of the configured sweep in table order (label, D, replicate).
pub fn cell_specs(cfg: &Config) -> Result<Vec<CellSpec>> {
    let grid = cfg.sweep.d_grid()?;
    let mut out = Vec::new();
    for label in &cfg.sweep.labels {
        let set = ParameterSet::builtin(label)?;
        for (d_index, &coupling) in grid.iter().enumerate() {
            for replicate in 0..cfg.sweep.replicates {
                out.push(CellSpec { set: set.clone(), d_index, coupling, replicate });
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    pub config_hash: String,
    pub version: String,
    pub master_seed: u64,
}

impl Provenance {
    pub fn of(cfg: &Config) -> Self {
        Self {
            config_hash: cfg.hash(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed: cfg.sweep.master_seed,
        }
    }

    pub fn write_meta(&self, path: &Path, extra: &[(&str, String)]) -> Result<()> {
        let mut text = format!(
            "config_hash = {}\nversion = {}\nmaster_seed = {}\n",
            self.config_hash, self.version, self.master_seed
        );
        for (k, v) in extra {
            text.push_str(&format!("{k} = {v}\n"));
        }
        atomic_write(path, text.as_bytes())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepTable {
    pub cells: Vec<SweepCell>,
    pub d_grid: Vec<f64>,
    pub provenance: Provenance,
}

impl SweepTable {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{SWEEP_HEADER}")?;
        for c in &self.cells {
            writeln!(w, "{}", c.to_csv_row())?;
        }
        Ok(())
    }

    /// Rows of a sweep CSV.
    pub fn read_cells(text: &str) -> Result<Vec<SweepCell>> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == SWEEP_HEADER => {}
            other => return Err(Error::Parse(format!("expected sweep header, got {other:?}"))),
        }
        lines.filter(|l| !l.trim().is_empty()).map(SweepCell::from_csv_row).collect()
    }

    pub fn label_cells(&self, label: &str) -> Vec<&SweepCell> {
        self.cells.iter().filter(|c| c.label == label).collect()
    }
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn cell_path(out: &Path, spec: &CellSpec) -> PathBuf {
    out.join("cells").join(format!("{}.csv", spec.file_stem()))
}

/// A finished cell file: first line `# <config hash>`, second line the row.
fn read_cell_file(path: &Path, hash: &str) -> Option<SweepCell> {
    let text = fs::read_to_string(path).ok()?;
    let mut lines = text.lines();
    if lines.next()? != format!("# {hash}") {
        return None;
    }
    SweepCell::from_csv_row(lines.next()?).ok()
}

fn write_artifacts(out: &Path, spec: &CellSpec, res: &CellOutput) -> Result<()> {
    let dir = out.join("cells");
    let stem = spec.file_stem();
    let mut buf = Vec::new();
    res.section.write_csv(&mut buf)?;
    atomic_write(&dir.join(format!("{stem}.section.csv")), &buf)?;
    buf.clear();
    res.lyapunov.curve.write_csv(&mut buf)?;
    atomic_write(&dir.join(format!("{stem}.stretching.csv")), &buf)?;
    buf.clear();
    res.uncertainty.write_csv(&mut buf)?;
    atomic_write(&dir.join(format!("{stem}.delta.csv")), &buf)?;
    Ok(())
}

/// Run (or resume) the configured sweep under `out`, writing `sweep.csv`
/// and `sweep.csv.meta`.
pub fn run_sweep(cfg: &Config, out: &Path, exec: Execution) -> Result<SweepTable> {
    let specs = cell_specs(cfg)?;
    let prov = Provenance::of(cfg);
    fs::create_dir_all(out.join("cells"))?;

    let pending: Vec<&CellSpec> = specs
        .iter()
        .filter(|s| read_cell_file(&cell_path(out, s), &prov.config_hash).is_none())
        .collect();
    log::info!("{} of {} cells to compute", pending.len(), specs.len());

    // Cells run in parallel; each analysis runs sequentially inside its cell.
    let results = exec.map(&pending, |spec| -> Result<()> {
        let (cell, res) = match compute_cell(cfg, spec, Execution::Sequential) {
            Ok(res) => (res.cell.clone(), Some(res)),
            Err(e) => {
                log::warn!("cell {} failed: {e}", spec.file_stem());
                (SweepCell::failed(spec, spec.seed(cfg.sweep.master_seed), &e), None)
            }
        };
        if let (true, Some(res)) = (cfg.sweep.write_artifacts, &res) {
            write_artifacts(out, spec, res)?;
        }
        let text = format!("# {}\n{}\n", prov.config_hash, cell.to_csv_row());
        atomic_write(&cell_path(out, spec), text.as_bytes())?;
        log::info!("cell {} done: {}", spec.file_stem(), cell.status);
        Ok(())
    });
    results.into_iter().collect::<Result<Vec<()>>>()?;

    let cells = specs
        .iter()
        .map(|s| {
            read_cell_file(&cell_path(out, s), &prov.config_hash)
                .ok_or_else(|| Error::Config(format!("cell file for {} missing after run", s.file_stem())))
        })
        .collect::<Result<Vec<_>>>()?;
    let table = SweepTable { cells, d_grid: cfg.sweep.d_grid()?, provenance: prov };
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    atomic_write(&out.join("sweep.csv"), &buf)?;
    let grid = table.d_grid.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" ");
    table.provenance.write_meta(&out.join("sweep.csv.meta"), &[("d_grid", grid)])?;
    Ok(table)
}

/// Ranks with ties replaced by their average rank (1-based).
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Continuous two-segment fit `y = a + s₁·min(x−b, 0) + s₂·max(x−b, 0)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HingeFit {
    pub break_point: f64,
    pub slope_low: f64,
    pub slope_high: f64,
    pub rms: f64,
}

/// Best hinge over break points at interior data abscissae, each side keeping
/// at least three points.
pub fn hinge_fit(x: &[f64], y: &[f64]) -> Option<HingeFit> {
    let mut xs: Vec<f64> = x.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n < 6 {
        return None;
    }
    let mut best: Option<HingeFit> = None;
    for &b in &xs[2..n - 3] {
        let a = DMatrix::from_fn(n, 3, |i, j| match j {
            0 => 1.0,
            1 => (x[i] - b).min(0.0),
            _ => (x[i] - b).max(0.0),
        });
        let rhs = DVector::from_column_slice(y);
        let Ok(coef) = a.clone().svd(true, true).solve(&rhs, 1e-12) else { continue };
        let rms = ((&a * &coef - &rhs).norm_squared() / n as f64).sqrt();
        if best.is_none_or(|h| rms < h.rms) {
            best = Some(HingeFit { break_point: b, slope_low: coef[1], slope_high: coef[2], rms });
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonotonicityReport {
    pub label: String,
    pub cells: usize,
    /// Spearman rank correlation of Δ_a against λ_m/D.
    pub spearman: f64,
    /// Pairs ordered one way by λ_m/D and strictly the other way by Δ_a.
    pub inversions: usize,
    pub hinge: Option<HingeFit>,
}

/// Monotonicity of Δ_a in λ_m/D over the successful cells of `label`.
pub fn monotonicity_report(cells: &[SweepCell], label: &str) -> Result<MonotonicityReport> {
    let ok: Vec<&SweepCell> = cells.iter().filter(|c| c.label == label && c.is_ok()).collect();
    if ok.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "label {label}: {} successful cells, need at least 10",
            ok.len()
        )));
    }
    let x: Vec<f64> = ok.iter().map(|c| c.composite).collect();
    let y: Vec<f64> = ok.iter().map(|c| c.delta_a).collect();
    let mut inversions = 0;
    for i in 0..x.len() {
        for j in 0..x.len() {
            if x[i] < x[j] && y[i] > y[j] {
                inversions += 1;
            }
        }
    }
    Ok(MonotonicityReport {
        label: label.to_string(),
        cells: ok.len(),
        spearman: spearman(&x, &y),
        inversions,
        hinge: hinge_fit(&x, &y),
    })
}

/// Deepest interior minimum of a curve sampled on increasing `d`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dip {
    pub location: f64,
    pub value: f64,
    /// `(mean of flanking maxima − value) / mean of flanking maxima`.
    pub depth: f64,
    pub left_max: f64,
    pub right_max: f64,
}

/// The interior point whose value lies below the maxima on both sides with the
/// largest relative depth; `None` when no point does (a monotone curve).
pub fn find_dip(d: &[f64], v: &[f64]) -> Option<Dip> {
    let n = v.len();
    let mut best: Option<Dip> = None;
    for i in 1..n.saturating_sub(1) {
        let left_max = v[..i].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let right_max = v[i + 1..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(left_max > v[i] && right_max > v[i]) {
            continue;
        }
        let flank = 0.5 * (left_max + right_max);
        let depth = (flank - v[i]) / flank.abs();
        if best.is_none_or(|b| depth > b.depth) {
            best = Some(Dip { location: d[i], value: v[i], depth, left_max, right_max });
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct DipReport {
    pub label: String,
    pub lambda_dip: Option<Dip>,
    pub delta_dip: Option<Dip>,
    /// Both curves dip, at couplings within `DIP_COINCIDENCE` of each other.
    pub coincident: bool,
}

/// Coupling distance within which two dips count as the same region.
pub const DIP_COINCIDENCE: f64 = 0.1;

pub fn dip_report(cells: &[SweepCell], label: &str) -> DipReport {
    let mut ok: Vec<&SweepCell> = cells.iter().filter(|c| c.label == label && c.is_ok()).collect();
    ok.sort_by(|a, b| a.coupling.total_cmp(&b.coupling));
    let d: Vec<f64> = ok.iter().map(|c| c.coupling).collect();
    let lam: Vec<f64> = ok.iter().map(|c| c.lambda_m).collect();
    let del: Vec<f64> = ok.iter().map(|c| c.delta_a).collect();
    let lambda_dip = find_dip(&d, &lam);
    let delta_dip = find_dip(&d, &del);
    let coincident = match (lambda_dip, delta_dip) {
        (Some(a), Some(b)) => (a.location - b.location).abs() <= DIP_COINCIDENCE,
        _ => false,
    };
    DipReport { label: label.to_string(), lambda_dip, delta_dip, coincident }
}

/// Labels present in a table, in first-appearance order.
pub fn labels_of(cells: &[SweepCell]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for c in cells {
        if !out.contains(&c.label) {
            out.push(c.label.clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cell(label: &str, d: f64, lambda: f64, delta: f64) -> SweepCell {
        SweepCell {
            label: label.into(),
            coupling: d,
            seed: 1,
            lambda_m: lambda,
            delta_a: delta,
            composite: lambda / d,
            fit_residual: 0.01,
            leakage_max: 1e-9,
            cluster_count: 3,
            status: "ok".into(),
        }
    }

    #[test]
    fn row_roundtrip() {
        let c = cell("2.6", 0.23 + 0.77 / 27.0, 0.123456789, 0.987654321);
        let back = SweepCell::from_csv_row(&c.to_csv_row()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_csv_row(), c.to_csv_row());
        assert!(SweepCell::from_csv_row("a,b").is_err());

        let spec = CellSpec { set: ParameterSet::builtin("1").unwrap(), d_index: 3, coupling: 0.3, replicate: 0 };
        let failed = SweepCell::failed(&spec, 7, &Error::Truncation { time: 1.0, tail: 1.0, limit: 0.5 });
        let back = SweepCell::from_csv_row(&failed.to_csv_row()).unwrap();
        assert_eq!(back.status, "truncation");
        assert!(back.lambda_m.is_nan());
    }

    #[test]
    fn composite_identity() {
        let c = cell("2.6", 0.37, 0.052, 0.8);
        assert!((c.composite * c.coupling - c.lambda_m).abs() < 1e-12);
    }

    #[test]
    fn ranks_with_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 2.0, 2.0]), vec![4.0, 1.0, 2.5, 2.5]);
    }

    #[test]
    fn spearman_extremes() {
        let x: Vec<f64> = (0..28).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        assert!((spearman(&x, &y) - 1.0).abs() < 1e-12);
        let yr: Vec<f64> = y.iter().rev().copied().collect();
        assert!((spearman(&x, &yr) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn shuffled_table_has_small_correlation() {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..28).map(|i| i as f64).collect();
        let mut rhos = Vec::new();
        for _ in 0..200 {
            let mut y = x.clone();
            y.shuffle(&mut rng);
            rhos.push(spearman(&x, &y).abs());
        }
        rhos.sort_by(f64::total_cmp);
        assert!(rhos[100] < 0.3, "median |rho| = {}", rhos[100]);
    }

    #[test]
    fn monotone_table_report() {
        let cells: Vec<SweepCell> = (0..28)
            .map(|k| {
                let d = 0.23 + k as f64 * 0.77 / 27.0;
                let lam = 0.5 / (1.0 + k as f64);
                cell("2.6", d, lam, 0.5 + (lam / d).sqrt())
            })
            .collect();
        let r = monotonicity_report(&cells, "2.6").unwrap();
        assert_eq!(r.spearman, 1.0);
        assert_eq!(r.inversions, 0);
        assert!(r.hinge.is_some());
        assert!(monotonicity_report(&cells[..9], "2.6").is_err());
        assert!(monotonicity_report(&cells, "1").is_err());
    }

    #[test]
    fn hinge_recovers_break() {
        let x: Vec<f64> = (0..30).map(|i| i as f64 / 10.0).collect();
        let y: Vec<f64> = x.iter().map(|&v| if v < 1.2 { 2.0 * v } else { 2.4 + 0.5 * (v - 1.2) }).collect();
        let h = hinge_fit(&x, &y).unwrap();
        assert!((h.break_point - 1.2).abs() < 1e-9, "{h:?}");
        assert!((h.slope_low - 2.0).abs() < 1e-9 && (h.slope_high - 0.5).abs() < 1e-9);
    }

    #[test]
    fn dips() {
        let d: Vec<f64> = (0..28).map(|k| 0.23 + k as f64 * 0.77 / 27.0).collect();
        let monotone: Vec<f64> = d.iter().map(|x| 1.0 - x).collect();
        assert!(find_dip(&d, &monotone).is_none());

        let grid: Vec<f64> = (0..21).map(|k| 0.25 + k as f64 * 0.01).collect();
        let v: Vec<f64> = grid.iter().map(|x| (x - 0.35).abs() + 0.1).collect();
        let dip = find_dip(&grid, &v).unwrap();
        assert!((dip.location - 0.35).abs() < 1e-12);
        assert!((dip.depth - (0.2 - 0.1) / 0.2).abs() < 1e-9);
    }

    #[test]
    fn dip_report_coincidence() {
        let cells: Vec<SweepCell> = (0..28)
            .map(|k| {
                let d = 0.23 + k as f64 * 0.77 / 27.0;
                let lam = (d - 0.35).abs() + 0.05;
                cell("2.6", d, lam, 0.5 + lam)
            })
            .collect();
        let r = dip_report(&cells, "2.6");
        assert!(r.coincident);
        assert!((r.lambda_dip.unwrap().location - 0.35).abs() < 0.03);
    }

    #[test]
    fn specs_share_noise_across_labels() {
        let cfg = Config::from_toml_str("[sweep]\nlabels = [\"1\", \"2.6\"]\nd_values = [0.3, 0.4]").unwrap();
        let specs = cell_specs(&cfg).unwrap();
        assert_eq!(specs.len(), 4);
        let mut a = specs[0].noise(5);
        let mut b = specs[2].noise(5);
        assert_eq!(specs[0].d_index, specs[2].d_index);
        assert_eq!(a.increment(0.1), b.increment(0.1));
        let mut c = specs[1].noise(5);
        assert_ne!(specs[0].noise(5).increment(0.1), c.increment(0.1));
    }

    proptest! {
        #[test]
        fn spearman_invariant_under_monotone_maps(v in prop::collection::vec(-10.0f64..10.0, 10..40)) {
            let x: Vec<f64> = (0..v.len()).map(|i| i as f64).collect();
            let mapped: Vec<f64> = v.iter().map(|y| y.exp()).collect();
            let r1 = spearman(&x, &v);
            let r2 = spearman(&x, &mapped);
            prop_assert!((r1 - r2).abs() < 1e-12);
            prop_assert!(r1.abs() <= 1.0 + 1e-12);
        }
    }
}
