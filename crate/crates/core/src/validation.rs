//! Oracle suites: checks of the simulator and estimator against results
//! obtained independently (closed-form solutions, the dense master equation,
//! tangent-map exponents).

use num_complex::Complex64;

use crate::circuit::DimensionlessModel;
use crate::config::Config;
use crate::error::Result;
use crate::exec::Execution;
use crate::fock::StateVector;
use crate::lindblad::{evolve_master, trace_distance, DensityMatrix};
use crate::lyapunov::{lambda_of_series, oracles, EmbeddingConfig, FitRange};
use crate::noise::NoiseStream;
use crate::qsd::{integrate, IntegratorConfig, QsdSystem, Scheme};
use crate::sweep::{compute_cell, CellSpec};

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Self { name: name.to_string(), pass, detail }
    }
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

/// Damped harmonic oscillator: ensemble mean of ⟨Φ⟩ against the closed-form
/// solution of `dx/dt = y, dy/dt = −x − 2D y` at integer times.
#[derive(Clone, Debug, PartialEq)]
pub struct DampedCheck {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
    pub exact: Vec<f64>,
}

impl DampedCheck {
    /// Largest |mean − exact| in units of the standard error.
    pub fn max_z(&self) -> f64 {
        self.mean
            .iter()
            .zip(&self.exact)
            .zip(&self.std_err)
            .map(|((m, e), s)| (m - e).abs() / s)
            .fold(0.0, f64::max)
    }
}

/// Exact ⟨Φ⟩(t) of the damped oscillator started from ⟨a⟩ = α.
pub fn damped_mean_phi(alpha: Complex64, d: f64, t: f64) -> f64 {
    let w = (1.0 - d * d).sqrt();
    let (x0, y0) = (alpha.re, alpha.im);
    let x = (-d * t).exp() * (x0 * (w * t).cos() + (y0 + d * x0) / w * (w * t).sin());
    std::f64::consts::SQRT_2 * x
}

/// `trajectories` QSD runs with β_c = 0, no drive, N = 32 in a fixed basis,
/// from the displaced Fock state D(α)|1⟩ (⟨a⟩ = α). A coherent start would
/// make every trajectory identical, leaving no spread to compare against.
pub fn damped_oscillator(
    coupling: f64,
    alpha: Complex64,
    trajectories: usize,
    checkpoints: usize,
    seed: u64,
    exec: Execution,
) -> Result<DampedCheck> {
    // unit drive period (amplitude zero) so checkpoints fall on samples
    let model = DimensionlessModel::from_reduced(0.0, 1.0, 0.0, std::f64::consts::TAU);
    let dim = 32;
    let cfg = IntegratorConfig {
        moving_frame: false,
        dim,
        ..IntegratorConfig::with_resolution(&model, 512, 1)
    };
    cfg.validate(&model)?;
    let sys = QsdSystem::new(model, coupling, dim)?;
    let mut start = StateVector::fock(1, dim);
    crate::fock::apply_displacement(&mut start.amps, alpha);
    start.normalize();
    let steps = checkpoints as u64 * 512;

    let runs = exec.map_range(trajectories, |k| -> Result<Vec<f64>> {
        let mut noise = NoiseStream::new(seed, k as u64);
        let mut out = Vec::with_capacity(checkpoints);
        integrate(&sys, start.clone(), &cfg, &mut noise, steps, |step, _, s, _| {
            if step > 0 {
                out.push(s.moments().mean_phi);
            }
            Ok(())
        })?;
        Ok(out)
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let n = trajectories as f64;
    let mut check = DampedCheck { times: Vec::new(), mean: Vec::new(), std_err: Vec::new(), exact: Vec::new() };
    for c in 0..checkpoints {
        let t = (c + 1) as f64;
        let mean = runs.iter().map(|r| r[c]).sum::<f64>() / n;
        let var = runs.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        check.times.push(t);
        check.mean.push(mean);
        check.std_err.push((var / n).sqrt());
        check.exact.push(damped_mean_phi(alpha, coupling, t));
    }
    Ok(check)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MasterCheck {
    pub trace_distance: f64,
    pub oracle: DensityMatrix,
    pub ensemble: DensityMatrix,
}

/// Mean of |ψ⟩⟨ψ| over `trajectories` QSD runs against the master-equation
/// solution at `t_end`, both in the same fixed basis of size `dim`.
#[allow(clippy::too_many_arguments)]
pub fn master_equation(
    model: &DimensionlessModel,
    coupling: f64,
    alpha: Complex64,
    dim: usize,
    t_end: f64,
    dt: f64,
    trajectories: usize,
    seed: u64,
    exec: Execution,
) -> Result<MasterCheck> {
    let start = crate::fock::coherent(alpha, dim)?;
    let steps = (t_end / dt).round() as u64;
    let cfg = IntegratorConfig {
        dt,
        scheme: Scheme::default(),
        dim,
        moving_frame: false,
        renormalize_every: 1,
        sample_stride: steps.max(1) as u32,
        // both sides share the truncation; only the unravelling is compared
        leakage_limit: f64::INFINITY,
        recenter_quanta: f64::INFINITY,
        noise_substeps: 1,
    };
    let sys = QsdSystem::new(*model, coupling, dim)?;
    let finals = exec.map_range(trajectories, |k| -> Result<StateVector> {
        let mut noise = NoiseStream::new(seed, k as u64);
        integrate(&sys, start.clone(), &cfg, &mut noise, steps, |_, _, _, _| Ok(()))
    });
    let mut rho = nalgebra::DMatrix::<Complex64>::zeros(dim, dim);
    for s in finals {
        rho += DensityMatrix::from_pure(&s?).rho;
    }
    rho /= Complex64::new(trajectories as f64, 0.0);
    let ensemble = DensityMatrix::new(rho);
    let oracle = evolve_master(&DensityMatrix::from_pure(&start), model, coupling, t_end, dt)?;
    Ok(MasterCheck { trace_distance: trace_distance(&ensemble, &oracle), oracle, ensemble })
}

/// Kantz estimates on the Hénon and logistic maps against their tangent-map
/// exponents, and on a pure sine against zero.
pub fn lyapunov_oracles(points: usize, exec: Execution) -> Result<Vec<Outcome>> {
    let mut out = Vec::new();
    let map_cfg = EmbeddingConfig { delay: 1, dim: 2, max_horizon: 40, ..EmbeddingConfig::default() };

    let reference = oracles::henon_tangent_exponent(1_000_000, 1.4, 0.3);
    let est = lambda_of_series(&oracles::henon_series(points, 1.4, 0.3), 1.0, &map_cfg, FitRange::Auto, 5, exec)?;
    let got = est.estimate.lambda_per_sample;
    out.push(Outcome::new(
        "lyapunov/henon",
        (got - reference).abs() <= 0.05 && (reference - 0.419).abs() <= 0.005,
        format!("kantz {got:.4} vs tangent map {reference:.4} (tolerance 0.05)"),
    ));

    let reference = oracles::logistic_tangent_exponent(1_000_000, 4.0);
    let cfg = EmbeddingConfig { dim: 1, ..map_cfg };
    let est = lambda_of_series(&oracles::logistic_series(points, 4.0), 1.0, &cfg, FitRange::Auto, 5, exec)?;
    let got = est.estimate.lambda_per_sample;
    out.push(Outcome::new(
        "lyapunov/logistic",
        (got - reference).abs() <= 0.07 && (reference - std::f64::consts::LN_2).abs() <= 0.005,
        format!("kantz {got:.4} vs tangent map {reference:.4} (tolerance 0.07)"),
    ));

    let sine: Vec<f64> = (0..32_768).map(|i| (std::f64::consts::TAU * i as f64 / 64.0).sin()).collect();
    let est = lambda_of_series(&sine, 1.0, &EmbeddingConfig::default(), FitRange::Auto, 8, exec)?;
    let got = est.estimate.lambda_per_sample;
    out.push(Outcome::new(
        "lyapunov/sine",
        got.abs() <= 0.002,
        format!("kantz {got:.2e} per sample (bound 0.002)"),
    ));
    Ok(out)
}

/// Parameters of the small-instance master-equation comparison.
pub fn small_instance() -> DimensionlessModel {
    DimensionlessModel::from_reduced(1.0, 1.0, 0.5, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HalvingCheck {
    pub coarse_delta_a: f64,
    pub fine_delta_a: f64,
    /// Smallest uncertainty product seen in either run.
    pub min_uncertainty: f64,
}

/// Δ_a of one cell at the configured step and at half that step, driven by
/// the same Brownian path.
pub fn step_halving(cfg: &Config, spec: &CellSpec, exec: Execution) -> Result<HalvingCheck> {
    let mut coarse = cfg.clone();
    coarse.integrator.noise_substeps = cfg.integrator.noise_substeps * 2;
    let mut fine = cfg.clone();
    fine.integrator.steps_per_period = cfg.integrator.steps_per_period * 2;
    let a = compute_cell(&coarse, spec, exec)?;
    let b = compute_cell(&fine, spec, exec)?;
    Ok(HalvingCheck {
        coarse_delta_a: a.cell.delta_a,
        fine_delta_a: b.cell.delta_a,
        min_uncertainty: a.trajectory.min_uncertainty().min(b.trajectory.min_uncertainty()),
    })
}

/// The suites run by the `validate` command.
pub fn run_all(seed: u64, exec: Execution) -> Result<Vec<Outcome>> {
    let alpha = Complex64::new(0.877, -0.566);
    let mut out = Vec::new();

    let damped = damped_oscillator(0.1, alpha, 500, 20, seed, exec)?;
    let z = damped.max_z();
    out.push(Outcome::new(
        "qsd/damped-oscillator",
        z <= 3.0,
        format!("max |mean - exact| = {z:.2} standard errors over {} checkpoints", damped.times.len()),
    ));

    let m = small_instance();
    let master = master_equation(&m, 0.2, alpha, 12, 5.0, 0.0025, 2000, seed, exec)?;
    out.push(Outcome::new(
        "qsd/master-equation",
        master.trace_distance <= 0.05,
        format!("trace distance {:.4} at t = 5 (bound 0.05)", master.trace_distance),
    ));

    out.extend(lyapunov_oracles(10_000, exec)?);
    Ok(out)
}
