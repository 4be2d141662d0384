//! Quantum state diffusion for the driven, damped SQUID.
//!
//! The Itô equation integrated here is
//!
//! ```text
//! |dψ⟩ = −i H |ψ⟩ dt + (⟨L†⟩L − ½L†L − ½⟨L†⟩⟨L⟩)|ψ⟩ dt + (L − ⟨L⟩)|ψ⟩ dξ
//! ```
//!
//! with `H = H_D(t) + H_R`, `H_R = D/2 (ΦQ + QΦ)` and `L = √D (Φ + iQ)`.
//! When the state carries a moving frame β, every operator is taken in the
//! displaced picture (`a → a + β`); the frame only moves on explicit
//! re-centering, so between those events the equation is unchanged.

use std::f64::consts::SQRT_2;
use std::io::{BufRead, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::circuit::DimensionlessModel;
use crate::error::{Error, Result};
use crate::fock::{coherent, phi_spectrum, StateVector};
use crate::noise::NoiseStream;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Relative magnitude below which entries of cos(κΦ), sin(κΦ) are dropped.
const BAND_CUTOFF: f64 = 1e-17;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Drift and diffusion both evaluated at the start of the step.
    EulerMaruyama,
    /// Drift at the midpoint (explicit midpoint rule), diffusion at the start.
    HeunDrift,
    /// Classical fourth-order Runge–Kutta drift, diffusion at the start.
    #[default]
    Rk4Drift,
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler-maruyama" => Ok(Scheme::EulerMaruyama),
            "heun-drift" => Ok(Scheme::HeunDrift),
            "rk4-drift" => Ok(Scheme::Rk4Drift),
            _ => Err(Error::Config(format!("unknown scheme `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub scheme: Scheme,
    /// Truncation N.
    pub dim: usize,
    pub moving_frame: bool,
    pub renormalize_every: u32,
    /// Steps between recorded samples.
    pub sample_stride: u32,
    pub leakage_limit: f64,
    /// Re-center the moving frame once `|⟨a⟩_χ|²` exceeds this many quanta.
    pub recenter_quanta: f64,
    /// Each step's increment is the sum of this many finer increments.
    pub noise_substeps: u32,
}

impl IntegratorConfig {
    /// Defaults for `model`: 2048 steps and 64 samples per drive period,
    /// moving frame with N = 64.
    pub fn for_model(model: &DimensionlessModel) -> Self {
        Self::with_resolution(model, 2048, 64)
    }

    pub fn with_resolution(
        model: &DimensionlessModel,
        steps_per_period: u32,
        samples_per_period: u32,
    ) -> Self {
        Self {
            dt: model.period() / steps_per_period as f64,
            scheme: Scheme::default(),
            dim: 64,
            moving_frame: true,
            renormalize_every: 1,
            sample_stride: (steps_per_period / samples_per_period).max(1),
            leakage_limit: 1e-4,
            recenter_quanta: 1.0,
            noise_substeps: 1,
        }
    }

    pub fn sample_spacing(&self) -> f64 {
        self.dt * self.sample_stride as f64
    }

    pub fn validate(&self, model: &DimensionlessModel) -> Result<()> {
        let bad = |field: &'static str, reason: &str| {
            Err(Error::InvalidParameter { field, reason: reason.to_string() })
        };
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad("dt", "must be positive");
        }
        if self.dim < 2 {
            return bad("dim", "basis needs N >= 2");
        }
        if self.renormalize_every == 0 || self.sample_stride == 0 || self.noise_substeps == 0 {
            return bad("sample_stride", "step counts must be >= 1");
        }
        if !(self.leakage_limit > 0.0) {
            return bad("leakage_limit", "must be positive");
        }
        let ratio = model.period() / self.sample_spacing();
        if (ratio - ratio.round()).abs() > 1e-9 * ratio || ratio.round() < 1.0 {
            return bad("sample_stride", "sample spacing must divide the drive period");
        }
        Ok(())
    }
}

/// Real symmetric matrix stored row by row over the band of non-negligible
/// entries.
#[derive(Clone, Debug)]
struct BandRows {
    starts: Vec<usize>,
    cos: Vec<Vec<f64>>,
    sin: Vec<Vec<f64>>,
}

impl BandRows {
    fn new(dim: usize, kappa: f64) -> Self {
        let spec = phi_spectrum(dim);
        let c = spec.apply_fn(|x| (kappa * x).cos());
        let s = spec.apply_fn(|x| (kappa * x).sin());
        let scale = c.amax().max(s.amax()).max(f64::MIN_POSITIVE);
        let mut starts = Vec::with_capacity(dim);
        let mut cos = Vec::with_capacity(dim);
        let mut sin = Vec::with_capacity(dim);
        for i in 0..dim {
            let keep = |j: usize| c[(i, j)].abs().max(s[(i, j)].abs()) > BAND_CUTOFF * scale;
            let lo = (0..dim).find(|&j| keep(j)).unwrap_or(i);
            let hi = (0..dim).rev().find(|&j| keep(j)).unwrap_or(i);
            starts.push(lo);
            cos.push((lo..=hi).map(|j| c[(i, j)]).collect());
            sin.push((lo..=hi).map(|j| s[(i, j)]).collect());
        }
        Self { starts, cos, sin }
    }

    /// `out += (wc·cos(κΦ) − ws·sin(κΦ)) v`
    #[inline]
    fn apply_add(&self, wc: f64, ws: f64, v: &[Complex64], out: &mut [Complex64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let lo = self.starts[i];
            let (c, s) = (&self.cos[i], &self.sin[i]);
            let (mut re, mut im) = (0.0, 0.0);
            for k in 0..c.len() {
                let w = wc * c[k] - ws * s[k];
                let x = v[lo + k];
                re += w * x.re;
                im += w * x.im;
            }
            o.re += re;
            o.im += im;
        }
    }
}

/// Scratch buffers for one trajectory.
#[derive(Clone, Debug)]
pub struct Workspace {
    a_psi: Vec<Complex64>,
    l_psi: Vec<Complex64>,
    h_psi: Vec<Complex64>,
    diffusion: Vec<Complex64>,
    k: [Vec<Complex64>; 4],
    tmp: Vec<Complex64>,
}

impl Workspace {
    pub fn new(dim: usize) -> Self {
        let z = || vec![ZERO; dim];
        Self { a_psi: z(), l_psi: z(), h_psi: z(), diffusion: z(), k: [z(), z(), z(), z()], tmp: z() }
    }
}

/// The SQUID QSD system at fixed coupling and truncation. Immutable; share
/// freely across trajectories.
#[derive(Clone, Debug)]
pub struct QsdSystem {
    pub model: DimensionlessModel,
    pub coupling: f64,
    pub dim: usize,
    sqrt: Vec<f64>,
    sqrt2: Vec<f64>,
    trig: BandRows,
}

impl QsdSystem {
    pub fn new(model: DimensionlessModel, coupling: f64, dim: usize) -> Result<Self> {
        if !(coupling.is_finite() && coupling >= 0.0) {
            return Err(Error::InvalidParameter {
                field: "D",
                reason: format!("coupling must be finite and non-negative, got {coupling}"),
            });
        }
        if dim < 2 {
            return Err(Error::InvalidParameter { field: "dim", reason: "N >= 2".into() });
        }
        Ok(Self {
            model,
            coupling,
            dim,
            sqrt: (0..=dim).map(|k| (k as f64).sqrt()).collect(),
            // √(k(k−1)) for a†² and a²
            sqrt2: (0..=dim + 1).map(|k| ((k * k.saturating_sub(1)) as f64).sqrt()).collect(),
            trig: BandRows::new(dim, model.kappa),
        })
    }

    /// `H ψ` in the frame β at time t, up to a c-number shift.
    pub fn apply_hamiltonian(&self, psi: &[Complex64], frame: Complex64, t: f64, out: &mut [Complex64]) {
        let n = self.dim;
        let d = self.coupling;
        let phic = SQRT_2 * frame.re;
        let qc = SQRT_2 * frame.im;
        let drive = self.model.drive(t);
        let c_phi = phic - drive + d * qc;
        let c_q = qc + d * phic;
        // Φ = (a + a†)/√2, Q = −i(a − a†)/√2
        let lower = Complex64::new(c_phi, -c_q) / SQRT_2; // coefficient of a
        let raise = Complex64::new(c_phi, c_q) / SQRT_2; // coefficient of a†
        let sq = Complex64::new(0.0, -0.5 * d); // −iD/2 (a² − a†²)
        for k in 0..n {
            let mut v = psi[k] * k as f64;
            if k + 1 < n {
                v += lower * (self.sqrt[k + 1] * psi[k + 1]);
            }
            if k >= 1 {
                v += raise * (self.sqrt[k] * psi[k - 1]);
            }
            if k + 2 < n {
                v += sq * (self.sqrt2[k + 2] * psi[k + 2]);
            }
            if k >= 2 {
                v -= sq * (self.sqrt2[k] * psi[k - 2]);
            }
            out[k] = v;
        }
        let b = self.model.beta_c;
        if b != 0.0 {
            let arg = self.model.kappa * phic;
            self.trig.apply_add(b * arg.cos(), b * arg.sin(), psi, out);
        }
    }

    /// Deterministic part of the QSD increment (per unit time).
    /// Also fills `ws.l_psi` with `Lψ` and returns `⟨L⟩`.
    fn drift(&self, psi: &[Complex64], frame: Complex64, t: f64, out: &mut [Complex64], ws: &mut Workspace) -> Complex64 {
        let n = self.dim;
        let s = (2.0 * self.coupling).sqrt();
        let mut n2 = 0.0;
        let mut ell = ZERO;
        for k in 0..n {
            let a = if k + 1 < n { psi[k + 1] * self.sqrt[k + 1] } else { ZERO };
            ws.a_psi[k] = a;
            ell += psi[k].conj() * a;
            n2 += psi[k].norm_sqr();
        }
        ell /= n2;
        let mean_l = (ell + frame) * s;
        for k in 0..n {
            ws.l_psi[k] = (ws.a_psi[k] + frame * psi[k]) * s;
        }
        self.apply_hamiltonian(psi, frame, t, &mut ws.h_psi);
        // Gauge: H → H − ⟨H⟩ removes the c-number phase rotation, which
        // otherwise dephases the drift against the start-of-step noise term.
        // M(|ψ⟩⟨ψ|) is unaffected.
        let mean_h = psi.iter().zip(&ws.h_psi).map(|(p, h)| (p.conj() * h).re).sum::<f64>() / n2;
        let half_l2 = 0.5 * mean_l.norm_sqr();
        let mean_l_conj = mean_l.conj();
        let fconj = frame.conj();
        for k in 0..n {
            // L†(Lψ) = s (a† + β*) Lψ
            let adag = if k >= 1 { ws.l_psi[k - 1] * self.sqrt[k] } else { ZERO };
            let ldl = (adag + fconj * ws.l_psi[k]) * s;
            out[k] = -I * (ws.h_psi[k] - mean_h * psi[k]) + mean_l_conj * ws.l_psi[k] - 0.5 * ldl - half_l2 * psi[k];
        }
        mean_l
    }

    /// Advance `state` by one step of length `dt` with increment `dxi`.
    /// Does not renormalize or re-center.
    pub fn advance(&self, state: &mut StateVector, t: f64, dt: f64, dxi: Complex64, scheme: Scheme, ws: &mut Workspace) {
        let n = self.dim;
        let frame = state.frame;
        let psi = &mut state.amps;
        let [k1, k2, k3, k4] = &mut ws.k;
        let mut k1v = std::mem::take(k1);
        let mut k2v = std::mem::take(k2);
        let mut k3v = std::mem::take(k3);
        let mut k4v = std::mem::take(k4);
        let mut tmp = std::mem::take(&mut ws.tmp);

        let mean_l = self.drift(psi, frame, t, &mut k1v, ws);
        for k in 0..n {
            ws.diffusion[k] = ws.l_psi[k] - mean_l * psi[k];
        }
        match scheme {
            Scheme::EulerMaruyama => {
                for k in 0..n {
                    psi[k] += k1v[k] * dt + ws.diffusion[k] * dxi;
                }
            }
            Scheme::HeunDrift => {
                for k in 0..n {
                    tmp[k] = psi[k] + k1v[k] * (0.5 * dt);
                }
                self.drift(&tmp, frame, t + 0.5 * dt, &mut k2v, ws);
                for k in 0..n {
                    psi[k] += k2v[k] * dt + ws.diffusion[k] * dxi;
                }
            }
            Scheme::Rk4Drift => {
                for k in 0..n {
                    tmp[k] = psi[k] + k1v[k] * (0.5 * dt);
                }
                self.drift(&tmp, frame, t + 0.5 * dt, &mut k2v, ws);
                for k in 0..n {
                    tmp[k] = psi[k] + k2v[k] * (0.5 * dt);
                }
                self.drift(&tmp, frame, t + 0.5 * dt, &mut k3v, ws);
                for k in 0..n {
                    tmp[k] = psi[k] + k3v[k] * dt;
                }
                self.drift(&tmp, frame, t + dt, &mut k4v, ws);
                let w = dt / 6.0;
                for k in 0..n {
                    psi[k] += (k1v[k] + 2.0 * (k2v[k] + k3v[k]) + k4v[k]) * w + ws.diffusion[k] * dxi;
                }
            }
        }
        ws.k = [k1v, k2v, k3v, k4v];
        ws.tmp = tmp;
    }
}

/// One QSD step from a fresh system: Euler–Maruyama followed by
/// renormalization.
pub fn step(
    state: &StateVector,
    model: &DimensionlessModel,
    coupling: f64,
    t: f64,
    dt: f64,
    dxi: Complex64,
) -> Result<StateVector> {
    let sys = QsdSystem::new(*model, coupling, state.dim())?;
    let mut ws = Workspace::new(state.dim());
    let mut next = state.clone();
    sys.advance(&mut next, t, dt, dxi, Scheme::EulerMaruyama, &mut ws);
    next.normalize();
    Ok(next)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub mean_phi: Vec<f64>,
    pub mean_q: Vec<f64>,
    pub var_phi: Vec<f64>,
    pub var_q: Vec<f64>,
    pub leakage: Vec<f64>,
    pub norm_drift: Vec<f64>,
}

pub const TRAJECTORY_HEADER: &str = "t,mean_phi,mean_q,var_phi,var_q,leakage,norm_drift";

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn sample_spacing(&self) -> f64 {
        if self.times.len() < 2 {
            return 0.0;
        }
        (self.times[self.times.len() - 1] - self.times[0]) / (self.times.len() - 1) as f64
    }

    pub fn uncertainty(&self, i: usize) -> f64 {
        (self.var_phi[i] * self.var_q[i]).sqrt()
    }

    pub fn min_uncertainty(&self) -> f64 {
        (0..self.len()).map(|i| self.uncertainty(i)).fold(f64::INFINITY, f64::min)
    }

    pub fn max_leakage(&self) -> f64 {
        self.leakage.iter().copied().fold(0.0, f64::max)
    }

    fn push(&mut self, t: f64, s: &StateVector, norm_drift: f64) {
        let m = s.moments();
        self.times.push(t);
        self.mean_phi.push(m.mean_phi);
        self.mean_q.push(m.mean_q);
        self.var_phi.push(m.var_phi);
        self.var_q.push(m.var_q);
        self.leakage.push(s.leakage());
        self.norm_drift.push(norm_drift);
    }

    /// Drop the first `n` samples.
    pub fn skip(&self, n: usize) -> TrajectoryRecord {
        let n = n.min(self.len());
        TrajectoryRecord {
            times: self.times[n..].to_vec(),
            mean_phi: self.mean_phi[n..].to_vec(),
            mean_q: self.mean_q[n..].to_vec(),
            var_phi: self.var_phi[n..].to_vec(),
            var_q: self.var_q[n..].to_vec(),
            leakage: self.leakage[n..].to_vec(),
            norm_drift: self.norm_drift[n..].to_vec(),
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{TRAJECTORY_HEADER}")?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.times[i],
                self.mean_phi[i],
                self.mean_q[i],
                self.var_phi[i],
                self.var_q[i],
                self.leakage[i],
                self.norm_drift[i]
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != TRAJECTORY_HEADER {
            return Err(Error::Parse(format!("trajectory header mismatch: `{header}`")));
        }
        let mut rec = TrajectoryRecord::default();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))?;
            if vals.len() != 7 {
                return Err(Error::Parse(format!("line {}: expected 7 fields", lineno + 2)));
            }
            rec.times.push(vals[0]);
            rec.mean_phi.push(vals[1]);
            rec.mean_q.push(vals[2]);
            rec.var_phi.push(vals[3]);
            rec.var_q.push(vals[4]);
            rec.leakage.push(vals[5]);
            rec.norm_drift.push(vals[6]);
        }
        Ok(rec)
    }
}

/// Initial state for a run: an exact coherent state (vacuum in a frame at
/// α₀) when the frame moves, otherwise `coherent(α₀, N)` in the fixed basis.
pub fn initial_state(alpha0: Complex64, cfg: &IntegratorConfig) -> Result<StateVector> {
    let fixed = coherent(alpha0, cfg.dim)?;
    if cfg.moving_frame {
        Ok(StateVector::with_frame(StateVector::fock(0, cfg.dim).amps, alpha0))
    } else {
        Ok(fixed)
    }
}

/// Integrate `steps` steps starting from `state`, invoking `on_sample` at step
/// 0 and every `sample_stride` steps. Returns the final state.
pub fn integrate<F>(
    sys: &QsdSystem,
    mut state: StateVector,
    cfg: &IntegratorConfig,
    noise: &mut NoiseStream,
    steps: u64,
    mut on_sample: F,
) -> Result<StateVector>
where
    F: FnMut(u64, f64, &StateVector, f64) -> Result<()>,
{
    if state.dim() != sys.dim {
        return Err(Error::DimensionMismatch { expected: sys.dim, got: state.dim() });
    }
    let mut ws = Workspace::new(sys.dim);
    let mut norm_drift = (state.norm_sqr() - 1.0).abs();
    let stride = cfg.sample_stride as u64;
    for k in 0..=steps {
        let t = k as f64 * cfg.dt;
        if k % stride == 0 {
            if !state.amps.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
                return Err(Error::NumericalBlowup { step: k });
            }
            let tail = state.leakage();
            if tail > cfg.leakage_limit {
                return Err(Error::Truncation { time: t, tail, limit: cfg.leakage_limit });
            }
            on_sample(k, t, &state, norm_drift)?;
        }
        if k == steps {
            break;
        }
        let dxi = noise.increment_refined(cfg.dt, cfg.noise_substeps);
        sys.advance(&mut state, t, cfg.dt, dxi, cfg.scheme, &mut ws);
        if (k + 1) % cfg.renormalize_every as u64 == 0 {
            let n2 = state.normalize();
            if !n2.is_finite() || n2 == 0.0 {
                return Err(Error::NumericalBlowup { step: k + 1 });
            }
            norm_drift = (n2 - 1.0).abs();
        }
        if cfg.moving_frame && state.local_mean_a().norm_sqr() > cfg.recenter_quanta {
            state.recenter();
        }
    }
    Ok(state)
}

/// Integrate one trajectory over `[0, t_end]` and record its samples.
pub fn evolve(
    alpha0: Complex64,
    model: &DimensionlessModel,
    coupling: f64,
    t_end: f64,
    cfg: &IntegratorConfig,
    noise: &mut NoiseStream,
) -> Result<TrajectoryRecord> {
    let sys = QsdSystem::new(*model, coupling, cfg.dim)?;
    evolve_with(&sys, alpha0, t_end, cfg, noise).map(|(rec, _)| rec)
}

/// As [`evolve`], reusing a prebuilt system and also returning the final state.
pub fn evolve_with(
    sys: &QsdSystem,
    alpha0: Complex64,
    t_end: f64,
    cfg: &IntegratorConfig,
    noise: &mut NoiseStream,
) -> Result<(TrajectoryRecord, StateVector)> {
    cfg.validate(&sys.model)?;
    if !(t_end.is_finite() && t_end >= 0.0) {
        return Err(Error::InvalidParameter { field: "t_end", reason: "must be >= 0".into() });
    }
    let state = initial_state(alpha0, cfg)?;
    let steps = (t_end / cfg.dt).round() as u64;
    let mut rec = TrajectoryRecord::default();
    let last = integrate(sys, state, cfg, noise, steps, |_, t, s, drift| {
        rec.push(t, s, drift);
        Ok(())
    })?;
    Ok((rec, last))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{build_damping, build_hamiltonian, build_lindblad, OperatorMatrix};
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn dense_apply(op: &OperatorMatrix, v: &[Complex64]) -> Vec<Complex64> {
        (&op.entries * DVector::from_column_slice(v)).as_slice().to_vec()
    }

    fn test_state(n: usize) -> Vec<Complex64> {
        let mut s = coherent(c(0.6, -0.3), n).unwrap();
        s.amps[1] += c(0.1, 0.05);
        s.amps[3] -= c(0.02, 0.07);
        s.normalize();
        s.amps
    }

    #[test]
    fn banded_hamiltonian_matches_dense() {
        let n = 24;
        let m = DimensionlessModel::from_reduced(3.0, 0.7, 1.2, 1.1);
        let d = 0.3;
        let sys = QsdSystem::new(m, d, n).unwrap();
        let psi = test_state(n);
        let t = 0.83;
        let mut fast = vec![ZERO; n];
        sys.apply_hamiltonian(&psi, ZERO, t, &mut fast);
        let mut dense = build_hamiltonian(&m, t, n);
        dense.entries += build_damping(d, n).unwrap().entries;
        let want = dense_apply(&dense, &psi);
        // dense form carries the c-number ½ + Φ_ex²/2
        let shift = 0.5 + 0.5 * m.drive(t).powi(2);
        for k in 0..n {
            assert!((fast[k] + shift * psi[k] - want[k]).norm() < 1e-11, "k={k}");
        }
    }

    #[test]
    fn drift_matches_dense_formula() {
        let n = 20;
        let m = DimensionlessModel::from_reduced(1.0, 1.0, 0.5, 1.0);
        let d = 0.2;
        let sys = QsdSystem::new(m, d, n).unwrap();
        let psi = test_state(n);
        let mut ws = Workspace::new(n);
        let mut got = vec![ZERO; n];
        let t = 0.4;
        sys.drift(&psi, ZERO, t, &mut got, &mut ws);

        let mut h = build_hamiltonian(&m, t, n);
        h.entries += build_damping(d, n).unwrap().entries;
        let l = build_lindblad(d, n).unwrap();
        let hpsi = dense_apply(&h, &psi);
        let lpsi = dense_apply(&l, &psi);
        let ldl = dense_apply(&OperatorMatrix::new(l.entries.adjoint() * &l.entries, true), &psi);
        let mean_l: Complex64 = psi.iter().zip(&lpsi).map(|(a, b)| a.conj() * b).sum();
        let mean_h: f64 = psi.iter().zip(&hpsi).map(|(a, b)| (a.conj() * b).re).sum();
        for k in 0..n {
            let want = -I * (hpsi[k] - mean_h * psi[k]) + mean_l.conj() * lpsi[k]
                - 0.5 * ldl[k]
                - 0.5 * mean_l.norm_sqr() * psi[k];
            assert!((got[k] - want).norm() < 1e-11);
        }
    }

    #[test]
    fn deterministic_harmonic_step() {
        let m = DimensionlessModel::from_reduced(0.0, 1.0, 0.0, 1.0);
        let n = 30;
        let s0 = coherent(c(1.0, 0.0), n).unwrap();
        let dt = 1e-3;
        let sys = QsdSystem::new(m, 0.0, n).unwrap();
        let mut ws = Workspace::new(n);
        let mut s1 = s0.clone();
        sys.advance(&mut s1, 0.0, dt, ZERO, Scheme::EulerMaruyama, &mut ws);
        assert!((s1.norm_sqr() - 1.0).abs() < 10.0 * dt * dt);
        let a0 = s0.local_mean_a();
        let a1 = s1.local_mean_a();
        let rotated = a0 * Complex64::from_polar(1.0, -dt);
        assert!((a1 - rotated).norm() < 10.0 * dt * dt);
        // the public step renormalizes
        let s2 = step(&s0, &m, 0.0, 0.0, dt, ZERO).unwrap();
        assert_relative_eq!(s2.norm_sqr(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn drift_preserves_norm_to_second_order() {
        // Coherent states are eigenstates of L; the dissipative drift then
        // changes the norm only at O(dt²).
        let m = DimensionlessModel::from_reduced(0.0, 1.0, 0.0, 1.0);
        let n = 40;
        let s0 = coherent(c(0.8, 0.5), n).unwrap();
        let sys = QsdSystem::new(m, 0.4, n).unwrap();
        let mut ws = Workspace::new(n);
        let dev: Vec<f64> = [1e-2, 5e-3, 2.5e-3]
            .iter()
            .map(|&dt| {
                let mut s = s0.clone();
                sys.advance(&mut s, 0.0, dt, ZERO, Scheme::EulerMaruyama, &mut ws);
                (s.norm_sqr() - 1.0).abs()
            })
            .collect();
        assert!(dev[0] < 1e-3);
        for w in dev.windows(2) {
            let ratio = w[0] / w[1];
            assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
        }
    }

    #[test]
    fn step_is_affine_in_increment() {
        let m = DimensionlessModel::from_reduced(2.0, 0.5, 1.0, 1.0);
        let n = 24;
        let sys = QsdSystem::new(m, 0.3, n).unwrap();
        let mut ws = Workspace::new(n);
        let s0 = StateVector::new(test_state(n));
        let run = |dxi: Complex64, ws: &mut Workspace| {
            let mut s = s0.clone();
            sys.advance(&mut s, 0.1, 0.01, dxi, Scheme::EulerMaruyama, ws);
            s.amps
        };
        let (x1, x2) = (c(0.05, -0.02), c(-0.03, 0.04));
        let a = run(x1 + x2, &mut ws);
        let b = run(x1, &mut ws);
        let cc = run(x2, &mut ws);
        let z = run(ZERO, &mut ws);
        for k in 0..n {
            assert!((a[k] - b[k] - cc[k] + z[k]).norm() < 1e-14);
        }
    }

    #[test]
    fn free_rotation_over_ten_periods() {
        let m = DimensionlessModel::from_reduced(0.0, 1.0, 0.0, 1.0);
        let mut cfg = IntegratorConfig::for_model(&m);
        cfg.moving_frame = false;
        cfg.dim = 32;
        let mut noise = NoiseStream::new(1, 0);
        let rec = evolve(c(1.0, 0.0), &m, 0.0, 10.0 * m.period(), &cfg, &mut noise).unwrap();
        for (t, phi) in rec.times.iter().zip(&rec.mean_phi) {
            assert!((phi - SQRT_2 * t.cos()).abs() < 1e-6, "t={t}");
        }
    }

    #[test]
    fn moving_frame_tracks_fixed_basis() {
        // Same noise, same model: fixed N=96 basis vs moving frame N=32.
        let m = DimensionlessModel::from_reduced(4.0, 0.5, 3.0, 1.2);
        let d = 0.3;
        let mut cfg = IntegratorConfig::with_resolution(&m, 1024, 32);
        cfg.scheme = Scheme::Rk4Drift;
        let mut fixed = cfg;
        fixed.moving_frame = false;
        fixed.dim = 96;
        cfg.dim = 32;
        let t_end = 2.0 * m.period();
        let alpha = c(1.5, -1.0);
        let r1 = evolve(alpha, &m, d, t_end, &cfg, &mut NoiseStream::new(5, 1)).unwrap();
        let r2 = evolve(alpha, &m, d, t_end, &fixed, &mut NoiseStream::new(5, 1)).unwrap();
        for i in 0..r1.len() {
            assert!((r1.mean_phi[i] - r2.mean_phi[i]).abs() < 1e-6, "i={i}");
            assert!((r1.var_q[i] - r2.var_q[i]).abs() < 1e-6, "i={i}");
        }
    }

    #[test]
    fn truncation_is_reported() {
        let m = DimensionlessModel::from_reduced(0.0, 1.0, 6.0, 1.0);
        let mut cfg = IntegratorConfig::with_resolution(&m, 512, 32);
        cfg.moving_frame = false;
        cfg.dim = 12;
        let err = evolve(c(0.5, 0.0), &m, 0.1, 3.0 * m.period(), &cfg, &mut NoiseStream::new(1, 0));
        assert!(matches!(err, Err(Error::Truncation { .. })), "{err:?}");
    }

    #[test]
    fn rejects_incommensurate_sampling() {
        let m = DimensionlessModel::from_reduced(0.0, 1.0, 0.0, 1.0);
        let mut cfg = IntegratorConfig::for_model(&m);
        cfg.sample_stride = 33;
        assert!(cfg.validate(&m).is_err());
        cfg.sample_stride = 32;
        assert!(cfg.validate(&m).is_ok());
    }

    #[test]
    fn record_invariants_and_csv_roundtrip() {
        let m = DimensionlessModel::from_reduced(5.0, 0.4, 2.0, 1.14);
        let cfg = IntegratorConfig::with_resolution(&m, 512, 16);
        let rec = evolve(c(0.877, -0.566), &m, 0.3, 4.0 * m.period(), &cfg, &mut NoiseStream::new(3, 2)).unwrap();
        assert_eq!(rec.len(), 4 * 16 + 1);
        assert!(rec.min_uncertainty() >= 0.5 - 1e-6);
        let dtimes: Vec<f64> = rec.times.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(dtimes.iter().all(|d| (d - cfg.sample_spacing()).abs() < 1e-9));
        assert!(rec.norm_drift.iter().all(|d| *d <= 10.0 * cfg.dt));

        let mut buf = Vec::new();
        rec.write_csv(&mut buf).unwrap();
        let back = TrajectoryRecord::read_csv(&buf[..]).unwrap();
        assert_eq!(back, rec);

        let again = evolve(c(0.877, -0.566), &m, 0.3, 4.0 * m.period(), &cfg, &mut NoiseStream::new(3, 2)).unwrap();
        let mut buf2 = Vec::new();
        again.write_csv(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }
}
