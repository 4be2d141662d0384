//! Truncated Fock-basis states and operators.
//!
//! Quadratures follow `Φ = (a + a†)/√2`, `Q = (a − a†)/(i√2)`, so that
//! `[Φ, Q] = i` away from the truncation edge. A [`StateVector`] may carry a
//! moving frame β: the physical state is `D(β)|χ⟩` where `|χ⟩` is stored in
//! the Fock basis and `D` is the displacement operator.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::circuit::DimensionlessModel;
use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    /// Fock amplitudes `c_0..c_{N−1}` of the frame-local state `|χ⟩`.
    pub amps: Vec<Complex64>,
    /// Displacement β of the moving frame (zero for a fixed basis).
    pub frame: Complex64,
}

/// Frame-independent first and second moments of the quadratures.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moments {
    pub mean_phi: f64,
    pub mean_q: f64,
    pub var_phi: f64,
    pub var_q: f64,
}

impl Moments {
    /// Uncertainty product √(Var Φ · Var Q).
    pub fn uncertainty(&self) -> f64 {
        (self.var_phi * self.var_q).sqrt()
    }
}

impl StateVector {
    pub fn new(amps: Vec<Complex64>) -> Self {
        Self { amps, frame: ZERO }
    }

    pub fn with_frame(amps: Vec<Complex64>, frame: Complex64) -> Self {
        Self { amps, frame }
    }

    pub fn fock(n: usize, dim: usize) -> Self {
        let mut amps = vec![ZERO; dim];
        amps[n] = Complex64::new(1.0, 0.0);
        Self::new(amps)
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Rescale to unit norm; returns the squared norm before rescaling.
    pub fn normalize(&mut self) -> f64 {
        let n2 = self.norm_sqr();
        let s = 1.0 / n2.sqrt();
        self.amps.iter_mut().for_each(|c| *c *= s);
        n2
    }

    /// Probability carried by the top `k` basis states.
    pub fn tail_weight(&self, k: usize) -> f64 {
        let n = self.dim();
        let k = k.min(n);
        self.amps[n - k..].iter().map(|c| c.norm_sqr()).sum::<f64>() / self.norm_sqr()
    }

    /// Tail size used for leakage monitoring: `max(4, N/16)`.
    pub fn leakage_window(&self) -> usize {
        (self.dim() / 16).max(4)
    }

    pub fn leakage(&self) -> f64 {
        self.tail_weight(self.leakage_window())
    }

    /// `⟨a⟩` of the frame-local state.
    pub fn local_mean_a(&self) -> Complex64 {
        let mut acc = ZERO;
        for k in 1..self.dim() {
            acc += self.amps[k - 1].conj() * self.amps[k] * (k as f64).sqrt();
        }
        acc / self.norm_sqr()
    }

    /// `⟨a†a⟩` of the frame-local state.
    pub fn local_number(&self) -> f64 {
        let s: f64 = self.amps.iter().enumerate().map(|(k, c)| k as f64 * c.norm_sqr()).sum();
        s / self.norm_sqr()
    }

    /// Quadrature moments of the physical state `D(β)|χ⟩`.
    ///
    /// Computed with ladder algebra on the embedded state, so the results
    /// are the exact infinite-basis moments of the stored amplitudes.
    pub fn moments(&self) -> Moments {
        let n = self.dim();
        let mut a1 = ZERO;
        let mut a2 = ZERO;
        let mut num = 0.0;
        for k in 0..n {
            let ck = self.amps[k];
            num += k as f64 * ck.norm_sqr();
            if k >= 1 {
                a1 += self.amps[k - 1].conj() * ck * (k as f64).sqrt();
            }
            if k >= 2 {
                a2 += self.amps[k - 2].conj() * ck * ((k * (k - 1)) as f64).sqrt();
            }
        }
        let n2 = self.norm_sqr();
        a1 /= n2;
        a2 /= n2;
        num /= n2;
        // ⟨Φ²⟩ = (⟨a²⟩ + ⟨a†²⟩ + 2⟨a†a⟩ + 1)/2, ⟨Q²⟩ = (−⟨a²⟩ − ⟨a†²⟩ + 2⟨a†a⟩ + 1)/2
        let phi2 = a2.re + num + 0.5;
        let q2 = -a2.re + num + 0.5;
        let mean_phi_local = std::f64::consts::SQRT_2 * a1.re;
        let mean_q_local = std::f64::consts::SQRT_2 * a1.im;
        Moments {
            mean_phi: mean_phi_local + std::f64::consts::SQRT_2 * self.frame.re,
            mean_q: mean_q_local + std::f64::consts::SQRT_2 * self.frame.im,
            var_phi: (phi2 - mean_phi_local * mean_phi_local).max(0.0),
            var_q: (q2 - mean_q_local * mean_q_local).max(0.0),
        }
    }

    /// Move the frame onto the state's centroid: `β ← β + ⟨a⟩_χ`,
    /// `|χ⟩ ← D(−⟨a⟩_χ)|χ⟩` (global phase dropped).
    pub fn recenter(&mut self) {
        let shift = self.local_mean_a();
        apply_displacement(&mut self.amps, -shift);
        self.frame += shift;
    }

    /// Express the same physical state in a fixed (undisplaced) basis of
    /// dimension `dim`.
    pub fn to_fixed_basis(&self, dim: usize) -> StateVector {
        let mut amps = vec![ZERO; dim];
        let m = dim.min(self.dim());
        amps[..m].copy_from_slice(&self.amps[..m]);
        apply_displacement(&mut amps, self.frame);
        StateVector::new(amps)
    }

    /// Checkpoint record: dimension (u64), frame (re, im), then interleaved
    /// real/imaginary amplitudes; all little-endian.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.dim() as u64).to_le_bytes())?;
        w.write_all(&self.frame.re.to_le_bytes())?;
        w.write_all(&self.frame.im.to_le_bytes())?;
        for c in &self.amps {
            w.write_all(&c.re.to_le_bytes())?;
            w.write_all(&c.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut b8 = [0u8; 8];
        let mut f64_le = |r: &mut R| -> Result<f64> {
            r.read_exact(&mut b8)?;
            Ok(f64::from_le_bytes(b8))
        };
        let mut dim_bytes = [0u8; 8];
        r.read_exact(&mut dim_bytes)?;
        let dim = u64::from_le_bytes(dim_bytes) as usize;
        if dim == 0 || dim > 1 << 24 {
            return Err(Error::Parse(format!("implausible checkpoint dimension {dim}")));
        }
        let frame = Complex64::new(f64_le(&mut r)?, f64_le(&mut r)?);
        let mut amps = Vec::with_capacity(dim);
        for _ in 0..dim {
            let re = f64_le(&mut r)?;
            let im = f64_le(&mut r)?;
            amps.push(Complex64::new(re, im));
        }
        Ok(Self { amps, frame })
    }
}

/// Coherent state `|α⟩` renormalized over the truncated basis.
pub fn coherent(alpha: Complex64, dim: usize) -> Result<StateVector> {
    if dim < 2 {
        return Err(Error::InvalidParameter { field: "dim", reason: "basis needs N >= 2".into() });
    }
    let norm_sq = alpha.norm_sqr();
    if norm_sq > dim as f64 / 2.0 {
        return Err(Error::CoherentTooLarge { norm_sq, dim });
    }
    let mut amps = Vec::with_capacity(dim);
    let mut c = Complex64::new((-0.5 * norm_sq).exp(), 0.0);
    for n in 0..dim {
        if n > 0 {
            c *= alpha / (n as f64).sqrt();
        }
        amps.push(c);
    }
    let mut s = StateVector::new(amps);
    s.normalize();
    let tail = s.leakage();
    if tail > 1e-8 {
        log::warn!("coherent state |{alpha}> truncated at N = {dim}: tail weight {tail:.2e}");
    }
    Ok(s)
}

/// Apply `D(γ) = exp(γa† − γ*a)` in place, in the truncated basis.
///
/// The generator is split into pieces of modulus ≤ 1/4 and each piece is
/// exponentiated by a Taylor series run to machine precision.
pub fn apply_displacement(amps: &mut [Complex64], gamma: Complex64) {
    let n = amps.len();
    if gamma == ZERO || n == 0 {
        return;
    }
    let pieces = (gamma.norm() / 0.25).ceil().max(1.0) as usize;
    let g = gamma / pieces as f64;
    let sqrt: Vec<f64> = (0..=n).map(|k| (k as f64).sqrt()).collect();
    let mut term = vec![ZERO; n];
    let mut next = vec![ZERO; n];
    for _ in 0..pieces {
        term.copy_from_slice(amps);
        for order in 1..200 {
            // next = (g a† − g* a) term / order
            let inv = 1.0 / order as f64;
            let mut size = 0.0;
            for k in 0..n {
                let mut v = ZERO;
                if k >= 1 {
                    v += g * sqrt[k] * term[k - 1];
                }
                if k + 1 < n {
                    v -= g.conj() * sqrt[k + 1] * term[k + 1];
                }
                next[k] = v * inv;
                size += next[k].norm_sqr();
            }
            for k in 0..n {
                amps[k] += next[k];
            }
            std::mem::swap(&mut term, &mut next);
            if size < 1e-34 {
                break;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    pub entries: DMatrix<Complex64>,
    pub hermitian: bool,
}

impl OperatorMatrix {
    pub fn new(entries: DMatrix<Complex64>, hermitian: bool) -> Self {
        Self { entries, hermitian }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn zeros(dim: usize) -> Self {
        Self::new(DMatrix::zeros(dim, dim), true)
    }

    /// `max|A − A†|`, the Hermiticity defect.
    pub fn hermiticity_defect(&self) -> f64 {
        let a = &self.entries;
        let d = a - a.adjoint();
        d.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn apply(&self, s: &StateVector) -> Result<Vec<Complex64>> {
        if s.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: s.dim() });
        }
        let v = nalgebra::DVector::from_column_slice(&s.amps);
        Ok((&self.entries * v).as_slice().to_vec())
    }
}

/// Truncated annihilation operator.
pub fn annihilation(dim: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(dim, dim, |j, k| {
        if k == j + 1 {
            Complex64::new((k as f64).sqrt(), 0.0)
        } else {
            ZERO
        }
    })
}

pub fn build_phi(dim: usize) -> OperatorMatrix {
    let a = annihilation(dim);
    let phi = (&a + a.adjoint()) / Complex64::new(std::f64::consts::SQRT_2, 0.0);
    OperatorMatrix::new(phi, true)
}

pub fn build_q(dim: usize) -> OperatorMatrix {
    let a = annihilation(dim);
    let q = (&a - a.adjoint()) / Complex64::new(0.0, std::f64::consts::SQRT_2);
    OperatorMatrix::new(q, true)
}

/// Eigendecomposition of the (real symmetric) truncated Φ matrix.
#[derive(Debug)]
pub struct PhiSpectrum {
    pub eigenvalues: Vec<f64>,
    /// Columns are eigenvectors.
    pub eigenvectors: DMatrix<f64>,
}

impl PhiSpectrum {
    fn compute(dim: usize) -> Self {
        let phi = DMatrix::from_fn(dim, dim, |j, k| {
            if k == j + 1 {
                (k as f64 / 2.0).sqrt()
            } else if j == k + 1 {
                (j as f64 / 2.0).sqrt()
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(phi);
        Self { eigenvalues: eig.eigenvalues.as_slice().to_vec(), eigenvectors: eig.eigenvectors }
    }

    /// `f(Φ)` for a real scalar function, via the eigenbasis.
    pub fn apply_fn(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (k, &lam) in self.eigenvalues.iter().enumerate() {
            let fk = f(lam);
            scaled.column_mut(k).scale_mut(fk);
        }
        scaled * v.transpose()
    }
}

/// Cached Φ spectrum for basis size `dim`.
pub fn phi_spectrum(dim: usize) -> Arc<PhiSpectrum> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<PhiSpectrum>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(s) = cache.lock().unwrap().get(&dim) {
        return s.clone();
    }
    let s = Arc::new(PhiSpectrum::compute(dim));
    cache.lock().unwrap().entry(dim).or_insert(s).clone()
}

fn real_to_complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Dense driven Hamiltonian `H_D(t)` in the fixed Fock basis:
/// `a†a + 1/2 − Φ_ex(t)Φ + Φ_ex(t)²/2 + β_c cos(κΦ)`.
pub fn build_hamiltonian(m: &DimensionlessModel, t: f64, dim: usize) -> OperatorMatrix {
    let drive = m.drive(t);
    let spec = phi_spectrum(dim);
    let cos = spec.apply_fn(|x| (m.kappa * x).cos());
    let phi = build_phi(dim).entries;
    let mut h = real_to_complex(&cos) * Complex64::new(m.beta_c, 0.0);
    h -= phi * Complex64::new(drive, 0.0);
    for k in 0..dim {
        h[(k, k)] += Complex64::new(k as f64 + 0.5 + 0.5 * drive * drive, 0.0);
    }
    OperatorMatrix::new(h, true)
}

fn check_coupling(d: f64) -> Result<()> {
    if !(d.is_finite() && d >= 0.0) {
        return Err(Error::InvalidParameter {
            field: "D",
            reason: format!("coupling must be finite and non-negative, got {d}"),
        });
    }
    Ok(())
}

/// Damping Hamiltonian `H_R = D/2 (ΦQ + QΦ)`.
pub fn build_damping(d: f64, dim: usize) -> Result<OperatorMatrix> {
    check_coupling(d)?;
    let phi = build_phi(dim).entries;
    let q = build_q(dim).entries;
    let h = (&phi * &q + &q * &phi) * Complex64::new(d / 2.0, 0.0);
    Ok(OperatorMatrix::new(h, true))
}

/// Lindblad operator `L = √D (Φ + iQ)`.
pub fn build_lindblad(d: f64, dim: usize) -> Result<OperatorMatrix> {
    check_coupling(d)?;
    let phi = build_phi(dim).entries;
    let q = build_q(dim).entries;
    Ok(OperatorMatrix::new((phi + q * I) * Complex64::new(d.sqrt(), 0.0), false))
}

/// `⟨χ|A|χ⟩ / ⟨χ|χ⟩` on the stored (frame-local) amplitudes.
pub fn expectation(s: &StateVector, a: &OperatorMatrix) -> Result<Complex64> {
    let av = a.apply(s)?;
    let num: Complex64 = s.amps.iter().zip(&av).map(|(c, v)| c.conj() * v).sum();
    Ok(num / s.norm_sqr())
}

/// `⟨A²⟩ − ⟨A⟩²` for Hermitian `A`, clamped at zero.
pub fn variance(s: &StateVector, a: &OperatorMatrix) -> Result<f64> {
    let av = a.apply(s)?;
    let n2 = s.norm_sqr();
    let mean: Complex64 = s.amps.iter().zip(&av).map(|(c, v)| c.conj() * v).sum::<Complex64>() / n2;
    let sq: f64 = av.iter().map(|v| v.norm_sqr()).sum::<f64>() / n2;
    Ok((sq - mean.re * mean.re).max(0.0))
}
