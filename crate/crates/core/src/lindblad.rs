//! Dense master-equation integrator, used as a brute-force oracle for QSD
//! ensemble averages at small truncation.
//!
//! ```text
//! dρ/dt = −i[H_D(t) + H_R, ρ] + LρL† − ½{L†L, ρ}
//! ```

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::circuit::DimensionlessModel;
use crate::error::{Error, Result};
use crate::fock::{build_damping, build_hamiltonian, build_lindblad, build_phi, OperatorMatrix, StateVector};

/// Largest basis the oracle accepts.
pub const MAX_ORACLE_DIM: usize = 64;

const TRACE_TOL: f64 = 1e-8;
const HERMITIAN_TOL: f64 = 1e-10;
const POSITIVITY_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    pub rho: DMatrix<Complex64>,
}

impl DensityMatrix {
    pub fn new(rho: DMatrix<Complex64>) -> Self {
        Self { rho }
    }

    /// `|χ⟩⟨χ|/⟨χ|χ⟩` of the stored amplitudes (frame ignored).
    pub fn from_pure(s: &StateVector) -> Self {
        let v = nalgebra::DVector::from_column_slice(&s.amps);
        let rho = &v * v.adjoint() / Complex64::new(s.norm_sqr(), 0.0);
        Self { rho }
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn trace(&self) -> Complex64 {
        self.rho.trace()
    }

    pub fn purity(&self) -> f64 {
        (&self.rho * &self.rho).trace().re
    }

    pub fn hermiticity_defect(&self) -> f64 {
        (&self.rho - self.rho.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.rho + self.rho.adjoint()) * Complex64::new(0.5, 0.0);
        SymmetricEigen::new(herm).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `tr(ρA)`
    pub fn expect(&self, a: &OperatorMatrix) -> Complex64 {
        (&self.rho * &a.entries).trace()
    }

    /// Check trace, Hermiticity and positivity; `time` labels the failure.
    pub fn check(&self, time: f64) -> Result<()> {
        let tr = self.trace();
        if (tr - Complex64::new(1.0, 0.0)).norm() > TRACE_TOL {
            return Err(Error::OracleFailure { time, what: format!("trace {tr}") });
        }
        let h = self.hermiticity_defect();
        if h > HERMITIAN_TOL {
            return Err(Error::OracleFailure { time, what: format!("hermiticity defect {h:.3e}") });
        }
        let lo = self.min_eigenvalue();
        if lo < -POSITIVITY_TOL {
            return Err(Error::OracleFailure { time, what: format!("negative eigenvalue {lo:.3e}") });
        }
        Ok(())
    }
}

/// Trace distance `½ ‖ρ − σ‖₁`.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> f64 {
    let d = &a.rho - &b.rho;
    let herm = (&d + d.adjoint()) * Complex64::new(0.5, 0.0);
    0.5 * SymmetricEigen::new(herm).eigenvalues.iter().map(|x| x.abs()).sum::<f64>()
}

struct Generator {
    static_h: DMatrix<Complex64>,
    phi: DMatrix<Complex64>,
    l: DMatrix<Complex64>,
    l_dag: DMatrix<Complex64>,
    half_ldl: DMatrix<Complex64>,
    model: DimensionlessModel,
}

impl Generator {
    fn new(m: &DimensionlessModel, d: f64, dim: usize) -> Result<Self> {
        // H(t) = H_D(0) + Φ_ex(0)Φ − Φ_ex(t)Φ + H_R, c-numbers dropped
        let phi = build_phi(dim).entries;
        let undriven = DimensionlessModel { phi_ex0: 0.0, ..*m };
        let static_h = build_hamiltonian(&undriven, 0.0, dim).entries + build_damping(d, dim)?.entries;
        let l = build_lindblad(d, dim)?.entries;
        let l_dag = l.adjoint();
        let half_ldl = &l_dag * &l * Complex64::new(0.5, 0.0);
        Ok(Self { static_h, phi, l, l_dag, half_ldl, model: *m })
    }

    fn rate(&self, t: f64, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let h = &self.static_h - &self.phi * Complex64::new(self.model.drive(t), 0.0);
        let minus_i = Complex64::new(0.0, -1.0);
        let comm = (&h * rho - rho * &h) * minus_i;
        let jump = &self.l * rho * &self.l_dag;
        let anti = &self.half_ldl * rho + rho * &self.half_ldl;
        comm + jump - anti
    }
}

/// Integrate the master equation from `rho0` over `[0, t_end]` with fixed-step
/// RK4. Every step is checked against the density-matrix invariants.
pub fn evolve_master(
    rho0: &DensityMatrix,
    m: &DimensionlessModel,
    d: f64,
    t_end: f64,
    dt: f64,
) -> Result<DensityMatrix> {
    let dim = rho0.dim();
    if dim > MAX_ORACLE_DIM {
        return Err(Error::InvalidParameter {
            field: "dim",
            reason: format!("oracle capped at N = {MAX_ORACLE_DIM}, got {dim}"),
        });
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter { field: "dt", reason: "must be positive".into() });
    }
    rho0.check(0.0)?;
    let gen = Generator::new(m, d, dim)?;
    let steps = (t_end / dt).round() as u64;
    let mut rho = rho0.rho.clone();
    let half = Complex64::new(0.5 * dt, 0.0);
    let full = Complex64::new(dt, 0.0);
    let sixth = Complex64::new(dt / 6.0, 0.0);
    let two = Complex64::new(2.0, 0.0);
    for k in 0..steps {
        let t = k as f64 * dt;
        let k1 = gen.rate(t, &rho);
        let k2 = gen.rate(t + 0.5 * dt, &(&rho + &k1 * half));
        let k3 = gen.rate(t + 0.5 * dt, &(&rho + &k2 * half));
        let k4 = gen.rate(t + dt, &(&rho + &k3 * full));
        rho += (k1 + (k2 + k3) * two + k4) * sixth;
        DensityMatrix { rho: rho.clone() }.check(t + dt)?;
    }
    Ok(DensityMatrix { rho })
}
