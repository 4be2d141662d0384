//! Run configuration: a TOML file with `[physical]`, `[integrator]`,
//! `[embedding]` and `[sweep]` sections. Every key is optional and defaults
//! to the values below; unknown keys are rejected, all of them at once.
//!
//! ```toml
//! [physical]
//! alpha0_re = 0.877
//! alpha0_im = -0.566
//! alpha0_convention = "direct"   # or "halved"
//!
//! [integrator]
//! scheme = "rk4-drift"
//! steps_per_period = 2048
//! samples_per_period = 64
//! dim = 64
//!
//! [sweep]
//! labels = ["2.6"]
//! d_values = [0.25]
//! ```

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::circuit::{reduce, DimensionlessModel, PhysicalConstants, SquidParameters};
use crate::error::{Error, Result};
use crate::lyapunov::{Divergence, EmbeddingConfig, FitRange};
use crate::qsd::{IntegratorConfig, Scheme};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub physical: PhysicalSection,
    pub integrator: IntegratorSection,
    pub embedding: EmbeddingSection,
    pub sweep: SweepSection,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaConvention {
    /// α₀ = alpha0_re + i·alpha0_im.
    #[default]
    Direct,
    /// α₀ = (alpha0_re + i·alpha0_im) / 2.
    Halved,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysicalSection {
    pub alpha0_re: f64,
    pub alpha0_im: f64,
    pub alpha0_convention: AlphaConvention,
}

impl Default for PhysicalSection {
    fn default() -> Self {
        Self { alpha0_re: 0.877, alpha0_im: -0.566, alpha0_convention: AlphaConvention::Direct }
    }
}

impl PhysicalSection {
    pub fn alpha0(&self) -> Complex64 {
        let a = Complex64::new(self.alpha0_re, self.alpha0_im);
        match self.alpha0_convention {
            AlphaConvention::Direct => a,
            AlphaConvention::Halved => a / 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorSection {
    pub scheme: Scheme,
    pub steps_per_period: u32,
    pub samples_per_period: u32,
    pub dim: usize,
    pub moving_frame: bool,
    pub renormalize_every: u32,
    pub leakage_limit: f64,
    pub recenter_quanta: f64,
    pub noise_substeps: u32,
    pub transient_periods: usize,
    pub record_periods: usize,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        Self {
            scheme: Scheme::default(),
            steps_per_period: 2048,
            samples_per_period: 64,
            dim: 64,
            moving_frame: true,
            renormalize_every: 1,
            leakage_limit: 1e-4,
            recenter_quanta: 1.0,
            noise_substeps: 1,
            transient_periods: 20,
            record_periods: 512,
        }
    }
}

impl IntegratorSection {
    pub fn build(&self, model: &DimensionlessModel) -> Result<IntegratorConfig> {
        if self.steps_per_period == 0 || self.samples_per_period == 0 {
            return Err(Error::Config("steps_per_period and samples_per_period must be >= 1".into()));
        }
        if !self.steps_per_period.is_multiple_of(self.samples_per_period) {
            return Err(Error::Config(format!(
                "samples_per_period = {} does not divide steps_per_period = {}",
                self.samples_per_period, self.steps_per_period
            )));
        }
        let mut cfg = IntegratorConfig::with_resolution(model, self.steps_per_period, self.samples_per_period);
        cfg.scheme = self.scheme;
        cfg.dim = self.dim;
        cfg.moving_frame = self.moving_frame;
        cfg.renormalize_every = self.renormalize_every;
        cfg.leakage_limit = self.leakage_limit;
        cfg.recenter_quanta = self.recenter_quanta;
        cfg.noise_substeps = self.noise_substeps;
        cfg.validate(model)?;
        Ok(cfg)
    }

    pub fn total_periods(&self) -> usize {
        self.transient_periods + self.record_periods
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaUnit {
    /// Nats per 1/ω₀.
    #[default]
    PerTime,
    /// Nats per recorded sample.
    PerSample,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingSection {
    pub delay: usize,
    pub dim: usize,
    pub theiler: usize,
    pub scale: f64,
    pub max_horizon: usize,
    pub min_neighbors: usize,
    /// 0 uses every eligible reference point.
    pub references: usize,
    pub divergence: Divergence,
    pub min_fit_points: usize,
    /// Manual fit window `[first, last]`; automatic when absent.
    pub fit_range: Option<[usize; 2]>,
    pub lambda_unit: LambdaUnit,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        let e = EmbeddingConfig::default();
        Self {
            delay: e.delay,
            dim: e.dim,
            theiler: e.theiler,
            scale: e.scale,
            max_horizon: e.max_horizon,
            min_neighbors: e.min_neighbors,
            references: 0,
            divergence: e.divergence,
            min_fit_points: 8,
            fit_range: None,
            lambda_unit: LambdaUnit::PerTime,
        }
    }
}

impl EmbeddingSection {
    pub fn build(&self) -> Result<EmbeddingConfig> {
        let cfg = EmbeddingConfig {
            delay: self.delay,
            dim: self.dim,
            theiler: self.theiler,
            scale: self.scale,
            max_horizon: self.max_horizon,
            min_neighbors: self.min_neighbors,
            references: (self.references > 0).then_some(self.references),
            divergence: self.divergence,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn fit(&self) -> FitRange {
        match self.fit_range {
            Some([a, b]) => FitRange::Manual(a, b),
            None => FitRange::Auto,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSection {
    pub labels: Vec<String>,
    pub master_seed: u64,
    pub replicates: u64,
    pub d_min: f64,
    pub d_max: f64,
    pub d_count: usize,
    /// Explicit coupling values; overrides the uniform grid when non-empty.
    pub d_values: Vec<f64>,
    pub delta_skip_periods: usize,
    pub delta_window_periods: usize,
    pub poincare_phase: f64,
    pub poincare_points: usize,
    pub poincare_skip_periods: usize,
    /// Cluster linkage radius; 0 selects 5% of the section's bounding-box diagonal.
    pub linkage_radius: f64,
    /// Also write each cell's section, stretching curve and Δ(t) series.
    pub write_artifacts: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            labels: ParameterSet::LABELS.iter().map(|s| s.to_string()).collect(),
            master_seed: 20_110_425,
            replicates: 1,
            d_min: 0.23,
            d_max: 1.0,
            d_count: 28,
            d_values: Vec::new(),
            delta_skip_periods: 20,
            delta_window_periods: 400,
            poincare_phase: 0.0,
            poincare_points: 500,
            poincare_skip_periods: 20,
            linkage_radius: 0.0,
            write_artifacts: false,
        }
    }
}

impl SweepSection {
    /// The coupling grid, strictly increasing.
    pub fn d_grid(&self) -> Result<Vec<f64>> {
        let grid = if self.d_values.is_empty() {
            if self.d_count < 2 || !(self.d_max > self.d_min) || self.d_min < 0.0 {
                return Err(Error::Config(format!(
                    "grid needs d_count >= 2 and 0 <= d_min < d_max, got {} values on [{}, {}]",
                    self.d_count, self.d_min, self.d_max
                )));
            }
            let step = (self.d_max - self.d_min) / (self.d_count - 1) as f64;
            let mut g: Vec<f64> = (0..self.d_count).map(|k| self.d_min + k as f64 * step).collect();
            g[self.d_count - 1] = self.d_max;
            g
        } else {
            self.d_values.clone()
        };
        if grid.iter().any(|d| !(d.is_finite() && *d >= 0.0)) || grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("coupling values must be finite, non-negative and strictly increasing".into()));
        }
        Ok(grid)
    }

    pub fn linkage(&self) -> Option<f64> {
        (self.linkage_radius > 0.0).then_some(self.linkage_radius)
    }
}

impl Config {
    /// Parse TOML text, reporting every unrecognized key.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::Parse(e.to_string()))?;
        let mut unknown = Vec::new();
        let cfg: Config = serde_ignored::deserialize(de, |path| unknown.push(path.to_string()))
            .map_err(|e| Error::Parse(e.to_string()))?;
        if !unknown.is_empty() {
            return Err(Error::UnknownKeys(unknown));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.embedding.build()?;
        self.sweep.d_grid()?;
        for label in &self.sweep.labels {
            ParameterSet::builtin(label)?;
        }
        if self.sweep.replicates == 0 {
            return Err(Error::Config("replicates must be >= 1".into()));
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 over the canonical serialization of the effective config.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// A named circuit parameter set with its initial coherent amplitude.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSet {
    pub label: String,
    pub squid: SquidParameters,
}

impl ParameterSet {
    /// Built-in labels, ordered by ħ_eff.
    pub const LABELS: [&'static str; 5] = ["1", "1.2", "1.4", "1.9", "2.6"];

    pub fn builtin(label: &str) -> Result<Self> {
        // (I_c μA, L pH, C pF, ω_d/ω₀, φ_ex(0)/φ₀)
        let row = match label {
            "1" => (4.6, 100.0, 3.95, 0.65, 0.081),
            "1.2" => (3.35, 150.0, 2.16, 0.71, 0.1041),
            "1.4" => (2.67, 200.0, 1.29, 0.78, 0.1273),
            "1.9" => (2.46, 250.0, 0.36, 0.99, 0.1851),
            "2.6" => (2.2, 300.0, 0.1, 1.14, 0.2684),
            _ => {
                return Err(Error::Config(format!(
                    "unknown parameter set `{label}`; expected one of {:?}",
                    Self::LABELS
                )))
            }
        };
        let (ic, l, c, wd, phi) = row;
        Ok(Self {
            label: label.to_string(),
            squid: SquidParameters {
                capacitance: c * 1e-12,
                inductance: l * 1e-12,
                critical_current: ic * 1e-6,
                omega_d_ratio: wd,
                phi_ex0_ratio: phi,
            },
        })
    }

    pub fn index(&self) -> usize {
        Self::LABELS.iter().position(|l| *l == self.label).unwrap_or(usize::MAX)
    }

    pub fn model(&self) -> Result<DimensionlessModel> {
        reduce(&self.squid, &PhysicalConstants::codata2018())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = Config::from_toml_str("").unwrap();
        assert_eq!(cfg, Config::default());
        assert_eq!(cfg.sweep.d_grid().unwrap().len(), 28);
        assert_eq!(cfg.sweep.labels.len(), 5);
    }

    #[test]
    fn default_grid() {
        let g = SweepSection::default().d_grid().unwrap();
        assert_eq!(g[0], 0.23);
        assert_eq!(g[27], 1.0);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        let step = g[1] - g[0];
        assert!(g.windows(2).all(|w| ((w[1] - w[0]) - step).abs() < 1e-12));
    }

    #[test]
    fn unknown_keys_are_all_listed() {
        let text = "[physical]\nalpha0_re = 1.0\nbogus = 2\n[integrator]\ndimm = 3\n[extra]\nx = 1\n";
        match Config::from_toml_str(text) {
            Err(Error::UnknownKeys(keys)) => {
                assert_eq!(keys.len(), 3, "{keys:?}");
                assert!(keys.iter().any(|k| k.contains("bogus")));
                assert!(keys.iter().any(|k| k.contains("dimm")));
                assert!(keys.iter().any(|k| k.contains("extra")));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parse_overrides() {
        let text = r#"
[physical]
alpha0_convention = "halved"
[integrator]
scheme = "heun-drift"
dim = 48
[embedding]
divergence = "vector"
fit_range = [2, 40]
[sweep]
labels = ["2.6"]
d_values = [0.25, 0.35]
"#;
        let cfg = Config::from_toml_str(text).unwrap();
        assert_eq!(cfg.physical.alpha0(), Complex64::new(0.4385, -0.283));
        assert_eq!(cfg.integrator.scheme, Scheme::HeunDrift);
        assert_eq!(cfg.integrator.dim, 48);
        assert_eq!(cfg.embedding.divergence, Divergence::Vector);
        assert_eq!(cfg.embedding.fit(), FitRange::Manual(2, 40));
        assert_eq!(cfg.sweep.d_grid().unwrap(), vec![0.25, 0.35]);
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(Config::from_toml_str("[sweep]\nlabels = [\"3.7\"]").is_err());
        assert!(Config::from_toml_str("[sweep]\nd_values = [0.5, 0.4]").is_err());
        assert!(Config::from_toml_str("[embedding]\nscale = 1.5").is_err());
        assert!(Config::from_toml_str("[integrator]\ndim = \"big\"").is_err());
        assert!(matches!(Config::from_toml_str("[integrator"), Err(Error::Parse(_))));
    }

    #[test]
    fn hash_tracks_every_key() {
        let base = Config::default();
        let h0 = base.hash();
        assert_eq!(h0, Config::default().hash());
        let mut variants = Vec::new();
        let mut c = base.clone();
        c.physical.alpha0_im = -0.5;
        variants.push(c);
        let mut c = base.clone();
        c.integrator.noise_substeps = 2;
        variants.push(c);
        let mut c = base.clone();
        c.embedding.fit_range = Some([1, 9]);
        variants.push(c);
        let mut c = base.clone();
        c.sweep.write_artifacts = true;
        variants.push(c);
        for v in variants {
            assert_ne!(v.hash(), h0);
        }
    }

    #[test]
    fn builtin_sets_reduce() {
        for label in ParameterSet::LABELS {
            let set = ParameterSet::builtin(label).unwrap();
            let m = set.model().unwrap();
            assert!(m.is_finite() && m.beta_c > 0.0 && m.kappa > 0.0);
            assert_eq!(ParameterSet::LABELS[set.index()], label);
        }
        let base = ParameterSet::builtin("2.6").unwrap().model().unwrap();
        assert!((base.beta_c - 37.6).abs() < 0.1 && (base.kappa - 0.231).abs() < 1e-3);
    }

    #[test]
    fn integrator_section_builds_valid_config() {
        let m = ParameterSet::builtin("2.6").unwrap().model().unwrap();
        let cfg = IntegratorSection::default().build(&m).unwrap();
        assert_eq!(cfg.sample_stride, 32);
        assert!((cfg.sample_spacing() * 64.0 - m.period()).abs() < 1e-12);
        let bad = IntegratorSection { samples_per_period: 48, ..Default::default() };
        assert!(bad.build(&m).is_err());
    }
}
