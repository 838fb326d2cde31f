//! Run configuration: a flat `section.key = value` text format with
//! explicit units in the key names, full validation at load time, and a
//! stable serialization used for provenance hashing.
//!
//! Format rules: one `key = value` pair per line; `#` starts a full-line
//! comment; blank lines are ignored; unknown and duplicate keys are
//! rejected with their line number. An empty file yields the defaults.

use crate::beam::{BeamParams, FiberSpec, ModeIndex, SpotModel};
use crate::capacity::{Averaging, DetectorConfig, EnsembleEstimator, PowerBudget};
use crate::channel::MisalignmentStats;
use crate::coupling::EfficiencyEstimator;
use crate::quad::QuadratureSpec;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key '{key}'")]
    DuplicateKey { line: usize, key: String },
    #[error("key '{key}': {message}")]
    Validation { key: String, message: String },
}

/// Which ensemble estimator a pipeline uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    MonteCarlo,
    RayleighQuadrature,
}

/// Every tunable of the link, in the units of the key names.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkConfig {
    pub wavelength_nm: f64,
    pub waist_um: f64,
    pub distance_m: f64,
    pub spot_model: SpotModel,
    pub sigma_orient_mrad: f64,
    pub sigma_aoa_mrad: f64,
    pub mode_field_radius_um: f64,
    pub focal_length_mm: f64,
    pub supported_modes: Vec<ModeIndex>,
    pub responsivity_a_per_w: f64,
    pub feedback_resistor_ohm: f64,
    pub noise_figure_db: f64,
    pub temperature_k: f64,
    pub bandwidth_ghz: f64,
    pub total_dbm: f64,
    /// Capacity runs couple at the lens image plane (flattened wavefront).
    pub image_plane_coupling: bool,
    pub averaging: Averaging,
    pub capacity_estimator: EstimatorKind,
    pub realizations: usize,
    pub final_realizations: usize,
    pub capacity_quadrature_order: usize,
    pub efficiency_estimator: EstimatorKind,
    pub samples: usize,
    pub efficiency_quadrature_order: usize,
    pub quad_radial_order: usize,
    pub quad_angular_order: usize,
    pub quad_rel_tol: f64,
    pub quad_max_doublings: usize,
    pub seed: u64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            wavelength_nm: 1550.0,
            waist_um: 800.0,
            distance_m: 10.0,
            spot_model: SpotModel::Linear,
            sigma_orient_mrad: 0.125,
            sigma_aoa_mrad: 0.125,
            mode_field_radius_um: 1.6,
            focal_length_mm: 2.5944,
            supported_modes: vec![
                ModeIndex::new(0, 0),
                ModeIndex::new(1, 0),
                ModeIndex::new(0, 1),
                ModeIndex::new(0, 2),
            ],
            responsivity_a_per_w: 0.7,
            feedback_resistor_ohm: 500.0,
            noise_figure_db: 5.0,
            temperature_k: 300.0,
            bandwidth_ghz: 10.0,
            total_dbm: 10.0,
            image_plane_coupling: true,
            averaging: Averaging::PerRealization,
            capacity_estimator: EstimatorKind::MonteCarlo,
            realizations: 2000,
            final_realizations: 10000,
            capacity_quadrature_order: 8,
            efficiency_estimator: EstimatorKind::MonteCarlo,
            samples: 10000,
            efficiency_quadrature_order: 32,
            quad_radial_order: 128,
            quad_angular_order: 256,
            quad_rel_tol: 1e-8,
            quad_max_doublings: 4,
            seed: 0,
        }
    }
}

fn parse_lp_label(s: &str) -> Option<ModeIndex> {
    let digits = s.strip_prefix("LP")?;
    if digits.len() != 2 || !digits.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let l = digits[0..1].parse::<i32>().ok()?;
    let m = digits[1..2].parse::<u32>().ok()?;
    if m == 0 {
        return None;
    }
    Some(ModeIndex::new(m - 1, l))
}

impl LinkConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut seen: Vec<String> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| ConfigError::Parse {
                line,
                message: format!("expected 'key = value', got '{trimmed}'"),
            })?;
            let key = key.trim();
            let value = value.trim();
            if seen.iter().any(|k| k == key) {
                return Err(ConfigError::DuplicateKey {
                    line,
                    key: key.to_string(),
                });
            }
            seen.push(key.to_string());
            cfg.apply(key, value, line)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
        fn f64_of(value: &str, line: usize) -> Result<f64, ConfigError> {
            value.parse().map_err(|_| ConfigError::Parse {
                line,
                message: format!("'{value}' is not a number"),
            })
        }
        fn usize_of(value: &str, line: usize) -> Result<usize, ConfigError> {
            value.parse().map_err(|_| ConfigError::Parse {
                line,
                message: format!("'{value}' is not a non-negative integer"),
            })
        }
        fn bool_of(value: &str, line: usize) -> Result<bool, ConfigError> {
            match value {
                "true" => Ok(true),
                "false" => Ok(false),
                _ => Err(ConfigError::Parse {
                    line,
                    message: format!("'{value}' is not true/false"),
                }),
            }
        }
        fn estimator_of(value: &str, line: usize) -> Result<EstimatorKind, ConfigError> {
            match value {
                "monte_carlo" => Ok(EstimatorKind::MonteCarlo),
                "rayleigh_quadrature" => Ok(EstimatorKind::RayleighQuadrature),
                _ => Err(ConfigError::Parse {
                    line,
                    message: format!(
                        "'{value}' is not an estimator (monte_carlo | rayleigh_quadrature)"
                    ),
                }),
            }
        }

        match key {
            "link.wavelength_nm" => self.wavelength_nm = f64_of(value, line)?,
            "link.waist_um" => self.waist_um = f64_of(value, line)?,
            "link.distance_m" => self.distance_m = f64_of(value, line)?,
            "link.spot_model" => {
                self.spot_model = match value {
                    "linear" => SpotModel::Linear,
                    "standard" => SpotModel::Standard,
                    _ => {
                        return Err(ConfigError::Parse {
                            line,
                            message: format!("'{value}' is not a spot model (linear | standard)"),
                        })
                    }
                }
            }
            "misalign.sigma_orient_mrad" => self.sigma_orient_mrad = f64_of(value, line)?,
            "misalign.sigma_aoa_mrad" => self.sigma_aoa_mrad = f64_of(value, line)?,
            "fiber.mode_field_radius_um" => self.mode_field_radius_um = f64_of(value, line)?,
            "fiber.focal_length_mm" => self.focal_length_mm = f64_of(value, line)?,
            "fiber.supported_modes" => {
                self.supported_modes = value
                    .split(',')
                    .map(|s| {
                        parse_lp_label(s.trim()).ok_or_else(|| ConfigError::Parse {
                            line,
                            message: format!("'{}' is not an LP label like LP01", s.trim()),
                        })
                    })
                    .collect::<Result<_, _>>()?
            }
            "detector.responsivity_a_per_w" => self.responsivity_a_per_w = f64_of(value, line)?,
            "detector.feedback_resistor_ohm" => self.feedback_resistor_ohm = f64_of(value, line)?,
            "detector.noise_figure_db" => self.noise_figure_db = f64_of(value, line)?,
            "detector.temperature_k" => self.temperature_k = f64_of(value, line)?,
            "detector.bandwidth_ghz" => self.bandwidth_ghz = f64_of(value, line)?,
            "power.total_dbm" => self.total_dbm = f64_of(value, line)?,
            "capacity.image_plane_coupling" => self.image_plane_coupling = bool_of(value, line)?,
            "capacity.averaging" => {
                self.averaging = match value {
                    "per_realization" => Averaging::PerRealization,
                    "mean_channel" => Averaging::MeanChannel,
                    _ => {
                        return Err(ConfigError::Parse {
                            line,
                            message: format!(
                                "'{value}' is not an averaging mode (per_realization | mean_channel)"
                            ),
                        })
                    }
                }
            }
            "capacity.estimator" => self.capacity_estimator = estimator_of(value, line)?,
            "capacity.realizations" => self.realizations = usize_of(value, line)?,
            "capacity.final_realizations" => self.final_realizations = usize_of(value, line)?,
            "capacity.quadrature_order" => self.capacity_quadrature_order = usize_of(value, line)?,
            "efficiency.estimator" => self.efficiency_estimator = estimator_of(value, line)?,
            "efficiency.samples" => self.samples = usize_of(value, line)?,
            "efficiency.quadrature_order" => {
                self.efficiency_quadrature_order = usize_of(value, line)?
            }
            "quadrature.radial_order" => self.quad_radial_order = usize_of(value, line)?,
            "quadrature.angular_order" => self.quad_angular_order = usize_of(value, line)?,
            "quadrature.rel_tol" => self.quad_rel_tol = f64_of(value, line)?,
            "quadrature.max_doublings" => self.quad_max_doublings = usize_of(value, line)?,
            "run.seed" => {
                self.seed = value.parse().map_err(|_| ConfigError::Parse {
                    line,
                    message: format!("'{value}' is not a 64-bit seed"),
                })?
            }
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), ConfigError> {
        fn positive(key: &str, v: f64) -> Result<(), ConfigError> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::Validation {
                    key: key.to_string(),
                    message: format!("{v} must be positive and finite"),
                })
            }
        }
        fn non_negative(key: &str, v: f64) -> Result<(), ConfigError> {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::Validation {
                    key: key.to_string(),
                    message: format!("{v} must be non-negative and finite"),
                })
            }
        }
        fn at_least(key: &str, v: usize, bound: usize) -> Result<(), ConfigError> {
            if v >= bound {
                Ok(())
            } else {
                Err(ConfigError::Validation {
                    key: key.to_string(),
                    message: format!("{v} must be at least {bound}"),
                })
            }
        }

        positive("link.wavelength_nm", self.wavelength_nm)?;
        positive("link.waist_um", self.waist_um)?;
        positive("link.distance_m", self.distance_m)?;
        non_negative("misalign.sigma_orient_mrad", self.sigma_orient_mrad)?;
        non_negative("misalign.sigma_aoa_mrad", self.sigma_aoa_mrad)?;
        positive("fiber.mode_field_radius_um", self.mode_field_radius_um)?;
        positive("fiber.focal_length_mm", self.focal_length_mm)?;
        positive("detector.responsivity_a_per_w", self.responsivity_a_per_w)?;
        positive("detector.feedback_resistor_ohm", self.feedback_resistor_ohm)?;
        non_negative("detector.noise_figure_db", self.noise_figure_db)?;
        positive("detector.temperature_k", self.temperature_k)?;
        positive("detector.bandwidth_ghz", self.bandwidth_ghz)?;
        if !self.total_dbm.is_finite() {
            return Err(ConfigError::Validation {
                key: "power.total_dbm".to_string(),
                message: "must be finite".to_string(),
            });
        }
        positive("quadrature.rel_tol", self.quad_rel_tol)?;
        at_least("capacity.realizations", self.realizations, 100)?;
        at_least("capacity.final_realizations", self.final_realizations, 100)?;
        at_least("capacity.quadrature_order", self.capacity_quadrature_order, 2)?;
        at_least("efficiency.samples", self.samples, 100)?;
        at_least(
            "efficiency.quadrature_order",
            self.efficiency_quadrature_order,
            2,
        )?;
        if self.quad_max_doublings > 8 {
            return Err(ConfigError::Validation {
                key: "quadrature.max_doublings".to_string(),
                message: format!("{} must be at most 8", self.quad_max_doublings),
            });
        }
        self.quad_spec()
            .validate()
            .map_err(|e| ConfigError::Validation {
                key: "quadrature.radial_order/angular_order".to_string(),
                message: e.to_string(),
            })?;
        // constructing the domain objects surfaces any remaining bound
        self.fiber_spec().map_err(|e| ConfigError::Validation {
            key: "fiber.supported_modes".to_string(),
            message: e.to_string(),
        })?;
        self.detector().map_err(|e| ConfigError::Validation {
            key: "detector".to_string(),
            message: e.to_string(),
        })?;
        Ok(())
    }

    /// Free-space beam for the efficiency experiments (raw wavefront).
    pub fn beam_params(&self) -> BeamParams {
        let mut p = BeamParams::new(
            self.wavelength_nm * 1e-9,
            self.waist_um * 1e-6,
            self.distance_m,
        );
        p.spot_model = self.spot_model;
        p
    }

    /// Beam for the capacity pipeline, honoring `capacity.image_plane_coupling`.
    pub fn capacity_beam_params(&self) -> BeamParams {
        let mut p = self.beam_params();
        p.flatten_curvature = self.image_plane_coupling;
        p
    }

    pub fn fiber_spec(&self) -> Result<FiberSpec, crate::beam::BeamError> {
        FiberSpec::new(
            self.mode_field_radius_um * 1e-6,
            self.focal_length_mm * 1e-3,
            self.wavelength_nm * 1e-9,
            self.supported_modes.clone(),
        )
    }

    pub fn stats(&self) -> MisalignmentStats {
        MisalignmentStats::new(
            self.sigma_orient_mrad * 1e-3,
            self.sigma_aoa_mrad * 1e-3,
            self.distance_m,
        )
    }

    pub fn detector(&self) -> Result<DetectorConfig, crate::capacity::CapacityError> {
        DetectorConfig::new(
            self.responsivity_a_per_w,
            self.feedback_resistor_ohm,
            self.noise_figure_db,
            self.temperature_k,
            self.bandwidth_ghz * 1e9,
        )
    }

    pub fn budget(&self) -> PowerBudget {
        PowerBudget::from_dbm(self.total_dbm)
    }

    pub fn quad_spec(&self) -> QuadratureSpec {
        QuadratureSpec {
            radial_order: self.quad_radial_order,
            angular_order: self.quad_angular_order,
            rel_tol: self.quad_rel_tol,
            max_doublings: self.quad_max_doublings as u32,
        }
    }

    pub fn capacity_estimator(&self) -> EnsembleEstimator {
        match self.capacity_estimator {
            EstimatorKind::MonteCarlo => EnsembleEstimator::MonteCarlo {
                realizations: self.realizations,
            },
            EstimatorKind::RayleighQuadrature => EnsembleEstimator::RayleighQuadrature {
                order: self.capacity_quadrature_order,
            },
        }
    }

    /// Estimator for the final re-evaluation of a search winner.
    pub fn final_capacity_estimator(&self) -> EnsembleEstimator {
        match self.capacity_estimator {
            EstimatorKind::MonteCarlo => EnsembleEstimator::MonteCarlo {
                realizations: self.final_realizations,
            },
            EstimatorKind::RayleighQuadrature => EnsembleEstimator::RayleighQuadrature {
                order: self.capacity_quadrature_order,
            },
        }
    }

    pub fn efficiency_estimator(&self) -> EfficiencyEstimator {
        match self.efficiency_estimator {
            EstimatorKind::MonteCarlo => EfficiencyEstimator::MonteCarlo {
                samples: self.samples,
            },
            EstimatorKind::RayleighQuadrature => EfficiencyEstimator::RayleighQuadrature {
                order: self.efficiency_quadrature_order,
            },
        }
    }

    /// Stable serialization of the effective configuration. Reparsing the
    /// output reproduces the configuration exactly.
    pub fn to_text(&self) -> String {
        let spot = match self.spot_model {
            SpotModel::Linear => "linear",
            SpotModel::Standard => "standard",
        };
        let averaging = match self.averaging {
            Averaging::PerRealization => "per_realization",
            Averaging::MeanChannel => "mean_channel",
        };
        let estimator = |k: EstimatorKind| match k {
            EstimatorKind::MonteCarlo => "monte_carlo",
            EstimatorKind::RayleighQuadrature => "rayleigh_quadrature",
        };
        let modes = self
            .supported_modes
            .iter()
            .map(|m| m.lp_label())
            .collect::<Vec<_>>()
            .join(",");
        format!(
            "link.wavelength_nm = {}\n\
             link.waist_um = {}\n\
             link.distance_m = {}\n\
             link.spot_model = {}\n\
             misalign.sigma_orient_mrad = {}\n\
             misalign.sigma_aoa_mrad = {}\n\
             fiber.mode_field_radius_um = {}\n\
             fiber.focal_length_mm = {}\n\
             fiber.supported_modes = {}\n\
             detector.responsivity_a_per_w = {}\n\
             detector.feedback_resistor_ohm = {}\n\
             detector.noise_figure_db = {}\n\
             detector.temperature_k = {}\n\
             detector.bandwidth_ghz = {}\n\
             power.total_dbm = {}\n\
             capacity.image_plane_coupling = {}\n\
             capacity.averaging = {}\n\
             capacity.estimator = {}\n\
             capacity.realizations = {}\n\
             capacity.final_realizations = {}\n\
             capacity.quadrature_order = {}\n\
             efficiency.estimator = {}\n\
             efficiency.samples = {}\n\
             efficiency.quadrature_order = {}\n\
             quadrature.radial_order = {}\n\
             quadrature.angular_order = {}\n\
             quadrature.rel_tol = {}\n\
             quadrature.max_doublings = {}\n\
             run.seed = {}\n",
            self.wavelength_nm,
            self.waist_um,
            self.distance_m,
            spot,
            self.sigma_orient_mrad,
            self.sigma_aoa_mrad,
            self.mode_field_radius_um,
            self.focal_length_mm,
            modes,
            self.responsivity_a_per_w,
            self.feedback_resistor_ohm,
            self.noise_figure_db,
            self.temperature_k,
            self.bandwidth_ghz,
            self.total_dbm,
            self.image_plane_coupling,
            averaging,
            estimator(self.capacity_estimator),
            self.realizations,
            self.final_realizations,
            self.capacity_quadrature_order,
            estimator(self.efficiency_estimator),
            self.samples,
            self.efficiency_quadrature_order,
            self.quad_radial_order,
            self.quad_angular_order,
            self.quad_rel_tol,
            self.quad_max_doublings,
            self.seed,
        )
    }

    /// FNV-1a hash of the effective configuration text.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for b in self.to_text().bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn empty_file_yields_defaults() {
        let cfg = LinkConfig::parse("").unwrap();
        assert_eq!(cfg, LinkConfig::default());
        assert_relative_eq!(cfg.beam_params().wavelength, 1550e-9, max_relative = 1e-15);
        assert_relative_eq!(cfg.beam_params().waist, 800e-6, max_relative = 1e-15);
        assert!(!cfg.beam_params().flatten_curvature);
        assert!(cfg.capacity_beam_params().flatten_curvature);
        assert_relative_eq!(cfg.stats().sigma_displacement(), 1.25e-3, max_relative = 1e-12);
        assert_relative_eq!(cfg.budget().total, 1e-2, max_relative = 1e-12);
        assert_relative_eq!(cfg.detector().unwrap().bandwidth, 1e10, max_relative = 1e-15);
        let fiber = cfg.fiber_spec().unwrap();
        assert_eq!(fiber.supported_modes.len(), 4);
        assert_relative_eq!(fiber.focal_length, 2.5944e-3, max_relative = 1e-15);
    }

    #[test]
    fn comments_blank_lines_and_overrides() {
        let cfg = LinkConfig::parse(
            "# overrides\n\
             \n\
             power.total_dbm = 20\n\
             link.spot_model = standard\n\
             fiber.supported_modes = LP01, LP11\n\
             capacity.estimator = rayleigh_quadrature\n",
        )
        .unwrap();
        assert_relative_eq!(cfg.budget().total, 0.1, max_relative = 1e-12);
        assert_eq!(cfg.spot_model, SpotModel::Standard);
        assert_eq!(
            cfg.supported_modes,
            vec![ModeIndex::new(0, 0), ModeIndex::new(0, 1)]
        );
        assert_eq!(
            cfg.capacity_estimator(),
            EnsembleEstimator::RayleighQuadrature { order: 8 }
        );
        assert_eq!(
            cfg.final_capacity_estimator(),
            EnsembleEstimator::RayleighQuadrature { order: 8 }
        );
    }

    #[test]
    fn monte_carlo_estimators_carry_their_budgets() {
        let cfg = LinkConfig::default();
        assert_eq!(
            cfg.capacity_estimator(),
            EnsembleEstimator::MonteCarlo { realizations: 2000 }
        );
        assert_eq!(
            cfg.final_capacity_estimator(),
            EnsembleEstimator::MonteCarlo {
                realizations: 10000
            }
        );
        assert_eq!(
            cfg.efficiency_estimator(),
            EfficiencyEstimator::MonteCarlo { samples: 10000 }
        );
    }

    #[test]
    fn unknown_duplicate_and_malformed_keys_are_rejected_with_lines() {
        match LinkConfig::parse("link.walelength_nm = 1550\n").unwrap_err() {
            ConfigError::UnknownKey { line, key } => {
                assert_eq!(line, 1);
                assert_eq!(key, "link.walelength_nm");
            }
            other => panic!("unexpected error {other:?}"),
        }
        match LinkConfig::parse("run.seed = 1\n\nrun.seed = 2\n").unwrap_err() {
            ConfigError::DuplicateKey { line, key } => {
                assert_eq!(line, 3);
                assert_eq!(key, "run.seed");
            }
            other => panic!("unexpected error {other:?}"),
        }
        match LinkConfig::parse("just some words\n").unwrap_err() {
            ConfigError::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected error {other:?}"),
        }
        match LinkConfig::parse("link.waist_um = eight hundred\n").unwrap_err() {
            ConfigError::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected error {other:?}"),
        }
        match LinkConfig::parse("fiber.supported_modes = LP1\n").unwrap_err() {
            ConfigError::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn out_of_range_values_name_the_field() {
        match LinkConfig::parse("link.distance_m = -1\n").unwrap_err() {
            ConfigError::Validation { key, .. } => assert_eq!(key, "link.distance_m"),
            other => panic!("unexpected error {other:?}"),
        }
        match LinkConfig::parse("capacity.realizations = 10\n").unwrap_err() {
            ConfigError::Validation { key, .. } => assert_eq!(key, "capacity.realizations"),
            other => panic!("unexpected error {other:?}"),
        }
        match LinkConfig::parse("quadrature.radial_order = 100\n").unwrap_err() {
            ConfigError::Validation { key, .. } => {
                assert_eq!(key, "quadrature.radial_order/angular_order")
            }
            other => panic!("unexpected error {other:?}"),
        }
        match LinkConfig::parse("fiber.supported_modes = LP01,LP01\n").unwrap_err() {
            ConfigError::Validation { key, .. } => assert_eq!(key, "fiber.supported_modes"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn serialization_round_trips_and_hash_tracks_content() {
        let cfg = LinkConfig::parse(
            "power.total_dbm = 17.25\n\
             misalign.sigma_aoa_mrad = 0.0625\n\
             run.seed = 987654321\n\
             quadrature.rel_tol = 1e-9\n",
        )
        .unwrap();
        let round = LinkConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(cfg, round);
        assert_eq!(cfg.hash(), round.hash());
        let default_round = LinkConfig::parse(&LinkConfig::default().to_text()).unwrap();
        assert_eq!(default_round, LinkConfig::default());
        assert_ne!(cfg.hash(), LinkConfig::default().hash());
    }

    #[test]
    fn lp_labels_parse_both_ways() {
        assert_eq!(parse_lp_label("LP01"), Some(ModeIndex::new(0, 0)));
        assert_eq!(parse_lp_label("LP02"), Some(ModeIndex::new(1, 0)));
        assert_eq!(parse_lp_label("LP11"), Some(ModeIndex::new(0, 1)));
        assert_eq!(parse_lp_label("LP21"), Some(ModeIndex::new(0, 2)));
        assert_eq!(parse_lp_label("LP10"), None);
        assert_eq!(parse_lp_label("LP"), None);
        assert_eq!(parse_lp_label("01"), None);
        for m in LinkConfig::default().supported_modes {
            assert_eq!(parse_lp_label(&m.lp_label()), Some(m));
        }
    }
}
