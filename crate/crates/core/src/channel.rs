//! Random misalignment model and the instantaneous mode-division channel.
//!
//! Transmitter vibration tilts the beam axis by a small random angle; over a
//! link of length z this shows up at the receiver as a lateral pointing
//! displacement d (Rayleigh, scale σ_d = z·σ_orient) together with an
//! independent angle-of-arrival tilt ε (Rayleigh, scale σ_aoa). Both
//! components of each underlying angle are zero-mean Gaussians, which is what
//! makes the magnitudes Rayleigh. One draw of (d, ε), plus the per-source
//! laser phases, is a [`Misalignment`]; the N×N complex matrix of coupling
//! coefficients it induces is a [`ChannelMatrix`].
//!
//! The channel entry convention follows the transmission direction: entry
//! (k, i) couples transmitted mode i (column) into fiber mode k (row).
//! Intensity detection cannot see absolute phase, so alongside the physical
//! matrix H the channel carries the estimate H̃ built from measurable
//! magnitudes and within-row phase differences referenced to the diagonal:
//! H̃(k,i) = h_ik·e^{−j·arg h_kk}. H = D·H̃ for the unit-modulus diagonal
//! D_kk = e^{j·arg h_kk}, so any precoding built on H̃ sees the true channel
//! up to per-row phases that intensity detection discards anyway.

use crate::beam::{BeamError, BeamGeometry, BeamParams, FiberSpec, ModeIndex};
use crate::coupling::{validate_mode, ApertureSpec, CouplingError, OverlapKernel};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error(transparent)]
    Beam(#[from] BeamError),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
    #[error("mode set must not be empty")]
    EmptyModeSet,
    #[error("transmitted azimuthal order {0} appears twice; diagonal pairing needs distinct orders")]
    DuplicateAzimuthalOrder(i32),
    #[error("expected {expected} entries, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Scale parameters of the misalignment ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MisalignmentStats {
    /// Rayleigh scale of the transmitter orientation fluctuation, rad.
    pub sigma_orient: f64,
    /// Rayleigh scale of the angle-of-arrival fluctuation, rad.
    pub sigma_aoa: f64,
    /// Link length z, m; converts orientation jitter to displacement.
    pub distance: f64,
}

impl MisalignmentStats {
    pub fn new(sigma_orient: f64, sigma_aoa: f64, distance: f64) -> Self {
        Self {
            sigma_orient,
            sigma_aoa,
            distance,
        }
    }

    /// Rayleigh scale of the pointing displacement, σ_d = z·σ_orient.
    pub fn sigma_displacement(&self) -> f64 {
        self.distance * self.sigma_orient
    }
}

/// One realization of the random transceiver state.
#[derive(Debug, Clone, PartialEq)]
pub struct Misalignment {
    /// Lateral pointing displacement d on the aperture plane, m.
    pub displacement: f64,
    /// Angle-of-arrival tilt ε, rad.
    pub aoa_tilt: f64,
    /// Per-source laser phases φ_i, rad. Empty means the single-laser
    /// configuration (all φ_i = 0); otherwise one entry per transmitted mode.
    pub laser_phases: Vec<f64>,
}

impl Misalignment {
    pub fn new(displacement: f64, aoa_tilt: f64) -> Self {
        Self {
            displacement,
            aoa_tilt,
            laser_phases: Vec::new(),
        }
    }

    pub fn aligned() -> Self {
        Self::new(0.0, 0.0)
    }
}

/// Stream-splitting seed derivation (splitmix64 finalizer). Every sample
/// index gets its own generator so ensembles are reproducible bit-for-bit
/// regardless of worker count or evaluation order.
pub(crate) fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E3779B97F4A7C15)
        .wrapping_add(index.wrapping_mul(0xBF58476D1CE4E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

fn rayleigh_draw(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    // U ∈ (0, 1]: the quantile d = σ√(−2 ln U) must not see U = 0
    let u = 1.0 - rng.gen::<f64>();
    sigma * (-2.0 * u.ln()).sqrt()
}

/// Draws `n` independent single-laser misalignment realizations.
pub fn sample_misalignment(stats: &MisalignmentStats, n: usize, seed: u64) -> Vec<Misalignment> {
    (0..n)
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, j as u64));
            let d = rayleigh_draw(&mut rng, stats.sigma_displacement());
            let eps = rayleigh_draw(&mut rng, stats.sigma_aoa);
            Misalignment::new(d, eps)
        })
        .collect()
}

/// Draws `n` realizations for a multi-laser transmitter: each carries
/// `n_modes` independent uniform [0, 2π) laser phases.
pub fn sample_misalignment_multi_laser(
    stats: &MisalignmentStats,
    n_modes: usize,
    n: usize,
    seed: u64,
) -> Vec<Misalignment> {
    sample_misalignment(stats, n, seed)
        .into_iter()
        .enumerate()
        .map(|(j, mut m)| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed ^ 0x6C61736572, j as u64));
            m.laser_phases = (0..n_modes).map(|_| rng.gen::<f64>() * 2.0 * PI).collect();
            m
        })
        .collect()
}

/// Instantaneous channel between N transmitted modes and their N fiber-mode
/// partners, stored row-major with the (fiber row, transmit column)
/// convention.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    pub n: usize,
    /// Physical channel H(k,i) = h_ik·e^{jφ_i}.
    pub h: Vec<Complex64>,
    /// Intensity-detection estimate H̃(k,i) = H(k,i)·e^{−j·arg H(k,k)};
    /// diagonal entries are real and non-negative by construction.
    pub h_est: Vec<Complex64>,
    pub mode_set: Vec<ModeIndex>,
    pub fiber_modes: Vec<ModeIndex>,
}

impl ChannelMatrix {
    /// Wraps a raw matrix, deriving the intensity-detection estimate.
    pub fn from_h(
        h: Vec<Complex64>,
        mode_set: Vec<ModeIndex>,
        fiber_modes: Vec<ModeIndex>,
    ) -> Result<Self, ChannelError> {
        let n = mode_set.len();
        if n == 0 {
            return Err(ChannelError::EmptyModeSet);
        }
        if h.len() != n * n {
            return Err(ChannelError::DimensionMismatch {
                expected: n * n,
                got: h.len(),
            });
        }
        if fiber_modes.len() != n {
            return Err(ChannelError::DimensionMismatch {
                expected: n,
                got: fiber_modes.len(),
            });
        }
        let mut h_est = vec![Complex64::new(0.0, 0.0); n * n];
        for k in 0..n {
            let row_phase = Complex64::from_polar(1.0, -h[k * n + k].arg());
            for i in 0..n {
                h_est[k * n + i] = h[k * n + i] * row_phase;
            }
            h_est[k * n + k] = Complex64::new(h[k * n + k].norm(), 0.0);
        }
        Ok(Self {
            n,
            h,
            h_est,
            mode_set,
            fiber_modes,
        })
    }

    pub fn entry(&self, k: usize, i: usize) -> Complex64 {
        self.h[k * self.n + i]
    }

    pub fn est_entry(&self, k: usize, i: usize) -> Complex64 {
        self.h_est[k * self.n + i]
    }

    /// Channel restricted to a subset of mode positions. Diagonal entries of
    /// the subset are diagonal entries of the parent, so the estimate stays
    /// consistent with the row-phase convention.
    pub fn submatrix(&self, positions: &[usize]) -> Result<Self, ChannelError> {
        let m = positions.len();
        if m == 0 {
            return Err(ChannelError::EmptyModeSet);
        }
        for &p in positions {
            if p >= self.n {
                return Err(ChannelError::DimensionMismatch {
                    expected: self.n,
                    got: p,
                });
            }
        }
        let h = positions
            .iter()
            .flat_map(|&k| positions.iter().map(move |&i| self.entry(k, i)))
            .collect();
        Self::from_h(
            h,
            positions.iter().map(|&i| self.mode_set[i]).collect(),
            positions.iter().map(|&k| self.fiber_modes[k]).collect(),
        )
    }
}

/// Assembles the channel matrix for one misalignment realization.
///
/// Each transmitted mode i is propagated with its own spot growth, coupled
/// into every fiber partner through a shared [`OverlapKernel`], and scaled by
/// its laser phase. The fiber partner of transmitted order l is the LP mode
/// with the same azimuthal order (p = 0), so the aligned channel is diagonal;
/// duplicate azimuthal orders in `mode_set` are rejected because they would
/// make the pairing (and the matrix) structurally degenerate.
pub fn build_channel_matrix(
    mode_set: &[ModeIndex],
    fiber: &FiberSpec,
    beam: &BeamParams,
    ap: &ApertureSpec,
    m: &Misalignment,
) -> Result<ChannelMatrix, ChannelError> {
    let n = mode_set.len();
    if n == 0 {
        return Err(ChannelError::EmptyModeSet);
    }
    if !m.laser_phases.is_empty() && m.laser_phases.len() != n {
        return Err(ChannelError::DimensionMismatch {
            expected: n,
            got: m.laser_phases.len(),
        });
    }
    let fiber_modes: Vec<ModeIndex> = mode_set.iter().map(|t| ModeIndex::new(0, t.l)).collect();
    for (j, t) in mode_set.iter().enumerate() {
        validate_mode(*t)?;
        if mode_set[..j].iter().any(|o| o.l == t.l) {
            return Err(ChannelError::DuplicateAzimuthalOrder(t.l));
        }
    }
    let kernel = OverlapKernel::new(ap, fiber, &fiber_modes);
    let mut h = vec![Complex64::new(0.0, 0.0); n * n];
    for (i, tx) in mode_set.iter().enumerate() {
        let geom = BeamGeometry::propagate(beam, *tx)?;
        let (col, _) = kernel.couple(*tx, &geom, m.displacement, m.aoa_tilt);
        let phase = m
            .laser_phases
            .get(i)
            .map_or(Complex64::new(1.0, 0.0), |&p| Complex64::from_polar(1.0, p));
        for k in 0..n {
            h[k * n + i] = col[k] * phase;
        }
    }
    ChannelMatrix::from_h(h, mode_set.to_vec(), fiber_modes)
}

/// Photodetected current vector Y = R·|Hs|² + Z for one transmitted
/// amplitude vector `s` (entries in √W).
///
/// The squared coherent superposition is the source of all inter-mode
/// interference downstream; additive Gaussian noise of deviation `sigma_n`
/// models the thermal noise of the transimpedance stage.
pub fn received_current(
    ch: &ChannelMatrix,
    s: &[f64],
    responsivity: f64,
    sigma_n: f64,
    seed: u64,
) -> Result<Vec<f64>, ChannelError> {
    if s.len() != ch.n {
        return Err(ChannelError::DimensionMismatch {
            expected: ch.n,
            got: s.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = if sigma_n > 0.0 {
        Some(Normal::new(0.0, sigma_n).expect("sigma_n is positive and finite"))
    } else {
        None
    };
    Ok((0..ch.n)
        .map(|k| {
            let field: Complex64 = (0..ch.n).map(|i| ch.entry(k, i) * s[i]).sum();
            let z = noise.as_ref().map_or(0.0, |d| d.sample(&mut rng));
            responsivity * field.norm_sqr() + z
        })
        .collect())
}

/// Mean detected current for receiver k, split into the parts the capacity
/// model treats differently. All three fields are currents (A), already
/// scaled by the responsivity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurrentBreakdown {
    /// R·|h_kk|²·ξ_k, the useful signal.
    pub signal: f64,
    /// R·Σ_{i≠k}|h_ik|²·ξ_i, direct-detection crosstalk power.
    pub interference: f64,
    /// R·(π/4)·Σ_i Σ_{n≠i} Re(h_ik·h*_nk)·√(ξ_i·ξ_n), the pairwise beat of
    /// coherent contributions under independent Rayleigh signal amplitudes
    /// (⟨s_i⟩ = √(ξ_i·π)/2 gives the π/4).
    pub beat: f64,
}

impl CurrentBreakdown {
    pub fn total(&self) -> f64 {
        self.signal + self.interference + self.beat
    }
}

/// Ensemble-mean photocurrents under per-mode average powers `xi` (W).
pub fn mean_received_current(
    ch: &ChannelMatrix,
    xi: &[f64],
    responsivity: f64,
) -> Result<Vec<CurrentBreakdown>, ChannelError> {
    if xi.len() != ch.n {
        return Err(ChannelError::DimensionMismatch {
            expected: ch.n,
            got: xi.len(),
        });
    }
    Ok((0..ch.n)
        .map(|k| {
            let signal = ch.entry(k, k).norm_sqr() * xi[k];
            let interference: f64 = (0..ch.n)
                .filter(|&i| i != k)
                .map(|i| ch.entry(k, i).norm_sqr() * xi[i])
                .sum();
            let mut beat = Complex64::new(0.0, 0.0);
            for i in 0..ch.n {
                for nn in 0..ch.n {
                    if nn != i {
                        beat += ch.entry(k, i)
                            * ch.entry(k, nn).conj()
                            * (xi[i] * xi[nn]).sqrt();
                    }
                }
            }
            // conjugate pairing makes the double sum real; anything beyond
            // rounding residue indicates a broken index convention
            debug_assert!(beat.im.abs() <= 1e-12 * beat.norm().max(1.0));
            CurrentBreakdown {
                signal: responsivity * signal,
                interference: responsivity * interference,
                beat: responsivity * (PI / 4.0) * beat.re,
            }
        })
        .collect())
}
