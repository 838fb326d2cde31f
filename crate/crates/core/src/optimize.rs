//! Experiment drivers: β and aperture sweeps, exhaustive mode-set search,
//! and power-budget sweeps with crossover detection.
//!
//! Every driver is deterministic for a fixed seed. Monte-Carlo cells reuse
//! the same seed across grid points, so curves are paired samples of the
//! same misalignment draws and comparisons between cells are not washed out
//! by independent sampling noise.

use crate::beam::{BeamError, BeamGeometry, BeamParams, FiberSpec, ModeIndex};
use crate::capacity::{
    Averaging, CapacityError, DetectorConfig, EnsembleCapacity, EnsembleEstimator, PowerBudget,
    RealizationBank, Scheme,
};
use crate::channel::{sample_misalignment, ChannelError, Misalignment, MisalignmentStats};
use crate::coupling::{
    rayleigh_nodes, validate_mode, ApertureSpec, CouplingError, EfficiencyEstimator, OverlapKernel,
};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OptimizeError {
    #[error("sweep grid is empty")]
    EmptyGrid,
    #[error("sweep grid value {0} must be positive")]
    NonPositiveGridValue(f64),
    #[error("sweep grid must be strictly increasing (violated at index {index})")]
    NonIncreasingGrid { index: usize },
    #[error("a range grid needs at least 2 values, got {0}")]
    DegenerateGrid(usize),
    #[error("channel count {n} must be between 1 and {max}")]
    InvalidChannelCount { n: usize, max: usize },
    #[error(transparent)]
    Beam(#[from] BeamError),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Capacity(#[from] CapacityError),
}

/// Validates a physical-axis grid: non-empty, positive, strictly increasing.
fn validate_grid(values: &[f64]) -> Result<(), OptimizeError> {
    if values.is_empty() {
        return Err(OptimizeError::EmptyGrid);
    }
    for (i, &v) in values.iter().enumerate() {
        if !(v > 0.0) {
            return Err(OptimizeError::NonPositiveGridValue(v));
        }
        if i > 0 && v <= values[i - 1] {
            return Err(OptimizeError::NonIncreasingGrid { index: i });
        }
    }
    Ok(())
}

/// Validates a dB-scale grid, where negative values are legitimate.
fn validate_db_grid(values: &[f64]) -> Result<(), OptimizeError> {
    if values.is_empty() {
        return Err(OptimizeError::EmptyGrid);
    }
    for (i, &v) in values.iter().enumerate() {
        if i > 0 && v <= values[i - 1] {
            return Err(OptimizeError::NonIncreasingGrid { index: i });
        }
    }
    Ok(())
}

/// A named sweep axis, as parsed from `start:stop:step` command-line ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub axis: String,
    pub values: Vec<f64>,
    /// Human-readable note of any coupled constraint, e.g. "f = D".
    pub constraint: Option<String>,
}

impl SweepGrid {
    pub fn new(axis: &str, values: Vec<f64>) -> Result<Self, OptimizeError> {
        if values.len() < 2 {
            return Err(OptimizeError::DegenerateGrid(values.len()));
        }
        if values.is_empty() {
            return Err(OptimizeError::EmptyGrid);
        }
        for (i, &v) in values.iter().enumerate() {
            if i > 0 && v <= values[i - 1] {
                return Err(OptimizeError::NonIncreasingGrid { index: i });
            }
        }
        Ok(Self {
            axis: axis.to_string(),
            values,
            constraint: None,
        })
    }

    /// Inclusive of `start`, bounded by `stop`: start, start+step, ... ≤ stop.
    pub fn from_range(axis: &str, start: f64, stop: f64, step: f64) -> Result<Self, OptimizeError> {
        if !(step > 0.0) {
            return Err(OptimizeError::NonPositiveGridValue(step));
        }
        if stop <= start {
            return Err(OptimizeError::NonIncreasingGrid { index: 1 });
        }
        let mut values = Vec::new();
        let mut i = 0u64;
        loop {
            let v = start + i as f64 * step;
            if v > stop + step * 1e-9 {
                break;
            }
            values.push(v);
            i += 1;
        }
        Self::new(axis, values)
    }

    pub fn with_constraint(mut self, note: &str) -> Self {
        self.constraint = Some(note.to_string());
        self
    }
}

/// Argmax scan with ties broken toward the smallest abscissa.
fn argmax_by_value(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let mut best = (xs[0], ys[0]);
    for (&x, &y) in xs.iter().zip(ys) {
        if y > best.1 {
            best = (x, y);
        }
    }
    best
}

/// One β grid point: efficiencies per LP-labeled fiber-mode group.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaSweepRow {
    pub beta: f64,
    pub eta: Vec<f64>,
}

/// Coupling-efficiency curve of one transmitted mode against every supported
/// fiber mode, labeled by LP group. Degenerate ±l orientations are summed
/// into their common label.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaSweep {
    pub tx: ModeIndex,
    pub misaligned: bool,
    pub labels: Vec<String>,
    pub rows: Vec<BetaSweepRow>,
    /// Per label: (β*, η*) with ties broken toward the smallest β.
    pub argmax: Vec<(f64, f64)>,
}

impl BetaSweep {
    pub fn column(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Misalignment ensemble cells shared by the sweep drivers: weights sum to
/// one; the aligned case is the single cell (1, aligned).
fn efficiency_cells(
    stats: &MisalignmentStats,
    estimator: EfficiencyEstimator,
    seed: u64,
) -> Result<Vec<(f64, Misalignment)>, OptimizeError> {
    match estimator {
        EfficiencyEstimator::MonteCarlo { samples } => {
            if samples < 100 {
                return Err(OptimizeError::Coupling(CouplingError::TooFewSamples(
                    samples,
                )));
            }
            let w = 1.0 / samples as f64;
            Ok(sample_misalignment(stats, samples, seed)
                .into_iter()
                .map(|m| (w, m))
                .collect())
        }
        EfficiencyEstimator::RayleighQuadrature { order } => {
            let (dn, dw) = rayleigh_nodes(stats.sigma_displacement(), order, 5.0);
            let (en, ew) = rayleigh_nodes(stats.sigma_aoa, order, 5.0);
            Ok(dn
                .iter()
                .zip(&dw)
                .flat_map(|(&d, &wd)| {
                    en.iter()
                        .zip(&ew)
                        .map(move |(&e, &we)| (wd * we, Misalignment::new(d, e)))
                })
                .collect())
        }
    }
}

/// Sweeps the coupling parameter β for one transmitted mode. Aligned sweeps
/// report instantaneous efficiencies; misaligned sweeps report expectations
/// under the (d, ε) ensemble, with the same draws reused at every β.
#[allow(clippy::too_many_arguments)]
pub fn sweep_beta(
    tx: ModeIndex,
    fiber_modes: &[ModeIndex],
    fiber: &FiberSpec,
    beam: &BeamParams,
    betas: &[f64],
    misaligned: bool,
    stats: &MisalignmentStats,
    estimator: EfficiencyEstimator,
    seed: u64,
) -> Result<BetaSweep, OptimizeError> {
    validate_grid(betas)?;
    validate_mode(tx)?;
    if fiber_modes.is_empty() {
        return Ok(BetaSweep {
            tx,
            misaligned,
            labels: Vec::new(),
            rows: Vec::new(),
            argmax: Vec::new(),
        });
    }

    // expand each LP group into its distinct ±l orientations
    let mut expanded: Vec<ModeIndex> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &m in fiber_modes {
        validate_mode(m)?;
        let label = m.lp_label();
        let gi = match labels.iter().position(|l| *l == label) {
            Some(i) => i,
            None => {
                labels.push(label);
                groups.push(Vec::new());
                labels.len() - 1
            }
        };
        for cand in [m, ModeIndex::new(m.p, -m.l)] {
            if let Some(pos) = expanded.iter().position(|&e| e == cand) {
                if !groups[gi].contains(&pos) {
                    groups[gi].push(pos);
                }
            } else {
                expanded.push(cand);
                groups[gi].push(expanded.len() - 1);
            }
        }
    }

    let cells = if misaligned {
        efficiency_cells(stats, estimator, seed)?
    } else {
        vec![(1.0, Misalignment::aligned())]
    };
    let geom = BeamGeometry::propagate(beam, tx)?;

    let rows: Vec<BetaSweepRow> = betas
        .par_iter()
        .map(|&beta| {
            let ap = ApertureSpec::for_beta(beta, fiber)?;
            let kernel = OverlapKernel::new(&ap, fiber, &expanded);
            let mut acc = vec![0.0; expanded.len()];
            for (w, m) in &cells {
                let (h, pa) = kernel.couple(tx, &geom, m.displacement, m.aoa_tilt);
                if pa > 0.0 {
                    for (a, hk) in acc.iter_mut().zip(&h) {
                        *a += w * hk.norm_sqr() / pa;
                    }
                }
            }
            let eta = groups
                .iter()
                .map(|g| g.iter().map(|&i| acc[i]).sum())
                .collect();
            Ok(BetaSweepRow { beta, eta })
        })
        .collect::<Result<_, OptimizeError>>()?;

    let argmax = (0..labels.len())
        .map(|c| {
            let ys: Vec<f64> = rows.iter().map(|r| r.eta[c]).collect();
            argmax_by_value(betas, &ys)
        })
        .collect();

    Ok(BetaSweep {
        tx,
        misaligned,
        labels,
        rows,
        argmax,
    })
}

/// Shared context of the capacity experiments. The fiber acts as a template
/// whose focal length is re-derived from the f = D constraint at each
/// aperture cell; the beam is expected to carry the image-plane coupling
/// convention used by the capacity pipeline.
#[derive(Debug, Clone)]
pub struct CapacityExperiment<'a> {
    pub fiber: &'a FiberSpec,
    pub beam: &'a BeamParams,
    pub stats: &'a MisalignmentStats,
    pub det: &'a DetectorConfig,
    pub budget: PowerBudget,
    pub estimator: EnsembleEstimator,
    /// Budget for the final re-evaluation of a search winner.
    pub final_estimator: EnsembleEstimator,
    pub averaging: Averaging,
    pub seed: u64,
}

impl CapacityExperiment<'_> {
    /// Builds a realization bank over `universe` at aperture D with f = D.
    fn bank(
        &self,
        universe: &[ModeIndex],
        diameter: f64,
        estimator: EnsembleEstimator,
    ) -> Result<RealizationBank, OptimizeError> {
        let fiber = FiberSpec::new(
            self.fiber.mode_field_radius,
            diameter,
            self.fiber.wavelength,
            universe.to_vec(),
        )?;
        let ap = ApertureSpec::new(diameter, diameter)?;
        Ok(RealizationBank::build(
            universe, &fiber, self.beam, &ap, self.stats, estimator, self.seed,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApertureSweepRow {
    pub diameter: f64,
    pub capacity: EnsembleCapacity,
}

/// Mean-capacity curve over receive-aperture diameter with f = D enforced.
#[derive(Debug, Clone, PartialEq)]
pub struct ApertureSweep {
    pub mode_set: Vec<ModeIndex>,
    pub scheme: Scheme,
    pub rows: Vec<ApertureSweepRow>,
    pub best_diameter: f64,
    pub best_capacity: EnsembleCapacity,
}

/// Sweeps the aperture diameter for a fixed transmitted mode set. A single
/// grid value is allowed and is trivially the argmax.
pub fn sweep_aperture(
    exp: &CapacityExperiment,
    mode_set: &[ModeIndex],
    diameters: &[f64],
    scheme: Scheme,
) -> Result<ApertureSweep, OptimizeError> {
    validate_grid(diameters)?;
    let positions: Vec<usize> = (0..mode_set.len()).collect();
    let rows: Vec<ApertureSweepRow> = diameters
        .par_iter()
        .map(|&d| {
            let bank = exp.bank(mode_set, d, exp.estimator)?;
            let capacity =
                bank.subset_capacity(&positions, scheme, exp.det, &exp.budget, exp.averaging)?;
            Ok(ApertureSweepRow {
                diameter: d,
                capacity,
            })
        })
        .collect::<Result<_, OptimizeError>>()?;
    let mut best = &rows[0];
    for row in &rows {
        if row.capacity.mean > best.capacity.mean {
            best = row;
        }
    }
    Ok(ApertureSweep {
        mode_set: mode_set.to_vec(),
        scheme,
        rows: rows.clone(),
        best_diameter: best.diameter,
        best_capacity: best.capacity,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchRow {
    pub mode_set: Vec<ModeIndex>,
    pub aperture: f64,
    pub value: f64,
    pub std_error: f64,
}

/// Outcome of the exhaustive mode-set search.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub scheme: Scheme,
    pub n: usize,
    pub best_set: Vec<ModeIndex>,
    pub best_aperture: f64,
    /// Winner re-evaluated at the final ensemble budget.
    pub best_value: f64,
    pub best_std_error: f64,
    /// All C(|universe|, N) subsets in lexicographic order, evaluated at the
    /// search budget.
    pub table: Vec<SearchRow>,
}

/// Lexicographic k-subsets of {0, .., n-1}.
pub(crate) fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k > n {
        return Vec::new();
    }
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut i = k as isize - 1;
        while i >= 0 && idx[i as usize] == i as usize + n - k {
            i -= 1;
        }
        if i < 0 {
            break;
        }
        let i = i as usize;
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
    out
}

/// Exhaustively searches the N-subsets of `universe` for the highest mean
/// capacity. By default every subset is evaluated at the per-N optimal
/// aperture found on the leading subset's zero-forcing ladder (the published
/// aperture-selection procedure, applied to both schemes so their searches
/// are comparable at the same geometry); `per_subset_aperture` re-optimizes
/// the aperture for each subset under the searched scheme. Ties break toward
/// the lexicographically smallest subset.
pub fn search_mode_set(
    exp: &CapacityExperiment,
    n: usize,
    universe: &[ModeIndex],
    scheme: Scheme,
    diameters: &[f64],
    per_subset_aperture: bool,
) -> Result<SearchResult, OptimizeError> {
    if n < 1 || n > universe.len() {
        return Err(OptimizeError::InvalidChannelCount {
            n,
            max: universe.len(),
        });
    }
    validate_grid(diameters)?;
    let subsets = combinations(universe.len(), n);

    let table: Vec<SearchRow> = if per_subset_aperture {
        subsets
            .iter()
            .map(|subset| {
                let modes: Vec<ModeIndex> = subset.iter().map(|&i| universe[i]).collect();
                let sweep = sweep_aperture(exp, &modes, diameters, scheme)?;
                Ok(SearchRow {
                    mode_set: modes,
                    aperture: sweep.best_diameter,
                    value: sweep.best_capacity.mean,
                    std_error: sweep.best_capacity.std_error,
                })
            })
            .collect::<Result<_, OptimizeError>>()?
    } else {
        let ladder = sweep_aperture(exp, &universe[..n], diameters, Scheme::Zfbf)?;
        let d_star = ladder.best_diameter;
        let bank = exp.bank(universe, d_star, exp.estimator)?;
        subsets
            .iter()
            .map(|subset| {
                let cap =
                    bank.subset_capacity(subset, scheme, exp.det, &exp.budget, exp.averaging)?;
                Ok(SearchRow {
                    mode_set: subset.iter().map(|&i| universe[i]).collect(),
                    aperture: d_star,
                    value: cap.mean,
                    std_error: cap.std_error,
                })
            })
            .collect::<Result<_, OptimizeError>>()?
    };

    let mut best = &table[0];
    for row in &table {
        if row.value > best.value {
            best = row;
        }
    }

    let final_bank = exp.bank(&best.mode_set, best.aperture, exp.final_estimator)?;
    let positions: Vec<usize> = (0..n).collect();
    let final_cap =
        final_bank.subset_capacity(&positions, scheme, exp.det, &exp.budget, exp.averaging)?;

    Ok(SearchResult {
        scheme,
        n,
        best_set: best.mode_set.clone(),
        best_aperture: best.aperture,
        best_value: final_cap.mean,
        best_std_error: final_cap.std_error,
        table,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerCrossover {
    /// Interpolated budget where the leading N changes, dBm.
    pub dbm: f64,
    pub from_n: usize,
    pub to_n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerSweepRow {
    pub dbm: f64,
    /// Mean capacity per entry of `n_values`.
    pub capacities: Vec<f64>,
    pub best_n: usize,
}

/// Capacity-versus-power table with per-budget leading channel count.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSweep {
    pub scheme: Scheme,
    pub n_values: Vec<usize>,
    /// Winning mode set per entry of `n_values` (searched at `exp.budget`).
    pub sets: Vec<Vec<ModeIndex>>,
    /// Optimal aperture per entry of `n_values`.
    pub apertures: Vec<f64>,
    pub rows: Vec<PowerSweepRow>,
    pub crossovers: Vec<PowerCrossover>,
}

/// Sweeps the total power budget for each channel count. Mode sets and
/// apertures are first optimized per N at the experiment's own budget, then
/// frozen while the budget varies; crossovers are located by linear
/// interpolation of the capacity difference between consecutive leaders.
pub fn sweep_power(
    exp: &CapacityExperiment,
    dbms: &[f64],
    n_values: &[usize],
    universe: &[ModeIndex],
    scheme: Scheme,
    diameters: &[f64],
) -> Result<PowerSweep, OptimizeError> {
    validate_db_grid(dbms)?;
    if n_values.is_empty() {
        return Err(OptimizeError::EmptyGrid);
    }
    for (i, &n) in n_values.iter().enumerate() {
        if n < 1 || n > universe.len() {
            return Err(OptimizeError::InvalidChannelCount {
                n,
                max: universe.len(),
            });
        }
        if i > 0 && n <= n_values[i - 1] {
            return Err(OptimizeError::NonIncreasingGrid { index: i });
        }
    }

    let mut sets = Vec::with_capacity(n_values.len());
    let mut apertures = Vec::with_capacity(n_values.len());
    let mut curves: Vec<Vec<f64>> = Vec::with_capacity(n_values.len());
    for &n in n_values {
        let search = search_mode_set(exp, n, universe, scheme, diameters, false)?;
        let bank = exp.bank(&search.best_set, search.best_aperture, exp.estimator)?;
        let positions: Vec<usize> = (0..n).collect();
        let curve = dbms
            .iter()
            .map(|&dbm| {
                let budget = PowerBudget::from_dbm(dbm);
                Ok(bank
                    .subset_capacity(&positions, scheme, exp.det, &budget, exp.averaging)?
                    .mean)
            })
            .collect::<Result<Vec<f64>, OptimizeError>>()?;
        sets.push(search.best_set);
        apertures.push(search.best_aperture);
        curves.push(curve);
    }

    let rows: Vec<PowerSweepRow> = dbms
        .iter()
        .enumerate()
        .map(|(j, &dbm)| {
            let capacities: Vec<f64> = curves.iter().map(|c| c[j]).collect();
            let mut best = 0;
            for (i, &c) in capacities.iter().enumerate() {
                if c > capacities[best] {
                    best = i;
                }
            }
            PowerSweepRow {
                dbm,
                capacities,
                best_n: n_values[best],
            }
        })
        .collect();

    let mut crossovers = Vec::new();
    for j in 1..rows.len() {
        let (a, b) = (rows[j - 1].best_n, rows[j].best_n);
        if a == b {
            continue;
        }
        let ia = n_values.iter().position(|&n| n == a).unwrap();
        let ib = n_values.iter().position(|&n| n == b).unwrap();
        let d0 = rows[j - 1].capacities[ib] - rows[j - 1].capacities[ia];
        let d1 = rows[j].capacities[ib] - rows[j].capacities[ia];
        let dbm = if (d1 - d0).abs() > 0.0 {
            rows[j - 1].dbm + (rows[j].dbm - rows[j - 1].dbm) * (-d0) / (d1 - d0)
        } else {
            rows[j - 1].dbm
        };
        crossovers.push(PowerCrossover {
            dbm,
            from_n: a,
            to_n: b,
        });
    }

    Ok(PowerSweep {
        scheme,
        n_values: n_values.to_vec(),
        sets,
        apertures,
        rows,
        crossovers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::coupling_efficiency;
    use crate::quad::QuadratureSpec;
    use approx::assert_relative_eq;

    const LAMBDA: f64 = 1550e-9;

    fn efficiency_fiber() -> FiberSpec {
        FiberSpec::new(
            1.6e-6,
            2.5944e-3,
            LAMBDA,
            vec![
                ModeIndex::new(0, 0),
                ModeIndex::new(1, 0),
                ModeIndex::new(0, 1),
                ModeIndex::new(0, 2),
            ],
        )
        .unwrap()
    }

    fn capacity_experiment_parts() -> (FiberSpec, BeamParams, MisalignmentStats, DetectorConfig) {
        let fiber = FiberSpec::new(
            1.6e-6,
            12e-3,
            LAMBDA,
            (0..6).map(|l| ModeIndex::new(0, l)).collect(),
        )
        .unwrap();
        let mut beam = BeamParams::new(LAMBDA, 800e-6, 10.0);
        beam.flatten_curvature = true;
        let stats = MisalignmentStats::new(0.125e-3, 0.125e-3, 10.0);
        (fiber, beam, stats, DetectorConfig::default())
    }

    #[test]
    fn combinations_are_lexicographic_and_complete() {
        assert_eq!(
            combinations(4, 2),
            vec![
                vec![0, 1],
                vec![0, 2],
                vec![0, 3],
                vec![1, 2],
                vec![1, 3],
                vec![2, 3]
            ]
        );
        assert_eq!(combinations(3, 3), vec![vec![0, 1, 2]]);
        assert_eq!(combinations(3, 0), vec![Vec::<usize>::new()]);
        assert_eq!(combinations(6, 3).len(), 20);
        assert!(combinations(2, 3).is_empty());
    }

    #[test]
    fn grid_validation_rejects_malformed_axes() {
        assert_eq!(validate_grid(&[]), Err(OptimizeError::EmptyGrid));
        assert_eq!(
            validate_grid(&[1.0, -2.0]),
            Err(OptimizeError::NonPositiveGridValue(-2.0))
        );
        assert_eq!(
            validate_grid(&[1.0, 1.0]),
            Err(OptimizeError::NonIncreasingGrid { index: 1 })
        );
        assert!(validate_grid(&[0.5]).is_ok());
        assert!(validate_db_grid(&[-15.0, 0.0, 30.0]).is_ok());
        assert_eq!(
            SweepGrid::new("beta", vec![1.0]),
            Err(OptimizeError::DegenerateGrid(1))
        );
    }

    #[test]
    fn range_grids_are_start_inclusive_and_stop_bounded() {
        let g = SweepGrid::from_range("beta", 0.1, 4.0, 0.01).unwrap();
        assert_eq!(g.values.len(), 391);
        assert_relative_eq!(g.values[0], 0.1, max_relative = 1e-15);
        assert_relative_eq!(*g.values.last().unwrap(), 4.0, max_relative = 1e-9);
        let g = SweepGrid::from_range("d", 1.0, 2.0, 0.3).unwrap();
        assert_eq!(g.values.len(), 4);
        assert_relative_eq!(g.values[3], 1.9, max_relative = 1e-12);
        let g = SweepGrid::from_range("p", -15.0, 30.0, 1.0).unwrap();
        assert_eq!(g.values.len(), 46);
    }

    #[test]
    fn argmax_breaks_ties_toward_smallest_abscissa() {
        assert_eq!(
            argmax_by_value(&[1.0, 2.0, 3.0], &[0.5, 0.7, 0.7]),
            (2.0, 0.7)
        );
        assert_eq!(argmax_by_value(&[1.0, 2.0], &[0.7, 0.7]), (1.0, 0.7));
    }

    #[test]
    fn empty_fiber_mode_list_yields_empty_table() {
        let fiber = efficiency_fiber();
        let beam = BeamParams::new(LAMBDA, 800e-6, 10.0);
        let stats = MisalignmentStats::new(0.125e-3, 0.125e-3, 10.0);
        let sweep = sweep_beta(
            ModeIndex::new(0, 0),
            &[],
            &fiber,
            &beam,
            &[1.0, 2.0],
            false,
            &stats,
            EfficiencyEstimator::default(),
            0,
        )
        .unwrap();
        assert!(sweep.labels.is_empty());
        assert!(sweep.rows.is_empty());
        assert!(sweep.argmax.is_empty());
    }

    #[test]
    fn aligned_beta_sweep_matches_single_point_efficiencies() {
        let fiber = efficiency_fiber();
        let beam = BeamParams::new(LAMBDA, 800e-6, 10.0);
        let stats = MisalignmentStats::new(0.125e-3, 0.125e-3, 10.0);
        let sweep = sweep_beta(
            ModeIndex::new(0, 0),
            &fiber.supported_modes.clone(),
            &fiber,
            &beam,
            &[0.9, 1.01, 1.16, 1.3],
            false,
            &stats,
            EfficiencyEstimator::default(),
            0,
        )
        .unwrap();
        assert_eq!(sweep.labels, vec!["LP01", "LP02", "LP11", "LP21"]);
        let lp01 = sweep.column("LP01").unwrap();
        assert_relative_eq!(
            sweep.rows[1].eta[lp01],
            0.8154415639774555,
            max_relative = 1e-10
        );
        assert_relative_eq!(
            sweep.rows[2].eta[lp01],
            0.8372274932279532,
            max_relative = 1e-10
        );
        // azimuthal selection rule: an l = 0 beam feeds no l ≠ 0 fiber mode
        for row in &sweep.rows {
            assert!(row.eta[sweep.column("LP11").unwrap()] < 1e-10);
            assert!(row.eta[sweep.column("LP21").unwrap()] < 1e-10);
        }
        // argmax on this small grid sits at the known interior point
        assert_eq!(sweep.argmax[lp01].0, 1.16);
        // cross-check one point against the standalone efficiency routine
        let geom = BeamGeometry::propagate(&beam, ModeIndex::new(0, 0)).unwrap();
        let ap = ApertureSpec::for_beta(1.01, &fiber).unwrap();
        let single = coupling_efficiency(
            ModeIndex::new(0, 0),
            ModeIndex::new(0, 0),
            &geom,
            &fiber,
            &ap,
            0.0,
            0.0,
            &QuadratureSpec::default(),
        )
        .unwrap();
        assert_relative_eq!(
            single.efficiency,
            sweep.rows[1].eta[lp01],
            max_relative = 1e-6
        );
    }

    #[test]
    fn misaligned_beta_sweep_matches_expected_efficiency() {
        let fiber = efficiency_fiber();
        let beam = BeamParams::new(LAMBDA, 800e-6, 10.0);
        let stats = MisalignmentStats::new(0.125e-3, 0.125e-3, 10.0);
        let est = EfficiencyEstimator::RayleighQuadrature { order: 8 };
        let sweep = sweep_beta(
            ModeIndex::new(0, 1),
            &[ModeIndex::new(0, 1)],
            &fiber,
            &beam,
            &[1.28],
            true,
            &stats,
            est,
            0,
        )
        .unwrap();
        let geom = BeamGeometry::propagate(&beam, ModeIndex::new(0, 1)).unwrap();
        let ap = ApertureSpec::for_beta(1.28, &fiber).unwrap();
        let (plus, _) = crate::coupling::expected_efficiency(
            ModeIndex::new(0, 1),
            ModeIndex::new(0, 1),
            &geom,
            &fiber,
            &ap,
            &stats,
            est,
            0,
        )
        .unwrap();
        let (minus, _) = crate::coupling::expected_efficiency(
            ModeIndex::new(0, 1),
            ModeIndex::new(0, -1),
            &geom,
            &fiber,
            &ap,
            &stats,
            est,
            0,
        )
        .unwrap();
        // the LP11 column aggregates both degenerate orientations
        assert_relative_eq!(sweep.rows[0].eta[0], plus + minus, max_relative = 1e-10);
    }

    #[test]
    fn misaligned_sweep_rejects_thin_sampling() {
        let fiber = efficiency_fiber();
        let beam = BeamParams::new(LAMBDA, 800e-6, 10.0);
        let stats = MisalignmentStats::new(0.125e-3, 0.125e-3, 10.0);
        let err = sweep_beta(
            ModeIndex::new(0, 0),
            &fiber.supported_modes.clone(),
            &fiber,
            &beam,
            &[1.0],
            true,
            &stats,
            EfficiencyEstimator::MonteCarlo { samples: 10 },
            0,
        )
        .unwrap_err();
        assert_eq!(
            err,
            OptimizeError::Coupling(CouplingError::TooFewSamples(10))
        );
    }

    #[test]
    fn aperture_sweep_matches_direct_ensemble_and_handles_single_point() {
        let (fiber, beam, stats, det) = capacity_experiment_parts();
        let est = EnsembleEstimator::RayleighQuadrature { order: 4 };
        let exp = CapacityExperiment {
            fiber: &fiber,
            beam: &beam,
            stats: &stats,
            det: &det,
            budget: PowerBudget::from_dbm(10.0),
            estimator: est,
            final_estimator: est,
            averaging: Averaging::PerRealization,
            seed: 0,
        };
        let modes = [ModeIndex::new(0, 0), ModeIndex::new(0, 1)];
        let sweep =
            sweep_aperture(&exp, &modes, &[6e-3, 9e-3, 12e-3], Scheme::Zfbf).unwrap();
        assert_eq!(sweep.rows.len(), 3);
        for row in &sweep.rows {
            assert!(row.capacity.mean > 0.0);
        }
        let direct = crate::capacity::ensemble_capacity(
            Scheme::Zfbf,
            &modes,
            &FiberSpec::new(1.6e-6, 9e-3, LAMBDA, modes.to_vec()).unwrap(),
            &beam,
            &ApertureSpec::new(9e-3, 9e-3).unwrap(),
            &stats,
            &det,
            &PowerBudget::from_dbm(10.0),
            est,
            Averaging::PerRealization,
            0,
        )
        .unwrap();
        assert_relative_eq!(sweep.rows[1].capacity.mean, direct.mean, max_relative = 1e-12);

        let single = sweep_aperture(&exp, &modes, &[9e-3], Scheme::Zfbf).unwrap();
        assert_eq!(single.best_diameter, 9e-3);
        assert_relative_eq!(
            single.best_capacity.mean,
            direct.mean,
            max_relative = 1e-12
        );
    }

    #[test]
    fn search_single_subset_is_the_full_set() {
        let (fiber, beam, stats, det) = capacity_experiment_parts();
        let est = EnsembleEstimator::RayleighQuadrature { order: 4 };
        let exp = CapacityExperiment {
            fiber: &fiber,
            beam: &beam,
            stats: &stats,
            det: &det,
            budget: PowerBudget::from_dbm(10.0),
            estimator: est,
            final_estimator: est,
            averaging: Averaging::PerRealization,
            seed: 0,
        };
        let universe: Vec<ModeIndex> = (0..3).map(|l| ModeIndex::new(0, l)).collect();
        let result =
            search_mode_set(&exp, 3, &universe, Scheme::Zfbf, &[9e-3, 12e-3], false).unwrap();
        assert_eq!(result.table.len(), 1);
        assert_eq!(result.best_set, universe);
        // identical search and final budgets: the re-evaluation reproduces
        // the table value exactly
        assert_relative_eq!(
            result.best_value,
            result.table[0].value,
            max_relative = 1e-12
        );
    }

    #[test]
    fn search_table_is_lexicographic_and_best_is_max() {
        let (fiber, beam, stats, det) = capacity_experiment_parts();
        let est = EnsembleEstimator::RayleighQuadrature { order: 4 };
        let exp = CapacityExperiment {
            fiber: &fiber,
            beam: &beam,
            stats: &stats,
            det: &det,
            budget: PowerBudget::from_dbm(10.0),
            estimator: est,
            final_estimator: est,
            averaging: Averaging::PerRealization,
            seed: 0,
        };
        let universe: Vec<ModeIndex> = (0..3).map(|l| ModeIndex::new(0, l)).collect();
        let result =
            search_mode_set(&exp, 2, &universe, Scheme::Zfbf, &[9e-3, 12e-3], false).unwrap();
        assert_eq!(result.table.len(), 3);
        let ls: Vec<Vec<i32>> = result
            .table
            .iter()
            .map(|r| r.mode_set.iter().map(|m| m.l).collect())
            .collect();
        assert_eq!(ls, vec![vec![0, 1], vec![0, 2], vec![1, 2]]);
        let max = result
            .table
            .iter()
            .map(|r| r.value)
            .fold(f64::NEG_INFINITY, f64::max);
        let best_row_value = result
            .table
            .iter()
            .find(|r| r.mode_set == result.best_set)
            .unwrap()
            .value;
        assert_relative_eq!(best_row_value, max, max_relative = 1e-12);
        assert!(result
            .table
            .iter()
            .all(|r| r.aperture == result.table[0].aperture));

        assert_eq!(
            search_mode_set(&exp, 4, &universe, Scheme::Zfbf, &[9e-3], false).unwrap_err(),
            OptimizeError::InvalidChannelCount { n: 4, max: 3 }
        );
    }

    #[test]
    fn monte_carlo_search_is_seed_deterministic() {
        let (fiber, beam, stats, det) = capacity_experiment_parts();
        let est = EnsembleEstimator::MonteCarlo { realizations: 200 };
        let mut exp = CapacityExperiment {
            fiber: &fiber,
            beam: &beam,
            stats: &stats,
            det: &det,
            budget: PowerBudget::from_dbm(10.0),
            estimator: est,
            final_estimator: est,
            averaging: Averaging::PerRealization,
            seed: 42,
        };
        let universe: Vec<ModeIndex> = (0..2).map(|l| ModeIndex::new(0, l)).collect();
        let a = search_mode_set(&exp, 1, &universe, Scheme::Zfbf, &[9e-3], false).unwrap();
        let b = search_mode_set(&exp, 1, &universe, Scheme::Zfbf, &[9e-3], false).unwrap();
        assert_eq!(a, b);
        exp.seed = 43;
        let c = search_mode_set(&exp, 1, &universe, Scheme::Zfbf, &[9e-3], false).unwrap();
        assert_ne!(a.best_value, c.best_value);
    }

    #[test]
    fn power_sweep_reports_zero_floor_and_crossovers() {
        let (fiber, beam, stats, det) = capacity_experiment_parts();
        let est = EnsembleEstimator::RayleighQuadrature { order: 4 };
        let exp = CapacityExperiment {
            fiber: &fiber,
            beam: &beam,
            stats: &stats,
            det: &det,
            budget: PowerBudget::from_dbm(10.0),
            estimator: est,
            final_estimator: est,
            averaging: Averaging::PerRealization,
            seed: 0,
        };
        let universe: Vec<ModeIndex> = (0..2).map(|l| ModeIndex::new(0, l)).collect();
        let sweep = sweep_power(
            &exp,
            &[-300.0, 10.0, 20.0],
            &[1, 2],
            &universe,
            Scheme::Zfbf,
            &[9e-3, 12e-3],
        )
        .unwrap();
        assert_eq!(sweep.rows.len(), 3);
        // a vanishing budget carries no information
        assert_eq!(sweep.rows[0].capacities, vec![0.0, 0.0]);
        assert_eq!(sweep.rows[0].best_n, 1);
        assert_eq!(sweep.sets.len(), 2);
        assert_eq!(sweep.sets[0].len(), 1);
        assert_eq!(sweep.sets[1].len(), 2);
        for row in &sweep.rows[1..] {
            assert!(row.capacities.iter().all(|&c| c > 0.0));
        }
        // every reported crossover lies inside the grid and matches a change
        // of leader between consecutive rows
        let changes = sweep
            .rows
            .windows(2)
            .filter(|w| w[0].best_n != w[1].best_n)
            .count();
        assert_eq!(sweep.crossovers.len(), changes);
        for c in &sweep.crossovers {
            assert!(c.dbm >= -300.0 && c.dbm <= 20.0);
            assert_ne!(c.from_n, c.to_n);
        }
    }
}
