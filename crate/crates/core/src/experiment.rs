//! Seeded trajectories, flocking detection, decay fits and Monte Carlo sweeps.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, flock_norm, min_positive_weight, to_relative, BoundCheck, RelativeState, SeriesState};
use crate::dynamics::{sample_failure_mask, step_weighted, weight_matrix, FailureMask, FlockState, ModelParams, WeightMatrix};
use crate::error::{FlockError, Result};
use crate::scalar::{Scalar, Vec3};
use crate::spectral::{fiedler, fiedler_noncolored, is_connected};

/// Describes the random number streams; written into every metadata sidecar.
pub const RNG_ALGORITHM: &str =
    "ChaCha8Rng (rand_chacha 0.9) seeded with seed_from_u64(master_seed), selected by set_stream(stream); \
     standard normals via rand_distr 0.5 StandardNormal (ziggurat); link outcomes via Rng::random_bool(1 - lambda)";
/// Version of the per-run stream derivation.
pub const STREAM_DERIVATION: &str = "v1: stream = (cell_index << 32) | run_index; single runs use stream 0";

pub const DEFAULT_HORIZON: u64 = 10_000;
pub const DEFAULT_EPSILON: f64 = 1e-6;
/// Norms below this have no recorded logarithm.
pub const LOG_FLOOR: f64 = 1e-300;
/// Fewest points a decay fit accepts.
pub const MIN_FIT_POINTS: usize = 10;

/// Generator for one run.
pub fn run_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

pub fn sweep_stream(cell: usize, run: usize) -> u64 {
    ((cell as u64) << 32) | run as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialCondition {
    StandardNormal,
    Explicit {
        positions: Vec<Vec3<f64>>,
        velocities: Vec<Vec3<f64>>,
    },
}

/// One run or one sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub k: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub h: f64,
    pub horizon: u64,
    pub master_seed: u64,
    pub initial: InitialCondition,
    pub record_stride: u64,
    /// Flocking threshold on the relative-velocity norm.
    pub epsilon: f64,
    /// End the run at the first step whose norm is below `epsilon`.
    pub stop_at_flocking: bool,
}

impl ExperimentConfig {
    /// Defaults: `h = 1/k`, horizon 10^4, seed 0, stride 1, epsilon 1e-6, standard normal start.
    pub fn new(k: usize, alpha: f64, lambda: f64) -> Self {
        Self {
            k,
            alpha,
            lambda,
            h: 1.0 / k.max(1) as f64,
            horizon: DEFAULT_HORIZON,
            master_seed: 0,
            initial: InitialCondition::StandardNormal,
            record_stride: 1,
            epsilon: DEFAULT_EPSILON,
            stop_at_flocking: true,
        }
    }

    pub fn params(&self) -> Result<ModelParams<f64>> {
        ModelParams::new(self.k, self.alpha, self.lambda, self.h)
    }

    pub fn validate(&self) -> Result<()> {
        self.params()?;
        if self.horizon < 1 {
            return Err(FlockError::InvalidParameter {
                field: "horizon",
                reason: "must be at least 1".into(),
            });
        }
        if self.record_stride < 1 {
            return Err(FlockError::InvalidParameter {
                field: "record_stride",
                reason: "must be at least 1".into(),
            });
        }
        if !(self.epsilon >= 0.0) {
            return Err(FlockError::InvalidParameter {
                field: "epsilon",
                reason: format!("must be nonnegative, got {}", self.epsilon),
            });
        }
        if let InitialCondition::Explicit {
            positions,
            velocities,
        } = &self.initial
        {
            for (field, len) in [("initial.positions", positions.len()), ("initial.velocities", velocities.len())] {
                if len != self.k {
                    return Err(FlockError::InvalidParameter {
                        field,
                        reason: format!("expected {} agents, got {len}", self.k),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Initial state: explicit values, or 6k independent standard normal draws
/// (positions agent by agent, then velocities).
pub fn sample_initial_state<R: Rng + ?Sized>(config: &ExperimentConfig, rng: &mut R) -> Result<FlockState<f64>> {
    match &config.initial {
        InitialCondition::StandardNormal => {
            let mut draw = |n: usize| -> Vec<Vec3<f64>> {
                (0..n)
                    .map(|_| {
                        [
                            rng.sample(StandardNormal),
                            rng.sample(StandardNormal),
                            rng.sample(StandardNormal),
                        ]
                    })
                    .collect()
            };
            let positions = draw(config.k);
            let velocities = draw(config.k);
            FlockState::new(positions, velocities)
        }
        InitialCondition::Explicit {
            positions,
            velocities,
        } => {
            if positions.len() != config.k || velocities.len() != config.k {
                return Err(FlockError::DimensionMismatch {
                    expected: config.k,
                    got: if positions.len() != config.k {
                        positions.len()
                    } else {
                        velocities.len()
                    },
                });
            }
            FlockState::new(positions.clone(), velocities.clone())
        }
    }
}

/// One recorded time step.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub t: u64,
    pub v_norm: f64,
    pub log_v_norm: Option<f64>,
    pub fiedler_colored: f64,
    pub fiedler_plain: f64,
    pub connected: bool,
    pub mu: Option<f64>,
    pub s_partial: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub rows: Vec<TrajectoryRow>,
    pub h: f64,
    pub record_stride: u64,
    pub initial: FlockState<f64>,
    pub final_state: FlockState<f64>,
    pub stream: u64,
}

impl TrajectoryRecord {
    pub fn v_norms(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.v_norm).collect()
    }

    pub fn phis(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.fiedler_colored).collect()
    }

    fn require_unit_stride(&self) -> Result<()> {
        if self.record_stride != 1 {
            return Err(FlockError::InvalidParameter {
                field: "record_stride",
                reason: "per-step checks need record_stride = 1".into(),
            });
        }
        Ok(())
    }

    /// Velocity-series bound over every recorded prefix.
    pub fn velocity_series_check(&self) -> Result<BoundCheck<f64>> {
        self.require_unit_stride()?;
        analysis::velocity_series_bound_check(&self.v_norms(), &self.phis(), self.h)
    }

    /// Per-step contraction of the relative-velocity norm.
    pub fn contraction_check(&self) -> Result<BoundCheck<f64>> {
        self.require_unit_stride()?;
        Ok(analysis::contraction_check(&self.v_norms(), &self.phis(), self.h))
    }

    /// Upper bound `h sum_{t >= from} |v[t]|` on `|x[t2] - x[t1]|` for all recorded `from <= t1 <= t2`.
    pub fn position_tail_increment(&self, from: u64) -> Result<f64> {
        self.require_unit_stride()?;
        Ok(self.h * self.rows.iter().filter(|r| r.t >= from).map(|r| r.v_norm).sum::<f64>())
    }
}

/// Everything known about one time step, handed to trajectory observers.
pub struct StepObservation<'a> {
    pub t: u64,
    pub state: &'a FlockState<f64>,
    pub mask: &'a FailureMask,
    pub weights: &'a WeightMatrix<f64>,
    pub relative: &'a RelativeState<f64>,
    pub v_norm: f64,
    pub x_norm: f64,
    pub fiedler_colored: f64,
    pub fiedler_plain: f64,
    pub connected: bool,
    pub mu: Option<f64>,
    pub s_partial: f64,
}

pub fn run_trajectory(config: &ExperimentConfig) -> Result<TrajectoryRecord> {
    run_trajectory_on_stream(config, 0)
}

pub fn run_trajectory_on_stream(config: &ExperimentConfig, stream: u64) -> Result<TrajectoryRecord> {
    run_trajectory_observed(config, stream, |_| Ok(()))
}

/// Runs one trajectory, calling `observe` at every step (recorded or not).
///
/// At each step `t` the link outcomes for the move `t -> t+1` are drawn first,
/// so the recorded Fiedler numbers at `t` belong to the weights that produce `t+1`.
pub fn run_trajectory_observed<F>(config: &ExperimentConfig, stream: u64, mut observe: F) -> Result<TrajectoryRecord>
where
    F: FnMut(&StepObservation<'_>) -> Result<()>,
{
    config.validate()?;
    let params = config.params()?;
    let tol = f64::EIGEN_TOL;
    let mut rng = run_rng(config.master_seed, stream);
    let initial = sample_initial_state(config, &mut rng)?;
    let v_bar_0 = analysis::mean_position_velocity(&initial).1;

    let mut rows = Vec::new();
    let mut series = SeriesState::<f64>::start();
    let mut state = initial.clone();
    loop {
        let t = state.t;
        let mask = sample_failure_mask(&params, &mut rng);
        let weights = weight_matrix(&state, &mask, &params)?;
        let connected = is_connected(&mask);
        // a disconnected graph has Fiedler number 0 in both forms
        let (fiedler_colored, fiedler_plain) = if connected {
            (fiedler(&weights, tol)?, fiedler_noncolored::<f64>(&mask, tol)?)
        } else {
            (0.0, 0.0)
        };
        let relative = to_relative(&state, &v_bar_0);
        let v_norm = flock_norm(&relative.rel_velocities);
        let obs = StepObservation {
            t,
            state: &state,
            mask: &mask,
            weights: &weights,
            relative: &relative,
            v_norm,
            x_norm: flock_norm(&relative.rel_positions),
            fiedler_colored,
            fiedler_plain,
            connected,
            mu: min_positive_weight(&weights),
            s_partial: series.partial_sum,
        };
        observe(&obs)?;
        if t % config.record_stride == 0 {
            rows.push(TrajectoryRow {
                t,
                v_norm,
                log_v_norm: (v_norm >= LOG_FLOOR).then(|| v_norm.ln()),
                fiedler_colored,
                fiedler_plain,
                connected,
                mu: obs.mu,
                s_partial: obs.s_partial,
            });
        }
        let flocked = config.stop_at_flocking && v_norm < config.epsilon;
        if flocked || t >= config.horizon {
            break;
        }
        series.advance(fiedler_colored, params.h)?;
        state = step_weighted(&state, &weights, params.h)?;
        if !state.is_finite() {
            return Err(FlockError::Overflow { step: state.t });
        }
    }
    Ok(TrajectoryRecord {
        rows,
        h: params.h,
        record_stride: config.record_stride,
        initial,
        final_state: state,
        stream,
    })
}

/// First recorded step whose relative-velocity norm is below `epsilon`.
pub fn detect_flocking(record: &TrajectoryRecord, epsilon: f64) -> Option<u64> {
    record.rows.iter().find(|r| r.v_norm < epsilon).map(|r| r.t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    /// Change of `ln |v|` per step.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Least-squares line through `(t, ln |v[t]|)`. A set with no spread in `ln |v|` fits perfectly.
pub fn fit_log_linear(points: &[(f64, f64)]) -> Result<DecayFit> {
    let n = points.len();
    if n < MIN_FIT_POINTS {
        return Err(FlockError::InsufficientPoints {
            needed: MIN_FIT_POINTS,
            found: n,
        });
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(DecayFit {
        slope,
        intercept,
        r_squared,
        points: n,
    })
}

/// Decay fit over the recorded steps with `t` in `window`.
pub fn fit_decay_rate(record: &TrajectoryRecord, window: Range<u64>) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = record
        .rows
        .iter()
        .filter(|r| window.contains(&r.t))
        .filter_map(|r| r.log_v_norm.map(|l| (r.t as f64, l)))
        .collect();
    fit_log_linear(&pts)
}

/// The last four fifths of the recorded steps, skipping the initial transient.
pub fn post_transient_window(record: &TrajectoryRecord) -> Range<u64> {
    let last = record.rows.last().map_or(0, |r| r.t);
    (last / 5)..(last + 1)
}

/// Aggregate over the runs of one `(k, alpha, lambda)` cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub k: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub n_runs: usize,
    pub flocking_fraction: f64,
    pub median_flocking_time: Option<f64>,
    pub mean_slope: Option<f64>,
    pub slope_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub master_seed: u64,
    pub cells: Vec<SweepCell>,
}

#[derive(Debug, Clone, Copy)]
struct RunOutcome {
    flocked_at: Option<u64>,
    slope: Option<f64>,
}

fn run_outcome(config: &ExperimentConfig, stream: u64) -> Result<RunOutcome> {
    let record = run_trajectory_on_stream(config, stream)?;
    let slope = fit_decay_rate(&record, post_transient_window(&record))
        .ok()
        .map(|f| f.slope);
    Ok(RunOutcome {
        flocked_at: detect_flocking(&record, config.epsilon),
        slope,
    })
}

fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    Some(if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    })
}

/// Runs every cell `n_runs` times in parallel. Run `r` of cell `c` uses
/// `master_seed` (overriding the cells' own seeds) on stream [`sweep_stream`]`(c, r)`,
/// so the result does not depend on scheduling.
pub fn monte_carlo_sweep(grid: &[ExperimentConfig], n_runs: usize, master_seed: u64) -> Result<SweepSummary> {
    if n_runs == 0 {
        return Err(FlockError::InvalidParameter {
            field: "runs",
            reason: "need at least one run per cell".into(),
        });
    }
    let configs: Vec<ExperimentConfig> = grid
        .iter()
        .map(|c| ExperimentConfig {
            master_seed,
            ..c.clone()
        })
        .collect();
    let outcomes: Vec<RunOutcome> = (0..configs.len() * n_runs)
        .into_par_iter()
        .map(|idx| {
            let (cell, run) = (idx / n_runs, idx % n_runs);
            run_outcome(&configs[cell], sweep_stream(cell, run)).map_err(|e| FlockError::RunFailed {
                cell,
                run,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;

    let cells = configs
        .iter()
        .zip(outcomes.chunks(n_runs))
        .map(|(cfg, runs)| {
            let times: Vec<f64> = runs.iter().filter_map(|r| r.flocked_at).map(|t| t as f64).collect();
            let slopes: Vec<f64> = runs.iter().filter_map(|r| r.slope).collect();
            let (mean_slope, slope_std) = if slopes.is_empty() {
                (None, None)
            } else {
                let m = slopes.iter().sum::<f64>() / slopes.len() as f64;
                let sd = if slopes.len() > 1 {
                    (slopes.iter().map(|s| (s - m).powi(2)).sum::<f64>() / (slopes.len() - 1) as f64).sqrt()
                } else {
                    0.0
                };
                (Some(m), Some(sd))
            };
            SweepCell {
                k: cfg.k,
                alpha: cfg.alpha,
                lambda: cfg.lambda,
                n_runs,
                flocking_fraction: times.len() as f64 / n_runs as f64,
                median_flocking_time: median(times),
                mean_slope,
                slope_std,
            }
        })
        .collect();
    Ok(SweepSummary { master_seed, cells })
}
