//! Rolling-horizon comparison of conventional and transactive operation.
//!
//! Physical-measure generation paths are simulated on the rebalancing grid
//! and bucketed by which microgrids end in surplus. At every rebalance time
//! each path gets a fresh closed-form (CES) allocation and a fresh lattice
//! (TES) allocation rooted at its current generation; per-step statistics
//! are then aggregated over the bucket.

use alloc::string::ToString;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::ces::ces_allocations;
use crate::error::{Error, Result};
use crate::grid::GridEnsemble;
use crate::lattice::{
    calibrate_step_model, tes_allocation, tes_terminal_allocation, tes_terminal_payoff, LatticeEngine,
};
use crate::process::{Measure, PathSimulator};
use crate::rng::{derive_seed, TAG_BOOTSTRAP, TAG_PATHS};
use crate::stats::{bootstrap_ci, mean, std_dev, BootstrapCi};

/// Terminal comparison of one microgrid's generation against its demand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Comparator {
    /// `P(t_f) ≥ D`: surplus (ties count as surplus).
    AtLeast,
    /// `P(t_f) < D`: deficit.
    Below,
}

/// Per-microgrid terminal comparators, e.g. `ge,lt`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CaseLabel(pub Vec<Comparator>);

impl CaseLabel {
    pub fn comparators(&self) -> &[Comparator] {
        &self.0
    }
}

impl fmt::Display for CaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            f.write_str(match c {
                Comparator::AtLeast => "ge",
                Comparator::Below => "lt",
            })?;
        }
        Ok(())
    }
}

impl FromStr for CaseLabel {
    type Err = Error;

    /// Accepts `ge`/`>=`/`≥` and `lt`/`<`, comma separated.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Result<Vec<Comparator>> = s
            .split(',')
            .map(|p| match p.trim() {
                "ge" | ">=" | "≥" => Ok(Comparator::AtLeast),
                "lt" | "<" => Ok(Comparator::Below),
                other => Err(Error::InvalidArgument(alloc::format!(
                    "unknown comparator '{other}' (expected ge or lt)"
                ))),
            })
            .collect();
        let parts = parts?;
        if parts.is_empty() {
            return Err(Error::InvalidArgument("empty case label".into()));
        }
        Ok(CaseLabel(parts))
    }
}

/// Case label of a terminal generation vector.
pub fn classify_terminal(terminal: &[f64], demands: &[f64]) -> Result<CaseLabel> {
    if terminal.len() != demands.len() {
        return Err(Error::LengthMismatch {
            expected: demands.len(),
            found: terminal.len(),
        });
    }
    Ok(CaseLabel(
        terminal
            .iter()
            .zip(demands)
            .map(|(p, d)| {
                if p >= d {
                    Comparator::AtLeast
                } else {
                    Comparator::Below
                }
            })
            .collect(),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub grid: GridEnsemble,
    /// Generation at `t = 0`, kW.
    pub initial: Vec<f64>,
    /// Horizon, hours.
    pub t_f: f64,
    /// Number of rebalancing intervals `N`; rebalancing happens at
    /// `t_n = n·t_f/N` for `n = 0..=N`.
    pub rebalance_steps: usize,
    /// Paths to collect in the bucket.
    pub n_paths: usize,
    pub seed: u64,
    /// Only paths with this terminal label are kept; `None` keeps all.
    pub case_filter: Option<CaseLabel>,
    pub bootstrap_resamples: usize,
    pub ci_level: f64,
    /// Cap on simulated candidates when a filter is set.
    pub max_attempts: usize,
    pub engine: LatticeEngine,
}

impl ScenarioConfig {
    /// Two-microgrid reference setting: hourly rebalancing over five hours,
    /// generation starting at the demand levels.
    pub fn reference(case_filter: Option<CaseLabel>, n_paths: usize, seed: u64) -> Self {
        let grid = GridEnsemble::reference_pair();
        Self {
            initial: grid.demands(),
            grid,
            t_f: 5.0,
            rebalance_steps: 5,
            n_paths,
            seed,
            case_filter,
            bootstrap_resamples: 1000,
            ci_level: 0.95,
            max_attempts: n_paths.saturating_mul(50).max(1000),
            engine: LatticeEngine::default(),
        }
    }

    pub fn dt(&self) -> f64 {
        self.t_f / self.rebalance_steps as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.rebalance_steps == 0 {
            return Err(Error::InvalidArgument("rebalance_steps must be at least 1".into()));
        }
        if self.n_paths == 0 {
            return Err(Error::InvalidArgument("n_paths must be at least 1".into()));
        }
        if !(self.t_f > 0.0) || !self.t_f.is_finite() {
            return Err(Error::InvalidHorizon(self.t_f));
        }
        if self.max_attempts < self.n_paths {
            return Err(Error::InvalidArgument(
                "max_attempts must be at least n_paths".into(),
            ));
        }
        if let Some(f) = &self.case_filter {
            if f.0.len() != self.grid.len() {
                return Err(Error::LengthMismatch {
                    expected: self.grid.len(),
                    found: f.0.len(),
                });
            }
        }
        self.grid.check_state(&self.initial)
    }
}

/// Statistics at one rebalance time.
#[derive(Debug, Clone, PartialEq)]
pub struct StepStats {
    pub t: f64,
    /// TES battery units `b(t)`.
    pub b_tes: BootstrapCi,
    /// CES battery units `Σ b̂_i(t)`.
    pub b_ces: BootstrapCi,
    /// TES portfolio power `V(t)`, kW.
    pub v_tes: BootstrapCi,
    /// CES portfolio power `Σ V̂_i(t)`, kW.
    pub v_ces: BootstrapCi,
    /// Per-path `100·(1 − b/b̂)`, with 0 where `b̂ = 0`.
    pub savings_pct: BootstrapCi,
    pub pg_mean: Vec<BootstrapCi>,
    pub pg_std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseResult {
    pub case_filter: Option<CaseLabel>,
    pub steps: Vec<StepStats>,
    /// Terminal labels of every simulated candidate, sorted by label.
    pub case_counts: Vec<(CaseLabel, usize)>,
    pub n_matched: usize,
    pub n_attempted: usize,
    /// Unweighted mean of the per-step mean savings.
    pub overall_savings_pct: f64,
}

/// Per-path trajectories of the compared quantities, `n_steps + 1` entries each.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub generation: Vec<Vec<f64>>,
    pub b_tes: Vec<f64>,
    pub b_ces: Vec<f64>,
    pub v_tes: Vec<f64>,
    pub v_ces: Vec<f64>,
}

/// Percentage saving of one TES battery count against the CES count.
pub fn savings_pct(b_tes: f64, b_ces: f64) -> f64 {
    if b_ces > 0.0 {
        100.0 * (1.0 - b_tes / b_ces)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SavingsSeries {
    pub pointwise: Vec<f64>,
    /// Unweighted time average of `pointwise`.
    pub overall: f64,
}

/// Pointwise savings of aligned battery series and their time average.
pub fn battery_savings(tes_b: &[f64], ces_b: &[f64]) -> Result<SavingsSeries> {
    if tes_b.len() != ces_b.len() {
        return Err(Error::LengthMismatch {
            expected: ces_b.len(),
            found: tes_b.len(),
        });
    }
    let pointwise: Vec<f64> = tes_b.iter().zip(ces_b).map(|(&b, &c)| savings_pct(b, c)).collect();
    let overall = mean(&pointwise)?;
    Ok(SavingsSeries { pointwise, overall })
}

/// Batteries and savings at `t = 0`, which depend on the initial state only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialSavings {
    pub b_tes: f64,
    pub b_ces: f64,
    pub v_tes: f64,
    pub v_ces: f64,
    pub savings_pct: f64,
}

pub fn initial_savings(config: &ScenarioConfig) -> Result<InitialSavings> {
    config.validate()?;
    let model = calibrate_step_model(&config.grid, config.dt())?;
    let n = config.grid.len();
    let tes = tes_allocation(
        &config.grid,
        &model,
        &config.initial,
        config.rebalance_steps,
        &alloc::vec![0.0; n],
        config.engine,
    )?;
    let ces = ces_allocations(
        &config.initial,
        config.grid.microgrids(),
        0.0,
        config.t_f,
        config.grid.battery_unit(),
    )?;
    let b_ces = ces.iter().map(|c| c.b_hat).sum();
    Ok(InitialSavings {
        b_tes: tes.allocation.b,
        b_ces,
        v_tes: tes.value,
        v_ces: ces.iter().map(|c| c.value_hat).sum(),
        savings_pct: savings_pct(tes.allocation.b, b_ces),
    })
}

/// Matched records, label counts of every candidate, and the number of candidates.
pub type SimulatedRecords = (Vec<PathRecord>, Vec<(CaseLabel, usize)>, usize);

/// Simulates, filters and evaluates paths.
pub fn simulate_records(config: &ScenarioConfig) -> Result<SimulatedRecords> {
    config.validate()?;
    let grid = &config.grid;
    let n = grid.len();
    let steps = config.rebalance_steps;
    let dt = config.dt();
    let model = calibrate_step_model(grid, dt)?;
    let sim = PathSimulator::new(
        &grid.params(),
        grid.correlation(),
        &config.initial,
        config.t_f,
        steps,
        derive_seed(config.seed, TAG_PATHS, 0),
        Measure::Physical,
    )?;
    let demands = grid.demands();
    let p_b = grid.battery_unit();
    let limit = if config.case_filter.is_some() {
        config.max_attempts
    } else {
        config.n_paths
    };

    let mut counts: Vec<(CaseLabel, usize)> = Vec::new();
    let mut records = Vec::with_capacity(config.n_paths);
    let mut buf = alloc::vec![0.0; (steps + 1) * n];
    let mut attempts = 0usize;
    while records.len() < config.n_paths && attempts < limit {
        sim.fill_path(attempts as u64, &mut buf);
        attempts += 1;
        let label = classify_terminal(&buf[steps * n..], &demands)?;
        match counts.binary_search_by(|(l, _)| l.cmp(&label)) {
            Ok(i) => counts[i].1 += 1,
            Err(i) => counts.insert(i, (label.clone(), 1)),
        }
        if config.case_filter.as_ref().is_some_and(|f| *f != label) {
            continue;
        }

        let mut rec = PathRecord {
            generation: Vec::with_capacity(steps + 1),
            b_tes: Vec::with_capacity(steps + 1),
            b_ces: Vec::with_capacity(steps + 1),
            v_tes: Vec::with_capacity(steps + 1),
            v_ces: Vec::with_capacity(steps + 1),
        };
        let mut prev_a = alloc::vec![0.0; n];
        for step in 0..=steps {
            let state = &buf[step * n..(step + 1) * n];
            let t = if step == steps { config.t_f } else { step as f64 * dt };
            let ces = ces_allocations(state, grid.microgrids(), t, config.t_f, p_b)?;
            // at the horizon the battery follows the terminal condition
            // rather than the carried-over weights
            let (alloc, value) = if step == steps {
                (
                    tes_terminal_allocation(state, &demands, p_b)?,
                    tes_terminal_payoff(state, &demands)?,
                )
            } else {
                let tes = tes_allocation(grid, &model, state, steps - step, &prev_a, config.engine)?;
                (tes.allocation, tes.value)
            };
            rec.generation.push(state.to_vec());
            rec.b_ces.push(ces.iter().map(|c| c.b_hat).sum());
            rec.v_ces.push(ces.iter().map(|c| c.value_hat).sum());
            rec.b_tes.push(alloc.b);
            rec.v_tes.push(value);
            prev_a = alloc.a;
        }
        records.push(rec);
    }

    if records.is_empty() {
        return Err(Error::InsufficientPaths {
            filter: config
                .case_filter
                .as_ref()
                .map_or_else(|| "all".to_string(), |f| f.to_string()),
            attempts,
        });
    }
    Ok((records, counts, attempts))
}

/// Runs the full case study and aggregates per-step statistics.
pub fn run_case_study(config: &ScenarioConfig) -> Result<CaseResult> {
    let (records, case_counts, n_attempted) = simulate_records(config)?;
    let steps = aggregate(config, &records)?;
    let per_step: Vec<f64> = steps.iter().map(|s| s.savings_pct.mean).collect();
    Ok(CaseResult {
        case_filter: config.case_filter.clone(),
        overall_savings_pct: mean(&per_step)?,
        steps,
        case_counts,
        n_matched: records.len(),
        n_attempted,
    })
}

fn aggregate(config: &ScenarioConfig, records: &[PathRecord]) -> Result<Vec<StepStats>> {
    let n = config.grid.len();
    let dt = config.dt();
    let mut ci_index = 0u64;
    let mut ci = |xs: &[f64]| -> Result<BootstrapCi> {
        ci_index += 1;
        bootstrap_ci(
            xs,
            config.bootstrap_resamples,
            config.ci_level,
            derive_seed(config.seed, TAG_BOOTSTRAP, ci_index),
        )
    };
    let column = |f: &dyn Fn(&PathRecord) -> f64| -> Vec<f64> { records.iter().map(f).collect() };

    (0..=config.rebalance_steps)
        .map(|step| {
            let savings = column(&|r| savings_pct(r.b_tes[step], r.b_ces[step]));
            let mut pg_mean = Vec::with_capacity(n);
            let mut pg_std = Vec::with_capacity(n);
            for i in 0..n {
                let g = column(&|r| r.generation[step][i]);
                pg_mean.push(ci(&g)?);
                pg_std.push(std_dev(&g)?);
            }
            Ok(StepStats {
                t: if step == config.rebalance_steps {
                    config.t_f
                } else {
                    step as f64 * dt
                },
                b_tes: ci(&column(&|r| r.b_tes[step]))?,
                b_ces: ci(&column(&|r| r.b_ces[step]))?,
                v_tes: ci(&column(&|r| r.v_tes[step]))?,
                v_ces: ci(&column(&|r| r.v_ces[step]))?,
                savings_pct: ci(&savings)?,
                pg_mean,
                pg_std,
            })
        })
        .collect()
}
