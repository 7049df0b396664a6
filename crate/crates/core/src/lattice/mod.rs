//! Transactive (pooled) operation: one portfolio covers the netted shortfall
//! of every microgrid. The value is the transformed-measure expectation of
//! the pooled terminal shortfall, computed on a moment-matched multi-asset
//! binomial lattice; the allocation replicates the next-step values.

mod calibrate;
mod recombining;
mod resources;
mod tree;

pub use calibrate::{calibrate_step_model, moment_residuals, LatticeStepModel};
pub use recombining::{recombining_values, LatticeValues};
pub use resources::{compute_resources, Allocation, NodeState};
pub use tree::{backpropagate, forward_propagate, Backprop, ScenarioTree, TreeNode, DEFAULT_MAX_NODES};

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::GridEnsemble;
use crate::process::{Measure, PathSimulator};
use crate::stats::NeumaierSum;

/// Pooled shortfall `max(Σ(D_i − P_i), 0)`.
pub fn tes_terminal_payoff(generation: &[f64], demands: &[f64]) -> Result<f64> {
    if generation.len() != demands.len() {
        return Err(Error::LengthMismatch {
            expected: demands.len(),
            found: generation.len(),
        });
    }
    let net: f64 = demands.iter().zip(generation).map(|(d, p)| d - p).sum();
    Ok(net.max(0.0))
}

/// Which lattice evaluates the portfolio.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatticeEngine {
    /// Explicit tree, capped at `max_nodes` leaves.
    Tree { max_nodes: usize },
    /// Recombining index lattice.
    Recombining,
}

impl Default for LatticeEngine {
    fn default() -> Self {
        LatticeEngine::Tree {
            max_nodes: DEFAULT_MAX_NODES,
        }
    }
}

/// Allocation together with the portfolio value it was derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct TesAllocation {
    pub allocation: Allocation,
    pub value: f64,
}

/// Allocation once the horizon is reached. A pooled surplus needs nothing;
/// a pooled deficit is covered by `ΣD/P_b` battery units against `−1` unit
/// of every generator, so the portfolio equals the net deficit.
pub fn tes_terminal_allocation(generation: &[f64], demands: &[f64], p_b: f64) -> Result<Allocation> {
    let v = tes_terminal_payoff(generation, demands)?;
    let n = demands.len();
    let (a, b) = if v > 0.0 {
        (alloc::vec![-1.0; n], demands.iter().sum::<f64>() / p_b)
    } else {
        (alloc::vec![0.0; n], 0.0)
    };
    Ok(Allocation {
        a,
        b,
        residual: 0.0,
        rank: n + 1,
        rank_deficient: false,
    })
}

/// Full allocation step: forward propagation over `remaining_steps`,
/// backpropagation, then resource extraction. With no steps remaining the
/// root is the only node and the single-node rule of [`compute_resources`]
/// applies.
pub fn tes_allocation(
    grid: &GridEnsemble,
    model: &LatticeStepModel,
    generation: &[f64],
    remaining_steps: usize,
    prev_a: &[f64],
    engine: LatticeEngine,
) -> Result<TesAllocation> {
    grid.check_state(generation)?;
    if model.n_assets() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            found: model.n_assets(),
        });
    }
    let demands = grid.demands();
    let p_b = grid.battery_unit();
    match engine {
        LatticeEngine::Tree { max_nodes } => {
            let mut tree = forward_propagate(generation, model, remaining_steps, max_nodes)?;
            let bp = backpropagate(&mut tree, &demands)?;
            let states: Vec<NodeState> = bp
                .first_level
                .iter()
                .map(|&i| {
                    let node = &tree.nodes()[i];
                    NodeState {
                        generation: &node.generation,
                        value: node.value,
                    }
                })
                .collect();
            let allocation = compute_resources(bp.root_value, &states, prev_a, p_b)?;
            Ok(TesAllocation {
                allocation,
                value: bp.root_value,
            })
        }
        LatticeEngine::Recombining => {
            let lv = recombining_values(generation, model, remaining_steps, &demands)?;
            let states: Vec<NodeState> = lv
                .first_level
                .iter()
                .map(|(g, v)| NodeState {
                    generation: g,
                    value: *v,
                })
                .collect();
            let allocation = compute_resources(lv.root_value, &states, prev_a, p_b)?;
            Ok(TesAllocation {
                allocation,
                value: lv.root_value,
            })
        }
    }
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
}

/// Transformed-measure Monte Carlo value of the pooled shortfall, an
/// independent check on the lattice. Uses one exact step to the horizon.
pub fn tes_value_mc(
    grid: &GridEnsemble,
    generation: &[f64],
    t: f64,
    t_f: f64,
    n_paths: usize,
    seed: u64,
) -> Result<McEstimate> {
    grid.check_state(generation)?;
    if !(t >= 0.0) || !(t < t_f) {
        return Err(Error::TimeOutOfRange { t, t_f });
    }
    if n_paths < 2 {
        return Err(Error::InvalidArgument("need at least two paths".into()));
    }
    let sim = PathSimulator::new(
        &grid.params(),
        grid.correlation(),
        generation,
        t_f - t,
        1,
        seed,
        Measure::Transformed,
    )?;
    let demands = grid.demands();
    let n = grid.len();
    let mut buf = alloc::vec![0.0; 2 * n];
    let mut sum = NeumaierSum::default();
    let mut sum_sq = NeumaierSum::default();
    for k in 0..n_paths {
        sim.fill_path(k as u64, &mut buf);
        let x = tes_terminal_payoff(&buf[n..], &demands)?;
        sum.add(x);
        sum_sq.add(x * x);
    }
    let m = n_paths as f64;
    let mean = sum.total() / m;
    let var = ((sum_sq.total() - m * mean * mean) / (m - 1.0)).max(0.0);
    Ok(McEstimate {
        mean,
        std_error: libm::sqrt(var / m),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pooled_payoff_nets_surplus() {
        assert_eq!(tes_terminal_payoff(&[25.0, 30.0], &[20.0, 25.0]).unwrap(), 0.0);
        assert_eq!(tes_terminal_payoff(&[25.0, 18.0], &[20.0, 25.0]).unwrap(), 2.0);
        assert_eq!(tes_terminal_payoff(&[15.0, 20.0], &[20.0, 25.0]).unwrap(), 10.0);
        assert!(matches!(
            tes_terminal_payoff(&[1.0], &[1.0, 2.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn engines_agree_on_allocation() {
        let grid = GridEnsemble::reference_pair();
        let m = calibrate_step_model(&grid, 1.0).unwrap();
        let a = tes_allocation(&grid, &m, &[20.0, 25.0], 5, &[0.0, 0.0], LatticeEngine::default())
            .unwrap();
        let b = tes_allocation(&grid, &m, &[20.0, 25.0], 5, &[0.0, 0.0], LatticeEngine::Recombining)
            .unwrap();
        assert_abs_diff_eq!(a.value, b.value, epsilon = 1e-9);
        assert_abs_diff_eq!(a.allocation.b, b.allocation.b, epsilon = 1e-9);
        for (x, y) in a.allocation.a.iter().zip(&b.allocation.a) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-9);
        }
    }

    #[test]
    fn terminal_rule_replicates_payoff() {
        let grid = GridEnsemble::reference_pair();
        let m = calibrate_step_model(&grid, 1.0).unwrap();
        let d = grid.demands();
        for g in [[22.0, 26.0], [22.0, 24.0], [18.0, 24.0]] {
            let a = tes_terminal_allocation(&g, &d, 1.0).unwrap();
            let held: f64 = a.a.iter().zip(&g).map(|(a, p)| a * p).sum::<f64>() + a.b;
            assert_abs_diff_eq!(held, tes_terminal_payoff(&g, &d).unwrap(), epsilon = 1e-12);
        }
        assert_eq!(tes_terminal_allocation(&[18.0, 24.0], &d, 1.0).unwrap().b, 45.0);
        assert_eq!(tes_terminal_allocation(&[22.0, 24.0], &d, 1.0).unwrap().b, 0.0);

        // zero remaining steps: weights carry over, batteries absorb the rest
        for engine in [LatticeEngine::default(), LatticeEngine::Recombining] {
            let t = tes_allocation(&grid, &m, &[22.0, 26.0], 0, &[-0.3, -0.1], engine).unwrap();
            assert_eq!(t.value, 0.0);
            assert_eq!(t.allocation.a, alloc::vec![-0.3, -0.1]);
            assert_abs_diff_eq!(t.allocation.b, 0.3 * 22.0 + 0.1 * 26.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn mc_near_horizon_is_payoff() {
        let grid = GridEnsemble::reference_pair();
        let est = tes_value_mc(&grid, &[18.0, 24.0], 5.0 - 1e-12, 5.0, 1000, 1).unwrap();
        assert_abs_diff_eq!(est.mean, 3.0, epsilon = 1e-4);
        assert!(est.std_error < 1e-4);
        assert!(tes_value_mc(&grid, &[18.0, 24.0], 5.0, 5.0, 1000, 1).is_err());
    }
}
