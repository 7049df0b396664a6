//! Index-based recombining lattice.
//!
//! With `u_i·d_i = 1` and state-independent branch probabilities, a node is
//! determined by its per-asset up-counts, so level `l` holds `(l+1)^n`
//! states instead of `2^(n·l)`.

use alloc::vec;
use alloc::vec::Vec;

use super::calibrate::LatticeStepModel;
use super::tes_terminal_payoff;
use crate::error::{Error, Result};

/// Root value plus the values at the root's children, in branch order.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeValues {
    pub root_value: f64,
    /// `(generation, value)` for each first-level branch, or the root alone
    /// when `n_steps == 0`.
    pub first_level: Vec<(Vec<f64>, f64)>,
}

/// Values the pooled shortfall on a recombining lattice of `n_steps` steps.
pub fn recombining_values(
    root_generation: &[f64],
    model: &LatticeStepModel,
    n_steps: usize,
    demands: &[f64],
) -> Result<LatticeValues> {
    let n = model.n_assets();
    if root_generation.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: root_generation.len(),
        });
    }
    if demands.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: demands.len(),
        });
    }
    if let Some(&g) = root_generation.iter().find(|&&g| !(g > 0.0)) {
        return Err(Error::NonPositiveGeneration(g));
    }
    if n_steps == 0 {
        let v = tes_terminal_payoff(root_generation, demands)?;
        return Ok(LatticeValues {
            root_value: v,
            first_level: vec![(root_generation.to_vec(), v)],
        });
    }

    let branches = model.branches();
    // per-branch up indicator, packed as an index offset at each level width
    let up_pattern: Vec<Vec<usize>> = (0..branches)
        .map(|k| (0..n).map(|i| model.moves_up(k, i) as usize).collect())
        .collect();

    let generation_at = |counts: &[usize], level: usize| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let net = 2 * counts[i] as i64 - level as i64;
                root_generation[i] * libm::exp(model.log_steps()[i] * net as f64)
            })
            .collect()
    };

    // terminal level
    let width = n_steps + 1;
    let size = width.pow(n as u32);
    let mut counts = vec![0usize; n];
    let mut values = vec![0.0; size];
    for (idx, v) in values.iter_mut().enumerate() {
        unflatten(idx, width, &mut counts);
        *v = tes_terminal_payoff(&generation_at(&counts, n_steps), demands)?;
    }

    for level in (1..n_steps).rev() {
        values = step_back(&values, level, n, &up_pattern, model.branch_probs(), &mut counts);
    }

    // level 1 → root, keeping the level-1 values
    let first_level: Vec<(Vec<f64>, f64)> = (0..branches)
        .map(|k| {
            let idx = flatten(&up_pattern[k], 2);
            (generation_at(&up_pattern[k], 1), values[idx])
        })
        .collect();
    let root_value = first_level
        .iter()
        .zip(model.branch_probs())
        .map(|((_, v), p)| p * v)
        .sum();
    Ok(LatticeValues {
        root_value,
        first_level,
    })
}

/// From values on level `level + 1` (width `level + 2`) to level `level`.
fn step_back(
    next: &[f64],
    level: usize,
    n: usize,
    up_pattern: &[Vec<usize>],
    probs: &[f64],
    counts: &mut [usize],
) -> Vec<f64> {
    let width = level + 1;
    let next_width = level + 2;
    let size = width.pow(n as u32);
    let mut out = vec![0.0; size];
    let mut child = vec![0usize; n];
    for (idx, v) in out.iter_mut().enumerate() {
        unflatten(idx, width, counts);
        let mut acc = 0.0;
        for (k, pattern) in up_pattern.iter().enumerate() {
            for i in 0..n {
                child[i] = counts[i] + pattern[i];
            }
            acc += probs[k] * next[flatten(&child, next_width)];
        }
        *v = acc;
    }
    out
}

#[inline]
fn flatten(counts: &[usize], width: usize) -> usize {
    counts.iter().rev().fold(0, |acc, &c| acc * width + c)
}

#[inline]
fn unflatten(mut idx: usize, width: usize, counts: &mut [usize]) {
    for c in counts.iter_mut() {
        *c = idx % width;
        idx /= width;
    }
}
