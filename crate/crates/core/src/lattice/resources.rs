use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::least_squares_min_norm;

/// Renewable-unit weights, battery units, and how well they replicate the
/// next-step portfolio values.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub a: Vec<f64>,
    pub b: f64,
    /// ‖A·r − v‖ over the child states, kW.
    pub residual: f64,
    /// Rank of the replication design matrix (`n + 1` when full).
    pub rank: usize,
    /// Set when the design matrix has rank `< n + 1`; the minimum-norm
    /// solution is still returned.
    pub rank_deficient: bool,
}

/// Generation and portfolio value at one lattice node.
#[derive(Debug, Clone, Copy)]
pub struct NodeState<'a> {
    pub generation: &'a [f64],
    pub value: f64,
}

/// Resource allocation at the current node.
///
/// With several child states, solves `[P_G(child) | P_b]·[a; b] = V(child)`
/// in the minimum-norm least-squares sense. With a single state (the
/// horizon has been reached) the renewable weights carry over from
/// `prev_a` and the batteries absorb the rest: `b = (V − a·P_G)/P_b`.
pub fn compute_resources(
    root_value: f64,
    first_level: &[NodeState<'_>],
    prev_a: &[f64],
    p_b: f64,
) -> Result<Allocation> {
    if !(p_b > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "battery unit power must be positive, got {p_b}"
        )));
    }
    let Some(first) = first_level.first() else {
        return Err(Error::MalformedTree("no first-level nodes".into()));
    };
    let n = first.generation.len();
    if let Some(bad) = first_level.iter().find(|s| s.generation.len() != n) {
        return Err(Error::LengthMismatch {
            expected: n,
            found: bad.generation.len(),
        });
    }

    if first_level.len() == 1 {
        if prev_a.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: prev_a.len(),
            });
        }
        let held: f64 = prev_a
            .iter()
            .zip(first.generation)
            .map(|(a, g)| a * g)
            .sum();
        return Ok(Allocation {
            a: prev_a.to_vec(),
            b: (root_value - held) / p_b,
            residual: 0.0,
            rank: n + 1,
            rank_deficient: false,
        });
    }

    let cols = n + 1;
    let rows = first_level.len();
    let mut design = Vec::with_capacity(rows * cols);
    let mut target = Vec::with_capacity(rows);
    for s in first_level {
        design.extend_from_slice(s.generation);
        design.push(p_b);
        target.push(s.value);
    }
    let ls = least_squares_min_norm(rows, cols, &design, &target)?;
    let mut r = ls.solution;
    let b = r.pop().expect("n + 1 unknowns");
    Ok(Allocation {
        a: r,
        b,
        residual: ls.residual,
        rank: ls.rank,
        rank_deficient: ls.rank < cols,
    })
}
