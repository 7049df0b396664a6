//! Explicit (non-recombining) scenario tree: the reference implementation of
//! forward and backward propagation.

use alloc::format;
use alloc::vec::Vec;

use super::calibrate::LatticeStepModel;
use super::tes_terminal_payoff;
use crate::error::{Error, Result};

/// Default cap on the number of leaves a tree may have.
pub const DEFAULT_MAX_NODES: usize = 10_000_000;

/// One lattice state.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    /// Generation vector `P_G` at this node, kW.
    pub generation: Vec<f64>,
    /// Portfolio value `V`, kW (set by backpropagation).
    pub value: f64,
    /// Probability of reaching this node from the root.
    pub path_prob: f64,
    /// Probability of the single branch from the parent.
    pub one_hop_prob: f64,
    /// Root is 0; child `k ∈ 1..=2^n` of a node with id `q` gets `2^n·q + k`.
    pub id: u64,
    pub parent: Option<usize>,
}

/// Complete `2^n`-ary tree stored level by level. The children of the node
/// at offset `j` within level `l` occupy offsets `j·2^n .. (j+1)·2^n` of
/// level `l + 1`.
#[derive(Debug, Clone)]
pub struct ScenarioTree {
    nodes: Vec<TreeNode>,
    level_starts: Vec<usize>,
    branches: usize,
}

impl ScenarioTree {
    pub fn depth(&self) -> usize {
        self.level_starts.len() - 1
    }

    pub fn branches(&self) -> usize {
        self.branches
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn level(&self, l: usize) -> &[TreeNode] {
        &self.nodes[self.level_range(l)]
    }

    pub fn leaves(&self) -> &[TreeNode] {
        self.level(self.depth())
    }

    fn level_range(&self, l: usize) -> core::ops::Range<usize> {
        let start = self.level_starts[l];
        let end = self
            .level_starts
            .get(l + 1)
            .copied()
            .unwrap_or(self.nodes.len());
        start..end
    }

    /// Index range of the children of node `idx`, empty for leaves.
    pub fn children_of(&self, idx: usize) -> core::ops::Range<usize> {
        let l = self.level_of(idx);
        if l == self.depth() {
            return idx..idx;
        }
        let offset = idx - self.level_starts[l];
        let start = self.level_starts[l + 1] + offset * self.branches;
        start..start + self.branches
    }

    pub fn children(&self, idx: usize) -> &[TreeNode] {
        &self.nodes[self.children_of(idx)]
    }

    pub fn level_of(&self, idx: usize) -> usize {
        self.level_starts.partition_point(|&s| s <= idx) - 1
    }
}

/// Builds the full tree of `n_steps` lattice steps from `root_generation`.
pub fn forward_propagate(
    root_generation: &[f64],
    model: &LatticeStepModel,
    n_steps: usize,
    max_nodes: usize,
) -> Result<ScenarioTree> {
    let n = model.n_assets();
    if root_generation.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: root_generation.len(),
        });
    }
    if let Some(&g) = root_generation.iter().find(|&&g| !(g > 0.0)) {
        return Err(Error::NonPositiveGeneration(g));
    }
    let branches = model.branches();
    let leaves = (branches as u128).checked_pow(n_steps as u32);
    match leaves {
        Some(count) if count <= max_nodes as u128 => {}
        _ => {
            return Err(Error::TreeTooLarge {
                nodes: leaves.unwrap_or(u128::MAX),
                budget: max_nodes,
            })
        }
    }

    let total: usize = (0..=n_steps).map(|l| branches.pow(l as u32)).sum();
    let mut nodes = Vec::with_capacity(total);
    let mut level_starts = Vec::with_capacity(n_steps + 1);
    level_starts.push(0);
    nodes.push(TreeNode {
        generation: root_generation.to_vec(),
        value: 0.0,
        path_prob: 1.0,
        one_hop_prob: 1.0,
        id: 0,
        parent: None,
    });

    for _ in 0..n_steps {
        let parent_start = *level_starts.last().expect("non-empty");
        let parent_end = nodes.len();
        level_starts.push(parent_end);
        for pid in parent_start..parent_end {
            for k in 0..branches {
                let parent = &nodes[pid];
                let row = model.branch_row(k);
                let ohp = model.branch_probs()[k];
                let child = TreeNode {
                    generation: parent
                        .generation
                        .iter()
                        .zip(row)
                        .map(|(g, f)| g * f)
                        .collect(),
                    value: 0.0,
                    path_prob: parent.path_prob * ohp,
                    one_hop_prob: ohp,
                    id: branches as u64 * parent.id + k as u64 + 1,
                    parent: Some(pid),
                };
                nodes.push(child);
            }
        }
    }

    Ok(ScenarioTree {
        nodes,
        level_starts,
        branches,
    })
}

/// Output of [`backpropagate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Backprop {
    pub root_value: f64,
    /// Node indices of the root's children (or just the root for a
    /// zero-depth tree).
    pub first_level: Vec<usize>,
}

/// Sets every leaf to the pooled terminal shortfall and rolls values back
/// with `V_parent = Σ ohp·V_child`.
pub fn backpropagate(tree: &mut ScenarioTree, demands: &[f64]) -> Result<Backprop> {
    let depth = tree.depth();
    let expected: usize = (0..=depth).map(|l| tree.branches.pow(l as u32)).sum();
    if tree.nodes.len() != expected {
        return Err(Error::MalformedTree(format!(
            "expected {expected} nodes for depth {depth}, found {}",
            tree.nodes.len()
        )));
    }
    for idx in tree.level_range(depth) {
        let payoff = tes_terminal_payoff(&tree.nodes[idx].generation, demands)?;
        tree.nodes[idx].value = payoff;
    }
    for l in (0..depth).rev() {
        for idx in tree.level_range(l) {
            let children = tree.children_of(idx);
            let v: f64 = tree.nodes[children]
                .iter()
                .map(|c| c.one_hop_prob * c.value)
                .sum();
            tree.nodes[idx].value = v;
        }
    }
    let first_level = if depth == 0 {
        alloc::vec![0]
    } else {
        tree.level_range(1).collect()
    };
    Ok(Backprop {
        root_value: tree.nodes[0].value,
        first_level,
    })
}
