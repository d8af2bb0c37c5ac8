//! Greedy story ranking over a fully connected clip graph.
//!
//! The objective for a selected set `A` of `N_A` clips is
//!
//! ```text
//! L(A) = F(A) + gamma * U(A)
//! F(A) = (1 / N_A) * sum_{i in A} sum_{j in V} d(v_i, v_j)
//! U(A) = sum_{i in A} exp(-phi_i)
//! ```
//!
//! where `d(v_i, v_j)` is the coherence of candidate `v_i` when `v_j` is the
//! context clip and `phi` is the dynamics score. Selection starts from the
//! calmest clip and appends, one at a time, the clip with the largest gain
//! `L(A + a) - L(A)` until every clip is placed. Gains may be negative.
//!
//! [`lazy_greedy_rank`] returns exactly the same order as [`greedy_rank`]
//! while re-evaluating fewer gains. Because of the `1 / N_A` factor the
//! objective is not submodular in general, so the lazy variant does not rely
//! on diminishing gains directly. Instead it uses the decomposition
//!
//! ```text
//! gain_k(a) = r_a / (k + 1) + gamma * exp(-phi_a) - S_A / (k (k + 1))
//! ```
//!
//! with `k = N_A`, `r_a = sum_j d(v_a, v_j)` and `S_A = sum_{i in A} r_i`. The
//! last term is shared by every candidate in a round, and the candidate part
//! never increases with `k` when `r_a >= 0`, so cached candidate parts are
//! valid upper bounds. If some `r_a` is negative the bounds are void and every
//! round falls back to evaluating all remaining clips.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::coherence::{argmin_dynamics, ClipOrder, CoherenceMatrix};
use crate::error::{Error, Result};

/// Default weight of the activity-dynamics term.
pub const DEFAULT_GAMMA: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct StoryGraph {
    n: usize,
    /// `relation[i * n + j] = d(v_i, v_j)`; self-relations are ignored.
    relation: Vec<f64>,
    dynamics: Vec<f64>,
    gamma: f64,
    /// `r_i = sum_{j != i} d(v_i, v_j)`
    relation_sums: Vec<f64>,
    /// `exp(-phi_i)`
    calmness: Vec<f64>,
}

impl StoryGraph {
    /// Builds a graph from `d(v_i, v_j)` given as `relation[i][j]`.
    pub fn new(relation: Vec<Vec<f64>>, dynamics: Vec<f64>, gamma: f64) -> Result<Self> {
        let n = relation.len();
        if n == 0 {
            return Err(Error::invalid("story graph needs at least one clip"));
        }
        if dynamics.len() != n {
            return Err(Error::invalid(format!(
                "{} dynamics scores for {n} clips",
                dynamics.len()
            )));
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::invalid(format!("gamma must be finite and >= 0, got {gamma}")));
        }
        if let Some(p) = dynamics.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::invalid(format!(
                "dynamics score {p} is not a finite non-negative value"
            )));
        }
        let mut flat = Vec::with_capacity(n * n);
        for (i, row) in relation.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::invalid(format!(
                    "relation row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            flat.extend(row);
        }
        if flat.iter().any(|x| !x.is_finite()) {
            return Err(Error::numeric("relation has non-finite entries"));
        }
        let relation_sums = (0..n)
            .map(|i| (0..n).filter(|&j| j != i).map(|j| flat[i * n + j]).sum())
            .collect();
        let calmness = dynamics.iter().map(|p| (-p).exp()).collect();
        Ok(StoryGraph {
            n,
            relation: flat,
            dynamics,
            gamma,
            relation_sums,
            calmness,
        })
    }

    /// Reads `d(v_i, v_j)` as the coherence of candidate `i` after the prefix
    /// ending at context clip `j`, i.e. `coherence.get(j, i)`.
    pub fn from_coherence(coherence: &CoherenceMatrix, dynamics: Vec<f64>, gamma: f64) -> Result<Self> {
        let n = coherence.n();
        let relation = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 0.0 } else { coherence.get(j, i) }).collect())
            .collect();
        StoryGraph::new(relation, dynamics, gamma)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn dynamics(&self) -> &[f64] {
        &self.dynamics
    }

    /// `d(v_i, v_j)`
    pub fn relation(&self, i: usize, j: usize) -> f64 {
        self.relation[i * self.n + j]
    }

    fn check_selection(&self, selected: &[usize]) -> Result<()> {
        let mut seen = vec![false; self.n];
        for &i in selected {
            if i >= self.n {
                return Err(Error::invalid(format!("clip {i} out of range for {} clips", self.n)));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::invalid(format!("clip {i} selected twice")));
            }
        }
        Ok(())
    }
}

/// Facility-location term `F(A)`.
pub fn facility_location(selected: &[usize], graph: &StoryGraph) -> Result<f64> {
    if selected.is_empty() {
        return Err(Error::invalid("facility location needs a non-empty selection"));
    }
    graph.check_selection(selected)?;
    let total: f64 = selected
        .iter()
        .map(|&i| {
            (0..graph.n)
                .filter(|&j| j != i)
                .map(|j| graph.relation(i, j))
                .sum::<f64>()
        })
        .sum();
    Ok(total / selected.len() as f64)
}

/// Activity-dynamics term `U(A)`; zero for the empty selection.
pub fn activity_dynamics(selected: &[usize], graph: &StoryGraph) -> Result<f64> {
    graph.check_selection(selected)?;
    Ok(selected.iter().map(|&i| (-graph.dynamics[i]).exp()).sum())
}

/// `L(A) = F(A) + gamma * U(A)`.
pub fn objective(selected: &[usize], graph: &StoryGraph) -> Result<f64> {
    Ok(facility_location(selected, graph)? + graph.gamma * activity_dynamics(selected, graph)?)
}

/// Outcome of a ranking run.
#[derive(Debug, Clone, PartialEq)]
pub struct RankResult {
    pub order: ClipOrder,
    /// `L(A^i) - L(A^{i-1})` for each appended clip (length `n - 1`).
    pub gains: Vec<f64>,
    /// `L(A^0), L(A^1), ..., L(V)` (length `n`).
    pub objective_trajectory: Vec<f64>,
    /// Number of marginal-gain evaluations after initialisation.
    pub gain_evaluations: usize,
}

/// Running sums for the current selection.
struct Selection<'g> {
    graph: &'g StoryGraph,
    order: Vec<usize>,
    in_set: Vec<bool>,
    relation_total: f64,
    calm_total: f64,
    value: f64,
    gains: Vec<f64>,
    trajectory: Vec<f64>,
}

impl<'g> Selection<'g> {
    fn start(graph: &'g StoryGraph) -> Result<Self> {
        let first = argmin_dynamics(graph.dynamics.iter().copied())?;
        let mut in_set = vec![false; graph.n];
        in_set[first] = true;
        let relation_total = graph.relation_sums[first];
        let calm_total = graph.calmness[first];
        let value = relation_total + graph.gamma * calm_total;
        Ok(Selection {
            graph,
            order: vec![first],
            in_set,
            relation_total,
            calm_total,
            value,
            gains: Vec::with_capacity(graph.n),
            trajectory: vec![value],
        })
    }

    fn size(&self) -> usize {
        self.order.len()
    }

    fn value_with(&self, a: usize) -> f64 {
        let g = self.graph;
        (self.relation_total + g.relation_sums[a]) / (self.size() + 1) as f64
            + g.gamma * (self.calm_total + g.calmness[a])
    }

    fn gain(&self, a: usize) -> f64 {
        self.value_with(a) - self.value
    }

    /// Candidate-specific part of the gain at the current size.
    fn candidate_part(&self, a: usize) -> f64 {
        let g = self.graph;
        g.relation_sums[a] / (self.size() + 1) as f64 + g.gamma * g.calmness[a]
    }

    /// Part of the gain shared by every candidate at the current size.
    fn shared_part(&self) -> f64 {
        let k = self.size() as f64;
        -self.relation_total / (k * (k + 1.0))
    }

    fn accept(&mut self, a: usize, gain: f64) {
        let value = self.value_with(a);
        self.relation_total += self.graph.relation_sums[a];
        self.calm_total += self.graph.calmness[a];
        self.order.push(a);
        self.in_set[a] = true;
        self.value = value;
        self.gains.push(gain);
        self.trajectory.push(value);
    }

    fn finish(self, gain_evaluations: usize) -> Result<RankResult> {
        Ok(RankResult {
            order: ClipOrder::new(self.order, self.graph.n)?,
            gains: self.gains,
            objective_trajectory: self.trajectory,
            gain_evaluations,
        })
    }
}

fn better(gain: f64, idx: usize, best: Option<(usize, f64)>) -> bool {
    match best {
        None => true,
        Some((bi, bg)) => gain > bg || (gain == bg && idx < bi),
    }
}

/// Reference greedy ranking: every remaining clip's gain is evaluated in
/// every round. Ties go to the lowest clip index.
pub fn greedy_rank(graph: &StoryGraph) -> Result<RankResult> {
    let mut sel = Selection::start(graph)?;
    let mut evaluations = 0;
    while sel.size() < graph.n {
        let mut best: Option<(usize, f64)> = None;
        for a in (0..graph.n).filter(|&a| !sel.in_set[a]) {
            let g = sel.gain(a);
            evaluations += 1;
            if better(g, a, best) {
                best = Some((a, g));
            }
        }
        let (a, g) = best.expect("some clip remains");
        sel.accept(a, g);
    }
    sel.finish(evaluations)
}

#[derive(Debug, Clone, Copy)]
struct Bound {
    key: f64,
    idx: usize,
}

impl PartialEq for Bound {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Bound {}

impl PartialOrd for Bound {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Bound {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.total_cmp(&other.key).then_with(|| other.idx.cmp(&self.idx))
    }
}

/// Greedy ranking with cached gain bounds. Produces the same order, gains and
/// trajectory as [`greedy_rank`].
pub fn lazy_greedy_rank(graph: &StoryGraph) -> Result<RankResult> {
    let mut sel = Selection::start(graph)?;
    let bounds_valid = graph.relation_sums.iter().all(|&r| r >= 0.0);
    let mut evaluations = 0;

    // Unknown bounds start at +inf so the first round evaluates everything.
    let mut heap: BinaryHeap<Bound> = (0..graph.n)
        .filter(|&a| !sel.in_set[a])
        .map(|idx| Bound {
            key: f64::INFINITY,
            idx,
        })
        .collect();

    let mut evaluated: Vec<(usize, f64)> = Vec::new();
    while sel.size() < graph.n {
        let shared = sel.shared_part();
        let mut best: Option<(usize, f64)> = None;
        evaluated.clear();

        while let Some(top) = heap.peek().copied() {
            if let (true, Some((_, bg))) = (bounds_valid, best) {
                // anything below the best fresh gain by more than rounding noise
                // cannot win or tie
                let slack = 1e-10 * (1.0 + bg.abs() + shared.abs());
                if top.key + shared < bg - slack {
                    break;
                }
            }
            heap.pop();
            let g = sel.gain(top.idx);
            evaluations += 1;
            evaluated.push((top.idx, g));
            if better(g, top.idx, best) {
                best = Some((top.idx, g));
            }
        }

        let (a, g) = best.expect("some clip remains");
        // candidate parts are refreshed at the current size before it grows,
        // which keeps them upper bounds for later rounds
        for &(idx, _) in evaluated.iter().filter(|(idx, _)| *idx != a) {
            heap.push(Bound {
                key: sel.candidate_part(idx),
                idx,
            });
        }
        sel.accept(a, g);
    }
    sel.finish(evaluations)
}
