//! Evaluation of compositions: pairwise-coherence ROC/AUC, Bradley-Terry
//! global scores from pairwise preferences, and dynamics trajectories.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::coherence::CoherenceMatrix;
use crate::error::{Error, Result};

/// Unordered pair of clip ids, stored with the smaller id first.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClipPair(String, String);

impl ClipPair {
    pub fn new(a: impl Into<String>, b: impl Into<String>) -> Result<Self> {
        let (a, b) = (a.into(), b.into());
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Ok(ClipPair(a, b)),
            std::cmp::Ordering::Greater => Ok(ClipPair(b, a)),
            std::cmp::Ordering::Equal => Err(Error::invalid(format!("self-pair ({a}, {a})"))),
        }
    }

    pub fn first(&self) -> &str {
        &self.0
    }

    pub fn second(&self) -> &str {
        &self.1
    }
}

/// Ground-truth adjacency labels: is this pair of clips coherent?
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdjacencyLabels(BTreeMap<ClipPair, bool>);

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelEntry {
    pub a: String,
    pub b: String,
    pub coherent: bool,
}

/// On-disk labels document: `{"pairs": [{"a": id, "b": id, "coherent": bool}]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelsFile {
    pub pairs: Vec<LabelEntry>,
}

impl AdjacencyLabels {
    pub fn from_entries(entries: &[LabelEntry]) -> Result<Self> {
        let mut map = BTreeMap::new();
        for e in entries {
            let pair = ClipPair::new(e.a.clone(), e.b.clone())?;
            if let Some(prev) = map.insert(pair.clone(), e.coherent) {
                if prev != e.coherent {
                    return Err(Error::invalid(format!(
                        "conflicting labels for ({}, {})",
                        pair.0, pair.1
                    )));
                }
            }
        }
        Ok(AdjacencyLabels(map))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ClipPair, bool)> {
        self.0.iter().map(|(p, &l)| (p, l))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(false positive rate, true positive rate)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

/// ROC curve of scored binary outcomes. Thresholds sit between distinct score
/// values, so tied scores move the curve in a single diagonal step.
pub fn roc_curve(scored: &[(f64, bool)]) -> Result<RocCurve> {
    let positives = scored.iter().filter(|s| s.1).count();
    let negatives = scored.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::IllPosed(format!(
            "AUC is undefined with {positives} positive and {negatives} negative pairs"
        )));
    }
    if let Some((s, _)) = scored.iter().find(|s| s.0.is_nan()) {
        return Err(Error::numeric(format!("score {s} is not a number")));
    }
    let mut sorted = scored.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));

    let (p, n) = (positives as f64, negatives as f64);
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let threshold = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == threshold {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / n, tp as f64 / p));
    }
    let auc = trapezoid(&points);
    Ok(RocCurve { points, auc })
}

/// ROC of the scores assigned to labelled pairs. Every labelled pair needs a score.
pub fn pairwise_roc(scores: &BTreeMap<ClipPair, f64>, labels: &AdjacencyLabels) -> Result<RocCurve> {
    let missing: Vec<String> = labels
        .iter()
        .filter(|(p, _)| !scores.contains_key(*p))
        .map(|(p, _)| format!("({}, {})", p.0, p.1))
        .collect();
    if !missing.is_empty() {
        return Err(Error::invalid(format!(
            "labelled pairs without a score: {}",
            missing.join(", ")
        )));
    }
    let scored: Vec<(f64, bool)> = labels.iter().map(|(p, l)| (scores[p], l)).collect();
    roc_curve(&scored)
}

/// Scores every unordered clip pair by the larger of the two directed
/// coherences, i.e. the better of the two ways of placing them side by side.
pub fn adjacent_pair_scores(coherence: &CoherenceMatrix, ids: &[String]) -> Result<BTreeMap<ClipPair, f64>> {
    let n = coherence.n();
    if ids.len() != n {
        return Err(Error::invalid(format!(
            "{} clip ids for a {n}x{n} coherence matrix",
            ids.len()
        )));
    }
    let mut out = BTreeMap::new();
    for i in 0..n {
        for j in i + 1..n {
            let s = coherence.get(i, j).max(coherence.get(j, i));
            out.insert(ClipPair::new(ids[i].clone(), ids[j].clone())?, s);
        }
    }
    Ok(out)
}

/// Averaged ROC over several video sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedRoc {
    /// Mean true positive rate on a uniform false-positive grid.
    pub curve: RocCurve,
    /// Mean of the per-set AUCs.
    pub mean_auc: f64,
}

fn tpr_at(points: &[(f64, f64)], x: f64) -> f64 {
    // upper envelope at vertical jumps
    let mut best: f64 = 0.0;
    for w in points.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if x0 <= x && x <= x1 {
            let y = if x1 == x0 {
                y1
            } else {
                y0 + (y1 - y0) * (x - x0) / (x1 - x0)
            };
            best = best.max(y);
        }
    }
    best
}

/// Macro-average: each curve is sampled on `grid` evenly spaced false-positive
/// rates in `[0, 1]` and the true-positive rates are averaged.
pub fn macro_average_roc(curves: &[RocCurve], grid: usize) -> Result<AveragedRoc> {
    if curves.is_empty() {
        return Err(Error::invalid("no ROC curves to average"));
    }
    if grid < 2 {
        return Err(Error::invalid("averaging grid needs at least 2 points"));
    }
    let mut points = vec![(0.0, 0.0)];
    for g in 0..grid {
        let x = g as f64 / (grid - 1) as f64;
        let y = curves.iter().map(|c| tpr_at(&c.points, x)).sum::<f64>() / curves.len() as f64;
        points.push((x, y));
    }
    let auc = trapezoid(&points);
    let mean_auc = curves.iter().map(|c| c.auc).sum::<f64>() / curves.len() as f64;
    Ok(AveragedRoc {
        curve: RocCurve { points, auc },
        mean_auc,
    })
}

/// `wins[a][b]` counts comparisons where item `a` was preferred over item `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwisePreferences {
    pub items: Vec<String>,
    pub wins: Vec<Vec<u64>>,
}

impl PairwisePreferences {
    pub fn validate(&self) -> Result<()> {
        let n = self.items.len();
        if n == 0 {
            return Err(Error::invalid("preferences list no items"));
        }
        if self.wins.len() != n || self.wins.iter().any(|r| r.len() != n) {
            return Err(Error::invalid(format!("wins must be a {n}x{n} matrix")));
        }
        if let Some(i) = (0..n).find(|&i| self.wins[i][i] != 0) {
            return Err(Error::invalid(format!(
                "item {} has wins against itself",
                self.items[i]
            )));
        }
        Ok(())
    }
}

pub const BT_TOLERANCE: f64 = 1e-8;
pub const BT_MAX_ITERATIONS: usize = 10_000;
/// Pseudo-count added to each compared pair when some item never wins or never loses.
pub const BT_SMOOTHING: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BtScores {
    pub items: Vec<String>,
    /// Positive, summing to 1.
    pub scores: Vec<f64>,
    /// Set when smoothing was applied because an item had no wins.
    pub smoothed: bool,
    pub iterations: usize,
    pub converged: bool,
}

/// Whether every item is reachable from item 0 along edges `i -> j` with `edge(i, j)`.
fn reaches_all(n: usize, edge: impl Fn(usize, usize) -> bool) -> bool {
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(i) = queue.pop_front() {
        for j in 0..n {
            if !seen[j] && edge(i, j) {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Bradley-Terry scores `s` with `P(a beats b) = s_a / (s_a + s_b)`, fitted by
/// the minorization-maximization update
/// `s_i <- W_i / sum_j n_ij / (s_i + s_j)` until the largest relative change
/// falls below `tol`.
pub fn bradley_terry(prefs: &PairwisePreferences, max_iterations: usize, tol: f64) -> Result<BtScores> {
    prefs.validate()?;
    let n = prefs.items.len();
    let mut wins: Vec<Vec<f64>> = prefs
        .wins
        .iter()
        .map(|r| r.iter().map(|&w| w as f64).collect())
        .collect();
    let mut games: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| wins[i][j] + wins[j][i]).collect())
        .collect();
    if !reaches_all(n, |i, j| games[i][j] > 0.0) {
        return Err(Error::IllPosed(
            "comparison graph is disconnected; scores of separate components are not comparable".into(),
        ));
    }

    // The maximum-likelihood scores are finite only when the "beat" graph is
    // strongly connected. An item without wins, or one without losses, breaks that.
    let smoothed = !(reaches_all(n, |i, j| wins[i][j] > 0.0) && reaches_all(n, |i, j| wins[j][i] > 0.0));
    if smoothed {
        for i in 0..n {
            for j in 0..n {
                if i != j && games[i][j] > 0.0 {
                    wins[i][j] += BT_SMOOTHING;
                }
            }
        }
        games = (0..n)
            .map(|i| (0..n).map(|j| wins[i][j] + wins[j][i]).collect())
            .collect();
    }
    let total_wins: Vec<f64> = wins.iter().map(|r| r.iter().sum()).collect();

    let mut scores = vec![1.0 / n as f64; n];
    let mut iterations = 0;
    let mut converged = n == 1;
    while !converged && iterations < max_iterations {
        iterations += 1;
        let mut next: Vec<f64> = (0..n)
            .map(|i| {
                let denom: f64 = (0..n)
                    .filter(|&j| j != i && games[i][j] > 0.0)
                    .map(|j| games[i][j] / (scores[i] + scores[j]))
                    .sum();
                total_wins[i] / denom
            })
            .collect();
        let sum: f64 = next.iter().sum();
        next.iter_mut().for_each(|s| *s /= sum);
        if next.iter().any(|s| !s.is_finite()) {
            return Err(Error::numeric("Bradley-Terry update diverged"));
        }
        let change = next
            .iter()
            .zip(&scores)
            .map(|(a, b)| (a - b).abs() / b)
            .fold(0.0, f64::max);
        scores = next;
        converged = change < tol;
    }
    Ok(BtScores {
        items: prefs.items.clone(),
        scores,
        smoothed,
        iterations,
        converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsRow {
    pub position: usize,
    pub clip_id: String,
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsReport {
    pub rows: Vec<DynamicsRow>,
    /// Spearman correlation between story position and dynamics score.
    pub spearman: f64,
}

impl DynamicsReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("position,clip_id,phi\n");
        for r in &self.rows {
            writeln!(out, "{},{},{:?}", r.position, r.clip_id, r.phi).unwrap();
        }
        out
    }
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0;
        for &k in &idx[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties. Defined as 0 when
/// either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Dynamics scores in story order plus their rank correlation with position.
pub fn dynamics_report(order: &[usize], ids: &[String], phi: &[f64]) -> Result<DynamicsReport> {
    if ids.len() != phi.len() {
        return Err(Error::invalid(format!(
            "{} ids but {} dynamics scores",
            ids.len(),
            phi.len()
        )));
    }
    crate::coherence::ClipOrder::new(order.to_vec(), ids.len())?;
    let rows: Vec<DynamicsRow> = order
        .iter()
        .enumerate()
        .map(|(position, &i)| DynamicsRow {
            position,
            clip_id: ids[i].clone(),
            phi: phi[i],
        })
        .collect();
    let positions: Vec<f64> = (0..rows.len()).map(|p| p as f64).collect();
    let values: Vec<f64> = rows.iter().map(|r| r.phi).collect();
    let spearman = spearman(&positions, &values);
    Ok(DynamicsReport { rows, spearman })
}
