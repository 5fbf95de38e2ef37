//! Newton boosting of depth-limited regression trees on the softmax loss.
//!
//! Each round fits one tree per class to the per-example gradients
//! `g = p_k - y_k` and hessians `h = p_k (1 - p_k)`. Splits are exact and
//! greedy over sorted feature values; a split is taken only when
//!
//! ```text
//! gain = 1/2 [ G_L^2/(H_L+l) + G_R^2/(H_R+l) - G^2/(H+l) ] > 0
//! ```
//!
//! and leaves carry `-eta * G/(H+l)`. Rows go left when `x < threshold`.
//!
//! Input vectors are projected onto the `feature_cap` highest-df vocabulary
//! terms. Column data stays sparse: rows absent from a column's nonzero list
//! hold the value 0 and are scanned as one block.

use serde::{Deserialize, Serialize};

use super::{check_all_classes, check_dim, cross_entropy, softmax, LabeledVector, PredictionRecord};
use crate::error::{Error, Result};
use crate::features::{SparseVector, Vocabulary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostedParams {
    pub rounds: usize,
    pub max_depth: usize,
    /// Shrinkage applied to every leaf value.
    pub learning_rate: f64,
    /// L2 penalty on leaf values.
    pub l2: f64,
    pub feature_cap: usize,
    pub seed: u64,
}

impl Default for BoostedParams {
    fn default() -> Self {
        BoostedParams {
            rounds: 100,
            max_depth: 4,
            learning_rate: 0.1,
            l2: 1.0,
            feature_cap: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn constant(value: f64) -> Self {
        Tree {
            nodes: vec![Node::Leaf { value }],
        }
    }

    /// Walks from the root; `value_of(j)` yields capped feature `j`.
    pub fn evaluate(&self, value_of: impl Fn(usize) -> f64) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if value_of(feature) < threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    /// Dimension of the TF-IDF vectors the model accepts.
    pub input_dim: usize,
    /// Vocabulary index behind each capped feature.
    pub features: Vec<usize>,
    /// One tree per class per round.
    pub rounds: Vec<[Tree; 3]>,
    pub params: BoostedParams,
    /// Training log-loss before the first round and after each round.
    pub loss_log: Vec<f64>,
}

impl BoostedModel {
    fn project(&self, x: &SparseVector) -> Vec<(usize, f64)> {
        project(&self.features, x)
    }

    pub fn scores(&self, x: &SparseVector) -> Result<[f64; 3]> {
        check_dim(self.input_dim, x.dim)?;
        let row = self.project(x);
        let value_of = |j: usize| lookup(&row, j);
        let mut scores = [0.0; 3];
        for trees in &self.rounds {
            for k in 0..3 {
                scores[k] += trees[k].evaluate(value_of);
            }
        }
        Ok(scores)
    }

    pub fn predict_proba(&self, x: &SparseVector) -> Result<[f64; 3]> {
        Ok(softmax(&self.scores(x)?))
    }

    pub fn predict(&self, id: &str, x: &SparseVector) -> Result<PredictionRecord> {
        Ok(PredictionRecord::new(id, self.predict_proba(x)?))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("boosted model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: BoostedModel = serde_json::from_str(s)?;
        let n_features = m.features.len();
        for trees in &m.rounds {
            for tree in trees {
                for node in &tree.nodes {
                    match *node {
                        Node::Split { feature, left, right, .. } => {
                            if feature >= n_features || left >= tree.nodes.len() || right >= tree.nodes.len() {
                                return Err(Error::Data("boosted tree references out-of-range node".into()));
                            }
                        }
                        Node::Leaf { value } if !value.is_finite() => {
                            return Err(Error::Data("non-finite leaf value".into()));
                        }
                        Node::Leaf { .. } => {}
                    }
                }
            }
        }
        Ok(m)
    }
}

/// Capped features of `x`, sorted by capped index.
fn project(features: &[usize], x: &SparseVector) -> Vec<(usize, f64)> {
    let mut row: Vec<(usize, f64)> = features
        .iter()
        .enumerate()
        .filter_map(|(j, &vocab_idx)| {
            let v = x.get(vocab_idx);
            (v != 0.0).then_some((j, v))
        })
        .collect();
    row.sort_by_key(|&(j, _)| j);
    row
}

fn lookup(row: &[(usize, f64)], j: usize) -> f64 {
    row.binary_search_by_key(&j, |&(k, _)| k)
        .map(|i| row[i].1)
        .unwrap_or(0.0)
}

/// Nonzero entries of one capped feature, ascending by value.
struct Column {
    entries: Vec<(f64, usize)>,
}

#[derive(Clone, Copy, Default)]
struct Stats {
    g: f64,
    h: f64,
    n: usize,
}

impl Stats {
    fn add(&mut self, g: f64, h: f64, n: usize) {
        self.g += g;
        self.h += h;
        self.n += n;
    }
}

fn score(g: f64, h: f64, l2: f64) -> f64 {
    g * g / (h + l2)
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Per-node sweep state while scanning one column.
#[derive(Clone, Copy, Default)]
struct Sweep {
    left: Stats,
    last: Option<f64>,
}

struct TreeBuilder<'a> {
    columns: &'a [Column],
    rows: &'a [Vec<(usize, f64)>],
    grad: &'a [f64],
    hess: &'a [f64],
    params: &'a BoostedParams,
}

impl TreeBuilder<'_> {
    fn build(&self) -> Tree {
        let n = self.grad.len();
        let l2 = self.params.l2;
        let mut node_of_row = vec![0usize; n];
        let mut totals = vec![Stats::default()];
        for r in 0..n {
            totals[0].add(self.grad[r], self.hess[r], 1);
        }
        // None = still open / leaf; filled in as splits are chosen
        let mut splits: Vec<Option<(usize, f64, usize, usize)>> = vec![None];
        let mut frontier = vec![0usize];

        for _depth in 0..self.params.max_depth {
            if frontier.is_empty() {
                break;
            }
            let best = self.best_splits(&frontier, &node_of_row, &totals);
            let mut next = Vec::new();
            for (slot, &node) in frontier.iter().enumerate() {
                let Some(c) = best[slot] else { continue };
                let left = totals.len();
                let right = left + 1;
                totals.push(Stats::default());
                totals.push(Stats::default());
                splits.push(None);
                splits.push(None);
                splits[node] = Some((c.feature, c.threshold, left, right));
                next.push(left);
                next.push(right);
            }
            if next.is_empty() {
                break;
            }
            for r in 0..n {
                if let Some((feature, threshold, left, right)) = splits[node_of_row[r]] {
                    let child = if lookup(&self.rows[r], feature) < threshold { left } else { right };
                    node_of_row[r] = child;
                    totals[child].add(self.grad[r], self.hess[r], 1);
                }
            }
            frontier = next;
        }

        let eta = self.params.learning_rate;
        let nodes = splits
            .iter()
            .zip(&totals)
            .map(|(split, st)| match *split {
                Some((feature, threshold, left, right)) => Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                },
                None => Node::Leaf {
                    value: -eta * st.g / (st.h + l2),
                },
            })
            .collect();
        Tree { nodes }
    }

    fn best_splits(&self, frontier: &[usize], node_of_row: &[usize], totals: &[Stats]) -> Vec<Option<Candidate>> {
        let l2 = self.params.l2;
        let mut slot_of_node = vec![usize::MAX; totals.len()];
        for (slot, &node) in frontier.iter().enumerate() {
            slot_of_node[node] = slot;
        }
        let parent_score: Vec<f64> = frontier
            .iter()
            .map(|&node| score(totals[node].g, totals[node].h, l2))
            .collect();
        let mut best: Vec<Option<Candidate>> = vec![None; frontier.len()];
        let mut nonzero = vec![Stats::default(); frontier.len()];
        let mut sweep = vec![Sweep::default(); frontier.len()];

        for (feature, column) in self.columns.iter().enumerate() {
            nonzero.iter_mut().for_each(|s| *s = Stats::default());
            sweep.iter_mut().for_each(|s| *s = Sweep::default());
            let mut zeros_done = vec![false; frontier.len()];
            let mut seen = vec![false; frontier.len()];
            for &(_, r) in &column.entries {
                let slot = slot_of_node[node_of_row[r]];
                if slot != usize::MAX {
                    nonzero[slot].add(self.grad[r], self.hess[r], 1);
                }
            }

            let zero_block = |slot: usize| {
                let total = totals[frontier[slot]];
                let nz = nonzero[slot];
                (total.g - nz.g, total.h - nz.h, total.n - nz.n)
            };
            let mut push = |slot: usize, value: f64, g: f64, h: f64, n: usize| {
                let total = totals[frontier[slot]];
                sweep_step(&mut sweep[slot], &mut best[slot], total, parent_score[slot], l2, feature, value, (g, h, n));
            };

            for &(value, r) in &column.entries {
                let slot = slot_of_node[node_of_row[r]];
                if slot == usize::MAX {
                    continue;
                }
                if value > 0.0 && !zeros_done[slot] {
                    zeros_done[slot] = true;
                    let (g, h, n) = zero_block(slot);
                    if n > 0 {
                        push(slot, 0.0, g, h, n);
                    }
                }
                push(slot, value, self.grad[r], self.hess[r], 1);
                seen[slot] = true;
            }
            for slot in 0..frontier.len() {
                if !zeros_done[slot] {
                    zeros_done[slot] = true;
                    let (g, h, n) = zero_block(slot);
                    if n > 0 && seen[slot] {
                        push(slot, 0.0, g, h, n);
                    }
                }
            }
        }
        best
    }
}

/// Advances one node's left-to-right sweep by a block of rows sharing `value`,
/// scoring the split between the previous value and this one.
#[allow(clippy::too_many_arguments)]
fn sweep_step(
    s: &mut Sweep,
    best: &mut Option<Candidate>,
    total: Stats,
    parent_score: f64,
    l2: f64,
    feature: usize,
    value: f64,
    (g, h, n): (f64, f64, usize),
) {
    if let Some(last) = s.last {
        if value > last {
            let (gl, hl) = (s.left.g, s.left.h);
            let (gr, hr) = (total.g - gl, total.h - hl);
            let gain = 0.5 * (score(gl, hl, l2) + score(gr, hr, l2) - parent_score);
            if gain > 0.0 && best.is_none_or(|b| gain > b.gain) {
                *best = Some(Candidate {
                    gain,
                    feature,
                    threshold: 0.5 * (last + value),
                });
            }
        }
    }
    s.left.add(g, h, n);
    s.last = Some(value);
}

fn mean_log_loss(scores: &[[f64; 3]], labels: &[usize]) -> f64 {
    scores
        .iter()
        .zip(labels)
        .map(|(s, &y)| cross_entropy(s, y))
        .sum::<f64>()
        / scores.len() as f64
}

/// Trains a boosted model on TF-IDF vectors drawn from `vocabulary`.
pub fn train_boosted(
    examples: &[LabeledVector],
    vocabulary: &Vocabulary,
    params: &BoostedParams,
) -> Result<BoostedModel> {
    check_all_classes(examples.iter().map(|(_, y)| *y))?;
    let input_dim = vocabulary.len();
    for (x, _) in examples {
        check_dim(input_dim, x.dim)?;
    }
    if !(params.learning_rate > 0.0 && params.learning_rate <= 1.0) {
        return Err(Error::Config("boosting learning_rate must lie in (0, 1]".into()));
    }
    if params.l2 < 0.0 {
        return Err(Error::Config("boosting l2 must be nonnegative".into()));
    }

    let features = vocabulary.top_by_df(params.feature_cap);
    let rows: Vec<Vec<(usize, f64)>> = examples.iter().map(|(x, _)| project(&features, x)).collect();
    let mut columns: Vec<Column> = (0..features.len()).map(|_| Column { entries: Vec::new() }).collect();
    for (r, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            columns[j].entries.push((v, r));
        }
    }
    for c in &mut columns {
        c.entries.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    }

    let labels: Vec<usize> = examples.iter().map(|(_, y)| y.index()).collect();
    let n = examples.len();
    let mut scores = vec![[0.0f64; 3]; n];
    let mut model = BoostedModel {
        input_dim,
        features,
        rounds: Vec::new(),
        params: params.clone(),
        loss_log: vec![mean_log_loss(&scores, &labels)],
    };
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];

    for round in 0..params.rounds {
        let probs: Vec<[f64; 3]> = scores.iter().map(softmax).collect();
        let mut trees: Vec<Tree> = Vec::with_capacity(3);
        for k in 0..3 {
            for r in 0..n {
                let p = probs[r][k];
                grad[r] = p - if labels[r] == k { 1.0 } else { 0.0 };
                hess[r] = (p * (1.0 - p)).max(1e-16);
            }
            let builder = TreeBuilder {
                columns: &columns,
                rows: &rows,
                grad: &grad,
                hess: &hess,
                params,
            };
            trees.push(builder.build());
        }
        let stalled = trees.iter().all(|t| t.nodes.len() == 1);
        let trees: [Tree; 3] = if stalled {
            [Tree::constant(0.0), Tree::constant(0.0), Tree::constant(0.0)]
        } else {
            trees.try_into().expect("three trees")
        };
        for (r, row) in rows.iter().enumerate() {
            for k in 0..3 {
                scores[r][k] += trees[k].evaluate(|j| lookup(row, j));
            }
        }
        model.rounds.push(trees);
        let loss = mean_log_loss(&scores, &labels);
        if !loss.is_finite() {
            return Err(Error::Training(format!("boosting loss diverged at round {}", round + 1)));
        }
        model.loss_log.push(loss);
        if stalled {
            break;
        }
    }
    Ok(model)
}
