//! Gradient-boosted regression trees on squared error.
//!
//! With residuals `r = y - F` over the rows `S` of a node, a leaf predicts
//!
//! ```text
//! v = eta * sum_S r / (|S| + lambda)
//! ```
//!
//! and a split of `S` into `L, R` scores
//!
//! ```text
//! gain = G_L^2 / (n_L + lambda) + G_R^2 / (n_R + lambda) - G^2 / (n + lambda)
//! ```
//!
//! Thresholds are midpoints between consecutive distinct values; `x <= t`
//! goes left. Missing values follow a per-split default branch.

use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{BoostParams, LearnerError};

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        default_left: bool,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict<F: Fn(usize) -> f64>(&self, x: F) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    default_left,
                    left,
                    right,
                } => {
                    let v = x(*feature);
                    let go_left = if v.is_nan() { *default_left } else { v <= *threshold };
                    at = if go_left { *left } else { *right };
                }
            }
        }
    }
}

/// Fitted additive model; the prediction is the sum of the trees' leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub feature_names: Vec<String>,
    pub trees: Vec<Tree>,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
    default_left: bool,
}

fn score(g: f64, n: usize, lambda: f64) -> f64 {
    let denom = n as f64 + lambda;
    if denom > 0.0 {
        g * g / denom
    } else {
        0.0
    }
}

struct Data<'a> {
    columns: &'a [Vec<f64>],
    sorted: Vec<Vec<usize>>,
    missing: Vec<Vec<usize>>,
}

/// Best split per active node for one feature.
#[allow(clippy::too_many_arguments)]
fn best_for_feature(
    data: &Data,
    feature: usize,
    slot_of_row: &[i32],
    totals: &[(f64, usize)],
    residual: &[f64],
    params: &BoostParams,
) -> Vec<Option<Candidate>> {
    let k = totals.len();
    let lambda = params.l2_leaf_penalty;
    let min_leaf = params.min_leaf_count;
    let mut gm = vec![0.0; k];
    let mut nm = vec![0usize; k];
    for &row in &data.missing[feature] {
        if let Ok(s) = usize::try_from(slot_of_row[row]) {
            gm[s] += residual[row];
            nm[s] += 1;
        }
    }
    let mut gl = vec![0.0; k];
    let mut nl = vec![0usize; k];
    let mut last = vec![f64::NAN; k];
    let mut best: Vec<Option<Candidate>> = vec![None; k];
    let values = &data.columns[feature];
    for &row in &data.sorted[feature] {
        let Ok(s) = usize::try_from(slot_of_row[row]) else {
            continue;
        };
        let v = values[row];
        if nl[s] > 0 && v > last[s] {
            let (gt, nt) = totals[s];
            let parent = score(gt, nt, lambda);
            let gr = gt - gm[s] - gl[s];
            let nr = nt - nm[s] - nl[s];
            let mut threshold = last[s] + (v - last[s]) / 2.0;
            if threshold >= v {
                threshold = last[s];
            }
            let options: &[(bool, f64, usize, f64, usize)] = if nm[s] == 0 {
                &[(nl[s] >= nr, gl[s], nl[s], gr, nr)]
            } else {
                &[
                    (true, gl[s] + gm[s], nl[s] + nm[s], gr, nr),
                    (false, gl[s], nl[s], gr + gm[s], nr + nm[s]),
                ]
            };
            for &(default_left, g_left, n_left, g_right, n_right) in options {
                if n_left < min_leaf || n_right < min_leaf {
                    continue;
                }
                let gain = score(g_left, n_left, lambda) + score(g_right, n_right, lambda) - parent;
                if best[s].is_none_or(|b| gain > b.gain) {
                    best[s] = Some(Candidate {
                        gain,
                        feature,
                        threshold,
                        default_left,
                    });
                }
            }
        }
        gl[s] += residual[row];
        nl[s] += 1;
        last[s] = v;
    }
    best
}

fn grow_tree(data: &Data, rows: &[usize], residual: &[f64], params: &BoostParams) -> Tree {
    let n_rows = residual.len();
    let lambda = params.l2_leaf_penalty;
    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    let total: f64 = rows.iter().map(|&r| residual[r]).sum();
    let mut stats: Vec<(f64, usize)> = vec![(total, rows.len())];
    let mut members: Vec<Vec<usize>> = vec![rows.to_vec()];
    let mut active = vec![0usize];

    for _ in 0..params.max_depth {
        let splittable: Vec<usize> = active
            .iter()
            .copied()
            .filter(|&id| stats[id].1 >= 2 * params.min_leaf_count.max(1))
            .collect();
        if splittable.is_empty() {
            break;
        }
        let mut slot_of_row = vec![-1i32; n_rows];
        for (slot, &id) in splittable.iter().enumerate() {
            for &r in &members[id] {
                slot_of_row[r] = slot as i32;
            }
        }
        let totals: Vec<(f64, usize)> = splittable.iter().map(|&id| stats[id]).collect();
        let per_feature: Vec<Vec<Option<Candidate>>> = (0..data.columns.len())
            .into_par_iter()
            .map(|f| best_for_feature(data, f, &slot_of_row, &totals, residual, params))
            .collect();
        let mut next_active = Vec::new();
        for (slot, &id) in splittable.iter().enumerate() {
            let mut best: Option<Candidate> = None;
            for cands in &per_feature {
                if let Some(c) = cands[slot] {
                    if best.is_none_or(|b| c.gain > b.gain) {
                        best = Some(c);
                    }
                }
            }
            let Some(best) = best.filter(|b| b.gain > 1e-15) else {
                continue;
            };
            let column = &data.columns[best.feature];
            let (mut left_rows, mut right_rows) = (Vec::new(), Vec::new());
            for &r in &members[id] {
                let v = column[r];
                let go_left = if v.is_nan() {
                    best.default_left
                } else {
                    v <= best.threshold
                };
                if go_left {
                    left_rows.push(r);
                } else {
                    right_rows.push(r);
                }
            }
            let left = nodes.len();
            let right = left + 1;
            nodes.push(Node::Leaf { value: 0.0 });
            nodes.push(Node::Leaf { value: 0.0 });
            for rows in [&left_rows, &right_rows] {
                let g: f64 = rows.iter().map(|&r| residual[r]).sum();
                stats.push((g, rows.len()));
            }
            members.push(left_rows);
            members.push(right_rows);
            members[id].clear();
            nodes[id] = Node::Split {
                feature: best.feature,
                threshold: best.threshold,
                default_left: best.default_left,
                left,
                right,
            };
            next_active.push(left);
            next_active.push(right);
        }
        active = next_active;
    }

    for (id, node) in nodes.iter_mut().enumerate() {
        if let Node::Leaf { value } = node {
            let (g, n) = stats[id];
            let denom = n as f64 + lambda;
            *value = if denom > 0.0 {
                params.learning_rate * g / denom
            } else {
                0.0
            };
        }
    }
    Tree { nodes }
}

/// Fits on a column-major feature matrix. Rows with a missing target must be
/// removed by the caller. Columns that are entirely missing never split.
pub fn fit_matrix(
    feature_names: &[String],
    columns: &[Vec<f64>],
    target: &[f64],
    params: &BoostParams,
) -> Result<Model, LearnerError> {
    params.validate()?;
    let n = target.len();
    if n == 0 || n < params.min_leaf_count {
        return Err(LearnerError::EmptyTrainingSet {
            rows: n,
            required: params.min_leaf_count.max(1),
        });
    }
    if columns.len() != feature_names.len() || columns.iter().any(|c| c.len() != n) {
        return Err(LearnerError::InvalidInput(
            "feature matrix does not match target length".into(),
        ));
    }
    let sorted: Vec<Vec<usize>> = columns
        .iter()
        .map(|c| {
            let mut rows: Vec<usize> = (0..n).filter(|&r| !c[r].is_nan()).collect();
            rows.sort_by(|&a, &b| c[a].total_cmp(&c[b]).then(a.cmp(&b)));
            rows
        })
        .collect();
    let missing = columns
        .iter()
        .map(|c| (0..n).filter(|&r| c[r].is_nan()).collect())
        .collect();
    let data = Data {
        columns,
        sorted,
        missing,
    };

    let mut fitted = vec![0.0; n];
    let mut residual = target.to_vec();
    let mut trees = Vec::with_capacity(params.n_trees);
    let all_rows: Vec<usize> = (0..n).collect();
    let take = ((params.subsample_fraction * n as f64).round() as usize).clamp(1, n);
    for t in 0..params.n_trees {
        let rows = if take == n {
            all_rows.clone()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(t as u64);
            let mut rows = sample(&mut rng, n, take).into_vec();
            rows.sort_unstable();
            rows
        };
        let tree = grow_tree(&data, &rows, &residual, params);
        for r in 0..n {
            fitted[r] += tree.predict(|f| columns[f][r]);
            residual[r] = target[r] - fitted[r];
        }
        trees.push(tree);
    }
    Ok(Model {
        feature_names: feature_names.to_vec(),
        trees,
    })
}

impl Model {
    /// Prediction for one row given its feature values in model order.
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(|f| x[f])).sum()
    }

    /// Predictions for a column-major matrix whose columns follow `feature_names`.
    pub fn predict_matrix(&self, columns: &[&[f64]]) -> Vec<f64> {
        let n = columns.first().map_or(0, |c| c.len());
        (0..n)
            .into_par_iter()
            .map(|r| self.trees.iter().map(|t| t.predict(|f| columns[f][r])).sum())
            .collect()
    }

    /// Plain-text dump: a `features` header, then one line per node.
    ///
    /// ```text
    /// features x,y
    /// tree 0 node 0 split feature=0 threshold=0.5 default=left left=1 right=2
    /// tree 0 node 1 leaf value=-0.25
    /// ```
    pub fn dump(&self) -> String {
        let mut out = format!("features {}\n", self.feature_names.join(","));
        for (t, tree) in self.trees.iter().enumerate() {
            for (id, node) in tree.nodes.iter().enumerate() {
                match node {
                    Node::Leaf { value } => {
                        let _ = writeln!(out, "tree {t} node {id} leaf value={value:?}");
                    }
                    Node::Split {
                        feature,
                        threshold,
                        default_left,
                        left,
                        right,
                    } => {
                        let side = if *default_left { "left" } else { "right" };
                        let _ = writeln!(
                            out,
                            "tree {t} node {id} split feature={feature} threshold={threshold:?} default={side} left={left} right={right}"
                        );
                    }
                }
            }
        }
        out
    }

    /// Parses the output of [`Model::dump`].
    pub fn from_dump(text: &str) -> Result<Model, LearnerError> {
        let bad = |line: usize, message: &str| LearnerError::Dump {
            line,
            message: message.to_string(),
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| bad(1, "empty dump"))?;
        let names = header
            .strip_prefix("features ")
            .or_else(|| header.strip_prefix("features"))
            .ok_or_else(|| bad(1, "missing features header"))?;
        let feature_names: Vec<String> = if names.trim().is_empty() {
            Vec::new()
        } else {
            names.split(',').map(|s| s.trim().to_string()).collect()
        };
        let mut trees: Vec<Tree> = Vec::new();
        for (i, line) in lines {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() < 5 || parts[0] != "tree" || parts[2] != "node" {
                return Err(bad(line_no, "expected `tree T node N ...`"));
            }
            let t: usize = parts[1].parse().map_err(|_| bad(line_no, "bad tree index"))?;
            let id: usize = parts[3].parse().map_err(|_| bad(line_no, "bad node index"))?;
            let field = |key: &str| -> Result<&str, LearnerError> {
                parts[5..]
                    .iter()
                    .find_map(|p| p.strip_prefix(key).and_then(|rest| rest.strip_prefix('=')))
                    .ok_or_else(|| bad(line_no, &format!("missing {key}")))
            };
            let num = |key: &str| -> Result<f64, LearnerError> {
                field(key)?.parse().map_err(|_| bad(line_no, &format!("bad {key}")))
            };
            let idx = |key: &str| -> Result<usize, LearnerError> {
                field(key)?.parse().map_err(|_| bad(line_no, &format!("bad {key}")))
            };
            let node = match parts[4] {
                "leaf" => Node::Leaf { value: num("value")? },
                "split" => Node::Split {
                    feature: idx("feature")?,
                    threshold: num("threshold")?,
                    default_left: match field("default")? {
                        "left" => true,
                        "right" => false,
                        _ => return Err(bad(line_no, "default must be left or right")),
                    },
                    left: idx("left")?,
                    right: idx("right")?,
                },
                _ => return Err(bad(line_no, "node kind must be leaf or split")),
            };
            if t == trees.len() {
                trees.push(Tree { nodes: Vec::new() });
            }
            if t + 1 != trees.len() || id != trees[t].nodes.len() {
                return Err(bad(line_no, "nodes out of order"));
            }
            trees[t].nodes.push(node);
        }
        for (t, tree) in trees.iter().enumerate() {
            for node in &tree.nodes {
                if let Node::Split {
                    feature,
                    left,
                    right,
                    ..
                } = node
                {
                    if *feature >= feature_names.len()
                        || *left >= tree.nodes.len()
                        || *right >= tree.nodes.len()
                    {
                        return Err(bad(0, &format!("tree {t} references a missing node or feature")));
                    }
                }
            }
        }
        Ok(Model {
            feature_names,
            trees,
        })
    }
}
