//! Optimal one-to-one matching between the padded ground-truth set and the
//! predicted set.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::losses::{neg_log_prob, patch_loss, pose_loss, LossWeights};
use crate::types::{GroundTruthObject, ObjectModel, PredictionTuple};

/// One slot of the ground-truth set after padding.
#[derive(Clone, Copy, Debug)]
pub enum Target<'a> {
    Object {
        object: &'a GroundTruthObject,
        model: &'a ObjectModel,
    },
    NoObject,
}

impl Target<'_> {
    pub fn is_object(&self) -> bool {
        matches!(self, Target::Object { .. })
    }
}

/// Resolves model references and pads the ground truth with no-object
/// slots up to `n_c`.
pub fn pad_targets<'a>(
    objects: &'a [GroundTruthObject],
    models: &'a BTreeMap<String, ObjectModel>,
    n_c: usize,
) -> Result<Vec<Target<'a>>> {
    if objects.len() > n_c {
        return Err(Error::CardinalityMismatch {
            expected: n_c,
            found: objects.len(),
        });
    }
    let mut targets = Vec::with_capacity(n_c);
    for object in objects {
        let model = models
            .get(&object.model_ref)
            .ok_or_else(|| Error::DanglingReference(format!("model '{}'", object.model_ref)))?;
        targets.push(Target::Object { object, model });
    }
    targets.resize(n_c, Target::NoObject);
    Ok(targets)
}

/// How the classification probability enters the match cost.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassCost {
    /// `-p(c)`
    NegProb,
    /// `-log p(c)`, the same term the set loss uses.
    NegLogProb,
}

/// Cost of pairing a no-object slot with a prediction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptySlotCost {
    Zero,
    /// The class cost of predicting no-object, scaled by the no-object weight.
    ClassTerm,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchWeights {
    pub loss: LossWeights,
    /// Weight of the pose loss inside the match cost.
    pub lambda_match: f64,
    pub class_cost: ClassCost,
    pub empty_slot: EmptySlotCost,
}

impl Default for MatchWeights {
    fn default() -> Self {
        MatchWeights {
            loss: LossWeights::default(),
            lambda_match: 0.0,
            class_cost: ClassCost::NegProb,
            empty_slot: EmptySlotCost::Zero,
        }
    }
}

impl MatchWeights {
    /// Match cost whose per-pair value equals that pair's contribution to
    /// the set loss, so the optimal assignment also minimizes the loss.
    pub fn mirroring(loss: LossWeights) -> Self {
        MatchWeights {
            loss,
            lambda_match: loss.lambda_pose,
            class_cost: ClassCost::NegLogProb,
            empty_slot: EmptySlotCost::ClassTerm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if !(self.lambda_match >= 0.0 && self.lambda_match.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lambda_match = {} must be >= 0",
                self.lambda_match
            )));
        }
        Ok(())
    }

    fn class_term(&self, p: f64) -> f64 {
        match self.class_cost {
            ClassCost::NegProb => -p,
            ClassCost::NegLogProb => neg_log_prob(p),
        }
    }
}

pub fn match_cost(target: &Target<'_>, pred: &PredictionTuple, weights: &MatchWeights) -> Result<f64> {
    match target {
        Target::NoObject => Ok(match weights.empty_slot {
            EmptySlotCost::Zero => 0.0,
            EmptySlotCost::ClassTerm => {
                weights.loss.no_object_weight * weights.class_term(pred.class_dist.no_object_prob())
            }
        }),
        Target::Object { object, model } => {
            let num_classes = pred.class_dist.num_classes();
            if object.class_id >= num_classes {
                return Err(Error::InvalidClass {
                    class_id: object.class_id,
                    num_classes,
                });
            }
            let mut cost = weights.class_term(pred.class_dist.prob(object.class_id)?)
                + patch_loss(&object.patch, &pred.patch, &weights.loss);
            if weights.lambda_match > 0.0 {
                cost += weights.lambda_match
                    * pose_loss(&object.pose, &pred.pose, &model.points, model.symmetric)?;
            }
            Ok(cost)
        }
    }
}

/// Dense square matrix of finite pairing costs, row = ground truth slot,
/// column = prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    n: usize,
    costs: Vec<f64>,
}

impl CostMatrix {
    pub fn new(n: usize, costs: Vec<f64>) -> Result<Self> {
        if costs.len() != n * n {
            return Err(Error::InvalidCost(format!(
                "{} entries do not form a {n}x{n} matrix",
                costs.len()
            )));
        }
        if let Some(i) = costs.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidCost(format!(
                "entry ({}, {}) = {} is not finite",
                i / n.max(1),
                i % n.max(1),
                costs[i]
            )));
        }
        Ok(CostMatrix { n, costs })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(row) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::InvalidCost(format!(
                "row of length {} in a {n}-row matrix",
                row.len()
            )));
        }
        CostMatrix::new(n, rows.concat())
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.costs[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.costs[i * self.n..(i + 1) * self.n]
    }

    /// `sum_i cost[i][perm[i]]`, accumulated in row order.
    pub fn total(&self, perm: &[usize]) -> f64 {
        perm.iter().enumerate().map(|(i, &j)| self.get(i, j)).sum()
    }
}

/// Ground truth slot `i` is paired with prediction `perm[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    pub perm: Vec<usize>,
    pub total_cost: f64,
}

impl Assignment {
    /// Panics unless `perm` is a permutation of `0..perm.len()`.
    pub fn new(perm: Vec<usize>, total_cost: f64) -> Self {
        let mut seen = vec![false; perm.len()];
        for &j in &perm {
            assert!(
                j < perm.len() && !std::mem::replace(&mut seen[j], true),
                "assignment {perm:?} is not a bijection"
            );
        }
        Assignment { perm, total_cost }
    }
}

pub fn build_cost_matrix(
    targets: &[Target<'_>],
    preds: &[PredictionTuple],
    weights: &MatchWeights,
) -> Result<CostMatrix> {
    if targets.len() != preds.len() {
        return Err(Error::CardinalityMismatch {
            expected: targets.len(),
            found: preds.len(),
        });
    }
    let mut costs = Vec::with_capacity(targets.len() * preds.len());
    for target in targets {
        for pred in preds {
            costs.push(match_cost(target, pred, weights)?);
        }
    }
    CostMatrix::new(targets.len(), costs)
}

/// Minimum-cost perfect matching. Among several optimal permutations the
/// lexicographically smallest one is returned.
pub fn hungarian_assign(costs: &CostMatrix) -> Result<Assignment> {
    let n = costs.size();
    if n == 0 {
        return Ok(Assignment::new(Vec::new(), 0.0));
    }
    let (base, u, v) = kuhn_munkres(costs);

    // Every optimal permutation lies on edges with zero reduced cost under an
    // optimal dual, and every perfect matching on those edges is optimal.
    let scale = costs.costs.iter().fold(1.0f64, |m, c| m.max(c.abs()));
    let eps = 1e-12 * scale * n as f64;
    let mut tight = vec![false; n * n];
    for i in 0..n {
        for j in 0..n {
            tight[i * n + j] = costs.get(i, j) - u[i] - v[j] <= eps;
        }
        tight[i * n + base[i]] = true;
    }
    let lex = lexicographic_perfect_matching(n, &tight).unwrap_or_else(|| base.clone());

    let (base_total, lex_total) = (costs.total(&base), costs.total(&lex));
    let assignment = if lex_total <= base_total {
        Assignment::new(lex, lex_total)
    } else {
        Assignment::new(base, base_total)
    };
    Ok(assignment)
}

/// Dense O(n^3) shortest-augmenting-path Hungarian method. Returns the
/// row-to-column permutation with the row and column potentials.
fn kuhn_munkres(costs: &CostMatrix) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = costs.size();
    // 1-based with a virtual column 0, the classic formulation.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        col_owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = costs.get(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut perm = vec![0usize; n];
    for j in 1..=n {
        perm[col_owner[j] - 1] = j - 1;
    }
    (perm, u[1..].to_vec(), v[1..].to_vec())
}

/// Lexicographically smallest perfect matching in the bipartite graph given
/// by the `n x n` adjacency `allowed`, or `None` if there is none.
fn lexicographic_perfect_matching(n: usize, allowed: &[bool]) -> Option<Vec<usize>> {
    let mut fixed = Vec::with_capacity(n);
    let mut col_used = vec![false; n];
    for i in 0..n {
        let choice = (0..n).find(|&j| {
            if col_used[j] || !allowed[i * n + j] {
                return false;
            }
            col_used[j] = true;
            let ok = has_perfect_matching(n, allowed, i + 1, &col_used);
            col_used[j] = false;
            ok
        })?;
        col_used[choice] = true;
        fixed.push(choice);
    }
    Some(fixed)
}

/// Whether rows `first_row..n` can be matched into the columns not in
/// `col_used` (Kuhn's augmenting paths).
fn has_perfect_matching(n: usize, allowed: &[bool], first_row: usize, col_used: &[bool]) -> bool {
    fn augment(
        row: usize,
        n: usize,
        allowed: &[bool],
        col_used: &[bool],
        visited: &mut [bool],
        owner: &mut [Option<usize>],
    ) -> bool {
        for j in 0..n {
            if col_used[j] || visited[j] || !allowed[row * n + j] {
                continue;
            }
            visited[j] = true;
            let free = match owner[j] {
                None => true,
                Some(other) => augment(other, n, allowed, col_used, visited, owner),
            };
            if free {
                owner[j] = Some(row);
                return true;
            }
        }
        false
    }

    let mut owner = vec![None; n];
    (first_row..n).all(|row| {
        let mut visited = vec![false; n];
        augment(row, n, allowed, col_used, &mut visited, &mut owner)
    })
}
