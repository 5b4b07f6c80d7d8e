//! Probabilistic classifiers for the density-ratio trick.
//!
//! Two built-ins: ridge-regularized logistic regression (deterministic, the
//! baseline for exactness tests) and a small random forest (25 depth-4 trees
//! with Gini splits, seeded). Both expose P(Y=1 | z) clamped away from 0 and
//! 1 so downstream odds ratios stay finite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::FeatureMatrix;
use crate::seeding::derive_seed;

/// Probability clamp: predictions live in [P_MIN, 1 - P_MIN].
pub const P_MIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Logistic,
    Forest,
}

impl std::fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ClassifierKind::Logistic => write!(f, "logistic"),
            ClassifierKind::Forest => write!(f, "forest"),
        }
    }
}

impl std::str::FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(ClassifierKind::Logistic),
            "forest" => Ok(ClassifierKind::Forest),
            other => Err(Error::config(format!(
                "unknown classifier {other:?}, expected `logistic` or `forest`"
            ))),
        }
    }
}

/// A fitted classifier discriminating calibration (Y=0) from test (Y=1).
#[derive(Debug, Clone)]
pub enum ClassifierModel {
    Logistic(LogisticModel),
    Forest(ForestModel),
}

impl ClassifierModel {
    /// Fit `kind` on labeled rows. Deterministic given `seed`; the logistic
    /// path ignores the seed entirely.
    pub fn fit(x: &FeatureMatrix, y: &[u8], kind: ClassifierKind, seed: u64) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::config(format!(
                "{} rows but {} labels",
                x.rows(),
                y.len()
            )));
        }
        if x.is_empty() {
            return Err(Error::config("cannot fit a classifier on no rows"));
        }
        Ok(match kind {
            ClassifierKind::Logistic => ClassifierModel::Logistic(LogisticModel::fit(x, y)?),
            ClassifierKind::Forest => ClassifierModel::Forest(ForestModel::fit(x, y, seed)),
        })
    }

    /// Clamped P(Y=1 | z).
    pub fn predict_proba(&self, z: &[f64]) -> f64 {
        let p = match self {
            ClassifierModel::Logistic(m) => m.predict(z),
            ClassifierModel::Forest(m) => m.predict(z),
        };
        p.clamp(P_MIN, 1.0 - P_MIN)
    }

    pub fn kind(&self) -> ClassifierKind {
        match self {
            ClassifierModel::Logistic(_) => ClassifierKind::Logistic,
            ClassifierModel::Forest(_) => ClassifierKind::Forest,
        }
    }
}

// ===== logistic regression =====

/// L2-regularized logistic regression fitted by iteratively reweighted least
/// squares. The ridge keeps separated data from diverging.
#[derive(Debug, Clone)]
pub struct LogisticModel {
    /// Coefficients; index 0 is the intercept.
    beta: Vec<f64>,
}

const LOGISTIC_RIDGE: f64 = 1e-3;
const IRLS_MAX_ITER: usize = 60;
const IRLS_TOL: f64 = 1e-10;

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl LogisticModel {
    fn fit(x: &FeatureMatrix, y: &[u8]) -> Result<Self> {
        let d = x.cols() + 1;
        let n = x.rows();
        let mut beta = vec![0.0; d];
        let phi = |i: usize, j: usize| -> f64 {
            if j == 0 {
                1.0
            } else {
                x.row(i)[j - 1]
            }
        };
        for _ in 0..IRLS_MAX_ITER {
            // Gradient and Hessian of the penalized log-likelihood.
            let mut g = vec![0.0; d];
            let mut h = vec![vec![0.0; d]; d];
            for i in 0..n {
                let mut eta = beta[0];
                for j in 1..d {
                    eta += beta[j] * phi(i, j);
                }
                let p = sigmoid(eta);
                let r = y[i] as f64 - p;
                let w = (p * (1.0 - p)).max(1e-10);
                for j in 0..d {
                    let pj = phi(i, j);
                    g[j] += pj * r;
                    for k in 0..=j {
                        h[j][k] += w * pj * phi(i, k);
                    }
                }
            }
            for j in 0..d {
                g[j] -= LOGISTIC_RIDGE * beta[j];
                h[j][j] += LOGISTIC_RIDGE;
                for k in 0..j {
                    h[k][j] = h[j][k];
                }
            }
            let delta = solve_symmetric(&mut h, &g)?;
            let mut max_step = 0.0f64;
            for j in 0..d {
                beta[j] += delta[j];
                max_step = max_step.max(delta[j].abs());
            }
            if max_step < IRLS_TOL {
                break;
            }
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::numerical("logistic fit diverged"));
        }
        Ok(LogisticModel { beta })
    }

    fn predict(&self, z: &[f64]) -> f64 {
        let mut eta = self.beta[0];
        for (b, v) in self.beta[1..].iter().zip(z) {
            eta += b * v;
        }
        sigmoid(eta)
    }
}

/// Solve A x = b for symmetric positive definite A by Gaussian elimination
/// with partial pivoting. A is consumed as scratch space.
fn solve_symmetric(a: &mut [Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let d = b.len();
    let mut x = b.to_vec();
    for col in 0..d {
        let pivot = (col..d)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-300 {
            return Err(Error::numerical("singular system in IRLS step"));
        }
        a.swap(col, pivot);
        x.swap(col, pivot);
        for row in col + 1..d {
            let f = a[row][col] / a[col][col];
            for k in col..d {
                a[row][k] -= f * a[col][k];
            }
            x[row] -= f * x[col];
        }
    }
    for col in (0..d).rev() {
        for k in col + 1..d {
            x[col] -= a[col][k] * x[k];
        }
        x[col] /= a[col][col];
    }
    Ok(x)
}

// ===== random forest =====

const N_TREES: usize = 25;
const MAX_DEPTH: usize = 4;
const MIN_SPLIT: usize = 4;

#[derive(Debug, Clone)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, z: &[f64]) -> f64 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf(p) => return *p,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if z[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }
}

/// Bagged Gini trees: 25 trees of depth 4, sqrt(d) features per split.
#[derive(Debug, Clone)]
pub struct ForestModel {
    trees: Vec<Tree>,
}

impl ForestModel {
    fn fit(x: &FeatureMatrix, y: &[u8], seed: u64) -> Self {
        let trees = (0..N_TREES)
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 11, t as u64));
                let idx: Vec<usize> = (0..x.rows()).map(|_| rng.gen_range(0..x.rows())).collect();
                let mut tree = Tree { nodes: Vec::new() };
                build_node(&mut tree, x, y, idx, 0, &mut rng);
                tree
            })
            .collect();
        ForestModel { trees }
    }

    fn predict(&self, z: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(z)).sum();
        sum / self.trees.len() as f64
    }
}

fn gini(pos: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = pos as f64 / total as f64;
    2.0 * p * (1.0 - p)
}

fn build_node(
    tree: &mut Tree,
    x: &FeatureMatrix,
    y: &[u8],
    idx: Vec<usize>,
    depth: usize,
    rng: &mut ChaCha8Rng,
) -> usize {
    let n = idx.len();
    let pos = idx.iter().filter(|&&i| y[i] == 1).count();
    let make_leaf = |tree: &mut Tree| {
        let p = pos as f64 / n as f64;
        tree.nodes.push(Node::Leaf(p));
        tree.nodes.len() - 1
    };
    if depth >= MAX_DEPTH || pos == 0 || pos == n || n < MIN_SPLIT {
        return make_leaf(tree);
    }

    // Feature subsample: partial Fisher-Yates for ceil(sqrt(d)) candidates.
    let d = x.cols();
    let mtry = (d as f64).sqrt().ceil() as usize;
    let mut features: Vec<usize> = (0..d).collect();
    for i in 0..mtry.min(d) {
        let j = rng.gen_range(i..d);
        features.swap(i, j);
    }
    features.truncate(mtry.min(d));

    let parent_impurity = gini(pos, n);
    let mut best: Option<(f64, usize, f64)> = None; // (impurity, feature, threshold)
    let mut sorted = idx.clone();
    for &f in &features {
        sorted.sort_by(|&a, &b| x.row(a)[f].total_cmp(&x.row(b)[f]));
        let mut left_pos = 0usize;
        for cut in 1..n {
            if y[sorted[cut - 1]] == 1 {
                left_pos += 1;
            }
            let (lo, hi) = (x.row(sorted[cut - 1])[f], x.row(sorted[cut])[f]);
            if lo == hi {
                continue;
            }
            let weighted = (cut as f64 * gini(left_pos, cut)
                + (n - cut) as f64 * gini(pos - left_pos, n - cut))
                / n as f64;
            if best.map_or(weighted < parent_impurity, |(b, _, _)| weighted < b) {
                best = Some((weighted, f, lo + (hi - lo) / 2.0));
            }
        }
    }

    match best {
        None => make_leaf(tree),
        Some((_, feature, threshold)) => {
            let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idx
                .into_iter()
                .partition(|&i| x.row(i)[feature] <= threshold);
            let at = tree.nodes.len();
            tree.nodes.push(Node::Leaf(0.0)); // placeholder
            let left = build_node(tree, x, y, left_idx, depth + 1, rng);
            let right = build_node(tree, x, y, right_idx, depth + 1, rng);
            tree.nodes[at] = Node::Split {
                feature,
                threshold,
                left,
                right,
            };
            at
        }
    }
}
