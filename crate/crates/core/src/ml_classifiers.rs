//! Supervised classifiers over feature vectors: k-nearest neighbours, naive
//! Bayes, CART, regularized linear discriminant, one-vs-all RBF SVM and
//! bagged trees.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{argmax_first, Prediction};
use crate::error::{Error, Result};
use crate::seed;
use crate::signatures::Polarization;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MlFamily {
    Knn,
    NaiveBayes,
    Tree,
    Discriminant,
    Svm,
    Ensemble,
}

impl MlFamily {
    pub const ALL: [MlFamily; 6] = [
        MlFamily::Knn,
        MlFamily::NaiveBayes,
        MlFamily::Tree,
        MlFamily::Discriminant,
        MlFamily::Svm,
        MlFamily::Ensemble,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MlFamily::Knn => "knn",
            MlFamily::NaiveBayes => "nb",
            MlFamily::Tree => "tree",
            MlFamily::Discriminant => "da",
            MlFamily::Svm => "svm",
            MlFamily::Ensemble => "ensemble",
        }
    }
}

impl fmt::Display for MlFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MlFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "knn" => Ok(MlFamily::Knn),
            "nb" | "naivebayes" | "naive_bayes" => Ok(MlFamily::NaiveBayes),
            "tree" | "cart" => Ok(MlFamily::Tree),
            "da" | "lda" | "discriminant" => Ok(MlFamily::Discriminant),
            "svm" => Ok(MlFamily::Svm),
            "ensemble" | "bag" => Ok(MlFamily::Ensemble),
            other => Err(Error::Validation(format!("unknown ML family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    Euclidean,
    Chebyshev,
    Cityblock,
}

impl FromStr for Distance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" => Ok(Distance::Euclidean),
            "chebyshev" => Ok(Distance::Chebyshev),
            "cityblock" | "manhattan" => Ok(Distance::Cityblock),
            other => Err(Error::Validation(format!("unknown distance `{other}`"))),
        }
    }
}

impl Distance {
    pub fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        let d = a.iter().zip(b).map(|(x, y)| (x - y).abs());
        match self {
            Distance::Euclidean => d.map(|v| v * v).sum::<f64>().sqrt(),
            Distance::Chebyshev => d.fold(0.0, f64::max),
            Distance::Cityblock => d.sum(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NbMode {
    Gaussian,
    Kernel,
}

impl FromStr for NbMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(NbMode::Gaussian),
            "kernel" => Ok(NbMode::Kernel),
            other => Err(Error::Validation(format!(
                "unknown naive Bayes mode `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub num_neighbors: usize,
    pub distance: Distance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub min_leaf_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DaParams {
    pub delta: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NbParams {
    pub mode: NbMode,
    pub kernel_width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coding {
    OneVsAll,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub box_constraint: f64,
    /// Kernel exp(−‖(x − y)/s‖²) with s = kernel_scale.
    pub kernel_scale: f64,
    pub coding: Coding,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleParams {
    pub num_learning_cycles: usize,
    pub min_leaf_size: usize,
    /// Resample with replacement for every tree; off = every tree sees the
    /// full training set.
    pub bootstrap: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlHyperparams {
    pub knn: KnnParams,
    pub tree: TreeParams,
    pub da: DaParams,
    pub nb: NbParams,
    pub svm: SvmParams,
    pub ensemble: EnsembleParams,
    /// z-score features with training statistics before fitting.
    pub standardize: bool,
}

impl Default for MlHyperparams {
    fn default() -> Self {
        Self {
            knn: KnnParams {
                num_neighbors: 1,
                distance: Distance::Chebyshev,
            },
            tree: TreeParams { min_leaf_size: 26 },
            da: DaParams {
                delta: 7.9588e-5,
                gamma: 0.2689,
            },
            nb: NbParams {
                mode: NbMode::Kernel,
                kernel_width: 0.15096,
            },
            svm: SvmParams {
                box_constraint: 473.16,
                kernel_scale: 0.0014583,
                coding: Coding::OneVsAll,
            },
            ensemble: EnsembleParams {
                num_learning_cycles: 67,
                min_leaf_size: 86,
                bootstrap: true,
            },
            standardize: true,
        }
    }
}

impl MlHyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(m.to_string()));
        if self.knn.num_neighbors < 1 {
            return bad("num_neighbors must be ≥ 1");
        }
        if self.tree.min_leaf_size < 1 || self.ensemble.min_leaf_size < 1 {
            return bad("min_leaf_size must be ≥ 1");
        }
        if !(self.da.delta >= 0.0) || !(0.0..=1.0).contains(&self.da.gamma) {
            return bad("DA needs delta ≥ 0 and gamma in [0, 1]");
        }
        if !(self.svm.box_constraint > 0.0) || !(self.svm.kernel_scale > 0.0) {
            return bad("SVM box constraint and kernel scale must be positive");
        }
        if !(self.nb.kernel_width > 0.0) {
            return bad("kernel width must be positive");
        }
        if self.ensemble.num_learning_cycles < 1 {
            return bad("ensemble needs at least one learning cycle");
        }
        Ok(())
    }
}

/// The published tuned values. Only one operating point (25 GHz, HH) was
/// published, so every frequency and polarization receives the same preset.
pub fn default_hyperparams(_frequency_ghz: f64, _polarization: Polarization) -> MlHyperparams {
    MlHyperparams::default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Column means and sample standard deviations; a zero deviation is
    /// replaced by 1 so constant features pass through centered.
    pub fn fit(x: &[Vec<f64>]) -> Self {
        let p = x[0].len();
        let n = x.len() as f64;
        let mean: Vec<f64> = (0..p)
            .map(|f| x.iter().map(|r| r[f]).sum::<f64>() / n)
            .collect();
        let std = (0..p)
            .map(|f| {
                let ss: f64 = x.iter().map(|r| (r[f] - mean[f]).powi(2)).sum();
                let s = if x.len() > 1 {
                    (ss / (n - 1.0)).sqrt()
                } else {
                    0.0
                };
                if s > 0.0 && s.is_finite() {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

/// One CART node; leaves have `split == None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub split: Option<Split>,
    /// Class proportions of the training samples reaching this node.
    pub proportions: Vec<f64>,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature: usize,
    /// Samples with `x[feature] <= threshold` go left.
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

fn gini(counts: &[f64], n: f64) -> f64 {
    1.0 - counts.iter().map(|c| (c / n) * (c / n)).sum::<f64>()
}

impl Tree {
    /// Grows a Gini CART on the rows `idx` of `x`. Nodes split only when both
    /// children keep at least `min_leaf` samples and impurity strictly drops.
    pub fn grow(
        x: &[Vec<f64>],
        y: &[usize],
        idx: Vec<usize>,
        n_classes: usize,
        min_leaf: usize,
    ) -> Tree {
        let p = x[0].len();
        let mut nodes: Vec<TreeNode> = Vec::new();
        let mut stack: Vec<(usize, Vec<usize>)> = Vec::new();
        let push_node = |nodes: &mut Vec<TreeNode>, rows: &[usize]| {
            let mut counts = vec![0.0; n_classes];
            for &i in rows {
                counts[y[i]] += 1.0;
            }
            let n = rows.len() as f64;
            nodes.push(TreeNode {
                split: None,
                proportions: counts.iter().map(|c| c / n).collect(),
                samples: rows.len(),
            });
            nodes.len() - 1
        };
        let root = push_node(&mut nodes, &idx);
        stack.push((root, idx));
        while let Some((node, rows)) = stack.pop() {
            let n = rows.len();
            let parent_counts: Vec<f64> = nodes[node]
                .proportions
                .iter()
                .map(|q| q * n as f64)
                .collect();
            let parent_gini = gini(&parent_counts, n as f64);
            if parent_gini <= 0.0 || n < 2 * min_leaf {
                continue;
            }
            let mut best: Option<(f64, usize, f64)> = None;
            for f in 0..p {
                let mut order = rows.clone();
                order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
                let mut left = vec![0.0; n_classes];
                let mut right = parent_counts.clone();
                for i in 1..n {
                    let c = y[order[i - 1]];
                    left[c] += 1.0;
                    right[c] -= 1.0;
                    let (lo, hi) = (x[order[i - 1]][f], x[order[i]][f]);
                    if i < min_leaf || n - i < min_leaf || !(lo < hi) {
                        continue;
                    }
                    let (nl, nr) = (i as f64, (n - i) as f64);
                    let child = (nl * gini(&left, nl) + nr * gini(&right, nr)) / n as f64;
                    let gain = parent_gini - child;
                    if gain > 1e-12 && best.is_none_or(|b| gain > b.0) {
                        let mid = lo + (hi - lo) / 2.0;
                        let threshold = if mid < hi { mid } else { lo };
                        best = Some((gain, f, threshold));
                    }
                }
            }
            if let Some((_, feature, threshold)) = best {
                let (l, r): (Vec<usize>, Vec<usize>) =
                    rows.iter().partition(|&&i| x[i][feature] <= threshold);
                let left = push_node(&mut nodes, &l);
                let right = push_node(&mut nodes, &r);
                nodes[node].split = Some(Split {
                    feature,
                    threshold,
                    left,
                    right,
                });
                stack.push((right, r));
                stack.push((left, l));
            }
        }
        Tree { nodes }
    }

    pub fn leaf(&self, x: &[f64]) -> &TreeNode {
        let mut node = &self.nodes[0];
        while let Some(s) = node.split {
            node = &self.nodes[if x[s.feature] <= s.threshold {
                s.left
            } else {
                s.right
            }];
        }
        node
    }

    pub fn leaves(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(|n| n.split.is_none())
    }
}

/// One binary machine: f(x) = Σ coefᵢ K(svᵢ, x) − rho.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryMachine {
    pub support_vectors: Vec<Vec<f64>>,
    /// αᵢ·yᵢ per support vector.
    pub coef: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
}

fn rbf(a: &[f64], b: &[f64], scale: f64) -> f64 {
    let d2: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| ((x - y) / scale).powi(2))
        .sum();
    (-d2).exp()
}

pub const SMO_TOL: f64 = 1e-3;
pub const SMO_MAX_ITER: usize = 1_000_000;
const TAU: f64 = 1e-12;

/// Soft-margin SVM dual solved by SMO with second-order working-set
/// selection, to KKT violation below [`SMO_TOL`].
pub fn train_binary_svm(x: &[Vec<f64>], y: &[f64], c: f64, scale: f64) -> Result<BinaryMachine> {
    let n = x.len();
    let k: Vec<f64> = {
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = rbf(&x[i], &x[j], scale);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        k
    };
    let q = |i: usize, j: usize| y[i] * y[j] * k[i * n + j];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut iter = 0;
    loop {
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            let v = if y[t] > 0.0 {
                (alpha[t] < c).then_some(-grad[t])
            } else {
                (alpha[t] > 0.0).then_some(grad[t])
            };
            if let Some(v) = v {
                if v >= gmax {
                    gmax = v;
                    i_sel = Some(t);
                }
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut obj_min = f64::INFINITY;
        if let Some(i) = i_sel {
            let qii = q(i, i);
            for t in 0..n {
                let (in_low, v) = if y[t] > 0.0 {
                    (alpha[t] > 0.0, grad[t])
                } else {
                    (alpha[t] < c, -grad[t])
                };
                if !in_low {
                    continue;
                }
                gmax2 = gmax2.max(v);
                let grad_diff = gmax + v;
                if grad_diff > 0.0 {
                    let quad = qii + q(t, t) - 2.0 * y[i] * y[t] * q(i, t);
                    let quad = if quad > 0.0 { quad } else { TAU };
                    let obj = -(grad_diff * grad_diff) / quad;
                    if obj <= obj_min {
                        obj_min = obj;
                        j_sel = Some(t);
                    }
                }
            }
        }
        let (i, j) = match (i_sel, j_sel) {
            (Some(i), Some(j)) if gmax + gmax2 >= SMO_TOL => (i, j),
            _ => break,
        };
        iter += 1;
        if iter > SMO_MAX_ITER {
            return Err(Error::Numeric(format!(
                "SMO did not reach KKT tolerance within {SMO_MAX_ITER} iterations"
            )));
        }
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = q(i, i) + q(j, j) + 2.0 * q(i, j);
            let quad = if quad > 0.0 { quad } else { TAU };
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = q(i, i) + q(j, j) - 2.0 * q(i, j);
            let quad = if quad > 0.0 { quad } else { TAU };
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q(t, i) * di + q(t, j) * dj;
        }
    }
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free_sum, mut free_n) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        let at_upper = alpha[t] >= c;
        let at_lower = alpha[t] <= 0.0;
        if at_upper {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if at_lower {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free_sum += yg;
            free_n += 1;
        }
    }
    let rho = if free_n > 0 {
        free_sum / free_n as f64
    } else {
        (ub + lb) / 2.0
    };
    let (mut support_vectors, mut coef) = (Vec::new(), Vec::new());
    for t in 0..n {
        if alpha[t] > 0.0 {
            support_vectors.push(x[t].clone());
            coef.push(alpha[t] * y[t]);
        }
    }
    Ok(BinaryMachine {
        support_vectors,
        coef,
        rho,
        iterations: iter,
    })
}

impl BinaryMachine {
    pub fn decision(&self, x: &[f64], scale: f64) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.coef)
            .map(|(sv, a)| a * rbf(sv, x, scale))
            .sum::<f64>()
            - self.rho
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum NbState {
    /// Per class, per feature (mean, variance).
    Gaussian { moments: Vec<Vec<(f64, f64)>> },
    /// Per class, per feature training values.
    Kernel {
        values: Vec<Vec<Vec<f64>>>,
        width: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum MlState {
    Knn {
        x: Vec<Vec<f64>>,
        y: Vec<usize>,
        params: KnnParams,
    },
    NaiveBayes {
        state: NbState,
        log_priors: Vec<f64>,
    },
    Tree {
        tree: Tree,
    },
    Discriminant {
        /// Row-major inverse of the regularized pooled covariance.
        precision: Vec<f64>,
        weights: Vec<Vec<f64>>,
        constants: Vec<f64>,
    },
    Svm {
        machines: Vec<BinaryMachine>,
        kernel_scale: f64,
    },
    Ensemble {
        trees: Vec<Tree>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlClassifier {
    pub family: MlFamily,
    pub hyperparams: MlHyperparams,
    pub classes: Vec<String>,
    pub standardizer: Option<Standardizer>,
    pub state: MlState,
}

/// Variance floor for Gaussian naive Bayes (in standardized units).
const NB_VAR_FLOOR: f64 = 1e-10;

fn ln_normal(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (x - mean).powi(2) / (2.0 * var)
}

fn min_per_class(family: MlFamily, hp: &MlHyperparams) -> usize {
    match family {
        MlFamily::Knn => hp.knn.num_neighbors,
        MlFamily::Tree => hp.tree.min_leaf_size,
        MlFamily::Ensemble => hp.ensemble.min_leaf_size,
        MlFamily::NaiveBayes | MlFamily::Discriminant => 2,
        MlFamily::Svm => 1,
    }
}

fn bootstrap_tree(
    x: &[Vec<f64>],
    y: &[usize],
    n_classes: usize,
    p: &EnsembleParams,
    seed_: u64,
) -> Tree {
    let n = x.len();
    let idx: Vec<usize> = if p.bootstrap {
        let mut rng = seed::rng(seed_);
        (0..n).map(|_| rng.random_range(0..n)).collect()
    } else {
        (0..n).collect()
    };
    Tree::grow(x, y, idx, n_classes, p.min_leaf_size)
}

/// Trains one family. `labels[i]` is the class of row `x[i]`.
pub fn train(
    family: MlFamily,
    x: &[Vec<f64>],
    labels: &[String],
    hp: &MlHyperparams,
    seed_: u64,
) -> Result<MlClassifier> {
    hp.validate()?;
    if x.len() != labels.len() || x.is_empty() {
        return Err(Error::Validation(format!(
            "{} feature rows for {} labels",
            x.len(),
            labels.len()
        )));
    }
    let p = x[0].len();
    if p == 0
        || x.iter()
            .any(|r| r.len() != p || r.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::Validation(
            "feature rows must be non-empty, finite and equally long".into(),
        ));
    }
    let mut classes: Vec<String> = labels.to_vec();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::Validation("at least two classes are needed".into()));
    }
    let y: Vec<usize> = labels
        .iter()
        .map(|l| classes.binary_search(l).unwrap_or_default())
        .collect();
    let k = classes.len();
    let counts: Vec<usize> = (0..k)
        .map(|c| y.iter().filter(|&&v| v == c).count())
        .collect();
    let need = min_per_class(family, hp);
    if let Some(c) = (0..k).find(|&c| counts[c] < need) {
        return Err(Error::Validation(format!(
            "class `{}` has {} samples; {family} needs at least {need}",
            classes[c], counts[c]
        )));
    }
    let standardizer = hp.standardize.then(|| Standardizer::fit(x));
    let xs: Vec<Vec<f64>> = match &standardizer {
        Some(s) => x.iter().map(|r| s.apply(r)).collect(),
        None => x.to_vec(),
    };
    let n = xs.len() as f64;
    let state = match family {
        MlFamily::Knn => MlState::Knn {
            x: xs,
            y,
            params: hp.knn,
        },
        MlFamily::NaiveBayes => {
            let log_priors = counts.iter().map(|&c| (c as f64 / n).ln()).collect();
            let rows = |c: usize| {
                xs.iter()
                    .zip(&y)
                    .filter(move |(_, &l)| l == c)
                    .map(|(r, _)| r)
            };
            let state = match hp.nb.mode {
                NbMode::Gaussian => NbState::Gaussian {
                    moments: (0..k)
                        .map(|c| {
                            let m = counts[c] as f64;
                            (0..p)
                                .map(|f| {
                                    let mean = rows(c).map(|r| r[f]).sum::<f64>() / m;
                                    let var = rows(c).map(|r| (r[f] - mean).powi(2)).sum::<f64>()
                                        / (m - 1.0);
                                    (mean, var.max(NB_VAR_FLOOR))
                                })
                                .collect()
                        })
                        .collect(),
                },
                NbMode::Kernel => NbState::Kernel {
                    values: (0..k)
                        .map(|c| (0..p).map(|f| rows(c).map(|r| r[f]).collect()).collect())
                        .collect(),
                    width: hp.nb.kernel_width,
                },
            };
            MlState::NaiveBayes { state, log_priors }
        }
        MlFamily::Tree => MlState::Tree {
            tree: Tree::grow(&xs, &y, (0..xs.len()).collect(), k, hp.tree.min_leaf_size),
        },
        MlFamily::Discriminant => train_discriminant(&xs, &y, &counts, &hp.da)?,
        MlFamily::Svm => {
            let machines = (0..k)
                .into_par_iter()
                .map(|c| {
                    let yy: Vec<f64> = y.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
                    train_binary_svm(&xs, &yy, hp.svm.box_constraint, hp.svm.kernel_scale)
                })
                .collect::<Result<Vec<_>>>()?;
            MlState::Svm {
                machines,
                kernel_scale: hp.svm.kernel_scale,
            }
        }
        MlFamily::Ensemble => MlState::Ensemble {
            trees: (0..hp.ensemble.num_learning_cycles)
                .into_par_iter()
                .map(|t| bootstrap_tree(&xs, &y, k, &hp.ensemble, seed::derive(seed_, &[t as u64])))
                .collect(),
        },
    };
    Ok(MlClassifier {
        family,
        hyperparams: *hp,
        classes,
        standardizer,
        state,
    })
}

fn train_discriminant(
    x: &[Vec<f64>],
    y: &[usize],
    counts: &[usize],
    da: &DaParams,
) -> Result<MlState> {
    let (n, p, k) = (x.len(), x[0].len(), counts.len());
    let means: Vec<DVector<f64>> = (0..k)
        .map(|c| {
            let mut m = DVector::zeros(p);
            for (r, _) in x.iter().zip(y).filter(|(_, &l)| l == c) {
                m += DVector::from_column_slice(r);
            }
            m / counts[c] as f64
        })
        .collect();
    let mut cov = DMatrix::<f64>::zeros(p, p);
    for (r, &c) in x.iter().zip(y) {
        let d = DVector::from_column_slice(r) - &means[c];
        cov += &d * d.transpose();
    }
    let dof = if n > k { n - k } else { n };
    cov /= dof as f64;
    let diag = DMatrix::from_diagonal(&cov.diagonal());
    let reg = cov * (1.0 - da.gamma) + diag * da.gamma;
    let chol = reg.clone().cholesky().ok_or_else(|| {
        Error::SingularMatrix(if da.gamma == 0.0 {
            "pooled covariance is singular; use gamma > 0".into()
        } else {
            "regularized covariance is singular (a feature has zero within-class variance)".into()
        })
    })?;
    let precision = chol.inverse();
    let mut weights = Vec::with_capacity(k);
    let mut constants = Vec::with_capacity(k);
    for c in 0..k {
        let mut w = &precision * &means[c];
        w.iter_mut().for_each(|v| {
            if v.abs() <= da.delta {
                *v = 0.0;
            }
        });
        constants.push(-0.5 * w.dot(&means[c]) + (counts[c] as f64 / n as f64).ln());
        weights.push(w.iter().copied().collect());
    }
    Ok(MlState::Discriminant {
        precision: precision.transpose().iter().copied().collect(),
        weights,
        constants,
    })
}

impl MlClassifier {
    /// Per-class scores, larger is better, in `classes` order.
    pub fn scores(&self, features: &[f64]) -> Result<Vec<f64>> {
        let p = self.standardizer.as_ref().map(|s| s.mean.len());
        if let Some(p) = p {
            if features.len() != p {
                return Err(Error::Validation(format!(
                    "expected {p} features, got {}",
                    features.len()
                )));
            }
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("features must be finite".into()));
        }
        let x = match &self.standardizer {
            Some(s) => s.apply(features),
            None => features.to_vec(),
        };
        let k = self.classes.len();
        Ok(match &self.state {
            MlState::Knn { x: tx, y, params } => {
                let mut d: Vec<(f64, usize)> = tx
                    .iter()
                    .enumerate()
                    .map(|(i, r)| (params.distance.eval(r, &x), i))
                    .collect();
                let kk = params.num_neighbors.min(d.len());
                d.select_nth_unstable_by(kk - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let mut votes = vec![0.0; k];
                for &(_, i) in &d[..kk] {
                    votes[y[i]] += 1.0 / kk as f64;
                }
                votes
            }
            MlState::NaiveBayes { state, log_priors } => match state {
                NbState::Gaussian { moments } => (0..k)
                    .map(|c| {
                        log_priors[c]
                            + moments[c]
                                .iter()
                                .zip(&x)
                                .map(|(&(m, v), &xi)| ln_normal(xi, m, v))
                                .sum::<f64>()
                    })
                    .collect(),
                NbState::Kernel { values, width } => (0..k)
                    .map(|c| {
                        log_priors[c]
                            + values[c]
                                .iter()
                                .zip(&x)
                                .map(|(vals, &xi)| {
                                    let terms: Vec<f64> = vals
                                        .iter()
                                        .map(|&v| ln_normal(xi, v, width * width))
                                        .collect();
                                    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                                    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
                                        - (vals.len() as f64).ln()
                                })
                                .sum::<f64>()
                    })
                    .collect(),
            },
            MlState::Tree { tree } => tree.leaf(&x).proportions.clone(),
            MlState::Discriminant {
                precision,
                weights,
                constants,
            } => {
                let p = x.len();
                let mut quad = 0.0;
                for i in 0..p {
                    for j in 0..p {
                        quad += x[i] * precision[i * p + j] * x[j];
                    }
                }
                (0..k)
                    .map(|c| {
                        -0.5 * quad
                            + weights[c].iter().zip(&x).map(|(w, v)| w * v).sum::<f64>()
                            + constants[c]
                    })
                    .collect()
            }
            MlState::Svm {
                machines,
                kernel_scale,
            } => machines
                .iter()
                .map(|m| m.decision(&x, *kernel_scale))
                .collect(),
            MlState::Ensemble { trees } => {
                let mut acc = vec![0.0; k];
                for t in trees {
                    for (a, q) in acc.iter_mut().zip(&t.leaf(&x).proportions) {
                        *a += q;
                    }
                }
                acc.iter().map(|a| a / trees.len() as f64).collect()
            }
        })
    }

    pub fn predict(&self, features: &[f64]) -> Result<Prediction> {
        let scores = self.scores(features)?;
        let best = argmax_first(&scores).ok_or(Error::Indeterminate)?;
        Ok(Prediction {
            class: self.classes[best].clone(),
            scores: self.classes.iter().cloned().zip(scores).collect(),
        })
    }
}
