//! Binary decision trees grown by exact greedy search.
//!
//! Candidate thresholds are midpoints between consecutive distinct values of
//! a feature among the node's rows. A row goes left when its value is `<=`
//! the threshold. Rows with a missing (`NaN`) value follow the node's default
//! direction, which is chosen during training by trying the missing rows on
//! each side. Ties are resolved in favour of the lower feature index, then
//! the lower threshold, then sending missing values left.

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::{Error, Result};

/// A candidate only replaces the current best split when it is better by
/// more than this margin.
pub(crate) const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
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

/// Nodes stored in pre-order; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    default_left,
                    left,
                    right,
                } => {
                    let v = x[feature];
                    let go_left = if v.is_nan() { default_left } else { v <= threshold };
                    k = if go_left { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, k: usize) -> usize {
            match t.nodes[k] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(t, left).max(walk(t, right)),
            }
        }
        walk(self, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// The root split, if the tree is not a single leaf.
    pub fn root_split(&self) -> Option<(usize, f64, bool)> {
        match self.nodes[0] {
            Node::Split {
                feature,
                threshold,
                default_left,
                ..
            } => Some((feature, threshold, default_left)),
            Node::Leaf { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    #[default]
    Gini,
    Entropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until leaves are pure or cannot be split.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub criterion: Criterion,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: None,
            min_leaf: 1,
            criterion: Criterion::Gini,
        }
    }
}

/// Sufficient statistics of a set of rows. For classification trees `a` is
/// the number of positives; for boosting trees `a` and `b` are the gradient
/// and hessian sums.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Acc {
    pub n: f64,
    pub a: f64,
    pub b: f64,
}

impl Acc {
    #[inline]
    fn add(&mut self, c: (f64, f64)) {
        self.n += 1.0;
        self.a += c.0;
        self.b += c.1;
    }

    #[inline]
    fn plus(self, o: Acc) -> Acc {
        Acc {
            n: self.n + o.n,
            a: self.a + o.a,
            b: self.b + o.b,
        }
    }

    #[inline]
    fn minus(self, o: Acc) -> Acc {
        Acc {
            n: self.n - o.n,
            a: self.a - o.a,
            b: self.b - o.b,
        }
    }
}

pub(crate) trait Objective {
    fn gain(&self, parent: Acc, left: Acc, right: Acc) -> f64;
    fn admissible(&self, left: Acc, right: Acc) -> bool;
    fn leaf_value(&self, acc: Acc) -> f64;
    /// Whether the node cannot improve by splitting.
    fn is_terminal(&self, acc: Acc) -> bool;
}

pub(crate) struct ClassificationObjective {
    pub criterion: Criterion,
    pub min_leaf: usize,
}

impl ClassificationObjective {
    fn impurity(&self, acc: Acc) -> f64 {
        if acc.n == 0.0 {
            return 0.0;
        }
        let p = acc.a / acc.n;
        match self.criterion {
            Criterion::Gini => 2.0 * p * (1.0 - p),
            Criterion::Entropy => {
                let h = |q: f64| if q > 0.0 { -q * q.log2() } else { 0.0 };
                h(p) + h(1.0 - p)
            }
        }
    }
}

impl Objective for ClassificationObjective {
    /// Impurity decrease, weighted by child shares of the node.
    fn gain(&self, parent: Acc, left: Acc, right: Acc) -> f64 {
        self.impurity(parent)
            - (left.n * self.impurity(left) + right.n * self.impurity(right)) / parent.n
    }

    fn admissible(&self, left: Acc, right: Acc) -> bool {
        let m = self.min_leaf.max(1) as f64;
        left.n >= m && right.n >= m
    }

    fn leaf_value(&self, acc: Acc) -> f64 {
        if acc.n == 0.0 {
            0.0
        } else {
            acc.a / acc.n
        }
    }

    fn is_terminal(&self, acc: Acc) -> bool {
        acc.a == 0.0 || acc.a == acc.n
    }
}

/// Per-sample inputs to the builder. `rows[s]` is the matrix row of sample
/// `s` (bootstrap samples may repeat rows) and `contrib[s]` its statistics.
pub(crate) struct GrowInput<'a> {
    pub x: &'a Matrix,
    pub rows: &'a [usize],
    pub contrib: &'a [(f64, f64)],
    pub max_depth: Option<usize>,
    /// Features examined per split; `None` means all of them.
    pub mtry: Option<usize>,
}

/// Best split found at a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub default_left: bool,
    pub gain: f64,
}

/// Midpoint strictly below `hi`, so that `lo` goes left and `hi` right.
#[inline]
fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m < hi {
        m
    } else {
        lo
    }
}

/// Scans one feature's sorted non-missing samples and updates `best`.
fn scan_feature<O: Objective>(
    obj: &O,
    input: &GrowInput,
    feature: usize,
    sorted: &[u32],
    parent: Acc,
    missing: Acc,
    best: &mut Option<SplitChoice>,
) {
    let nonmissing = parent.minus(missing);
    let value = |s: u32| input.x.get(input.rows[s as usize], feature);
    let mut left = Acc::default();
    for w in 0..sorted.len().saturating_sub(1) {
        left.add(input.contrib[sorted[w] as usize]);
        let (lo, hi) = (value(sorted[w]), value(sorted[w + 1]));
        if lo >= hi {
            continue;
        }
        let right = nonmissing.minus(left);
        let threshold = midpoint(lo, hi);
        let directions: &[bool] = if missing.n > 0.0 { &[true, false] } else { &[true] };
        for &default_left in directions {
            let (l, r) = if default_left {
                (left.plus(missing), right)
            } else {
                (left, right.plus(missing))
            };
            if !obj.admissible(l, r) {
                continue;
            }
            let gain = obj.gain(parent, l, r);
            if gain <= 0.0 {
                continue;
            }
            if best.is_none_or(|b| gain > b.gain + TIE_EPS) {
                *best = Some(SplitChoice {
                    feature,
                    threshold,
                    default_left,
                    gain,
                });
            }
        }
    }
}

struct Builder<'a, 'r, O: Objective> {
    obj: &'a O,
    input: &'a GrowInput<'a>,
    rng: Option<&'r mut ChaCha8Rng>,
    nodes: Vec<Node>,
    goes_left: Vec<bool>,
}

impl<O: Objective> Builder<'_, '_, O> {
    fn build(&mut self, samples: Vec<u32>, sorted: Vec<Vec<u32>>, depth: usize) -> usize {
        let mut parent = Acc::default();
        for &s in &samples {
            parent.add(self.input.contrib[s as usize]);
        }
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: self.obj.leaf_value(parent),
        });
        let depth_capped = self.input.max_depth.is_some_and(|d| depth >= d);
        if depth_capped || samples.len() < 2 || self.obj.is_terminal(parent) {
            return at;
        }

        let d = self.input.x.n_cols();
        let features: Vec<usize> = match (self.input.mtry, self.rng.as_deref_mut()) {
            (Some(m), Some(rng)) if m < d => {
                let mut f = sample(rng, d, m).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        };

        let mut best = None;
        for &f in &features {
            let mut missing = Acc::default();
            if sorted[f].len() < samples.len() {
                for &s in &samples {
                    if self.input.x.get(self.input.rows[s as usize], f).is_nan() {
                        missing.add(self.input.contrib[s as usize]);
                    }
                }
            }
            scan_feature(self.obj, self.input, f, &sorted[f], parent, missing, &mut best);
        }
        let Some(split) = best else {
            return at;
        };

        for &s in &samples {
            let v = self.input.x.get(self.input.rows[s as usize], split.feature);
            self.goes_left[s as usize] = if v.is_nan() {
                split.default_left
            } else {
                v <= split.threshold
            };
        }
        let (ls, rs): (Vec<u32>, Vec<u32>) = samples.iter().partition(|&&s| self.goes_left[s as usize]);
        let mut lsorted = Vec::with_capacity(d);
        let mut rsorted = Vec::with_capacity(d);
        for list in sorted {
            let (l, r): (Vec<u32>, Vec<u32>) = list.into_iter().partition(|&s| self.goes_left[s as usize]);
            lsorted.push(l);
            rsorted.push(r);
        }
        drop(samples);
        let left = self.build(ls, lsorted, depth + 1);
        let right = self.build(rs, rsorted, depth + 1);
        self.nodes[at] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            default_left: split.default_left,
            left,
            right,
        };
        at
    }
}

/// Grows a tree over the samples described by `input`.
pub(crate) fn grow<O: Objective>(obj: &O, input: &GrowInput, rng: Option<&mut ChaCha8Rng>) -> Tree {
    let n = input.rows.len();
    let samples: Vec<u32> = (0..n as u32).collect();
    let sorted: Vec<Vec<u32>> = (0..input.x.n_cols())
        .map(|f| {
            let mut list: Vec<u32> = samples
                .iter()
                .copied()
                .filter(|&s| !input.x.get(input.rows[s as usize], f).is_nan())
                .collect();
            list.sort_by(|&a, &b| {
                let va = input.x.get(input.rows[a as usize], f);
                let vb = input.x.get(input.rows[b as usize], f);
                va.total_cmp(&vb).then(a.cmp(&b))
            });
            list
        })
        .collect();
    let mut builder = Builder {
        obj,
        input,
        rng,
        nodes: Vec::new(),
        goes_left: vec![false; n],
    };
    builder.build(samples, sorted, 0);
    Tree { nodes: builder.nodes }
}

pub(crate) fn check_xy(x: &Matrix, y: &[bool]) -> Result<()> {
    if x.n_rows() == 0 {
        return Err(Error::InsufficientData("empty training matrix".into()));
    }
    if y.len() != x.n_rows() {
        return Err(Error::InvalidArgument(format!(
            "{} labels for {} rows",
            y.len(),
            x.n_rows()
        )));
    }
    if x.n_cols() == 0 {
        return Err(Error::InvalidArgument("training matrix has no columns".into()));
    }
    Ok(())
}

/// A classification tree whose leaves hold the fraction of positive rows.
pub fn fit_tree(x: &Matrix, y: &[bool], params: &TreeParams) -> Result<Tree> {
    check_xy(x, y)?;
    let rows: Vec<usize> = (0..x.n_rows()).collect();
    let contrib: Vec<(f64, f64)> = y.iter().map(|&l| (f64::from(u8::from(l)), 0.0)).collect();
    let input = GrowInput {
        x,
        rows: &rows,
        contrib: &contrib,
        max_depth: params.max_depth,
        mtry: None,
    };
    let obj = ClassificationObjective {
        criterion: params.criterion,
        min_leaf: params.min_leaf,
    };
    Ok(grow(&obj, &input, None))
}
