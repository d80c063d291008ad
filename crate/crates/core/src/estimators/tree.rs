//! CART decision trees: variance reduction for regression, Gini impurity for
//! classification. Nodes live in a flat vector; node 0 is the root.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        value: Vec<f64>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
}

/// Sufficient statistics of a set of weighted rows.
trait Criterion: Clone {
    fn add(&mut self, i: usize, w: f64);
    fn sub(&mut self, i: usize, w: f64);
    /// Weighted impurity mass (impurity × total weight).
    fn impurity(&self) -> f64;
    fn leaf_value(&self) -> Vec<f64>;
}

#[derive(Clone)]
struct Variance<'a> {
    y: &'a [f64],
    w: f64,
    wy: f64,
    wyy: f64,
}

impl Criterion for Variance<'_> {
    fn add(&mut self, i: usize, w: f64) {
        let y = self.y[i];
        self.w += w;
        self.wy += w * y;
        self.wyy += w * y * y;
    }
    fn sub(&mut self, i: usize, w: f64) {
        let y = self.y[i];
        self.w -= w;
        self.wy -= w * y;
        self.wyy -= w * y * y;
    }
    fn impurity(&self) -> f64 {
        if self.w <= 0.0 {
            return 0.0;
        }
        (self.wyy - self.wy * self.wy / self.w).max(0.0)
    }
    fn leaf_value(&self) -> Vec<f64> {
        vec![self.wy / self.w]
    }
}

#[derive(Clone)]
struct Gini<'a> {
    labels: &'a [usize],
    mass: Vec<f64>,
    w: f64,
}

impl Criterion for Gini<'_> {
    fn add(&mut self, i: usize, w: f64) {
        self.mass[self.labels[i]] += w;
        self.w += w;
    }
    fn sub(&mut self, i: usize, w: f64) {
        self.mass[self.labels[i]] -= w;
        self.w -= w;
    }
    fn impurity(&self) -> f64 {
        if self.w <= 0.0 {
            return 0.0;
        }
        (self.w - self.mass.iter().map(|m| m * m).sum::<f64>() / self.w).max(0.0)
    }
    fn leaf_value(&self) -> Vec<f64> {
        self.mass.iter().map(|m| (m / self.w).max(0.0)).collect()
    }
}

struct Builder<'a, C> {
    x: &'a [f64],
    dim: usize,
    weights: Option<&'a [f64]>,
    max_depth: usize,
    min_leaf: usize,
    empty: C,
    nodes: Vec<TreeNode>,
}

impl<C: Criterion> Builder<'_, C> {
    fn weight(&self, i: usize) -> f64 {
        self.weights.map_or(1.0, |w| w[i])
    }

    fn stats(&self, rows: &[usize]) -> C {
        let mut c = self.empty.clone();
        for &i in rows {
            c.add(i, self.weight(i));
        }
        c
    }

    fn grow(&mut self, rows: &mut [usize], depth: usize) -> usize {
        let id = self.nodes.len();
        let parent = self.stats(rows);
        self.nodes.push(TreeNode::Leaf {
            value: parent.leaf_value(),
        });
        if depth >= self.max_depth || rows.len() < 2 * self.min_leaf.max(1) {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(rows, &parent) else {
            return id;
        };
        // Stable partition keeps row order deterministic within children.
        let (mut l, mut r): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&i| self.x[i * self.dim + feature] <= threshold);
        let left = self.grow(&mut l, depth + 1);
        let right = self.grow(&mut r, depth + 1);
        self.nodes[id] = TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    fn best_split(&self, rows: &[usize], parent: &C) -> Option<(usize, f64)> {
        let base = parent.impurity();
        let min_gain = 1e-12 * base.max(f64::MIN_POSITIVE);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut sorted = rows.to_vec();
        let min_leaf = self.min_leaf.max(1);
        for f in 0..self.dim {
            let value = |i: usize| self.x[i * self.dim + f];
            sorted.sort_by(|&a, &b| value(a).total_cmp(&value(b)).then(a.cmp(&b)));
            let mut left = self.empty.clone();
            let mut right = parent.clone();
            for pos in 0..sorted.len() - 1 {
                let i = sorted[pos];
                let w = self.weight(i);
                left.add(i, w);
                right.sub(i, w);
                let count = pos + 1;
                if count < min_leaf || sorted.len() - count < min_leaf {
                    continue;
                }
                let (a, b) = (value(i), value(sorted[pos + 1]));
                if a == b {
                    continue;
                }
                let gain = base - left.impurity() - right.impurity();
                if gain > min_gain && best.is_none_or(|(g, _, _)| gain > g) {
                    let mid = a + (b - a) / 2.0;
                    // Guard against the midpoint rounding onto the upper value.
                    let threshold = if mid < b { mid } else { a };
                    best = Some((gain, f, threshold));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

impl DecisionTree {
    pub fn fit_regression(
        x: &[f64],
        dim: usize,
        y: &[f64],
        weights: Option<&[f64]>,
        max_depth: usize,
        min_leaf: usize,
    ) -> Self {
        let empty = Variance {
            y,
            w: 0.0,
            wy: 0.0,
            wyy: 0.0,
        };
        Self::fit(x, dim, y.len(), weights, max_depth, min_leaf, empty)
    }

    /// Leaves hold the weighted class frequencies over `classes` labels.
    pub fn fit_classification(
        x: &[f64],
        dim: usize,
        labels: &[usize],
        classes: usize,
        weights: Option<&[f64]>,
        max_depth: usize,
        min_leaf: usize,
    ) -> Self {
        let empty = Gini {
            labels,
            mass: vec![0.0; classes],
            w: 0.0,
        };
        Self::fit(x, dim, labels.len(), weights, max_depth, min_leaf, empty)
    }

    fn fit<C: Criterion>(
        x: &[f64],
        dim: usize,
        n: usize,
        weights: Option<&[f64]>,
        max_depth: usize,
        min_leaf: usize,
        empty: C,
    ) -> Self {
        let mut builder = Builder {
            x,
            dim,
            weights,
            max_depth,
            min_leaf,
            empty,
            nodes: Vec::new(),
        };
        let mut rows: Vec<usize> = (0..n).collect();
        builder.grow(&mut rows, 0);
        Self {
            nodes: builder.nodes,
        }
    }

    pub fn predict(&self, x: &[f64]) -> &[f64] {
        let mut node = 0;
        loop {
            match &self.nodes[node] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}
