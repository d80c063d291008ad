//! k-nearest-neighbor regression over a k-d tree.
//!
//! Neighbors are the k smallest `(squared distance, training index)` pairs,
//! so equidistant points resolve to the lowest training index. The prediction
//! is the weighted mean of neighbor targets (uniform weights unless fitted
//! with inverse-propensity weights).

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

const LEAF_SIZE: usize = 16;

/// Serialized form: the training data. The tree is rebuilt on load.
#[derive(Serialize, Deserialize)]
struct KnnStore {
    k: usize,
    dim: usize,
    points: Vec<f64>,
    targets: Vec<f64>,
    #[serde(default)]
    weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "KnnStore", into = "KnnStore")]
pub struct KnnModel {
    k: usize,
    dim: usize,
    points: Vec<f64>,
    targets: Vec<f64>,
    weights: Option<Vec<f64>>,
    // Training indices reordered so each node owns a contiguous range.
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

impl From<KnnStore> for KnnModel {
    fn from(s: KnnStore) -> Self {
        Self::build(s.points, s.dim, s.targets, s.weights, s.k)
    }
}

impl From<KnnModel> for KnnStore {
    fn from(m: KnnModel) -> Self {
        KnnStore {
            k: m.k,
            dim: m.dim,
            points: m.points,
            targets: m.targets,
            weights: m.weights,
        }
    }
}

#[derive(PartialEq)]
struct Candidate {
    dist: f64,
    index: usize,
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.index.cmp(&other.index))
    }
}

impl KnnModel {
    pub fn fit(x: &[f64], dim: usize, y: &[f64], weights: Option<&[f64]>, k: usize) -> Self {
        Self::build(x.to_vec(), dim, y.to_vec(), weights.map(<[f64]>::to_vec), k)
    }

    fn build(points: Vec<f64>, dim: usize, targets: Vec<f64>, weights: Option<Vec<f64>>, k: usize) -> Self {
        let n = targets.len();
        let mut model = Self {
            k: k.min(n).max(1),
            dim,
            points,
            targets,
            weights,
            order: (0..n).collect(),
            nodes: Vec::new(),
        };
        let mut order = std::mem::take(&mut model.order);
        model.split(&mut order, 0, n);
        model.order = order;
        model
    }

    pub fn k(&self) -> usize {
        self.k
    }

    fn coord(&self, i: usize, axis: usize) -> f64 {
        self.points[i * self.dim + axis]
    }

    /// Builds the subtree for `order[start..end]`, returning its node index.
    fn split(&mut self, order: &mut [usize], start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { start, end });
        if end - start <= LEAF_SIZE || self.dim == 0 {
            return id;
        }
        // Axis of largest spread.
        let mut axis = 0;
        let mut spread = -1.0;
        for a in 0..self.dim {
            let (lo, hi) = order[start..end].iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                let v = self.coord(i, a);
                (lo.min(v), hi.max(v))
            });
            if hi - lo > spread {
                spread = hi - lo;
                axis = a;
            }
        }
        if spread <= 0.0 {
            return id;
        }
        let mid = (start + end) / 2;
        order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            self.coord(a, axis).total_cmp(&self.coord(b, axis)).then(a.cmp(&b))
        });
        let value = self.coord(order[mid], axis);
        let left = self.split(order, start, mid);
        let right = self.split(order, mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    pub fn predict(&self, q: &[f64]) -> f64 {
        let mut heap = BinaryHeap::with_capacity(self.k + 1);
        self.search(0, q, &mut heap);
        let (mut num, mut den) = (0.0, 0.0);
        // Sum in neighbor order for reproducibility.
        let mut found = heap.into_vec();
        found.sort_unstable();
        for c in found {
            let w = self.weights.as_ref().map_or(1.0, |w| w[c.index]);
            num += w * self.targets[c.index];
            den += w;
        }
        num / den
    }

    /// The k nearest training indices, nearest first.
    pub fn neighbors(&self, q: &[f64]) -> Vec<usize> {
        let mut heap = BinaryHeap::with_capacity(self.k + 1);
        self.search(0, q, &mut heap);
        heap.into_sorted_vec().into_iter().map(|c| c.index).collect()
    }

    fn search(&self, node: usize, q: &[f64], heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let p = &self.points[i * self.dim..(i + 1) * self.dim];
                    let dist: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
                    let c = Candidate { dist, index: i };
                    if heap.len() < self.k {
                        heap.push(c);
                    } else if c < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, heap);
                // Equal distances may still hide a lower index, so only prune
                // strictly farther planes.
                if heap.len() < self.k || diff * diff <= heap.peek().expect("nonempty").dist {
                    self.search(far, q, heap);
                }
            }
        }
    }
}
