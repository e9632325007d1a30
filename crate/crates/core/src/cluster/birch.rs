use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::ward::ward_linkage;
use super::{check_k, require_k, sq_dist, ClusterAlgorithm, ClusterAssignment, ClusterError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BirchParams {
    pub branching: usize,
    /// Subcluster radius limit; `None` derives it from the data spread.
    pub threshold: Option<f64>,
    /// Fraction of the RMS distance to the mean used for the derived threshold.
    pub spread_fraction: f64,
}

impl Default for BirchParams {
    fn default() -> Self {
        Self {
            branching: 50,
            threshold: None,
            spread_fraction: 0.1,
        }
    }
}

/// Clustering feature: count, linear sum and sum of squared norms.
#[derive(Clone, Debug)]
struct Cf {
    n: f64,
    ls: Vec<f64>,
    ss: f64,
}

impl Cf {
    fn point(x: ArrayView1<f64>) -> Self {
        Self {
            n: 1.0,
            ls: x.to_vec(),
            ss: x.dot(&x),
        }
    }

    fn empty(d: usize) -> Self {
        Self {
            n: 0.0,
            ls: vec![0.0; d],
            ss: 0.0,
        }
    }

    fn add(&mut self, o: &Cf) {
        self.n += o.n;
        self.ss += o.ss;
        for (a, b) in self.ls.iter_mut().zip(&o.ls) {
            *a += b;
        }
    }

    fn centroid(&self) -> Vec<f64> {
        self.ls.iter().map(|v| v / self.n).collect()
    }

    fn radius(&self) -> f64 {
        let c = self.centroid();
        (self.ss / self.n - c.iter().map(|v| v * v).sum::<f64>()).max(0.0).sqrt()
    }

    fn dist2(&self, x: &[f64]) -> f64 {
        self.ls.iter().zip(x).map(|(l, v)| (l / self.n - v).powi(2)).sum()
    }
}

enum Node {
    Leaf(Vec<Cf>),
    Inner(Vec<(Cf, Node)>),
}

fn closest<'a>(cfs: impl Iterator<Item = &'a Cf>, x: &[f64]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, cf) in cfs.enumerate() {
        let d = cf.dist2(x);
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

/// Partition entries around the two most distant centroids.
fn split_by<T>(entries: Vec<T>, cf: impl Fn(&T) -> &Cf) -> (Vec<T>, Vec<T>) {
    let cents: Vec<Vec<f64>> = entries.iter().map(|e| cf(e).centroid()).collect();
    let d2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    let (mut s0, mut s1, mut far) = (0, 1, -1.0);
    for i in 0..cents.len() {
        for j in i + 1..cents.len() {
            let d = d2(&cents[i], &cents[j]);
            if d > far {
                (s0, s1, far) = (i, j, d);
            }
        }
    }
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (i, e) in entries.into_iter().enumerate() {
        if i == s0 || (i != s1 && d2(&cents[i], &cents[s0]) <= d2(&cents[i], &cents[s1])) {
            a.push(e);
        } else {
            b.push(e);
        }
    }
    (a, b)
}

fn summary(node: &Node, d: usize) -> Cf {
    let mut cf = Cf::empty(d);
    match node {
        Node::Leaf(es) => es.iter().for_each(|e| cf.add(e)),
        Node::Inner(es) => es.iter().for_each(|(e, _)| cf.add(e)),
    }
    cf
}

struct Tree {
    root: Node,
    branching: usize,
    threshold: f64,
    d: usize,
}

impl Tree {
    fn insert(&mut self, x: ArrayView1<f64>) {
        let p = Cf::point(x);
        let root = std::mem::replace(&mut self.root, Node::Leaf(Vec::new()));
        self.root = match self.insert_into(root, &p) {
            (node, None) => node,
            (a, Some(b)) => {
                let (ca, cb) = (summary(&a, self.d), summary(&b, self.d));
                Node::Inner(vec![(ca, a), (cb, b)])
            }
        };
    }

    fn insert_into(&self, node: Node, p: &Cf) -> (Node, Option<Node>) {
        match node {
            Node::Leaf(mut es) => {
                if !es.is_empty() {
                    let i = closest(es.iter(), &p.ls);
                    let mut merged = es[i].clone();
                    merged.add(p);
                    if merged.radius() <= self.threshold {
                        es[i] = merged;
                        return (Node::Leaf(es), None);
                    }
                }
                es.push(p.clone());
                if es.len() > self.branching {
                    let (a, b) = split_by(es, |e| e);
                    return (Node::Leaf(a), Some(Node::Leaf(b)));
                }
                (Node::Leaf(es), None)
            }
            Node::Inner(mut es) => {
                let i = closest(es.iter().map(|(cf, _)| cf), &p.ls);
                let (cf, child) = es.remove(i);
                let (child, extra) = self.insert_into(child, p);
                match extra {
                    None => {
                        let mut cf = cf;
                        cf.add(p);
                        es.insert(i, (cf, child));
                    }
                    Some(other) => {
                        es.insert(i, (summary(&other, self.d), other));
                        es.insert(i, (summary(&child, self.d), child));
                    }
                }
                if es.len() > self.branching {
                    let (a, b) = split_by(es, |(cf, _)| cf);
                    return (Node::Inner(a), Some(Node::Inner(b)));
                }
                (Node::Inner(es), None)
            }
        }
    }

    fn leaves(&self) -> Vec<Cf> {
        fn walk(n: &Node, out: &mut Vec<Cf>) {
            match n {
                Node::Leaf(es) => out.extend(es.iter().cloned()),
                Node::Inner(es) => es.iter().for_each(|(_, c)| walk(c, out)),
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }
}

fn subclusters(data: ArrayView2<f64>, branching: usize, threshold: f64) -> Vec<Cf> {
    let mut tree = Tree {
        root: Node::Leaf(Vec::new()),
        branching,
        threshold,
        d: data.ncols(),
    };
    for x in data.rows() {
        tree.insert(x);
    }
    tree.leaves()
}

fn rms_spread(data: ArrayView2<f64>) -> f64 {
    let mean = data.mean_axis(ndarray::Axis(0)).expect("non-empty");
    let total: f64 = data.rows().into_iter().map(|x| sq_dist(x, mean.view())).sum();
    (total / data.nrows() as f64).sqrt()
}

#[derive(Clone, Debug, Default)]
pub struct Birch(pub BirchParams);

impl Birch {
    /// Subcluster summaries with at least `k` entries, halving the threshold
    /// as needed.
    fn build(&self, data: ArrayView2<f64>, k: usize) -> Result<Vec<Cf>, ClusterError> {
        let mut threshold = self
            .0
            .threshold
            .unwrap_or_else(|| self.0.spread_fraction * rms_spread(data));
        for _ in 0..64 {
            let subs = subclusters(data, self.0.branching, threshold);
            if subs.len() >= k {
                return Ok(subs);
            }
            threshold /= 2.0;
        }
        let subs = subclusters(data, self.0.branching, 0.0);
        if subs.len() >= k {
            return Ok(subs);
        }
        Err(ClusterError::DegenerateInput(format!(
            "only {} distinct subclusters for k = {k}",
            subs.len()
        )))
    }
}

impl ClusterAlgorithm for Birch {
    fn name(&self) -> &'static str {
        "birch"
    }

    fn needs_k(&self) -> bool {
        true
    }

    fn params(&self) -> serde_json::Value {
        serde_json::to_value(&self.0).expect("plain struct")
    }

    fn fit(&self, data: ArrayView2<f64>, k: Option<usize>, seed: u64) -> Result<ClusterAssignment, ClusterError> {
        let k = require_k(self, k)?;
        check_k(data.nrows(), k)?;
        let subs = self.build(data, k)?;
        let d = data.ncols();
        let mut cents = Array2::zeros((subs.len(), d));
        for (i, s) in subs.iter().enumerate() {
            for (j, v) in s.centroid().into_iter().enumerate() {
                cents[(i, j)] = v;
            }
        }
        let weights: Vec<f64> = subs.iter().map(|s| s.n).collect();
        let groups = ward_linkage(cents.view(), Some(&weights), k)?;
        let raw: Vec<usize> = data
            .rows()
            .into_iter()
            .map(|x| groups[closest(subs.iter(), &x.to_vec())])
            .collect();
        Ok(ClusterAssignment::new(self.name(), &raw, self.params(), seed))
    }
}
