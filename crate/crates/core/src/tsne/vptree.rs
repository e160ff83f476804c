//! Vantage-point tree for exact k-nearest-neighbor queries under Euclidean
//! distance, used when a full pairwise scan gets too expensive.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Debug, Clone)]
struct VpNode {
    point: usize,
    radius: f64,
    inside: Option<usize>,
    outside: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct VpTree {
    nodes: Vec<VpNode>,
    root: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist.total_cmp(&other.dist).then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl VpTree {
    /// Build over points `0..n` with `dist(i, j)` a metric. Vantage points
    /// are the first item of each range, so the build is deterministic.
    pub fn build(n: usize, dist: &impl Fn(usize, usize) -> f64) -> Self {
        let mut tree = VpTree {
            nodes: Vec::with_capacity(n),
            root: None,
        };
        let mut items: Vec<usize> = (0..n).collect();
        tree.root = tree.build_range(&mut items, dist);
        tree
    }

    fn build_range(&mut self, items: &mut [usize], dist: &impl Fn(usize, usize) -> f64) -> Option<usize> {
        let (&mut vp, rest) = items.split_first_mut()?;
        let slot = self.nodes.len();
        self.nodes.push(VpNode {
            point: vp,
            radius: 0.0,
            inside: None,
            outside: None,
        });
        if rest.is_empty() {
            return Some(slot);
        }
        let mut keyed: Vec<(f64, usize)> = rest.iter().map(|&p| (dist(vp, p), p)).collect();
        keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mid = keyed.len() / 2;
        let radius = keyed[mid].0;
        for (slot_item, (_, p)) in rest.iter_mut().zip(&keyed) {
            *slot_item = *p;
        }
        // points before mid are within the radius; the median goes outside
        let (inner, outer) = rest.split_at_mut(mid);
        let inside = self.build_range(inner, dist);
        let outside = self.build_range(outer, dist);
        let node = &mut self.nodes[slot];
        node.radius = radius;
        node.inside = inside;
        node.outside = outside;
        Some(slot)
    }

    /// The `k` nearest points to `query` other than `query` itself, sorted by
    /// distance then index. `dist_to(j)` is the distance from the query to `j`.
    pub fn nearest(&self, query: usize, k: usize, dist_to: &impl Fn(usize) -> f64) -> Vec<(usize, f64)> {
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        let mut stack: Vec<usize> = self.root.into_iter().collect();
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            let d = dist_to(node.point);
            if node.point != query && k > 0 {
                let c = Candidate {
                    dist: d,
                    index: node.point,
                };
                if heap.len() < k {
                    heap.push(c);
                } else if c < *heap.peek().expect("heap is full") {
                    heap.pop();
                    heap.push(c);
                }
            }
            let tau = if heap.len() < k {
                f64::INFINITY
            } else {
                heap.peek().map_or(f64::INFINITY, |c| c.dist)
            };
            // inclusive bounds keep equal-distance ties reachable
            if let Some(inside) = node.inside {
                if d - tau <= node.radius {
                    stack.push(inside);
                }
            }
            if let Some(outside) = node.outside {
                if d + tau >= node.radius {
                    stack.push(outside);
                }
            }
        }
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort();
        out.into_iter().map(|c| (c.index, c.dist)).collect()
    }
}
