//! Point quadtree over 2-D coordinates for the Barnes-Hut repulsion estimate.

// Coincident points would split forever; past this depth a leaf keeps them all.
const MAX_DEPTH: usize = 48;

#[derive(Debug, Clone)]
struct Node {
    cx: f64,
    cy: f64,
    half: f64,
    count: f64,
    sum_x: f64,
    sum_y: f64,
    first_child: usize,
    points: Vec<usize>,
    sxx: f64,
    sxy: f64,
    syy: f64,
}

impl Node {
    fn new(cx: f64, cy: f64, half: f64) -> Self {
        Node {
            cx,
            cy,
            half,
            count: 0.0,
            sum_x: 0.0,
            sum_y: 0.0,
            first_child: 0,
            points: Vec::new(),
            sxx: 0.0,
            sxy: 0.0,
            syy: 0.0,
        }
    }

    fn is_leaf(&self) -> bool {
        self.first_child == 0
    }

    fn contains(&self, p: [f64; 2]) -> bool {
        (p[0] - self.cx).abs() <= self.half && (p[1] - self.cy).abs() <= self.half
    }

    fn quadrant(&self, p: [f64; 2]) -> usize {
        usize::from(p[0] > self.cx) + 2 * usize::from(p[1] > self.cy)
    }

    /// Taylor expansion of `sum_j w(u - e_j)` and `sum_j w^2 (u - e_j)` to
    /// second order in the offsets `e_j` of the cell's points from their
    /// center of mass, where `u = y_i - com`. First-order terms vanish.
    fn expansion(&self, u: [f64; 2]) -> (f64, [f64; 2]) {
        let n = self.count;
        let (mx, my) = (self.sum_x / n, self.sum_y / n);
        // central second moments
        let mxx = self.sxx - n * mx * mx;
        let mxy = self.sxy - n * mx * my;
        let myy = self.syy - n * my * my;
        let tr = mxx + myy;
        let mu = [mxx * u[0] + mxy * u[1], mxy * u[0] + myy * u[1]];
        let umu = u[0] * mu[0] + u[1] * mu[1];
        let w = 1.0 / (1.0 + u[0] * u[0] + u[1] * u[1]);
        let (w2, w3) = (w * w, w * w * w);
        let z = n * w - w2 * tr + 4.0 * w3 * umu;
        let mut f = [0.0; 2];
        for c in 0..2 {
            f[c] = n * w2 * u[c] - 2.0 * w3 * (2.0 * mu[c] + tr * u[c]) + 12.0 * w3 * w * umu * u[c];
        }
        (z, f)
    }
}

#[derive(Debug, Clone)]
pub struct QuadTree<'a> {
    nodes: Vec<Node>,
    points: &'a [[f64; 2]],
}

impl<'a> QuadTree<'a> {
    /// Insert every point, in index order.
    pub fn build(points: &'a [[f64; 2]]) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in points {
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let half = if points.is_empty() {
            1.0
        } else {
            let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]);
            // pad so boundary points sit strictly inside
            0.5 * extent * (1.0 + 1e-9) + 1e-12
        };
        let (cx, cy) = if points.is_empty() {
            (0.0, 0.0)
        } else {
            (0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]))
        };
        let mut tree = QuadTree {
            nodes: vec![Node::new(cx, cy, half)],
            points,
        };
        for i in 0..points.len() {
            tree.insert(i);
        }
        tree
    }

    fn insert(&mut self, idx: usize) {
        let p = self.points[idx];
        let mut node = 0;
        let mut depth = 0;
        loop {
            let n = &mut self.nodes[node];
            n.count += 1.0;
            n.sum_x += p[0];
            n.sum_y += p[1];
            n.sxx += p[0] * p[0];
            n.sxy += p[0] * p[1];
            n.syy += p[1] * p[1];
            if n.is_leaf() {
                if n.points.is_empty() || depth >= MAX_DEPTH {
                    n.points.push(idx);
                    return;
                }
                self.subdivide(node);
                let moved = std::mem::take(&mut self.nodes[node].points);
                for m in moved {
                    let q = self.points[m];
                    let child = self.nodes[node].first_child + self.nodes[node].quadrant(q);
                    let c = &mut self.nodes[child];
                    c.count += 1.0;
                    c.sum_x += q[0];
                    c.sum_y += q[1];
                    c.sxx += q[0] * q[0];
                    c.sxy += q[0] * q[1];
                    c.syy += q[1] * q[1];
                    c.points.push(m);
                }
            }
            let n = &self.nodes[node];
            node = n.first_child + n.quadrant(p);
            depth += 1;
        }
    }

    fn subdivide(&mut self, node: usize) {
        let (cx, cy, h) = {
            let n = &self.nodes[node];
            (n.cx, n.cy, n.half * 0.5)
        };
        let first = self.nodes.len();
        // quadrant order matches Node::quadrant
        self.nodes.push(Node::new(cx - h, cy - h, h));
        self.nodes.push(Node::new(cx + h, cy - h, h));
        self.nodes.push(Node::new(cx - h, cy + h, h));
        self.nodes.push(Node::new(cx + h, cy + h, h));
        self.nodes[node].first_child = first;
    }

    /// Repulsion on point `i`: returns the partial normalizer
    /// `sum_j w_ij` and the unnormalized force `sum_j w_ij^2 (y_i - y_j)`,
    /// with `w = 1 / (1 + d^2)`. A cell not containing `i` whose diagonal
    /// over the distance to its center of mass is below `theta` is replaced
    /// by a second-order expansion about that center.
    pub fn repulsion(&self, i: usize, theta: f64) -> (f64, [f64; 2]) {
        let yi = self.points[i];
        let mut z = 0.0;
        let mut f = [0.0; 2];
        let mut stack = vec![0usize];
        while let Some(k) = stack.pop() {
            let n = &self.nodes[k];
            if n.count == 0.0 {
                continue;
            }
            if n.is_leaf() {
                for &j in &n.points {
                    if j == i {
                        continue;
                    }
                    let dx = yi[0] - self.points[j][0];
                    let dy = yi[1] - self.points[j][1];
                    let w = 1.0 / (1.0 + dx * dx + dy * dy);
                    z += w;
                    f[0] += w * w * dx;
                    f[1] += w * w * dy;
                }
                continue;
            }
            let dx = yi[0] - n.sum_x / n.count;
            let dy = yi[1] - n.sum_y / n.count;
            let d2 = dx * dx + dy * dy;
            // squared diagonal is 2 * side^2
            let diag2 = 8.0 * n.half * n.half;
            if !n.contains(yi) && diag2 < theta * theta * d2 {
                let (dz, df) = n.expansion([dx, dy]);
                z += dz;
                f[0] += df[0];
                f[1] += df[1];
            } else {
                // push in reverse so children are visited in quadrant order
                for c in (0..4).rev() {
                    stack.push(n.first_child + c);
                }
            }
        }
        (z, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exact(points: &[[f64; 2]], i: usize) -> (f64, [f64; 2]) {
        let mut z = 0.0;
        let mut f = [0.0; 2];
        for (j, q) in points.iter().enumerate() {
            if j != i {
                let (dx, dy) = (points[i][0] - q[0], points[i][1] - q[1]);
                let w = 1.0 / (1.0 + dx * dx + dy * dy);
                z += w;
                f[0] += w * w * dx;
                f[1] += w * w * dy;
            }
        }
        (z, f)
    }

    #[test]
    fn theta_zero_is_exact() {
        let pts: Vec<[f64; 2]> = (0..40).map(|i| [(i as f64 * 0.37).sin() * 5.0, (i as f64 * 1.3).cos() * 3.0]).collect();
        let tree = QuadTree::build(&pts);
        for i in 0..pts.len() {
            let (z, f) = tree.repulsion(i, 0.0);
            let (ze, fe) = exact(&pts, i);
            assert!((z - ze).abs() < 1e-12);
            assert!((f[0] - fe[0]).abs() < 1e-12 && (f[1] - fe[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn coincident_points_do_not_recurse_forever() {
        let pts = vec![[1.0, 1.0]; 10];
        let tree = QuadTree::build(&pts);
        let (z, f) = tree.repulsion(3, 0.5);
        assert_eq!(z, 9.0);
        assert_eq!(f, [0.0, 0.0]);
    }
}
