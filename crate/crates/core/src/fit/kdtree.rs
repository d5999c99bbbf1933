//! Static kd-tree over 4D points with radius and nearest-neighbour queries.

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: u32, end: u32 },
    Split { dim: u8, value: f64, left: u32, right: u32 },
}

#[derive(Debug, Clone)]
pub struct KdTree4 {
    points: Vec<[f64; 4]>,
    order: Vec<u32>,
    nodes: Vec<Node>,
}

#[inline]
fn dist2(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]];
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2] + d[3] * d[3]
}

impl KdTree4 {
    pub fn new(points: Vec<[f64; 4]>) -> Self {
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::new();
        if !points.is_empty() {
            build(&points, &mut order, 0, &mut nodes);
        }
        Self { points, order, nodes }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 4]] {
        &self.points
    }

    /// Calls `f(index)` for every point with `‖p − q‖ ≤ radius`.
    pub fn for_each_within(&self, q: &[f64; 4], radius: f64, mut f: impl FnMut(usize)) {
        if self.nodes.is_empty() {
            return;
        }
        let r2 = radius * radius;
        let mut stack = vec![0u32];
        while let Some(n) = stack.pop() {
            match self.nodes[n as usize] {
                Node::Leaf { start, end } => {
                    for &i in &self.order[start as usize..end as usize] {
                        if dist2(&self.points[i as usize], q) <= r2 {
                            f(i as usize);
                        }
                    }
                }
                Node::Split { dim, value, left, right } => {
                    let diff = q[dim as usize] - value;
                    if diff <= radius {
                        stack.push(left);
                    }
                    if -diff <= radius {
                        stack.push(right);
                    }
                }
            }
        }
    }

    /// Nearest point; ties go to the smaller index.
    pub fn nearest(&self, q: &[f64; 4]) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.nearest_rec(0, q, &mut best);
        Some(best)
    }

    fn nearest_rec(&self, n: u32, q: &[f64; 4], best: &mut (usize, f64)) {
        match self.nodes[n as usize] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start as usize..end as usize] {
                    let d = dist2(&self.points[i as usize], q);
                    if d < best.1 || (d == best.1 && (i as usize) < best.0) {
                        *best = (i as usize, d);
                    }
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = q[dim as usize] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.nearest_rec(near, q, best);
                // `<=` keeps exploring on ties so index tie-breaking stays exact
                if diff * diff <= best.1 {
                    self.nearest_rec(far, q, best);
                }
            }
        }
    }
}

fn build(points: &[[f64; 4]], order: &mut [u32], offset: u32, nodes: &mut Vec<Node>) -> u32 {
    let id = nodes.len() as u32;
    if order.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf { start: offset, end: offset + order.len() as u32 });
        return id;
    }
    let mut lo = [f64::INFINITY; 4];
    let mut hi = [f64::NEG_INFINITY; 4];
    for &i in order.iter() {
        let p = &points[i as usize];
        for d in 0..4 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let dim = (0..4).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap();
    if hi[dim] == lo[dim] {
        nodes.push(Node::Leaf { start: offset, end: offset + order.len() as u32 });
        return id;
    }
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| points[a as usize][dim].total_cmp(&points[b as usize][dim]));
    let value = points[order[mid] as usize][dim];
    nodes.push(Node::Split { dim: dim as u8, value, left: 0, right: 0 });
    let (l, r) = order.split_at_mut(mid);
    let left = build(points, l, offset, nodes);
    let right = build(points, r, offset + mid as u32, nodes);
    nodes[id as usize] = Node::Split { dim: dim as u8, value, left, right };
    id
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn radius_and_nearest_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<[f64; 4]> = (0..2000).map(|_| std::array::from_fn(|_| rng.random::<f64>())).collect();
        let tree = KdTree4::new(pts.clone());
        for _ in 0..100 {
            let q: [f64; 4] = std::array::from_fn(|_| rng.random::<f64>());
            let r = rng.random_range(0.05..0.3);
            let mut got = Vec::new();
            tree.for_each_within(&q, r, |i| got.push(i));
            got.sort();
            let want: Vec<usize> = (0..pts.len()).filter(|&i| dist2(&pts[i], &q) <= r * r).collect();
            assert_eq!(got, want);
            let (ni, nd) = tree.nearest(&q).unwrap();
            let (bi, bd) = (0..pts.len())
                .map(|i| (i, dist2(&pts[i], &q)))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
                .unwrap();
            assert_eq!((ni, nd), (bi, bd));
        }
    }

    #[test]
    fn nearest_tie_prefers_lower_index() {
        let pts = vec![[1.0, 0.0, 0.0, 0.0]; 40];
        let tree = KdTree4::new(pts);
        assert_eq!(tree.nearest(&[0.0; 4]).unwrap().0, 0);
    }
}
