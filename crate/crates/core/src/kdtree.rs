//! Static 3-d tree for k-nearest-neighbour queries.
//!
//! Ties in distance are broken by the caller-supplied id, so results are
//! identical to a brute-force scan ordered by `(distance², id)`.

use crate::geometry::Point3;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    /// Position of the point in the slice the tree was built from.
    pub index: usize,
    pub id: u64,
    pub dist2: f64,
}

impl Neighbor {
    #[inline]
    fn key_lt(&self, dist2: f64, id: u64) -> bool {
        self.dist2 < dist2 || (self.dist2 == dist2 && self.id < id)
    }
}

#[derive(Debug, Clone, Copy)]
struct Item {
    point: Point3,
    id: u64,
    index: usize,
}

#[derive(Debug, Clone, Default)]
pub struct KdTree {
    items: Vec<Item>,
    /// Split axis of the subtree whose median sits at this position.
    axes: Vec<u8>,
}

impl KdTree {
    /// Build from `(point, id)` pairs. Ids need not be contiguous but should be unique.
    pub fn build<I>(points: I) -> Self
    where
        I: IntoIterator<Item = (Point3, u64)>,
    {
        let mut items: Vec<Item> = points
            .into_iter()
            .enumerate()
            .map(|(index, (point, id))| Item { point, id, index })
            .collect();
        let mut axes = vec![0u8; items.len()];
        build_recursive(&mut items, &mut axes);
        Self { items, axes }
    }

    /// Tree over points whose id is their position.
    pub fn from_points(points: &[Point3]) -> Self {
        Self::build(points.iter().enumerate().map(|(i, p)| (*p, i as u64)))
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// The `k` nearest points sorted by `(distance², id)`.
    pub fn knn(&self, query: &Point3, k: usize) -> Vec<Neighbor> {
        let mut best = Vec::with_capacity(k + 1);
        if k > 0 && !self.items.is_empty() {
            self.search(query, k, 0, self.items.len(), &mut best);
        }
        best
    }

    pub fn nearest(&self, query: &Point3) -> Option<Neighbor> {
        self.knn(query, 1).into_iter().next()
    }

    fn search(&self, q: &Point3, k: usize, lo: usize, hi: usize, best: &mut Vec<Neighbor>) {
        if hi - lo <= LEAF_SIZE {
            for item in &self.items[lo..hi] {
                offer(best, k, item, (item.point - q).norm_squared());
            }
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let axis = self.axes[mid] as usize;
        let item = &self.items[mid];
        offer(best, k, item, (item.point - q).norm_squared());

        let diff = q[axis] - item.point[axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        if near.0 < near.1 {
            self.search(q, k, near.0, near.1, best);
        }
        // `<=` keeps equidistant candidates reachable for id tie-breaking.
        if far.0 < far.1 && (best.len() < k || diff * diff <= best[best.len() - 1].dist2) {
            self.search(q, k, far.0, far.1, best);
        }
    }
}

#[inline]
fn offer(best: &mut Vec<Neighbor>, k: usize, item: &Item, dist2: f64) {
    if best.len() == k {
        let worst = &best[k - 1];
        if !(dist2 < worst.dist2 || (dist2 == worst.dist2 && item.id < worst.id)) {
            return;
        }
        best.pop();
    }
    let pos = best
        .iter()
        .position(|n| !n.key_lt(dist2, item.id))
        .unwrap_or(best.len());
    best.insert(
        pos,
        Neighbor {
            index: item.index,
            id: item.id,
            dist2,
        },
    );
}

fn build_recursive(items: &mut [Item], axes: &mut [u8]) {
    let n = items.len();
    if n <= LEAF_SIZE {
        return;
    }
    let axis = widest_axis(items);
    let mid = n / 2;
    items.select_nth_unstable_by(mid, |a, b| a.point[axis].total_cmp(&b.point[axis]));
    axes[mid] = axis as u8;
    let (left, rest) = items.split_at_mut(mid);
    let (left_axes, rest_axes) = axes.split_at_mut(mid);
    build_recursive(left, left_axes);
    build_recursive(&mut rest[1..], &mut rest_axes[1..]);
}

fn widest_axis(items: &[Item]) -> usize {
    let mut lo = items[0].point;
    let mut hi = items[0].point;
    for it in items {
        lo = lo.inf(&it.point);
        hi = hi.sup(&it.point);
    }
    (hi - lo).imax()
}

/// Brute-force reference used by tests and small inputs.
pub fn brute_force_knn(points: &[(Point3, u64)], query: &Point3, k: usize) -> Vec<Neighbor> {
    let mut all: Vec<Neighbor> = points
        .iter()
        .enumerate()
        .map(|(index, (p, id))| Neighbor {
            index,
            id: *id,
            dist2: (p - query).norm_squared(),
        })
        .collect();
    all.sort_by(|a, b| a.dist2.total_cmp(&b.dist2).then(a.id.cmp(&b.id)));
    all.truncate(k);
    all
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn empty_tree_returns_nothing() {
        let tree = KdTree::build(Vec::new());
        assert!(tree.knn(&Vector3::zeros(), 5).is_empty());
    }

    #[test]
    fn matches_brute_force_on_random_cloud() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<(Point3, u64)> = (0..1000)
            .map(|i| {
                (
                    Vector3::new(
                        rng.random_range(-10.0..10.0),
                        rng.random_range(-10.0..10.0),
                        rng.random_range(-2.0..2.0),
                    ),
                    1000 + i as u64,
                )
            })
            .collect();
        let tree = KdTree::build(pts.clone());
        for _ in 0..100 {
            let q = Vector3::new(
                rng.random_range(-12.0..12.0),
                rng.random_range(-12.0..12.0),
                rng.random_range(-3.0..3.0),
            );
            let a: Vec<u64> = tree.knn(&q, 5).iter().map(|n| n.id).collect();
            let b: Vec<u64> = brute_force_knn(&pts, &q, 5).iter().map(|n| n.id).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn duplicate_points_break_ties_by_id() {
        let p = Vector3::new(1.0, 1.0, 1.0);
        let pts: Vec<(Point3, u64)> = (0..40).rev().map(|i| (p, i)).collect();
        let tree = KdTree::build(pts);
        let ids: Vec<u64> = tree.knn(&Vector3::zeros(), 5).iter().map(|n| n.id).collect();
        assert_eq!(ids, vec![0, 1, 2, 3, 4]);
    }

    proptest! {
        #[test]
        fn knn_equals_brute_force(
            raw in prop::collection::vec(prop::array::uniform3(-5i32..5), 1..200),
            q in prop::array::uniform3(-6i32..6),
            k in 1usize..12,
        ) {
            // Integer grids create many exact ties.
            let pts: Vec<(Point3, u64)> = raw.iter().enumerate()
                .map(|(i, c)| (Vector3::new(c[0] as f64, c[1] as f64, c[2] as f64), (i as u64 * 7919) % 1009))
                .collect();
            let mut seen = std::collections::HashSet::new();
            prop_assume!(pts.iter().all(|(_, id)| seen.insert(*id)));
            let q = Vector3::new(q[0] as f64, q[1] as f64, q[2] as f64);
            let tree = KdTree::build(pts.clone());
            let a: Vec<u64> = tree.knn(&q, k).iter().map(|n| n.id).collect();
            let b: Vec<u64> = brute_force_knn(&pts, &q, k).iter().map(|n| n.id).collect();
            prop_assert_eq!(a, b);
        }
    }
}
