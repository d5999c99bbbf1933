//! k-means++ seeding followed by a single nearest-centre hard assignment.
//!
//! Points are first put in a canonical content order and every random draw
//! comes from a counter-keyed stream, so the resulting partition does not
//! depend on the order of the input rows.

use std::cmp::Ordering;

use crate::error::{invalid, Error, Result};
use crate::model::PointCloud4D;
use crate::{par, rng};

use super::Responsibilities;

const CHUNK: usize = 4096;

/// Indices that sort `points` lexicographically; ties keep input order.
pub fn canonical_order(points: &[[f64; 4]]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        let (p, q) = (&points[a], &points[b]);
        (0..4)
            .map(|d| p[d].total_cmp(&q[d]))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    });
    order
}

struct Chunk {
    d2: Vec<f64>,
    nearest: Vec<u32>,
    sum: f64,
}

#[inline]
fn dist2(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    (0..4).map(|d| (a[d] - b[d]) * (a[d] - b[d])).sum()
}

struct Seeding {
    centers: Vec<usize>,
    labels: Vec<usize>,
}

fn pick_weighted(chunks: &[Chunk], target: f64) -> Option<usize> {
    let mut acc = 0.0;
    let mut last_positive = None;
    for (c, ch) in chunks.iter().enumerate() {
        if ch.sum <= 0.0 {
            continue;
        }
        if acc + ch.sum > target {
            let mut inner = acc;
            for (i, &d) in ch.d2.iter().enumerate() {
                if d > 0.0 {
                    inner += d;
                    last_positive = Some(c * CHUNK + i);
                    if inner > target {
                        return last_positive;
                    }
                }
            }
            // rounding left the target just past this chunk's partial sums
            return last_positive;
        }
        acc += ch.sum;
        last_positive = ch.d2.iter().rposition(|&d| d > 0.0).map(|i| c * CHUNK + i);
    }
    last_positive
}

fn seed_sorted(points: &[[f64; 4]], k: usize, seed: u64) -> Seeding {
    let n = points.len();
    let mut chunks: Vec<Chunk> = (0..n.div_ceil(CHUNK))
        .map(|c| {
            let len = CHUNK.min(n - c * CHUNK);
            Chunk { d2: vec![f64::INFINITY; len], nearest: vec![0; len], sum: 0.0 }
        })
        .collect();
    let mut is_center = vec![false; n];
    let mut centers = Vec::with_capacity(k);
    let first = ((rng::uniform(seed, 0, 0) * n as f64) as usize).min(n - 1);
    centers.push(first);
    is_center[first] = true;

    for round in 1..=k {
        let r = round - 1;
        let c = points[centers[r]];
        par::for_each_mut(&mut chunks, |ci, ch| {
            let base = ci * CHUNK;
            let mut sum = 0.0;
            for i in 0..ch.d2.len() {
                let d = dist2(&points[base + i], &c);
                if d < ch.d2[i] {
                    ch.d2[i] = d;
                    ch.nearest[i] = r as u32;
                }
                sum += ch.d2[i];
            }
            ch.sum = sum;
        });
        if round == k {
            break;
        }
        let total: f64 = chunks.iter().map(|ch| ch.sum).sum();
        let u = rng::uniform(seed, round as u64, 0);
        let next = if total > 0.0 {
            pick_weighted(&chunks, u * total)
        } else {
            None
        };
        let next = next.filter(|&i| !is_center[i]).unwrap_or_else(|| {
            // every remaining point coincides with a centre
            let j = ((u * (n - round) as f64) as usize).min(n - round - 1);
            (0..n).filter(|&i| !is_center[i]).nth(j).expect("k ≤ n")
        });
        centers.push(next);
        is_center[next] = true;
    }

    let mut labels: Vec<usize> = chunks.iter().flat_map(|ch| ch.nearest.iter().map(|&l| l as usize)).collect();
    for (c, &p) in centers.iter().enumerate() {
        labels[p] = c;
    }
    Seeding { centers, labels }
}

fn seed_canonical(points: &[[f64; 4]], k: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if k == 0 || k > points.len() {
        return Err(invalid(format!("cannot seed {k} components from {} points", points.len())));
    }
    let order = canonical_order(points);
    let sorted: Vec<[f64; 4]> = order.iter().map(|&i| points[i]).collect();
    let s = seed_sorted(&sorted, k, seed);
    let mut labels = vec![0; points.len()];
    for (pos, &orig) in order.iter().enumerate() {
        labels[orig] = s.labels[pos];
    }
    Ok((s.centers.iter().map(|&p| order[p]).collect(), labels))
}

/// k-means++ centres as indices into `points`, in selection order.
pub fn kmeanspp_centers(points: &[[f64; 4]], k: usize, seed: u64) -> Result<Vec<usize>> {
    seed_canonical(points, k, seed).map(|(c, _)| c)
}

/// Hard labels in `0..k`; every label is used at least once.
pub fn kinit_labels(points: &[[f64; 4]], k: usize, seed: u64) -> Result<Vec<usize>> {
    seed_canonical(points, k, seed).map(|(_, l)| l)
}

/// Hard initial responsibilities for `k` components.
pub fn kinit(cloud: &PointCloud4D, k: usize, seed: u64) -> Result<Responsibilities> {
    let labels = kinit_labels(cloud.points(), k, seed)?;
    Ok(Responsibilities::from_labels(&labels, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use proptest::prelude::*;

    fn random_points(n: usize, seed: u64) -> Vec<[f64; 4]> {
        use rand::Rng;
        let mut r = rng::stream(seed, 99);
        (0..n).map(|_| std::array::from_fn(|_| r.random::<f64>())).collect()
    }

    #[test]
    fn single_component() {
        let pts = random_points(50, 1);
        assert!(kinit_labels(&pts, 1, 3).unwrap().iter().all(|&l| l == 0));
        let resp = kinit(&PointCloud4D::new(pts).unwrap(), 1, 3).unwrap();
        assert!(resp.row(7).iter().all(|&g| g == 0.0));
    }

    #[test]
    fn k_equals_n_is_a_permutation() {
        let pts = random_points(64, 2);
        let mut labels = kinit_labels(&pts, 64, 5).unwrap();
        labels.sort();
        assert_eq!(labels, (0..64).collect::<Vec<_>>());
    }

    #[test]
    fn duplicates_still_cover_all_components() {
        let pts = vec![[0.5; 4]; 10];
        let mut labels = kinit_labels(&pts, 10, 0).unwrap();
        labels.sort();
        assert_eq!(labels, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn labels_are_nearest_centre() {
        let pts = random_points(3000, 4);
        let (centers, labels) = seed_canonical(&pts, 25, 11).unwrap();
        for (i, p) in pts.iter().enumerate() {
            if let Some(own) = centers.iter().position(|&c| c == i) {
                assert_eq!(labels[i], own);
                continue;
            }
            let best = (0..centers.len())
                .min_by(|&a, &b| dist2(p, &pts[centers[a]]).total_cmp(&dist2(p, &pts[centers[b]])))
                .unwrap();
            assert_eq!(dist2(p, &pts[centers[labels[i]]]), dist2(p, &pts[centers[best]]));
        }
    }

    #[test]
    fn three_blobs_partition() {
        let (cloud, truth) = synth::blobs(&synth::THREE_BLOB_CENTERS, 0.01, 200, 21);
        for seed in 0..20 {
            let labels = kinit_labels(cloud.points(), 3, seed).unwrap();
            let mut map = [usize::MAX; 3];
            for (l, t) in labels.iter().zip(&truth) {
                if map[*t] == usize::MAX {
                    map[*t] = *l;
                }
                assert_eq!(map[*t], *l, "seed {seed}");
            }
        }
    }

    #[test]
    fn too_many_components() {
        assert!(kinit_labels(&random_points(5, 0), 6, 0).is_err());
        assert!(kinit_labels(&random_points(5, 0), 0, 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn order_independent(seed in 0u64..1000, k in 1usize..20, shift in 1usize..200) {
            let pts = random_points(200, seed);
            let mut rotated = pts.clone();
            rotated.rotate_left(shift % 200);
            let a = kinit_labels(&pts, k, seed).unwrap();
            let b = kinit_labels(&rotated, k, seed).unwrap();
            for i in 0..200 {
                prop_assert_eq!(a[(i + shift) % 200], b[i]);
            }
        }
    }
}
