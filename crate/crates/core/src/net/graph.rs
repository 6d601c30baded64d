use alloc::vec;
use alloc::vec::Vec;

use crate::math::{self, Vec3};
use crate::tensor::Groups;
use crate::{Error, Result};

/// k-nearest-neighbor graph under the hybrid distance. Row `i` lists the
/// neighbors of point `i` in ascending distance, ties by lower index.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridGraph {
    n: usize,
    k: usize,
    alpha: f64,
    neighbors: Vec<usize>,
    distances: Vec<f64>,
}

impl HybridGraph {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i * self.k..(i + 1) * self.k]
    }

    pub fn distances(&self, i: usize) -> &[f64] {
        &self.distances[i * self.k..(i + 1) * self.k]
    }

    /// Neighbor sets as aggregation groups.
    pub fn groups(&self) -> Groups {
        Groups::uniform(self.neighbors.clone(), self.k)
    }

    /// Each point followed by its neighbors.
    pub fn groups_with_self(&self) -> Groups {
        Groups::new((0..self.n).map(|i| {
            let mut g = Vec::with_capacity(self.k + 1);
            g.push(i);
            g.extend_from_slice(self.neighbors(i));
            g
        }))
    }

    /// Same graph with point `i` renamed to `perm[i]`.
    pub fn relabeled(&self, perm: &[usize]) -> HybridGraph {
        let mut neighbors = vec![0; self.neighbors.len()];
        let mut distances = vec![0.0; self.distances.len()];
        for i in 0..self.n {
            let dst = perm[i] * self.k;
            for (s, (&j, &d)) in self.neighbors(i).iter().zip(self.distances(i)).enumerate() {
                neighbors[dst + s] = perm[j];
                distances[dst + s] = d;
            }
        }
        HybridGraph { neighbors, distances, ..*self }
    }
}

/// Euclidean distance between two equal-length feature rows.
pub fn feature_distance(a: &[f64], b: &[f64]) -> f64 {
    // Four running sums break the add dependency chain.
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            let d = x[l] - y[l];
            acc[l] += d * d;
        }
    }
    for (x, y) in ra.iter().zip(rb) {
        let d = x - y;
        acc[0] += d * d;
    }
    math::sqrt((acc[0] + acc[1]) + (acc[2] + acc[3]))
}

#[inline]
fn blend(feature: f64, point: f64, alpha: f64) -> f64 {
    alpha * feature + (1.0 - alpha) * point
}

/// `alpha * |f_i - f_j| + (1 - alpha) * |p_i - p_j|`.
pub fn hybrid_distance(f_i: &[f64], f_j: &[f64], p_i: Vec3, p_j: Vec3, alpha: f64) -> f64 {
    blend(feature_distance(f_i, f_j), math::dist(p_i, p_j), alpha)
}

fn check_inputs(features: &[f64], width: usize, points: &[Vec3], k: usize, alpha: f64) -> Result<()> {
    let n = points.len();
    if features.len() != n * width {
        return Err(Error::shape("receptive field: one feature row per point required"));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument("alpha must lie in [0, 1]".into()));
    }
    if k == 0 || k >= n {
        return Err(Error::NeighborCount { k, n });
    }
    Ok(())
}

/// Ascending `(distance, index)` list of the `k` best candidates seen.
struct TopK {
    best: Vec<(f64, usize)>,
}

impl TopK {
    #[inline]
    fn offer(&mut self, k: usize, d: f64, j: usize) {
        let before = |b: &(f64, usize)| b.0.total_cmp(&d).then(b.1.cmp(&j)).is_lt();
        if self.best.len() == k && before(&self.best[k - 1]) {
            return;
        }
        let pos = self.best.partition_point(before);
        if self.best.len() == k {
            self.best.pop();
        }
        self.best.insert(pos, (d, j));
    }
}

const TILE: usize = 64;

fn build(features: &[f64], width: usize, points: &[Vec3], k: usize, alphas: &[f64]) -> Vec<HybridGraph> {
    let n = points.len();
    let mut tops: Vec<Vec<TopK>> =
        alphas.iter().map(|_| (0..n).map(|_| TopK { best: Vec::with_capacity(k + 1) }).collect()).collect();
    let row = |i: usize| &features[i * width..(i + 1) * width];
    // Each unordered pair is visited once, tile by tile, and offered to
    // both endpoints.
    for bi in (0..n).step_by(TILE) {
        for bj in (bi..n).step_by(TILE) {
            for i in bi..(bi + TILE).min(n) {
                for j in bj.max(i + 1)..(bj + TILE).min(n) {
                    let f = if width == 0 { 0.0 } else { feature_distance(row(i), row(j)) };
                    let p = math::dist(points[i], points[j]);
                    for (a, &alpha) in alphas.iter().enumerate() {
                        let d = blend(f, p, alpha);
                        tops[a][i].offer(k, d, j);
                        tops[a][j].offer(k, d, i);
                    }
                }
            }
        }
    }
    alphas
        .iter()
        .zip(tops)
        .map(|(&alpha, tops)| {
            let mut neighbors = Vec::with_capacity(n * k);
            let mut distances = Vec::with_capacity(n * k);
            for top in tops {
                for (d, j) in top.best {
                    neighbors.push(j);
                    distances.push(d);
                }
            }
            HybridGraph { n, k, alpha, neighbors, distances }
        })
        .collect()
}

/// For every point, the `k` nearest other points under [`hybrid_distance`].
/// `features` is row-major `n x width`.
pub fn build_receptive_field(
    features: &[f64],
    width: usize,
    points: &[Vec3],
    k: usize,
    alpha: f64,
) -> Result<HybridGraph> {
    check_inputs(features, width, points, k, alpha)?;
    Ok(build(features, width, points, k, &[alpha]).remove(0))
}

/// Several graphs over the same inputs, sharing one distance computation.
pub fn build_receptive_fields(
    features: &[f64],
    width: usize,
    points: &[Vec3],
    k: usize,
    alphas: &[f64],
) -> Result<Vec<HybridGraph>> {
    for &a in alphas {
        check_inputs(features, width, points, k, a)?;
    }
    Ok(build(features, width, points, k, alphas))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_inputs(rng: &mut ChaCha8Rng, n: usize, width: usize) -> (Vec<f64>, Vec<Vec3>) {
        let f = (0..n * width).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let p = (0..n).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
        (f, p)
    }

    // Full sort of every candidate, no shared matrices.
    fn oracle(f: &[f64], width: usize, p: &[Vec3], k: usize, alpha: f64) -> Vec<Vec<usize>> {
        (0..p.len())
            .map(|i| {
                let mut all: Vec<(f64, usize)> = (0..p.len())
                    .filter(|&j| j != i)
                    .map(|j| {
                        let d = hybrid_distance(
                            &f[i * width..(i + 1) * width],
                            &f[j * width..(j + 1) * width],
                            p[i],
                            p[j],
                            alpha,
                        );
                        (d, j)
                    })
                    .collect();
                all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
                let mut set: Vec<usize> = all[..k].iter().map(|x| x.1).collect();
                set.sort();
                set
            })
            .collect()
    }

    #[test]
    fn blend_endpoints_and_example() {
        let (fi, fj) = ([0.0, 0.0], [0.6, 0.8]);
        let (pi, pj) = ([0.0; 3], [0.0, 2.0, 0.0]);
        assert_eq!(hybrid_distance(&fi, &fj, pi, pj, 0.0), 2.0);
        assert_eq!(hybrid_distance(&fi, &fj, pi, pj, 1.0), 1.0);
        assert!((hybrid_distance(&fi, &fj, pi, pj, 0.8) - 1.2).abs() < 1e-15);
        assert_eq!(hybrid_distance(&fj, &fj, pj, pj, 0.3), 0.0);
    }

    #[test]
    fn collinear_neighbors() {
        let p: Vec<Vec3> = [0.0, 1.0, 2.0, 10.0, 11.0].iter().map(|&x| [x, 0.0, 0.0]).collect();
        let g = build_receptive_field(&[0.0; 5], 1, &p, 2, 0.5).unwrap();
        assert_eq!(g.neighbors(0), &[1, 2]);
        assert_eq!(g.neighbors(4), &[3, 2]);
    }

    #[test]
    fn features_equal_to_coordinates_give_the_point_graph() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (_, p) = random_inputs(&mut rng, 60, 0);
        let f: Vec<f64> = p.iter().flat_map(|q| q.iter().cloned()).collect();
        let a = build_receptive_field(&f, 3, &p, 7, 1.0).unwrap();
        let b = build_receptive_field(&f, 3, &p, 7, 0.0).unwrap();
        assert_eq!(a.neighbors, b.neighbors);
    }

    #[test]
    fn matches_exhaustive_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for &k in &[10, 15] {
            let (f, p) = random_inputs(&mut rng, 200, 5);
            let graphs = build_receptive_fields(&f, 5, &p, k, &[0.0, 0.2, 0.8, 1.0]).unwrap();
            for g in graphs {
                let expect = oracle(&f, 5, &p, k, g.alpha());
                for (i, e) in expect.iter().enumerate() {
                    let mut got = g.neighbors(i).to_vec();
                    assert!(!got.contains(&i));
                    got.sort();
                    assert_eq!(&got, e);
                }
            }
        }
    }

    #[test]
    fn rows_are_sorted_by_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (f, p) = random_inputs(&mut rng, 50, 2);
        let g = build_receptive_field(&f, 2, &p, 9, 0.4).unwrap();
        for i in 0..50 {
            assert!(g.distances(i).windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn neighbor_count_must_be_below_point_count() {
        let p = [[0.0; 3], [1.0, 0.0, 0.0]];
        assert!(matches!(
            build_receptive_field(&[], 0, &p, 2, 0.0),
            Err(Error::NeighborCount { k: 2, n: 2 })
        ));
        assert!(build_receptive_field(&[], 0, &p, 1, 1.5).is_err());
    }

    #[test]
    fn relabeling_matches_rebuilding_from_permuted_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (f, p) = random_inputs(&mut rng, 40, 3);
        let g = build_receptive_field(&f, 3, &p, 6, 0.5).unwrap();
        let mut perm: Vec<usize> = (0..40).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let mut pf = vec![0.0; f.len()];
        let mut pp = vec![[0.0; 3]; 40];
        for i in 0..40 {
            pf[perm[i] * 3..perm[i] * 3 + 3].copy_from_slice(&f[i * 3..i * 3 + 3]);
            pp[perm[i]] = p[i];
        }
        let h = build_receptive_field(&pf, 3, &pp, 6, 0.5).unwrap();
        assert_eq!(g.relabeled(&perm), h);
    }
}
