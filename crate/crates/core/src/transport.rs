//! Exact bottleneck (infinity-Wasserstein) distance between two equal-size
//! point clouds.
//!
//! The squared distance is the least maximum-matching cost over the complete
//! bipartite graph with squared-distance edge weights. We sort the unique
//! costs, and search for the smallest threshold whose subgraph admits a
//! perfect matching. Feasibility is monotone in the threshold, so a binary
//! search over thresholds is exact; a linear scan from the spanning
//! threshold upward is kept as the reference path.

use std::collections::VecDeque;

use itertools::Itertools;

use crate::error::{Error, Result};

/// Largest instance the factorial oracle accepts.
pub const BRUTE_FORCE_MAX: usize = 9;

const UNMATCHED: usize = usize::MAX;

/// Result of a bottleneck matching.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// Squared bottleneck distance; always one of the pairwise costs.
    pub bottleneck_sq: f64,
    /// Permutation sigma: point `i` of the first cloud is paired with point
    /// `sigma[i]` of the second.
    pub assignment: Vec<usize>,
}

/// Squared pairwise costs of two flat point lists, row-major over the first
/// cloud.
fn cost_matrix(xs: &[f64], ys: &[f64], dim: usize) -> Result<(Vec<f64>, usize)> {
    if dim == 0 {
        return Err(Error::DimensionMismatch { expected: 1, got: 0 });
    }
    if !xs.len().is_multiple_of(dim) || !ys.len().is_multiple_of(dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: xs.len() % dim,
        });
    }
    let n = xs.len() / dim;
    let m = ys.len() / dim;
    if n != m {
        return Err(Error::SizeMismatch { left: n, right: m });
    }
    if n == 0 {
        return Err(Error::TooFewParticles { got: 0, min: 1 });
    }
    let mut costs = vec![0.0; n * n];
    for i in 0..n {
        let xi = &xs[i * dim..(i + 1) * dim];
        for j in 0..n {
            let yj = &ys[j * dim..(j + 1) * dim];
            let mut c = 0.0;
            for k in 0..dim {
                let d = xi[k] - yj[k];
                c += d * d;
            }
            costs[i * n + j] = c;
        }
    }
    Ok((costs, n))
}

/// Maximum bipartite matching (Hopcroft-Karp) with the edge set given as a
/// predicate. Returns the matching size and the left-to-right pairing
/// (`UNMATCHED` for unmatched vertices).
#[allow(clippy::needless_range_loop)]
fn max_matching<F: Fn(usize, usize) -> bool>(n: usize, edge: &F) -> (usize, Vec<usize>) {
    let mut match_l = vec![UNMATCHED; n];
    let mut match_r = vec![UNMATCHED; n];
    let mut size = 0;
    let mut dist = vec![UNMATCHED; n];
    let mut queue = VecDeque::new();

    loop {
        // BFS: layer the left vertices starting from the free ones.
        dist.iter_mut().for_each(|d| *d = UNMATCHED);
        queue.clear();
        for (u, &m) in match_l.iter().enumerate() {
            if m == UNMATCHED {
                dist[u] = 0;
                queue.push_back(u);
            }
        }
        let mut found = false;
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                if !edge(u, v) {
                    continue;
                }
                let w = match_r[v];
                if w == UNMATCHED {
                    found = true;
                } else if dist[w] == UNMATCHED {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        if !found {
            break;
        }
        let mut augmented = 0usize;
        // DFS along the level graph, augmenting from each free left vertex.
        fn augment<F: Fn(usize, usize) -> bool>(
            u: usize,
            n: usize,
            edge: &F,
            dist: &mut [usize],
            match_l: &mut [usize],
            match_r: &mut [usize],
        ) -> bool {
            let du = dist[u];
            dist[u] = UNMATCHED;
            for v in 0..n {
                if !edge(u, v) {
                    continue;
                }
                let w = match_r[v];
                if w == UNMATCHED
                    || (dist[w] == du + 1 && augment(w, n, edge, dist, match_l, match_r))
                {
                    match_l[u] = v;
                    match_r[v] = u;
                    return true;
                }
            }
            false
        }
        for u in 0..n {
            if match_l[u] == UNMATCHED
                && dist[u] == 0
                && augment(u, n, edge, &mut dist, &mut match_l, &mut match_r)
            {
                size += 1;
                augmented += 1;
            }
        }
        debug_assert!(augmented > 0, "BFS found a path the DFS did not realize");
        if augmented == 0 {
            break;
        }
    }
    (size, match_l)
}

/// True when the boolean bipartite adjacency matrix admits a perfect
/// matching. The matrix must be square.
pub fn has_perfect_matching(adjacency: &[Vec<bool>]) -> bool {
    let n = adjacency.len();
    assert!(
        adjacency.iter().all(|row| row.len() == n),
        "adjacency matrix must be square"
    );
    if n == 0 {
        return true;
    }
    let (size, _) = max_matching(n, &|i, j| adjacency[i][j]);
    size == n
}

/// Sorted unique cost thresholds and the spanning index `k0`: the smallest
/// threshold index at which every vertex on both sides has degree >= 1.
fn thresholds(costs: &[f64], n: usize) -> (Vec<f64>, usize) {
    let mut unique = costs.to_vec();
    unique.sort_unstable_by(f64::total_cmp);
    unique.dedup();

    let mut row_min = vec![f64::INFINITY; n];
    let mut col_min = vec![f64::INFINITY; n];
    for i in 0..n {
        for j in 0..n {
            let c = costs[i * n + j];
            if c < row_min[i] {
                row_min[i] = c;
            }
            if c < col_min[j] {
                col_min[j] = c;
            }
        }
    }
    let spanning_cost = row_min
        .iter()
        .chain(col_min.iter())
        .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let k0 = unique.partition_point(|&c| c < spanning_cost);
    (unique, k0)
}

fn result_at(costs: &[f64], n: usize, threshold: f64) -> MatchResult {
    let (size, assignment) = max_matching(n, &|i, j| costs[i * n + j] <= threshold);
    debug_assert_eq!(size, n, "threshold must admit a perfect matching");
    debug_assert!({
        let max = assignment
            .iter()
            .enumerate()
            .map(|(i, &j)| costs[i * n + j])
            .fold(f64::NEG_INFINITY, f64::max);
        max == threshold
    });
    MatchResult {
        bottleneck_sq: threshold,
        assignment,
    }
}

/// Exact squared infinity-Wasserstein distance between two equal-size
/// empirical measures given as flat `n * dim` coordinate slices.
///
/// Binary-searches the sorted unique costs between the spanning threshold
/// and the maximum; output-identical to [`bottleneck_w_inf_sq_linear`].
pub fn bottleneck_w_inf_sq(xs: &[f64], ys: &[f64], dim: usize) -> Result<MatchResult> {
    let (costs, n) = cost_matrix(xs, ys, dim)?;
    let (unique, k0) = thresholds(&costs, n);
    let mut lo = k0;
    let mut hi = unique.len() - 1;
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        let (size, _) = max_matching(n, &|i, j| costs[i * n + j] <= unique[mid]);
        if size == n {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(result_at(&costs, n, unique[lo]))
}

/// Reference implementation: scan thresholds upward from the spanning index
/// until a perfect matching appears.
pub fn bottleneck_w_inf_sq_linear(xs: &[f64], ys: &[f64], dim: usize) -> Result<MatchResult> {
    let (costs, n) = cost_matrix(xs, ys, dim)?;
    let (unique, k0) = thresholds(&costs, n);
    for &c in &unique[k0..] {
        let (size, _) = max_matching(n, &|i, j| costs[i * n + j] <= c);
        if size == n {
            return Ok(result_at(&costs, n, c));
        }
    }
    unreachable!("the complete graph admits a perfect matching")
}

/// Factorial-enumeration oracle, exact minimum over all permutations.
/// Rejects instances with more than [`BRUTE_FORCE_MAX`] points.
pub fn brute_force_bottleneck(xs: &[f64], ys: &[f64], dim: usize) -> Result<MatchResult> {
    let (costs, n) = cost_matrix(xs, ys, dim)?;
    if n > BRUTE_FORCE_MAX {
        return Err(Error::BruteForceTooLarge {
            n,
            max: BRUTE_FORCE_MAX,
        });
    }
    let mut best = f64::INFINITY;
    let mut best_perm = (0..n).collect::<Vec<_>>();
    for perm in (0..n).permutations(n) {
        let max = perm
            .iter()
            .enumerate()
            .map(|(i, &j)| costs[i * n + j])
            .fold(f64::NEG_INFINITY, f64::max);
        if max < best {
            best = max;
            best_perm = perm;
        }
    }
    Ok(MatchResult {
        bottleneck_sq: best,
        assignment: best_perm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<f64> {
        (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn assert_valid(result: &MatchResult, xs: &[f64], ys: &[f64], dim: usize) {
        let n = xs.len() / dim;
        let mut seen = vec![false; n];
        for &j in &result.assignment {
            assert!(!seen[j], "assignment is not a bijection");
            seen[j] = true;
        }
        let max = result
            .assignment
            .iter()
            .enumerate()
            .map(|(i, &j)| {
                (0..dim)
                    .map(|k| (xs[i * dim + k] - ys[j * dim + k]).powi(2))
                    .sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(max, result.bottleneck_sq);
    }

    #[test]
    fn identical_clouds_have_zero_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs = random_cloud(&mut rng, 12, 2);
        let r = bottleneck_w_inf_sq(&xs, &xs, 2).unwrap();
        assert_eq!(r.bottleneck_sq, 0.0);
        assert_valid(&r, &xs, &xs, 2);
    }

    #[test]
    fn singleton_example() {
        let r = bottleneck_w_inf_sq(&[0.0, 0.0], &[1.0, 0.0], 2).unwrap();
        assert_eq!(r.bottleneck_sq, 1.0);
        assert_eq!(r.assignment, vec![0]);
    }

    #[test]
    fn two_point_examples() {
        // Identity pairing wins over the crossing that costs 121.
        let xs = [0.0, 0.0, 10.0, 0.0];
        let ys = [1.0, 0.0, 11.0, 0.0];
        let r = bottleneck_w_inf_sq(&xs, &ys, 2).unwrap();
        assert_eq!(r.bottleneck_sq, 1.0);
        assert_eq!(r.assignment, vec![0, 1]);

        // Both pairings attain max cost 2.
        let xs = [0.0, 0.0, 2.0, 0.0];
        let ys = [1.0, 0.0, 1.0, 1.0];
        let r = bottleneck_w_inf_sq(&xs, &ys, 2).unwrap();
        assert_eq!(r.bottleneck_sq, 2.0);
        assert_valid(&r, &xs, &ys, 2);
    }

    #[test]
    fn shifted_line_brute_force() {
        let xs = [0.0, 0.0, 1.0, 0.0, 2.0, 0.0];
        let ys = [0.1, 0.0, 1.1, 0.0, 2.1, 0.0];
        let r = brute_force_bottleneck(&xs, &ys, 2).unwrap();
        assert!((r.bottleneck_sq - 0.01).abs() < 1e-15);
        assert_eq!(r.assignment, vec![0, 1, 2]);
    }

    #[test]
    fn brute_force_rejects_large_instances() {
        let xs = vec![0.0; 20];
        assert!(matches!(
            brute_force_bottleneck(&xs, &xs, 2),
            Err(Error::BruteForceTooLarge { n: 10, .. })
        ));
    }

    #[test]
    fn size_mismatch_is_rejected() {
        assert!(matches!(
            bottleneck_w_inf_sq(&[0.0, 0.0], &[0.0, 0.0, 1.0, 1.0], 2),
            Err(Error::SizeMismatch { left: 1, right: 2 })
        ));
    }

    #[test]
    fn has_perfect_matching_examples() {
        let id = vec![vec![true, false], vec![false, true]];
        assert!(has_perfect_matching(&id));
        let dead_row = vec![vec![false, false], vec![true, true]];
        assert!(!has_perfect_matching(&dead_row));
        let swap_only = vec![vec![true, true], vec![true, false]];
        assert!(has_perfect_matching(&swap_only));
    }

    #[test]
    fn oracle_equivalence_500_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for case in 0..500 {
            let n = rng.random_range(2..=8);
            let xs = random_cloud(&mut rng, n, 2);
            let ys = random_cloud(&mut rng, n, 2);
            let fast = bottleneck_w_inf_sq(&xs, &ys, 2).unwrap();
            let oracle = brute_force_bottleneck(&xs, &ys, 2).unwrap();
            assert_eq!(fast.bottleneck_sq, oracle.bottleneck_sq, "case {case}");
            assert_valid(&fast, &xs, &ys, 2);
        }
    }

    #[test]
    fn binary_search_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..100 {
            let n = rng.random_range(2..=30);
            let xs = random_cloud(&mut rng, n, 2);
            let ys = random_cloud(&mut rng, n, 2);
            let fast = bottleneck_w_inf_sq(&xs, &ys, 2).unwrap();
            let linear = bottleneck_w_inf_sq_linear(&xs, &ys, 2).unwrap();
            assert_eq!(fast, linear);
        }
    }

    #[test]
    fn metric_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..50 {
            let n = rng.random_range(2..=12);
            let xs = random_cloud(&mut rng, n, 2);
            let ys = random_cloud(&mut rng, n, 2);
            let ab = bottleneck_w_inf_sq(&xs, &ys, 2).unwrap();
            let ba = bottleneck_w_inf_sq(&ys, &xs, 2).unwrap();
            assert_eq!(ab.bottleneck_sq, ba.bottleneck_sq);
        }
    }

    #[test]
    fn metric_triangle_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let n = rng.random_range(2..=8);
            let xs = random_cloud(&mut rng, n, 2);
            let ys = random_cloud(&mut rng, n, 2);
            let zs = random_cloud(&mut rng, n, 2);
            let dxz = bottleneck_w_inf_sq(&xs, &zs, 2).unwrap().bottleneck_sq.sqrt();
            let dxy = bottleneck_w_inf_sq(&xs, &ys, 2).unwrap().bottleneck_sq.sqrt();
            let dyz = bottleneck_w_inf_sq(&ys, &zs, 2).unwrap().bottleneck_sq.sqrt();
            assert!(dxz <= dxy + dyz + 1e-12);
        }
    }

    #[test]
    fn identity_of_indiscernibles_up_to_relabeling() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let n = 7;
        let xs = random_cloud(&mut rng, n, 2);
        // Same multiset of points, shuffled.
        let order = [3usize, 0, 6, 2, 5, 1, 4];
        let mut ys = vec![0.0; xs.len()];
        for (to, &from) in order.iter().enumerate() {
            ys[to * 2..to * 2 + 2].copy_from_slice(&xs[from * 2..from * 2 + 2]);
        }
        let r = bottleneck_w_inf_sq(&xs, &ys, 2).unwrap();
        assert_eq!(r.bottleneck_sq, 0.0);
    }

    #[test]
    fn threshold_feasibility_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..20 {
            let n = rng.random_range(2..=10);
            let xs = random_cloud(&mut rng, n, 2);
            let ys = random_cloud(&mut rng, n, 2);
            let (costs, n) = cost_matrix(&xs, &ys, 2).unwrap();
            let (unique, _) = thresholds(&costs, n);
            let mut was_feasible = false;
            for &c in &unique {
                let adjacency: Vec<Vec<bool>> = (0..n)
                    .map(|i| (0..n).map(|j| costs[i * n + j] <= c).collect())
                    .collect();
                let feasible = has_perfect_matching(&adjacency);
                assert!(!was_feasible || feasible, "feasibility regressed");
                was_feasible = feasible;
            }
            assert!(was_feasible);
        }
    }

    /// Mean cost under the bottleneck assignment dominates the brute-force
    /// minimum-average assignment (the finite-p ordering of the metrics).
    #[test]
    fn bottleneck_mean_cost_dominates_min_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..100 {
            let n = rng.random_range(2..=8);
            let xs = random_cloud(&mut rng, n, 2);
            let ys = random_cloud(&mut rng, n, 2);
            let (costs, _) = cost_matrix(&xs, &ys, 2).unwrap();
            let r = bottleneck_w_inf_sq(&xs, &ys, 2).unwrap();
            let mean_under_sigma: f64 = r
                .assignment
                .iter()
                .enumerate()
                .map(|(i, &j)| costs[i * n + j])
                .sum::<f64>()
                / n as f64;
            let min_avg = (0..n)
                .permutations(n)
                .map(|perm| {
                    perm.iter()
                        .enumerate()
                        .map(|(i, &j)| costs[i * n + j])
                        .sum::<f64>()
                        / n as f64
                })
                .fold(f64::INFINITY, f64::min);
            assert!(mean_under_sigma >= min_avg - 1e-12);
        }
    }
}
