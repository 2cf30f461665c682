//! k-means++ seeding, Lloyd iteration and multi-restart selection.
//!
//! Points are row-major `n x d` slices. Restarts run in parallel, each on a
//! generator derived from `(base seed, restart index)`, and the winner is the
//! restart with the smallest within-cluster sum of squared point-to-centroid
//! distances (ties go to the lowest restart index), so results are identical
//! for any worker count.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::derive_seed;

/// Fixed chunk length for parallel assignment; independent of thread count.
const ASSIGN_CHUNK: usize = 1024;

#[derive(Debug, Clone)]
pub struct KMeansResult {
    /// Per-point label in `1..=k`; each point's label is its nearest center,
    /// ties resolved toward the lowest center index.
    pub labels: Vec<u32>,
    /// `k x d` row-major centers.
    pub centers: Vec<f64>,
    /// Within-cluster sum of squared point-to-centroid distances.
    pub objective: f64,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let diff = x - y;
        acc += diff * diff;
    }
    acc
}

/// k-means++ seeding: first center uniform, each next center sampled with
/// probability proportional to the squared distance to the nearest chosen
/// center. If every remaining distance is zero (fewer distinct points than
/// k), the choice falls back to uniform among the unchosen indices.
pub fn kmeanspp_seed(
    points: &[f64],
    d: usize,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    let n = points.len() / d;
    if k > n {
        return Err(Error::invalid(format!("k = {k} exceeds {n} points")));
    }
    let row = |i: usize| &points[i * d..(i + 1) * d];
    let mut centers = Vec::with_capacity(k);
    let mut chosen = vec![false; n];
    let first = rng.gen_range(0..n);
    centers.push(first);
    chosen[first] = true;

    let mut d2: Vec<f64> = (0..n).map(|i| dist2(row(i), row(first))).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    acc += w;
                    pick = Some(i);
                    if acc > target {
                        break;
                    }
                }
            }
            pick.expect("total > 0 implies some positive weight")
        } else {
            // all remaining points coincide with chosen centers
            let remaining: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            remaining[rng.gen_range(0..remaining.len())]
        };
        centers.push(next);
        chosen[next] = true;
        for (i, d) in d2.iter_mut().enumerate() {
            let dn = dist2(row(i), row(next));
            if dn < *d {
                *d = dn;
            }
        }
    }
    Ok(centers)
}

/// One assignment pass: nearest center per point plus the objective.
fn assign(points: &[f64], d: usize, centers: &[f64], k: usize) -> (Vec<u32>, f64) {
    let n = points.len() / d;
    let per_chunk: Vec<(Vec<u32>, f64)> = points
        .par_chunks(ASSIGN_CHUNK * d)
        .map(|chunk| {
            let mut labels = Vec::with_capacity(chunk.len() / d);
            let mut obj = 0.0;
            for p in chunk.chunks_exact(d) {
                let mut best = 0usize;
                let mut best_d = f64::INFINITY;
                for c in 0..k {
                    let dist = dist2(p, &centers[c * d..(c + 1) * d]);
                    if dist < best_d {
                        best_d = dist;
                        best = c;
                    }
                }
                labels.push(best as u32 + 1);
                obj += best_d;
            }
            (labels, obj)
        })
        .collect();
    let mut labels = Vec::with_capacity(n);
    let mut obj = 0.0;
    for (l, o) in per_chunk {
        labels.extend(l);
        obj += o;
    }
    (labels, obj)
}

/// Lloyd iteration from the given initial centers.
///
/// The objective never increases between assignment passes; iteration stops
/// when the relative objective change drops below `tol` or after `max_iter`
/// passes. A cluster that comes back empty is reseeded at the point farthest
/// from its center (ties toward the lowest point index), which cannot raise
/// the objective because an empty cluster's center was nobody's nearest.
pub fn lloyd(
    points: &[f64],
    d: usize,
    mut centers: Vec<f64>,
    max_iter: usize,
    tol: f64,
) -> KMeansResult {
    let n = points.len() / d;
    let k = centers.len() / d;
    let row = |i: usize| &points[i * d..(i + 1) * d];

    let mut prev_obj = f64::INFINITY;
    let mut repairs_left = k;
    let mut iter = 0;
    loop {
        let (mut labels, mut obj) = assign(points, d, &centers, k);

        // Reseed empty clusters before accepting the assignment.
        while repairs_left > 0 {
            let mut sizes = vec![0usize; k];
            for &l in &labels {
                sizes[(l - 1) as usize] += 1;
            }
            let empties: Vec<usize> = (0..k).filter(|&c| sizes[c] == 0).collect();
            if empties.is_empty() {
                break;
            }
            for e in empties {
                let center = centers[e * d..(e + 1) * d].to_vec();
                let far = (0..n)
                    .map(|i| (i, dist2(row(i), &center)))
                    .fold(
                        (0usize, -1.0f64),
                        |best, cur| if cur.1 > best.1 { cur } else { best },
                    )
                    .0;
                centers[e * d..(e + 1) * d].copy_from_slice(row(far));
                repairs_left -= 1;
                if repairs_left == 0 {
                    break;
                }
            }
            let (l2, o2) = assign(points, d, &centers, k);
            labels = l2;
            obj = o2;
        }

        // Monotone up to round-off; near-zero objectives wobble at the
        // cancellation noise floor.
        debug_assert!(
            obj <= prev_obj + 1e-9 * prev_obj.min(f64::MAX / 2.0) + 1e-12,
            "objective increased: {prev_obj} -> {obj}"
        );

        let rel_change = if prev_obj.is_finite() && prev_obj > 0.0 {
            (prev_obj - obj) / prev_obj
        } else if prev_obj == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        if iter >= max_iter || rel_change < tol {
            return KMeansResult {
                labels,
                centers,
                objective: obj,
            };
        }
        prev_obj = obj;
        iter += 1;

        // Update step: centroid of each nonempty cluster.
        let mut sums = vec![0.0f64; k * d];
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            let c = (l - 1) as usize;
            counts[c] += 1;
            let p = row(i);
            for (s, v) in sums[c * d..(c + 1) * d].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for (dst, s) in centers[c * d..(c + 1) * d]
                    .iter_mut()
                    .zip(&sums[c * d..(c + 1) * d])
                {
                    *dst = s / counts[c] as f64;
                }
            }
        }
    }
}

/// Run `restarts` seeded k-means++ rounds and keep the best objective.
pub fn kmeans_multi(
    points: &[f64],
    d: usize,
    k: usize,
    restarts: usize,
    base_seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<KMeansResult> {
    if restarts < 1 {
        return Err(Error::invalid("restarts must be >= 1"));
    }
    if d == 0 || points.is_empty() {
        return Err(Error::invalid("empty point set"));
    }
    let results: Vec<Result<KMeansResult>> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(base_seed, r as u64));
            let seeds = kmeanspp_seed(points, d, k, &mut rng)?;
            let centers: Vec<f64> = seeds
                .iter()
                .flat_map(|&i| points[i * d..(i + 1) * d].iter().copied())
                .collect();
            Ok(lloyd(points, d, centers, max_iter, tol))
        })
        .collect();
    let mut best: Option<KMeansResult> = None;
    for r in results {
        let r = r?;
        match &best {
            Some(b) if b.objective <= r.objective => {}
            _ => best = Some(r),
        }
    }
    Ok(best.expect("restarts >= 1"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: [f64; 4] = [0.0, 1.0, 10.0, 11.0];

    #[test]
    fn seeding_rejects_k_above_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(kmeanspp_seed(&LINE, 1, 5, &mut rng).is_err());
    }

    #[test]
    fn seeding_with_k_equals_n_covers_every_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut seeds = kmeanspp_seed(&LINE, 1, 4, &mut rng).unwrap();
        seeds.sort_unstable();
        assert_eq!(seeds, vec![0, 1, 2, 3]);
    }

    #[test]
    fn seeding_identical_points_falls_back_to_uniform() {
        let pts = [3.0, 3.0, 3.0];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let seeds = kmeanspp_seed(&pts, 1, 2, &mut rng).unwrap();
        assert_eq!(seeds.len(), 2);
        assert_ne!(seeds[0], seeds[1]);
    }

    /// Exact distribution of the second seed on the 4-point line: enumerate
    /// the first choice (uniform) and the squared-distance weights it leaves.
    fn exact_same_pair_probability() -> f64 {
        let n = 4;
        let mut p_same = 0.0;
        for (first, &start) in LINE.iter().enumerate() {
            let d2: Vec<f64> = LINE.iter().map(|p| (p - start).powi(2)).collect();
            let total: f64 = d2.iter().sum();
            let mate = match first {
                0 => 1,
                1 => 0,
                2 => 3,
                _ => 2,
            };
            p_same += (1.0 / n as f64) * d2[mate] / total;
        }
        p_same
    }

    #[test]
    fn seeding_follows_the_squared_distance_law() {
        let exact = exact_same_pair_probability();
        let trials = 10_000;
        let mut same = 0;
        for t in 0..trials {
            let mut rng = ChaCha8Rng::seed_from_u64(t);
            let seeds = kmeanspp_seed(&LINE, 1, 2, &mut rng).unwrap();
            let close = |i: usize| i < 2;
            if close(seeds[0]) == close(seeds[1]) {
                same += 1;
            }
        }
        let freq = same as f64 / trials as f64;
        assert!(freq < 0.5, "same-pair seeds should be rare, got {freq}");
        // 4-sigma binomial band around the exact probability
        let sigma = (exact * (1.0 - exact) / trials as f64).sqrt();
        assert!(
            (freq - exact).abs() <= 4.0 * sigma,
            "empirical {freq} vs exact {exact} (sigma {sigma})"
        );
    }

    /// Brute-force optimum over every assignment of the 4 line points into
    /// two clusters.
    fn brute_force_two_cluster_objective() -> f64 {
        let mut best = f64::INFINITY;
        for mask in 0u32..16 {
            let groups: [Vec<f64>; 2] = {
                let mut g = [Vec::new(), Vec::new()];
                for (i, &p) in LINE.iter().enumerate() {
                    g[((mask >> i) & 1) as usize].push(p);
                }
                g
            };
            let mut obj = 0.0;
            for g in &groups {
                if g.is_empty() {
                    continue;
                }
                let mean: f64 = g.iter().sum::<f64>() / g.len() as f64;
                obj += g.iter().map(|p| (p - mean).powi(2)).sum::<f64>();
            }
            best = best.min(obj);
        }
        best
    }

    #[test]
    fn lloyd_reaches_the_global_optimum_on_the_line() {
        let best = brute_force_two_cluster_objective();
        assert_eq!(best, 1.0);
        let result = lloyd(&LINE, 1, vec![0.0, 11.0], 100, 1e-12);
        assert_eq!(result.objective, best);
        assert_eq!(result.labels[0], result.labels[1]);
        assert_eq!(result.labels[2], result.labels[3]);
        assert_ne!(result.labels[0], result.labels[2]);
    }

    #[test]
    fn lloyd_single_point_single_cluster() {
        let result = lloyd(&[5.0], 1, vec![5.0], 10, 1e-9);
        assert_eq!(result.objective, 0.0);
        assert_eq!(result.labels, vec![1]);
    }

    #[test]
    fn lloyd_converges_immediately_on_exact_centers() {
        let pts = [0.0, 0.0, 4.0, 4.0, 9.0, 9.0];
        let result = lloyd(&pts, 2, vec![0.0, 0.0, 4.0, 4.0, 9.0, 9.0], 100, 1e-12);
        assert_eq!(result.objective, 0.0);
        assert_eq!(result.labels, vec![1, 2, 3]);
    }

    #[test]
    fn lloyd_objective_matches_recomputation() {
        let pts: Vec<f64> = (0..30).map(|i| ((i * 37) % 17) as f64).collect();
        let result = lloyd(&pts, 1, vec![1.0, 9.0, 16.0], 200, 1e-12);
        let mut recomputed = 0.0;
        for (i, &l) in result.labels.iter().enumerate() {
            let c = result.centers[(l - 1) as usize];
            recomputed += (pts[i] - c).powi(2);
        }
        assert!((result.objective - recomputed).abs() <= 1e-9 * recomputed.max(1.0));
    }

    #[test]
    fn multi_restart_is_no_worse_than_single() {
        let pts: Vec<f64> = (0..40).map(|i| ((i * 53) % 23) as f64).collect();
        let single = kmeans_multi(&pts, 1, 4, 1, 7, 300, 1e-9).unwrap();
        let multi = kmeans_multi(&pts, 1, 4, 10, 7, 300, 1e-9).unwrap();
        assert!(multi.objective <= single.objective);
    }

    #[test]
    fn multi_restart_finds_line_optimum_across_trials() {
        for seed in 0..100 {
            let r = kmeans_multi(&LINE, 1, 2, 10, seed, 300, 1e-12).unwrap();
            assert_eq!(r.objective, 1.0, "seed {seed}");
        }
    }

    #[test]
    fn identical_seed_gives_identical_labels() {
        let pts: Vec<f64> = (0..60).map(|i| ((i * 101) % 31) as f64 / 3.0).collect();
        let a = kmeans_multi(&pts, 2, 3, 5, 99, 300, 1e-9).unwrap();
        let b = kmeans_multi(&pts, 2, 3, 5, 99, 300, 1e-9).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    }

    #[test]
    fn empty_cluster_is_reseeded() {
        // Both initial centers coincide, so one cluster starts empty.
        let pts = [0.0, 1.0, 10.0, 11.0];
        let result = lloyd(&pts, 1, vec![0.0, 0.0], 100, 1e-12);
        let distinct: std::collections::HashSet<u32> = result.labels.iter().copied().collect();
        assert_eq!(distinct.len(), 2);
        assert_eq!(result.objective, 1.0);
    }
}
