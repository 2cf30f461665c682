//! Synthetic connectomes with planted ground truth.
//!
//! The generator plants k spatially compact regions on a full grid and gives
//! every region a distinct connectivity signature: sampled voxel pairs carry
//! the within-region strength when their regions agree and the weaker
//! between-region strength otherwise, plus clamped Gaussian noise. Recovery
//! of the planted parcellation is then a checkable end-to-end oracle for the
//! whole pipeline. Pair randomness is counter-based, derived from
//! `(seed, i, j)`, so the worker count never changes the instance.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data_model::{BrainMask, Parcellation, SparseConnectivity};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, CounterRng};

/// Parameters of a planted-structure instance.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub dims: [i32; 3],
    pub k_true: u32,
    /// Strength of sampled same-region pairs.
    pub within_strength: f64,
    /// Strength of sampled cross-region pairs.
    pub between_strength: f64,
    /// Gaussian noise sigma added to every sampled pair (clamped at 0).
    pub noise: f64,
    /// Probability that a voxel pair is sampled at all.
    pub density: f64,
    pub seed: u64,
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d < 1) {
            return Err(Error::invalid(format!(
                "dims must be positive, got {:?}",
                self.dims
            )));
        }
        if self.k_true < 1 {
            return Err(Error::invalid("k_true must be >= 1"));
        }
        if !(self.within_strength > self.between_strength && self.between_strength >= 0.0) {
            return Err(Error::invalid(format!(
                "need within > between >= 0, got {} and {}",
                self.within_strength, self.between_strength
            )));
        }
        if self.noise < 0.0 {
            return Err(Error::invalid("noise must be >= 0"));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::invalid(format!(
                "density {} outside (0, 1]",
                self.density
            )));
        }
        Ok(())
    }
}

/// A generated instance: full-grid mask, sampled connectivity, and the
/// planted parcellation.
#[derive(Debug, Clone)]
pub struct SynthInstance {
    pub mask: BrainMask,
    pub connectivity: SparseConnectivity,
    pub ground_truth: Parcellation,
}

/// Split `k` into axis counts (a, b, c) with `a*b*c = k` making the boxes as
/// cube-like as the dims allow. Rejected when even the best split leaves
/// boxes more than 2.5x longer on one side than another: thin slabs make the
/// planted partition a poor graph cut and recovery meaningless.
fn box_factors(dims: [i32; 3], k: u32) -> Option<[u32; 3]> {
    let mut best: Option<([u32; 3], f64)> = None;
    for a in 1..=k {
        if !k.is_multiple_of(a) || a as i32 > dims[0] {
            continue;
        }
        let rest = k / a;
        for b in 1..=rest {
            if !rest.is_multiple_of(b) || b as i32 > dims[1] {
                continue;
            }
            let c = rest / b;
            if c as i32 > dims[2] {
                continue;
            }
            let sides = [
                dims[0] as f64 / a as f64,
                dims[1] as f64 / b as f64,
                dims[2] as f64 / c as f64,
            ];
            let aspect = sides.iter().cloned().fold(0.0f64, f64::max)
                / sides.iter().cloned().fold(f64::INFINITY, f64::min);
            if aspect > 2.5 {
                continue;
            }
            let mean = (sides[0] + sides[1] + sides[2]) / 3.0;
            let score: f64 = sides.iter().map(|s| (s - mean) * (s - mean)).sum();
            if best.is_none_or(|(_, s)| score < s) {
                best = Some(([a, b, c], score));
            }
        }
    }
    best.map(|(f, _)| f)
}

/// Spatially compact k-region partition of a full grid: balanced near-cubic
/// boxes when k factors onto the axes, otherwise compact Voronoi-style cells
/// grown by seeded k-means on the voxel coordinates.
fn planted_partition(mask: &BrainMask, k: u32, seed: u64) -> Result<Parcellation> {
    let n = mask.len();
    if k as usize > n {
        return Err(Error::invalid(format!("k_true = {k} exceeds {n} voxels")));
    }
    let dims = mask.dims();
    if let Some([a, b, c]) = box_factors(dims, k) {
        let slab = |coord: i32, dim: i32, parts: u32| -> u32 {
            (((coord as i64) * parts as i64 / dim as i64) as u32).min(parts - 1)
        };
        let labels: Vec<u32> = mask
            .voxels()
            .iter()
            .map(|v| {
                let (sx, sy, sz) = (
                    slab(v[0], dims[0], a),
                    slab(v[1], dims[1], b),
                    slab(v[2], dims[2], c),
                );
                1 + sx * b * c + sy * c + sz
            })
            .collect();
        Parcellation::new(labels, k)
    } else {
        crate::pipeline::random_spatial_segmentation(mask, k as usize, derive_seed(seed, 0xB07E5))
    }
}

/// Generate a planted-structure connectome.
pub fn generate(spec: &SynthSpec) -> Result<SynthInstance> {
    spec.validate()?;
    let mask = BrainMask::full_grid(spec.dims)?;
    let n = mask.len();
    let ground_truth = planted_partition(&mask, spec.k_true, spec.seed)?;
    let labels = ground_truth.labels();

    let triplets: Vec<(u32, u32, f64)> = (0..n as u32)
        .into_par_iter()
        .flat_map_iter(|i| {
            let labels = &labels;
            ((i + 1)..n as u32).filter_map(move |j| {
                let base = if labels[i as usize] == labels[j as usize] {
                    spec.within_strength
                } else {
                    spec.between_strength
                };
                if base == 0.0 && spec.noise == 0.0 {
                    return None;
                }
                let mut rng = CounterRng::new(spec.seed, (i as u64) << 32 | j as u64);
                if rng.next_f64() >= spec.density {
                    return None;
                }
                let value = if spec.noise > 0.0 {
                    // Box-Muller from two counter-derived uniforms
                    let u1 = rng.next_f64().max(f64::MIN_POSITIVE);
                    let u2 = rng.next_f64();
                    let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
                    base + spec.noise * z
                } else {
                    base
                };
                (value > 0.0).then_some((i, j, value))
            })
        })
        .collect();

    let connectivity = SparseConnectivity::from_triplets(n, triplets)?;
    Ok(SynthInstance {
        mask,
        connectivity,
        ground_truth,
    })
}

/// Reassign exactly `floor(flip_fraction * n)` voxels to uniformly random
/// *other* labels. With k = 1 there is no other label and the parcellation
/// is returned unchanged.
pub fn perturb_parcellation(
    parc: &Parcellation,
    flip_fraction: f64,
    seed: u64,
) -> Result<Parcellation> {
    if !(0.0..=1.0).contains(&flip_fraction) {
        return Err(Error::invalid(format!(
            "flip fraction {flip_fraction} outside [0, 1]"
        )));
    }
    let n = parc.len();
    let k = parc.k();
    let flips = (flip_fraction * n as f64).floor() as usize;
    if flips == 0 || k == 1 {
        return Ok(parc.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xF11B));
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut rng);
    let mut labels = parc.labels().to_vec();
    for &v in indices.iter().take(flips) {
        // uniform over the k-1 labels that differ from the current one
        let offset = rng.gen_range(1..k);
        labels[v] = 1 + (labels[v] - 1 + offset) % k;
    }
    Parcellation::new(labels, k)
}
