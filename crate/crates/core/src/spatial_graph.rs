//! Sparse spatially-constrained similarity graph.
//!
//! Nodes are mask voxels; an edge joins two voxels iff they lie within a
//! sphere of radius `r` (grid units) of each other. At the default `r = 2`
//! every voxel has at most 32 neighbors, so the graph stays at a few million
//! edges even for whole-brain masks. Edge weights are similarities between
//! the connectivity profiles of the endpoints, clamped into [0, 1].

use std::path::Path;

use rayon::prelude::*;

use crate::data_model::{BrainMask, ProfileMatrix};
use crate::error::{Error, Result};

/// Nonzero integer offsets within a sphere of radius `r`, sorted
/// lexicographically. At `r = 2` there are exactly 32.
pub fn neighbor_offsets(r: i32) -> Vec<[i32; 3]> {
    debug_assert!(r >= 1, "radius must be >= 1");
    let r2 = r * r;
    let mut offsets = Vec::new();
    for dx in -r..=r {
        for dy in -r..=r {
            for dz in -r..=r {
                if (dx, dy, dz) == (0, 0, 0) {
                    continue;
                }
                if dx * dx + dy * dy + dz * dz <= r2 {
                    offsets.push([dx, dy, dz]);
                }
            }
        }
    }
    offsets
}

/// Undirected spatial edges `(i, j)` with `i < j`, canonically sorted.
///
/// Pairs outside the mask are ignored; self-edges are never produced. The
/// result depends only on the voxel set, not on how workers were scheduled.
pub fn build_spatial_edges(mask: &BrainMask, r: i32) -> Vec<(u32, u32)> {
    let offsets = neighbor_offsets(r);
    let grid = mask.grid();
    let mut edges: Vec<(u32, u32)> = mask
        .voxels()
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, v)| {
            let grid = &grid;
            let offsets = &offsets;
            offsets.iter().filter_map(move |o| {
                let j = grid.index_of(v[0] + o[0], v[1] + o[1], v[2] + o[2])?;
                (j > i as u32).then_some((i as u32, j))
            })
        })
        .collect();
    edges.par_sort_unstable();
    edges
}

/// Similarity measure between two connectivity-profile rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimilarityMeasure {
    /// Pearson correlation coefficient (the default).
    Correlation,
    /// Cosine of the angle between the rows.
    Cosine,
}

impl std::str::FromStr for SimilarityMeasure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "correlation" => Ok(SimilarityMeasure::Correlation),
            "cosine" => Ok(SimilarityMeasure::Cosine),
            other => Err(Error::invalid(format!(
                "unknown similarity measure `{other}` (expected correlation or cosine)"
            ))),
        }
    }
}

/// Sparse weighted undirected graph over voxels.
///
/// Edges hold `(i, j, w)` with `i < j` and `w` in [0, 1], sorted by `(i, j)`.
#[derive(Debug, Clone)]
pub struct SimilarityGraph {
    pub n: usize,
    pub r: i32,
    pub edges: Vec<(u32, u32, f64)>,
}

impl SimilarityGraph {
    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.2).sum()
    }

    /// Optional dump: `SIMGRAPH n e r` then one `i j w` line per edge.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        use std::io::Write;
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(Error::io(path))?;
        let mut w = std::io::BufWriter::new(file);
        writeln!(w, "SIMGRAPH {} {} {}", self.n, self.edges.len(), self.r)
            .map_err(Error::io(path))?;
        for &(i, j, v) in &self.edges {
            writeln!(w, "{i} {j} {}", crate::data_model::fmt_f64(v)).map_err(Error::io(path))?;
        }
        w.flush().map_err(Error::io(path))
    }
}

/// Per-row statistics reused across all incident edges.
struct RowStats {
    mean: f64,
    /// Centered sum of squares (correlation); zero means a constant row.
    css: f64,
    /// Plain squared norm (cosine).
    norm2: f64,
}

fn row_stats(row: &[f64]) -> RowStats {
    let m = row.len() as f64;
    let mean = row.iter().sum::<f64>() / m;
    let mut css = 0.0;
    let mut norm2 = 0.0;
    for &v in row {
        let c = v - mean;
        css += c * c;
        norm2 += v * v;
    }
    RowStats { mean, css, norm2 }
}

/// Weight spatial edges by the similarity of the endpoint profile rows.
///
/// Negative similarities are clamped to 0 (the normalized Laplacian needs
/// nonnegative weights). Rows carrying no evidence (zero variance under
/// correlation, zero norm under cosine) weight all their edges 0.
pub fn weight_edges(
    edges: &[(u32, u32)],
    profiles: &ProfileMatrix,
    measure: SimilarityMeasure,
    r: i32,
) -> Result<SimilarityGraph> {
    let n = profiles.rows();
    if let Some(&(i, j)) = edges
        .iter()
        .find(|&&(i, j)| i as usize >= n || j as usize >= n)
    {
        return Err(Error::invalid(format!(
            "edge ({i}, {j}) out of range for {n} profile rows"
        )));
    }
    let stats: Vec<RowStats> = (0..n)
        .into_par_iter()
        .map(|i| row_stats(profiles.row(i)))
        .collect();
    let weighted: Vec<(u32, u32, f64)> = edges
        .par_iter()
        .map(|&(i, j)| {
            let a = profiles.row(i as usize);
            let b = profiles.row(j as usize);
            let sa = &stats[i as usize];
            let sb = &stats[j as usize];
            let w = match measure {
                SimilarityMeasure::Correlation => {
                    if sa.css == 0.0 || sb.css == 0.0 {
                        0.0
                    } else {
                        let mut cov = 0.0;
                        for (x, y) in a.iter().zip(b) {
                            cov += (x - sa.mean) * (y - sb.mean);
                        }
                        cov / (sa.css * sb.css).sqrt()
                    }
                }
                SimilarityMeasure::Cosine => {
                    if sa.norm2 == 0.0 || sb.norm2 == 0.0 {
                        0.0
                    } else {
                        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                        dot / (sa.norm2 * sb.norm2).sqrt()
                    }
                }
            };
            (i, j, w.clamp(0.0, 1.0))
        })
        .collect();
    Ok(SimilarityGraph {
        n,
        r,
        edges: weighted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::BrainMask;

    #[test]
    fn offset_counts_by_radius() {
        assert_eq!(neighbor_offsets(2).len(), 32);
        assert_eq!(neighbor_offsets(1).len(), 6);
        // brute-force enumeration of the (2r+1)^3 - 1 cube filtered by norm
        let brute = |r: i32| -> usize {
            let mut count = 0;
            for dx in -r..=r {
                for dy in -r..=r {
                    for dz in -r..=r {
                        if (dx, dy, dz) != (0, 0, 0) && dx * dx + dy * dy + dz * dz <= r * r {
                            count += 1;
                        }
                    }
                }
            }
            count
        };
        assert_eq!(neighbor_offsets(3).len(), brute(3));
        assert_eq!(neighbor_offsets(3).len(), 122);
    }

    #[test]
    fn offsets_sorted_lexicographically() {
        let off = neighbor_offsets(2);
        let mut sorted = off.clone();
        sorted.sort();
        assert_eq!(off, sorted);
    }

    #[test]
    fn interior_voxel_has_degree_32() {
        let mask = BrainMask::full_grid([5, 5, 5]).unwrap();
        let grid = mask.grid();
        let center = grid.index_of(2, 2, 2).unwrap();
        let edges = build_spatial_edges(&mask, 2);
        let degree = edges
            .iter()
            .filter(|&&(i, j)| i == center || j == center)
            .count();
        assert_eq!(degree, 32);
    }

    #[test]
    fn distant_voxels_are_disconnected() {
        let mask = BrainMask::new(vec![[0, 0, 0], [3, 0, 0]], [4, 4, 4]).unwrap();
        assert!(build_spatial_edges(&mask, 2).is_empty());
    }

    #[test]
    fn corner_voxel_degree_in_full_cube() {
        let mask = BrainMask::full_grid([4, 4, 4]).unwrap();
        let grid = mask.grid();
        let corner = grid.index_of(0, 0, 0).unwrap();
        let edges = build_spatial_edges(&mask, 2);
        let degree = edges
            .iter()
            .filter(|&&(i, j)| i == corner || j == corner)
            .count();
        assert_eq!(degree, 10);
    }

    #[test]
    fn edge_count_bounded_by_16n_at_r2() {
        let mask = BrainMask::full_grid([6, 5, 4]).unwrap();
        let edges = build_spatial_edges(&mask, 2);
        assert!(edges.len() <= 16 * mask.len());
    }

    fn profile(rows: &[&[f64]]) -> ProfileMatrix {
        let mut p = ProfileMatrix::zeros(rows.len(), rows[0].len());
        for (i, r) in rows.iter().enumerate() {
            p.row_mut(i).copy_from_slice(r);
        }
        p
    }

    #[test]
    fn identical_rows_weigh_one() {
        let p = profile(&[&[1.0, 2.0, 5.0], &[1.0, 2.0, 5.0]]);
        let g = weight_edges(&[(0, 1)], &p, SimilarityMeasure::Correlation, 2).unwrap();
        assert_eq!(g.edges[0].2, 1.0);
    }

    #[test]
    fn orthogonal_rows_weigh_zero_under_cosine() {
        let p = profile(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]);
        let g = weight_edges(&[(0, 1)], &p, SimilarityMeasure::Cosine, 2).unwrap();
        assert_eq!(g.edges[0].2, 0.0);
    }

    #[test]
    fn negative_correlation_clamps_to_zero() {
        // Pearson of a reversed arithmetic sequence is exactly -1.
        let p = profile(&[&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]]);
        let g = weight_edges(&[(0, 1)], &p, SimilarityMeasure::Correlation, 2).unwrap();
        assert_eq!(g.edges[0].2, 0.0);
    }

    #[test]
    fn constant_rows_weigh_zero() {
        let p = profile(&[&[4.0, 4.0, 4.0], &[1.0, 2.0, 3.0]]);
        let g = weight_edges(&[(0, 1)], &p, SimilarityMeasure::Correlation, 2).unwrap();
        assert_eq!(g.edges[0].2, 0.0);
    }

    #[test]
    fn weight_edges_rejects_bad_indices() {
        let p = profile(&[&[1.0], &[2.0]]);
        assert!(weight_edges(&[(0, 5)], &p, SimilarityMeasure::Correlation, 2).is_err());
    }

    #[test]
    fn weights_stay_in_unit_interval() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let n = 40;
        let m = 7;
        let mut p = ProfileMatrix::zeros(n, m);
        for i in 0..n {
            for v in p.row_mut(i) {
                *v = rng.gen::<f64>() * 5.0;
            }
        }
        let edges: Vec<(u32, u32)> = (0..n as u32)
            .flat_map(|i| ((i + 1)..n as u32).map(move |j| (i, j)))
            .collect();
        for measure in [SimilarityMeasure::Correlation, SimilarityMeasure::Cosine] {
            let g = weight_edges(&edges, &p, measure, 2).unwrap();
            for &(_, _, w) in &g.edges {
                assert!((0.0..=1.0).contains(&w), "weight {w} out of range");
            }
        }
    }
}
