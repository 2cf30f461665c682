//! The iterative parcellation loop and the initial segmentations that seed
//! it.
//!
//! One run: build the spatial edge list once, then repeat (aggregate
//! connectivity profiles over the current segmentation, weight the spatial
//! edges by profile similarity, cut the graph into k regions with normalized
//! spectral clustering, and measure the similarity between the new
//! parcellation and the previous one) until that similarity passes the stop
//! threshold or the iteration cap is reached. The first iteration is
//! compared against the initial segmentation, later ones parcellation to
//! parcellation.

use std::io::Write as _;
use std::path::Path;

use crate::data_model::{fmt_f64, BrainMask, Parcellation, Segmentation, SparseConnectivity};
use crate::error::{Error, Result};
use crate::kmeans::kmeans_multi;
use crate::metrics::{dice, nmi};
use crate::profiles::aggregate_profiles;
use crate::rng::derive_seed;
use crate::spatial_graph::{build_spatial_edges, weight_edges, SimilarityGraph, SimilarityMeasure};
use crate::spectral::{spectral_cluster, SpectralParams};

/// Settings for one parcellation run.
#[derive(Debug, Clone)]
pub struct PipelineParams {
    /// Target region count.
    pub k: usize,
    /// Spatial neighborhood radius in grid units.
    pub radius: i32,
    pub measure: SimilarityMeasure,
    /// k-means restarts inside every spectral clustering step.
    pub restarts: usize,
    /// Consecutive-iteration similarity (NMI) that stops the loop.
    pub stop_threshold: f64,
    pub max_iterations: usize,
    pub seed: u64,
    /// Eigen-residual tolerance of the embedded spectral solver.
    pub eig_tol: f64,
    /// Matrix-vector product budget; `None` = 10n.
    pub max_matvecs: Option<usize>,
}

impl PipelineParams {
    pub fn new(k: usize) -> Self {
        PipelineParams {
            k,
            radius: 2,
            measure: SimilarityMeasure::Correlation,
            restarts: 10,
            stop_threshold: 0.95,
            max_iterations: 10,
            seed: 0,
            eig_tol: 1e-8,
            max_matvecs: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::invalid("k must be >= 1"));
        }
        if !(self.stop_threshold > 0.0 && self.stop_threshold <= 1.0) {
            return Err(Error::invalid(format!(
                "stop threshold {} outside (0, 1]",
                self.stop_threshold
            )));
        }
        if self.max_iterations < 1 {
            return Err(Error::invalid("max_iterations must be >= 1"));
        }
        if self.radius < 1 {
            return Err(Error::invalid("radius must be >= 1"));
        }
        Ok(())
    }

    fn spectral(&self, iteration: usize) -> SpectralParams {
        SpectralParams {
            tol: self.eig_tol,
            max_matvecs: self.max_matvecs,
            restarts: self.restarts,
            seed: derive_seed(self.seed, iteration as u64),
            ..SpectralParams::default()
        }
    }
}

/// One loop iteration: the parcellation it produced and its similarity to
/// the previous one (the initial segmentation for iteration 1).
#[derive(Debug, Clone)]
pub struct IterationRecord {
    /// 1-based iteration number.
    pub iteration: usize,
    pub parcellation: Parcellation,
    pub nmi_prev: f64,
    pub dice_prev: f64,
    /// Whether this iteration met the stop threshold.
    pub converged: bool,
    /// Degeneracy reported by the clustering step (no similarity mass or
    /// unused labels).
    pub degenerate: bool,
}

/// Full history of a pipeline run.
#[derive(Debug, Clone)]
pub struct PipelineTrace {
    pub records: Vec<IterationRecord>,
    /// True when the loop stopped on the similarity threshold rather than
    /// the iteration cap.
    pub converged: bool,
}

impl PipelineTrace {
    /// `iter nmi_prev dice_prev converged` per line.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(Error::io(path))?;
        let mut w = std::io::BufWriter::new(file);
        for r in &self.records {
            writeln!(
                w,
                "{} {} {} {}",
                r.iteration,
                fmt_f64(r.nmi_prev),
                fmt_f64(r.dice_prev),
                if r.converged { 1 } else { 0 }
            )
            .map_err(Error::io(path))?;
        }
        w.flush().map_err(Error::io(path))
    }
}

/// Run the iterative parcellation loop.
pub fn iterate_parcellation(
    conn: &SparseConnectivity,
    mask: &BrainMask,
    init: &Segmentation,
    params: &PipelineParams,
) -> Result<(Parcellation, PipelineTrace)> {
    params.validate()?;
    if init.len() != mask.len() || conn.n() != mask.len() {
        return Err(Error::invalid(format!(
            "inconsistent sizes: mask {}, connectivity {}, init {}",
            mask.len(),
            conn.n(),
            init.len()
        )));
    }
    if params.k > mask.len() {
        return Err(Error::invalid(format!(
            "k = {} exceeds {} voxels",
            params.k,
            mask.len()
        )));
    }

    // The edge list never changes across iterations; only weights do.
    let edges = build_spatial_edges(mask, params.radius);

    let mut current: Segmentation = init.clone();
    let mut records = Vec::new();
    let mut converged = false;
    for iteration in 1..=params.max_iterations {
        let profiles = aggregate_profiles(conn, &current)?;
        let graph = weight_edges(&edges, &profiles, params.measure, params.radius)?;
        let result = spectral_cluster(&graph, params.k, &params.spectral(iteration))?;
        let nmi_prev = nmi(&result.parcellation, &current)?;
        let dice_prev = dice(&result.parcellation, &current)?;
        let hit = nmi_prev >= params.stop_threshold;
        records.push(IterationRecord {
            iteration,
            parcellation: result.parcellation.clone(),
            nmi_prev,
            dice_prev,
            converged: hit,
            degenerate: result.degenerate,
        });
        current = result.parcellation;
        if hit {
            converged = true;
            break;
        }
    }
    Ok((current, PipelineTrace { records, converged }))
}

// ---------------------------------------------------------------------------
// Initial segmentations
// ---------------------------------------------------------------------------

/// Spatially compact random segmentation: k-means++ plus Lloyd iteration on
/// the voxel coordinates alone.
pub fn random_spatial_segmentation(mask: &BrainMask, m: usize, seed: u64) -> Result<Segmentation> {
    if m < 1 || m > mask.len() {
        return Err(Error::invalid(format!(
            "region count {m} outside [1, {}]",
            mask.len()
        )));
    }
    let points: Vec<f64> = mask
        .voxels()
        .iter()
        .flat_map(|v| v.iter().map(|&c| c as f64))
        .collect();
    let result = kmeans_multi(&points, 3, m, 1, derive_seed(seed, 0x5EED), 300, 1e-9)?;
    Parcellation::new(result.labels, m as u32)
}

/// Tile the bounding box with axis-aligned cubes of the given side length;
/// occupied cubes become regions, labeled 1..m in cube scan order.
pub fn grid_segmentation(mask: &BrainMask, cube: i32) -> Result<Segmentation> {
    if cube < 1 {
        return Err(Error::invalid("cube size must be >= 1"));
    }
    let cube_of = |v: &[i32; 3]| [v[0] / cube, v[1] / cube, v[2] / cube];
    let mut occupied: Vec<[i32; 3]> = mask.voxels().iter().map(cube_of).collect();
    occupied.sort_unstable();
    occupied.dedup();
    let rank: std::collections::HashMap<[i32; 3], u32> = occupied
        .iter()
        .enumerate()
        .map(|(r, &c)| (c, r as u32 + 1))
        .collect();
    let labels: Vec<u32> = mask.voxels().iter().map(|v| rank[&cube_of(v)]).collect();
    Parcellation::new(labels, occupied.len() as u32)
}

/// Purely spatial parcellation: spectral clustering of the spatial graph
/// with every edge weight set to 1, blind to any connectivity data.
pub fn synthetic_segmentation(
    mask: &BrainMask,
    k: usize,
    params: &PipelineParams,
) -> Result<Segmentation> {
    let edges = build_spatial_edges(mask, params.radius);
    let graph = SimilarityGraph {
        n: mask.len(),
        r: params.radius,
        edges: edges.into_iter().map(|(i, j)| (i, j, 1.0)).collect(),
    };
    let result = spectral_cluster(&graph, k, &params.spectral(0))?;
    Ok(result.parcellation)
}
