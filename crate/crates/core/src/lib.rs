//! Connectivity-driven whole-brain parcellation.
//!
//! Starting from a voxel-level structural connectivity matrix (tractography
//! output), the pipeline clusters voxels into k spatially contiguous,
//! connectivity-homogeneous regions:
//!
//! 1. aggregate each voxel's connectivity into a profile over the regions of
//!    an initial segmentation ([`profiles`]),
//! 2. weight a sparse spatially-constrained graph by profile similarity
//!    ([`spatial_graph`]),
//! 3. cut the graph with normalized spectral clustering ([`spectral`],
//!    [`kmeans`]),
//! 4. repeat with the new parcellation defining the profiles until
//!    consecutive parcellations agree ([`pipeline`]).
//!
//! The surrounding toolkit covers parcellation comparison ([`metrics`]),
//! group-level analysis: atlas building, similarity and connectome
//! statistics, a linear max-margin classifier ([`group`]), and synthetic
//! connectomes with planted ground truth for end-to-end verification
//! ([`synth`]).

pub mod data_model;
pub mod error;
pub mod group;
pub mod kmeans;
pub mod metrics;
pub mod pipeline;
pub mod profiles;
pub mod rng;
pub mod spatial_graph;
pub mod spectral;
pub mod stats;
pub mod synth;

pub use data_model::{
    BrainMask, Csr, Parcellation, ProfileMatrix, Segmentation, SparseConnectivity,
};
pub use error::{Error, Result};
pub use metrics::{dice, nmi, SimilarityMetric};
pub use pipeline::{iterate_parcellation, PipelineParams, PipelineTrace};
pub use spatial_graph::{
    build_spatial_edges, neighbor_offsets, SimilarityGraph, SimilarityMeasure,
};
pub use spectral::{smallest_eigenvectors, spectral_cluster, SpectralParams};
