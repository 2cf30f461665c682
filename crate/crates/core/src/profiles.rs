//! Connectivity profiles: for every voxel, the cumulative connectivity
//! strength toward each region of a segmentation. Aggregating rows of the
//! connectivity matrix over regions smooths tractography noise and keeps the
//! per-voxel signature short regardless of brain size.

use rayon::prelude::*;

use crate::data_model::{ProfileMatrix, Segmentation, SparseConnectivity};
use crate::error::{Error, Result};

/// `P[i][c] = sum of conn(i, j) over voxels j labeled c`.
///
/// Self-loops land in the column of the voxel's own region, so every row sum
/// equals the voxel's total connectivity strength. Accumulation order within
/// a row is fixed (ascending voxel index), independent of the worker count.
pub fn aggregate_profiles(conn: &SparseConnectivity, seg: &Segmentation) -> Result<ProfileMatrix> {
    if seg.len() != conn.n() {
        return Err(Error::invalid(format!(
            "segmentation covers {} voxels but connectivity has {}",
            seg.len(),
            conn.n()
        )));
    }
    let m = seg.k() as usize;
    let csr = conn.to_csr();
    let labels = seg.labels();
    let mut profiles = ProfileMatrix::zeros(conn.n(), m);
    profiles.par_rows_mut().enumerate().for_each(|(i, row)| {
        let (cols, vals) = csr.row(i);
        for (&j, &w) in cols.iter().zip(vals) {
            row[(labels[j as usize] - 1) as usize] += w;
        }
    });
    Ok(profiles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::Parcellation;

    #[test]
    fn aggregates_by_region_column() {
        let conn = SparseConnectivity::from_triplets(3, vec![(0, 1, 2.0), (0, 2, 3.0)]).unwrap();
        let seg = Parcellation::new(vec![1, 1, 2], 2).unwrap();
        let p = aggregate_profiles(&conn, &seg).unwrap();
        assert_eq!(p.row(0), &[2.0, 3.0]);
        assert_eq!(p.row(1), &[2.0, 0.0]);
        assert_eq!(p.row(2), &[3.0, 0.0]);
    }

    #[test]
    fn empty_connectivity_gives_zero_profiles() {
        let conn = SparseConnectivity::zero(4);
        let seg = Parcellation::new(vec![1, 2, 2, 1], 2).unwrap();
        let p = aggregate_profiles(&conn, &seg).unwrap();
        for i in 0..4 {
            assert!(p.row(i).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn single_region_collapses_to_row_sums() {
        let conn =
            SparseConnectivity::from_triplets(3, vec![(0, 1, 2.0), (0, 2, 3.0), (1, 1, 4.0)])
                .unwrap();
        let seg = Parcellation::new(vec![1, 1, 1], 1).unwrap();
        let p = aggregate_profiles(&conn, &seg).unwrap();
        assert_eq!(p.cols(), 1);
        assert_eq!(p.row(0), &[5.0]);
        assert_eq!(p.row(1), &[6.0]); // 2 from (0,1) + 4 from the self-loop
        assert_eq!(p.row(2), &[3.0]);
    }

    #[test]
    fn self_loop_lands_in_own_region_column() {
        let conn = SparseConnectivity::from_triplets(3, vec![(1, 1, 2.0)]).unwrap();
        let seg = Parcellation::new(vec![1, 2, 2], 2).unwrap();
        let p = aggregate_profiles(&conn, &seg).unwrap();
        assert_eq!(p.row(1), &[0.0, 2.0]);
    }

    #[test]
    fn size_mismatch_is_an_error() {
        let conn = SparseConnectivity::zero(4);
        let seg = Parcellation::new(vec![1, 1], 1).unwrap();
        assert!(aggregate_profiles(&conn, &seg).is_err());
    }
}
