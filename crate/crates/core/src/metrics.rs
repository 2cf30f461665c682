//! Similarity metrics between two labelings of the same voxel set:
//! normalized mutual information and Dice's coefficient over co-membership
//! matrices, both computed from a contingency table so that nothing of size
//! n x n is ever materialized.

use std::path::Path;

use rayon::prelude::*;

use crate::data_model::{fmt_f64, Parcellation};
use crate::error::{Error, Result};

/// Joint label counts `n_ij = |A_i ∩ B_j|` plus marginals.
#[derive(Debug, Clone)]
pub struct ContingencyTable {
    pub k_a: usize,
    pub k_b: usize,
    /// Row-major `k_a x k_b` counts.
    pub counts: Vec<u64>,
    pub a_sizes: Vec<u64>,
    pub b_sizes: Vec<u64>,
    pub n: u64,
}

impl ContingencyTable {
    pub fn from_labels(a: &[u32], b: &[u32], k_a: usize, k_b: usize) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::invalid(format!(
                "label vectors differ in length: {} vs {}",
                a.len(),
                b.len()
            )));
        }
        let mut counts = vec![0u64; k_a * k_b];
        let mut a_sizes = vec![0u64; k_a];
        let mut b_sizes = vec![0u64; k_b];
        for (&la, &lb) in a.iter().zip(b) {
            let ia = (la - 1) as usize;
            let ib = (lb - 1) as usize;
            counts[ia * k_b + ib] += 1;
            a_sizes[ia] += 1;
            b_sizes[ib] += 1;
        }
        Ok(ContingencyTable {
            k_a,
            k_b,
            counts,
            a_sizes,
            b_sizes,
            n: a.len() as u64,
        })
    }

    pub fn from_parcellations(a: &Parcellation, b: &Parcellation) -> Result<Self> {
        Self::from_labels(a.labels(), b.labels(), a.k() as usize, b.k() as usize)
    }
}

/// Normalized mutual information between two labelings.
///
/// MI over the mean of the entropies, with probabilities estimated as voxel
/// fractions; `0 * log 0` contributes nothing and logs are natural (the base
/// cancels in the ratio). Two single-region labelings are identical, so the
/// zero-entropy case returns 1.
pub fn nmi(a: &Parcellation, b: &Parcellation) -> Result<f64> {
    let table = ContingencyTable::from_parcellations(a, b)?;
    Ok(nmi_from_table(&table))
}

pub fn nmi_from_table(t: &ContingencyTable) -> f64 {
    let n = t.n as f64;
    let h_a = entropy(&t.a_sizes, n);
    let h_b = entropy(&t.b_sizes, n);
    if h_a + h_b == 0.0 {
        return 1.0;
    }
    // Identical up to relabeling: every nonzero cell swallows its whole row
    // and column. MI then equals both entropies, so the ratio is exactly 1;
    // returning it directly keeps the identity free of round-off.
    let matched =
        t.counts.iter().enumerate().all(|(idx, &c)| {
            c == 0 || (c == t.a_sizes[idx / t.k_b] && c == t.b_sizes[idx % t.k_b])
        });
    if matched {
        return 1.0;
    }
    let mut mi = 0.0;
    for ia in 0..t.k_a {
        let pa = t.a_sizes[ia] as f64 / n;
        if pa == 0.0 {
            continue;
        }
        for ib in 0..t.k_b {
            let c = t.counts[ia * t.k_b + ib];
            if c == 0 {
                continue;
            }
            let pab = c as f64 / n;
            let pb = t.b_sizes[ib] as f64 / n;
            mi += pab * (pab / (pa * pb)).ln();
        }
    }
    // MI is nonnegative in exact arithmetic; clear rounding dust.
    if mi < 0.0 {
        debug_assert!(mi >= -1e-12, "mutual information {mi} below round-off band");
        mi = 0.0;
    }
    (mi / ((h_a + h_b) / 2.0)).min(1.0)
}

fn entropy(sizes: &[u64], n: f64) -> f64 {
    let mut h = 0.0;
    for &s in sizes {
        if s > 0 {
            let p = s as f64 / n;
            h -= p * p.ln();
        }
    }
    h
}

/// Dice's coefficient between the co-membership matrices of two labelings.
///
/// With `C_ij = [label_i == label_j]` (diagonal included), the coefficient
/// is twice the count of shared nonzeros over the total nonzeros. Counting
/// through the contingency table gives the identical integer quantities:
/// shared nonzeros are `sum n_ij^2`, and each matrix has `sum size^2`
/// nonzeros.
pub fn dice(a: &Parcellation, b: &Parcellation) -> Result<f64> {
    let table = ContingencyTable::from_parcellations(a, b)?;
    Ok(dice_from_table(&table))
}

pub fn dice_from_table(t: &ContingencyTable) -> f64 {
    let common: u64 = t.counts.iter().map(|&c| c * c).sum();
    let nnz_a: u64 = t.a_sizes.iter().map(|&s| s * s).sum();
    let nnz_b: u64 = t.b_sizes.iter().map(|&s| s * s).sum();
    2.0 * common as f64 / (nnz_a + nnz_b) as f64
}

/// Which similarity metric to use where either applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimilarityMetric {
    Nmi,
    Dice,
}

impl SimilarityMetric {
    pub fn compute(self, a: &Parcellation, b: &Parcellation) -> Result<f64> {
        match self {
            SimilarityMetric::Nmi => nmi(a, b),
            SimilarityMetric::Dice => dice(a, b),
        }
    }
}

impl std::str::FromStr for SimilarityMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nmi" => Ok(SimilarityMetric::Nmi),
            "dice" => Ok(SimilarityMetric::Dice),
            other => Err(Error::invalid(format!(
                "unknown metric `{other}` (expected nmi or dice)"
            ))),
        }
    }
}

/// Symmetric matrix of pairwise similarities over a set of parcellations;
/// diagonal is 1.
pub fn pairwise_similarity(
    parcs: &[Parcellation],
    metric: SimilarityMetric,
) -> Result<Vec<Vec<f64>>> {
    let s = parcs.len();
    for p in parcs.iter().skip(1) {
        if p.len() != parcs[0].len() {
            return Err(Error::invalid("parcellations differ in voxel count"));
        }
    }
    let pairs: Vec<(usize, usize)> = (0..s)
        .flat_map(|i| ((i + 1)..s).map(move |j| (i, j)))
        .collect();
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| metric.compute(&parcs[i], &parcs[j]))
        .collect::<Result<_>>()?;
    let mut m = vec![vec![0.0; s]; s];
    for (row, i) in m.iter_mut().enumerate().take(s) {
        i[row] = 1.0;
    }
    for (&(i, j), &v) in pairs.iter().zip(&values) {
        m[i][j] = v;
        m[j][i] = v;
    }
    Ok(m)
}

/// Dump a similarity matrix as TSV, rows and columns in input order.
pub fn write_similarity_matrix(m: &[Vec<f64>], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(Error::io(path))?;
    let mut w = std::io::BufWriter::new(file);
    use std::io::Write;
    for row in m {
        let line: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        writeln!(w, "{}", line.join("\t")).map_err(Error::io(path))?;
    }
    w.flush().map_err(Error::io(path))
}
