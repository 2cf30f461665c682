//! Independent oracles for the test suites.
//!
//! Everything here recomputes quantities along a different route than the
//! library under test: dense eigendecomposition instead of sparse iteration,
//! O(n^2) co-membership matrices instead of contingency identities,
//! quadrature instead of special functions. Functions take plain slices so
//! the oracles never touch the library's own code paths.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

// ---------------------------------------------------------------------------
// Dense spectral oracle
// ---------------------------------------------------------------------------

/// Dense symmetric eigendecomposition, eigenvalues ascending. `a` is
/// row-major n x n. Returns (eigenvalues, eigenvectors) with eigenvector c
/// stored in column c of the row-major output.
pub fn dense_sym_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let m = DMatrix::from_row_slice(n, n, a);
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors[row * n + col] = eig.eigenvectors[(row, src)];
        }
    }
    (values, vectors)
}

/// Dense symmetric normalized Laplacian `D^{-1/2} (D - W) D^{-1/2}` from an
/// undirected edge list (i < j). Zero-degree rows/columns become zero.
pub fn normalized_laplacian_dense(n: usize, edges: &[(u32, u32, f64)]) -> Vec<f64> {
    let mut w = vec![0.0; n * n];
    for &(i, j, v) in edges {
        w[i as usize * n + j as usize] += v;
        w[j as usize * n + i as usize] += v;
    }
    let deg: Vec<f64> = (0..n).map(|i| w[i * n..(i + 1) * n].iter().sum()).collect();
    let dinv: Vec<f64> = deg
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let lij = if i == j {
                deg[i] - w[i * n + j]
            } else {
                -w[i * n + j]
            };
            l[i * n + j] = dinv[i] * lij * dinv[j];
        }
    }
    l
}

/// Normalized-cut objective of a labeling on an undirected edge list:
/// `sum_c cut(c, rest) / vol(c)` (clusters with zero volume contribute 0).
pub fn ncut_value(n: usize, edges: &[(u32, u32, f64)], labels: &[u32], k: usize) -> f64 {
    assert_eq!(labels.len(), n);
    let mut cut = vec![0.0; k];
    let mut vol = vec![0.0; k];
    for &(i, j, w) in edges {
        let (a, b) = (
            labels[i as usize] as usize - 1,
            labels[j as usize] as usize - 1,
        );
        vol[a] += w;
        vol[b] += w;
        if a != b {
            cut[a] += w;
            cut[b] += w;
        }
    }
    (0..k)
        .map(|c| if vol[c] > 0.0 { cut[c] / vol[c] } else { 0.0 })
        .sum()
}

// ---------------------------------------------------------------------------
// Clustering-metric oracles
// ---------------------------------------------------------------------------

/// Dice's coefficient straight from the two n x n co-membership matrices.
pub fn dice_bruteforce(a: &[u32], b: &[u32]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let mut common: u64 = 0;
    let mut nnz_a: u64 = 0;
    let mut nnz_b: u64 = 0;
    for i in 0..n {
        for j in 0..n {
            let ca = a[i] == a[j];
            let cb = b[i] == b[j];
            nnz_a += ca as u64;
            nnz_b += cb as u64;
            common += (ca && cb) as u64;
        }
    }
    2.0 * common as f64 / (nnz_a + nnz_b) as f64
}

/// NMI evaluated directly from probability arrays: marginals as voxel
/// fractions, joint as intersection fractions, natural logs, 0 log 0 = 0,
/// MI normalized by the mean entropy. Two zero-entropy inputs give 1.
pub fn nmi_direct(a: &[u32], b: &[u32]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let k_a = *a.iter().max().unwrap() as usize;
    let k_b = *b.iter().max().unwrap() as usize;
    let mut joint_c = vec![0u64; k_a * k_b];
    let mut pa_c = vec![0u64; k_a];
    let mut pb_c = vec![0u64; k_b];
    for (&la, &lb) in a.iter().zip(b) {
        joint_c[(la as usize - 1) * k_b + (lb as usize - 1)] += 1;
        pa_c[la as usize - 1] += 1;
        pb_c[lb as usize - 1] += 1;
    }
    let joint: Vec<f64> = joint_c.iter().map(|&c| c as f64 / n).collect();
    let pa: Vec<f64> = pa_c.iter().map(|&c| c as f64 / n).collect();
    let pb: Vec<f64> = pb_c.iter().map(|&c| c as f64 / n).collect();
    let ent = |p: &[f64]| -> f64 { p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum() };
    let (h_a, h_b) = (ent(&pa), ent(&pb));
    if h_a + h_b == 0.0 {
        return 1.0;
    }
    let mut mi = 0.0;
    for i in 0..k_a {
        for j in 0..k_b {
            let p = joint[i * k_b + j];
            if p > 0.0 {
                mi += p * (p.ln() - pa[i].ln() - pb[j].ln());
            }
        }
    }
    (mi.max(0.0)) / ((h_a + h_b) / 2.0)
}

// ---------------------------------------------------------------------------
// Student-t quadrature oracle
// ---------------------------------------------------------------------------

/// Gamma ratio Γ((ν+1)/2) / Γ(ν/2) for integer ν by the recurrence
/// r(ν) = ((ν-1)/2) / r(ν-1), r(1) = 1/√π. No log-gamma involved.
fn gamma_ratio(df: u32) -> f64 {
    let mut r = 1.0 / std::f64::consts::PI.sqrt();
    for nu in 2..=df {
        r = (nu as f64 - 1.0) / 2.0 / r;
    }
    r
}

/// Two-sided Student-t tail by composite Simpson quadrature of the density
/// on [0, |t|]: `p = 1 - 2 * integral`. Integer df only.
pub fn t_two_sided_p_quadrature(t: f64, df: u32) -> f64 {
    let nu = df as f64;
    let c = gamma_ratio(df) / (nu * std::f64::consts::PI).sqrt();
    let density = |x: f64| c * (1.0 + x * x / nu).powf(-(nu + 1.0) / 2.0);
    let upper = t.abs();
    if upper == 0.0 {
        return 1.0;
    }
    let steps = 20_000usize; // even
    let h = upper / steps as f64;
    let mut acc = density(0.0) + density(upper);
    for i in 1..steps {
        let x = i as f64 * h;
        acc += density(x) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    let integral = acc * h / 3.0;
    (1.0 - 2.0 * integral).clamp(0.0, 1.0)
}

// ---------------------------------------------------------------------------
// Random instances
// ---------------------------------------------------------------------------

/// Random undirected weighted graph: each pair kept with probability
/// `p_edge`, weights uniform in (0, 1].
pub fn random_graph(n: usize, p_edge: f64, rng: &mut impl Rng) -> Vec<(u32, u32, f64)> {
    let mut edges = Vec::new();
    for i in 0..n as u32 {
        for j in (i + 1)..n as u32 {
            if rng.gen::<f64>() < p_edge {
                edges.push((i, j, rng.gen::<f64>().max(1e-3)));
            }
        }
    }
    edges
}

/// Random label vector over 1..=k with every label present (panics if n < k).
pub fn random_full_labels(n: usize, k: u32, rng: &mut impl Rng) -> Vec<u32> {
    assert!(n >= k as usize);
    loop {
        let labels: Vec<u32> = (0..n).map(|_| rng.gen_range(1..=k)).collect();
        let mut seen = vec![false; k as usize];
        for &l in &labels {
            seen[(l - 1) as usize] = true;
        }
        if seen.iter().all(|&s| s) {
            return labels;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_eigen_on_known_matrix() {
        // [[2, 1], [1, 2]] has eigenvalues 1 and 3
        let (vals, _) = dense_sym_eigen(&[2.0, 1.0, 1.0, 2.0], 2);
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn laplacian_dense_two_nodes() {
        let l = normalized_laplacian_dense(2, &[(0, 1, 1.0)]);
        assert_eq!(l, vec![1.0, -1.0, -1.0, 1.0]);
    }

    #[test]
    fn dice_bruteforce_known_values() {
        assert_eq!(dice_bruteforce(&[1, 1, 2, 2], &[1, 2, 1, 2]), 0.5);
        assert_eq!(dice_bruteforce(&[1, 2, 3, 4], &[1, 1, 1, 1]), 0.4);
    }

    #[test]
    fn nmi_direct_known_values() {
        assert_eq!(nmi_direct(&[1, 1, 2, 2], &[1, 2, 1, 2]), 0.0);
        assert!((nmi_direct(&[1, 1, 2, 2], &[2, 2, 1, 1]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn t_quadrature_matches_cauchy_closed_form() {
        for t in [0.5f64, 1.0, 3.0] {
            let exact = 1.0 - 2.0 / std::f64::consts::PI * t.atan();
            assert!((t_two_sided_p_quadrature(t, 1) - exact).abs() < 1e-9);
        }
    }

    #[test]
    fn gamma_ratio_small_values() {
        // Γ(1.5)/Γ(1) = sqrt(pi)/2
        assert!((gamma_ratio(2) - std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-14);
        // Γ(2)/Γ(1.5) = 2/sqrt(pi)
        assert!((gamma_ratio(3) - 2.0 / std::f64::consts::PI.sqrt()).abs() < 1e-14);
    }
}
