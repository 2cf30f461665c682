//! Normalized spectral embedding and clustering.
//!
//! The graph is partitioned by the normalized-cut relaxation: form
//! `L = D - W`, symmetrically normalize it to `D^{-1/2} L D^{-1/2}`, take the
//! eigenvectors of the k smallest eigenvalues as an n x k embedding, and run
//! k-means on its rows.
//!
//! The eigensolver is Lanczos with full reorthogonalization on the shifted
//! operator `S = 2I - L_sym` (largest eigenvalues of `S` are the smallest of
//! `L_sym`, and extremal pairs are where Lanczos converges first). Converged
//! Ritz pairs are locked and deflated; fresh restarts in the orthogonal
//! complement pick up eigenvalue multiplicities, which matters on graphs
//! with several connected components. Every returned pair is verified
//! against an explicit residual bound.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data_model::Parcellation;
use crate::error::{Error, Result};
use crate::kmeans::kmeans_multi;
use crate::rng::derive_seed;
use crate::spatial_graph::SimilarityGraph;

/// Lanczos breakdown threshold: a residual basis vector shorter than this is
/// treated as an exhausted (invariant) Krylov subspace.
const BREAKDOWN_TOL: f64 = 1e-10;

// ---------------------------------------------------------------------------
// Operator
// ---------------------------------------------------------------------------

/// Sparse symmetric operator `v -> D^{-1/2} (D - W) D^{-1/2} v`.
///
/// Degrees are row sums of `W`. A vertex with zero degree has no `D^{-1/2}`
/// entry (taken as 0), which turns it into its own zero row: an exact
/// eigenpair at eigenvalue 0.
pub struct NormalizedLaplacian {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    /// Raw edge weights in CSR order.
    weights: Vec<f64>,
    /// Normalized weights `w_ij / sqrt(d_i d_j)` in CSR order.
    norm_weights: Vec<f64>,
    /// Row sums of `W`, accumulated in CSR column order.
    degrees: Vec<f64>,
    /// 1 where the degree is positive, 0 for isolated vertices.
    diag: Vec<f64>,
}

impl NormalizedLaplacian {
    pub fn from_graph(g: &SimilarityGraph) -> Result<Self> {
        let n = g.n;
        if let Some(&(i, j, w)) = g.edges.iter().find(|e| e.2 < 0.0 || !e.2.is_finite()) {
            return Err(Error::invalid(format!(
                "negative or non-finite edge weight {w} on ({i}, {j})"
            )));
        }
        let mut deg_count = vec![0usize; n];
        for &(i, j, _) in &g.edges {
            deg_count[i as usize] += 1;
            deg_count[j as usize] += 1;
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut acc = 0;
        row_ptr.push(0);
        for c in &deg_count {
            acc += c;
            row_ptr.push(acc);
        }
        let mut cursor: Vec<usize> = row_ptr[..n].to_vec();
        let mut col_idx = vec![0u32; acc];
        let mut weights = vec![0f64; acc];
        for &(i, j, w) in &g.edges {
            col_idx[cursor[i as usize]] = j;
            weights[cursor[i as usize]] = w;
            cursor[i as usize] += 1;
            col_idx[cursor[j as usize]] = i;
            weights[cursor[j as usize]] = w;
            cursor[j as usize] += 1;
        }
        // Degrees summed in CSR order so that row sums of (D - W) vanish
        // exactly, not just to round-off.
        let degrees: Vec<f64> = (0..n)
            .map(|i| weights[row_ptr[i]..row_ptr[i + 1]].iter().sum())
            .collect();
        let dinv_sqrt: Vec<f64> = degrees
            .iter()
            .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
            .collect();
        let diag: Vec<f64> = degrees
            .iter()
            .map(|&d| if d > 0.0 { 1.0 } else { 0.0 })
            .collect();
        let mut norm_weights = vec![0f64; acc];
        for i in 0..n {
            for e in row_ptr[i]..row_ptr[i + 1] {
                norm_weights[e] = weights[e] * dinv_sqrt[i] * dinv_sqrt[col_idx[e] as usize];
            }
        }
        Ok(NormalizedLaplacian {
            n,
            row_ptr,
            col_idx,
            weights,
            norm_weights,
            degrees,
            diag,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    /// Number of zero-degree vertices (diagnostic).
    pub fn isolated_vertices(&self) -> usize {
        self.diag.iter().filter(|&&d| d == 0.0).count()
    }

    /// `out = D^{-1/2} (D - W) D^{-1/2} v`; deterministic for any worker
    /// count (each row accumulates in CSR order).
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            let mut acc = self.diag[i] * v[i];
            for e in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc -= self.norm_weights[e] * v[self.col_idx[e] as usize];
            }
            *o = acc;
        });
    }

    /// `out = (2I - L_sym) v` in one pass.
    fn apply_shifted(&self, v: &[f64], out: &mut [f64]) {
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            let mut acc = (2.0 - self.diag[i]) * v[i];
            for e in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.norm_weights[e] * v[self.col_idx[e] as usize];
            }
            *o = acc;
        });
    }

    /// Row sum of the unnormalized Laplacian `(D - W) 1` at `i`; zero to the
    /// last bit because the degree was accumulated in the same order.
    pub fn unnormalized_row_sum(&self, i: usize) -> f64 {
        let w: f64 = self.weights[self.row_ptr[i]..self.row_ptr[i + 1]]
            .iter()
            .sum();
        self.degrees[i] - w
    }
}

/// Free-function form of [`NormalizedLaplacian::from_graph`].
pub fn normalized_laplacian(g: &SimilarityGraph) -> Result<NormalizedLaplacian> {
    NormalizedLaplacian::from_graph(g)
}

// ---------------------------------------------------------------------------
// Small dense helpers
// ---------------------------------------------------------------------------

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Eigen-decomposition of a symmetric tridiagonal matrix (implicit QL with
/// shifts). `d` is the diagonal, `e[i]` couples rows `i` and `i+1`. Returns
/// eigenvalues ascending and eigenvectors as columns of a row-major m x m
/// matrix.
fn tridiag_eigen(mut d: Vec<f64>, mut e: Vec<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = d.len();
    let mut z = vec![0.0; m * m];
    for i in 0..m {
        z[i * m + i] = 1.0;
    }
    if m == 1 {
        return Ok((d, z));
    }
    e.resize(m, 0.0);

    for l in 0..m {
        let mut iter = 0;
        loop {
            let mut seg = l;
            while seg < m - 1 {
                let dd = d[seg].abs() + d[seg + 1].abs();
                if e[seg].abs() <= f64::EPSILON * dd {
                    break;
                }
                seg += 1;
            }
            if seg == l {
                break;
            }
            iter += 1;
            if iter > 64 {
                return Err(Error::invalid(
                    "tridiagonal QL iteration failed to converge",
                ));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            let denom = g + if g >= 0.0 { r } else { -r };
            g = d[seg] - d[l] + e[l] / denom;
            let (mut s, mut c, mut p) = (1.0f64, 1.0f64, 0.0f64);
            let mut underflow = false;
            for i in (l..seg).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[seg] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for row in 0..m {
                    f = z[row * m + i + 1];
                    z[row * m + i + 1] = s * z[row * m + i] + c * f;
                    z[row * m + i] = c * z[row * m + i] - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[seg] = 0.0;
        }
    }

    // Sort ascending, carrying eigenvector columns along.
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let sorted_d: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let mut sorted_z = vec![0.0; m * m];
    for (new_col, &old_col) in order.iter().enumerate() {
        for row in 0..m {
            sorted_z[row * m + new_col] = z[row * m + old_col];
        }
    }
    Ok((sorted_d, sorted_z))
}

// ---------------------------------------------------------------------------
// Lanczos eigensolver
// ---------------------------------------------------------------------------

/// Rows of the eigenvector matrix for the k smallest eigenvalues of the
/// symmetric normalized Laplacian.
#[derive(Debug, Clone)]
pub struct SpectralEmbedding {
    /// k eigenvalues, ascending, in [0, 2].
    pub eigenvalues: Vec<f64>,
    /// n x k row-major; column c belongs to `eigenvalues[c]`.
    pub vectors: Vec<f64>,
    /// Explicit `||L_sym v - lambda v||` per returned pair.
    pub residuals: Vec<f64>,
    /// Matrix-vector products spent.
    pub matvecs: usize,
}

impl SpectralEmbedding {
    pub fn n(&self) -> usize {
        if self.eigenvalues.is_empty() {
            0
        } else {
            self.vectors.len() / self.eigenvalues.len()
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let k = self.eigenvalues.len();
        &self.vectors[i * k..(i + 1) * k]
    }
}

struct Sweep {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    basis: Vec<Vec<f64>>,
    broke_down: bool,
}

fn orthogonalize(w: &mut [f64], against: &[&Vec<f64>]) {
    // Two-pass classical Gram-Schmidt with the DGKS re-run criterion.
    let before = norm(w);
    for pass in 0..2 {
        for u in against {
            let p = dot(w, u);
            if p != 0.0 {
                axpy(-p, u, w);
            }
        }
        if pass == 0 && norm(w) > std::f64::consts::FRAC_1_SQRT_2 * before {
            break;
        }
    }
}

fn lanczos_sweep(
    op: &NormalizedLaplacian,
    locked: &[(f64, Vec<f64>, f64)],
    start: Vec<f64>,
    max_len: usize,
    budget: &mut usize,
) -> Sweep {
    let n = op.n();
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut basis = vec![start];
    let mut broke_down = false;
    let mut w = vec![0.0; n];
    for j in 0..max_len {
        if *budget == 0 {
            break;
        }
        op.apply_shifted(&basis[j], &mut w);
        *budget -= 1;
        if j > 0 {
            axpy(-beta[j - 1], &basis[j - 1], &mut w);
        }
        let a = dot(&w, &basis[j]);
        alpha.push(a);
        axpy(-a, &basis[j], &mut w);
        let against: Vec<&Vec<f64>> = locked.iter().map(|l| &l.1).chain(basis.iter()).collect();
        orthogonalize(&mut w, &against);
        let b = norm(&w);
        if b <= BREAKDOWN_TOL {
            broke_down = true;
            break;
        }
        beta.push(b);
        basis.push(w.iter().map(|x| x / b).collect());
    }
    Sweep {
        alpha,
        beta,
        basis,
        broke_down,
    }
}

/// Random unit vector orthogonal to the locked pairs; None when the
/// complement is (numerically) exhausted.
fn fresh_start(
    n: usize,
    locked: &[(f64, Vec<f64>, f64)],
    rng: &mut ChaCha8Rng,
) -> Option<Vec<f64>> {
    for _ in 0..5 {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
        let against: Vec<&Vec<f64>> = locked.iter().map(|l| &l.1).collect();
        orthogonalize(&mut v, &against);
        let nv = norm(&v);
        if nv > 1e-8 {
            for x in &mut v {
                *x /= nv;
            }
            return Some(v);
        }
    }
    None
}

/// Eigenpairs of the k smallest eigenvalues of `op`, each meeting
/// `||L v - lambda v|| <= tol` (unit `v`). Deterministic for a fixed seed.
///
/// `max_matvecs` caps the matrix-vector product budget; exceeding it with
/// fewer than k converged pairs is a [`Error::NonConvergence`].
pub fn smallest_eigenvectors(
    op: &NormalizedLaplacian,
    k: usize,
    tol: f64,
    max_matvecs: usize,
    seed: u64,
) -> Result<SpectralEmbedding> {
    let n = op.n();
    if k < 1 || k > n {
        return Err(Error::invalid(format!("k = {k} outside [1, {n}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut budget = max_matvecs;
    let spent = |budget: usize| max_matvecs - budget;

    // Locked Ritz pairs of the shifted operator: (theta, vector, residual).
    let mut locked: Vec<(f64, Vec<f64>, f64)> = Vec::new();
    let mut sweep_len = (2 * k + 30).max(60);
    let mut best_unconverged: f64 = f64::INFINITY;
    // Largest Ritz value seen in the most recent sweep, and whether that
    // pair passed the explicit residual check.
    let mut last_top: Option<(f64, bool)> = None;

    let selection_floor = |locked: &[(f64, Vec<f64>, f64)]| -> f64 {
        let mut thetas: Vec<f64> = locked.iter().map(|l| l.0).collect();
        thetas.sort_by(|a, b| b.total_cmp(a));
        thetas[k - 1]
    };

    loop {
        if locked.len() >= n {
            break;
        }
        if locked.len() >= k {
            if let Some((top_theta, top_ok)) = last_top {
                if top_ok && top_theta <= selection_floor(&locked) + 10.0 * tol {
                    break;
                }
            }
        }
        if budget == 0 {
            break;
        }
        let Some(start) = fresh_start(n, &locked, &mut rng) else {
            break;
        };
        let max_len = sweep_len.min(n - locked.len()).min(budget);
        let sweep = lanczos_sweep(op, &locked, start, max_len, &mut budget);
        let m = sweep.alpha.len();
        if m == 0 {
            break;
        }
        let (thetas, z) = tridiag_eigen(sweep.alpha.clone(), sweep.beta.clone())?;
        let tail_beta = if sweep.broke_down || sweep.beta.len() < m {
            0.0
        } else {
            sweep.beta[m - 1]
        };

        // Walk Ritz pairs from the largest theta down, verifying converged
        // candidates explicitly.
        let mut locked_this_sweep = 0;
        let mut top_recorded = false;
        let mut checks = 0;
        for c in (0..m).rev() {
            let theta = thetas[c];
            let est = (tail_beta * z[(m - 1) * m + c]).abs();
            if est > tol {
                if !top_recorded {
                    last_top = Some((theta, false));
                    top_recorded = true;
                }
                best_unconverged = best_unconverged.min(est);
                continue;
            }
            if checks >= k + 5 || budget == 0 {
                break;
            }
            checks += 1;
            // Assemble the Ritz vector and measure the true residual.
            let mut x = vec![0.0; n];
            for (j, basis_vec) in sweep.basis.iter().take(m).enumerate() {
                let s = z[j * m + c];
                if s != 0.0 {
                    axpy(s, basis_vec, &mut x);
                }
            }
            let nx = norm(&x);
            if nx <= 1e-12 {
                continue;
            }
            for v in &mut x {
                *v /= nx;
            }
            let mut sx = vec![0.0; n];
            op.apply_shifted(&x, &mut sx);
            budget -= 1;
            axpy(-theta, &x, &mut sx);
            let res = norm(&sx);
            if !top_recorded {
                last_top = Some((theta, res <= tol));
                top_recorded = true;
            }
            if res <= tol {
                locked.push((theta, x, res));
                locked_this_sweep += 1;
            } else {
                best_unconverged = best_unconverged.min(res);
            }
        }
        if !top_recorded && m > 0 {
            last_top = Some((thetas[m - 1], false));
        }
        if locked_this_sweep == 0 && !sweep.broke_down {
            sweep_len = (sweep_len * 2).min(n);
        }
    }

    if locked.len() < k {
        return Err(Error::NonConvergence {
            converged: locked.len(),
            requested: k,
            tol,
            matvecs: spent(budget),
            worst: best_unconverged,
        });
    }

    // Keep the k largest thetas = k smallest eigenvalues of L_sym.
    locked.sort_by(|a, b| b.0.total_cmp(&a.0));
    locked.truncate(k);
    let mut eigenvalues: Vec<f64> = locked.iter().map(|l| 2.0 - l.0).collect();
    for lam in &mut eigenvalues {
        if *lam < 0.0 && *lam > -1e-12 {
            *lam = 0.0;
        }
        if *lam > 2.0 && *lam < 2.0 + 1e-12 {
            *lam = 2.0;
        }
    }
    let residuals: Vec<f64> = locked.iter().map(|l| l.2).collect();
    let mut vectors = vec![0.0; n * k];
    for (c, (_, v, _)) in locked.iter().enumerate() {
        for i in 0..n {
            vectors[i * k + c] = v[i];
        }
    }
    Ok(SpectralEmbedding {
        eigenvalues,
        vectors,
        residuals,
        matvecs: spent(budget),
    })
}

// ---------------------------------------------------------------------------
// Clustering
// ---------------------------------------------------------------------------

/// Knobs for spectral clustering; `Default` gives the standard settings.
#[derive(Debug, Clone)]
pub struct SpectralParams {
    /// Eigen-residual tolerance.
    pub tol: f64,
    /// Matrix-vector product budget; `None` means `10 * n`.
    pub max_matvecs: Option<usize>,
    /// k-means restarts.
    pub restarts: usize,
    pub kmeans_max_iter: usize,
    pub kmeans_tol: f64,
    pub seed: u64,
}

impl Default for SpectralParams {
    fn default() -> Self {
        SpectralParams {
            tol: 1e-8,
            max_matvecs: None,
            restarts: 10,
            kmeans_max_iter: 300,
            kmeans_tol: 1e-9,
            seed: 0,
        }
    }
}

/// Result of one spectral clustering run.
#[derive(Debug, Clone)]
pub struct ClusterResult {
    pub parcellation: Parcellation,
    /// True when the graph carried no similarity mass at all or the k-means
    /// step could not populate every label.
    pub degenerate: bool,
    pub eigenvalues: Vec<f64>,
    pub kmeans_objective: f64,
    /// Zero-degree vertices, placed arbitrarily by k-means.
    pub isolated_vertices: usize,
}

/// Normalized spectral clustering: embed with the k smallest eigenvectors,
/// normalize each embedding row to unit length (all-zero rows stay zero),
/// then cluster rows with multi-restart k-means++.
pub fn spectral_cluster(
    g: &SimilarityGraph,
    k: usize,
    params: &SpectralParams,
) -> Result<ClusterResult> {
    let n = g.n;
    if k < 1 {
        return Err(Error::invalid("k must be >= 1"));
    }
    if k > n {
        return Err(Error::invalid(format!("k = {k} exceeds {n} voxels")));
    }
    let op = NormalizedLaplacian::from_graph(g)?;
    let max_matvecs = params.max_matvecs.unwrap_or(10 * n);
    let emb = smallest_eigenvectors(
        &op,
        k,
        params.tol,
        max_matvecs,
        derive_seed(params.seed, 0xE16E),
    )?;

    let mut rows = emb.vectors.clone();
    for row in rows.chunks_exact_mut(k) {
        let nr = norm(row);
        if nr > 0.0 {
            for v in row {
                *v /= nr;
            }
        }
    }
    let km = kmeans_multi(
        &rows,
        k,
        k,
        params.restarts,
        derive_seed(params.seed, 0x63A7),
        params.kmeans_max_iter,
        params.kmeans_tol,
    )?;
    let parcellation = Parcellation::new(km.labels, k as u32)?;
    let degenerate = parcellation.degenerate() || g.total_weight() == 0.0;
    Ok(ClusterResult {
        degenerate,
        eigenvalues: emb.eigenvalues,
        kmeans_objective: km.objective,
        isolated_vertices: op.isolated_vertices(),
        parcellation,
    })
}
