//! Group-level machinery: relabeling parcellations to a reference, the
//! majority-vote atlas with its confidence map, region-level connectomes,
//! two-sample t-tests (similarity-based and edge-wise), and a linear
//! max-margin classifier with stratified k-fold cross-validation.

use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data_model::{fmt_f64, Parcellation, SparseConnectivity};
use crate::error::{Error, Result};
use crate::metrics::{ContingencyTable, SimilarityMetric};
use crate::rng::derive_seed;
use crate::stats::student_t_two_sided_p;

// ---------------------------------------------------------------------------
// Relabeling and atlas
// ---------------------------------------------------------------------------

/// Relabel each region of `parc` with the reference label it overlaps most
/// (ties toward the smaller reference label). The mapping may be
/// many-to-one; the output's `degenerate` flag then reports the dropped
/// labels.
pub fn relabel_to_reference(parc: &Parcellation, reference: &Parcellation) -> Result<Parcellation> {
    if parc.k() != reference.k() {
        return Err(Error::invalid(format!(
            "region count mismatch: {} vs reference {}",
            parc.k(),
            reference.k()
        )));
    }
    let table = ContingencyTable::from_parcellations(parc, reference)?;
    let k = parc.k() as usize;
    let mut mapping = vec![0u32; k];
    for (region, target) in mapping.iter_mut().enumerate() {
        let row = &table.counts[region * k..(region + 1) * k];
        let mut best = 0usize;
        for (j, &c) in row.iter().enumerate() {
            if c > row[best] {
                best = j;
            }
        }
        *target = best as u32 + 1;
    }
    let labels: Vec<u32> = parc
        .labels()
        .iter()
        .map(|&l| mapping[(l - 1) as usize])
        .collect();
    Parcellation::new(labels, parc.k())
}

/// Per-voxel majority label over a group of (already relabeled)
/// parcellations, plus the fraction of subjects that agree with it.
#[derive(Debug, Clone)]
pub struct Atlas {
    pub labels: Parcellation,
    /// Modal-label frequency per voxel, in [1/N, 1].
    pub confidence: Vec<f64>,
}

impl Atlas {
    /// Write the label volume in the parcellation format and the confidence
    /// map as a parallel `CONF n` file.
    pub fn write(&self, parc_path: impl AsRef<Path>, conf_path: impl AsRef<Path>) -> Result<()> {
        self.labels.write_standalone(parc_path)?;
        let path = conf_path.as_ref();
        let file = std::fs::File::create(path).map_err(Error::io(path))?;
        let mut w = std::io::BufWriter::new(file);
        writeln!(w, "CONF {}", self.confidence.len()).map_err(Error::io(path))?;
        for c in &self.confidence {
            writeln!(w, "{}", fmt_f64(*c)).map_err(Error::io(path))?;
        }
        w.flush().map_err(Error::io(path))
    }
}

/// Majority vote per voxel; ties go to the smallest label.
pub fn majority_atlas(parcs: &[Parcellation]) -> Result<Atlas> {
    let Some(first) = parcs.first() else {
        return Err(Error::invalid(
            "majority atlas needs at least one parcellation",
        ));
    };
    let n = first.len();
    let k = first.k();
    for p in parcs.iter().skip(1) {
        if p.len() != n || p.k() != k {
            return Err(Error::invalid("atlas inputs differ in voxel count or k"));
        }
    }
    let big_n = parcs.len() as f64;
    let mut labels = Vec::with_capacity(n);
    let mut confidence = Vec::with_capacity(n);
    let mut counts = vec![0u32; k as usize];
    for v in 0..n {
        counts.fill(0);
        for p in parcs {
            counts[(p.label(v) - 1) as usize] += 1;
        }
        let mut best = 0usize;
        for (c, &cnt) in counts.iter().enumerate() {
            if cnt > counts[best] {
                best = c;
            }
        }
        labels.push(best as u32 + 1);
        confidence.push(counts[best] as f64 / big_n);
    }
    Ok(Atlas {
        labels: Parcellation::new(labels, k)?,
        confidence,
    })
}

// ---------------------------------------------------------------------------
// Connectome
// ---------------------------------------------------------------------------

/// k x k symmetric matrix of cumulative inter-region connectivity strength.
/// The diagonal holds within-region mass (each undirected voxel pair and
/// each self-loop counted once).
#[derive(Debug, Clone, PartialEq)]
pub struct Connectome {
    k: usize,
    w: Vec<f64>,
}

impl Connectome {
    /// Build from a dense row-major k x k matrix; must be symmetric and
    /// nonnegative.
    pub fn from_dense(k: usize, w: Vec<f64>) -> Result<Self> {
        if w.len() != k * k {
            return Err(Error::invalid(format!(
                "expected {} values for a {k} x {k} connectome, got {}",
                k * k,
                w.len()
            )));
        }
        for a in 0..k {
            for b in (a + 1)..k {
                if w[a * k + b] != w[b * k + a] {
                    return Err(Error::invalid(format!(
                        "asymmetric connectome at ({a}, {b})"
                    )));
                }
            }
        }
        if w.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::invalid(
                "connectome entries must be finite and nonnegative",
            ));
        }
        Ok(Connectome { k, w })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.w[a * self.k + b]
    }

    /// Sum over the upper triangle including the diagonal.
    pub fn total_mass(&self) -> f64 {
        let mut total = 0.0;
        for a in 0..self.k {
            for b in a..self.k {
                total += self.w[a * self.k + b];
            }
        }
        total
    }

    /// `CONNECTOME k` header then k rows of k floats.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(Error::io(path))?;
        let mut out = std::io::BufWriter::new(file);
        writeln!(out, "CONNECTOME {}", self.k).map_err(Error::io(path))?;
        for a in 0..self.k {
            let row: Vec<String> = (0..self.k).map(|b| fmt_f64(self.get(a, b))).collect();
            writeln!(out, "{}", row.join(" ")).map_err(Error::io(path))?;
        }
        out.flush().map_err(Error::io(path))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(path, 1, "missing CONNECTOME header"))?;
        let toks: Vec<&str> = header.split_whitespace().collect();
        if toks.len() != 2 || toks[0] != "CONNECTOME" {
            return Err(Error::parse(path, 1, "expected header `CONNECTOME k`"));
        }
        let k: usize = toks[1]
            .parse()
            .map_err(|_| Error::parse(path, 1, format!("cannot parse k from `{}`", toks[1])))?;
        let mut w = Vec::with_capacity(k * k);
        for _ in 0..k {
            let (idx, line) = lines
                .next()
                .ok_or_else(|| Error::parse(path, k + 1, "unexpected end of file"))?;
            for tok in line.split_whitespace() {
                let v: f64 = tok.parse().map_err(|_| {
                    Error::parse(path, idx + 1, format!("cannot parse value `{tok}`"))
                })?;
                w.push(v);
            }
        }
        if w.len() != k * k {
            return Err(Error::invalid(format!(
                "{}: expected {} values, found {}",
                path.display(),
                k * k,
                w.len()
            )));
        }
        Connectome::from_dense(k, w).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
    }
}

/// Aggregate voxel connectivity into region-level strengths.
pub fn build_connectome(conn: &SparseConnectivity, parc: &Parcellation) -> Result<Connectome> {
    if parc.len() != conn.n() {
        return Err(Error::invalid(format!(
            "parcellation covers {} voxels but connectivity has {}",
            parc.len(),
            conn.n()
        )));
    }
    let k = parc.k() as usize;
    let labels = parc.labels();
    let mut w = vec![0.0f64; k * k];
    for &(i, j, v) in conn.entries() {
        let a = (labels[i as usize] - 1) as usize;
        let b = (labels[j as usize] - 1) as usize;
        if a == b {
            w[a * k + a] += v;
        } else {
            w[a * k + b] += v;
            w[b * k + a] += v;
        }
    }
    Ok(Connectome { k, w })
}

// ---------------------------------------------------------------------------
// Two-sample t-tests
// ---------------------------------------------------------------------------

/// Which two-sample t-test variant to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TTestKind {
    /// Student's t with pooled variance (the default).
    #[default]
    Pooled,
    /// Welch's t with Satterthwaite degrees of freedom.
    Welch,
}

/// t statistic, two-sided p-value, and degrees of freedom.
///
/// Positive t means the first sample's mean is larger. Degenerate inputs
/// with zero variance yield `t = 0, p = 1` when the means agree and an
/// infinite t with `p = 0` when they differ.
#[derive(Debug, Clone, Copy)]
pub struct TTestResult {
    pub t: f64,
    pub p: f64,
    pub df: f64,
}

pub fn two_sample_ttest(xs: &[f64], ys: &[f64]) -> Result<TTestResult> {
    two_sample_ttest_kind(xs, ys, TTestKind::Pooled)
}

pub fn two_sample_ttest_kind(xs: &[f64], ys: &[f64], kind: TTestKind) -> Result<TTestResult> {
    let n1 = xs.len();
    let n2 = ys.len();
    if n1 < 2 || n2 < 2 {
        return Err(Error::invalid(format!(
            "each sample needs >= 2 values, got {n1} and {n2}"
        )));
    }
    let m1 = xs.iter().sum::<f64>() / n1 as f64;
    let m2 = ys.iter().sum::<f64>() / n2 as f64;
    let ss1: f64 = xs.iter().map(|x| (x - m1) * (x - m1)).sum();
    let ss2: f64 = ys.iter().map(|y| (y - m2) * (y - m2)).sum();
    let (se, df) = match kind {
        TTestKind::Pooled => {
            let df = (n1 + n2 - 2) as f64;
            let sp2 = (ss1 + ss2) / df;
            ((sp2 * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt(), df)
        }
        TTestKind::Welch => {
            let v1 = ss1 / (n1 as f64 - 1.0) / n1 as f64;
            let v2 = ss2 / (n2 as f64 - 1.0) / n2 as f64;
            let se2 = v1 + v2;
            let df = if se2 == 0.0 {
                (n1 + n2 - 2) as f64
            } else {
                se2 * se2 / (v1 * v1 / (n1 as f64 - 1.0) + v2 * v2 / (n2 as f64 - 1.0))
            };
            (se2.sqrt(), df)
        }
    };
    if se == 0.0 {
        return Ok(if m1 == m2 {
            TTestResult { t: 0.0, p: 1.0, df }
        } else {
            TTestResult {
                t: if m1 > m2 {
                    f64::INFINITY
                } else {
                    f64::NEG_INFINITY
                },
                p: 0.0,
                df,
            }
        });
    }
    let t = (m1 - m2) / se;
    Ok(TTestResult {
        t,
        p: student_t_two_sided_p(t, df),
        df,
    })
}

// ---------------------------------------------------------------------------
// Edge-wise connectome tests
// ---------------------------------------------------------------------------

/// Edge-wise two-sample tests over two groups of connectomes.
#[derive(Debug, Clone)]
pub struct EdgewiseTests {
    pub k: usize,
    /// k x k t statistics (symmetric).
    pub t: Vec<f64>,
    /// k x k two-sided p-values (symmetric).
    pub p: Vec<f64>,
    pub thresholds: Vec<f64>,
    /// One k x k boolean map per threshold marking `p < threshold`.
    pub maps: Vec<Vec<bool>>,
}

impl EdgewiseTests {
    /// Marked distinct entries (a <= b) for the map at `threshold_idx`.
    pub fn marked_entries(&self, threshold_idx: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for a in 0..self.k {
            for b in a..self.k {
                if self.maps[threshold_idx][a * self.k + b] {
                    out.push((a, b));
                }
            }
        }
        out
    }

    /// TSV report over distinct entries: `a b t p sig@<thr>...`.
    pub fn write_report(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(Error::io(path))?;
        let mut w = std::io::BufWriter::new(file);
        let sig_cols: Vec<String> = self.thresholds.iter().map(|t| format!("sig@{t}")).collect();
        writeln!(w, "a\tb\tt\tp\t{}", sig_cols.join("\t")).map_err(Error::io(path))?;
        for a in 0..self.k {
            for b in a..self.k {
                let idx = a * self.k + b;
                let sig: Vec<String> = self
                    .maps
                    .iter()
                    .map(|m| if m[idx] { "1".into() } else { "0".into() })
                    .collect();
                writeln!(
                    w,
                    "{a}\t{b}\t{}\t{}\t{}",
                    fmt_f64(self.t[idx]),
                    fmt_f64(self.p[idx]),
                    sig.join("\t")
                )
                .map_err(Error::io(path))?;
            }
        }
        w.flush().map_err(Error::io(path))
    }
}

pub fn edgewise_ttests(
    group_a: &[Connectome],
    group_b: &[Connectome],
    thresholds: &[f64],
) -> Result<EdgewiseTests> {
    if group_a.len() < 2 || group_b.len() < 2 {
        return Err(Error::invalid("each connectome group needs >= 2 subjects"));
    }
    let k = group_a[0].k();
    if group_a.iter().chain(group_b).any(|c| c.k() != k) {
        return Err(Error::invalid("connectomes differ in region count"));
    }
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|a| (a..k).map(move |b| (a, b))).collect();
    let tested: Vec<TTestResult> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let xs: Vec<f64> = group_a.iter().map(|c| c.get(a, b)).collect();
            let ys: Vec<f64> = group_b.iter().map(|c| c.get(a, b)).collect();
            two_sample_ttest(&xs, &ys)
        })
        .collect::<Result<_>>()?;
    let mut t = vec![0.0; k * k];
    let mut p = vec![1.0; k * k];
    for (&(a, b), r) in pairs.iter().zip(&tested) {
        t[a * k + b] = r.t;
        t[b * k + a] = r.t;
        p[a * k + b] = r.p;
        p[b * k + a] = r.p;
    }
    let maps: Vec<Vec<bool>> = thresholds
        .iter()
        .map(|&thr| p.iter().map(|&v| v < thr).collect())
        .collect();
    Ok(EdgewiseTests {
        k,
        t,
        p,
        thresholds: thresholds.to_vec(),
        maps,
    })
}

/// Distinct entries (a <= b) with the smallest p-values; ties resolve
/// lexicographically on (a, b).
pub fn select_top_edges(p: &[f64], k: usize, count: usize) -> Result<Vec<(usize, usize)>> {
    let mut entries: Vec<(usize, usize)> =
        (0..k).flat_map(|a| (a..k).map(move |b| (a, b))).collect();
    if count < 1 || count > entries.len() {
        return Err(Error::invalid(format!(
            "count {count} outside [1, {}]",
            entries.len()
        )));
    }
    entries.sort_by(|&(a1, b1), &(a2, b2)| {
        p[a1 * k + b1]
            .total_cmp(&p[a2 * k + b2])
            .then(a1.cmp(&a2))
            .then(b1.cmp(&b2))
    });
    entries.truncate(count);
    Ok(entries)
}

// ---------------------------------------------------------------------------
// Similarity-based group comparison
// ---------------------------------------------------------------------------

/// The three t-tests over pairwise parcellation similarities: within-A vs
/// across, within-B vs across, and within-A vs within-B.
#[derive(Debug, Clone)]
pub struct GroupSimilarityTest {
    pub within_a: Vec<f64>,
    pub within_b: Vec<f64>,
    pub across: Vec<f64>,
    pub a_vs_across: TTestResult,
    pub b_vs_across: TTestResult,
    pub a_vs_b: TTestResult,
}

pub fn similarity_group_test(
    group_a: &[Parcellation],
    group_b: &[Parcellation],
    metric: SimilarityMetric,
) -> Result<GroupSimilarityTest> {
    if group_a.len() < 3 || group_b.len() < 3 {
        return Err(Error::invalid("each group needs >= 3 parcellations"));
    }
    let within = |group: &[Parcellation]| -> Result<Vec<f64>> {
        let pairs: Vec<(usize, usize)> = (0..group.len())
            .flat_map(|i| ((i + 1)..group.len()).map(move |j| (i, j)))
            .collect();
        pairs
            .par_iter()
            .map(|&(i, j)| metric.compute(&group[i], &group[j]))
            .collect()
    };
    let within_a = within(group_a)?;
    let within_b = within(group_b)?;
    let cross_pairs: Vec<(usize, usize)> = (0..group_a.len())
        .flat_map(|i| (0..group_b.len()).map(move |j| (i, j)))
        .collect();
    let across: Vec<f64> = cross_pairs
        .par_iter()
        .map(|&(i, j)| metric.compute(&group_a[i], &group_b[j]))
        .collect::<Result<_>>()?;
    Ok(GroupSimilarityTest {
        a_vs_across: two_sample_ttest(&within_a, &across)?,
        b_vs_across: two_sample_ttest(&within_b, &across)?,
        a_vs_b: two_sample_ttest(&within_a, &within_b)?,
        within_a,
        within_b,
        across,
    })
}

// ---------------------------------------------------------------------------
// Max-margin linear classifier
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ClassifierParams {
    /// Weight of the 0.5 * ||w||^2 term relative to the mean hinge loss.
    pub regularization: f64,
    pub epochs: usize,
}

impl Default for ClassifierParams {
    fn default() -> Self {
        ClassifierParams {
            regularization: 1.0,
            epochs: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinearClassifier {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Objective value after every epoch (non-increasing by construction).
    pub loss_history: Vec<f64>,
}

impl LinearClassifier {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    /// Predicted class in {-1, +1}; the boundary itself counts as +1.
    pub fn predict(&self, x: &[f64]) -> i32 {
        if self.decision(x) >= 0.0 {
            1
        } else {
            -1
        }
    }
}

fn hinge_objective(features: &[f64], d: usize, labels: &[i32], w: &[f64], b: f64, reg: f64) -> f64 {
    let s = labels.len() as f64;
    let mut loss = 0.0;
    for (x, &y) in features.chunks_exact(d).zip(labels) {
        let f = w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + b;
        loss += (1.0 - y as f64 * f).max(0.0);
    }
    0.5 * reg * w.iter().map(|v| v * v).sum::<f64>() + loss / s
}

/// Regularized hinge-loss minimization by full-batch subgradient descent
/// with a diminishing step schedule. A step that would raise the objective
/// is halved until it improves (or is skipped), so the recorded loss history
/// never increases.
pub fn train_linear_classifier(
    features: &[f64],
    d: usize,
    labels: &[i32],
    params: &ClassifierParams,
) -> Result<LinearClassifier> {
    let s = labels.len();
    if s == 0 || d == 0 || features.len() != s * d {
        return Err(Error::invalid("features/labels shape mismatch"));
    }
    if labels.iter().all(|&y| y == 1) || labels.iter().all(|&y| y == -1) {
        return Err(Error::invalid("training labels contain a single class"));
    }
    if labels.iter().any(|&y| y != 1 && y != -1) {
        return Err(Error::invalid("labels must be +1 or -1"));
    }
    let reg = params.regularization;
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut obj = hinge_objective(features, d, labels, &w, b, reg);
    let mut history = Vec::with_capacity(params.epochs);
    for epoch in 0..params.epochs {
        // full-batch subgradient
        let mut gw: Vec<f64> = w.iter().map(|wi| reg * wi).collect();
        let mut gb = 0.0;
        for (x, &y) in features.chunks_exact(d).zip(labels) {
            let f = w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + b;
            if (y as f64) * f < 1.0 {
                for (g, xi) in gw.iter_mut().zip(x) {
                    *g -= y as f64 * xi / s as f64;
                }
                gb -= y as f64 / s as f64;
            }
        }
        let mut step = 1.0 / (1.0 + epoch as f64);
        let mut accepted = false;
        for _ in 0..30 {
            let cand_w: Vec<f64> = w.iter().zip(&gw).map(|(wi, gi)| wi - step * gi).collect();
            let cand_b = b - step * gb;
            let cand_obj = hinge_objective(features, d, labels, &cand_w, cand_b, reg);
            if cand_obj <= obj {
                w = cand_w;
                b = cand_b;
                obj = cand_obj;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        let _ = accepted;
        history.push(obj);
    }
    Ok(LinearClassifier {
        weights: w,
        bias: b,
        loss_history: history,
    })
}

/// Stratified k-fold cross-validation accuracy of the linear classifier.
///
/// Members of each class are shuffled with a seeded generator and dealt to
/// folds in order, so every fold carries both classes as evenly as the
/// counts allow. Returns the mean of the per-fold accuracies.
pub fn cross_validate(
    features: &[f64],
    d: usize,
    labels: &[i32],
    folds: usize,
    seed: u64,
    params: &ClassifierParams,
) -> Result<f64> {
    let s = labels.len();
    if folds < 2 || s < folds {
        return Err(Error::invalid(format!(
            "need 2 <= folds <= samples, got folds = {folds}, samples = {s}"
        )));
    }
    let mut fold_of = vec![0usize; s];
    let mut cursor = 0usize;
    for class in [1, -1] {
        let mut members: Vec<usize> = (0..s).filter(|&i| labels[i] == class).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, class as u64));
        members.shuffle(&mut rng);
        for m in members {
            fold_of[m] = cursor % folds;
            cursor += 1;
        }
    }
    let accuracies: Vec<f64> = (0..folds)
        .into_par_iter()
        .map(|fold| -> Result<f64> {
            let mut train_x = Vec::new();
            let mut train_y = Vec::new();
            let mut test_idx = Vec::new();
            for i in 0..s {
                if fold_of[i] == fold {
                    test_idx.push(i);
                } else {
                    train_x.extend_from_slice(&features[i * d..(i + 1) * d]);
                    train_y.push(labels[i]);
                }
            }
            if test_idx.is_empty() {
                // unreachable while s >= folds: round-robin fills every fold
                return Err(Error::invalid(format!("fold {fold} received no samples")));
            }
            let model = train_linear_classifier(&train_x, d, &train_y, params)?;
            let correct = test_idx
                .iter()
                .filter(|&&i| model.predict(&features[i * d..(i + 1) * d]) == labels[i])
                .count();
            Ok(correct as f64 / test_idx.len() as f64)
        })
        .collect::<Result<_>>()?;
    Ok(accuracies.iter().sum::<f64>() / accuracies.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parc(labels: &[u32], k: u32) -> Parcellation {
        Parcellation::new(labels.to_vec(), k).unwrap()
    }

    #[test]
    fn relabel_recovers_reference_from_permutation() {
        let reference = parc(&[1, 1, 2, 3, 3, 2], 3);
        let permuted = parc(&[3, 3, 1, 2, 2, 1], 3);
        let relabeled = relabel_to_reference(&permuted, &reference).unwrap();
        assert_eq!(relabeled.labels(), reference.labels());
        assert!(!relabeled.degenerate());
    }

    #[test]
    fn relabel_identity() {
        let p = parc(&[1, 2, 2, 1], 2);
        let r = relabel_to_reference(&p, &p).unwrap();
        assert_eq!(r.labels(), p.labels());
    }

    #[test]
    fn relabel_majority_overlap_example() {
        let p = parc(&[1, 1, 2, 2, 2], 2);
        let reference = parc(&[2, 2, 2, 1, 1], 2);
        let r = relabel_to_reference(&p, &reference).unwrap();
        assert_eq!(r.labels(), &[2, 2, 1, 1, 1]);
    }

    #[test]
    fn relabel_is_idempotent() {
        let reference = parc(&[1, 2, 3, 1, 2, 3, 1], 3);
        let p = parc(&[2, 3, 1, 2, 3, 1, 2], 3);
        let once = relabel_to_reference(&p, &reference).unwrap();
        let twice = relabel_to_reference(&once, &reference).unwrap();
        assert_eq!(once.labels(), twice.labels());
    }

    #[test]
    fn relabel_many_to_one_flags_degenerate() {
        // both regions of `p` overlap reference region 1 the most
        let p = parc(&[1, 1, 2, 2], 2);
        let reference = parc(&[1, 1, 1, 2], 2);
        let r = relabel_to_reference(&p, &reference).unwrap();
        assert_eq!(r.labels(), &[1, 1, 1, 1]);
        assert!(r.degenerate());
    }

    #[test]
    fn relabel_rejects_k_mismatch() {
        let a = parc(&[1, 2], 2);
        let b = parc(&[1, 2], 3);
        assert!(relabel_to_reference(&a, &b).is_err());
    }

    #[test]
    fn atlas_of_identical_parcellations_is_unanimous() {
        let p = parc(&[1, 2, 2, 1], 2);
        let atlas = majority_atlas(&[p.clone(), p.clone(), p.clone()]).unwrap();
        assert_eq!(atlas.labels.labels(), p.labels());
        assert!(atlas.confidence.iter().all(|&c| c == 1.0));
    }

    #[test]
    fn atlas_majority_and_tie_rules() {
        let a = parc(&[1, 1], 2);
        let b = parc(&[1, 2], 2);
        let c = parc(&[2, 2], 2);
        let atlas = majority_atlas(&[a, b, c]).unwrap();
        // voxel 0 sees (1,1,2) -> label 1 at 2/3
        assert_eq!(atlas.labels.label(0), 1);
        assert!((atlas.confidence[0] - 2.0 / 3.0).abs() < 1e-15);
        // voxel 1 sees (1,2,2) -> label 2 at 2/3
        assert_eq!(atlas.labels.label(1), 2);

        let tie = majority_atlas(&[parc(&[1, 1], 2), parc(&[2, 2], 2)]).unwrap();
        assert_eq!(tie.labels.label(0), 1, "ties go to the smallest label");
        assert_eq!(tie.confidence[0], 0.5);
    }

    #[test]
    fn atlas_rejects_empty_input() {
        assert!(majority_atlas(&[]).is_err());
    }

    #[test]
    fn connectome_k1_collects_everything() {
        let conn =
            SparseConnectivity::from_triplets(3, vec![(0, 1, 2.0), (1, 2, 3.0), (2, 2, 1.5)])
                .unwrap();
        let p = parc(&[1, 1, 1], 1);
        let c = build_connectome(&conn, &p).unwrap();
        assert_eq!(c.get(0, 0), 6.5);
        assert_eq!(c.total_mass(), 6.5);
    }

    #[test]
    fn connectome_single_pair_off_diagonal() {
        let conn = SparseConnectivity::from_triplets(2, vec![(0, 1, 5.0)]).unwrap();
        let p = parc(&[1, 2], 2);
        let c = build_connectome(&conn, &p).unwrap();
        assert_eq!(c.get(0, 1), 5.0);
        assert_eq!(c.get(1, 0), 5.0);
        assert_eq!(c.get(0, 0), 0.0);
        assert_eq!(c.get(1, 1), 0.0);
    }

    #[test]
    fn connectome_zero_matrix() {
        let conn = SparseConnectivity::zero(4);
        let p = parc(&[1, 2, 1, 2], 2);
        let c = build_connectome(&conn, &p).unwrap();
        assert!((0..2).all(|a| (0..2).all(|b| c.get(a, b) == 0.0)));
    }

    #[test]
    fn connectome_mass_conservation() {
        let conn = SparseConnectivity::from_triplets(
            5,
            vec![
                (0, 1, 1.25),
                (0, 4, 2.5),
                (1, 3, 0.75),
                (2, 2, 4.0),
                (3, 4, 1.0),
            ],
        )
        .unwrap();
        let p = parc(&[1, 2, 3, 2, 1], 3);
        let c = build_connectome(&conn, &p).unwrap();
        assert!((c.total_mass() - conn.total_strength()).abs() < 1e-12);
    }

    #[test]
    fn connectome_file_round_trip() {
        let conn = SparseConnectivity::from_triplets(3, vec![(0, 1, 2.0), (1, 2, 0.3)]).unwrap();
        let p = parc(&[1, 2, 2], 2);
        let c = build_connectome(&conn, &p).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.connectome");
        c.write(&path).unwrap();
        assert_eq!(Connectome::read(&path).unwrap(), c);
    }

    #[test]
    fn ttest_identical_samples() {
        let xs = [1.0, 2.0, 3.0];
        let r = two_sample_ttest(&xs, &xs).unwrap();
        assert_eq!(r.t, 0.0);
        assert_eq!(r.p, 1.0);
    }

    #[test]
    fn ttest_shifted_sequence() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let ys = [2.0, 3.0, 4.0, 5.0, 6.0];
        let r = two_sample_ttest(&xs, &ys).unwrap();
        assert!((r.t - (-1.0)).abs() < 1e-12);
        assert_eq!(r.df, 8.0);
        assert!((r.p - 0.3466).abs() < 5e-5, "p = {}", r.p);
    }

    #[test]
    fn ttest_swap_negates_t_exactly() {
        let xs = [0.3, 1.7, 2.9, 0.4];
        let ys = [5.0, 4.2, 6.1, 5.5, 4.9];
        let a = two_sample_ttest(&xs, &ys).unwrap();
        let b = two_sample_ttest(&ys, &xs).unwrap();
        assert_eq!(a.t, -b.t);
        assert_eq!(a.p, b.p);
    }

    #[test]
    fn ttest_zero_variance_unequal_means() {
        let xs = [2.0, 2.0, 2.0];
        let ys = [3.0, 3.0];
        let r = two_sample_ttest(&xs, &ys).unwrap();
        assert!(r.t.is_infinite() && r.t < 0.0);
        assert_eq!(r.p, 0.0);
    }

    #[test]
    fn ttest_welch_close_to_pooled_for_balanced_data() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [2.0, 3.0, 4.0, 5.0];
        let pooled = two_sample_ttest_kind(&xs, &ys, TTestKind::Pooled).unwrap();
        let welch = two_sample_ttest_kind(&xs, &ys, TTestKind::Welch).unwrap();
        assert!(
            (pooled.t - welch.t).abs() < 1e-12,
            "equal variances, equal sizes"
        );
        assert!(welch.df <= pooled.df + 1e-12);
    }

    fn constant_connectome(k: usize, values: &[f64]) -> Connectome {
        Connectome {
            k,
            w: values.to_vec(),
        }
    }

    #[test]
    fn edgewise_identical_groups_mark_nothing() {
        let c1 = constant_connectome(2, &[1.0, 2.0, 2.0, 3.0]);
        let c2 = constant_connectome(2, &[1.5, 2.5, 2.5, 3.5]);
        let group: Vec<Connectome> = vec![c1, c2];
        let r = edgewise_ttests(&group, &group, &[0.05, 0.00005]).unwrap();
        assert!(r.p.iter().all(|&p| p == 1.0));
        assert!(r.marked_entries(0).is_empty());
        assert!(r.marked_entries(1).is_empty());
    }

    #[test]
    fn edgewise_p_matrix_is_symmetric() {
        let mk = |shift: f64| {
            constant_connectome(
                3,
                &[
                    1.0 + shift,
                    2.0,
                    3.0,
                    2.0,
                    4.0 + shift,
                    5.0,
                    3.0,
                    5.0,
                    6.0 + shift,
                ],
            )
        };
        let ga: Vec<Connectome> = (0..4).map(|i| mk(i as f64 * 0.1)).collect();
        let gb: Vec<Connectome> = (0..4).map(|i| mk(1.0 + i as f64 * 0.1)).collect();
        let r = edgewise_ttests(&ga, &gb, &[0.05]).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                assert_eq!(r.p[a * 3 + b], r.p[b * 3 + a]);
                assert_eq!(r.t[a * 3 + b], r.t[b * 3 + a]);
            }
        }
    }

    #[test]
    fn select_top_edges_unique_minimum_and_ties() {
        let k = 3;
        let mut p = vec![1.0; k * k];
        p[2] = 0.001;
        p[2 * k] = 0.001;
        assert_eq!(select_top_edges(&p, k, 1).unwrap(), vec![(0, 2)]);

        let uniform = vec![0.5; k * k];
        assert_eq!(
            select_top_edges(&uniform, k, 3).unwrap(),
            vec![(0, 0), (0, 1), (0, 2)]
        );
        assert!(select_top_edges(&uniform, k, 7).is_err());
    }

    #[test]
    fn similarity_test_identical_groups() {
        let p = parc(&[1, 2, 2, 1, 2, 1], 2);
        let group: Vec<Parcellation> = vec![p.clone(), p.clone(), p.clone()];
        let r = similarity_group_test(&group, &group, SimilarityMetric::Nmi).unwrap();
        assert!(r.within_a.iter().all(|&v| v == 1.0));
        assert_eq!(r.a_vs_b.t, 0.0);
        assert_eq!(r.a_vs_b.p, 1.0);
    }

    #[test]
    fn similarity_test_sample_counts() {
        let mk = |seed: u32| {
            let labels: Vec<u32> = (0..30u32)
                .map(|i| 1 + (i.wrapping_mul(7 + seed)) % 3)
                .collect();
            Parcellation::new(labels, 3).unwrap()
        };
        let ga: Vec<Parcellation> = (0..4).map(mk).collect();
        let gb: Vec<Parcellation> = (4..9).map(mk).collect();
        let r = similarity_group_test(&ga, &gb, SimilarityMetric::Dice).unwrap();
        assert_eq!(r.within_a.len(), 4 * 3 / 2);
        assert_eq!(r.within_b.len(), 5 * 4 / 2);
        assert_eq!(r.across.len(), 4 * 5);
    }

    fn separable_data() -> (Vec<f64>, Vec<i32>) {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..10 {
            x.extend_from_slice(&[3.0 + 0.1 * i as f64, 1.0]);
            y.push(1);
            x.extend_from_slice(&[-3.0 - 0.1 * i as f64, -1.0]);
            y.push(-1);
        }
        (x, y)
    }

    #[test]
    fn classifier_separates_margin_data() {
        let (x, y) = separable_data();
        let model = train_linear_classifier(&x, 2, &y, &ClassifierParams::default()).unwrap();
        for (xi, &yi) in x.chunks_exact(2).zip(&y) {
            assert_eq!(model.predict(xi), yi);
        }
    }

    #[test]
    fn classifier_loss_never_increases() {
        let (x, y) = separable_data();
        let model = train_linear_classifier(&x, 2, &y, &ClassifierParams::default()).unwrap();
        for w in model.loss_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-15, "loss increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn classifier_invariant_under_duplication() {
        let (x, y) = separable_data();
        let mut xx = x.clone();
        xx.extend_from_slice(&x);
        let mut yy = y.clone();
        yy.extend_from_slice(&y);
        let a = train_linear_classifier(&x, 2, &y, &ClassifierParams::default()).unwrap();
        let b = train_linear_classifier(&xx, 2, &yy, &ClassifierParams::default()).unwrap();
        // same mean loss, same trajectory up to summation-order round-off
        for (wa, wb) in a.weights.iter().zip(&b.weights) {
            assert!((wa - wb).abs() <= 1e-9 * wa.abs().max(1.0), "{wa} vs {wb}");
        }
        assert!((a.bias - b.bias).abs() <= 1e-9);
    }

    #[test]
    fn classifier_rejects_single_class() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!(train_linear_classifier(&x, 2, &[1, 1], &ClassifierParams::default()).is_err());
    }

    #[test]
    fn cross_validation_on_separable_data_is_perfect() {
        let (x, y) = separable_data();
        let acc = cross_validate(&x, 2, &y, 10, 0, &ClassifierParams::default()).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn cross_validation_chance_level_on_random_labels() {
        // constant features, random labels: accuracy hovers around 1/2
        let s = 40;
        let x = vec![1.0; s];
        let mut mean = 0.0;
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut y: Vec<i32> = (0..s).map(|i| if i < s / 2 { 1 } else { -1 }).collect();
            y.shuffle(&mut rng);
            mean += cross_validate(&x, 1, &y, 5, seed, &ClassifierParams::default()).unwrap();
        }
        mean /= 20.0;
        assert!((0.3..=0.7).contains(&mean), "mean accuracy {mean}");
    }
}
