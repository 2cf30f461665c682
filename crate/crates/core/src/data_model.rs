//! Core domain types and their file formats.
//!
//! All formats are plain-text and line-oriented; text is the canonical
//! representation. Each format also has a little-endian binary twin for
//! large inputs, selected automatically on read via an 8-byte magic prefix.
//!
//! Text formats:
//!
//! ```text
//! mask:           MASK nx ny nz n      then n lines  "x y z"
//! connectivity:   CONN n nnz           then nnz lines "i j w"  (i <= j, # comments allowed)
//! parcellation:   PARC n k             then n lines of one label each, in mask order
//! ```
//!
//! Floats are serialized with 17 significant digits so that every f64
//! round-trips exactly. Voxel index `i` is the 0-based position of the voxel
//! in the mask file; all downstream label vectors inherit that order.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC_MASK: &[u8; 8] = b"PARCMSK1";
const MAGIC_CONN: &[u8; 8] = b"PARCCON1";
const MAGIC_LABELS: &[u8; 8] = b"PARCLAB1";

/// Relative tolerance used when checking that duplicated connectivity
/// entries agree.
const DUP_REL_TOL: f64 = 1e-9;

/// Format an f64 with 17 significant digits (exact round trip).
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

// ---------------------------------------------------------------------------
// BrainMask
// ---------------------------------------------------------------------------

/// Ordered list of integer voxel coordinates inside a bounding box.
///
/// The position of a voxel in the list is its index; everything downstream
/// (connectivity entries, label vectors, profile rows) is expressed in this
/// index space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BrainMask {
    voxels: Vec<[i32; 3]>,
    dims: [i32; 3],
}

impl BrainMask {
    pub fn new(voxels: Vec<[i32; 3]>, dims: [i32; 3]) -> Result<Self> {
        if voxels.is_empty() {
            return Err(Error::invalid("empty mask"));
        }
        if dims.iter().any(|&d| d < 1) {
            return Err(Error::invalid(format!(
                "mask dims must be positive, got {dims:?}"
            )));
        }
        let mut seen = HashSet::with_capacity(voxels.len());
        for (idx, v) in voxels.iter().enumerate() {
            for axis in 0..3 {
                if v[axis] < 0 || v[axis] >= dims[axis] {
                    return Err(Error::invalid(format!(
                        "voxel {idx} coordinate {v:?} out of bounds for dims {dims:?}"
                    )));
                }
            }
            if !seen.insert(*v) {
                return Err(Error::invalid(format!("duplicate voxel coordinate {v:?}")));
            }
        }
        Ok(BrainMask { voxels, dims })
    }

    /// Full grid of the given dimensions, in z-fastest scan order.
    pub fn full_grid(dims: [i32; 3]) -> Result<Self> {
        let mut voxels = Vec::new();
        for x in 0..dims[0] {
            for y in 0..dims[1] {
                for z in 0..dims[2] {
                    voxels.push([x, y, z]);
                }
            }
        }
        BrainMask::new(voxels, dims)
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn dims(&self) -> [i32; 3] {
        self.dims
    }

    pub fn voxels(&self) -> &[[i32; 3]] {
        &self.voxels
    }

    pub fn voxel(&self, i: usize) -> [i32; 3] {
        self.voxels[i]
    }

    /// Dense coordinate-to-index lookup over the bounding box.
    pub fn grid(&self) -> VoxelGrid {
        let [nx, ny, nz] = self.dims;
        let cells = (nx as usize) * (ny as usize) * (nz as usize);
        let mut lookup = vec![u32::MAX; cells];
        for (i, v) in self.voxels.iter().enumerate() {
            let cell =
                ((v[0] as usize) * ny as usize + v[1] as usize) * nz as usize + v[2] as usize;
            lookup[cell] = i as u32;
        }
        VoxelGrid {
            dims: self.dims,
            lookup,
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(Error::io(path))?;
        let mut reader = BufReader::new(file);
        if peek_magic(&mut reader, path)? == Some(*MAGIC_MASK) {
            Self::read_binary_body(&mut reader, path)
        } else {
            Self::read_text(&mut reader, path)
        }
    }

    fn read_text(reader: &mut impl BufRead, path: &Path) -> Result<Self> {
        let mut lines = LineScanner::new(reader, path);
        let header = lines.next_required("missing MASK header")?;
        let toks: Vec<&str> = header.split_whitespace().collect();
        if toks.len() != 5 || toks[0] != "MASK" {
            return Err(Error::parse(
                path,
                lines.line,
                "expected header `MASK nx ny nz n`",
            ));
        }
        let nx: i32 = lines.parse_tok(toks[1], "nx")?;
        let ny: i32 = lines.parse_tok(toks[2], "ny")?;
        let nz: i32 = lines.parse_tok(toks[3], "nz")?;
        let n: usize = lines.parse_tok(toks[4], "n")?;
        if n == 0 {
            return Err(Error::parse(path, lines.line, "empty mask (n = 0)"));
        }
        let dims = [nx, ny, nz];
        if dims.iter().any(|&d| d < 1) {
            return Err(Error::parse(
                path,
                lines.line,
                format!("invalid dims {dims:?}"),
            ));
        }

        let mut voxels = Vec::with_capacity(n);
        let mut seen = HashSet::with_capacity(n);
        for _ in 0..n {
            let row = lines.next_required("unexpected end of file in voxel list")?;
            let toks: Vec<&str> = row.split_whitespace().collect();
            if toks.len() != 3 {
                return Err(Error::parse(path, lines.line, "expected `x y z`"));
            }
            let x: i32 = lines.parse_tok(toks[0], "x")?;
            let y: i32 = lines.parse_tok(toks[1], "y")?;
            let z: i32 = lines.parse_tok(toks[2], "z")?;
            let v = [x, y, z];
            if x < 0 || x >= nx || y < 0 || y >= ny || z < 0 || z >= nz {
                return Err(Error::parse(path, lines.line, "coordinate out of bounds"));
            }
            if !seen.insert(v) {
                return Err(Error::parse(
                    path,
                    lines.line,
                    format!("duplicate coordinate {v:?}"),
                ));
            }
            voxels.push(v);
        }
        Ok(BrainMask { voxels, dims })
    }

    fn read_binary_body(reader: &mut impl Read, path: &Path) -> Result<Self> {
        let mut magic = [0u8; 8];
        reader.read_exact(&mut magic).map_err(Error::io(path))?;
        let nx = read_u64(reader, path)? as i32;
        let ny = read_u64(reader, path)? as i32;
        let nz = read_u64(reader, path)? as i32;
        let n = read_u64(reader, path)? as usize;
        let mut voxels = Vec::with_capacity(n);
        for _ in 0..n {
            let x = read_u32(reader, path)? as i32;
            let y = read_u32(reader, path)? as i32;
            let z = read_u32(reader, path)? as i32;
            voxels.push([x, y, z]);
        }
        BrainMask::new(voxels, [nx, ny, nz])
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = buf_writer(path)?;
        let [nx, ny, nz] = self.dims;
        writeln!(w, "MASK {nx} {ny} {nz} {}", self.len()).map_err(Error::io(path))?;
        for v in &self.voxels {
            writeln!(w, "{} {} {}", v[0], v[1], v[2]).map_err(Error::io(path))?;
        }
        w.flush().map_err(Error::io(path))
    }

    pub fn write_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = buf_writer(path)?;
        w.write_all(MAGIC_MASK).map_err(Error::io(path))?;
        for d in self.dims {
            write_u64(&mut w, d as u64, path)?;
        }
        write_u64(&mut w, self.len() as u64, path)?;
        for v in &self.voxels {
            for c in v {
                write_u32(&mut w, *c as u32, path)?;
            }
        }
        w.flush().map_err(Error::io(path))
    }
}

/// Dense coordinate-to-index lookup; `u32::MAX` marks cells outside the mask.
pub struct VoxelGrid {
    dims: [i32; 3],
    lookup: Vec<u32>,
}

impl VoxelGrid {
    /// Index of the voxel at `(x, y, z)`, if it is inside the mask.
    pub fn index_of(&self, x: i32, y: i32, z: i32) -> Option<u32> {
        let [nx, ny, nz] = self.dims;
        if x < 0 || x >= nx || y < 0 || y >= ny || z < 0 || z >= nz {
            return None;
        }
        let cell = ((x as usize) * ny as usize + y as usize) * nz as usize + z as usize;
        match self.lookup[cell] {
            u32::MAX => None,
            i => Some(i),
        }
    }
}

// ---------------------------------------------------------------------------
// SparseConnectivity
// ---------------------------------------------------------------------------

/// Symmetric sparse nonnegative matrix of streamline strengths between
/// voxels. Entries are stored once with `i <= j` and expanded on access;
/// explicit zeros are dropped at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseConnectivity {
    n: usize,
    entries: Vec<(u32, u32, f64)>,
}

impl SparseConnectivity {
    /// Build from raw triplets. Triplets may appear in any order and in
    /// either orientation; duplicates must agree to relative 1e-9.
    pub fn from_triplets(
        n: usize,
        triplets: impl IntoIterator<Item = (u32, u32, f64)>,
    ) -> Result<Self> {
        let mut entries: Vec<(u32, u32, f64)> = Vec::new();
        for (i, j, w) in triplets {
            if i as usize >= n || j as usize >= n {
                return Err(Error::invalid(format!(
                    "connectivity index ({i}, {j}) out of range for {n} voxels"
                )));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::invalid(format!(
                    "negative or non-finite weight {w} at ({i}, {j})"
                )));
            }
            if w == 0.0 {
                continue;
            }
            let (a, b) = if i <= j { (i, j) } else { (j, i) };
            entries.push((a, b, w));
        }
        entries.sort_unstable_by_key(|e| (e.0, e.1));
        let mut out: Vec<(u32, u32, f64)> = Vec::with_capacity(entries.len());
        for e in entries {
            match out.last() {
                Some(&(a, b, w)) if (a, b) == (e.0, e.1) => {
                    let scale = w.abs().max(e.2.abs());
                    if (w - e.2).abs() > DUP_REL_TOL * scale {
                        return Err(Error::invalid(format!(
                            "asymmetric entry between voxels {a} and {b}: {w} vs {}",
                            e.2
                        )));
                    }
                }
                _ => out.push(e),
            }
        }
        Ok(SparseConnectivity { n, entries: out })
    }

    /// All-zero matrix over `n` voxels.
    pub fn zero(n: usize) -> Self {
        SparseConnectivity {
            n,
            entries: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Stored entries, canonical `(i, j, w)` with `i <= j`, sorted.
    pub fn entries(&self) -> &[(u32, u32, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// Total connectivity strength: sum over distinct entries (each
    /// undirected pair and each self-loop counted once).
    pub fn total_strength(&self) -> f64 {
        self.entries.iter().map(|e| e.2).sum()
    }

    /// Expand to a full symmetric CSR matrix (both triangles, diagonal once).
    pub fn to_csr(&self) -> Csr {
        let n = self.n;
        let mut deg = vec![0usize; n];
        for &(i, j, _) in &self.entries {
            deg[i as usize] += 1;
            if i != j {
                deg[j as usize] += 1;
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut acc = 0usize;
        row_ptr.push(0);
        for d in &deg {
            acc += d;
            row_ptr.push(acc);
        }
        let mut cursor: Vec<usize> = row_ptr[..n].to_vec();
        let mut col_idx = vec![0u32; acc];
        let mut values = vec![0f64; acc];
        // Entries are sorted by (i, j): each row ends up with ascending columns.
        for &(i, j, w) in &self.entries {
            let c = &mut cursor[i as usize];
            col_idx[*c] = j;
            values[*c] = w;
            *c += 1;
            if i != j {
                let c = &mut cursor[j as usize];
                col_idx[*c] = i;
                values[*c] = w;
                *c += 1;
            }
        }
        Csr {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn read(path: impl AsRef<Path>, mask: &BrainMask) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(Error::io(path))?;
        let mut reader = BufReader::new(file);
        if peek_magic(&mut reader, path)? == Some(*MAGIC_CONN) {
            Self::read_binary_body(&mut reader, path, mask)
        } else {
            Self::read_text(&mut reader, path, mask)
        }
    }

    fn read_text(reader: &mut impl BufRead, path: &Path, mask: &BrainMask) -> Result<Self> {
        let mut lines = LineScanner::new(reader, path);
        let header = loop {
            let l = lines.next_required("missing CONN header")?;
            if !l.starts_with('#') {
                break l;
            }
        };
        let toks: Vec<&str> = header.split_whitespace().collect();
        if toks.len() != 3 || toks[0] != "CONN" {
            return Err(Error::parse(
                path,
                lines.line,
                "expected header `CONN n nnz`",
            ));
        }
        let n: usize = lines.parse_tok(toks[1], "n")?;
        let nnz: usize = lines.parse_tok(toks[2], "nnz")?;
        if n != mask.len() {
            return Err(Error::parse(
                path,
                lines.line,
                format!("voxel count {n} does not match mask ({})", mask.len()),
            ));
        }
        let mut triplets = Vec::with_capacity(nnz);
        let mut remaining = nnz;
        while remaining > 0 {
            let row = lines.next_required("unexpected end of file in triplet list")?;
            if row.starts_with('#') {
                continue;
            }
            let toks: Vec<&str> = row.split_whitespace().collect();
            if toks.len() != 3 {
                return Err(Error::parse(path, lines.line, "expected `i j w`"));
            }
            let i: u32 = lines.parse_tok(toks[0], "i")?;
            let j: u32 = lines.parse_tok(toks[1], "j")?;
            let w: f64 = lines.parse_tok(toks[2], "w")?;
            if i as usize >= n || j as usize >= n {
                return Err(Error::parse(
                    path,
                    lines.line,
                    format!("voxel index out of range ({i}, {j})"),
                ));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::parse(
                    path,
                    lines.line,
                    format!("negative or non-finite weight {w}"),
                ));
            }
            triplets.push((i, j, w));
            remaining -= 1;
        }
        Self::from_triplets(n, triplets)
    }

    fn read_binary_body(reader: &mut impl Read, path: &Path, mask: &BrainMask) -> Result<Self> {
        let mut magic = [0u8; 8];
        reader.read_exact(&mut magic).map_err(Error::io(path))?;
        let n = read_u64(reader, path)? as usize;
        if n != mask.len() {
            return Err(Error::invalid(format!(
                "{}: voxel count {n} does not match mask ({})",
                path.display(),
                mask.len()
            )));
        }
        let nnz = read_u64(reader, path)? as usize;
        let mut triplets = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            let i = read_u32(reader, path)?;
            let j = read_u32(reader, path)?;
            let w = read_f64(reader, path)?;
            triplets.push((i, j, w));
        }
        Self::from_triplets(n, triplets)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = buf_writer(path)?;
        writeln!(w, "CONN {} {}", self.n, self.entries.len()).map_err(Error::io(path))?;
        for &(i, j, v) in &self.entries {
            writeln!(w, "{i} {j} {}", fmt_f64(v)).map_err(Error::io(path))?;
        }
        w.flush().map_err(Error::io(path))
    }

    pub fn write_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = buf_writer(path)?;
        w.write_all(MAGIC_CONN).map_err(Error::io(path))?;
        write_u64(&mut w, self.n as u64, path)?;
        write_u64(&mut w, self.entries.len() as u64, path)?;
        for &(i, j, v) in &self.entries {
            write_u32(&mut w, i, path)?;
            write_u32(&mut w, j, path)?;
            w.write_all(&v.to_le_bytes()).map_err(Error::io(path))?;
        }
        w.flush().map_err(Error::io(path))
    }
}

/// Full symmetric CSR expansion of a [`SparseConnectivity`] (or any sparse
/// symmetric matrix): columns ascend within each row.
#[derive(Debug, Clone)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<u32>,
    pub values: Vec<f64>,
}

impl Csr {
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }
}

// ---------------------------------------------------------------------------
// Parcellation / Segmentation
// ---------------------------------------------------------------------------

/// Label per voxel, labels in `1..=k`.
///
/// A parcellation where some label in `1..=k` never occurs is flagged
/// `degenerate`; the flag is always derived from the label vector, so a
/// round trip through a file reproduces it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Parcellation {
    labels: Vec<u32>,
    k: u32,
    degenerate: bool,
}

/// A region labeling used only to define connectivity profiles. Same shape
/// and invariants as [`Parcellation`]; its region count is unrelated to the
/// target region count of a parcellation run.
pub type Segmentation = Parcellation;

impl Parcellation {
    pub fn new(labels: Vec<u32>, k: u32) -> Result<Self> {
        if k < 1 {
            return Err(Error::invalid("k must be >= 1"));
        }
        if labels.is_empty() {
            return Err(Error::invalid("empty label vector"));
        }
        let mut used = vec![false; k as usize];
        for (i, &l) in labels.iter().enumerate() {
            if l < 1 || l > k {
                return Err(Error::invalid(format!(
                    "label {l} at voxel {i} outside [1, {k}]"
                )));
            }
            used[(l - 1) as usize] = true;
        }
        let degenerate = !used.iter().all(|&u| u);
        Ok(Parcellation {
            labels,
            k,
            degenerate,
        })
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> u32 {
        self.labels[i]
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// True when some label in `1..=k` has no voxel.
    pub fn degenerate(&self) -> bool {
        self.degenerate
    }

    /// Voxel count per label, indexed by `label - 1`.
    pub fn region_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.k as usize];
        for &l in &self.labels {
            sizes[(l - 1) as usize] += 1;
        }
        sizes
    }

    pub fn read(path: impl AsRef<Path>, mask: &BrainMask) -> Result<Self> {
        let path = path.as_ref();
        let parc = Self::read_standalone(path)?;
        if parc.len() != mask.len() {
            return Err(Error::invalid(format!(
                "{}: voxel count {} does not match mask ({})",
                path.display(),
                parc.len(),
                mask.len()
            )));
        }
        Ok(parc)
    }

    /// Read without a mask to validate the voxel count against.
    pub fn read_standalone(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(Error::io(path))?;
        let mut reader = BufReader::new(file);
        if peek_magic(&mut reader, path)? == Some(*MAGIC_LABELS) {
            Self::read_binary_body(&mut reader, path)
        } else {
            Self::read_text(&mut reader, path)
        }
    }

    fn read_text(reader: &mut impl BufRead, path: &Path) -> Result<Self> {
        let mut lines = LineScanner::new(reader, path);
        let header = lines.next_required("missing PARC header")?;
        let toks: Vec<&str> = header.split_whitespace().collect();
        if toks.len() != 3 || toks[0] != "PARC" {
            return Err(Error::parse(path, lines.line, "expected header `PARC n k`"));
        }
        let n: usize = lines.parse_tok(toks[1], "n")?;
        let k: u32 = lines.parse_tok(toks[2], "k")?;
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let row = lines.next_required("unexpected end of file in label list")?;
            let l: u32 = lines.parse_tok(row.trim(), "label")?;
            if l < 1 || l > k {
                return Err(Error::parse(
                    path,
                    lines.line,
                    format!("label {l} outside [1, {k}]"),
                ));
            }
            labels.push(l);
        }
        Parcellation::new(labels, k)
    }

    fn read_binary_body(reader: &mut impl Read, path: &Path) -> Result<Self> {
        let mut magic = [0u8; 8];
        reader.read_exact(&mut magic).map_err(Error::io(path))?;
        let n = read_u64(reader, path)? as usize;
        let k = read_u64(reader, path)? as u32;
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            labels.push(read_u32(reader, path)?);
        }
        Parcellation::new(labels, k)
    }

    pub fn write(&self, mask: &BrainMask, path: impl AsRef<Path>) -> Result<()> {
        if self.len() != mask.len() {
            return Err(Error::invalid(format!(
                "parcellation length {} does not match mask ({})",
                self.len(),
                mask.len()
            )));
        }
        self.write_standalone(path)
    }

    /// Write without a mask to validate the voxel count against.
    pub fn write_standalone(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = buf_writer(path)?;
        writeln!(w, "PARC {} {}", self.len(), self.k).map_err(Error::io(path))?;
        for &l in &self.labels {
            writeln!(w, "{l}").map_err(Error::io(path))?;
        }
        w.flush().map_err(Error::io(path))
    }

    pub fn write_binary(&self, mask: &BrainMask, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if self.len() != mask.len() {
            return Err(Error::invalid(format!(
                "parcellation length {} does not match mask ({})",
                self.len(),
                mask.len()
            )));
        }
        let mut w = buf_writer(path)?;
        w.write_all(MAGIC_LABELS).map_err(Error::io(path))?;
        write_u64(&mut w, self.len() as u64, path)?;
        write_u64(&mut w, self.k as u64, path)?;
        for &l in &self.labels {
            write_u32(&mut w, l, path)?;
        }
        w.flush().map_err(Error::io(path))
    }
}

// ---------------------------------------------------------------------------
// ProfileMatrix
// ---------------------------------------------------------------------------

/// Dense n x m matrix of cumulative connectivity strengths: one row per
/// voxel, one column per segmentation region.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ProfileMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        ProfileMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Disjoint mutable rows for parallel fills.
    pub(crate) fn par_rows_mut(&mut self) -> rayon::slice::ChunksMut<'_, f64> {
        use rayon::prelude::*;
        self.data.par_chunks_mut(self.cols)
    }

    /// Debug dump as dense TSV, 17 significant digits.
    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = buf_writer(path)?;
        for i in 0..self.rows {
            let row = self.row(i);
            let line: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
            writeln!(w, "{}", line.join("\t")).map_err(Error::io(path))?;
        }
        w.flush().map_err(Error::io(path))
    }
}

// ---------------------------------------------------------------------------
// IO helpers
// ---------------------------------------------------------------------------

fn buf_writer(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(Error::io(path))?))
}

/// Look at the first 8 bytes without consuming them.
fn peek_magic(reader: &mut impl BufRead, path: &Path) -> Result<Option<[u8; 8]>> {
    let buf = reader.fill_buf().map_err(Error::io(path))?;
    if buf.len() >= 8 {
        let mut magic = [0u8; 8];
        magic.copy_from_slice(&buf[..8]);
        if magic == *MAGIC_MASK || magic == *MAGIC_CONN || magic == *MAGIC_LABELS {
            return Ok(Some(magic));
        }
    }
    Ok(None)
}

fn read_u64(reader: &mut impl Read, path: &Path) -> Result<u64> {
    let mut b = [0u8; 8];
    reader.read_exact(&mut b).map_err(Error::io(path))?;
    Ok(u64::from_le_bytes(b))
}

fn read_u32(reader: &mut impl Read, path: &Path) -> Result<u32> {
    let mut b = [0u8; 4];
    reader.read_exact(&mut b).map_err(Error::io(path))?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(reader: &mut impl Read, path: &Path) -> Result<f64> {
    let mut b = [0u8; 8];
    reader.read_exact(&mut b).map_err(Error::io(path))?;
    Ok(f64::from_le_bytes(b))
}

fn write_u64(w: &mut impl Write, v: u64, path: &Path) -> Result<()> {
    w.write_all(&v.to_le_bytes()).map_err(Error::io(path))
}

fn write_u32(w: &mut impl Write, v: u32, path: &Path) -> Result<()> {
    w.write_all(&v.to_le_bytes()).map_err(Error::io(path))
}

/// Line reader tracking the physical line number (header included).
struct LineScanner<'a, R: BufRead> {
    reader: &'a mut R,
    path: &'a Path,
    line: usize,
    buf: String,
}

impl<'a, R: BufRead> LineScanner<'a, R> {
    fn new(reader: &'a mut R, path: &'a Path) -> Self {
        LineScanner {
            reader,
            path,
            line: 0,
            buf: String::new(),
        }
    }

    fn next_required(&mut self, eof_msg: &str) -> Result<String> {
        loop {
            self.buf.clear();
            let read = self
                .reader
                .read_line(&mut self.buf)
                .map_err(Error::io(self.path))?;
            if read == 0 {
                return Err(Error::parse(self.path, self.line + 1, eof_msg));
            }
            self.line += 1;
            let trimmed = self.buf.trim();
            if !trimmed.is_empty() {
                return Ok(trimmed.to_string());
            }
        }
    }

    fn parse_tok<T: std::str::FromStr>(&self, tok: &str, what: &str) -> Result<T> {
        tok.parse().map_err(|_| {
            Error::parse(
                self.path,
                self.line,
                format!("cannot parse {what} from `{tok}`"),
            )
        })
    }
}
