//! Dense small-matrix kernels: Gram matrices of embedding columns, the
//! parallelotope volume spanned by them, and the analytic volume gradient.
//!
//! Everything here operates on column sets of at most a few dozen entries,
//! so the routines are plain `Vec<f64>` loops with partial pivoting where
//! needed. No BLAS, no allocation tricks.

use thiserror::Error;

/// Jitter added to the Gram diagonal before inversion in [`volume_gradient`].
pub const GRAM_JITTER: f64 = 1e-8;

/// Determinant floor below which a jittered Gram matrix is treated as singular.
pub const SINGULAR_DET: f64 = 1e-12;

/// Norm floor below which a raw vector cannot be normalized.
pub const ZERO_NORM: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("cannot normalize a vector with norm below {ZERO_NORM}")]
    ZeroVector,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix has {m} columns but only {n} rows; at most n columns are supported")]
    TooManyColumns { m: usize, n: usize },
    #[error("Gram matrix is singular (det {det:e} after jitter)")]
    SingularGram { det: f64 },
}

/// The three modalities an embedding can describe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modality {
    Audio,
    Video,
    Text,
}

/// A unit-norm vector tagged with the modality it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    values: Vec<f64>,
    modality: Modality,
}

impl Embedding {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Scale a raw vector onto the unit sphere, preserving direction.
pub fn normalize(raw: &[f64], modality: Modality) -> Result<Embedding, LinalgError> {
    let norm = l2_norm(raw);
    if norm < ZERO_NORM {
        return Err(LinalgError::ZeroVector);
    }
    Ok(Embedding {
        values: raw.iter().map(|x| x / norm).collect(),
        modality,
    })
}

pub fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// An n×m matrix whose columns are embedding vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    columns: Vec<Vec<f64>>,
    n: usize,
}

impl EmbeddingMatrix {
    /// Build from raw column vectors. All columns must share one dimension n,
    /// and there may be at most n of them.
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self, LinalgError> {
        let m = columns.len();
        if m == 0 {
            return Err(LinalgError::DimensionMismatch { expected: 1, got: 0 });
        }
        let n = columns[0].len();
        for col in &columns {
            if col.len() != n {
                return Err(LinalgError::DimensionMismatch {
                    expected: n,
                    got: col.len(),
                });
            }
        }
        if m > n {
            return Err(LinalgError::TooManyColumns { m, n });
        }
        Ok(Self { columns, n })
    }

    pub fn from_embeddings(embeddings: &[Embedding]) -> Result<Self, LinalgError> {
        Self::from_columns(embeddings.iter().map(|e| e.values.clone()).collect())
    }

    /// Embedding dimension (rows).
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of columns.
    pub fn m(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }
}

/// An m×m matrix of pairwise inner products, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    entries: Vec<f64>,
    m: usize,
}

impl GramMatrix {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.m + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Determinant, dispatching to the closed form for m ≤ 3 and pivoted
    /// Gaussian elimination otherwise.
    pub fn det(&self) -> f64 {
        if self.m <= 3 {
            det_closed_form(&self.entries, self.m)
        } else {
            det_pivoted(&self.entries, self.m)
        }
    }
}

/// Gram matrix G = AᵀA of the column set.
pub fn gram(a: &EmbeddingMatrix) -> GramMatrix {
    let m = a.m();
    let mut entries = vec![0.0; m * m];
    for i in 0..m {
        for j in i..m {
            let g = dot(a.column(i), a.column(j));
            entries[i * m + j] = g;
            entries[j * m + i] = g;
        }
    }
    GramMatrix { entries, m }
}

/// Volume of the parallelotope spanned by the columns: sqrt of the Gram
/// determinant, with negative round-off clamped to zero.
pub fn volume(a: &EmbeddingMatrix) -> f64 {
    gram(a).det().max(0.0).sqrt()
}

/// Volume of the parallelotope spanned by three same-length vectors.
///
/// Allocation-free fast path for the (text, audio, video) triplets the
/// contrastive losses evaluate in O(B²) inner loops.
pub fn triplet_volume(t: &[f64], a: &[f64], v: &[f64]) -> f64 {
    let g = triplet_gram(t, a, v);
    det_closed_form(&g, 3).max(0.0).sqrt()
}

fn triplet_gram(t: &[f64], a: &[f64], v: &[f64]) -> [f64; 9] {
    let tt = dot(t, t);
    let ta = dot(t, a);
    let tv = dot(t, v);
    let aa = dot(a, a);
    let av = dot(a, v);
    let vv = dot(v, v);
    [tt, ta, tv, ta, aa, av, tv, av, vv]
}

/// Analytic gradient of [`volume`] with respect to every matrix entry,
/// returned as m gradient columns of length n.
///
/// Uses d vol/dA = vol · A · G⁻¹ with the Gram matrix jittered by
/// [`GRAM_JITTER`]·I before inversion.
pub fn volume_gradient(a: &EmbeddingMatrix) -> Result<Vec<Vec<f64>>, LinalgError> {
    let m = a.m();
    let g = gram(a);
    let vol = g.det().max(0.0).sqrt();

    let mut jittered = g.entries.clone();
    for i in 0..m {
        jittered[i * m + i] += GRAM_JITTER;
    }
    let inv = invert_symmetric(&jittered, m)?;

    // grad[:, j] = vol * Σ_k A[:, k] * inv[k, j]
    let mut grad = vec![vec![0.0; a.n()]; m];
    for j in 0..m {
        for k in 0..m {
            let w = vol * inv[k * m + j];
            let col = a.column(k);
            for (gi, &ci) in grad[j].iter_mut().zip(col) {
                *gi += w * ci;
            }
        }
    }
    Ok(grad)
}

/// Gradient of [`triplet_volume`] with respect to (t, a, v), written into
/// the three output slices. Returns the volume.
pub fn triplet_volume_gradient(
    t: &[f64],
    a: &[f64],
    v: &[f64],
    out_t: &mut [f64],
    out_a: &mut [f64],
    out_v: &mut [f64],
) -> Result<f64, LinalgError> {
    let mut g = triplet_gram(t, a, v);
    let vol = det_closed_form(&g, 3).max(0.0).sqrt();
    g[0] += GRAM_JITTER;
    g[4] += GRAM_JITTER;
    g[8] += GRAM_JITTER;

    let det = det_closed_form(&g, 3);
    if det.abs() <= SINGULAR_DET {
        return Err(LinalgError::SingularGram { det });
    }
    // Adjugate inverse of the symmetric 3×3.
    let inv = [
        (g[4] * g[8] - g[5] * g[7]) / det,
        (g[2] * g[7] - g[1] * g[8]) / det,
        (g[1] * g[5] - g[2] * g[4]) / det,
        (g[5] * g[6] - g[3] * g[8]) / det,
        (g[0] * g[8] - g[2] * g[6]) / det,
        (g[2] * g[3] - g[0] * g[5]) / det,
        (g[3] * g[7] - g[4] * g[6]) / det,
        (g[1] * g[6] - g[0] * g[7]) / det,
        (g[0] * g[4] - g[1] * g[3]) / det,
    ];

    let cols = [t, a, v];
    let outs = [out_t, out_a, out_v];
    for (j, out) in outs.into_iter().enumerate() {
        for x in out.iter_mut() {
            *x = 0.0;
        }
        for (k, col) in cols.iter().enumerate() {
            let w = vol * inv[k * 3 + j];
            for (o, &c) in out.iter_mut().zip(col.iter()) {
                *o += w * c;
            }
        }
    }
    Ok(vol)
}

/// Closed-form determinant for m ≤ 3 (cofactor expansion at m = 3).
pub fn det_closed_form(entries: &[f64], m: usize) -> f64 {
    match m {
        1 => entries[0],
        2 => entries[0] * entries[3] - entries[1] * entries[2],
        3 => {
            entries[0] * (entries[4] * entries[8] - entries[5] * entries[7])
                - entries[1] * (entries[3] * entries[8] - entries[5] * entries[6])
                + entries[2] * (entries[3] * entries[7] - entries[4] * entries[6])
        }
        _ => panic!("det_closed_form supports m <= 3, got {m}"),
    }
}

/// General determinant via Gaussian elimination with partial pivoting.
pub fn det_pivoted(entries: &[f64], m: usize) -> f64 {
    let mut a = entries.to_vec();
    let mut det = 1.0;
    for i in 0..m {
        let mut pivot = i;
        for r in i + 1..m {
            if a[r * m + i].abs() > a[pivot * m + i].abs() {
                pivot = r;
            }
        }
        if a[pivot * m + i] == 0.0 {
            return 0.0;
        }
        if pivot != i {
            for c in 0..m {
                a.swap(i * m + c, pivot * m + c);
            }
            det = -det;
        }
        let d = a[i * m + i];
        det *= d;
        for r in i + 1..m {
            let factor = a[r * m + i] / d;
            for c in i..m {
                a[r * m + c] -= factor * a[i * m + c];
            }
        }
    }
    det
}

/// Invert a symmetric matrix by Gauss-Jordan with partial pivoting.
/// Fails with [`LinalgError::SingularGram`] when the determinant drops
/// below [`SINGULAR_DET`].
pub fn invert_symmetric(entries: &[f64], m: usize) -> Result<Vec<f64>, LinalgError> {
    let det = if m <= 3 {
        det_closed_form(entries, m)
    } else {
        det_pivoted(entries, m)
    };
    if det.abs() <= SINGULAR_DET {
        return Err(LinalgError::SingularGram { det });
    }

    let mut a = entries.to_vec();
    let mut inv = vec![0.0; m * m];
    for i in 0..m {
        inv[i * m + i] = 1.0;
    }
    for i in 0..m {
        let mut pivot = i;
        for r in i + 1..m {
            if a[r * m + i].abs() > a[pivot * m + i].abs() {
                pivot = r;
            }
        }
        if pivot != i {
            for c in 0..m {
                a.swap(i * m + c, pivot * m + c);
                inv.swap(i * m + c, pivot * m + c);
            }
        }
        let d = a[i * m + i];
        for c in 0..m {
            a[i * m + c] /= d;
            inv[i * m + c] /= d;
        }
        for r in 0..m {
            if r == i {
                continue;
            }
            let factor = a[r * m + i];
            if factor == 0.0 {
                continue;
            }
            for c in 0..m {
                a[r * m + c] -= factor * a[i * m + c];
                inv[r * m + c] -= factor * inv[i * m + c];
            }
        }
    }
    Ok(inv)
}

/// Eigenvalues and eigenvectors of a symmetric matrix by cyclic Jacobi
/// rotations. Returns (eigenvalues, eigenvectors as rows).
pub fn sym_eigen(entries: &[f64], m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = entries.to_vec();
    let mut v = vec![0.0; m * m];
    for i in 0..m {
        v[i * m + i] = 1.0;
    }
    let scale: f64 = entries.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
    for _sweep in 0..64 {
        let off: f64 = (0..m)
            .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
            .map(|(i, j)| a[i * m + j] * a[i * m + j])
            .sum();
        if off.sqrt() < 1e-15 * scale {
            break;
        }
        for p in 0..m {
            for q in p + 1..m {
                let apq = a[p * m + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a[p * m + p];
                let aqq = a[q * m + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..m {
                    let akp = a[k * m + p];
                    let akq = a[k * m + q];
                    a[k * m + p] = c * akp - s * akq;
                    a[k * m + q] = s * akp + c * akq;
                }
                for k in 0..m {
                    let apk = a[p * m + k];
                    let aqk = a[q * m + k];
                    a[p * m + k] = c * apk - s * aqk;
                    a[q * m + k] = s * apk + c * aqk;
                }
                for k in 0..m {
                    let vpk = v[p * m + k];
                    let vqk = v[q * m + k];
                    v[p * m + k] = c * vpk - s * vqk;
                    v[q * m + k] = s * vpk + c * vqk;
                }
            }
        }
    }
    let eigenvalues = (0..m).map(|i| a[i * m + i]).collect();
    (eigenvalues, v)
}
