//! Evaluation suite: Fréchet distance between Gaussian fits of embedding
//! sets, paired cosine score, envelope correlation, and the small
//! statistical helpers the acceptance runs lean on (Mann-Whitney U,
//! nearest-centroid probe, exact binomial tail).

use thiserror::Error;

use crate::envelope::{self, Envelope, EnvelopeError, Waveform};
use crate::linalg;

/// Ridge added to covariance diagonals before the matrix square root;
/// small desk-scale fits are routinely rank-deficient.
pub const COV_RIDGE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("paired sets differ in size: {a} vs {b}")]
    PairMismatch { a: usize, b: usize },
    #[error("sequence has no variance; correlation is undefined")]
    DegenerateVariance,
    #[error("embedding set is empty")]
    EmptySet,
    #[error(transparent)]
    Envelope(#[from] EnvelopeError),
}

/// A set of same-dimension embeddings with its fitted mean and covariance.
#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    embeddings: Vec<Vec<f64>>,
    dim: usize,
    mean: Vec<f64>,
    cov: Vec<f64>,
}

impl EmbeddingSet {
    pub fn fit(embeddings: Vec<Vec<f64>>) -> Result<Self, MetricsError> {
        let n = embeddings.len();
        if n == 0 {
            return Err(MetricsError::EmptySet);
        }
        let dim = embeddings[0].len();
        for e in &embeddings {
            if e.len() != dim {
                return Err(MetricsError::DimensionMismatch {
                    expected: dim,
                    got: e.len(),
                });
            }
        }
        let mut mean = vec![0.0; dim];
        for e in &embeddings {
            for (m, x) in mean.iter_mut().zip(e) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        // Unbiased sample covariance; a single point fits as all zeros.
        let mut cov = vec![0.0; dim * dim];
        if n >= 2 {
            for e in &embeddings {
                for i in 0..dim {
                    let di = e[i] - mean[i];
                    for j in 0..dim {
                        cov[i * dim + j] += di * (e[j] - mean[j]);
                    }
                }
            }
            for c in &mut cov {
                *c /= (n - 1) as f64;
            }
        }
        Ok(Self {
            embeddings,
            dim,
            mean,
            cov,
        })
    }

    pub fn len(&self) -> usize {
        self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &[f64] {
        &self.cov
    }

    pub fn embeddings(&self) -> &[Vec<f64>] {
        &self.embeddings
    }
}

/// Symmetric PSD matrix square root via eigendecomposition; negative
/// round-off eigenvalues are clamped to zero.
pub fn sym_sqrt(mat: &[f64], m: usize) -> Vec<f64> {
    let (vals, vecs) = linalg::sym_eigen(mat, m);
    let roots: Vec<f64> = vals.iter().map(|&l| l.max(0.0).sqrt()).collect();
    // Σ_k sqrt(λ_k) v_k v_kᵀ with eigenvectors as rows of `vecs`.
    let mut out = vec![0.0; m * m];
    for k in 0..m {
        let r = roots[k];
        if r == 0.0 {
            continue;
        }
        for i in 0..m {
            let vi = vecs[k * m + i] * r;
            for j in 0..m {
                out[i * m + j] += vi * vecs[k * m + j];
            }
        }
    }
    out
}

fn matmul(a: &[f64], b: &[f64], m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        for k in 0..m {
            let aik = a[i * m + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..m {
                out[i * m + j] += aik * b[k * m + j];
            }
        }
    }
    out
}

fn trace(a: &[f64], m: usize) -> f64 {
    (0..m).map(|i| a[i * m + i]).sum()
}

/// Fréchet distance between the Gaussian fits of two embedding sets:
/// ‖μ_A−μ_B‖² + Tr(Σ_A + Σ_B − 2(Σ_A Σ_B)^½).
///
/// The cross term is evaluated through the symmetrized product
/// (Σ_A^½ Σ_B Σ_A^½)^½, which shares its spectrum with (Σ_A Σ_B)^½.
pub fn frechet_distance(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<f64, MetricsError> {
    if a.dim() != b.dim() {
        return Err(MetricsError::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let m = a.dim();
    let mut cov_a = a.cov.clone();
    let mut cov_b = b.cov.clone();
    for i in 0..m {
        cov_a[i * m + i] += COV_RIDGE;
        cov_b[i * m + i] += COV_RIDGE;
    }

    let mean_term: f64 = a
        .mean
        .iter()
        .zip(&b.mean)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();

    let root_a = sym_sqrt(&cov_a, m);
    let inner = matmul(&matmul(&root_a, &cov_b, m), &root_a, m);
    let cross = sym_sqrt(&inner, m);

    Ok(mean_term + trace(&cov_a, m) + trace(&cov_b, m) - 2.0 * trace(&cross, m))
}

/// Mean cosine similarity over paired embeddings.
pub fn cosine_score(gen: &EmbeddingSet, reference: &EmbeddingSet) -> Result<f64, MetricsError> {
    if gen.len() != reference.len() {
        return Err(MetricsError::PairMismatch {
            a: gen.len(),
            b: reference.len(),
        });
    }
    if gen.dim() != reference.dim() {
        return Err(MetricsError::DimensionMismatch {
            expected: gen.dim(),
            got: reference.dim(),
        });
    }
    let total: f64 = gen
        .embeddings
        .iter()
        .zip(&reference.embeddings)
        .map(|(x, y)| cosine(x, y))
        .sum();
    Ok(total / gen.len() as f64)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = linalg::l2_norm(a);
    let nb = linalg::l2_norm(b);
    if na < 1e-300 || nb < 1e-300 {
        return 0.0;
    }
    linalg::dot(a, b) / (na * nb)
}

/// Pearson correlation between the conditioning envelope and the RMS
/// envelope of the generated waveform, resampled to the conditioning
/// length. Extraction reuses the conditioning's window and hop.
pub fn envelope_correlation(
    conditioning: &Envelope,
    generated: &Waveform,
) -> Result<f64, MetricsError> {
    let gen_env = envelope::rms_envelope(generated, conditioning.window(), conditioning.hop())?;
    let resampled = crate::envelope::resample_linear(gen_env.frames(), conditioning.len());
    pearson(conditioning.frames(), &resampled)
}

/// Pearson correlation coefficient; errors when either input is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    let scale_a: f64 = a.iter().map(|x| x * x).sum::<f64>().max(1.0);
    let scale_b: f64 = b.iter().map(|x| x * x).sum::<f64>().max(1.0);
    if va <= 1e-24 * scale_a || vb <= 1e-24 * scale_b {
        return Err(MetricsError::DegenerateVariance);
    }
    Ok(cov / (va.sqrt() * vb.sqrt()))
}

/// One-sided Mann-Whitney p-value for "samples in `low` tend to be smaller
/// than samples in `high`", by normal approximation with tie correction.
pub fn mann_whitney_less(low: &[f64], high: &[f64]) -> f64 {
    let n1 = low.len() as f64;
    let n2 = high.len() as f64;
    assert!(n1 > 0.0 && n2 > 0.0);

    let mut all: Vec<(f64, usize)> = low
        .iter()
        .map(|&x| (x, 0))
        .chain(high.iter().map(|&x| (x, 1)))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    // Midranks with tie groups.
    let total = all.len();
    let mut ranks = vec![0.0; total];
    let mut tie_correction = 0.0;
    let mut i = 0;
    while i < total {
        let mut j = i;
        while j + 1 < total && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for r in ranks.iter_mut().take(j + 1).skip(i) {
            *r = rank;
        }
        let t = (j - i + 1) as f64;
        tie_correction += t * t * t - t;
        i = j + 1;
    }

    let r1: f64 = all
        .iter()
        .zip(&ranks)
        .filter(|((_, g), _)| *g == 0)
        .map(|(_, &r)| r)
        .sum();
    let u1 = r1 - n1 * (n1 + 1.0) / 2.0;

    let n = n1 + n2;
    let mean = n1 * n2 / 2.0;
    let var = n1 * n2 / 12.0 * ((n + 1.0) - tie_correction / (n * (n - 1.0)));
    if var <= 0.0 {
        return 0.5;
    }
    // Continuity-corrected z for the lower tail.
    let z = (u1 - mean + 0.5) / var.sqrt();
    normal_cdf(z)
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc_approx(-z / std::f64::consts::SQRT_2)
}

// Complementary error function, rational approximation (absolute error
// below 1.5e-7, plenty for thresholding p-values).
fn erfc_approx(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let tau = t
        * (-z * z - 1.26551223
            + t * (1.00002368
                + t * (0.37409196
                    + t * (0.09678418
                        + t * (-0.18628806
                            + t * (0.27886807
                                + t * (-1.13520398
                                    + t * (1.48851587
                                        + t * (-0.82215223 + t * 0.17087277)))))))))
        .exp();
    if x >= 0.0 {
        tau
    } else {
        2.0 - tau
    }
}

/// Exact upper-tail binomial probability P(X ≥ k) for X ~ Bin(n, p).
pub fn binomial_upper_tail(n: usize, k: usize, p: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    let ln_p = p.ln();
    let ln_q = (1.0 - p).ln();
    let mut tail = 0.0;
    for x in k..=n {
        let ln_pmf = ln_choose(n, x) + x as f64 * ln_p + (n - x) as f64 * ln_q;
        tail += ln_pmf.exp();
    }
    tail.min(1.0)
}

fn ln_choose(n: usize, k: usize) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

/// Per-class mean embeddings for the nearest-centroid probe.
pub fn fit_centroids(
    embeddings: &[Vec<f64>],
    labels: &[usize],
    num_classes: usize,
) -> Vec<Vec<f64>> {
    assert_eq!(embeddings.len(), labels.len());
    let dim = embeddings.first().map_or(0, Vec::len);
    let mut sums = vec![vec![0.0; dim]; num_classes];
    let mut counts = vec![0usize; num_classes];
    for (e, &c) in embeddings.iter().zip(labels) {
        counts[c] += 1;
        for (s, x) in sums[c].iter_mut().zip(e) {
            *s += x;
        }
    }
    for (sum, &count) in sums.iter_mut().zip(&counts) {
        if count > 0 {
            for s in sum.iter_mut() {
                *s /= count as f64;
            }
        }
    }
    sums
}

/// Classify one embedding by highest cosine against the centroids.
pub fn classify_by_centroid(centroids: &[Vec<f64>], embedding: &[f64]) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let score = cosine(centroid, embedding);
        if score > best_score {
            best_score = score;
            best = c;
        }
    }
    best
}

/// CSV report in the `metric,value,seed,config_hash` layout.
pub fn metric_report_csv(rows: &[(&str, f64)], seed: u64, config_hash: &str) -> String {
    let mut out = String::from("metric,value,seed,config_hash\n");
    for (name, value) in rows {
        out.push_str(&format!("{name},{value},{seed},{config_hash}\n"));
    }
    out
}
