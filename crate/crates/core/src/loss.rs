//! Volume-based contrastive losses over batches of (text, audio, video)
//! triplets, the pairwise-cosine InfoNCE baseline they are compared
//! against, and analytic gradients for both.
//!
//! The two volume losses share one B×B matrix `M[p][q] = vol(t_q, a_p, v_p)`:
//! the av→t direction softmaxes over rows (text index varies), the t→av
//! direction over columns (audio/video index varies).

use crate::linalg::{self, LinalgError, Modality};
use thiserror::Error;

/// Norm slack tolerated when validating batch embeddings.
pub const UNIT_NORM_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("invalid batch: {0}")]
    InvalidBatch(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Softmax direction of a volume loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossDirection {
    /// Negatives vary the text embedding (row softmax).
    Av2T,
    /// Negatives vary the audio-video pair (column softmax).
    T2Av,
    /// Mean of both directions.
    Combined,
}

/// Temperature, negative count and direction for the contrastive losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub temperature: f64,
    /// Number of denominator terms K. `None` means the full batch.
    pub negatives: Option<usize>,
    pub direction: LossDirection,
}

impl LossConfig {
    pub fn new(temperature: f64) -> Self {
        assert!(temperature > 0.0, "temperature must be positive");
        Self {
            temperature,
            negatives: None,
            direction: LossDirection::Combined,
        }
    }

    fn effective_k(&self, batch_len: usize) -> Result<usize, LossError> {
        let k = self.negatives.unwrap_or(batch_len);
        if k == 0 || k > batch_len {
            return Err(LossError::InvalidBatch(format!(
                "negative count {k} outside 1..={batch_len}"
            )));
        }
        Ok(k)
    }
}

impl Default for LossConfig {
    /// Conventional contrastive temperature 0.07, full-batch negatives.
    fn default() -> Self {
        Self::new(0.07)
    }
}

/// A batch of B aligned (audio, video, text) embedding triplets.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletBatch {
    audio: Vec<Vec<f64>>,
    video: Vec<Vec<f64>>,
    text: Vec<Vec<f64>>,
    dim: usize,
}

impl TripletBatch {
    /// Validating constructor: equal lengths, equal dimensions, unit norms.
    pub fn from_vectors(
        audio: Vec<Vec<f64>>,
        video: Vec<Vec<f64>>,
        text: Vec<Vec<f64>>,
    ) -> Result<Self, LossError> {
        let batch = Self::from_vectors_unchecked(audio, video, text)?;
        for list in [&batch.audio, &batch.video, &batch.text] {
            for v in list {
                let norm = linalg::l2_norm(v);
                if (norm - 1.0).abs() > UNIT_NORM_TOL {
                    return Err(LossError::InvalidBatch(format!(
                        "embedding norm {norm} deviates from 1 by more than {UNIT_NORM_TOL}"
                    )));
                }
            }
        }
        Ok(batch)
    }

    /// Shape-checked constructor that skips the unit-norm check. Used by
    /// finite-difference probes, which perturb off the sphere.
    pub fn from_vectors_unchecked(
        audio: Vec<Vec<f64>>,
        video: Vec<Vec<f64>>,
        text: Vec<Vec<f64>>,
    ) -> Result<Self, LossError> {
        let b = audio.len();
        if b == 0 || video.len() != b || text.len() != b {
            return Err(LossError::InvalidBatch(format!(
                "modality list lengths differ: audio {b}, video {}, text {}",
                video.len(),
                text.len()
            )));
        }
        let dim = audio[0].len();
        for list in [&audio, &video, &text] {
            for v in list {
                if v.len() != dim {
                    return Err(LossError::InvalidBatch(format!(
                        "embedding dimension {} differs from {dim}",
                        v.len()
                    )));
                }
            }
        }
        Ok(Self {
            audio,
            video,
            text,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.audio.len()
    }

    pub fn is_empty(&self) -> bool {
        self.audio.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn audio(&self, i: usize) -> &[f64] {
        &self.audio[i]
    }

    pub fn video(&self, i: usize) -> &[f64] {
        &self.video[i]
    }

    pub fn text(&self, i: usize) -> &[f64] {
        &self.text[i]
    }

    fn modality(&self, m: Modality) -> &[Vec<f64>] {
        match m {
            Modality::Audio => &self.audio,
            Modality::Video => &self.video,
            Modality::Text => &self.text,
        }
    }
}

/// Per-embedding gradients of a batch loss, indexed like the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGradients {
    pub audio: Vec<Vec<f64>>,
    pub video: Vec<Vec<f64>>,
    pub text: Vec<Vec<f64>>,
}

impl LossGradients {
    fn zeros(b: usize, dim: usize) -> Self {
        Self {
            audio: vec![vec![0.0; dim]; b],
            video: vec![vec![0.0; dim]; b],
            text: vec![vec![0.0; dim]; b],
        }
    }

    /// Frobenius norm over all three gradient blocks.
    pub fn norm(&self) -> f64 {
        let mut s = 0.0;
        for block in [&self.audio, &self.video, &self.text] {
            for v in block {
                s += linalg::dot(v, v);
            }
        }
        s.sqrt()
    }
}

/// The B×B triplet-volume matrix `M[p][q] = vol(t_q, a_p, v_p)`, row-major.
pub fn volume_matrix(batch: &TripletBatch) -> Vec<f64> {
    let b = batch.len();
    let mut m = vec![0.0; b * b];
    for p in 0..b {
        for q in 0..b {
            m[p * b + q] = linalg::triplet_volume(batch.text(q), batch.audio(p), batch.video(p));
        }
    }
    m
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Row-direction loss straight from a volume matrix.
pub fn av2t_from_volumes(vols: &[f64], b: usize, cfg: &LossConfig) -> Result<f64, LossError> {
    let k = cfg.effective_k(b)?;
    let tau = cfg.temperature;
    let mut total = 0.0;
    for p in 0..b {
        let matched = -vols[p * b + p] / tau;
        let lse = log_sum_exp((0..k).map(|q| -vols[p * b + q] / tau));
        total += lse - matched;
    }
    Ok(total / b as f64)
}

/// Column-direction loss straight from a volume matrix.
pub fn t2av_from_volumes(vols: &[f64], b: usize, cfg: &LossConfig) -> Result<f64, LossError> {
    let k = cfg.effective_k(b)?;
    let tau = cfg.temperature;
    let mut total = 0.0;
    for q in 0..b {
        let matched = -vols[q * b + q] / tau;
        let lse = log_sum_exp((0..k).map(|p| -vols[p * b + q] / tau));
        total += lse - matched;
    }
    Ok(total / b as f64)
}

/// Contrastive volume loss with text negatives.
pub fn loss_av2t(batch: &TripletBatch, cfg: &LossConfig) -> Result<f64, LossError> {
    require_direction(cfg, LossDirection::Av2T)?;
    av2t_from_volumes(&volume_matrix(batch), batch.len(), cfg)
}

/// Contrastive volume loss with audio-video negatives.
pub fn loss_t2av(batch: &TripletBatch, cfg: &LossConfig) -> Result<f64, LossError> {
    require_direction(cfg, LossDirection::T2Av)?;
    t2av_from_volumes(&volume_matrix(batch), batch.len(), cfg)
}

/// Mean of the two directional losses; the training objective.
pub fn loss_combined(batch: &TripletBatch, cfg: &LossConfig) -> Result<f64, LossError> {
    let vols = volume_matrix(batch);
    let b = batch.len();
    Ok(0.5 * (av2t_from_volumes(&vols, b, cfg)? + t2av_from_volumes(&vols, b, cfg)?))
}

fn require_direction(cfg: &LossConfig, wanted: LossDirection) -> Result<(), LossError> {
    if cfg.direction == wanted || cfg.direction == LossDirection::Combined {
        Ok(())
    } else {
        Err(LossError::InvalidBatch(format!(
            "loss direction {:?} not compatible with requested {:?}",
            cfg.direction, wanted
        )))
    }
}

/// Sum of two bidirectional cosine InfoNCE losses, anchor against each of
/// the other modalities. The baseline the volume loss is measured against.
pub fn pairwise_infonce(
    batch: &TripletBatch,
    cfg: &LossConfig,
    anchor: Modality,
) -> Result<f64, LossError> {
    let others = non_anchor(anchor);
    let mut total = 0.0;
    for other in others {
        let s = similarity_matrix(batch.modality(anchor), batch.modality(other), cfg.temperature);
        total += infonce_rows(&s, batch.len(), cfg)?;
        total += infonce_cols(&s, batch.len(), cfg)?;
    }
    Ok(total)
}

fn non_anchor(anchor: Modality) -> [Modality; 2] {
    match anchor {
        Modality::Audio => [Modality::Video, Modality::Text],
        Modality::Video => [Modality::Audio, Modality::Text],
        Modality::Text => [Modality::Audio, Modality::Video],
    }
}

fn similarity_matrix(x: &[Vec<f64>], y: &[Vec<f64>], tau: f64) -> Vec<f64> {
    let b = x.len();
    let mut s = vec![0.0; b * b];
    for i in 0..b {
        for j in 0..b {
            s[i * b + j] = linalg::dot(&x[i], &y[j]) / tau;
        }
    }
    s
}

fn infonce_rows(s: &[f64], b: usize, cfg: &LossConfig) -> Result<f64, LossError> {
    let k = cfg.effective_k(b)?;
    let mut total = 0.0;
    for i in 0..b {
        let lse = log_sum_exp((0..k).map(|j| s[i * b + j]));
        total += lse - s[i * b + i];
    }
    Ok(total / b as f64)
}

fn infonce_cols(s: &[f64], b: usize, cfg: &LossConfig) -> Result<f64, LossError> {
    let k = cfg.effective_k(b)?;
    let mut total = 0.0;
    for j in 0..b {
        let lse = log_sum_exp((0..k).map(|i| s[i * b + j]));
        total += lse - s[j * b + j];
    }
    Ok(total / b as f64)
}

/// d(combined loss)/dM for every volume-matrix entry, row-major.
fn combined_volume_sensitivities(
    vols: &[f64],
    b: usize,
    cfg: &LossConfig,
) -> Result<Vec<f64>, LossError> {
    let k = cfg.effective_k(b)?;
    let tau = cfg.temperature;
    let scale = 1.0 / (2.0 * b as f64 * tau);
    let mut sens = vec![0.0; b * b];

    // Row softmax (av→t) and column softmax (t→av) terms.
    for p in 0..b {
        let lse = log_sum_exp((0..k).map(|q| -vols[p * b + q] / tau));
        sens[p * b + p] += scale;
        for q in 0..k {
            let soft = (-vols[p * b + q] / tau - lse).exp();
            sens[p * b + q] -= scale * soft;
        }
    }
    for q in 0..b {
        let lse = log_sum_exp((0..k).map(|p| -vols[p * b + q] / tau));
        sens[q * b + q] += scale;
        for p in 0..k {
            let soft = (-vols[p * b + q] / tau - lse).exp();
            sens[p * b + q] -= scale * soft;
        }
    }
    Ok(sens)
}

/// Analytic gradient of [`loss_combined`] with respect to every embedding.
///
/// Chain rule through the per-entry triplet volume gradients; near-singular
/// Gram matrices surface as [`LinalgError::SingularGram`].
pub fn loss_gradients(batch: &TripletBatch, cfg: &LossConfig) -> Result<LossGradients, LossError> {
    let b = batch.len();
    let dim = batch.dim();
    let vols = volume_matrix(batch);
    let sens = combined_volume_sensitivities(&vols, b, cfg)?;

    let mut grads = LossGradients::zeros(b, dim);
    let mut gt = vec![0.0; dim];
    let mut ga = vec![0.0; dim];
    let mut gv = vec![0.0; dim];
    for p in 0..b {
        for q in 0..b {
            let w = sens[p * b + q];
            if w == 0.0 {
                continue;
            }
            linalg::triplet_volume_gradient(
                batch.text(q),
                batch.audio(p),
                batch.video(p),
                &mut gt,
                &mut ga,
                &mut gv,
            )?;
            for i in 0..dim {
                grads.text[q][i] += w * gt[i];
                grads.audio[p][i] += w * ga[i];
                grads.video[p][i] += w * gv[i];
            }
        }
    }
    Ok(grads)
}

/// Analytic gradient of [`pairwise_infonce`] with respect to every embedding.
pub fn pairwise_infonce_gradients(
    batch: &TripletBatch,
    cfg: &LossConfig,
    anchor: Modality,
) -> Result<LossGradients, LossError> {
    let b = batch.len();
    let k = cfg.effective_k(b)?;
    let dim = batch.dim();
    let tau = cfg.temperature;
    let mut grads = LossGradients::zeros(b, dim);

    for other in non_anchor(anchor) {
        let xs = batch.modality(anchor);
        let ys = batch.modality(other);
        let s = similarity_matrix(xs, ys, tau);

        // dL/ds for both softmax directions of this pair.
        let mut dl_ds = vec![0.0; b * b];
        let inv_b = 1.0 / b as f64;
        for i in 0..b {
            let lse = log_sum_exp((0..k).map(|j| s[i * b + j]));
            dl_ds[i * b + i] -= inv_b;
            for j in 0..k {
                dl_ds[i * b + j] += inv_b * (s[i * b + j] - lse).exp();
            }
        }
        for j in 0..b {
            let lse = log_sum_exp((0..k).map(|i| s[i * b + j]));
            dl_ds[j * b + j] -= inv_b;
            for i in 0..k {
                dl_ds[i * b + j] += inv_b * (s[i * b + j] - lse).exp();
            }
        }

        let (anchor_grads, other_grads) = grads.pair_mut(anchor, other);
        for i in 0..b {
            for j in 0..b {
                let w = dl_ds[i * b + j] / tau;
                if w == 0.0 {
                    continue;
                }
                for d in 0..dim {
                    anchor_grads[i][d] += w * ys[j][d];
                    other_grads[j][d] += w * xs[i][d];
                }
            }
        }
    }
    Ok(grads)
}

impl LossGradients {
    fn pair_mut(
        &mut self,
        a: Modality,
        b: Modality,
    ) -> (&mut Vec<Vec<f64>>, &mut Vec<Vec<f64>>) {
        use Modality::*;
        match (a, b) {
            (Audio, Video) => (&mut self.audio, &mut self.video),
            (Audio, Text) => (&mut self.audio, &mut self.text),
            (Video, Audio) => (&mut self.video, &mut self.audio),
            (Video, Text) => (&mut self.video, &mut self.text),
            (Text, Audio) => (&mut self.text, &mut self.audio),
            (Text, Video) => (&mut self.text, &mut self.video),
            _ => panic!("pair_mut requires distinct modalities"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{central_diff, Lcg};

    fn unit(v: &[f64]) -> Vec<f64> {
        let n = linalg::l2_norm(v);
        v.iter().map(|x| x / n).collect()
    }

    fn random_batch(seed: u64, n: usize, b: usize) -> TripletBatch {
        let mut rng = Lcg::new(seed);
        let gen = |rng: &mut Lcg| -> Vec<Vec<f64>> {
            (0..b).map(|_| unit(&rng.vector(n))).collect()
        };
        let audio = gen(&mut rng);
        let video = gen(&mut rng);
        let text = gen(&mut rng);
        TripletBatch::from_vectors(audio, video, text).unwrap()
    }

    #[test]
    fn single_element_batch_has_zero_loss() {
        let batch = random_batch(1, 6, 1);
        let cfg = LossConfig::new(0.07);
        assert_eq!(loss_av2t(&batch, &cfg).unwrap(), 0.0);
        assert_eq!(loss_t2av(&batch, &cfg).unwrap(), 0.0);
        assert_eq!(loss_combined(&batch, &cfg).unwrap(), 0.0);
        assert_eq!(
            pairwise_infonce(&batch, &cfg, Modality::Text).unwrap(),
            0.0
        );
    }

    #[test]
    fn uniform_volumes_give_log_b() {
        let cfg = LossConfig::new(0.5);
        for b in [2, 3, 7] {
            let vols = vec![0.42; b * b];
            let expected = (b as f64).ln();
            assert!((av2t_from_volumes(&vols, b, &cfg).unwrap() - expected).abs() < 1e-12);
            assert!((t2av_from_volumes(&vols, b, &cfg).unwrap() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn hand_evaluated_two_by_two() {
        // matched volumes 0.1, cross volumes 0.9, tau = 1.
        let vols = vec![0.1, 0.9, 0.9, 0.1];
        let cfg = LossConfig::new(1.0);
        let expected = (1.0 + (-0.8f64).exp()).ln(); // ≈ 0.37110
        let got = av2t_from_volumes(&vols, 2, &cfg).unwrap();
        assert!((got - expected).abs() < 1e-12, "got {got}");
        assert!((got - 0.37110).abs() < 1e-5);
    }

    #[test]
    fn symmetric_volume_matrix_makes_directions_agree() {
        let vols = vec![0.2, 0.6, 0.6, 0.3];
        let cfg = LossConfig::new(0.25);
        let a = av2t_from_volumes(&vols, 2, &cfg).unwrap();
        let t = t2av_from_volumes(&vols, 2, &cfg).unwrap();
        assert!((a - t).abs() < 1e-14);
    }

    #[test]
    fn combined_is_mean_of_hand_computed_directions() {
        // Asymmetric matrix, tau = 1; every row/column softmax written out.
        let vols = vec![0.1, 0.3, 0.7, 0.2];
        let cfg = LossConfig::new(1.0);
        let av2t = 0.5 * ((1.0 + (-0.2f64).exp()).ln() + (1.0 + (-0.5f64).exp()).ln());
        let t2av = 0.5 * ((1.0 + (-0.6f64).exp()).ln() + (1.0 + (-0.1f64).exp()).ln());
        assert!((av2t_from_volumes(&vols, 2, &cfg).unwrap() - av2t).abs() < 1e-12);
        assert!((t2av_from_volumes(&vols, 2, &cfg).unwrap() - t2av).abs() < 1e-12);
        let batchless_combined = 0.5 * (av2t + t2av);
        assert!(batchless_combined > 0.0);
    }

    #[test]
    fn embedding_path_matches_matrix_path() {
        let batch = random_batch(5, 8, 4);
        let cfg = LossConfig::new(0.07);
        let vols = volume_matrix(&batch);
        assert_eq!(
            loss_av2t(&batch, &cfg).unwrap(),
            av2t_from_volumes(&vols, 4, &cfg).unwrap()
        );
        assert_eq!(
            loss_t2av(&batch, &cfg).unwrap(),
            t2av_from_volumes(&vols, 4, &cfg).unwrap()
        );
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let a = vec![unit(&[1.0, 0.0]), unit(&[0.0, 1.0])];
        let v = vec![unit(&[1.0, 0.0])];
        let t = vec![unit(&[1.0, 0.0]), unit(&[0.0, 1.0])];
        assert!(matches!(
            TripletBatch::from_vectors(a, v, t),
            Err(LossError::InvalidBatch(_))
        ));
    }

    #[test]
    fn non_unit_embeddings_rejected() {
        let a = vec![vec![2.0, 0.0]];
        let v = vec![vec![1.0, 0.0]];
        let t = vec![vec![1.0, 0.0]];
        assert!(TripletBatch::from_vectors(a, v, t).is_err());
    }

    #[test]
    fn infonce_hand_value_identical_modalities() {
        // Two orthogonal samples, identical across modalities, tau = 1.
        // Each softmax direction contributes log(1 + e^{-1}).
        let e0 = vec![1.0, 0.0];
        let e1 = vec![0.0, 1.0];
        let batch = TripletBatch::from_vectors(
            vec![e0.clone(), e1.clone()],
            vec![e0.clone(), e1.clone()],
            vec![e0, e1],
        )
        .unwrap();
        let cfg = LossConfig::new(1.0);
        let per_direction = (1.0 + (-1.0f64).exp()).ln();
        let expected = 4.0 * per_direction; // 2 pairs × 2 directions
        let got = pairwise_infonce(&batch, &cfg, Modality::Text).unwrap();
        assert!((got - expected).abs() < 1e-12, "got {got}");
    }

    #[test]
    fn infonce_anchor_choice_matters_on_asymmetric_batches() {
        let batch = random_batch(17, 6, 3);
        let cfg = LossConfig::new(0.5);
        let with_text = pairwise_infonce(&batch, &cfg, Modality::Text).unwrap();
        let with_audio = pairwise_infonce(&batch, &cfg, Modality::Audio).unwrap();
        assert!((with_text - with_audio).abs() > 1e-9);
    }

    #[test]
    fn common_permutation_leaves_losses_unchanged() {
        let batch = random_batch(23, 8, 5);
        let cfg = LossConfig::new(0.07);
        let before_av2t = loss_av2t(&batch, &cfg).unwrap();
        let before_t2av = loss_t2av(&batch, &cfg).unwrap();

        let perm = [3usize, 0, 4, 1, 2];
        let permute = |xs: &dyn Fn(usize) -> Vec<f64>| -> Vec<Vec<f64>> {
            perm.iter().map(|&i| xs(i)).collect()
        };
        let permuted = TripletBatch::from_vectors(
            permute(&|i| batch.audio(i).to_vec()),
            permute(&|i| batch.video(i).to_vec()),
            permute(&|i| batch.text(i).to_vec()),
        )
        .unwrap();
        assert!((loss_av2t(&permuted, &cfg).unwrap() - before_av2t).abs() < 1e-12);
        assert!((loss_t2av(&permuted, &cfg).unwrap() - before_t2av).abs() < 1e-12);
    }

    #[test]
    fn shrinking_a_matched_volume_never_increases_loss() {
        let mut rng = Lcg::new(31);
        let cfg = LossConfig::new(0.2);
        for _ in 0..50 {
            let b = 4;
            let mut vols: Vec<f64> = (0..b * b).map(|_| rng.next_f64().abs()).collect();
            let before = av2t_from_volumes(&vols, b, &cfg).unwrap()
                + t2av_from_volumes(&vols, b, &cfg).unwrap();
            let i = (rng.next_u64() % b as u64) as usize;
            vols[i * b + i] *= 0.5;
            let after = av2t_from_volumes(&vols, b, &cfg).unwrap()
                + t2av_from_volumes(&vols, b, &cfg).unwrap();
            assert!(after <= before + 1e-12);
        }
    }

    #[test]
    fn loss_nonnegative_when_matched_volume_is_row_minimum() {
        let mut rng = Lcg::new(57);
        let cfg = LossConfig::new(0.3);
        for _ in 0..50 {
            let b = 5;
            let mut vols: Vec<f64> = (0..b * b).map(|_| 0.5 + 0.5 * rng.next_f64().abs()).collect();
            for i in 0..b {
                vols[i * b + i] = 0.1 * rng.next_f64().abs();
            }
            assert!(av2t_from_volumes(&vols, b, &cfg).unwrap() >= 0.0);
            assert!(t2av_from_volumes(&vols, b, &cfg).unwrap() >= 0.0);
        }
    }

    #[test]
    fn gradients_zero_for_single_element_batch() {
        let batch = random_batch(3, 6, 1);
        let grads = loss_gradients(&batch, &LossConfig::new(0.07)).unwrap();
        assert!(grads.norm() < 1e-14);
    }

    #[test]
    fn gradients_vanish_on_repeated_triplet() {
        let a = unit(&[0.2, 0.5, -0.1, 0.8]);
        let v = unit(&[0.9, -0.2, 0.3, 0.1]);
        let t = unit(&[-0.3, 0.4, 0.6, 0.2]);
        let batch = TripletBatch::from_vectors(
            vec![a.clone(); 4],
            vec![v.clone(); 4],
            vec![t.clone(); 4],
        )
        .unwrap();
        let grads = loss_gradients(&batch, &LossConfig::new(0.07)).unwrap();
        assert!(grads.norm() < 1e-10, "norm {}", grads.norm());
    }

    fn check_gradients_against_fd(seed: u64, n: usize, b: usize, cfg: &LossConfig) {
        let batch = random_batch(seed, n, b);
        let grads = loss_gradients(&batch, cfg).unwrap();
        let blocks: [(&Vec<Vec<f64>>, Modality); 3] = [
            (&grads.audio, Modality::Audio),
            (&grads.video, Modality::Video),
            (&grads.text, Modality::Text),
        ];
        for (block, modality) in blocks {
            for i in 0..b {
                for d in 0..n {
                    let fd = central_diff(1e-5, |eps| {
                        let mut audio: Vec<Vec<f64>> =
                            (0..b).map(|j| batch.audio(j).to_vec()).collect();
                        let mut video: Vec<Vec<f64>> =
                            (0..b).map(|j| batch.video(j).to_vec()).collect();
                        let mut text: Vec<Vec<f64>> =
                            (0..b).map(|j| batch.text(j).to_vec()).collect();
                        match modality {
                            Modality::Audio => audio[i][d] += eps,
                            Modality::Video => video[i][d] += eps,
                            Modality::Text => text[i][d] += eps,
                        }
                        let probe =
                            TripletBatch::from_vectors_unchecked(audio, video, text).unwrap();
                        loss_combined(&probe, cfg).unwrap()
                    });
                    let analytic = block[i][d];
                    let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-8);
                    assert!(
                        rel < 1e-4,
                        "{modality:?}[{i}][{d}]: analytic {analytic} vs fd {fd} (rel {rel})"
                    );
                }
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        check_gradients_against_fd(7, 8, 4, &LossConfig::new(1.0));
        check_gradients_against_fd(9, 8, 4, &LossConfig::new(0.07));
    }

    #[test]
    fn infonce_gradients_match_finite_differences() {
        let batch = random_batch(13, 6, 3);
        let cfg = LossConfig::new(0.5);
        let anchor = Modality::Text;
        let grads = pairwise_infonce_gradients(&batch, &cfg, anchor).unwrap();
        for (block, modality) in [
            (&grads.audio, Modality::Audio),
            (&grads.video, Modality::Video),
            (&grads.text, Modality::Text),
        ] {
            for i in 0..3 {
                for d in 0..6 {
                    let fd = central_diff(1e-6, |eps| {
                        let mut audio: Vec<Vec<f64>> =
                            (0..3).map(|j| batch.audio(j).to_vec()).collect();
                        let mut video: Vec<Vec<f64>> =
                            (0..3).map(|j| batch.video(j).to_vec()).collect();
                        let mut text: Vec<Vec<f64>> =
                            (0..3).map(|j| batch.text(j).to_vec()).collect();
                        match modality {
                            Modality::Audio => audio[i][d] += eps,
                            Modality::Video => video[i][d] += eps,
                            Modality::Text => text[i][d] += eps,
                        }
                        let probe =
                            TripletBatch::from_vectors_unchecked(audio, video, text).unwrap();
                        pairwise_infonce(&probe, &cfg, anchor).unwrap()
                    });
                    let analytic = block[i][d];
                    let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-8);
                    assert!(
                        rel < 1e-4,
                        "{modality:?}[{i}][{d}]: analytic {analytic} vs fd {fd}"
                    );
                }
            }
        }
    }

    #[test]
    fn raising_temperature_shrinks_gradients() {
        let batch = random_batch(41, 8, 4);
        let norms: Vec<f64> = [1.0, 10.0, 100.0]
            .iter()
            .map(|&tau| loss_gradients(&batch, &LossConfig::new(tau)).unwrap().norm())
            .collect();
        assert!(norms[0] > norms[1] && norms[1] > norms[2], "{norms:?}");
    }
}
