//! Alignment training: three per-modality encoders trained either with the
//! volume-based contrastive objective or with the pairwise-cosine anchor
//! baseline, plus retrieval evaluation over the learned space.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::SyntheticSample;
use super::mlp::{AdamW, ForwardCache, Mlp, MlpGrads};
use super::EncoderError;
use crate::checkpoint::{CheckpointError, Container};
use crate::linalg::{self, Modality};
use crate::loss::{self, LossConfig, LossGradients, TripletBatch};

/// Training objective selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Volume-based contrastive loss over full triplets.
    Gram,
    /// Two bidirectional cosine InfoNCE losses against an anchor modality.
    PairwiseCosine { anchor: Modality },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignConfig {
    pub objective: Objective,
    pub lr: f64,
    pub batch_size: usize,
    pub steps: u64,
    pub seed: u64,
    pub temperature: f64,
    pub hidden: usize,
    pub embed_dim: usize,
    /// For the volume objective: fraction of the step budget spent on a
    /// pairwise-cosine warmup before switching to volume training. The
    /// volume loss rearranges an already-contrastive latent space rather
    /// than growing one from scratch.
    pub warmup_fraction: f64,
}

impl AlignConfig {
    pub fn new(objective: Objective, steps: u64, seed: u64) -> Self {
        Self {
            objective,
            lr: 1e-4,
            batch_size: 64,
            steps,
            seed,
            temperature: 0.07,
            hidden: 64,
            embed_dim: 16,
            warmup_fraction: 0.25,
        }
    }
}

/// The three per-modality encoders.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub audio: Mlp,
    pub video: Mlp,
    pub text: Mlp,
    pub embed_dim: usize,
}

impl EncoderParams {
    pub fn init(
        audio_dim: usize,
        video_dim: usize,
        text_dim: usize,
        hidden: usize,
        embed_dim: usize,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            audio: Mlp::new(audio_dim, hidden, embed_dim, &mut rng),
            video: Mlp::new(video_dim, hidden, embed_dim, &mut rng),
            text: Mlp::new(text_dim, hidden, embed_dim, &mut rng),
            embed_dim,
        }
    }

    pub fn param_count(&self) -> usize {
        self.audio.param_count() + self.video.param_count() + self.text.param_count()
    }

    fn write_flat(&self, out: &mut Vec<f64>) {
        self.audio.write_flat(out);
        self.video.write_flat(out);
        self.text.write_flat(out);
    }

    fn read_flat(&mut self, flat: &[f64]) {
        let mut pos = 0;
        pos += self.audio.read_flat(&flat[pos..]);
        pos += self.video.read_flat(&flat[pos..pos + self.video.param_count()]);
        self.text.read_flat(&flat[pos..]);
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new();
        c.insert_scalar("meta/embed_dim", self.embed_dim as f32);
        for (name, mlp) in [("audio", &self.audio), ("video", &self.video), ("text", &self.text)]
        {
            c.insert_scalar(&format!("{name}/in_dim"), mlp.in_dim as f32);
            c.insert_scalar(&format!("{name}/hidden"), mlp.hidden as f32);
            c.insert_f64(
                &format!("{name}/w1"),
                vec![mlp.hidden as u32, mlp.in_dim as u32],
                &mlp.w1,
            );
            c.insert_f64(&format!("{name}/b1"), vec![mlp.hidden as u32], &mlp.b1);
            c.insert_f64(
                &format!("{name}/w2"),
                vec![mlp.out_dim as u32, mlp.hidden as u32],
                &mlp.w2,
            );
            c.insert_f64(&format!("{name}/b2"), vec![mlp.out_dim as u32], &mlp.b2);
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<Self, CheckpointError> {
        let embed_dim = c.require("meta/embed_dim")?.scalar() as usize;
        let load = |name: &str| -> Result<Mlp, CheckpointError> {
            let in_dim = c.require(&format!("{name}/in_dim"))?.scalar() as usize;
            let hidden = c.require(&format!("{name}/hidden"))?.scalar() as usize;
            Ok(Mlp {
                w1: c.require(&format!("{name}/w1"))?.to_f64(),
                b1: c.require(&format!("{name}/b1"))?.to_f64(),
                w2: c.require(&format!("{name}/w2"))?.to_f64(),
                b2: c.require(&format!("{name}/b2"))?.to_f64(),
                in_dim,
                hidden,
                out_dim: embed_dim,
            })
        };
        Ok(Self {
            audio: load("audio")?,
            video: load("video")?,
            text: load("text")?,
            embed_dim,
        })
    }
}

/// Unit-norm embeddings of one sample across the three modalities.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletEmbedding {
    pub audio: Vec<f64>,
    pub video: Vec<f64>,
    pub text: Vec<f64>,
}

/// Encode one sample into its three unit-norm embeddings.
pub fn encode(params: &EncoderParams, sample: &SyntheticSample) -> TripletEmbedding {
    TripletEmbedding {
        audio: params.audio.forward(&sample.audio_view).0,
        video: params.video.forward(&sample.video_view).0,
        text: params.text.forward(&sample.text_view).0,
    }
}

/// Trained encoders with their step counter, optimizer state and seed.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub params: EncoderParams,
    pub step: u64,
    pub optimizer: AdamW,
    pub seed: u64,
}

/// Training result: final state plus the per-step loss curve and the
/// whole-dataset loss before and after.
#[derive(Debug, Clone)]
pub struct AlignOutcome {
    pub state: TrainState,
    pub loss_curve: Vec<f64>,
    pub initial_loss: f64,
    pub final_loss: f64,
}

struct BatchForward {
    batch: TripletBatch,
    caches: Vec<[ForwardCache; 3]>,
}

fn forward_batch(
    params: &EncoderParams,
    data: &[SyntheticSample],
    indices: &[usize],
) -> Result<BatchForward, EncoderError> {
    let mut audio = Vec::with_capacity(indices.len());
    let mut video = Vec::with_capacity(indices.len());
    let mut text = Vec::with_capacity(indices.len());
    let mut caches = Vec::with_capacity(indices.len());
    for &i in indices {
        let s = &data[i];
        let (ea, ca) = params.audio.forward(&s.audio_view);
        let (ev, cv) = params.video.forward(&s.video_view);
        let (et, ct) = params.text.forward(&s.text_view);
        audio.push(ea);
        video.push(ev);
        text.push(et);
        caches.push([ca, cv, ct]);
    }
    Ok(BatchForward {
        batch: TripletBatch::from_vectors(audio, video, text)?,
        caches,
    })
}

fn objective_loss_and_grads(
    objective: Objective,
    batch: &TripletBatch,
    cfg: &LossConfig,
) -> Result<(f64, LossGradients), EncoderError> {
    match objective {
        Objective::Gram => Ok((
            loss::loss_combined(batch, cfg)?,
            loss::loss_gradients(batch, cfg)?,
        )),
        Objective::PairwiseCosine { anchor } => Ok((
            loss::pairwise_infonce(batch, cfg, anchor)?,
            loss::pairwise_infonce_gradients(batch, cfg, anchor)?,
        )),
    }
}

/// Loss of the objective over the whole dataset as a single batch.
pub fn dataset_loss(
    params: &EncoderParams,
    data: &[SyntheticSample],
    objective: Objective,
    temperature: f64,
) -> Result<f64, EncoderError> {
    let indices: Vec<usize> = (0..data.len()).collect();
    let fwd = forward_batch(params, data, &indices)?;
    let cfg = LossConfig::new(temperature);
    let (loss, _) = match objective {
        Objective::Gram => (loss::loss_combined(&fwd.batch, &cfg)?, ()),
        Objective::PairwiseCosine { anchor } => {
            (loss::pairwise_infonce(&fwd.batch, &cfg, anchor)?, ())
        }
    };
    Ok(loss)
}

/// Train the three encoders on the dataset. Deterministic per seed.
pub fn train_alignment(
    data: &[SyntheticSample],
    cfg: &AlignConfig,
) -> Result<AlignOutcome, EncoderError> {
    if data.is_empty() {
        return Err(EncoderError::InvalidConfig("empty dataset".into()));
    }
    let audio_dim = data[0].audio_view.len();
    let video_dim = data[0].video_view.len();
    let text_dim = data[0].text_view.len();
    let mut params = EncoderParams::init(
        audio_dim,
        video_dim,
        text_dim,
        cfg.hidden,
        cfg.embed_dim,
        cfg.seed,
    );
    let mut optimizer = AdamW::new(cfg.lr, params.param_count());
    // Separate stream from the init stream so they never collide.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x616c_6967));
    let loss_cfg = LossConfig::new(cfg.temperature);

    let initial_loss = dataset_loss(&params, data, cfg.objective, cfg.temperature)?;

    let mut loss_curve = Vec::with_capacity(cfg.steps as usize);
    let batch_size = cfg.batch_size.min(data.len());
    let mut flat_params = Vec::with_capacity(params.param_count());
    let mut flat_grads = Vec::with_capacity(params.param_count());

    let warmup_steps = match cfg.objective {
        Objective::Gram => (cfg.steps as f64 * cfg.warmup_fraction).round() as u64,
        Objective::PairwiseCosine { .. } => 0,
    };

    for step in 0..cfg.steps {
        let step_objective = if step < warmup_steps {
            Objective::PairwiseCosine {
                anchor: Modality::Text,
            }
        } else {
            cfg.objective
        };
        let indices: Vec<usize> = (0..batch_size)
            .map(|_| rng.gen_range(0..data.len()))
            .collect();
        let fwd = forward_batch(&params, data, &indices)?;
        let (loss, grads) = objective_loss_and_grads(step_objective, &fwd.batch, &loss_cfg)?;
        if !loss.is_finite() {
            return Err(EncoderError::DivergenceDetected { step, loss });
        }
        loss_curve.push(loss);

        let mut ga = MlpGrads::zeros_like(&params.audio);
        let mut gv = MlpGrads::zeros_like(&params.video);
        let mut gt = MlpGrads::zeros_like(&params.text);
        for (i, caches) in fwd.caches.iter().enumerate() {
            params.audio.backward(&caches[0], &grads.audio[i], &mut ga);
            params.video.backward(&caches[1], &grads.video[i], &mut gv);
            params.text.backward(&caches[2], &grads.text[i], &mut gt);
        }

        flat_params.clear();
        flat_grads.clear();
        params.write_flat(&mut flat_params);
        ga.write_flat(&mut flat_grads);
        gv.write_flat(&mut flat_grads);
        gt.write_flat(&mut flat_grads);
        optimizer.step(&mut flat_params, &flat_grads);
        params.read_flat(&flat_params);
    }

    let final_loss = dataset_loss(&params, data, cfg.objective, cfg.temperature)?;
    Ok(AlignOutcome {
        state: TrainState {
            params,
            step: cfg.steps,
            optimizer,
            seed: cfg.seed,
        },
        loss_curve,
        initial_loss,
        final_loss,
    })
}

/// How candidates are ranked during retrieval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetrievalScoring {
    /// Rank text candidates by ascending triplet volume.
    VolumeAscending,
    /// Rank by descending mean cosine against audio and video.
    CosineDescending,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetrievalReport {
    pub recall_at_1: f64,
    pub recall_at_5: f64,
    pub pool: usize,
    pub queries: usize,
}

/// Text retrieval for audio-video queries over a candidate pool.
///
/// For query i the pool holds the matched text plus the next `pool - 1`
/// samples cyclically, so results are deterministic without an RNG.
pub fn evaluate_retrieval(
    params: &EncoderParams,
    data: &[SyntheticSample],
    pool: usize,
    scoring: RetrievalScoring,
) -> RetrievalReport {
    let n = data.len();
    let pool = pool.clamp(2, n);
    let embedded: Vec<TripletEmbedding> = data.iter().map(|s| encode(params, s)).collect();

    let mut hits1 = 0usize;
    let mut hits5 = 0usize;
    for i in 0..n {
        let matched_score = candidate_score(&embedded, i, i, scoring);
        let mut better = 0usize;
        for j in 1..pool {
            let cand = (i + j) % n;
            let score = candidate_score(&embedded, i, cand, scoring);
            if score < matched_score || (score == matched_score && cand < i) {
                better += 1;
            }
        }
        if better == 0 {
            hits1 += 1;
        }
        if better < 5 {
            hits5 += 1;
        }
    }
    RetrievalReport {
        recall_at_1: hits1 as f64 / n as f64,
        recall_at_5: hits5 as f64 / n as f64,
        pool,
        queries: n,
    }
}

/// Lower is better for both scorings.
fn candidate_score(
    embedded: &[TripletEmbedding],
    query: usize,
    candidate: usize,
    scoring: RetrievalScoring,
) -> f64 {
    let q = &embedded[query];
    let t = &embedded[candidate].text;
    match scoring {
        RetrievalScoring::VolumeAscending => linalg::triplet_volume(t, &q.audio, &q.video),
        RetrievalScoring::CosineDescending => {
            -(linalg::dot(t, &q.audio) + linalg::dot(t, &q.video)) / 2.0
        }
    }
}

/// Mean cosine between two modalities over matched samples.
pub fn mean_matched_cosine(
    params: &EncoderParams,
    data: &[SyntheticSample],
    a: Modality,
    b: Modality,
) -> f64 {
    let mut total = 0.0;
    for s in data {
        let e = encode(params, s);
        let pick = |m: Modality| match m {
            Modality::Audio => &e.audio,
            Modality::Video => &e.video,
            Modality::Text => &e.text,
        };
        total += linalg::dot(pick(a), pick(b));
    }
    total / data.len() as f64
}

/// Matched-triplet volumes and mismatched-text volumes over a dataset.
pub fn matched_and_mismatched_volumes(
    params: &EncoderParams,
    data: &[SyntheticSample],
) -> (Vec<f64>, Vec<f64>) {
    let embedded: Vec<TripletEmbedding> = data.iter().map(|s| encode(params, s)).collect();
    let n = embedded.len();
    let mut matched = Vec::with_capacity(n);
    let mut mismatched = Vec::new();
    for i in 0..n {
        matched.push(linalg::triplet_volume(
            &embedded[i].text,
            &embedded[i].audio,
            &embedded[i].video,
        ));
        for j in 0..n {
            if j != i {
                mismatched.push(linalg::triplet_volume(
                    &embedded[j].text,
                    &embedded[i].audio,
                    &embedded[i].video,
                ));
            }
        }
    }
    (matched, mismatched)
}
