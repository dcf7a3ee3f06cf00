//! Desk-scale rig for Gramian-volume multimodal alignment and
//! envelope-guided signal diffusion.
//!
//! The crate has three layers:
//!
//! - geometry: [`linalg`] (Gram matrices, parallelotope volumes, analytic
//!   gradients) and [`loss`] (volume-based contrastive objectives plus the
//!   pairwise-cosine baseline they are compared against);
//! - rigs: [`encoders`] (synthetic three-modality data and small aligned
//!   encoders), [`diffusion`] (a v-prediction denoiser with semantic and
//!   envelope conditioning);
//! - support: [`envelope`] (RMS envelopes and WAV I/O), [`metrics`]
//!   (Fréchet distance, cosine score, envelope correlation),
//!   [`checkpoint`] (the `GFCK` tensor container).

pub mod checkpoint;
pub mod diffusion;
pub mod encoders;
pub mod envelope;
pub mod linalg;
pub mod loss;
pub mod metrics;

#[cfg(test)]
pub(crate) mod testutil;
