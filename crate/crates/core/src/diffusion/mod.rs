//! DDPM core: variance schedule, forward noising, the noise-prediction
//! objective, the reverse update and classifier-free guidance.

mod denoiser;
mod schedule;
pub(crate) mod train;

pub use denoiser::{Architecture, Denoiser, DenoiserSpec, DenoiserTape, NoiseModel, Taus, TIME_EMBED_BASE};
pub use schedule::{forward_noise, SigmaKind, VarianceSchedule};
pub use train::{cfg_epsilon, ddpm_loss, ddpm_training_step, train_denoiser, denoise_step, reverse_update, GuidanceConfig, StepStats};
