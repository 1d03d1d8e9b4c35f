//! Noise schedules, forward corruption, the ε- and x₀-prediction training
//! objectives, and ancestral sampling.

mod process;
mod sampler;
mod schedule;

pub use process::{
    draw_noise, evaluate_loss, forward_sample, loss_with_noise, record_loss, reverse_step,
    standard_normal, to_eps, training_loss, Denoiser, Example, NoiseDraw, Objective,
};
pub use sampler::{
    read_ensemble_csv, sample, sample_windows, sample_windows_with_ids, trajectory_rng, write_ensemble_csv, DEFAULT_SAMPLE_BATCH,
};
pub use schedule::{NoiseSchedule, ScheduleKind};
