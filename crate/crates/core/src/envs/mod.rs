//! Synthetic evaluation environments and the demonstration dataset container.

mod claw;
mod dataset;
mod gridworld;

pub use claw::{
    default_claw_scenes, generate_claw_dataset, generate_claw_dataset_with, in_region, sample_demo, ClawScene, Region,
    SceneOrder, BIMODAL_SCENES, CLAW_FIXTURE_VERSION, CLAW_OBS_DIM, DIAGONAL_SCENE,
};
pub use dataset::{DemoDataset, Normalizer};
pub use gridworld::{
    decode_move, generate_gridworld_dataset, gridworld_exact_posteriors, rollout, GridPosteriors, GridWorldSpec, Move,
    GRID_ACTION_DIM, GRID_OBS_DIM,
};
