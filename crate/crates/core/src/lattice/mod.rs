//! The lazy simple random walk on `Z^d`, its local times and level sets, and
//! confinement in balls.

mod confine;
mod local_time;
mod site;
mod walk;

pub use confine::{
    in_ball, sample_confined_walk, survival_probability, ConfinementResult, SurvivalMethod,
};
pub(crate) use confine::{checkpoints, fixed_effort_splitting, Particle};
pub use local_time::{local_times, LocalTimeField};
pub use site::{KeyCodec, Site};
pub use walk::{sample_walk, Move, Trajectory};
