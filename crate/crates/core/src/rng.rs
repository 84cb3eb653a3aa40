//! Reproducible random streams.
//!
//! Every unit of work draws from a ChaCha8 stream addressed by
//! `(master_seed, task)`. The key is the master seed and the stream id is the
//! task index, so two tasks never share a keystream and the result of a task
//! does not depend on which worker executes it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Generator for task `task` under `master_seed`.
pub fn task_rng(master_seed: u64, task: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(task);
    rng
}

/// Split a child stream off a parent generator. Used when one task fans out
/// into independent replicates.
pub fn child_rng<R: rand::Rng + ?Sized>(parent: &mut R) -> SimRng {
    ChaCha8Rng::seed_from_u64(parent.random())
}
