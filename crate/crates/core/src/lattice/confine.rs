//! Confinement of the walk in a Euclidean ball and estimation of its
//! survival probability `P_0(τ > T)`.

use rand::seq::index::sample as sample_indices;
use rand::Rng;

use super::site::Site;
use super::walk::{Move, Trajectory};
use crate::error::{Error, Result};
use crate::rng::{child_rng, SimRng};
use crate::stats::{LogMean, Method, TailEstimate};

/// `{z : |z|_2 <= r}`.
#[inline]
pub fn in_ball(coords: &[i32], radius: f64) -> bool {
    let r2: i64 = coords.iter().map(|&c| c as i64 * c as i64).sum();
    (r2 as f64) <= radius * radius
}

/// Outcome of one confinement attempt.
#[derive(Debug, Clone)]
pub struct ConfinementResult {
    pub survived: bool,
    pub radius: f64,
    pub duration: usize,
    /// The confined path `S(0..=T)`, present only when the walk survived.
    pub trajectory: Option<Trajectory>,
}

/// One rejection attempt: run `T` steps and report whether `S(0..=T)` stayed
/// in `B(r)`.
pub fn sample_confined_walk<R: Rng + ?Sized>(
    duration: usize,
    radius: f64,
    d: usize,
    rng: &mut R,
) -> Result<ConfinementResult> {
    if duration == 0 || !(radius >= 1.0) || d == 0 {
        return Err(Error::invalid("confinement", "need T >= 1, r >= 1, d >= 1"));
    }
    let mut pos = vec![0i32; d];
    let mut steps = Vec::with_capacity(duration);
    for _ in 0..duration {
        let m = Move::sample(d, rng);
        m.apply(&mut pos);
        if !in_ball(&pos, radius) {
            return Ok(ConfinementResult {
                survived: false,
                radius,
                duration,
                trajectory: None,
            });
        }
        steps.push(m);
    }
    Ok(ConfinementResult {
        survived: true,
        radius,
        duration,
        trajectory: Some(Trajectory::from_steps(Site::origin(d), steps)?),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurvivalMethod {
    Rejection,
    Splitting,
}

/// Independent splitting replicates per estimate; the spread between them
/// gives the standard error.
const SPLITTING_REPLICATES: usize = 10;

/// Estimate `P_0(τ > T)` for the ball `B(r)` with `budget` walks
/// (rejection) or `budget` particles in total (splitting, checkpoints every
/// `T/10` steps).
pub fn survival_probability<R: Rng + ?Sized>(
    duration: usize,
    radius: f64,
    d: usize,
    method: SurvivalMethod,
    budget: usize,
    rng: &mut R,
) -> Result<TailEstimate> {
    if budget == 0 {
        return Err(Error::invalid("budget", "must be positive"));
    }
    if duration == 0 || !(radius >= 1.0) || d == 0 {
        return Err(Error::invalid("confinement", "need T >= 1, r >= 1, d >= 1"));
    }
    let tag = match method {
        SurvivalMethod::Rejection => Method::Rejection,
        SurvivalMethod::Splitting => Method::Splitting,
    };
    if radius > duration as f64 {
        let mut est = TailEstimate::exact(1.0);
        est.method = tag;
        est.samples = budget as u64;
        return Ok(est);
    }
    match method {
        SurvivalMethod::Rejection => {
            let mut hits = 0u64;
            for _ in 0..budget {
                if sample_confined_walk(duration, radius, d, rng)?.survived {
                    hits += 1;
                }
            }
            Ok(TailEstimate::from_hits(hits, budget as u64, Method::Rejection))
        }
        SurvivalMethod::Splitting => {
            let stage = duration.div_ceil(10).max(1);
            let stages = checkpoints(duration, stage);
            let replicates = SPLITTING_REPLICATES.min(budget);
            let per = budget / replicates;
            let mut mean = LogMean::new();
            let mut extinct = 0;
            for _ in 0..replicates {
                let mut child = child_rng(rng);
                let init = BallWalker {
                    pos: vec![0; d],
                    radius,
                };
                let run = fixed_effort_splitting(init, per, &stages, &mut child);
                if run.survivors.is_empty() {
                    extinct += 1;
                }
                mean.push(run.log_weight);
            }
            if extinct == replicates {
                return Err(Error::Extinction {
                    particles: per,
                    checkpoint: stages.len(),
                });
            }
            Ok(TailEstimate::from_log(
                mean.log_mean(),
                mean.rel_stderr(),
                (per * replicates) as u64,
                Method::Splitting,
            ))
        }
    }
}

/// Cumulative step counts `stage, 2·stage, …, total`.
pub(crate) fn checkpoints(total: usize, stage: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (1..).map(|k| k * stage).take_while(|&t| t < total).collect();
    out.push(total);
    out
}

/// A particle that can be pushed forward and killed.
pub(crate) trait Particle: Clone {
    /// Advance `steps` steps; false if the particle died on the way.
    fn advance(&mut self, steps: usize, rng: &mut SimRng) -> bool;
}

#[derive(Clone)]
struct BallWalker {
    pos: Vec<i32>,
    radius: f64,
}

impl Particle for BallWalker {
    fn advance(&mut self, steps: usize, rng: &mut SimRng) -> bool {
        let d = self.pos.len();
        for _ in 0..steps {
            Move::sample(d, rng).apply(&mut self.pos);
            if !in_ball(&self.pos, self.radius) {
                return false;
            }
        }
        true
    }
}

pub(crate) struct SplittingRun<P> {
    /// `Σ_k ln(s_k / N)` over all checkpoints.
    pub log_weight: f64,
    /// Particles alive after the last checkpoint (not resampled).
    pub survivors: Vec<P>,
}

/// Fixed-effort splitting. After each checkpoint the survivors are
/// replicated back to `n` particles by residual resampling; `E[f·1{alive}]`
/// is estimated by `exp(log_weight) · mean_{survivors} f`.
pub(crate) fn fixed_effort_splitting<P: Particle>(
    init: P,
    n: usize,
    stages: &[usize],
    rng: &mut SimRng,
) -> SplittingRun<P> {
    let mut particles = vec![init; n];
    let mut log_weight = 0.0;
    let mut done = 0;
    for (k, &t) in stages.iter().enumerate() {
        let steps = t - done;
        done = t;
        let survivors: Vec<P> = particles
            .into_iter()
            .filter_map(|mut p| p.advance(steps, rng).then_some(p))
            .collect();
        if survivors.is_empty() {
            return SplittingRun {
                log_weight: f64::NEG_INFINITY,
                survivors,
            };
        }
        log_weight += (survivors.len() as f64 / n as f64).ln();
        if k + 1 == stages.len() {
            return SplittingRun { log_weight, survivors };
        }
        particles = residual_resample(&survivors, n, rng);
    }
    SplittingRun {
        log_weight,
        survivors: particles,
    }
}

fn residual_resample<P: Clone>(pool: &[P], n: usize, rng: &mut SimRng) -> Vec<P> {
    let s = pool.len();
    let copies = n / s;
    let mut out = Vec::with_capacity(n);
    for p in pool {
        for _ in 0..copies {
            out.push(p.clone());
        }
    }
    for i in sample_indices(rng, s, n - copies * s) {
        out.push(pool[i].clone());
    }
    out
}
