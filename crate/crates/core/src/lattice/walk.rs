use rand::Rng;

use super::site::Site;
use crate::error::{Error, Result};

/// One increment of the lazy walk: `0` stays put, `2i + 1` is `+e_i` and
/// `2i + 2` is `-e_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Move(pub u8);

impl Move {
    pub const STAY: Move = Move(0);

    pub fn count(d: usize) -> usize {
        2 * d + 1
    }

    #[inline]
    pub fn apply(self, pos: &mut [i32]) {
        if self.0 == 0 {
            return;
        }
        let axis = ((self.0 - 1) / 2) as usize;
        if self.0 % 2 == 1 {
            pos[axis] += 1;
        } else {
            pos[axis] -= 1;
        }
    }

    #[inline]
    pub fn undo(self, pos: &mut [i32]) {
        Move(self.opposite()).apply(pos)
    }

    fn opposite(self) -> u8 {
        match self.0 {
            0 => 0,
            m if m % 2 == 1 => m + 1,
            m => m - 1,
        }
    }

    /// The move taking `from` to `to`, if they are equal or nearest neighbours.
    pub fn between(from: &[i32], to: &[i32]) -> Option<Move> {
        let mut found = Move::STAY;
        for (axis, (a, b)) in from.iter().zip(to).enumerate() {
            match b - a {
                0 => {}
                1 | -1 if found == Move::STAY => {
                    found = Move(if b - a == 1 { 2 * axis as u8 + 1 } else { 2 * axis as u8 + 2 });
                }
                _ => return None,
            }
        }
        Some(found)
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Move {
        Move(rng.random_range(0..Move::count(d)) as u8)
    }
}

/// Positions `S(0), …, S(n-1)` of an `n`-monomer polymer and the `n - 1`
/// increments that generate them from `start`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    d: usize,
    start: Site,
    steps: Vec<Move>,
    positions: Vec<i32>,
}

impl Trajectory {
    pub fn from_steps(start: Site, steps: Vec<Move>) -> Result<Self> {
        let d = start.dim();
        if d == 0 {
            return Err(Error::invalid("d", "dimension must be at least 1"));
        }
        if let Some(bad) = steps.iter().find(|m| m.0 as usize >= Move::count(d)) {
            return Err(Error::invalid("steps", format!("move {} is illegal in d = {d}", bad.0)));
        }
        let mut positions = Vec::with_capacity((steps.len() + 1) * d);
        let mut cur = start.coords.clone();
        positions.extend_from_slice(&cur);
        for m in &steps {
            m.apply(&mut cur);
            positions.extend_from_slice(&cur);
        }
        Ok(Trajectory {
            d,
            start,
            steps,
            positions,
        })
    }

    /// Build from explicit positions; consecutive sites must coincide or be
    /// nearest neighbours.
    pub fn from_positions(sites: &[Site]) -> Result<Self> {
        let first = sites
            .first()
            .ok_or_else(|| Error::invalid("positions", "need at least one site"))?;
        let d = first.dim();
        let mut steps = Vec::with_capacity(sites.len().saturating_sub(1));
        for w in sites.windows(2) {
            if w[1].dim() != d {
                return Err(Error::invalid("positions", "mixed dimensions"));
            }
            let m = Move::between(&w[0].coords, &w[1].coords).ok_or_else(|| {
                Error::invalid("positions", format!("{} -> {} is not a lazy-walk step", w[0], w[1]))
            })?;
            steps.push(m);
        }
        Trajectory::from_steps(first.clone(), steps)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Number of monomers.
    pub fn len(&self) -> usize {
        self.steps.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn start(&self) -> &Site {
        &self.start
    }

    pub fn steps(&self) -> &[Move] {
        &self.steps
    }

    #[inline]
    pub fn position(&self, k: usize) -> &[i32] {
        &self.positions[k * self.d..(k + 1) * self.d]
    }

    pub fn positions(&self) -> impl Iterator<Item = &[i32]> + '_ {
        self.positions.chunks_exact(self.d)
    }

    pub fn site(&self, k: usize) -> Site {
        Site::new(self.position(k).to_vec())
    }

    /// Largest coordinate magnitude along the path.
    pub fn max_abs_coord(&self) -> u64 {
        self.positions.iter().map(|c| c.unsigned_abs() as u64).max().unwrap_or(0)
    }
}

/// Sample an `n`-monomer lazy simple random walk from the origin.
pub fn sample_walk<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Result<Trajectory> {
    if n == 0 {
        return Err(Error::invalid("n", "a polymer has at least one monomer"));
    }
    if d == 0 {
        return Err(Error::invalid("d", "dimension must be at least 1"));
    }
    let steps = (1..n).map(|_| Move::sample(d, rng)).collect();
    Trajectory::from_steps(Site::origin(d), steps)
}
