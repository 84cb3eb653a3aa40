use rustc_hash::FxHashMap;

use super::site::{KeyCodec, Site};
use super::walk::Trajectory;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
enum Store {
    Packed { codec: KeyCodec, map: FxHashMap<u64, u32> },
    Wide(FxHashMap<Box<[i32]>, u32>),
}

/// Sparse map `z -> l_n(z)` of visit counts.
#[derive(Debug, Clone)]
pub struct LocalTimeField {
    d: usize,
    store: Store,
    total: u64,
}

impl LocalTimeField {
    /// Empty field able to hold sites with coordinates bounded by `max_abs`.
    pub fn with_bound(d: usize, max_abs: u64) -> Self {
        let store = match KeyCodec::for_bound(d, max_abs) {
            Some(codec) => Store::Packed {
                codec,
                map: FxHashMap::default(),
            },
            None => Store::Wide(FxHashMap::default()),
        };
        LocalTimeField { d, store, total: 0 }
    }

    pub fn from_counts<I: IntoIterator<Item = (Site, u32)>>(d: usize, counts: I) -> Result<Self> {
        let counts: Vec<(Site, u32)> = counts.into_iter().collect();
        let bound = counts
            .iter()
            .flat_map(|(s, _)| s.coords.iter().map(|c| c.unsigned_abs() as u64))
            .max()
            .unwrap_or(0);
        let mut field = LocalTimeField::with_bound(d, bound);
        for (site, c) in counts {
            if site.dim() != d {
                return Err(Error::invalid("counts", "site of wrong dimension"));
            }
            if c == 0 {
                return Err(Error::invalid("counts", "local times must be positive"));
            }
            field.add(&site.coords, c);
        }
        Ok(field)
    }

    #[inline]
    pub fn add(&mut self, coords: &[i32], count: u32) {
        self.total += count as u64;
        match &mut self.store {
            Store::Packed { codec, map } => *map.entry(codec.encode(coords)).or_insert(0) += count,
            Store::Wide(map) => *map.entry(coords.into()).or_insert(0) += count,
        }
    }

    /// Decrement the count at `coords`, dropping the key when it reaches 0.
    /// Returns the count before removal.
    #[inline]
    pub fn remove_one(&mut self, coords: &[i32]) -> u32 {
        self.total -= 1;
        fn dec<K: std::hash::Hash + Eq>(map: &mut FxHashMap<K, u32>, key: K) -> u32 {
            let slot = map.get_mut(&key).expect("removing an unvisited site");
            let before = *slot;
            if before == 1 {
                map.remove(&key);
            } else {
                *slot -= 1;
            }
            before
        }
        match &mut self.store {
            Store::Packed { codec, map } => {
                let key = codec.encode(coords);
                dec(map, key)
            }
            Store::Wide(map) => dec(map, Box::from(coords)),
        }
    }

    #[inline]
    pub fn get_coords(&self, coords: &[i32]) -> u32 {
        match &self.store {
            Store::Packed { codec, map } => map.get(&codec.encode(coords)).copied().unwrap_or(0),
            Store::Wide(map) => map.get(coords).copied().unwrap_or(0),
        }
    }

    pub fn get(&self, site: &Site) -> u32 {
        self.get_coords(&site.coords)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// `n = Σ_z l_n(z)`.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn counts(&self) -> Box<dyn Iterator<Item = u32> + '_> {
        match &self.store {
            Store::Packed { map, .. } => Box::new(map.values().copied()),
            Store::Wide(map) => Box::new(map.values().copied()),
        }
    }

    pub fn iter(&self) -> Box<dyn Iterator<Item = (Site, u32)> + '_> {
        match &self.store {
            Store::Packed { codec, map } => Box::new(map.iter().map(move |(&k, &c)| (codec.decode(k), c))),
            Store::Wide(map) => Box::new(map.iter().map(|(k, &c)| (Site::new(k.to_vec()), c))),
        }
    }

    /// `|R_n|`, the number of distinct visited sites.
    pub fn range_size(&self) -> usize {
        match &self.store {
            Store::Packed { map, .. } => map.len(),
            Store::Wide(map) => map.len(),
        }
    }

    pub fn max_local_time(&self) -> u32 {
        self.counts().max().unwrap_or(0)
    }

    /// `‖l_n‖_q^q = Σ_z l_n(z)^q`. `q = 1` is allowed and returns `n`.
    pub fn q_norm(&self, q: f64) -> Result<f64> {
        if !(q >= 1.0) {
            return Err(Error::invalid("q", format!("q-norm needs q >= 1, got {q}")));
        }
        if q == 2.0 {
            return Ok(self.counts().map(|c| (c as f64) * (c as f64)).sum());
        }
        Ok(self.counts().map(|c| (c as f64).powf(q)).sum())
    }

    /// Size and occupation of the level set `{z : x < l_n(z) <= y}`.
    pub fn level_counts(&self, x: f64, y: f64) -> Result<(usize, u64)> {
        if !(x >= 0.0 && x < y) {
            return Err(Error::invalid("level", format!("need 0 <= x < y, got ({x}, {y})")));
        }
        Ok(self
            .counts()
            .filter(|&c| (c as f64) > x && (c as f64) <= y)
            .fold((0, 0), |(n, m), c| (n + 1, m + c as u64)))
    }

    /// `h[k] = |{z : l_n(z) = k}|` for `k = 0..=max`.
    pub fn level_histogram(&self) -> Vec<u64> {
        let mut h = vec![0u64; self.max_local_time() as usize + 1];
        for c in self.counts() {
            h[c as usize] += 1;
        }
        h
    }
}

/// Visit counts of the trajectory's `n` monomer positions.
pub fn local_times(traj: &Trajectory) -> LocalTimeField {
    let mut field = LocalTimeField::with_bound(traj.dim(), traj.max_abs_coord());
    for p in traj.positions() {
        field.add(p, 1);
    }
    field
}
