use serde::{Deserialize, Serialize};
use std::fmt;

/// A point of `Z^d`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Site {
    pub coords: Vec<i32>,
}

impl Site {
    pub fn new(coords: Vec<i32>) -> Self {
        Site { coords }
    }

    pub fn origin(d: usize) -> Self {
        Site { coords: vec![0; d] }
    }

    /// `sign · e_axis`.
    pub fn unit(d: usize, axis: usize, sign: i32) -> Self {
        let mut coords = vec![0; d];
        coords[axis] = sign;
        Site { coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn norm_sq(&self) -> i64 {
        self.coords.iter().map(|&c| c as i64 * c as i64).sum()
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Offset encoding of a site into one machine word.
///
/// Each coordinate is shifted by `offset` and stored in `bits` bits. A codec
/// built for coordinates bounded by `max_abs` only exists when `d * bits <= 64`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyCodec {
    d: usize,
    bits: u32,
    offset: i64,
}

impl KeyCodec {
    pub fn for_bound(d: usize, max_abs: u64) -> Option<Self> {
        let span = 2 * max_abs + 1;
        let bits = 64 - span.leading_zeros();
        if d == 0 || d as u32 * bits > 64 {
            return None;
        }
        Some(KeyCodec {
            d,
            bits,
            offset: max_abs as i64,
        })
    }

    #[inline]
    pub fn encode(&self, coords: &[i32]) -> u64 {
        let mut key = 0u64;
        for (i, &c) in coords.iter().enumerate() {
            key |= ((c as i64 + self.offset) as u64) << (i as u32 * self.bits);
        }
        key
    }

    pub fn decode(&self, key: u64) -> Site {
        let mask = if self.bits == 64 { u64::MAX } else { (1u64 << self.bits) - 1 };
        let coords = (0..self.d)
            .map(|i| (((key >> (i as u32 * self.bits)) & mask) as i64 - self.offset) as i32)
            .collect();
        Site { coords }
    }
}
