//! Wiener paths on dyadic grids.
//!
//! Paths are built top-down by Brownian-bridge midpoint insertion, one
//! random stream per dyadic level. Refining a path therefore reproduces the
//! path sampled directly at the finer level, bit for bit.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::mix_seed;

pub const MAX_LEVEL: u32 = 24;

const MAGIC: &[u8; 8] = b"SDEWPATH";

/// `w` at the times `j T / 2^level`, stored point-major: `values[j * d1 + k] = w^k_{t_j}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WienerPath {
    d1: usize,
    horizon: f64,
    level: u32,
    seed: u64,
    index: u64,
    values: Vec<f64>,
}

fn level_rng(seed: u64, index: u64, level: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, level as u64));
    rng.set_stream(index);
    rng
}

impl WienerPath {
    /// Path number `index` of the ensemble seeded by `seed`.
    pub fn sample(d1: usize, horizon: f64, level: u32, seed: u64, index: u64) -> Result<Self> {
        if d1 == 0 || !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidArgument("Wiener path needs d1 ≥ 1 and a positive horizon".into()));
        }
        if level > MAX_LEVEL {
            return Err(Error::InvalidArgument(format!("level {level} above {MAX_LEVEL}")));
        }
        let mut rng = level_rng(seed, index, 0);
        let mut values = vec![0.0; 2 * d1];
        for k in 0..d1 {
            let z: f64 = StandardNormal.sample(&mut rng);
            values[d1 + k] = horizon.sqrt() * z;
        }
        let mut path = Self { d1, horizon, level: 0, seed, index, values };
        for _ in 0..level {
            path.refine_in_place();
        }
        Ok(path)
    }

    fn refine_in_place(&mut self) {
        let next = self.level + 1;
        let mut rng = level_rng(self.seed, self.index, next);
        let n = self.steps();
        let d1 = self.d1;
        // midpoint of an interval of length 2 dt_next has conditional variance dt_next / 2
        let sd = (0.5 * self.horizon / (1u64 << next) as f64).sqrt();
        let mut values = vec![0.0; (2 * n + 1) * d1];
        for j in 0..n {
            for k in 0..d1 {
                let (a, b) = (self.values[j * d1 + k], self.values[(j + 1) * d1 + k]);
                let z: f64 = StandardNormal.sample(&mut rng);
                values[2 * j * d1 + k] = a;
                values[(2 * j + 1) * d1 + k] = 0.5 * (a + b) + sd * z;
            }
        }
        values[2 * n * d1..].copy_from_slice(&self.values[n * d1..]);
        self.values = values;
        self.level = next;
    }

    /// The same path one level finer; coarse-grid values are unchanged.
    pub fn refined(&self) -> Result<Self> {
        if self.level >= MAX_LEVEL {
            return Err(Error::InvalidArgument(format!("cannot refine beyond level {MAX_LEVEL}")));
        }
        let mut p = self.clone();
        p.refine_in_place();
        Ok(p)
    }

    /// The restriction to a coarser level.
    pub fn coarsened(&self, level: u32) -> Result<Self> {
        if level > self.level {
            return Err(Error::InvalidArgument(format!("level {level} is finer than {}", self.level)));
        }
        let stride = 1usize << (self.level - level);
        let values = (0..=self.steps() / stride)
            .flat_map(|j| self.values[j * stride * self.d1..(j * stride + 1) * self.d1].iter().copied())
            .collect();
        Ok(Self { level, values, ..self.clone() })
    }

    pub fn noise_dim(&self) -> usize {
        self.d1
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    pub fn level(&self) -> u32 {
        self.level
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn index(&self) -> u64 {
        self.index
    }
    pub fn steps(&self) -> usize {
        1usize << self.level
    }
    pub fn dt(&self) -> f64 {
        self.horizon / self.steps() as f64
    }
    pub fn time(&self, j: usize) -> f64 {
        self.horizon * j as f64 / self.steps() as f64
    }

    /// `w_{t_j}`.
    pub fn at(&self, j: usize) -> &[f64] {
        &self.values[j * self.d1..(j + 1) * self.d1]
    }

    /// `w^k_{t_{j+1}} − w^k_{t_j}`.
    pub fn increment(&self, j: usize, k: usize) -> f64 {
        self.values[(j + 1) * self.d1 + k] - self.values[j * self.d1 + k]
    }

    pub fn increments_into(&self, j: usize, out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate().take(self.d1) {
            *o = self.increment(j, k);
        }
    }

    /// Binary layout: magic, `d1`, `level`, `seed`, `index` as little-endian
    /// `u64`, `horizon` as `f64`, then the `(2^level + 1) d1` path values.
    ///
    /// Values rather than increments are stored so that a re-read path is
    /// bit-identical, including its partial sums.
    pub fn write_binary(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        for v in [self.d1 as u64, self.level as u64, self.seed, self.index] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.horizon.to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a Wiener path file".into()));
        }
        let mut word = [0u8; 8];
        let mut next = || -> Result<u64> {
            r.read_exact(&mut word)?;
            Ok(u64::from_le_bytes(word))
        };
        let (d1, level, seed, index) = (next()? as usize, next()?, next()?, next()?);
        let horizon = f64::from_bits(next()?);
        if d1 == 0 || d1 > 1 << 16 || level > MAX_LEVEL as u64 || !(horizon > 0.0) {
            return Err(Error::Format(format!("implausible header d1 = {d1}, level = {level}")));
        }
        let len = ((1usize << level) + 1) * d1;
        let mut bytes = vec![0u8; len * 8];
        r.read_exact(&mut bytes)?;
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes", rest.len())));
        }
        let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Ok(Self { d1, horizon, level: level as u32, seed, index, values })
    }
}

/// Path `0` of the ensemble seeded by `seed`.
pub fn sample_wiener_path(d1: usize, horizon: f64, level: u32, seed: u64) -> Result<WienerPath> {
    WienerPath::sample(d1, horizon, level, seed, 0)
}

pub fn refine_path(path: &WienerPath) -> Result<WienerPath> {
    path.refined()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refinement_matches_direct_sampling() {
        let coarse = WienerPath::sample(2, 1.0, 4, 11, 3).unwrap();
        let fine = WienerPath::sample(2, 1.0, 6, 11, 3).unwrap();
        assert_eq!(coarse.refined().unwrap().refined().unwrap(), fine);
        assert_eq!(fine.coarsened(4).unwrap(), coarse);
    }

    #[test]
    fn binary_round_trip() {
        let p = WienerPath::sample(3, 0.5, 5, 1, 0).unwrap();
        let mut buf = Vec::new();
        p.write_binary(&mut buf).unwrap();
        assert_eq!(WienerPath::read_binary(&buf[..]).unwrap(), p);
        assert!(WienerPath::read_binary(&buf[..buf.len() - 8]).is_err());
    }
}
