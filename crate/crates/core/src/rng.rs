//! The one seedable generator used across the crate (ChaCha8).
//!
//! Independent streams for evaluation or parallel work are derived with
//! [`stream`], which keeps the seed and selects a different ChaCha stream id.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nd::Tensor;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Generator for `seed` on stream `id`; stream 0 is the same as [`seeded`].
pub fn stream(seed: u64, id: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Standard-normal `[rows, cols]` matrix.
pub fn normal_matrix(rng: &mut Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::from_fn(&[rows, cols], |_| rng.sample::<f64, _>(StandardNormal))
}

/// Serializable snapshot of a generator's position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    /// 32-byte key, hex encoded.
    pub seed: String,
    pub stream: u64,
    /// 128-bit word position as a decimal string.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &Rng) -> Self {
        let seed = rng.get_seed().iter().map(|b| format!("{b:02x}")).collect();
        Self {
            seed,
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<Rng> {
        if self.seed.len() != 64 {
            return Err(Error::Checkpoint(format!("rng seed must be 64 hex chars, got {}", self.seed.len())));
        }
        let mut key = [0u8; 32];
        for (i, b) in key.iter_mut().enumerate() {
            *b = u8::from_str_radix(&self.seed[2 * i..2 * i + 2], 16)
                .map_err(|e| Error::Checkpoint(format!("rng seed: {e}")))?;
        }
        let word_pos: u128 = self
            .word_pos
            .parse()
            .map_err(|e| Error::Checkpoint(format!("rng word_pos: {e}")))?;
        let mut rng = Rng::from_seed(key);
        rng.set_stream(self.stream);
        rng.set_word_pos(word_pos);
        Ok(rng)
    }
}
