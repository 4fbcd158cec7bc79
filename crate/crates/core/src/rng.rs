//! Counter-based random streams.
//!
//! Every random draw in an experiment comes from a ChaCha8 stream selected by
//! (master seed, purpose, index): the key is derived from the master seed and
//! the purpose tag, and the 64-bit ChaCha stream number is the sample index.
//! Sample i therefore sees the same numbers no matter which worker runs it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent uses of randomness within one experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    StartPoint = 1,
    MeasureEstimate = 2,
    Test = 3,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream(master_seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let key = splitmix(master_seed ^ splitmix(purpose as u64));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}
