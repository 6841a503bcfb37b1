//! Counter-based seed fan-out. A master seed plus a stream id yields an
//! independent ChaCha stream, so adding consumers (a new policy, another
//! posterior refresh) never perturbs the draws of existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent stream `id` of the generator seeded by `master`.
pub fn stream(master: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(id);
    rng
}

/// Stream ids used by the experiment loop. Each (kind, index) pair maps to a
/// distinct id; indices stay well below 2^40 in practice.
pub mod stream_id {
    const KIND_SHIFT: u64 = 56;

    pub const GROUND_TRUTH: u64 = 1 << KIND_SHIFT;
    pub const INIT_DATA: u64 = 2 << KIND_SHIFT;

    pub fn posterior(batch: usize) -> u64 {
        (3 << KIND_SHIFT) | batch as u64
    }

    pub fn policy(batch: usize) -> u64 {
        (4 << KIND_SHIFT) | batch as u64
    }

    pub fn execute(batch: usize) -> u64 {
        (5 << KIND_SHIFT) | batch as u64
    }

    pub fn sweep(target: usize) -> u64 {
        (6 << KIND_SHIFT) | target as u64
    }
}
