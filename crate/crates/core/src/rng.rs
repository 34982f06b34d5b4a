//! Seed splitting.
//!
//! Every random draw in a run derives from the single user seed. Distinct
//! consumers get distinct ChaCha streams of that seed, so changing the thread
//! count never reseeds draws that do not depend on it.
//!
//! | stream            | consumer                                   |
//! |-------------------|--------------------------------------------|
//! | 0                 | dataset ordering (random shuffling)        |
//! | 1                 | serial SGD sampler                         |
//! | 2                 | conflict-degree pair sampling              |
//! | 1000 + thread id  | per-worker sample sequences                |

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const ORDERING_STREAM: u64 = 0;
pub const SGD_STREAM: u64 = 1;
pub const CONFLICT_STREAM: u64 = 2;
const WORKER_STREAM_BASE: u64 = 1000;

pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn worker_stream(seed: u64, thread_id: usize) -> Rng {
    stream(seed, WORKER_STREAM_BASE + thread_id as u64)
}
