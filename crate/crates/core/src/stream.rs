//! Deterministic random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Independent stream for replication `index` under `master_seed`.
///
/// ChaCha is counter based: the stream id selects a disjoint keystream, so
/// replications never overlap and can be evaluated in any order.
pub fn replication_stream(master_seed: u64, index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}
