//! Counter-based random streams keyed by (experiment seed, replica index).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator type every sampler consumes.
pub type Stream = ChaCha8Rng;

/// Independent stream for one replica. Streams depend only on (seed, replica), so
/// results do not depend on how replicas are scheduled across workers.
pub fn replica_stream(seed: u64, replica: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}
