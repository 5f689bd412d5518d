use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ChainRng = ChaCha8Rng;

/// RNG for `(seed, stream)`. Distinct streams of one seed are independent
/// ChaCha keystreams, so chain `k` of a run never overlaps chain `j`.
pub fn seeded(seed: u64, stream: u64) -> ChainRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
