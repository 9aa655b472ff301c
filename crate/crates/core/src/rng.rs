use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for task `stream` under root `seed`.
///
/// Every Monte-Carlo task (a construction sample, a codec trial) gets its own
/// ChaCha stream, so task `t` is reproducible in isolation.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draw an index from a probability vector that sums to one.
pub fn sample_index<R: rand::Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let r: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if r < acc {
                return i;
            }
        }
    }
    last
}
