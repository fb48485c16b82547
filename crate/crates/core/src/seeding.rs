//! Deterministic seed derivation for parallel and repeated randomized work.
//! Every randomized operation derives its own stream from (master seed, tag)
//! so results are independent of scheduling.

/// splitmix64 finalizer over the combined value; decorrelates derived
/// streams even for adjacent tags.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut z = master ^ tag.wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
