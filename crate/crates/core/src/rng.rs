use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags keep the trajectory, detector and geometry streams independent
/// even when they share a master seed.
pub(crate) const DOMAIN_TRAJECTORY: u64 = 0x7472_616a_6563_7431;
pub(crate) const DOMAIN_DETECTOR: u64 = 0x6465_7465_6374_6f72;
pub(crate) const DOMAIN_GEOMETRY: u64 = 0x6765_6f6d_6574_7279;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Counter-based generator: the key is derived from `(master, domain)` and the
/// ChaCha stream id is the unit index, so units can run in any order.
pub(crate) fn unit_rng(master: u64, domain: u64, unit: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(master ^ splitmix64(domain)));
    rng.set_stream(unit);
    rng
}

pub(crate) const DOMAIN_PARTICLE: u64 = 0x7061_7274_6963_6c65;

/// Independent 64-bit seed for unit `unit` of `domain`.
pub(crate) fn derive_seed(master: u64, domain: u64, unit: u64) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(domain)) ^ splitmix64(unit))
}
