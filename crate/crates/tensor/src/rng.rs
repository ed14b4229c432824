use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a list of components (root seed, purpose tag, indices) into one
/// stream seed. Order-sensitive, so distinct purposes get distinct streams.
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut h = 0x853C_49E6_748F_EA9Bu64;
    for &p in parts {
        h = splitmix64(h ^ p);
    }
    h
}

/// FNV-1a hash, used to fold names into seed components and to fingerprint
/// strings platform-independently.
pub fn hash_str(s: &str) -> u64 {
    let mut h = 0xCBF2_9CE4_8422_2325u64;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Deterministic generator for the given seed components.
pub fn rng_from(parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(parts))
}
