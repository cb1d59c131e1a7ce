//! Counter-mode pseudorandomness.
//!
//! Every random draw in the crate is a pure function of `(key, counter)`.
//! Ensembles derive one key per replication from the master seed, samplers
//! index counters by site/mode, so the output bytes never depend on worker
//! count or scheduling order.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const KEY_TWEAK: u64 = 0x2545_F491_4F6C_DD1D;

/// SplitMix64 finalizer: a bijective avalanche mix on `u64`.
#[inline]
pub fn mix64(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^= x >> 31;
    x
}

/// Keyed counter word. The key enters twice (once mixed, once raw) so streams
/// for different keys are not translates of one another.
#[inline]
pub fn keyed_u64(key: u64, ctr: u64) -> u64 {
    let k = mix64(key ^ KEY_TWEAK);
    mix64(k.wrapping_add(ctr.wrapping_mul(GOLDEN)) ^ key)
}

/// Derive a sub-key, e.g. one key per replication or per hierarchy level.
/// `domain` separates unrelated uses of the same `(master, index)` pair.
#[inline]
pub fn derive_key(master: u64, domain: u64, index: u64) -> u64 {
    keyed_u64(master ^ mix64(domain), index)
}

/// Uniform in the half-open interval `(0, 1]` (safe as a `ln` argument).
#[inline]
pub fn keyed_uniform(key: u64, ctr: u64) -> f64 {
    (((keyed_u64(key, ctr) >> 11) + 1) as f64) * (1.0 / (1u64 << 53) as f64)
}

/// Uniform in `[0, 1)`.
#[inline]
pub fn keyed_uniform_co(key: u64, ctr: u64) -> f64 {
    ((keyed_u64(key, ctr) >> 11) as f64) * (1.0 / (1u64 << 53) as f64)
}

/// One standard normal by Box-Muller from counters `(2 ctr, 2 ctr + 1)`.
#[inline]
pub fn keyed_normal(key: u64, ctr: u64) -> f64 {
    let u1 = keyed_uniform(key, 2 * ctr);
    let u2 = keyed_uniform_co(key, 2 * ctr + 1);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Both Box-Muller outputs of one uniform pair; use when filling arrays
/// pairwise to halve the transcendental cost.
#[inline]
pub fn keyed_normal_pair(key: u64, ctr: u64) -> (f64, f64) {
    let u1 = keyed_uniform(key, 2 * ctr);
    let u2 = keyed_uniform_co(key, 2 * ctr + 1);
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
    (r * c, r * s)
}

/// Fill a slice with standard normals indexed from `ctr0`.
pub fn fill_normals(key: u64, ctr0: u64, out: &mut [f64]) {
    let mut i = 0;
    while i + 1 < out.len() {
        let (a, b) = keyed_normal_pair(key, ctr0 + (i as u64) / 2);
        out[i] = a;
        out[i + 1] = b;
        i += 2;
    }
    if i < out.len() {
        out[i] = keyed_normal(key, ctr0 + (i as u64) / 2);
    }
}

/// A sequential stream view over the keyed counter, for consumers that do not
/// need site-indexed access (bootstrap resampling, path simulation).
#[derive(Clone, Copy, Debug)]
pub struct StreamRng {
    key: u64,
    ctr: u64,
    spare: Option<f64>,
}

impl StreamRng {
    pub fn new(key: u64) -> Self {
        StreamRng {
            key,
            ctr: 0,
            spare: None,
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let v = keyed_u64(self.key, self.ctr);
        self.ctr += 1;
        v
    }

    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (((self.next_u64() >> 11) + 1) as f64) * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }

    /// Uniform index in `0..n`.
    #[inline]
    pub fn index(&mut self, n: usize) -> usize {
        // Multiply-shift; bias is O(n / 2^64), irrelevant at our scales.
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_key_sensitive() {
        assert_eq!(keyed_u64(7, 42), keyed_u64(7, 42));
        assert_ne!(keyed_u64(7, 42), keyed_u64(8, 42));
        assert_ne!(keyed_u64(7, 42), keyed_u64(7, 43));
    }

    #[test]
    fn normals_have_unit_moments() {
        let n = 200_000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for i in 0..n {
            let z = keyed_normal(0xDEAD_BEEF, i);
            sum += z;
            sq += z * z;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 6.0 / (n as f64).sqrt(), "var {var}");
    }

    #[test]
    fn pair_matches_scalar_path() {
        let (a, b) = keyed_normal_pair(3, 11);
        assert_eq!(a, keyed_normal(3, 11));
        assert!(b.is_finite());
    }

    #[test]
    fn fill_matches_indexed() {
        let mut buf = vec![0.0; 7];
        fill_normals(5, 0, &mut buf);
        assert_eq!(buf[0], keyed_normal(5, 0));
        assert_eq!(buf[6], keyed_normal(5, 3));
    }

    #[test]
    fn stream_uniform_in_range() {
        let mut rng = StreamRng::new(1);
        for _ in 0..1000 {
            let u = rng.uniform();
            assert!(u > 0.0 && u <= 1.0);
            let i = rng.index(10);
            assert!(i < 10);
        }
    }
}
