//! Tiny deterministic generator for toy event data.
//!
//! SplitMix64: identical output on every platform and toolchain, which is
//! what makes produce runs byte-reproducible. Not for anything that needs
//! statistical quality beyond "looks random enough for test cargo".

#[derive(Debug, Clone)]
pub(crate) struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    /// Stream for one (seed, event) pair, so each event gets fresh values.
    pub fn for_event(seed: u64, event: u64) -> Self {
        SplitMix64::new(seed.wrapping_add(event.wrapping_mul(0x9e37_79b9_7f4a_7c15)))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[-1, 1)`.
    pub fn next_signed_unit(&mut self) -> f64 {
        self.next_f64() * 2.0 - 1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_deterministic() {
        let a: Vec<u64> = (0..8)
            .map({
                let mut rng = SplitMix64::new(42);
                move |_| rng.next_u64()
            })
            .collect();
        let b: Vec<u64> = (0..8)
            .map({
                let mut rng = SplitMix64::new(42);
                move |_| rng.next_u64()
            })
            .collect();
        assert_eq!(a, b);
    }

    #[test]
    fn unit_samples_stay_in_range() {
        let mut rng = SplitMix64::new(7);
        for _ in 0..1000 {
            let x = rng.next_f64();
            assert!((0.0..1.0).contains(&x));
            let y = rng.next_signed_unit();
            assert!((-1.0..1.0).contains(&y));
        }
    }

    #[test]
    fn event_streams_differ() {
        let mut e0 = SplitMix64::for_event(1, 0);
        let mut e1 = SplitMix64::for_event(1, 1);
        assert_ne!(e0.next_u64(), e1.next_u64());
    }
}
