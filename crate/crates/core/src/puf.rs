//! Arbiter-PUF simulated with the linear additive-delay model.
//!
//! The delay difference at the arbiter is `Δ = w · Φ(c) + ε`, where `Φ` is the
//! parity transform of the challenge and `ε` is per-evaluation Gaussian noise.
//! The response is 1 iff `Δ > 0`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bits::{Challenge, ResponseBit};
use crate::error::{Error, Result};

pub const DEFAULT_STAGES: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PufInstance {
    n_stages: usize,
    noise_sigma: f64,
    rng_seed: u64,
    /// `n_stages` stage weights followed by the arbiter bias.
    weights: Vec<f64>,
}

/// Parity feature vector of a challenge: `Φ_k = Π_{m=k}^{N-1} (1 - 2 c_m)` for
/// `k < N`, and `Φ_N = 1`.
pub fn parity_features(bits: &[bool]) -> Vec<f64> {
    let n = bits.len();
    let mut phi = vec![1.0; n + 1];
    let mut acc = 1.0;
    for k in (0..n).rev() {
        if bits[k] {
            acc = -acc;
        }
        phi[k] = acc;
    }
    phi
}

impl PufInstance {
    /// Draws stage weights i.i.d. from N(0, 1) using `seed`.
    pub fn new(n_stages: usize, noise_sigma: f64, seed: u64) -> Result<Self> {
        if n_stages < 2 || !n_stages.is_power_of_two() {
            return Err(Error::Config(format!("n_stages must be a power of two >= 2, got {n_stages}")));
        }
        check_sigma(noise_sigma)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = (0..=n_stages).map(|_| StandardNormal.sample(&mut rng)).collect();
        Ok(PufInstance { n_stages, noise_sigma, rng_seed: seed, weights })
    }

    /// Builds an instance from explicit weights (`n_stages + 1` entries, bias last).
    pub fn from_weights(weights: Vec<f64>, noise_sigma: f64) -> Result<Self> {
        let n_stages = weights.len().saturating_sub(1);
        if n_stages < 2 || !n_stages.is_power_of_two() {
            return Err(Error::Config(format!(
                "weight vector must hold a power-of-two stage count plus a bias, got {} entries",
                weights.len()
            )));
        }
        check_sigma(noise_sigma)?;
        Ok(PufInstance { n_stages, noise_sigma, rng_seed: 0, weights })
    }

    pub fn n_stages(&self) -> usize {
        self.n_stages
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_noisy(&self) -> bool {
        self.noise_sigma > 0.0
    }

    pub fn with_noise(&self, noise_sigma: f64) -> Result<Self> {
        check_sigma(noise_sigma)?;
        Ok(PufInstance { noise_sigma, ..self.clone() })
    }

    pub fn noiseless(&self) -> Self {
        PufInstance { noise_sigma: 0.0, ..self.clone() }
    }

    /// Noise-free delay difference `w · Φ(c)`.
    pub fn delay_difference(&self, c: &Challenge) -> Result<f64> {
        c.ensure_len(self.n_stages)?;
        let bits = c.as_slice();
        let mut acc = 1.0;
        let mut delta = self.weights[self.n_stages];
        for k in (0..self.n_stages).rev() {
            if bits[k] {
                acc = -acc;
            }
            delta += self.weights[k] * acc;
        }
        Ok(delta)
    }

    pub fn eval_noiseless(&self, c: &Challenge) -> Result<ResponseBit> {
        Ok(self.delay_difference(c)? > 0.0)
    }

    /// One measurement. Draws from `rng` only when the instance is noisy.
    pub fn eval<R: Rng + ?Sized>(&self, c: &Challenge, rng: &mut R) -> Result<ResponseBit> {
        let mut delta = self.delay_difference(c)?;
        if self.is_noisy() {
            let z: f64 = StandardNormal.sample(rng);
            delta += self.noise_sigma * z;
        }
        Ok(delta > 0.0)
    }

    /// Majority of `votes` independent measurements.
    pub fn eval_majority<R: Rng + ?Sized>(&self, c: &Challenge, votes: usize, rng: &mut R) -> Result<ResponseBit> {
        if votes == 0 || votes % 2 == 0 {
            return Err(Error::EvenVotes(votes));
        }
        let delta = self.delay_difference(c)?;
        if !self.is_noisy() {
            return Ok(delta > 0.0);
        }
        let noise = Normal::new(0.0, self.noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
        let ones = (0..votes).filter(|_| delta + noise.sample(rng) > 0.0).count();
        Ok(ones * 2 > votes)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let puf: PufInstance = toml::from_str(s)?;
        if puf.weights.len() != puf.n_stages + 1 {
            return Err(Error::Parse(format!(
                "expected {} weights for {} stages, found {}",
                puf.n_stages + 1,
                puf.n_stages,
                puf.weights.len()
            )));
        }
        if !puf.n_stages.is_power_of_two() {
            return Err(Error::Parse(format!("n_stages {} is not a power of two", puf.n_stages)));
        }
        check_sigma(puf.noise_sigma)?;
        Ok(puf)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma >= 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("noise_sigma must be a non-negative finite number, got {sigma}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::Bits;
    use proptest::prelude::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn weight_vector_has_n_plus_one_entries() {
        let puf = PufInstance::new(32, 0.0, 7).unwrap();
        assert_eq!(puf.weights().len(), 33);
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(matches!(PufInstance::new(48, 0.0, 1), Err(Error::Config(_))));
        assert!(PufInstance::new(64, -1.0, 1).is_err());
        assert!(PufInstance::from_weights(vec![0.0; 10], 0.0).is_err());
    }

    #[test]
    fn bias_only_always_answers_bias_sign() {
        let mut w = vec![0.0; 65];
        w[64] = 1.0;
        let puf = PufInstance::from_weights(w.clone(), 0.0).unwrap();
        let mut r = rng(1);
        for _ in 0..50 {
            assert!(puf.eval(&Bits::random(64, &mut r), &mut r).unwrap());
        }
        w[64] = -1.0;
        let puf = PufInstance::from_weights(w, 0.0).unwrap();
        assert!(!puf.eval_noiseless(&Bits::random(64, &mut r)).unwrap());
    }

    #[test]
    fn noiseless_eval_is_repeatable() {
        let puf = PufInstance::new(64, 0.0, 42).unwrap();
        let mut r = rng(3);
        let c = Bits::random(64, &mut r);
        let first = puf.eval(&c, &mut r).unwrap();
        assert!((0..100).all(|_| puf.eval(&c, &mut r).unwrap() == first));
        assert_eq!(puf.eval_majority(&c, 3, &mut r).unwrap(), first);
        assert_eq!(puf.eval_majority(&c, 1, &mut r).unwrap(), first);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let puf = PufInstance::new(64, 0.0, 42).unwrap();
        let err = puf.eval_noiseless(&Bits::zeros(32)).unwrap_err();
        assert!(matches!(err, Error::LengthMismatch { expected: 64, actual: 32 }));
    }

    #[test]
    fn even_votes_are_rejected() {
        let puf = PufInstance::new(64, 0.1, 42).unwrap();
        let c = Bits::zeros(64);
        assert!(matches!(puf.eval_majority(&c, 2, &mut rng(0)), Err(Error::EvenVotes(2))));
        assert!(matches!(puf.eval_majority(&c, 0, &mut rng(0)), Err(Error::EvenVotes(0))));
    }

    #[test]
    fn parity_matches_product_definition_exhaustively_for_four_stages() {
        for v in 0..16u64 {
            let c = Bits::from_u64(v, 4);
            let phi = parity_features(c.as_slice());
            for k in 0..4 {
                let expected: f64 = (k..4).map(|m| 1.0 - 2.0 * (c[m] as u8 as f64)).product();
                assert_eq!(phi[k], expected, "challenge {v:04b}, k={k}");
            }
            assert_eq!(phi[4], 1.0);
        }
    }

    #[test]
    fn flipping_the_first_bit_changes_only_the_first_feature() {
        let mut r = rng(9);
        for _ in 0..100 {
            let c = Bits::random(64, &mut r);
            let mut flipped = c.clone();
            flipped.set(0, !c[0]);
            let a = parity_features(c.as_slice());
            let b = parity_features(flipped.as_slice());
            assert_eq!(a[0], -b[0]);
            assert_eq!(a[1..], b[1..]);
        }
    }

    #[test]
    fn independent_instances_agree_about_half_the_time() {
        let a = PufInstance::new(64, 0.0, 42).unwrap();
        let b = PufInstance::new(64, 0.0, 43).unwrap();
        let mut r = rng(5);
        let n = 10_000;
        let agree = (0..n)
            .filter(|_| {
                let c = Bits::random(64, &mut r);
                a.eval_noiseless(&c).unwrap() == b.eval_noiseless(&c).unwrap()
            })
            .count();
        let rate = agree as f64 / n as f64;
        assert!((rate - 0.5).abs() <= 0.05, "agreement {rate}");
    }

    #[test]
    fn noisy_majority_is_more_stable_than_single_shot() {
        let puf = PufInstance::new(64, 0.5, 11).unwrap();
        let mut r = rng(12);
        let challenges: Vec<_> = (0..1000).map(|_| Bits::random(64, &mut r)).collect();
        let disagree = |votes: usize, r: &mut ChaCha8Rng| {
            challenges
                .iter()
                .filter(|c| puf.eval_majority(c, votes, r).unwrap() != puf.eval_majority(c, votes, r).unwrap())
                .count()
        };
        let single = disagree(1, &mut r);
        let voted = disagree(11, &mut r);
        assert!(single > 0);
        assert!(voted < single, "single {single}, voted {voted}");
    }

    #[test]
    fn toml_round_trip() {
        let puf = PufInstance::new(16, 0.125, 99).unwrap();
        let text = puf.to_toml().unwrap();
        assert!(text.contains("n_stages = 16"));
        assert_eq!(PufInstance::from_toml(&text).unwrap(), puf);
        let broken = text.replace("n_stages = 16", "n_stages = 32");
        assert!(PufInstance::from_toml(&broken).is_err());
    }

    proptest! {
        #[test]
        fn features_are_signs(bits in proptest::collection::vec(any::<bool>(), 64)) {
            prop_assert!(parity_features(&bits).iter().all(|&f| f == 1.0 || f == -1.0));
        }

        #[test]
        fn negated_weights_flip_every_response(seed in any::<u64>(), bits in proptest::collection::vec(any::<bool>(), 64)) {
            let puf = PufInstance::new(64, 0.0, seed).unwrap();
            let neg = PufInstance::from_weights(puf.weights().iter().map(|w| -w).collect(), 0.0).unwrap();
            let c = Bits::new(bits);
            let d = puf.delay_difference(&c).unwrap();
            prop_assume!(d != 0.0);
            prop_assert_ne!(puf.eval_noiseless(&c).unwrap(), neg.eval_noiseless(&c).unwrap());
        }
    }
}
