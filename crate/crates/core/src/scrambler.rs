//! Verifier- and challenge-specific challenge scrambling.
//!
//! A prover answering verifier `j` with challenge `C` runs two phases:
//!
//! 1. **Pattern selection.** The PUF is queried `K = log2 N` times on mutated
//!    challenges built from `C` and the verifier ID. Each response bit is
//!    shifted into a `K`-bit register, which then seeds the LFSR. Clocking the
//!    LFSR `N - 1` times yields the index map `[0, H_1, .., H_{N-1}]`.
//! 2. **Response.** `SC[h] = C[H_h]` is fed to the PUF and the result is sent
//!    back.
//!
//! Because the seed comes from the device's own PUF, the map is specific to
//! the prover as well as to the verifier and the challenge.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bits::{Bits, Challenge, MutatedChallenge, NodeId, Response, ResponseBit, ScrambledChallenge};
use crate::error::{Error, Result};
use crate::lfsr::{self, Lfsr};
use crate::puf::PufInstance;

pub const DEFAULT_SEED_VOTES: usize = 11;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScramblerConfig {
    /// Feedback polynomial; empty selects the shipped primitive polynomial
    /// for `K = log2 N`.
    pub taps: Vec<u32>,
    /// ID bits kept in the first mutated challenge when the ID is at least as
    /// wide as the challenge. `None` means `N / 2`.
    pub id_fraction: Option<usize>,
    /// Votes per seed-derivation query when the PUF is noisy.
    pub seed_votes: usize,
    /// Votes per response query when the PUF is noisy.
    pub response_votes: usize,
    /// Response bits per authentication.
    pub response_bits: usize,
}

impl Default for ScramblerConfig {
    fn default() -> Self {
        ScramblerConfig {
            taps: Vec::new(),
            id_fraction: None,
            seed_votes: DEFAULT_SEED_VOTES,
            response_votes: 1,
            response_bits: 1,
        }
    }
}

/// Index map applied to the challenge: `SC[h] = C[map[h]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScramblingPattern {
    seed: u32,
    map: Vec<usize>,
}

impl ScramblingPattern {
    pub fn seed(&self) -> u32 {
        self.seed
    }

    pub fn map(&self) -> &[usize] {
        &self.map
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn is_permutation(&self) -> bool {
        let mut seen = vec![false; self.map.len()];
        self.map.iter().all(|&i| i < seen.len() && !std::mem::replace(&mut seen[i], true))
    }

    pub fn apply(&self, c: &Challenge) -> Result<ScrambledChallenge> {
        c.ensure_len(self.map.len())?;
        Ok(Bits::new(self.map.iter().map(|&i| c[i]).collect()))
    }
}

/// Operation counts of one authentication response.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    /// Distinct PUF queries (a majority-voted query counts once).
    pub puf_queries: usize,
    /// Raw PUF measurements including repeated votes.
    pub puf_measurements: usize,
    pub lfsr_clocks: usize,
}

/// The scrambling pipeline for a fixed challenge width.
#[derive(Debug, Clone)]
pub struct Scrambler {
    n: usize,
    k: u32,
    lfsr: Lfsr,
    id_fraction: usize,
    seed_votes: usize,
    response_votes: usize,
    response_bits: usize,
}

impl Scrambler {
    pub fn new(n: usize, cfg: &ScramblerConfig) -> Result<Self> {
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::Config(format!("challenge width must be a power of two >= 4, got {n}")));
        }
        let k = n.trailing_zeros();
        let lfsr = if cfg.taps.is_empty() { Lfsr::with_default_taps(k)? } else { Lfsr::new(k, &cfg.taps)? };
        let id_fraction = cfg.id_fraction.unwrap_or(n / 2);
        if id_fraction == 0 || id_fraction >= n {
            return Err(Error::Config(format!("id_fraction must be in 1..{n}, got {id_fraction}")));
        }
        for (name, v) in [("seed_votes", cfg.seed_votes), ("response_votes", cfg.response_votes)] {
            if v % 2 == 0 {
                return Err(Error::Config(format!("{name} must be odd, got {v}")));
            }
        }
        if cfg.response_bits == 0 || cfg.response_bits > n {
            return Err(Error::Config(format!("response_bits must be in 1..={n}, got {}", cfg.response_bits)));
        }
        Ok(Scrambler {
            n,
            k,
            lfsr,
            id_fraction,
            seed_votes: cfg.seed_votes,
            response_votes: cfg.response_votes,
            response_bits: cfg.response_bits,
        })
    }

    pub fn challenge_bits(&self) -> usize {
        self.n
    }

    pub fn seed_bits(&self) -> u32 {
        self.k
    }

    pub fn response_bits(&self) -> usize {
        self.response_bits
    }

    pub fn with_response_bits(&self, response_bits: usize) -> Result<Self> {
        if response_bits == 0 || response_bits > self.n {
            return Err(Error::Config(format!("response_bits must be in 1..={}, got {response_bits}", self.n)));
        }
        Ok(Scrambler { response_bits, ..self.clone() })
    }

    /// First mutated challenge. With an ID narrower than the challenge this is
    /// `C[0 .. N-S] || ID`; otherwise the `F` low ID bits followed by
    /// `C[0 .. N-F]`.
    pub fn initial_mutated_challenge(&self, c: &Challenge, id: &NodeId) -> Result<MutatedChallenge> {
        c.ensure_len(self.n)?;
        let s = id.width();
        if s < self.n {
            Ok(c.slice(0..self.n - s).concat(id.bits()))
        } else {
            let f = self.id_fraction;
            Ok(id.low_bits(f).concat(&c.slice(0..self.n - f)))
        }
    }

    fn query<R: Rng + ?Sized>(
        &self,
        puf: &PufInstance,
        c: &Challenge,
        votes: usize,
        rng: &mut R,
        counts: &mut OpCounts,
    ) -> Result<ResponseBit> {
        counts.puf_queries += 1;
        if puf.is_noisy() && votes > 1 {
            counts.puf_measurements += votes;
            puf.eval_majority(c, votes, rng)
        } else {
            counts.puf_measurements += 1;
            puf.eval(c, rng)
        }
    }

    fn derive_seed_counted<R: Rng + ?Sized>(
        &self,
        puf: &PufInstance,
        c: &Challenge,
        id: &NodeId,
        rng: &mut R,
        counts: &mut OpCounts,
    ) -> Result<u32> {
        self.check_puf(puf)?;
        let mask = (1u32 << self.k) - 1;
        let mut mc = self.initial_mutated_challenge(c, id)?;
        let mut register = 0u32;
        for _ in 0..self.k {
            let r = self.query(puf, &mc, self.seed_votes, rng, counts)?;
            register = ((register << 1) | r as u32) & mask;
            mc = mc.rotate_right(1);
        }
        Ok(register)
    }

    /// K-bit LFSR seed for `(C, ID)`, built from the prover's own PUF.
    pub fn derive_seed<R: Rng + ?Sized>(&self, puf: &PufInstance, c: &Challenge, id: &NodeId, rng: &mut R) -> Result<u32> {
        self.derive_seed_counted(puf, c, id, rng, &mut OpCounts::default())
    }

    fn make_pattern_counted(&self, seed: u32, counts: &mut OpCounts) -> Result<ScramblingPattern> {
        let mut lfsr = self.lfsr.clone().seeded(seed)?;
        let mut map = Vec::with_capacity(self.n);
        map.push(0);
        for _ in 1..self.n {
            map.push(lfsr.clock() as usize);
            counts.lfsr_clocks += 1;
        }
        Ok(ScramblingPattern { seed, map })
    }

    /// `[0, H_1, .., H_{N-1}]` where `H_h` is the LFSR state after `h` clocks.
    pub fn make_pattern(&self, seed: u32) -> Result<ScramblingPattern> {
        self.make_pattern_counted(seed, &mut OpCounts::default())
    }

    /// Pattern-selection phase followed by the reordering.
    pub fn scramble<R: Rng + ?Sized>(
        &self,
        puf: &PufInstance,
        c: &Challenge,
        id: &NodeId,
        rng: &mut R,
    ) -> Result<ScrambledChallenge> {
        let seed = self.derive_seed(puf, c, id, rng)?;
        self.make_pattern(seed)?.apply(c)
    }

    /// Response to challenge `c` from the verifier `id`, with operation counts.
    ///
    /// Bit `r` of the response is the PUF evaluated on `SC` rotated left by `r`.
    pub fn respond_traced<R: Rng + ?Sized>(
        &self,
        puf: &PufInstance,
        c: &Challenge,
        id: &NodeId,
        rng: &mut R,
    ) -> Result<(Response, OpCounts)> {
        let mut counts = OpCounts::default();
        let seed = self.derive_seed_counted(puf, c, id, rng, &mut counts)?;
        let sc = self.make_pattern_counted(seed, &mut counts)?.apply(c)?;
        let bits = self.response_from(puf, &sc, rng, &mut counts)?;
        Ok((bits, counts))
    }

    pub fn respond_bits<R: Rng + ?Sized>(&self, puf: &PufInstance, c: &Challenge, id: &NodeId, rng: &mut R) -> Result<Response> {
        self.respond_traced(puf, c, id, rng).map(|(r, _)| r)
    }

    /// Single-bit response (the first response bit).
    pub fn respond<R: Rng + ?Sized>(&self, puf: &PufInstance, c: &Challenge, id: &NodeId, rng: &mut R) -> Result<ResponseBit> {
        let seed = self.derive_seed(puf, c, id, rng)?;
        let sc = self.make_pattern(seed)?.apply(c)?;
        self.query(puf, &sc, self.response_votes, rng, &mut OpCounts::default())
    }

    /// Response with scrambling bypassed: the PUF sees `C` itself.
    pub fn respond_unscrambled<R: Rng + ?Sized>(&self, puf: &PufInstance, c: &Challenge, rng: &mut R) -> Result<Response> {
        self.check_puf(puf)?;
        c.ensure_len(self.n)?;
        self.response_from(puf, c, rng, &mut OpCounts::default())
    }

    fn response_from<R: Rng + ?Sized>(
        &self,
        puf: &PufInstance,
        base: &Challenge,
        rng: &mut R,
        counts: &mut OpCounts,
    ) -> Result<Response> {
        (0..self.response_bits)
            .map(|r| self.query(puf, &base.rotate_left(r), self.response_votes, rng, counts))
            .collect::<Result<Vec<_>>>()
            .map(Bits::new)
    }

    fn check_puf(&self, puf: &PufInstance) -> Result<()> {
        if puf.n_stages() != self.n {
            return Err(Error::LengthMismatch { expected: self.n, actual: puf.n_stages() });
        }
        Ok(())
    }

    /// Fraction of `challenges` on which two independent runs of the full
    /// response pipeline disagree.
    pub fn repeat_disagreement<R: Rng + ?Sized>(
        &self,
        puf: &PufInstance,
        challenges: &[Challenge],
        id: &NodeId,
        rng: &mut R,
    ) -> Result<f64> {
        if challenges.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut differ = 0usize;
        for c in challenges {
            let a = self.respond_bits(puf, c, id, rng)?;
            let b = self.respond_bits(puf, c, id, rng)?;
            differ += (a != b) as usize;
        }
        Ok(differ as f64 / challenges.len() as f64)
    }
}

/// Finds the noise level at which two repeated runs of the full pipeline
/// disagree on `target` of the challenges.
///
/// Bisection over `sigma` with common random numbers: every probe reuses the
/// same challenge set and the same noise stream.
pub fn calibrate_noise(
    puf: &PufInstance,
    scrambler: &Scrambler,
    id: &NodeId,
    target: f64,
    n_challenges: usize,
    seed: u64,
) -> Result<f64> {
    if !(0.0..0.5).contains(&target) {
        return Err(Error::Config(format!("target disagreement must be in [0, 0.5), got {target}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let challenges: Vec<Challenge> = (0..n_challenges).map(|_| Bits::random(puf.n_stages(), &mut rng)).collect();
    let noise_seed: u64 = rng.random();
    let rate_at = |sigma: f64| -> Result<f64> {
        let noisy = puf.with_noise(sigma)?;
        scrambler.repeat_disagreement(&noisy, &challenges, id, &mut ChaCha8Rng::seed_from_u64(noise_seed))
    };
    let scale = puf.weights().iter().map(|w| w * w).sum::<f64>().sqrt();
    let (mut lo, mut hi) = (0.0, scale);
    while rate_at(hi)? < target {
        hi *= 2.0;
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if rate_at(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Default scrambler for 64-bit challenges with the `x^6 + x^5 + 1` LFSR.
pub fn default_scrambler() -> Scrambler {
    let cfg = ScramblerConfig { taps: lfsr::DEFAULT_TAPS.to_vec(), ..ScramblerConfig::default() };
    Scrambler::new(crate::puf::DEFAULT_STAGES, &cfg).expect("default configuration is valid")
}
