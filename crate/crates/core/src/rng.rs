//! Hierarchical random-number substreams.
//!
//! Every stochastic draw in the simulator is keyed by
//! `(iteration, purpose, run, stop, cycle, seq)` and served from its own
//! ChaCha8 stream derived from the master seed. Draw values therefore do not
//! depend on event interleaving or on which policy is active: a control
//! policy that never triggers consumes exactly the same streams as the
//! uncontrolled system and produces a bit-identical log.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson};

/// What a substream is used for. Part of the stream key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    LineSynthesis = 0,
    Cruise = 1,
    Alight = 2,
    BoardArrival = 3,
}

/// Full key of one stochastic draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DrawKey {
    pub purpose: Purpose,
    pub run: u32,
    pub stop: u32,
    pub cycle: u32,
    /// Distinguishes multiple draws of the same purpose at one visit
    /// (e.g. the two units of a split bus at the recoupling stop).
    pub seq: u8,
}

impl DrawKey {
    pub fn new(purpose: Purpose, run: u32, stop: u32, cycle: u32, seq: u8) -> Self {
        DrawKey {
            purpose,
            run,
            stop,
            cycle,
            seq,
        }
    }
}

/// Derives per-draw ChaCha8 streams from `(master_seed, iteration)`.
#[derive(Debug, Clone, Copy)]
pub struct SubstreamFactory {
    master_seed: u64,
    iteration: u32,
}

impl SubstreamFactory {
    pub fn new(master_seed: u64, iteration: u32) -> Self {
        SubstreamFactory {
            master_seed,
            iteration,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn iteration(&self) -> u32 {
        self.iteration
    }

    /// A fresh generator for one draw key.
    pub fn stream(&self, key: DrawKey) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        seed[0..8].copy_from_slice(&self.master_seed.to_le_bytes());
        seed[8..12].copy_from_slice(&self.iteration.to_le_bytes());
        seed[12] = key.purpose as u8;
        seed[13..17].copy_from_slice(&key.run.to_le_bytes());
        seed[17..21].copy_from_slice(&key.stop.to_le_bytes());
        seed[21..25].copy_from_slice(&key.cycle.to_le_bytes());
        seed[25] = key.seq;
        // Marker byte so an all-zero key still differs from a raw zero seed.
        seed[31] = 0xb5;
        ChaCha8Rng::from_seed(seed)
    }
}

/// Source of the three kinds of stochastic draws the engine makes.
///
/// The production implementation is [`SubstreamSource`]; tests provide
/// scripted implementations that replace the distributions with fixed counts.
pub trait StochasticSource {
    /// Zero-mean cruising-time perturbation for a segment whose expected
    /// cruise time is `expected_cruise_s`.
    fn cruise_noise(&self, key: DrawKey, expected_cruise_s: f64) -> f64;

    /// Binomial draw over `population` trials with success probability `p`.
    fn binomial(&self, key: DrawKey, population: u32, p: f64) -> u32;

    /// Poisson draw with the given mean.
    fn poisson(&self, key: DrawKey, mean: f64) -> u32;
}

/// Substream-backed draws: gamma cruise noise, binomial alighting wishes,
/// Poisson passenger arrivals.
#[derive(Debug, Clone, Copy)]
pub struct SubstreamSource {
    factory: SubstreamFactory,
    noise_shape: f64,
    noise_scale_fraction: f64,
}

impl SubstreamSource {
    pub fn new(factory: SubstreamFactory, noise_shape: f64, noise_scale_fraction: f64) -> Self {
        SubstreamSource {
            factory,
            noise_shape,
            noise_scale_fraction,
        }
    }

    pub fn factory(&self) -> &SubstreamFactory {
        &self.factory
    }
}

impl StochasticSource for SubstreamSource {
    fn cruise_noise(&self, key: DrawKey, expected_cruise_s: f64) -> f64 {
        if self.noise_scale_fraction == 0.0 || expected_cruise_s <= 0.0 {
            return 0.0;
        }
        // Gamma(k, theta) - k*theta: positively skewed, mean zero, bounded
        // below by -noise_scale_fraction * expected cruise time.
        let shape = self.noise_shape;
        let scale = self.noise_scale_fraction * expected_cruise_s / shape;
        let mut rng = self.factory.stream(key);
        let gamma = Gamma::new(shape, scale).expect("validated noise parameters");
        gamma.sample(&mut rng) - shape * scale
    }

    fn binomial(&self, key: DrawKey, population: u32, p: f64) -> u32 {
        if population == 0 || p <= 0.0 {
            return 0;
        }
        if p >= 1.0 {
            return population;
        }
        let mut rng = self.factory.stream(key);
        let binomial = Binomial::new(u64::from(population), p).expect("p in (0, 1)");
        binomial.sample(&mut rng) as u32
    }

    fn poisson(&self, key: DrawKey, mean: f64) -> u32 {
        if mean <= 0.0 {
            return 0;
        }
        let mut rng = self.factory.stream(key);
        let poisson = Poisson::new(mean).expect("positive mean");
        poisson.sample(&mut rng) as u32
    }
}
