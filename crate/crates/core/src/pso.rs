//! Constriction-factor particle swarm optimisation over a box.
//!
//! Maximises. Every generation evaluates all particles concurrently, then
//! updates the swarm in one place. The initial population counts as the
//! first generation, so a run makes exactly `particles * generations`
//! objective calls. Random draws come from per-(particle, generation)
//! streams, so results do not depend on thread scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// How the r1, r2 factors of the velocity update are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RandomFactors {
    /// Fresh draws for every dimension.
    #[default]
    PerDimension,
    /// One draw per particle and update.
    PerParticle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SwarmConfig {
    pub particles: usize,
    /// Generation count, the initial population included. Zero behaves as
    /// one: the initial population is always evaluated.
    pub generations: usize,
    pub c1: f64,
    pub c2: f64,
    pub seed: u64,
    pub random_factors: RandomFactors,
}

impl Default for SwarmConfig {
    fn default() -> Self {
        SwarmConfig {
            particles: 32,
            generations: 32,
            c1: 2.8,
            c2: 1.3,
            seed: 0,
            random_factors: RandomFactors::PerDimension,
        }
    }
}

impl SwarmConfig {
    pub fn with_budget(mut self, particles: usize, generations: usize) -> Self {
        self.particles = particles;
        self.generations = generations;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Clerc's constriction factor for psi = c1 + c2.
    pub fn constriction(&self) -> f64 {
        let psi = self.c1 + self.c2;
        2.0 / (2.0 - psi - (psi * psi - 4.0 * psi).sqrt()).abs()
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::BadConfig("a swarm needs at least one particle".into()));
        }
        if !(self.c1 >= 0.0 && self.c2 >= 0.0 && self.c1 + self.c2 > 4.0) {
            return Err(Error::BadConfig(format!(
                "need c1, c2 >= 0 and c1 + c2 > 4, got c1 = {}, c2 = {}",
                self.c1, self.c2
            )));
        }
        Ok(())
    }

    fn generation_count(&self) -> usize {
        self.generations.max(1)
    }
}

/// Where the swarm may go: a window of `range` around `center`, cut by the
/// global bounds `lower..=upper`. The initial population is drawn inside the
/// same window.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    pub center: Vec<f64>,
    pub range: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SearchSpace {
    /// A plain box with `center` in the middle.
    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        let center = lower.iter().zip(&upper).map(|(l, u)| 0.5 * (l + u)).collect();
        let range = lower.iter().zip(&upper).map(|(l, u)| 0.5 * (u - l)).collect();
        SearchSpace {
            center,
            range,
            lower,
            upper,
        }
    }

    pub fn dims(&self) -> usize {
        self.center.len()
    }

    /// The effective per-dimension box.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let lo = (0..self.dims())
            .map(|i| (self.center[i] - self.range[i]).max(self.lower[i]))
            .collect();
        let hi = (0..self.dims())
            .map(|i| (self.center[i] + self.range[i]).min(self.upper[i]))
            .collect();
        (lo, hi)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dims();
        for len in [self.range.len(), self.lower.len(), self.upper.len()] {
            if len != n {
                return Err(Error::DimensionMismatch { expected: n, got: len });
            }
        }
        for i in 0..n {
            let (c, r, l, u) = (self.center[i], self.range[i], self.lower[i], self.upper[i]);
            if !(r >= 0.0) || !(l <= c && c <= u) || !c.is_finite() {
                return Err(Error::BadConfig(format!(
                    "dimension {i}: center {c} with range {r} must lie in [{l}, {u}]"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub best_position: Vec<f64>,
    /// `-inf` until the particle has been evaluated.
    pub best_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwarmState {
    pub particles: Vec<Particle>,
    pub best_position: Vec<f64>,
    pub best_score: f64,
    /// Generations evaluated so far.
    pub generation: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

fn stream(seed: u64, particle: usize, generation: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(particle as u64);
    // 2^40 words per generation is far beyond any dimension count
    rng.set_word_pos((generation as u128) << 40);
    rng
}

/// Particle 0 sits at the center; the rest are normal around it with
/// sigma = range / 2, clamped to the search box. Velocities start at zero.
pub fn init_swarm(space: &SearchSpace, config: &SwarmConfig) -> Result<SwarmState> {
    config.validate()?;
    space.validate()?;
    let (lower, upper) = space.bounds();
    let particles = (0..config.particles)
        .map(|p| {
            let position: Vec<f64> = if p == 0 {
                space.center.clone()
            } else {
                let mut rng = stream(config.seed, p, 0);
                (0..space.dims())
                    .map(|i| {
                        let z: f64 = rng.sample(StandardNormal);
                        (space.center[i] + z * 0.5 * space.range[i]).clamp(lower[i], upper[i])
                    })
                    .collect()
            };
            Particle {
                velocity: vec![0.0; position.len()],
                best_position: position.clone(),
                best_score: f64::NEG_INFINITY,
                position,
            }
        })
        .collect();
    Ok(SwarmState {
        particles,
        best_position: space.center.clone(),
        best_score: f64::NEG_INFINITY,
        generation: 0,
        lower,
        upper,
    })
}

/// Folds the scores of the current positions into the personal and global
/// bests. On ties the lowest particle index wins.
pub fn update_bests(swarm: &mut SwarmState, scores: &[f64]) {
    assert_eq!(scores.len(), swarm.particles.len(), "one score per particle");
    for (particle, &s) in swarm.particles.iter_mut().zip(scores) {
        if s > particle.best_score {
            particle.best_score = s;
            particle.best_position.clone_from(&particle.position);
        }
        if s > swarm.best_score {
            swarm.best_score = s;
            swarm.best_position.clone_from(&particle.position);
        }
    }
    swarm.generation += 1;
}

/// Moves every particle once. Components pushed past the box are truncated
/// to it and lose their velocity.
pub fn move_particles(swarm: &mut SwarmState, config: &SwarmConfig) {
    let k = config.constriction();
    let g = swarm.generation;
    let (best, lower, upper) = (&swarm.best_position, &swarm.lower, &swarm.upper);
    for (p, particle) in swarm.particles.iter_mut().enumerate() {
        let mut rng = stream(config.seed, p, g);
        let mut r1: f64 = rng.random();
        let mut r2: f64 = rng.random();
        for i in 0..particle.position.len() {
            if config.random_factors == RandomFactors::PerDimension && i > 0 {
                r1 = rng.random();
                r2 = rng.random();
            }
            let x = particle.position[i];
            let v = k * (particle.velocity[i]
                + config.c1 * r1 * (particle.best_position[i] - x)
                + config.c2 * r2 * (best[i] - x));
            let next = x + v;
            if next < lower[i] {
                particle.position[i] = lower[i];
                particle.velocity[i] = 0.0;
            } else if next > upper[i] {
                particle.position[i] = upper[i];
                particle.velocity[i] = 0.0;
            } else {
                particle.position[i] = next;
                particle.velocity[i] = v;
            }
        }
    }
}

/// [`update_bests`] followed by [`move_particles`].
pub fn step(swarm: &mut SwarmState, scores: &[f64], config: &SwarmConfig) {
    update_bests(swarm, scores);
    move_particles(swarm, config);
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub position: Vec<f64>,
    pub score: f64,
    /// Global best after each generation.
    pub trace: Vec<f64>,
    pub evaluations: usize,
}

/// Maximises `objective` over `space`.
pub fn optimize<F>(objective: F, space: &SearchSpace, config: &SwarmConfig) -> Result<Optimum>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    try_optimize(|x| Ok::<_, Error>(objective(x)), space, config)
}

/// [`optimize`] for fallible objectives; the first error (by particle
/// index) aborts the run.
pub fn try_optimize<F, E>(objective: F, space: &SearchSpace, config: &SwarmConfig) -> Result<Optimum, E>
where
    F: Fn(&[f64]) -> Result<f64, E> + Sync,
    E: From<Error> + Send,
{
    let mut swarm = init_swarm(space, config)?;
    let generations = config.generation_count();
    let mut trace = Vec::with_capacity(generations);
    let mut evaluations = 0;
    for g in 0..generations {
        let scores: Vec<f64> = swarm
            .particles
            .par_iter()
            .map(|p| objective(&p.position))
            .collect::<Result<_, E>>()?;
        evaluations += scores.len();
        update_bests(&mut swarm, &scores);
        trace.push(swarm.best_score);
        if g + 1 < generations {
            move_particles(&mut swarm, config);
        }
    }
    Ok(Optimum {
        position: swarm.best_position,
        score: swarm.best_score,
        trace,
        evaluations,
    })
}
