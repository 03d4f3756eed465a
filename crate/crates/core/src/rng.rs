//! Deterministic random-number streams.
//!
//! Every stream is derived from the run seed by hashing, never by sharing
//! generator state across parallel work items. Agent operations get a stream
//! keyed by (seed, agent id, step, op channel), which makes simulation output
//! bit-identical for any worker count, not just for single-threaded runs.

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};

use crate::agent::AgentId;
use crate::math::Vec3;

/// SplitMix64 finalizer; good avalanche, cheap enough to call per agent per step.
#[inline]
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug)]
pub struct RandomStream {
    seed: u64,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        RandomStream { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Stream for serial phases (initial placement, global decisions).
    pub fn master(&self) -> SmallRng {
        SmallRng::seed_from_u64(mix(self.seed ^ 0x6d61_7374_6572_0001))
    }

    /// Per-agent stream for one agent-operation invocation.
    #[inline]
    pub fn agent(&self, id: AgentId, step: u64, channel: u64) -> SmallRng {
        let s = mix(self.seed ^ mix(id.raw() ^ mix(step ^ mix(channel))));
        SmallRng::seed_from_u64(s)
    }

    /// Stream for a standalone operation at one step.
    pub fn standalone(&self, step: u64, channel: u64) -> SmallRng {
        let s = mix(self.seed ^ 0x7374_616e_6461_6c6f ^ mix(step ^ mix(channel)));
        SmallRng::seed_from_u64(s)
    }

    /// Worker-indexed substream, for consumers that parallelize over
    /// independent work items (e.g. optimizer particles).
    pub fn worker(&self, index: u64) -> SmallRng {
        SmallRng::seed_from_u64(mix(self.seed ^ mix(0x776f_726b_6572 ^ index)))
    }

    /// Derives an independent stream family.
    pub fn derive(&self, tag: u64) -> RandomStream {
        RandomStream { seed: mix(self.seed ^ mix(tag)) }
    }
}

/// Standard normal sample (Marsaglia polar method).
pub fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.gen_range(-1.0..1.0);
        let v: f64 = rng.gen_range(-1.0..1.0);
        let s = u * u + v * v;
        if s > 0.0 && s < 1.0 {
            return u * (-2.0 * s.ln() / s).sqrt();
        }
    }
}

/// Uniformly distributed unit vector.
pub fn unit_vector<R: Rng>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(gaussian(rng), gaussian(rng), gaussian(rng));
        if let Some(u) = v.normalized() {
            return u;
        }
    }
}

/// Uniform sample inside the unit ball.
pub fn in_unit_ball<R: Rng>(rng: &mut R) -> Vec3 {
    let r = rng.gen::<f64>().cbrt();
    unit_vector(rng) * r
}

/// Isotropic normal displacement with the given per-axis scale.
pub fn gaussian_vector<R: Rng>(rng: &mut R, scale: f64) -> Vec3 {
    Vec3::new(gaussian(rng), gaussian(rng), gaussian(rng)) * scale
}
