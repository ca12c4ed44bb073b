//! Seeded arrivals into the staging zones.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::kinematics::safe_following_distance;
use crate::model::{Branch, VehicleId, VehicleState};
use crate::params::Params;

/// Independent random streams, one per branch.
#[derive(Debug, Clone)]
pub struct SpawnStreams {
    streams: [ChaCha8Rng; 4],
}

impl SpawnStreams {
    pub fn new(seed: u64) -> Self {
        let make = |k: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(k + 1);
            r
        };
        SpawnStreams { streams: [make(0), make(1), make(2), make(3)] }
    }

    pub fn branch(&mut self, b: Branch) -> &mut ChaCha8Rng {
        &mut self.streams[b.index()]
    }
}

/// Draws a safety ratio `1 + X`, `X` exponential with mean `mu`.
pub fn draw_sigma<R: Rng + ?Sized>(rng: &mut R, mu: f64) -> f64 {
    let exp = Exp::new(1.0 / mu).expect("mu > 0");
    1.0 + exp.sample(rng)
}

/// New vehicles for one branch. `last` is the rearmost vehicle currently on
/// the branch as `(pos, vel)`. Candidates are placed behind their predecessor
/// at a random multiple (≥ 1) of the safe distance and accepted while they
/// land in the staging zone; the first miss ends the wave.
pub fn spawn_wave<R: Rng + ?Sized>(
    branch: Branch,
    last: Option<(f64, f64)>,
    t_s: f64,
    rng: &mut R,
    next_id: &mut u64,
    p: &Params,
) -> Vec<VehicleState> {
    let mut out = Vec::new();
    let mut prev = last;
    loop {
        let sigma = draw_sigma(rng, p.mu);
        let vel = rng.random_range(0.0..=p.v_max);
        let behind = match prev {
            None => f64::INFINITY,
            Some((x, v)) => x - sigma * safe_following_distance(v, vel, p),
        };
        let pos = p.staging_end().min(behind);
        if !(pos >= p.domain_start() && pos <= p.staging_end()) {
            break;
        }
        out.push(VehicleState::new(VehicleId(*next_id), branch, pos, vel, t_s));
        *next_id += 1;
        prev = Some((pos, vel));
    }
    out
}
