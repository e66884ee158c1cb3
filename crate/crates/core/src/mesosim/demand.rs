use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SimConfig;
use crate::network::{RoadNetwork, ShortestPaths};

const MAX_RESAMPLES: usize = 16;

/// A vehicle's departure second and its road-by-road route.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trip {
    pub depart: u64,
    pub route: Vec<usize>,
}

/// Number of trips generated by the end of second `t` (0-based) at `rate`
/// vehicles per second: a deterministic accumulator, `floor(rate * (t + 1))`.
pub fn trips_due(rate: f64, t: u64) -> u64 {
    (rate * (t + 1) as f64 + 1e-9).floor() as u64
}

/// Draws the whole trip table for a run: origins and destinations uniform
/// and independent over intersections (distinct), routed along shortest
/// paths. Deterministic in `config.seed`.
pub fn generate_trips(net: &RoadNetwork, config: &SimConfig) -> Vec<Trip> {
    let n = net.intersections().len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let paths = ShortestPaths::new(net);
    let mut trips = Vec::with_capacity((config.generation_rate * config.duration as f64) as usize + 1);
    let mut generated = 0u64;
    for t in 0..config.duration {
        let due = trips_due(config.generation_rate, t);
        while generated < due {
            generated += 1;
            if n < 2 {
                continue;
            }
            let mut route = None;
            for _ in 0..MAX_RESAMPLES {
                let origin = rng.random_range(0..n);
                let dest = rng.random_range(0..n);
                if origin == dest {
                    continue;
                }
                route = paths.route(net, origin, dest, &mut rng);
                if route.is_some() {
                    break;
                }
            }
            match route {
                Some(route) => trips.push(Trip { depart: t, route }),
                None => log::warn!("no route found for a trip departing at {t}s, skipped"),
            }
        }
    }
    trips
}
