#![allow(dead_code)]

use ampic::flowstats::FlowStats;
use ampic::network::RoadNetwork;
use rand::Rng;

/// Small lattices with at most four signals.
pub const SMALL_LATTICES: [(usize, usize); 4] = [(2, 3), (3, 2), (2, 4), (4, 2)];

pub fn lattice(rows: usize, cols: usize) -> RoadNetwork {
    ampic::generate_lattice(rows, cols, 100.0).unwrap()
}

/// Flow estimates with random rates on every road.
pub fn random_stats<R: Rng>(net: &RoadNetwork, rng: &mut R) -> FlowStats {
    let n = net.roads().len();
    let a0 = (0..n).map(|_| rng.random_range(0.0..0.3)).collect();
    let a1 = (0..n).map(|_| rng.random_range(0.0..0.3)).collect();
    FlowStats::from_rates(rng.random_range(0.05..0.6), a0, a1).unwrap()
}

/// Every spin vector of length `n`, in counting order.
pub fn all_spins(n: usize) -> impl Iterator<Item = Vec<i8>> {
    (0u64..1 << n).map(move |m| (0..n).map(|i| if m >> i & 1 == 1 { 1 } else { -1 }).collect())
}

/// Forward simulation of the linear bias model straight from the network and
/// flow estimates, independent of the library's matrix construction.
pub fn forward_objective(
    net: &RoadNetwork,
    stats: &FlowStats,
    tau: f64,
    q: &[f64],
    x0: &[f64],
    plan: &[Vec<i8>],
) -> f64 {
    let mut x = x0.to_vec();
    let mut total = 0.0;
    for sigma in plan {
        let mut next = x.clone();
        for (i, &node) in net.controlled().iter().enumerate() {
            let mut rate = 0.0;
            for &r in net.incoming(node) {
                let road = &net.roads()[r];
                let s = f64::from(road.sign);
                rate -= road.eta * (stats.o_g - stats.o_r) * f64::from(sigma[i]);
                if let Some(j) = net.control_index(road.from) {
                    rate += road.eta * s * (stats.a0[r] - stats.a1[r]) * f64::from(sigma[j]);
                }
                rate += road.eta * s * (stats.a0[r] + stats.a1[r] - stats.o_g - stats.o_r);
            }
            next[i] += tau * rate;
        }
        x = next;
        total += x.iter().zip(q).map(|(v, w)| w * v * v).sum::<f64>();
    }
    total
}
