use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;

use super::RoadNetwork;

/// All-pairs shortest path distances (by length, which is proportional to
/// free-flow travel time at uniform speed), stored per destination.
#[derive(Clone, Debug)]
pub struct ShortestPaths {
    /// `to_dest[d][v]` is the shortest distance from `v` to `d`.
    to_dest: Vec<Vec<f64>>,
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl ShortestPaths {
    pub fn new(net: &RoadNetwork) -> Self {
        let n = net.intersections().len();
        let to_dest = (0..n).map(|d| reverse_dijkstra(net, d)).collect();
        ShortestPaths { to_dest }
    }

    pub fn distance(&self, from: usize, to: usize) -> f64 {
        self.to_dest[to][from]
    }

    /// A shortest route from `origin` to `dest` as a list of road indices.
    /// Where several roads continue a shortest path, one is drawn uniformly,
    /// so equal-length lattice routes are spread across the grid.
    pub fn route<R: Rng + ?Sized>(
        &self,
        net: &RoadNetwork,
        origin: usize,
        dest: usize,
        rng: &mut R,
    ) -> Option<Vec<usize>> {
        let dist = &self.to_dest[dest];
        if origin == dest || !dist[origin].is_finite() {
            return None;
        }
        let mut route = Vec::new();
        let mut here = origin;
        let mut candidates = Vec::with_capacity(4);
        while here != dest {
            candidates.clear();
            for &r in net.outgoing(here) {
                let road = &net.roads()[r];
                let through = road.length + dist[road.to];
                if (through - dist[here]).abs() <= 1e-9 * dist[here].max(1.0) {
                    candidates.push(r);
                }
            }
            let next = match candidates.len() {
                0 => return None,
                1 => candidates[0],
                k => candidates[rng.random_range(0..k)],
            };
            route.push(next);
            here = net.roads()[next].to;
        }
        Some(route)
    }
}

fn reverse_dijkstra(net: &RoadNetwork, dest: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; net.intersections().len()];
    let mut heap = BinaryHeap::new();
    dist[dest] = 0.0;
    heap.push(Entry(0.0, dest));
    while let Some(Entry(d, v)) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &r in net.incoming(v) {
            let road = &net.roads()[r];
            let nd = d + road.length;
            if nd < dist[road.from] {
                dist[road.from] = nd;
                heap.push(Entry(nd, road.from));
            }
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::generate_lattice;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lattice_distances_are_manhattan() {
        let net = generate_lattice(4, 5, 100.0).unwrap();
        let sp = ShortestPaths::new(&net);
        for a in 0usize..20 {
            for b in 0usize..20 {
                let (ra, ca) = (a / 5, a % 5);
                let (rb, cb) = (b / 5, b % 5);
                let manhattan = (ra.abs_diff(rb) + ca.abs_diff(cb)) as f64 * 100.0;
                assert_eq!(sp.distance(a, b), manhattan);
            }
        }
    }

    #[test]
    fn routes_are_shortest_and_connected() {
        let net = generate_lattice(5, 5, 100.0).unwrap();
        let sp = ShortestPaths::new(&net);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (o, d) in [(0, 24), (4, 20), (12, 13), (7, 17)] {
            let route = sp.route(&net, o, d, &mut rng).unwrap();
            assert_eq!(net.roads()[route[0]].from, o);
            assert_eq!(net.roads()[*route.last().unwrap()].to, d);
            for w in route.windows(2) {
                assert_eq!(net.roads()[w[0]].to, net.roads()[w[1]].from);
            }
            let length: f64 = route.iter().map(|&r| net.roads()[r].length).sum();
            assert_eq!(length, sp.distance(o, d));
        }
        assert!(sp.route(&net, 3, 3, &mut rng).is_none());
    }
}
