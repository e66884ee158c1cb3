//! Adaptive estimates of the flow rates behind the linear bias model:
//! a pooled green-time outflow rate, turning probabilities and the
//! signal-dependent inflow rate of every road.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::RoadNetwork;

/// `probs[u]` lists `(downstream road, probability)` for vehicles leaving
/// upstream road `u`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TurningProbabilities {
    probs: Vec<Vec<(usize, f64)>>,
}

impl TurningProbabilities {
    pub fn empty(n_roads: usize) -> Self {
        TurningProbabilities { probs: vec![Vec::new(); n_roads] }
    }

    /// Turning probabilities counted from routes: the share of vehicles
    /// continuing from a road that move onto each next road. Roads no route
    /// continues from get an empty (all-zero) row.
    pub fn from_routes<'a>(n_roads: usize, routes: impl IntoIterator<Item = &'a [usize]>) -> Self {
        let mut counts = TurnCounts::new(n_roads);
        for route in routes {
            for w in route.windows(2) {
                counts.record(w[0], w[1]);
            }
        }
        counts.probabilities()
    }

    pub fn get(&self, upstream: usize, downstream: usize) -> f64 {
        self.probs[upstream]
            .iter()
            .find(|(r, _)| *r == downstream)
            .map_or(0.0, |(_, p)| *p)
    }

    pub fn row(&self, upstream: usize) -> &[(usize, f64)] {
        &self.probs[upstream]
    }

    pub fn row_sum(&self, upstream: usize) -> f64 {
        self.probs[upstream].iter().map(|(_, p)| p).sum()
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Online counter of observed road-to-road moves.
#[derive(Clone, Debug)]
pub struct TurnCounts {
    traversals: Vec<u64>,
    moves: Vec<Vec<(usize, u64)>>,
}

impl TurnCounts {
    pub fn new(n_roads: usize) -> Self {
        TurnCounts { traversals: vec![0; n_roads], moves: vec![Vec::new(); n_roads] }
    }

    /// One vehicle moved from `upstream` onto `downstream`.
    pub fn record(&mut self, upstream: usize, downstream: usize) {
        self.traversals[upstream] += 1;
        let row = &mut self.moves[upstream];
        match row.iter_mut().find(|(r, _)| *r == downstream) {
            Some((_, c)) => *c += 1,
            None => row.push((downstream, 1)),
        }
    }

    pub fn probabilities(&self) -> TurningProbabilities {
        let probs = self
            .moves
            .iter()
            .zip(&self.traversals)
            .map(|(row, &total)| {
                let mut row: Vec<(usize, f64)> = if total == 0 {
                    Vec::new()
                } else {
                    row.iter().map(|&(r, c)| (r, c as f64 / total as f64)).collect()
                };
                row.sort_by_key(|&(r, _)| r);
                row
            })
            .collect();
        TurningProbabilities { probs }
    }
}

#[derive(Clone, Debug)]
pub struct FlowStats {
    /// Pooled outflow rate of a green approach, veh/s.
    pub o_g: f64,
    /// Outflow under red; zero without dedicated turn lanes.
    pub o_r: f64,
    /// Inflow rate of each road when its upstream signal is +1 / -1.
    pub a0: Vec<f64>,
    pub a1: Vec<f64>,
    prior: f64,
    turning: TurningProbabilities,
    online: Option<TurnCounts>,
    green_seconds: Vec<u64>,
    exits: Vec<u64>,
    total_green: u64,
    total_exits: u64,
}

impl FlowStats {
    /// Fresh estimator; `o_g` starts at `prior` until green time is observed.
    pub fn new(net: &RoadNetwork, prior: f64) -> Self {
        let n = net.roads().len();
        FlowStats {
            o_g: prior,
            o_r: 0.0,
            a0: vec![0.0; n],
            a1: vec![0.0; n],
            prior,
            turning: TurningProbabilities::empty(n),
            online: None,
            green_seconds: vec![0; n],
            exits: vec![0; n],
            total_green: 0,
            total_exits: 0,
        }
    }

    /// Estimates with fixed rates, bypassing observation.
    pub fn from_rates(o_g: f64, a0: Vec<f64>, a1: Vec<f64>) -> Result<Self> {
        if a0.len() != a1.len() {
            return Err(Error::InvalidArgument("a0 and a1 differ in length".into()));
        }
        if o_g < 0.0 || a0.iter().chain(&a1).any(|&a| a < 0.0) {
            return Err(Error::InvalidArgument("flow rates must be non-negative".into()));
        }
        let n = a0.len();
        Ok(FlowStats {
            o_g,
            o_r: 0.0,
            a0,
            a1,
            prior: o_g,
            turning: TurningProbabilities::empty(n),
            online: None,
            green_seconds: vec![0; n],
            exits: vec![0; n],
            total_green: 0,
            total_exits: 0,
        })
    }

    pub fn turning(&self) -> &TurningProbabilities {
        &self.turning
    }

    pub fn set_turning(&mut self, turning: TurningProbabilities) {
        self.turning = turning;
    }

    /// Switches to counting turns from observed moves instead of routes.
    pub fn enable_online_turning(&mut self) {
        self.online = Some(TurnCounts::new(self.a0.len()));
    }

    pub fn record_turns(&mut self, turns: &[(usize, usize)]) {
        if let Some(counts) = &mut self.online {
            for &(from, to) in turns {
                counts.record(from, to);
            }
        }
    }

    pub fn green_seconds(&self, road: usize) -> u64 {
        self.green_seconds[road]
    }

    pub fn exits(&self, road: usize) -> u64 {
        self.exits[road]
    }

    /// Adds one elapsed second: green time for every signal-controlled road
    /// shown green, plus the vehicles that left each road. `o_g` becomes the
    /// pooled ratio of exits to green seconds.
    pub fn update_outflow(&mut self, net: &RoadNetwork, green: &[bool], departures: &[u32]) {
        self.accumulate(net, green, departures, 1);
    }

    /// Same as `update_outflow` for `seconds` seconds under constant signals.
    pub fn accumulate(&mut self, net: &RoadNetwork, green: &[bool], departures: &[u32], seconds: u64) {
        for (road, r) in net.roads().iter().enumerate() {
            if net.control_index(r.to).is_none() {
                continue;
            }
            if green[road] {
                self.green_seconds[road] += seconds;
                self.total_green += seconds;
            }
            let d = u64::from(departures[road]);
            self.exits[road] += d;
            self.total_exits += d;
        }
        self.o_g = if self.total_green == 0 {
            self.prior
        } else {
            self.total_exits as f64 / self.total_green as f64
        };
    }

    /// Recomputes `a0`/`a1` from `o_g` and the turning probabilities:
    /// `a0[(i,j)] = sum_k o_g * p[(j,k) -> (i,j)]` over upstream roads `(j,k)`
    /// released when the signal at `j` is +1, and `a1` likewise for -1.
    /// Roads into an unsignalized `j` are released in both states.
    pub fn compute_inflow(&mut self, net: &RoadNetwork) {
        if let Some(counts) = &self.online {
            self.turning = counts.probabilities();
        }
        self.a0.iter_mut().for_each(|a| *a = 0.0);
        self.a1.iter_mut().for_each(|a| *a = 0.0);
        for (upstream, road) in net.roads().iter().enumerate() {
            let signalized = net.control_index(road.to).is_some();
            let plus = !signalized || road.sign == 1;
            let minus = !signalized || road.sign == -1;
            for &(downstream, p) in self.turning.row(upstream) {
                let flow = self.o_g * p;
                if plus {
                    self.a0[downstream] += flow;
                }
                if minus {
                    self.a1[downstream] += flow;
                }
            }
        }
    }

    pub fn a_bar(&self, road: usize) -> f64 {
        self.a0[road] + self.a1[road]
    }

    pub fn a_delta(&self, road: usize) -> f64 {
        self.a0[road] - self.a1[road]
    }

    pub fn o_bar(&self) -> f64 {
        self.o_g + self.o_r
    }

    pub fn o_delta(&self) -> f64 {
        self.o_g - self.o_r
    }

    pub fn estimate_row(&self, t: u64) -> EstimateRow {
        let (min_a0, max_a0) = min_max(&self.a0);
        let (min_a1, max_a1) = min_max(&self.a1);
        EstimateRow { t, o_g: self.o_g, min_a0, max_a0, min_a1, max_a1 }
    }
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// One diagnostic line per control cycle.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateRow {
    pub t: u64,
    pub o_g: f64,
    pub min_a0: f64,
    pub max_a0: f64,
    pub min_a1: f64,
    pub max_a1: f64,
}

pub fn write_estimates_csv(path: impl AsRef<Path>, rows: &[EstimateRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::generate_lattice;

    fn lattice() -> RoadNetwork {
        generate_lattice(3, 3, 100.0).unwrap()
    }

    fn road(net: &RoadNetwork, from: u32, to: u32) -> usize {
        net.road_between(net.index_of_id(from).unwrap(), net.index_of_id(to).unwrap()).unwrap()
    }

    #[test]
    fn pooled_outflow_ratio() {
        let net = lattice();
        let mut stats = FlowStats::new(&net, 0.5);
        let controlled: Vec<usize> =
            (0..net.roads().len()).filter(|&r| net.control_index(net.roads()[r].to).is_some()).collect();
        // 100 green seconds on one road, 50 departures spread over others
        let mut green = vec![false; net.roads().len()];
        green[controlled[0]] = true;
        let mut departures = vec![0u32; net.roads().len()];
        departures[controlled[1]] = 50;
        stats.accumulate(&net, &green, &departures, 100);
        assert!((stats.o_g - 0.5).abs() < 1e-15);

        let mut spread = FlowStats::new(&net, 0.5);
        let green_all = vec![true; net.roads().len()];
        let per_road = 100 / controlled.len() as u64;
        let mut deps = vec![0u32; net.roads().len()];
        deps[controlled[2]] = (per_road * controlled.len() as u64) as u32 / 2;
        spread.accumulate(&net, &green_all, &deps, per_road);
        assert!((spread.o_g - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cold_start_uses_prior() {
        let net = lattice();
        let mut stats = FlowStats::new(&net, 0.37);
        assert_eq!(stats.o_g, 0.37);
        let n = net.roads().len();
        stats.update_outflow(&net, &vec![false; n], &vec![0; n]);
        assert_eq!(stats.o_g, 0.37);
    }

    #[test]
    fn straight_through_probability_is_one() {
        let net = lattice();
        let a = road(&net, 4, 5);
        let b = road(&net, 5, 6);
        let routes = vec![vec![a, b]; 5];
        let p = TurningProbabilities::from_routes(net.roads().len(), routes.iter().map(|r| r.as_slice()));
        assert_eq!(p.get(a, b), 1.0);
    }

    #[test]
    fn three_left_one_straight() {
        let net = lattice();
        let a = road(&net, 4, 5);
        let left = road(&net, 5, 8);
        let straight = road(&net, 5, 6);
        let mut routes = vec![vec![a, left]; 3];
        routes.push(vec![a, straight]);
        let p = TurningProbabilities::from_routes(net.roads().len(), routes.iter().map(|r| r.as_slice()));
        assert_eq!(p.get(a, left), 0.75);
        assert_eq!(p.get(a, straight), 0.25);
        assert!((p.row_sum(a) - 1.0).abs() < 1e-12);
        // never-traversed road has an all-zero row
        assert_eq!(p.row_sum(road(&net, 2, 1)), 0.0);
    }

    #[test]
    fn single_upstream_inflow() {
        let net = lattice();
        // road 4->5 arrives at signalized 5 with s=+1 (east-west)
        let up = road(&net, 4, 5);
        assert_eq!(net.roads()[up].sign, 1);
        let down = road(&net, 5, 6);
        let mut stats = FlowStats::new(&net, 0.5);
        let routes = [vec![up, down]];
        stats.set_turning(TurningProbabilities::from_routes(net.roads().len(), routes.iter().map(|r| r.as_slice())));
        stats.compute_inflow(&net);
        assert_eq!(stats.a0[down], 0.5);
        assert_eq!(stats.a1[down], 0.0);
        // roads nobody feeds have no inflow
        let entry = road(&net, 2, 1);
        assert_eq!((stats.a0[entry], stats.a1[entry]), (0.0, 0.0));
    }

    #[test]
    fn symmetric_release_cancels_delta() {
        let net = lattice();
        let down = road(&net, 5, 6);
        // one east-west and one north-south approach both feed 5->6 equally
        let ew = road(&net, 4, 5);
        let ns = road(&net, 2, 5);
        let routes = [vec![ew, down], vec![ns, down]];
        let mut stats = FlowStats::new(&net, 0.4);
        stats.set_turning(TurningProbabilities::from_routes(net.roads().len(), routes.iter().map(|r| r.as_slice())));
        stats.compute_inflow(&net);
        assert!((stats.a_delta(down)).abs() < 1e-15);
        assert!((stats.a_bar(down) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn online_counts_match_routes() {
        let net = lattice();
        let a = road(&net, 4, 5);
        let b = road(&net, 5, 6);
        let c = road(&net, 5, 8);
        let mut stats = FlowStats::new(&net, 0.5);
        stats.enable_online_turning();
        stats.record_turns(&[(a, b), (a, c), (a, b), (a, b)]);
        stats.compute_inflow(&net);
        assert_eq!(stats.turning().get(a, b), 0.75);
    }
}
