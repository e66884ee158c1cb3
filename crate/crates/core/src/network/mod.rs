//! Directed road network: intersections, roads, signal-group signs and the
//! bias weights used to turn per-road vehicle counts into a per-intersection
//! vehicle bias.
//!
//! A road from intersection `j` to intersection `i` feeds the signal at `i`.
//! Its sign `s` selects which of the two signal states shows it green
//! (`sigma_i * s == +1`), and its weight `eta = c * l_ref / (n_ref * length)`
//! normalizes the vehicle count by road length.

mod io;
mod lattice;
mod routing;

use std::collections::{HashMap, VecDeque};

use crate::error::{Error, Result};

pub use io::{load_network, save_network};
pub use lattice::generate_lattice;
pub use routing::ShortestPaths;

pub const DEFAULT_L_REF: f64 = 100.0;
pub const DEFAULT_N_REF: f64 = 10.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Intersection {
    /// External identifier, as written in network files.
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub signalized: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Road {
    /// Index of the upstream intersection.
    pub from: usize,
    /// Index of the intersection whose signal governs this road.
    pub to: usize,
    pub length: f64,
    /// Signal-group sign, `+1` or `-1`.
    pub sign: i8,
    /// 2 for the lone approach of its group at a 3-way intersection, else 1.
    pub group_coeff: u8,
    pub eta: f64,
}

/// Road description used when constructing a network. Missing signs or
/// group coefficients are derived from geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct RoadSpec {
    pub from: u32,
    pub to: u32,
    pub length: f64,
    pub sign: Option<i8>,
    pub group_coeff: Option<u8>,
}

#[derive(Clone, Debug)]
pub struct RoadNetwork {
    intersections: Vec<Intersection>,
    roads: Vec<Road>,
    l_ref: f64,
    n_ref: f64,
    incoming: Vec<Vec<usize>>,
    outgoing: Vec<Vec<usize>>,
    road_lookup: HashMap<(usize, usize), usize>,
    control_index: Vec<Option<usize>>,
    controlled: Vec<usize>,
}

impl PartialEq for RoadNetwork {
    fn eq(&self, other: &Self) -> bool {
        self.intersections == other.intersections
            && self.roads == other.roads
            && self.l_ref == other.l_ref
            && self.n_ref == other.n_ref
    }
}

impl RoadNetwork {
    /// Builds and validates a network. Signs and group coefficients missing
    /// from `roads` are assigned by approach heading, then every road gets its
    /// bias weight.
    pub fn new(
        intersections: Vec<Intersection>,
        roads: Vec<RoadSpec>,
        l_ref: f64,
        n_ref: f64,
    ) -> Result<Self> {
        if !(l_ref > 0.0 && l_ref.is_finite()) {
            return Err(Error::InvalidArgument(format!("l_ref must be positive, got {l_ref}")));
        }
        if !(n_ref > 0.0 && n_ref.is_finite()) {
            return Err(Error::InvalidArgument(format!("n_ref must be positive, got {n_ref}")));
        }
        if intersections.is_empty() {
            return Err(Error::InvalidArgument("network has no intersections".into()));
        }

        let mut by_id = HashMap::with_capacity(intersections.len());
        for (idx, node) in intersections.iter().enumerate() {
            if !(node.x.is_finite() && node.y.is_finite()) {
                return Err(Error::parse(
                    format!("intersections[{idx}]"),
                    "coordinates must be finite",
                ));
            }
            if by_id.insert(node.id, idx).is_some() {
                return Err(Error::parse(
                    format!("intersections[{idx}].id"),
                    format!("duplicate intersection id {}", node.id),
                ));
            }
        }

        let mut road_lookup = HashMap::with_capacity(roads.len());
        let mut built = Vec::with_capacity(roads.len());
        for (idx, spec) in roads.iter().enumerate() {
            let from = *by_id.get(&spec.from).ok_or_else(|| {
                Error::parse(format!("roads[{idx}].from"), format!("unknown intersection {}", spec.from))
            })?;
            let to = *by_id.get(&spec.to).ok_or_else(|| {
                Error::parse(format!("roads[{idx}].to"), format!("unknown intersection {}", spec.to))
            })?;
            if from == to {
                return Err(Error::parse(format!("roads[{idx}]"), "self-loop road"));
            }
            if !(spec.length > 0.0 && spec.length.is_finite()) {
                return Err(Error::parse(
                    format!("roads[{idx}].length"),
                    format!("length must be positive, got {}", spec.length),
                ));
            }
            if let Some(s) = spec.sign {
                if s != 1 && s != -1 {
                    return Err(Error::parse(format!("roads[{idx}].s"), format!("sign must be +1 or -1, got {s}")));
                }
            }
            if let Some(c) = spec.group_coeff {
                if c != 1 && c != 2 {
                    return Err(Error::parse(format!("roads[{idx}].c"), format!("group coefficient must be 1 or 2, got {c}")));
                }
            }
            if road_lookup.insert((from, to), idx).is_some() {
                return Err(Error::parse(
                    format!("roads[{idx}]"),
                    format!("duplicate road {} -> {}", spec.from, spec.to),
                ));
            }
            built.push(Road {
                from,
                to,
                length: spec.length,
                sign: spec.sign.unwrap_or(0),
                group_coeff: spec.group_coeff.unwrap_or(0),
                eta: 0.0,
            });
        }

        let n = intersections.len();
        let mut incoming = vec![Vec::new(); n];
        let mut outgoing = vec![Vec::new(); n];
        for (idx, road) in built.iter().enumerate() {
            incoming[road.to].push(idx);
            outgoing[road.from].push(idx);
        }

        let mut controlled = Vec::new();
        let mut control_index = vec![None; n];
        for (idx, node) in intersections.iter().enumerate() {
            if node.signalized {
                control_index[idx] = Some(controlled.len());
                controlled.push(idx);
            }
        }

        let mut net = RoadNetwork {
            intersections,
            roads: built,
            l_ref,
            n_ref,
            incoming,
            outgoing,
            road_lookup,
            control_index,
            controlled,
        };
        for node in 0..n {
            net.assign_groups_at(node)?;
        }
        net.check_strongly_connected()?;
        net.recompute_eta();
        Ok(net)
    }

    pub fn intersections(&self) -> &[Intersection] {
        &self.intersections
    }

    pub fn roads(&self) -> &[Road] {
        &self.roads
    }

    pub fn l_ref(&self) -> f64 {
        self.l_ref
    }

    pub fn n_ref(&self) -> f64 {
        self.n_ref
    }

    /// Roads whose downstream end is intersection `node`.
    pub fn incoming(&self, node: usize) -> &[usize] {
        &self.incoming[node]
    }

    pub fn outgoing(&self, node: usize) -> &[usize] {
        &self.outgoing[node]
    }

    pub fn road_between(&self, from: usize, to: usize) -> Option<usize> {
        self.road_lookup.get(&(from, to)).copied()
    }

    pub fn index_of_id(&self, id: u32) -> Option<usize> {
        self.intersections.iter().position(|n| n.id == id)
    }

    /// Number of signal decision variables (signalized intersections).
    pub fn num_controlled(&self) -> usize {
        self.controlled.len()
    }

    /// Intersection indices of the signalized intersections, in decision order.
    pub fn controlled(&self) -> &[usize] {
        &self.controlled
    }

    /// Position of intersection `node` in the decision vector, if signalized.
    pub fn control_index(&self, node: usize) -> Option<usize> {
        self.control_index[node]
    }

    /// Whether `road` is green given decision vector `sigma`. Roads into
    /// unsignalized intersections are always green.
    pub fn is_green(&self, road: usize, sigma: &[i8]) -> bool {
        let r = &self.roads[road];
        match self.control_index[r.to] {
            Some(k) => sigma[k] * r.sign == 1,
            None => true,
        }
    }

    /// Re-derives every sign and group coefficient from geometry, discarding
    /// the stored values.
    pub fn assign_signal_groups(&self) -> Result<RoadNetwork> {
        let mut net = self.clone();
        for road in &mut net.roads {
            road.sign = 0;
            road.group_coeff = 0;
        }
        for node in 0..net.intersections.len() {
            net.assign_groups_at(node)?;
        }
        net.recompute_eta();
        Ok(net)
    }

    /// Returns a copy with every `eta` recomputed from `c`, lengths and the
    /// reference values.
    pub fn compute_eta(&self) -> RoadNetwork {
        let mut net = self.clone();
        net.recompute_eta();
        net
    }

    /// Copy with different reference values; weights are recomputed.
    pub fn with_reference(&self, l_ref: f64, n_ref: f64) -> Result<RoadNetwork> {
        if !(l_ref > 0.0 && n_ref > 0.0) {
            return Err(Error::InvalidArgument("reference values must be positive".into()));
        }
        let mut net = self.clone();
        net.l_ref = l_ref;
        net.n_ref = n_ref;
        net.recompute_eta();
        Ok(net)
    }

    fn recompute_eta(&mut self) {
        for road in &mut self.roads {
            road.eta = f64::from(road.group_coeff) * self.l_ref / (self.n_ref * road.length);
        }
    }

    /// Fills in missing signs (by heading) and group coefficients at one
    /// intersection, then checks the group invariants for signalized nodes.
    fn assign_groups_at(&mut self, node: usize) -> Result<()> {
        let incoming = self.incoming[node].clone();
        let here = &self.intersections[node];
        let id = here.id;

        let mut derived = Vec::new();
        for &r in &incoming {
            if self.roads[r].sign == 0 {
                let up = &self.intersections[self.roads[r].from];
                let (dx, dy) = (up.x - here.x, up.y - here.y);
                self.roads[r].sign = heading_sign(dx, dy);
                derived.push((r, dx, dy));
            }
        }

        if self.intersections[node].signalized {
            let degree = incoming.len();
            if !(3..=4).contains(&degree) {
                return Err(Error::InvalidGeometry {
                    intersection: id,
                    reason: format!("signalized intersection has {degree} incoming roads, expected 3 or 4"),
                });
            }
            let plus = incoming.iter().filter(|&&r| self.roads[r].sign == 1).count();
            if degree == 4 && plus != 2 && !derived.is_empty() {
                self.rebalance_four_way(node, plus, &derived);
            }
            let plus = incoming.iter().filter(|&&r| self.roads[r].sign == 1).count();
            if plus == 0 || plus == degree {
                return Err(Error::InvalidGeometry {
                    intersection: id,
                    reason: "all approaches fall in one signal group".into(),
                });
            }
            if degree == 4 && plus != 2 {
                return Err(Error::InvalidGeometry {
                    intersection: id,
                    reason: format!("4-way intersection has {plus} roads with s=+1, expected 2"),
                });
            }
        }

        for &r in &incoming {
            let sign = self.roads[r].sign;
            let lone = incoming
                .iter()
                .filter(|&&other| other != r && self.roads[other].sign == sign)
                .count()
                == 0;
            let expected = if lone && self.intersections[node].signalized { 2 } else { 1 };
            match self.roads[r].group_coeff {
                0 => self.roads[r].group_coeff = expected,
                c if c != expected => {
                    return Err(Error::InvalidGeometry {
                        intersection: id,
                        reason: format!(
                            "road from {} has c={c}, but the lone-approach rule gives {expected}",
                            self.intersections[self.roads[r].from].id
                        ),
                    });
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// A 4-way intersection whose headings split 3-1 moves the derived road
    /// closest to the 45° diagonal out of the majority group.
    fn rebalance_four_way(&mut self, node: usize, plus: usize, derived: &[(usize, f64, f64)]) {
        if plus != 1 && plus != 3 {
            return;
        }
        let majority: i8 = if plus == 3 { 1 } else { -1 };
        let candidate = derived
            .iter()
            .filter(|(r, _, _)| self.roads[*r].sign == majority)
            .min_by(|a, b| {
                diagonal_distance(a.1, a.2)
                    .total_cmp(&diagonal_distance(b.1, b.2))
                    .then(a.0.cmp(&b.0))
            })
            .map(|(r, _, _)| *r);
        if let Some(r) = candidate {
            log::debug!("rebalancing signal groups at intersection {}", self.intersections[node].id);
            self.roads[r].sign = -majority;
        }
    }

    fn check_strongly_connected(&self) -> Result<()> {
        let n = self.intersections.len();
        let reach = |adjacent: &dyn Fn(usize) -> Vec<usize>| {
            let mut seen = vec![false; n];
            let mut queue = VecDeque::from([0usize]);
            seen[0] = true;
            while let Some(v) = queue.pop_front() {
                for w in adjacent(v) {
                    if !seen[w] {
                        seen[w] = true;
                        queue.push_back(w);
                    }
                }
            }
            seen
        };
        let forward = reach(&|v| self.outgoing[v].iter().map(|&r| self.roads[r].to).collect());
        let backward = reach(&|v| self.incoming[v].iter().map(|&r| self.roads[r].from).collect());
        if let Some(bad) = (0..n).find(|&v| !forward[v] || !backward[v]) {
            return Err(Error::InvalidGeometry {
                intersection: self.intersections[bad].id,
                reason: "network is not strongly connected".into(),
            });
        }
        Ok(())
    }
}

/// East-west approaches (within 45° of the x axis, ties included) get +1.
fn heading_sign(dx: f64, dy: f64) -> i8 {
    if dx.abs() >= dy.abs() {
        1
    } else {
        -1
    }
}

fn diagonal_distance(dx: f64, dy: f64) -> f64 {
    let angle = dy.abs().atan2(dx.abs());
    (angle - std::f64::consts::FRAC_PI_4).abs()
}
