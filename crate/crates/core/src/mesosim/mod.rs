//! Per-second link-queue traffic simulator.
//!
//! Vehicles cross a road at free-flow speed until they reach the back of the
//! stop-line queue. A queue discharges at the saturation flow while its
//! signal is green, and only into a downstream road with free storage
//! (`floor(length / jam_spacing)` vehicles), which reproduces spillback.
//! While a queue is being served its vehicles creep forward at
//! `saturation_flow * jam_spacing`; a queue held by a red light, a full
//! downstream road or a yielding left turn stands still.
//! Trips are drawn up front from the seed, so every route is known before the
//! run starts.

mod demand;
mod metrics;

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ising::compute_bias_vector;
use crate::network::RoadNetwork;

pub use demand::{generate_trips, trips_due, Trip};
pub use metrics::{surrogate_co2, DriveMode, StepMetrics, CO2_IDLE, CO2_PER_METER, WAITING_SPEED};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Vehicles generated per second.
    pub generation_rate: f64,
    pub seed: u64,
    /// Simulated seconds.
    pub duration: u64,
    /// m/s
    pub free_flow_speed: f64,
    /// Queue discharge rate per approach under green, vehicles/s.
    pub saturation_flow: f64,
    /// Road storage per vehicle, m.
    pub jam_spacing: f64,
    /// Left turns at a single-lane approach yield to oncoming traffic: a
    /// left-turning head waits while the opposing approach, also green, has
    /// a head vehicle going straight or right.
    pub left_turn_yield: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            generation_rate: 1.0,
            seed: 1,
            duration: 3600,
            free_flow_speed: 13.89,
            saturation_flow: 0.5,
            jam_spacing: 7.5,
            left_turn_yield: true,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        if !(self.generation_rate >= 0.0 && self.generation_rate.is_finite()) {
            return Err(Error::Config(format!(
                "generation_rate must be non-negative, got {}",
                self.generation_rate
            )));
        }
        positive("free_flow_speed", self.free_flow_speed)?;
        positive("saturation_flow", self.saturation_flow)?;
        positive("jam_spacing", self.jam_spacing)?;
        if self.duration == 0 {
            return Err(Error::Config("duration must be at least 1 s".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VehicleState {
    Moving,
    Queued,
}

#[derive(Clone, Debug)]
pub struct Vehicle {
    pub trip: usize,
    /// Position in the trip's route.
    pub route_index: usize,
    /// Meters from the entry of the current road.
    pub link_position: f64,
    pub speed: f64,
    pub state: VehicleState,
    /// Distance left over in the current second when the vehicle reached an
    /// empty stop line; carried onto the next road if it crosses immediately.
    carry: f64,
    /// Distance covered in the current second before joining a queue.
    approach: f64,
}

#[derive(Clone, Debug, Default)]
struct LinkState {
    /// Front (most advanced) vehicle first.
    moving: VecDeque<usize>,
    queue: VecDeque<usize>,
    credit: f64,
    capacity: usize,
}

impl LinkState {
    fn occupancy(&self) -> usize {
        self.moving.len() + self.queue.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrafficSnapshot {
    pub time: u64,
    /// Vehicles per road, indexed like `RoadNetwork::roads`.
    pub counts: Vec<u32>,
    /// Signal state per signalized intersection, as last applied.
    pub sigma: Vec<i8>,
}

/// Everything a controller or estimator may need from one simulated second.
#[derive(Clone, Debug)]
pub struct StepReport {
    pub metrics: StepMetrics,
    /// Vehicles that crossed the stop line of each road into their next road.
    pub departures: Vec<u32>,
    /// Whether each road was shown green during the step.
    pub green: Vec<bool>,
    /// Road-to-road moves made during the step.
    pub turns: Vec<(usize, usize)>,
}

pub struct Simulation {
    net: Arc<RoadNetwork>,
    config: SimConfig,
    trips: Vec<Trip>,
    scheduled: usize,
    next_trip: usize,
    pending: VecDeque<usize>,
    vehicles: Vec<Vehicle>,
    links: Vec<LinkState>,
    opposing: Vec<Option<usize>>,
    bias_weights: Vec<f64>,
    sigma: Vec<i8>,
    time: u64,
    spawned: u64,
    arrived: u64,
}

impl Simulation {
    pub fn new(net: Arc<RoadNetwork>, config: SimConfig) -> Result<Self> {
        config.validate()?;
        let trips = generate_trips(&net, &config);
        let links = net
            .roads()
            .iter()
            .map(|r| LinkState {
                capacity: ((r.length / config.jam_spacing).floor() as usize).max(1),
                ..LinkState::default()
            })
            .collect();
        let n_ctrl = net.num_controlled();
        let opposing = opposing_roads(&net);
        Ok(Simulation {
            bias_weights: vec![1.0; n_ctrl],
            sigma: vec![1; n_ctrl],
            net,
            config,
            scheduled: trips.len(),
            trips,
            next_trip: 0,
            pending: VecDeque::new(),
            vehicles: Vec::new(),
            opposing,
            links,
            time: 0,
            spawned: 0,
            arrived: 0,
        })
    }

    pub fn network(&self) -> &Arc<RoadNetwork> {
        &self.net
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    /// The full trip table for the run, known before the first step.
    pub fn trips(&self) -> &[Trip] {
        &self.trips
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    /// Vehicles that have entered the road network so far.
    pub fn spawned(&self) -> u64 {
        self.spawned
    }

    pub fn arrived(&self) -> u64 {
        self.arrived
    }

    /// Trips generated but still waiting for room on their first road.
    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    pub fn in_network(&self) -> u64 {
        self.links.iter().map(|l| l.occupancy() as u64).sum()
    }

    /// Per-intersection weights of the squared-bias metric (diagonal of Q).
    pub fn set_bias_weights(&mut self, weights: Vec<f64>) -> Result<()> {
        if weights.len() != self.net.num_controlled() {
            return Err(Error::InvalidArgument(format!(
                "expected {} bias weights, got {}",
                self.net.num_controlled(),
                weights.len()
            )));
        }
        self.bias_weights = weights;
        Ok(())
    }

    pub fn vehicles_on(&self, road: usize) -> impl Iterator<Item = &Vehicle> {
        let link = &self.links[road];
        link.queue.iter().rev().chain(link.moving.iter()).map(move |&v| &self.vehicles[v])
    }

    /// Places a vehicle for `trip` directly on the road network, bypassing
    /// the demand schedule. Used to set up scenarios.
    pub fn insert_vehicle(&mut self, trip: Trip, link_position: f64) -> Result<usize> {
        let first = *trip
            .route
            .first()
            .ok_or_else(|| Error::InvalidArgument("trip has an empty route".into()))?;
        let length = self.net.roads()[first].length;
        if !(0.0..=length).contains(&link_position) {
            return Err(Error::InvalidArgument(format!("position {link_position} outside road")));
        }
        if self.links[first].occupancy() >= self.links[first].capacity {
            return Err(Error::InvalidArgument("road is full".into()));
        }
        self.trips.push(trip);
        let id = self.place(self.trips.len() - 1, first, link_position);
        // keep the moving list ordered front-first
        let link = &mut self.links[first];
        let mut order: Vec<usize> = link.moving.drain(..).collect();
        order.sort_by(|&a, &b| {
            self.vehicles[b].link_position.total_cmp(&self.vehicles[a].link_position)
        });
        link.moving = order.into();
        Ok(id)
    }

    pub fn observe(&self) -> TrafficSnapshot {
        TrafficSnapshot {
            time: self.time,
            counts: self.links.iter().map(|l| l.occupancy() as u32).collect(),
            sigma: self.sigma.clone(),
        }
    }

    /// Advances one second under signal states `sigma` (one per signalized
    /// intersection).
    pub fn step(&mut self, sigma: &[i8]) -> Result<StepReport> {
        if sigma.len() != self.net.num_controlled() {
            return Err(Error::InvalidArgument(format!(
                "signal plan covers {} intersections, network has {}",
                sigma.len(),
                self.net.num_controlled()
            )));
        }
        if sigma.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidArgument("signal states must be +1 or -1".into()));
        }
        self.sigma.copy_from_slice(sigma);

        self.spawn_vehicles();
        self.advance();
        let n_roads = self.net.roads().len();
        let mut departures = vec![0u32; n_roads];
        let mut green = vec![false; n_roads];
        let mut turns = Vec::new();
        self.discharge(&mut departures, &mut green, &mut turns);

        self.time += 1;
        let metrics = self.metrics();
        debug_assert_eq!(self.spawned, self.in_network() + self.arrived);
        Ok(StepReport { metrics, departures, green, turns })
    }

    /// Moves trips due this second to the pending list, then inserts pending
    /// trips whose first road has room, in order.
    fn spawn_vehicles(&mut self) {
        while self.next_trip < self.scheduled && self.trips[self.next_trip].depart <= self.time {
            self.pending.push_back(self.next_trip);
            self.next_trip += 1;
        }
        let mut waiting = VecDeque::with_capacity(self.pending.len());
        while let Some(trip) = self.pending.pop_front() {
            let first = self.trips[trip].route[0];
            if self.links[first].occupancy() < self.links[first].capacity {
                self.place(trip, first, 0.0);
            } else {
                waiting.push_back(trip);
            }
        }
        self.pending = waiting;
    }

    fn place(&mut self, trip: usize, road: usize, position: f64) -> usize {
        let id = self.vehicles.len();
        self.vehicles.push(Vehicle {
            trip,
            route_index: 0,
            link_position: position,
            speed: self.config.free_flow_speed,
            state: VehicleState::Moving,
            carry: 0.0,
            approach: 0.0,
        });
        self.links[road].moving.push_back(id);
        self.spawned += 1;
        id
    }

    fn advance(&mut self) {
        let v = self.config.free_flow_speed;
        let jam = self.config.jam_spacing;
        for (road, link) in self.links.iter_mut().enumerate() {
            let length = self.net.roads()[road].length;
            let mut still_moving = VecDeque::with_capacity(link.moving.len());
            while let Some(id) = link.moving.pop_front() {
                let back = (length - link.queue.len() as f64 * jam).max(0.0);
                let veh = &mut self.vehicles[id];
                let target = veh.link_position + v;
                if target >= back {
                    veh.carry = if link.queue.is_empty() { target - back } else { 0.0 };
                    veh.approach = (back - veh.link_position).max(0.0);
                    veh.link_position = back;
                    veh.speed = 0.0;
                    veh.state = VehicleState::Queued;
                    link.queue.push_back(id);
                } else {
                    veh.link_position = target;
                    veh.speed = v;
                    still_moving.push_back(id);
                }
            }
            link.moving = still_moving;
        }
    }

    /// Serves each stop-line queue at the saturation flow. A head vehicle
    /// whose trip ends on this road leaves the network without needing the
    /// signal; any other head needs green and room on its next road.
    fn discharge(&mut self, departures: &mut [u32], green: &mut [bool], turns: &mut Vec<(usize, usize)>) {
        let sat = self.config.saturation_flow;
        let jam = self.config.jam_spacing;
        let cap = sat.max(1.0);
        // heads that conflict with an opposing left turn, as of the start of the second
        let through_head: Vec<bool> = (0..self.links.len())
            .map(|road| match self.head_move(road) {
                Some(Some(next)) => !self.is_left_turn(road, next),
                _ => false,
            })
            .collect();
        for road in 0..self.links.len() {
            let is_green = self.net.is_green(road, &self.sigma);
            green[road] = is_green;
            let link = &mut self.links[road];
            link.credit = (link.credit + sat).min(cap);
            let mut stalled = false;
            loop {
                let Some(&id) = self.links[road].queue.front() else { break };
                let trip = self.vehicles[id].trip;
                let next_index = self.vehicles[id].route_index + 1;
                let next_road = self.trips[trip].route.get(next_index).copied();
                if next_road.is_some() && !is_green {
                    self.links[road].credit = 0.0;
                    stalled = true;
                    break;
                }
                if self.links[road].credit < 1.0 {
                    break;
                }
                match next_road {
                    None => {
                        self.links[road].queue.pop_front();
                        self.arrived += 1;
                        let veh = &mut self.vehicles[id];
                        veh.speed = self.config.free_flow_speed;
                        veh.state = VehicleState::Moving;
                    }
                    Some(next) => {
                        if self.links[next].occupancy() >= self.links[next].capacity {
                            stalled = true;
                            break;
                        }
                        if self.config.left_turn_yield && self.is_left_turn(road, next) {
                            if let Some(o) = self.opposing[road] {
                                if through_head[o] && self.net.is_green(o, &self.sigma) {
                                    stalled = true;
                                    break;
                                }
                            }
                        }
                        self.links[road].queue.pop_front();
                        let next_len = self.net.roads()[next].length;
                        let veh = &mut self.vehicles[id];
                        veh.route_index = next_index;
                        veh.link_position = veh.carry.min(next_len);
                        veh.carry = 0.0;
                        veh.speed = self.config.free_flow_speed;
                        veh.state = VehicleState::Moving;
                        self.links[next].moving.push_back(id);
                        turns.push((road, next));
                        departures[road] += 1;
                    }
                }
                self.links[road].credit -= 1.0;
            }
            // a queue being served moves up one slot per departure
            let creep = if stalled { 0.0 } else { (sat * jam).min(self.config.free_flow_speed) };
            let length = self.net.roads()[road].length;
            for (k, &id) in self.links[road].queue.iter().enumerate() {
                let veh = &mut self.vehicles[id];
                veh.carry = 0.0;
                // reported speed is the distance covered during the second
                veh.speed = creep.max(veh.approach);
                veh.approach = 0.0;
                veh.link_position = (length - k as f64 * jam).max(0.0);
            }
        }
    }


    /// Next road of the queue head: `None` without a head, `Some(None)` when
    /// the head's trip ends here.
    fn head_move(&self, road: usize) -> Option<Option<usize>> {
        let &id = self.links[road].queue.front()?;
        let veh = &self.vehicles[id];
        Some(self.trips[veh.trip].route.get(veh.route_index + 1).copied())
    }

    fn is_left_turn(&self, road: usize, next: usize) -> bool {
        let nodes = self.net.intersections();
        let roads = self.net.roads();
        let (a, b, c) = (&nodes[roads[road].from], &nodes[roads[road].to], &nodes[roads[next].to]);
        let (ux, uy) = (b.x - a.x, b.y - a.y);
        let (vx, vy) = (c.x - b.x, c.y - b.y);
        let cross = ux * vy - uy * vx;
        let dot = ux * vx + uy * vy;
        // U-turns cross oncoming traffic as well
        cross > 1e-9 * (ux.hypot(uy) * vx.hypot(vy)) || (cross.abs() <= 1e-9 && dot < 0.0)
    }

    fn metrics(&self) -> StepMetrics {
        let mut count = 0u64;
        let mut speed_sum = 0.0;
        let mut waiting = 0u64;
        let mut co2 = 0.0;
        for link in &self.links {
            for &id in link.moving.iter().chain(link.queue.iter()) {
                let speed = self.vehicles[id].speed;
                count += 1;
                speed_sum += speed;
                if speed < WAITING_SPEED {
                    waiting += 1;
                }
                co2 += surrogate_co2(speed, DriveMode::from_speed(speed));
            }
        }
        let counts: Vec<u32> = self.links.iter().map(|l| l.occupancy() as u32).collect();
        let x = compute_bias_vector(&self.net, &counts);
        let squared_bias = x.iter().zip(&self.bias_weights).map(|(xi, w)| w * xi * xi).sum();
        if count == 0 {
            return StepMetrics {
                mean_velocity: self.config.free_flow_speed,
                waiting_ratio: 0.0,
                co2_rate: 0.0,
                squared_bias,
                vehicle_count: 0,
            };
        }
        StepMetrics {
            mean_velocity: speed_sum / count as f64,
            waiting_ratio: waiting as f64 / count as f64,
            co2_rate: co2,
            squared_bias,
            vehicle_count: count,
        }
    }
}

/// For every road, the incoming road at the same intersection that points
/// most nearly the opposite way, if any is within 45 degrees of head-on.
fn opposing_roads(net: &RoadNetwork) -> Vec<Option<usize>> {
    let nodes = net.intersections();
    let heading = |r: usize| {
        let road = &net.roads()[r];
        let (a, b) = (&nodes[road.from], &nodes[road.to]);
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let len = dx.hypot(dy);
        (dx / len, dy / len)
    };
    (0..net.roads().len())
        .map(|r| {
            let (hx, hy) = heading(r);
            net.incoming(net.roads()[r].to)
                .iter()
                .copied()
                .filter(|&o| o != r)
                .map(|o| {
                    let (ox, oy) = heading(o);
                    (o, hx * ox + hy * oy)
                })
                .filter(|&(_, dot)| dot < -std::f64::consts::FRAC_1_SQRT_2)
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(o, _)| o)
        })
        .collect()
}
