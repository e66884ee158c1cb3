use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Intersection, RoadNetwork, RoadSpec, DEFAULT_L_REF, DEFAULT_N_REF};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    intersections: Vec<IntersectionRecord>,
    roads: Vec<RoadRecord>,
    #[serde(default = "default_l_ref")]
    l_ref: f64,
    #[serde(default = "default_n_ref")]
    n_ref: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntersectionRecord {
    id: u32,
    x: f64,
    y: f64,
    #[serde(default = "default_signalized")]
    signalized: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RoadRecord {
    from: u32,
    to: u32,
    length: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    s: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c: Option<i64>,
}

fn default_l_ref() -> f64 {
    DEFAULT_L_REF
}

fn default_n_ref() -> f64 {
    DEFAULT_N_REF
}

fn default_signalized() -> bool {
    true
}

impl RoadNetwork {
    /// Parses the JSON network format. Roads without `s`/`c` get them from
    /// geometry.
    pub fn from_json_str(text: &str) -> Result<RoadNetwork> {
        let file: NetworkFile = serde_json::from_str(text).map_err(|e| Error::from_json(&e))?;
        let intersections = file
            .intersections
            .into_iter()
            .map(|r| Intersection { id: r.id, x: r.x, y: r.y, signalized: r.signalized })
            .collect();
        let mut roads = Vec::with_capacity(file.roads.len());
        for (idx, r) in file.roads.into_iter().enumerate() {
            let sign = match r.s {
                None => None,
                Some(s @ (-1 | 1)) => Some(s as i8),
                Some(s) => {
                    return Err(Error::parse(format!("roads[{idx}].s"), format!("sign must be +1 or -1, got {s}")))
                }
            };
            let group_coeff = match r.c {
                None => None,
                Some(c @ (1 | 2)) => Some(c as u8),
                Some(c) => {
                    return Err(Error::parse(format!("roads[{idx}].c"), format!("group coefficient must be 1 or 2, got {c}")))
                }
            };
            roads.push(RoadSpec { from: r.from, to: r.to, length: r.length, sign, group_coeff });
        }
        RoadNetwork::new(intersections, roads, file.l_ref, file.n_ref)
    }

    pub fn to_json_string(&self) -> String {
        let file = NetworkFile {
            intersections: self
                .intersections
                .iter()
                .map(|n| IntersectionRecord { id: n.id, x: n.x, y: n.y, signalized: n.signalized })
                .collect(),
            roads: self
                .roads
                .iter()
                .map(|r| RoadRecord {
                    from: self.intersections[r.from].id,
                    to: self.intersections[r.to].id,
                    length: r.length,
                    s: Some(i64::from(r.sign)),
                    c: Some(i64::from(r.group_coeff)),
                })
                .collect(),
            l_ref: self.l_ref,
            n_ref: self.n_ref,
        };
        serde_json::to_string_pretty(&file).expect("network serializes")
    }
}

pub fn load_network(path: impl AsRef<Path>) -> Result<RoadNetwork> {
    let text = fs::read_to_string(path)?;
    RoadNetwork::from_json_str(&text)
}

pub fn save_network(net: &RoadNetwork, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, net.to_json_string())?;
    Ok(())
}
