//! Signalized road network model and its JSON file format.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{LinkEnds, NetworkGeometry, Point};

pub const MIN_GREEN_S: f64 = 5.0;
pub const MIN_CYCLE_S: f64 = 30.0;
pub const MAX_CYCLE_S: f64 = 180.0;
/// Slack allowed between a plan's cycle and the sum of its phase times.
pub const CYCLE_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("unknown node: {0}")]
    UnknownNode(String),
}

pub type Result<T, E = NetworkError> = std::result::Result<T, E>;

fn invalid(msg: impl Into<String>) -> NetworkError {
    NetworkError::Validation(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub road_id: String,
    pub from: String,
    pub to: String,
    /// meters
    pub length: f64,
    /// meters per second
    pub free_flow_speed: f64,
    /// Stop-line discharge rate for the whole link, vehicles per hour.
    pub sat_flow: f64,
    pub lanes: u32,
}

impl Link {
    pub fn free_flow_time(&self) -> f64 {
        self.length / self.free_flow_speed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub phase_id: String,
    pub green: f64,
    pub lost: f64,
    pub movements: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalPlan {
    pub cycle: f64,
    pub offset: f64,
    pub phases: Vec<Phase>,
}

impl SignalPlan {
    /// Checks the plan on its own: cycle bounds, minimum greens, and that the
    /// cycle equals the sum of green and lost times.
    pub fn validate(&self) -> Result<()> {
        if self.phases.is_empty() {
            return Err(invalid("plan has no phases"));
        }
        if !(MIN_CYCLE_S..=MAX_CYCLE_S).contains(&self.cycle) {
            return Err(invalid(format!(
                "cycle {} s outside [{MIN_CYCLE_S}, {MAX_CYCLE_S}]",
                self.cycle
            )));
        }
        if !(0.0..self.cycle).contains(&self.offset) {
            return Err(invalid(format!("offset {} s outside [0, cycle)", self.offset)));
        }
        let mut ids = BTreeSet::new();
        let mut total = 0.0;
        for p in &self.phases {
            if !ids.insert(p.phase_id.as_str()) {
                return Err(invalid(format!("duplicate phase id {}", p.phase_id)));
            }
            if !(p.green >= MIN_GREEN_S) {
                return Err(invalid(format!(
                    "phase {} green {} s below minimum {MIN_GREEN_S} s",
                    p.phase_id, p.green
                )));
            }
            if !(p.lost >= 0.0) || !p.lost.is_finite() {
                return Err(invalid(format!("phase {} has invalid lost time", p.phase_id)));
            }
            total += p.green + p.lost;
        }
        if (total - self.cycle).abs() > CYCLE_SUM_TOLERANCE {
            return Err(invalid(format!(
                "cycle {} s differs from sum of green and lost times {} s",
                self.cycle, total
            )));
        }
        Ok(())
    }

    /// Validates the plan against the approaches it controls: every incoming
    /// road must be served by exactly one phase.
    pub fn validate_for(&self, incoming: &[String]) -> Result<()> {
        self.validate()?;
        let mut served: BTreeMap<&str, usize> = BTreeMap::new();
        for p in &self.phases {
            for m in &p.movements {
                *served.entry(m.as_str()).or_default() += 1;
            }
        }
        for road in incoming {
            match served.remove(road.as_str()) {
                Some(1) => {}
                Some(n) => return Err(invalid(format!("road {road} served by {n} phases"))),
                None => return Err(invalid(format!("road {road} not served by any phase"))),
            }
        }
        if let Some(extra) = served.keys().next() {
            return Err(invalid(format!("movement {extra} is not an incoming road")));
        }
        Ok(())
    }

    /// Which phase serves `road`, if any.
    pub fn phase_for(&self, road: &str) -> Option<usize> {
        self.phases.iter().position(|p| p.movements.iter().any(|m| m == road))
    }

    pub fn total_lost(&self) -> f64 {
        self.phases.iter().map(|p| p.lost).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intersection {
    pub node_id: String,
    pub incoming: Vec<String>,
    pub plan: SignalPlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub route_id: String,
    pub links: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demand {
    pub route_id: String,
    /// vehicles per hour
    pub rate: f64,
    /// seconds
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadNetwork {
    pub geometry: NetworkGeometry,
    pub links: BTreeMap<String, Link>,
    pub intersections: BTreeMap<String, Intersection>,
    pub routes: Vec<Route>,
    pub demands: Vec<Demand>,
}

// On-disk layout.

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeRow {
    id: String,
    x: f64,
    y: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkRow {
    id: String,
    from: String,
    to: String,
    length: f64,
    free_flow_speed: f64,
    sat_flow: f64,
    lanes: u32,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntersectionRow {
    node_id: String,
    incoming: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanRow {
    node_id: String,
    cycle: f64,
    offset: f64,
    phases: Vec<Phase>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    nodes: Vec<NodeRow>,
    links: Vec<LinkRow>,
    intersections: Vec<IntersectionRow>,
    signal_plans: Vec<PlanRow>,
    routes: Vec<Route>,
    demands: Vec<Demand>,
}

impl RoadNetwork {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: NetworkFile = serde_json::from_str(s).map_err(|e| NetworkError::Parse {
            location: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        Self::from_file(file)
    }

    fn from_file(file: NetworkFile) -> Result<Self> {
        let mut nodes = BTreeMap::new();
        for n in file.nodes {
            if nodes.insert(n.id.clone(), Point { x: n.x, y: n.y }).is_some() {
                return Err(invalid(format!("duplicate node {}", n.id)));
            }
        }
        let mut links = BTreeMap::new();
        let mut ends = BTreeMap::new();
        for l in file.links {
            ends.insert(l.id.clone(), LinkEnds { from: l.from.clone(), to: l.to.clone() });
            let link = Link {
                road_id: l.id.clone(),
                from: l.from,
                to: l.to,
                length: l.length,
                free_flow_speed: l.free_flow_speed,
                sat_flow: l.sat_flow,
                lanes: l.lanes,
            };
            if links.insert(l.id.clone(), link).is_some() {
                return Err(invalid(format!("duplicate link {}", l.id)));
            }
        }
        let geometry = NetworkGeometry::new(nodes, ends).map_err(|e| invalid(e.to_string()))?;
        let mut plans: BTreeMap<String, SignalPlan> = BTreeMap::new();
        for p in file.signal_plans {
            let plan = SignalPlan {
                cycle: p.cycle,
                offset: p.offset,
                phases: p.phases,
            };
            if plans.insert(p.node_id.clone(), plan).is_some() {
                return Err(invalid(format!("duplicate signal plan for {}", p.node_id)));
            }
        }
        let mut intersections = BTreeMap::new();
        for i in file.intersections {
            let plan = plans
                .remove(&i.node_id)
                .ok_or_else(|| invalid(format!("intersection {} has no signal plan", i.node_id)))?;
            let node_id = i.node_id.clone();
            let x = Intersection {
                node_id: i.node_id,
                incoming: i.incoming,
                plan,
            };
            if intersections.insert(node_id.clone(), x).is_some() {
                return Err(invalid(format!("duplicate intersection {node_id}")));
            }
        }
        if let Some(orphan) = plans.keys().next() {
            return Err(invalid(format!("signal plan for {orphan} has no intersection")));
        }
        let net = Self {
            geometry,
            links,
            intersections,
            routes: file.routes,
            demands: file.demands,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        for l in self.links.values() {
            let positive = [l.length, l.free_flow_speed, l.sat_flow]
                .iter()
                .all(|v| v.is_finite() && *v > 0.0);
            if !positive || l.lanes < 1 {
                return Err(invalid(format!("link {} has non-positive attributes", l.road_id)));
            }
        }
        for x in self.intersections.values() {
            if !self.geometry.nodes.contains_key(&x.node_id) {
                return Err(invalid(format!("intersection {} is not a node", x.node_id)));
            }
            for road in &x.incoming {
                let link = self
                    .links
                    .get(road)
                    .ok_or_else(|| invalid(format!("intersection {} references unknown link {road}", x.node_id)))?;
                if link.to != x.node_id {
                    return Err(invalid(format!("link {road} does not end at intersection {}", x.node_id)));
                }
            }
            x.plan
                .validate_for(&x.incoming)
                .map_err(|e| invalid(format!("intersection {}: {}", x.node_id, strip(e))))?;
        }
        let mut route_ids = BTreeSet::new();
        for r in &self.routes {
            if !route_ids.insert(r.route_id.as_str()) {
                return Err(invalid(format!("duplicate route {}", r.route_id)));
            }
            if r.links.is_empty() {
                return Err(invalid(format!("route {} is empty", r.route_id)));
            }
            for id in &r.links {
                if !self.links.contains_key(id) {
                    return Err(invalid(format!("route {} references unknown link {id}", r.route_id)));
                }
            }
            for pair in r.links.windows(2) {
                if self.links[&pair[0]].to != self.links[&pair[1]].from {
                    return Err(invalid(format!(
                        "route {} is not contiguous between {} and {}",
                        r.route_id, pair[0], pair[1]
                    )));
                }
            }
        }
        for d in &self.demands {
            if !route_ids.contains(d.route_id.as_str()) {
                return Err(invalid(format!("demand references unknown route {}", d.route_id)));
            }
            if !(d.rate >= 0.0) || !d.rate.is_finite() {
                return Err(invalid(format!("demand on {} has invalid rate", d.route_id)));
            }
            if !(d.start < d.end) {
                return Err(invalid(format!("demand on {} has start >= end", d.route_id)));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|source| NetworkError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&s)
    }

    pub fn to_json_string(&self) -> String {
        let file = NetworkFile {
            nodes: self
                .geometry
                .nodes
                .iter()
                .map(|(id, p)| NodeRow { id: id.clone(), x: p.x, y: p.y })
                .collect(),
            links: self
                .links
                .values()
                .map(|l| LinkRow {
                    id: l.road_id.clone(),
                    from: l.from.clone(),
                    to: l.to.clone(),
                    length: l.length,
                    free_flow_speed: l.free_flow_speed,
                    sat_flow: l.sat_flow,
                    lanes: l.lanes,
                })
                .collect(),
            intersections: self
                .intersections
                .values()
                .map(|x| IntersectionRow {
                    node_id: x.node_id.clone(),
                    incoming: x.incoming.clone(),
                })
                .collect(),
            signal_plans: self
                .intersections
                .values()
                .map(|x| PlanRow {
                    node_id: x.node_id.clone(),
                    cycle: x.plan.cycle,
                    offset: x.plan.offset,
                    phases: x.plan.phases.clone(),
                })
                .collect(),
            routes: self.routes.clone(),
            demands: self.demands.clone(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("network serializes");
        s.push('\n');
        s
    }

    /// Writes via a temporary file in the same directory and a rename.
    pub fn save_atomic(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json_string().as_bytes())
    }

    /// Replaces the plan of `node_id` in memory after validating it.
    pub fn set_plan(&mut self, node_id: &str, plan: SignalPlan) -> Result<()> {
        let x = self
            .intersections
            .get_mut(node_id)
            .ok_or_else(|| NetworkError::UnknownNode(node_id.to_string()))?;
        plan.validate_for(&x.incoming)?;
        x.plan = plan;
        Ok(())
    }

    /// Signalized stop line at the downstream end of `road`, if any.
    pub fn signal_at(&self, road: &str) -> Option<&Intersection> {
        let link = self.links.get(road)?;
        self.intersections
            .get(&link.to)
            .filter(|x| x.incoming.iter().any(|r| r == road))
    }
}

fn strip(e: NetworkError) -> String {
    match e {
        NetworkError::Validation(m) => m,
        other => other.to_string(),
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |source| NetworkError::Io {
        path: path.display().to_string(),
        source,
    };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp: PathBuf = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let mut f = std::fs::File::create(&tmp).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(io)
}

/// Rewrites the network file at `net_path` with a new plan for `node_id`.
/// On any error the file is left untouched.
pub fn update_signal_plan(net_path: &Path, node_id: &str, plan: SignalPlan) -> Result<PathBuf> {
    let mut net = RoadNetwork::load(net_path)?;
    net.set_plan(node_id, plan)?;
    net.save_atomic(net_path)?;
    Ok(net_path.to_path_buf())
}
