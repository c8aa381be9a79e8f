//! Mesoscopic point-queue simulation of a signalized network.
//!
//! Vehicles enter at the upstream end of their route, traverse each link in
//! free-flow time and wait in a vertical queue at every signalized stop line.
//! Queues discharge at saturation flow during green, in 1 s steps, through a
//! fractional accumulator per approach. Unsignalized link ends are passed
//! without delay.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap, VecDeque};
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{RoadNetwork, SignalPlan};
use crate::webster::PhaseDemand;

const EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("horizon {horizon} s is shorter than the longest signal cycle {cycle} s")]
    HorizonTooShort { horizon: u32, cycle: f64 },
    #[error("unknown intersection: {0}")]
    UnknownNode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalProcess {
    /// Fixed headway `3600 / rate` starting at the demand's start time.
    #[default]
    Uniform,
    /// Exponential headways drawn from the run seed.
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: u32,
    pub seed: u64,
    pub arrivals: ArrivalProcess,
}

impl SimConfig {
    pub fn new(horizon: u32, seed: u64) -> Self {
        Self {
            horizon,
            seed,
            arrivals: ArrivalProcess::Uniform,
        }
    }

    pub fn with_arrivals(mut self, arrivals: ArrivalProcess) -> Self {
        self.arrivals = arrivals;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleRecord {
    pub route_id: String,
    pub entry: f64,
    /// `None` while the vehicle is still in the network at the horizon.
    pub exit: Option<f64>,
    pub free_flow_time: f64,
}

impl VehicleRecord {
    pub fn delay(&self) -> Option<f64> {
        self.exit.map(|x| x - self.entry - self.free_flow_time)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IntersectionStats {
    /// vehicle-seconds, including waiting of vehicles still queued at the horizon
    pub total_delay: f64,
    pub max_queue: u64,
    pub throughput: u64,
    pub arrivals: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ApproachStats {
    pub node_id: String,
    pub total_delay: f64,
    pub max_queue: u64,
    pub throughput: u64,
    pub arrivals: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub horizon: u32,
    pub seed: u64,
    pub arrivals: ArrivalProcess,
    pub entered: u64,
    pub exited: u64,
    pub in_network: u64,
    pub per_vehicle: Vec<VehicleRecord>,
    pub per_intersection: BTreeMap<String, IntersectionStats>,
    pub per_approach: BTreeMap<String, ApproachStats>,
}

impl SimResult {
    pub fn network_total_delay(&self) -> f64 {
        self.per_intersection.values().map(|s| s.total_delay).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("sim result serializes")
    }
}

/// Heap entry ordered so the earliest `ready_at` pops first (ties by id).
#[derive(Debug, Clone, Copy)]
struct Pending {
    ready_at: f64,
    vid: usize,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Pending {}
impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .ready_at
            .total_cmp(&self.ready_at)
            .then_with(|| other.vid.cmp(&self.vid))
    }
}

struct Leg {
    free_flow_time: f64,
    /// Index into the approach table when the link ends at a signal.
    approach: Option<usize>,
}

struct Approach<'a> {
    road: &'a str,
    node: &'a str,
    plan: &'a SignalPlan,
    phase: usize,
    /// vehicles per second
    rate: f64,
    queue: VecDeque<usize>,
    acc: f64,
    stats: ApproachStats,
}

struct Vehicle {
    route: usize,
    leg: usize,
    ready_at: f64,
}

/// Time in `[t0, t1)` during which `phase` of `plan` shows green.
pub fn green_overlap(plan: &SignalPlan, phase: usize, t0: f64, t1: f64) -> f64 {
    let start: f64 = plan.phases[..phase].iter().map(|p| p.green + p.lost).sum();
    let end = start + plan.phases[phase].green;
    let local = (t0 - plan.offset).rem_euclid(plan.cycle);
    let span = t1 - t0;
    let overlap = |a: f64, b: f64| (b.min(local + span) - a.max(local)).max(0.0);
    overlap(start, end) + overlap(start + plan.cycle, end + plan.cycle)
}

fn entry_times(net: &RoadNetwork, cfg: &SimConfig) -> Vec<(f64, usize)> {
    let route_index: HashMap<&str, usize> = net
        .routes
        .iter()
        .enumerate()
        .map(|(i, r)| (r.route_id.as_str(), i))
        .collect();
    let horizon = f64::from(cfg.horizon);
    let mut entries = Vec::new();
    for (di, d) in net.demands.iter().enumerate() {
        if d.rate <= 0.0 {
            continue;
        }
        let route = route_index[d.route_id.as_str()];
        let stop = d.end.min(horizon);
        match cfg.arrivals {
            ArrivalProcess::Uniform => {
                let headway = 3600.0 / d.rate;
                let mut k = 0u64;
                loop {
                    let t = d.start + k as f64 * headway;
                    if t >= stop {
                        break;
                    }
                    if t >= 0.0 {
                        entries.push((t, route));
                    }
                    k += 1;
                }
            }
            ArrivalProcess::Poisson => {
                let stream = cfg.seed ^ (di as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
                let mut rng = ChaCha8Rng::seed_from_u64(stream);
                let exp = Exp::new(d.rate / 3600.0).expect("positive rate");
                let mut t = d.start;
                loop {
                    t += exp.sample(&mut rng);
                    if t >= stop {
                        break;
                    }
                    if t >= 0.0 {
                        entries.push((t, route));
                    }
                }
            }
        }
    }
    entries.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    entries
}

/// Runs with uniform arrivals.
pub fn run_simulation(net: &RoadNetwork, horizon: u32, seed: u64) -> Result<SimResult, SimError> {
    run_simulation_with(net, &SimConfig::new(horizon, seed))
}

pub fn run_simulation_with(net: &RoadNetwork, cfg: &SimConfig) -> Result<SimResult, SimError> {
    let longest = net
        .intersections
        .values()
        .map(|x| x.plan.cycle)
        .fold(0.0, f64::max);
    if f64::from(cfg.horizon) < longest {
        return Err(SimError::HorizonTooShort {
            horizon: cfg.horizon,
            cycle: longest,
        });
    }

    let mut approaches: Vec<Approach> = Vec::new();
    let mut approach_of: HashMap<&str, usize> = HashMap::new();
    for x in net.intersections.values() {
        let mut incoming: Vec<&String> = x.incoming.iter().collect();
        incoming.sort();
        for road in incoming {
            let link = &net.links[road];
            approach_of.insert(road, approaches.len());
            approaches.push(Approach {
                road,
                node: &x.node_id,
                plan: &x.plan,
                phase: x.plan.phase_for(road).expect("validated plan serves every approach"),
                rate: link.sat_flow / 3600.0,
                queue: VecDeque::new(),
                acc: 0.0,
                stats: ApproachStats {
                    node_id: x.node_id.clone(),
                    ..Default::default()
                },
            });
        }
    }
    let legs: Vec<Vec<Leg>> = net
        .routes
        .iter()
        .map(|r| {
            r.links
                .iter()
                .map(|id| Leg {
                    free_flow_time: net.links[id].free_flow_time(),
                    approach: approach_of.get(id.as_str()).copied(),
                })
                .collect()
        })
        .collect();

    let entries = entry_times(net, cfg);
    let mut records: Vec<VehicleRecord> = Vec::with_capacity(entries.len());
    let mut vehicles: Vec<Vehicle> = Vec::with_capacity(entries.len());
    let mut transit: BinaryHeap<Pending> = BinaryHeap::new();
    let mut next_entry = 0usize;
    let mut exited = 0u64;
    let mut node_queue_max: BTreeMap<&str, u64> = BTreeMap::new();

    for step in 0..cfg.horizon {
        let t0 = f64::from(step);
        let t1 = t0 + 1.0;

        while next_entry < entries.len() && entries[next_entry].0 < t1 {
            let (entry, route) = entries[next_entry];
            next_entry += 1;
            let vid = vehicles.len();
            let ready_at = entry + legs[route][0].free_flow_time;
            vehicles.push(Vehicle { route, leg: 0, ready_at });
            records.push(VehicleRecord {
                route_id: net.routes[route].route_id.clone(),
                entry,
                exit: None,
                free_flow_time: legs[route].iter().map(|l| l.free_flow_time).sum(),
            });
            transit.push(Pending { ready_at, vid });
        }

        while transit.peek().is_some_and(|p| p.ready_at < t1) {
            let Pending { ready_at, vid } = transit.pop().expect("peeked");
            let v = &vehicles[vid];
            match legs[v.route][v.leg].approach {
                Some(a) => {
                    approaches[a].queue.push_back(vid);
                    approaches[a].stats.arrivals += 1;
                }
                None => {
                    if let Some(p) = advance(&mut vehicles[vid], &legs, ready_at) {
                        transit.push(Pending { ready_at: p, vid });
                    } else {
                        records[vid].exit = Some(ready_at);
                        exited += 1;
                    }
                }
            }
        }

        let mut node_queue: BTreeMap<&str, u64> = BTreeMap::new();
        for a in &mut approaches {
            let len = a.queue.len() as u64;
            a.stats.max_queue = a.stats.max_queue.max(len);
            *node_queue.entry(a.node).or_default() += len;
        }
        for (node, len) in node_queue {
            let m = node_queue_max.entry(node).or_default();
            *m = (*m).max(len);
        }

        for a in &mut approaches {
            let green = green_overlap(a.plan, a.phase, t0, t1);
            if green <= 0.0 {
                a.acc = a.acc.fract();
                continue;
            }
            let cap = a.rate * green;
            let before = a.acc;
            a.acc += cap;
            let n = ((a.acc + EPS).floor() as usize).min(a.queue.len());
            for k in 1..=n {
                let vid = a.queue.pop_front().expect("n bounded by queue length");
                let k = k as f64;
                let crossing = if k <= before { t0 } else { (t0 + (k - before) / cap).min(t1) };
                let ready_at = vehicles[vid].ready_at;
                let depart = crossing.max(ready_at);
                a.stats.total_delay += depart - ready_at;
                a.stats.throughput += 1;
                if let Some(p) = advance(&mut vehicles[vid], &legs, depart) {
                    transit.push(Pending { ready_at: p, vid });
                } else {
                    records[vid].exit = Some(depart);
                    exited += 1;
                }
            }
            a.acc -= n as f64;
            if a.queue.is_empty() {
                a.acc = a.acc.min(1.0);
            }
        }
    }

    let horizon = f64::from(cfg.horizon);
    let mut per_approach = BTreeMap::new();
    let mut per_intersection: BTreeMap<String, IntersectionStats> = net
        .intersections
        .keys()
        .map(|k| (k.clone(), IntersectionStats::default()))
        .collect();
    let mut queued = 0u64;
    for a in approaches {
        let mut stats = a.stats;
        for &vid in &a.queue {
            stats.total_delay += horizon - vehicles[vid].ready_at;
        }
        queued += a.queue.len() as u64;
        let node = per_intersection.get_mut(a.node).expect("approach node exists");
        node.total_delay += stats.total_delay;
        node.throughput += stats.throughput;
        node.arrivals += stats.arrivals;
        per_approach.insert(a.road.to_string(), stats);
    }
    for (node, m) in node_queue_max {
        per_intersection.get_mut(node).expect("node exists").max_queue = m;
    }

    Ok(SimResult {
        horizon: cfg.horizon,
        seed: cfg.seed,
        arrivals: cfg.arrivals,
        entered: vehicles.len() as u64,
        exited,
        in_network: transit.len() as u64 + queued,
        per_vehicle: records,
        per_intersection,
        per_approach,
    })
}

/// Moves a vehicle past the end of its current link at time `t`. Returns the
/// time it reaches the end of the next link, or `None` if it left the network.
fn advance(v: &mut Vehicle, legs: &[Vec<Leg>], t: f64) -> Option<f64> {
    let route = &legs[v.route];
    if v.leg + 1 >= route.len() {
        return None;
    }
    v.leg += 1;
    v.ready_at = t + route[v.leg].free_flow_time;
    Some(v.ready_at)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionPerformance {
    /// seconds per vehicle
    pub avg_delay: f64,
    pub max_queue: u64,
    /// vehicles per hour
    pub throughput: f64,
    pub degree_of_saturation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceReport {
    pub horizon: u32,
    pub per_intersection: BTreeMap<String, IntersectionPerformance>,
}

impl PerformanceReport {
    pub fn network_avg_delay(&self, res: &SimResult) -> f64 {
        let served: u64 = res.per_intersection.values().map(|s| s.throughput).sum();
        res.network_total_delay() / served.max(1) as f64
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "**Intersection performance over {} s**", self.horizon);
        out.push('\n');
        out.push_str("| Intersection | Avg delay (s/veh) | Max queue (veh) | Throughput (veh/h) | Degree of saturation |\n");
        out.push_str("|---|---:|---:|---:|---:|\n");
        for (node, p) in &self.per_intersection {
            let _ = writeln!(
                out,
                "| {node} | {:.2} | {} | {:.1} | {:.3} |",
                p.avg_delay, p.max_queue, p.throughput, p.degree_of_saturation
            );
        }
        out
    }
}

/// Measured arrival rate on `road`, vehicles per hour.
pub fn measured_flow(res: &SimResult, road: &str) -> f64 {
    res.per_approach
        .get(road)
        .map(|a| a.arrivals as f64 * 3600.0 / f64::from(res.horizon))
        .unwrap_or(0.0)
}

pub fn assess_performance(res: &SimResult, net: &RoadNetwork) -> PerformanceReport {
    let hours = f64::from(res.horizon) / 3600.0;
    let mut per_intersection = BTreeMap::new();
    for (node, x) in &net.intersections {
        let stats = res.per_intersection.get(node).cloned().unwrap_or_default();
        let plan = &x.plan;
        let dos = plan
            .phases
            .iter()
            .flat_map(|p| {
                let share = p.green / plan.cycle;
                p.movements.iter().map(move |m| (m, share))
            })
            .map(|(road, share)| {
                let s = net.links[road].sat_flow;
                measured_flow(res, road) / (share * s)
            })
            .fold(0.0, f64::max);
        per_intersection.insert(
            node.clone(),
            IntersectionPerformance {
                avg_delay: stats.total_delay / stats.throughput.max(1) as f64,
                max_queue: stats.max_queue,
                throughput: stats.throughput as f64 / hours,
                degree_of_saturation: dos,
            },
        );
    }
    PerformanceReport {
        horizon: res.horizon,
        per_intersection,
    }
}

/// Top `k` intersections by average delay, ties by node id.
pub fn rank_worst_intersections(report: &PerformanceReport, k: usize) -> Vec<String> {
    let mut rows: Vec<(&String, f64)> = report
        .per_intersection
        .iter()
        .map(|(n, p)| (n, p.avg_delay))
        .collect();
    rows.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    rows.into_iter().take(k).map(|(n, _)| n.clone()).collect()
}

/// Per-phase Webster inputs from measured approach flows: each phase's
/// critical movement is the one with the highest flow ratio.
pub fn measured_phase_demands(net: &RoadNetwork, res: &SimResult, node_id: &str) -> Result<Vec<PhaseDemand>, SimError> {
    let x = net
        .intersections
        .get(node_id)
        .ok_or_else(|| SimError::UnknownNode(node_id.to_string()))?;
    Ok(x.plan
        .phases
        .iter()
        .map(|p| {
            let (q, s) = p
                .movements
                .iter()
                .map(|m| (measured_flow(res, m), net.links[m].sat_flow))
                .max_by(|a, b| (a.0 / a.1).total_cmp(&(b.0 / b.1)))
                .unwrap_or((0.0, 1800.0));
            PhaseDemand::new(p.phase_id.clone(), q, s, p.lost).with_movements(p.movements.clone())
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::webster::uniform_delay;

    #[test]
    fn zero_demand_zero_delay() {
        let mut net = fixtures::four_way_intersection();
        for d in &mut net.demands {
            d.rate = 0.0;
        }
        let res = run_simulation(&net, 600, 1).unwrap();
        assert_eq!(res.entered, 0);
        let report = assess_performance(&res, &net);
        for (node, s) in &res.per_intersection {
            assert_eq!(s.total_delay, 0.0);
            assert_eq!(s.throughput, 0);
            assert_eq!(report.per_intersection[node].avg_delay, 0.0);
        }
    }

    #[test]
    fn horizon_shorter_than_cycle() {
        let net = fixtures::four_way_intersection();
        assert!(matches!(run_simulation(&net, 59, 1), Err(SimError::HorizonTooShort { .. })));
    }

    #[test]
    fn single_approach_matches_uniform_delay() {
        let net = fixtures::single_approach(360.0, 1800.0, 60.0, 30.0);
        let res = run_simulation(&net, 3600, 42).unwrap();
        let report = assess_performance(&res, &net);
        let d = report.per_intersection[fixtures::SINGLE_APPROACH_NODE].avg_delay;
        let target = uniform_delay(60.0, 0.5, 0.4);
        assert!((d - target).abs() <= 0.15 * target, "simulated {d} vs {target}");
        let x = report.per_intersection[fixtures::SINGLE_APPROACH_NODE].degree_of_saturation;
        assert!((x - 0.4).abs() < 0.01, "x = {x}");
    }

    #[test]
    fn all_green_is_nearly_free() {
        let net = fixtures::single_approach(900.0, 1800.0, 60.0, 55.0);
        let res = run_simulation(&net, 3600, 3).unwrap();
        let report = assess_performance(&res, &net);
        assert!(report.per_intersection[fixtures::SINGLE_APPROACH_NODE].avg_delay < 1.0);
    }

    #[test]
    fn deterministic_and_conserving() {
        let net = fixtures::starved_corridor();
        for arrivals in [ArrivalProcess::Uniform, ArrivalProcess::Poisson] {
            let cfg = SimConfig::new(1800, 9).with_arrivals(arrivals);
            let a = run_simulation_with(&net, &cfg).unwrap();
            let b = run_simulation_with(&net, &cfg).unwrap();
            assert_eq!(a.to_json(), b.to_json());
            assert_eq!(a.entered, a.exited + a.in_network);
            assert_eq!(a.per_vehicle.iter().filter(|v| v.exit.is_none()).count() as u64, a.in_network);
            for s in a.per_intersection.values() {
                assert!(s.arrivals >= s.throughput);
            }
        }
    }

    #[test]
    fn starved_fixture_ranks_bottlenecks() {
        let net = fixtures::starved_corridor();
        let res = run_simulation(&net, 3600, 42).unwrap();
        let report = assess_performance(&res, &net);
        let mut worst = rank_worst_intersections(&report, 3);
        worst.sort();
        assert_eq!(worst, fixtures::STARVED_NODES);
    }

    #[test]
    fn ranking_ties_and_overflow() {
        let perf = |d: f64| IntersectionPerformance {
            avg_delay: d,
            max_queue: 0,
            throughput: 0.0,
            degree_of_saturation: 0.0,
        };
        let report = PerformanceReport {
            horizon: 60,
            per_intersection: ["c", "a", "b", "d"].iter().map(|n| (n.to_string(), perf(1.0))).collect(),
        };
        assert_eq!(rank_worst_intersections(&report, 2), vec!["a", "b"]);
        assert_eq!(rank_worst_intersections(&report, 10), vec!["a", "b", "c", "d"]);
    }

    #[test]
    fn green_overlap_handles_offsets_and_wrap() {
        let net = fixtures::single_approach(360.0, 1800.0, 60.0, 30.0);
        let mut plan = net.intersections[fixtures::SINGLE_APPROACH_NODE].plan.clone();
        assert_eq!(green_overlap(&plan, 0, 0.0, 1.0), 1.0);
        assert_eq!(green_overlap(&plan, 0, 30.0, 31.0), 0.0);
        plan.offset = 59.5;
        assert_eq!(green_overlap(&plan, 0, 59.0, 60.0), 0.5);
    }
}
