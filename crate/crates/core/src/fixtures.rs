//! Sample networks used by tests, demos and the CLI.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{LinkEnds, NetworkGeometry, Point};
use crate::network::{Demand, Intersection, Link, Phase, RoadNetwork, Route, SignalPlan};

pub const SINGLE_APPROACH_NODE: &str = "X";
pub const STARVED_NODES: [&str; 3] = ["J2", "J3", "J5"];

struct Builder {
    nodes: BTreeMap<String, Point>,
    links: BTreeMap<String, Link>,
    intersections: BTreeMap<String, Intersection>,
    routes: Vec<Route>,
    demands: Vec<Demand>,
}

impl Builder {
    fn new() -> Self {
        Self {
            nodes: BTreeMap::new(),
            links: BTreeMap::new(),
            intersections: BTreeMap::new(),
            routes: Vec::new(),
            demands: Vec::new(),
        }
    }

    fn node(&mut self, id: &str, x: f64, y: f64) {
        self.nodes.insert(id.to_string(), Point { x, y });
    }

    fn link(&mut self, from: &str, to: &str, speed: f64, sat_flow: f64) -> String {
        let id = format!("{from}_{to}");
        let (a, b) = (self.nodes[from], self.nodes[to]);
        let length = ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt();
        self.links.insert(
            id.clone(),
            Link {
                road_id: id.clone(),
                from: from.to_string(),
                to: to.to_string(),
                length,
                free_flow_speed: speed,
                sat_flow,
                lanes: 1,
            },
        );
        id
    }

    fn signal(&mut self, node: &str, phases: Vec<(&str, f64, f64, Vec<String>)>) {
        let phases: Vec<Phase> = phases
            .into_iter()
            .map(|(id, green, lost, movements)| Phase {
                phase_id: id.to_string(),
                green,
                lost,
                movements,
            })
            .collect();
        let incoming = phases.iter().flat_map(|p| p.movements.clone()).collect();
        let cycle = phases.iter().map(|p| p.green + p.lost).sum();
        self.intersections.insert(
            node.to_string(),
            Intersection {
                node_id: node.to_string(),
                incoming,
                plan: SignalPlan {
                    cycle,
                    offset: 0.0,
                    phases,
                },
            },
        );
    }

    fn route(&mut self, id: &str, links: Vec<String>, rate: f64, end: f64) {
        self.routes.push(Route {
            route_id: id.to_string(),
            links,
        });
        self.demands.push(Demand {
            route_id: id.to_string(),
            rate,
            start: 0.0,
            end,
        });
    }

    fn build(self) -> RoadNetwork {
        let ends = self
            .links
            .iter()
            .map(|(id, l)| (id.clone(), LinkEnds { from: l.from.clone(), to: l.to.clone() }))
            .collect();
        let net = RoadNetwork {
            geometry: NetworkGeometry::new(self.nodes, ends).expect("fixture geometry is closed"),
            links: self.links,
            intersections: self.intersections,
            routes: self.routes,
            demands: self.demands,
        };
        net.validate().expect("fixture network is valid");
        net
    }
}

/// One intersection `C` with four single-link approaches and two phases.
pub fn four_way_intersection() -> RoadNetwork {
    let mut b = Builder::new();
    b.node("C", 0.0, 0.0);
    for (n, x, y) in [("N", 0.0, 300.0), ("S", 0.0, -300.0), ("E", 300.0, 0.0), ("W", -300.0, 0.0)] {
        b.node(n, x, y);
    }
    let ids: Vec<String> = ["N", "S", "E", "W"].iter().map(|n| b.link(n, "C", 13.9, 1800.0)).collect();
    b.signal(
        "C",
        vec![
            ("NS", 27.0, 3.0, vec![ids[0].clone(), ids[1].clone()]),
            ("EW", 27.0, 3.0, vec![ids[2].clone(), ids[3].clone()]),
        ],
    );
    for (i, rate) in [300.0, 250.0, 400.0, 350.0].into_iter().enumerate() {
        b.route(&format!("R{}", ids[i]), vec![ids[i].clone()], rate, 3600.0);
    }
    b.build()
}

/// A single approach `U_X` into intersection `X` served by one phase of
/// `green` seconds in a `cycle`, with uniform demand `flow` veh/h.
///
/// The 250 m approach (25 s free flow) puts deterministic arrivals mid-headway
/// relative to the start of red rather than exactly on it.
pub fn single_approach(flow: f64, sat_flow: f64, cycle: f64, green: f64) -> RoadNetwork {
    let mut b = Builder::new();
    b.node("U", -250.0, 0.0);
    b.node(SINGLE_APPROACH_NODE, 0.0, 0.0);
    let id = b.link("U", SINGLE_APPROACH_NODE, 10.0, sat_flow);
    b.signal(SINGLE_APPROACH_NODE, vec![("1", green, cycle - green, vec![id.clone()])]);
    b.route("main", vec![id], flow, 3600.0);
    b.build()
}

/// Arterial corridor through `J1..Jn` with one side street per intersection.
/// `plans[i]` is `(arterial green, side green)` with 3 s lost per phase;
/// `side_rates[i]` is the side-street demand in veh/h.
fn corridor(arterial_rate: f64, side_rates: &[f64], plans: &[(f64, f64)], spacing: f64) -> RoadNetwork {
    let n = side_rates.len();
    let mut b = Builder::new();
    b.node("W0", 0.0, 0.0);
    for i in 1..=n {
        b.node(&format!("J{i}"), spacing * i as f64, 0.0);
        b.node(&format!("N{i}"), spacing * i as f64, 300.0);
    }
    let east = format!("E{}", n + 1);
    b.node(&east, spacing * (n + 1) as f64, 0.0);

    let mut arterial = vec![b.link("W0", "J1", 13.9, 1800.0)];
    for i in 1..=n {
        let j = format!("J{i}");
        let next = if i == n { east.clone() } else { format!("J{}", i + 1) };
        let side = b.link(&format!("N{i}"), &j, 11.1, 1800.0);
        let (ga, gb) = plans[i - 1];
        b.signal(
            &j,
            vec![("A", ga, 3.0, vec![arterial[i - 1].clone()]), ("B", gb, 3.0, vec![side.clone()])],
        );
        b.route(&format!("side{i}"), vec![side], side_rates[i - 1], 3600.0);
        arterial.push(b.link(&j, &next, 13.9, 1800.0));
    }
    b.route("arterial", arterial, arterial_rate, 3600.0);
    b.build()
}

/// Six-intersection corridor where `J2`, `J3` and `J5` give their heavy side
/// street far too little green.
pub fn starved_corridor() -> RoadNetwork {
    let balanced = (30.0, 24.0);
    let starved = (44.0, 10.0);
    let mut plans = vec![balanced; 6];
    let mut side = vec![300.0; 6];
    for node in STARVED_NODES {
        let i: usize = node[1..].parse::<usize>().unwrap() - 1;
        plans[i] = starved;
        side[i] = 600.0;
    }
    corridor(400.0, &side, &plans, 400.0)
}

/// Two conflicting approaches whose combined flow ratio is far above 1.
pub fn oversaturated() -> RoadNetwork {
    let mut b = Builder::new();
    b.node("C", 0.0, 0.0);
    b.node("N", 0.0, 300.0);
    b.node("W", -300.0, 0.0);
    let ns = b.link("N", "C", 13.9, 1800.0);
    let ew = b.link("W", "C", 13.9, 1800.0);
    b.signal("C", vec![("NS", 27.0, 3.0, vec![ns.clone()]), ("EW", 27.0, 3.0, vec![ew.clone()])]);
    b.route("north", vec![ns], 1750.0, 3600.0);
    b.route("west", vec![ew], 1750.0, 3600.0);
    b.build()
}

/// Seeded random corridor with 1 to 4 intersections, random plans and demands.
pub fn random_network(seed: u64) -> RoadNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=4);
    let side: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..900.0_f64).round()).collect();
    let plans: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.random_range(12.0..60.0_f64).round(), rng.random_range(12.0..60.0_f64).round()))
        .collect();
    let arterial = rng.random_range(0.0..1200.0_f64).round();
    let spacing = rng.random_range(150.0..600.0_f64).round();
    corridor(arterial, &side, &plans, spacing)
}
