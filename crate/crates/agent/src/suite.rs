//! The traffic tools registered for the two bots.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::Arc;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use trafficops_core::artifacts::{ArtifactKind, ArtifactStore};
use trafficops_core::geometry::NetworkGeometry;
use trafficops_core::network::{update_signal_plan, RoadNetwork, SignalPlan};
use trafficops_core::render::{render_heatmap, render_map_markers, render_od_table, top_od_pairs};
use trafficops_core::sim::{
    assess_performance, measured_phase_demands, rank_worst_intersections, run_simulation, PerformanceReport, SimResult,
};
use trafficops_core::trips::{TimeWindow, TripDataset, TripStore};
use trafficops_core::webster::{optimize_intersection, OptimizationConstraints, WebsterError};

use crate::registry::{
    format_timestamp, ArgKind, ArgSpec, Clocked, Observation, RegistryError, ToolDescriptor, ToolRegistry,
    LAST_HOUR, NOW,
};

pub const DEFAULT_HORIZON_S: u32 = 3600;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BotKind {
    DataProcessing,
    SimulationControl,
}

impl BotKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BotKind::DataProcessing => "data_processing",
            BotKind::SimulationControl => "simulation_control",
        }
    }
}

impl std::str::FromStr for BotKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "data_processing" => Ok(BotKind::DataProcessing),
            "simulation_control" => Ok(BotKind::SimulationControl),
            other => Err(format!("unknown bot kind: {other}")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LastSim {
    pub result: SimResult,
    pub network: RoadNetwork,
    /// Set when a plan was written after this run.
    pub stale: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredPlan {
    pub artifact_id: String,
    pub plan: SignalPlan,
}

/// Per-session state handed to tool handlers.
pub struct ToolContext {
    pub clock: NaiveDateTime,
    pub dataset: Option<Arc<TripDataset>>,
    /// Road drawing used by the heatmap tool.
    pub geometry: Option<Arc<NetworkGeometry>>,
    pub network_path: Option<PathBuf>,
    pub artifacts: Arc<ArtifactStore>,
    pub last_sim: Option<LastSim>,
    /// Most recent optimized plan per intersection.
    pub plans: BTreeMap<String, StoredPlan>,
}

impl ToolContext {
    pub fn new(clock: NaiveDateTime, artifacts: Arc<ArtifactStore>) -> Self {
        Self {
            clock,
            dataset: None,
            geometry: None,
            network_path: None,
            artifacts,
            last_sim: None,
            plans: BTreeMap::new(),
        }
    }

    fn dataset(&self) -> Result<&TripDataset, String> {
        self.dataset
            .as_deref()
            .ok_or_else(|| "no trip dataset is loaded for this session".to_string())
    }

    fn network_path(&self) -> Result<&PathBuf, String> {
        self.network_path
            .as_ref()
            .ok_or_else(|| "no simulation network is configured for this session".to_string())
    }

    fn load_network(&self) -> Result<RoadNetwork, String> {
        RoadNetwork::load(self.network_path()?).map_err(|e| e.to_string())
    }

    fn simulate(&mut self, horizon: u32, seed: u64) -> Result<&LastSim, String> {
        let network = self.load_network()?;
        let result = run_simulation(&network, horizon, seed).map_err(|e| e.to_string())?;
        Ok(self.last_sim.insert(LastSim {
            result,
            network,
            stale: false,
        }))
    }

    /// Last run if still current, otherwise a fresh run with the same
    /// horizon and seed (or the defaults).
    fn current_sim(&mut self) -> Result<(&LastSim, bool), String> {
        match &self.last_sim {
            Some(s) if !s.stale => Ok((self.last_sim.as_ref().expect("checked"), false)),
            other => {
                let (h, seed) = other
                    .as_ref()
                    .map(|s| (s.result.horizon, s.result.seed))
                    .unwrap_or((DEFAULT_HORIZON_S, DEFAULT_SEED));
                Ok((self.simulate(h, seed)?, true))
            }
        }
    }
}

impl Clocked for ToolContext {
    fn clock(&self) -> NaiveDateTime {
        self.clock
    }
}

pub type Registry = ToolRegistry<ToolContext>;

fn describe_plan(plan: &SignalPlan) -> String {
    let phases: Vec<String> = plan
        .phases
        .iter()
        .map(|p| format!("phase {} green {:.1} s (lost {:.1} s)", p.phase_id, p.green, p.lost))
        .collect();
    format!("cycle {:.1} s; {}", plan.cycle, phases.join(", "))
}

fn get_current_time(reg: &mut Registry) -> Result<(), RegistryError> {
    reg.register(
        ToolDescriptor::new(
            "GetCurrentTime",
            "Returns the current date and time. Use it whenever a request refers to now, today or the current period.",
            "The current time as YYYY-MM-DD HH:MM:SS.",
        ),
        |_, ctx| Ok(Observation::ok(format!("The current time is {}.", format_timestamp(ctx.clock)))),
    )
}

fn query_trip_count(reg: &mut Registry) -> Result<(), RegistryError> {
    reg.register(
        ToolDescriptor::new(
            "QueryTripCount",
            "Counts trips departing within a time window.",
            "The number of trips in the window.",
        )
        .arg(ArgSpec::optional("window", ArgKind::TimeWindow, LAST_HOUR)),
        |args, ctx| {
            let w = args.window("window")?;
            let n = ctx.dataset()?.trip_count(&w);
            Ok(Observation::ok(format!("{n} trips departed between {w}.")))
        },
    )
}

fn compute_od_flow(reg: &mut Registry) -> Result<(), RegistryError> {
    reg.register(
        ToolDescriptor::new(
            "ComputeODFlow",
            "Computes the origin-destination trip matrix for a time window and tabulates the busiest zone pairs.",
            "Total trips, the top OD pairs as a markdown table, and the table's artifact id.",
        )
        .arg(ArgSpec::optional("window", ArgKind::TimeWindow, LAST_HOUR))
        .arg(ArgSpec::optional("top_k", ArgKind::Integer, "10")),
        |args, ctx| {
            let w = args.window("window")?;
            let k = args.integer("top_k")?;
            if k < 1 {
                return Err("top_k must be at least 1".into());
            }
            let m = ctx.dataset()?.od_matrix(&w);
            let art = render_od_table(&ctx.artifacts, &m, k as usize).map_err(|e| e.to_string())?;
            let mut text = format!("{} trips between {w}.", m.total());
            match top_od_pairs(&m, k as usize).first() {
                Some((o, d, c)) => {
                    let _ = write!(text, " Busiest pair: {o} -> {d} with {c} trips.");
                }
                None => text.push_str(" No trips in this window."),
            }
            let table = std::fs::read_to_string(&art.path).map_err(|e| e.to_string())?;
            let _ = write!(text, " Table saved as artifact {}.\n\n{}", art.artifact_id, table.trim_end());
            Ok(Observation::ok(text).with_artifact(art.artifact_id))
        },
    )
}

fn plot_heatmap(reg: &mut Registry) -> Result<(), RegistryError> {
    reg.register(
        ToolDescriptor::new(
            "PlotHeatmap",
            "Draws a road-network heatmap of link flows over the hour ending at the given time.",
            "The heatmap image's artifact id and file path, with the busiest road.",
        )
        .arg(ArgSpec::optional("time", ArgKind::Timestamp, NOW)),
        |args, ctx| {
            let t = args.timestamp("time")?;
            let w = TimeWindow::hour_ending(t);
            let flows = ctx.dataset()?.link_flows(&w);
            let geom = ctx
                .geometry
                .clone()
                .ok_or_else(|| "no road geometry is configured for this session".to_string())?;
            let title = format!("Link flows, {w}");
            let art = render_heatmap(&ctx.artifacts, &geom, &flows, &title).map_err(|e| e.to_string())?;
            let mut text = format!(
                "Heatmap of link flows for {w} saved as artifact {} at {}.",
                art.artifact_id,
                art.path.display()
            );
            match flows.flows.iter().max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0))) {
                Some((road, f)) => {
                    let _ = write!(text, " Busiest road: {road} with {f} trips.");
                }
                None => text.push_str(" No trips were recorded in this hour."),
            }
            Ok(Observation::ok(text).with_artifact(art.artifact_id))
        },
    )
}

fn run_simulation_tool(reg: &mut Registry) -> Result<(), RegistryError> {
    reg.register(
        ToolDescriptor::new(
            "RunSimulation",
            "Runs the traffic simulation of the current network and signal plans.",
            "Vehicle counts and the network average delay.",
        )
        .arg(ArgSpec::optional("horizon_s", ArgKind::Integer, "3600"))
        .arg(ArgSpec::optional("seed", ArgKind::Integer, "42")),
        |args, ctx| {
            let horizon = u32::try_from(args.integer("horizon_s")?)
                .ok()
                .filter(|h| *h > 0)
                .ok_or("horizon_s must be a positive number of seconds")?;
            let seed = u64::try_from(args.integer("seed")?).map_err(|_| "seed must be non-negative")?;
            let sim = ctx.simulate(horizon, seed)?;
            let report = assess_performance(&sim.result, &sim.network);
            let r = &sim.result;
            Ok(Observation::ok(format!(
                "Simulated {horizon} s (seed {seed}) over {} signalized intersections: {} vehicles entered, {} left \
                 the network, {} still in it. Network average delay {:.2} s per vehicle.",
                sim.network.intersections.len(),
                r.entered,
                r.exited,
                r.in_network,
                report.network_avg_delay(r)
            )))
        },
    )
}

fn assess_tool(reg: &mut Registry) -> Result<(), RegistryError> {
    reg.register(
        ToolDescriptor::new(
            "AssessPerformance",
            "Evaluates each intersection using the latest simulation run, running one first if needed.",
            "A markdown table of average delay, maximum queue, throughput and degree of saturation per intersection, with its artifact id.",
        ),
        |_, ctx| {
            let (sim, reran) = ctx.current_sim()?;
            let report = assess_performance(&sim.result, &sim.network);
            let md = report.to_markdown();
            let art = ctx
                .artifacts
                .store(ArtifactKind::MarkdownTable, md.as_bytes(), "Intersection performance")
                .map_err(|e| e.to_string())?;
            let lead = if reran { "Ran a new simulation. " } else { "" };
            Ok(Observation::ok(format!(
                "{lead}Performance report saved as artifact {}.\n\n{}",
                art.artifact_id,
                md.trim_end()
            ))
            .with_artifact(art.artifact_id))
        },
    )
}

fn rank_tool(reg: &mut Registry) -> Result<(), RegistryError> {
    reg.register(
        ToolDescriptor::new(
            "RankWorstIntersections",
            "Finds the intersections with the highest average delay in the latest simulation and marks them on a map.",
            "The ranked intersection ids with their delays, and the map's artifact id.",
        )
        .arg(ArgSpec::optional("k", ArgKind::Integer, "3")),
        |args, ctx| {
            let k = args.integer("k")?;
            if k < 1 {
                return Err("k must be at least 1".into());
            }
            let (sim, _) = ctx.current_sim()?;
            let report: PerformanceReport = assess_performance(&sim.result, &sim.network);
            let worst = rank_worst_intersections(&report, k as usize);
            let marks: Vec<(String, String)> = worst
                .iter()
                .enumerate()
                .map(|(i, n)| (n.clone(), format!("#{} {n}", i + 1)))
                .collect();
            let geom = sim.network.geometry.clone();
            let title = format!("Worst {} intersections by average delay", worst.len());
            let art = render_map_markers(&ctx.artifacts, &geom, &marks, &title).map_err(|e| e.to_string())?;
            let list: Vec<String> = worst
                .iter()
                .enumerate()
                .map(|(i, n)| format!("{}. {n} ({:.2} s/veh)", i + 1, report.per_intersection[n].avg_delay))
                .collect();
            Ok(Observation::ok(format!(
                "Worst intersections by average delay: {}. Map saved as artifact {}.",
                list.join(", "),
                art.artifact_id
            ))
            .with_artifact(art.artifact_id))
        },
    )
}

fn optimize_tool(reg: &mut Registry) -> Result<(), RegistryError> {
    reg.register(
        ToolDescriptor::new(
            "OptimizeSignalWebster",
            "Computes a fixed-time signal plan for one intersection with Webster's method from the flows measured in the latest simulation.",
            "The optimized cycle and phase greens, saved as a plan artifact that UpdateSignalPlan can apply.",
        )
        .arg(ArgSpec::required("node_id", ArgKind::NodeId))
        .priority(1),
        |args, ctx| {
            let node = args.text("node_id")?.to_string();
            let Some(sim) = &ctx.last_sim else {
                return Err("no simulation results yet: run RunSimulation first to measure flows".into());
            };
            let net = ctx.load_network()?;
            if !net.intersections.contains_key(&node) {
                return Err(format!(
                    "unknown intersection {node}; signalized intersections are {}",
                    net.intersections.keys().cloned().collect::<Vec<_>>().join(", ")
                ));
            }
            let demands = measured_phase_demands(&net, &sim.result, &node).map_err(|e| e.to_string())?;
            let plan = optimize_intersection(&demands, &OptimizationConstraints::default()).map_err(|e| match e {
                WebsterError::Oversaturated { y } => {
                    format!("{node} is oversaturated (total flow ratio {y:.3}); no practical fixed-time cycle exists")
                }
                other => other.to_string(),
            })?;
            let bytes = serde_json::to_vec_pretty(&plan).expect("plan serializes");
            let art = ctx
                .artifacts
                .store(ArtifactKind::PlanFile, &bytes, &format!("Webster plan for {node}"))
                .map_err(|e| e.to_string())?;
            let text = format!(
                "Webster plan for {node}: {}. Saved as plan artifact {}; apply it with UpdateSignalPlan.",
                describe_plan(&plan),
                art.artifact_id
            );
            ctx.plans.insert(
                node,
                StoredPlan {
                    artifact_id: art.artifact_id.clone(),
                    plan,
                },
            );
            Ok(Observation::ok(text).with_artifact(art.artifact_id))
        },
    )
}

fn update_tool(reg: &mut Registry) -> Result<(), RegistryError> {
    reg.register(
        ToolDescriptor::new(
            "UpdateSignalPlan",
            "Writes a signal plan for one intersection into the simulation network file.",
            "Confirmation with the written cycle and greens.",
        )
        .arg(ArgSpec::required("node_id", ArgKind::NodeId))
        .arg(
            ArgSpec::optional("plan", ArgKind::String, "latest")
                .hint("`latest` for the last plan optimized for this intersection, or a plan artifact id"),
        ),
        |args, ctx| {
            let node = args.text("node_id")?.to_string();
            let reference = args.text("plan")?;
            let plan = if reference == "latest" {
                ctx.plans
                    .get(&node)
                    .map(|p| p.plan.clone())
                    .ok_or_else(|| format!("no optimized plan for {node} yet: run OptimizeSignalWebster first"))?
            } else {
                let (art, bytes) = ctx.artifacts.read_bytes(reference).map_err(|e| e.to_string())?;
                if art.kind != ArtifactKind::PlanFile {
                    return Err(format!("artifact {reference} is not a signal plan"));
                }
                serde_json::from_slice(&bytes).map_err(|e| format!("artifact {reference} is not a valid plan: {e}"))?
            };
            let path = ctx.network_path()?.clone();
            update_signal_plan(&path, &node, plan.clone()).map_err(|e| e.to_string())?;
            if let Some(s) = &mut ctx.last_sim {
                s.stale = true;
            }
            Ok(Observation::ok(format!(
                "Wrote the plan for {node} to {}: {}.",
                path.display(),
                describe_plan(&plan)
            )))
        },
    )
}

/// Every tool in the suite.
pub fn full_registry() -> Registry {
    let mut reg = Registry::new();
    for add in [
        get_current_time,
        query_trip_count,
        compute_od_flow,
        plot_heatmap,
        run_simulation_tool,
        assess_tool,
        rank_tool,
        optimize_tool,
        update_tool,
    ] {
        add(&mut reg).expect("suite descriptors are valid and distinct");
    }
    reg
}

type Install = fn(&mut Registry) -> Result<(), RegistryError>;

pub fn registry_for(kind: BotKind) -> Registry {
    let mut reg = Registry::new();
    let tools: &[Install] = match kind {
        BotKind::DataProcessing => &[get_current_time, query_trip_count, compute_od_flow, plot_heatmap],
        BotKind::SimulationControl => &[
            get_current_time,
            run_simulation_tool,
            assess_tool,
            rank_tool,
            optimize_tool,
            update_tool,
        ],
    };
    for add in tools {
        add(&mut reg).expect("suite descriptors are valid and distinct");
    }
    reg
}

/// One-line plan description as used in tool observations.
pub fn plan_summary(plan: &SignalPlan) -> String {
    describe_plan(plan)
}
