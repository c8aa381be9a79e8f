//! Command implementations behind the `trafficops` binary.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::json;
use tokio::sync::broadcast::error::RecvError;
use trafficops_agent::suite::plan_summary;
use trafficops_core::fixtures;
use trafficops_core::network::update_signal_plan;
use trafficops_core::sim::{assess_performance, measured_phase_demands, run_simulation};
use trafficops_core::synth::{generate, SynthConfig};
use trafficops_core::trips::{load_trips, read_trip_rows, write_trips, write_zones, TripDataset};
use trafficops_core::webster::{optimize_intersection, OptimizationConstraints, WebsterError};
use trafficops_core::RoadNetwork;

use crate::config::ServiceConfig;
use crate::frames::{EventFrame, FrameKind};
use crate::session::SessionManager;

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Failed = 1,
    NeedsInput = 2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Markdown,
    Json,
}

/// Sibling paths written next to a generated trips file.
pub fn companion_paths(out: &Path) -> (PathBuf, PathBuf) {
    (out.with_extension("zones.csv"), out.with_extension("geometry.json"))
}

pub fn gen_data(trips: usize, zones: usize, seed: u64, out: &Path) -> Result<String, String> {
    let data = generate(&SynthConfig::new(trips, zones, seed))?;
    let (zones_path, geom_path) = companion_paths(out);
    let create = |p: &Path| File::create(p).map(BufWriter::new).map_err(|e| format!("{}: {e}", p.display()));
    let mut w = create(out)?;
    write_trips(&mut w, &data.records).map_err(|e| e.to_string())?;
    w.flush().map_err(|e| e.to_string())?;
    let mut w = create(&zones_path)?;
    write_zones(&mut w, &data.zones).map_err(|e| e.to_string())?;
    w.flush().map_err(|e| e.to_string())?;
    std::fs::write(&geom_path, data.geometry.to_json_string()).map_err(|e| format!("{}: {e}", geom_path.display()))?;
    Ok(format!(
        "wrote {} trips to {}\nwrote {} zones to {}\nwrote geometry to {}",
        data.records.len(),
        out.display(),
        data.zones.len(),
        zones_path.display(),
        geom_path.display()
    ))
}

pub fn import_trips(path: &Path, zones: Option<&Path>) -> Result<String, String> {
    let ds = match zones {
        Some(z) => load_trips(path, z),
        None => read_trip_rows(path, None).and_then(|rows| TripDataset::from_records(rows, Vec::new())),
    }
    .map_err(|e| e.to_string())?;
    let recs = ds.records();
    let vehicles: BTreeSet<&str> = recs.iter().map(|r| r.vehicle_id.as_str()).collect();
    let mut out = format!(
        "{}: {} trips, {} vehicles, {} zones, {} roads",
        path.display(),
        ds.len(),
        vehicles.len(),
        ds.zones().len(),
        ds.roads().len()
    );
    if let (Some(first), Some(last)) = (recs.iter().map(|r| r.depart).min(), recs.iter().map(|r| r.depart).max()) {
        out.push_str(&format!(
            "\ndepartures from {} to {}",
            first.format("%Y-%m-%d %H:%M:%S"),
            last.format("%Y-%m-%d %H:%M:%S")
        ));
    }
    Ok(out)
}

pub fn write_fixture(name: &str, out: &Path) -> Result<String, String> {
    let net = match name {
        "four_way" => fixtures::four_way_intersection(),
        "starved_corridor" => fixtures::starved_corridor(),
        "oversaturated" => fixtures::oversaturated(),
        "single_approach" => fixtures::single_approach(360.0, 1800.0, 60.0, 30.0),
        other => {
            return Err(format!(
                "unknown fixture `{other}` (four_way, starved_corridor, oversaturated, single_approach)"
            ))
        }
    };
    net.save_atomic(out).map_err(|e| e.to_string())?;
    Ok(format!("wrote {name} network to {}", out.display()))
}

fn load_net(path: &Path) -> Result<RoadNetwork, String> {
    RoadNetwork::load(path).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn simulate(net_path: &Path, horizon: u32, seed: u64, format: Format) -> Result<String, String> {
    let net = load_net(net_path)?;
    let res = run_simulation(&net, horizon, seed).map_err(|e| e.to_string())?;
    let report = assess_performance(&res, &net);
    Ok(match format {
        Format::Markdown => {
            let mut s = report.to_markdown();
            s.push_str(&format!(
                "\nVehicles: {} entered, {} exited, {} in network. Network average delay {:.2} s.",
                res.entered,
                res.exited,
                res.in_network,
                report.network_avg_delay(&res)
            ));
            s
        }
        Format::Json => json!({
            "horizon": horizon,
            "seed": seed,
            "entered": res.entered,
            "exited": res.exited,
            "in_network": res.in_network,
            "network_total_delay": res.network_total_delay(),
            "network_avg_delay": report.network_avg_delay(&res),
            "per_intersection": report.per_intersection,
        })
        .to_string(),
    })
}

/// Simulates to measure flows, then computes (and optionally writes) a Webster plan.
pub fn optimize(
    net_path: &Path,
    node: &str,
    horizon: u32,
    seed: u64,
    apply: bool,
    format: Format,
) -> Result<String, String> {
    let net = load_net(net_path)?;
    let res = run_simulation(&net, horizon, seed).map_err(|e| e.to_string())?;
    let demands = measured_phase_demands(&net, &res, node).map_err(|e| e.to_string())?;
    let plan = optimize_intersection(&demands, &OptimizationConstraints::default()).map_err(|e| match e {
        WebsterError::Oversaturated { y } => format!("{node} is oversaturated (total flow ratio {y:.3})"),
        other => format!("{node}: {other}"),
    })?;
    if apply {
        update_signal_plan(net_path, node, plan.clone()).map_err(|e| e.to_string())?;
    }
    Ok(match format {
        Format::Markdown => {
            let mut s = format!("Webster plan for {node}: {}", plan_summary(&plan));
            if apply {
                s.push_str(&format!("\nwrote plan to {}", net_path.display()));
            }
            s
        }
        Format::Json => json!({ "node_id": node, "plan": plan, "applied": apply }).to_string(),
    })
}

fn print_frame(err: &mut dyn Write, f: &EventFrame) {
    let p = &f.payload;
    let s = |k: &str| p[k].as_str().unwrap_or_default().to_string();
    let line = match f.kind {
        FrameKind::Thought => format!("[{}] Thought: {}", p["step"], s("text")),
        FrameKind::Action => format!("[{}] Action: {} | {}", p["step"], s("tool"), s("input")),
        FrameKind::Observation => {
            let mut l = format!("[{}] Observation: {}", p["step"], s("text"));
            for a in p["artifacts"].as_array().into_iter().flatten() {
                l.push_str(&format!("\n    artifact {} ({})", a["artifact_id"].as_str().unwrap_or_default(), a["kind"].as_str().unwrap_or_default()));
            }
            l
        }
        FrameKind::Artifact | FrameKind::Final | FrameKind::AskHuman | FrameKind::Error => return,
    };
    let _ = writeln!(err, "{line}");
}

/// One turn through a persisted session. The trace goes to `err`; the final
/// answer or question alone goes to `out`.
pub fn ask(
    cfg: &ServiceConfig,
    text: &str,
    bot: &str,
    session: Option<&str>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<Exit, String> {
    let mgr = Arc::new(SessionManager::open(cfg, cfg.backend()?)?);
    let s = match session {
        Some(id) => mgr.get(id),
        None => mgr.create(bot),
    }
    .map_err(|e| e.to_string())?;
    let _ = writeln!(err, "session: {}", s.id);
    let (_, mut rx) = s.subscribe();
    let turn = mgr.post(&s.id, text).map_err(|e| e.to_string())?;
    loop {
        let f = match rx.blocking_recv() {
            Ok(f) => f,
            Err(RecvError::Lagged(_)) => continue,
            Err(RecvError::Closed) => return Err("turn ended without a terminal frame".into()),
        };
        if f.turn != turn {
            continue;
        }
        print_frame(err, &f);
        let body = |k: &str| f.payload[k].as_str().unwrap_or_default().to_string();
        match f.kind {
            FrameKind::Final => {
                let _ = writeln!(out, "{}", body("text"));
                return Ok(Exit::Ok);
            }
            FrameKind::AskHuman => {
                let _ = writeln!(out, "{}", body("question"));
                return Ok(Exit::NeedsInput);
            }
            FrameKind::Error => return Err(body("message")),
            _ => {}
        }
    }
}
