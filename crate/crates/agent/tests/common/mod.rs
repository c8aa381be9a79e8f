#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use chrono::{NaiveDate, NaiveDateTime};
use tempfile::TempDir;
use trafficops_agent::suite::ToolContext;
use trafficops_core::artifacts::ArtifactStore;
use trafficops_core::fixtures;
use trafficops_core::synth::{generate, SynthConfig};
use trafficops_core::trips::TripDataset;

pub fn clock() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2019, 8, 13).unwrap().and_hms_opt(8, 0, 0).unwrap()
}

pub struct Env {
    pub dir: TempDir,
    pub ctx: ToolContext,
}

impl Env {
    pub fn net_path(&self) -> PathBuf {
        self.dir.path().join("network.json")
    }
}

/// Context with synthetic trips, their grid geometry and the starved corridor.
pub fn env() -> Env {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(ArtifactStore::open(dir.path().join("artifacts")).unwrap());
    let data = generate(&SynthConfig::new(3000, 9, 7)).unwrap();
    let net_path = dir.path().join("network.json");
    fixtures::starved_corridor().save_atomic(&net_path).unwrap();
    let mut ctx = ToolContext::new(clock(), store);
    ctx.dataset = Some(Arc::new(TripDataset::from_records(data.records, data.zones).unwrap()));
    ctx.geometry = Some(Arc::new(data.geometry));
    ctx.network_path = Some(net_path);
    Env { dir, ctx }
}
