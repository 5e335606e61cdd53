//! Physical-plausibility metrics and the batch harness.
//!
//! Collision% counts objects taking part in at least one penetration pair,
//! support pairs exempt. OOB% counts objects whose footprint leaves the room.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::mock::stable_hash;
use crate::document::{format_header, RecordWriter};
use crate::geometry::{oob_excess, overlap_area};
use crate::memory::PriorMemory;
use crate::pipeline::{generate, Clients, PipelineConfig};
use crate::refine::{EPS_OOB, EPS_PEN};
use crate::scene::{Layout, ShortDescription};

pub const REPORT_FORMAT: &str = "eval_report";
pub const REPORT_VERSION: u32 = 1;

/// Ids of objects in at least one penetrating pair.
pub fn colliding_ids(layout: &Layout) -> BTreeSet<String> {
    let objs: Vec<_> = layout.objects().collect();
    let mut out = BTreeSet::new();
    for i in 0..objs.len() {
        for j in i + 1..objs.len() {
            let (a, b) = (objs[i], objs[j]);
            if layout.stacked(&a.id, &b.id) {
                continue;
            }
            if overlap_area(&a.footprint, &b.footprint) > EPS_PEN {
                out.insert(a.id.clone());
                out.insert(b.id.clone());
            }
        }
    }
    out
}

pub fn collision_rate(layout: &Layout) -> f64 {
    let n = layout.object_count();
    if n == 0 {
        return 0.0;
    }
    100.0 * colliding_ids(layout).len() as f64 / n as f64
}

pub fn oob_rate(layout: &Layout) -> f64 {
    let n = layout.object_count();
    if n == 0 {
        return 0.0;
    }
    let k = layout
        .objects()
        .filter(|o| oob_excess(&o.footprint, &layout.room) > EPS_OOB)
        .count();
    100.0 * k as f64 / n as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub scene: usize,
    pub repeat: usize,
    pub seed: u64,
    pub collision: f64,
    pub oob: f64,
    pub objects: usize,
    pub penalties: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSummary {
    pub description: String,
    pub runs: usize,
    pub collision: f64,
    pub oob: f64,
    pub objects: f64,
    /// Mean penalty per step, over the runs still active at that step.
    pub trajectory: Vec<f64>,
    pub failures: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverallSummary {
    pub runs: usize,
    pub failures: usize,
    pub collision: f64,
    pub oob: f64,
    pub objects: f64,
    pub trajectory: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenes: Vec<SceneSummary>,
    pub overall: OverallSummary,
    pub runs: Vec<RunMetrics>,
}

pub fn run_seed(seed: u64, scene: usize, repeat: usize) -> u64 {
    stable_hash(&[
        &seed.to_le_bytes(),
        &(scene as u64).to_le_bytes(),
        &(repeat as u64).to_le_bytes(),
    ])
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn mean_trajectory(runs: &[&RunMetrics]) -> Vec<f64> {
    let len = runs.iter().map(|r| r.penalties.len()).max().unwrap_or(0);
    (0..len)
        .map(|t| mean(runs.iter().filter_map(|r| r.penalties.get(t).copied())))
        .collect()
}

/// Runs every description `repeats` times. Failed runs are recorded on
/// their scene and excluded from the means.
pub fn evaluate_batch(
    descriptions: &[ShortDescription],
    repeats: usize,
    memory: &PriorMemory,
    config: &PipelineConfig,
    clients: &Clients,
    seed: u64,
) -> EvalReport {
    let repeats = repeats.max(1);
    let jobs: Vec<(usize, usize)> = (0..descriptions.len())
        .flat_map(|s| (0..repeats).map(move |r| (s, r)))
        .collect();
    let results: Vec<Result<RunMetrics, String>> = jobs
        .par_iter()
        .map(|&(s, r)| {
            let run = run_seed(seed, s, r);
            generate(&descriptions[s], memory, config, clients, run)
                .map(|g| RunMetrics {
                    scene: s,
                    repeat: r,
                    seed: run,
                    collision: collision_rate(&g.layout),
                    oob: oob_rate(&g.layout),
                    objects: g.layout.object_count(),
                    penalties: g.trace.penalties(),
                })
                .map_err(|e| format!("repeat {r}: {e}"))
        })
        .collect();

    let mut runs = Vec::new();
    let mut scenes: Vec<SceneSummary> = descriptions
        .iter()
        .map(|d| SceneSummary {
            description: d.as_str().to_string(),
            runs: 0,
            collision: 0.0,
            oob: 0.0,
            objects: 0.0,
            trajectory: Vec::new(),
            failures: Vec::new(),
        })
        .collect();
    for ((s, _), res) in jobs.iter().zip(results) {
        match res {
            Ok(m) => runs.push(m),
            Err(e) => scenes[*s].failures.push(e),
        }
    }
    for (s, summary) in scenes.iter_mut().enumerate() {
        let mine: Vec<&RunMetrics> = runs.iter().filter(|m| m.scene == s).collect();
        summary.runs = mine.len();
        summary.collision = mean(mine.iter().map(|m| m.collision));
        summary.oob = mean(mine.iter().map(|m| m.oob));
        summary.objects = mean(mine.iter().map(|m| m.objects as f64));
        summary.trajectory = mean_trajectory(&mine);
    }
    let all: Vec<&RunMetrics> = runs.iter().collect();
    let overall = OverallSummary {
        runs: runs.len(),
        failures: scenes.iter().map(|s| s.failures.len()).sum(),
        collision: mean(all.iter().map(|m| m.collision)),
        oob: mean(all.iter().map(|m| m.oob)),
        objects: mean(all.iter().map(|m| m.objects as f64)),
        trajectory: mean_trajectory(&all),
    };
    EvalReport {
        scenes,
        overall,
        runs,
    }
}

fn join(xs: &[f64]) -> String {
    xs.iter()
        .map(|p| format!("{p:.4}"))
        .collect::<Vec<_>>()
        .join(",")
}

impl EvalReport {
    /// Tab-separated table: one row per scene, then the overall row.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(
            "scene\tdescription\truns\tfailures\tcollision_pct\toob_pct\tobjects\ttrajectory\n",
        );
        for (i, s) in self.scenes.iter().enumerate() {
            let _ = writeln!(
                out,
                "{i}\t{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{}",
                s.description.replace(['\t', '\n'], " "),
                s.runs,
                s.failures.len(),
                s.collision,
                s.oob,
                s.objects,
                join(&s.trajectory)
            );
        }
        let o = &self.overall;
        let _ = writeln!(
            out,
            "all\t-\t{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{}",
            o.runs,
            o.failures,
            o.collision,
            o.oob,
            o.objects,
            join(&o.trajectory)
        );
        out
    }

    pub fn to_document(&self) -> String {
        let mut out = format_header(REPORT_FORMAT, REPORT_VERSION);
        out.push('\n');
        for (i, s) in self.scenes.iter().enumerate() {
            let rec = RecordWriter::new("scene")
                .uint("index", i as u64)
                .str("description", &s.description)
                .uint("runs", s.runs as u64)
                .num("collision", s.collision)
                .num("oob", s.oob)
                .num("objects", s.objects)
                .str("trajectory", &join(&s.trajectory));
            let _ = writeln!(out, "{}", rec.finish());
            for f in &s.failures {
                let rec = RecordWriter::new("failure")
                    .uint("scene", i as u64)
                    .str("message", f);
                let _ = writeln!(out, "{}", rec.finish());
            }
        }
        for m in &self.runs {
            let rec = RecordWriter::new("run")
                .uint("scene", m.scene as u64)
                .uint("repeat", m.repeat as u64)
                .uint("seed", m.seed)
                .num("collision", m.collision)
                .num("oob", m.oob)
                .uint("objects", m.objects as u64)
                .str("penalties", &join(&m.penalties));
            let _ = writeln!(out, "{}", rec.finish());
        }
        let o = &self.overall;
        let rec = RecordWriter::new("overall")
            .uint("runs", o.runs as u64)
            .uint("failures", o.failures as u64)
            .num("collision", o.collision)
            .num("oob", o.oob)
            .num("objects", o.objects)
            .str("trajectory", &join(&o.trajectory));
        let _ = writeln!(out, "{}", rec.finish());
        out
    }
}
