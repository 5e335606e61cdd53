//! Description to refined layout: retrieve priors, ground zones and
//! objects, then run the reflection-rectification loop.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::http::{live_clients_from_env, LiveClients};
use crate::agents::mock::synthetic_corpus;
use crate::agents::{AgentClient, AgentError, EmbeddingClient, RequestLimiter};
use crate::grounding::{
    assemble_layout, ground_zones, place_accessories, place_dominants, zone_constraints,
    GroundingConfig, GroundingError, IdAllocator, PlacementRecord, ZoneGrounding,
};
use crate::memory::{
    augment, build_memory, retrieve, AugmentedDescription, MemoryError, PriorMemory,
    DEFAULT_THETA_RET, DEFAULT_TOP_K,
};
use crate::refine::{refine_loop_with, Diagnoser, RefineConfig, RefineError, RefinementTrace};
use crate::scene::{AssetCatalog, Layout, RoomBoundary, ShortDescription, ValidationError};

/// Size of the synthetic corpus behind the default mock memory.
pub const MOCK_CORPUS_SIZE: usize = 144;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Grounding(#[from] GroundingError),
    #[error(transparent)]
    Refine(#[from] RefineError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

impl PipelineError {
    /// True when the failure came from a model or embedding endpoint.
    pub fn is_client(&self) -> bool {
        match self {
            PipelineError::Memory(MemoryError::Agent(_) | MemoryError::Parse { .. }) => true,
            PipelineError::Grounding(GroundingError::Agent(_)) => true,
            PipelineError::Refine(RefineError::Agent(_)) => true,
            _ => false,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosisMode {
    /// The vision-language agent reviews each render.
    #[default]
    Agent,
    /// Violations are computed from geometry.
    Geometric,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub room: RoomBoundary,
    pub top_k: usize,
    pub theta_ret: f64,
    pub grounding: GroundingConfig,
    pub refine: RefineConfig,
    pub diagnosis: DiagnosisMode,
    pub catalog: AssetCatalog,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            room: RoomBoundary::new(4.0, 3.0, 2.8).expect("default room is valid"),
            top_k: DEFAULT_TOP_K,
            theta_ret: DEFAULT_THETA_RET,
            grounding: GroundingConfig::default(),
            refine: RefineConfig::default(),
            diagnosis: DiagnosisMode::default(),
            catalog: AssetCatalog::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Clients {
    pub agent: AgentClient,
    pub embedder: EmbeddingClient,
}

impl Clients {
    pub fn mock() -> Self {
        Self {
            agent: AgentClient::mock(),
            embedder: EmbeddingClient::mock(),
        }
    }

    pub fn live(limiter: RequestLimiter) -> Result<Self, AgentError> {
        let LiveClients { agent, embedder } = live_clients_from_env(limiter)?;
        Ok(Self { agent, embedder })
    }
}

/// Memory over the synthetic corpus the mock agent understands.
pub fn mock_memory(embedder: &EmbeddingClient) -> Result<PriorMemory, MemoryError> {
    build_memory(&synthetic_corpus(MOCK_CORPUS_SIZE), embedder)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generation {
    pub augmented: AugmentedDescription,
    pub zones: ZoneGrounding,
    pub records: Vec<PlacementRecord>,
    /// Layout before refinement.
    pub initial: Layout,
    pub layout: Layout,
    pub trace: RefinementTrace,
    pub warnings: Vec<String>,
}

/// Builds the unrefined layout from an augmented description.
pub fn ground_layout(
    d_aug: &AugmentedDescription,
    config: &PipelineConfig,
    agent: &AgentClient,
    seed: u64,
) -> Result<(Layout, ZoneGrounding, Vec<PlacementRecord>, Vec<String>), PipelineError> {
    let room = config.room;
    let g = &config.grounding;
    let zones = ground_zones(d_aug, &room, agent)?;
    let constraints = zones
        .zones
        .iter()
        .map(|z| zone_constraints(z, &room, g.delta_buf, g.delta_int))
        .collect::<Result<Vec<_>, _>>()?;
    let mut ids = IdAllocator::default();
    let doms = place_dominants(
        d_aug,
        &zones.zones,
        &constraints,
        &config.catalog,
        agent,
        seed,
        &room,
        g,
        &mut ids,
    )?;
    let accs = place_accessories(
        d_aug,
        &doms.objects,
        &g.criteria,
        &config.catalog,
        agent,
        seed,
        &room,
        g.search.step,
        &mut ids,
    )?;
    let mut relations = doms.relations;
    relations.extend(accs.relations);
    let mut records = doms.records;
    records.extend(accs.records);
    let mut warnings = doms.warnings;
    warnings.extend(accs.warnings);
    let layout = assemble_layout(
        &room,
        zones.zones.clone(),
        doms.objects,
        accs.objects,
        relations,
    )?;
    Ok((layout, zones, records, warnings))
}

pub fn refine(
    layout: &Layout,
    config: &PipelineConfig,
    agent: &AgentClient,
    seed: u64,
) -> Result<(Layout, RefinementTrace), RefineError> {
    let diagnoser = match config.diagnosis {
        DiagnosisMode::Agent => Diagnoser::Agent(agent),
        DiagnosisMode::Geometric => Diagnoser::Geometric,
    };
    refine_loop_with(layout, &config.refine, diagnoser, seed)
}

pub fn generate(
    description: &ShortDescription,
    memory: &PriorMemory,
    config: &PipelineConfig,
    clients: &Clients,
    seed: u64,
) -> Result<Generation, PipelineError> {
    let pkg = retrieve(
        description,
        memory,
        config.top_k,
        config.theta_ret,
        &clients.embedder,
        &clients.agent,
    )?;
    let augmented = augment(description, &pkg);
    let (initial, zones, records, warnings) =
        ground_layout(&augmented, config, &clients.agent, seed)?;
    let (layout, trace) = refine(&initial, config, &clients.agent, seed)?;
    Ok(Generation {
        augmented,
        zones,
        records,
        initial,
        layout,
        trace,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::RetrievalMode;
    use crate::refine::geometric_penalty;

    fn run(seed: u64) -> Generation {
        let clients = Clients::mock();
        let memory = mock_memory(&clients.embedder).unwrap();
        let d = ShortDescription::new("a cozy bedroom").unwrap();
        generate(&d, &memory, &PipelineConfig::default(), &clients, seed).unwrap()
    }

    #[test]
    fn bedroom_end_to_end() {
        let g = run(7);
        assert!(g.layout.zones.len() >= 2);
        assert!(g.layout.dominants.len() >= 2);
        assert!(!g.layout.accessories.is_empty());
        assert_eq!(g.augmented.package.mode, RetrievalMode::Semantic);
        let cfg = PipelineConfig::default();
        assert!(geometric_penalty(&g.layout, cfg.refine.clr_required, &cfg.refine.weights) < 3.5);
        g.layout.hierarchy.check_well_formed().unwrap();
    }

    #[test]
    fn same_seed_same_layout() {
        assert_eq!(run(3).layout, run(3).layout);
    }
}
