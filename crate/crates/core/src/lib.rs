//! Core of the audit service: content-addressed artifact storage, protocol
//! selection with decision records, workflow configuration, the backend
//! gateway, and the saga orchestrator that drives audits through setup, key
//! exchange, proof and verification.

pub mod artifact_store;
pub mod clock;
pub mod gateway;
pub mod orchestrator;
pub mod selection;
pub mod workflow;

use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use artifact_store::ArtifactStore;
use gateway::Gateway;
use orchestrator::Orchestrator;
use selection::{AdrStore, KnowledgeBase};
use workflow::WorkflowRegistry;

/// Every service component rooted at one data directory:
/// `artifacts/`, `audits/`, `workflows/`, `adr/` and `scratch/`.
pub struct Services {
    pub data_dir: PathBuf,
    pub orchestrator: Arc<Orchestrator>,
    pub knowledge_base: Arc<KnowledgeBase>,
    pub adr: Arc<AdrStore>,
}

#[derive(Debug, thiserror::Error)]
pub enum OpenError {
    #[error(transparent)]
    Store(#[from] artifact_store::StoreError),
    #[error(transparent)]
    Workflow(#[from] workflow::WorkflowError),
    #[error(transparent)]
    Orchestrator(#[from] orchestrator::OrchestratorError),
    #[error(transparent)]
    Selection(#[from] selection::SelectionError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Services {
    /// Opens (creating if needed) a data directory and registers the shipped
    /// workflows that are not already present.
    pub fn open(data_dir: impl AsRef<Path>) -> Result<Self, OpenError> {
        let data_dir = data_dir.as_ref().to_path_buf();
        let store = Arc::new(ArtifactStore::open(data_dir.join("artifacts"))?);
        let workflows = Arc::new(WorkflowRegistry::open(data_dir.join("workflows"))?);
        workflows.ensure_shipped()?;
        let parallelism = std::thread::available_parallelism().map_or(4, |n| n.get());
        let gateway = Arc::new(Gateway::new(data_dir.join("scratch"), parallelism)?);
        let orchestrator = Arc::new(Orchestrator::open(data_dir.join("audits"), store, workflows, gateway)?);
        Ok(Services {
            orchestrator,
            knowledge_base: Arc::new(KnowledgeBase::shipped()),
            adr: Arc::new(AdrStore::open(data_dir.join("adr"))?),
            data_dir,
        })
    }
}
