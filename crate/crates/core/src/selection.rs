//! Protocol selection: audit purpose, lifecycle phase and model category
//! lead to a ranked list of candidate proof systems, and the choice is kept
//! as an architecture decision record.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::clock;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LifecyclePhase {
    DataAndPreprocessing,
    TrainingAndOfflineMetrics,
    Inference,
    OnlineMetrics,
}

impl LifecyclePhase {
    pub const ALL: [LifecyclePhase; 4] = [
        LifecyclePhase::DataAndPreprocessing,
        LifecyclePhase::TrainingAndOfflineMetrics,
        LifecyclePhase::Inference,
        LifecyclePhase::OnlineMetrics,
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelCategory {
    DecisionTrees,
    SupportVectorMachines,
    LinearModels,
    Clustering,
    GeneralNeuralNetworks,
    ConvolutionalNeuralNetworks,
    LargeLanguageModels,
    VisionModels,
    RecommenderSystems,
}

impl ModelCategory {
    pub const ALL: [ModelCategory; 9] = [
        ModelCategory::DecisionTrees,
        ModelCategory::SupportVectorMachines,
        ModelCategory::LinearModels,
        ModelCategory::Clustering,
        ModelCategory::GeneralNeuralNetworks,
        ModelCategory::ConvolutionalNeuralNetworks,
        ModelCategory::LargeLanguageModels,
        ModelCategory::VisionModels,
        ModelCategory::RecommenderSystems,
    ];
}

impl fmt::Display for LifecyclePhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl fmt::Display for ModelCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Properties {
    pub non_interactive: bool,
    pub transparent_setup: bool,
    pub standard_representations: bool,
    pub succinct: bool,
    pub post_quantum: bool,
}

impl Properties {
    pub fn as_list(&self) -> [(&'static str, bool); 5] {
        [
            ("Non-interactive", self.non_interactive),
            ("Transparent setup", self.transparent_setup),
            ("Standard representations", self.standard_representations),
            ("Succinct", self.succinct),
            ("Post-quantum", self.post_quantum),
        ]
    }

    pub fn count(&self) -> usize {
        self.as_list().iter().filter(|(_, v)| *v).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Paper,
    Curated,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolProfile {
    pub name: String,
    pub properties: Properties,
    pub notes: String,
    pub provenance: Provenance,
}

#[derive(Debug, thiserror::Error)]
pub enum SelectionError {
    #[error("no known method for {phase} / {category}; consider alternative approaches")]
    NoKnownMethod { phase: LifecyclePhase, category: ModelCategory },
    #[error("protocol {0:?} is not a candidate for this phase and model category")]
    ProtocolNotCandidate(String),
    #[error("unknown ADR record {0}")]
    UnknownRecord(u32),
    #[error("invalid knowledge base: {0}")]
    InvalidKnowledgeBase(String),
    #[error("ADR storage I/O: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, SelectionError>;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KbFile {
    pairs: Vec<KbPair>,
    profiles: Vec<ProtocolProfile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KbPair {
    phase: LifecyclePhase,
    model_category: ModelCategory,
    protocols: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct KnowledgeBase {
    entries: BTreeMap<(LifecyclePhase, ModelCategory), Vec<String>>,
    profiles: BTreeMap<String, ProtocolProfile>,
}

const SHIPPED_KB: &str = include_str!("../data/knowledge_base.json");

impl KnowledgeBase {
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let file: KbFile = serde_json::from_slice(bytes).map_err(|e| SelectionError::InvalidKnowledgeBase(e.to_string()))?;
        let mut profiles = BTreeMap::new();
        for p in file.profiles {
            if profiles.insert(p.name.clone(), p).is_some() {
                return Err(SelectionError::InvalidKnowledgeBase("duplicate profile".into()));
            }
        }
        let mut entries = BTreeMap::new();
        for pair in file.pairs {
            if let Some(missing) = pair.protocols.iter().find(|n| !profiles.contains_key(*n)) {
                return Err(SelectionError::InvalidKnowledgeBase(format!("no profile for {missing:?}")));
            }
            if entries.insert((pair.phase, pair.model_category), pair.protocols).is_some() {
                return Err(SelectionError::InvalidKnowledgeBase(format!(
                    "duplicate pair {} / {}",
                    pair.phase, pair.model_category
                )));
            }
        }
        Ok(KnowledgeBase { entries, profiles })
    }

    pub fn shipped() -> Self {
        Self::from_json(SHIPPED_KB.as_bytes()).expect("shipped knowledge base is valid")
    }

    pub fn profile(&self, name: &str) -> Option<&ProtocolProfile> {
        self.profiles.get(name)
    }

    /// Candidates sorted by satisfied-property count, most first, then by
    /// name.
    pub fn recommend(&self, phase: LifecyclePhase, category: ModelCategory) -> Result<Vec<ProtocolProfile>> {
        let names = self.entries.get(&(phase, category)).map(Vec::as_slice).unwrap_or(&[]);
        if names.is_empty() {
            return Err(SelectionError::NoKnownMethod { phase, category });
        }
        let mut out: Vec<ProtocolProfile> = names.iter().map(|n| self.profiles[n].clone()).collect();
        out.sort_by(|a, b| {
            b.properties
                .count()
                .cmp(&a.properties.count())
                .then_with(|| a.name.cmp(&b.name))
        });
        out.dedup_by(|a, b| a.name == b.name);
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionTrace {
    pub phase: LifecyclePhase,
    pub model_category: ModelCategory,
    pub candidates: Vec<String>,
}

/// The record of why a protocol was chosen for an audit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceabilitySpec {
    pub audit_purpose: String,
    pub decision_trace: DecisionTrace,
    pub selected_protocol: String,
    pub property_checklist: Properties,
    pub author: String,
    pub created_at: DateTime<Utc>,
}

pub fn build_spec(
    kb: &KnowledgeBase,
    purpose: &str,
    phase: LifecyclePhase,
    category: ModelCategory,
    chosen: &str,
    author: &str,
) -> Result<TraceabilitySpec> {
    let ranked = kb.recommend(phase, category)?;
    let profile = ranked
        .iter()
        .find(|p| p.name == chosen)
        .ok_or_else(|| SelectionError::ProtocolNotCandidate(chosen.to_string()))?;
    Ok(TraceabilitySpec {
        audit_purpose: purpose.to_string(),
        decision_trace: DecisionTrace {
            phase,
            model_category: category,
            candidates: ranked.iter().map(|p| p.name.clone()).collect(),
        },
        selected_protocol: profile.name.clone(),
        property_checklist: profile.properties,
        author: author.to_string(),
        created_at: clock::now(),
    })
}

pub fn render_markdown(number: u32, spec: &TraceabilitySpec) -> String {
    let mut md = String::new();
    md.push_str(&format!("# ADR {number:04}: ZKP Traceability Specification\n\n"));
    md.push_str(&format!("- Author: {}\n", spec.author));
    md.push_str(&format!("- Recorded: {}\n\n", spec.created_at.to_rfc3339()));
    md.push_str("## Purpose of the Audit\n\n");
    md.push_str(&spec.audit_purpose);
    md.push_str("\n\n## Decision Trace\n\n");
    md.push_str(&format!("- Lifecycle phase: {}\n", spec.decision_trace.phase));
    md.push_str(&format!("- Model category: {}\n", spec.decision_trace.model_category));
    md.push_str("- Ranked candidates:\n");
    for (i, c) in spec.decision_trace.candidates.iter().enumerate() {
        md.push_str(&format!("  {}. {c}\n", i + 1));
    }
    md.push_str("\n## Selected Protocol\n\n");
    md.push_str(&format!(
        "**{}** ({}/5 properties)\n\n",
        spec.selected_protocol,
        spec.property_checklist.count()
    ));
    md.push_str("| Property | Satisfied |\n|---|---|\n");
    for (name, ok) in spec.property_checklist.as_list() {
        md.push_str(&format!("| {name} | {} |\n", if ok { "yes" } else { "no" }));
    }
    md
}

fn slug(text: &str) -> String {
    let mut out = String::new();
    for c in text.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') && !out.is_empty() {
            out.push('-');
        }
        if out.len() >= 48 {
            break;
        }
    }
    let trimmed = out.trim_end_matches('-');
    if trimmed.is_empty() {
        "spec".to_string()
    } else {
        trimmed.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredSpec {
    pub record_id: u32,
    pub file_stem: String,
    pub spec: TraceabilitySpec,
}

/// ADR storage: `NNNN-<slug>.json` plus the rendered `NNNN-<slug>.md`.
/// Records are written once and never modified.
#[derive(Debug)]
pub struct AdrStore {
    dir: PathBuf,
    writer: Mutex<()>,
}

impl AdrStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(AdrStore {
            dir,
            writer: Mutex::new(()),
        })
    }

    fn stems(&self) -> Result<Vec<(u32, String)>> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            let name = entry?.file_name();
            let Some(stem) = name.to_str().and_then(|n| n.strip_suffix(".json")) else {
                continue;
            };
            if let Some(n) = stem.get(..4).and_then(|d| d.parse::<u32>().ok()) {
                out.push((n, stem.to_string()));
            }
        }
        out.sort();
        Ok(out)
    }

    fn stem_of(&self, record_id: u32) -> Result<String> {
        self.stems()?
            .into_iter()
            .find(|(n, _)| *n == record_id)
            .map(|(_, s)| s)
            .ok_or(SelectionError::UnknownRecord(record_id))
    }

    pub fn store_spec(&self, spec: &TraceabilitySpec) -> Result<u32> {
        let _guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let number = self.stems()?.last().map_or(1, |(n, _)| n + 1);
        let stem = format!("{number:04}-{}", slug(&spec.audit_purpose));
        let json = serde_json::to_vec_pretty(spec).expect("spec serializes");
        for (ext, bytes) in [("json", json), ("md", render_markdown(number, spec).into_bytes())] {
            let mut f = fs::OpenOptions::new()
                .write(true)
                .create_new(true)
                .open(self.dir.join(format!("{stem}.{ext}")))?;
            f.write_all(&bytes)?;
            f.sync_data()?;
        }
        Ok(number)
    }

    pub fn get_spec(&self, record_id: u32) -> Result<StoredSpec> {
        let stem = self.stem_of(record_id)?;
        let bytes = fs::read(self.dir.join(format!("{stem}.json")))?;
        let spec = serde_json::from_slice(&bytes).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        Ok(StoredSpec {
            record_id,
            file_stem: stem,
            spec,
        })
    }

    pub fn render_spec(&self, record_id: u32) -> Result<String> {
        let stem = self.stem_of(record_id)?;
        Ok(fs::read_to_string(self.dir.join(format!("{stem}.md")))?)
    }

    pub fn list(&self) -> Result<Vec<StoredSpec>> {
        self.stems()?.into_iter().map(|(n, _)| self.get_spec(n)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ezkl_heads_general_network_inference() {
        let kb = KnowledgeBase::shipped();
        let ranked = kb.recommend(LifecyclePhase::Inference, ModelCategory::GeneralNeuralNetworks).unwrap();
        assert_eq!(ranked[0].name, "ezkl");
        assert_eq!(ranked[0].properties.count(), 5);
        assert_eq!(ranked[0].provenance, Provenance::Paper);
    }

    #[test]
    fn cnn_inference_has_candidates() {
        let kb = KnowledgeBase::shipped();
        let ranked = kb
            .recommend(LifecyclePhase::Inference, ModelCategory::ConvolutionalNeuralNetworks)
            .unwrap();
        assert!(ranked.iter().any(|p| p.name == "zkcnn-gkr"));
    }

    #[test]
    fn empty_pair_has_no_known_method() {
        let kb = KnowledgeBase::shipped();
        assert!(matches!(
            kb.recommend(LifecyclePhase::OnlineMetrics, ModelCategory::LargeLanguageModels),
            Err(SelectionError::NoKnownMethod { .. })
        ));
    }

    #[test]
    fn ties_break_alphabetically() {
        let kb = KnowledgeBase::shipped();
        for phase in LifecyclePhase::ALL {
            for cat in ModelCategory::ALL {
                let Ok(ranked) = kb.recommend(phase, cat) else { continue };
                for w in ranked.windows(2) {
                    let (a, b) = (&w[0], &w[1]);
                    assert!(
                        a.properties.count() > b.properties.count()
                            || (a.properties.count() == b.properties.count() && a.name < b.name)
                    );
                }
            }
        }
    }

    #[test]
    fn kb_rejects_unknown_protocol() {
        let bad = br#"{"pairs":[{"phase":"Inference","model_category":"Clustering","protocols":["ghost"]}],"profiles":[]}"#;
        assert!(matches!(KnowledgeBase::from_json(bad), Err(SelectionError::InvalidKnowledgeBase(_))));
    }

    #[test]
    fn build_spec_copies_checklist() {
        let kb = KnowledgeBase::shipped();
        let spec = build_spec(
            &kb,
            "credit-risk inference audit",
            LifecyclePhase::Inference,
            ModelCategory::GeneralNeuralNetworks,
            "ezkl",
            "SA",
        )
        .unwrap();
        assert_eq!(spec.selected_protocol, "ezkl");
        assert_eq!(spec.property_checklist, kb.profile("ezkl").unwrap().properties);
        assert!(spec.decision_trace.candidates.contains(&spec.selected_protocol));
    }

    #[test]
    fn build_spec_rejects_non_candidate() {
        let kb = KnowledgeBase::shipped();
        let err = build_spec(
            &kb,
            "p",
            LifecyclePhase::Inference,
            ModelCategory::GeneralNeuralNetworks,
            "made-up-protocol",
            "SA",
        );
        assert!(matches!(err, Err(SelectionError::ProtocolNotCandidate(_))));
    }

    #[test]
    fn store_render_and_numbering() {
        let dir = tempfile::tempdir().unwrap();
        let adr = AdrStore::open(dir.path()).unwrap();
        let kb = KnowledgeBase::shipped();
        let spec = build_spec(
            &kb,
            "Credit-risk inference audit",
            LifecyclePhase::Inference,
            ModelCategory::GeneralNeuralNetworks,
            "ezkl",
            "SA",
        )
        .unwrap();
        let n = adr.store_spec(&spec).unwrap();
        let m = adr.store_spec(&spec).unwrap();
        assert_eq!(m, n + 1);
        let md = adr.render_spec(n).unwrap();
        for heading in ["Purpose of the Audit", "Decision Trace", "Selected Protocol"] {
            assert!(md.contains(heading), "missing {heading}");
        }
        assert!(dir.path().join("0001-credit-risk-inference-audit.json").is_file());
        assert!(dir.path().join("0001-credit-risk-inference-audit.md").is_file());
        assert!(matches!(adr.render_spec(99), Err(SelectionError::UnknownRecord(99))));
    }

    #[test]
    fn stored_specs_are_immutable() {
        let dir = tempfile::tempdir().unwrap();
        let adr = AdrStore::open(dir.path()).unwrap();
        let kb = KnowledgeBase::shipped();
        let spec = |p: &str| {
            build_spec(&kb, p, LifecyclePhase::Inference, ModelCategory::LargeLanguageModels, "zkllm", "ML").unwrap()
        };
        let n = adr.store_spec(&spec("first")).unwrap();
        let md = adr.render_spec(n).unwrap();
        let json = serde_json::to_vec(&adr.get_spec(n).unwrap()).unwrap();
        adr.store_spec(&spec("second")).unwrap();
        assert_eq!(adr.render_spec(n).unwrap(), md);
        assert_eq!(serde_json::to_vec(&adr.get_spec(n).unwrap()).unwrap(), json);
    }

    #[test]
    fn slugs() {
        assert_eq!(slug("Credit-risk inference audit!"), "credit-risk-inference-audit");
        assert_eq!(slug("***"), "spec");
    }

    proptest! {
        #[test]
        fn ranking_is_deterministic(p in 0usize..4, c in 0usize..9) {
            let a = KnowledgeBase::shipped().recommend(LifecyclePhase::ALL[p], ModelCategory::ALL[c]);
            let b = KnowledgeBase::shipped().recommend(LifecyclePhase::ALL[p], ModelCategory::ALL[c]);
            match (a, b) {
                (Ok(a), Ok(b)) => prop_assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap()),
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "ranking changed between runs"),
            }
        }

        #[test]
        fn head_dominates(p in 0usize..4, c in 0usize..9) {
            if let Ok(ranked) = KnowledgeBase::shipped().recommend(LifecyclePhase::ALL[p], ModelCategory::ALL[c]) {
                let head = ranked[0].properties.count();
                prop_assert!(ranked.iter().all(|r| r.properties.count() <= head));
            }
        }
    }
}
