//! Synthetic tool universe: data kinds, tools, tasks and simulated profiling.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cost::{self, CostError, CostRecord, PriceTable};

/// Identifiers that collide with structure tokens of the plan language.
const RESERVED_IDS: [&str; 5] = ["SoP", "EoP", "SoD", "EoD", "task"];

#[derive(Debug, Error)]
pub enum UniverseError {
    #[error("cannot read {path}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed universe file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("universe declares no tools")]
    NoTools,
    #[error("size level count k must be at least 1")]
    NoLevels,
    #[error("duplicate tool id `{0}`")]
    DuplicateTool(String),
    #[error("duplicate data kind `{0}`")]
    DuplicateKind(String),
    #[error("tool id `{0}` is reserved or contains whitespace/brackets")]
    BadToolId(String),
    #[error("tool `{tool}`: `{field}` has {found} entries, expected k = {expected}")]
    LevelCount { tool: String, field: &'static str, expected: usize, found: usize },
    #[error("tool `{tool}`: quality {value} outside [0, 1]")]
    Quality { tool: String, value: f64 },
    #[error("tool `{tool}`: `{field}` must be finite and non-negative")]
    Negative { tool: String, field: &'static str },
    #[error("tool `{tool}` references undeclared data kind `{kind}`")]
    UnknownKind { tool: String, kind: String },
    #[error("tool `{0}` must declare at least one input and one output")]
    NoPorts(String),
    #[error("unknown tool `{0}`")]
    UnknownTool(String),
    #[error("size level {level} outside 1..={k}")]
    LevelOutOfRange { level: usize, k: usize },
    #[error("profiling needs at least one trial")]
    NoTrials,
    #[error("invalid task `{task}`: {reason}")]
    InvalidTask { task: String, reason: String },
    #[error(transparent)]
    Cost(#[from] CostError),
}

/// A data type flowing between tools, e.g. `image` or `text`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DataKind(pub String);

impl DataKind {
    pub fn new(s: impl Into<String>) -> Self {
        Self(s.into())
    }
}

impl fmt::Display for DataKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A synthetic tool and its cost profile per input size level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolSpec {
    pub id: String,
    pub inputs: Vec<DataKind>,
    pub outputs: Vec<DataKind>,
    pub capability: String,
    pub quality: f64,
    pub base_time_ms: Vec<f64>,
    pub cpu_cons_mb: f64,
    pub gpu_cons_mb: f64,
    pub cpu_inst_mb: Vec<f64>,
    pub gpu_inst_mb: Vec<f64>,
    pub noise_sigma: f64,
}

impl ToolSpec {
    fn validate(&self, k: usize, kinds: &BTreeSet<DataKind>) -> Result<(), UniverseError> {
        let id_ok = !self.id.is_empty()
            && !RESERVED_IDS.contains(&self.id.as_str())
            && !self.id.chars().any(|c| c.is_whitespace() || "[]<>".contains(c));
        if !id_ok {
            return Err(UniverseError::BadToolId(self.id.clone()));
        }
        if self.inputs.is_empty() || self.outputs.is_empty() {
            return Err(UniverseError::NoPorts(self.id.clone()));
        }
        for kind in self.inputs.iter().chain(&self.outputs) {
            if !kinds.contains(kind) {
                return Err(UniverseError::UnknownKind { tool: self.id.clone(), kind: kind.0.clone() });
            }
        }
        if !(0.0..=1.0).contains(&self.quality) {
            return Err(UniverseError::Quality { tool: self.id.clone(), value: self.quality });
        }
        for (field, list) in [
            ("base_time_ms", &self.base_time_ms),
            ("cpu_inst_mb", &self.cpu_inst_mb),
            ("gpu_inst_mb", &self.gpu_inst_mb),
        ] {
            if list.len() != k {
                return Err(UniverseError::LevelCount { tool: self.id.clone(), field, expected: k, found: list.len() });
            }
            if list.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(UniverseError::Negative { tool: self.id.clone(), field });
            }
        }
        for (field, v) in [
            ("cpu_cons_mb", self.cpu_cons_mb),
            ("gpu_cons_mb", self.gpu_cons_mb),
            ("noise_sigma", self.noise_sigma),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(UniverseError::Negative { tool: self.id.clone(), field });
            }
        }
        Ok(())
    }

    /// Noise-free cost record at `level` (1-based).
    pub fn nominal_record(&self, level: usize) -> CostRecord {
        CostRecord {
            time_ms: self.base_time_ms[level - 1],
            cpu_cons_mb: self.cpu_cons_mb,
            cpu_inst_mb: self.cpu_inst_mb[level - 1],
            gpu_cons_mb: self.gpu_cons_mb,
            gpu_inst_mb: self.gpu_inst_mb[level - 1],
        }
    }
}

/// Price per invocation of a tool at each size level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostAttributes {
    pub tool_id: String,
    pub levels: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskInput {
    pub kind: DataKind,
    pub size: f64,
}

/// One output the task demands: its kind and the ordered capabilities that
/// must be applied to produce it.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RequiredOutput {
    pub kind: DataKind,
    pub chain: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub inputs: Vec<TaskInput>,
    pub required_outputs: Vec<RequiredOutput>,
    /// 1-based size level. Task files may omit it; planning with a trained
    /// policy reassigns it from the input size.
    #[serde(default = "first_level")]
    pub size_level: usize,
}

fn first_level() -> usize {
    1
}

impl TaskSpec {
    /// Size scalar used for level assignment: the largest input.
    pub fn size(&self) -> f64 {
        self.inputs.iter().map(|i| i.size).fold(0.0, f64::max)
    }

    pub fn provides(&self, kind: &DataKind) -> bool {
        self.inputs.iter().any(|i| &i.kind == kind)
    }

    pub fn is_sequential(&self) -> bool {
        self.required_outputs.len() == 1
    }

    pub fn validate(&self, universe: &ToolUniverse) -> Result<(), UniverseError> {
        let bad = |reason: String| UniverseError::InvalidTask { task: self.id.clone(), reason };
        if self.inputs.is_empty() {
            return Err(bad("no inputs".into()));
        }
        if self.required_outputs.is_empty() {
            return Err(bad("no required outputs".into()));
        }
        if self.size_level < 1 || self.size_level > universe.k {
            return Err(bad(format!("size level {} outside 1..={}", self.size_level, universe.k)));
        }
        for kind in self.inputs.iter().map(|i| &i.kind).chain(self.required_outputs.iter().map(|r| &r.kind)) {
            if universe.kind_index(kind).is_none() {
                return Err(bad(format!("undeclared kind `{kind}`")));
            }
        }
        if self.required_outputs.iter().any(|r| r.chain.is_empty()) {
            return Err(bad("empty capability chain".into()));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UniverseFile {
    k: usize,
    rng_seed: u64,
    kinds: Vec<DataKind>,
    #[serde(default)]
    price_table: PriceTable,
    tools: Vec<ToolSpec>,
}

/// A validated, immutable set of tools. Tools are kept sorted by id and
/// addressed by their position in that order.
#[derive(Clone, Debug, PartialEq)]
pub struct ToolUniverse {
    pub k: usize,
    pub rng_seed: u64,
    pub kinds: Vec<DataKind>,
    pub price_table: PriceTable,
    tools: Vec<ToolSpec>,
    index: HashMap<String, usize>,
}

impl ToolUniverse {
    pub fn new(
        k: usize,
        rng_seed: u64,
        kinds: Vec<DataKind>,
        price_table: PriceTable,
        mut tools: Vec<ToolSpec>,
    ) -> Result<Self, UniverseError> {
        if k == 0 {
            return Err(UniverseError::NoLevels);
        }
        if tools.is_empty() {
            return Err(UniverseError::NoTools);
        }
        price_table.validate()?;
        let mut kind_set = BTreeSet::new();
        for kind in &kinds {
            if !kind_set.insert(kind.clone()) {
                return Err(UniverseError::DuplicateKind(kind.0.clone()));
            }
        }
        for tool in &tools {
            tool.validate(k, &kind_set)?;
        }
        tools.sort_by(|a, b| a.id.cmp(&b.id));
        let mut index = HashMap::with_capacity(tools.len());
        for (i, tool) in tools.iter().enumerate() {
            if index.insert(tool.id.clone(), i).is_some() {
                return Err(UniverseError::DuplicateTool(tool.id.clone()));
            }
        }
        Ok(Self { k, rng_seed, kinds: kind_set.into_iter().collect(), price_table, tools, index })
    }

    pub fn from_json_str(s: &str) -> Result<Self, UniverseError> {
        let file: UniverseFile = serde_json::from_str(s)?;
        Self::new(file.k, file.rng_seed, file.kinds, file.price_table, file.tools)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, UniverseError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| UniverseError::Io { path: path.display().to_string(), source })?;
        Self::from_json_str(&text)
    }

    /// Canonical file form: pretty JSON, kinds and tools sorted, trailing newline.
    pub fn to_canonical_json(&self) -> String {
        let file = UniverseFile {
            k: self.k,
            rng_seed: self.rng_seed,
            kinds: self.kinds.clone(),
            price_table: self.price_table.clone(),
            tools: self.tools.clone(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("universe serializes");
        s.push('\n');
        s
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_canonical_json().as_bytes()))
    }

    pub fn tools(&self) -> &[ToolSpec] {
        &self.tools
    }

    pub fn tool(&self, idx: usize) -> &ToolSpec {
        &self.tools[idx]
    }

    pub fn n_tools(&self) -> usize {
        self.tools.len()
    }

    pub fn tool_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn kind_index(&self, kind: &DataKind) -> Option<usize> {
        self.kinds.binary_search(kind).ok()
    }

    /// Bit set of kinds, one bit per declared kind.
    pub fn kind_mask<'a>(&self, kinds: impl IntoIterator<Item = &'a DataKind>) -> u64 {
        kinds
            .into_iter()
            .filter_map(|k| self.kind_index(k))
            .fold(0u64, |m, i| m | (1u64 << i))
    }

    /// Sorted distinct capability tags.
    pub fn capabilities(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.tools.iter().map(|t| t.capability.as_str()).collect();
        set.into_iter().map(str::to_owned).collect()
    }

    /// Largest input arity over all tools.
    pub fn max_arity(&self) -> usize {
        self.tools.iter().map(|t| t.inputs.len()).max().unwrap_or(0)
    }

    /// A copy with every tool's timing noise switched off.
    pub fn without_noise(&self) -> Self {
        let mut u = self.clone();
        for t in &mut u.tools {
            t.noise_sigma = 0.0;
        }
        u
    }

    fn check_level(&self, level: usize) -> Result<(), UniverseError> {
        if level == 0 || level > self.k {
            return Err(UniverseError::LevelOutOfRange { level, k: self.k });
        }
        Ok(())
    }

    /// Simulated profiling of one tool, averaged over `trials` runs.
    ///
    /// Execution time is the base time for the level scaled by a factor drawn
    /// from `N(1, noise_sigma)` and clamped at zero; memory is deterministic.
    pub fn profile_tool<R: Rng + ?Sized>(
        &self,
        tool_id: &str,
        level: usize,
        trials: usize,
        rng: &mut R,
    ) -> Result<CostRecord, UniverseError> {
        let idx = self.tool_index(tool_id).ok_or_else(|| UniverseError::UnknownTool(tool_id.into()))?;
        self.profile_index(idx, level, trials, rng)
    }

    pub fn profile_index<R: Rng + ?Sized>(
        &self,
        idx: usize,
        level: usize,
        trials: usize,
        rng: &mut R,
    ) -> Result<CostRecord, UniverseError> {
        self.check_level(level)?;
        if trials == 0 {
            return Err(UniverseError::NoTrials);
        }
        let tool = &self.tools[idx];
        let mut rec = tool.nominal_record(level);
        if tool.noise_sigma > 0.0 {
            let normal = Normal::new(1.0, tool.noise_sigma).expect("sigma validated");
            let total: f64 = (0..trials)
                .map(|_| (rec.time_ms * normal.sample(rng)).max(0.0))
                .sum();
            rec.time_ms = total / trials as f64;
        }
        Ok(rec)
    }

    /// Noise-free price of a tool at every size level.
    pub fn cost_attributes(&self, tool_id: &str, table: &PriceTable) -> Result<CostAttributes, UniverseError> {
        let idx = self.tool_index(tool_id).ok_or_else(|| UniverseError::UnknownTool(tool_id.into()))?;
        let tool = &self.tools[idx];
        let levels = (1..=self.k)
            .map(|l| cost::tool_price(&tool.nominal_record(l), table))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(CostAttributes { tool_id: tool.id.clone(), levels })
    }

    /// Cost attributes of all tools, in tool order, using the universe's own table.
    pub fn all_cost_attributes(&self) -> Result<Vec<CostAttributes>, UniverseError> {
        self.tools.iter().map(|t| self.cost_attributes(&t.id, &self.price_table)).collect()
    }
}
