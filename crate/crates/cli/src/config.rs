//! Run configuration: a TOML file, `--set key=value` overrides, and the
//! hash that tags every report.

use std::path::{Path, PathBuf};

use demaudit_core::sae::{SaeConfig, Variant};
use demaudit_core::topics::AggregateOrder;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Default data directory when the config does not name one.
pub const DATA_DIR_ENV: &str = "DEMAUDIT_DATA_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Relative input paths resolve against this directory. A relative
    /// `data_dir` resolves against the config file's directory.
    pub data_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Worker threads; 0 lets the thread pool decide. Never changes results.
    pub threads: usize,
    pub inputs: Inputs,
    pub ingest: IngestConfig,
    pub agree: AgreeConfig,
    pub audit: AuditConfig,
    pub hcr: HcrConfig,
    pub sae: SaeSection,
    pub topics: TopicsConfig,
    pub transfer: TransferConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_dir: None,
            out_dir: PathBuf::from("out"),
            threads: 0,
            inputs: Inputs::default(),
            ingest: IngestConfig::default(),
            agree: AgreeConfig::default(),
            audit: AuditConfig::default(),
            hcr: HcrConfig::default(),
            sae: SaeSection::default(),
            topics: TopicsConfig::default(),
            transfer: TransferConfig::default(),
        }
    }
}

/// Input files. Unset optional entries fall back to the built-in tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub images: PathBuf,
    pub boxes: PathBuf,
    pub lemmas: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub crime_keywords: Option<PathBuf>,
    pub countries: Option<PathBuf>,
    pub vader_lexicon: Option<PathBuf>,
    pub labelings: PathBuf,
    pub detections: PathBuf,
    pub hate_scores: PathBuf,
    pub caption_embeddings: PathBuf,
    pub topics: PathBuf,
    pub topic_embeddings: PathBuf,
    pub cluster_cache: Option<PathBuf>,
    pub categories: PathBuf,
    pub category_lemmas: PathBuf,
    pub generation_labels: Option<PathBuf>,
    pub category_embeddings: Option<PathBuf>,
    pub probe_images: Option<PathBuf>,
    /// Precomputed `category,gender,similarity` rows; used instead of the
    /// two embedding files when set.
    pub similarities: Option<PathBuf>,
}

impl Default for Inputs {
    fn default() -> Self {
        use demaudit_core::synth::files;
        Inputs {
            images: files::IMAGES.into(),
            boxes: files::BOXES.into(),
            lemmas: None,
            stopwords: None,
            crime_keywords: None,
            countries: None,
            vader_lexicon: None,
            labelings: files::LABELINGS.into(),
            detections: files::DETECTIONS.into(),
            hate_scores: files::HATE_SCORES.into(),
            caption_embeddings: files::CAPTION_EMBEDDINGS.into(),
            topics: files::TOPICS.into(),
            topic_embeddings: files::TOPIC_EMBEDDINGS.into(),
            cluster_cache: Some(files::CLUSTER_CACHE.into()),
            categories: files::CATEGORIES.into(),
            category_lemmas: files::LEMMAS.into(),
            generation_labels: Some(files::GENERATION_LABELS.into()),
            category_embeddings: Some(files::CATEGORY_EMBEDDINGS.into()),
            probe_images: Some(files::PROBE_IMAGES.into()),
            similarities: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub min_side: u32,
    pub min_conf: f64,
    /// Drop malformed records and report them instead of stopping.
    pub skip_bad_records: bool,
}

impl Default for IngestConfig {
    fn default() -> Self {
        let f = demaudit_core::corpus::BoxFilter::default();
        IngestConfig {
            min_side: f.min_side,
            min_conf: f.min_conf,
            skip_bad_records: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgreeConfig {
    /// Minimum supporting annotators for a consensus label; 0 = unanimous.
    pub consensus_k: usize,
    /// Items drawn per image-gender stratum for the balanced sample.
    pub sample_quota: usize,
    pub sample_seed: u64,
    /// IoU thresholds for detection recall; empty = 0.50, 0.55, ..., 0.95.
    pub recall_thresholds: Vec<f64>,
}

impl Default for AgreeConfig {
    fn default() -> Self {
        AgreeConfig {
            consensus_k: 0,
            sample_quota: 100,
            sample_seed: 11,
            recall_thresholds: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    /// Use every indexed term as the crime keyword set (a sanity check:
    /// the subset is then the whole captioned corpus).
    pub crime_all_terms: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HcrConfig {
    pub taus: Vec<f64>,
}

impl Default for HcrConfig {
    fn default() -> Self {
        HcrConfig {
            taus: vec![0.5, 0.6, 0.7, 0.8, 0.9],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaeSection {
    /// Independent training runs; run `r` uses seed `seed + r`.
    pub runs: usize,
    pub variant: Variant,
    pub expansion: usize,
    pub k: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub grad_shards: usize,
}

impl Default for SaeSection {
    fn default() -> Self {
        let c = SaeConfig::default();
        SaeSection {
            runs: 2,
            variant: c.variant,
            expansion: c.expansion,
            k: c.k,
            learning_rate: c.learning_rate,
            batch_size: c.batch_size,
            epochs: c.epochs,
            seed: c.seed,
            grad_shards: c.grad_shards,
        }
    }
}

impl SaeSection {
    pub fn run_config(&self, run: usize) -> SaeConfig {
        SaeConfig {
            variant: self.variant,
            expansion: self.expansion,
            k: self.k,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed + run as u64,
            grad_shards: self.grad_shards,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderName {
    MeanThenSum,
    SumThenMean,
}

impl From<OrderName> for AggregateOrder {
    fn from(o: OrderName) -> Self {
        match o {
            OrderName::MeanThenSum => AggregateOrder::MeanThenSum,
            OrderName::SumThenMean => AggregateOrder::SumThenMean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopicsConfig {
    /// Clustering thresholds; empty = the default 20-point sweep.
    pub taus: Vec<f64>,
    pub top_n: usize,
    pub top_topics: usize,
    pub order: OrderName,
    /// Embed uncached clusters as the mean of their members.
    pub mean_fallback: bool,
}

impl Default for TopicsConfig {
    fn default() -> Self {
        TopicsConfig {
            taus: Vec::new(),
            top_n: demaudit_core::topics::DEFAULT_TOP_N,
            top_topics: demaudit_core::topics::DEFAULT_TOP_TOPICS,
            order: OrderName::MeanThenSum,
            mean_fallback: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferConfig {
    pub min_count: u64,
    pub generation_quota: usize,
    pub generation_attempts: usize,
}

impl Default for TransferConfig {
    fn default() -> Self {
        use demaudit_core::transfer as t;
        TransferConfig {
            min_count: t::DEFAULT_MIN_COUNT,
            generation_quota: t::GENERATION_QUOTA,
            generation_attempts: t::GENERATION_ATTEMPTS,
        }
    }
}

/// Parses `value` as a TOML value, falling back to a bare string.
fn parse_value(value: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()))
}

fn apply_set(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Validation(format!("--set expects key=value, got `{assignment}`")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = parts.split_last().expect("split yields at least one part");
    let mut node = table;
    for p in parents {
        node = node
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| CliError::Validation(format!("`{p}` in `{key}` is not a table")))?;
    }
    node.insert(last.to_string(), parse_value(value.trim()));
    Ok(())
}

/// A configuration with its location and hash.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub hash: String,
}

impl Loaded {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.data_dir.join(p)
        }
    }

    /// The `# ...` header line of every CSV report.
    pub fn meta_line(&self) -> String {
        format!(
            "config_hash={} sae_seed={} sample_seed={}",
            self.hash, self.config.sae.seed, self.config.agree.sample_seed
        )
    }
}

/// Hash of the configuration with run-local settings (thread count, output
/// directory) removed, so it names what was computed and nothing else.
pub fn config_hash(config: &RunConfig) -> String {
    let mut v = serde_json::to_value(config).expect("config serializes");
    if let Some(obj) = v.as_object_mut() {
        obj.remove("threads");
        obj.remove("out_dir");
    }
    demaudit_core::io::sha256_hex(v.to_string().as_bytes())
}

pub fn load(file: Option<&Path>, sets: &[String]) -> Result<Loaded, CliError> {
    let mut table = match file {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", p.display())))?;
            toml::from_str::<toml::Table>(&text)
                .map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    for s in sets {
        apply_set(&mut table, s)?;
    }
    let config: RunConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e| CliError::Validation(format!("invalid config: {e}")))?;
    let base = file
        .and_then(Path::parent)
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let data_dir = match &config.data_dir {
        Some(d) if d.is_absolute() => d.clone(),
        Some(d) => base.join(d),
        None => std::env::var_os(DATA_DIR_ENV).map(PathBuf::from).unwrap_or_default(),
    };
    let hash = config_hash(&config);
    Ok(Loaded {
        data_dir,
        out_dir: config.out_dir.clone(),
        hash,
        config,
    })
}
