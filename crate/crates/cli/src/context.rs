//! Per-stage bookkeeping: input resolution, output writing, and the run
//! manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use demaudit_core::io::{self, CsvTable};
use demaudit_core::textindex::LemmaDictionary;
use serde_json::{json, Value};

use crate::config::Loaded;
use crate::CliError;

pub struct Ctx<'a> {
    pub cfg: &'a Loaded,
    stage: &'static str,
    started: Instant,
    inputs: Vec<PathBuf>,
    outputs: Vec<String>,
}

impl<'a> Ctx<'a> {
    pub fn new(cfg: &'a Loaded, stage: &'static str) -> Self {
        Ctx {
            cfg,
            stage,
            started: Instant::now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Resolves a configured input and checks that it exists.
    pub fn input(&mut self, p: &Path) -> Result<PathBuf, CliError> {
        let path = self.cfg.resolve(p);
        if !path.is_file() {
            return Err(CliError::Validation(format!("input not found: {}", path.display())));
        }
        self.inputs.push(path.clone());
        Ok(path)
    }

    pub fn opt_input(&mut self, p: &Option<PathBuf>) -> Result<Option<PathBuf>, CliError> {
        p.as_deref().map(|p| self.input(p)).transpose()
    }

    /// An output of an earlier stage, which must already exist.
    pub fn prior(&mut self, rel: &str, producer: &str) -> Result<PathBuf, CliError> {
        let path = self.cfg.out_dir.join(rel);
        if !path.is_file() {
            return Err(CliError::Validation(format!(
                "{} is missing; run `{producer}` first",
                path.display()
            )));
        }
        self.inputs.push(path.clone());
        Ok(path)
    }

    pub fn out_path(&self, rel: &str) -> PathBuf {
        self.cfg.out_dir.join(rel)
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
        io::write_bytes(&self.out_path(rel), bytes)?;
        self.outputs.push(rel.to_string());
        Ok(())
    }

    /// Records a file written directly by a library call.
    pub fn wrote(&mut self, rel: &str) {
        self.outputs.push(rel.to_string());
    }

    pub fn csv(&self, header: &[&str]) -> CsvTable {
        CsvTable::with_meta(&self.cfg.meta_line(), header)
    }

    pub fn write_csv(&mut self, rel: &str, table: CsvTable) -> Result<(), CliError> {
        self.write(rel, &table.into_bytes())
    }

    /// Writes `body` with a leading `meta` object.
    pub fn write_json(&mut self, rel: &str, body: Value) -> Result<(), CliError> {
        let mut obj = serde_json::Map::new();
        obj.insert("meta".into(), self.meta());
        if let Value::Object(fields) = body {
            obj.extend(fields);
        }
        let text = serde_json::to_string_pretty(&Value::Object(obj)).expect("json serializes") + "\n";
        self.write(rel, text.as_bytes())
    }

    pub fn meta(&self) -> Value {
        json!({
            "config_hash": self.cfg.hash,
            "seeds": {"sae": self.cfg.config.sae.seed, "sample": self.cfg.config.agree.sample_seed},
        })
    }

    pub fn dictionary(&mut self) -> Result<LemmaDictionary, CliError> {
        let inputs = &self.cfg.config.inputs;
        if inputs.lemmas.is_none() && inputs.stopwords.is_none() {
            return Ok(LemmaDictionary::builtin());
        }
        let lemmas = match self.opt_input(&inputs.lemmas)? {
            Some(p) => io::read_to_string(&p)?,
            None => LemmaDictionary::builtin_lemmas().to_string(),
        };
        let stop = match self.opt_input(&inputs.stopwords)? {
            Some(p) => io::read_to_string(&p)?,
            None => LemmaDictionary::builtin_stopwords().to_string(),
        };
        Ok(LemmaDictionary::parse(&lemmas, &stop)?)
    }

    /// Writes the run manifest: config, input and output hashes, timing.
    pub fn finish(self) -> Result<(), CliError> {
        let hash_of = |p: &Path| io::sha256_file(p);
        let mut inputs = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        for p in &self.inputs {
            if seen.insert(p.clone()) {
                inputs.push(json!({"path": p.display().to_string(), "sha256": hash_of(p)?}));
            }
        }
        let mut outputs = Vec::new();
        for rel in &self.outputs {
            outputs.push(json!({"path": rel, "sha256": hash_of(&self.out_path(rel))?}));
        }
        let manifest = json!({
            "stage": self.stage,
            "version": env!("CARGO_PKG_VERSION"),
            "config_hash": self.cfg.hash,
            "config": self.cfg.config,
            "data_dir": self.cfg.data_dir.display().to_string(),
            "threads": rayon::current_num_threads(),
            "inputs": inputs,
            "outputs": outputs,
            "wall_time_s": self.started.elapsed().as_secs_f64(),
        });
        let text = serde_json::to_string_pretty(&manifest).expect("json serializes") + "\n";
        io::write_bytes(&self.out_path(&format!("manifests/{}.json", self.stage)), text.as_bytes())?;
        Ok(())
    }
}
