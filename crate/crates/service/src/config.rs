//! Service configuration: a TOML file, then `SPEAKLABEL_*` environment
//! overrides, then command-line flags.

use serde::{Deserialize, Serialize};
use speaklabel_core::alignment::DEFAULT_DELTA_S;
use speaklabel_core::asr::{AsrGateway, MockAsr, RemoteAsr, RemoteSettings};
use speaklabel_core::pipeline::PipelineConfig;
use speaklabel_core::trainer::TrainingConfig;
use speaklabel_core::{EmbeddingTable, GroundTruthSet, Vocabulary};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid value {value:?} for {name}")]
    Env { name: String, value: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum AsrMode {
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsrSettings {
    pub mode: AsrMode,
    /// Mock answers; required in mock mode.
    pub fixture: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub credential: Option<String>,
    pub language_tag: String,
    pub timeout_s: f64,
    pub retry_count: usize,
    pub max_alternatives: usize,
    pub phrase_hints: bool,
}

impl Default for AsrSettings {
    fn default() -> Self {
        let remote = RemoteSettings::new("");
        Self {
            mode: AsrMode::Mock,
            fixture: None,
            endpoint: None,
            credential: None,
            language_tag: remote.language_tag,
            timeout_s: remote.timeout_s,
            retry_count: remote.retry_count,
            max_alternatives: 3,
            phrase_hints: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSettings {
    pub images_per_round: usize,
    pub min_recall: f64,
    pub min_precision: f64,
}

impl Default for TrainingSettings {
    fn default() -> Self {
        let t = TrainingConfig::default();
        Self {
            images_per_round: t.images_per_round,
            min_recall: t.min_recall,
            min_precision: t.min_precision,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: String,
    pub data_dir: PathBuf,
    pub vocabularies: Vec<PathBuf>,
    /// COCO-style ground truth per vocabulary id; defines the image pool.
    pub ground_truth: BTreeMap<String, PathBuf>,
    pub embeddings: PathBuf,
    pub asr: AsrSettings,
    pub delta_s: f64,
    pub training: TrainingSettings,
    pub parallelism: usize,
    /// Static bearer token required on every request when set.
    pub token: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".into(),
            data_dir: "data".into(),
            vocabularies: vec!["fixtures/vocab/coco80.json".into(), "fixtures/vocab/ilsvrc200.json".into()],
            ground_truth: BTreeMap::new(),
            embeddings: "fixtures/embeddings.txt".into(),
            asr: AsrSettings::default(),
            delta_s: DEFAULT_DELTA_S,
            training: TrainingSettings::default(),
            parallelism: 4,
            token: None,
        }
    }
}

fn parse_env<T: std::str::FromStr>(name: &str, value: String) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::Env {
        name: name.into(),
        value,
    })
}

impl ServiceConfig {
    /// Reads a TOML file. Relative paths inside it are taken relative to the
    /// file's directory.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.into(),
            source,
        })?;
        let mut config: Self = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.into(),
            message: e.to_string(),
        })?;
        if let Some(base) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            config.rebase(base);
        }
        Ok(config)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data_dir);
        fix(&mut self.embeddings);
        self.vocabularies.iter_mut().for_each(fix);
        self.ground_truth.values_mut().for_each(fix);
        if let Some(f) = self.asr.fixture.as_mut() {
            fix(f);
        }
    }

    pub fn apply_env(&mut self) -> Result<(), ConfigError> {
        self.apply_vars(|k| std::env::var(k).ok())
    }

    pub fn apply_vars(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = get("SPEAKLABEL_LISTEN") {
            self.listen = v;
        }
        if let Some(v) = get("SPEAKLABEL_DATA_DIR") {
            self.data_dir = v.into();
        }
        if let Some(v) = get("SPEAKLABEL_EMBEDDINGS") {
            self.embeddings = v.into();
        }
        if let Some(v) = get("SPEAKLABEL_TOKEN") {
            self.token = Some(v);
        }
        if let Some(v) = get("SPEAKLABEL_DELTA_S") {
            self.delta_s = parse_env("SPEAKLABEL_DELTA_S", v)?;
        }
        if let Some(v) = get("SPEAKLABEL_PARALLELISM") {
            self.parallelism = parse_env("SPEAKLABEL_PARALLELISM", v)?;
        }
        if let Some(v) = get("SPEAKLABEL_ASR_MODE") {
            self.asr.mode = match v.as_str() {
                "mock" => AsrMode::Mock,
                "remote" => AsrMode::Remote,
                _ => {
                    return Err(ConfigError::Env {
                        name: "SPEAKLABEL_ASR_MODE".into(),
                        value: v,
                    })
                }
            };
        }
        if let Some(v) = get("SPEAKLABEL_ASR_FIXTURE") {
            self.asr.fixture = Some(v.into());
        }
        let mut remote = self.remote_settings();
        remote.apply_vars(&get);
        self.asr.endpoint = (!remote.endpoint.is_empty()).then_some(remote.endpoint);
        self.asr.credential = remote.credential;
        self.asr.language_tag = remote.language_tag;
        self.asr.timeout_s = remote.timeout_s;
        self.asr.retry_count = remote.retry_count;
        Ok(())
    }

    pub fn remote_settings(&self) -> RemoteSettings {
        RemoteSettings {
            endpoint: self.asr.endpoint.clone().unwrap_or_default(),
            credential: self.asr.credential.clone(),
            language_tag: self.asr.language_tag.clone(),
            timeout_s: self.asr.timeout_s,
            retry_count: self.asr.retry_count,
        }
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            delta_s: self.delta_s,
            phrase_hints: self.asr.phrase_hints,
            language_tag: self.asr.language_tag.clone(),
            max_alternatives: self.asr.max_alternatives,
            image_parallelism: self.parallelism.max(1),
            max_attempts: match self.asr.mode {
                AsrMode::Mock => 1,
                AsrMode::Remote => self.asr.retry_count + 1,
            },
            ..PipelineConfig::default()
        }
    }

    pub fn training_config(&self, vocabulary_id: &str) -> TrainingConfig {
        TrainingConfig {
            images_per_round: self.training.images_per_round,
            min_recall: self.training.min_recall,
            min_precision: self.training.min_precision,
            vocabulary_id: vocabulary_id.to_string(),
        }
    }

    pub fn load_vocabularies(&self) -> Result<BTreeMap<String, Arc<Vocabulary>>, ConfigError> {
        let mut out = BTreeMap::new();
        for path in &self.vocabularies {
            let v = Vocabulary::load(path).map_err(|e| ConfigError::Parse {
                path: path.clone(),
                message: e.to_string(),
            })?;
            out.insert(v.id().to_string(), Arc::new(v));
        }
        Ok(out)
    }

    pub fn load_embeddings(&self) -> Result<EmbeddingTable, ConfigError> {
        EmbeddingTable::load(&self.embeddings).map_err(|e| ConfigError::Parse {
            path: self.embeddings.clone(),
            message: e.to_string(),
        })
    }

    pub fn build_asr(&self) -> Result<Arc<dyn AsrGateway>, ConfigError> {
        match self.asr.mode {
            AsrMode::Mock => {
                let path = self
                    .asr
                    .fixture
                    .as_ref()
                    .ok_or_else(|| ConfigError::Invalid("mock ASR needs a fixture file".into()))?;
                let mock = MockAsr::load(path).map_err(|e| ConfigError::Parse {
                    path: path.clone(),
                    message: e.to_string(),
                })?;
                Ok(Arc::new(mock))
            }
            AsrMode::Remote => {
                let settings = self.remote_settings();
                if settings.endpoint.is_empty() {
                    return Err(ConfigError::Invalid("remote ASR needs an endpoint".into()));
                }
                let remote = RemoteAsr::new(settings).map_err(|e| ConfigError::Invalid(e.to_string()))?;
                Ok(Arc::new(remote))
            }
        }
    }

    /// Loads every referenced file, failing on the first problem.
    pub fn load_resources(&self) -> Result<Resources, ConfigError> {
        if !(self.delta_s >= 0.0 && self.delta_s.is_finite()) {
            return Err(ConfigError::Invalid(format!("delta_s must be a non-negative number, got {}", self.delta_s)));
        }
        let vocabularies = self.load_vocabularies()?;
        let mut ground_truth = BTreeMap::new();
        for (id, path) in &self.ground_truth {
            let vocab = vocabularies
                .get(id)
                .ok_or_else(|| ConfigError::Invalid(format!("ground truth given for unknown vocabulary {id:?}")))?;
            let gt = GroundTruthSet::load(path, vocab).map_err(|e| ConfigError::Parse {
                path: path.clone(),
                message: e.to_string(),
            })?;
            ground_truth.insert(id.clone(), Arc::new(gt));
        }
        self.training_config("").validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(Resources {
            vocabularies,
            ground_truth,
            embeddings: Arc::new(self.load_embeddings()?),
            asr: self.build_asr()?,
        })
    }
}

/// Everything a configuration refers to, loaded.
#[derive(Clone)]
pub struct Resources {
    pub vocabularies: BTreeMap<String, Arc<Vocabulary>>,
    pub ground_truth: BTreeMap<String, Arc<GroundTruthSet>>,
    pub embeddings: Arc<EmbeddingTable>,
    pub asr: Arc<dyn AsrGateway>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_overrides_file_values() {
        let mut c: ServiceConfig = toml::from_str("listen = \"0.0.0.0:1\"\n[asr]\nmode = \"remote\"\nendpoint = \"http://a\"\n").unwrap();
        let vars = BTreeMap::from([
            ("SPEAKLABEL_LISTEN", "127.0.0.1:9"),
            ("SPEAKLABEL_ASR_RETRIES", "5"),
            ("SPEAKLABEL_DELTA_S", "0.25"),
        ]);
        c.apply_vars(|k| vars.get(k).map(|v| v.to_string())).unwrap();
        assert_eq!(c.listen, "127.0.0.1:9");
        assert_eq!(c.asr.retry_count, 5);
        assert_eq!(c.asr.endpoint.as_deref(), Some("http://a"));
        assert_eq!(c.delta_s, 0.25);
        assert_eq!(c.pipeline_config().max_attempts, 6);
    }

    #[test]
    fn bad_values_rejected() {
        let mut c = ServiceConfig::default();
        assert!(c.apply_vars(|k| (k == "SPEAKLABEL_DELTA_S").then(|| "x".to_string())).is_err());
        assert!(toml::from_str::<ServiceConfig>("unknown = 1").is_err());
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "data_dir = \"d\"\nembeddings = \"/abs/e.txt\"\n").unwrap();
        let c = ServiceConfig::from_file(&path).unwrap();
        assert_eq!(c.data_dir, dir.path().join("d"));
        assert_eq!(c.embeddings, PathBuf::from("/abs/e.txt"));
    }
}
