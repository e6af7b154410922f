//! Pipeline configuration: one TOML file with a section per stage. Every
//! section is optional and falls back to its defaults; unknown keys are
//! rejected with the offending line.

use std::path::{Path, PathBuf};

use exmap_core::data::SpuriousSpec;
use exmap_core::lrp::LrpConfig;
use exmap_core::nn::TrainConfig;
use exmap_core::pseudo::{ClusteringChoice, PseudoSource};
use exmap_core::retrain::{DfrConfig, JttGrid};
use exmap_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    Single,
    Multi,
}

impl DatasetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetKind::Single => "single",
            DatasetKind::Multi => "multi",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub kind: DatasetKind,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
    pub rho: f64,
    pub rho2: f64,
    pub val_rho: Option<f64>,
    pub seed: u64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        let spec = SpuriousSpec::default();
        DatasetSection {
            kind: DatasetKind::Single,
            train_size: spec.train_size,
            val_size: spec.val_size,
            test_size: spec.test_size,
            rho: spec.rho,
            rho2: spec.rho2,
            val_rho: spec.val_rho,
            seed: spec.seed,
        }
    }
}

impl DatasetSection {
    pub fn spec(&self, run_seed: u64) -> SpuriousSpec {
        SpuriousSpec {
            train_size: self.train_size,
            val_size: self.val_size,
            test_size: self.test_size,
            rho: self.rho,
            rho2: self.rho2,
            val_rho: self.val_rho,
            seed: self.seed.wrapping_add(run_seed),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("runs/exmap"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PseudoSection {
    pub source: PseudoSource,
    pub seed: u64,
}

impl Default for PseudoSection {
    fn default() -> Self {
        PseudoSection {
            source: PseudoSource::Gexmap,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Dfr,
    Jtt,
    None,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Dfr => "dfr",
            Strategy::Jtt => "jtt",
            Strategy::None => "none",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrainSection {
    pub strategy: Strategy,
}

impl Default for RetrainSection {
    fn default() -> Self {
        RetrainSection {
            strategy: Strategy::Dfr,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seeds: Vec<u64>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { seeds: vec![0] }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub output: OutputSection,
    pub dataset: DatasetSection,
    pub train: TrainConfig,
    pub lrp: LrpConfig,
    pub cluster: ClusteringChoice,
    pub pseudo: PseudoSection,
    pub retrain: RetrainSection,
    pub dfr: DfrConfig,
    pub jtt: JttGrid,
    pub run: RunSection,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.dataset
            .spec(0)
            .validate(self.dataset.kind == DatasetKind::Multi)?;
        self.train.validate()?;
        self.lrp.validate()?;
        self.dfr.validate()?;
        if let ClusteringChoice::Kmeans { k } = self.cluster {
            if k < 2 {
                return Err(Error::InvalidConfig(format!(
                    "k-means needs k >= 2, got {k}"
                )));
            }
        }
        if self.retrain.strategy == Strategy::Jtt
            && (self.jtt.id_epochs.is_empty() || self.jtt.lambda_up.is_empty())
        {
            return Err(Error::InvalidConfig(
                "the upweighting grid needs at least one identification epoch count and one weight".into(),
            ));
        }
        if self.run.seeds.is_empty() {
            return Err(Error::InvalidConfig("run.seeds must not be empty".into()));
        }
        Ok(())
    }

    pub fn train_for_run(&self, run_seed: u64) -> TrainConfig {
        TrainConfig {
            seed: self.train.seed.wrapping_add(run_seed),
            ..self.train.clone()
        }
    }

    pub fn pseudo_seed(&self, run_seed: u64) -> u64 {
        self.pseudo.seed.wrapping_add(run_seed)
    }

    pub fn dfr_for_run(&self, run_seed: u64) -> DfrConfig {
        DfrConfig {
            seed: self.dfr.seed.wrapping_add(run_seed),
            ..self.dfr.clone()
        }
    }

    pub fn jtt_for_run(&self, run_seed: u64) -> JttGrid {
        JttGrid {
            seed: self.jtt.seed.wrapping_add(run_seed),
            ..self.jtt.clone()
        }
    }
}

pub fn load_config(path: &Path) -> Result<PipelineConfig> {
    let text = std::fs::read_to_string(path)?;
    let cfg: PipelineConfig = toml::from_str(&text).map_err(|e| Error::Format {
        format: "toml",
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Output directory precedence: `--out` flag, then `EXMAP_OUT`, then the
/// config's `[output] dir`.
pub fn resolve_out_dir(cfg: &PipelineConfig, flag: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Ok(v) = std::env::var("EXMAP_OUT") {
        if !v.is_empty() {
            return PathBuf::from(v);
        }
    }
    cfg.output.dir.clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use exmap_core::nn::LrSchedule;

    #[test]
    fn empty_config_is_the_default_single_run() {
        let cfg: PipelineConfig = toml::from_str("").unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.dataset.kind, DatasetKind::Single);
        assert_eq!(cfg.dataset.train_size, 20_000);
        assert_eq!(cfg.retrain.strategy, Strategy::Dfr);
        assert_eq!(cfg.pseudo.source, PseudoSource::Gexmap);
        assert!(matches!(cfg.cluster, ClusteringChoice::Spectral));
        assert_eq!(cfg.run.seeds, vec![0]);
    }

    #[test]
    fn partial_sections_keep_defaults_for_the_rest() {
        let text = "
            [dataset]
            kind = \"multi\"
            rho = 0.95
            rho2 = 0.95

            [train]
            epochs = 7

            [cluster]
            method = \"kmeans\"
            k = 4

            [retrain]
            strategy = \"jtt\"
        ";
        let cfg: PipelineConfig = toml::from_str(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.dataset.kind, DatasetKind::Multi);
        assert_eq!(cfg.train.epochs, 7);
        assert_eq!(cfg.train.batch_size, TrainConfig::default().batch_size);
        assert_eq!(cfg.train.schedule, LrSchedule::Cosine);
        assert!(matches!(cfg.cluster, ClusteringChoice::Kmeans { k: 4 }));
        assert_eq!(cfg.retrain.strategy, Strategy::Jtt);
    }

    #[test]
    fn unknown_keys_are_line_anchored_errors() {
        let text = "[train]\nlearning_rte = 0.1\n";
        let err = toml::from_str::<PipelineConfig>(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("learning_rte"), "{msg}");
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn semantic_violations_fail_validation() {
        let cfg: PipelineConfig = toml::from_str("[dataset]\nrho = 0.3\n").unwrap();
        assert_eq!(cfg.validate().unwrap_err().category(), "config");

        let cfg: PipelineConfig =
            toml::from_str("[cluster]\nmethod = \"kmeans\"\nk = 1\n").unwrap();
        assert_eq!(cfg.validate().unwrap_err().category(), "config");

        let cfg: PipelineConfig = toml::from_str("[run]\nseeds = []\n").unwrap();
        assert_eq!(cfg.validate().unwrap_err().category(), "config");
    }

    #[test]
    fn run_seed_shifts_every_stage_seed() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.dataset.spec(3).seed, 3);
        assert_eq!(cfg.train_for_run(3).seed, 3);
        assert_eq!(cfg.pseudo_seed(3), 3);
        assert_eq!(cfg.dfr_for_run(3).seed, 3);
        assert_eq!(cfg.jtt_for_run(3).seed, 3);
        let spec0 = cfg.dataset.spec(0);
        assert_eq!(spec0.seed, cfg.dataset.seed);
    }

    #[test]
    fn out_dir_precedence_prefers_the_flag() {
        let mut cfg = PipelineConfig::default();
        cfg.output.dir = PathBuf::from("from-config");
        assert_eq!(
            resolve_out_dir(&cfg, Some(Path::new("from-flag"))),
            PathBuf::from("from-flag")
        );
        std::env::set_var("EXMAP_OUT", "from-env");
        assert_eq!(resolve_out_dir(&cfg, None), PathBuf::from("from-env"));
        assert_eq!(
            resolve_out_dir(&cfg, Some(Path::new("from-flag"))),
            PathBuf::from("from-flag")
        );
        std::env::remove_var("EXMAP_OUT");
        assert_eq!(resolve_out_dir(&cfg, None), PathBuf::from("from-config"));
    }
}
