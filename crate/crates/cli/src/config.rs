//! Run configuration: defaults, then the TOML file, then `SCLOC_*`
//! environment variables, then command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use scloc_core::exec::Exec;
use scloc_core::experiment::{ModelSpec, SceneSpec};
use scloc_core::losses::LossWeights;
use scloc_core::pose::RansacConfig;
use scloc_core::synth::SceneKind;
use scloc_core::train::{Supervision, TrainConfig};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Dense supervision, single-scene weights.
    Single,
    /// Dense supervision, combined-scene weights.
    Combined,
    /// Sparse ground truth with label propagation.
    Sparse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSection {
    pub kind: SceneKind,
    pub n_points: usize,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub focal_ratio: f64,
}

impl Default for SceneSection {
    fn default() -> Self {
        let s = SceneSpec::default();
        Self {
            kind: s.kind,
            n_points: s.n_points,
            frames: s.n_frames,
            width: s.width,
            height: s.height,
            focal_ratio: s.focal_ratio,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HierarchySection {
    pub k: usize,
    pub seed: Option<u64>,
}

impl Default for HierarchySection {
    fn default() -> Self {
        Self { k: 25, seed: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub d: usize,
    pub mha_layers: usize,
    pub conditioned: bool,
    pub seed: Option<u64>,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self {
            d: 16,
            mha_layers: 2,
            conditioned: true,
            seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub preset: Preset,
    pub iterations: usize,
    pub lr: f64,
    pub augment: bool,
    /// Propagation half-width for the sparse preset.
    pub z: usize,
    /// Fraction of valid cells kept for the sparse preset.
    pub keep_fraction: f64,
    /// Replaces the preset's loss weights when present.
    pub weights: Option<LossWeights>,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            preset: Preset::Single,
            iterations: 20000,
            lr: 1e-4,
            augment: true,
            z: 5,
            keep_fraction: 0.05,
            weights: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RansacSection {
    pub n_hypotheses: usize,
    pub tau: f64,
    pub beta_soft: f64,
    pub max_refine_iters: usize,
}

impl Default for RansacSection {
    fn default() -> Self {
        let r = RansacConfig::default();
        Self {
            n_hypotheses: r.n_hypotheses,
            tau: r.tau,
            beta_soft: r.beta_soft,
            max_refine_iters: r.max_refine_iters,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub z: Vec<usize>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            z: vec![0, 3, 5, 9],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub exec: Exec,
    /// Translation threshold as a fraction of the scene diameter.
    pub t_fraction: f64,
    pub r_deg: f64,
    pub scene: SceneSection,
    pub hierarchy: HierarchySection,
    pub network: NetworkSection,
    pub training: TrainingSection,
    pub ransac: RansacSection,
    pub sweep: SweepSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("run"),
            exec: Exec::Parallel,
            t_fraction: 0.05,
            r_deg: 5.0,
            scene: SceneSection::default(),
            hierarchy: HierarchySection::default(),
            network: NetworkSection::default(),
            training: TrainingSection::default(),
            ransac: RansacSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

/// Values given on the command line; `None` leaves the config untouched.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub scene: Option<SceneKind>,
    pub z: Option<usize>,
    pub preset: Option<Preset>,
    pub no_augment: bool,
    pub frames: Option<usize>,
}

fn config_err(msg: impl std::fmt::Display) -> CliError {
    CliError::Config(msg.to_string())
}

/// Parses an environment value as a TOML scalar or array, falling back to
/// a plain string.
fn env_value(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// `SCLOC_TRAINING__LR=3e-4` sets `training.lr`; a single segment such as
/// `SCLOC_SEED` sets a top-level key.
pub fn apply_env(
    table: &mut Table,
    vars: impl IntoIterator<Item = (String, String)>,
) -> Result<(), CliError> {
    let mut vars: Vec<(String, String)> = vars
        .into_iter()
        .filter(|(k, _)| k.starts_with("SCLOC_"))
        .collect();
    vars.sort();
    for (key, raw) in vars {
        let path: Vec<String> = key["SCLOC_".len()..]
            .split("__")
            .map(|s| s.to_ascii_lowercase())
            .collect();
        if path.iter().any(|p| p.is_empty()) {
            return Err(config_err(format!("malformed variable {key}")));
        }
        let mut node = &mut *table;
        for part in &path[..path.len() - 1] {
            let entry = node
                .entry(part.clone())
                .or_insert_with(|| Value::Table(Table::new()));
            node = entry
                .as_table_mut()
                .ok_or_else(|| config_err(format!("{key}: {part} is not a section")))?;
        }
        node.insert(path[path.len() - 1].clone(), env_value(&raw));
    }
    Ok(())
}

impl RunConfig {
    /// Resolves file, environment and flags in that order.
    pub fn resolve(
        file: Option<&Path>,
        env: impl IntoIterator<Item = (String, String)>,
        flags: &Overrides,
    ) -> Result<Self, CliError> {
        let mut table = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::MissingInput(format!("{}: {e}", path.display())))?;
                text.parse::<Table>()
                    .map_err(|e| config_err(format!("{}: {e}", path.display())))?
            }
            None => Table::new(),
        };
        apply_env(&mut table, env)?;
        let mut cfg: RunConfig = Value::Table(table).try_into().map_err(config_err)?;
        if let Some(s) = flags.seed {
            cfg.seed = s;
        }
        if let Some(o) = &flags.out {
            cfg.out = o.clone();
        }
        if let Some(k) = flags.scene {
            cfg.scene.kind = k;
        }
        if let Some(z) = flags.z {
            cfg.training.z = z;
        }
        if let Some(p) = flags.preset {
            cfg.training.preset = p;
        }
        if flags.no_augment {
            cfg.training.augment = false;
        }
        if let Some(f) = flags.frames {
            cfg.scene.frames = f;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let s = &self.scene;
        if s.frames == 0 {
            return Err(config_err("scene.frames must be at least 1"));
        }
        if !s.width.is_multiple_of(8)
            || !s.height.is_multiple_of(8)
            || s.width == 0
            || s.height == 0
        {
            return Err(config_err(
                "scene width and height must be positive multiples of 8",
            ));
        }
        if self.hierarchy.k < 2 {
            return Err(config_err("hierarchy.k must be at least 2"));
        }
        if self.network.d == 0 || !self.network.d.is_multiple_of(2) {
            return Err(config_err("network.d must be a positive even number"));
        }
        let t = &self.training;
        if !(t.lr > 0.0) || !(0.0..=1.0).contains(&t.keep_fraction) {
            return Err(config_err(
                "training.lr must be positive and keep_fraction in [0, 1]",
            ));
        }
        if !(self.t_fraction > 0.0) || !(self.r_deg > 0.0) {
            return Err(config_err("thresholds must be positive"));
        }
        self.ransac_config().validate().map_err(config_err)
    }

    pub fn scene_spec(&self) -> SceneSpec {
        SceneSpec {
            kind: self.scene.kind,
            n_points: self.scene.n_points,
            n_frames: self.scene.frames,
            width: self.scene.width,
            height: self.scene.height,
            focal_ratio: self.scene.focal_ratio,
            seed: self.seed,
        }
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            k: self.hierarchy.k,
            d: self.network.d,
            mha_layers: self.network.mha_layers,
            conditioned: self.network.conditioned,
            hierarchy_seed: self.hierarchy.seed.unwrap_or(self.seed),
            net_seed: self.network.seed.unwrap_or(self.seed),
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        self.training
            .weights
            .clone()
            .unwrap_or_else(|| match self.training.preset {
                Preset::Single | Preset::Sparse => LossWeights::single_scene(),
                Preset::Combined => LossWeights::combined_scenes(),
            })
    }

    pub fn supervision(&self) -> Supervision {
        match self.training.preset {
            Preset::Single | Preset::Combined => Supervision::Dense,
            Preset::Sparse => Supervision::Sparse {
                keep_fraction: self.training.keep_fraction,
                z: self.training.z,
            },
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            iterations: self.training.iterations,
            lr: self.training.lr,
            augment: self.training.augment,
            weights: self.loss_weights(),
            supervision: self.supervision(),
            seed: self.seed,
        }
    }

    pub fn ransac_config(&self) -> RansacConfig {
        RansacConfig {
            n_hypotheses: self.ransac.n_hypotheses,
            tau: self.ransac.tau,
            beta_soft: self.ransac.beta_soft,
            max_refine_iters: self.ransac.max_refine_iters,
            seed: self.seed,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn presets_resolve_to_training_values() {
        let cfg = RunConfig::resolve(None, env(&[]), &Overrides::default()).unwrap();
        let w = cfg.loss_weights();
        assert_eq!(
            (w.lambda1, w.lambda2, w.lambda_ce, w.lambda_rce),
            (1.0, 10.0, 0.1, 1.0)
        );
        assert_eq!((w.lambda3_at(10), w.lambda3_at(11)), (0.0, 0.1));
        assert_eq!(cfg.hierarchy.k, 25);
        let r = cfg.ransac_config();
        assert_eq!(
            (r.n_hypotheses, r.tau, r.beta_soft, r.max_refine_iters),
            (256, 10.0, 0.5, 100)
        );
        assert_eq!(cfg.supervision(), Supervision::Dense);

        let flags = Overrides {
            preset: Some(Preset::Combined),
            ..Default::default()
        };
        let cfg = RunConfig::resolve(None, env(&[]), &flags).unwrap();
        assert_eq!(cfg.loss_weights().lambda2, 100000.0);

        let flags = Overrides {
            preset: Some(Preset::Sparse),
            ..Default::default()
        };
        let cfg = RunConfig::resolve(None, env(&[]), &flags).unwrap();
        assert_eq!(
            cfg.supervision(),
            Supervision::Sparse {
                keep_fraction: 0.05,
                z: 5
            }
        );
    }

    #[test]
    fn precedence_file_env_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "seed = 3\n[training]\nz = 2\nlr = 0.01\n[scene]\nframes = 12\n",
        )
        .unwrap();
        let cfg = RunConfig::resolve(Some(&path), env(&[]), &Overrides::default()).unwrap();
        assert_eq!(
            (cfg.seed, cfg.training.z, cfg.training.lr, cfg.scene.frames),
            (3, 2, 0.01, 12)
        );

        let e = env(&[
            ("SCLOC_SEED", "4"),
            ("SCLOC_TRAINING__Z", "7"),
            ("SCLOC_SCENE__KIND", "twin_room"),
            ("HOME", "/"),
        ]);
        let cfg = RunConfig::resolve(Some(&path), e.clone(), &Overrides::default()).unwrap();
        assert_eq!(
            (cfg.seed, cfg.training.z, cfg.scene.kind),
            (4, 7, SceneKind::TwinRoom)
        );
        assert_eq!(cfg.training.lr, 0.01);

        let flags = Overrides {
            seed: Some(9),
            z: Some(1),
            frames: Some(20),
            no_augment: true,
            scene: Some(SceneKind::RandomBox),
            ..Default::default()
        };
        let cfg = RunConfig::resolve(Some(&path), e, &flags).unwrap();
        assert_eq!((cfg.seed, cfg.training.z, cfg.scene.frames), (9, 1, 20));
        assert_eq!(cfg.scene.kind, SceneKind::RandomBox);
        assert!(!cfg.training.augment);
    }

    #[test]
    fn echoed_config_resolves_to_itself() {
        let flags = Overrides {
            seed: Some(11),
            preset: Some(Preset::Sparse),
            ..Default::default()
        };
        let cfg = RunConfig::resolve(None, env(&[("SCLOC_HIERARCHY__K", "8")]), &flags).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("echo.toml");
        std::fs::write(&path, cfg.to_toml()).unwrap();
        assert_eq!(
            RunConfig::resolve(Some(&path), env(&[]), &Overrides::default()).unwrap(),
            cfg
        );
    }

    #[test]
    fn config_errors() {
        let bad = |pairs: &[(&str, &str)]| {
            RunConfig::resolve(None, env(pairs), &Overrides::default()).unwrap_err()
        };
        assert!(matches!(
            bad(&[("SCLOC_TRAINING__LR", "-1")]),
            CliError::Config(_)
        ));
        assert!(matches!(
            bad(&[("SCLOC_SCENE__WIDTH", "100")]),
            CliError::Config(_)
        ));
        assert!(matches!(bad(&[("SCLOC_NOPE", "1")]), CliError::Config(_)));
        assert!(matches!(
            bad(&[("SCLOC_SEED__X", "1")]),
            CliError::Config(_)
        ));
        assert!(matches!(
            bad(&[("SCLOC_RANSAC__TAU", "0")]),
            CliError::Config(_)
        ));
        let missing = RunConfig::resolve(
            Some(Path::new("/nonexistent/run.toml")),
            env(&[]),
            &Overrides::default(),
        );
        assert!(matches!(missing, Err(CliError::MissingInput(_))));
    }
}
