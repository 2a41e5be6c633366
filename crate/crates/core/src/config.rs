//! Run configuration: a TOML file, command-line overrides, defaults and
//! validation.
//!
//! Precedence is `defaults < file < overrides`. Unknown keys are rejected.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::augmentation::TransformConfig;
use crate::dataset::{
    english_letter_frequencies, zipf_frequencies, GlobalProfile, LocalProfile, PartitionProfile,
    SizeProfile,
};
use crate::engine::{Mode, TrainingConfig};
use crate::error::{Error, Result};
use crate::model::Architecture;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    Astraea,
    Fedavg,
    PropositionCheck,
    ScheduleOnly,
}

impl FromStr for RunMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "astraea" => Ok(RunMode::Astraea),
            "fedavg" => Ok(RunMode::Fedavg),
            "proposition-check" => Ok(RunMode::PropositionCheck),
            "schedule-only" => Ok(RunMode::ScheduleOnly),
            other => Err(Error::config(
                "mode",
                format!("expected astraea | fedavg | proposition-check | schedule-only, got `{other}`"),
            )),
        }
    }
}

impl std::fmt::Display for RunMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RunMode::Astraea => "astraea",
            RunMode::Fedavg => "fedavg",
            RunMode::PropositionCheck => "proposition-check",
            RunMode::ScheduleOnly => "schedule-only",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic,
    Idx,
}

impl FromStr for DataSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synthetic" => Ok(DataSource::Synthetic),
            "idx" => Ok(DataSource::Idx),
            other => Err(Error::config(
                "dataset",
                format!("expected synthetic | idx, got `{other}`"),
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Softmax,
    Mlp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub hidden: usize,
}

impl ModelSpec {
    pub fn architecture(&self, features: usize, classes: usize) -> Architecture {
        match self.kind {
            ModelKind::Softmax => Architecture::Softmax { features, classes },
            ModelKind::Mlp => Architecture::Mlp {
                features,
                hidden: self.hidden,
                classes,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub source: DataSource,
    pub num_classes: usize,
    pub feature_dim: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub separation: f64,
    pub idx_images: Option<PathBuf>,
    pub idx_labels: Option<PathBuf>,
    pub partition: PartitionProfile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    pub out_dir: PathBuf,
    pub checkpoint_every: Option<usize>,
}

/// Fully resolved and validated run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: RunMode,
    pub training: TrainingConfig,
    pub model: ModelSpec,
    pub data: DataConfig,
    /// Explicit client histograms for schedule-only runs.
    pub client_histograms: Option<Vec<Vec<u64>>>,
    pub output: OutputConfig,
}

// ---- file schema -----------------------------------------------------------

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub mode: Option<String>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub federation: RawFederation,
    #[serde(default)]
    pub model: RawModel,
    #[serde(default)]
    pub data: RawData,
    #[serde(default)]
    pub augmentation: RawAugmentation,
    #[serde(default)]
    pub schedule: RawSchedule,
    #[serde(default)]
    pub output: RawOutput,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawFederation {
    pub k: Option<usize>,
    pub b: Option<usize>,
    pub c: Option<usize>,
    pub alpha: Option<f64>,
    pub gamma: Option<usize>,
    pub local_epochs: Option<usize>,
    pub mediator_epochs: Option<usize>,
    pub rounds: Option<usize>,
    pub optimizer: Option<String>,
    pub lr: Option<f64>,
    pub static_schedule: Option<bool>,
    pub wire_bytes_per_param: Option<u64>,
    pub parallel_mediators: Option<bool>,
    pub stop_at_best_validation: Option<bool>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawModel {
    pub kind: Option<String>,
    pub hidden: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawData {
    pub source: Option<String>,
    pub num_classes: Option<usize>,
    pub feature_dim: Option<usize>,
    pub train_per_class: Option<usize>,
    pub test_per_class: Option<usize>,
    pub separation: Option<f64>,
    pub idx_images: Option<PathBuf>,
    pub idx_labels: Option<PathBuf>,
    pub size_profile: Option<String>,
    pub power_law_exponent: Option<f64>,
    pub local_profile: Option<String>,
    pub global_profile: Option<String>,
    pub zipf_exponent: Option<f64>,
    pub frequencies: Option<Vec<f64>>,
    pub total: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawAugmentation {
    pub transform: Option<String>,
    pub sigma: Option<f64>,
    pub scale_min: Option<f64>,
    pub scale_max: Option<f64>,
    pub width: Option<usize>,
    pub height: Option<usize>,
    pub max_shift: Option<f64>,
    pub max_rotation: Option<f64>,
    pub max_shear: Option<f64>,
    pub zoom_min: Option<f64>,
    pub zoom_max: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSchedule {
    pub client_histograms: Option<Vec<Vec<u64>>>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOutput {
    pub out_dir: Option<PathBuf>,
    pub checkpoint_every: Option<usize>,
}

/// Values supplied on the command line; each `Some` wins over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub mode: Option<String>,
    pub k: Option<usize>,
    pub b: Option<usize>,
    pub c: Option<usize>,
    pub alpha: Option<f64>,
    pub gamma: Option<usize>,
    pub local_epochs: Option<usize>,
    pub mediator_epochs: Option<usize>,
    pub rounds: Option<usize>,
    pub seed: Option<u64>,
    pub optimizer: Option<String>,
    pub lr: Option<f64>,
    pub static_schedule: Option<bool>,
    pub out_dir: Option<PathBuf>,
    pub dataset: Option<String>,
    pub idx_images: Option<PathBuf>,
    pub idx_labels: Option<PathBuf>,
    pub parallel_mediators: Option<bool>,
}

impl RawConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("config", e.message().to_string()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        fn set<T: Clone>(slot: &mut Option<T>, v: &Option<T>) {
            if v.is_some() {
                slot.clone_from(v);
            }
        }
        set(&mut self.mode, &o.mode);
        set(&mut self.seed, &o.seed);
        let f = &mut self.federation;
        set(&mut f.k, &o.k);
        set(&mut f.b, &o.b);
        set(&mut f.c, &o.c);
        set(&mut f.alpha, &o.alpha);
        set(&mut f.gamma, &o.gamma);
        set(&mut f.local_epochs, &o.local_epochs);
        set(&mut f.mediator_epochs, &o.mediator_epochs);
        set(&mut f.rounds, &o.rounds);
        set(&mut f.optimizer, &o.optimizer);
        set(&mut f.lr, &o.lr);
        set(&mut f.static_schedule, &o.static_schedule);
        set(&mut f.parallel_mediators, &o.parallel_mediators);
        set(&mut self.output.out_dir, &o.out_dir);
        set(&mut self.data.source, &o.dataset);
        set(&mut self.data.idx_images, &o.idx_images);
        set(&mut self.data.idx_labels, &o.idx_labels);
    }

    pub fn resolve(self) -> Result<RunConfig> {
        let mode: RunMode = self.mode.as_deref().unwrap_or("astraea").parse()?;
        let f = self.federation;
        let d = TrainingConfig::default();
        let training = TrainingConfig {
            num_clients: f.k.unwrap_or(d.num_clients),
            batch_size: f.b.unwrap_or(d.batch_size),
            clients_per_round: f.c.unwrap_or(d.clients_per_round),
            alpha: f.alpha.unwrap_or(d.alpha),
            gamma: f.gamma.unwrap_or(d.gamma),
            local_epochs: f.local_epochs.unwrap_or(d.local_epochs),
            mediator_epochs: f.mediator_epochs.unwrap_or(d.mediator_epochs),
            rounds: f.rounds.unwrap_or(d.rounds),
            optimizer: match f.optimizer {
                Some(s) => s.parse()?,
                None => d.optimizer,
            },
            learning_rate: f.lr.unwrap_or(d.learning_rate),
            seed: self.seed.unwrap_or(d.seed),
            mode: if mode == RunMode::Fedavg { Mode::Fedavg } else { Mode::Astraea },
            static_schedule: f.static_schedule.unwrap_or(d.static_schedule),
            wire_bytes_per_param: f.wire_bytes_per_param.unwrap_or(d.wire_bytes_per_param),
            parallel_mediators: f.parallel_mediators.unwrap_or(d.parallel_mediators),
            stop_at_best_validation: f.stop_at_best_validation.unwrap_or(d.stop_at_best_validation),
            transform: resolve_transform(&self.augmentation)?,
        };
        training.validate()?;

        let model = ModelSpec {
            kind: match self.model.kind.as_deref().unwrap_or("softmax") {
                "softmax" => ModelKind::Softmax,
                "mlp" => ModelKind::Mlp,
                other => {
                    return Err(Error::config(
                        "model.kind",
                        format!("expected softmax | mlp, got `{other}`"),
                    ))
                }
            },
            hidden: self.model.hidden.unwrap_or(32),
        };
        if model.hidden == 0 {
            return Err(Error::config("model.hidden", "must be >= 1"));
        }

        let data = resolve_data(self.data)?;
        if let Some(h) = &self.schedule.client_histograms {
            if h.is_empty() || h.iter().any(|c| c.len() != h[0].len() || c.iter().sum::<u64>() == 0) {
                return Err(Error::config(
                    "schedule.client_histograms",
                    "need equal-length, nonempty histograms",
                ));
            }
            if h.len() != training.num_clients {
                return Err(Error::config(
                    "schedule.client_histograms",
                    format!("{} histograms given but k = {}", h.len(), training.num_clients),
                ));
            }
        }
        if let Some(0) = self.output.checkpoint_every {
            return Err(Error::config("output.checkpoint_every", "must be >= 1"));
        }
        Ok(RunConfig {
            mode,
            training,
            model,
            data,
            client_histograms: self.schedule.client_histograms,
            output: OutputConfig {
                out_dir: self.output.out_dir.unwrap_or_else(|| PathBuf::from("astraea-out")),
                checkpoint_every: self.output.checkpoint_every,
            },
        })
    }
}

fn resolve_transform(a: &RawAugmentation) -> Result<TransformConfig> {
    let t = match a.transform.as_deref().unwrap_or("jitter") {
        "jitter" => TransformConfig::VectorJitter {
            sigma: a.sigma.unwrap_or(0.1),
            scale_min: a.scale_min.unwrap_or(0.95),
            scale_max: a.scale_max.unwrap_or(1.05),
        },
        "affine" => TransformConfig::ImageAffine {
            width: a.width.unwrap_or(28),
            height: a.height.unwrap_or(28),
            max_shift: a.max_shift.unwrap_or(2.0),
            max_rotation: a.max_rotation.unwrap_or(10.0),
            max_shear: a.max_shear.unwrap_or(10.0),
            zoom_min: a.zoom_min.unwrap_or(0.9),
            zoom_max: a.zoom_max.unwrap_or(1.1),
        },
        other => {
            return Err(Error::config(
                "augmentation.transform",
                format!("expected jitter | affine, got `{other}`"),
            ))
        }
    };
    // Feature-dimension checks happen once the data shape is known.
    if let TransformConfig::ImageAffine { width, height, .. } = t {
        t.validate(width * height)?;
    }
    Ok(t)
}

fn resolve_data(r: RawData) -> Result<DataConfig> {
    let source: DataSource = r.source.as_deref().unwrap_or("synthetic").parse()?;
    let num_classes = r.num_classes.unwrap_or(10);
    if num_classes < 2 {
        return Err(Error::config("data.num_classes", "must be >= 2"));
    }
    let separation = r.separation.unwrap_or(3.0);
    if !(separation > 0.0 && separation.is_finite()) {
        return Err(Error::config("data.separation", "must be finite and > 0"));
    }
    let size = match r.size_profile.as_deref().unwrap_or("even") {
        "even" => SizeProfile::Even,
        "power_law" => {
            let exponent = r.power_law_exponent.unwrap_or(1.0);
            if !(exponent >= 0.0 && exponent.is_finite()) {
                return Err(Error::config("data.power_law_exponent", "must be finite and >= 0"));
            }
            SizeProfile::PowerLaw { exponent }
        }
        other => {
            return Err(Error::config(
                "data.size_profile",
                format!("expected even | power_law, got `{other}`"),
            ))
        }
    };
    let local = match r.local_profile.as_deref().unwrap_or("random") {
        "random" => LocalProfile::Random,
        "balanced" => LocalProfile::Balanced,
        other => {
            return Err(Error::config(
                "data.local_profile",
                format!("expected balanced | random, got `{other}`"),
            ))
        }
    };
    let global = match r.global_profile.as_deref().unwrap_or("balanced") {
        "balanced" => GlobalProfile::Balanced,
        "letters" => {
            if source == DataSource::Synthetic && num_classes != 26 {
                return Err(Error::config(
                    "data.global_profile",
                    "letters frequency needs num_classes = 26",
                ));
            }
            GlobalProfile::Frequency(english_letter_frequencies())
        }
        "zipf" => {
            let s = r.zipf_exponent.unwrap_or(1.0);
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::config("data.zipf_exponent", "must be finite and >= 0"));
            }
            GlobalProfile::Frequency(zipf_frequencies(num_classes, s))
        }
        "custom" => {
            let f = r.frequencies.ok_or_else(|| {
                Error::config("data.frequencies", "required when global_profile = custom")
            })?;
            let sum: f64 = f.iter().sum();
            if f.iter().any(|v| !(*v >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::config("data.frequencies", "entries must be >= 0 and sum to 1"));
            }
            GlobalProfile::Frequency(f)
        }
        other => {
            return Err(Error::config(
                "data.global_profile",
                format!("expected balanced | letters | zipf | custom, got `{other}`"),
            ))
        }
    };
    if source == DataSource::Idx && (r.idx_images.is_none() || r.idx_labels.is_none()) {
        return Err(Error::config(
            "data.idx_images",
            "idx source needs both idx_images and idx_labels",
        ));
    }
    Ok(DataConfig {
        source,
        num_classes,
        feature_dim: r.feature_dim.unwrap_or(20),
        train_per_class: r.train_per_class.unwrap_or(600),
        test_per_class: r.test_per_class.unwrap_or(100),
        separation,
        idx_images: r.idx_images,
        idx_labels: r.idx_labels,
        partition: PartitionProfile {
            size,
            local,
            global,
            total: r.total,
        },
    })
}

/// Read a TOML config, apply overrides, resolve defaults and validate.
pub fn parse_config(path: &Path, overrides: &Overrides) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text, overrides)
}

pub fn parse_config_str(text: &str, overrides: &Overrides) -> Result<RunConfig> {
    let mut raw = RawConfig::from_toml_str(text)?;
    raw.apply(overrides);
    raw.resolve()
}

/// Resolved configuration recorded in a run manifest, with overrides applied
/// on top (output directory, typically).
pub fn config_from_manifest(path: &Path) -> Result<RunConfig> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_slice(&raw)?;
    let config = value
        .get("config")
        .cloned()
        .ok_or_else(|| Error::config("manifest", "missing `config` section"))?;
    let config: RunConfig = serde_json::from_value(config)?;
    config.training.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gets_defaults() {
        let c = parse_config_str("", &Overrides::default()).unwrap();
        assert_eq!(c.training.alpha, 0.67);
        assert_eq!(c.training.gamma, 10);
        assert_eq!(c.training.mediator_epochs, 2);
        assert_eq!(c.mode, RunMode::Astraea);
        assert_eq!(c.data.partition, PartitionProfile::default());
    }

    #[test]
    fn gamma_zero_rejected() {
        let err = parse_config_str("[federation]\ngamma = 0\n", &Overrides::default()).unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "gamma"), "{err}");
    }

    #[test]
    fn c_above_k_rejected() {
        let err = parse_config_str("[federation]\nk = 5\nc = 6\n", &Overrides::default()).unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "c"), "{err}");
    }

    #[test]
    fn alpha_outside_unit_interval_rejected() {
        assert!(parse_config_str("[federation]\nalpha = 2.0\n", &Overrides::default()).is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = parse_config_str("[federation]\nbogus = 1\n", &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        assert!(parse_config_str("colour = 1\n", &Overrides::default()).is_err());
    }

    #[test]
    fn flags_override_file() {
        let text = "seed = 3\n[federation]\nk = 40\nc = 10\ngamma = 4\n";
        let o = Overrides {
            gamma: Some(7),
            seed: Some(9),
            mode: Some("fedavg".into()),
            ..Default::default()
        };
        let c = parse_config_str(text, &o).unwrap();
        assert_eq!(c.training.gamma, 7);
        assert_eq!(c.training.seed, 9);
        assert_eq!(c.training.num_clients, 40);
        assert_eq!(c.mode, RunMode::Fedavg);
        assert_eq!(c.training.mode, Mode::Fedavg);
    }

    #[test]
    fn override_can_make_config_invalid() {
        let o = Overrides {
            c: Some(500),
            ..Default::default()
        };
        assert!(parse_config_str("[federation]\nk = 50\n", &o).is_err());
    }

    #[test]
    fn profiles_parse() {
        let text = r#"
[data]
num_classes = 26
global_profile = "letters"
size_profile = "power_law"
power_law_exponent = 0.5
local_profile = "balanced"
total = 5000
"#;
        let c = parse_config_str(text, &Overrides::default()).unwrap();
        assert_eq!(c.data.partition.size, SizeProfile::PowerLaw { exponent: 0.5 });
        assert_eq!(c.data.partition.local, LocalProfile::Balanced);
        assert_eq!(c.data.partition.total, Some(5000));
        assert!(matches!(c.data.partition.global, GlobalProfile::Frequency(ref f) if f.len() == 26));
    }

    #[test]
    fn letters_need_26_classes() {
        assert!(parse_config_str("[data]\nglobal_profile = \"letters\"\n", &Overrides::default()).is_err());
    }

    #[test]
    fn idx_requires_paths() {
        let err = parse_config_str("[data]\nsource = \"idx\"\n", &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("idx_images"));
    }

    #[test]
    fn resolved_config_roundtrips_through_json() {
        let c = parse_config_str("[federation]\nk = 12\nc = 4\n", &Overrides::default()).unwrap();
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
