//! JSON configuration. Every field has a default, so a config file only needs
//! the values it changes.

use std::fs;
use std::path::Path;

use amc_core::channel::{ChannelProfile, SnrSpec};
use amc_core::fifnet::FifNetSpec;
use amc_core::modulation::{ModulationFormat, PulseShape};
use amc_core::nn::{Hyper, OptimizerKind};
use amc_core::render::{default_extent, RenderConfig};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, IoContext, Result};

pub const CONFIG_VERSION: u32 = 1;

fn config_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub format_version: u32,
    pub dataset: DatasetConfig,
    pub split: SplitConfig,
    pub train: TrainConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            format_version: CONFIG_VERSION,
            dataset: DatasetConfig::default(),
            split: SplitConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl Config {
    /// A four-class, two-SNR setup small enough to train on one CPU core.
    pub fn desk() -> Self {
        let formats = [
            ModulationFormat::Qpsk,
            ModulationFormat::Psk8,
            ModulationFormat::Pam4,
            ModulationFormat::Qam16,
        ];
        Self {
            dataset: DatasetConfig {
                formats: formats.iter().map(|f| f.name().to_string()).collect(),
                snr_list_db: vec![10.0, 20.0],
                frames_per_class_per_snr: 400,
                image_size: 50,
                ..DatasetConfig::default()
            },
            split: SplitConfig {
                fractions: [0.75, 0.125, 0.125],
                ..SplitConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).at(path)?;
        let cfg: Config = serde_json::from_str(&text).map_err(|source| HarnessError::Json {
            path: path.into(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self).expect("config serializes") + "\n").at(path)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != CONFIG_VERSION {
            return Err(config_err(format!(
                "format_version {} is not supported (expected {CONFIG_VERSION})",
                self.format_version
            )));
        }
        self.dataset.validate()?;
        self.split.validate()?;
        self.train.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSettings {
    pub decay_mu: f64,
    /// Half-width of the I/Q window; `None` uses the library default.
    pub extent: Option<f64>,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            decay_mu: RenderConfig::default().decay_mu,
            extent: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseSettings {
    pub rolloff: f64,
    pub symbol_rate_hz: f64,
    pub span_symbols: usize,
    pub samples_per_symbol: usize,
}

impl Default for PulseSettings {
    fn default() -> Self {
        let p = PulseShape::default();
        Self {
            rolloff: p.rolloff,
            symbol_rate_hz: 1.0 / p.symbol_period,
            span_symbols: p.span_symbols,
            samples_per_symbol: p.samples_per_symbol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSettings {
    pub path_delays_ns: Vec<f64>,
    pub avg_path_gains_db: Vec<f64>,
}

impl Default for ChannelSettings {
    fn default() -> Self {
        let p = ChannelProfile::pedestrian_a();
        Self {
            path_delays_ns: p.path_delays_ns,
            avg_path_gains_db: p.avg_path_gains_db,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub formats: Vec<String>,
    pub snr_list_db: Vec<f64>,
    pub frames_per_class_per_snr: usize,
    pub symbols_per_frame: usize,
    pub image_size: usize,
    pub master_seed: u64,
    /// Scale received symbols to unit mean power before rendering.
    pub normalize_power: bool,
    pub render: RenderSettings,
    pub channel: ChannelSettings,
    pub pulse: PulseSettings,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            formats: ModulationFormat::ALL.iter().map(|f| f.name().to_string()).collect(),
            snr_list_db: (-20..=30).step_by(5).map(f64::from).collect(),
            frames_per_class_per_snr: 4000,
            symbols_per_frame: 1000,
            image_size: 200,
            master_seed: 1,
            normalize_power: true,
            render: RenderSettings::default(),
            channel: ChannelSettings::default(),
            pulse: PulseSettings::default(),
        }
    }
}

impl DatasetConfig {
    pub fn formats(&self) -> Result<Vec<ModulationFormat>> {
        let list = self
            .formats
            .iter()
            .map(|n| n.parse::<ModulationFormat>())
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if list.is_empty() {
            return Err(config_err("no modulation formats listed"));
        }
        for (i, f) in list.iter().enumerate() {
            if list[..i].contains(f) {
                return Err(config_err(format!("format {f} listed twice")));
            }
        }
        Ok(list)
    }

    pub fn snrs(&self) -> Result<Vec<SnrSpec>> {
        if self.snr_list_db.is_empty() {
            return Err(config_err("no SNR values listed"));
        }
        for (i, s) in self.snr_list_db.iter().enumerate() {
            if self.snr_list_db[..i].contains(s) {
                return Err(config_err(format!("SNR {s} dB listed twice")));
            }
        }
        Ok(self
            .snr_list_db
            .iter()
            .map(|&s| SnrSpec::new(s))
            .collect::<std::result::Result<Vec<_>, _>>()?)
    }

    pub fn pulse_shape(&self) -> PulseShape {
        PulseShape {
            rolloff: self.pulse.rolloff,
            symbol_period: 1.0 / self.pulse.symbol_rate_hz,
            span_symbols: self.pulse.span_symbols,
            samples_per_symbol: self.pulse.samples_per_symbol,
        }
    }

    pub fn channel_profile(&self) -> ChannelProfile {
        ChannelProfile {
            path_delays_ns: self.channel.path_delays_ns.clone(),
            avg_path_gains_db: self.channel.avg_path_gains_db.clone(),
        }
    }

    pub fn render_config(&self) -> RenderConfig {
        RenderConfig {
            image_size: self.image_size,
            decay_mu: self.render.decay_mu,
            extent: self.render.extent.unwrap_or_else(default_extent),
        }
    }

    pub fn image_count(&self) -> usize {
        self.formats.len() * self.snr_list_db.len() * self.frames_per_class_per_snr
    }

    pub fn validate(&self) -> Result<()> {
        self.formats()?;
        self.snrs()?;
        if self.frames_per_class_per_snr == 0 || self.symbols_per_frame == 0 {
            return Err(config_err("frame and symbol counts must be at least 1"));
        }
        if !(self.pulse.symbol_rate_hz > 0.0) {
            return Err(config_err("symbol rate must be positive"));
        }
        self.pulse_shape().validate()?;
        self.channel_profile().validate()?;
        self.render_config().validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Train, validation and test fractions.
    pub fractions: [f64; 3],
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            fractions: [0.8, 0.1, 0.1],
            seed: 1,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(config_err("split fractions must lie in [0, 1]"));
        }
        let sum: f64 = self.fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(config_err(format!("split fractions sum to {sum}, not 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerName {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: OptimizerName,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Learning-rate factor applied when validation accuracy plateaus.
    pub lr_decay: f64,
    pub plateau_patience: usize,
    pub early_stop_patience: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop as soon as validation accuracy reaches this value.
    pub target_val_accuracy: Option<f64>,
    /// Samples per forward/backward pass; gradients of a batch are summed
    /// over chunks in a fixed order.
    pub chunk_size: usize,
    pub clip_ceiling: f64,
    pub seed: u64,
    pub checkpoint_name: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerName::Sgd,
            learning_rate: 0.01,
            momentum: 0.9,
            lr_decay: 0.1,
            plateau_patience: 2,
            early_stop_patience: 5,
            batch_size: 64,
            max_epochs: 30,
            target_val_accuracy: None,
            chunk_size: 16,
            clip_ceiling: 6.0,
            seed: 1,
            checkpoint_name: "model.fifn".into(),
        }
    }
}

impl TrainConfig {
    pub fn hyper(&self, lr: f64) -> Hyper {
        let kind = match self.optimizer {
            OptimizerName::Sgd => OptimizerKind::Sgd { momentum: self.momentum },
            OptimizerName::Adam => OptimizerKind::adam(),
        };
        Hyper { lr, kind }
    }

    pub fn net_spec(&self, image_size: usize, num_classes: usize) -> FifNetSpec {
        FifNetSpec {
            clip_ceiling: self.clip_ceiling,
            ..FifNetSpec::new(image_size, num_classes)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper(self.learning_rate).validate()?;
        if self.batch_size == 0 || self.max_epochs == 0 || self.chunk_size == 0 {
            return Err(config_err("batch size, epochs and chunk size must be positive"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(config_err("lr_decay must lie in (0, 1]"));
        }
        if !(self.clip_ceiling > 0.0) {
            return Err(config_err("clip_ceiling must be positive"));
        }
        if self.checkpoint_name.is_empty() {
            return Err(config_err("checkpoint_name is empty"));
        }
        Ok(())
    }
}
