//! Helpers shared by the subcommands.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use lcm_core::channel::{dft_codebook, generate_trace, ChannelRegime, ChannelTrace, RegimeSchedule, TraceConfig};
use lcm_core::models::ModelPackage;
use lcm_core::sim::{RawConfig, ScenarioConfig};

/// Marks an error as a usage or configuration problem (exit code 1).
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Reads a scenario file and applies `key=value` overrides.
pub fn load_raw(path: &Path, overrides: &[String]) -> Result<RawConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let mut raw = RawConfig::parse(&text).with_context(|| format!("in {}", path.display()))?;
    for o in overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| usage(format!("override {o:?} is not key=value")))?;
        raw.set(k.trim(), v.trim());
    }
    Ok(raw)
}

pub fn load_config(path: &Path, overrides: &[String]) -> Result<ScenarioConfig> {
    let raw = load_raw(path, overrides)?;
    ScenarioConfig::from_raw(&raw).with_context(|| format!("in {}", path.display()))
}

/// Output directory: explicit flag, then the config, then `$LCM_SIM_OUT`,
/// then `./out`, each suffixed by the scenario file stem unless explicit.
pub fn output_dir(explicit: Option<&Path>, cfg: &ScenarioConfig, config_path: &Path) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    if let Some(p) = &cfg.output_dir {
        return p.clone();
    }
    let stem = config_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    let root = std::env::var_os("LCM_SIM_OUT").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out"));
    root.join(stem)
}

pub fn read_package(path: &Path) -> Result<ModelPackage> {
    let bytes = std::fs::read(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let p = ModelPackage::from_bytes(&bytes).with_context(|| format!("decoding {}", path.display()))?;
    p.verify()?;
    Ok(p)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// A single-regime synthetic channel.
#[derive(Args, Debug, Clone)]
pub struct ChannelArgs {
    #[arg(long, default_value_t = 32)]
    pub antennas: usize,
    #[arg(long, default_value_t = 8)]
    pub paths: usize,
    /// Normalised Doppler in cycles per slot.
    #[arg(long, default_value_t = 0.05)]
    pub doppler: f64,
    /// Arrival-angle spread in radians.
    #[arg(long, default_value_t = 1.2)]
    pub angle_spread: f64,
    /// Measurement SNR in dB; `inf` disables noise.
    #[arg(long, default_value_t = f64::INFINITY)]
    pub snr_db: f64,
    #[arg(long, default_value_t = 1024)]
    pub slots: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Site geometry seed; defaults to --seed.
    #[arg(long)]
    pub site_seed: Option<u64>,
}

impl ChannelArgs {
    pub fn regime(&self) -> ChannelRegime {
        ChannelRegime::new("cli", self.paths, self.doppler).with_angle_spread(self.angle_spread).with_snr_db(self.snr_db)
    }

    pub fn trace(&self) -> Result<ChannelTrace> {
        let regime = self.regime();
        regime.validate(self.antennas).map_err(|e| usage(e.to_string()))?;
        let cfg = TraceConfig::new(
            RegimeSchedule::constant(regime),
            self.slots,
            self.antennas,
            dft_codebook(self.antennas),
            self.seed,
        )
        .with_site_seed(self.site_seed.unwrap_or(self.seed));
        Ok(generate_trace(&cfg)?)
    }
}
