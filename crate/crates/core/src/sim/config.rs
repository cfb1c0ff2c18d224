//! Scenario configuration: flat `dotted.key = value` text.
//!
//! `#` starts a comment, blank lines are ignored, every key may appear once
//! and unknown keys are rejected. Errors carry the offending line number
//! (line 0 for a required key that is missing).
//!
//! ```text
//! seed = 7
//! num_slots = 2000
//! channel.antennas = 32
//! channel.regime.slow.num_paths = 4
//! channel.regime.slow.doppler = 0.01
//! channel.regime.fast.num_paths = 4
//! channel.regime.fast.doppler = 0.15
//! channel.schedule = slow@0, fast@800
//! monitoring.mode = type1
//! monitoring.gamma = 0.8
//! monitoring.period = 20
//! registry.preload = slow, fast
//! registry.active = slow
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::channel::ChannelRegime;
use crate::controller::DecisionPolicy;
use crate::kpi::DivergenceWeights;
use crate::models::PredictorConfig;
use crate::monitor::{MonitoringConfig, MonitoringMode};
use crate::{Error, Result};

/// Ordered `key = value` entries with their source lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: Vec<(usize, String, String)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw = RawConfig::default();
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content
                .split_once('=')
                .ok_or_else(|| Error::Config { line: n, message: format!("expected `key = value`, found {content:?}") })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::Config { line: n, message: "empty key".into() });
            }
            if let Some((first, _, _)) = raw.entries.iter().find(|(_, key, _)| key == k) {
                return Err(Error::Config { line: n, message: format!("duplicate key {k:?} (first on line {first})") });
            }
            raw.entries.push((n, k.to_string(), v.to_string()));
        }
        Ok(raw)
    }

    /// Replaces or appends a value (line 0 marks an override).
    pub fn set(&mut self, key: &str, value: &str) {
        match self.entries.iter_mut().find(|(_, k, _)| k == key) {
            Some(e) => e.2 = value.to_string(),
            None => self.entries.push((0, key.to_string(), value.to_string())),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(_, k, _)| k == key).map(|(_, _, v)| v.as_str())
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(_, k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSection {
    pub antennas: usize,
    pub regimes: BTreeMap<String, ChannelRegime>,
    pub schedule: Vec<(u64, String)>,
    pub site_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrySection {
    /// Regimes to train a model for before the run.
    pub preload: Vec<String>,
    /// Preloaded regime whose model starts active (default: the first).
    pub active: Option<String>,
    pub path: Option<PathBuf>,
    pub training_slots: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopSection {
    /// Retraining buffer length, slots.
    pub buffer_len: usize,
    /// Window of the runtime input descriptor, slots.
    pub descriptor_window: usize,
    /// Window of prediction / ground-truth pairs kept for delta fitting.
    pub delta_window: usize,
    /// Pairs whose base SGCS falls below this floor are left out of delta
    /// fitting.
    pub delta_pair_floor: f64,
    /// Descriptor-divergence alarm threshold; `None` disables it.
    pub divergence_alarm: Option<f64>,
}

impl Default for LoopSection {
    fn default() -> Self {
        LoopSection { buffer_len: 128, descriptor_window: 40, delta_window: 40, delta_pair_floor: 0.5, divergence_alarm: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub num_slots: u64,
    pub channel: ChannelSection,
    pub monitoring: MonitoringConfig,
    pub predictor: PredictorConfig,
    pub policy: DecisionPolicy,
    pub weights: DivergenceWeights,
    pub registry: RegistrySection,
    pub control: LoopSection,
    /// Slots at which the operator orders fallback.
    pub fallback_slots: Vec<u64>,
    /// Slots at which an operator-ordered fallback is lifted.
    pub resume_slots: Vec<u64>,
    pub output_dir: Option<PathBuf>,
}

struct Reader<'a> {
    raw: &'a RawConfig,
    used: Vec<bool>,
}

impl<'a> Reader<'a> {
    fn find(&mut self, key: &str) -> Option<(usize, &'a str)> {
        let idx = self.raw.entries.iter().position(|(_, k, _)| k == key)?;
        self.used[idx] = true;
        let (line, _, v) = &self.raw.entries[idx];
        Some((*line, v.as_str()))
    }

    fn opt<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.find(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config { line, message: format!("{key}: cannot parse {v:?}") }),
        }
    }

    fn or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        Ok(self.opt(key)?.unwrap_or(default))
    }

    fn req<T: FromStr>(&mut self, key: &str) -> Result<T> {
        self.opt(key)?.ok_or_else(|| Error::Config { line: 0, message: format!("missing required key {key:?}") })
    }

    fn line(&self, key: &str) -> usize {
        self.raw.entries.iter().find(|(_, k, _)| k == key).map_or(0, |e| e.0)
    }
}

fn list(v: &str) -> Vec<String> {
    v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
}

fn parse_f64_or_inf(v: &str) -> Option<f64> {
    match v {
        "inf" | "off" | "none" => Some(f64::INFINITY),
        _ => v.parse().ok(),
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_raw(&RawConfig::parse(text)?)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let mut r = Reader { raw, used: vec![false; raw.entries.len()] };
        let seed: u64 = r.req("seed")?;
        let num_slots: u64 = r.req("num_slots")?;
        if num_slots == 0 {
            return Err(Error::Config { line: r.line("num_slots"), message: "num_slots must be positive".into() });
        }

        let antennas: usize = r.req("channel.antennas")?;
        let mut names: Vec<String> = raw
            .entries
            .iter()
            .filter_map(|(_, k, _)| k.strip_prefix("channel.regime.").and_then(|rest| rest.split_once('.')).map(|(n, _)| n.to_string()))
            .collect();
        names.sort();
        names.dedup();
        let mut regimes = BTreeMap::new();
        for name in &names {
            let p = |f: &str| format!("channel.regime.{name}.{f}");
            let num_paths: usize = r.req(&p("num_paths"))?;
            let doppler: f64 = r.req(&p("doppler"))?;
            let mut regime = ChannelRegime::new(name.clone(), num_paths, doppler);
            if let Some(s) = r.opt::<f64>(&p("angle_spread"))? {
                regime = regime.with_angle_spread(s);
            }
            if let Some((line, v)) = r.find(&p("snr_db")) {
                let snr = parse_f64_or_inf(v).ok_or_else(|| Error::Config { line, message: format!("bad SNR {v:?}") })?;
                regime = regime.with_snr_db(snr);
            }
            regime
                .validate(antennas)
                .map_err(|e| Error::Config { line: r.line(&p("num_paths")), message: e.to_string() })?;
            regimes.insert(name.clone(), regime);
        }
        let (sline, sval) = r
            .find("channel.schedule")
            .ok_or_else(|| Error::Config { line: 0, message: "missing required key \"channel.schedule\"".into() })?;
        let mut schedule = Vec::new();
        for item in list(sval) {
            let (name, start) = item
                .split_once('@')
                .ok_or_else(|| Error::Config { line: sline, message: format!("schedule item {item:?} is not name@slot") })?;
            let start: u64 =
                start.trim().parse().map_err(|_| Error::Config { line: sline, message: format!("bad slot in {item:?}") })?;
            if !regimes.contains_key(name.trim()) {
                return Err(Error::Config { line: sline, message: format!("unknown regime {:?}", name.trim()) });
            }
            schedule.push((start, name.trim().to_string()));
        }
        if schedule.first().map(|s| s.0) != Some(0) || schedule.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::Config { line: sline, message: "schedule must start at 0 with increasing slots".into() });
        }
        let site_seed = r.opt("channel.site_seed")?;

        let d = MonitoringConfig::default();
        let period = match r.find("monitoring.period") {
            None => d.eval_period_slots,
            Some((_, "off")) => None,
            Some((line, v)) => Some(v.parse().map_err(|_| Error::Config { line, message: format!("bad period {v:?}") })?),
        };
        let monitoring = MonitoringConfig {
            mode: match r.find("monitoring.mode") {
                None => d.mode,
                Some((line, v)) => {
                    v.parse::<MonitoringMode>().map_err(|e| Error::Config { line, message: e.to_string() })?
                }
            },
            threshold_gamma: r.or("monitoring.gamma", d.threshold_gamma)?,
            n_consec: r.or("monitoring.n_consec", d.n_consec)?,
            quant_bits: r.or("monitoring.quant_bits", d.quant_bits)?,
            gt_slot_offset: r.or("monitoring.offset", d.gt_slot_offset)?,
            eval_period_slots: period,
        };
        monitoring
            .validate()
            .map_err(|e| Error::Config { line: r.line("monitoring.gamma").max(r.line("monitoring.period")), message: e.to_string() })?;

        let order = r.or("predictor.order", 1usize)?;
        let horizon = r.or("predictor.horizon", 4usize)?;
        let predictor = PredictorConfig::new(order, horizon)
            .map_err(|e| Error::Config { line: r.line("predictor.order").max(r.line("predictor.horizon")), message: e.to_string() })?;

        let p = DecisionPolicy::default();
        let policy = DecisionPolicy {
            delta_low: r.or("policy.delta_low", p.delta_low)?,
            delta_match: r.or("policy.delta_match", p.delta_match)?,
            delta_delta: r.or("policy.delta_delta", p.delta_delta)?,
            snr_floor_db: r.or("policy.snr_floor_db", p.snr_floor_db)?,
            cooldown_evals: r.or("policy.cooldown", p.cooldown_evals)?,
            n_recover: r.or("policy.n_recover", p.n_recover)?,
            min_train: r.or("policy.min_train", p.min_train)?,
            delta_rank: r.or("policy.delta_rank", p.delta_rank)?,
            min_delta_pairs: r.or("policy.min_delta_pairs", p.min_delta_pairs)?,
        };
        if policy.n_recover == 0 || policy.delta_rank == 0 || policy.delta_rank > antennas {
            return Err(Error::Config { line: r.line("policy.delta_rank").max(r.line("policy.n_recover")), message: "n_recover and delta_rank must be in range".into() });
        }
        let w = DivergenceWeights::default();
        let weights = DivergenceWeights {
            js: r.or("policy.weight_js", w.js)?,
            doppler: r.or("policy.weight_doppler", w.doppler)?,
            snr: r.or("policy.weight_snr", w.snr)?,
        };

        let preload = r.find("registry.preload").map(|(_, v)| list(v)).unwrap_or_default();
        for name in &preload {
            if !regimes.contains_key(name) {
                return Err(Error::Config { line: r.line("registry.preload"), message: format!("unknown regime {name:?}") });
            }
        }
        let active = r.opt::<String>("registry.active")?;
        if let Some(a) = &active {
            if !preload.contains(a) {
                return Err(Error::Config { line: r.line("registry.active"), message: format!("{a:?} is not preloaded") });
            }
        }
        let registry = RegistrySection {
            preload,
            active,
            path: r.opt::<String>("registry.path")?.map(PathBuf::from),
            training_slots: r.or("registry.training_slots", 400usize)?,
        };
        if registry.training_slots < predictor.min_history() {
            return Err(Error::Config { line: r.line("registry.training_slots"), message: "training_slots too small for the predictor".into() });
        }

        let l = LoopSection::default();
        let control = LoopSection {
            buffer_len: r.or("loop.buffer_len", l.buffer_len)?,
            descriptor_window: r.or("loop.descriptor_window", l.descriptor_window)?,
            delta_window: r.or("loop.delta_window", l.delta_window)?,
            delta_pair_floor: r.or("loop.delta_pair_floor", l.delta_pair_floor)?,
            divergence_alarm: r.opt("loop.divergence_alarm")?,
        };
        if control.descriptor_window < 2 || control.buffer_len == 0 {
            return Err(Error::Config { line: r.line("loop.descriptor_window").max(r.line("loop.buffer_len")), message: "loop windows too small".into() });
        }

        let mut slots = |key: &str| match r.find(key) {
            None => Ok(Vec::new()),
            Some((line, v)) => list(v)
                .iter()
                .map(|s| s.parse().map_err(|_| Error::Config { line, message: format!("bad slot {s:?}") }))
                .collect::<Result<Vec<u64>>>(),
        };
        let fallback_slots = slots("operator.fallback_slots")?;
        let resume_slots = slots("operator.resume_slots")?;
        let output_dir = r.opt::<String>("output.dir")?.map(PathBuf::from);

        if let Some(i) = r.used.iter().position(|u| !u) {
            let (line, key, _) = &raw.entries[i];
            return Err(Error::Config { line: *line, message: format!("unknown key {key:?}") });
        }

        Ok(ScenarioConfig {
            seed,
            num_slots,
            channel: ChannelSection { antennas, regimes, schedule, site_seed },
            monitoring,
            predictor,
            policy,
            weights,
            registry,
            control,
            fallback_slots,
            resume_slots,
            output_dir,
        })
    }
}
