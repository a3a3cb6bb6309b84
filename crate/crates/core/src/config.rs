//! Run configuration: built-in profiles plus TOML overrides.
//!
//! A config file may name a base `profile` ("paper" or "ci") and override
//! any subset of keys. Every error carries the line of the offending key
//! when it can be located.

use serde::{Deserialize, Serialize};

use crate::agent::AgentConfig;
use crate::dpws::DpwsConfig;
use crate::error::{Error, Result};
use crate::link::LinkConfig;
use crate::waveform::PaprConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    pub ues: usize,
    pub slots_per_step: usize,
    pub srs_period_slots: usize,
    /// Length of the windows over which per-UE throughput samples are taken.
    pub throughput_window_slots: usize,
    pub min_distance_m: f64,
    pub max_distance_m: f64,
    /// Half-width of the uniform timing-advance measurement jitter (percent
    /// of the maximum timing advance).
    pub ta_jitter_percent: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            ues: 50,
            slots_per_step: 1000,
            srs_period_slots: 2,
            throughput_window_slots: 100,
            min_distance_m: 25.0,
            max_distance_m: 300.0,
            ta_jitter_percent: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub train_episodes: usize,
    pub train_steps: usize,
    pub eval_episodes: usize,
    pub eval_steps: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            train_episodes: 43,
            train_steps: 75,
            eval_episodes: 16,
            eval_steps: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Paper,
    Ci,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Profile::Paper),
            "ci" => Ok(Profile::Ci),
            other => Err(Error::invalid(format!("unknown profile {other:?} (expected paper or ci)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub run: RunConfig,
    pub episode: EpisodeConfig,
    pub link: LinkConfig,
    pub dpws: DpwsConfig,
    pub agent: AgentConfig,
    pub papr: PaprConfig,
}

/// Shape of a config file: a profile selector next to optional sections.
/// Used only to report type and unknown-key errors with their position.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(dead_code)]
struct ConfigFile {
    profile: Option<Profile>,
    run: Option<RunConfig>,
    episode: Option<EpisodeConfig>,
    link: Option<LinkConfig>,
    dpws: Option<DpwsConfig>,
    agent: Option<AgentConfig>,
    papr: Option<PaprConfig>,
}

impl SimConfig {
    pub fn paper() -> Self {
        SimConfig::default()
    }

    /// Desk-scale profile: 10 UEs, 200-slot steps, 10 training episodes.
    pub fn ci() -> Self {
        let mut cfg = SimConfig::default();
        cfg.episode.ues = 10;
        cfg.episode.slots_per_step = 200;
        cfg.episode.throughput_window_slots = 20;
        cfg.run.train_episodes = 10;
        cfg.papr.blocks = 2_000;
        cfg
    }

    pub fn profile(p: Profile) -> Self {
        match p {
            Profile::Paper => Self::paper(),
            Profile::Ci => Self::ci(),
        }
    }

    /// Parses `text`, layering it over the named profile (the file's own
    /// `profile` key wins over `default_profile`).
    pub fn from_toml_str(text: &str, default_profile: Profile) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| toml_error(text, &e))?;
        let profile = file.profile.unwrap_or(default_profile);
        let mut table: toml::Table = text.parse().map_err(|e| toml_error(text, &e))?;
        table.remove("profile");
        let base = toml::Table::try_from(Self::profile(profile))
            .map_err(|e| Error::Config { line: None, message: e.to_string() })?;
        let merged = merge(base, table);
        let cfg: SimConfig = merged
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config { line: None, message: e.message().to_string() })?;
        cfg.validate_paths().map_err(|(path, message)| Error::Config {
            line: locate_key(text, path),
            message: format!("{path}: {message}"),
        })?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path, default_profile: Profile) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            line: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::from_toml_str(&text, default_profile)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_paths().map_err(|(path, message)| Error::Config {
            line: None,
            message: format!("{path}: {message}"),
        })
    }

    fn validate_paths(&self) -> std::result::Result<(), (&'static str, String)> {
        let e = &self.episode;
        let check = |ok: bool, path: &'static str, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err((path, msg.to_string()))
            }
        };
        check(e.ues > 0, "episode.ues", "must be positive")?;
        check(e.slots_per_step > 0, "episode.slots_per_step", "must be positive")?;
        check(e.srs_period_slots > 0, "episode.srs_period_slots", "must be positive")?;
        check(
            e.slots_per_step % e.srs_period_slots == 0,
            "episode.srs_period_slots",
            "must divide slots_per_step",
        )?;
        check(
            e.throughput_window_slots > 0 && e.slots_per_step % e.throughput_window_slots == 0,
            "episode.throughput_window_slots",
            "must be positive and divide slots_per_step",
        )?;
        check(
            e.min_distance_m >= 10.0 && e.min_distance_m < e.max_distance_m && e.max_distance_m <= 1e4,
            "episode.max_distance_m",
            "need 10 <= min_distance_m < max_distance_m <= 10000",
        )?;
        check(e.ta_jitter_percent >= 0.0, "episode.ta_jitter_percent", "must be >= 0")?;
        let r = &self.run;
        check(r.train_steps >= 2, "run.train_steps", "need at least 2 steps for a reward")?;
        check(r.eval_steps >= 1, "run.eval_steps", "must be positive")?;
        check(r.eval_episodes >= 1, "run.eval_episodes", "must be positive")?;
        self.link.validate().map_err(|err| ("link", err.to_string()))?;
        self.dpws.validate().map_err(|err| ("dpws", err.to_string()))?;
        self.agent.validate().map_err(|err| ("agent", err.to_string()))?;
        self.papr.grid.validate().map_err(|err| ("papr.grid", err.to_string()))?;
        check(self.papr.blocks > 0, "papr.blocks", "must be positive")
    }
}

fn merge(mut base: toml::Table, over: toml::Table) -> toml::Table {
    for (k, v) in over {
        match (base.remove(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => {
                base.insert(k, toml::Value::Table(merge(b, o)));
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
    base
}

fn toml_error(text: &str, e: &toml::de::Error) -> Error {
    let line = e.span().map(|s| line_of_offset(text, s.start));
    Error::Config {
        line,
        message: e.message().trim().to_string(),
    }
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// 1-based line defining the dotted `path` (or, failing that, its table
/// header). Only handles the plain `[table]` / `key = value` layout.
fn locate_key(text: &str, path: &str) -> Option<usize> {
    let mut table = String::new();
    let mut header_line = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(h) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            table = h.trim_matches(['[', ']']).trim().to_string();
            if path == table || path.starts_with(&format!("{table}.")) && header_line.is_none() {
                header_line = Some(i + 1);
            }
            continue;
        }
        if let Some((key, _)) = line.split_once('=') {
            let key = key.trim();
            let full = if table.is_empty() {
                key.to_string()
            } else {
                format!("{table}.{key}")
            };
            if full == path || full.starts_with(&format!("{path}.")) {
                return Some(i + 1);
            }
        }
    }
    header_line
}
