//! Settings resolution: defaults, then config file, then command-line flags
//! (flags win).

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use sectionflow_core::agent::TrainConfig;
use sectionflow_core::env::EnvConfig;
use sectionflow_core::nn::{NetConfig, NetworkKind, SectionEncodingMode};

/// Parsed `key = value` config file.
#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("config line {}: expected `key = value`", i + 1);
            };
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(ConfigFile { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| anyhow::anyhow!("config key `{key}`: cannot parse `{raw}`")),
        }
    }
}

/// Everything a training or evaluation run needs beyond file paths.
#[derive(Debug, Clone, Copy)]
pub struct RunSettings {
    pub kind: NetworkKind,
    pub seed: u64,
    pub steps: u64,
    pub eval_interval: u64,
    pub smooth_window: usize,
    pub d: usize,
    pub layers: usize,
    pub enc_hidden: usize,
    pub value_hidden: usize,
    pub adv_hidden: usize,
    pub z_active_only: bool,
    pub batch: usize,
    pub gamma: f64,
    pub lr: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_horizon: u64,
    pub target_interval: u64,
    pub buffer: usize,
    pub update_every: u64,
    pub trailing_window: usize,
    pub w_ed: f64,
    pub step_limit: usize,
    pub strict_q: bool,
    pub timing: bool,
}

impl Default for RunSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        let e = EnvConfig::default();
        let n = NetConfig::defaults(NetworkKind::Powerformer);
        RunSettings {
            kind: NetworkKind::Powerformer,
            seed: 0,
            steps: 0,
            eval_interval: t.eval_interval,
            smooth_window: 1,
            d: n.d,
            layers: n.layers,
            enc_hidden: n.enc_hidden,
            value_hidden: n.value_hidden,
            adv_hidden: n.adv_hidden,
            z_active_only: false,
            batch: t.batch,
            gamma: t.gamma,
            lr: t.adam.lr,
            eps_start: t.eps_start,
            eps_end: t.eps_end,
            eps_horizon: t.eps_horizon,
            target_interval: t.target_interval,
            buffer: t.buffer_capacity,
            update_every: t.update_every,
            trailing_window: t.trailing_window,
            w_ed: e.w_ed,
            step_limit: e.step_limit,
            strict_q: e.strict_q,
            timing: false,
        }
    }
}

impl RunSettings {
    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            w_ed: self.w_ed,
            step_limit: self.step_limit,
            strict_q: self.strict_q,
            ..EnvConfig::default()
        }
    }

    pub fn net_config(&self) -> NetConfig {
        NetConfig {
            kind: self.kind,
            layers: self.layers,
            d: self.d,
            enc_hidden: self.enc_hidden,
            value_hidden: self.value_hidden,
            adv_hidden: self.adv_hidden,
            gin_eps: 0.0,
            z_mode: if self.z_active_only {
                SectionEncodingMode::ActiveOnly
            } else {
                SectionEncodingMode::FourFactor
            },
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            gamma: self.gamma,
            batch: self.batch,
            target_interval: self.target_interval,
            eps_start: self.eps_start,
            eps_end: self.eps_end,
            eps_horizon: self.eps_horizon,
            total_steps: self.steps,
            seed: self.seed,
            buffer_capacity: self.buffer,
            update_every: self.update_every,
            eval_interval: self.eval_interval,
            adam: sectionflow_core::store::AdamConfig {
                lr: self.lr,
                ..Default::default()
            },
            trailing_window: self.trailing_window,
        }
    }
}

macro_rules! merge {
    ($settings:expr, $file:expr, $flags:expr, { $($flag:ident => $key:literal),+ $(,)? }) => {
        $(
            if let Some(v) = $flags.$flag {
                $settings.$flag = v;
            } else if let Some(v) = $file.parse($key)? {
                $settings.$flag = v;
            }
        )+
    };
}

/// Optional command-line overrides (None = not given).
#[derive(Debug, Default, Clone, Copy)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub steps: Option<u64>,
    pub eval_interval: Option<u64>,
    pub smooth_window: Option<usize>,
    pub d: Option<usize>,
    pub layers: Option<usize>,
    pub enc_hidden: Option<usize>,
    pub value_hidden: Option<usize>,
    pub adv_hidden: Option<usize>,
    pub batch: Option<usize>,
    pub gamma: Option<f64>,
    pub lr: Option<f64>,
    pub eps_start: Option<f64>,
    pub eps_end: Option<f64>,
    pub eps_horizon: Option<u64>,
    pub target_interval: Option<u64>,
    pub buffer: Option<usize>,
    pub update_every: Option<u64>,
    pub trailing_window: Option<usize>,
    pub w_ed: Option<f64>,
    pub step_limit: Option<usize>,
}

/// Resolve settings: defaults, overwritten by config-file keys, overwritten by
/// explicit flags.
pub fn resolve(
    file: &ConfigFile,
    flags: Overrides,
    network_flag: Option<&str>,
    strict_q_flag: bool,
    timing_flag: bool,
    z_active_flag: bool,
) -> Result<RunSettings> {
    let mut s = RunSettings::default();

    let network_name = network_flag
        .map(str::to_string)
        .or_else(|| file.get("network").map(str::to_string));
    if let Some(name) = network_name {
        s.kind = NetworkKind::parse(&name)
            .ok_or_else(|| anyhow::anyhow!(
                "unknown network `{name}` (expected powerformer, concat, soft_attention, powerformer_E, powerformer_S, powerformer_M)"
            ))?;
    }

    merge!(s, file, flags, {
        seed => "seed",
        steps => "steps",
        eval_interval => "eval-interval",
        smooth_window => "smooth-window",
        d => "d",
        layers => "layers",
        enc_hidden => "enc-hidden",
        value_hidden => "value-hidden",
        adv_hidden => "adv-hidden",
        batch => "batch",
        gamma => "gamma",
        lr => "lr",
        eps_start => "eps-start",
        eps_end => "eps-end",
        eps_horizon => "eps-horizon",
        target_interval => "target-interval",
        buffer => "buffer",
        update_every => "update-every",
        trailing_window => "trailing-window",
        w_ed => "w-ed",
        step_limit => "step-limit",
    });

    s.strict_q = strict_q_flag || file.parse::<bool>("strict-q")?.unwrap_or(false);
    s.timing = timing_flag || file.parse::<bool>("timing")?.unwrap_or(false);
    s.z_active_only = z_active_flag || file.parse::<bool>("z-active-only")?.unwrap_or(false);
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_config_file_beats_defaults() {
        let mut file = ConfigFile::default();
        file.values.insert("seed".into(), "11".into());
        file.values.insert("steps".into(), "500".into());
        file.values.insert("network".into(), "concat".into());
        let flags = Overrides {
            steps: Some(900),
            ..Default::default()
        };
        let s = resolve(&file, flags, None, false, false, false).unwrap();
        assert_eq!(s.seed, 11, "config file beats default");
        assert_eq!(s.steps, 900, "flag beats config file");
        assert_eq!(s.kind, NetworkKind::Concat);
        assert_eq!(s.gamma, 0.9, "defaults hold when nothing overrides");
    }

    #[test]
    fn bad_network_name_is_rejected() {
        let file = ConfigFile::default();
        let err = resolve(&file, Overrides::default(), Some("nope"), false, false, false)
            .unwrap_err();
        assert!(err.to_string().contains("unknown network"));
    }
}
