//! Run configuration: device parameters plus experiment settings, stored
//! as one TOML tree. Config files and `--set key=value` overrides are
//! merged onto the defaults key by key; keys that do not exist in the
//! default tree are rejected with the closest known key as a hint.

use std::fs;
use std::path::Path;

use ddrsim_core::device::DeviceParams;
use ddrsim_core::gates::{DdrParams, IswapParams};
use ddrsim_core::opt::FastAdiabaticScenario;
use serde::{Deserialize, Serialize};
use toml::Value;

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSettings {
    /// Sample spacing, ns.
    pub dt: f64,
    pub substeps: usize,
    /// Levels kept per mode.
    pub levels: usize,
    /// Include T1/T2 where an experiment supports it.
    pub decoherence: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSettings {
    /// Coupler range, GHz.
    pub coupler_min: f64,
    pub coupler_max: f64,
    pub points: usize,
    /// Common qubit frequency for the coupling scan, GHz.
    pub qubit: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChevronSettings {
    pub qubit: f64,
    pub coupler_min: f64,
    pub coupler_max: f64,
    pub points: usize,
    pub times: usize,
    /// Time step between recorded points, ns.
    pub dt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeakageSettings {
    pub coupler_min: f64,
    /// Upper end of the grid; 0 selects the exchange off point.
    pub coupler_max: f64,
    pub points: usize,
    /// ns
    pub hold: f64,
    /// Deviation from pure decay that counts as leakage.
    pub limit: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RectSettings {
    pub positive_hold: f64,
    pub negative_hold: f64,
    pub budget: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSettings {
    pub budget: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FastAdiabaticSettings {
    /// MHz
    pub g_direct: f64,
    pub duration: f64,
    pub n_fourier: usize,
    pub budget: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RbSettings {
    pub lengths: Vec<usize>,
    pub sequences: usize,
    pub clifford_time: f64,
    /// Residual ZZ during simultaneous runs, MHz.
    pub zz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub device: DeviceParams,
    pub sim: SimSettings,
    pub scan: ScanSettings,
    pub chevron: ChevronSettings,
    pub leakage: LeakageSettings,
    pub iswap: IswapParams,
    pub rect: RectSettings,
    pub ddr: DdrParams,
    pub optimize: OptimizeSettings,
    pub fast_adiabatic: FastAdiabaticSettings,
    pub rb: RbSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        let fa = FastAdiabaticScenario::default();
        RunConfig {
            seed: 7,
            device: DeviceParams::paper_device(),
            sim: SimSettings { dt: 0.1, substeps: 2, levels: 3, decoherence: true },
            scan: ScanSettings { coupler_min: 5.2, coupler_max: 5.977, points: 100, qubit: 4.926 },
            chevron: ChevronSettings {
                qubit: 4.926,
                coupler_min: 5.5,
                coupler_max: 5.977,
                points: 50,
                times: 200,
                dt: 2.0,
            },
            leakage: LeakageSettings { coupler_min: 5.026, coupler_max: 0.0, points: 20, hold: 500.0, limit: 0.03 },
            iswap: IswapParams::default(),
            rect: RectSettings { positive_hold: 222.0, negative_hold: 90.0, budget: 300 },
            ddr: DdrParams::default(),
            optimize: OptimizeSettings { budget: 800 },
            fast_adiabatic: FastAdiabaticSettings {
                g_direct: fa.g_direct,
                duration: fa.duration,
                n_fourier: 3,
                budget: 400,
            },
            rb: RbSettings {
                lengths: vec![1, 10, 25, 50, 100, 150, 200, 300, 400],
                sequences: 20,
                clifford_time: 80.0,
                zz: -0.45,
            },
        }
    }
}

impl RunConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Physics-range checks on the resolved configuration.
    pub fn validate(&self) -> Vec<String> {
        let mut out = self.device.validate();
        let s = &self.sim;
        if !(s.dt > 0.0 && s.dt <= 1.0) {
            out.push(format!("sim.dt = {} must lie in (0, 1] ns", s.dt));
        }
        if s.substeps == 0 {
            out.push("sim.substeps must be at least 1".into());
        }
        if !(2..=6).contains(&s.levels) {
            out.push(format!("sim.levels = {} must lie in [2, 6]", s.levels));
        }
        let wc_max = self.device.coupler.omega_max;
        for (name, lo, hi) in [
            ("scan", self.scan.coupler_min, self.scan.coupler_max),
            ("chevron", self.chevron.coupler_min, self.chevron.coupler_max),
        ] {
            if !(lo > 0.0 && lo < hi && hi <= wc_max) {
                out.push(format!("{name}: coupler range [{lo}, {hi}] must be increasing within (0, {wc_max}]"));
            }
        }
        for (name, n) in [
            ("scan.points", self.scan.points),
            ("chevron.points", self.chevron.points),
            ("leakage.points", self.leakage.points),
        ] {
            if n < 2 {
                out.push(format!("{name} must be at least 2"));
            }
        }
        if self.chevron.times < 4 {
            out.push("chevron.times must be at least 4".into());
        }
        if self.leakage.coupler_max != 0.0
            && !(self.leakage.coupler_max > self.leakage.coupler_min && self.leakage.coupler_max <= wc_max)
        {
            out.push("leakage.coupler_max must be 0 or lie in (coupler_min, coupler omega_max]".into());
        }
        if self.rb.lengths.is_empty() || self.rb.sequences == 0 {
            out.push("rb needs lengths and at least one sequence".into());
        }
        if self.fast_adiabatic.n_fourier == 0 {
            out.push("fast_adiabatic.n_fourier must be at least 1".into());
        }
        out
    }
}

/// Every leaf key path of the default configuration.
pub fn known_keys() -> Vec<String> {
    let tree = Value::try_from(RunConfig::default()).expect("config serializes");
    let mut out = Vec::new();
    collect_keys(&tree, String::new(), &mut out);
    out
}

fn collect_keys(v: &Value, prefix: String, out: &mut Vec<String>) {
    match v {
        Value::Table(t) => {
            for (k, v) in t {
                let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                collect_keys(v, p, out);
            }
        }
        _ => out.push(prefix),
    }
}

/// Known key closest to `key` by edit distance, when reasonably close.
pub fn suggest(key: &str) -> Option<String> {
    known_keys()
        .into_iter()
        .map(|k| (strsim::levenshtein(key, &k), k))
        .filter(|(d, k)| *d <= 3.max(k.len() / 3))
        .min()
        .map(|(_, k)| k)
}

fn unknown_key(path: &str) -> String {
    match suggest(path) {
        Some(s) => format!("unknown key `{path}`, did you mean `{s}`?"),
        None => format!("unknown key `{path}`"),
    }
}

/// Merge `over` into `base`, recording keys absent from `base`.
fn merge(base: &mut Value, over: &Value, prefix: &str, errors: &mut Vec<String>) {
    match (base, over) {
        (Value::Table(b), Value::Table(o)) => {
            for (k, v) in o {
                let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v, &p, errors),
                    None => errors.push(unknown_key(&p)),
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

fn parse_value(raw: &str) -> Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => Value::String(raw.to_string()),
    }
}

fn set_path(tree: &mut Value, path: &str, value: Value) -> Result<(), String> {
    let mut node = tree;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let Value::Table(t) = node else {
            return Err(unknown_key(path));
        };
        let Some(next) = t.get_mut(*part) else {
            return Err(unknown_key(path));
        };
        if i + 1 == parts.len() {
            if next.is_table() {
                return Err(format!("key `{path}` is a section, set one of its fields"));
            }
            *next = value;
            return Ok(());
        }
        node = next;
    }
    Err(unknown_key(path))
}

/// Where the device parameters come from.
pub fn load_device(spec: &str) -> Result<DeviceParams, CliError> {
    if let Some(p) = DeviceParams::preset(spec) {
        return Ok(p);
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(CliError::Usage(format!("`{spec}` is neither a device preset nor a file")));
    }
    let text = fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{spec}: {e}")))
}

/// Inputs to configuration resolution.
#[derive(Clone, Debug, Default)]
pub struct Sources {
    pub device: Option<String>,
    pub config: Option<String>,
    pub sets: Vec<String>,
    pub seed: Option<u64>,
}

/// Resolve defaults, device, config file and overrides. Returns the config
/// (when it deserializes) and every problem found on the way.
pub fn resolve(src: &Sources) -> Result<(Option<RunConfig>, Vec<String>), CliError> {
    let mut base = RunConfig::default();
    if let Some(d) = &src.device {
        base.device = load_device(d)?;
    }
    let mut tree = Value::try_from(&base).expect("config serializes");
    let mut problems = Vec::new();
    if let Some(path) = &src.config {
        let text = fs::read_to_string(path)?;
        let over: Value = toml::from_str::<toml::Table>(&text)
            .map(Value::Table)
            .map_err(|e| CliError::Config(format!("{path}: {e}")))?;
        merge(&mut tree, &over, "", &mut problems);
    }
    for s in &src.sets {
        let Some((k, v)) = s.split_once('=') else {
            problems.push(format!("override `{s}` is not key=value"));
            continue;
        };
        if let Err(e) = set_path(&mut tree, k.trim(), parse_value(v.trim())) {
            problems.push(e);
        }
    }
    if let Some(seed) = src.seed {
        set_path(&mut tree, "seed", Value::Integer(seed as i64)).expect("seed key exists");
    }
    let cfg = match tree.try_into::<RunConfig>() {
        Ok(c) => Some(c),
        Err(e) => {
            problems.push(format!("invalid value: {e}"));
            None
        }
    };
    if let Some(c) = &cfg {
        problems.extend(c.validate());
    }
    Ok((cfg, problems))
}
