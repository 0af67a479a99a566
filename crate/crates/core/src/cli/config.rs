//! `key = value` config files with `[section]` headers.
//!
//! ```text
//! [load]
//! energy = 1
//! window = 1
//! max_power = 2          # or `unbounded`
//!
//! [sim]
//! lambda = 100
//! dt = 0.001
//! policy = charge_slack_greedy
//! initial_profile = charge_equalized(-0.25)
//!
//! [battery]
//! normalized = 1, 1, 0   # or capacity / charge_rate / discharge_rate
//!
//! [run]
//! trajectory = probe:charge_full
//! ```
//!
//! Unknown sections and keys are errors. A run manifest is itself a valid
//! config: its `[outputs]` section and the bookkeeping keys of `[run]` are
//! skipped.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{denormalize, BatterySpec, LoadClass, MaxPower, NormalizedBattery};
use crate::simulate::SimConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sim: SimConfig,
    pub battery: Option<BatterySpec>,
    /// Trajectory source, as accepted by `simulate --trajectory`.
    pub trajectory: Option<String>,
}

type Sections = BTreeMap<String, BTreeMap<String, (usize, String)>>;

fn split_sections(text: &str) -> Result<Sections> {
    let mut out: Sections = BTreeMap::new();
    let mut current: Option<String> = None;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let lineno = n + 1;
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| Error::Config(format!("line {lineno}: malformed section header")))?
                .trim()
                .to_string();
            if !matches!(name.as_str(), "load" | "sim" | "battery" | "run" | "outputs") {
                return Err(Error::Config(format!("line {lineno}: unknown section [{name}]")));
            }
            out.entry(name.clone()).or_default();
            current = Some(name);
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {lineno}: expected `key = value`")))?;
        let section = current
            .as_ref()
            .ok_or_else(|| Error::Config(format!("line {lineno}: key outside any section")))?;
        let key = key.trim().to_string();
        let entries = out.get_mut(section).expect("section registered");
        if entries.insert(key.clone(), (lineno, value.trim().to_string())).is_some() && section != "outputs" {
            return Err(Error::Config(format!("line {lineno}: duplicate key `{key}`")));
        }
    }
    Ok(out)
}

struct Section<'a> {
    name: &'a str,
    entries: BTreeMap<String, (usize, String)>,
}

impl<'a> Section<'a> {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.remove(key)
    }

    fn number(&mut self, key: &str) -> Result<Option<f64>> {
        self.take(key)
            .map(|(line, v)| {
                v.parse::<f64>()
                    .map_err(|_| Error::Config(format!("line {line}: `{key}` must be a number, got `{v}`")))
            })
            .transpose()
    }

    fn required(&mut self, key: &str) -> Result<f64> {
        self.number(key)?
            .ok_or_else(|| Error::Config(format!("[{}] is missing `{key}`", self.name)))
    }

    fn parsed<T: std::str::FromStr<Err = Error>>(&mut self, key: &str) -> Result<Option<T>> {
        self.take(key)
            .map(|(line, v)| v.parse::<T>().map_err(|e| Error::Config(format!("line {line}: {e}"))))
            .transpose()
    }

    fn finish(self) -> Result<()> {
        match self.entries.into_iter().next() {
            Some((key, (line, _))) => Err(Error::Config(format!("line {line}: unknown key `{key}` in [{}]", self.name))),
            None => Ok(()),
        }
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut sections = split_sections(text)?;
    let mut section = |name: &'static str| Section { name, entries: sections.remove(name).unwrap_or_default() };

    let mut load = section("load");
    let energy = load.required("energy")?;
    let window = load.required("window")?;
    let max_power = match load.take("max_power") {
        Some((_, v)) if v == "unbounded" || v == "inf" => MaxPower::Unbounded,
        Some((line, v)) => MaxPower::Finite(
            v.parse()
                .map_err(|_| Error::Config(format!("line {line}: `max_power` must be a number or `unbounded`")))?,
        ),
        None => return Err(Error::Config("[load] is missing `max_power`".into())),
    };
    load.finish()?;
    let lc = LoadClass::new(energy, window, max_power).map_err(|e| Error::Config(e.to_string()))?;

    let mut sim = SimConfig::new(lc);
    let mut s = section("sim");
    if let Some(v) = s.number("lambda")? {
        sim.lambda = v;
    }
    if let Some(v) = s.number("dt")? {
        sim.dt = v;
    }
    if let Some(v) = s.number("warmup")? {
        sim.warmup = v;
    }
    if let Some(v) = s.parsed("policy")? {
        sim.policy = v;
    }
    if let Some(v) = s.parsed("mode")? {
        sim.mode = v;
    }
    if let Some(v) = s.parsed("initial_profile")? {
        sim.initial_profile = v;
    }
    if let Some((line, v)) = s.take("seed") {
        sim.seed = v
            .parse()
            .map_err(|_| Error::Config(format!("line {line}: `seed` must be a non-negative integer")))?;
    }
    if let Some((line, v)) = s.take("stop_on_failure") {
        sim.stop_on_failure = v
            .parse()
            .map_err(|_| Error::Config(format!("line {line}: `stop_on_failure` must be true or false")))?;
    }
    s.finish()?;

    let mut b = section("battery");
    let absolute = [b.number("capacity")?, b.number("charge_rate")?, b.number("discharge_rate")?];
    let normalized = b.take("normalized");
    b.finish()?;
    let battery = match (absolute, normalized) {
        ([None, None, None], None) => None,
        ([Some(c), Some(wb), Some(wu)], None) => {
            Some(BatterySpec::new(c, wb, wu).map_err(|e| Error::Config(e.to_string()))?)
        }
        ([None, None, None], Some((line, v))) => {
            let [c, wb, wu] = parse_triple(&v).map_err(|e| Error::Config(format!("line {line}: {e}")))?;
            let nb = NormalizedBattery::new(c, wb, wu).map_err(|e| Error::Config(e.to_string()))?;
            Some(denormalize(&nb, &lc).map_err(|e| Error::Config(e.to_string()))?)
        }
        _ => {
            return Err(Error::Config(
                "[battery] needs either all of capacity, charge_rate, discharge_rate or `normalized`".into(),
            ))
        }
    };

    let mut run = section("run");
    let trajectory = run.take("trajectory").map(|(_, v)| v);
    run.take("version");
    run.take("seed");
    run.finish()?;

    Ok(RunConfig { sim, battery, trajectory })
}

/// Parses `a,b,c`.
pub fn parse_triple(s: &str) -> Result<[f64; 3]> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::Parse(format!("expected three comma-separated numbers, got `{s}`")));
    }
    let mut out = [0.0; 3];
    for (slot, p) in out.iter_mut().zip(&parts) {
        *slot = p
            .parse()
            .map_err(|_| Error::Parse(format!("`{p}` is not a number")))?;
    }
    Ok(out)
}

/// Config text that parses back to `cfg`.
pub fn echo_config(cfg: &RunConfig) -> String {
    let mut s = String::from("[load]\n");
    let pairs = cfg.sim.echo();
    for (i, (k, v)) in pairs.iter().enumerate() {
        if i == 3 {
            s.push_str("\n[sim]\n");
        }
        s.push_str(&format!("{k} = {v}\n"));
    }
    if let Some(b) = &cfg.battery {
        s.push_str(&format!(
            "\n[battery]\ncapacity = {}\ncharge_rate = {}\ndischarge_rate = {}\n",
            fmt_exact(b.capacity),
            fmt_exact(b.charge_rate),
            fmt_exact(b.discharge_rate)
        ));
    }
    s
}

/// Shortest representation that parses back to the same value.
fn fmt_exact(x: f64) -> String {
    format!("{x}")
}
