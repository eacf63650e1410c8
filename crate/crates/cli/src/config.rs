//! Run configuration: a flat `key = value` file whose keys can all be
//! overridden from the command line.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub enum MeshSource {
    File(PathBuf),
    Icosphere { level: u32, radius: f64 },
    Ellipsoid { a: f64, b: f64, c: f64, level: u32 },
}

impl FromStr for MeshSource {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |i: usize| -> CliResult<f64> {
            parts[i]
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("bad number {:?} in mesh {s:?}", parts[i])))
        };
        let level = |i: usize| -> CliResult<u32> {
            parts[i]
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("bad level {:?} in mesh {s:?}", parts[i])))
        };
        match parts[0] {
            "icosphere" if parts.len() == 3 => Ok(MeshSource::Icosphere {
                level: level(1)?,
                radius: num(2)?,
            }),
            "ellipsoid" if parts.len() == 5 => Ok(MeshSource::Ellipsoid {
                a: num(1)?,
                b: num(2)?,
                c: num(3)?,
                level: level(4)?,
            }),
            "icosphere" | "ellipsoid" => Err(CliError::Config(format!(
                "builtin mesh {s:?} should be icosphere:LEVEL:RADIUS or ellipsoid:A:B:C:LEVEL"
            ))),
            _ => Ok(MeshSource::File(PathBuf::from(s))),
        }
    }
}

impl fmt::Display for MeshSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeshSource::File(p) => write!(f, "{}", p.display()),
            MeshSource::Icosphere { level, radius } => write!(f, "icosphere:{level}:{radius}"),
            MeshSource::Ellipsoid { a, b, c, level } => write!(f, "ellipsoid:{a}:{b}:{c}:{level}"),
        }
    }
}

impl Serialize for MeshSource {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    MichaelSimon,
    NonlinearSobolev,
    GradientForm,
    SpacetimeSobolev,
    EnergyEstimate,
    MoserIterate,
    SupBound,
    ExtensionMonitor,
    BlowupSequence,
    EvolutionResiduals,
}

impl Check {
    pub const ALL: [Check; 10] = [
        Check::MichaelSimon,
        Check::NonlinearSobolev,
        Check::GradientForm,
        Check::SpacetimeSobolev,
        Check::EnergyEstimate,
        Check::MoserIterate,
        Check::SupBound,
        Check::ExtensionMonitor,
        Check::BlowupSequence,
        Check::EvolutionResiduals,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Check::MichaelSimon => "michael_simon",
            Check::NonlinearSobolev => "nonlinear_sobolev",
            Check::GradientForm => "gradient_form",
            Check::SpacetimeSobolev => "spacetime_sobolev",
            Check::EnergyEstimate => "energy_estimate",
            Check::MoserIterate => "moser_iterate",
            Check::SupBound => "sup_bound",
            Check::ExtensionMonitor => "extension_monitor",
            Check::BlowupSequence => "blowup_sequence",
            Check::EvolutionResiduals => "evolution_residuals",
        }
    }

    /// Checks that only need a single mesh.
    pub fn is_static(&self) -> bool {
        matches!(
            self,
            Check::MichaelSimon | Check::NonlinearSobolev | Check::GradientForm
        )
    }

    /// Checks built on the Moser iteration constants.
    pub fn needs_moser(&self) -> bool {
        matches!(
            self,
            Check::EnergyEstimate | Check::MoserIterate | Check::SupBound
        )
    }
}

impl FromStr for Check {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        Check::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| CliError::Config(format!("unknown check {s:?}")))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub mesh: MeshSource,
    pub n: usize,
    pub k: u32,
    pub alphas: Vec<f64>,
    pub stop_t: Option<f64>,
    pub blowup_threshold: Option<f64>,
    pub snapshot_stride: usize,
    pub dt_safety: f64,
    pub checks: Vec<Check>,
    /// Not part of the serialized config so that reports do not depend on where they were written.
    #[serde(skip)]
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
    /// Pinching constant `C` used by the extension monitor.
    pub pinching_c: f64,
    /// Exponent of the monitored space-time norm; defaults to `n + k + 1`.
    pub monitor_alpha: f64,
    pub beta0: f64,
    pub moser_m: usize,
    pub blowup_count: usize,
}

pub const KEYS: [&str; 17] = [
    "mesh",
    "n",
    "k",
    "alphas",
    "stop_t",
    "blowup_threshold",
    "snapshot_stride",
    "dt_safety",
    "checks",
    "output_dir",
    "seed",
    "pinching_c",
    "monitor_alpha",
    "beta0",
    "moser_m",
    "blowup_count",
    "config",
];

/// Parses `key = value` lines; `#` starts a comment, blank lines are ignored.
pub fn parse_key_values(text: &str) -> CliResult<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", i + 1)))?;
        let key = key.trim();
        if !KEYS.contains(&key) || key == "config" {
            return Err(CliError::Config(format!(
                "line {}: unknown key {key:?}",
                i + 1
            )));
        }
        if out
            .insert(key.to_string(), value.trim().to_string())
            .is_some()
        {
            return Err(CliError::Config(format!(
                "line {}: duplicate key {key:?}",
                i + 1
            )));
        }
    }
    Ok(out)
}

pub fn read_config_file(path: &Path) -> CliResult<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    parse_key_values(&text)
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> CliResult<T> {
    v.trim()
        .parse()
        .map_err(|_| CliError::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> CliResult<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

impl RunConfig {
    pub fn from_map(map: &BTreeMap<String, String>) -> CliResult<Self> {
        let get = |key: &str| map.get(key).map(String::as_str);
        let mesh: MeshSource = get("mesh")
            .ok_or_else(|| CliError::Config("mesh is required".into()))?
            .parse()?;
        let n: usize = get("n").map_or(Ok(2), |v| parse_value("n", v))?;
        let k: u32 = get("k").map_or(Ok(2), |v| parse_value("k", v))?;
        let critical = (n as u32 + k + 1) as f64;
        let alphas = match get("alphas") {
            Some(v) => parse_list("alphas", v)?,
            None => vec![critical - 1.0, critical],
        };
        let checks = match get("checks") {
            Some("all") => Check::ALL.to_vec(),
            Some(v) => {
                let mut c: Vec<Check> = parse_list("checks", v)?;
                c.sort();
                c.dedup();
                c
            }
            None => Vec::new(),
        };
        Ok(Self {
            mesh,
            n,
            k,
            alphas,
            stop_t: get("stop_t")
                .map(|v| parse_value("stop_t", v))
                .transpose()?,
            blowup_threshold: get("blowup_threshold")
                .map(|v| parse_value("blowup_threshold", v))
                .transpose()?,
            snapshot_stride: get("snapshot_stride")
                .map_or(Ok(20), |v| parse_value("snapshot_stride", v))?,
            dt_safety: get("dt_safety").map_or(Ok(0.2), |v| parse_value("dt_safety", v))?,
            checks,
            output_dir: get("output_dir").map(PathBuf::from),
            seed: get("seed").map_or(Ok(0), |v| parse_value("seed", v))?,
            pinching_c: get("pinching_c").map_or(Ok(0.1), |v| parse_value("pinching_c", v))?,
            monitor_alpha: get("monitor_alpha")
                .map_or(Ok(critical), |v| parse_value("monitor_alpha", v))?,
            beta0: get("beta0").map_or(Ok(2.5), |v| parse_value("beta0", v))?,
            moser_m: get("moser_m").map_or(Ok(6), |v| parse_value("moser_m", v))?,
            blowup_count: get("blowup_count").map_or(Ok(3), |v| parse_value("blowup_count", v))?,
        })
    }

    pub fn has(&self, check: Check) -> bool {
        self.checks.contains(&check)
    }

    /// Alphas to accumulate during the run: the configured ones plus the monitored exponent.
    pub fn accumulated_alphas(&self) -> Vec<f64> {
        let mut a = self.alphas.clone();
        let extra = [self.monitor_alpha, (self.n as u32 + self.k + 1) as f64];
        for e in extra {
            if !a.contains(&e) {
                a.push(e);
            }
        }
        a
    }

    /// Rejects configurations whose requested checks cannot apply, before any work is done.
    pub fn validate(&self, for_flow: bool) -> CliResult<()> {
        if self.n != 2 {
            return Err(hkflow::Error::HypothesisViolated(format!(
                "meshes are surfaces; n = {} is unsupported",
                self.n
            ))
            .into());
        }
        if self.k < 1 {
            return Err(CliError::Config("k must be at least 1".into()));
        }
        if self.alphas.iter().any(|a| !(*a > 0.0)) || !(self.monitor_alpha > 0.0) {
            return Err(CliError::Config("alphas must be positive".into()));
        }
        if !(self.dt_safety > 0.0 && self.dt_safety <= 1.0) {
            return Err(CliError::Config("dt_safety must lie in (0, 1]".into()));
        }
        if self.snapshot_stride == 0 {
            return Err(CliError::Config("snapshot_stride must be positive".into()));
        }
        if self.checks.iter().any(|c| {
            matches!(
                c,
                Check::NonlinearSobolev | Check::GradientForm | Check::SpacetimeSobolev
            )
        }) {
            hkflow::sobolev::check_hypothesis(self.n, self.k)?;
        }
        if !for_flow {
            if let Some(c) = self.checks.iter().find(|c| !c.is_static()) {
                return Err(CliError::Config(format!(
                    "{} needs a trajectory; use the flow subcommand",
                    c.as_str()
                )));
            }
            return Ok(());
        }
        if self.stop_t.is_none() && self.blowup_threshold.is_none() {
            return Err(CliError::Config(
                "one of stop_t or blowup_threshold is required".into(),
            ));
        }
        if self.checks.iter().any(Check::needs_moser) {
            if self.k < 2 {
                return Err(hkflow::Error::HypothesisViolated(
                    "the Moser checks need k >= 2".into(),
                )
                .into());
            }
            if self.beta0 < 2.0 {
                return Err(hkflow::Error::BetaTooSmall { beta: self.beta0 }.into());
            }
        }
        if self.has(Check::SupBound) {
            let beta = (self.n as f64 + self.k as f64 + 1.0) / self.k as f64;
            if beta < 2.0 {
                return Err(hkflow::Error::BetaTooSmall { beta }.into());
            }
        }
        if self.has(Check::BlowupSequence) {
            if self.blowup_threshold.is_none() {
                return Err(CliError::Config(
                    "blowup_sequence needs blowup_threshold".into(),
                ));
            }
            if self.blowup_count == 0 {
                return Err(CliError::Config("blowup_count must be positive".into()));
            }
        }
        Ok(())
    }
}
