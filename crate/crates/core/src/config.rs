//! Experiment configuration files.
//!
//! Line-oriented `key = value` text with `[section]` headers; `#` and `;`
//! start comments. Top-level keys (before any section) are `seed`,
//! `algorithm` and `name`. A repeated key keeps its last value and produces
//! a warning; unknown sections or keys are rejected. See `docs/config.md`
//! in the repository for the full schema.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codec::{DecoderKind, DecoderOptions};
use crate::error::{Error, Result};
use crate::node::HyperParams;
use crate::objectives::{ObjectiveKind, ObjectiveSpec};
use crate::privacy::PrivacyParams;
use crate::sparse::SparsityBudget;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Ceps,
    Dpsgd,
    DpsgdDn,
    DpsgdPc,
    Dfedavgm,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Ceps,
        Algorithm::Dpsgd,
        Algorithm::DpsgdDn,
        Algorithm::DpsgdPc,
        Algorithm::Dfedavgm,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::Ceps => "ceps",
            Algorithm::Dpsgd => "dpsgd",
            Algorithm::DpsgdDn => "dpsgd-dn",
            Algorithm::DpsgdPc => "dpsgd-pc",
            Algorithm::Dfedavgm => "dfedavgm",
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.tag() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm `{s}`")))
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub objective: ObjectiveKind,
    /// Model dimension; taken from the data file for LibSVM problems.
    pub n: Option<usize>,
    pub s: usize,
    pub m: usize,
    pub samples_min: usize,
    pub samples_max: usize,
    pub noise_scale: f64,
    pub lambda: f64,
    pub data: Option<PathBuf>,
}

impl ProblemConfig {
    pub fn objective_spec(&self) -> ObjectiveSpec {
        match self.objective {
            ObjectiveKind::LinearRegression => ObjectiveSpec::linear(),
            ObjectiveKind::LogisticRegression => ObjectiveSpec {
                kind: ObjectiveKind::LogisticRegression,
                lambda: self.lambda,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    /// Uniform random subset of the neighbourhood.
    Uniform,
    /// The first `t_i - 1` neighbours to answer under exponential latencies.
    Stragglers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyConfig {
    pub edge_prob: f64,
    pub r: f64,
    pub selection: SelectionRule,
    pub latency_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CepsConfig {
    pub mu: f64,
    pub gamma: f64,
    pub kappa_min: u64,
    pub kappa_max: u64,
    /// Multiplier on the default `sigma_i` rule.
    pub sigma_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecConfig {
    /// Exchange exact models instead of one-bit messages.
    pub perfect_comm: bool,
    /// Measurement count; defaults to `n / 2`.
    pub d: Option<usize>,
    pub density: f64,
    pub decoder: DecoderOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyConfig {
    pub enabled: bool,
    pub epsilon: f64,
    pub delta: f64,
    pub sensitivity: f64,
    /// Clip gradients to `sensitivity / 2` whenever noise is on.
    pub clip: bool,
}

impl PrivacyConfig {
    pub fn params(&self) -> Result<PrivacyParams> {
        if !self.enabled {
            return Ok(PrivacyParams::disabled());
        }
        PrivacyParams::new(self.epsilon, self.delta, self.sensitivity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminationConfig {
    /// Overrides the default `0.005` (no noise) / `0.0025 / epsilon` rule.
    pub tol: Option<f64>,
    pub max_ticks: u64,
    /// Completed communication sweeps required before the residual test.
    pub min_comm_rounds: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    /// Defaults to `1 / (2 l)` with `l` the largest local Lipschitz constant.
    pub eta: Option<f64>,
    pub momentum: f64,
    pub local_steps: u64,
    /// Per-round survival probability of each edge for the dynamic network.
    pub dn_keep_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: Option<String>,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub problem: ProblemConfig,
    pub topology: TopologyConfig,
    pub ceps: CepsConfig,
    pub codec: CodecConfig,
    pub privacy: PrivacyConfig,
    pub termination: TerminationConfig,
    pub baseline: BaselineConfig,
}

impl ExperimentConfig {
    /// Synthetic linear regression with every other setting at its default.
    pub fn linreg(n: usize, s: usize, m: usize) -> Self {
        ExperimentConfig {
            name: None,
            seed: 1,
            algorithm: Algorithm::Ceps,
            problem: ProblemConfig {
                objective: ObjectiveKind::LinearRegression,
                n: Some(n),
                s,
                m,
                samples_min: 250,
                samples_max: 750,
                noise_scale: 0.5,
                lambda: 0.001,
                data: None,
            },
            topology: TopologyConfig {
                edge_prob: 0.5,
                r: 0.5,
                selection: SelectionRule::Uniform,
                latency_rate: 1.0,
            },
            ceps: CepsConfig {
                mu: 0.1,
                gamma: 5.0,
                kappa_min: 10,
                kappa_max: 15,
                sigma_scale: 1.0,
            },
            codec: CodecConfig {
                perfect_comm: false,
                d: None,
                density: 1.0,
                decoder: DecoderOptions::default(),
            },
            privacy: PrivacyConfig {
                enabled: true,
                epsilon: 0.5,
                delta: 0.5,
                sensitivity: 0.1,
                clip: true,
            },
            termination: TerminationConfig {
                tol: None,
                max_ticks: 10_000,
                min_comm_rounds: 1,
            },
            baseline: BaselineConfig {
                eta: None,
                momentum: 0.5,
                local_steps: 10,
                dn_keep_prob: 0.5,
            },
        }
    }

    pub fn effective_tol(&self) -> f64 {
        match self.termination.tol {
            Some(t) => t,
            None if self.privacy.enabled => 0.0025 / self.privacy.epsilon,
            None => 0.005,
        }
    }

    /// Codec dimension for a model of size `n`.
    pub fn codec_dim(&self, n: usize) -> usize {
        self.codec.d.unwrap_or((n / 2).max(1))
    }

    pub fn hyper_params(&self) -> Result<HyperParams> {
        let hp = HyperParams {
            mu: self.ceps.mu,
            s: SparsityBudget::new(self.problem.s)?,
            gamma: self.ceps.gamma,
            kappa_min: self.ceps.kappa_min,
            kappa_max: self.ceps.kappa_max,
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.problem;
        if p.m == 0 {
            return Err(Error::Config("problem.m must be at least 1".into()));
        }
        if p.s == 0 {
            return Err(Error::Config("problem.s must be at least 1".into()));
        }
        match (p.objective, p.n, &p.data) {
            (ObjectiveKind::LinearRegression, None, None) => {
                return Err(Error::Config("problem.n is required for synthetic problems".into()))
            }
            (ObjectiveKind::LogisticRegression, _, None) => {
                return Err(Error::Config("problem.data is required for logistic regression".into()))
            }
            _ => {}
        }
        if let Some(n) = p.n {
            if p.s > n {
                return Err(Error::Config(format!("problem.s = {} exceeds n = {n}", p.s)));
            }
        }
        if p.samples_min == 0 || p.samples_min > p.samples_max {
            return Err(Error::Config("problem.samples_min/samples_max form an empty range".into()));
        }
        if !(p.noise_scale >= 0.0) || !(p.lambda >= 0.0) {
            return Err(Error::Config("problem.noise_scale and problem.lambda must be nonnegative".into()));
        }
        let t = &self.topology;
        if !(t.edge_prob > 0.0 && t.edge_prob <= 1.0) {
            return Err(Error::Config("topology.edge_prob must be in (0, 1]".into()));
        }
        if !(t.r > 0.0 && t.r <= 1.0) {
            return Err(Error::Config("topology.r must be in (0, 1]".into()));
        }
        if !(t.latency_rate > 0.0 && t.latency_rate.is_finite()) {
            return Err(Error::Config("topology.latency_rate must be positive".into()));
        }
        self.hyper_params()?;
        if !(self.ceps.sigma_scale > 0.0 && self.ceps.sigma_scale.is_finite()) {
            return Err(Error::Config("ceps.sigma_scale must be positive".into()));
        }
        let c = &self.codec;
        if c.d == Some(0) {
            return Err(Error::Config("codec.d must be positive".into()));
        }
        if !(c.density > 0.0 && c.density <= 1.0) {
            return Err(Error::Config("codec.density must be in (0, 1]".into()));
        }
        if c.decoder.max_iter == 0 || !(c.decoder.step_scale > 0.0) {
            return Err(Error::Config("codec.max_iter and codec.step_scale must be positive".into()));
        }
        self.privacy.params()?;
        if let Some(tol) = self.termination.tol {
            if !(tol > 0.0 && tol.is_finite()) {
                return Err(Error::Config("termination.tol must be positive".into()));
            }
        }
        if self.termination.max_ticks == 0 {
            return Err(Error::Config("termination.max_ticks must be positive".into()));
        }
        let b = &self.baseline;
        if let Some(eta) = b.eta {
            if !(eta >= 0.0 && eta.is_finite()) {
                return Err(Error::Config("baseline.eta must be nonnegative".into()));
            }
        }
        if !(0.0..1.0).contains(&b.momentum) {
            return Err(Error::Config("baseline.momentum must be in [0, 1)".into()));
        }
        if b.local_steps == 0 {
            return Err(Error::Config("baseline.local_steps must be positive".into()));
        }
        if !(b.dn_keep_prob > 0.0 && b.dn_keep_prob <= 1.0) {
            return Err(Error::Config("baseline.dn_keep_prob must be in (0, 1]".into()));
        }
        Ok(())
    }

    /// SHA-256 of the resolved configuration with keys in sorted order, so
    /// the value does not depend on how the source file was laid out.
    pub fn config_hash(&self) -> String {
        // serde_json maps are ordered by key.
        let value = serde_json::to_value(self).expect("config is serialisable");
        let digest = Sha256::digest(value.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// `section.key` → raw value after last-wins resolution.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    pub entries: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

const SECTIONS: [&str; 7] = ["problem", "topology", "ceps", "codec", "privacy", "termination", "baseline"];

pub fn parse_raw(text: &str, origin: &str) -> Result<RawConfig> {
    let mut raw = RawConfig::default();
    let mut section = String::new();
    for (k, line) in text.lines().enumerate() {
        let line = strip_comment(line).trim();
        if line.is_empty() {
            continue;
        }
        let perr = |reason: String| Error::Parse {
            path: origin.to_string(),
            line: k + 1,
            reason,
        };
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| perr("unterminated section header".into()))?
                .trim();
            if !SECTIONS.contains(&name) {
                return Err(perr(format!("unknown section [{name}]")));
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| perr(format!("expected `key = value`, found `{line}`")))?;
        let key = key.trim();
        let value = value.trim().trim_matches('"');
        if key.is_empty() {
            return Err(perr("empty key".into()));
        }
        let full = if section.is_empty() {
            key.to_string()
        } else {
            format!("{section}.{key}")
        };
        if let Some(prev) = raw.entries.insert(full.clone(), value.to_string()) {
            let msg = format!("{origin}:{}: duplicate key `{full}` (was `{prev}`), keeping `{value}`", k + 1);
            log::warn!("{msg}");
            raw.warnings.push(msg);
        }
    }
    Ok(raw)
}

fn strip_comment(line: &str) -> &str {
    match line.find(['#', ';']) {
        Some(i) => &line[..i],
        None => line,
    }
}

struct Fields<'a> {
    entries: BTreeMap<&'a str, &'a str>,
}

impl<'a> Fields<'a> {
    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`"))),
        }
    }

    fn set<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<()> {
        if let Some(v) = self.take(key)? {
            *slot = v;
        }
        Ok(())
    }

    fn required<T: FromStr>(&mut self, key: &str) -> Result<T> {
        self.take(key)?
            .ok_or_else(|| Error::Config(format!("missing required key `{key}`")))
    }
}

/// Resolves raw entries into a validated configuration. Relative data
/// paths are interpreted against `base_dir`.
pub fn resolve(raw: &RawConfig, base_dir: &Path) -> Result<ExperimentConfig> {
    let mut f = Fields {
        entries: raw.entries.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect(),
    };
    let objective: String = f.required("problem.objective")?;
    let objective = ObjectiveKind::from_str(&objective)?;
    let n: Option<usize> = f.take("problem.n")?;
    let s: usize = f.required("problem.s")?;
    let m: usize = f.required("problem.m")?;
    let mut cfg = ExperimentConfig::linreg(n.unwrap_or(0), s, m);
    cfg.problem.objective = objective;
    cfg.problem.n = n;

    cfg.name = f.take("name")?;
    f.set("seed", &mut cfg.seed)?;
    if let Some(a) = f.take::<String>("algorithm")? {
        cfg.algorithm = a.parse()?;
    }

    let p = &mut cfg.problem;
    f.set("problem.samples_min", &mut p.samples_min)?;
    f.set("problem.samples_max", &mut p.samples_max)?;
    f.set("problem.noise_scale", &mut p.noise_scale)?;
    f.set("problem.lambda", &mut p.lambda)?;
    if let Some(path) = f.take::<PathBuf>("problem.data")? {
        p.data = Some(if path.is_relative() { base_dir.join(path) } else { path });
    }

    let t = &mut cfg.topology;
    f.set("topology.edge_prob", &mut t.edge_prob)?;
    f.set("topology.r", &mut t.r)?;
    f.set("topology.latency_rate", &mut t.latency_rate)?;
    if let Some(sel) = f.take::<String>("topology.selection")? {
        t.selection = match sel.as_str() {
            "uniform" => SelectionRule::Uniform,
            "stragglers" => SelectionRule::Stragglers,
            other => return Err(Error::Config(format!("`topology.selection`: unknown rule `{other}`"))),
        };
    }

    let c = &mut cfg.ceps;
    f.set("ceps.mu", &mut c.mu)?;
    f.set("ceps.gamma", &mut c.gamma)?;
    f.set("ceps.kappa_min", &mut c.kappa_min)?;
    f.set("ceps.kappa_max", &mut c.kappa_max)?;
    f.set("ceps.sigma_scale", &mut c.sigma_scale)?;

    let c = &mut cfg.codec;
    f.set("codec.perfect_comm", &mut c.perfect_comm)?;
    c.d = f.take("codec.d")?;
    f.set("codec.density", &mut c.density)?;
    f.set("codec.max_iter", &mut c.decoder.max_iter)?;
    f.set("codec.step_scale", &mut c.decoder.step_scale)?;
    f.set("codec.stall_iters", &mut c.decoder.stall_iters)?;
    if let Some(kind) = f.take::<String>("codec.decoder")? {
        c.decoder.kind = match kind.as_str() {
            "biht" => DecoderKind::Biht,
            other => return Err(Error::Config(format!("`codec.decoder`: unknown decoder `{other}`"))),
        };
    }

    let pr = &mut cfg.privacy;
    f.set("privacy.enabled", &mut pr.enabled)?;
    f.set("privacy.epsilon", &mut pr.epsilon)?;
    f.set("privacy.delta", &mut pr.delta)?;
    f.set("privacy.sensitivity", &mut pr.sensitivity)?;
    f.set("privacy.clip", &mut pr.clip)?;

    let t = &mut cfg.termination;
    t.tol = f.take("termination.tol")?;
    f.set("termination.max_ticks", &mut t.max_ticks)?;
    f.set("termination.min_comm_rounds", &mut t.min_comm_rounds)?;

    let b = &mut cfg.baseline;
    b.eta = f.take("baseline.eta")?;
    f.set("baseline.momentum", &mut b.momentum)?;
    f.set("baseline.local_steps", &mut b.local_steps)?;
    f.set("baseline.dn_keep_prob", &mut b.dn_keep_prob)?;

    if !f.entries.is_empty() {
        let unknown: Vec<&str> = f.entries.keys().copied().collect();
        return Err(Error::Config(format!("unknown keys: {}", unknown.join(", "))));
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config_str(text: &str, origin: &str, base_dir: &Path) -> Result<ExperimentConfig> {
    resolve(&parse_raw(text, origin)?, base_dir)
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_str(&text, &path.display().to_string(), base)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[problem]\nobjective = linear_regression\nn = 100\ns = 5\nm = 4\n";

    fn parse(text: &str) -> Result<ExperimentConfig> {
        parse_config_str(text, "test.cfg", Path::new("."))
    }

    #[test]
    fn minimal_config_gets_documented_defaults() {
        let cfg = parse(MINIMAL).unwrap();
        assert_eq!(cfg.ceps.gamma, 5.0);
        assert_eq!(cfg.ceps.mu, 0.1);
        assert_eq!((cfg.ceps.kappa_min, cfg.ceps.kappa_max), (10, 15));
        assert_eq!(cfg.privacy.delta, 0.5);
        assert_eq!(cfg.privacy.sensitivity, 0.1);
        assert_eq!(cfg.codec_dim(100), 50);
        assert_eq!((cfg.problem.samples_min, cfg.problem.samples_max), (250, 750));
        assert_eq!(cfg.termination.max_ticks, 10_000);
        assert_eq!(cfg.algorithm, Algorithm::Ceps);
    }

    #[test]
    fn tolerance_rule() {
        let mut cfg = parse(MINIMAL).unwrap();
        cfg.privacy.epsilon = 0.5;
        assert_eq!(cfg.effective_tol(), 0.005);
        cfg.privacy.enabled = false;
        assert_eq!(cfg.effective_tol(), 0.005);
        cfg.privacy.enabled = true;
        cfg.privacy.epsilon = 0.25;
        assert_eq!(cfg.effective_tol(), 0.01);
        cfg.termination.tol = Some(1e-3);
        assert_eq!(cfg.effective_tol(), 1e-3);
    }

    #[test]
    fn zero_epsilon_is_rejected() {
        let text = format!("{MINIMAL}[privacy]\nepsilon = 0\n");
        assert!(parse(&text).is_err());
    }

    #[test]
    fn duplicate_keys_keep_last_value_and_warn() {
        let text = format!("{MINIMAL}[ceps]\nmu = 0.2\nmu = 0.3\n");
        let raw = parse_raw(&text, "t").unwrap();
        assert_eq!(raw.warnings.len(), 1);
        assert_eq!(resolve(&raw, Path::new(".")).unwrap().ceps.mu, 0.3);
    }

    #[test]
    fn errors_name_the_offending_key() {
        let err = parse(&format!("{MINIMAL}[ceps]\nmu = fast\n")).unwrap_err().to_string();
        assert!(err.contains("ceps.mu"), "{err}");
        let err = parse(&format!("{MINIMAL}[ceps]\nnu = 1\nzeta = 2\n")).unwrap_err().to_string();
        assert!(err.contains("ceps.nu") && err.contains("ceps.zeta"), "{err}");
        let err = parse("[problem]\nobjective = linear_regression\ns = 1\n").unwrap_err().to_string();
        assert!(err.contains("problem.m"), "{err}");
        assert!(parse("[problem]\nobjective = linear_regression\ns = 1\nm = 2\n").is_err());
        assert!(parse("[nonsense]\n").is_err());
        assert!(parse("just words\n").is_err());
    }

    #[test]
    fn hash_ignores_layout() {
        let a = "seed = 3\n[problem]\nobjective = linear_regression\nn = 100\ns = 5\nm = 4\n[ceps]\nmu = 0.2\n";
        let b = "# reordered\nseed=3\n[ceps]\nmu = 0.2 ; comment\n[problem]\nm = 4\ns = 5\nn = 100\nobjective = linear_regression\n";
        let (ca, cb) = (parse(a).unwrap(), parse(b).unwrap());
        assert_eq!(ca, cb);
        assert_eq!(ca.config_hash(), cb.config_hash());
        let mut cc = ca.clone();
        cc.seed = 4;
        assert_ne!(cc.config_hash(), ca.config_hash());
    }

    #[test]
    fn relative_data_paths_follow_the_config_file() {
        let text = "[problem]\nobjective = logistic_regression\ns = 3\nm = 2\ndata = fixture.libsvm\n";
        let cfg = parse_config_str(text, "t", Path::new("/tmp/x")).unwrap();
        assert_eq!(cfg.problem.data.as_deref(), Some(Path::new("/tmp/x/fixture.libsvm")));
        assert!(parse("[problem]\nobjective = logistic_regression\ns = 3\nm = 2\n").is_err());
    }

    #[test]
    fn algorithm_tags_roundtrip() {
        for a in Algorithm::ALL {
            assert_eq!(a.tag().parse::<Algorithm>().unwrap(), a);
        }
        assert!("sgd".parse::<Algorithm>().is_err());
    }
}
