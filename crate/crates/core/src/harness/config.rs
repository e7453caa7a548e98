//! Flat `key = value` experiment files.
//!
//! ```text
//! # MNIST, private, ten local updates
//! mnist_dir = data/mnist-10k
//! mode = ObjPM
//! eps_bar = 0.05
//! T = 2000
//! seeds = 1-10
//! ```
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `mnist_dir` | | directory with the four IDX files (plain or `.gz`) |
//! | `femnist_train`, `femnist_test` | | writer-keyed JSON files (instead of `mnist_dir`) |
//! | `max_train`, `max_test` | all | keep only the first n samples |
//! | `agents` | 10 | `P` for the IID split (writer data uses one agent per writer) |
//! | `partition_seed` | 0 | shuffle seed of the IID split |
//! | `bias` | false | append a constant feature |
//! | `mode` | required | `NonPrivate`, `ObjP`, `ObjPM` or `OutP` |
//! | `eps_bar` | 0.1 (`inf` for NonPrivate) | per-step privacy budget |
//! | `delta_bar` | 1e-6 | `OutP` only |
//! | `E` | 10 for ObjPM, else 1 | local updates per round |
//! | `allow_E_override` | false | permit an `E` that disagrees with the mode |
//! | `T` | 20000 | rounds |
//! | `rho_c1`, `rho_c2`, `rho_tc` | 2, 5, 10000 | penalty schedule |
//! | `rho_cap` | 1e9 | |
//! | `eta` | nonsmooth | `nonsmooth`, `smooth` or `strong` |
//! | `eta_lipschitz`, `eta_alpha` | | required by `smooth` / `strong` |
//! | `beta` | 1e-6 | regularization |
//! | `bound` | 100 | box half-width, `inf` for none |
//! | `seeds` | 1 | comma list, `a-b` ranges allowed |
//! | `eval_every` | 100 | rounds between test evaluations |
//! | `threads` | 1 | agent worker threads, 0 for all cores |
//! | `outp_sigma0` | calibrated | base deviation of the output noise |
//! | `outp_decay` | 0.5 | `sigma_t = sigma0 / t^decay` |
//! | `outp_l2_scale` | 1 | l2/l1 sensitivity ratio used by the calibration |
//! | `output_dir` | out | |
//!
//! Relative paths are resolved against the directory of the config file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::optimizer::{BoxConstraint, EtaRule, Mechanism, OutputNoise, RhoSchedule, Schedules, TrainerConfig};

/// File the resolved configuration is echoed to.
pub const RESOLVED_CONFIG: &str = "config.resolved";

const KEYS: &[&str] = &[
    "mnist_dir",
    "femnist_train",
    "femnist_test",
    "max_train",
    "max_test",
    "agents",
    "partition_seed",
    "bias",
    "mode",
    "eps_bar",
    "delta_bar",
    "E",
    "allow_E_override",
    "T",
    "rho_c1",
    "rho_c2",
    "rho_tc",
    "rho_cap",
    "eta",
    "eta_lipschitz",
    "eta_alpha",
    "beta",
    "bound",
    "seeds",
    "eval_every",
    "threads",
    "outp_sigma0",
    "outp_decay",
    "outp_l2_scale",
    "output_dir",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    NonPrivate,
    ObjP,
    /// `ObjP` with ten local updates.
    ObjPM,
    OutP,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::NonPrivate => "NonPrivate",
            Mode::ObjP => "ObjP",
            Mode::ObjPM => "ObjPM",
            Mode::OutP => "OutP",
        }
    }

    pub fn default_local_updates(&self) -> usize {
        match self {
            Mode::ObjPM => 10,
            _ => 1,
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "NonPrivate" => Ok(Mode::NonPrivate),
            "ObjP" => Ok(Mode::ObjP),
            "ObjPM" => Ok(Mode::ObjPM),
            "OutP" => Ok(Mode::OutP),
            _ => Err(format!("unknown mode {s:?} (NonPrivate, ObjP, ObjPM, OutP)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    /// Directory holding `train-images-idx3-ubyte`, `train-labels-idx1-ubyte`,
    /// `t10k-images-idx3-ubyte` and `t10k-labels-idx1-ubyte`, each optionally
    /// with a `.gz` suffix.
    Mnist {
        dir: PathBuf,
    },
    Femnist {
        train: PathBuf,
        test: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub max_train: Option<usize>,
    pub max_test: Option<usize>,
    pub agents: usize,
    pub partition_seed: u64,
    pub bias: bool,
    pub mode: Mode,
    pub eps_bar: f64,
    pub delta_bar: f64,
    pub local_updates: usize,
    pub allow_e_override: bool,
    pub rounds: usize,
    pub rho: RhoSchedule,
    pub eta: EtaRule,
    pub beta: f64,
    pub bound: f64,
    pub seeds: Vec<u64>,
    pub eval_every: usize,
    pub threads: usize,
    pub outp_sigma0: Option<f64>,
    pub outp_decay: f64,
    pub outp_l2_scale: f64,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// Defaults for `mode` reading from `dataset`.
    pub fn new(dataset: DatasetSource, mode: Mode) -> Self {
        Self {
            dataset,
            max_train: None,
            max_test: None,
            agents: 10,
            partition_seed: 0,
            bias: false,
            mode,
            eps_bar: if mode == Mode::NonPrivate { f64::INFINITY } else { 0.1 },
            delta_bar: 1e-6,
            local_updates: mode.default_local_updates(),
            allow_e_override: false,
            rounds: 20_000,
            rho: RhoSchedule::mnist(),
            eta: EtaRule::Nonsmooth,
            beta: 1e-6,
            bound: BoxConstraint::DEFAULT_BOUND,
            seeds: vec![1],
            eval_every: 100,
            threads: 1,
            outp_sigma0: None,
            outp_decay: 0.5,
            outp_l2_scale: 1.0,
            output_dir: PathBuf::from("out"),
        }
    }

    pub fn mechanism(&self) -> Mechanism {
        match self.mode {
            Mode::NonPrivate => Mechanism::NonPrivate,
            Mode::ObjP | Mode::ObjPM => Mechanism::ObjectivePerturbation,
            Mode::OutP => Mechanism::OutputPerturbation(OutputNoise {
                sigma0: self.outp_sigma0,
                decay: self.outp_decay,
                delta_bar: self.delta_bar,
                l2_scale: self.outp_l2_scale,
            }),
        }
    }

    pub fn feasible(&self) -> Result<BoxConstraint> {
        if self.bound.is_infinite() {
            Ok(BoxConstraint::unbounded())
        } else {
            BoxConstraint::new(self.bound)
        }
    }

    pub fn trainer_config(&self, seed: u64) -> Result<TrainerConfig> {
        let cfg = TrainerConfig {
            schedules: Schedules {
                rho: self.rho,
                eta: self.eta,
                eps_bar: self.eps_bar,
                local_updates: self.local_updates,
                rounds: self.rounds,
            },
            feasible: self.feasible()?,
            mechanism: self.mechanism(),
            seed,
            threads: self.threads,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks the cross-field rules. Errors name line 0 since they are not
    /// tied to a single line.
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::Config { line: 0, reason });
        if self.local_updates == 0 {
            return bad("E must be >= 1".into());
        }
        if self.local_updates != self.mode.default_local_updates()
            && matches!(self.mode, Mode::ObjP | Mode::ObjPM)
            && !self.allow_e_override
        {
            return bad(format!(
                "mode {} implies E={}, got E={} (set allow_E_override=true)",
                self.mode.name(),
                self.mode.default_local_updates(),
                self.local_updates
            ));
        }
        if !(self.eps_bar > 0.0) {
            return bad(format!("eps_bar must be > 0 or inf, got {}", self.eps_bar));
        }
        if self.mode == Mode::NonPrivate && self.eps_bar.is_finite() {
            return bad("NonPrivate runs have eps_bar = inf".into());
        }
        if !(self.delta_bar > 0.0 && self.delta_bar < 1.0) {
            return bad(format!("delta_bar must be in (0, 1), got {}", self.delta_bar));
        }
        if self.rounds == 0 || self.eval_every == 0 {
            return bad("T and eval_every must be >= 1".into());
        }
        if self.agents == 0 {
            return bad("agents must be >= 1".into());
        }
        if self.seeds.is_empty() {
            return bad("need at least one seed".into());
        }
        if !(self.bound > 0.0) {
            return bad(format!("bound must be > 0, got {}", self.bound));
        }
        if matches!(self.max_train, Some(0)) || matches!(self.max_test, Some(0)) {
            return bad("max_train and max_test must be >= 1".into());
        }
        self.rho.validate()?;
        self.eta.validate()?;
        self.trainer_config(0).map(|_| ())
    }

    /// The resolved configuration in the file format, every key spelled out.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        match &self.dataset {
            DatasetSource::Mnist { dir } => put("mnist_dir", dir.display().to_string()),
            DatasetSource::Femnist { train, test } => {
                put("femnist_train", train.display().to_string());
                put("femnist_test", test.display().to_string());
            }
        }
        if let Some(n) = self.max_train {
            put("max_train", n.to_string());
        }
        if let Some(n) = self.max_test {
            put("max_test", n.to_string());
        }
        put("agents", self.agents.to_string());
        put("partition_seed", self.partition_seed.to_string());
        put("bias", self.bias.to_string());
        put("mode", self.mode.name().into());
        put("eps_bar", self.eps_bar.to_string());
        put("delta_bar", self.delta_bar.to_string());
        put("E", self.local_updates.to_string());
        put("allow_E_override", self.allow_e_override.to_string());
        put("T", self.rounds.to_string());
        put("rho_c1", self.rho.c1.to_string());
        put("rho_c2", self.rho.c2.to_string());
        put("rho_tc", self.rho.tc.to_string());
        put("rho_cap", self.rho.cap.to_string());
        match self.eta {
            EtaRule::Nonsmooth => put("eta", "nonsmooth".into()),
            EtaRule::Smooth { lipschitz } => {
                put("eta", "smooth".into());
                put("eta_lipschitz", lipschitz.to_string());
            }
            EtaRule::Strong { alpha } => {
                put("eta", "strong".into());
                put("eta_alpha", alpha.to_string());
            }
        }
        put("beta", self.beta.to_string());
        put("bound", self.bound.to_string());
        put(
            "seeds",
            self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(","),
        );
        put("eval_every", self.eval_every.to_string());
        put("threads", self.threads.to_string());
        if let Some(s) = self.outp_sigma0 {
            put("outp_sigma0", s.to_string());
        }
        put("outp_decay", self.outp_decay.to_string());
        put("outp_l2_scale", self.outp_l2_scale.to_string());
        put("output_dir", self.output_dir.display().to_string());
        s
    }
}

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.map.remove(key) {
            None => Ok(None),
            Some((line, raw)) => raw.parse::<T>().map(Some).map_err(|e| Error::Config {
                line,
                reason: format!("{key}: cannot parse {raw:?}: {e}"),
            }),
        }
    }

    fn take_with<T>(&mut self, key: &str, f: impl FnOnce(&str) -> std::result::Result<T, String>) -> Result<Option<T>> {
        match self.map.remove(key) {
            None => Ok(None),
            Some((line, raw)) => f(&raw).map(Some).map_err(|reason| Error::Config {
                line,
                reason: format!("{key}: {reason}"),
            }),
        }
    }

    fn line_of(&self, key: &str) -> usize {
        self.map.get(key).map_or(0, |(l, _)| *l)
    }
}

fn parse_seeds(raw: &str) -> std::result::Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for item in raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item.split_once('-') {
            Some((a, b)) => {
                let a: u64 = a.trim().parse().map_err(|e| format!("{item:?}: {e}"))?;
                let b: u64 = b.trim().parse().map_err(|e| format!("{item:?}: {e}"))?;
                if b < a {
                    return Err(format!("empty range {item:?}"));
                }
                out.extend(a..=b);
            }
            None => out.push(item.parse().map_err(|e| format!("{item:?}: {e}"))?),
        }
    }
    if out.is_empty() {
        return Err("no seeds given".into());
    }
    Ok(out)
}

fn resolve(base: &Path, raw: &str) -> std::result::Result<PathBuf, String> {
    let p = Path::new(raw);
    Ok(if p.is_absolute() { p.to_path_buf() } else { base.join(p) })
}

/// Parses config text; relative paths are joined onto `base`.
pub fn parse_config_str(text: &str, base: &Path) -> Result<ExperimentConfig> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (k, v) = content.split_once('=').ok_or_else(|| Error::Config {
            line,
            reason: format!("expected key = value, got {content:?}"),
        })?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(Error::Config {
                line,
                reason: format!("unknown key {k:?}"),
            });
        }
        if let Some((first, _)) = map.insert(k.to_string(), (line, v.to_string())) {
            return Err(Error::Config {
                line,
                reason: format!("duplicate key {k:?} (first set on line {first})"),
            });
        }
    }
    let mut e = Entries { map };

    let mode_line = e.line_of("mode");
    let mode: Mode = e.take_with("mode", |s| s.parse())?.ok_or_else(|| Error::Config {
        line: 0,
        reason: "missing required key \"mode\"".into(),
    })?;
    let mnist = e.take_with("mnist_dir", |s| resolve(base, s))?;
    let ftrain = e.take_with("femnist_train", |s| resolve(base, s))?;
    let ftest = e.take_with("femnist_test", |s| resolve(base, s))?;
    let dataset = match (mnist, ftrain, ftest) {
        (Some(dir), None, None) => DatasetSource::Mnist { dir },
        (None, Some(train), Some(test)) => DatasetSource::Femnist { train, test },
        _ => {
            return Err(Error::Config {
                line: 0,
                reason: "give either mnist_dir, or both femnist_train and femnist_test".into(),
            })
        }
    };
    let mut c = ExperimentConfig::new(dataset, mode);
    c.max_train = e.take("max_train")?;
    c.max_test = e.take("max_test")?;
    if let Some(v) = e.take("agents")? {
        c.agents = v;
    }
    if let Some(v) = e.take("partition_seed")? {
        c.partition_seed = v;
    }
    if let Some(v) = e.take("bias")? {
        c.bias = v;
    }
    let eps_line = e.line_of("eps_bar");
    if let Some(v) = e.take("eps_bar")? {
        c.eps_bar = v;
    }
    if let Some(v) = e.take("delta_bar")? {
        c.delta_bar = v;
    }
    let e_line = e.line_of("E");
    if let Some(v) = e.take("E")? {
        c.local_updates = v;
    }
    if let Some(v) = e.take("allow_E_override")? {
        c.allow_e_override = v;
    }
    if let Some(v) = e.take("T")? {
        c.rounds = v;
    }
    if let Some(v) = e.take("rho_c1")? {
        c.rho.c1 = v;
    }
    if let Some(v) = e.take("rho_c2")? {
        c.rho.c2 = v;
    }
    if let Some(v) = e.take("rho_tc")? {
        c.rho.tc = v;
    }
    if let Some(v) = e.take("rho_cap")? {
        c.rho.cap = v;
    }
    let eta_line = e.line_of("eta");
    let eta_kind: Option<String> = e.take("eta")?;
    let lipschitz: Option<f64> = e.take("eta_lipschitz")?;
    let alpha: Option<f64> = e.take("eta_alpha")?;
    c.eta = match (eta_kind.as_deref().unwrap_or("nonsmooth"), lipschitz, alpha) {
        ("nonsmooth", None, None) => EtaRule::Nonsmooth,
        ("smooth", Some(lipschitz), None) => EtaRule::Smooth { lipschitz },
        ("strong", None, Some(alpha)) => EtaRule::Strong { alpha },
        (kind, _, _) => {
            return Err(Error::Config {
                line: eta_line,
                reason: format!(
                    "eta = {kind}: nonsmooth takes no constant, smooth needs only eta_lipschitz, strong needs only eta_alpha"
                ),
            })
        }
    };
    if let Some(v) = e.take("beta")? {
        c.beta = v;
    }
    if let Some(v) = e.take("bound")? {
        c.bound = v;
    }
    if let Some(v) = e.take_with("seeds", parse_seeds)? {
        c.seeds = v;
    }
    if let Some(v) = e.take("eval_every")? {
        c.eval_every = v;
    }
    if let Some(v) = e.take("threads")? {
        c.threads = v;
    }
    c.outp_sigma0 = e.take("outp_sigma0")?;
    if let Some(v) = e.take("outp_decay")? {
        c.outp_decay = v;
    }
    if let Some(v) = e.take("outp_l2_scale")? {
        c.outp_l2_scale = v;
    }
    c.output_dir = e
        .take_with("output_dir", |s| resolve(base, s))?
        .unwrap_or_else(|| base.join("out"));
    debug_assert!(e.map.is_empty(), "unconsumed keys {:?}", e.map.keys());

    // attribute the common rule violations to the line that caused them
    c.validate().map_err(|err| match err {
        Error::Config { line: 0, reason } => {
            let line = if reason.contains("implies E=") {
                e_line.max(mode_line)
            } else if reason.contains("eps_bar") {
                eps_line.max(mode_line)
            } else {
                0
            };
            Error::Config { line, reason }
        }
        other => other,
    })?;
    Ok(c)
}

/// Reads and parses a config file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_config_str(&text, base)
}
