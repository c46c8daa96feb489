//! Run configuration: flat dotted keys, fail-closed parsing, canonical text form.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineConfig, BaselineKind};
use crate::diffusion::{Architecture, DenoiserSpec, GuidanceConfig, SigmaKind, VarianceSchedule};
use crate::envs::{GridWorldSpec, CLAW_OBS_DIM, GRID_ACTION_DIM, GRID_OBS_DIM};
use crate::error::{Error, Result};
use crate::io::sha256_hex;
use crate::nnet::{LrSchedule, TrainConfig};
use crate::samplers::{SamplerConfig, Scheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Environment {
    Claw,
    Gridworld,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    DiffusionBc,
    DiffusionX,
    DiffusionKde,
    Mse,
    Discretised,
    Kmeans,
    KmeansResidual,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::DiffusionBc,
        Method::DiffusionX,
        Method::DiffusionKde,
        Method::Mse,
        Method::Discretised,
        Method::Kmeans,
        Method::KmeansResidual,
    ];

    pub fn is_diffusion(self) -> bool {
        matches!(self, Method::DiffusionBc | Method::DiffusionX | Method::DiffusionKde)
    }

    pub fn baseline_kind(self) -> Option<BaselineKind> {
        match self {
            Method::Mse => Some(BaselineKind::Mse),
            Method::Discretised => Some(BaselineKind::Discretised),
            Method::Kmeans => Some(BaselineKind::Kmeans),
            Method::KmeansResidual => Some(BaselineKind::KmeansResidual),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        enum_text(&self)
    }
}

fn enum_text<T: Serialize>(v: &T) -> &'static str {
    match serde_json::to_value(v).expect("enum serialises") {
        serde_json::Value::String(s) => Box::leak(s.into_boxed_str()),
        _ => unreachable!("unit variants serialise to strings"),
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        parse_enum("method", s)
    }
}

impl FromStr for Environment {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        parse_enum("environment", s)
    }
}

fn parse_enum<T: DeserializeOwned>(key: &str, s: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(s.to_owned()))
        .map_err(|_| Error::config(key, format!("unknown value `{s}`")))
}

fn parse_num<T: FromStr>(key: &str, s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::config(key, format!("cannot parse `{s}`")))
}

/// Which runs a key is meaningful for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scope {
    Any,
    Diffusion,
    ExtraSteps,
    Kde,
    Gridworld,
    Bins,
    Clusters,
    Residual,
}

const KEYS: &[(&str, Scope)] = &[
    ("seed", Scope::Any),
    ("environment", Scope::Any),
    ("method", Scope::Any),
    ("output_dir", Scope::Any),
    ("data.n", Scope::Any),
    ("data.holdout", Scope::Any),
    ("data.p_right", Scope::Gridworld),
    ("model.architecture", Scope::Diffusion),
    ("model.hidden_width", Scope::Any),
    ("model.hidden_layers", Scope::Any),
    ("model.embed_dim", Scope::Diffusion),
    ("model.time_embed_dim", Scope::Diffusion),
    ("diffusion.steps", Scope::Diffusion),
    ("diffusion.beta_min", Scope::Diffusion),
    ("diffusion.beta_max", Scope::Diffusion),
    ("diffusion.sigma", Scope::Diffusion),
    ("sampler.extra_steps", Scope::ExtraSteps),
    ("sampler.kde_samples", Scope::Kde),
    ("sampler.kde_width", Scope::Kde),
    ("guidance.weight", Scope::Diffusion),
    ("guidance.dropout", Scope::Diffusion),
    ("train.epochs", Scope::Any),
    ("train.batch_size", Scope::Any),
    ("train.lr", Scope::Any),
    ("train.lr_schedule", Scope::Any),
    ("baseline.bins", Scope::Bins),
    ("baseline.clusters", Scope::Clusters),
    ("baseline.kmeans_iters", Scope::Clusters),
    ("baseline.residual_weight", Scope::Residual),
    ("eval.samples", Scope::Any),
    ("eval.k", Scope::Any),
    ("eval.emd_cap", Scope::Any),
];

/// Every recognised configuration key.
pub fn all_keys() -> Vec<&'static str> {
    KEYS.iter().map(|&(k, _)| k).collect()
}

fn scope_of(key: &str) -> Option<Scope> {
    KEYS.iter().find(|(k, _)| *k == key).map(|&(_, s)| s)
}

/// Every knob of one run; `parse` fills defaults and validates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub environment: Environment,
    pub method: Method,
    pub output_dir: String,
    /// Training demonstrations (claw rows, or grid-world rollouts).
    pub data_n: usize,
    /// Held-out demonstrations for evaluation, same units as `data_n`.
    pub data_holdout: usize,
    pub p_right: f64,
    pub architecture: Architecture,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub embed_dim: usize,
    pub time_embed_dim: usize,
    pub steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub sigma: SigmaKind,
    pub extra_steps: usize,
    pub kde_samples: usize,
    pub kde_width: f64,
    pub guidance: GuidanceConfig,
    pub train: TrainConfig,
    pub bins: usize,
    pub clusters: usize,
    pub kmeans_iters: usize,
    pub residual_weight: f64,
    /// Samples drawn per distinct observation by `sample` and the sweeps.
    pub eval_samples: usize,
    pub eval_k: usize,
    pub emd_cap: usize,
}

impl RunConfig {
    pub fn defaults(environment: Environment, method: Method) -> Self {
        Self {
            seed: 0,
            environment,
            method,
            output_dir: "runs/default".into(),
            data_n: match environment {
                Environment::Claw => 20_000,
                Environment::Gridworld => 10_000,
            },
            data_holdout: match environment {
                Environment::Claw => 2_000,
                Environment::Gridworld => 1_000,
            },
            p_right: GridWorldSpec::default().p_right,
            architecture: Architecture::MlpSieve,
            hidden_width: 512,
            hidden_layers: 3,
            embed_dim: 128,
            time_embed_dim: 32,
            steps: 50,
            beta_min: 1e-4,
            beta_max: 0.02,
            sigma: SigmaKind::Beta,
            extra_steps: if method == Method::DiffusionX { 8 } else { 0 },
            kde_samples: 100,
            kde_width: 0.4,
            guidance: GuidanceConfig::default(),
            train: TrainConfig {
                epochs: 100,
                batch_size: 32,
                lr: 1e-4,
                lr_schedule: LrSchedule::Cosine,
            },
            bins: 20,
            clusters: 10,
            kmeans_iters: 100,
            residual_weight: 1.0,
            eval_samples: 1000,
            eval_k: 10,
            emd_cap: crate::metrics::EMD_POINT_CAP,
        }
    }

    fn applies(&self, scope: Scope) -> bool {
        let m = self.method;
        match scope {
            Scope::Any => true,
            Scope::Diffusion => m.is_diffusion(),
            Scope::ExtraSteps => m == Method::DiffusionX,
            Scope::Kde => m == Method::DiffusionKde,
            Scope::Gridworld => self.environment == Environment::Gridworld,
            Scope::Bins => m == Method::Discretised,
            Scope::Clusters => matches!(m, Method::Kmeans | Method::KmeansResidual),
            Scope::Residual => m == Method::KmeansResidual,
        }
    }

    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse_num(key, v)?,
            "environment" => self.environment = parse_enum(key, v)?,
            "method" => self.method = parse_enum(key, v)?,
            "output_dir" => self.output_dir = v.to_owned(),
            "data.n" => self.data_n = parse_num(key, v)?,
            "data.holdout" => self.data_holdout = parse_num(key, v)?,
            "data.p_right" => self.p_right = parse_num(key, v)?,
            "model.architecture" => self.architecture = parse_enum(key, v)?,
            "model.hidden_width" => self.hidden_width = parse_num(key, v)?,
            "model.hidden_layers" => self.hidden_layers = parse_num(key, v)?,
            "model.embed_dim" => self.embed_dim = parse_num(key, v)?,
            "model.time_embed_dim" => self.time_embed_dim = parse_num(key, v)?,
            "diffusion.steps" => self.steps = parse_num(key, v)?,
            "diffusion.beta_min" => self.beta_min = parse_num(key, v)?,
            "diffusion.beta_max" => self.beta_max = parse_num(key, v)?,
            "diffusion.sigma" => self.sigma = parse_enum(key, v)?,
            "sampler.extra_steps" => self.extra_steps = parse_num(key, v)?,
            "sampler.kde_samples" => self.kde_samples = parse_num(key, v)?,
            "sampler.kde_width" => self.kde_width = parse_num(key, v)?,
            "guidance.weight" => self.guidance.weight = parse_num(key, v)?,
            "guidance.dropout" => self.guidance.dropout = parse_num(key, v)?,
            "train.epochs" => self.train.epochs = parse_num(key, v)?,
            "train.batch_size" => self.train.batch_size = parse_num(key, v)?,
            "train.lr" => self.train.lr = parse_num(key, v)?,
            "train.lr_schedule" => self.train.lr_schedule = parse_enum(key, v)?,
            "baseline.bins" => self.bins = parse_num(key, v)?,
            "baseline.clusters" => self.clusters = parse_num(key, v)?,
            "baseline.kmeans_iters" => self.kmeans_iters = parse_num(key, v)?,
            "baseline.residual_weight" => self.residual_weight = parse_num(key, v)?,
            "eval.samples" => self.eval_samples = parse_num(key, v)?,
            "eval.k" => self.eval_k = parse_num(key, v)?,
            "eval.emd_cap" => self.emd_cap = parse_num(key, v)?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    fn get(&self, key: &str) -> String {
        match key {
            "seed" => self.seed.to_string(),
            "environment" => enum_text(&self.environment).into(),
            "method" => self.method.name().into(),
            "output_dir" => self.output_dir.clone(),
            "data.n" => self.data_n.to_string(),
            "data.holdout" => self.data_holdout.to_string(),
            "data.p_right" => self.p_right.to_string(),
            "model.architecture" => enum_text(&self.architecture).into(),
            "model.hidden_width" => self.hidden_width.to_string(),
            "model.hidden_layers" => self.hidden_layers.to_string(),
            "model.embed_dim" => self.embed_dim.to_string(),
            "model.time_embed_dim" => self.time_embed_dim.to_string(),
            "diffusion.steps" => self.steps.to_string(),
            "diffusion.beta_min" => self.beta_min.to_string(),
            "diffusion.beta_max" => self.beta_max.to_string(),
            "diffusion.sigma" => enum_text(&self.sigma).into(),
            "sampler.extra_steps" => self.extra_steps.to_string(),
            "sampler.kde_samples" => self.kde_samples.to_string(),
            "sampler.kde_width" => self.kde_width.to_string(),
            "guidance.weight" => self.guidance.weight.to_string(),
            "guidance.dropout" => self.guidance.dropout.to_string(),
            "train.epochs" => self.train.epochs.to_string(),
            "train.batch_size" => self.train.batch_size.to_string(),
            "train.lr" => self.train.lr.to_string(),
            "train.lr_schedule" => enum_text(&self.train.lr_schedule).into(),
            "baseline.bins" => self.bins.to_string(),
            "baseline.clusters" => self.clusters.to_string(),
            "baseline.kmeans_iters" => self.kmeans_iters.to_string(),
            "baseline.residual_weight" => self.residual_weight.to_string(),
            "eval.samples" => self.eval_samples.to_string(),
            "eval.k" => self.eval_k.to_string(),
            "eval.emd_cap" => self.emd_cap.to_string(),
            _ => unreachable!("key table and getters agree"),
        }
    }

    /// Builds a config from flat `key -> value` pairs. `environment` is
    /// required; every other key falls back to the environment's defaults.
    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        for k in pairs.keys() {
            if scope_of(k).is_none() {
                return Err(Error::config(k.as_str(), "unknown key"));
            }
        }
        let env: Environment = match pairs.get("environment") {
            Some(v) => parse_enum("environment", v)?,
            None => return Err(Error::config("environment", "required (claw or gridworld)")),
        };
        let method: Method = match pairs.get("method") {
            Some(v) => parse_enum("method", v)?,
            None => Method::DiffusionBc,
        };
        let mut cfg = Self::defaults(env, method);
        for (k, v) in pairs {
            let scope = scope_of(k).expect("checked above");
            if !cfg.applies(scope) {
                return Err(Error::config(
                    k.as_str(),
                    format!("not applicable to method {} on {}", method.name(), enum_text(&env)),
                ));
            }
            cfg.set(k, v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Accepts a JSON object (flat dotted keys or nested) or `key=value` lines.
    pub fn parse_text(text: &str) -> Result<BTreeMap<String, String>> {
        let trimmed = text.trim_start();
        if trimmed.starts_with('{') {
            let v: serde_json::Value =
                serde_json::from_str(trimmed).map_err(|e| Error::config("<json>", e.to_string()))?;
            let mut out = BTreeMap::new();
            flatten_json("", &v, &mut out)?;
            return Ok(out);
        }
        let mut out = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}", i + 1), "expected key=value"))?;
            let k = k.trim().to_owned();
            if out.insert(k.clone(), v.trim().to_owned()).is_some() {
                return Err(Error::config(k, "duplicate key"));
            }
        }
        Ok(out)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_pairs(&Self::parse_text(text)?)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("data.n", self.data_n),
            ("model.hidden_width", self.hidden_width),
            ("model.hidden_layers", self.hidden_layers),
            ("train.batch_size", self.train.batch_size),
            ("eval.k", self.eval_k),
            ("eval.emd_cap", self.emd_cap),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::config(k, "must be positive"));
            }
        }
        if !(self.train.lr.is_finite() && self.train.lr > 0.0) {
            return Err(Error::config("train.lr", "must be positive"));
        }
        if self.environment == Environment::Gridworld {
            GridWorldSpec { p_right: self.p_right }.validate()?;
        }
        if self.method.is_diffusion() {
            self.denoiser_spec().validate()?;
            self.schedule()?;
            self.sampler().validate()?;
            self.guidance.validate()?;
        } else {
            if self.method == Method::Discretised && self.bins == 0 {
                return Err(Error::config("baseline.bins", "must be positive"));
            }
            if matches!(self.method, Method::Kmeans | Method::KmeansResidual) && self.clusters == 0 {
                return Err(Error::config("baseline.clusters", "must be positive"));
            }
            if !(self.residual_weight.is_finite() && self.residual_weight >= 0.0) {
                return Err(Error::config("baseline.residual_weight", "must be >= 0"));
            }
        }
        Ok(())
    }

    pub fn environment_name(&self) -> &'static str {
        enum_text(&self.environment)
    }

    pub fn obs_dim(&self) -> usize {
        match self.environment {
            Environment::Claw => CLAW_OBS_DIM,
            Environment::Gridworld => GRID_OBS_DIM,
        }
    }

    pub fn action_dim(&self) -> usize {
        match self.environment {
            Environment::Claw => 2,
            Environment::Gridworld => GRID_ACTION_DIM,
        }
    }

    pub fn denoiser_spec(&self) -> DenoiserSpec {
        DenoiserSpec {
            architecture: self.architecture,
            obs_dim: self.obs_dim(),
            action_dim: self.action_dim(),
            hidden_width: self.hidden_width,
            hidden_layers: self.hidden_layers,
            embed_dim: self.embed_dim,
            time_embed_dim: self.time_embed_dim,
            steps: self.steps,
        }
    }

    pub fn schedule(&self) -> Result<VarianceSchedule> {
        VarianceSchedule::linear_with_sigma(self.steps, self.beta_min, self.beta_max, self.sigma)
    }

    /// Sampler settings for this method; guidance is only engaged for `w > 0`.
    pub fn sampler(&self) -> SamplerConfig {
        let scheme = match self.method {
            Method::DiffusionX => Scheme::DiffusionX,
            Method::DiffusionKde => Scheme::DiffusionKde,
            _ => Scheme::DiffusionBc,
        };
        SamplerConfig {
            scheme,
            extra_steps: if scheme == Scheme::DiffusionX { self.extra_steps } else { 0 },
            kde_samples: self.kde_samples,
            kde_width: self.kde_width,
            guidance: (self.guidance.weight > 0.0).then_some(self.guidance.weight),
        }
    }

    pub fn baseline(&self) -> BaselineConfig {
        BaselineConfig {
            hidden_width: self.hidden_width,
            hidden_layers: self.hidden_layers,
            bins: self.bins,
            clusters: self.clusters,
            kmeans_iters: self.kmeans_iters,
            residual_weight: self.residual_weight,
            train: self.train,
        }
    }

    /// Keys that apply to this run, in table order.
    pub fn keys(&self) -> Vec<&'static str> {
        KEYS.iter()
            .filter(|(_, s)| self.applies(*s))
            .map(|&(k, _)| k)
            .collect()
    }

    /// Canonical `key=value` text. The output directory is left out: it says
    /// where a run lives, not what it computes, so it must not change the hash.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for k in self.keys().into_iter().filter(|&k| k != "output_dir") {
            let _ = writeln!(s, "{k}={}", self.get(k));
        }
        s
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.to_text().as_bytes())
    }
}

fn flatten_json(prefix: &str, v: &serde_json::Value, out: &mut BTreeMap<String, String>) -> Result<()> {
    use serde_json::Value;
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten_json(&key, child, out)?;
            }
        }
        Value::String(s) => {
            out.insert(prefix.to_owned(), s.clone());
        }
        Value::Number(n) => {
            out.insert(prefix.to_owned(), n.to_string());
        }
        Value::Bool(b) => {
            out.insert(prefix.to_owned(), b.to_string());
        }
        Value::Null | Value::Array(_) => {
            return Err(Error::config(prefix, "expected a scalar value"));
        }
    }
    Ok(())
}
