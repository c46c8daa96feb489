//! Orchestration behind each subcommand. Every function here is pure given
//! its config: all randomness comes from named substreams of `seed`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::config::{Environment, Method, RunConfig};
use crate::baselines::{sample_baseline, train_baseline};
use crate::checkpoint::Policy;
use crate::envs::{
    decode_move, default_claw_scenes, generate_claw_dataset, generate_gridworld_dataset, gridworld_exact_posteriors,
    DemoDataset, GridWorldSpec, Move,
};
use crate::error::{Error, Result};
use crate::io::{sha256_hex, write_atomic};
use crate::metrics::{
    density_coverage, emd_capped, in_distribution_rate, occupancy_entropy, region_occupancy, total_variation,
    EmpiricalDistribution, MetricReport,
};
use crate::rng::SeedTree;
use crate::samplers::{DiffusionPolicy, SamplerConfig};

pub const TRAIN_DATA: &str = "train.dbc";
pub const HOLDOUT_DATA: &str = "holdout.dbc";
pub const CHECKPOINT: &str = "checkpoint.dbc";
pub const LOSS_CURVE: &str = "loss.csv";
pub const SAMPLES: &str = "samples.jsonl";
pub const METRICS_JSON: &str = "metrics.json";
pub const METRICS_CSV: &str = "metrics.csv";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const MANIFEST: &str = "manifest.json";
pub const CONFIG_TEXT: &str = "config.txt";

/// Seed for the point subsampling inside `emd`; fixed so metrics never depend
/// on run order.
pub const EMD_SUBSAMPLE_SEED: u64 = 0x5eed_0e3d;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

/// Record of everything a run directory contains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub version: String,
    pub lr_schedule: String,
    pub artifacts: BTreeMap<String, Artifact>,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
}

impl RunManifest {
    fn new(cfg: &RunConfig) -> Self {
        Self {
            config_hash: cfg.hash(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            lr_schedule: format!("{:?}", cfg.train.lr_schedule).to_lowercase(),
            artifacts: BTreeMap::new(),
            timings: BTreeMap::new(),
        }
    }

    /// Loads the directory's manifest, starting fresh when absent or when it
    /// belongs to a different config.
    pub fn open(cfg: &RunConfig) -> Self {
        let path = Path::new(&cfg.output_dir).join(MANIFEST);
        std::fs::read(&path)
            .ok()
            .and_then(|b| serde_json::from_slice::<RunManifest>(&b).ok())
            .filter(|m| m.config_hash == cfg.hash())
            .unwrap_or_else(|| Self::new(cfg))
    }

    fn record(&mut self, name: &str, path: &Path, bytes: &[u8]) {
        self.artifacts.insert(
            name.to_owned(),
            Artifact {
                path: path.display().to_string(),
                sha256: sha256_hex(bytes),
            },
        );
    }

    fn save(&self, dir: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serialises");
        text.push('\n');
        write_atomic(&dir.join(MANIFEST), text.as_bytes())
    }
}

/// Writes `bytes` atomically and records it in the manifest.
fn emit(manifest: &mut RunManifest, dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    let path = dir.join(name);
    write_atomic(&path, bytes)?;
    manifest.record(name, &path, bytes);
    Ok(path)
}

fn write_config(manifest: &mut RunManifest, cfg: &RunConfig, dir: &Path) -> Result<()> {
    emit(manifest, dir, CONFIG_TEXT, cfg.to_text().as_bytes()).map(|_| ())
}

/// Training and held-out demonstrations for the configured environment.
pub fn build_datasets(cfg: &RunConfig) -> Result<(DemoDataset, DemoDataset)> {
    let seeds = SeedTree::new(cfg.seed);
    let mut rng = seeds.stream("dataset");
    match cfg.environment {
        Environment::Claw => {
            let all = generate_claw_dataset(&default_claw_scenes(), cfg.data_n + cfg.data_holdout, &mut rng)?;
            all.split_tail(cfg.data_holdout)
        }
        Environment::Gridworld => {
            let spec = GridWorldSpec { p_right: cfg.p_right };
            let all = generate_gridworld_dataset(&spec, cfg.data_n + cfg.data_holdout, &mut rng)?;
            all.split_tail(3 * cfg.data_holdout)
        }
    }
}

/// The distinct observations of the environment, indexed like scene/state ids.
pub fn observation_set(env: Environment) -> Vec<Vec<f64>> {
    let dim = match env {
        Environment::Claw => crate::envs::CLAW_OBS_DIM,
        Environment::Gridworld => crate::envs::GRID_OBS_DIM,
    };
    (0..dim)
        .map(|i| {
            let mut o = vec![0.0; dim];
            o[i] = 1.0;
            o
        })
        .collect()
}

pub fn cmd_gen_data(cfg: &RunConfig) -> Result<RunManifest> {
    let dir = PathBuf::from(&cfg.output_dir);
    let mut manifest = RunManifest::open(cfg);
    let t = Instant::now();
    let (train, holdout) = build_datasets(cfg)?;
    write_config(&mut manifest, cfg, &dir)?;
    emit(&mut manifest, &dir, TRAIN_DATA, &train.to_bytes())?;
    emit(&mut manifest, &dir, HOLDOUT_DATA, &holdout.to_bytes())?;
    manifest.timings.insert("gen_data".into(), t.elapsed().as_secs_f64());
    manifest.save(&dir)?;
    Ok(manifest)
}

/// Trains the configured method on `data`; returns the policy and loss curve.
pub fn train_policy(cfg: &RunConfig, data: &DemoDataset) -> Result<(Policy, Vec<f64>)> {
    let seeds = SeedTree::new(cfg.seed).child("model");
    if let Some(kind) = cfg.method.baseline_kind() {
        let (model, curve) = train_baseline(kind, data, &cfg.baseline(), &seeds)?;
        return Ok((Policy::Baseline(model), curve));
    }
    let (policy, curve) = DiffusionPolicy::fit(
        data,
        cfg.denoiser_spec(),
        cfg.schedule()?,
        cfg.guidance.dropout,
        &cfg.train,
        &seeds,
    )?;
    Ok((
        Policy::Diffusion {
            policy,
            dropout: cfg.guidance.dropout,
        },
        curve,
    ))
}

fn loss_csv(curve: &[f64]) -> String {
    let mut s = String::from("epoch,loss\n");
    for (i, l) in curve.iter().enumerate() {
        let _ = writeln!(s, "{},{l}", i + 1);
    }
    s
}

pub fn cmd_train(cfg: &RunConfig) -> Result<RunManifest> {
    let dir = PathBuf::from(&cfg.output_dir);
    let mut manifest = RunManifest::open(cfg);
    write_config(&mut manifest, cfg, &dir)?;
    let t = Instant::now();
    let (train, holdout) = build_datasets(cfg)?;
    emit(&mut manifest, &dir, TRAIN_DATA, &train.to_bytes())?;
    emit(&mut manifest, &dir, HOLDOUT_DATA, &holdout.to_bytes())?;
    manifest.timings.insert("gen_data".into(), t.elapsed().as_secs_f64());
    let t = Instant::now();
    let (policy, curve) = train_policy(cfg, &train)?;
    manifest.timings.insert("train".into(), t.elapsed().as_secs_f64());
    emit(&mut manifest, &dir, CHECKPOINT, &policy.to_bytes())?;
    emit(&mut manifest, &dir, LOSS_CURVE, loss_csv(&curve).as_bytes())?;
    manifest.save(&dir)?;
    Ok(manifest)
}

/// Actions paired with the index of the observation that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub obs_ids: Vec<usize>,
    pub actions: Array2<f64>,
}

#[derive(Serialize, Deserialize)]
struct SampleLine {
    obs: usize,
    action: Vec<f64>,
}

impl SampleSet {
    pub fn from_dataset(data: &DemoDataset) -> Self {
        Self {
            obs_ids: data.scene_ids(),
            actions: data.actions().to_owned(),
        }
    }

    pub fn len(&self) -> usize {
        self.obs_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs_ids.is_empty()
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for (&o, a) in self.obs_ids.iter().zip(self.actions.rows()) {
            let line = SampleLine {
                obs: o,
                action: a.to_vec(),
            };
            s.push_str(&serde_json::to_string(&line).expect("sample serialises"));
            s.push('\n');
        }
        s
    }

    pub fn from_jsonl(text: &[u8], path: &Path, action_dim: usize) -> Result<Self> {
        let mut obs_ids = Vec::new();
        let mut flat = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let s: SampleLine =
                serde_json::from_str(&line).map_err(|e| Error::corrupt(path, format!("line {}: {e}", i + 1)))?;
            if s.action.len() != action_dim {
                return Err(Error::corrupt(path, format!("line {}: expected {action_dim} action values", i + 1)));
            }
            obs_ids.push(s.obs);
            flat.extend(s.action);
        }
        let actions = Array2::from_shape_vec((obs_ids.len(), action_dim), flat).expect("row count matches");
        Ok(Self { obs_ids, actions })
    }

    /// Reads either a JSON-lines sample file or a binary dataset file.
    pub fn load(path: &Path, action_dim: usize) -> Result<Self> {
        let bytes = crate::io::read(path)?;
        if bytes.starts_with(b"DBCDATA\0") {
            let data = DemoDataset::from_bytes(&bytes, path)?;
            if data.action_dim() != action_dim {
                return Err(Error::Shape(format!("dataset has {} action dims", data.action_dim())));
            }
            return Ok(Self::from_dataset(&data));
        }
        Self::from_jsonl(&bytes, path, action_dim)
    }

    fn rows_for(&self, obs: usize) -> Array2<f64> {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.obs_ids[i] == obs).collect();
        self.actions.select(Axis(0), &idx)
    }
}

/// Draws `n` actions for one observation.
pub fn sample_policy(
    policy: &Policy,
    sampler: &SamplerConfig,
    obs: &[f64],
    n: usize,
    rng: &mut crate::rng::Rng,
) -> Result<Array2<f64>> {
    match policy {
        Policy::Diffusion { policy, .. } => policy.sample_n(obs, sampler, n, rng),
        Policy::Baseline(m) => {
            let mut out = Array2::zeros((n, m.action_dim()));
            for mut row in out.rows_mut() {
                let a = sample_baseline(m, obs, rng)?;
                row.assign(&ndarray::ArrayView1::from(&a));
            }
            Ok(out)
        }
    }
}

fn check_family(cfg: &RunConfig, policy: &Policy) -> Result<()> {
    let diffusion = matches!(policy, Policy::Diffusion { .. });
    if diffusion != cfg.method.is_diffusion() {
        return Err(Error::config(
            "method",
            format!("checkpoint family does not match method {}", cfg.method.name()),
        ));
    }
    if let Policy::Baseline(m) = policy {
        if cfg.method.baseline_kind() != Some(m.kind) {
            return Err(Error::config("method", format!("checkpoint holds a {:?} baseline", m.kind)));
        }
    }
    if policy.normalizer().dim() != cfg.action_dim() {
        return Err(Error::config("environment", "checkpoint action width does not match the environment"));
    }
    Ok(())
}

/// `n` samples for every distinct observation, observation-major.
pub fn draw_samples(cfg: &RunConfig, policy: &Policy, sampler: &SamplerConfig, n: usize) -> Result<SampleSet> {
    let seeds = SeedTree::new(cfg.seed);
    let observations = observation_set(cfg.environment);
    let mut obs_ids = Vec::with_capacity(n * observations.len());
    let mut blocks = Vec::with_capacity(observations.len());
    for (i, o) in observations.iter().enumerate() {
        let mut rng = seeds.indexed("sample", i as u64);
        blocks.push(sample_policy(policy, sampler, o, n, &mut rng)?);
        obs_ids.extend(std::iter::repeat_n(i, n));
    }
    let views: Vec<ArrayView2<f64>> = blocks.iter().map(|b| b.view()).collect();
    let actions = ndarray::concatenate(Axis(0), &views).map_err(|e| Error::Shape(e.to_string()))?;
    Ok(SampleSet { obs_ids, actions })
}

pub fn cmd_sample(cfg: &RunConfig, checkpoint: &Path, n: usize) -> Result<PathBuf> {
    let dir = PathBuf::from(&cfg.output_dir);
    let mut manifest = RunManifest::open(cfg);
    let t = Instant::now();
    let policy = Policy::load(checkpoint)?;
    check_family(cfg, &policy)?;
    let set = draw_samples(cfg, &policy, &cfg.sampler(), n)?;
    let path = emit(&mut manifest, &dir, SAMPLES, set.to_jsonl().as_bytes())?;
    manifest.timings.insert("sample".into(), t.elapsed().as_secs_f64());
    manifest.save(&dir)?;
    Ok(path)
}

fn cloud(rows: Array2<f64>) -> Result<EmpiricalDistribution> {
    EmpiricalDistribution::uniform(rows)
}

/// Full metric set of `samples` against `reference`.
pub fn evaluate(cfg: &RunConfig, samples: &SampleSet, reference: &SampleSet) -> Result<MetricReport> {
    let run = &cfg.hash()[..12];
    let method = cfg.method.name();
    let mut report = MetricReport::default();
    let observations = observation_set(cfg.environment).len();
    let mut emds = Vec::new();
    let mut dens = Vec::new();
    let mut covs = Vec::new();
    let mut zero_radii = 0usize;
    for o in 0..observations {
        let s = samples.rows_for(o);
        let r = reference.rows_for(o);
        if s.nrows() == 0 || r.nrows() == 0 {
            continue;
        }
        let e = emd_capped(&cloud(s.clone())?, &cloud(r.clone())?, cfg.emd_cap, EMD_SUBSAMPLE_SEED)?;
        report.push(run, method, format!("emd.obs{o}"), e);
        emds.push(e);
        if r.nrows() > 1 {
            let k = cfg.eval_k.min(r.nrows() - 1);
            let dc = density_coverage(r.view(), s.view(), k)?;
            report.push(run, method, format!("density.obs{o}"), dc.density);
            report.push(run, method, format!("coverage.obs{o}"), dc.coverage);
            dens.push(dc.density);
            covs.push(dc.coverage);
            zero_radii += dc.zero_radius_count;
        }
    }
    let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
    report.push(run, method, "emd", mean(&emds));
    report.push(run, method, "density", mean(&dens));
    report.push(run, method, "coverage", mean(&covs));
    report.push(run, method, "zero_radius_count", zero_radii as f64);

    match cfg.environment {
        Environment::Claw => {
            let scenes = default_claw_scenes();
            if !samples.is_empty() {
                let rate = in_distribution_rate(&scenes, &samples.obs_ids, samples.actions.view())?;
                report.push(run, method, "in_distribution", rate);
            }
            for (i, scene) in scenes.iter().enumerate() {
                let s = samples.rows_for(i);
                if s.nrows() == 0 {
                    continue;
                }
                let ids = vec![i; s.nrows()];
                report.push(run, method, format!("in_distribution.obs{i}"), in_distribution_rate(&scenes, &ids, s.view())?);
                for (r, frac) in region_occupancy(scene, s.view())?.into_iter().enumerate() {
                    let name = if r == scene.regions.len() { "outside".to_owned() } else { format!("region{r}") };
                    report.push(run, method, format!("occupancy.obs{i}.{name}"), frac);
                }
            }
        }
        Environment::Gridworld => {
            let mut tvs = Vec::new();
            for o in 0..observations {
                let s = move_histogram(samples.rows_for(o).view());
                let r = move_histogram(reference.rows_for(o).view());
                if let (Some(s), Some(r)) = (s, r) {
                    let tv = total_variation(&s, &r)?;
                    report.push(run, method, format!("move_tv.obs{o}"), tv);
                    tvs.push(tv);
                    if o == 1 {
                        report.push(run, method, "right_turn_freq.obs1", s[2]);
                        report.push(run, method, "reference_right_turn_freq.obs1", r[2]);
                    }
                }
            }
            report.push(run, method, "move_tv", mean(&tvs));
        }
    }
    Ok(report)
}

/// Frequencies of decoded left/straight/right moves.
pub fn move_histogram(actions: ArrayView2<f64>) -> Option<Vec<f64>> {
    if actions.nrows() == 0 {
        return None;
    }
    let mut h = vec![0.0; 3];
    for a in actions.rows() {
        let m = decode_move(a.as_slice()?);
        h[Move::ALL.iter().position(|&x| x == m).expect("known move")] += 1.0;
    }
    let n = actions.nrows() as f64;
    Some(h.into_iter().map(|c| c / n).collect())
}

pub fn cmd_eval(cfg: &RunConfig, samples: &Path, reference: Option<&Path>) -> Result<MetricReport> {
    let dir = PathBuf::from(&cfg.output_dir);
    let mut manifest = RunManifest::open(cfg);
    let t = Instant::now();
    let set = SampleSet::load(samples, cfg.action_dim())?;
    let reference = match reference {
        Some(p) => SampleSet::load(p, cfg.action_dim())?,
        None => SampleSet::from_dataset(&build_datasets(cfg)?.1),
    };
    let report = evaluate(cfg, &set, &reference)?;
    emit(&mut manifest, &dir, METRICS_JSON, report.to_json().as_bytes())?;
    emit(&mut manifest, &dir, METRICS_CSV, report.to_csv().as_bytes())?;
    manifest.timings.insert("eval".into(), t.elapsed().as_secs_f64());
    manifest.save(&dir)?;
    Ok(report)
}

/// One row of a guidance sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub weight: f64,
    pub obs: usize,
    pub statistic: String,
    pub value: f64,
}

/// Samples every observation under each guidance weight and summarises the
/// result: right-turn frequency for the grid-world, region occupancy and its
/// entropy for the claw. Returns `None` when the checkpoint was trained
/// without conditioning dropout.
pub fn guidance_sweep(cfg: &RunConfig, policy: &Policy, weights: &[f64]) -> Result<Option<Vec<SweepRow>>> {
    let Policy::Diffusion { dropout, .. } = policy else {
        return Err(Error::config("method", "guidance needs a diffusion checkpoint"));
    };
    if *dropout <= 0.0 {
        return Ok(None);
    }
    let mut rows = Vec::new();
    let scenes = default_claw_scenes();
    for &w in weights {
        let mut sampler = cfg.sampler();
        sampler.guidance = Some(w);
        sampler.validate()?;
        let set = draw_samples(cfg, policy, &sampler, cfg.eval_samples)?;
        for o in 0..observation_set(cfg.environment).len() {
            let acts = set.rows_for(o);
            let mut push = |statistic: String, value: f64| {
                rows.push(SweepRow {
                    weight: w,
                    obs: o,
                    statistic,
                    value,
                })
            };
            match cfg.environment {
                Environment::Gridworld => {
                    if let Some(h) = move_histogram(acts.view()) {
                        push("right_turn_freq".into(), h[2]);
                    }
                }
                Environment::Claw => {
                    let occ = region_occupancy(&scenes[o], acts.view())?;
                    for (r, v) in occ.iter().enumerate() {
                        let name = if r == scenes[o].regions.len() { "outside".into() } else { format!("region{r}") };
                        push(format!("occupancy.{name}"), *v);
                    }
                    push("occupancy_entropy".into(), occupancy_entropy(&occ));
                }
            }
        }
    }
    Ok(Some(rows))
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("weight,obs,statistic,value\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.weight, r.obs, r.statistic, r.value);
    }
    s
}

pub fn cmd_sweep_guidance(cfg: &RunConfig, checkpoint: &Path, weights: &[f64]) -> Result<Option<PathBuf>> {
    let dir = PathBuf::from(&cfg.output_dir);
    let policy = Policy::load(checkpoint)?;
    check_family(cfg, &policy)?;
    let t = Instant::now();
    let Some(rows) = guidance_sweep(cfg, &policy, weights)? else {
        return Ok(None);
    };
    let mut manifest = RunManifest::open(cfg);
    let path = emit(&mut manifest, &dir, SWEEP_CSV, sweep_csv(&rows).as_bytes())?;
    manifest.timings.insert("sweep_guidance".into(), t.elapsed().as_secs_f64());
    manifest.save(&dir)?;
    Ok(Some(path))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Figure {
    #[serde(rename = "fig1")]
    Fig1,
    #[serde(rename = "fig3")]
    Fig3,
    #[serde(rename = "fig4")]
    Fig4,
    #[serde(rename = "appendixE")]
    AppendixE,
}

impl std::str::FromStr for Figure {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_owned()))
            .map_err(|_| Error::config("figure", format!("unknown figure `{s}` (fig1, fig3, fig4, appendixE)")))
    }
}

fn cloud_csv(out: &mut String, method: &str, set: &SampleSet) {
    for (&o, a) in set.obs_ids.iter().zip(set.actions.rows()) {
        let _ = write!(out, "{method},{o}");
        for v in a {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
}

/// Regenerates the data behind a figure into `cfg.output_dir`. `cfg` supplies
/// scale knobs (epochs, widths, sample counts); method and environment are
/// set per figure.
pub fn cmd_reproduce(base: &RunConfig, figure: Figure) -> Result<RunManifest> {
    let dir = PathBuf::from(&base.output_dir);
    let mut manifest = RunManifest::open(base);
    write_config(&mut manifest, base, &dir)?;
    let t = Instant::now();
    let with_method = |m: Method| {
        let mut c = base.clone();
        c.method = m;
        c.environment = Environment::Claw;
        if m == Method::DiffusionX && c.extra_steps == 0 {
            c.extra_steps = 8;
        }
        c
    };
    match figure {
        Figure::Fig1 => {
            let mut csv = String::from("method,scene,x,y\n");
            for m in Method::ALL {
                let cfg = with_method(m);
                let (train, _) = build_datasets(&cfg)?;
                let (policy, _) = train_policy(&cfg, &train)?;
                let set = draw_samples(&cfg, &policy, &cfg.sampler(), cfg.eval_samples)?;
                cloud_csv(&mut csv, m.name(), &set);
            }
            emit(&mut manifest, &dir, "fig1.csv", csv.as_bytes())?;
        }
        Figure::Fig3 => {
            let cfg = with_method(Method::DiffusionBc);
            let (train, _) = build_datasets(&cfg)?;
            let (policy, _) = train_policy(&cfg, &train)?;
            let rows = guidance_sweep(&cfg, &policy, &[0.0, 1.0, 2.0, 4.0, 8.0])?
                .ok_or_else(|| Error::config("guidance.dropout", "must be positive for a guidance sweep"))?;
            emit(&mut manifest, &dir, "fig3.csv", sweep_csv(&rows).as_bytes())?;
        }
        Figure::Fig4 => {
            let cfg = with_method(Method::DiffusionBc);
            let (train, _) = build_datasets(&cfg)?;
            let (policy, _) = train_policy(&cfg, &train)?;
            let mut csv = String::from("method,scene,x,y\n");
            for m in [Method::DiffusionBc, Method::DiffusionX, Method::DiffusionKde] {
                let sampler = with_method(m).sampler();
                let set = draw_samples(&cfg, &policy, &sampler, cfg.eval_samples)?;
                cloud_csv(&mut csv, m.name(), &set);
            }
            emit(&mut manifest, &dir, "fig4.csv", csv.as_bytes())?;
        }
        Figure::AppendixE => {
            let p = gridworld_exact_posteriors(&GridWorldSpec { p_right: base.p_right })?;
            let mut csv = String::from("quantity,value\n");
            for (i, v) in p.p_obs.iter().enumerate() {
                let _ = writeln!(csv, "p(o{i}),{v}");
            }
            for (m, v) in Move::ALL.iter().zip(p.p_action) {
                let _ = writeln!(csv, "p(a={m:?}),{v}", m = m);
            }
            for (m, v) in Move::ALL.iter().zip(p.p_o1_given) {
                match v {
                    Some(v) => {
                        let _ = writeln!(csv, "p(o1|a={m:?}),{v}");
                    }
                    None => {
                        let _ = writeln!(csv, "p(o1|a={m:?}),undefined");
                    }
                }
            }
            emit(&mut manifest, &dir, "appendixE.csv", csv.as_bytes())?;
        }
    }
    manifest.timings.insert(format!("reproduce_{figure:?}").to_lowercase(), t.elapsed().as_secs_f64());
    manifest.save(&dir)?;
    Ok(manifest)
}
