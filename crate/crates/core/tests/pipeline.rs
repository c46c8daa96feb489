//! End-to-end runs of the command layer and the binary on tiny configs.

use std::path::Path;
use std::process::Command;

use diffbc::checkpoint::Policy;
use diffbc::cli::{self, RunConfig, SampleSet};
use diffbc::Error;

fn tiny(dir: &Path, extra: &str) -> RunConfig {
    let text = format!(
        "environment=claw\nmethod=diffusion_bc\nseed=3\noutput_dir={}\ndata.n=300\ndata.holdout=70\n\
         model.hidden_width=16\nmodel.hidden_layers=2\nmodel.embed_dim=8\nmodel.time_embed_dim=8\n\
         diffusion.steps=8\ntrain.epochs=2\neval.samples=20\neval.k=3\n{extra}",
        dir.display()
    );
    RunConfig::parse(&text).unwrap()
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

#[test]
fn identical_configs_give_identical_artifacts() {
    let root = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let dir = root.path().join(run);
        let cfg = tiny(&dir, "");
        cli::cmd_train(&cfg).unwrap();
        let samples = cli::cmd_sample(&cfg, &dir.join(cli::CHECKPOINT), cfg.eval_samples).unwrap();
        cli::cmd_eval(&cfg, &samples, None).unwrap();
        outputs.push(dir);
    }
    for name in [
        cli::TRAIN_DATA,
        cli::HOLDOUT_DATA,
        cli::CHECKPOINT,
        cli::LOSS_CURVE,
        cli::SAMPLES,
        cli::METRICS_JSON,
        cli::METRICS_CSV,
        cli::CONFIG_TEXT,
    ] {
        assert_eq!(read(&outputs[0], name), read(&outputs[1], name), "{name} differs");
    }
    let manifest: cli::RunManifest = serde_json::from_slice(&read(&outputs[0], cli::MANIFEST)).unwrap();
    assert_eq!(manifest.artifacts.len(), 8);
    let stored = read(&outputs[0], cli::CONFIG_TEXT);
    assert_eq!(manifest.config_hash, diffbc::io::sha256_hex(&stored));
    let other: cli::RunManifest = serde_json::from_slice(&read(&outputs[1], cli::MANIFEST)).unwrap();
    assert_eq!(manifest.artifacts.values().map(|a| &a.sha256).collect::<Vec<_>>(), other.artifacts.values().map(|a| &a.sha256).collect::<Vec<_>>());
}

#[test]
fn every_method_runs_end_to_end() {
    let root = tempfile::tempdir().unwrap();
    for m in cli::Method::ALL {
        for env in ["claw", "gridworld"] {
            let dir = root.path().join(format!("{}-{env}", m.name()));
            let extra = format!("method={}\nenvironment={env}\noutput_dir={}", m.name(), dir.display());
            let mut text = tiny(&dir, "").to_text();
            text = text
                .lines()
                .filter(|l| !l.starts_with("method=") && !l.starts_with("environment="))
                .filter(|l| m.is_diffusion() || !(l.starts_with("model.embed") || l.starts_with("model.time") || l.starts_with("diffusion.") || l.starts_with("guidance.") || l.starts_with("model.arch")))
                .collect::<Vec<_>>()
                .join("\n");
            let cfg = RunConfig::parse(&format!("{text}\n{extra}")).unwrap();
            cli::cmd_train(&cfg).unwrap();
            let s = cli::cmd_sample(&cfg, &dir.join(cli::CHECKPOINT), 5).unwrap();
            let report = cli::cmd_eval(&cfg, &s, None).unwrap();
            assert!(report.get("emd").unwrap().is_finite(), "{} {env}", m.name());
        }
    }
}

#[test]
fn zero_samples_write_an_empty_file() {
    let root = tempfile::tempdir().unwrap();
    let cfg = tiny(root.path(), "");
    cli::cmd_train(&cfg).unwrap();
    let path = cli::cmd_sample(&cfg, &root.path().join(cli::CHECKPOINT), 0).unwrap();
    assert!(std::fs::read(&path).unwrap().is_empty());
    assert!(SampleSet::load(&path, 2).unwrap().is_empty());
}

#[test]
fn demos_evaluated_against_themselves() {
    let root = tempfile::tempdir().unwrap();
    let cfg = tiny(root.path(), "");
    cli::cmd_gen_data(&cfg).unwrap();
    let train = root.path().join(cli::TRAIN_DATA);
    let report = cli::cmd_eval(&cfg, &train, Some(&train)).unwrap();
    assert_eq!(report.get("emd"), Some(0.0));
    assert_eq!(report.get("in_distribution"), Some(1.0));
    assert_eq!(report.get("coverage"), Some(1.0));
}

#[test]
fn checkpoint_failures_map_to_io_and_corruption() {
    let root = tempfile::tempdir().unwrap();
    let cfg = tiny(root.path(), "");
    let missing = cli::cmd_sample(&cfg, &root.path().join("nope.dbc"), 1).unwrap_err();
    assert!(matches!(missing, Error::Io { .. }));
    assert_eq!(missing.exit_code(), 3);

    cli::cmd_train(&cfg).unwrap();
    let ckpt = root.path().join(cli::CHECKPOINT);
    let mut bytes = std::fs::read(&ckpt).unwrap();
    let i = bytes.len() - 20;
    bytes[i] ^= 0x40;
    std::fs::write(&ckpt, bytes).unwrap();
    let bad = cli::cmd_sample(&cfg, &ckpt, 1).unwrap_err();
    assert!(matches!(bad, Error::Corrupt { .. }));
}

#[test]
fn method_must_match_checkpoint() {
    let root = tempfile::tempdir().unwrap();
    let cfg = tiny(root.path(), "");
    cli::cmd_train(&cfg).unwrap();
    let mut other = RunConfig::parse(&format!("environment=claw\nmethod=mse\noutput_dir={}", root.path().display())).unwrap();
    other.seed = cfg.seed;
    let e = cli::cmd_sample(&other, &root.path().join(cli::CHECKPOINT), 1).unwrap_err();
    assert!(matches!(e, Error::Config { .. }));
}

#[test]
fn guidance_sweep_at_zero_matches_plain_sampling() {
    let root = tempfile::tempdir().unwrap();
    let cfg = tiny(root.path(), "");
    cli::cmd_train(&cfg).unwrap();
    let policy = Policy::load(&root.path().join(cli::CHECKPOINT)).unwrap();
    let rows = cli::guidance_sweep(&cfg, &policy, &[0.0]).unwrap().unwrap();
    let plain = cli::draw_samples(&cfg, &policy, &cfg.sampler(), cfg.eval_samples).unwrap();
    let scenes = diffbc::envs::default_claw_scenes();
    for (o, scene) in scenes.iter().enumerate() {
        let idx: Vec<usize> = (0..plain.len()).filter(|&i| plain.obs_ids[i] == o).collect();
        let acts = plain.actions.select(ndarray::Axis(0), &idx);
        let occ = diffbc::metrics::region_occupancy(scene, acts.view()).unwrap();
        for (r, v) in occ.iter().enumerate() {
            let got: Vec<f64> = rows
                .iter()
                .filter(|row| row.obs == o && row.statistic.starts_with("occupancy.") && !row.statistic.ends_with("entropy"))
                .map(|row| row.value)
                .collect();
            assert_eq!(got[r], *v);
        }
    }
}

#[test]
fn sweep_refuses_without_dropout() {
    let root = tempfile::tempdir().unwrap();
    let cfg = tiny(root.path(), "guidance.dropout=0");
    cli::cmd_train(&cfg).unwrap();
    let out = cli::cmd_sweep_guidance(&cfg, &root.path().join(cli::CHECKPOINT), &[0.0, 1.0]).unwrap();
    assert!(out.is_none());
}

#[test]
fn appendix_table_is_exported() {
    let root = tempfile::tempdir().unwrap();
    let cfg = RunConfig::parse(&format!("environment=claw\noutput_dir={}", root.path().display())).unwrap();
    cli::cmd_reproduce(&cfg, "appendixE".parse().unwrap()).unwrap();
    let text = String::from_utf8(read(root.path(), "appendixE.csv")).unwrap();
    assert!(text.contains("p(o1|a=Right),1\n"));
    assert!(text.contains(&format!("p(o1|a=Straight),{}\n", 0.9 / 2.9)));
    assert!("fig9".parse::<cli::Figure>().is_err());
}

fn bin(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_diffbc")).args(args).output().unwrap()
}

#[test]
fn binary_exit_codes() {
    let root = tempfile::tempdir().unwrap();
    let dir = root.path().to_str().unwrap();
    let cfg_path = root.path().join("run.cfg");
    std::fs::write(&cfg_path, "environment=claw\ntrain.epochz=3\n").unwrap();
    let out = bin(&["train", "--config", cfg_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("train.epochz"));

    let out = bin(&["sample", "--environment", "claw", "--output_dir", dir, "--checkpoint", "/nonexistent/ckpt"]);
    assert_eq!(out.status.code(), Some(3));

    let out = bin(&["train", "--environment", "claw", "--method", "mse", "--guidance.weight", "1"]);
    assert_eq!(out.status.code(), Some(2));

    let out = bin(&[
        "gen-data",
        "--environment",
        "gridworld",
        "--data.n",
        "50",
        "--data.holdout",
        "5",
        "--output_dir",
        dir,
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(root.path().join(cli::TRAIN_DATA).exists());

    let out = bin(&["reproduce", "appendixE", "--output_dir", dir]);
    assert!(out.status.success());
    let out = bin(&["reproduce", "fig9", "--output_dir", dir]);
    assert_eq!(out.status.code(), Some(2));
}
