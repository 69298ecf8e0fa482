#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use jumpctl::channels::ChannelConfig;
use jumpctl::model::ModelConfig;
use jumpctl_cli::config::{InitialConfig, ModeSpec, RunConfig, SimConfig, SolverConfig};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_jumpctl"))
}

pub fn run(args: &[&str]) -> Output {
    bin()
        .args(args)
        .env_remove("JUMPCTL_THREADS")
        .output()
        .expect("binary runs")
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

pub fn write_config(dir: &Path, name: &str, cfg: &RunConfig) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

pub fn bernoulli(p: f64) -> ChannelConfig {
    ChannelConfig {
        tpm: vec![vec![1.0]],
        delivery_prob: vec![p],
    }
}

/// `x' = a x + ν b u + w_1`, `y = γ(l x + w_2)`, `z = (x, ν u)`.
pub fn scalar_model(a: f64, b: f64, l: f64, noise_scale: f64) -> ModelConfig {
    ModelConfig {
        a: vec![vec![a]],
        b: vec![vec![b]],
        g: vec![vec![1.0, 0.0]],
        c: Some(vec![vec![1.0], vec![0.0]]),
        qc: None,
        d: Some(vec![vec![0.0], vec![1.0]]),
        rc: None,
        l: vec![vec![l]],
        h: vec![vec![0.0, 1.0]],
        noise_scale,
    }
}

pub fn run_config(model: ModelConfig, act: ChannelConfig, sens: ChannelConfig) -> RunConfig {
    RunConfig {
        model,
        actuation_channel: act,
        sensing_channel: sens,
        initial: InitialConfig {
            x0: Some(vec![1.0; 1]),
            xhat0: Some(vec![0.0; 1]),
            theta0: ModeSpec::default(),
            eta0: ModeSpec::default(),
        },
        solver: SolverConfig::default(),
        sim: SimConfig {
            steps: 50,
            trials: 1,
            seed: 7,
            noise_on: true,
        },
    }
}

/// Scalar instance whose control and filter Riccati equations are dual.
pub fn dual_scalar() -> RunConfig {
    run_config(
        scalar_model(0.5, 1.0, 1.0, 1.0),
        bernoulli(1.0),
        bernoulli(1.0),
    )
}

/// Two-mode scalar instance with lossy links on both sides.
pub fn two_mode_scalar() -> RunConfig {
    let ch = ChannelConfig {
        tpm: vec![vec![0.7, 0.3], vec![0.4, 0.6]],
        delivery_prob: vec![0.9, 0.4],
    };
    run_config(scalar_model(1.1, 1.0, 1.0, 0.5), ch.clone(), ch)
}
