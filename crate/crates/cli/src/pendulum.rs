//! Inverted pendulum on a cart, linearized about the upright equilibrium and
//! sampled at 10 ms.
//!
//! The channel TPM is a surrogate: only columns 1, 2 and 8 to 12 of the
//! 12-mode matrix are known. Columns 3 to 7 split each row's remaining mass
//! evenly, and column 1 carries `1e-6` instead of zero so the chain stays
//! irreducible. The measurement matrix is `L = I_4`.

use std::f64::consts::PI;

use jumpctl::channels::ChannelConfig;
use jumpctl::model::ModelConfig;

use crate::config::{InitialConfig, ModeSpec, RunConfig, SimConfig, SolverConfig};

pub const NOISE_SCALE: f64 = 0.0002;

/// Per-mode delivery probability, shared by both links.
pub const DELIVERY: [f64; 12] = [
    0.0, 0.02, 0.15, 0.25, 0.35, 0.45, 0.55, 0.65, 0.75, 0.86, 0.99, 1.0,
];

const FIRST_COL: f64 = 1e-6;
const SECOND_COL: f64 = 2e-4;
const MID_COL: f64 = 1e-4;
const ELEVENTH_COL: [f64; 12] = [
    0.0071, 0.0070, 0.0070, 0.0069, 0.0069, 0.0069, 0.0069, 0.0069, 0.0069, 0.0069, 0.0068, 0.0063,
];
const LAST_COL: [f64; 12] = [
    0.9922, 0.9923, 0.9924, 0.9924, 0.9924, 0.9924, 0.9924, 0.9924, 0.9924, 0.9924, 0.9925, 0.9931,
];

pub fn a_matrix() -> Vec<Vec<f64>> {
    vec![
        vec![1.000, 0.010, 0.000, 0.000],
        vec![0.000, 0.998, 0.027, 0.000],
        vec![0.000, 0.000, 1.002, 0.010],
        vec![0.000, -0.005, 0.312, 1.002],
    ]
}

pub fn b_matrix() -> Vec<Vec<f64>> {
    [0.00091, 0.182, 0.0023, 0.474]
        .iter()
        .map(|&b| vec![0.1 * b])
        .collect()
}

pub fn surrogate_tpm() -> Vec<Vec<f64>> {
    (0..12)
        .map(|i| {
            let known = FIRST_COL + SECOND_COL + 3.0 * MID_COL + ELEVENTH_COL[i] + LAST_COL[i];
            let fill = (1.0 - known) / 5.0;
            let mut row = vec![FIRST_COL, SECOND_COL];
            row.extend([fill; 5]);
            row.extend([MID_COL; 3]);
            row.extend([ELEVENTH_COL[i], LAST_COL[i]]);
            let sum: f64 = row.iter().sum();
            row.iter().map(|p| p / sum).collect()
        })
        .collect()
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect())
        .collect()
}

pub fn model_config() -> ModelConfig {
    // w = (w_1, ..., w_6): the first two entries drive the state in pairs,
    // the last four are the measurement noise.
    let g = (0..4)
        .map(|i| (0..6).map(|j| f64::from(u8::from(j == i % 2))).collect())
        .collect();
    let h = (0..4)
        .map(|i| (0..6).map(|j| f64::from(u8::from(j == i + 2))).collect())
        .collect();
    let qc = [1000.0, 0.1, 10000.0, 0.1];
    ModelConfig {
        a: a_matrix(),
        b: b_matrix(),
        g,
        c: None,
        qc: Some(
            (0..4)
                .map(|i| (0..4).map(|j| if i == j { qc[i] } else { 0.0 }).collect())
                .collect(),
        ),
        d: None,
        rc: Some(vec![vec![1.0]]),
        l: identity(4),
        h,
        noise_scale: NOISE_SCALE,
    }
}

pub fn channel_config() -> ChannelConfig {
    ChannelConfig {
        tpm: surrogate_tpm(),
        delivery_prob: DELIVERY.to_vec(),
    }
}

pub fn pendulum_config() -> RunConfig {
    RunConfig {
        model: model_config(),
        actuation_channel: channel_config(),
        sensing_channel: channel_config(),
        initial: InitialConfig {
            x0: Some(vec![0.0, 0.0, PI / 10.0, 0.0]),
            xhat0: Some(vec![1.0, 0.0, 11.0 * PI / 100.0, 0.0]),
            theta0: ModeSpec::default(),
            eta0: ModeSpec::default(),
        },
        solver: SolverConfig::default(),
        sim: SimConfig {
            steps: 500,
            trials: 100,
            seed: 0,
            noise_on: true,
        },
    }
}
