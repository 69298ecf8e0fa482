#![allow(dead_code)]

use jumpctl::channels::{ChannelConfig, MarkovChannel};
use jumpctl::filter_care::find_initial_detectable_gain;
use jumpctl::msops::{BlockCollection, BranchMatrices};
use jumpctl::MjlsModel;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn s1(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| scale * normal(rng))
}

pub fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let f = random_matrix(rng, n, n, 1.0);
    &f * f.transpose()
}

pub fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let f = random_matrix(rng, n, n, 1.0);
    (&f + f.transpose()) * 0.5
}

/// Row-stochastic matrix with every entry positive.
pub fn random_channel(rng: &mut ChaCha8Rng, modes: usize, min_delivery: f64) -> MarkovChannel {
    let tpm = (0..modes)
        .map(|_| {
            let row: Vec<f64> = (0..modes).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = row.iter().sum();
            row.iter().map(|v| v / s).collect()
        })
        .collect();
    let delivery_prob = (0..modes)
        .map(|_| rng.random_range(min_delivery..1.0))
        .collect();
    MarkovChannel::from_config(&ChannelConfig { tpm, delivery_prob }).unwrap()
}

pub fn channel(tpm: &[&[f64]], delivery: &[f64]) -> MarkovChannel {
    MarkovChannel::from_config(&ChannelConfig {
        tpm: tpm.iter().map(|r| r.to_vec()).collect(),
        delivery_prob: delivery.to_vec(),
    })
    .unwrap()
}

/// Model with `G = [I 0]`, `H = [0 I]`, `C = [I; 0]`, `D = [0; I]`.
pub fn model_from(
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    l: DMatrix<f64>,
    noise_scale: f64,
) -> MjlsModel {
    let (nx, nu, ny) = (a.nrows(), b.ncols(), l.nrows());
    let mut g = DMatrix::zeros(nx, nx + ny);
    g.view_mut((0, 0), (nx, nx)).fill_with_identity();
    let mut h = DMatrix::zeros(ny, nx + ny);
    h.view_mut((0, nx), (ny, ny)).fill_with_identity();
    let mut c = DMatrix::zeros(nx + nu, nx);
    c.view_mut((0, 0), (nx, nx)).fill_with_identity();
    let mut d = DMatrix::zeros(nx + nu, nu);
    d.view_mut((nx, 0), (nu, nu)).fill_with_identity();
    MjlsModel::new(a, b, g, c, d, l, h, noise_scale).unwrap()
}

pub fn scalar_model(a: f64, b: f64, l: f64, noise_scale: f64) -> MjlsModel {
    model_from(s1(a), s1(b), s1(l), noise_scale)
}

/// Random model with `n_x ≤ 3` and a sensing channel with `I ≤ 3` modes,
/// redrawn until a mean-square detecting gain exists.
pub fn random_detectable(rng: &mut ChaCha8Rng) -> (MjlsModel, MarkovChannel) {
    loop {
        let nx = rng.random_range(1..=3);
        let ny = rng.random_range(1..=2.min(nx));
        let modes = rng.random_range(1..=3);
        let a = random_matrix(rng, nx, nx, 0.7);
        let l = random_matrix(rng, ny, nx, 1.0);
        let b = random_matrix(rng, nx, 1, 1.0);
        let m = model_from(a, b, l, rng.random_range(0.5..2.0));
        let ch = random_channel(rng, modes, 0.4);
        if find_initial_detectable_gain(&m, &ch).is_ok() {
            return (m, ch);
        }
    }
}

pub fn random_collection(
    rng: &mut ChaCha8Rng,
    modes: usize,
    n: usize,
    psd: bool,
) -> BlockCollection {
    BlockCollection::from_fn(modes, |_| {
        if psd {
            random_psd(rng, n)
        } else {
            random_symmetric(rng, n)
        }
    })
    .unwrap()
}

pub fn random_branches(rng: &mut ChaCha8Rng, modes: usize, n: usize) -> BranchMatrices {
    BranchMatrices::new(
        (0..modes).map(|_| random_matrix(rng, n, n, 0.6)).collect(),
        (0..modes).map(|_| random_matrix(rng, n, n, 0.6)).collect(),
    )
    .unwrap()
}
