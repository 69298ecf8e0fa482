//! Observer-based output feedback over the two lossy links, its Monte Carlo
//! simulation and the separation check on the augmented closed loop.
//!
//! Timing per step `k` (acknowledged links):
//!
//! 1. the controller knows `θ_{k-1}`, `η_{k-1}` and the outcomes up to `k - 1`
//!    and sends `u_k = F_{θ_{k-1}} x̂_k`;
//! 2. the channels sit in `θ_k`, `η_k` and deliver with probabilities
//!    `ν_{θ_k}`, `γ_{η_k}`;
//! 3. once the acknowledgements arrive the controller forms
//!    `x̂_{k+1} = A x̂_k + ν_k B u_k - M_{η_k}(y_k - γ_k L x̂_k)`.
//!
//! With `ℰ_k = [x_k; e_k]`, `e_k = x_k - x̂_k`, the loop is
//! `ℰ_{k+1} = Γ ℰ_k + Σ w_k` where
//! `Γ = [[A + ν B F_{θ_{k-1}}, -ν B F_{θ_{k-1}}], [0, A + γ M_{η_k} L]]` and
//! `Σ = [G; G + γ M_{η_k} H]`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::channels::MarkovChannel;
use crate::linalg::{self, DENSE_EIG_MAX_DIM};
use crate::model::{plant_step, MjlsModel};
use crate::msops::{self, check_control_gains, check_filter_gains, OperatorKind, OperatorMatrix};
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::{Error, Result};

/// Trials simulated per work unit; the reduction order is fixed by it.
const CHUNK: usize = 64;

/// Controller and augmented-loop matrices for fixed gains `F`, `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopMatrices {
    model: MjlsModel,
    f: Vec<DMatrix<f64>>,
    m: Vec<DMatrix<f64>>,
}

impl ClosedLoopMatrices {
    pub fn build(model: &MjlsModel, f: &[DMatrix<f64>], m: &[DMatrix<f64>]) -> Result<Self> {
        check_control_gains(model, f)?;
        check_filter_gains(model, m)?;
        if f.is_empty() || m.is_empty() {
            return Err(Error::dims("at least one gain per link required"));
        }
        Ok(Self {
            model: model.clone(),
            f: f.to_vec(),
            m: m.to_vec(),
        })
    }

    pub fn control_gains(&self) -> &[DMatrix<f64>] {
        &self.f
    }

    pub fn filter_gains(&self) -> &[DMatrix<f64>] {
        &self.m
    }

    /// `Γ(ν, θ_{k-1}, γ, η_k)`, `2n×2n`.
    pub fn gamma(&self, nu: bool, theta_prev: usize, gamma: bool, eta: usize) -> DMatrix<f64> {
        let a = &self.model.a;
        let bf = if nu {
            &self.model.b * &self.f[theta_prev]
        } else {
            DMatrix::zeros(a.nrows(), a.ncols())
        };
        let err = if gamma {
            a + &self.m[eta] * &self.model.l
        } else {
            a.clone()
        };
        linalg::block2x2(
            &(a + &bf),
            &(-&bf),
            &DMatrix::zeros(a.nrows(), a.ncols()),
            &err,
        )
    }

    /// `Σ(γ, η_k)`, `2n×n_w`.
    pub fn sigma(&self, gamma: bool, eta: usize) -> DMatrix<f64> {
        let g = &self.model.g;
        let lower = if gamma {
            g + &self.m[eta] * &self.model.h
        } else {
            g.clone()
        };
        let mut out = DMatrix::zeros(2 * g.nrows(), g.ncols());
        out.rows_mut(0, g.nrows()).copy_from(g);
        out.rows_mut(g.nrows(), g.nrows()).copy_from(&lower);
        out
    }

    /// Controller state matrix `Â = A + ν B F_{θ_{k-1}} + γ M_η L`.
    pub fn a_hat(&self, nu: bool, theta_prev: usize, gamma: bool, eta: usize) -> DMatrix<f64> {
        let mut out = self.model.a.clone();
        if nu {
            out += &self.model.b * &self.f[theta_prev];
        }
        if gamma {
            out += &self.m[eta] * &self.model.l;
        }
        out
    }

    /// `B̂_η = -M_η`.
    pub fn b_hat(&self, eta: usize) -> DMatrix<f64> {
        -&self.m[eta]
    }

    /// `Ĉ_θ = F_θ`.
    pub fn c_hat(&self, theta_prev: usize) -> &DMatrix<f64> {
        &self.f[theta_prev]
    }
}

/// `x̂_{k+1} = A x̂ + ν B u - M_η (y - γ L x̂)`.
#[allow(clippy::too_many_arguments)]
pub fn observer_step(
    model: &MjlsModel,
    gains: &[DMatrix<f64>],
    xhat: &DVector<f64>,
    y: &DVector<f64>,
    nu: bool,
    gamma: bool,
    eta: usize,
    u: &DVector<f64>,
) -> Result<DVector<f64>> {
    if eta >= gains.len() {
        return Err(Error::IndexOutOfRange {
            index: eta,
            len: gains.len(),
        });
    }
    check_filter_gains(model, gains)?;
    if xhat.len() != model.nx() || y.len() != model.ny() || u.len() != model.nu() {
        return Err(Error::dims("observer step operands do not match the model"));
    }
    let mut next = &model.a * xhat;
    if nu {
        next += &model.b * u;
    }
    let innovation = if gamma {
        y - &model.l * xhat
    } else {
        y.clone()
    };
    Ok(next - &gains[eta] * innovation)
}

/// How the mode at step `-1` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitialMode {
    #[default]
    Stationary,
    /// Zero-based mode.
    Pinned(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub x0: DVector<f64>,
    pub xhat0: DVector<f64>,
    /// Actuation mode at `k = -1`, the one `u_0` is computed from.
    pub theta_init: InitialMode,
    /// Sensing mode at `k = -1`.
    pub eta_init: InitialMode,
    pub steps: usize,
    pub trials: usize,
    pub seed: u64,
    pub noise_on: bool,
    /// Per-step records are kept for trials `0..record_trials`.
    pub record_trials: usize,
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

impl SimOptions {
    pub fn new(
        x0: DVector<f64>,
        xhat0: DVector<f64>,
        steps: usize,
        trials: usize,
        seed: u64,
    ) -> Self {
        Self {
            x0,
            xhat0,
            theta_init: InitialMode::Stationary,
            eta_init: InitialMode::Stationary,
            steps,
            trials,
            seed,
            noise_on: true,
            record_trials: 0,
            threads: None,
        }
    }
}

/// One simulated step of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    pub trial: usize,
    pub theta: usize,
    pub eta: usize,
    pub nu: bool,
    pub gamma: bool,
    pub x: DVector<f64>,
    pub xhat: DVector<f64>,
    pub e: DVector<f64>,
    pub u: DVector<f64>,
    pub y: DVector<f64>,
    pub z: DVector<f64>,
}

/// Running sums over trials at a fixed step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSums {
    pub e: DVector<f64>,
    pub e2: DVector<f64>,
    pub ee: DMatrix<f64>,
    pub ee2: DMatrix<f64>,
    pub xx: DMatrix<f64>,
    pub znorm2: f64,
    pub znorm2_sq: f64,
}

impl StepSums {
    fn zeros(n: usize) -> Self {
        Self {
            e: DVector::zeros(n),
            e2: DVector::zeros(n),
            ee: DMatrix::zeros(n, n),
            ee2: DMatrix::zeros(n, n),
            xx: DMatrix::zeros(n, n),
            znorm2: 0.0,
            znorm2_sq: 0.0,
        }
    }

    fn add_sample(&mut self, x: &DVector<f64>, e: &DVector<f64>, znorm2: f64) {
        let outer = e * e.transpose();
        self.e += e;
        self.e2 += e.component_mul(e);
        self.ee2 += outer.component_mul(&outer);
        self.ee += outer;
        self.xx += x * x.transpose();
        self.znorm2 += znorm2;
        self.znorm2_sq += znorm2 * znorm2;
    }

    fn merge(&mut self, other: &Self) {
        self.e += &other.e;
        self.e2 += &other.e2;
        self.ee += &other.ee;
        self.ee2 += &other.ee2;
        self.xx += &other.xx;
        self.znorm2 += other.znorm2;
        self.znorm2_sq += other.znorm2_sq;
    }
}

/// Output of [`simulate`].
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub steps: usize,
    pub trials: usize,
    pub seed: u64,
    /// Records of the first `record_trials` trials, ordered by trial then `k`.
    pub records: Vec<TraceRecord>,
    /// Sums over all trials, one entry per `k = 0..=steps`.
    pub sums: Vec<StepSums>,
    /// Largest `|x - x̂ - e| / max(1, |x|)` seen.
    pub max_bookkeeping_error: f64,
}

/// Empirical moments at one step, with standard errors of the means.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimate {
    pub k: usize,
    pub mean_e: DVector<f64>,
    pub mean_e_se: DVector<f64>,
    pub second_e: DMatrix<f64>,
    pub second_e_se: DMatrix<f64>,
    pub second_x: DMatrix<f64>,
    pub znorm2: f64,
    pub znorm2_se: f64,
}

struct TrialRngs {
    act: ChaCha8Rng,
    sens: ChaCha8Rng,
    noise: ChaCha8Rng,
}

impl TrialRngs {
    fn new(seed: u64, trial: usize) -> Self {
        let t = trial as u64;
        Self {
            act: stream_rng(derive_seed(seed, t, Stream::Actuation), 0),
            sens: stream_rng(derive_seed(seed, t, Stream::Sensing), 0),
            noise: stream_rng(derive_seed(seed, t, Stream::Noise), 0),
        }
    }
}

fn initial_mode(ch: &MarkovChannel, init: InitialMode, rng: &mut ChaCha8Rng) -> usize {
    match init {
        InitialMode::Stationary => ch.stationary_mode(rng),
        InitialMode::Pinned(m) => m,
    }
}

/// Noise sample `w ~ N(0, α I)` drawn from `rng`.
pub fn sample_noise<R: Rng + ?Sized>(model: &MjlsModel, rng: &mut R) -> DVector<f64> {
    let sd = model.noise_scale.sqrt();
    DVector::from_fn(model.nw(), |_, _| sd * rng.sample::<f64, _>(StandardNormal))
}

struct TrialOutput {
    records: Vec<TraceRecord>,
    bookkeeping: f64,
}

#[allow(clippy::too_many_arguments)]
fn run_trial(
    model: &MjlsModel,
    ch_act: &MarkovChannel,
    ch_sens: &MarkovChannel,
    loop_mats: &ClosedLoopMatrices,
    opts: &SimOptions,
    trial: usize,
    sums: &mut [StepSums],
) -> Result<TrialOutput> {
    let record = trial < opts.record_trials;
    let mut rngs = TrialRngs::new(opts.seed, trial);
    let mut theta_prev = initial_mode(ch_act, opts.theta_init, &mut rngs.act);
    let mut eta_prev = initial_mode(ch_sens, opts.eta_init, &mut rngs.sens);
    let mut theta = ch_act.next_mode(theta_prev, &mut rngs.act);
    let mut eta = ch_sens.next_mode(eta_prev, &mut rngs.sens);
    let mut x = opts.x0.clone();
    let mut xhat = opts.xhat0.clone();
    let mut e = &x - &xhat;
    let mut records = Vec::with_capacity(if record { opts.steps + 1 } else { 0 });
    let mut bookkeeping: f64 = 0.0;
    let zero_w = DVector::zeros(model.nw());
    for (k, step_sums) in sums.iter_mut().enumerate() {
        let u = loop_mats.c_hat(theta_prev) * &xhat;
        let nu = ch_act.draw_delivery(theta, &mut rngs.act);
        let gamma = ch_sens.draw_delivery(eta, &mut rngs.sens);
        let w = if opts.noise_on {
            sample_noise(model, &mut rngs.noise)
        } else {
            zero_w.clone()
        };
        let step = plant_step(model, &x, &u, nu, gamma, &w)?;
        bookkeeping = bookkeeping.max((&x - &xhat - &e).norm() / x.norm().max(1.0));
        step_sums.add_sample(&x, &e, step.z.norm_squared());
        if record {
            records.push(TraceRecord {
                k,
                trial,
                theta,
                eta,
                nu,
                gamma,
                x: x.clone(),
                xhat: xhat.clone(),
                e: e.clone(),
                u: u.clone(),
                y: step.y.clone(),
                z: step.z.clone(),
            });
        }
        if k == opts.steps {
            break;
        }
        let xhat_next = observer_step(
            model,
            loop_mats.filter_gains(),
            &xhat,
            &step.y,
            nu,
            gamma,
            eta,
            &u,
        )?;
        let (err_dyn, err_in) = if gamma {
            let m = &loop_mats.filter_gains()[eta];
            (&model.a + m * &model.l, &model.g + m * &model.h)
        } else {
            (model.a.clone(), model.g.clone())
        };
        e = err_dyn * &e + err_in * &w;
        x = step.x_next;
        xhat = xhat_next;
        theta_prev = theta;
        eta_prev = eta;
        theta = ch_act.next_mode(theta_prev, &mut rngs.act);
        eta = ch_sens.next_mode(eta_prev, &mut rngs.sens);
    }
    Ok(TrialOutput {
        records,
        bookkeeping,
    })
}

/// Monte Carlo simulation of the closed loop.
///
/// Each trial draws from its own streams derived from `(seed, trial)`, and
/// trials are reduced in a fixed order, so the result does not depend on the
/// number of threads. The error `e` is propagated by its own recursion
/// `e_{k+1} = (A + γ M L) e + (G + γ M H) w`, which keeps it independent of
/// `F` bit for bit; `x - x̂ - e` is tracked in `max_bookkeeping_error`.
pub fn simulate(
    model: &MjlsModel,
    ch_act: &MarkovChannel,
    ch_sens: &MarkovChannel,
    f: &[DMatrix<f64>],
    m: &[DMatrix<f64>],
    opts: &SimOptions,
) -> Result<SimulationTrace> {
    let loop_mats = ClosedLoopMatrices::build(model, f, m)?;
    if f.len() != ch_act.modes() || m.len() != ch_sens.modes() {
        return Err(Error::dims("one gain per channel mode required"));
    }
    if opts.x0.len() != model.nx() || opts.xhat0.len() != model.nx() {
        return Err(Error::dims("initial states must have the state dimension"));
    }
    for (init, ch) in [(opts.theta_init, ch_act), (opts.eta_init, ch_sens)] {
        if let InitialMode::Pinned(mode) = init {
            if mode >= ch.modes() {
                return Err(Error::InvalidInitialMode {
                    mode,
                    modes: ch.modes(),
                });
            }
        }
    }
    let nx = model.nx();
    let chunks = opts.trials.div_ceil(CHUNK);
    let work = || {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut sums = vec![StepSums::zeros(nx); opts.steps + 1];
                let mut records = Vec::new();
                let mut bookkeeping: f64 = 0.0;
                for trial in c * CHUNK..((c + 1) * CHUNK).min(opts.trials) {
                    let out =
                        run_trial(model, ch_act, ch_sens, &loop_mats, opts, trial, &mut sums)?;
                    records.extend(out.records);
                    bookkeeping = bookkeeping.max(out.bookkeeping);
                }
                Ok((sums, records, bookkeeping))
            })
            .collect::<Result<Vec<_>>>()
    };
    let parts = match opts.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::ConvergenceFailure(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    let mut sums = vec![StepSums::zeros(nx); opts.steps + 1];
    let mut records = Vec::new();
    let mut max_bookkeeping_error: f64 = 0.0;
    for (part_sums, part_records, bk) in parts {
        for (acc, s) in sums.iter_mut().zip(&part_sums) {
            acc.merge(s);
        }
        records.extend(part_records);
        max_bookkeeping_error = max_bookkeeping_error.max(bk);
    }
    Ok(SimulationTrace {
        steps: opts.steps,
        trials: opts.trials,
        seed: opts.seed,
        records,
        sums,
        max_bookkeeping_error,
    })
}

fn standard_error(sum: f64, sum_sq: f64, n: f64) -> f64 {
    let mean = sum / n;
    let var = ((sum_sq / n - mean * mean) * n / (n - 1.0)).max(0.0);
    (var / n).sqrt()
}

/// Per-step sample moments of `e` and `x` over all trials.
pub fn empirical_moments(trace: &SimulationTrace) -> Result<Vec<MomentEstimate>> {
    if trace.trials < 2 {
        return Err(Error::InsufficientTrials {
            needed: 2,
            got: trace.trials,
        });
    }
    let n = trace.trials as f64;
    Ok(trace
        .sums
        .iter()
        .enumerate()
        .map(|(k, s)| MomentEstimate {
            k,
            mean_e: &s.e / n,
            mean_e_se: s.e.zip_map(&s.e2, |a, b| standard_error(a, b, n)),
            second_e: &s.ee / n,
            second_e_se: s.ee.zip_map(&s.ee2, |a, b| standard_error(a, b, n)),
            second_x: &s.xx / n,
            znorm2: s.znorm2 / n,
            znorm2_se: standard_error(s.znorm2, s.znorm2_sq, n),
        })
        .collect())
}

/// Time averages of `E|z_k|²` and `E|e_k|²` after a burn-in of 10% of the
/// steps.
pub fn average_costs(trace: &SimulationTrace) -> (f64, f64) {
    let start = trace.steps / 10;
    let n = trace.trials.max(1) as f64;
    let window = &trace.sums[start..];
    let count = window.len() as f64;
    let z = window.iter().map(|s| s.znorm2 / n).sum::<f64>() / count;
    let e = window.iter().map(|s| s.ee.trace() / n).sum::<f64>() / count;
    (z, e)
}

/// Result of [`check_separation`].
#[derive(Debug, Clone, PartialEq)]
pub struct SeparationReport {
    pub rho_control: f64,
    pub rho_filter: f64,
    /// Both component radii below one.
    pub mss: bool,
    /// Radius of the augmented operator, when small enough to build.
    pub rho_augmented: Option<f64>,
    /// The augmented verdict matches `mss`.
    pub agree: Option<bool>,
}

/// Second-moment operator of `ℰ` on blocks indexed by `(θ_k, θ_{k-1}, η_k)`.
///
/// Block `(i, l, n)` moves to `(j, i, n')` with probability `p_ij q_nn'`
/// through `Γ(ν, F_l, γ, M_n)`, averaged over `ν ~ ν_i`, `γ ~ γ_n`.
pub fn augmented_operator(
    model: &MjlsModel,
    ch_act: &MarkovChannel,
    ch_sens: &MarkovChannel,
    f: &[DMatrix<f64>],
    m: &[DMatrix<f64>],
) -> Result<OperatorMatrix> {
    let cl = ClosedLoopMatrices::build(model, f, m)?;
    let (nn, ii) = (ch_act.modes(), ch_sens.modes());
    if f.len() != nn || m.len() != ii {
        return Err(Error::dims("one gain per channel mode required"));
    }
    let d = 4 * model.nx() * model.nx();
    let idx = |cur: usize, prev: usize, eta: usize| (cur * nn + prev) * ii + eta;
    let mut rep = DMatrix::zeros(nn * nn * ii * d, nn * nn * ii * d);
    for i in 0..nn {
        let pv = ch_act.delivery(i);
        for l in 0..nn {
            for n in 0..ii {
                let pg = ch_sens.delivery(n);
                let mut w = DMatrix::zeros(d, d);
                for (nu, wn) in [(true, pv), (false, 1.0 - pv)] {
                    for (ga, wg) in [(true, pg), (false, 1.0 - pg)] {
                        if wn * wg != 0.0 {
                            let g = cl.gamma(nu, l, ga, n);
                            w += g.kronecker(&g) * (wn * wg);
                        }
                    }
                }
                for j in 0..nn {
                    let p = ch_act.tpm().prob(i, j);
                    if p == 0.0 {
                        continue;
                    }
                    for n2 in 0..ii {
                        let q = ch_sens.tpm().prob(n, n2);
                        if q != 0.0 {
                            rep.view_mut((idx(j, i, n2) * d, idx(i, l, n) * d), (d, d))
                                .copy_from(&(&w * (p * q)));
                        }
                    }
                }
            }
        }
    }
    Ok(OperatorMatrix {
        rep,
        kind: OperatorKind::Augmented,
    })
}

/// Mean-square stability of the closed loop from the two component radii,
/// cross-checked against the augmented operator when its dimension is at
/// most 4096.
pub fn check_separation(
    model: &MjlsModel,
    ch_act: &MarkovChannel,
    ch_sens: &MarkovChannel,
    f: &[DMatrix<f64>],
    m: &[DMatrix<f64>],
) -> Result<SeparationReport> {
    let (_, rho_control) = msops::is_ms_stabilizing_control_gain(ch_act, model, f)?;
    let (_, rho_filter) = msops::is_ms_detectable_with_gain(ch_sens, model, m)?;
    let mss = rho_control < 1.0 && rho_filter < 1.0;
    let dim = ch_act.modes().pow(2) * ch_sens.modes() * 4 * model.nx().pow(2);
    let rho_augmented = if dim <= DENSE_EIG_MAX_DIM {
        Some(msops::spectral_radius(&augmented_operator(
            model, ch_act, ch_sens, f, m,
        )?)?)
    } else {
        None
    };
    let agree = rho_augmented.map(|r| (r < 1.0) == mss);
    Ok(SeparationReport {
        rho_control,
        rho_filter,
        mss,
        rho_augmented,
        agree,
    })
}
