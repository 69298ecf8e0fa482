//! The four commands. Each `cmd_*` function reads its inputs, runs, writes
//! its outputs and returns what it wrote.

use std::path::{Path, PathBuf};

use jumpctl::closedloop::{
    average_costs, check_separation, empirical_moments, simulate, InitialMode, SimOptions,
    SimulationTrace,
};
use jumpctl::control_care::{control_residual, optimal_control_cost};
use jumpctl::filter_care::{
    filter_residual, optimal_filter_cost, stationary_error_power, verify_lmi_feasibility,
};
use jumpctl::msops::{
    is_ms_detectable_with_gain, is_ms_stabilizing_control_gain, propagate_moments, MomentState,
};
use jumpctl::{solve_control_care, solve_filter_care, BlockCollection, MarkovChannel};
use nalgebra::DVector;

use crate::config::{
    content_hash, load_config, load_gains, to_rows_list, Gains, GainsFile, Problem,
};
use crate::pendulum;
use crate::report::{
    write_json, ControlReport, FilterReport, LmiSummary, MomentCheck, Provenance,
    SeparationSummary, SimulationSummary, SummaryReport, SynthesisOutput,
};
use crate::traces::write_traces_file;
use crate::{CliError, CliResult};

/// Trials at or above which `simulate` compares empirical and analytic
/// error moments.
pub const MOMENT_CHECK_MIN_TRIALS: usize = 100;
/// Steps at which the moments are compared.
pub const MOMENT_CHECK_STEPS: [usize; 3] = [1, 5, 10];
/// Trials written to the trace CSV unless overridden.
pub const DEFAULT_RECORDED_TRIALS: usize = 100;
/// Window length of the stationarity summary.
pub const WINDOW: usize = 50;

pub const THREADS_ENV: &str = "JUMPCTL_THREADS";

fn verdict(mss: bool) -> String {
    if mss { "MSS" } else { "NOT MSS" }.into()
}

fn collection(blocks: &[nalgebra::DMatrix<f64>]) -> CliResult<BlockCollection> {
    Ok(BlockCollection::new(blocks.to_vec())?)
}

/// Radii, verdicts, costs and certificates for a set of gains. Shared by
/// `synthesize` and `analyze` so both report identical numbers.
fn evaluate(p: &Problem, g: &Gains) -> CliResult<(ControlReport, FilterReport, SeparationSummary)> {
    let (stabilizing, rho_c) = is_ms_stabilizing_control_gain(&p.actuation, &p.model, &g.f)?;
    let (detecting, rho_f) = is_ms_detectable_with_gain(&p.sensing, &p.model, &g.m)?;
    let mut control = ControlReport {
        residual: None,
        rho: rho_c,
        stabilizing,
        cost: None,
        iterations: None,
    };
    if let Some(x) = &g.x {
        let x = collection(x)?;
        control.residual = Some(control_residual(&p.model, &p.actuation, &x)?);
        control.cost = Some(optimal_control_cost(&p.actuation, &p.model, &x));
    }
    let mut filter = FilterReport {
        residual: None,
        rho: rho_f,
        detecting,
        cost: None,
        error_power: None,
        iterations: None,
        trace_history: None,
        lmi: None,
        lmi_feasible: None,
    };
    if let Some(y) = &g.y {
        let y = collection(y)?;
        filter.residual = Some(filter_residual(&p.model, &p.sensing, &y)?);
        filter.cost = Some(optimal_filter_cost(&p.sensing, &y));
        filter.error_power = Some(stationary_error_power(&y));
        let lmi = verify_lmi_feasibility(&p.model, &p.sensing, &y)?;
        filter.lmi_feasible = Some(lmi.feasible);
        filter.lmi = Some(LmiSummary {
            feasible: lmi.feasible,
            schur_feasible: lmi.schur_feasible,
            discrepancy: lmi.discrepancy(),
            objective: lmi.objective,
            care_residual: lmi.care_residual,
        });
    }
    let sep = check_separation(&p.model, &p.actuation, &p.sensing, &g.f, &g.m)?;
    let separation = SeparationSummary {
        verdict: verdict(sep.mss),
        rho_control: sep.rho_control,
        rho_filter: sep.rho_filter,
        rho_augmented: sep.rho_augmented,
        augmented_agrees: sep.agree,
    };
    Ok((control, filter, separation))
}

/// Solves both Riccati equations independently and evaluates the result.
pub fn synthesize(p: &Problem, config_hash: &str) -> CliResult<SynthesisOutput> {
    let ctrl = solve_control_care(&p.model, &p.actuation, p.solver.tol, p.solver.max_iter)?;
    let filt = solve_filter_care(&p.model, &p.sensing, p.solver.tol, p.solver.max_iter)?;
    let gains = Gains {
        f: ctrl.gains.clone(),
        m: filt.gains.clone(),
        x: Some(ctrl.x.blocks().to_vec()),
        y: Some(filt.y.blocks().to_vec()),
    };
    let (mut control, mut filter, separation) = evaluate(p, &gains)?;
    control.iterations = Some(ctrl.iterations);
    filter.iterations = Some(filt.iterations);
    filter.trace_history = Some(filt.trace_history.clone());
    let mut notes = Vec::new();
    if filter.lmi.as_ref().is_some_and(|l| l.discrepancy) {
        notes.push("LMI block form and Schur form disagree at the computed Y".into());
    }
    let report = SummaryReport {
        control: Some(control),
        filter: Some(filter),
        separation: Some(separation),
        simulation: None,
        notes,
        provenance: Provenance::new("synthesize", config_hash, None),
    };
    let gains = GainsFile {
        control_gains: to_rows_list(&gains.f),
        filter_gains: to_rows_list(&gains.m),
        x: gains.x.as_deref().map(to_rows_list),
        y: gains.y.as_deref().map(to_rows_list),
    };
    Ok(SynthesisOutput { report, gains })
}

pub fn cmd_synthesize(config: &Path, out: &Path) -> CliResult<SynthesisOutput> {
    let (cfg, hash) = load_config(config)?;
    let p = cfg.validate()?;
    let output = synthesize(&p, &hash)?;
    write_json(out, &output)?;
    Ok(output)
}

/// Certificates for externally supplied gains. Costs, residuals and the LMI
/// report need `X` and `Y` in the gains file.
pub fn analyze(p: &Problem, gains: &GainsFile, config_hash: &str) -> CliResult<SummaryReport> {
    let g = gains.resolve(p)?;
    let (control, filter, separation) = evaluate(p, &g)?;
    Ok(SummaryReport {
        control: Some(control),
        filter: Some(filter),
        separation: Some(separation),
        simulation: None,
        notes: Vec::new(),
        provenance: Provenance::new("analyze", config_hash, None),
    })
}

pub fn cmd_analyze(config: &Path, gains: &Path, out: &Path) -> CliResult<SummaryReport> {
    let (cfg, hash) = load_config(config)?;
    let p = cfg.validate()?;
    let report = analyze(&p, &load_gains(gains)?, &hash)?;
    write_json(out, &report)?;
    Ok(report)
}

/// Command-line overrides of the `sim` section.
#[derive(Debug, Clone, Default)]
pub struct SimOverrides {
    pub trials: Option<usize>,
    pub steps: Option<usize>,
    pub seed: Option<u64>,
    pub noise_on: Option<bool>,
    pub record_trials: Option<usize>,
    pub threads: Option<usize>,
}

/// Reads the thread cap from the environment.
pub fn threads_from_env() -> CliResult<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::validation(format!(
                "{THREADS_ENV} must be a positive integer, got \"{s}\""
            ))),
        },
    }
}

fn mode_distribution(init: InitialMode, ch: &MarkovChannel) -> DVector<f64> {
    match init {
        InitialMode::Stationary => ch.stationary().clone(),
        InitialMode::Pinned(n) => DVector::from_fn(ch.modes(), |i, _| f64::from(u8::from(i == n))),
    }
}

/// Compares the sample mean and second-moment diagonal of the error with the
/// exact moment recursion at [`MOMENT_CHECK_STEPS`].
fn moment_check(
    p: &Problem,
    g: &Gains,
    opts: &SimOptions,
    trace: &SimulationTrace,
) -> CliResult<Option<MomentCheck>> {
    let steps: Vec<usize> = MOMENT_CHECK_STEPS
        .iter()
        .copied()
        .filter(|&k| k <= opts.steps)
        .collect();
    if opts.trials < MOMENT_CHECK_MIN_TRIALS || steps.is_empty() {
        return Ok(None);
    }
    let est = empirical_moments(trace)?;
    let e0 = &opts.x0 - &opts.xhat0;
    let mut model = p.model.clone();
    if !opts.noise_on {
        model.noise_scale = 0.0;
    }
    let prev = mode_distribution(opts.eta_init, &p.sensing);
    let mut state = MomentState::initial(&p.sensing, &e0, &(&e0 * e0.transpose()), &prev)?;
    let mut worst: f64 = 0.0;
    let mut pass = true;
    let mut compare = |analytic: f64, empirical: f64, se: f64| {
        let err = (analytic - empirical).abs();
        let slack = 1e-12 * analytic.abs().max(1.0);
        if err > 3.0 * se + slack {
            pass = false;
        }
        if se > 0.0 {
            worst = worst.max(err / se);
        }
    };
    for k in 1..=*steps.last().unwrap_or(&0) {
        state = propagate_moments(&p.sensing, &g.m, &model, &state)?;
        if steps.contains(&k) {
            let (mean, second) = (state.mean(), state.second_moment());
            for i in 0..model.nx() {
                compare(mean[i], est[k].mean_e[i], est[k].mean_e_se[i]);
                compare(
                    second[(i, i)],
                    est[k].second_e[(i, i)],
                    est[k].second_e_se[(i, i)],
                );
            }
        }
    }
    let status = if pass { "PASS within 3σ" } else { "FAIL" };
    Ok(Some(MomentCheck {
        status: status.into(),
        steps_checked: steps,
        worst_z: worst,
    }))
}

fn window_means(values: &[f64], start: usize) -> Vec<f64> {
    values[start.min(values.len())..]
        .chunks(WINDOW)
        .map(|w| w.iter().sum::<f64>() / w.len() as f64)
        .collect()
}

fn norm_ratio(
    trace: &SimulationTrace,
    pick: impl Fn(&jumpctl::closedloop::TraceRecord) -> f64,
) -> Option<f64> {
    let first = trace.records.iter().find(|r| r.trial == 0 && r.k == 0)?;
    let last = trace
        .records
        .iter()
        .find(|r| r.trial == 0 && r.k == trace.steps)?;
    let n0 = pick(first);
    (n0 > 0.0).then(|| pick(last) / n0)
}

/// Runs the Monte Carlo simulation and summarizes it.
pub fn run_simulation(
    p: &Problem,
    gains: &GainsFile,
    ov: &SimOverrides,
    config_hash: &str,
) -> CliResult<(SummaryReport, SimulationTrace)> {
    let g = gains.resolve(p)?;
    let steps = ov.steps.unwrap_or(p.sim.steps);
    let trials = ov.trials.unwrap_or(p.sim.trials);
    if trials == 0 {
        return Err(CliError::validation("trials must be positive"));
    }
    let mut opts = SimOptions::new(
        p.x0.clone(),
        p.xhat0.clone(),
        steps,
        trials,
        ov.seed.unwrap_or(p.sim.seed),
    );
    opts.theta_init = p.theta_init;
    opts.eta_init = p.eta_init;
    opts.noise_on = ov.noise_on.unwrap_or(p.sim.noise_on);
    opts.record_trials = ov
        .record_trials
        .unwrap_or(DEFAULT_RECORDED_TRIALS)
        .clamp(1, trials);
    opts.threads = ov.threads;
    let trace = simulate(&p.model, &p.actuation, &p.sensing, &g.f, &g.m, &opts)?;
    let (avg_z, avg_e) = average_costs(&trace);
    let n = trials as f64;
    let state_power: Vec<f64> = trace.sums.iter().map(|s| s.xx.trace() / n).collect();
    let error_power: Vec<f64> = trace.sums.iter().map(|s| s.ee.trace() / n).collect();
    let burn_in = steps / 10;
    let summary = SimulationSummary {
        trials,
        steps,
        seed: opts.seed,
        noise_on: opts.noise_on,
        avg_znorm2: avg_z,
        avg_error_power: avg_e,
        final_state_ratio: norm_ratio(&trace, |r| r.x.norm()),
        final_error_ratio: norm_ratio(&trace, |r| r.e.norm()),
        window_state_power: window_means(&state_power, burn_in),
        window_error_power: window_means(&error_power, burn_in),
        max_bookkeeping_error: trace.max_bookkeeping_error,
        moment_check: moment_check(p, &g, &opts, &trace)?,
    };
    let report = SummaryReport {
        control: None,
        filter: None,
        separation: None,
        simulation: Some(summary),
        notes: Vec::new(),
        provenance: Provenance::new("simulate", config_hash, Some(opts.seed)),
    };
    Ok((report, trace))
}

pub fn cmd_simulate(
    config: &Path,
    gains: &Path,
    traces: &Path,
    summary: &Path,
    ov: &SimOverrides,
) -> CliResult<SummaryReport> {
    let (cfg, hash) = load_config(config)?;
    let p = cfg.validate()?;
    let (report, trace) = run_simulation(&p, &load_gains(gains)?, ov, &hash)?;
    write_traces_file(traces, &trace.records, p.model.nx(), p.model.nu())?;
    write_json(summary, &report)?;
    Ok(report)
}

/// Files and headline numbers of the pendulum demo.
#[derive(Debug, Clone)]
pub struct DemoOutcome {
    pub dir: PathBuf,
    pub max_abs_eig: f64,
    pub synthesis: SynthesisOutput,
    pub noiseless: SummaryReport,
    pub noisy: SummaryReport,
}

/// Largest eigenvalue modulus of the pendulum `A`.
pub fn pendulum_max_abs_eig() -> f64 {
    let a = jumpctl::model::matrix_from_rows(&pendulum::a_matrix()).expect("square literal");
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Writes the pendulum configuration, synthesizes gains and simulates the
/// loop without noise (one trial) and with noise.
pub fn demo_pendulum(dir: &Path, ov: &SimOverrides) -> CliResult<DemoOutcome> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::validation(format!("cannot create {}: {e}", dir.display())))?;
    let cfg = pendulum::pendulum_config();
    let config_path = dir.join("pendulum.json");
    write_json(&config_path, &cfg)?;
    let bytes = std::fs::read(&config_path)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", config_path.display())))?;
    let hash = content_hash(&bytes);
    let p = cfg.validate()?;

    let synthesis = synthesize(&p, &hash)?;
    write_json(&dir.join("gains.json"), &synthesis)?;

    let quiet = SimOverrides {
        trials: Some(1),
        noise_on: Some(false),
        ..ov.clone()
    };
    let (noiseless, trace) = run_simulation(&p, &synthesis.gains, &quiet, &hash)?;
    write_traces_file(
        &dir.join("traces_noiseless.csv"),
        &trace.records,
        p.model.nx(),
        p.model.nu(),
    )?;
    write_json(&dir.join("summary_noiseless.json"), &noiseless)?;

    let loud = SimOverrides {
        noise_on: Some(true),
        ..ov.clone()
    };
    let (noisy, trace) = run_simulation(&p, &synthesis.gains, &loud, &hash)?;
    write_traces_file(
        &dir.join("traces_noisy.csv"),
        &trace.records,
        p.model.nx(),
        p.model.nu(),
    )?;
    write_json(&dir.join("summary_noisy.json"), &noisy)?;

    Ok(DemoOutcome {
        dir: dir.to_path_buf(),
        max_abs_eig: pendulum_max_abs_eig(),
        synthesis,
        noiseless,
        noisy,
    })
}
