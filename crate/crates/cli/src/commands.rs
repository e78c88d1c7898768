//! Subcommand implementations. Each writes its files under the configured
//! output directory and returns what it wrote for programmatic use.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so the
//! files are locale independent and lossless.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use aoii_core::belief::belief_from_aoi;
use aoii_core::chain_analysis::{
    act_at_level_policy, communicating_report, decompose, induce_chain, induce_randomized,
    mixing_weights, ClassDecomposition,
};
use aoii_core::model::correctness_prob;
use aoii_core::simulator::{self, SimMetrics};
use aoii_core::solver::{
    bellman_residual, enumerate_policies_oracle, evaluate_policy_with_cost, rvi_solve, SolveResult,
};
use aoii_core::{build_kernel, MdpKernel, MdpState, ModelParams, Objective, PolicyTable};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, PolicyChoice};
use crate::error::CliError;

/// Start state for exact policy evaluation; matches the simulator's.
const EVAL_START: MdpState = MdpState { e: 0, theta: 1 };

/// Agreement tolerance between RVI and the enumeration oracle.
pub const ORACLE_TOL: f64 = 1e-6;

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text)?;
    Ok(())
}

fn solve(cfg: &ExperimentConfig, params: &ModelParams, objective: Objective) -> Result<(MdpKernel, SolveResult), CliError> {
    let kernel = build_kernel(params, objective)?;
    let solver = aoii_core::solver::RviConfig {
        ref_state: cfg.ref_state_for(params),
        ..cfg.solver
    };
    let result = rvi_solve(&kernel, &solver)?;
    Ok((kernel, result))
}

/// Per-state probability that the monitor's estimate is wrong.
fn error_cost(params: &ModelParams) -> Vec<f64> {
    params
        .states()
        .map(|s| 1.0 - correctness_prob(s.theta, params.p))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleCheck {
    pub best_gain: f64,
    pub rvi_gain: f64,
    pub agree: bool,
    pub evaluated: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    pub objective: Objective,
    pub params: ModelParams,
    pub epsilon: f64,
    pub max_iters: usize,
    pub ref_state: MdpState,
    pub damping: Option<f64>,
    pub gain: f64,
    pub iterations: usize,
    pub residual_span: f64,
    pub bellman_residual: f64,
    pub oracle: Option<OracleCheck>,
}

#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub summary: SolveSummary,
    pub result: SolveResult,
    pub files: Vec<PathBuf>,
}

/// Solves the configured model; writes `policy.csv` (e, theta, action,
/// value) and `summary.json`.
pub fn cmd_solve(cfg: &ExperimentConfig, run_oracle: bool) -> Result<SolveOutput, CliError> {
    let params = cfg.model;
    let (kernel, result) = solve(cfg, &params, cfg.objective)?;

    let oracle = if run_oracle || cfg.tiny_oracle {
        let o = enumerate_policies_oracle(&kernel, EVAL_START)?;
        Some(OracleCheck {
            best_gain: o.best_gain,
            rvi_gain: result.gain,
            agree: (o.best_gain - result.gain).abs() < ORACLE_TOL,
            evaluated: o.evaluated,
            skipped: o.skipped,
        })
    } else {
        None
    };

    let summary = SolveSummary {
        objective: cfg.objective,
        params,
        epsilon: cfg.solver.epsilon,
        max_iters: cfg.solver.max_iters,
        ref_state: cfg.ref_state_for(&params),
        damping: cfg.solver.damping,
        gain: result.gain,
        iterations: result.iterations,
        residual_span: result.residual_span,
        bellman_residual: bellman_residual(&kernel, result.gain, &result.values),
        oracle,
    };

    ensure_dir(&cfg.out_dir)?;
    let mut csv = String::from("e,theta,action,value\n");
    for (i, s) in params.states().enumerate() {
        writeln!(csv, "{},{},{},{}", s.e, s.theta, result.policy.action(i), result.values[i]).unwrap();
    }
    let policy_path = cfg.out_dir.join("policy.csv");
    let summary_path = cfg.out_dir.join("summary.json");
    write_text(&policy_path, &csv)?;
    write_json(&summary_path, &summary)?;

    Ok(SolveOutput {
        summary,
        result,
        files: vec![policy_path, summary_path],
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateSummary {
    pub policy: PolicyChoice,
    pub params: ModelParams,
    pub sim: simulator::SimConfig,
    /// RVI gain when the policy comes from the solver.
    pub gain: Option<f64>,
    pub metrics: SimMetrics,
}

const METRICS_CSV_HEADER: &str = "policy,p,mu,cap_e,c_s,c_t,n_max,transmit,avg_aoii,avg_aoii_hw,avg_aoi,avg_aoi_hw,real_time_error,real_time_error_hw,action_rate,action_rate_hw,transmit_rate,transmit_rate_hw,mean_energy,mean_energy_hw";

fn metrics_csv_row(policy: &str, params: &ModelParams, m: &SimMetrics) -> String {
    let mut row = format!(
        "{policy},{},{},{},{},{},{},{}",
        params.p,
        params.mu,
        params.cap_e,
        params.c_s,
        params.c_t,
        params.n_max,
        params.transmit.as_str()
    );
    for e in [
        &m.avg_aoii,
        &m.avg_aoi,
        &m.real_time_error,
        &m.action_rate,
        &m.transmit_rate,
        &m.mean_energy,
    ] {
        write!(row, ",{},{}", e.mean, e.half_width).unwrap();
    }
    row
}

/// Simulates the configured policy; writes `metrics.json`, `metrics.csv`
/// and, when `trace_slots` is set, `trace.csv`.
pub fn cmd_simulate(cfg: &ExperimentConfig, trace_slots: Option<u64>) -> Result<SimulateSummary, CliError> {
    let params = cfg.model;
    let (policy, gain) = match cfg.policy {
        PolicyChoice::Aoii | PolicyChoice::Aoi => {
            let objective = if cfg.policy == PolicyChoice::Aoii {
                Objective::Aoii
            } else {
                Objective::Aoi
            };
            let (_, r) = solve(cfg, &params, objective)?;
            (r.policy, Some(r.gain))
        }
        PolicyChoice::Idle => (PolicyTable::all_idle(params.n_states()), None),
        PolicyChoice::Act => (PolicyTable::greedy_act(&build_kernel(&params, Objective::Aoii)?), None),
    };
    let metrics = simulator::run(&policy, &params, &cfg.sim)?;
    let summary = SimulateSummary {
        policy: cfg.policy,
        params,
        sim: cfg.sim,
        gain,
        metrics,
    };

    ensure_dir(&cfg.out_dir)?;
    write_json(&cfg.out_dir.join("metrics.json"), &summary)?;
    let name = serde_json::to_value(cfg.policy)?;
    let csv = format!(
        "{METRICS_CSV_HEADER}\n{}\n",
        metrics_csv_row(name.as_str().unwrap_or("policy"), &params, &summary.metrics)
    );
    write_text(&cfg.out_dir.join("metrics.csv"), &csv)?;

    if let Some(slots) = trace_slots {
        let mut csv = String::from("t,x,x_hat,e,theta,delta,action\n");
        for r in simulator::trace(&policy, &params, slots, cfg.sim.seed) {
            writeln!(csv, "{},{},{},{},{},{},{}", r.t, r.x, r.x_hat, r.e, r.theta, r.delta, r.action).unwrap();
        }
        write_text(&cfg.out_dir.join("trace.csv"), &csv)?;
    }
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub n_max: u32,
    pub gain: f64,
    pub iterations: usize,
    /// `gain - gain(largest N)`.
    pub gap_to_max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub p: f64,
    pub mu: f64,
    pub cap_e: u32,
    pub c_s: u32,
    pub c_t: u32,
    pub points: Vec<SweepPoint>,
}

/// Solves the AoII MDP for every distinct `N`; writes `sweep_n.csv`
/// (n_max, gain, iterations, gap_to_max) and `sweep_n.json`.
pub fn cmd_sweep_n(cfg: &ExperimentConfig) -> Result<SweepSummary, CliError> {
    let points = cfg.sweep_n_points();
    let solved: Vec<(u32, f64, usize)> = points
        .par_iter()
        .map(|params| {
            solve(cfg, params, Objective::Aoii).map(|(_, r)| (params.n_max, r.gain, r.iterations))
        })
        .collect::<Result<_, _>>()?;
    let reference = solved.last().map_or(f64::NAN, |p| p.1);
    let summary = SweepSummary {
        p: cfg.sweep_n_p,
        mu: cfg.sweep_n_mu,
        cap_e: cfg.model.cap_e,
        c_s: cfg.model.c_s,
        c_t: cfg.model.c_t,
        points: solved
            .into_iter()
            .map(|(n_max, gain, iterations)| SweepPoint {
                n_max,
                gain,
                iterations,
                gap_to_max: gain - reference,
            })
            .collect(),
    };

    ensure_dir(&cfg.out_dir)?;
    let mut csv = String::from("n_max,gain,iterations,gap_to_max\n");
    for p in &summary.points {
        writeln!(csv, "{},{},{},{}", p.n_max, p.gain, p.iterations, p.gap_to_max).unwrap();
    }
    write_text(&cfg.out_dir.join("sweep_n.csv"), &csv)?;
    write_json(&cfg.out_dir.join("sweep_n.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparePoint {
    pub p: f64,
    pub aoii_opt: SimMetrics,
    pub baseline: SimMetrics,
    pub gain_aoii_opt: f64,
    pub gain_baseline: f64,
    /// Exact long-run error probability of each policy on its own system.
    pub exact_error_aoii_opt: Option<f64>,
    pub exact_error_baseline: Option<f64>,
    /// Baseline error minus AoII-optimal error (simulated).
    pub gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareSummary {
    pub mu: f64,
    pub cap_e: u32,
    pub c_s: u32,
    pub c_t: u32,
    pub n_max: u32,
    pub baseline_objective: Objective,
    pub baseline_transmit: aoii_core::TransmitRule,
    pub sim: simulator::SimConfig,
    pub points: Vec<ComparePoint>,
}

fn compare_point(cfg: &ExperimentConfig, params: &ModelParams) -> Result<ComparePoint, CliError> {
    let baseline_params = params.with_transmit(cfg.baseline_transmit);
    let (k_a, a) = solve(cfg, params, Objective::Aoii)?;
    let (k_b, b) = solve(cfg, &baseline_params, cfg.compare_baseline)?;
    let sim_a = simulator::run(&a.policy, params, &cfg.sim)?;
    let sim_b = simulator::run(&b.policy, &baseline_params, &cfg.sim)?;
    let err = error_cost(params);
    Ok(ComparePoint {
        p: params.p,
        gap: sim_b.real_time_error.mean - sim_a.real_time_error.mean,
        exact_error_aoii_opt: evaluate_policy_with_cost(&k_a, &a.policy, EVAL_START, &err).ok(),
        exact_error_baseline: evaluate_policy_with_cost(&k_b, &b.policy, EVAL_START, &err).ok(),
        aoii_opt: sim_a,
        baseline: sim_b,
        gain_aoii_opt: a.gain,
        gain_baseline: b.gain,
    })
}

/// Real-time error of the AoII-optimal policy against the baseline for
/// each `p`, simulated with common seeds; writes `compare.csv` and
/// `compare.json`.
pub fn cmd_compare(cfg: &ExperimentConfig) -> Result<CompareSummary, CliError> {
    let points: Vec<ComparePoint> = cfg
        .compare_points()
        .par_iter()
        .map(|params| compare_point(cfg, params))
        .collect::<Result<_, _>>()?;
    let summary = CompareSummary {
        mu: cfg.compare_mu,
        cap_e: cfg.model.cap_e,
        c_s: cfg.model.c_s,
        c_t: cfg.model.c_t,
        n_max: cfg.model.n_max,
        baseline_objective: cfg.compare_baseline,
        baseline_transmit: cfg.baseline_transmit,
        sim: cfg.sim,
        points,
    };

    ensure_dir(&cfg.out_dir)?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    let mut csv = String::from(
        "p,real_time_error_aoii_opt,ci_aoii_opt,real_time_error_aoi_opt,ci_aoi_opt,gap,exact_error_aoii_opt,exact_error_aoi_opt,avg_aoii_aoii_opt,avg_aoii_aoi_opt\n",
    );
    for pt in &summary.points {
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{}",
            pt.p,
            pt.aoii_opt.real_time_error.mean,
            pt.aoii_opt.real_time_error.half_width,
            pt.baseline.real_time_error.mean,
            pt.baseline.real_time_error.half_width,
            pt.gap,
            opt(pt.exact_error_aoii_opt),
            opt(pt.exact_error_baseline),
            pt.aoii_opt.avg_aoii.mean,
            pt.baseline.avg_aoii.mean,
        )
        .unwrap();
    }
    write_text(&cfg.out_dir.join("compare.csv"), &csv)?;
    write_json(&cfg.out_dir.join("compare.json"), &summary)?;
    Ok(summary)
}

/// Chain analysed by `analyze-chain`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ChainTarget {
    /// Union of all feasible actions (the communicating check).
    Union,
    /// Idle where `Act` is infeasible, a fair coin elsewhere.
    Randomized,
    /// The RVI-optimal AoII policy.
    Optimal,
    /// `Act` exactly at one battery level.
    Counterexample,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassReport {
    pub id: usize,
    pub recurrent: bool,
    pub size: usize,
    /// Member states as `[e, theta]`.
    pub states: Vec<[u32; 2]>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainReport {
    pub target: ChainTarget,
    pub params: ModelParams,
    pub act_level: Option<u32>,
    /// Only for the union target: whether the MDP is communicating.
    pub communicating: Option<bool>,
    pub n_classes: usize,
    pub n_recurrent: usize,
    pub classes: Vec<ClassReport>,
}

fn class_report(params: &ModelParams, dec: &ClassDecomposition) -> Vec<ClassReport> {
    dec.classes
        .iter()
        .enumerate()
        .map(|(id, c)| ClassReport {
            id,
            recurrent: c.recurrent,
            size: c.states.len(),
            states: c
                .states
                .iter()
                .map(|&s| {
                    let st = params.state_at(s).expect("class members are valid states");
                    [st.e, st.theta]
                })
                .collect(),
        })
        .collect()
}

/// Class decomposition as JSON; written to `chain.json` and returned.
pub fn cmd_analyze_chain(
    cfg: &ExperimentConfig,
    target: ChainTarget,
    act_level: u32,
) -> Result<(ChainReport, String), CliError> {
    let params = cfg.model;
    let kernel = build_kernel(&params, Objective::Aoii)?;
    let (dec, communicating) = match target {
        ChainTarget::Union => {
            let report = communicating_report(&kernel);
            (report.witness, Some(report.communicating))
        }
        ChainTarget::Randomized => (decompose(&induce_randomized(&kernel, &mixing_weights(&kernel))?), None),
        ChainTarget::Optimal => {
            let (_, r) = solve(cfg, &params, Objective::Aoii)?;
            (decompose(&induce_chain(&kernel, &r.policy)?), None)
        }
        ChainTarget::Counterexample => {
            let policy = act_at_level_policy(&kernel, act_level);
            (decompose(&induce_chain(&kernel, &policy)?), None)
        }
    };
    let report = ChainReport {
        target,
        params,
        act_level: (target == ChainTarget::Counterexample).then_some(act_level),
        communicating,
        n_classes: dec.classes.len(),
        n_recurrent: dec.n_recurrent(),
        classes: class_report(&params, &dec),
    };
    let json = serde_json::to_string_pretty(&report)? + "\n";
    ensure_dir(&cfg.out_dir)?;
    write_text(&cfg.out_dir.join("chain.json"), &json)?;
    Ok((report, json))
}

/// Belief at AoI `theta` as CSV rows `i,b_i`.
pub fn cmd_belief(cfg: &ExperimentConfig, theta: u32) -> Result<String, CliError> {
    let b = belief_from_aoi(theta, &cfg.model)?;
    let mut csv = String::from("i,b_i\n");
    for (i, v) in b.mass().iter().enumerate() {
        writeln!(csv, "{i},{v}").unwrap();
    }
    Ok(csv)
}

/// Every transition of the kernel; written to `kernel.csv`.
pub fn cmd_kernel_dump(cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let params = cfg.model;
    let kernel = build_kernel(&params, cfg.objective)?;
    let mut csv = String::from("e,theta,action,e_next,theta_next,prob\n");
    for (s, a, t) in kernel.entries() {
        let from = params.state_at(s)?;
        let to = params.state_at(t.next)?;
        writeln!(csv, "{},{},{},{},{},{}", from.e, from.theta, a, to.e, to.theta, t.prob).unwrap();
    }
    ensure_dir(&cfg.out_dir)?;
    let path = cfg.out_dir.join("kernel.csv");
    write_text(&path, &csv)?;
    Ok(path)
}
