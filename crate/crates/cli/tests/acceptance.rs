//! Acceptance suite. Runs every criterion in order, prints one line each and
//! exits non-zero if any fails. Run with
//! `cargo test --release -p aoii-cli --test acceptance`.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use aoii_cli::commands::{self, ChainTarget};
use aoii_cli::ExperimentConfig;
use aoii_core::belief::belief_from_aoi;
use aoii_core::chain_analysis::{
    act_at_level_policy, decompose, induce_chain, induce_randomized, is_communicating, mixing_weights,
};
use aoii_core::model::correctness_prob;
use aoii_core::oracles::forward_filter_belief;
use aoii_core::simulator::{self, SimConfig};
use aoii_core::solver::{enumerate_policies_oracle, evaluate_policy_exact, rvi_solve, RviConfig};
use aoii_core::{build_kernel, Action, Error, MdpState, ModelParams, Objective, PolicyTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(start: Instant, limit: Duration) -> (bool, String) {
    let t = start.elapsed();
    (t < limit, format!("{:.2}s of {}s", t.as_secs_f64(), limit.as_secs()))
}

fn default_params() -> ModelParams {
    ModelParams::default()
}

fn solve(params: &ModelParams, objective: Objective, ref_state: MdpState) -> aoii_core::solver::SolveResult {
    let kernel = build_kernel(params, objective).unwrap();
    rvi_solve(
        &kernel,
        &RviConfig {
            ref_state,
            ..RviConfig::default()
        },
    )
    .unwrap()
}

fn g_function() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut exact_ends = true;
    for p in [0.55, 0.7, 0.9, 1.0] {
        exact_ends &= correctness_prob(0, p) == 1.0 && correctness_prob(1, p) == p;
        let mut g = 1.0;
        for n in 1..=64 {
            g = p * g + (1.0 - p) * (1.0 - g);
            worst = worst.max((correctness_prob(n, p) - g).abs());
        }
    }
    let (fast, time) = within(start, Duration::from_secs(1));
    outcome(
        worst < 1e-12 && exact_ends && fast,
        format!("max |closed - recursion| = {worst:.2e}, g(0)=1 and g(1)=p exact: {exact_ends}, {time}"),
    )
}

fn belief_oracle() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut worst_sum: f64 = 0.0;
    for p in [0.6, 0.7, 0.9] {
        let params = ModelParams { p, ..default_params() };
        for theta in 1..=12 {
            let b = belief_from_aoi(theta, &params).unwrap();
            let oracle = forward_filter_belief(theta, p);
            for (i, o) in oracle.iter().enumerate() {
                worst = worst.max((b.get(i) - o).abs());
            }
        }
        for theta in 1..=params.n_max {
            let b = belief_from_aoi(theta, &params).unwrap();
            worst_sum = worst_sum.max((b.mass().iter().sum::<f64>() - 1.0).abs());
        }
    }
    let (fast, time) = within(start, Duration::from_secs(10));
    outcome(
        worst < 1e-9 && worst_sum < 1e-9 && fast,
        format!("max |belief - forward filter| = {worst:.2e}, max |sum - 1| = {worst_sum:.2e}, {time}"),
    )
}

fn kernel_rows() -> Outcome {
    let kernel = build_kernel(&default_params(), Objective::Aoii).unwrap();
    let mut worst: f64 = 0.0;
    let mut rows = 0;
    for s in 0..kernel.n_states() {
        for a in Action::ALL {
            if let Some(row) = kernel.row(s, a) {
                rows += 1;
                worst = worst.max((row.iter().map(|t| t.prob).sum::<f64>() - 1.0).abs());
            }
        }
    }
    outcome(worst <= 1e-12, format!("{rows} rows, max |row sum - 1| = {worst:.2e}"))
}

fn tiny_certificate() -> Outcome {
    let start = Instant::now();
    let params = ModelParams::new(0.7, 0.5, 2, 1, 1, 3).unwrap();
    let kernel = build_kernel(&params, Objective::Aoii).unwrap();
    let rvi = rvi_solve(&kernel, &RviConfig::default()).unwrap();
    let oracle = enumerate_policies_oracle(&kernel, MdpState::new(0, 1)).unwrap();
    let diff = (rvi.gain - oracle.best_gain).abs();
    let (fast, time) = within(start, Duration::from_secs(30));
    outcome(
        diff < 1e-6 && fast,
        format!(
            "rvi {:.9} vs oracle {:.9} over {} policies ({} multichain skipped), {time}",
            rvi.gain, oracle.best_gain, oracle.evaluated, oracle.skipped
        ),
    )
}

fn reference_invariance() -> Outcome {
    let params = default_params();
    let a = solve(&params, Objective::Aoii, MdpState::new(0, 1)).gain;
    let b = solve(&params, Objective::Aoii, MdpState::new(params.cap_e, params.n_max)).gain;
    outcome(
        (a - b).abs() < 1e-5,
        format!("ref (0,1) {a:.9}, ref (E,N) {b:.9}, diff {:.2e}", (a - b).abs()),
    )
}

fn communicating() -> Outcome {
    let params = default_params();
    let report = is_communicating(&params).unwrap();

    let kernel = build_kernel(&params, Objective::Aoii).unwrap();
    let randomized = decompose(&induce_randomized(&kernel, &mixing_weights(&kernel)).unwrap());

    let ce = ModelParams::new(0.7, 0.5, 5, 1, 1, 4).unwrap();
    let ce_kernel = build_kernel(&ce, Objective::Aoii).unwrap();
    let ce_dec = decompose(&induce_chain(&ce_kernel, &act_at_level_policy(&ce_kernel, 3)).unwrap());
    let corner = ce.state_index(MdpState::new(ce.cap_e, ce.n_max)).unwrap();
    let corner_absorbing = ce_dec
        .recurrent_classes()
        .any(|(_, c)| c.states == vec![corner]);

    outcome(
        report.communicating
            && randomized.n_recurrent() == 1
            && randomized.is_single_class()
            && ce_dec.n_recurrent() == 2
            && corner_absorbing,
        format!(
            "communicating {}, randomized recurrent classes {}, counterexample recurrent classes {} with (E,N) absorbing: {}",
            report.communicating,
            randomized.n_recurrent(),
            ce_dec.n_recurrent(),
            corner_absorbing
        ),
    )
}

fn truncation_stability() -> Outcome {
    let start = Instant::now();
    let gain = |n_max| {
        let params = ModelParams::new(0.7, 0.3, 10, 1, 1, n_max).unwrap();
        solve(&params, Objective::Aoii, MdpState::new(0, 1)).gain
    };
    let (g5, g20, g30) = (gain(5), gain(20), gain(30));
    let near = (g20 - g30).abs();
    let far = (g5 - g30).abs();
    let (fast, time) = within(start, Duration::from_secs(120));
    outcome(
        near < 1e-3 && far > 1e-3 && fast,
        format!("|g(20)-g(30)| = {near:.2e}, |g(5)-g(30)| = {far:.2e}, {time}"),
    )
}

fn double_threshold() -> Outcome {
    let mut checked = Vec::new();
    let mut violations = 0;
    for cap_e in [8, 10, 12] {
        let params = ModelParams::new(0.7, 0.5, cap_e, 1, 1, 20).unwrap();
        let policy = solve(&params, Objective::Aoii, MdpState::new(0, 1)).policy;
        let acts = |e, theta| policy.action(params.state_index(MdpState::new(e, theta)).unwrap()) == Action::Act;
        let mut n_act = 0;
        for s in params.states() {
            if !acts(s.e, s.theta) {
                continue;
            }
            n_act += 1;
            if s.e < cap_e && !acts(s.e + 1, s.theta) {
                violations += 1;
            }
            if s.theta < params.n_max && !acts(s.e, s.theta + 1) {
                violations += 1;
            }
        }
        checked.push(format!("E={cap_e}: {n_act} act states"));
    }
    outcome(
        violations == 0,
        format!("{violations} monotonicity violations ({})", checked.join(", ")),
    )
}

/// A feasible deterministic policy acting with probability one half wherever
/// it can, redrawn until exact evaluation from the simulator's start state
/// sees a single recurrent class.
fn random_policies(kernel: &aoii_core::MdpKernel, count: usize, seed: u64) -> Vec<PolicyTable> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let actions = (0..kernel.n_states())
            .map(|s| {
                if kernel.is_feasible(s, Action::Act) && rng.gen_bool(0.5) {
                    Action::Act
                } else {
                    Action::Idle
                }
            })
            .collect();
        let policy = PolicyTable::new(actions);
        match evaluate_policy_exact(kernel, &policy, MdpState::new(0, 1)) {
            Ok(_) => out.push(policy),
            Err(Error::MultipleRecurrentClasses { .. }) => continue,
            Err(e) => panic!("{e}"),
        }
    }
    out
}

fn simulator_consistency() -> Outcome {
    let params = default_params();
    let sim = SimConfig::default();
    let optimal = solve(&params, Objective::Aoii, MdpState::new(0, 1));
    let m = simulator::run(&optimal.policy, &params, &sim).unwrap();
    let rel = (m.avg_aoii.mean - optimal.gain).abs() / optimal.gain;
    let mut pass = rel < 0.02;
    let mut detail = format!(
        "optimal: sim {:.5} vs gain {:.5} ({:.3}%)",
        m.avg_aoii.mean,
        optimal.gain,
        100.0 * rel
    );

    let kernel = build_kernel(&params, Objective::Aoii).unwrap();
    for (i, policy) in random_policies(&kernel, 5, 2024).iter().enumerate() {
        let exact = evaluate_policy_exact(&kernel, policy, MdpState::new(0, 1)).unwrap();
        let m = simulator::run(policy, &params, &SimConfig { seed: 100 + i as u64, ..sim }).unwrap();
        let z = (m.avg_aoii.mean - exact).abs() / m.avg_aoii.std_err;
        pass &= z <= 3.0;
        detail.push_str(&format!("; random {i}: {:.5} vs {exact:.5} ({z:.2} se)", m.avg_aoii.mean));
    }
    outcome(pass, detail)
}

fn real_time_error_comparison() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        out_dir: dir.path().to_path_buf(),
        ..ExperimentConfig::default()
    };
    let summary = commands::cmd_compare(&cfg).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for pt in &summary.points {
        let (a, b) = (&pt.aoii_opt.real_time_error, &pt.baseline.real_time_error);
        let ordered = a.mean <= b.mean;
        let separated = a.mean + a.half_width < b.mean - b.half_width;
        pass &= ordered && (pt.p < 0.8 || separated);
        parts.push(format!(
            "p={}: {:.4}±{:.4} vs {:.4}±{:.4}",
            pt.p, a.mean, a.half_width, b.mean, b.half_width
        ));
    }
    let gap = |p: f64| summary.points.iter().find(|pt| pt.p == p).map(|pt| pt.gap).unwrap();
    let growing = gap(0.9) >= gap(0.6);
    let (fast, time) = within(start, Duration::from_secs(600));
    outcome(
        pass && growing && fast,
        format!(
            "{}; gap(0.6) {:.4}, gap(0.9) {:.4}, {time}",
            parts.join(", "),
            gap(0.6),
            gap(0.9)
        ),
    )
}

/// Every regular file under `dir`, keyed by its relative path.
fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        if path.is_dir() {
            for (k, v) in read_tree(&path) {
                files.insert(format!("{name}/{k}"), v);
            }
        } else {
            files.insert(name, fs::read(&path).unwrap());
        }
    }
    files
}

fn run_all_commands(out: &Path) {
    let cfg = ExperimentConfig {
        out_dir: out.to_path_buf(),
        ..ExperimentConfig::default()
    };
    commands::cmd_solve(&cfg, false).unwrap();
    commands::cmd_simulate(&cfg, Some(500)).unwrap();
    commands::cmd_sweep_n(&cfg).unwrap();
    let small = ExperimentConfig {
        sim: SimConfig {
            horizon: 50_000,
            ..cfg.sim
        },
        ..cfg.clone()
    };
    let compare_dir = out.join("compare");
    commands::cmd_compare(&ExperimentConfig {
        out_dir: compare_dir,
        ..small
    })
    .unwrap();
    commands::cmd_analyze_chain(&cfg, ChainTarget::Optimal, 3).unwrap();
    commands::cmd_kernel_dump(&cfg).unwrap();
}

fn determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_all_commands(a.path());
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    single.install(|| run_all_commands(b.path()));
    let files = read_tree(a.path());
    let other = read_tree(b.path());
    let differing: Vec<&String> = files.keys().filter(|k| files.get(*k) != other.get(*k)).collect();
    outcome(
        differing.is_empty() && files.len() == other.len(),
        format!(
            "{} files compared across a default and a single-thread run, differing: {:?}",
            files.len(),
            differing
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("g-function closed form", g_function),
        ("belief vs forward filter", belief_oracle),
        ("kernel stochasticity", kernel_rows),
        ("tiny-instance optimality certificate", tiny_certificate),
        ("reference-state invariance", reference_invariance),
        ("communicating structure", communicating),
        ("N-truncation stability", truncation_stability),
        ("double-threshold structure", double_threshold),
        ("simulator/solver consistency", simulator_consistency),
        ("real-time error comparison", real_time_error_comparison),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !result.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {}: {} ({})",
            i + 1,
            if result.pass { "PASS" } else { "FAIL" },
            name,
            result.detail
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
