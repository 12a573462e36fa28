//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with the measured quantities (visible with `--nocapture`).
//!
//! The criteria run serially (shared mutex) so the wall-clock bounds are
//! meaningful on small machines.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use kaczmarz_lab::experiments::{run_scenario, standard_normal_vec, ScenarioSpec};
use kaczmarz_lab::linalg::{kaczmarz_update, DenseSystem, StateVector};
use kaczmarz_lab::oracle;
use kaczmarz_lab::rng::SeededRng;
use kaczmarz_lab::selection::{select_partially_weighted, SelectionStrategy};
use kaczmarz_lab::solver::{self, residual_count_histogram, SolverConfig};

static SEQUENTIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SEQUENTIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn assert_within(elapsed: Duration, budget: Duration, what: &str) {
    assert!(
        elapsed <= budget,
        "{what} took {elapsed:?}, budget {budget:?}"
    );
}

/// Random standardized consistent system with a known solution.
fn random_consistent_system(m: usize, n: usize, seed: u64) -> (DenseSystem, StateVector) {
    let mut rng = SeededRng::new(seed);
    let a = standard_normal_vec(m * n, &mut rng);
    let x_true: Vec<f64> = standard_normal_vec(n, &mut rng);
    let b: Vec<f64> = a
        .chunks_exact(n)
        .map(|row| row.iter().zip(&x_true).map(|(r, x)| r * x).sum())
        .collect();
    let system = DenseSystem::new(m, n, a, b)
        .expect("valid dimensions")
        .standardize()
        .expect("gaussian rows have nonzero norm");
    (system, StateVector::new(x_true).expect("finite"))
}

/// m x 1 unit-row system whose residuals at x = 0 are exactly `rs`.
fn residual_case(rs: &[f64]) -> (DenseSystem, StateVector) {
    let m = rs.len();
    let system = DenseSystem::new(m, 1, vec![1.0; m], rs.to_vec()).expect("valid");
    (system, StateVector::zeros(1))
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values[values.len() / 2]
}

#[test]
fn criterion_1_proposition_verification() {
    let _guard = serial();
    let start = Instant::now();

    let report = oracle::run_verification_suite(kaczmarz_lab::cli::VERIFY_SUITE_SEED);
    for check in &report.checks {
        assert!(check.passed, "{}: {}", check.name, check.detail);
    }
    assert!(
        report.systems_tested >= 100,
        "only {} systems",
        report.systems_tested
    );
    assert!(
        report.proposition_instances >= 100,
        "only {} instances",
        report.proposition_instances
    );

    let elapsed = start.elapsed();
    assert_within(elapsed, Duration::from_secs(5), "criterion 1");
    println!(
        "criterion 1 PASS: {} proposition instances over {} systems, all checks green in {elapsed:?}",
        report.proposition_instances, report.systems_tested
    );
}

#[test]
fn criterion_2_per_step_orthogonal_decrement() {
    let _guard = serial();
    let start = Instant::now();

    let (system, x_true) = random_consistent_system(200, 100, 0xdec);
    let config = SolverConfig {
        strategy: SelectionStrategy::UniformRandom,
        max_iterations: 10_000,
        tolerance: 0.0,
        seed: 0xdec + 1,
        trace_every: 1,
    };
    let trace = solver::run(&system, &StateVector::zeros(100), &config, Some(&x_true)).unwrap();
    assert_eq!(trace.steps.len(), 10_000);

    let mut errors: Vec<f64> = trace.steps.iter().map(|s| s.error.unwrap()).collect();
    errors.push(trace.final_error.unwrap());
    let mut worst = 0.0f64;
    for (i, step) in trace.steps.iter().enumerate() {
        let before = errors[i].powi(2);
        let after = errors[i + 1].powi(2);
        let expected = before - step.residual_used.powi(2);
        assert!(before > 0.0, "error vanished at step {i}");
        let rel = (after - expected).abs() / before;
        assert!(rel <= 1e-9, "step {i}: relative deviation {rel:e}");
        worst = worst.max(rel);
    }

    let elapsed = start.elapsed();
    assert_within(elapsed, Duration::from_secs(5), "criterion 2");
    println!(
        "criterion 2 PASS: identity held over 10000 steps, worst relative deviation {worst:.3e}, {elapsed:?}"
    );
}

#[test]
fn criterion_3_tournament_exact_distribution() {
    let _guard = serial();
    let start = Instant::now();

    // The (3, 2, 1) case against the enumerator, exactly.
    let (system, x) = residual_case(&[3.0, 2.0, 1.0]);
    let exact = oracle::partially_weighted_probabilities(&system, &x).unwrap();
    assert!((exact.probabilities[0] - 5.0 / 6.0).abs() <= 1e-15);
    assert!((exact.probabilities[1] - 1.0 / 6.0).abs() <= 1e-15);
    assert_eq!(exact.probabilities[2], 0.0);

    let sets: Vec<Vec<f64>> = vec![
        vec![0.5],
        vec![1.0, 1.0],
        vec![3.0, 2.0, 1.0],
        vec![-0.3, 1.7, 0.4, -2.2],
        vec![0.7, -2.1, 1.4, 0.2, -0.9],
        vec![0.05, 1.0, 0.95, -0.6, 1.02, -0.33],
    ];
    let trials = 1_000_000u64;
    let mut rng = SeededRng::new(0xC3);
    let mut worst_sigma = 0.0f64;
    for rs in &sets {
        let (system, x) = residual_case(rs);
        let dist = oracle::partially_weighted_probabilities(&system, &x).unwrap();
        let mut counts = vec![0u64; rs.len()];
        for _ in 0..trials {
            counts[select_partially_weighted(&system, &x, &mut rng).row - 1] += 1;
        }
        for (idx, &p) in dist.probabilities.iter().enumerate() {
            let freq = counts[idx] as f64 / trials as f64;
            let se = (p * (1.0 - p) / trials as f64).sqrt();
            if se == 0.0 {
                // Probability exactly 0 or 1: the sample must agree exactly.
                assert_eq!(freq, p, "m = {}, row {}", rs.len(), idx + 1);
                continue;
            }
            let sigmas = (freq - p).abs() / se;
            worst_sigma = worst_sigma.max(sigmas);
            assert!(
                sigmas <= 3.0,
                "m = {}, row {}: {freq} vs {p} is {sigmas:.2} standard errors",
                rs.len(),
                idx + 1
            );
        }
    }

    let elapsed = start.elapsed();
    assert_within(elapsed, Duration::from_secs(30), "criterion 3");
    println!(
        "criterion 3 PASS: {} systems x {trials} trials, worst deviation {worst_sigma:.2} standard errors, {elapsed:?}",
        sets.len()
    );
}

#[test]
fn criterion_4_residual_count_shape() {
    let _guard = serial();
    let start = Instant::now();

    let mut summaries = Vec::new();
    for seed in [1001u64, 2002, 3003] {
        let scenarios = [
            ScenarioSpec {
                strategies: vec![SelectionStrategy::PartiallyWeighted],
                ..ScenarioSpec::nice(1000, 100.0, seed, 10_000)
            },
            ScenarioSpec {
                strategies: vec![SelectionStrategy::PartiallyWeighted],
                ..ScenarioSpec::challenging(1000, seed, 20_000)
            },
        ];
        for spec in scenarios {
            let runs = run_scenario(&spec).unwrap();
            let trace = &runs[0].trace;
            assert_eq!(trace.steps.len(), spec.iterations);
            let histogram = residual_count_histogram(trace);
            let total: u64 = histogram.values().sum();
            assert_eq!(total, spec.iterations as u64);

            let share2 = *histogram.get(&2).unwrap_or(&0) as f64 / total as f64;
            let mean = histogram
                .iter()
                .map(|(c, f)| *c as f64 * *f as f64)
                .sum::<f64>()
                / total as f64;
            let max = *histogram.keys().max().unwrap();
            let mode = *histogram
                .iter()
                .max_by_key(|(_, f)| **f)
                .map(|(c, _)| c)
                .unwrap();

            let label = format!("{} seed {seed}", spec.kind.label());
            assert!((0.40..=0.60).contains(&share2), "{label}: share2 = {share2}");
            assert!((2.5..=3.0).contains(&mean), "{label}: mean = {mean}");
            assert!(max <= 15, "{label}: max = {max}");
            assert_eq!(mode, 2, "{label}: mode = {mode}");
            summaries.push(format!("{label}: share2={share2:.4} mean={mean:.4} max={max}"));
        }
    }

    let elapsed = start.elapsed();
    assert_within(elapsed, Duration::from_secs(180), "criterion 4");
    println!("criterion 4 PASS in {elapsed:?}:");
    for line in summaries {
        println!("  {line}");
    }
}

#[test]
fn criterion_5_figure_ordering() {
    let _guard = serial();
    let start = Instant::now();

    let final_error = |runs: &[kaczmarz_lab::experiments::StrategyRun],
                       strategy: SelectionStrategy| {
        runs.iter()
            .find(|r| r.strategy == strategy)
            .expect("strategy present")
            .trace
            .final_error
            .expect("solution known")
    };

    let mut nice_uniform = Vec::new();
    let mut nice_partial = Vec::new();
    let mut nice_greedy = Vec::new();
    for seed in [101u64, 202, 303, 404, 505] {
        let runs = run_scenario(&ScenarioSpec::nice(1000, 100.0, seed, 10_000)).unwrap();
        // From x0 = 1 toward 0 the starting error is exactly sqrt(n).
        let initial = runs[0].trace.steps[0].error.unwrap();
        assert!((initial - 1000f64.sqrt()).abs() <= 1e-12);
        nice_uniform.push(final_error(&runs, SelectionStrategy::UniformRandom));
        nice_partial.push(final_error(&runs, SelectionStrategy::PartiallyWeighted));
        nice_greedy.push(final_error(&runs, SelectionStrategy::Greedy));
    }
    let med_uniform = median(&mut nice_uniform);
    let med_partial = median(&mut nice_partial);
    let med_greedy = median(&mut nice_greedy);
    assert!(
        med_greedy < med_partial && med_partial < med_uniform,
        "nice ordering violated: greedy {med_greedy:e}, partial {med_partial:e}, uniform {med_uniform:e}"
    );
    assert!(
        med_greedy * 10.0 <= med_uniform,
        "greedy should beat uniform by 10x: {med_greedy:e} vs {med_uniform:e}"
    );

    let floor = 1e-6 * 1000f64.sqrt();
    let mut chal_uniform = Vec::new();
    let mut chal_partial = Vec::new();
    let mut chal_greedy = Vec::new();
    for seed in [111u64, 222, 333, 444, 555] {
        let runs = run_scenario(&ScenarioSpec::challenging(1000, seed, 20_000)).unwrap();
        let uniform = final_error(&runs, SelectionStrategy::UniformRandom);
        assert!(
            uniform > floor,
            "challenging uniform converged implausibly fast: {uniform:e}"
        );
        chal_uniform.push(uniform);
        chal_partial.push(final_error(&runs, SelectionStrategy::PartiallyWeighted));
        chal_greedy.push(final_error(&runs, SelectionStrategy::Greedy));
    }
    let chal_med_uniform = median(&mut chal_uniform);
    let chal_med_partial = median(&mut chal_partial);
    let chal_med_greedy = median(&mut chal_greedy);
    assert!(
        chal_med_greedy <= chal_med_partial && chal_med_partial <= chal_med_uniform,
        "challenging ordering violated: greedy {chal_med_greedy:e}, partial {chal_med_partial:e}, uniform {chal_med_uniform:e}"
    );

    let elapsed = start.elapsed();
    assert_within(elapsed, Duration::from_secs(600), "criterion 5");
    println!(
        "criterion 5 PASS in {elapsed:?}: nice medians greedy {med_greedy:.3e} < partial {med_partial:.3e} < uniform {med_uniform:.3e} (ratio {:.0}x); challenging {chal_med_greedy:.3e} <= {chal_med_partial:.3e} <= {chal_med_uniform:.3e}",
        med_uniform / med_greedy
    );
}

#[test]
fn criterion_6_annihilation_and_no_repeat() {
    let _guard = serial();
    let start = Instant::now();

    // A square gaussian system is ill-conditioned enough that no strategy
    // reaches the tolerance inside the budget, so every recorded step is an
    // unconverged one.
    let (system, x_true) = random_consistent_system(400, 400, 0xa11);
    let x0 = StateVector::zeros(400);
    let strategies = [
        SelectionStrategy::Cyclic,
        SelectionStrategy::UniformRandom,
        SelectionStrategy::WeightedP { p: 2 },
        SelectionStrategy::Greedy,
        SelectionStrategy::PartiallyWeighted,
        SelectionStrategy::TwoSample,
    ];
    for strategy in strategies {
        let config = SolverConfig {
            strategy,
            max_iterations: 10_000,
            tolerance: 1e-10,
            seed: 0xa11 ^ 0x77,
            trace_every: 1,
        };
        let trace = solver::run(&system, &x0, &config, Some(&x_true)).unwrap();
        assert_eq!(trace.steps.len(), 10_000, "{strategy} converged early");

        // Replay the trace and check the selected row's residual vanishes
        // after each update.
        let mut x = x0.clone();
        for step in &trace.steps {
            x = kaczmarz_update(&x, system.row(step.selected_row), step.residual_used);
            let after = system.residual_entry(&x, step.selected_row).unwrap();
            let bound = 1e-10 * (1.0 + system.rhs_entry(step.selected_row).abs());
            assert!(
                after.abs() <= bound,
                "{strategy} step {}: residual {after:e} above {bound:e}",
                step.k
            );
        }

        // The residual-aware full-vector rules can never pick the same row
        // twice in a row while unconverged.
        if strategy.computes_full_residual() {
            for pair in trace.steps.windows(2) {
                assert_ne!(
                    pair[0].selected_row, pair[1].selected_row,
                    "{strategy} repeated row {} at step {}",
                    pair[0].selected_row, pair[1].k
                );
            }
        }

        // The pairwise-comparison rules repeat a just-updated row only in
        // degenerate ties, so their repeat frequency sits far below the
        // uniform baseline.
        if matches!(
            strategy,
            SelectionStrategy::PartiallyWeighted | SelectionStrategy::TwoSample
        ) {
            let repeats = trace
                .steps
                .windows(2)
                .filter(|p| p[0].selected_row == p[1].selected_row)
                .count();
            let freq = repeats as f64 / (trace.steps.len() - 1) as f64;
            let baseline = 1.1 / system.m() as f64;
            assert!(
                freq <= baseline,
                "{strategy}: repeat frequency {freq} above 1.1/m = {baseline}"
            );
        }
    }

    let elapsed = start.elapsed();
    println!(
        "criterion 6 PASS: annihilation held for {} strategies x 10000 steps; weighted-p and greedy never repeated a row ({elapsed:?})",
        strategies.len()
    );
}

#[test]
fn criterion_7_determinism_golden() {
    let _guard = serial();
    let start = Instant::now();

    let spec = ScenarioSpec::nice(200, 20.0, 777, 1500);
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    kaczmarz_lab::cli::cmd_compare(&spec, dir_a.path(), true).unwrap();

    // Second invocation through the binary with a different thread cap.
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_kaczmarz-lab"))
        .args([
            "compare",
            "--scenario",
            "nice",
            "--n",
            "200",
            "--shift",
            "20",
            "--iters",
            "1500",
            "--seed",
            "777",
            "--strategies",
            "uniform,partial,two-sample,greedy",
            "--plot",
            "--out",
        ])
        .arg(dir_b.path())
        .env(kaczmarz_lab::cli::THREADS_ENV_VAR, "1")
        .status()
        .expect("binary runs");
    assert!(status.success());

    let files = [
        "trace_uniform.csv",
        "trace_partial.csv",
        "trace_two-sample.csv",
        "trace_greedy.csv",
        "comparison.csv",
        "comparison.svg",
    ];
    for name in files {
        let a = std::fs::read(dir_a.path().join(name)).unwrap();
        let b = std::fs::read(dir_b.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs across invocations/thread caps");
        assert!(!a.is_empty());
    }

    // And a straight re-run in-process.
    let dir_c = tempfile::tempdir().unwrap();
    kaczmarz_lab::cli::cmd_compare(&spec, dir_c.path(), true).unwrap();
    for name in files {
        let a = std::fs::read(dir_a.path().join(name)).unwrap();
        let c = std::fs::read(dir_c.path().join(name)).unwrap();
        assert_eq!(a, c, "{name} differs across re-runs");
    }

    let elapsed = start.elapsed();
    println!(
        "criterion 7 PASS: {} output files byte-identical across invocations and thread caps ({elapsed:?})",
        files.len()
    );
}

#[test]
fn criterion_8_mean_count_limit() {
    let _guard = serial();
    let start = Instant::now();

    let m = 1000;
    let trials = 100_000u64;
    let mut rng = SeededRng::new(0xC8);
    let rows = vec![1.0; m];
    let x = StateVector::zeros(1);
    let mut total = 0u64;
    for _ in 0..trials {
        // Fresh i.i.d. continuous residuals each trial.
        let b: Vec<f64> = (0..m).map(|_| rng.uniform_real() * 2.0 - 1.0).collect();
        let system = DenseSystem::new(m, 1, rows.clone(), b).unwrap();
        total += select_partially_weighted(&system, &x, &mut rng).residuals_evaluated as u64;
    }
    let mean = total as f64 / trials as f64;
    assert!(
        (2.6..=2.85).contains(&mean),
        "mean residual count {mean} outside [2.6, 2.85]"
    );

    let elapsed = start.elapsed();
    println!(
        "criterion 8 PASS: mean residual count {mean:.4} over {trials} trials at m = {m} (limit e = {:.4}), {elapsed:?}",
        std::f64::consts::E
    );
}

// Desk-scale variant of the figure ordering; the reduced dimensions keep the
// whole comparison under a second.
#[test]
fn reduced_scale_ordering_holds() {
    let _guard = serial();
    for seed in [11u64, 22, 33] {
        let runs = run_scenario(&ScenarioSpec::nice(200, 20.0, seed, 4000)).unwrap();
        let error = |strategy| {
            runs.iter()
                .find(|r: &&kaczmarz_lab::experiments::StrategyRun| r.strategy == strategy)
                .unwrap()
                .trace
                .final_error
                .unwrap()
        };
        let greedy = error(SelectionStrategy::Greedy);
        let partial = error(SelectionStrategy::PartiallyWeighted);
        let uniform = error(SelectionStrategy::UniformRandom);
        assert!(
            greedy < partial && partial < uniform,
            "seed {seed}: greedy {greedy:e}, partial {partial:e}, uniform {uniform:e}"
        );
    }
}
