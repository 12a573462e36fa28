//! Command implementations behind the `kaczmarz-lab` binary.
//!
//! Every output file starts with comment headers pinning the artifact
//! version, the scenario, and the seeds, so re-running with the recorded
//! parameters reproduces the file byte for byte. Charts are written as
//! self-contained SVG with a log-scale error axis; strategies keep a fixed
//! color map (uniform = blue, partial = green, two-sample = orange,
//! greedy = red, cyclic = gray, weighted-p = purple).

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use crate::experiments::{run_scenario, ExperimentError, ScenarioSpec, StrategyRun};
use crate::linalg::fmt17;
use crate::oracle;
use crate::selection::SelectionStrategy;
use crate::solver::{residual_count_histogram, write_trace_csv, TraceMeta};

/// Environment variable capping comparison parallelism.
pub const THREADS_ENV_VAR: &str = "KACZMARZ_LAB_THREADS";

/// Seed of the built-in verification suite.
pub const VERIFY_SUITE_SEED: u64 = 0x6b61_637a;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error("the residual-count histogram requires the partial strategy")]
    MissingPartial,
    #[error("invalid {THREADS_ENV_VAR}: {0}")]
    InvalidThreads(String),
    #[error("failed to build thread pool: {0}")]
    ThreadPool(String),
}

/// Reads the thread cap from the environment, defaulting to `default`.
pub fn thread_cap(default: usize) -> Result<usize, CliError> {
    match std::env::var(THREADS_ENV_VAR) {
        Ok(raw) => {
            let threads: usize = raw
                .parse()
                .map_err(|_| CliError::InvalidThreads(format!("`{raw}` is not an integer")))?;
            if threads == 0 {
                return Err(CliError::InvalidThreads("must be at least 1".into()));
            }
            Ok(threads)
        }
        Err(_) => Ok(default.max(1)),
    }
}

pub fn strategy_color(strategy: SelectionStrategy) -> &'static str {
    match strategy {
        SelectionStrategy::UniformRandom => "blue",
        SelectionStrategy::PartiallyWeighted => "green",
        SelectionStrategy::TwoSample => "orange",
        SelectionStrategy::Greedy => "red",
        SelectionStrategy::Cyclic => "gray",
        SelectionStrategy::WeightedP { .. } => "purple",
    }
}

fn header_lines(spec: &ScenarioSpec) -> Vec<String> {
    vec![
        format!("kaczmarz-lab {}", env!("CARGO_PKG_VERSION")),
        format!(
            "scenario={} m={} n={} shift={} iterations={} scenario_seed={}",
            spec.kind.label(),
            spec.m,
            spec.n,
            spec.shift,
            spec.iterations,
            spec.seed
        ),
    ]
}

fn run_scenario_with_thread_cap(spec: &ScenarioSpec) -> Result<Vec<StrategyRun>, CliError> {
    let threads = thread_cap(spec.strategies.len())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::ThreadPool(e.to_string()))?;
    Ok(pool.install(|| run_scenario(spec))?)
}

/// Runs a comparison scenario and writes one trace CSV per strategy, a
/// combined `comparison.csv`, and (optionally) `comparison.svg`.
pub fn cmd_compare(spec: &ScenarioSpec, out_dir: &Path, plot: bool) -> Result<(), CliError> {
    spec.validate()?;
    fs::create_dir_all(out_dir)?;
    let runs = run_scenario_with_thread_cap(spec)?;

    for run in &runs {
        let meta = TraceMeta {
            seed: run.seed,
            strategy: run.strategy,
            m: spec.m,
            n: spec.n,
            extra_comments: header_lines(spec),
        };
        let path = out_dir.join(format!("trace_{}.csv", run.strategy.label()));
        let mut file = io::BufWriter::new(fs::File::create(path)?);
        write_trace_csv(&mut file, &run.trace, &meta)?;
    }

    let mut file = io::BufWriter::new(fs::File::create(out_dir.join("comparison.csv"))?);
    write_comparison_csv(&mut file, spec, &runs)?;
    drop(file);

    if plot {
        let svg = render_comparison_svg(spec, &runs);
        fs::write(out_dir.join("comparison.svg"), svg)?;
    }
    Ok(())
}

/// `comparison.csv`: one `k` column plus one error column per strategy.
fn write_comparison_csv(
    w: &mut impl Write,
    spec: &ScenarioSpec,
    runs: &[StrategyRun],
) -> io::Result<()> {
    for line in header_lines(spec) {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "# seed={}", spec.seed)?;
    let labels: Vec<&str> = runs.iter().map(|r| r.strategy.label()).collect();
    writeln!(w, "# strategies={}", labels.join(","))?;
    writeln!(w, "k,{}", labels.join(","))?;

    let max_k = runs.iter().map(|r| r.trace.steps.len()).max().unwrap_or(0);
    for k in 0..=max_k {
        let mut row = k.to_string();
        for run in runs {
            row.push(',');
            let steps = &run.trace.steps;
            let error = if k < steps.len() {
                steps[k].error
            } else if k == steps.len() {
                run.trace.final_error
            } else {
                None
            };
            if let Some(e) = error {
                row.push_str(&fmt17(e));
            }
        }
        writeln!(w, "{row}")?;
    }
    Ok(())
}

/// Runs the scenario and writes `residual_counts.csv` for the partial
/// strategy, printing the two-row frequency table to stdout.
pub fn cmd_hist(spec: &ScenarioSpec, out_dir: &Path) -> Result<(), CliError> {
    spec.validate()?;
    if !spec
        .strategies
        .contains(&SelectionStrategy::PartiallyWeighted)
    {
        return Err(CliError::MissingPartial);
    }
    fs::create_dir_all(out_dir)?;
    let runs = run_scenario_with_thread_cap(spec)?;
    let partial = runs
        .iter()
        .find(|r| r.strategy == SelectionStrategy::PartiallyWeighted)
        .expect("checked above");
    let histogram = residual_count_histogram(&partial.trace);

    let mut file = io::BufWriter::new(fs::File::create(out_dir.join("residual_counts.csv"))?);
    for line in header_lines(spec) {
        writeln!(file, "# {line}")?;
    }
    writeln!(file, "# seed={}", partial.seed)?;
    writeln!(file, "# strategy=partial")?;
    writeln!(file, "count,frequency")?;
    for (count, freq) in &histogram {
        writeln!(file, "{count},{freq}")?;
    }
    drop(file);

    let mut stdout = io::stdout().lock();
    print_residual_table(&mut stdout, &histogram)?;
    Ok(())
}

/// Prints the residual-count table in the two-row benchmark layout.
pub fn print_residual_table(
    w: &mut impl Write,
    histogram: &std::collections::BTreeMap<usize, u64>,
) -> io::Result<()> {
    let label_a = "# residuals";
    let label_b = "freq";
    let mut counts_row = format!("{label_a:<12}");
    let mut freq_row = format!("{label_b:<12}");
    for (count, freq) in histogram {
        let width = freq.to_string().len().max(count.to_string().len()) + 2;
        counts_row.push_str(&format!("{count:>width$}"));
        freq_row.push_str(&format!("{freq:>width$}"));
    }
    writeln!(w, "{counts_row}")?;
    writeln!(w, "{freq_row}")?;
    Ok(())
}

/// Runs the verification suite, printing one pass/fail line per check.
/// Returns whether every check passed.
pub fn cmd_verify(w: &mut impl Write) -> io::Result<bool> {
    let report = oracle::run_verification_suite(VERIFY_SUITE_SEED);
    writeln!(
        w,
        "verification suite (seed {VERIFY_SUITE_SEED}, {} systems, {} proposition instances)",
        report.systems_tested, report.proposition_instances
    )?;
    for check in &report.checks {
        let status = if check.passed { "PASS" } else { "FAIL" };
        writeln!(w, "{status}  {} — {}", check.name, check.detail)?;
    }
    let passed = report.checks.iter().filter(|c| c.passed).count();
    writeln!(w, "{passed}/{} checks passed", report.checks.len())?;
    Ok(report.all_passed())
}

// ---------------------------------------------------------------------------
// SVG chart
// ---------------------------------------------------------------------------

const CHART_WIDTH: f64 = 960.0;
const CHART_HEIGHT: f64 = 600.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 170.0;
const MARGIN_TOP: f64 = 48.0;
const MARGIN_BOTTOM: f64 = 64.0;
/// Polylines are decimated to at most this many points.
const MAX_POINTS_PER_SERIES: usize = 2000;

/// Renders the comparison chart: error per iteration, log-scale y, one
/// polyline per strategy in the documented colors.
pub fn render_comparison_svg(spec: &ScenarioSpec, runs: &[StrategyRun]) -> String {
    // (k, error) pairs; zero or negative errors cannot be drawn on a log
    // axis and are skipped (they only occur after exact convergence).
    let series: Vec<(SelectionStrategy, Vec<(f64, f64)>)> = runs
        .iter()
        .map(|run| {
            let mut points: Vec<(f64, f64)> = run
                .trace
                .steps
                .iter()
                .filter_map(|s| s.error.map(|e| (s.k as f64, e)))
                .filter(|&(_, e)| e > 0.0)
                .collect();
            if let Some(e) = run.trace.final_error.filter(|&e| e > 0.0) {
                points.push((run.trace.steps.len() as f64, e));
            }
            let stride = points.len().div_ceil(MAX_POINTS_PER_SERIES).max(1);
            let last = points.len().saturating_sub(1);
            let points = points
                .into_iter()
                .enumerate()
                .filter(|&(i, _)| i % stride == 0 || i == last)
                .map(|(_, p)| p)
                .collect();
            (run.strategy, points)
        })
        .collect();

    let x_max = series
        .iter()
        .flat_map(|(_, pts)| pts.iter().map(|p| p.0))
        .fold(1.0f64, f64::max);
    let (mut log_min, mut log_max) = series
        .iter()
        .flat_map(|(_, pts)| pts.iter().map(|p| p.1.log10()))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
    if !log_min.is_finite() || !log_max.is_finite() {
        log_min = -1.0;
        log_max = 1.0;
    }
    let mut dec_min = log_min.floor();
    let mut dec_max = log_max.ceil();
    if dec_max - dec_min < 1.0 {
        dec_min -= 1.0;
        dec_max += 1.0;
    }

    let plot_w = CHART_WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = CHART_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let x_pos = |k: f64| MARGIN_LEFT + k / x_max * plot_w;
    let y_pos =
        |e: f64| MARGIN_TOP + (dec_max - e.log10()) / (dec_max - dec_min) * plot_h;

    let mut svg = String::new();
    svg.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    svg.push_str(&format!(
        "<!-- kaczmarz-lab {} | scenario={} n={} seed={} -->\n",
        env!("CARGO_PKG_VERSION"),
        spec.kind.label(),
        spec.n,
        spec.seed
    ));
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{CHART_WIDTH}\" height=\"{CHART_HEIGHT}\" viewBox=\"0 0 {CHART_WIDTH} {CHART_HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">error per iteration — {} scenario (n={}, seed {})</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        spec.kind.label(),
        spec.n,
        spec.seed
    ));

    // Axes.
    let x0 = MARGIN_LEFT;
    let y0 = MARGIN_TOP + plot_h;
    svg.push_str(&format!(
        "<line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{:.2}\" y2=\"{y0:.2}\" stroke=\"black\"/>\n",
        MARGIN_LEFT + plot_w
    ));
    svg.push_str(&format!(
        "<line x1=\"{x0:.2}\" y1=\"{:.2}\" x2=\"{x0:.2}\" y2=\"{y0:.2}\" stroke=\"black\"/>\n",
        MARGIN_TOP
    ));

    // Y ticks at whole decades, thinned to at most ~12 labels.
    let decades = (dec_max - dec_min) as i64;
    let dec_step = (decades / 12 + 1).max(1);
    let mut dec = dec_min as i64;
    while dec <= dec_max as i64 {
        let y = y_pos(10f64.powi(dec as i32));
        svg.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{x0:.2}\" y2=\"{y:.2}\" stroke=\"black\"/>\n",
            x0 - 5.0
        ));
        svg.push_str(&format!(
            "<line x1=\"{x0:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#dddddd\"/>\n",
            MARGIN_LEFT + plot_w
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">1e{dec}</text>\n",
            x0 - 8.0,
            y + 4.0
        ));
        dec += dec_step;
    }

    // X ticks: five evenly spaced markers.
    for tick in 0..=5 {
        let k = x_max * tick as f64 / 5.0;
        let x = x_pos(k);
        svg.push_str(&format!(
            "<line x1=\"{x:.2}\" y1=\"{y0:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"black\"/>\n",
            y0 + 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{x:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
            y0 + 20.0,
            k.round() as u64
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">iteration k</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        y0 + 44.0
    ));
    svg.push_str(&format!(
        "<text x=\"20\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 20 {:.2})\" text-anchor=\"middle\">error</text>\n",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    ));

    // Data.
    for (strategy, points) in &series {
        if points.is_empty() {
            continue;
        }
        let coords: Vec<String> = points
            .iter()
            .map(|&(k, e)| format!("{:.2},{:.2}", x_pos(k), y_pos(e)))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            strategy_color(*strategy),
            coords.join(" ")
        ));
    }

    // Legend.
    let legend_x = MARGIN_LEFT + plot_w + 16.0;
    for (i, (strategy, _)) in series.iter().enumerate() {
        let y = MARGIN_TOP + 16.0 + i as f64 * 22.0;
        svg.push_str(&format!(
            "<line x1=\"{legend_x:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"{}\" stroke-width=\"2\"/>\n",
            legend_x + 24.0,
            strategy_color(*strategy)
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"13\">{}</text>\n",
            legend_x + 30.0,
            y + 4.0,
            strategy.label()
        ));
    }

    svg.push_str("</svg>\n");
    svg
}
