use std::fs;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vifbf_core::due::{
    fixture, od_gap, read_network, scenario_problem, support_check, support_threshold, Network,
    NetworkFiles, PathSet,
};
use vifbf_core::operators::{builtin_problem, estimate_lipschitz};
use vifbf_core::solvers::{
    solve_extragradient, solve_fbf, solve_projected_gradient, solve_tseng_plain, IterationRecord,
    SolveResult, Status, StepRule,
};
use vifbf_core::{HVector, VIProblem};

use crate::config::{ExperimentConfig, SolverConfig, SolverKind, StepKind};
use crate::{exit_code, HarnessError};

/// Environment variable that replaces the output root.
pub const OUTPUT_ROOT_ENV: &str = "VIFBF_OUTPUT_ROOT";

pub const TRACE_COLUMNS: &[&str] = &[
    "iter",
    "eps",
    "residual",
    "gamma",
    "dist_to_known",
    "evals",
    "projections",
    "x_norm",
    "step_norm",
    "ms",
];

pub const SUMMARY_COLUMNS: &[&str] = &[
    "solver",
    "kind",
    "status",
    "iterations",
    "evals",
    "projections",
    "eps",
    "residual",
    "dist_to_known",
    "max_gap",
    "trace",
    "ms",
];

/// Default steps as fractions of `1/L`.
const DEFAULT_ADAPTIVE_FRACTION: f64 = 1.0;
const DEFAULT_CONSTANT_FRACTION: f64 = 0.5;
/// Sampled pairs behind the Lipschitz estimate of problems without an
/// analytic bound.
const LIPSCHITZ_SAMPLES: usize = 200;
const LIPSCHITZ_SEED: u64 = 0;

/// A problem ready to solve, with its network for DUE instances.
pub struct BuiltProblem {
    pub problem: VIProblem,
    pub network: Option<(Network, PathSet)>,
}

impl BuiltProblem {
    /// Lipschitz constant that scales default steps: the analytic bound, or
    /// a seeded sampled estimate when the problem has none.
    pub fn step_scale(&self) -> vifbf_core::Result<f64> {
        match self.problem.lipschitz_hint {
            Some(l) => Ok(l),
            None => estimate_lipschitz(&self.problem, LIPSCHITZ_SAMPLES, LIPSCHITZ_SEED),
        }
    }
}

/// Builds the configured problem. Relative network paths are resolved
/// against `base_dir`.
pub fn build_problem(
    config: &ExperimentConfig,
    base_dir: &Path,
) -> Result<BuiltProblem, HarnessError> {
    let p = &config.problem;
    if let Some(files) = &p.network {
        let resolve = |f: &PathBuf| base_dir.join(f);
        let files = NetworkFiles {
            nodes: resolve(&files.nodes),
            links: resolve(&files.links),
            od: resolve(&files.od),
            paths: resolve(&files.paths),
        };
        let (net, paths) = read_network(&files).map_err(HarnessError::Problem)?;
        return due_problem(config, net, paths);
    }
    let name = p.builtin.as_deref().unwrap_or_default();
    if name == "due" {
        let scenario = config.due_scenario()?;
        let (net, paths) = fixture(&scenario.fixture).map_err(HarnessError::Problem)?;
        return due_problem(config, net, paths);
    }
    let problem =
        builtin_problem(name, &config.problem_params()?).map_err(HarnessError::Problem)?;
    Ok(BuiltProblem {
        problem,
        network: None,
    })
}

fn due_problem(
    config: &ExperimentConfig,
    net: Network,
    paths: PathSet,
) -> Result<BuiltProblem, HarnessError> {
    let scenario = config.due_scenario()?;
    let problem =
        scenario_problem(net.clone(), paths.clone(), &scenario).map_err(HarnessError::Problem)?;
    Ok(BuiltProblem {
        problem,
        network: Some((net, paths)),
    })
}

/// Outcome of one solver.
#[derive(Debug, Clone)]
pub struct SolverReport {
    pub label: String,
    pub kind: SolverKind,
    pub status: Status,
    pub iterations: usize,
    pub evals: usize,
    pub projections: usize,
    pub final_eps: f64,
    pub final_residual: f64,
    pub dist_to_known: Option<f64>,
    pub trace_path: PathBuf,
    /// Per o/d pair gap at the final feasible point (DUE only).
    pub gaps: Option<Vec<f64>>,
    pub gap_path: Option<PathBuf>,
    pub histogram: Option<Vec<usize>>,
    pub histogram_path: Option<PathBuf>,
    pub wall_time: Duration,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub output_dir: PathBuf,
    pub summary_path: PathBuf,
    pub solvers: Vec<SolverReport>,
}

impl RunReport {
    pub fn all_converged(&self) -> bool {
        self.solvers.iter().all(|s| s.status == Status::Converged)
    }

    pub fn exit_code(&self) -> i32 {
        if self.all_converged() {
            exit_code::SUCCESS
        } else {
            exit_code::NOT_CONVERGED
        }
    }
}

/// Counts of `values` per bin `[edges[i], edges[i + 1])`. Values below the
/// first edge fall in the first bin and values at or above the last edge in
/// the last one, so the counts always sum to `values.len()`.
pub fn gap_histogram(values: &[f64], edges: &[f64]) -> Vec<usize> {
    let bins = edges.len().saturating_sub(1).max(1);
    let mut counts = vec![0; bins];
    for &v in values {
        let upper = edges[1..].partition_point(|&e| e <= v);
        counts[upper.min(bins - 1)] += 1;
    }
    counts
}

/// Runs every solver of a validated config. Relative network paths resolve
/// against `base_dir`; the output directory resolves against `output_root`.
pub fn run(
    config: &ExperimentConfig,
    base_dir: &Path,
    output_root: &Path,
) -> Result<RunReport, HarnessError> {
    config.validate()?;
    let built = build_problem(config, base_dir)?;
    let lipschitz = built.step_scale().map_err(HarnessError::Problem)?;
    let output_dir = output_root.join(&config.output.dir);
    fs::create_dir_all(&output_dir).map_err(|source| HarnessError::Io {
        path: output_dir.clone(),
        source,
    })?;

    let reports: Vec<Result<SolverReport, HarnessError>> = thread::scope(|scope| {
        let handles: Vec<_> = config
            .solvers
            .iter()
            .enumerate()
            .map(|(i, solver)| {
                let (built, output_dir) = (&built, &output_dir);
                scope.spawn(move || run_solver(config, built, lipschitz, i, solver, output_dir))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("solver thread panicked"))
            .collect()
    });
    let solvers = reports.into_iter().collect::<Result<Vec<_>, _>>()?;

    let summary_path = output_dir.join("summary.csv");
    write_summary(&summary_path, &solvers, config.output.record_wall_time)?;
    Ok(RunReport {
        output_dir,
        summary_path,
        solvers,
    })
}

fn step_size(solver: &SolverConfig, default_fraction: f64, lipschitz: f64) -> f64 {
    if let Some(g) = solver.gamma {
        return g;
    }
    let fraction = solver.gamma_lipschitz_fraction.unwrap_or(default_fraction);
    if lipschitz > 0.0 {
        fraction / lipschitz
    } else {
        fraction
    }
}

fn start_point(problem: &VIProblem, seed: Option<u64>) -> vifbf_core::Result<HVector> {
    let (channels, bins) = problem.shape();
    match seed {
        None => problem
            .set
            .project_point(&HVector::zeros(channels, bins), &problem.grid),
        Some(s) => problem
            .set
            .sample(&problem.grid, &mut ChaCha8Rng::seed_from_u64(s)),
    }
}

fn solve(
    problem: &VIProblem,
    label: &str,
    solver: &SolverConfig,
    lipschitz: f64,
    x0: &HVector,
) -> Result<SolveResult, HarnessError> {
    let wrap = |source| HarnessError::Solver {
        label: label.to_string(),
        source,
    };
    let options = solver.options();
    let constant = step_size(solver, DEFAULT_CONSTANT_FRACTION, lipschitz);
    let rule = match solver.step_kind() {
        StepKind::Adaptive => StepRule::Adaptive {
            gamma0: step_size(solver, DEFAULT_ADAPTIVE_FRACTION, lipschitz),
            rho: solver.rho_step,
        },
        StepKind::Constant => StepRule::Constant { gamma: constant },
    };
    let result = match solver.kind {
        SolverKind::Fbf => {
            let schedule = solver.schedule().map_err(wrap)?;
            solve_fbf(problem, rule, &schedule, x0, options)
        }
        SolverKind::Tseng => solve_tseng_plain(problem, rule, x0, options),
        SolverKind::Extragradient => solve_extragradient(problem, constant, x0, options),
        SolverKind::ProjectedGradient => solve_projected_gradient(problem, constant, x0, options),
    };
    result.map_err(wrap)
}

fn run_solver(
    config: &ExperimentConfig,
    built: &BuiltProblem,
    lipschitz: f64,
    index: usize,
    solver: &SolverConfig,
    output_dir: &Path,
) -> Result<SolverReport, HarnessError> {
    let label = solver.label(index);
    let problem = &built.problem;
    let x0 = start_point(problem, solver.seed).map_err(|source| HarnessError::Solver {
        label: label.clone(),
        source,
    })?;
    let started = Instant::now();
    let result = solve(problem, &label, solver, lipschitz, &x0)?;
    let wall_time = started.elapsed();
    log::info!(
        "{label}: {} after {} iterations ({:.3} s)",
        result.status.as_str(),
        result.iterations,
        wall_time.as_secs_f64()
    );

    let trace_path = output_dir.join(format!("{label}.trace.csv"));
    write_trace(
        &trace_path,
        &result.trace.records,
        config.output.record_wall_time,
    )?;
    let last = result.trace.last();

    let mut report = SolverReport {
        label: label.clone(),
        kind: solver.kind,
        status: result.status,
        iterations: result.iterations,
        evals: result.evals,
        projections: result.projections,
        final_eps: last.map_or(f64::NAN, |r| r.eps),
        final_residual: last.map_or(f64::NAN, |r| r.residual),
        dist_to_known: last.and_then(|r| r.dist_to_known),
        trace_path,
        gaps: None,
        gap_path: None,
        histogram: None,
        histogram_path: None,
        wall_time,
    };

    if let Some((net, paths)) = &built.network {
        let h = &result.feasible_point;
        let psi = problem.evaluate(h).map_err(|source| HarnessError::Solver {
            label: label.clone(),
            source,
        })?;
        let theta = support_threshold(h);
        let gaps: Vec<f64> = od_gap(h, &psi, paths.owner(), theta)
            .into_iter()
            .map(|g| g.unwrap_or(0.0))
            .collect();
        let support = support_check(h, &psi, paths.owner(), theta);
        let gap_path = output_dir.join(format!("{label}.gaps.csv"));
        write_gaps(&gap_path, net, &gaps, &support)?;
        let edges = &config.output.gap_edges;
        let counts = gap_histogram(&gaps, edges);
        let histogram_path = output_dir.join(format!("{label}.gap_histogram.csv"));
        write_histogram(&histogram_path, edges, &counts)?;
        report.gaps = Some(gaps);
        report.gap_path = Some(gap_path);
        report.histogram = Some(counts);
        report.histogram_path = Some(histogram_path);
    }
    Ok(report)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, HarnessError> {
    csv::Writer::from_path(path).map_err(|source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    })
}

fn write_rows(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<(), HarnessError> {
    let csv_err = |source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn write_trace(
    path: &Path,
    records: &[IterationRecord],
    record_wall_time: bool,
) -> Result<(), HarnessError> {
    let rows = records.iter().map(|r| {
        vec![
            r.iter.to_string(),
            r.eps.to_string(),
            r.residual.to_string(),
            r.gamma.to_string(),
            opt(r.dist_to_known),
            r.evals.to_string(),
            r.projections.to_string(),
            r.x_norm.to_string(),
            r.step_norm.to_string(),
            if record_wall_time {
                r.wall_time_ms.to_string()
            } else {
                String::new()
            },
        ]
    });
    write_rows(path, TRACE_COLUMNS, rows)
}

fn write_gaps(
    path: &Path,
    net: &Network,
    gaps: &[f64],
    support: &vifbf_core::due::SupportReport,
) -> Result<(), HarnessError> {
    let rows = net.od_pairs().iter().enumerate().map(|(w, od)| {
        let excess = support.worst_excess[w].map(|e| e / support.min_cost[w].abs());
        vec![
            w.to_string(),
            od.origin.to_string(),
            od.destination.to_string(),
            gaps[w].to_string(),
            support.min_cost[w].to_string(),
            opt(excess),
        ]
    });
    write_rows(
        path,
        &[
            "od",
            "origin",
            "destination",
            "gap",
            "min_cost",
            "worst_relative_excess",
        ],
        rows,
    )
}

fn write_histogram(path: &Path, edges: &[f64], counts: &[usize]) -> Result<(), HarnessError> {
    let rows = counts.iter().enumerate().map(|(i, c)| {
        vec![
            edges[i].to_string(),
            edges[i + 1].to_string(),
            c.to_string(),
        ]
    });
    write_rows(path, &["lower", "upper", "count"], rows)
}

fn write_summary(
    path: &Path,
    solvers: &[SolverReport],
    record_wall_time: bool,
) -> Result<(), HarnessError> {
    let rows = solvers.iter().map(|s| {
        let max_gap = s
            .gaps
            .as_ref()
            .map(|g| g.iter().copied().fold(0.0, f64::max));
        vec![
            s.label.clone(),
            s.kind.as_str().to_string(),
            s.status.as_str().to_string(),
            s.iterations.to_string(),
            s.evals.to_string(),
            s.projections.to_string(),
            s.final_eps.to_string(),
            s.final_residual.to_string(),
            opt(s.dist_to_known),
            opt(max_gap),
            s.trace_path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            if record_wall_time {
                (s.wall_time.as_secs_f64() * 1e3).to_string()
            } else {
                String::new()
            },
        ]
    });
    write_rows(path, SUMMARY_COLUMNS, rows)
}

/// Histograms of every `*.gaps.csv` file in `dir`, sorted by file name.
pub fn gap_report(dir: &Path, edges: &[f64]) -> Result<Vec<(String, Vec<usize>)>, HarnessError> {
    let io_err = |source| HarnessError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io_err)?;
    files.retain(|p| {
        p.file_name()
            .is_some_and(|n| n.to_string_lossy().ends_with(".gaps.csv"))
    });
    files.sort();
    let mut out = Vec::new();
    for path in files {
        let csv_err = |source| HarnessError::Csv {
            path: path.clone(),
            source,
        };
        let mut reader = csv::Reader::from_path(&path).map_err(csv_err)?;
        let column = reader
            .headers()
            .map_err(csv_err)?
            .iter()
            .position(|h| h == "gap")
            .ok_or_else(|| HarnessError::Io {
                path: path.clone(),
                source: std::io::Error::new(std::io::ErrorKind::InvalidData, "no `gap` column"),
            })?;
        let mut values = Vec::new();
        for record in reader.records() {
            let record = record.map_err(csv_err)?;
            let v: f64 = record[column].parse().map_err(|_| HarnessError::Io {
                path: path.clone(),
                source: std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("bad gap value `{}`", &record[column]),
                ),
            })?;
            values.push(v);
        }
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        out.push((name, gap_histogram(&values, edges)));
    }
    Ok(out)
}
