//! Subcommand implementations.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::Serialize;
use spp_balance::{run_parallel, ParallelConfig, RunError, Runtime, SimConfig, TransportKind};
use spp_core::metrics::{report as render, to_csv, ReportFormat, RunStats, Spread, ThreadStats};
use spp_core::{
    generate as draw, solve_sequential, ClusterTopology, CoreAddr, GeneratorParams, InstanceError, SolveError,
    SolveStatus, SolverConfig, SppInstance,
};

use crate::units::{format_size, parse_sweep};
use crate::{
    BenchArgs, BenchMode, GenerateArgs, OutputArgs, ReportArgs, RunArgs, SolveArgs, EXIT_ERROR, EXIT_INFEASIBLE,
    EXIT_NO_SOLUTION, EXIT_RESOURCE, EXIT_USAGE,
};

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn error(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_ERROR,
            message: message.into(),
        }
    }

    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn read(path: &Path, what: &str) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::error(format!("cannot read {what} {}: {e}", path.display())))
}

fn load_instance(path: &Path) -> CliResult<SppInstance> {
    let mut inst = SppInstance::parse(&read(path, "instance")?)
        .map_err(|e| CliError::error(format!("{}: {e}", path.display())))?;
    if inst.name.is_empty() {
        inst.name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
    }
    Ok(inst)
}

fn load_topology(path: &Path) -> CliResult<ClusterTopology> {
    ClusterTopology::load(&read(path, "topology")?).map_err(|e| CliError::error(format!("{}: {e}", path.display())))
}

fn status_code(status: SolveStatus) -> u8 {
    match status {
        SolveStatus::Optimal => 0,
        SolveStatus::Infeasible => EXIT_INFEASIBLE,
        SolveStatus::NoSolutionWithinCutoff => EXIT_NO_SOLUTION,
    }
}

pub fn generate(a: &GenerateArgs) -> CliResult<u8> {
    let params = GeneratorParams {
        m_items: a.items as usize,
        n_vars: a.vars as usize,
        p: a.p,
        seed: a.seed,
        ensure_coverage: !a.no_coverage,
        cost_min: a.cost_min,
        cost_max: a.cost_max,
    };
    let inst = draw(&params).map_err(|e| match e {
        InstanceError::InvalidProbability(_) | InstanceError::InvalidCostRange { .. } => CliError::usage(e.to_string()),
        other => CliError::error(other.to_string()),
    })?;
    let text = inst.serialize().map_err(|e| CliError::error(e.to_string()))?;
    fs::create_dir_all(&a.out_dir).map_err(|e| CliError::error(format!("{}: {e}", a.out_dir.display())))?;
    let path = a.out_dir.join(params.file_name());
    fs::write(&path, text).map_err(|e| CliError::error(format!("{}: {e}", path.display())))?;
    println!("{}", path.display());
    Ok(0)
}

fn parallel_config(run: &RunArgs, balancing: bool, list_limit: Option<usize>) -> ParallelConfig {
    let runtime = if run.deterministic_scheduler {
        Runtime::Simulated(SimConfig::with_seed(run.seed))
    } else {
        Runtime::Threads {
            transport: run.transport,
            timeout: run.timeout.map(Duration::from_secs_f64),
        }
    };
    ParallelConfig {
        traversal: run.traversal,
        list_limit,
        nt: run.nt as usize,
        balancing,
        cutoff: run.cutoff,
        node_limit: run.node_limit,
        runtime,
        ..ParallelConfig::default()
    }
}

fn run_error(e: RunError) -> CliError {
    let code = match e {
        RunError::NodeLimit(_) | RunError::EventLimit(_) | RunError::Timeout(_) => EXIT_RESOURCE,
        RunError::Transport(_) | RunError::Config(_) => EXIT_ERROR,
    };
    CliError {
        code,
        message: e.to_string(),
    }
}

fn sequential(inst: &SppInstance, run: &RunArgs) -> CliResult<RunStats> {
    let cfg = SolverConfig {
        traversal: run.traversal,
        budget_bytes: run.list_limit,
        cutoff: run.cutoff,
        node_limit: run.node_limit,
    };
    let start = Instant::now();
    let sol = solve_sequential(inst, &cfg).map_err(|e| match e {
        SolveError::NodeLimit(_) => CliError {
            code: EXIT_RESOURCE,
            message: e.to_string(),
        },
    })?;
    let wall = start.elapsed().as_secs_f64();
    let mut thread = ThreadStats::new(CoreAddr {
        machine: 0,
        processor: 0,
        core: 0,
    });
    thread.busy_seconds = wall;
    thread.counters = sol.counters;
    Ok(RunStats {
        instance: inst.name.clone(),
        topology: "sequential".into(),
        balancing: false,
        status: sol.status,
        best_cost: sol.best_cost,
        wall_seconds: wall,
        threads: vec![thread],
        leader: Default::default(),
        seq_seconds: None,
    })
}

fn parallel(inst: &SppInstance, topo: &ClusterTopology, cfg: &ParallelConfig) -> CliResult<RunStats> {
    let out = run_parallel(inst, topo, cfg).map_err(run_error)?;
    if !out.audit.is_clean() {
        eprintln!("warning: run audit failed: {:?}", out.audit);
    }
    Ok(out.stats)
}

fn emit(out: &OutputArgs, text: &str) -> CliResult<()> {
    match &out.output {
        Some(path) => fs::write(path, text).map_err(|e| CliError::error(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
            Ok(())
        }
    }
}

fn render_runs(all: &[RunStats], out: &OutputArgs) -> CliResult<String> {
    let fail = |e: spp_core::metrics::MetricsError| CliError::error(e.to_string());
    match (out.json, all) {
        (true, [one]) => render(one, ReportFormat::Json).map_err(fail),
        (true, _) => {
            let rows: Vec<_> = all.iter().map(RunStats::summary_row).collect();
            serde_json::to_string_pretty(&rows).map_err(|e| CliError::error(e.to_string()))
        }
        (false, _) if out.threads => {
            let rows: Vec<_> = all.iter().flat_map(RunStats::thread_rows).collect();
            to_csv(&rows).map_err(fail)
        }
        (false, _) => {
            let rows: Vec<_> = all.iter().map(RunStats::summary_row).collect();
            to_csv(&rows).map_err(fail)
        }
    }
}

pub fn solve(a: &SolveArgs) -> CliResult<u8> {
    let inst = load_instance(&a.run.instance)?;
    let stats = match &a.run.topology {
        Some(path) => {
            let topo = load_topology(path)?;
            parallel(
                &inst,
                &topo,
                &parallel_config(&a.run, !a.run.no_balance, a.run.list_limit),
            )?
        }
        None => {
            if a.run.deterministic_scheduler || a.run.no_balance || a.run.transport != TransportKind::Memory {
                eprintln!("warning: scheduler, balancing and transport flags need --topology; solving sequentially");
            }
            sequential(&inst, &a.run)?
        }
    };
    eprintln!(
        "{}: {:?} cost {} ({} nodes, {:.6}s on {})",
        stats.instance,
        stats.status,
        stats.best_cost.map_or("-".into(), |c| c.to_string()),
        stats.total_nodes(),
        stats.wall_seconds,
        stats.topology
    );
    emit(&a.out, &render_runs(std::slice::from_ref(&stats), &a.out)?)?;
    Ok(status_code(stats.status))
}

/// One repetition, or the aggregate of a sweep point when `repetition` is
/// `"aggregate"` (means, with population standard deviations in `*_sd`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub instance: String,
    pub topology: String,
    pub list_limit: String,
    pub nt: usize,
    pub balancing: bool,
    pub repetition: String,
    pub status: SolveStatus,
    pub best_cost: Option<u64>,
    pub wall_seconds: f64,
    pub wall_seconds_sd: Option<f64>,
    pub total_nodes: f64,
    pub un_factor: f64,
    pub un_factor_sd: Option<f64>,
    /// Mean Un_Factor of the other balancing mode at the same point.
    pub paired_un_factor: Option<f64>,
    pub cv: Option<f64>,
    pub cv_sd: Option<f64>,
    pub local_req: f64,
    pub local_req_sd: Option<f64>,
    pub global_req: f64,
    pub global_req_sd: Option<f64>,
    pub speedup: Option<f64>,
    pub efficiency: Option<f64>,
}

fn aggregate(runs: &[RunStats], template: &BenchRow) -> BenchRow {
    let spread =
        |f: &dyn Fn(&RunStats) -> f64| Spread::of(&runs.iter().map(f).collect::<Vec<_>>()).expect("at least one run");
    let wall = spread(&|s| s.wall_seconds);
    let unf = spread(&|s| s.un_factor());
    let local = spread(&|s| s.local_req() as f64);
    let global = spread(&|s| s.global_req() as f64);
    let cvs: Vec<f64> = runs.iter().filter_map(RunStats::cv).collect();
    let cv = Spread::of(&cvs);
    let speedups: Vec<(f64, f64)> = runs.iter().filter_map(RunStats::speedup_efficiency).collect();
    let mean = |xs: Vec<f64>| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
    BenchRow {
        repetition: "aggregate".into(),
        wall_seconds: wall.mean,
        wall_seconds_sd: Some(wall.stddev),
        total_nodes: spread(&|s| s.total_nodes() as f64).mean,
        un_factor: unf.mean,
        un_factor_sd: Some(unf.stddev),
        cv: cv.map(|c| c.mean),
        cv_sd: cv.map(|c| c.stddev),
        local_req: local.mean,
        local_req_sd: Some(local.stddev),
        global_req: global.mean,
        global_req_sd: Some(global.stddev),
        speedup: mean(speedups.iter().map(|s| s.0).collect()),
        efficiency: mean(speedups.iter().map(|s| s.1).collect()),
        ..template.clone()
    }
}

fn repetition_row(stats: &RunStats, rep: usize, template: &BenchRow) -> BenchRow {
    let se = stats.speedup_efficiency();
    BenchRow {
        repetition: rep.to_string(),
        status: stats.status,
        best_cost: stats.best_cost,
        wall_seconds: stats.wall_seconds,
        total_nodes: stats.total_nodes() as f64,
        un_factor: stats.un_factor(),
        cv: stats.cv(),
        local_req: stats.local_req() as f64,
        global_req: stats.global_req() as f64,
        speedup: se.map(|s| s.0),
        efficiency: se.map(|s| s.1),
        ..template.clone()
    }
}

/// One worker on one machine, for speedup baselines.
fn single_core(topo: &ClusterTopology) -> ClusterTopology {
    let cache = topo.machines[0].processors[0]
        .caches
        .iter()
        .map(|c| c.cmc_bytes)
        .max()
        .unwrap_or(6 * spp_core::mcm::MIB);
    ClusterTopology::uniform(1, 1, 1, cache, 0.0)
}

pub fn bench(a: &BenchArgs) -> CliResult<u8> {
    let Some(topo_path) = &a.run.topology else {
        return Err(CliError::usage("bench needs --topology"));
    };
    if a.out.threads {
        return Err(CliError::usage(
            "bench reports aggregate rows; --threads applies to solve and report",
        ));
    }
    let inst = load_instance(&a.run.instance)?;
    let topo = load_topology(topo_path)?;
    let limits: Vec<Option<usize>> = if a.list_limits.is_empty() {
        vec![a.run.list_limit]
    } else {
        parse_sweep(&a.list_limits)
            .map_err(CliError::usage)?
            .into_iter()
            .map(Some)
            .collect()
    };
    let modes: &[bool] = match a.mode {
        BenchMode::With => &[true],
        BenchMode::Without => &[false],
        BenchMode::Both => &[false, true],
    };
    let reps = a.repetitions as usize;
    let mut rows = Vec::new();
    let mut code = 0;
    for limit in limits {
        let seq_seconds = if a.seq_baseline {
            let cfg = parallel_config(&a.run, false, limit);
            Some(parallel(&inst, &single_core(&topo), &cfg)?.wall_seconds)
        } else {
            None
        };
        let mut point_aggregates = Vec::new();
        for &balancing in modes {
            let cfg = parallel_config(&a.run, balancing, limit);
            let template = BenchRow {
                instance: inst.name.clone(),
                topology: spp_balance::topology_label(&topo),
                list_limit: limit.map_or("cache".into(), format_size),
                nt: cfg.nt,
                balancing,
                repetition: String::new(),
                status: SolveStatus::Optimal,
                best_cost: None,
                wall_seconds: 0.0,
                wall_seconds_sd: None,
                total_nodes: 0.0,
                un_factor: 0.0,
                un_factor_sd: None,
                paired_un_factor: None,
                cv: None,
                cv_sd: None,
                local_req: 0.0,
                local_req_sd: None,
                global_req: 0.0,
                global_req_sd: None,
                speedup: None,
                efficiency: None,
            };
            let mut runs = Vec::with_capacity(reps);
            for rep in 1..=reps {
                let mut stats = parallel(&inst, &topo, &cfg)?;
                stats.seq_seconds = seq_seconds;
                code = status_code(stats.status);
                rows.push(repetition_row(&stats, rep, &template));
                runs.push(stats);
            }
            let last = repetition_row(runs.last().expect("repetitions >= 1"), reps, &template);
            let agg = aggregate(
                &runs,
                &BenchRow {
                    status: last.status,
                    best_cost: last.best_cost,
                    ..template
                },
            );
            point_aggregates.push(rows.len());
            rows.push(agg);
        }
        if let [a, b] = point_aggregates[..] {
            let (ua, ub) = (rows[a].un_factor, rows[b].un_factor);
            rows[a].paired_un_factor = Some(ub);
            rows[b].paired_un_factor = Some(ua);
        }
    }
    let text = if a.out.json {
        serde_json::to_string_pretty(&rows).map_err(|e| CliError::error(e.to_string()))?
    } else {
        to_csv(&rows).map_err(|e| CliError::error(e.to_string()))?
    };
    emit(&a.out, &text)?;
    Ok(code)
}

pub fn report(a: &ReportArgs) -> CliResult<u8> {
    let mut all = Vec::with_capacity(a.files.len());
    for path in &a.files {
        let stats: RunStats = serde_json::from_str(&read(path, "report")?)
            .map_err(|e| CliError::error(format!("{}: not a JSON run report: {e}", path.display())))?;
        if !stats.is_conserved() {
            eprintln!("warning: {}: created and consumed node counts differ", path.display());
        }
        all.push(stats);
    }
    emit(&a.out, &render_runs(&all, &a.out)?)?;
    Ok(0)
}
