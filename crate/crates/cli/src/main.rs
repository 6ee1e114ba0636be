use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use contact_core::bounds::{self, BoundReport, BOUND_NAMES};
use contact_core::engine::{simulate_direct, Configuration, SimOptions};
use contact_core::harness::{
    duality_audit, emit_report, lambda2_bisect, read_records, records_to_csv, run_experiment, summarize,
    BisectOptions, ExperimentKind, ExperimentSpec, HarnessError, Lambda2Estimate, ReportFormat, RunRecord,
};
use contact_core::oracle::{
    enumerate_dual_paths, small_graph_extinction_time, small_graph_stationary, star_chain_solve,
};
use contact_core::seed;
use contact_core::starchain::ignition_levels;
use contact_core::topology::{graph_stats, DegreeSpec, Graph, GraphSpec, VertexId};

#[derive(Parser)]
#[command(name = "cptree", version, about = "Contact process on stars and periodic trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a graph and print its level structure.
    Topo {
        /// e.g. star:10, periodic:5:1,2:6, pinned:2, hubpair:20:1
        graph: String,
        /// Also list the edges.
        #[arg(long)]
        edges: bool,
    },
    /// One direct simulation with occupancy probes.
    Sim(SimArgs),
    /// Extinction times from the all-occupied start.
    Survival(ExperimentArgs),
    /// Star ignition: does the leaf count reach K and then L before dying out?
    Ignite(ExperimentArgs),
    /// Reduced chain from L-1 until it drops below ⌈ηL⌉ or reaches L.
    Chain(ExperimentArgs),
    /// Hub-to-hub relay on a hub-pair graph.
    Relay(ExperimentArgs),
    /// Bisect the finite local-survival proxy, or probe it at one λ.
    Lambda2(Lambda2Args),
    /// Evaluate a named bound: `bounds survival_bracket n=300 lambda=0.14 eps=0.5 eta=0.5 c0=10`.
    Bounds {
        name: Option<String>,
        /// key=value arguments.
        args: Vec<String>,
        #[arg(long)]
        list: bool,
        #[arg(long)]
        csv: bool,
    },
    /// Exact solves on stars and small graphs.
    Oracle {
        #[command(subcommand)]
        which: OracleCommand,
    },
    /// Pathwise duality, additivity and monotonicity audit.
    Audit(ExperimentArgs),
    /// Summaries, JSON and SVG plots from record CSVs and λ₂ estimates.
    Report {
        /// Record CSV files written by the experiment subcommands.
        #[arg(long, num_args = 1..)]
        records: Vec<PathBuf>,
        /// JSON files written by `lambda2`.
        #[arg(long, num_args = 1..)]
        lambda2: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "csv,json,svg")]
        format: Vec<String>,
    },
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Star chain: E T from all occupied and from the center, ignition probabilities.
    Star {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        lambda: f64,
        #[arg(long = "K")]
        k: Option<u64>,
        #[arg(long = "L")]
        l: Option<u64>,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
    },
    /// Expected extinction time on a graph with at most 15 vertices.
    Graph {
        #[arg(long)]
        graph: String,
        #[arg(long)]
        lambda: f64,
        /// all, root, or a comma-separated vertex list.
        #[arg(long, default_value = "all")]
        init: String,
    },
    /// Stationary marginals with pins held occupied.
    Stationary {
        #[arg(long)]
        graph: String,
        #[arg(long)]
        lambda: f64,
        /// Comma-separated; defaults to the graph's pin target.
        #[arg(long)]
        pins: Option<String>,
    },
    /// Walk counts between two vertices by length.
    Census {
        #[arg(long)]
        graph: String,
        #[arg(long)]
        from: VertexId,
        #[arg(long)]
        to: VertexId,
        #[arg(long)]
        max_len: u32,
        #[arg(long)]
        lambda: Option<f64>,
    },
}

#[derive(Args)]
struct SimArgs {
    #[arg(long)]
    graph: String,
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    horizon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// all, root, or a comma-separated vertex list.
    #[arg(long, default_value = "all")]
    init: String,
    /// Number of geometrically spaced probes.
    #[arg(long, default_value_t = 10)]
    probes: usize,
}

#[derive(Args, Default)]
struct ExperimentArgs {
    /// JSON experiment spec; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    id: Option<String>,
    #[arg(long)]
    graph: Option<String>,
    #[arg(long, conflicts_with = "c")]
    lambda: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long = "K")]
    k_level: Option<u64>,
    #[arg(long = "L")]
    l_level: Option<u64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    horizon_multiple: Option<f64>,
    #[arg(long)]
    replicates: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Record CSV path; without it records go to stdout and the summary to stderr.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    x0: Option<u64>,
    #[arg(long)]
    freeze: bool,
    #[arg(long)]
    timing: bool,
    /// Audit only: file to receive the failing event log.
    #[arg(long)]
    log_out: Option<PathBuf>,
}

#[derive(Args)]
struct Lambda2Args {
    /// Run a plain replicate experiment at a fixed λ instead of bisecting.
    #[arg(long)]
    probe: bool,
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Bisection: hub offspring counts to sweep.
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    /// Bisection: non-hub degrees a₁..a_k; a value of 0 means ⌈√n⌉.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    degrees: Vec<usize>,
    #[arg(long, default_value_t = 4)]
    depth: u32,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, default_value_t = 8)]
    steps: u32,
    #[arg(long, default_value_t = 0.05)]
    lo: f64,
    #[arg(long, default_value_t = 1.0)]
    hi: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<u8, HarnessError> {
    match command {
        Command::Topo { graph, edges } => {
            let g = parse_graph(&graph)?;
            let mut v = serde_json::to_value(graph_stats(&g))?;
            v["graph"] = json!(graph);
            if edges {
                v["edges"] = json!(g.edges());
            }
            print_json(&v)?;
            Ok(0)
        }
        Command::Sim(a) => sim(a),
        Command::Survival(a) => experiment(ExperimentKind::Survival, a),
        Command::Ignite(a) => experiment(ExperimentKind::Ignite, a),
        Command::Chain(a) => experiment(ExperimentKind::Chain, a),
        Command::Relay(a) => experiment(ExperimentKind::Relay, a),
        Command::Audit(a) => audit(a),
        Command::Lambda2(a) => lambda2(a),
        Command::Bounds { name, args, list, csv } => bounds_cmd(name, args, list, csv),
        Command::Oracle { which } => oracle(which),
        Command::Report { records, lambda2, out, format } => report(records, lambda2, out, format),
    }
}

fn parse_graph(s: &str) -> Result<Graph, HarnessError> {
    Ok(s.parse::<GraphSpec>()?.build()?)
}

fn print_json(v: &impl serde::Serialize) -> Result<(), HarnessError> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn parse_init(g: &Graph, s: &str) -> Result<Vec<VertexId>, HarnessError> {
    match s {
        "all" => Ok((0..g.vertex_count() as VertexId).collect()),
        "root" => Ok(vec![g.root()]),
        list => list
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| t.trim().parse::<VertexId>().map_err(|e| HarnessError::Spec(format!("vertex {t:?}: {e}"))))
            .collect(),
    }
}

fn sim(a: SimArgs) -> Result<u8, HarnessError> {
    let g = parse_graph(&a.graph)?;
    let init = Configuration::new(parse_init(&g, &a.init)?);
    init.validate(&g)?;
    if !(a.horizon > 0.0 && a.horizon.is_finite()) {
        return Err(HarnessError::Spec(format!("horizon = {}", a.horizon)));
    }
    let options = SimOptions {
        horizon: a.horizon,
        probe_times: SimOptions::geometric_probes(a.horizon / 1000.0, a.horizon, a.probes),
        ..SimOptions::default()
    };
    let mut rng = seed::stream(a.seed);
    let out = simulate_direct(&g, a.lambda, &init, &options, &mut rng)?;
    let probes: Vec<_> = out
        .probes
        .iter()
        .map(|p| json!({"time": p.time, "occupied": p.occupied, "root_occupied": p.root_occupied}))
        .collect();
    print_json(&json!({
        "graph": a.graph,
        "lambda": a.lambda,
        "seed": a.seed,
        "extinction_time": out.extinction_time,
        "censored": out.censored,
        "end_time": out.end_time,
        "events": out.events,
        "final_occupied": out.final_occupied,
        "probes": probes,
    }))?;
    Ok(0)
}

fn build_spec(kind: ExperimentKind, a: &ExperimentArgs) -> Result<ExperimentSpec, HarnessError> {
    let mut spec = match &a.config {
        Some(path) => {
            let spec = ExperimentSpec::from_json(&fs::read_to_string(path)?)?;
            if spec.kind != kind {
                return Err(HarnessError::Spec(format!("config is a {} experiment, not {kind}", spec.kind)));
            }
            spec
        }
        None => {
            let graph = a.graph.clone().ok_or_else(|| HarnessError::Spec("--graph is required".into()))?;
            ExperimentSpec::new(kind, graph)
        }
    };
    if let Some(v) = &a.id {
        spec.id = v.clone();
    }
    if let Some(v) = &a.graph {
        spec.graph = v.clone();
    }
    if let Some(v) = a.lambda {
        spec.lambda = Some(v);
        spec.c = None;
    }
    if let Some(v) = a.c {
        spec.c = Some(v);
        spec.lambda = None;
    }
    macro_rules! set {
        ($($field:ident),*) => { $( if let Some(v) = a.$field { spec.$field = v; } )* };
    }
    macro_rules! set_opt {
        ($($field:ident),*) => { $( if let Some(v) = a.$field.clone() { spec.$field = Some(v); } )* };
    }
    set!(delta, eta, horizon_multiple, replicates, seed);
    set_opt!(k_level, l_level, horizon, output, threads, budget, x0);
    spec.freeze |= a.freeze;
    spec.timing |= a.timing;
    Ok(spec)
}

fn write_records_out(spec: &ExperimentSpec, records: &[RunRecord], summary: &impl serde::Serialize) -> Result<(), HarnessError> {
    let csv = records_to_csv(records)?;
    let summary = serde_json::to_string_pretty(summary)?;
    match &spec.output {
        Some(path) => {
            fs::write(path, csv)?;
            println!("{summary}");
        }
        None => {
            io::stdout().lock().write_all(csv.as_bytes())?;
            eprintln!("{summary}");
        }
    }
    Ok(())
}

fn experiment(kind: ExperimentKind, a: ExperimentArgs) -> Result<u8, HarnessError> {
    let spec = build_spec(kind, &a)?;
    let out = run_experiment(&spec)?;
    write_records_out(&spec, &out.records, &out.summary)?;
    Ok(0)
}

fn audit(a: ExperimentArgs) -> Result<u8, HarnessError> {
    let spec = build_spec(ExperimentKind::DualityAudit, &a)?;
    let plan = spec.resolve()?;
    let g = parse_graph(&plan.graph)?;
    let report = duality_audit(&g, plan.lambda, plan.horizon(), plan.replicates, plan.master)?;
    if let (Some(f), Some(path)) = (&report.failure, &a.log_out) {
        fs::write(path, &f.log)?;
    }
    let mut v = serde_json::to_value(&report)?;
    v["graph"] = json!(plan.graph);
    v["lambda"] = json!(plan.lambda);
    v["horizon"] = json!(plan.horizon());
    v["passed"] = json!(report.passed());
    print_json(&v)?;
    if let Some(f) = &report.failure {
        return Err(HarnessError::AuditFailed(format!("trial {} ({}): {}", f.trial, f.check, f.detail)));
    }
    if !report.negative_control_detected {
        return Err(HarnessError::AuditFailed("the corrupted-log control was not detected".into()));
    }
    Ok(0)
}

fn lambda2(a: Lambda2Args) -> Result<u8, HarnessError> {
    if a.probe {
        return experiment(ExperimentKind::Lambda2, a.experiment);
    }
    if a.n.is_empty() {
        return Err(HarnessError::Spec("--n is required unless --probe is given".into()));
    }
    let e = &a.experiment;
    let mut estimates = Vec::new();
    for &n in &a.n {
        let degrees: Vec<usize> = a
            .degrees
            .iter()
            .map(|&d| if d == 0 { (n as f64).sqrt().ceil() as usize } else { d })
            .collect();
        let family = DegreeSpec::new(n, degrees)?;
        let opts = BisectOptions {
            horizon: e.horizon.unwrap_or(contact_core::harness::DEFAULT_PROXY_HORIZON),
            threshold: a.threshold,
            replicates: e.replicates.unwrap_or(200),
            steps: a.steps,
            lo: a.lo,
            hi: a.hi,
            seed: e.seed.unwrap_or(0),
        };
        let est: Lambda2Estimate = lambda2_bisect(&family, a.depth, &opts)?;
        if est.non_monotone {
            eprintln!("warning: non-monotone response at n = {n}; bracket widened");
        }
        estimates.push(est);
    }
    let text = serde_json::to_string_pretty(&estimates)?;
    match &e.output {
        Some(p) => fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(0)
}

fn bounds_cmd(name: Option<String>, args: Vec<String>, list: bool, csv: bool) -> Result<u8, HarnessError> {
    if list {
        for n in BOUND_NAMES {
            println!("{n}");
        }
        return Ok(0);
    }
    let name = name.ok_or_else(|| HarnessError::Spec("bound name required (see --list)".into()))?;
    let mut raw = BTreeMap::new();
    for kv in args {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| HarnessError::Spec(format!("expected key=value, got {kv:?}")))?;
        raw.insert(k.to_string(), v.to_string());
    }
    let report = bounds::eval(&name, &raw)?;
    if csv {
        println!("{}", BoundReport::CSV_HEADER);
        println!("{}", report.csv_row());
    } else {
        print_json(&report)?;
    }
    Ok(0)
}

fn oracle(which: OracleCommand) -> Result<u8, HarnessError> {
    match which {
        OracleCommand::Star { n, lambda, k, l, delta } => {
            let (k0, l0) = ignition_levels(n, lambda, delta);
            let (k, l) = (k.unwrap_or(k0), l.unwrap_or(l0));
            let s = star_chain_solve(n, lambda, k, l)?;
            print_json(&json!({
                "n": n,
                "lambda": lambda,
                "K": k,
                "L": l,
                "extinction_time_all_occupied": s.absorption_from(n, true),
                "extinction_time_from_center": s.absorption_from(0, true),
                "hit_K_from_center": s.hit_k_from(0, true),
                "exit_time_L_from_center": s.exit_l_from(0, true),
                "backward_error": s.absorption_time.residual.max(s.hit_k.residual).max(s.exit_l.residual),
            }))?;
        }
        OracleCommand::Graph { graph, lambda, init } => {
            let g = parse_graph(&graph)?;
            let init = parse_init(&g, &init)?;
            let t = small_graph_extinction_time(&g, lambda, &init)?;
            print_json(&json!({"graph": graph, "lambda": lambda, "init": init, "extinction_time": t}))?;
        }
        OracleCommand::Stationary { graph, lambda, pins } => {
            let g = parse_graph(&graph)?;
            let pins = match pins {
                Some(p) => parse_init(&g, &p)?,
                None => g.pin_target().into_iter().collect(),
            };
            let law = small_graph_stationary(&g, lambda, &pins)?;
            let mut v = serde_json::to_value(&law)?;
            v["graph"] = json!(graph);
            v["pins"] = json!(pins);
            print_json(&v)?;
        }
        OracleCommand::Census { graph, from, to, max_len, lambda } => {
            let g = parse_graph(&graph)?;
            let c = enumerate_dual_paths(&g, from, to, max_len)?;
            let mut v = serde_json::to_value(&c)?;
            v["total"] = json!(c.total());
            if let Some(l) = lambda {
                v["weighted_sum"] = json!(c.weighted_sum(l));
            }
            print_json(&v)?;
        }
    }
    Ok(0)
}

fn report(records: Vec<PathBuf>, lambda2: Vec<PathBuf>, out: PathBuf, format: Vec<String>) -> Result<u8, HarnessError> {
    let formats = format.iter().map(|f| f.parse()).collect::<Result<Vec<ReportFormat>, _>>()?;
    let mut groups: BTreeMap<String, Vec<RunRecord>> = BTreeMap::new();
    for path in &records {
        for r in read_records(fs::File::open(path)?)? {
            groups.entry(r.experiment_id.clone()).or_default().push(r);
        }
    }
    let summaries = groups.values().map(|g| summarize(g)).collect::<Result<Vec<_>, _>>()?;
    let mut estimates = Vec::new();
    for path in &lambda2 {
        let mut batch: Vec<Lambda2Estimate> = serde_json::from_str(&fs::read_to_string(path)?)?;
        estimates.append(&mut batch);
    }
    if summaries.is_empty() && estimates.is_empty() {
        return Err(HarnessError::Spec("nothing to report: give --records or --lambda2".into()));
    }
    for p in emit_report(Path::new(&out), &summaries, &estimates, &formats)? {
        println!("{}", p.display());
    }
    Ok(0)
}
