use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use der_core::config::EngineConfig;
use der_core::format::{sig12, write_reputation_csv, write_trace_csv, write_trust_csv};
use der_core::ledger::Ledger;
use der_core::simulator::{self, GeneratorSpec, Scenario};
use der_core::solver::{self, SolverError};
use der_core::{
    build_transition_matrices, rank_counterparts, replay_until, FeedbackScore, ReputationScores,
    ReputationVector, TrustGraph, TrustWeights,
};

use crate::{Command, EngineArgs};

/// Bad flag values; reported with the usage exit code.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<Usage>().is_some() {
        1
    } else {
        2
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Init { out, force } => init(out, force),
        Command::Replay {
            ledger,
            out,
            until,
            engine,
        } => replay(&ledger, out, until, &engine),
        Command::Rank {
            ledger,
            graph,
            trustor,
            candidates,
            out,
            engine,
        } => rank(ledger, graph, trustor, candidates, out, &engine),
        Command::TraceExp {
            schedule,
            out,
            engine,
        } => trace_exp(&schedule, out, &engine),
        Command::Simulate {
            scenario,
            out,
            seed,
            engine,
        } => simulate(&scenario, out, seed, &engine),
        Command::Bench {
            sizes,
            seed,
            out_degree,
            out,
            engine,
        } => bench(&sizes, seed, out_degree, out, &engine),
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

impl EngineArgs {
    fn resolve(&self) -> Result<EngineConfig> {
        let mut config = match &self.config {
            Some(path) => EngineConfig::load(path)
                .with_context(|| format!("loading config {}", path.display()))?,
            None => EngineConfig::default(),
        };
        let rep = &mut config.reputation;
        let exp = &mut config.experience;
        set(&mut rep.damping, self.damping);
        set(&mut rep.tol, self.tol);
        set(&mut rep.max_iters, self.max_iters);
        set(&mut config.graph.theta, self.theta);
        set(&mut config.ledger.decay_epoch, self.decay_epoch);
        set(&mut exp.alpha, self.alpha);
        set(&mut exp.beta, self.beta);
        if let Some(w1) = self.w1 {
            if !(0.0..=1.0).contains(&w1) {
                return Err(usage(format!("--w1 must lie in [0, 1], got {w1}")));
            }
            rep.w1 = w1;
            rep.w2 = 1.0 - w1;
        }
        config
            .validate()
            .map_err(|e| usage(format!("{e} (after applying flags)")))?;
        Ok(config)
    }
}

fn set<T: Copy>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn init(out: Option<PathBuf>, force: bool) -> Result<()> {
    let text = EngineConfig::default().to_toml_string();
    match out {
        Some(path) => {
            if path.exists() && !force {
                bail!(
                    "{} already exists (use --force to overwrite)",
                    path.display()
                );
            }
            fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {}", path.display());
        }
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn load_ledger(path: &Path, engine: &EngineArgs, config: &EngineConfig) -> Result<Ledger> {
    let mut ledger = Ledger::load(path, config.ledger.decay_epoch)
        .with_context(|| format!("reading ledger {}", path.display()))?;
    // an explicit flag beats the ledger header
    if let Some(d) = engine.decay_epoch {
        ledger.set_decay_epoch(d)?;
    }
    Ok(ledger)
}

fn replay_graph(
    path: &Path,
    until: Option<u64>,
    engine: &EngineArgs,
    config: &EngineConfig,
) -> Result<TrustGraph> {
    let ledger = load_ledger(path, engine, config)?;
    let end = until.unwrap_or_else(|| ledger.last_block().unwrap_or(0));
    Ok(replay_until(
        &ledger,
        &config.experience,
        config.graph.theta,
        end,
    )?)
}

fn replay(
    path: &Path,
    out: Option<PathBuf>,
    until: Option<u64>,
    engine: &EngineArgs,
) -> Result<()> {
    let config = engine.resolve()?;
    let graph = replay_graph(path, until, engine, &config)?;
    let mut w = output(out.as_deref())?;
    graph.write_snapshot(&mut w)?;
    w.flush()?;
    eprint!("{}", summary(&graph));
    Ok(())
}

/// Users, edges and a ten-bin histogram of edge experience.
fn summary(graph: &TrustGraph) -> String {
    let mut bins = [0usize; 10];
    for (_, s) in graph.edges() {
        bins[((s.current * 10.0) as usize).min(9)] += 1;
    }
    let mut text = format!("users: {}\nedges: {}\n", graph.len(), graph.edge_count());
    if graph.edge_count() > 0 {
        text.push_str("experience histogram:\n");
        for (k, count) in bins.iter().enumerate() {
            let close = if k == 9 { ']' } else { ')' };
            text.push_str(&format!(
                "  [{:.1}, {:.1}{close} {count}\n",
                k as f64 / 10.0,
                (k + 1) as f64 / 10.0
            ));
        }
    }
    text
}

fn solve_graph(graph: &TrustGraph, config: &EngineConfig) -> Result<ReputationVector> {
    let t = build_transition_matrices(&graph.split());
    match solver::solve(&t.a_pos, &t.a_neg, &config.reputation, None) {
        Ok(v) => Ok(v),
        Err(SolverError::NotConverged { best }) => {
            eprintln!(
                "warning: solver stopped after {} iterations with residual {}",
                best.iterations,
                sig12(best.final_residual)
            );
            Ok(*best)
        }
        Err(e) => Err(e.into()),
    }
}

fn rank(
    ledger: Option<PathBuf>,
    graph_path: Option<PathBuf>,
    trustor: Option<String>,
    candidates: Option<Vec<String>>,
    out: Option<PathBuf>,
    engine: &EngineArgs,
) -> Result<()> {
    let config = engine.resolve()?;
    let graph = match (ledger, graph_path) {
        (Some(path), None) => replay_graph(&path, None, engine, &config)?,
        (None, Some(path)) => {
            let file = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
            TrustGraph::read_snapshot(BufReader::new(file), config.graph.theta)
                .with_context(|| format!("reading graph {}", path.display()))?
        }
        _ => return Err(usage("exactly one of --ledger or --graph is required")),
    };
    let rep = solve_graph(&graph, &config)?;
    let mut w = output(out.as_deref())?;
    match trustor {
        None => write_reputation_csv(&mut w, &graph, &rep, &solver::rank(&rep))?,
        Some(trustor) => {
            let weights = TrustWeights::new(config.reputation.w1, config.reputation.w2)?;
            let scores = ReputationScores::min_max(&rep);
            let names: Vec<String> = match candidates {
                Some(c) => c,
                None => graph
                    .users()
                    .iter()
                    .map(|u| u.as_str().to_owned())
                    .filter(|u| *u != trustor)
                    .collect(),
            };
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            let ranked = rank_counterparts(&graph, &scores, &trustor, &refs, weights)?;
            write_trust_csv(&mut w, &graph, &trustor, &ranked)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn parse_schedule(text: &str) -> Result<Vec<FeedbackScore>> {
    let mut scores = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let content = line.split('#').next().unwrap_or("");
        for token in content
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
        {
            let value: f64 = token
                .parse()
                .with_context(|| format!("line {}: bad score {token:?}", k + 1))?;
            scores.push(FeedbackScore::new(value).with_context(|| format!("line {}", k + 1))?);
        }
    }
    if scores.is_empty() {
        bail!("schedule contains no scores");
    }
    Ok(scores)
}

fn trace_exp(schedule: &Path, out: Option<PathBuf>, engine: &EngineArgs) -> Result<()> {
    let config = engine.resolve()?;
    let text = fs::read_to_string(schedule)
        .with_context(|| format!("reading schedule {}", schedule.display()))?;
    let scores = parse_schedule(&text)?;
    let trace = simulator::exp_curve(&config.experience, &scores)?;
    let mut w = output(out.as_deref())?;
    write_trace_csv(&mut w, &trace)?;
    w.flush()?;
    Ok(())
}

fn simulate(
    path: &Path,
    out: Option<PathBuf>,
    seed: Option<u64>,
    engine: &EngineArgs,
) -> Result<()> {
    let config = engine.resolve()?;
    let mut scenario =
        Scenario::load(path).with_context(|| format!("loading scenario {}", path.display()))?;
    set(&mut scenario.seed, seed);
    let p = &mut scenario.params;
    set(&mut p.reputation.damping, engine.damping);
    set(&mut p.reputation.tol, engine.tol);
    set(&mut p.reputation.max_iters, engine.max_iters);
    set(&mut p.theta, engine.theta);
    set(&mut p.decay_epoch, engine.decay_epoch);
    set(&mut p.experience.alpha, engine.alpha);
    set(&mut p.experience.beta, engine.beta);
    if let Some(w1) = engine.w1 {
        p.reputation.w1 = w1;
        p.reputation.w2 = 1.0 - w1;
    }

    let (ledger, report) = simulator::run(&scenario)?;
    let dir = out.unwrap_or(config.paths.output_dir);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    ledger.save(dir.join("ledger.jsonl"))?;
    write_file(&dir.join("metrics.csv"), |w| report.write_metrics_csv(w))?;
    write_file(&dir.join("epochs.csv"), |w| report.write_epochs_csv(w))?;
    write_file(&dir.join("edge_traces.csv"), |w| {
        report.write_edge_traces_csv(w)
    })?;
    let summary = serde_json::json!({
        "scenario": report.scenario,
        "seed": report.seed,
        "events": ledger.len(),
        "epochs": report.epochs.len(),
        "attack": report.attack,
        "whitewash": report.whitewash,
    });
    write_file(&dir.join("summary.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &summary)?;
        w.write_all(b"\n")
    })?;

    eprintln!(
        "{}: {} events, {} epochs -> {}",
        report.scenario,
        ledger.len(),
        report.epochs.len(),
        dir.display()
    );
    if let Some(a) = &report.attack {
        if let (Some(gain), Some(shift)) = (a.rep_pos_gain(), a.rank_shift()) {
            eprintln!(
                "attack on {}: rep_pos {:+}, rep_neg {:+}, rank {} -> {} ({shift:+})",
                a.target,
                sig12(gain),
                sig12(a.rep_neg_gain().unwrap_or(0.0)),
                a.before.rank,
                a.after.as_ref().map_or(a.before.rank, |s| s.rank),
            );
        }
    }
    Ok(())
}

fn write_file(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>,
) -> Result<()> {
    let mut w =
        BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

fn bench(
    sizes: &[usize],
    seed: u64,
    out_degree: f64,
    out: Option<PathBuf>,
    engine: &EngineArgs,
) -> Result<()> {
    let config = engine.resolve()?;
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(usage("--sizes must be a list of positive integers"));
    }
    if out_degree.is_nan() || out_degree <= 0.0 {
        return Err(usage("--out-degree must be positive"));
    }
    let spec = GeneratorSpec {
        seed,
        out_degree,
        theta: config.graph.theta,
    };
    let rows = simulator::convergence_bench(sizes, &spec, &config.reputation)?;
    let mut w = output(out.as_deref())?;
    simulator::write_convergence_csv(&mut w, &rows)?;
    w.flush()?;
    for row in &rows {
        eprintln!(
            "N={}: {} iterations{}",
            row.n,
            row.iterations,
            if row.converged {
                ""
            } else {
                " (not converged)"
            }
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_parsing() {
        let s = parse_schedule("0.9, 0.9\n# idle\n0 1.0 # end\n").unwrap();
        let v: Vec<f64> = s.iter().map(|x| x.value()).collect();
        assert_eq!(v, vec![0.9, 0.9, 0.0, 1.0]);
        assert!(parse_schedule("# nothing\n").is_err());
        assert!(parse_schedule("0.5 x").is_err());
        assert!(parse_schedule("1.5").is_err());
    }

    #[test]
    fn flags_override_defaults() {
        let args = EngineArgs {
            damping: Some(0.5),
            w1: Some(0.25),
            ..Default::default()
        };
        let c = args.resolve().unwrap();
        assert_eq!(c.reputation.damping, 0.5);
        assert_eq!((c.reputation.w1, c.reputation.w2), (0.25, 0.75));

        let bad = EngineArgs {
            damping: Some(1.5),
            ..Default::default()
        };
        assert_eq!(exit_code(&bad.resolve().unwrap_err()), 1);
    }

    #[test]
    fn histogram_bins() {
        let mut g = TrustGraph::default();
        let st = |v: f64| der_core::ExperienceState {
            current: v,
            previous: v,
            last_update_block: 0,
        };
        g.upsert_edge("a", "b", st(1.0)).unwrap();
        g.upsert_edge("b", "a", st(0.05)).unwrap();
        let s = summary(&g);
        assert!(s.starts_with("users: 2\nedges: 2\n"));
        assert!(s.contains("[0.0, 0.1) 1\n"));
        assert!(s.contains("[0.9, 1.0] 1\n"));
    }
}
