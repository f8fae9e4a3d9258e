//! Subcommand implementations.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};

use sectionflow_core::agent::{
    evaluate, metrics_to_csv, train, Clock, EvalPolicy, NullClock,
};
use sectionflow_core::env::{generate_scenarios, parse_scenario_set, write_scenario_set, Scenario, TaskContext};
use sectionflow_core::nn::{NetworkKind, ObsInputs, PolicyNet};
use sectionflow_core::powerflow::{solve_ac, solve_dc, StateMatrix};
use sectionflow_core::rng::Rng;
use sectionflow_core::store::{load_into, serialize_store};
use sectionflow_core::tensor::Adjacency;

use crate::artifacts;
use crate::clock::MonotonicClock;
use crate::config::RunSettings;
use crate::io::{load_case, load_sections, write_file};

pub struct RunPaths {
    pub case: String,
    pub sections: String,
    pub scenarios: Option<PathBuf>,
    pub out: PathBuf,
}

fn build_context(paths: &RunPaths, settings: &RunSettings) -> Result<(TaskContext, String)> {
    let (case, label) = load_case(&paths.case)?;
    let sections = load_sections(&paths.sections, &case)?;
    let mut ctx = TaskContext::new(case, sections, settings.env_config());
    if settings.z_active_only {
        ctx.z_mode = sectionflow_core::nn::SectionEncodingMode::ActiveOnly;
    }
    Ok((ctx, label))
}

fn load_scenarios(path: &Path, ctx: &TaskContext) -> Result<sectionflow_core::env::ScenarioSet> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading scenario file {}", path.display()))?;
    parse_scenario_set(&text, ctx).map_err(|e| anyhow!("scenario file {}: {e}", path.display()))
}

pub fn cmd_generate(
    case_spec: &str,
    sections_spec: &str,
    seed: u64,
    count: usize,
    out: &Path,
) -> Result<()> {
    let (case, _) = load_case(case_spec)?;
    let sections = load_sections(sections_spec, &case)?;
    let ctx = TaskContext::new(case, sections, Default::default());
    let set = generate_scenarios(&ctx, seed, count).map_err(|e| anyhow!("{e}"))?;
    let train_count = set.train().len();
    let test_count = set.test().len();
    write_file(out, write_scenario_set(&set))?;
    println!(
        "wrote {} scenarios to {} (train {}, test {})",
        set.scenarios.len(),
        out.display(),
        train_count,
        test_count
    );
    Ok(())
}

pub fn cmd_train(paths: &RunPaths, settings: &RunSettings) -> Result<()> {
    let (mut ctx, label) = build_context(paths, settings)?;
    let scen_path = paths
        .scenarios
        .as_ref()
        .ok_or_else(|| anyhow!("--scenarios is required for train"))?;
    let set = load_scenarios(scen_path, &ctx)?;
    ctx.scaler = set.scaler.clone();
    let train_scen: Vec<&Scenario> = set.train();
    if train_scen.is_empty() {
        bail!("scenario file has no training split");
    }

    let started = Instant::now();
    let real_clock = MonotonicClock::new();
    let null_clock = NullClock;
    // wall_seconds is all zeros unless timing was requested; that keeps the
    // metrics CSV byte-reproducible under a fixed seed
    let clock: &dyn Clock = if settings.timing {
        &real_clock
    } else {
        &null_clock
    };

    let checkpoint_path = paths.out.join("checkpoint.bin");
    let metrics_path = paths.out.join("metrics.csv");
    let curve_path = paths.out.join("curve.svg");
    std::fs::create_dir_all(&paths.out)
        .with_context(|| format!("creating {}", paths.out.display()))?;

    let ck = checkpoint_path.clone();
    let result = train(
        &ctx,
        &train_scen,
        settings.net_config(),
        &settings.train_config(),
        clock,
        move |row, net| {
            // rolling checkpoint at every metrics interval
            let _ = std::fs::write(&ck, serialize_store(&net.store));
            let _ = row;
        },
    )
    .map_err(|e| anyhow!("training failed: {e}"))?;

    write_file(&checkpoint_path, serialize_store(&result.net.store))?;
    write_file(&metrics_path, metrics_to_csv(&result.metrics))?;
    write_file(
        &curve_path,
        artifacts::learning_curve_svg(&result.metrics, settings.smooth_window),
    )?;

    let final_sr = result
        .metrics
        .last()
        .map(|m| m.trailing_success)
        .unwrap_or(0.0);
    println!(
        "trained {} ({} steps, {} updates, {} episodes) on {label} in {:.1}s",
        settings.kind.name(),
        settings.steps,
        result.updates,
        result.episodes,
        started.elapsed().as_secs_f64()
    );
    println!("final trailing success rate: {final_sr:.2}%");
    println!(
        "artifacts: {}, {}, {}",
        checkpoint_path.display(),
        metrics_path.display(),
        curve_path.display()
    );
    Ok(())
}

/// Initial-observation embeddings of every scenario, for external analysis.
fn export_embeddings(
    ctx: &TaskContext,
    net: &PolicyNet,
    scenarios: &[&Scenario],
) -> Vec<(u32, u32, Vec<f64>)> {
    let mut env = sectionflow_core::env::Environment::new(ctx);
    let mut rows = Vec::new();
    for s in scenarios {
        if let Ok(obs) = env.reset(s) {
            if let Ok(e) = net.embedding(ObsInputs {
                h: &obs.h,
                z: &obs.z,
                adj: &ctx.adj,
            }) {
                rows.push((s.id, s.section_id, e));
            }
        }
    }
    rows
}

pub fn cmd_evaluate(paths: &RunPaths, settings: &RunSettings, checkpoint: &Path) -> Result<()> {
    let (mut ctx, label) = build_context(paths, settings)?;
    let scen_path = paths
        .scenarios
        .as_ref()
        .ok_or_else(|| anyhow!("--scenarios is required for evaluate"))?;
    let set = load_scenarios(scen_path, &ctx)?;
    ctx.scaler = set.scaler.clone();

    let mut net = PolicyNet::new(
        settings.net_config(),
        ctx.graph.n,
        ctx.z_len(),
        ctx.n_actions(),
        settings.seed,
    );
    let bytes = std::fs::read(checkpoint)
        .with_context(|| format!("reading checkpoint {}", checkpoint.display()))?;
    load_into(&mut net.store, &bytes)
        .map_err(|e| anyhow!("checkpoint {}: {e}", checkpoint.display()))?;

    let mut scenarios: Vec<&Scenario> = set.test();
    let mut split_note = "test split";
    if scenarios.is_empty() {
        scenarios = set.scenarios.iter().collect();
        split_note = "all scenarios (no test split present)";
    }

    let clock = MonotonicClock::new();
    let report = evaluate(EvalPolicy::Greedy(&net), &ctx, &scenarios, &clock)
        .map_err(|e| anyhow!("evaluation failed: {e}"))?;

    let is_case118 = ctx.case.buses.len() == 118 && ctx.case.generators.len() == 54;
    let report_text = artifacts::eval_report_text(
        &report,
        settings.kind.name(),
        &checkpoint.display().to_string(),
        &format!("{label} ({split_note})"),
        is_case118,
    );
    write_file(&paths.out.join("report.txt"), &report_text)?;
    write_file(
        &paths.out.join("per_scenario.csv"),
        artifacts::scenario_csv(&report),
    )?;
    let embeddings = export_embeddings(&ctx, &net, &scenarios);
    write_file(
        &paths.out.join("embeddings.csv"),
        artifacts::embedding_csv(&embeddings, settings.d),
    )?;

    print!("{report_text}");
    println!(
        "artifacts: {}, {}, {}",
        paths.out.join("report.txt").display(),
        paths.out.join("per_scenario.csv").display(),
        paths.out.join("embeddings.csv").display()
    );
    Ok(())
}

pub fn cmd_solve(case_spec: &str, dc: bool, out: &Path) -> Result<()> {
    let (case, label) = load_case(case_spec)?;
    let sol = if dc {
        solve_dc(&case).map_err(|e| anyhow!("{e}"))?
    } else {
        solve_ac(&case, 1e-8, 20).map_err(|e| anyhow!("{e}"))?
    };
    write_file(&out.join("bus.csv"), artifacts::bus_csv(&sol))?;
    write_file(&out.join("branch.csv"), artifacts::branch_csv(&case, &sol))?;
    println!(
        "solved {label} ({}) in {} iterations, max mismatch {:.3e} p.u.",
        if dc { "dc" } else { "ac" },
        sol.iterations,
        sol.max_mismatch
    );
    println!(
        "artifacts: {}, {}",
        out.join("bus.csv").display(),
        out.join("branch.csv").display()
    );
    Ok(())
}

/// Best-of-reps wall time of one forward pass on random regular graphs of the
/// given sizes; prints the fitted power-law exponent. The minimum is the
/// noise-robust estimate of the intrinsic cost.
pub fn cmd_bench(sizes: &[usize], d: usize, reps: usize, out: &Path) -> Result<()> {
    let mut rows = Vec::new();
    println!("forward-pass scaling (d = {d}, best of {reps} reps per size)");
    for &n in sizes {
        let best = time_forward(n, d, reps)?;
        println!("  n = {n:>5}: {best:.6} s");
        rows.push((n, best));
    }
    let exponent = fit_exponent(&rows);
    println!("fitted scaling exponent: {exponent:.3}");

    let mut csv = String::from("n,seconds\n");
    for (n, s) in &rows {
        csv.push_str(&format!("{n},{s:.9}\n"));
    }
    csv.push_str(&format!("# exponent,{exponent:.4}\n"));
    write_file(out, csv)?;
    println!("artifacts: {}", out.display());
    Ok(())
}

/// Build a random ~4-regular graph observation of size `n` and time forwards,
/// returning the fastest repetition.
pub fn time_forward(n: usize, d: usize, reps: usize) -> Result<f64> {
    let mut rng = Rng::seed_from(n as u64);
    let mut edges = Vec::new();
    for i in 0..n {
        edges.push((i, (i + 1) % n)); // ring keeps it connected
    }
    for _ in 0..n {
        let u = rng.below(n);
        let v = rng.below(n);
        if u != v {
            edges.push((u.min(v), u.max(v)));
        }
    }
    edges.sort_unstable();
    edges.dedup();
    let adj = std::sync::Arc::new(Adjacency::from_edges(n, &edges));
    let m = edges.len();

    let cfg = sectionflow_core::nn::NetConfig {
        d,
        ..sectionflow_core::nn::NetConfig::defaults(NetworkKind::Powerformer)
    };
    let net = PolicyNet::new(cfg, n, 4 * m, 16, 7);
    let h = StateMatrix {
        n,
        values: (0..4 * n).map(|_| rng.uniform(-1.0, 1.0)).collect(),
    };
    let mut z = vec![0.0; 4 * m];
    for slot in 0..4.min(m) {
        z[4 * slot] = rng.uniform(-1.0, 1.0);
    }

    let obs = ObsInputs {
        h: &h,
        z: &z,
        adj: &adj,
    };
    // warm-up
    let _ = net.q_values(obs).map_err(|e| anyhow!("{e}"))?;
    let mut best = f64::INFINITY;
    for _ in 0..reps {
        let t0 = Instant::now();
        let q = net.q_values(obs).map_err(|e| anyhow!("{e}"))?;
        best = best.min(t0.elapsed().as_secs_f64());
        std::hint::black_box(q);
    }
    Ok(best)
}

/// Least-squares slope of log(t) against log(n).
pub fn fit_exponent(rows: &[(usize, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|&(n, t)| ((n as f64).ln(), t.ln()))
        .collect();
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

