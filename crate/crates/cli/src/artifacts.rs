//! Output artifacts: CSV tables, the evaluation report, and the
//! learning-curve SVG.

use std::fmt::Write as _;

use sectionflow_core::agent::{EvalReport, MetricsRow};
use sectionflow_core::env::Outcome;
use sectionflow_core::powerflow::PowerFlowSolution;
use sectionflow_core::GridCase;

pub fn outcome_name(o: Outcome) -> &'static str {
    match o {
        Outcome::Running => "running",
        Outcome::Success => "success",
        Outcome::StepLimit => "step_limit",
        Outcome::Diverged => "diverged",
    }
}

/// Bus-table CSV of a solved case.
pub fn bus_csv(sol: &PowerFlowSolution) -> String {
    let mut out = String::from("bus,vm_pu,va_deg,p_inj_mw,q_inj_mvar\n");
    for (i, &id) in sol.bus_ids.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6}",
            id,
            sol.vm[i],
            sol.va[i].to_degrees(),
            sol.p_inj[i],
            sol.q_inj[i]
        );
    }
    out
}

/// Branch-table CSV of a solved case.
pub fn branch_csv(case: &GridCase, sol: &PowerFlowSolution) -> String {
    let mut out = String::from("branch,from_bus,to_bus,status,p_from_mw,q_from_mvar\n");
    for (k, br) in case.branches.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.6},{:.6}",
            k,
            br.from_bus,
            br.to_bus,
            br.status as u8,
            sol.branch_p[k],
            sol.branch_q[k]
        );
    }
    out
}

/// Per-scenario evaluation CSV. Deterministic: timing lives in the report.
pub fn scenario_csv(report: &EvalReport) -> String {
    let mut out = String::from("scenario,section,outcome,steps,final_p_mw,cost\n");
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.6},{:.6}",
            r.scenario_id,
            r.section_id,
            outcome_name(r.outcome),
            r.steps,
            r.final_p_mw,
            r.cost
        );
    }
    out
}

/// Embedding export CSV: one row per scenario with the d embedding values.
pub fn embedding_csv(rows: &[(u32, u32, Vec<f64>)], d: usize) -> String {
    let mut out = String::from("scenario,section");
    for i in 0..d {
        let _ = write!(out, ",e{i}");
    }
    out.push('\n');
    for (scenario, section, values) in rows {
        let _ = write!(out, "{scenario},{section}");
        for v in values {
            let _ = write!(out, ",{v:.9}");
        }
        out.push('\n');
    }
    out
}

/// Human-readable evaluation report. The timing block is measured on this
/// machine and is the only non-reproducible part.
pub fn eval_report_text(
    report: &EvalReport,
    network: &str,
    checkpoint: &str,
    case_label: &str,
    is_case118: bool,
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "evaluation report");
    let _ = writeln!(out, "=================");
    let _ = writeln!(out, "case:       {case_label}");
    let _ = writeln!(out, "network:    {network}");
    let _ = writeln!(out, "checkpoint: {checkpoint}");
    let _ = writeln!(out, "scenarios:  {}", report.scenarios);
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "success rate:        {:.2} %  ({} of {})",
        report.success_rate, report.successes, report.scenarios
    );
    let _ = writeln!(out, "mean economic cost:  $ {:.2}", report.mean_cost);
    let _ = writeln!(out);
    let _ = writeln!(out, "per-section breakdown:");
    let _ = writeln!(out, "  section  scenarios  successes  rate %   mean cost $");
    for s in &report.per_section {
        let rate = if s.scenarios == 0 {
            0.0
        } else {
            100.0 * s.successes as f64 / s.scenarios as f64
        };
        let _ = writeln!(
            out,
            "  {:>7}  {:>9}  {:>9}  {:>6.2}   {:>11.2}",
            s.section_id, s.scenarios, s.successes, rate, s.mean_cost
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "timing (measured on this machine, not reproducible):");
    let _ = writeln!(
        out,
        "  inference per scenario: {:.6} +/- {:.6} s (solver excluded)",
        report.infer_mean_s, report.infer_std_s
    );
    let _ = writeln!(
        out,
        "  solver per scenario:    {:.6} s",
        report.solver_mean_s
    );
    if is_case118 {
        let _ = writeln!(out);
        let _ = writeln!(out, "reference targets (118-bus, 10-section task):");
        let _ = writeln!(out, "  success rate 98.19 %, economic cost $ 622,198");
        let _ = writeln!(out, "  inference time 0.078 +/- 0.151 s");
    }
    out
}

/// Moving average over a window (window <= 1 is the identity).
fn smooth(values: &[f64], window: usize) -> Vec<f64> {
    if window <= 1 {
        return values.to_vec();
    }
    values
        .iter()
        .enumerate()
        .map(|(i, _)| {
            let lo = i.saturating_sub(window - 1);
            let slice = &values[lo..=i];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect()
}

/// Learning-curve SVG: trailing success rate (percent) against training step,
/// fixed 800x500 view box, optional moving-average smoothing.
pub fn learning_curve_svg(metrics: &[MetricsRow], smooth_window: usize) -> String {
    const W: f64 = 800.0;
    const H: f64 = 500.0;
    const ML: f64 = 70.0; // margins
    const MR: f64 = 20.0;
    const MT: f64 = 30.0;
    const MB: f64 = 60.0;

    let xs: Vec<f64> = metrics.iter().map(|m| m.step as f64).collect();
    let raw: Vec<f64> = metrics.iter().map(|m| m.trailing_success).collect();
    let ys = smooth(&raw, smooth_window);
    let x_max = xs.last().copied().unwrap_or(1.0).max(1.0);

    let px = |x: f64| ML + (W - ML - MR) * x / x_max;
    let py = |y: f64| H - MB - (H - MT - MB) * y / 100.0;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 800 500">"#
    );
    let _ = writeln!(svg, r#"<rect width="800" height="500" fill="white"/>"#);
    // axes
    let _ = writeln!(
        svg,
        r#"<line x1="{ML}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        H - MB,
        W - MR,
        H - MB
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{ML}" y1="{MT}" x2="{ML}" y2="{}" stroke="black"/>"#,
        H - MB
    );
    // y grid and labels
    for tick in [0.0, 25.0, 50.0, 75.0, 100.0] {
        let y = py(tick);
        let _ = writeln!(
            svg,
            r##"<line x1="{ML}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="#dddddd"/>"##,
            W - MR
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="13" text-anchor="end">{tick:.0}</text>"#,
            ML - 8.0,
            y + 4.0
        );
    }
    // x labels: 5 evenly spaced ticks
    for k in 0..=4 {
        let x = x_max * k as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="13" text-anchor="middle">{:.0}</text>"#,
            px(x),
            H - MB + 20.0,
            x
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" font-size="14" text-anchor="middle">training step</text>"#,
        (ML + W - MR) / 2.0,
        H - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.1}" font-size="14" text-anchor="middle" transform="rotate(-90 18 {:.1})">trailing success rate (%)</text>"#,
        (MT + H - MB) / 2.0,
        (MT + H - MB) / 2.0
    );

    if !xs.is_empty() {
        let mut points = String::new();
        for (x, y) in xs.iter().zip(&ys) {
            let _ = write!(points, "{:.2},{:.2} ", px(*x), py(y.clamp(0.0, 100.0)));
        }
        let _ = writeln!(
            svg,
            r##"<polyline fill="none" stroke="#1f6fb2" stroke-width="2" points="{}"/>"##,
            points.trim_end()
        );
    }
    let _ = writeln!(svg, "</svg>");
    svg
}
