//! AC (Newton-Raphson, polar) and DC power flow, section flow aggregation, and
//! per-bus state features.
//!
//! Solvers are pure functions of the case: no shared mutable state, safe to run
//! concurrently over shared [`GridCase`] values. All per-bus arrays in a
//! [`PowerFlowSolution`] follow the dense node ordering of [`build_graph`]
//! (ascending bus id); per-branch arrays follow the case's branch declaration
//! order with zeros for out-of-service rows.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::grid::{BusType, GridCase, Section};
use crate::linalg::{lu_solve, DMat};
use crate::math;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub enum PfError {
    /// Iterations exhausted; carries diagnostics, never a partial solution.
    NonConvergence { iterations: usize, max_mismatch: f64 },
    SingularJacobian,
    /// DC network matrix is singular (islanded system).
    SingularSystem,
    /// A solution-consuming operation was handed an unconverged solve.
    NotConverged,
    /// In-service branch with r = x = 0.
    ZeroImpedanceBranch { index: usize },
    InvalidTolerance,
}

impl fmt::Display for PfError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PfError::NonConvergence {
                iterations,
                max_mismatch,
            } => write!(
                f,
                "power flow did not converge after {iterations} iterations (max mismatch {max_mismatch:e} p.u.)"
            ),
            PfError::SingularJacobian => write!(f, "singular Jacobian"),
            PfError::SingularSystem => write!(f, "singular network matrix (islanded system?)"),
            PfError::NotConverged => write!(f, "solution is not converged"),
            PfError::ZeroImpedanceBranch { index } => {
                write!(f, "branch {index} has zero impedance (r = x = 0)")
            }
            PfError::InvalidTolerance => write!(f, "tolerance must be positive"),
        }
    }
}

/// Converged (or diagnosed) power-flow state.
#[derive(Clone, Debug)]
pub struct PowerFlowSolution {
    /// Bus ids in dense node order (ascending).
    pub bus_ids: Vec<u32>,
    /// Voltage magnitude per bus (p.u.).
    pub vm: Vec<f64>,
    /// Voltage angle per bus (rad).
    pub va: Vec<f64>,
    /// Net active injection per bus (MW).
    pub p_inj: Vec<f64>,
    /// Net reactive injection per bus (MVAr).
    pub q_inj: Vec<f64>,
    /// From-side active flow per branch (MW).
    pub branch_p: Vec<f64>,
    /// From-side reactive flow per branch (MVAr).
    pub branch_q: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Largest bus power mismatch (p.u.).
    pub max_mismatch: f64,
}

/// Aggregated flow through a transmission section.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SectionFlow {
    /// Signed active flow (MW), oriented by the section's declared line order.
    pub p: f64,
    /// Signed reactive flow (MVAr).
    pub q: f64,
    pub within_p_bounds: bool,
}

/// n x 4 feature matrix, columns = (active injection, reactive injection,
/// voltage magnitude, phase angle), row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct StateMatrix {
    pub n: usize,
    pub values: Vec<f64>,
}

impl StateMatrix {
    pub const WIDTH: usize = 4;

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * Self::WIDTH + col]
    }

    /// Column `col` as an owned vector.
    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n).map(|r| self.at(r, col)).collect()
    }
}

/// Per-column z-score statistics, frozen from the training scenario set.
/// Zero-variance columns map to zero.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureScaler {
    pub mean: [f64; 4],
    pub std: [f64; 4],
}

impl FeatureScaler {
    /// Identity scaler (mean 0, std 1); useful before statistics exist.
    pub fn identity() -> Self {
        FeatureScaler {
            mean: [0.0; 4],
            std: [1.0; 4],
        }
    }

    /// Fit column statistics over a set of raw feature matrices.
    pub fn fit<'a>(matrices: impl Iterator<Item = &'a StateMatrix>) -> Self {
        let mut count = 0usize;
        let mut sum = [0.0f64; 4];
        let mut sum_sq = [0.0f64; 4];
        for m in matrices {
            for r in 0..m.n {
                for c in 0..4 {
                    let v = m.at(r, c);
                    sum[c] += v;
                    sum_sq[c] += v * v;
                }
            }
            count += m.n;
        }
        if count == 0 {
            return Self::identity();
        }
        let mut mean = [0.0; 4];
        let mut std = [0.0; 4];
        for c in 0..4 {
            mean[c] = sum[c] / count as f64;
            let var = (sum_sq[c] / count as f64 - mean[c] * mean[c]).max(0.0);
            std[c] = math::sqrt(var);
        }
        FeatureScaler { mean, std }
    }

    /// Standardise a raw feature matrix column-wise.
    pub fn standardize(&self, raw: &StateMatrix) -> StateMatrix {
        const EPS: f64 = 1e-12;
        let mut values = Vec::with_capacity(raw.values.len());
        for r in 0..raw.n {
            for c in 0..4 {
                let v = raw.at(r, c);
                if self.std[c] < EPS {
                    values.push(0.0);
                } else {
                    values.push((v - self.mean[c]) / self.std[c]);
                }
            }
        }
        StateMatrix { n: raw.n, values }
    }
}

// ---------------------------------------------------------------------------
// Admittance assembly
// ---------------------------------------------------------------------------

/// Dense bus admittance matrix, split into conductance and susceptance parts.
struct YBus {
    n: usize,
    g: Vec<f64>,
    b: Vec<f64>,
}

impl YBus {
    #[inline]
    fn g(&self, i: usize, j: usize) -> f64 {
        self.g[i * self.n + j]
    }
    #[inline]
    fn b(&self, i: usize, j: usize) -> f64 {
        self.b[i * self.n + j]
    }
}

fn check_impedances(case: &GridCase) -> Result<(), PfError> {
    for (i, br) in case.branches.iter().enumerate() {
        if br.status && br.r == 0.0 && br.x == 0.0 {
            return Err(PfError::ZeroImpedanceBranch { index: i });
        }
    }
    Ok(())
}

fn build_ybus(case: &GridCase, index: &alloc::collections::BTreeMap<u32, usize>) -> YBus {
    let n = index.len();
    let mut g = vec![0.0; n * n];
    let mut b = vec![0.0; n * n];
    for br in case.branches.iter().filter(|br| br.status) {
        let f = index[&br.from_bus];
        let t = index[&br.to_bus];
        let denom = br.r * br.r + br.x * br.x;
        let gs = br.r / denom;
        let bs = -br.x / denom;
        let half_charge = br.b / 2.0;
        g[f * n + f] += gs;
        b[f * n + f] += bs + half_charge;
        g[t * n + t] += gs;
        b[t * n + t] += bs + half_charge;
        g[f * n + t] -= gs;
        b[f * n + t] -= bs;
        g[t * n + f] -= gs;
        b[t * n + f] -= bs;
    }
    YBus { n, g, b }
}

/// Scheduled net injections in p.u.: generation minus load per bus.
fn scheduled_injections(
    case: &GridCase,
    index: &alloc::collections::BTreeMap<u32, usize>,
) -> (Vec<f64>, Vec<f64>) {
    let n = index.len();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for bus in &case.buses {
        let i = index[&bus.id];
        p[i] -= bus.pd / case.base_mva;
        q[i] -= bus.qd / case.base_mva;
    }
    for gen in case.generators.iter().filter(|g| g.status) {
        let i = index[&gen.bus];
        p[i] += gen.pg / case.base_mva;
        q[i] += gen.qg / case.base_mva;
    }
    (p, q)
}

/// Calculated injections at the present voltage estimate (p.u.).
fn calc_injections(y: &YBus, vm: &[f64], va: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = y.n;
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for i in 0..n {
        let mut pi = 0.0;
        let mut qi = 0.0;
        for j in 0..n {
            let gij = y.g(i, j);
            let bij = y.b(i, j);
            if gij == 0.0 && bij == 0.0 {
                continue;
            }
            let theta = va[i] - va[j];
            let (s, c) = (math::sin(theta), math::cos(theta));
            pi += vm[j] * (gij * c + bij * s);
            qi += vm[j] * (gij * s - bij * c);
        }
        p[i] = vm[i] * pi;
        q[i] = vm[i] * qi;
    }
    (p, q)
}

fn branch_flows(case: &GridCase, index: &alloc::collections::BTreeMap<u32, usize>, vm: &[f64], va: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let nb = case.branches.len();
    let mut bp = vec![0.0; nb];
    let mut bq = vec![0.0; nb];
    for (k, br) in case.branches.iter().enumerate() {
        if !br.status {
            continue;
        }
        let f = index[&br.from_bus];
        let t = index[&br.to_bus];
        let denom = br.r * br.r + br.x * br.x;
        let gs = br.r / denom;
        let bs = -br.x / denom;
        // I_f = (V_f - V_t) * y + V_f * j b/2 ; S_f = V_f * conj(I_f)
        let (vfr, vfi) = (vm[f] * math::cos(va[f]), vm[f] * math::sin(va[f]));
        let (vtr, vti) = (vm[t] * math::cos(va[t]), vm[t] * math::sin(va[t]));
        let (dr, di) = (vfr - vtr, vfi - vti);
        let mut ifr = dr * gs - di * bs;
        let mut ifi = dr * bs + di * gs;
        let half_charge = br.b / 2.0;
        ifr += -vfi * half_charge;
        ifi += vfr * half_charge;
        bp[k] = (vfr * ifr + vfi * ifi) * case.base_mva;
        bq[k] = (vfi * ifr - vfr * ifi) * case.base_mva;
    }
    (bp, bq)
}

// ---------------------------------------------------------------------------
// AC Newton-Raphson
// ---------------------------------------------------------------------------

/// Full Newton-Raphson power flow in polar coordinates.
///
/// Starts from the case's stored voltage profile (falling back to a flat
/// 1.0 p.u. / 0 rad start for non-positive magnitudes). PV buses hold the
/// stored magnitude; the slack bus holds magnitude and angle. No PV->PQ
/// switching is performed.
pub fn solve_ac(case: &GridCase, tol: f64, max_iter: usize) -> Result<PowerFlowSolution, PfError> {
    if !(tol > 0.0) {
        return Err(PfError::InvalidTolerance);
    }
    check_impedances(case)?;

    let index = case.bus_index();
    let n = index.len();
    let y = build_ybus(case, &index);
    let (p_sched, q_sched) = scheduled_injections(case, &index);

    let mut bus_ids = vec![0u32; n];
    let mut vm = vec![1.0; n];
    let mut va = vec![0.0; n];
    let mut kinds = vec![BusType::Pq; n];
    for bus in &case.buses {
        let i = index[&bus.id];
        bus_ids[i] = bus.id;
        vm[i] = if bus.vm > 0.0 { bus.vm } else { 1.0 };
        va[i] = bus.va * core::f64::consts::PI / 180.0;
        kinds[i] = bus.bus_type;
    }

    let pv: Vec<usize> = (0..n).filter(|&i| kinds[i] == BusType::Pv).collect();
    let pq: Vec<usize> = (0..n).filter(|&i| kinds[i] == BusType::Pq).collect();
    let pvpq: Vec<usize> = pv.iter().chain(pq.iter()).copied().collect();
    let npv = pv.len();
    let npq = pq.len();
    let unknowns = npv + 2 * npq;

    // position of each bus inside the pvpq ordering, for Jacobian columns
    let mut pos_in_pvpq = vec![usize::MAX; n];
    for (k, &i) in pvpq.iter().enumerate() {
        pos_in_pvpq[i] = k;
    }
    let mut pos_in_pq = vec![usize::MAX; n];
    for (k, &i) in pq.iter().enumerate() {
        pos_in_pq[i] = k;
    }

    let mismatch = |vm: &[f64], va: &[f64]| -> (Vec<f64>, f64, Vec<f64>, Vec<f64>) {
        let (p_calc, q_calc) = calc_injections(&y, vm, va);
        let mut f = Vec::with_capacity(unknowns);
        let mut worst = 0.0f64;
        for &i in &pvpq {
            let d = p_calc[i] - p_sched[i];
            worst = worst.max(d.abs());
            f.push(d);
        }
        for &i in &pq {
            let d = q_calc[i] - q_sched[i];
            worst = worst.max(d.abs());
            f.push(d);
        }
        (f, worst, p_calc, q_calc)
    };

    let mut iterations = 0;
    let (mut f, mut worst, mut p_calc, mut q_calc) = mismatch(&vm, &va);

    while worst > tol && iterations < max_iter {
        // assemble the Jacobian: rows = [dP(pvpq); dQ(pq)], cols = [dtheta(pvpq); dVm(pq)]
        let mut jac = DMat::zeros(unknowns, unknowns);
        for (row, &i) in pvpq.iter().enumerate() {
            for j in 0..n {
                let gij = y.g(i, j);
                let bij = y.b(i, j);
                if i != j && gij == 0.0 && bij == 0.0 {
                    continue;
                }
                let theta = va[i] - va[j];
                let (s, c) = (math::sin(theta), math::cos(theta));
                if pos_in_pvpq[j] != usize::MAX {
                    let cidx = pos_in_pvpq[j];
                    let v = if i == j {
                        -q_calc[i] - bij * vm[i] * vm[i]
                    } else {
                        vm[i] * vm[j] * (gij * s - bij * c)
                    };
                    *jac.at_mut(row, cidx) = v;
                }
                if pos_in_pq[j] != usize::MAX {
                    let cidx = npv + npq + pos_in_pq[j];
                    let v = if i == j {
                        p_calc[i] / vm[i] + gij * vm[i]
                    } else {
                        vm[i] * (gij * c + bij * s)
                    };
                    *jac.at_mut(row, cidx) = v;
                }
            }
        }
        for (rq, &i) in pq.iter().enumerate() {
            let row = npv + npq + rq;
            for j in 0..n {
                let gij = y.g(i, j);
                let bij = y.b(i, j);
                if i != j && gij == 0.0 && bij == 0.0 {
                    continue;
                }
                let theta = va[i] - va[j];
                let (s, c) = (math::sin(theta), math::cos(theta));
                if pos_in_pvpq[j] != usize::MAX {
                    let cidx = pos_in_pvpq[j];
                    let v = if i == j {
                        p_calc[i] - gij * vm[i] * vm[i]
                    } else {
                        -vm[i] * vm[j] * (gij * c + bij * s)
                    };
                    *jac.at_mut(row, cidx) = v;
                }
                if pos_in_pq[j] != usize::MAX {
                    let cidx = npv + npq + pos_in_pq[j];
                    let v = if i == j {
                        q_calc[i] / vm[i] - bij * vm[i]
                    } else {
                        vm[i] * (gij * s - bij * c)
                    };
                    *jac.at_mut(row, cidx) = v;
                }
            }
        }

        let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
        let dx = lu_solve(jac, rhs).ok_or(PfError::SingularJacobian)?;

        for (k, &i) in pvpq.iter().enumerate() {
            va[i] += dx[k];
        }
        for (k, &i) in pq.iter().enumerate() {
            vm[i] += dx[npv + npq + k];
        }

        iterations += 1;
        let next = mismatch(&vm, &va);
        f = next.0;
        worst = next.1;
        p_calc = next.2;
        q_calc = next.3;
    }

    if worst > tol {
        return Err(PfError::NonConvergence {
            iterations,
            max_mismatch: worst,
        });
    }

    let (bp, bq) = branch_flows(case, &index, &vm, &va);
    Ok(PowerFlowSolution {
        bus_ids,
        p_inj: p_calc.iter().map(|v| v * case.base_mva).collect(),
        q_inj: q_calc.iter().map(|v| v * case.base_mva).collect(),
        vm,
        va,
        branch_p: bp,
        branch_q: bq,
        converged: true,
        iterations,
        max_mismatch: worst,
    })
}

// ---------------------------------------------------------------------------
// DC power flow
// ---------------------------------------------------------------------------

/// Linearised power flow: `B theta = P` with the slack angle fixed. Reactive
/// fields are zero; `converged` is always true on success.
pub fn solve_dc(case: &GridCase) -> Result<PowerFlowSolution, PfError> {
    for (i, br) in case.branches.iter().enumerate() {
        if br.status && br.x <= 0.0 {
            return Err(PfError::ZeroImpedanceBranch { index: i });
        }
    }
    let index = case.bus_index();
    let n = index.len();
    let slack = case
        .slack_bus()
        .map(|b| index[&b.id])
        .ok_or(PfError::SingularSystem)?;
    let slack_va = case.slack_bus().map(|b| b.va).unwrap_or(0.0) * core::f64::consts::PI / 180.0;

    // reduced susceptance matrix over non-slack buses
    let keep: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
    let mut pos = vec![usize::MAX; n];
    for (k, &i) in keep.iter().enumerate() {
        pos[i] = k;
    }
    let m = keep.len();
    let mut bmat = DMat::zeros(m, m);
    for br in case.branches.iter().filter(|br| br.status) {
        let f = index[&br.from_bus];
        let t = index[&br.to_bus];
        let w = 1.0 / br.x;
        if pos[f] != usize::MAX {
            *bmat.at_mut(pos[f], pos[f]) += w;
        }
        if pos[t] != usize::MAX {
            *bmat.at_mut(pos[t], pos[t]) += w;
        }
        if pos[f] != usize::MAX && pos[t] != usize::MAX {
            *bmat.at_mut(pos[f], pos[t]) -= w;
            *bmat.at_mut(pos[t], pos[f]) -= w;
        }
    }
    let (p_sched, _) = scheduled_injections(case, &index);
    let rhs: Vec<f64> = keep.iter().map(|&i| p_sched[i]).collect();
    let theta_red = lu_solve(bmat, rhs).ok_or(PfError::SingularSystem)?;

    let mut va = vec![slack_va; n];
    for (k, &i) in keep.iter().enumerate() {
        va[i] = theta_red[k] + slack_va;
    }

    let mut bus_ids = vec![0u32; n];
    for bus in &case.buses {
        bus_ids[index[&bus.id]] = bus.id;
    }

    let nb = case.branches.len();
    let mut bp = vec![0.0; nb];
    for (k, br) in case.branches.iter().enumerate() {
        if !br.status {
            continue;
        }
        let f = index[&br.from_bus];
        let t = index[&br.to_bus];
        bp[k] = (va[f] - va[t]) / br.x * case.base_mva;
    }

    // net injections implied by the linear model: scheduled everywhere except
    // the slack, which absorbs the balance
    let mut p_inj: Vec<f64> = p_sched.iter().map(|v| v * case.base_mva).collect();
    let balance: f64 = p_inj.iter().enumerate().filter(|(i, _)| *i != slack).map(|(_, v)| v).sum();
    p_inj[slack] = -balance;

    Ok(PowerFlowSolution {
        bus_ids,
        vm: vec![1.0; n],
        va,
        p_inj,
        q_inj: vec![0.0; n],
        branch_p: bp,
        branch_q: vec![0.0; nb],
        converged: true,
        iterations: 0,
        max_mismatch: 0.0,
    })
}

// ---------------------------------------------------------------------------
// Section flows and state features
// ---------------------------------------------------------------------------

/// Aggregate the signed active/reactive flow of a section, oriented by its
/// declared line order, and test it against the active-power bounds.
pub fn section_flow(
    sol: &PowerFlowSolution,
    case: &GridCase,
    section: &Section,
) -> Result<SectionFlow, PfError> {
    if !sol.converged {
        return Err(PfError::NotConverged);
    }
    let mut p = 0.0;
    let mut q = 0.0;
    for &(from, to) in &section.lines {
        // section validity guarantees exactly one match
        let matches = case.find_branch(from, to);
        let (idx, sign) = matches[0];
        p += sign * sol.branch_p[idx];
        q += sign * sol.branch_q[idx];
    }
    Ok(SectionFlow {
        p,
        q,
        within_p_bounds: section.p_min <= p && p <= section.p_max,
    })
}

/// Raw (unstandardised) per-bus features from a converged solution:
/// columns (P injection MW, Q injection MVAr, Vm p.u., Va rad).
pub fn raw_state_features(sol: &PowerFlowSolution) -> Result<StateMatrix, PfError> {
    if !sol.converged {
        return Err(PfError::NotConverged);
    }
    let n = sol.vm.len();
    let mut values = Vec::with_capacity(n * 4);
    for i in 0..n {
        values.push(sol.p_inj[i]);
        values.push(sol.q_inj[i]);
        values.push(sol.vm[i]);
        values.push(sol.va[i]);
    }
    Ok(StateMatrix { n, values })
}

/// Standardised state features (see [`FeatureScaler`]).
pub fn state_features(sol: &PowerFlowSolution, scaler: &FeatureScaler) -> Result<StateMatrix, PfError> {
    let raw = raw_state_features(sol)?;
    Ok(scaler.standardize(&raw))
}

/// Per-branch section encoding of length `4 * branches`: (active flow p.u.,
/// reactive flow p.u., from-bus Vm, from-bus Va) for branches inside the
/// section, exactly zero elsewhere. Flows are expressed in per-unit to keep
/// magnitudes O(1) without extra statistics.
pub fn section_encoding(
    sol: &PowerFlowSolution,
    case: &GridCase,
    section: &Section,
) -> Result<Vec<f64>, PfError> {
    if !sol.converged {
        return Err(PfError::NotConverged);
    }
    let index = case.bus_index();
    let nb = case.branches.len();
    let mut z = vec![0.0; 4 * nb];
    for &(from, to) in &section.lines {
        let matches = case.find_branch(from, to);
        let (idx, sign) = matches[0];
        let f = index[&case.branches[idx].from_bus];
        z[4 * idx] = sign * sol.branch_p[idx] / case.base_mva;
        z[4 * idx + 1] = sign * sol.branch_q[idx] / case.base_mva;
        z[4 * idx + 2] = sol.vm[f];
        z[4 * idx + 3] = sol.va[f];
    }
    Ok(z)
}

/// Active-power-only variant of [`section_encoding`] (length `branches`).
pub fn section_encoding_active(
    sol: &PowerFlowSolution,
    case: &GridCase,
    section: &Section,
) -> Result<Vec<f64>, PfError> {
    if !sol.converged {
        return Err(PfError::NotConverged);
    }
    let nb = case.branches.len();
    let mut z = vec![0.0; nb];
    for &(from, to) in &section.lines {
        let matches = case.find_branch(from, to);
        let (idx, sign) = matches[0];
        z[idx] = sign * sol.branch_p[idx] / case.base_mva;
    }
    Ok(z)
}

/// Recompute the worst bus power mismatch of a solution against a case, in
/// p.u. Used as an independent residual check of the solver.
pub fn residual(case: &GridCase, sol: &PowerFlowSolution) -> f64 {
    let index = case.bus_index();
    let y = build_ybus(case, &index);
    let (p_sched, q_sched) = scheduled_injections(case, &index);
    let (p_calc, q_calc) = calc_injections(&y, &sol.vm, &sol.va);
    let mut worst = 0.0f64;
    for bus in &case.buses {
        let i = index[&bus.id];
        match bus.bus_type {
            BusType::Slack => {}
            BusType::Pv => worst = worst.max((p_calc[i] - p_sched[i]).abs()),
            BusType::Pq => {
                worst = worst.max((p_calc[i] - p_sched[i]).abs());
                worst = worst.max((q_calc[i] - q_sched[i]).abs());
            }
        }
    }
    worst
}

/// Total in-service generation implied by a converged solution (MW), with
/// slack-bus production recovered from the solved injection. Used for the
/// economic cost. Multiple units on the slack bus share its production in
/// proportion to Pmax.
pub fn generator_outputs(case: &GridCase, sol: &PowerFlowSolution) -> Vec<f64> {
    let index = case.bus_index();
    let slack_id = case.slack_bus().map(|b| b.id);
    let mut out = vec![0.0; case.generators.len()];
    for (i, g) in case.generators.iter().enumerate() {
        if !g.status {
            continue;
        }
        out[i] = g.pg;
    }
    if let Some(sid) = slack_id {
        let slack_idx = index[&sid];
        let slack_load = case
            .buses
            .iter()
            .find(|b| b.id == sid)
            .map(|b| b.pd)
            .unwrap_or(0.0);
        let total = sol.p_inj[slack_idx] + slack_load;
        let members: Vec<usize> = case
            .generators
            .iter()
            .enumerate()
            .filter(|(_, g)| g.status && g.bus == sid)
            .map(|(i, _)| i)
            .collect();
        if !members.is_empty() {
            let weight_sum: f64 = members.iter().map(|&i| case.generators[i].pmax.max(1e-9)).sum();
            for &i in &members {
                out[i] = total * case.generators[i].pmax.max(1e-9) / weight_sum;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use crate::grid::parse_matpower_case;
    use alloc::string::ToString;

    #[test]
    fn two_bus_matches_closed_form() {
        // lossless branch x = 0.1, 0.5 p.u. load: P12 = V1 V2 sin(d)/x = 0.5
        let case = cases::two_bus();
        let sol = solve_ac(&case, 1e-10, 20).unwrap();
        assert!(sol.converged);
        // from-side flow carries the losses (none here)
        assert!((sol.branch_p[0] - 50.0).abs() < 1e-6, "branch flow {}", sol.branch_p[0]);
        // closed-form angle: Q balance shifts V2; with Q load 0 the angle obeys
        // V1 V2 sin(theta) = 0.5 * x
        let delta = sol.va[0] - sol.va[1];
        assert!((sol.vm[0] * sol.vm[1] * math::sin(delta) - 0.05).abs() < 1e-9);
    }

    #[test]
    fn zero_impedance_branch_is_rejected() {
        let mut case = cases::two_bus();
        case.branches[0].r = 0.0;
        case.branches[0].x = 0.0;
        assert_eq!(
            solve_ac(&case, 1e-8, 20).unwrap_err(),
            PfError::ZeroImpedanceBranch { index: 0 }
        );
    }

    #[test]
    fn residual_matches_reported_mismatch() {
        let case = cases::bench30();
        let sol = solve_ac(&case, 1e-8, 20).unwrap();
        assert!(residual(&case, &sol) <= 1e-8);
    }

    #[test]
    fn dc_three_bus_ring_matches_hand_solve() {
        // ring of three buses, x = 0.1 each, injections (+1, -1, 0) p.u.
        // oracle: reduced system [[20,-10],[-10,20]] [t2,t3] = [-1, 0],
        // solved independently by Cramer's rule.
        let text = "\
mpc.baseMVA = 100;
mpc.bus = [
\t1\t3\t0\t0\t0\t0\t1\t1\t0\t0\t1\t1.1\t0.9;
\t2\t1\t100\t0\t0\t0\t1\t1\t0\t0\t1\t1.1\t0.9;
\t3\t1\t0\t0\t0\t0\t1\t1\t0\t0\t1\t1.1\t0.9;
];
mpc.gen = [
\t1\t100\t0\t300\t-300\t1\t100\t1\t300\t0;
];
mpc.branch = [
\t1\t2\t0\t0.1\t0\t0\t0\t0\t0\t0\t1\t-360\t360;
\t2\t3\t0\t0.1\t0\t0\t0\t0\t0\t0\t1\t-360\t360;
\t1\t3\t0\t0.1\t0\t0\t0\t0\t0\t0\t1\t-360\t360;
];
";
        let case = parse_matpower_case(text).unwrap();
        let sol = solve_dc(&case).unwrap();
        // Cramer: det = 20*20 - 100 = 300; t2 = (-1*20 - 0*-10)/300 = -1/15
        // t3 = (20*0 - (-10)(-1))/300 = -1/30
        let det = 20.0f64 * 20.0 - 10.0 * 10.0;
        let t2 = (-1.0 * 20.0 - 0.0 * -10.0) / det;
        let t3 = (20.0 * 0.0 - -10.0 * -1.0) / det;
        assert!((sol.va[1] - t2).abs() < 1e-12);
        assert!((sol.va[2] - t3).abs() < 1e-12);
        // flows: P12 = (0 - t2)/0.1 * 100
        assert!((sol.branch_p[0] - (0.0 - t2) / 0.1 * 100.0).abs() < 1e-9);
        assert!((sol.branch_p[1] - (t2 - t3) / 0.1 * 100.0).abs() < 1e-9);
        assert!((sol.branch_p[2] - (0.0 - t3) / 0.1 * 100.0).abs() < 1e-9);
    }

    #[test]
    fn dc_zero_injection_gives_zero_flows() {
        let mut case = cases::two_bus();
        case.buses[1].pd = 0.0;
        case.generators[0].pg = 0.0;
        let sol = solve_dc(&case).unwrap();
        assert_eq!(sol.va[0], sol.va[1]);
        assert_eq!(sol.branch_p[0], 0.0);
    }

    #[test]
    fn dc_disconnected_bus_is_singular() {
        let mut case = cases::two_bus();
        case.buses.push(crate::grid::Bus {
            id: 3,
            bus_type: BusType::Pq,
            pd: 0.0,
            qd: 0.0,
            vm: 1.0,
            va: 0.0,
            vmin: 0.9,
            vmax: 1.1,
        });
        assert_eq!(solve_dc(&case).unwrap_err(), PfError::SingularSystem);
    }

    #[test]
    fn lossless_case_conserves_power() {
        let mut case = cases::bench30();
        for br in &mut case.branches {
            br.r = 0.0;
            br.b = 0.0;
        }
        let tol = 1e-9;
        let sol = solve_ac(&case, tol, 30).unwrap();
        let outputs = generator_outputs(&case, &sol);
        let total_gen: f64 = outputs.iter().sum();
        let total_load: f64 = case.buses.iter().map(|b| b.pd).sum();
        assert!(
            (total_gen - total_load).abs() <= tol * case.base_mva * case.buses.len() as f64,
            "gen {total_gen} vs load {total_load}"
        );
    }

    #[test]
    fn section_flow_signs_and_additivity() {
        let case = cases::two_bus();
        let sol = solve_ac(&case, 1e-10, 20).unwrap();
        let fwd = Section {
            id: 1,
            lines: alloc::vec![(1, 2)],
            p_min: 40.0,
            p_max: 60.0,
            q_min: None,
            q_max: None,
        };
        let rev = Section {
            id: 2,
            lines: alloc::vec![(2, 1)],
            p_min: -60.0,
            p_max: -40.0,
            q_min: None,
            q_max: None,
        };
        let f1 = section_flow(&sol, &case, &fwd).unwrap();
        let f2 = section_flow(&sol, &case, &rev).unwrap();
        assert!((f1.p + f2.p).abs() < 1e-9, "sign must flip");
        assert!(f1.within_p_bounds);
        assert!(f2.within_p_bounds);
    }

    #[test]
    fn section_flow_requires_convergence() {
        let case = cases::two_bus();
        let mut sol = solve_ac(&case, 1e-10, 20).unwrap();
        sol.converged = false;
        let s = Section {
            id: 1,
            lines: alloc::vec![(1, 2)],
            p_min: 0.0,
            p_max: 1.0,
            q_min: None,
            q_max: None,
        };
        assert_eq!(section_flow(&sol, &case, &s).unwrap_err(), PfError::NotConverged);
    }

    #[test]
    fn state_features_are_deterministic_and_shaped() {
        let case = cases::bench30();
        let sol1 = solve_ac(&case, 1e-8, 20).unwrap();
        let sol2 = solve_ac(&case, 1e-8, 20).unwrap();
        let scaler = FeatureScaler::identity();
        let a = state_features(&sol1, &scaler).unwrap();
        let b = state_features(&sol2, &scaler).unwrap();
        assert_eq!(a.n, case.buses.len());
        assert_eq!(a.values.len(), case.buses.len() * 4);
        assert_eq!(a.values, b.values, "bitwise identical across solves");
        assert!(a.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn zero_variance_columns_standardize_to_zero() {
        // flat profile: Vm constant, Va constant zero
        let raw = StateMatrix {
            n: 3,
            values: alloc::vec![
                1.0, 0.0, 1.0, 0.0, //
                2.0, 0.0, 1.0, 0.0, //
                3.0, 0.0, 1.0, 0.0,
            ],
        };
        let scaler = FeatureScaler::fit(core::iter::once(&raw));
        let std = scaler.standardize(&raw);
        for r in 0..3 {
            assert_eq!(std.at(r, 1), 0.0);
            assert_eq!(std.at(r, 2), 0.0);
            assert_eq!(std.at(r, 3), 0.0);
        }
        // non-degenerate column is centred
        let col: f64 = (0..3).map(|r| std.at(r, 0)).sum();
        assert!(col.abs() < 1e-12);
    }

    #[test]
    fn section_encoding_zeroes_outside_section() {
        let case = cases::bench30();
        let (sections, _) = cases::bench30_sections(&case);
        let sol = solve_ac(&case, 1e-8, 20).unwrap();
        let z = section_encoding(&sol, &case, &sections[0]).unwrap();
        assert_eq!(z.len(), 4 * case.branches.len());
        let member: alloc::vec::Vec<usize> = sections[0]
            .lines
            .iter()
            .map(|&(f, t)| case.find_branch(f, t)[0].0)
            .collect();
        for (k, _) in case.branches.iter().enumerate() {
            let inside = member.contains(&k);
            let slot = &z[4 * k..4 * k + 4];
            if !inside {
                assert!(slot.iter().all(|&v| v == 0.0), "branch {k} should be zeroed");
            } else {
                assert!(slot.iter().any(|&v| v != 0.0), "member branch {k} should carry data");
            }
        }
    }

    #[test]
    fn nonconvergence_reports_diagnostics() {
        let mut case = cases::bench30();
        // absurd loading to defeat the solver
        for b in &mut case.buses {
            b.pd *= 80.0;
        }
        match solve_ac(&case, 1e-8, 3) {
            Err(PfError::NonConvergence { iterations, max_mismatch }) => {
                assert_eq!(iterations, 3);
                assert!(max_mismatch > 1e-8);
            }
            Err(PfError::SingularJacobian) => {} // also acceptable for extreme loading
            other => panic!("expected divergence, got {}", match other {
                Ok(_) => "convergence".to_string(),
                Err(e) => e.to_string(),
            }),
        }
    }
}
