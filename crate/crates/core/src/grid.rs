//! Static grid description: case-file parsing, transmission sections, and the
//! bus/branch graph.
//!
//! A [`GridCase`] is immutable once validated and safe to share across threads.
//! The case format is the MATPOWER M-file v2 subset described in the README:
//! `mpc.baseMVA = <num>;` plus `mpc.bus`, `mpc.gen`, `mpc.branch` (and optional
//! `mpc.gencost`) matrix blocks with whitespace-separated numeric columns. Only
//! the columns this crate consumes are interpreted; extra columns are accepted
//! and ignored.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

/// Bus kind in the power-flow sense.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BusType {
    Slack,
    Pv,
    Pq,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bus {
    pub id: u32,
    pub bus_type: BusType,
    /// Active load demand (MW).
    pub pd: f64,
    /// Reactive load demand (MVAr).
    pub qd: f64,
    /// Voltage magnitude (p.u.), used as solver start / PV setpoint.
    pub vm: f64,
    /// Voltage angle (degrees, as stored in the case file).
    pub va: f64,
    pub vmin: f64,
    pub vmax: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub from_bus: u32,
    pub to_bus: u32,
    /// Series resistance (p.u.).
    pub r: f64,
    /// Series reactance (p.u.).
    pub x: f64,
    /// Total line-charging susceptance (p.u.), split half per end.
    pub b: f64,
    /// Thermal rating (MVA); 0 means unlimited.
    pub rate: f64,
    pub status: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub bus: u32,
    /// Active-power setpoint (MW).
    pub pg: f64,
    /// Reactive output (MVAr).
    pub qg: f64,
    pub qmax: f64,
    pub qmin: f64,
    pub pmax: f64,
    pub pmin: f64,
    pub status: bool,
}

/// Quadratic generation cost: `alpha * P^2 + beta * P + lambda` with P in MW.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GenCost {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
}

impl GenCost {
    pub const DEFAULT: GenCost = GenCost {
        alpha: 0.0,
        beta: 1.0,
        lambda: 0.0,
    };

    #[inline]
    pub fn eval(&self, p_mw: f64) -> f64 {
        self.alpha * p_mw * p_mw + self.beta * p_mw + self.lambda
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridCase {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    /// One entry per generator, defaulted when the case has no cost block.
    pub gencost: Vec<GenCost>,
}

/// A named transmission section: a set of directed line references with
/// pre-scheduled active-power bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct Section {
    pub id: u32,
    /// Ordered (from, to) bus pairs; orientation fixes the sign convention of
    /// the aggregated flow.
    pub lines: Vec<(u32, u32)>,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: Option<f64>,
    pub q_max: Option<f64>,
}

/// The bus/branch graph: one node per bus, one undirected edge per in-service
/// branch. Node indices are dense, ordered by ascending bus id, and stable for
/// a given case.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerGraph {
    pub n: usize,
    /// Undirected (u, v) index pairs with u < v, sorted ascending.
    pub edge_list: Vec<(usize, usize)>,
    pub node_index: BTreeMap<u32, usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum GridError {
    /// A required case-file block is absent.
    MissingBlock(&'static str),
    /// Wrong column count or non-numeric token; carries the 1-based line number.
    MalformedRow { line: usize, what: String },
    /// Branch or generator names a bus id that does not exist.
    DanglingReference { line: usize, bus: u32 },
    NoSlackBus,
    MultipleSlackBuses,
    InvalidBaseMva,
    GeneratorLimit { index: usize },
    /// A section line pair matches no in-service branch.
    UnknownBranch { section: u32, from: u32, to: u32 },
    /// A section line pair matches more than one branch.
    AmbiguousBranch { section: u32, from: u32, to: u32 },
    EmptySection { section: u32 },
    InvertedBounds { section: u32 },
    BadSectionConfig { line: usize, what: String },
}

impl fmt::Display for GridError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridError::MissingBlock(name) => write!(f, "missing required block `{name}`"),
            GridError::MalformedRow { line, what } => {
                write!(f, "malformed row at line {line}: {what}")
            }
            GridError::DanglingReference { line, bus } => {
                write!(f, "line {line} references nonexistent bus {bus}")
            }
            GridError::NoSlackBus => write!(f, "case has no slack bus"),
            GridError::MultipleSlackBuses => write!(f, "case has more than one slack bus"),
            GridError::InvalidBaseMva => write!(f, "baseMVA must be positive"),
            GridError::GeneratorLimit { index } => {
                write!(f, "generator {index} violates Pmin <= Pg <= Pmax")
            }
            GridError::UnknownBranch { section, from, to } => {
                write!(f, "section {section}: line ({from},{to}) matches no in-service branch")
            }
            GridError::AmbiguousBranch { section, from, to } => {
                write!(f, "section {section}: line ({from},{to}) matches multiple branches")
            }
            GridError::EmptySection { section } => write!(f, "section {section} declares no lines"),
            GridError::InvertedBounds { section } => {
                write!(f, "section {section}: p_min must be strictly below p_max")
            }
            GridError::BadSectionConfig { line, what } => {
                write!(f, "section config line {line}: {what}")
            }
        }
    }
}

impl GridCase {
    /// Dense index of every bus id, ascending by id.
    pub fn bus_index(&self) -> BTreeMap<u32, usize> {
        let mut ids: Vec<u32> = self.buses.iter().map(|b| b.id).collect();
        ids.sort_unstable();
        ids.into_iter().enumerate().map(|(i, id)| (id, i)).collect()
    }

    pub fn slack_bus(&self) -> Option<&Bus> {
        self.buses.iter().find(|b| b.bus_type == BusType::Slack)
    }

    /// Indices (into `generators`) of in-service units, in declaration order.
    /// These define the dispatchable action space.
    pub fn in_service_gens(&self) -> Vec<usize> {
        self.generators
            .iter()
            .enumerate()
            .filter(|(_, g)| g.status)
            .map(|(i, _)| i)
            .collect()
    }

    /// Indices (into `buses`) of buses carrying load.
    pub fn load_buses(&self) -> Vec<usize> {
        self.buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.pd != 0.0 || b.qd != 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    /// Index of the in-service branch matching `(from, to)` in either
    /// orientation, together with the sign (+1 when the declared orientation
    /// matches the branch orientation, -1 when reversed).
    pub fn find_branch(&self, from: u32, to: u32) -> Vec<(usize, f64)> {
        self.branches
            .iter()
            .enumerate()
            .filter(|(_, br)| br.status)
            .filter_map(|(i, br)| {
                if br.from_bus == from && br.to_bus == to {
                    Some((i, 1.0))
                } else if br.from_bus == to && br.to_bus == from {
                    Some((i, -1.0))
                } else {
                    None
                }
            })
            .collect()
    }

    fn validate(&self, origin_lines: &[(usize, u32)]) -> Result<(), GridError> {
        if !(self.base_mva > 0.0) {
            return Err(GridError::InvalidBaseMva);
        }
        let slack_count = self
            .buses
            .iter()
            .filter(|b| b.bus_type == BusType::Slack)
            .count();
        if slack_count == 0 {
            return Err(GridError::NoSlackBus);
        }
        if slack_count > 1 {
            return Err(GridError::MultipleSlackBuses);
        }
        let index = self.bus_index();
        for &(line, bus) in origin_lines {
            if !index.contains_key(&bus) {
                return Err(GridError::DanglingReference { line, bus });
            }
        }
        for (i, g) in self.generators.iter().enumerate() {
            if g.status && !(g.pmin <= g.pg && g.pg <= g.pmax) {
                return Err(GridError::GeneratorLimit { index: i });
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Case-file parsing
// ---------------------------------------------------------------------------

struct RawBlock {
    /// (1-based source line, numeric row)
    rows: Vec<(usize, Vec<f64>)>,
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(pos) => &line[..pos],
        None => line,
    }
}

fn parse_blocks(text: &str) -> Result<(Option<f64>, BTreeMap<String, RawBlock>), GridError> {
    let mut blocks: BTreeMap<String, RawBlock> = BTreeMap::new();
    let mut base_mva: Option<f64> = None;
    let mut current: Option<String> = None;

    for (i, raw_line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = strip_comment(raw_line).trim();
        if line.is_empty() {
            continue;
        }

        if current.is_none() {
            if let Some(rest) = line.strip_prefix("mpc.baseMVA") {
                let value = rest.trim_start().strip_prefix('=').ok_or_else(|| {
                    GridError::MalformedRow {
                        line: line_no,
                        what: "expected `=` after mpc.baseMVA".to_string(),
                    }
                })?;
                let value = value.trim().trim_end_matches(';').trim();
                base_mva = Some(value.parse::<f64>().map_err(|_| GridError::MalformedRow {
                    line: line_no,
                    what: format!("non-numeric baseMVA `{value}`"),
                })?);
                continue;
            }
            if let Some(rest) = line.strip_prefix("mpc.") {
                if let Some(eq) = rest.find('=') {
                    let name = rest[..eq].trim().to_string();
                    let after = rest[eq + 1..].trim();
                    if let Some(after) = after.strip_prefix('[') {
                        let mut block = RawBlock { rows: Vec::new() };
                        // rows may start on the same line as the bracket
                        let (done, _) = push_rows(after, line_no, &mut block)?;
                        if done {
                            blocks.insert(name, block);
                        } else {
                            blocks.insert(name.clone(), block);
                            current = Some(name);
                        }
                        continue;
                    }
                    // non-matrix assignment (e.g. mpc.version = '2';) -- ignored
                    continue;
                }
            }
            // any other top-level statement is ignored
            continue;
        }

        // inside a matrix block
        let name = current.clone().unwrap();
        let block = blocks.get_mut(&name).unwrap();
        let (done, _) = push_rows(line, line_no, block)?;
        if done {
            current = None;
        }
    }

    Ok((base_mva, blocks))
}

/// Parse data rows from a fragment inside `[ ... ]`. Returns (block finished,
/// consumed all input). Rows are terminated by `;` or end of line.
fn push_rows(fragment: &str, line_no: usize, block: &mut RawBlock) -> Result<(bool, ()), GridError> {
    let mut rest = fragment;
    loop {
        let close = rest.find("];");
        let (chunk, finished) = match close {
            Some(pos) => (&rest[..pos], true),
            None => match rest.find(']') {
                Some(pos) => (&rest[..pos], true),
                None => (rest, false),
            },
        };
        for row_text in chunk.split(';') {
            let row_text = row_text.trim();
            if row_text.is_empty() {
                continue;
            }
            let mut row = Vec::new();
            for tok in row_text.split_whitespace() {
                // tolerate comma-separated columns as well
                for piece in tok.split(',').filter(|p| !p.is_empty()) {
                    let v = piece.parse::<f64>().map_err(|_| GridError::MalformedRow {
                        line: line_no,
                        what: format!("non-numeric token `{piece}`"),
                    })?;
                    row.push(v);
                }
            }
            if !row.is_empty() {
                block.rows.push((line_no, row));
            }
        }
        if finished {
            return Ok((true, ()));
        }
        if close.is_none() {
            return Ok((false, ()));
        }
        rest = "";
    }
}

fn col(row: &[f64], idx: usize, line: usize, what: &str) -> Result<f64, GridError> {
    row.get(idx).copied().ok_or_else(|| GridError::MalformedRow {
        line,
        what: format!("missing column {} ({what})", idx + 1),
    })
}

/// Parse a MATPOWER v2 case into a validated [`GridCase`].
pub fn parse_matpower_case(text: &str) -> Result<GridCase, GridError> {
    let (base_mva, blocks) = parse_blocks(text)?;
    let base_mva = base_mva.ok_or(GridError::MissingBlock("mpc.baseMVA"))?;
    let bus_block = blocks.get("bus").ok_or(GridError::MissingBlock("mpc.bus"))?;
    let gen_block = blocks.get("gen").ok_or(GridError::MissingBlock("mpc.gen"))?;
    let branch_block = blocks
        .get("branch")
        .ok_or(GridError::MissingBlock("mpc.branch"))?;

    let mut buses = Vec::with_capacity(bus_block.rows.len());
    for (line, row) in &bus_block.rows {
        let line = *line;
        let id = col(row, 0, line, "bus id")? as u32;
        let bus_type = match col(row, 1, line, "bus type")? as i64 {
            1 => BusType::Pq,
            2 => BusType::Pv,
            3 => BusType::Slack,
            other => {
                return Err(GridError::MalformedRow {
                    line,
                    what: format!("unsupported bus type {other}"),
                })
            }
        };
        buses.push(Bus {
            id,
            bus_type,
            pd: col(row, 2, line, "Pd")?,
            qd: col(row, 3, line, "Qd")?,
            vm: col(row, 7, line, "Vm")?,
            va: col(row, 8, line, "Va")?,
            vmax: col(row, 11, line, "Vmax")?,
            vmin: col(row, 12, line, "Vmin")?,
        });
    }

    let mut origin_lines = Vec::new();
    let mut branches = Vec::with_capacity(branch_block.rows.len());
    for (line, row) in &branch_block.rows {
        let line = *line;
        let from_bus = col(row, 0, line, "from bus")? as u32;
        let to_bus = col(row, 1, line, "to bus")? as u32;
        origin_lines.push((line, from_bus));
        origin_lines.push((line, to_bus));
        branches.push(Branch {
            from_bus,
            to_bus,
            r: col(row, 2, line, "r")?,
            x: col(row, 3, line, "x")?,
            b: col(row, 4, line, "b")?,
            rate: col(row, 5, line, "rateA")?,
            status: col(row, 10, line, "status")? != 0.0,
        });
    }

    let mut generators = Vec::with_capacity(gen_block.rows.len());
    for (line, row) in &gen_block.rows {
        let line = *line;
        let bus = col(row, 0, line, "gen bus")? as u32;
        origin_lines.push((line, bus));
        generators.push(Generator {
            bus,
            pg: col(row, 1, line, "Pg")?,
            qg: col(row, 2, line, "Qg")?,
            qmax: col(row, 3, line, "Qmax")?,
            qmin: col(row, 4, line, "Qmin")?,
            status: col(row, 7, line, "status")? != 0.0,
            pmax: col(row, 8, line, "Pmax")?,
            pmin: col(row, 9, line, "Pmin")?,
        });
    }

    // gencost is optional; rows are (model, startup, shutdown, ncost, c...).
    // Quadratic polynomial rows map onto (alpha, beta, lambda); anything else
    // falls back to the default so the cost stays well defined.
    let mut gencost = alloc::vec![GenCost::DEFAULT; generators.len()];
    if let Some(block) = blocks.get("gencost") {
        for (gi, (line, row)) in block.rows.iter().enumerate() {
            if gi >= gencost.len() {
                break;
            }
            let line = *line;
            let model = col(row, 0, line, "cost model")? as i64;
            if model != 2 {
                continue;
            }
            let ncost = col(row, 3, line, "ncost")? as usize;
            let coeffs = &row[4..];
            if coeffs.len() < ncost {
                return Err(GridError::MalformedRow {
                    line,
                    what: format!("cost row declares {ncost} coefficients, found {}", coeffs.len()),
                });
            }
            gencost[gi] = match ncost {
                3 => GenCost {
                    alpha: coeffs[0],
                    beta: coeffs[1],
                    lambda: coeffs[2],
                },
                2 => GenCost {
                    alpha: 0.0,
                    beta: coeffs[0],
                    lambda: coeffs[1],
                },
                1 => GenCost {
                    alpha: 0.0,
                    beta: 0.0,
                    lambda: coeffs[0],
                },
                _ => GenCost::DEFAULT,
            };
        }
    }

    let case = GridCase {
        base_mva,
        buses,
        branches,
        generators,
        gencost,
    };
    case.validate(&origin_lines)?;
    Ok(case)
}

/// Serialise a case back to the M-file subset. Floats are written in shortest
/// round-trip form, so parse -> write -> parse is field-for-field identical.
pub fn write_matpower_case(case: &GridCase) -> String {
    use core::fmt::Write;
    let mut out = String::new();
    let _ = writeln!(out, "function mpc = case");
    let _ = writeln!(out, "mpc.version = '2';");
    let _ = writeln!(out, "mpc.baseMVA = {};", case.base_mva);
    let _ = writeln!(out, "mpc.bus = [");
    for b in &case.buses {
        let t = match b.bus_type {
            BusType::Pq => 1,
            BusType::Pv => 2,
            BusType::Slack => 3,
        };
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t0\t0\t1\t{}\t{}\t0\t1\t{}\t{};",
            b.id, t, b.pd, b.qd, b.vm, b.va, b.vmax, b.vmin
        );
    }
    let _ = writeln!(out, "];");
    let _ = writeln!(out, "mpc.gen = [");
    for g in &case.generators {
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t{}\t1\t100\t{}\t{}\t{};",
            g.bus,
            g.pg,
            g.qg,
            g.qmax,
            g.qmin,
            if g.status { 1 } else { 0 },
            g.pmax,
            g.pmin
        );
    }
    let _ = writeln!(out, "];");
    let _ = writeln!(out, "mpc.branch = [");
    for br in &case.branches {
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t0\t0\t0\t0\t{}\t-360\t360;",
            br.from_bus,
            br.to_bus,
            br.r,
            br.x,
            br.b,
            br.rate,
            if br.status { 1 } else { 0 }
        );
    }
    let _ = writeln!(out, "];");
    let _ = writeln!(out, "mpc.gencost = [");
    for c in &case.gencost {
        let _ = writeln!(out, "\t2\t0\t0\t3\t{}\t{}\t{};", c.alpha, c.beta, c.lambda);
    }
    let _ = writeln!(out, "];");
    out
}

// ---------------------------------------------------------------------------
// Section configuration
// ---------------------------------------------------------------------------

/// Parse the section config format (documented in the README, `version 1`):
///
/// ```text
/// version 1
/// section 7  p_min=130  p_max=880  lines=(33,37),(19,34),(30,38),(23,24)
/// ```
///
/// Optional `q_min=` / `q_max=` fields carry reactive bounds. Sections are
/// returned in declaration order; every declared line must match exactly one
/// in-service branch of `case`.
pub fn load_section_config(text: &str, case: &GridCase) -> Result<Vec<Section>, GridError> {
    let mut sections = Vec::new();
    let mut version_seen = false;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if !version_seen {
            match line.strip_prefix("version") {
                Some(v) if v.trim() == "1" => {
                    version_seen = true;
                    continue;
                }
                _ => {
                    return Err(GridError::BadSectionConfig {
                        line: line_no,
                        what: "expected `version 1` header".to_string(),
                    })
                }
            }
        }
        let rest = line
            .strip_prefix("section")
            .ok_or_else(|| GridError::BadSectionConfig {
                line: line_no,
                what: format!("expected `section <id> ...`, found `{line}`"),
            })?;
        let mut id: Option<u32> = None;
        let mut p_min: Option<f64> = None;
        let mut p_max: Option<f64> = None;
        let mut q_min: Option<f64> = None;
        let mut q_max: Option<f64> = None;
        let mut lines_field: Option<Vec<(u32, u32)>> = None;

        for tok in rest.split_whitespace() {
            if let Some((key, value)) = tok.split_once('=') {
                let bad = |what: String| GridError::BadSectionConfig { line: line_no, what };
                match key {
                    "p_min" => p_min = Some(value.parse().map_err(|_| bad(format!("bad p_min `{value}`")))?),
                    "p_max" => p_max = Some(value.parse().map_err(|_| bad(format!("bad p_max `{value}`")))?),
                    "q_min" => q_min = Some(value.parse().map_err(|_| bad(format!("bad q_min `{value}`")))?),
                    "q_max" => q_max = Some(value.parse().map_err(|_| bad(format!("bad q_max `{value}`")))?),
                    "lines" => lines_field = Some(parse_line_pairs(value, line_no)?),
                    other => {
                        return Err(bad(format!("unknown field `{other}`")));
                    }
                }
            } else if id.is_none() {
                id = Some(tok.parse().map_err(|_| GridError::BadSectionConfig {
                    line: line_no,
                    what: format!("bad section id `{tok}`"),
                })?);
            } else {
                return Err(GridError::BadSectionConfig {
                    line: line_no,
                    what: format!("unexpected token `{tok}`"),
                });
            }
        }

        let id = id.ok_or_else(|| GridError::BadSectionConfig {
            line: line_no,
            what: "missing section id".to_string(),
        })?;
        let missing = |what: &str| GridError::BadSectionConfig {
            line: line_no,
            what: format!("missing `{what}`"),
        };
        let lines_decl = lines_field.ok_or_else(|| missing("lines"))?;
        let p_min = p_min.ok_or_else(|| missing("p_min"))?;
        let p_max = p_max.ok_or_else(|| missing("p_max"))?;

        if lines_decl.is_empty() {
            return Err(GridError::EmptySection { section: id });
        }
        if p_min >= p_max {
            return Err(GridError::InvertedBounds { section: id });
        }
        for &(from, to) in &lines_decl {
            let matches = case.find_branch(from, to);
            match matches.len() {
                0 => return Err(GridError::UnknownBranch { section: id, from, to }),
                1 => {}
                _ => return Err(GridError::AmbiguousBranch { section: id, from, to }),
            }
        }
        sections.push(Section {
            id,
            lines: lines_decl,
            p_min,
            p_max,
            q_min,
            q_max,
        });
    }

    Ok(sections)
}

fn parse_line_pairs(value: &str, line_no: usize) -> Result<Vec<(u32, u32)>, GridError> {
    let bad = |what: String| GridError::BadSectionConfig { line: line_no, what };
    let mut pairs = Vec::new();
    // format: (a,b),(c,d),...
    for chunk in value.split("),") {
        let chunk = chunk.trim_matches(|c| c == '(' || c == ')');
        if chunk.is_empty() {
            continue;
        }
        let (a, b) = chunk
            .split_once(',')
            .ok_or_else(|| bad(format!("bad line pair `{chunk}`")))?;
        let from = a.trim().parse().map_err(|_| bad(format!("bad bus id `{a}`")))?;
        let to = b.trim().parse().map_err(|_| bad(format!("bad bus id `{b}`")))?;
        pairs.push((from, to));
    }
    Ok(pairs)
}

/// Write sections in the `version 1` config format (inverse of
/// [`load_section_config`]).
pub fn write_section_config(sections: &[Section]) -> String {
    use core::fmt::Write;
    let mut out = String::from("version 1\n");
    for s in sections {
        let _ = write!(out, "section {} p_min={} p_max={}", s.id, s.p_min, s.p_max);
        if let Some(q) = s.q_min {
            let _ = write!(out, " q_min={q}");
        }
        if let Some(q) = s.q_max {
            let _ = write!(out, " q_max={q}");
        }
        let _ = write!(out, " lines=");
        for (i, (f, t)) in s.lines.iter().enumerate() {
            if i > 0 {
                let _ = write!(out, ",");
            }
            let _ = write!(out, "({f},{t})");
        }
        let _ = writeln!(out);
    }
    out
}

// ---------------------------------------------------------------------------
// Graph
// ---------------------------------------------------------------------------

/// Build the bus/branch graph of a case: nodes ordered by ascending bus id,
/// one undirected edge per in-service branch, no self-loops, edges sorted.
pub fn build_graph(case: &GridCase) -> PowerGraph {
    let node_index = case.bus_index();
    let mut edge_list: Vec<(usize, usize)> = case
        .branches
        .iter()
        .filter(|br| br.status)
        .map(|br| {
            let u = node_index[&br.from_bus];
            let v = node_index[&br.to_bus];
            if u <= v {
                (u, v)
            } else {
                (v, u)
            }
        })
        .filter(|(u, v)| u != v)
        .collect();
    edge_list.sort_unstable();
    PowerGraph {
        n: node_index.len(),
        edge_list,
        node_index,
    }
}

impl PowerGraph {
    /// Number of undirected edges.
    pub fn m(&self) -> usize {
        self.edge_list.len()
    }
}
