//! Published design and operating-characteristic tables shipped as CSV, and
//! the harness that recomputes them.

use crate::design::{round3, Design, DesignGoal, Method, OneStageDesign, TwoStageDesign};
use crate::error::{Result, RoseError};
use crate::oc_sim::{simulate_anchors, simulate_umet, SimConfig, UmetConfig};
use crate::rose_exact::{
    design_exact_global_min, design_exact_one_stage, design_exact_two_stage, exact_oc_pair,
    ExactSearchConfig,
};
use crate::rose_normal::{design_one_stage, design_two_stage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

/// Interim fraction used by every published two-stage design.
pub const OMEGA: f64 = 0.5;
/// Default seed of the reproduction runs.
pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TableId {
    T1,
    T2,
    T3,
    T4,
    S1,
    S2,
    S3,
    S4,
    S5,
    S6,
    S7,
    S8,
    S9,
    S10,
    S11,
    S12,
}

use TableId::*;

impl TableId {
    pub const ALL: [TableId; 16] = [
        T1, T2, T3, T4, S1, S2, S3, S4, S5, S6, S7, S8, S9, S10, S11, S12,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            T1 => "T1",
            T2 => "T2",
            T3 => "T3",
            T4 => "T4",
            S1 => "S1",
            S2 => "S2",
            S3 => "S3",
            S4 => "S4",
            S5 => "S5",
            S6 => "S6",
            S7 => "S7",
            S8 => "S8",
            S9 => "S9",
            S10 => "S10",
            S11 => "S11",
            S12 => "S12",
        }
    }

    pub fn csv(self) -> &'static str {
        match self {
            T1 => include_str!("../../../fixtures/T1.csv"),
            T2 => include_str!("../../../fixtures/T2.csv"),
            T3 => include_str!("../../../fixtures/T3.csv"),
            T4 => include_str!("../../../fixtures/T4.csv"),
            S1 => include_str!("../../../fixtures/S1.csv"),
            S2 => include_str!("../../../fixtures/S2.csv"),
            S3 => include_str!("../../../fixtures/S3.csv"),
            S4 => include_str!("../../../fixtures/S4.csv"),
            S5 => include_str!("../../../fixtures/S5.csv"),
            S6 => include_str!("../../../fixtures/S6.csv"),
            S7 => include_str!("../../../fixtures/S7.csv"),
            S8 => include_str!("../../../fixtures/S8.csv"),
            S9 => include_str!("../../../fixtures/S9.csv"),
            S10 => include_str!("../../../fixtures/S10.csv"),
            S11 => include_str!("../../../fixtures/S11.csv"),
            S12 => include_str!("../../../fixtures/S12.csv"),
        }
    }

    pub fn rows(self) -> Result<Vec<Row>> {
        parse_rows(self.csv())
    }
}

impl fmt::Display for TableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TableId {
    type Err = RoseError;

    fn from_str(s: &str) -> Result<Self> {
        let up = s.trim().to_ascii_uppercase();
        TableId::ALL
            .into_iter()
            .find(|t| t.as_str() == up)
            .ok_or_else(|| RoseError::invalid(format!("unknown table '{s}'")))
    }
}

/// One fixture row: the table coordinate plus named values.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub p_high: f64,
    pub alpha_low: f64,
    pub alpha_high: f64,
    values: HashMap<String, f64>,
}

impl Row {
    pub fn get(&self, col: &str) -> Result<f64> {
        self.values
            .get(col)
            .copied()
            .ok_or_else(|| RoseError::invalid(format!("fixture has no column '{col}'")))
    }

    fn count(&self, col: &str) -> Result<u32> {
        Ok(self.get(col)?.round() as u32)
    }

    pub fn coordinate(&self) -> String {
        format!(
            "p_H={} a_L={:.2} a_H={:.2}",
            self.p_high, self.alpha_low, self.alpha_high
        )
    }

    pub fn goal(&self, delta: f64) -> DesignGoal {
        DesignGoal::new(self.p_high, delta, self.alpha_low, self.alpha_high)
    }
}

pub fn parse_rows(text: &str) -> Result<Vec<Row>> {
    let bad = |e: csv::Error| RoseError::invalid(format!("fixture: {e}"));
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(bad)?.clone();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(bad)?;
        let mut values = HashMap::new();
        for (h, v) in headers.iter().zip(rec.iter()) {
            let x: f64 = v
                .parse()
                .map_err(|_| RoseError::invalid(format!("fixture: '{v}' in column {h}")))?;
            values.insert(h.to_string(), x);
        }
        let pick = |k: &str| {
            values
                .get(k)
                .copied()
                .ok_or_else(|| RoseError::invalid(format!("fixture lacks {k}")))
        };
        rows.push(Row {
            p_high: pick("p_high")?,
            alpha_low: pick("alpha_low")?,
            alpha_high: pick("alpha_high")?,
            values,
        });
    }
    Ok(rows)
}

/// Label, extractor and comparison rule for one published column.
type Column = (&'static str, fn(&Design) -> f64, CellRule);

/// How a recomputed value is compared with the published one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "tol", rename_all = "snake_case")]
pub enum CellRule {
    /// Equal after rounding to 3 decimals.
    Decimals3,
    Integer,
    /// `|actual - expected| <= tol`.
    Abs(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellCheck {
    pub table: TableId,
    pub row: String,
    pub column: String,
    pub expected: f64,
    pub actual: Option<f64>,
    pub rule: CellRule,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CellCheck {
    fn new(
        table: TableId,
        row: &Row,
        column: &str,
        expected: f64,
        actual: f64,
        rule: CellRule,
    ) -> Self {
        let pass = match rule {
            CellRule::Decimals3 => (round3(actual) - expected).abs() < 1e-9,
            CellRule::Integer => (actual - expected).abs() < 1e-9,
            CellRule::Abs(t) => (actual - expected).abs() <= t + 1e-12,
        };
        CellCheck {
            table,
            row: row.coordinate(),
            column: column.to_string(),
            expected,
            actual: Some(actual),
            rule,
            pass,
            note: None,
        }
    }

    fn missing(
        table: TableId,
        row: &Row,
        column: &str,
        expected: f64,
        rule: CellRule,
        why: String,
    ) -> Self {
        CellCheck {
            table,
            row: row.coordinate(),
            column: column.to_string(),
            expected,
            actual: None,
            rule,
            pass: false,
            note: Some(why),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableReport {
    pub table: TableId,
    pub cells: Vec<CellCheck>,
    pub elapsed_ms: u128,
}

impl TableReport {
    pub fn passed(&self) -> usize {
        self.cells.iter().filter(|c| c.pass).count()
    }

    pub fn failed(&self) -> usize {
        self.cells.len() - self.passed()
    }

    pub fn all_pass(&self) -> bool {
        self.failed() == 0
    }

    pub fn failures(&self) -> impl Iterator<Item = &CellCheck> {
        self.cells.iter().filter(|c| !c.pass)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReproduceOptions {
    pub n_reps: u32,
    pub seed: u64,
    pub umet: UmetConfig,
}

impl Default for ReproduceOptions {
    fn default() -> Self {
        ReproduceOptions {
            n_reps: 10_000,
            seed: DEFAULT_SEED,
            umet: UmetConfig::default(),
        }
    }
}

/// Table layout facts.
struct Layout {
    delta: &'static [f64],
    ratio: f64,
}

fn layout(t: TableId) -> Layout {
    let (delta, ratio): (&'static [f64], f64) = match t {
        T1 | S7 | S9 | S5 | S3 => (&[0.1], 1.0),
        T2 | S8 | S10 | S6 | S4 => (&[0.15], 1.0),
        S1 | S2 => (&[0.05], 1.0),
        T3 | T4 | S11 | S12 => (&[0.1, 0.15], 1.0),
    };
    let ratio = if matches!(t, S3 | S4 | S5 | S6) {
        2.0
    } else {
        ratio
    };
    Layout { delta, ratio }
}

/// Published design table a simulation or OC table was computed from.
pub fn source_table(t: TableId) -> Option<&'static [TableId]> {
    match t {
        T3 | T4 => Some(&[T1, T2]),
        S2 => Some(&[S1]),
        S5 => Some(&[S3]),
        S6 => Some(&[S4]),
        S9 => Some(&[S7]),
        S10 => Some(&[S8]),
        S12 => Some(&[S11]),
        _ => None,
    }
}

/// Builds the published one- and two-stage designs of a design-table row.
/// `prefix` selects the `d10_`/`d15_` block of combined tables.
pub fn published_designs(
    t: TableId,
    row: &Row,
    delta: f64,
    prefix: &str,
) -> Result<(Option<Design>, Design)> {
    let ratio = layout(t).ratio;
    let goal = row.goal(delta).with_ratio(ratio);
    let method = match t {
        S7 | S8 => Method::Exact,
        S11 => Method::ExactGlobalMin,
        _ => Method::NormalApprox,
    };
    let one = |lambda: f64, n_low: u32, n_high: u32| {
        Design::One(OneStageDesign {
            goal,
            lambda,
            n_low,
            n_high,
            lambda_interval: (lambda, lambda),
            achieved_pcs_low: f64::NAN,
            achieved_pcs_high: f64::NAN,
            method,
            n_unrounded: None,
        })
    };
    let two = |lambda1: f64, n1_low: u32, n1_high: u32, lambda: f64, n_low: u32, n_high: u32| {
        Design::Two(TwoStageDesign {
            goal: goal.with_omega(OMEGA),
            lambda1,
            lambda,
            n1_low,
            n1_high,
            n_low,
            n_high,
            lambda1_star: None,
            lambda_star: None,
            omega: OMEGA,
            achieved_pcs_low: f64::NAN,
            achieved_pcs_high: f64::NAN,
            method,
        })
    };
    match t {
        T1 | T2 | S1 | S7 | S8 => {
            let (n, n1, n2) = (row.count("n")?, row.count("n1")?, row.count("n_two")?);
            Ok((
                Some(one(row.get("lambda")?, n, n)),
                two(row.get("lambda1")?, n1, n1, row.get("lambda_two")?, n2, n2),
            ))
        }
        S3 | S4 => Ok((
            Some(one(
                row.get("lambda")?,
                row.count("n_low")?,
                row.count("n_high")?,
            )),
            two(
                row.get("lambda1")?,
                row.count("n1_low")?,
                row.count("n1_high")?,
                row.get("lambda_two")?,
                row.count("n_two_low")?,
                row.count("n_two_high")?,
            ),
        )),
        S11 => {
            let c = |k: &str| format!("{prefix}{k}");
            let (n1, n) = (row.count(&c("n1"))?, row.count(&c("n"))?);
            Ok((
                None,
                two(
                    row.get(&c("lambda1"))?,
                    n1,
                    n1,
                    row.get(&c("lambda"))?,
                    n,
                    n,
                ),
            ))
        }
        _ => Err(RoseError::invalid(format!("{t} is not a design table"))),
    }
}

/// Recomputes every cell of a table.
pub fn reproduce(t: TableId, opts: &ReproduceOptions) -> Result<TableReport> {
    let start = Instant::now();
    let rows = t.rows()?;
    let per_row: Vec<Result<Vec<CellCheck>>> = rows
        .par_iter()
        .map(|row| reproduce_row(t, row, opts))
        .collect();
    let mut cells = Vec::new();
    for r in per_row {
        cells.extend(r?);
    }
    Ok(TableReport {
        table: t,
        cells,
        elapsed_ms: start.elapsed().as_millis(),
    })
}

fn reproduce_row(t: TableId, row: &Row, opts: &ReproduceOptions) -> Result<Vec<CellCheck>> {
    match t {
        T1 | T2 | S1 | S3 | S4 | S7 | S8 => design_row(t, row),
        S11 => global_min_row(row),
        S9 | S10 | S12 => exact_oc_row(t, row),
        T3 => comparator_row(row, opts),
        T4 | S2 | S5 | S6 => simulation_row(t, row, opts),
    }
}

fn design_row(t: TableId, row: &Row) -> Result<Vec<CellCheck>> {
    let Layout { delta, ratio } = layout(t);
    let goal = row.goal(delta[0]).with_ratio(ratio);
    let cfg = ExactSearchConfig::default();
    let (one, two) = match t {
        S7 | S8 => (
            design_exact_one_stage(&goal, &cfg).map(Design::One),
            design_exact_two_stage(&goal.with_omega(OMEGA), &cfg).map(Design::Two),
        ),
        _ => (
            design_one_stage(&goal).map(Design::One),
            design_two_stage(&goal.with_omega(OMEGA)).map(Design::Two),
        ),
    };
    let mut cells = Vec::new();
    let unequal = ratio != 1.0;
    let one_cols: &[Column] = if unequal {
        &[
            ("lambda", |d| d.lambda(), CellRule::Decimals3),
            ("n_low", |d| f64::from(d.n_low()), CellRule::Integer),
            ("n_high", |d| f64::from(d.n_high()), CellRule::Integer),
        ]
    } else {
        &[
            ("lambda", |d| d.lambda(), CellRule::Decimals3),
            ("n", |d| f64::from(d.n_low()), CellRule::Integer),
        ]
    };
    push_cells(&mut cells, t, row, &one, one_cols)?;
    let two_cols: &[Column] = if unequal {
        &[
            ("lambda1", lambda1, CellRule::Decimals3),
            ("n1_low", n1_low, CellRule::Integer),
            ("n1_high", n1_high, CellRule::Integer),
            ("lambda_two", |d| d.lambda(), CellRule::Decimals3),
            ("n_two_low", |d| f64::from(d.n_low()), CellRule::Integer),
            ("n_two_high", |d| f64::from(d.n_high()), CellRule::Integer),
        ]
    } else {
        &[
            ("lambda1", lambda1, CellRule::Decimals3),
            ("n1", n1_low, CellRule::Integer),
            ("lambda_two", |d| d.lambda(), CellRule::Decimals3),
            ("n_two", |d| f64::from(d.n_low()), CellRule::Integer),
        ]
    };
    push_cells(&mut cells, t, row, &two, two_cols)?;
    Ok(cells)
}

fn lambda1(d: &Design) -> f64 {
    match d {
        Design::Two(d) => d.lambda1,
        Design::One(_) => f64::NAN,
    }
}

fn n1_low(d: &Design) -> f64 {
    match d {
        Design::Two(d) => f64::from(d.n1_low),
        Design::One(_) => f64::NAN,
    }
}

fn n1_high(d: &Design) -> f64 {
    match d {
        Design::Two(d) => f64::from(d.n1_high),
        Design::One(_) => f64::NAN,
    }
}

fn push_cells(
    cells: &mut Vec<CellCheck>,
    t: TableId,
    row: &Row,
    design: &Result<Design>,
    cols: &[Column],
) -> Result<()> {
    for &(col, f, rule) in cols {
        let expected = row.get(col)?;
        cells.push(match design {
            Ok(d) => CellCheck::new(t, row, col, expected, f(d), rule),
            Err(e) => CellCheck::missing(t, row, col, expected, rule, e.to_string()),
        });
    }
    Ok(())
}

fn global_min_row(row: &Row) -> Result<Vec<CellCheck>> {
    let mut cells = Vec::new();
    for (delta, prefix) in [(0.1, "d10_"), (0.15, "d15_")] {
        let goal = row.goal(delta).with_omega(OMEGA);
        let d = design_exact_global_min(&goal, &ExactSearchConfig::default()).map(Design::Two);
        let cols: [Column; 4] = [
            ("lambda1", lambda1, CellRule::Decimals3),
            ("n1", n1_low, CellRule::Integer),
            ("lambda", |d| d.lambda(), CellRule::Decimals3),
            ("n", |d| f64::from(d.n_low()), CellRule::Integer),
        ];
        for (col, f, rule) in cols {
            let name = format!("{prefix}{col}");
            let expected = row.get(&name)?;
            cells.push(match &d {
                Ok(d) => CellCheck::new(S11, row, &name, expected, f(d), rule),
                Err(e) => CellCheck::missing(S11, row, &name, expected, rule, e.to_string()),
            });
        }
    }
    Ok(cells)
}

/// Published design of the source table at the same coordinate.
fn source_designs(
    t: TableId,
    row: &Row,
    block: usize,
    prefix: &str,
) -> Result<(Option<Design>, Design)> {
    let src =
        source_table(t).ok_or_else(|| RoseError::invalid(format!("{t} has no source table")))?;
    let st = src[block.min(src.len() - 1)];
    let delta = layout(t).delta[block];
    let src_rows = st.rows()?;
    let srow = src_rows
        .iter()
        .find(|r| {
            r.p_high == row.p_high && r.alpha_low == row.alpha_low && r.alpha_high == row.alpha_high
        })
        .ok_or_else(|| RoseError::invalid(format!("{st} has no row {}", row.coordinate())))?;
    published_designs(st, srow, delta, prefix)
}

fn exact_oc_row(t: TableId, row: &Row) -> Result<Vec<CellCheck>> {
    let pcs = CellRule::Abs(0.005);
    let en = CellRule::Abs(0.05);
    let mut cells = Vec::new();
    let mut check = |col: &str, actual: f64, rule: CellRule| -> Result<()> {
        cells.push(CellCheck::new(t, row, col, row.get(col)?, actual, rule));
        Ok(())
    };
    if t == S12 {
        for (block, prefix) in ["d10_", "d15_"].into_iter().enumerate() {
            let (_, two) = source_designs(t, row, block, prefix)?;
            let oc = exact_oc_pair(&two)?;
            let c = |k: &str| format!("{prefix}{k}");
            check(&c("pcs_sl"), oc.pcs_low, pcs)?;
            check(&c("pet_sl"), oc.pet_low, pcs)?;
            check(&c("en_sl"), oc.en_low, en)?;
            check(&c("pcs_sh"), oc.pcs_high, pcs)?;
            check(&c("pet_sh"), oc.pet_high, pcs)?;
            check(&c("en_sh"), oc.en_high, en)?;
        }
        return Ok(cells);
    }
    let (one, two) = source_designs(t, row, 0, "")?;
    let one = exact_oc_pair(&one.expect("design tables carry a one-stage design"))?;
    let oc = exact_oc_pair(&two)?;
    check("one_pcs_sl", one.pcs_low, pcs)?;
    check("one_pcs_sh", one.pcs_high, pcs)?;
    check("pcs_sl", oc.pcs_low, pcs)?;
    check("pet_sl", oc.pet_low, pcs)?;
    check("en_sl", oc.en_low, en)?;
    check("pcs_sh", oc.pcs_high, pcs)?;
    check("pet_sh", oc.pet_high, pcs)?;
    check("en_sh", oc.en_high, en)?;
    Ok(cells)
}

fn band(se: f64, slack: f64) -> CellRule {
    CellRule::Abs(3.0 * se + slack)
}

fn se_of(p: f64, reps: u32) -> f64 {
    (p * (1.0 - p) / f64::from(reps)).sqrt()
}

fn simulation_row(t: TableId, row: &Row, opts: &ReproduceOptions) -> Result<Vec<CellCheck>> {
    let mut cells = Vec::new();
    let en_rule = CellRule::Abs(0.5);
    let total_en = matches!(t, S5 | S6);
    let blocks: &[&str] = if t == T4 { &["d10_", "d15_"] } else { &[""] };
    for (block, prefix) in blocks.iter().enumerate() {
        let (one, two) = source_designs(t, row, block, prefix)?;
        let c = |k: &str| format!("{prefix}{k}");
        let mut check = |col: String, actual: f64, rule: CellRule| -> Result<()> {
            cells.push(CellCheck::new(t, row, &col, row.get(&col)?, actual, rule));
            Ok(())
        };
        if t != T4 {
            let one = one.expect("design tables carry a one-stage design");
            let a = simulate_anchors(&one, row.p_high, opts.n_reps, opts.seed)?;
            check(c("one_pcs_sl"), a.s_low.pcs, band(a.s_low.mc_se, 0.01))?;
            check(c("one_pcs_sh"), a.s_high.pcs, band(a.s_high.mc_se, 0.01))?;
        }
        let a = simulate_anchors(&two, row.p_high, opts.n_reps, opts.seed)?;
        for (tag, r) in [("sl", a.s_low), ("sh", a.s_high)] {
            check(c(&format!("pcs_{tag}")), r.pcs, band(r.mc_se, 0.01))?;
            check(
                c(&format!("pet_{tag}")),
                r.pet,
                band(se_of(r.pet, r.n_reps), 0.01),
            )?;
            check(
                c(&format!("en_{tag}")),
                if total_en { r.en_total } else { r.en },
                en_rule,
            )?;
        }
    }
    Ok(cells)
}

fn comparator_row(row: &Row, opts: &ReproduceOptions) -> Result<Vec<CellCheck>> {
    let mut cells = Vec::new();
    for (block, prefix) in ["d10_", "d15_"].into_iter().enumerate() {
        let (one, _) = source_designs(T3, row, block, prefix)?;
        let one = one.expect("design tables carry a one-stage design");
        let a = simulate_anchors(&one, row.p_high, opts.n_reps, opts.seed)?;
        let delta = one.goal().delta;
        let u_sl = simulate_umet(
            &one,
            &SimConfig::new(opts.seed, row.p_high, row.p_high).with_reps(opts.n_reps),
            &opts.umet,
        )?;
        let u_sh = simulate_umet(
            &one,
            &SimConfig::new(opts.seed, row.p_high - delta, row.p_high).with_reps(opts.n_reps),
            &opts.umet,
        )?;
        let c = |k: &str| format!("{prefix}{k}");
        let mut check = |col: String, actual: f64, rule: CellRule| -> Result<()> {
            cells.push(CellCheck::new(T3, row, &col, row.get(&col)?, actual, rule));
            Ok(())
        };
        check(c("rose_sl"), a.s_low.pcs, band(a.s_low.mc_se, 0.01))?;
        check(c("umet_sl"), u_sl.pcs, band(u_sl.mc_se, 0.02))?;
        check(c("rose_sh"), a.s_high.pcs, band(a.s_high.mc_se, 0.01))?;
        check(c("umet_sh"), u_sh.pcs, band(u_sh.mc_se, 0.02))?;
    }
    Ok(cells)
}
