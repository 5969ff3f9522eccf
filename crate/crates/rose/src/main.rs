use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use rose::conduct::{Analysis, Stage, TrialStore};
use rose::design::{Arm, Design, DesignGoal, Method};
use rose::fixtures::{reproduce, ReproduceOptions, TableId, TableReport, DEFAULT_SEED};
use rose::oc_sim::{DeviationType, UmetConfig};
use rose::service::{self, to_json, DesignRequest, DesignSource, RowOc, Stages};
use rose::RoseError;
use std::collections::HashMap;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

#[derive(Parser)]
#[command(
    name = "rose",
    version,
    about = "Two-arm dose-optimization design engine"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimum sample size and decision boundaries.
    Design(DesignCmd),
    /// Exact operating characteristics of a design.
    Oc(OcCmd),
    /// Monte Carlo operating characteristics.
    Simulate(SimulateCmd),
    /// Simulated robustness to a wrong p_high or to enrollment deviations.
    Sensitivity(SensitivityCmd),
    /// Run a trial: record outcomes and apply the decision rules.
    Conduct(ConductCmd),
    /// Recompute a published table and compare cell by cell.
    Reproduce(ReproduceCmd),
    /// Serve the HTTP/JSON API.
    Serve(ServeCmd),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Normal,
    Exact,
    ExactGlobalMin,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Normal => Method::NormalApprox,
            MethodArg::Exact => Method::Exact,
            MethodArg::ExactGlobalMin => Method::ExactGlobalMin,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StagesArg {
    One,
    Two,
}

/// Design inputs; any of them may come from `--config` instead.
#[derive(Args, Clone, Default)]
struct DesignArgs {
    /// Key-value file mirroring the flags; flags win over the file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    p_high: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    alpha_low: Option<f64>,
    #[arg(long)]
    alpha_high: Option<f64>,
    /// Interim information fraction; implies a two-stage design.
    #[arg(long)]
    omega: Option<f64>,
    /// Allocation ratio high:low.
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long, value_enum)]
    stages: Option<StagesArg>,
    #[arg(long)]
    lambda_step: Option<f64>,
    #[arg(long)]
    lambda1_step: Option<f64>,
    #[arg(long)]
    n_cap: Option<u32>,
}

#[derive(Args)]
struct DesignCmd {
    #[command(flatten)]
    design: DesignArgs,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(Args)]
struct OcCmd {
    #[command(flatten)]
    design: DesignArgs,
    /// Extra truth `p_low,p_high`; repeatable.
    #[arg(long = "scenario")]
    scenarios: Vec<String>,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(Args)]
struct SimulateCmd {
    #[command(flatten)]
    design: DesignArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<u32>,
    #[arg(long)]
    true_p_low: Option<f64>,
    #[arg(long)]
    true_p_high: Option<f64>,
    #[arg(long)]
    enrolled_n_low: Option<u32>,
    #[arg(long)]
    enrolled_n_high: Option<u32>,
    /// Also run the utility-based comparator with default settings.
    #[arg(long)]
    umet: bool,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum DeviationArg {
    HighOnly,
    LowOnly,
    SameDirection,
    OppositeDirection,
}

#[derive(Args)]
struct SensitivityCmd {
    #[command(flatten)]
    design: DesignArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<u32>,
    /// Comma-separated true p_high values.
    #[arg(long, value_delimiter = ',', conflicts_with = "deviation")]
    p_high_grid: Vec<f64>,
    #[arg(long, value_enum, requires = "offsets")]
    deviation: Option<DeviationArg>,
    /// Comma-separated per-arm offsets.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    offsets: Vec<i64>,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(Args)]
struct ConductCmd {
    /// Directory holding one JSON document per trial.
    #[arg(long, global = true, default_value = "trials")]
    store: PathBuf,
    #[arg(long, global = true, value_enum, default_value = "json")]
    format: Format,
    #[command(subcommand)]
    action: ConductAction,
}

#[derive(Clone, Copy, ValueEnum)]
enum StageArg {
    Stage1,
    Stage2,
}

#[derive(Clone, Copy, ValueEnum)]
enum ArmArg {
    Low,
    High,
}

#[derive(Clone, Copy, ValueEnum)]
enum AnalysisArg {
    Interim,
    Final,
}

#[derive(Subcommand)]
enum ConductAction {
    /// Register a trial with a freshly computed design.
    Create {
        #[arg(long)]
        trial_id: Option<String>,
        #[command(flatten)]
        design: DesignArgs,
    },
    /// Add enrolled patients and responses to one arm.
    Record {
        #[arg(long)]
        trial_id: String,
        #[arg(long, value_enum)]
        stage: StageArg,
        #[arg(long, value_enum)]
        arm: ArmArg,
        #[arg(long)]
        enrolled: u32,
        #[arg(long)]
        responses: u32,
        #[arg(long)]
        expected_version: Option<u64>,
    },
    /// Run the interim or final analysis.
    Decide {
        #[arg(long)]
        trial_id: String,
        #[arg(long, value_enum)]
        analysis: Option<AnalysisArg>,
        #[arg(long)]
        expected_version: Option<u64>,
    },
    Show {
        #[arg(long)]
        trial_id: String,
    },
}

#[derive(Args)]
struct ReproduceCmd {
    /// Table id (T1-T4, S1-S12) or `all`.
    table: String,
    #[arg(long, default_value_t = 10_000)]
    reps: u32,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    /// List every cell, not only mismatches.
    #[arg(long)]
    verbose: bool,
}

#[derive(Args)]
struct ServeCmd {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: String,
    #[arg(long, default_value = "trials")]
    store: PathBuf,
    /// Concurrent computations.
    #[arg(long, default_value_t = 4)]
    workers: usize,
}

/// Failure with its exit code.
struct Fail {
    code: u8,
    message: String,
}

impl From<RoseError> for Fail {
    fn from(e: RoseError) -> Self {
        let code = match e {
            RoseError::Validation(_) | RoseError::Domain(_) | RoseError::Unsupported(_) => 2,
            RoseError::Infeasible(_) => 3,
            _ => 1,
        };
        Fail {
            code,
            message: e.to_string(),
        }
    }
}

fn usage_fail(message: String, sub: &str) -> Fail {
    let mut cmd = Cli::command();
    cmd.build();
    let usage = match cmd.find_subcommand_mut(sub) {
        Some(c) => c.render_usage().to_string(),
        None => cmd.render_usage().to_string(),
    };
    Fail {
        code: 2,
        message: format!("{message}\n\n{usage}"),
    }
}

/// `key = value` lines; `#` starts a comment.
struct ConfigFile {
    values: HashMap<String, String>,
}

impl ConfigFile {
    fn load(path: &Option<PathBuf>) -> Result<Self, Fail> {
        let mut values = HashMap::new();
        let Some(p) = path else {
            return Ok(ConfigFile { values });
        };
        let text = std::fs::read_to_string(p).map_err(|e| Fail {
            code: 2,
            message: format!("cannot read config {}: {e}", p.display()),
        })?;
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Fail {
                    code: 2,
                    message: format!("config line {}: expected key = value", i + 1),
                });
            };
            values.insert(
                k.trim().trim_start_matches("--").replace('_', "-"),
                v.trim().to_string(),
            );
        }
        Ok(ConfigFile { values })
    }

    fn take<T: FromStr>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, Fail> {
        let from_file = self.values.remove(key);
        if flag.is_some() {
            return Ok(flag);
        }
        match from_file {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| Fail {
                code: 2,
                message: format!("config key {key}: cannot parse '{v}'"),
            }),
        }
    }

    fn take_enum<T: ValueEnum>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, Fail> {
        let from_file = self.values.remove(key);
        if flag.is_some() {
            return Ok(flag);
        }
        match from_file {
            None => Ok(None),
            Some(v) => T::from_str(&v, true).map(Some).map_err(|_| Fail {
                code: 2,
                message: format!("config key {key}: unknown value '{v}'"),
            }),
        }
    }

    fn finish(self) -> Result<(), Fail> {
        match self.values.keys().next() {
            None => Ok(()),
            Some(k) => Err(Fail {
                code: 2,
                message: format!("unknown config key '{k}'"),
            }),
        }
    }
}

impl DesignArgs {
    fn request(&self, cfg: &mut ConfigFile, sub: &str) -> Result<DesignRequest, Fail> {
        let p_high = cfg.take("p-high", self.p_high)?;
        let delta = cfg.take("delta", self.delta)?;
        let alpha_low = cfg.take("alpha-low", self.alpha_low)?;
        let alpha_high = cfg.take("alpha-high", self.alpha_high)?;
        let mut missing = Vec::new();
        for (name, v) in [
            ("--p-high", p_high),
            ("--delta", delta),
            ("--alpha-low", alpha_low),
            ("--alpha-high", alpha_high),
        ] {
            if v.is_none() {
                missing.push(name);
            }
        }
        if !missing.is_empty() {
            return Err(usage_fail(
                format!("error: missing required flags: {}", missing.join(", ")),
                sub,
            ));
        }
        let mut goal = DesignGoal::new(
            p_high.unwrap(),
            delta.unwrap(),
            alpha_low.unwrap(),
            alpha_high.unwrap(),
        );
        goal.omega = cfg.take("omega", self.omega)?;
        if let Some(r) = cfg.take("ratio", self.ratio)? {
            goal.ratio = r;
        }
        let mut req = DesignRequest::new(goal);
        if let Some(m) = cfg.take_enum("method", self.method)? {
            req.method = m.into();
        }
        req.stages = cfg.take_enum("stages", self.stages)?.map(|s| match s {
            StagesArg::One => Stages::One,
            StagesArg::Two => Stages::Two,
        });
        req.lambda_step = cfg.take("lambda-step", self.lambda_step)?;
        req.lambda1_step = cfg.take("lambda1-step", self.lambda1_step)?;
        req.n_cap = cfg.take("n-cap", self.n_cap)?;
        Ok(req)
    }
}

fn design_rows(design: &Design, oc: RowOc, format: Format) -> Result<String, Fail> {
    Ok(match format {
        Format::Csv => service::to_csv(&[(design.clone(), oc)])?,
        Format::Table => service::to_table(design, &oc),
        Format::Json => unreachable!("json is printed from the envelope"),
    })
}

fn run_design(cmd: DesignCmd) -> Result<String, Fail> {
    let mut cfg = ConfigFile::load(&cmd.design.config)?;
    let req = cmd.design.request(&mut cfg, "design")?;
    cfg.finish()?;
    let env = service::run_design(&req)?;
    match cmd.format {
        Format::Json => Ok(to_json(&env)),
        f => design_rows(
            &env.result.design,
            RowOc::for_design(&env.result.design, env.result.exact_oc.as_ref()),
            f,
        ),
    }
}

fn parse_scenario(s: &str) -> Result<service::Scenario, Fail> {
    let bad = || Fail {
        code: 2,
        message: format!("scenario must be p_low,p_high, got '{s}'"),
    };
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    Ok(service::Scenario {
        p_low: a.trim().parse().map_err(|_| bad())?,
        p_high: b.trim().parse().map_err(|_| bad())?,
    })
}

fn run_oc(cmd: OcCmd) -> Result<String, Fail> {
    let mut cfg = ConfigFile::load(&cmd.design.config)?;
    let req = cmd.design.request(&mut cfg, "oc")?;
    cfg.finish()?;
    let scenarios = cmd
        .scenarios
        .iter()
        .map(|s| parse_scenario(s))
        .collect::<Result<_, _>>()?;
    let oc_req = service::OcRequest {
        source: DesignSource {
            design: None,
            design_request: Some(req),
        },
        scenarios,
    };
    let env = service::run_exact_oc(&oc_req)?;
    match cmd.format {
        Format::Json => Ok(to_json(&env)),
        f => {
            let mut out = design_rows(&env.result.design, RowOc::from(&env.result.anchors), f)?;
            if matches!(f, Format::Table) {
                for s in &env.result.scenarios {
                    out.push_str(&format!(
                        "\np_low={} p_high={}: select_high={:.4} pet={:.4} en={:.2}",
                        s.p_low, s.p_high, s.prob_select_high, s.pet, s.en
                    ));
                }
                if !env.result.scenarios.is_empty() {
                    out.push('\n');
                }
            }
            Ok(out)
        }
    }
}

fn run_simulate(cmd: SimulateCmd) -> Result<String, Fail> {
    let mut cfg = ConfigFile::load(&cmd.design.config)?;
    let req = cmd.design.request(&mut cfg, "simulate")?;
    let seed = cfg.take("seed", cmd.seed)?.ok_or_else(|| {
        usage_fail(
            "error: --seed is required; simulations never pick their own seed".into(),
            "simulate",
        )
    })?;
    let reps = cfg.take("reps", cmd.reps)?.unwrap_or(10_000);
    let true_p_low = cfg.take("true-p-low", cmd.true_p_low)?;
    let true_p_high = cfg.take("true-p-high", cmd.true_p_high)?;
    let enrolled_n_low = cfg.take("enrolled-n-low", cmd.enrolled_n_low)?;
    let enrolled_n_high = cfg.take("enrolled-n-high", cmd.enrolled_n_high)?;
    cfg.finish()?;
    let sim = service::SimulateRequest {
        source: DesignSource {
            design: None,
            design_request: Some(req),
        },
        seed,
        n_reps: reps,
        true_p_low,
        true_p_high,
        enrolled_n_low,
        enrolled_n_high,
        umet: cmd.umet.then(UmetConfig::default),
    };
    let env = service::run_simulate(&sim)?;
    let sc = &env.result.scenarios;
    match cmd.format {
        Format::Json => Ok(to_json(&env)),
        Format::Csv if sc.len() == 2 => design_rows(
            &env.result.design,
            RowOc::from_sim(&sc[0].result, &sc[1].result),
            Format::Csv,
        ),
        Format::Csv => Err(Fail {
            code: 2,
            message: "csv output needs the two anchor scenarios".into(),
        }),
        Format::Table => {
            let mut out = String::new();
            for s in sc {
                let r = &s.result;
                out.push_str(&format!(
                    "{:<7} p_low={} p_high={}  pcs={:.4} (se {:.4})  pet={:.4}  en={:.2}  en_total={:.2}{}\n",
                    s.label,
                    service::num(s.true_p_low),
                    service::num(s.true_p_high),
                    r.pcs,
                    r.mc_se,
                    r.pet,
                    r.en,
                    r.en_total,
                    if r.anchored { "" } else { "  (not anchored: pcs is P(select high))" }
                ));
                if let Some(u) = &s.umet {
                    out.push_str(&format!(
                        "        comparator pcs={:.4} select_low={:.4} select_high={:.4} consider_high={:.4}\n",
                        u.pcs, u.select_low, u.select_high, u.consider_high
                    ));
                }
            }
            Ok(out)
        }
    }
}

fn run_sensitivity(cmd: SensitivityCmd) -> Result<String, Fail> {
    let mut cfg = ConfigFile::load(&cmd.design.config)?;
    let req = cmd.design.request(&mut cfg, "sensitivity")?;
    let seed = cfg
        .take("seed", cmd.seed)?
        .ok_or_else(|| usage_fail("error: --seed is required".into(), "sensitivity"))?;
    let reps = cfg.take("reps", cmd.reps)?.unwrap_or(10_000);
    cfg.finish()?;
    let kind = match cmd.deviation {
        Some(d) => service::SensitivityKind::NDeviation {
            deviation_type: match d {
                DeviationArg::HighOnly => DeviationType::HighOnly,
                DeviationArg::LowOnly => DeviationType::LowOnly,
                DeviationArg::SameDirection => DeviationType::SameDirection,
                DeviationArg::OppositeDirection => DeviationType::OppositeDirection,
            },
            offsets: cmd.offsets,
        },
        None if !cmd.p_high_grid.is_empty() => service::SensitivityKind::PHigh {
            true_p_high_grid: cmd.p_high_grid,
        },
        None => {
            return Err(usage_fail(
                "error: give --p-high-grid or --deviation with --offsets".into(),
                "sensitivity",
            ))
        }
    };
    let env = service::run_sensitivity(&service::SensitivityRequest {
        source: DesignSource {
            design: None,
            design_request: Some(req),
        },
        seed,
        n_reps: reps,
        kind,
    })?;
    match cmd.format {
        Format::Json => Ok(to_json(&env)),
        f => sensitivity_rows(&env.result.points, f),
    }
}

/// One line per grid point and anchor truth.
fn sensitivity_rows(points: &service::SensitivityPoints, format: Format) -> Result<String, Fail> {
    use rose::oc_sim::SimResult;
    let mut rows: Vec<(Vec<String>, &str, &SimResult)> = Vec::new();
    let lead: &[&str] = match points {
        service::SensitivityPoints::PHigh(ps) => {
            for p in ps {
                let k = vec![service::num(p.true_p_high)];
                rows.push((k.clone(), "s_low", &p.s_low));
                rows.push((k, "s_high", &p.s_high));
            }
            &["true_p_high"]
        }
        service::SensitivityPoints::NDeviation(ps) => {
            for p in ps {
                let k = vec![
                    p.offset.to_string(),
                    p.n_low.to_string(),
                    p.n_high.to_string(),
                ];
                rows.push((k.clone(), "s_low", &p.s_low));
                rows.push((k, "s_high", &p.s_high));
            }
            &["offset", "n_low", "n_high"]
        }
    };
    let mut header: Vec<&str> = lead.to_vec();
    header.extend(["scenario", "pcs", "mc_se", "pet", "en", "en_total"]);
    let body: Vec<Vec<String>> = rows
        .into_iter()
        .map(|(mut k, label, r)| {
            k.push(label.to_string());
            k.extend([r.pcs, r.mc_se, r.pet, r.en, r.en_total].map(service::num));
            k
        })
        .collect();
    if matches!(format, Format::Csv) {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Fail::from(RoseError::Storage(e.to_string()));
        w.write_record(&header).map_err(io)?;
        for r in &body {
            w.write_record(r).map_err(io)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Fail::from(RoseError::Storage(e.to_string())))?;
        return Ok(String::from_utf8(bytes).expect("csv output is utf-8"));
    }
    let width: Vec<usize> = (0..header.len())
        .map(|i| {
            body.iter()
                .map(|r| r[i].len())
                .chain([header[i].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: Vec<&str>| {
        let mut l = cells
            .iter()
            .zip(&width)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ");
        l.truncate(l.trim_end().len());
        l + "\n"
    };
    let mut out = line(header.clone());
    for r in &body {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    Ok(out)
}

fn run_conduct(cmd: ConductCmd) -> Result<String, Fail> {
    let store = TrialStore::open(&cmd.store)?;
    let trial = match cmd.action {
        ConductAction::Create { trial_id, design } => {
            let mut cfg = ConfigFile::load(&design.config)?;
            let req = design.request(&mut cfg, "conduct")?;
            cfg.finish()?;
            let env = service::create_trial(
                &store,
                &service::CreateTrialRequest {
                    trial_id,
                    source: DesignSource {
                        design: None,
                        design_request: Some(req),
                    },
                },
            )?;
            return Ok(match cmd.format {
                Format::Json => to_json(&env),
                _ => format!(
                    "created trial {} (version {})\n",
                    env.result.trial_id, env.result.version
                ),
            });
        }
        ConductAction::Record {
            trial_id,
            stage,
            arm,
            enrolled,
            responses,
            expected_version,
        } => {
            let entry = service::RecordEntry {
                stage: match stage {
                    StageArg::Stage1 => Stage::Stage1,
                    StageArg::Stage2 => Stage::Stage2,
                },
                arm: match arm {
                    ArmArg::Low => Arm::Low,
                    ArmArg::High => Arm::High,
                },
                enrolled,
                responses,
            };
            let env = service::record(
                &store,
                &trial_id,
                &service::RecordRequest {
                    expected_version,
                    records: vec![entry],
                },
            )?;
            if matches!(cmd.format, Format::Json) {
                return Ok(to_json(&env));
            }
            env.result
        }
        ConductAction::Decide {
            trial_id,
            analysis,
            expected_version,
        } => {
            let analysis = analysis.map(|a| match a {
                AnalysisArg::Interim => Analysis::Interim,
                AnalysisArg::Final => Analysis::Final,
            });
            let env = service::decide(
                &store,
                &trial_id,
                &service::DecisionRequest {
                    expected_version,
                    analysis,
                },
            )?;
            if matches!(cmd.format, Format::Json) {
                return Ok(to_json(&env));
            }
            let d = &env.result.decision;
            let mut out = format!(
                "{:?} analysis: {:?} (observed difference {:.4}, boundary {:.4})\n",
                d.analysis, d.kind, d.observed_diff, d.boundary
            );
            for w in &d.warnings {
                out.push_str(&format!("warning: {w}\n"));
            }
            return Ok(out);
        }
        ConductAction::Show { trial_id } => {
            let env = service::show_trial(&store, &trial_id)?;
            if matches!(cmd.format, Format::Json) {
                return Ok(to_json(&env));
            }
            env.result
        }
    };
    let pooled = trial.pooled();
    Ok(format!(
        "trial {} version {} status {:?}\nlow  {}/{}\nhigh {}/{}\ndecisions logged: {}\n",
        trial.trial_id,
        trial.version,
        trial.status,
        pooled.low.responses,
        pooled.low.enrolled,
        pooled.high.responses,
        pooled.high.enrolled,
        trial.decision_log.len()
    ))
}

fn report_text(r: &TableReport, verbose: bool) -> String {
    let mut out = format!(
        "{}: {}/{} cells match ({} ms)\n",
        r.table,
        r.passed(),
        r.cells.len(),
        r.elapsed_ms
    );
    for c in r.cells.iter().filter(|c| verbose || !c.pass) {
        let actual = c
            .actual
            .map(|a| format!("{a:.4}"))
            .unwrap_or_else(|| "-".into());
        out.push_str(&format!(
            "  {} {} {:<14} expected {:<8} got {:<10} {:?}{}\n",
            if c.pass { "ok  " } else { "FAIL" },
            c.row,
            c.column,
            c.expected,
            actual,
            c.rule,
            c.note
                .as_deref()
                .map(|n| format!(" ({n})"))
                .unwrap_or_default()
        ));
    }
    out
}

fn run_reproduce(cmd: ReproduceCmd) -> Result<(String, bool), Fail> {
    let tables: Vec<TableId> = if cmd.table.eq_ignore_ascii_case("all") {
        TableId::ALL.to_vec()
    } else {
        vec![cmd
            .table
            .parse::<TableId>()
            .map_err(|e| usage_fail(format!("error: {e}"), "reproduce"))?]
    };
    let opts = ReproduceOptions {
        n_reps: cmd.reps,
        seed: cmd.seed,
        ..Default::default()
    };
    let mut reports = Vec::new();
    for t in tables {
        reports.push(reproduce(t, &opts)?);
    }
    let ok = reports.iter().all(TableReport::all_pass);
    let out = match cmd.format {
        Format::Json => to_json(&reports),
        _ => reports
            .iter()
            .map(|r| report_text(r, cmd.verbose))
            .collect(),
    };
    Ok((out, ok))
}

fn run_serve(cmd: ServeCmd) -> Result<String, Fail> {
    let store = TrialStore::open(&cmd.store)?;
    let state = rose::api::AppState::new(store, cmd.workers);
    let rt = tokio::runtime::Runtime::new().map_err(|e| Fail {
        code: 1,
        message: e.to_string(),
    })?;
    eprintln!("listening on {}", cmd.addr);
    rt.block_on(rose::api::serve(&cmd.addr, state))
        .map_err(|e| Fail {
            code: 1,
            message: e.to_string(),
        })?;
    Ok(String::new())
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(out: &str) {
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(out.as_bytes());
    if !out.ends_with('\n') && !out.is_empty() {
        let _ = stdout.write_all(b"\n");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Design(c) => run_design(c),
        Command::Oc(c) => run_oc(c),
        Command::Simulate(c) => run_simulate(c),
        Command::Sensitivity(c) => run_sensitivity(c),
        Command::Conduct(c) => run_conduct(c),
        Command::Serve(c) => run_serve(c),
        Command::Reproduce(c) => match run_reproduce(c) {
            Ok((out, ok)) => {
                emit(&out);
                return if ok {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(1)
                };
            }
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(out) => {
            emit(&out);
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("{}", f.message);
            ExitCode::from(f.code)
        }
    }
}
