//! End-to-end runs: load inputs, generate, evaluate, select, optimize, write artifacts.
//!
//! A run directory receives `groundset.json`, `trace.csv`, `rules.json`, `rules.txt`
//! and `report.json`. Everything except `report.json` and the timing columns of
//! `trace.csv` is a pure function of the config.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::apriori::{apriori, min_support_count};
use crate::dataset::{discretize, fit_bins, load_dataset, BinningSpec, DiscretizedDataset};
use crate::error::Error;
use crate::evaluation::{
    metrics, write_trace_csv, CostTable, EvalContext, EvaluatedTriple, ObjectiveConfig, ReductionMode,
    Stage, TraceRow,
};
use crate::ground_set::{
    generate_original, generate_rl_reduced, generate_then, rl_reduce, CandidateSets, GenMethod,
    GenerationLimits, GroundSet, DEFAULT_EPS2,
};
use crate::itemset::ItemSet;
use crate::model::{affected_set, load_model};
use crate::optimizer::{
    early_gate, maximize, v_select, GateDecision, MoveRecord, OptimizerConfig, Termination, DEFAULT_EPS1,
    DEFAULT_EPS3,
};
use crate::schema::FeatureSchema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Original,
    RlReduction,
    ThenGeneration,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "original" => Ok(Method::Original),
            "rl-reduction" => Ok(Method::RlReduction),
            "then-generation" => Ok(Method::ThenGeneration),
            s if s.contains("rl-reduction") && s.contains("then-generation") => Err(Error::Config(
                "field `method`: rl-reduction and then-generation cannot be combined".into(),
            )),
            other => Err(Error::Config(format!(
                "field `method`: unknown method `{other}` (expected original, rl-reduction or then-generation)"
            ))),
        }
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self, Error> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.to_string()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Original => "original",
            Method::RlReduction => "rl-reduction",
            Method::ThenGeneration => "then-generation",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub schema: PathBuf,
    pub model: PathBuf,
    pub p: f64,
    #[serde(default = "default_method")]
    pub method: Method,
    /// Then-Generation support; defaults to one row.
    #[serde(default)]
    pub q: Option<f64>,
    /// Evaluate the first `r` triples and keep them all.
    #[serde(default)]
    pub r: Option<usize>,
    /// Evaluate the first `r_prime` triples and keep only accuracy-raising ones.
    #[serde(default)]
    pub r_prime: Option<usize>,
    /// Keep the `s` best-correcting triples before optimization.
    #[serde(default)]
    pub s: Option<usize>,
    #[serde(default = "default_eps1")]
    pub eps1: usize,
    #[serde(default = "default_eps2")]
    pub eps2: usize,
    #[serde(default = "default_eps3")]
    pub eps3: usize,
    #[serde(default)]
    pub lambda: f64,
    /// Use the four-term objective with these three weights instead of `lambda`.
    #[serde(default)]
    pub four_term: Option<[f64; 3]>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_budget")]
    pub budget_seconds: f64,
    /// Skip optimization when the evaluated ground set cannot reach this accuracy (%).
    #[serde(default)]
    pub target_acc: Option<f64>,
    pub out: PathBuf,
    #[serde(default)]
    pub sd_file: Option<PathBuf>,
    #[serde(default)]
    pub cost_table: Option<PathBuf>,
    /// Reuse a ground set written by an earlier run instead of generating one.
    #[serde(default)]
    pub ground_set: Option<PathBuf>,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub label: Option<String>,
}

fn default_method() -> Method {
    Method::Original
}
fn default_eps1() -> usize {
    DEFAULT_EPS1
}
fn default_eps2() -> usize {
    DEFAULT_EPS2
}
fn default_eps3() -> usize {
    DEFAULT_EPS3
}
fn default_budget() -> f64 {
    300.0
}

/// Named hyperparameter sets for the German Credit and HELOC setups.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub p: f64,
    pub method: Method,
    pub q: Option<f64>,
}

pub const PRESETS: &[Preset] = &[
    Preset { name: "german-og", p: 0.305, method: Method::Original, q: None },
    Preset { name: "german-rl", p: 0.245, method: Method::RlReduction, q: None },
    Preset { name: "german-then", p: 0.48, method: Method::ThenGeneration, q: Some(0.00125) },
    Preset { name: "heloc-og", p: 0.318, method: Method::Original, q: None },
    Preset { name: "heloc-rl", p: 0.245, method: Method::RlReduction, q: None },
    // q left at one row: 0.000127 of 7896 rows is just over one row and would ask for two
    Preset { name: "heloc-then", p: 0.48, method: Method::ThenGeneration, q: None },
];

pub fn preset(name: &str) -> Result<&'static Preset, Error> {
    PRESETS.iter().find(|p| p.name == name).ok_or_else(|| {
        let names: Vec<&str> = PRESETS.iter().map(|p| p.name).collect();
        Error::Config(format!("unknown preset `{name}` (known: {})", names.join(", ")))
    })
}

impl RunConfig {
    pub fn new(dataset: impl Into<PathBuf>, schema: impl Into<PathBuf>, model: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        RunConfig {
            dataset: dataset.into(),
            schema: schema.into(),
            model: model.into(),
            p: 0.5,
            method: Method::Original,
            q: None,
            r: None,
            r_prime: None,
            s: None,
            eps1: DEFAULT_EPS1,
            eps2: DEFAULT_EPS2,
            eps3: DEFAULT_EPS3,
            lambda: 0.0,
            four_term: None,
            seed: 0,
            budget_seconds: 300.0,
            target_acc: None,
            out: out.into(),
            sd_file: None,
            cost_table: None,
            ground_set: None,
            workers: None,
            label: None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, Error> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, Error> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn apply_preset(&mut self, p: &Preset) {
        self.p = p.p;
        self.method = p.method;
        self.q = p.q;
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| {
            self.out
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| self.method.to_string())
        })
    }

    /// Checks that need no data.
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |field: &str, msg: String| Err(Error::Config(format!("field `{field}`: {msg}")));
        if !(self.p > 0.0 && self.p <= 1.0) {
            return bad("p", format!("{} is outside (0, 1]", self.p));
        }
        if self.q.is_some() && self.method != Method::ThenGeneration {
            return bad("q", "only valid with method then-generation".into());
        }
        if let Some(q) = self.q {
            if !(q > 0.0 && q <= 1.0) {
                return bad("q", format!("{q} is outside (0, 1]"));
            }
        }
        if self.r.is_some() && self.r_prime.is_some() {
            return bad("r_prime", "give at most one of r and r_prime".into());
        }
        if self.r == Some(0) || self.r_prime == Some(0) {
            return bad("r", "evaluation budget must be positive".into());
        }
        if self.s == Some(0) {
            return bad("s", "must be positive".into());
        }
        for (field, v) in [("eps1", self.eps1), ("eps2", self.eps2), ("eps3", self.eps3)] {
            if v == 0 {
                return bad(field, "must be positive".into());
            }
        }
        if self.eps2 < 2 {
            return bad("eps2", "a rule needs width at least 2".into());
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda", format!("{} must be a non-negative number", self.lambda));
        }
        if let Some(ls) = self.four_term {
            if ls.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
                return bad("four_term", "weights must be non-negative numbers".into());
            }
        }
        if !(self.budget_seconds >= 0.0) {
            return bad("budget_seconds", "must be non-negative".into());
        }
        if self.workers == Some(0) {
            return bad("workers", "must be positive".into());
        }
        Ok(())
    }

    /// Threshold floors against the dataset size.
    pub fn validate_thresholds(&self, rows: usize) -> Result<(), Error> {
        let check = |field: &str, t: f64| {
            min_support_count(t, rows)
                .map(|_| ())
                .map_err(|e| Error::Config(format!("field `{field}`: {e}")))
        };
        check("p", self.p)?;
        if let Some(q) = self.q {
            check("q", q)?;
        }
        Ok(())
    }

    fn reduction(&self) -> (usize, ReductionMode) {
        match (self.r, self.r_prime) {
            (Some(r), _) => (r, ReductionMode::AddAll),
            (None, Some(r)) => (r, ReductionMode::AccGainOnly),
            (None, None) => (usize::MAX, ReductionMode::AddAll),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(Error),
    #[error("{stage} stage failed: {source}")]
    Stage { stage: &'static str, source: Error },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Stage { .. } => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTimes {
    pub load: f64,
    pub generation: f64,
    pub evaluation: f64,
    pub optimization: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    #[default]
    Running,
    Complete,
    /// The gate stopped the run before optimization.
    Skipped,
    /// Artifacts in the run directory are partial.
    Failed { stage: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunReport {
    pub status: RunStatus,
    pub label: String,
    pub method: String,
    pub rows: usize,
    pub affected: usize,
    pub seconds: StageTimes,
    pub sd_size: Option<usize>,
    pub rl_size: Option<usize>,
    pub rl_reduced_size: Option<usize>,
    /// Share of RL kept by RL-Reduction.
    pub alpha: Option<f64>,
    pub ground_set_size: Option<usize>,
    pub iteration_count: Option<u64>,
    pub max_then_pool: Option<usize>,
    pub evaluated: Option<usize>,
    pub kept: Option<usize>,
    /// Accuracy of the evaluated ground set (the whole set or the evaluated prefix).
    pub acc_v: Option<f64>,
    pub cost_v: Option<f64>,
    pub selected: Option<usize>,
    pub acc_selected: Option<f64>,
    pub gate: Option<GateDecision>,
    pub recourse_size: Option<usize>,
    pub distinct_outers: Option<usize>,
    pub acc_r: Option<f64>,
    pub cost_r: Option<f64>,
    pub objective: Option<f64>,
    pub termination: Option<Termination>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleRecord {
    pub gen_index: usize,
    pub outer: String,
    pub inner: String,
    pub then: String,
    pub covered: usize,
    pub corrected: usize,
    pub incorrect: usize,
    pub mean_cost: Option<f64>,
}

/// The structured rules file; no timings, so reruns reproduce it byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RulesFile {
    pub config: RunConfig,
    pub affected: usize,
    pub corrected: usize,
    pub acc: f64,
    pub cost: Option<f64>,
    pub objective: Option<f64>,
    pub termination: Option<Termination>,
    pub gate: GateDecision,
    pub rules: Vec<RuleRecord>,
    pub moves: Vec<MoveRecord>,
}

pub struct RunOutcome {
    pub report: RunReport,
    pub rules: RulesFile,
    pub trace: Vec<TraceRow>,
}

struct Loaded {
    schema: FeatureSchema,
    binning: BinningSpec,
    data: DiscretizedDataset,
    oracle: crate::model::ModelOracle,
    costs: CostTable,
    sd: Option<Vec<ItemSet>>,
    ground: Option<GroundSet>,
}

fn load_inputs(cfg: &RunConfig) -> Result<Loaded, Error> {
    let schema = FeatureSchema::load(&cfg.schema)?;
    let raw = load_dataset(&cfg.dataset, &schema)?;
    if raw.is_empty() {
        return Err(Error::EmptyDataset);
    }
    cfg.validate_thresholds(raw.len())?;
    let oracle = load_model(&cfg.model, &schema)?;
    let costs = match &cfg.cost_table {
        Some(p) => CostTable::load(p, &schema)?,
        None => CostTable::uniform(&schema),
    };
    let sd = match &cfg.sd_file {
        Some(p) => Some(read_sd_file(p, &schema)?),
        None => None,
    };
    let ground = match &cfg.ground_set {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            Some(GroundSet::from_json(&text, &schema)?)
        }
        None => None,
    };
    let binning = fit_bins(&raw, &schema)?;
    let data = discretize(&raw, &binning, &schema)?;
    Ok(Loaded {
        schema,
        binning,
        data,
        oracle,
        costs,
        sd,
        ground,
    })
}

/// One condition per line in `name = value & ...` form; blank lines and `#` comments
/// are skipped.
pub fn read_sd_file(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<Vec<ItemSet>, Error> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| ItemSet::parse(l, schema))
        .collect()
}

/// Runs the pipeline on `cfg.workers` threads and writes the artifacts under `cfg.out`.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome, RunError> {
    cfg.validate().map_err(RunError::Config)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.workers {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| RunError::Config(Error::Config(format!("field `workers`: {e}"))))?;
    pool.install(|| run_in_pool(cfg))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Error> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn run_in_pool(cfg: &RunConfig) -> Result<RunOutcome, RunError> {
    let clock = Instant::now();
    let loaded = load_inputs(cfg).map_err(RunError::Config)?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| RunError::Config(Error::io(&cfg.out, e)))?;

    let mut report = RunReport {
        label: cfg.label(),
        method: cfg.method.to_string(),
        rows: loaded.data.row_count(),
        ..Default::default()
    };
    report.seconds.load = clock.elapsed().as_secs_f64();
    let mut trace = Vec::new();

    let result = stages(cfg, &loaded, &mut report, &mut trace, clock);
    let out = &cfg.out;
    let trace_written = std::fs::File::create(out.join("trace.csv"))
        .map_err(|e| Error::io(out.join("trace.csv"), e))
        .and_then(|f| write_trace_csv(&trace, f));
    match result {
        Ok(rules) => {
            let finish = trace_written
                .and_then(|_| write_file(&out.join("rules.json"), &rules_json(&rules)))
                .and_then(|_| write_file(&out.join("rules.txt"), &rules_text(&rules, &loaded)))
                .and_then(|_| write_file(&out.join("report.json"), &report_json(&report)));
            match finish {
                Ok(()) => Ok(RunOutcome { report, rules, trace }),
                Err(e) => Err(fail(&mut report, out, "output", e)),
            }
        }
        Err((stage, e)) => Err(fail(&mut report, out, stage, e)),
    }
}

fn fail(report: &mut RunReport, out: &Path, stage: &'static str, e: Error) -> RunError {
    report.status = RunStatus::Failed {
        stage: stage.to_string(),
        message: e.to_string(),
    };
    let _ = write_file(&out.join("report.json"), &report_json(report));
    RunError::Stage { stage, source: e }
}

fn report_json(report: &RunReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes") + "\n"
}

fn rules_json(rules: &RulesFile) -> String {
    serde_json::to_string_pretty(rules).expect("rules serialize") + "\n"
}

type StageResult<T> = Result<T, (&'static str, Error)>;

fn generation(cfg: &RunConfig, l: &Loaded, report: &mut RunReport) -> Result<GroundSet, Error> {
    if let Some(g) = &l.ground {
        report.ground_set_size = Some(g.len());
        report.iteration_count = Some(g.iteration_count);
        return Ok(g.clone());
    }
    let rl = apriori(&l.data, cfg.p, cfg.eps2 - 1)?;
    let cands = match &l.sd {
        Some(sd) => CandidateSets::new(sd.clone(), rl),
        None => CandidateSets::shared(rl),
    };
    report.sd_size = Some(cands.sd.len());
    report.rl_size = Some(cands.rl.len());
    let limits = GenerationLimits::for_schema(&l.schema, cfg.eps2);
    let ground = match cfg.method {
        Method::Original => generate_original(&cands, limits),
        Method::RlReduction => {
            let reduced = rl_reduce(&cands.rl).len();
            report.rl_reduced_size = Some(reduced);
            report.alpha = Some(if cands.rl.is_empty() {
                1.0
            } else {
                reduced as f64 / cands.rl.len() as f64
            });
            generate_rl_reduced(&cands, limits)
        }
        Method::ThenGeneration => {
            let q = cfg.q.unwrap_or(1.0 / l.data.row_count() as f64);
            let g = generate_then(&cands, &l.data, q, limits)?;
            debug_assert!(matches!(g.method, GenMethod::ThenGeneration { .. }));
            g
        }
    };
    report.ground_set_size = Some(ground.len());
    report.iteration_count = Some(ground.iteration_count);
    report.max_then_pool = ground.max_then_pool;
    Ok(ground)
}

fn stages(
    cfg: &RunConfig,
    l: &Loaded,
    report: &mut RunReport,
    trace: &mut Vec<TraceRow>,
    clock: Instant,
) -> StageResult<RulesFile> {
    // Stage 1
    let t = Instant::now();
    let affected = affected_set(&l.oracle, l.data.raw());
    report.affected = affected.len();
    let ground = generation(cfg, l, report).map_err(|e| ("generation", e))?;
    write_file(&cfg.out.join("groundset.json"), &(ground.to_json(&l.schema, Some(&l.binning)) + "\n"))
        .map_err(|e| ("generation", e))?;
    report.seconds.generation = t.elapsed().as_secs_f64();
    trace.push(TraceRow {
        wall_seconds: clock.elapsed().as_secs_f64(),
        stage: Stage::Generation,
        evaluated: 0,
        kept: ground.len(),
        acc_percent: 0.0,
        cost: None,
        objective: None,
    });

    // Stage 2
    let t = Instant::now();
    let ctx = EvalContext::new(&l.data, &affected, &l.binning, &l.oracle, l.costs.clone());
    let (budget, mode) = cfg.reduction();
    let reduced = crate::evaluation::v_reduce(&ground, budget, mode, &ctx, clock);
    trace.extend(reduced.trace.iter().cloned());
    report.evaluated = Some(reduced.evaluated);
    report.kept = Some(reduced.kept.len());
    report.acc_v = Some(reduced.metrics.acc);
    report.cost_v = reduced.metrics.cost;
    let selected = v_select(reduced.kept, cfg.s.unwrap_or(usize::MAX));
    let sel_metrics = metrics(&selected, affected.len());
    report.selected = Some(selected.len());
    report.acc_selected = Some(sel_metrics.acc);
    report.seconds.evaluation = t.elapsed().as_secs_f64();

    let gate = early_gate(reduced.metrics.acc, cfg.target_acc.unwrap_or(f64::NEG_INFINITY));
    report.gate = Some(gate);
    let mut rules = RulesFile {
        config: cfg.clone(),
        affected: affected.len(),
        corrected: 0,
        acc: 0.0,
        cost: None,
        objective: None,
        termination: None,
        gate,
        rules: Vec::new(),
        moves: Vec::new(),
    };
    if gate == GateDecision::Skip {
        report.status = RunStatus::Skipped;
        return Ok(rules);
    }
    if selected.is_empty() {
        // nothing to optimize over; the empty set is the answer
        report.recourse_size = Some(0);
        report.distinct_outers = Some(0);
        report.acc_r = Some(0.0);
        report.status = RunStatus::Complete;
        return Ok(rules);
    }

    // Stage 3
    let t = Instant::now();
    let obj = match cfg.four_term {
        Some(ls) => ObjectiveConfig::four_term_for(&selected, &l.costs, cfg.eps1, ls),
        None => ObjectiveConfig::Simplified { lambda: cfg.lambda },
    };
    let opt_cfg = OptimizerConfig {
        eps1: cfg.eps1,
        eps3: cfg.eps3,
        budget_seconds: cfg.budget_seconds,
        ..OptimizerConfig::default()
    };
    let rs = maximize(&selected, &opt_cfg, &obj, sel_metrics.acc, &l.costs, affected.len(), clock)
        .map_err(|e| ("optimization", e))?;
    report.seconds.optimization = t.elapsed().as_secs_f64();
    trace.extend(rs.trace.iter().cloned());
    report.recourse_size = Some(rs.triples.len());
    report.distinct_outers = Some(rs.distinct_outers());
    report.acc_r = Some(rs.metrics.acc);
    report.cost_r = rs.metrics.cost;
    report.objective = Some(rs.objective_value);
    report.termination = Some(rs.termination);
    report.status = RunStatus::Complete;

    rules.corrected = rs.metrics.corrected;
    rules.acc = rs.metrics.acc;
    rules.cost = rs.metrics.cost;
    rules.objective = Some(rs.objective_value);
    rules.termination = Some(rs.termination);
    rules.moves = rs.moves.clone();
    rules.rules = rs.triples.iter().map(|t| rule_record(t, &l.schema)).collect();
    Ok(rules)
}

fn rule_record(t: &EvaluatedTriple, schema: &FeatureSchema) -> RuleRecord {
    RuleRecord {
        gen_index: t.triple.gen_index,
        outer: t.triple.outer.to_condition_string(schema),
        inner: t.triple.inner.to_condition_string(schema),
        then: t.triple.then.to_condition_string(schema),
        covered: t.covered.len(),
        corrected: t.corrected.len(),
        incorrect: t.incorrect(),
        mean_cost: (!t.costs.is_empty()).then(|| t.costs.iter().sum::<f64>() / t.costs.len() as f64),
    }
}

fn rules_text(rules: &RulesFile, l: &Loaded) -> String {
    use std::fmt::Write;
    let mut s = String::new();
    let c = &rules.config;
    let _ = writeln!(s, "Recourse rules ({} generation, p = {})", c.method, c.p);
    if rules.gate == GateDecision::Skip {
        let _ = writeln!(
            s,
            "Optimization skipped: the evaluated ground set cannot reach the target accuracy."
        );
        return s;
    }
    let _ = writeln!(
        s,
        "acc {:.1}% ({} of {} affected), cost {}, termination {}",
        rules.acc,
        rules.corrected,
        rules.affected,
        rules.cost.map(|v| format!("{v:.2}")).unwrap_or_else(|| "n/a".into()),
        rules.termination.map(|t| t.to_string()).unwrap_or_else(|| "none".into()),
    );
    for (i, r) in rules.rules.iter().enumerate() {
        let parse = |text: &str| ItemSet::parse(text, &l.schema).expect("own output parses");
        let show = |text: &str| parse(text).describe(&l.schema, Some(&l.binning));
        let _ = writeln!(s);
        let _ = writeln!(s, "{}. If {}", i + 1, show(&r.outer));
        let _ = writeln!(s, "     If {}", show(&r.inner));
        let _ = writeln!(s, "     Then {}", show(&r.then));
        let _ = writeln!(
            s,
            "     covers {}, corrects {}, mean cost {}",
            r.covered,
            r.corrected,
            r.mean_cost.map(|v| format!("{v:.2}")).unwrap_or_else(|| "n/a".into())
        );
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub run: String,
    #[serde(flatten)]
    pub row: TraceRow,
}

/// Runs every config and merges their traces into one table keyed by run label.
pub fn compare(configs: &[RunConfig]) -> Result<Vec<CompareRow>, RunError> {
    if configs.len() < 2 {
        return Err(RunError::Config(Error::IncompatibleRuns(
            "comparison needs at least two configs".into(),
        )));
    }
    let key = |p: &Path| std::fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf());
    let first = &configs[0];
    for c in &configs[1..] {
        if key(&c.dataset) != key(&first.dataset) || key(&c.schema) != key(&first.schema) {
            return Err(RunError::Config(Error::IncompatibleRuns(format!(
                "`{}` uses a different dataset than `{}`",
                c.label(),
                first.label()
            ))));
        }
        if key(&c.model) != key(&first.model) {
            return Err(RunError::Config(Error::IncompatibleRuns(format!(
                "`{}` uses a different model than `{}`",
                c.label(),
                first.label()
            ))));
        }
    }
    let mut labels: Vec<String> = configs.iter().map(|c| c.label()).collect();
    let mut outs: Vec<PathBuf> = configs.iter().map(|c| c.out.clone()).collect();
    labels.sort();
    outs.sort();
    if labels.windows(2).any(|w| w[0] == w[1]) || outs.windows(2).any(|w| w[0] == w[1]) {
        return Err(RunError::Config(Error::IncompatibleRuns(
            "runs need distinct labels and output directories".into(),
        )));
    }
    let mut table = Vec::new();
    for c in configs {
        let outcome = run(c)?;
        let label = c.label();
        table.extend(outcome.trace.into_iter().map(|row| CompareRow {
            run: label.clone(),
            row,
        }));
    }
    Ok(table)
}

pub fn write_compare_csv<W: std::io::Write>(rows: &[CompareRow], out: W) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["run", "wall_seconds", "stage", "evaluated", "kept", "acc_percent", "cost", "objective"])?;
    let opt = |x: Option<f64>| x.map(|v| format!("{v:.6}")).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.run.clone(),
            format!("{:.6}", r.row.wall_seconds),
            r.row.stage.to_string(),
            r.row.evaluated.to_string(),
            r.row.kept.to_string(),
            format!("{:.4}", r.row.acc_percent),
            opt(r.row.cost),
            opt(r.row.objective),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<compare writer>", e))?;
    Ok(())
}
