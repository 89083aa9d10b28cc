use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sarmanov_me::aggregation::{aggregate_single, tvar_allocate, AllocationReport};
use sarmanov_me::dependence::{self, KernelCase, SWEEP_HEADER};
use sarmanov_me::oracle::{self, MomentKind, OracleConfig, OracleReport, Target};
use sarmanov_me::sarmanov::{alpha_bounds_bivariate, Feasibility, RiskId};
use sarmanov_me::stop_loss::{reinsurance_csv, ReinsuredLaw};
use sarmanov_me::{Error, MixedErlang, ModelFile, SarmanovModel};

pub const EXIT_INFEASIBLE: u8 = 1;
pub const EXIT_PARSE: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "sarmanov", version, about = "Reinsurance and capital allocation for dependent mixed Erlang risks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CaseArg {
    #[value(alias = "1")]
    Density,
    #[value(alias = "2")]
    Exponential,
    #[value(alias = "3")]
    Linear,
    #[value(alias = "4")]
    Fgm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Layout {
    /// One row per level: p, variance, C_1..C_k, TVaR.
    Table,
    /// One block per level: unit, C_j, share and a total row.
    Units,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Model file (JSON).
    pub model: PathBuf,
    #[arg(long, value_enum)]
    pub out: Option<OutFormat>,
    /// Decimal places in CSV output.
    #[arg(long, default_value_t = 4)]
    pub precision: usize,
}

#[derive(Debug, Args)]
pub struct CaseArgs {
    /// Kernel family; all four when omitted.
    #[arg(long = "case", value_enum)]
    pub cases: Vec<CaseArg>,
    /// Truncation point of the first marginal for the linear kernel.
    #[arg(long, default_value_t = 15.0)]
    pub t1: f64,
    /// Truncation point of the second marginal for the linear kernel.
    #[arg(long, default_value_t = 15.0)]
    pub t2: f64,
    /// Use moments of the truncated marginals for the linear kernel.
    #[arg(long)]
    pub truncated_moments: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Kernel constants, pairwise alpha bounds and the feasibility verdict.
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Mixing weights of the total loss as one mixed Erlang law.
    Aggregate {
        #[command(flatten)]
        common: Common,
    },
    /// TVaR allocation of the total loss to individual risks.
    Allocate {
        #[command(flatten)]
        common: Common,
        #[arg(long = "p", required = true)]
        levels: Vec<f64>,
        #[arg(long, value_enum, default_value_t = Layout::Table)]
        layout: Layout,
    },
    /// VaR, TVaR and allocation of the stop-loss reinsured loss.
    Reinsure {
        #[command(flatten)]
        common: Common,
        #[arg(long = "p", required = true)]
        levels: Vec<f64>,
        /// Overrides the deductibles in the model file, one per portfolio.
        #[arg(long = "deductible")]
        deductibles: Vec<f64>,
    },
    /// Alpha and correlation bounds of a two-risk model.
    Corr {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        case: CaseArgs,
        /// Report the correlation at this alpha instead of the bounds.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Correlation bounds with both marginals sharing a scale, over a grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        case: CaseArgs,
        #[arg(long, default_value_t = 0.5)]
        from: f64,
        #[arg(long, default_value_t = 5.0)]
        to: f64,
        #[arg(long, default_value_t = 0.5)]
        step: f64,
    },
    /// Monte Carlo estimates from exact samples of the model.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long = "p")]
        levels: Vec<f64>,
        #[arg(long, default_value_t = 20_260_101)]
        seed: u64,
        #[arg(long, default_value_t = 1_000_000)]
        samples: u64,
        #[arg(long, default_value_t = 10_000)]
        batch_size: usize,
        /// Extra estimand as JSON, e.g. '{"kind":"aggregate_cdf","y":5}'.
        #[arg(long = "target")]
        targets: Vec<String>,
    },
}

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub stdout: String,
    pub message: String,
}

impl Failure {
    fn parse(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_PARSE,
            stdout: String::new(),
            message: message.into(),
        }
    }

    fn numeric(e: Error) -> Self {
        Self {
            code: EXIT_NUMERIC,
            stdout: String::new(),
            message: e.to_string(),
        }
    }
}

type Outcome = Result<String, Failure>;

fn load(path: &PathBuf) -> Result<(ModelFile, SarmanovModel), Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::parse(format!("{}: {e}", path.display())))?;
    let file = ModelFile::from_json(&text).map_err(|e| Failure::parse(format!("{}: {e}", path.display())))?;
    let model = file
        .to_unvalidated_model()
        .map_err(|e| Failure::parse(format!("{}: {e}", path.display())))?;
    Ok((file, model))
}

fn load_feasible(path: &PathBuf) -> Result<(ModelFile, SarmanovModel), Failure> {
    let (file, model) = load(path)?;
    if let Feasibility::Infeasible { bracket, .. } = model.feasibility_check() {
        return Err(Failure {
            code: EXIT_INFEASIBLE,
            stdout: String::new(),
            message: format!("dependence coefficients are infeasible: the density bracket reaches {bracket:.6}"),
        });
    }
    Ok((file, model))
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("output serializes");
    s.push('\n');
    s
}

fn label(id: RiskId) -> String {
    format!("{}.{}", id.portfolio + 1, id.position + 1)
}

pub fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Validate { common } => validate(common),
        Command::Aggregate { common } => aggregate(common),
        Command::Allocate { common, levels, layout } => allocate(common, levels, *layout),
        Command::Reinsure {
            common,
            levels,
            deductibles,
        } => reinsure(common, levels, deductibles),
        Command::Corr { common, case, alpha } => corr(common, case, *alpha),
        Command::Sweep {
            common,
            case,
            from,
            to,
            step,
        } => sweep(common, case, *from, *to, *step),
        Command::Simulate {
            common,
            levels,
            seed,
            samples,
            batch_size,
            targets,
        } => simulate(
            common,
            levels,
            OracleConfig {
                sample_count: *samples,
                seed: *seed,
                batch_size: *batch_size,
            },
            targets,
        ),
    }
}

#[derive(Serialize)]
struct RiskRow {
    risk: String,
    beta: f64,
    mean: f64,
    gamma: f64,
    pdf_max: f64,
}

#[derive(Serialize)]
struct PairRow {
    first: String,
    second: String,
    alpha: f64,
    alpha_min: f64,
    alpha_max: f64,
}

#[derive(Serialize)]
struct Validation {
    risks: Vec<RiskRow>,
    pairs: Vec<PairRow>,
    feasibility: Feasibility,
}

fn validate(c: &Common) -> Outcome {
    let (_, model) = load(&c.model)?;
    let risks: Vec<RiskRow> = model
        .risks()
        .iter()
        .zip(model.marginals())
        .map(|(r, d)| RiskRow {
            risk: label(r.id),
            beta: d.scale(),
            mean: d.mean(),
            gamma: r.gamma,
            pdf_max: r.pdf_max,
        })
        .collect();
    let ids: Vec<RiskId> = model.risks().iter().map(|r| r.id).collect();
    let mut pairs = Vec::new();
    for (i, a) in ids.iter().enumerate() {
        for b in &ids[i + 1..] {
            let bounds = alpha_bounds_bivariate(model.marginal(*a), model.marginal(*b));
            let alpha = model
                .pairs()
                .iter()
                .find(|p| p.first == *a && p.second == *b)
                .map_or(0.0, |p| p.alpha);
            pairs.push(PairRow {
                first: label(*a),
                second: label(*b),
                alpha,
                alpha_min: bounds.lower,
                alpha_max: bounds.upper,
            });
        }
    }
    let feasibility = model.feasibility_check();
    let infeasible = feasibility.is_infeasible();
    let report = Validation {
        risks,
        pairs,
        feasibility,
    };
    let text = match c.out.unwrap_or(OutFormat::Csv) {
        OutFormat::Json => json(&report),
        OutFormat::Csv => {
            let p = c.precision;
            let mut s = String::from("risk,beta,mean,gamma,pdf_max\n");
            for r in &report.risks {
                let _ = writeln!(s, "{},{},{:.p$},{:.p$},{:.p$}", r.risk, r.beta, r.mean, r.gamma, r.pdf_max);
            }
            s.push_str("\nfirst,second,alpha,alpha_min,alpha_max\n");
            for r in &report.pairs {
                let _ = writeln!(s, "{},{},{},{:.p$},{:.p$}", r.first, r.second, r.alpha, r.alpha_min, r.alpha_max);
            }
            s.push('\n');
            match &report.feasibility {
                Feasibility::Feasible { min_bracket } => {
                    let _ = writeln!(s, "verdict,feasible\nmin_bracket,{min_bracket:.p$}");
                }
                Feasibility::Undetermined { min_bracket } => {
                    let _ = writeln!(s, "verdict,undetermined\nmin_bracket,{min_bracket:.p$}");
                }
                Feasibility::Infeasible { corner, bracket } => {
                    let _ = writeln!(s, "verdict,infeasible\nbracket,{bracket:.p$}");
                    let values: Vec<String> = corner.iter().map(|v| format!("{v:.p$}")).collect();
                    let _ = writeln!(s, "corner,{}", values.join(","));
                }
            }
            s
        }
    };
    if infeasible {
        Err(Failure {
            code: EXIT_INFEASIBLE,
            stdout: text,
            message: "the model is infeasible".into(),
        })
    } else {
        Ok(text)
    }
}

#[derive(Serialize)]
struct AggregateOut<'a> {
    scale: f64,
    weights: &'a [f64],
    mean: f64,
    variance: f64,
}

fn aggregate(c: &Common) -> Outcome {
    let (_, model) = load_feasible(&c.model)?;
    let s = model.merged().and_then(|m| aggregate_single(&m)).map_err(Failure::numeric)?;
    Ok(match c.out.unwrap_or(OutFormat::Csv) {
        OutFormat::Json => json(&AggregateOut {
            scale: s.scale(),
            weights: s.weights(),
            mean: s.mean(),
            variance: s.variance(),
        }),
        OutFormat::Csv => {
            let p = c.precision;
            let mut out = format!("# scale {}\ni,p_i\n", s.scale());
            for (i, w) in s.weights().iter().enumerate() {
                if *w >= 1e-4 || *w == 0.0 {
                    let _ = writeln!(out, "{},{w:.p$}", i + 1);
                } else {
                    let _ = writeln!(out, "{},{w:.3e}", i + 1);
                }
            }
            out
        }
    })
}

fn allocate(c: &Common, levels: &[f64], layout: Layout) -> Outcome {
    let (_, model) = load_feasible(&c.model)?;
    let merged = model.merged().map_err(Failure::numeric)?;
    let variance = aggregate_single(&merged).map_err(Failure::numeric)?.variance();
    let reports = levels
        .iter()
        .map(|p| tvar_allocate(&merged, *p))
        .collect::<Result<Vec<AllocationReport>, _>>()
        .map_err(Failure::numeric)?;
    let p = c.precision;
    Ok(match (c.out.unwrap_or(OutFormat::Csv), layout) {
        (OutFormat::Json, _) => json(&reports),
        (OutFormat::Csv, Layout::Units) => reports
            .iter()
            .map(|r| r.to_csv(p))
            .collect::<Vec<_>>()
            .join("\n"),
        (OutFormat::Csv, Layout::Table) => {
            let mut out = String::from("p,variance");
            for j in 1..=merged.risk_count() {
                let _ = write!(out, ",C_{j}");
            }
            out.push_str(",TVaR\n");
            for r in &reports {
                let _ = write!(out, "{},{variance:.p$}", r.p);
                for x in r.capitals() {
                    let _ = write!(out, ",{x:.p$}");
                }
                let _ = writeln!(out, ",{:.p$}", r.tvar);
            }
            out
        }
    })
}

fn reinsure(c: &Common, levels: &[f64], overrides: &[f64]) -> Outcome {
    let (file, model) = load_feasible(&c.model)?;
    let deductibles = if overrides.is_empty() {
        file.deductibles
            .clone()
            .ok_or_else(|| Failure::parse("the model file has no deductibles; pass --deductible"))?
    } else {
        overrides.to_vec()
    };
    if deductibles.len() != model.portfolio_count() || deductibles.iter().any(|d| !(*d > 0.0)) {
        return Err(Failure::parse(format!(
            "need {} positive deductibles, got {:?}",
            model.portfolio_count(),
            deductibles
        )));
    }
    let law = ReinsuredLaw::new(&model, &deductibles).map_err(Failure::numeric)?;
    let reports = levels
        .iter()
        .map(|p| law.allocate(*p))
        .collect::<Result<Vec<_>, _>>()
        .map_err(Failure::numeric)?;
    Ok(match c.out.unwrap_or(OutFormat::Csv) {
        OutFormat::Json => json(&reports),
        OutFormat::Csv => reinsurance_csv(&reports, c.precision),
    })
}

fn kernel_cases(a: &CaseArgs) -> Vec<KernelCase> {
    let all = [CaseArg::Density, CaseArg::Exponential, CaseArg::Linear, CaseArg::Fgm];
    let chosen: &[CaseArg] = if a.cases.is_empty() { &all } else { &a.cases };
    chosen
        .iter()
        .map(|c| match c {
            CaseArg::Density => KernelCase::Density,
            CaseArg::Exponential => KernelCase::Exponential,
            CaseArg::Linear => KernelCase::Linear {
                t1: a.t1,
                t2: a.t2,
                truncated_moments: a.truncated_moments,
            },
            CaseArg::Fgm => KernelCase::Fgm,
        })
        .collect()
}

fn two_marginals(model: &SarmanovModel) -> Result<(MixedErlang, MixedErlang), Failure> {
    let m: Vec<&MixedErlang> = model.marginals().collect();
    if m.len() != 2 {
        return Err(Failure::parse(format!("expected a model with two risks, found {}", m.len())));
    }
    Ok((m[0].clone(), m[1].clone()))
}

#[derive(Serialize)]
struct CaseBounds {
    case: KernelCase,
    #[serde(flatten)]
    bounds: dependence::RhoBounds,
    warnings: Vec<String>,
}

#[derive(Serialize)]
struct CaseRho {
    case: KernelCase,
    alpha: f64,
    rho: f64,
}

fn corr(c: &Common, args: &CaseArgs, alpha: Option<f64>) -> Outcome {
    let (_, model) = load(&c.model)?;
    let (d1, d2) = two_marginals(&model)?;
    let cases = kernel_cases(args);
    for case in &cases {
        for w in case.warnings(&d1, &d2) {
            eprintln!("warning: {w}");
        }
    }
    let p = c.precision;
    let out = c.out.unwrap_or(OutFormat::Csv);
    if let Some(alpha) = alpha {
        let rows = cases
            .iter()
            .map(|k| {
                Ok(CaseRho {
                    case: *k,
                    alpha,
                    rho: dependence::pearson_rho(k, &d1, &d2, alpha)?,
                })
            })
            .collect::<Result<Vec<_>, Error>>()
            .map_err(Failure::numeric)?;
        return Ok(match out {
            OutFormat::Json => json(&rows),
            OutFormat::Csv => {
                let mut s = String::from("case,alpha,rho\n");
                for r in rows {
                    let _ = writeln!(s, "{},{},{:.p$}", r.case.name(), r.alpha, r.rho);
                }
                s
            }
        });
    }
    let rows = cases
        .iter()
        .map(|k| {
            Ok(CaseBounds {
                case: *k,
                bounds: dependence::rho_bounds(k, &d1, &d2)?,
                warnings: k.warnings(&d1, &d2),
            })
        })
        .collect::<Result<Vec<_>, Error>>()
        .map_err(Failure::numeric)?;
    Ok(match out {
        OutFormat::Json => json(&rows),
        OutFormat::Csv => {
            let mut s = format!("{SWEEP_HEADER}\n");
            for r in rows {
                s.push_str(&dependence::bounds_csv_row(&r.case, None, &r.bounds, p));
                s.push('\n');
            }
            s
        }
    })
}

#[derive(Serialize)]
struct SweepOut {
    case: KernelCase,
    rows: Vec<dependence::SweepRow>,
}

fn sweep(c: &Common, args: &CaseArgs, from: f64, to: f64, step: f64) -> Outcome {
    let (_, model) = load(&c.model)?;
    let (d1, d2) = two_marginals(&model)?;
    if !(from > 0.0 && step > 0.0 && to >= from) {
        return Err(Failure::parse("the grid needs 0 < from <= to and step > 0"));
    }
    let count = ((to - from) / step + 1e-9).floor() as usize + 1;
    let grid: Vec<f64> = (0..count).map(|i| from + i as f64 * step).collect();
    let tables = kernel_cases(args)
        .into_iter()
        .map(|k| {
            Ok(SweepOut {
                case: k,
                rows: dependence::beta_sweep(&k, d1.weights(), d2.weights(), &grid)?,
            })
        })
        .collect::<Result<Vec<_>, Error>>()
        .map_err(Failure::numeric)?;
    Ok(match c.out.unwrap_or(OutFormat::Csv) {
        OutFormat::Json => json(&tables),
        OutFormat::Csv => {
            let mut s = format!("{SWEEP_HEADER}\n");
            for t in &tables {
                for r in &t.rows {
                    s.push_str(&dependence::bounds_csv_row(&t.case, Some(r.beta), &r.bounds, c.precision));
                    s.push('\n');
                }
            }
            s
        }
    })
}

fn target_label(t: &Target) -> String {
    let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
    match t {
        Target::JointDf { s } => format!("joint_df(s={})", list(s)),
        Target::AggregateCdf { y } => format!("aggregate_cdf(y={y})"),
        Target::AggregateMoment { moment } => format!("aggregate_{moment:?}").to_lowercase(),
        Target::RiskMoment { risk, moment } => format!("risk_{}_{moment:?}", risk + 1).to_lowercase(),
        Target::Correlation { first, second } => format!("correlation({};{})", first + 1, second + 1),
        Target::AggregateVar { p } => format!("var(p={p})"),
        Target::AggregateTvar { p } => format!("tvar(p={p})"),
        Target::Allocation { p, risk } => format!("C_{}(p={p})", risk + 1),
        Target::ReinsuredVar { p, .. } => format!("reinsured_var(p={p})"),
        Target::ReinsuredTvar { p, .. } => format!("reinsured_tvar(p={p})"),
        Target::ReinsuredAllocation { p, portfolio, .. } => format!("reinsured_C_{}(p={p})", portfolio + 1),
    }
}

fn simulate(c: &Common, levels: &[f64], cfg: OracleConfig, raw: &[String]) -> Outcome {
    let (file, model) = load_feasible(&c.model)?;
    let mut targets = Vec::new();
    for p in levels {
        let p = *p;
        match &file.deductibles {
            Some(d) => {
                targets.push(Target::ReinsuredVar {
                    p,
                    deductibles: d.clone(),
                });
                for l in 0..model.portfolio_count() {
                    targets.push(Target::ReinsuredAllocation {
                        p,
                        portfolio: l,
                        deductibles: d.clone(),
                    });
                }
                targets.push(Target::ReinsuredTvar {
                    p,
                    deductibles: d.clone(),
                });
            }
            None => {
                targets.push(Target::AggregateVar { p });
                for risk in 0..model.risk_count() {
                    targets.push(Target::Allocation { p, risk });
                }
                targets.push(Target::AggregateTvar { p });
            }
        }
    }
    for r in raw {
        targets.push(serde_json::from_str(r).map_err(|e| Failure::parse(format!("target {r}: {e}")))?);
    }
    if targets.is_empty() {
        targets.push(Target::AggregateMoment {
            moment: MomentKind::Mean,
        });
        targets.push(Target::AggregateMoment {
            moment: MomentKind::Variance,
        });
    }
    let reports: Vec<OracleReport> = oracle::estimate_many(&model, &cfg, &targets).map_err(Failure::numeric)?;
    Ok(match c.out.unwrap_or(OutFormat::Json) {
        OutFormat::Json => json(&reports),
        OutFormat::Csv => {
            let p = c.precision;
            let mut s = String::from("target,estimate,std_error,samples,seed\n");
            for r in &reports {
                let _ = writeln!(
                    s,
                    "{},{:.p$},{:.p$},{},{}",
                    target_label(&r.target),
                    r.estimate,
                    r.std_error,
                    r.samples,
                    r.seed
                );
            }
            s
        }
    })
}
