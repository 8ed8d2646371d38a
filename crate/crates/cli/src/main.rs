use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use chrono::Utc;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use core_forge::combinatorics::{CandidateSet, CommitteeSpace};
use core_forge::duality::{
    build_dlp, certificate_kplusone, certificate_objective, certificate_singleton, verify_certificate, DeviationFunction,
    DeviationFunctionJson, DualCertificate,
};
use core_forge::milp::{
    build_milp, check_assignment, extract_deviation_function, lower_bound_assignment, solve_search, verify_solution,
};
use core_forge::model::OptModel;
use core_forge::oracle::stability_report;
use core_forge::priceability::{
    build_linlp, build_linqip, check_peters_priceable, check_priceable, find_counterexample, known_candidates,
    PetersOutcome, PriceKind, PriceabilityOutcome, ProofBundle,
};
use core_forge::rational::{ratio, to_f64, Rational};
use core_forge::solver::{write_model, BackendConfig, ExportFormat, SolveStatus, SOLVER_ENV};
use core_forge::{Quota, VoteDistribution};

const EXIT_OK: u8 = 0;
const EXIT_PROPERTY_FAILS: u8 = 1;
const EXIT_UNDECIDED: u8 = 2;
const EXIT_ERROR: u8 = 3;
const EXIT_TIMEOUT: u8 = 4;

#[derive(Parser)]
#[command(name = "core-forge", version, about = "Core stability and priceability of approval-based committees")]
struct Cli {
    #[command(flatten)]
    opts: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalOpts {
    /// Directory for run records and artifacts.
    #[arg(long, global = true, default_value = ".")]
    output_dir: PathBuf,
    /// Also write the command's optimization model in LP format.
    #[arg(long, global = true)]
    export_lp: Option<PathBuf>,
    /// Also write the command's optimization model in MPS format.
    #[arg(long, global = true)]
    export_mps: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Solver optimality tolerance.
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    /// Solver time limit in seconds.
    #[arg(long, global = true)]
    timeout: Option<f64>,
    #[arg(long, global = true)]
    threads: Option<u32>,
    /// Solver backend id.
    #[arg(long, global = true, env = SOLVER_ENV)]
    solver: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the search program for the best least-core value over all distributions.
    Search {
        m: usize,
        k: usize,
        #[arg(long, default_value = "hare")]
        quota: QuotaArg,
        /// Do not seed the solver with the constructive lower bound.
        #[arg(long)]
        no_warm_start: bool,
    },
    /// Check whether a committee is stable for an instance.
    Check {
        instance: PathBuf,
        /// Zero-based candidate indices, e.g. 0,2,4.
        #[arg(long)]
        committee: String,
        /// Committee size; defaults to the size of --committee.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value = "hare")]
        quota: QuotaArg,
    },
    /// Emit or verify lower-bound assignments and dual certificates.
    Certify {
        m: usize,
        k: usize,
        quota: QuotaArg,
        mode: CertifyMode,
        /// Deviation function JSON (singleton, kplusone, verify).
        #[arg(long)]
        deviations: Option<PathBuf>,
        /// Certificate JSON (verify).
        #[arg(long)]
        certificate: Option<PathBuf>,
    },
    /// Decide weak, Lindahl or payment-function priceability of a committee.
    Priceability {
        instance: PathBuf,
        #[arg(long)]
        committee: String,
        #[arg(long, default_value = "weak")]
        kind: KindArg,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Look for a distribution where {c1..ck} is stable but not priceable.
    Counterexample {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value = "droop")]
        quota: QuotaArg,
        #[arg(long, default_value = "weak")]
        kind: PriceKindArg,
        /// JSON array of candidate instances for the verification fallback.
        #[arg(long)]
        candidates: Option<PathBuf>,
    },
    /// Print the contradiction proof for a stored non-priceability certificate.
    RenderProof { bundle: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum QuotaArg {
    Hare,
    Droop,
}

impl From<QuotaArg> for Quota {
    fn from(q: QuotaArg) -> Self {
        match q {
            QuotaArg::Hare => Quota::Hare,
            QuotaArg::Droop => Quota::Droop,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CertifyMode {
    LowerBound,
    Singleton,
    Kplusone,
    Verify,
}

impl CertifyMode {
    fn name(self) -> &'static str {
        match self {
            CertifyMode::LowerBound => "lower-bound",
            CertifyMode::Singleton => "singleton",
            CertifyMode::Kplusone => "kplusone",
            CertifyMode::Verify => "verify",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Weak,
    Lindahl,
    Peters,
}

#[derive(Clone, Copy, ValueEnum)]
enum PriceKindArg {
    Weak,
    Lindahl,
}

impl From<PriceKindArg> for PriceKind {
    fn from(k: PriceKindArg) -> Self {
        match k {
            PriceKindArg::Weak => PriceKind::Weak,
            PriceKindArg::Lindahl => PriceKind::Lindahl,
        }
    }
}

#[derive(Serialize)]
struct RunRecord {
    command: String,
    parameters: Value,
    backend: BackendConfig,
    started_at: String,
    finished_at: String,
    exit_code: u8,
    result: Value,
    artifacts: Vec<PathBuf>,
}

/// What a command hands back for its run record.
struct Outcome {
    exit: u8,
    summary: String,
    result: Value,
}

struct Run<'a> {
    opts: &'a GlobalOpts,
    cfg: BackendConfig,
    label: String,
    artifacts: Vec<PathBuf>,
}

impl Run<'_> {
    fn write_json<T: Serialize>(&mut self, stem: &str, value: &T) -> Result<PathBuf> {
        let path = self.opts.output_dir.join(format!("{stem}-{}.json", self.label));
        fs::write(&path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))?;
        self.artifacts.push(path.clone());
        Ok(path)
    }

    fn export(&mut self, model: &OptModel) -> Result<()> {
        for (path, format) in [(&self.opts.export_lp, ExportFormat::Lp), (&self.opts.export_mps, ExportFormat::Mps)] {
            if let Some(path) = path {
                write_model(model, format, path)?;
                self.artifacts.push(path.clone());
            }
        }
        Ok(())
    }
}

fn backend_config(opts: &GlobalOpts) -> BackendConfig {
    let mut cfg = BackendConfig::from_env();
    if let Some(s) = &opts.solver {
        cfg.solver = s.trim().to_ascii_lowercase();
    }
    if let Some(t) = opts.tolerance {
        cfg.tolerance = t;
    }
    cfg.time_limit = opts.timeout;
    cfg.threads = opts.threads;
    cfg.seed = opts.seed;
    cfg
}

fn parse_committee(text: &str) -> Result<CandidateSet> {
    let indices = text
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<usize>().with_context(|| format!("bad candidate index {s:?}")))
        .collect::<Result<Vec<_>>>()?;
    Ok(CandidateSet::from_indices(indices)?)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "input".into())
}

fn adjective(kind: PriceKind) -> &'static str {
    match kind {
        PriceKind::Weak => "weakly",
        PriceKind::Lindahl => "Lindahl",
    }
}

/// `0,2,4` becomes `w0-2-4` for file names.
fn committee_tag(text: &str) -> String {
    let parts: Vec<&str> = text.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    format!("w{}", parts.join("-"))
}

fn exact(r: &Rational) -> Value {
    json!({ "num": r.numer().to_string(), "den": r.denom().to_string(), "approx": to_f64(r) })
}

fn committee_size(committee: CandidateSet, k: Option<usize>) -> Result<usize> {
    match k {
        Some(k) if k != committee.len() => bail!("committee {committee} has {} members, but k = {k}", committee.len()),
        Some(k) => Ok(k),
        None => Ok(committee.len()),
    }
}

fn cmd_search(run: &mut Run, m: usize, k: usize, quota: Quota, warm_start: bool) -> Result<Outcome> {
    let milp = build_milp(m, k, quota)?;
    run.export(&milp.model)?;
    let sol = solve_search(&milp, &run.cfg, warm_start)?;
    let mut result = json!({
        "solve": &sol.status,
        "mu": sol.mu,
        "best_bound": sol.best_bound,
        "lower_bound": exact(&lower_bound_assignment(m, k, quota)?.mu),
    });
    match &sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::TimeLimit { best_bound, incumbent } => {
            return Ok(Outcome {
                exit: EXIT_TIMEOUT,
                summary: format!("search m={m} k={k} {quota}: time limit, value in [{incumbent:?}, {best_bound}]"),
                result,
            })
        }
        other => bail!("search m={m} k={k} {quota}: solver returned {other:?}"),
    }
    let v = verify_solution(&sol, run.cfg.tolerance)?;
    result["verification"] = json!({ "passed": v.passed, "reason": v.reason });
    if let Some(report) = &v.report {
        result["exact_value"] = exact(&report.value);
        result["witnesses"] = json!(report.witnesses);
    }
    if let Some(x) = &v.distribution {
        run.write_json("distribution", x)?;
    }
    if let Ok(d) = extract_deviation_function(&sol) {
        run.write_json("deviations", &d.to_json())?;
    }
    let mu = sol.mu.unwrap_or(f64::NAN);
    let exact_text = v.report.as_ref().map(|r| r.value.to_string()).unwrap_or_else(|| "?".into());
    Ok(Outcome {
        exit: if v.passed { EXIT_OK } else { EXIT_PROPERTY_FAILS },
        summary: format!(
            "search m={m} k={k} {quota}: mu = {mu:.6} (exact {exact_text}), {}",
            if v.passed { "verified" } else { "verification failed" }
        ),
        result,
    })
}

fn cmd_check(instance: &Path, committee: &str, k: Option<usize>, quota: Quota) -> Result<Outcome> {
    let x: VoteDistribution = read_json(instance)?;
    let w = parse_committee(committee)?;
    let k = committee_size(w, k)?;
    let report = stability_report(&x, w, k, quota)?;
    let summary = if report.stable {
        format!("{w} is {quota}-stable (worst excess {})", report.worst_excess)
    } else {
        format!(
            "{w} is not {quota}-stable: {} has excess {}",
            report.worst_deviation, report.worst_excess
        )
    };
    Ok(Outcome {
        exit: if report.stable { EXIT_OK } else { EXIT_PROPERTY_FAILS },
        summary,
        result: serde_json::to_value(&report)?,
    })
}

fn load_deviations(path: Option<&PathBuf>, space: CommitteeSpace) -> Result<DeviationFunction> {
    let path = path.ok_or_else(|| anyhow!("this mode needs --deviations"))?;
    let json: DeviationFunctionJson = read_json(path)?;
    let d = DeviationFunction::from_json(&json)?;
    if d.space() != space {
        bail!("deviation function is for m={}, k={}, expected m={}, k={}", json.m, json.k, space.m(), space.k());
    }
    Ok(d)
}

fn cmd_certify(
    run: &mut Run,
    m: usize,
    k: usize,
    quota: Quota,
    mode: CertifyMode,
    deviations: Option<&PathBuf>,
    certificate: Option<&PathBuf>,
) -> Result<Outcome> {
    let space = CommitteeSpace::new(m, k)?;
    if let CertifyMode::LowerBound = mode {
        let lb = lower_bound_assignment(m, k, quota)?;
        let check = check_assignment(&lb.distribution, &lb.deviations, &lb.mu, quota)?;
        run.write_json("distribution", &lb.distribution)?;
        run.write_json("deviations", &lb.deviations.to_json())?;
        let ok = check.feasible && check.tight;
        return Ok(Outcome {
            exit: if ok { EXIT_OK } else { EXIT_PROPERTY_FAILS },
            summary: format!(
                "lower bound m={m} k={k} {quota}: mu = {} ({})",
                lb.mu,
                if ok { "exactly feasible and tight" } else { "check failed" }
            ),
            result: json!({ "mu": exact(&lb.mu), "check": check }),
        });
    }

    let d = load_deviations(deviations, space)?;
    run.export(&build_dlp(&d, quota))?;
    let (cert, extra) = match mode {
        CertifyMode::Singleton => (certificate_singleton(&d)?, Value::Null),
        CertifyMode::Kplusone => {
            let (cert, case) = certificate_kplusone(&d)?;
            (cert, serde_json::to_value(case)?)
        }
        CertifyMode::Verify => {
            let path = certificate.ok_or_else(|| anyhow!("verify needs --certificate"))?;
            (read_json::<DualCertificate>(path)?, Value::Null)
        }
        CertifyMode::LowerBound => unreachable!(),
    };
    if !matches!(mode, CertifyMode::Verify) {
        run.write_json("certificate", &cert)?;
    }
    let value = match verify_certificate(&cert, &d, quota) {
        Ok(v) => v,
        Err(e) => {
            return Ok(Outcome {
                exit: EXIT_PROPERTY_FAILS,
                summary: format!("certificate rejected: {e}"),
                result: json!({ "feasible": false, "violation": e.to_string(),
                                "objective_if_feasible": exact(&certificate_objective(&cert, &d, quota)) }),
            })
        }
    };
    // The bound each construction promises.
    let bound = match (mode, quota) {
        (_, Quota::Droop) => Some(Rational::from_integer(0.into())),
        (CertifyMode::Singleton, Quota::Hare) => {
            let t = d.non_singletons().first().map(|&i| d.by_id(i).len()).unwrap_or(1);
            Some(ratio(-1, (k * (k + 2 - t)) as i64))
        }
        (CertifyMode::Kplusone, Quota::Hare) => Some(ratio(-1, (k * (k + 1)) as i64)),
        _ => None,
    };
    let within = bound.as_ref().map_or(true, |b| value <= *b);
    Ok(Outcome {
        exit: if within { EXIT_OK } else { EXIT_PROPERTY_FAILS },
        summary: format!(
            "{} certificate m={m} k={k} {quota}: feasible, objective {value}{}",
            mode.name(),
            bound.as_ref().map(|b| format!(" (bound {b})")).unwrap_or_default()
        ),
        result: json!({ "feasible": true, "objective": exact(&value), "bound": bound.as_ref().map(exact),
                        "within_bound": within, "construction": extra }),
    })
}

fn cmd_priceability(run: &mut Run, instance: &Path, committee: &str, kind: KindArg, k: Option<usize>) -> Result<Outcome> {
    let x: VoteDistribution = read_json(instance)?;
    let w = parse_committee(committee)?;
    let k = committee_size(w, k)?;
    let kind = match kind {
        KindArg::Weak => PriceKind::Weak,
        KindArg::Lindahl => PriceKind::Lindahl,
        KindArg::Peters => {
            let outcome = check_peters_priceable(&x, w, k, &run.cfg)?;
            let (exit, summary) = match &outcome {
                PetersOutcome::Priceable { payment } => {
                    run.write_json("payment", payment)?;
                    (EXIT_OK, format!("{w} is payment-priceable with r = {}", payment.r))
                }
                PetersOutcome::NotPriceable { reason } => (EXIT_PROPERTY_FAILS, format!("{w} is not payment-priceable: {reason}")),
                PetersOutcome::Undecided { reason } => (EXIT_UNDECIDED, format!("undecided: {reason}")),
            };
            return Ok(Outcome {
                exit,
                summary,
                result: serde_json::to_value(&outcome)?,
            });
        }
    };
    run.export(&build_linlp(&x, w, k, kind)?.model)?;
    let report = check_priceable(&x, w, k, kind, &run.cfg)?;
    let (exit, summary) = match &report.outcome {
        PriceabilityOutcome::Priceable { prices } => {
            run.write_json("prices", prices)?;
            (EXIT_OK, format!("{w} is {} priceable", adjective(kind)))
        }
        PriceabilityOutcome::NotPriceable { certificate } => {
            let bundle = ProofBundle {
                instance: x.clone(),
                committee: w,
                k,
                kind,
                certificate: certificate.clone(),
            };
            let path = run.write_json("proof", &bundle)?;
            (EXIT_PROPERTY_FAILS, format!("{w} is not {} priceable; certificate in {}", adjective(kind), path.display()))
        }
        PriceabilityOutcome::Undecided { reason } => (EXIT_UNDECIDED, format!("undecided: {reason}")),
    };
    Ok(Outcome {
        exit,
        summary,
        result: serde_json::to_value(&report)?,
    })
}

fn cmd_counterexample(
    run: &mut Run,
    m: usize,
    k: usize,
    quota: Quota,
    kind: PriceKind,
    candidates: Option<&PathBuf>,
) -> Result<Outcome> {
    run.export(&build_linqip(m, k, quota, kind)?)?;
    let pool = match candidates {
        Some(path) => read_json::<Vec<VoteDistribution>>(path)?,
        None => known_candidates(m, k),
    };
    let report = find_counterexample(m, k, quota, kind, &pool, &run.cfg)?;
    let (exit, summary) = match &report.found {
        Some(hit) => {
            run.write_json("distribution", &hit.distribution)?;
            let path = run.write_json(
                "proof",
                &ProofBundle {
                    instance: hit.distribution.clone(),
                    committee: hit.committee,
                    k,
                    kind,
                    certificate: hit.certificate.clone(),
                },
            )?;
            (
                EXIT_OK,
                format!("{} is {quota}-stable but not {} priceable; proof in {}", hit.committee, adjective(kind), path.display()),
            )
        }
        None => (EXIT_PROPERTY_FAILS, format!("no counterexample among {} candidates", report.candidates_checked)),
    };
    let summary = match &report.fallback_reason {
        Some(reason) => format!("{summary} ({reason})"),
        None => summary,
    };
    Ok(Outcome {
        exit,
        summary,
        result: serde_json::to_value(&report)?,
    })
}

fn cmd_render_proof(run: &mut Run, bundle: &Path) -> Result<Outcome> {
    let bundle: ProofBundle = read_json(bundle)?;
    match bundle.render() {
        Ok(text) => {
            let path = run.opts.output_dir.join(format!("proof-{}.txt", run.label));
            fs::write(&path, &text)?;
            run.artifacts.push(path);
            Ok(Outcome {
                exit: EXIT_OK,
                summary: text.trim_end().to_string(),
                result: json!({ "proof": text }),
            })
        }
        Err(e) => Ok(Outcome {
            exit: EXIT_PROPERTY_FAILS,
            summary: e.to_string(),
            result: json!({ "refused": e.to_string() }),
        }),
    }
}

fn describe(command: &Command) -> (&'static str, String, Value) {
    match command {
        Command::Search { m, k, quota, no_warm_start } => {
            let q = Quota::from(*quota);
            ("search", format!("search-m{m}-k{k}-{q}"), json!({ "m": m, "k": k, "quota": q, "warm_start": !no_warm_start }))
        }
        Command::Check { instance, committee, k, quota } => {
            let q = Quota::from(*quota);
            ("check", format!("check-{}-{}-{q}", stem(instance), committee_tag(committee)), json!({ "instance": instance, "committee": committee, "k": k, "quota": q }))
        }
        Command::Certify { m, k, quota, mode, deviations, certificate } => {
            let q = Quota::from(*quota);
            (
                "certify",
                format!("certify-m{m}-k{k}-{q}-{}", mode.name()),
                json!({ "m": m, "k": k, "quota": q, "mode": mode.name(), "deviations": deviations, "certificate": certificate }),
            )
        }
        Command::Priceability { instance, committee, kind, k } => {
            let name = match kind {
                KindArg::Weak => "weak",
                KindArg::Lindahl => "lindahl",
                KindArg::Peters => "peters",
            };
            (
                "priceability",
                format!("priceability-{}-{}-{name}", stem(instance), committee_tag(committee)),
                json!({ "instance": instance, "committee": committee, "kind": name, "k": k }),
            )
        }
        Command::Counterexample { m, k, quota, kind, candidates } => {
            let q = Quota::from(*quota);
            let kind = PriceKind::from(*kind);
            (
                "counterexample",
                format!("counterexample-m{m}-k{k}-{q}-{kind}"),
                json!({ "m": m, "k": k, "quota": q, "kind": kind, "candidates": candidates }),
            )
        }
        Command::RenderProof { bundle } => ("render-proof", format!("render-proof-{}", stem(bundle)), json!({ "bundle": bundle })),
    }
}

fn dispatch(run: &mut Run, command: &Command) -> Result<Outcome> {
    run.cfg.validate()?;
    match command {
        Command::Search { m, k, quota, no_warm_start } => cmd_search(run, *m, *k, (*quota).into(), !no_warm_start),
        Command::Check { instance, committee, k, quota } => cmd_check(instance, committee, *k, (*quota).into()),
        Command::Certify { m, k, quota, mode, deviations, certificate } => {
            cmd_certify(run, *m, *k, (*quota).into(), *mode, deviations.as_ref(), certificate.as_ref())
        }
        Command::Priceability { instance, committee, kind, k } => cmd_priceability(run, instance, committee, *kind, *k),
        Command::Counterexample { m, k, quota, kind, candidates } => {
            cmd_counterexample(run, *m, *k, (*quota).into(), (*kind).into(), candidates.as_ref())
        }
        Command::RenderProof { bundle } => cmd_render_proof(run, bundle),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, label, parameters) = describe(&cli.command);
    let mut run = Run {
        opts: &cli.opts,
        cfg: backend_config(&cli.opts),
        label,
        artifacts: Vec::new(),
    };
    if let Err(e) = fs::create_dir_all(&cli.opts.output_dir) {
        eprintln!("error: cannot create {}: {e}", cli.opts.output_dir.display());
        return ExitCode::from(EXIT_ERROR);
    }
    let started_at = Utc::now().to_rfc3339();
    let outcome = dispatch(&mut run, &cli.command).unwrap_or_else(|e| Outcome {
        exit: EXIT_ERROR,
        summary: format!("error: {e:#}"),
        result: json!({ "error": format!("{e:#}") }),
    });
    let record = RunRecord {
        command: name.to_string(),
        parameters,
        backend: run.cfg.clone(),
        started_at,
        finished_at: Utc::now().to_rfc3339(),
        exit_code: outcome.exit,
        result: outcome.result,
        artifacts: run.artifacts.clone(),
    };
    let record_path = cli.opts.output_dir.join(format!("run-{}.json", run.label));
    let written = serde_json::to_string_pretty(&record)
        .map_err(anyhow::Error::from)
        .and_then(|text| fs::write(&record_path, text).map_err(Into::into));
    if outcome.exit == EXIT_ERROR {
        eprintln!("{}", outcome.summary);
    } else {
        println!("{}", outcome.summary);
    }
    match written {
        Ok(()) => println!("record: {}", record_path.display()),
        Err(e) => {
            eprintln!("error: cannot write {}: {e}", record_path.display());
            return ExitCode::from(EXIT_ERROR);
        }
    }
    ExitCode::from(outcome.exit)
}
