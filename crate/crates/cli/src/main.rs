//! `contactlin`: invariants, classification, verification and numerical
//! synthesis of linearizing contact transformations for `u''' = f(x,u,p,q)`.

mod report;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use contactlin_core::fixtures::{parse_pins, parse_rational, Fixture};
use contactlin_core::identity::SamplerConfig;
use contactlin_core::synthesizer::{Candidate, GridSpec, SynthConfig, Synthesizer};
use contactlin_core::{
    check_contact, classify, compute_tower_with, parse, prolong, residuals_prop41, residuals_prop42, to_text,
    verify_target, Branch1Data, Branch2Data, ContactTransform, Error, Expr, Outcome, TargetForm,
};
use num_rational::BigRational;
use serde_json::{json, Value};

const EXIT_OK: u8 = 0;
const EXIT_INTERNAL: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_WUENSCHMANN: u8 = 3;
const EXIT_OUTSIDE: u8 = 4;
const EXIT_VERIFY: u8 = 5;

#[derive(Parser, Debug)]
#[command(name = "contactlin", version, about = "Contact linearization of third-order ODEs u''' = f(x,u,p,q)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Args, Debug, Clone)]
struct Global {
    /// Pin a parameter to a rational value, e.g. `alpha=2` or `s=-1/3`.
    #[arg(long = "param", value_name = "NAME=VALUE", global = true)]
    params: Vec<String>,
    /// Seed of the identity-test sampler.
    #[arg(long, default_value_t = 0, global = true)]
    seed: u64,
    /// Sample points per identity test.
    #[arg(long, default_value_t = 8, global = true)]
    points: usize,
    /// Working precision in bits for float-mode tests.
    #[arg(long, default_value_t = 256, global = true)]
    precision: usize,
    #[arg(long, value_enum, default_value_t = Format::Text, global = true)]
    format: Format,
    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Read inputs from a shipped fixture (name or path to a TOML file).
    #[arg(long, global = true)]
    fixture: Option<String>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the invariant tower.
    Invariants {
        /// Right-hand side f(x,u,p,q).
        #[arg(allow_hyphen_values = true)]
        f: Option<String>,
    },
    /// Decide five- or four-symmetry linearizability.
    Classify {
        #[arg(allow_hyphen_values = true)]
        f: Option<String>,
    },
    /// Check a candidate contact transformation and the residual systems.
    Verify(VerifyArgs),
    /// Numerically reconstruct the transformation on a grid.
    Synthesize(SynthArgs),
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(allow_hyphen_values = true)]
    f: Option<String>,
    #[arg(long)]
    phi: Option<String>,
    #[arg(long)]
    psi: Option<String>,
    #[arg(long)]
    chi: Option<String>,
    /// Auxiliary multiplier; the residual systems are skipped without it.
    #[arg(long)]
    a1: Option<String>,
    #[arg(long)]
    eta: Option<String>,
    #[arg(long = "H")]
    h: Option<String>,
    #[arg(long)]
    b: Option<String>,
    #[arg(long)]
    abar: Option<String>,
    /// Constant of the five-symmetry target.
    #[arg(long)]
    s: Option<String>,
    #[arg(long, value_enum)]
    target: Option<TargetKind>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum TargetKind {
    Linear5,
    Linear4,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(allow_hyphen_values = true)]
    f: Option<String>,
    /// Base point `x,u,p`.
    #[arg(long)]
    base: Option<String>,
    /// Nodes per axis: `n` or `nx,nu,np`.
    #[arg(long, default_value = "5")]
    grid: String,
    /// Half extent per axis: `w` or `wx,wu,wp`.
    #[arg(long, default_value = "0.5")]
    half_width: String,
    /// Value of q on which eta is reported.
    #[arg(long, default_value_t = 1.0)]
    q0: f64,
    #[arg(long = "H")]
    h: Option<String>,
    #[arg(long)]
    b: Option<String>,
    /// Also write the grid as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    fit_a1: Option<String>,
    #[arg(long)]
    fit_phi: Option<String>,
    #[arg(long)]
    fit_eta: Option<String>,
    #[arg(long)]
    fit_chi: Option<String>,
    #[arg(long)]
    fit_psi: Option<String>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Core(Error),
    Io(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(_) => EXIT_INTERNAL,
            CliError::Core(e) => match e {
                Error::Parse(_)
                | Error::Malformed(_)
                | Error::UnknownParameter(_)
                | Error::InvalidParameterName(_)
                | Error::InvalidTarget(_)
                | Error::Fixture(_) => EXIT_USAGE,
                Error::WuenschmannZero => EXIT_WUENSCHMANN,
                Error::ClassificationMismatch { found, .. } if found == "WuenschmannZero" => EXIT_WUENSCHMANN,
                Error::ClassificationMismatch { .. } => EXIT_OUTSIDE,
                Error::RejectedAnsatz { .. }
                | Error::DegenerateTransform(_)
                | Error::Path(_)
                | Error::StepUnderflow { .. }
                | Error::InconclusiveSampling { .. }
                | Error::Singular(_)
                | Error::Domain(_) => EXIT_VERIFY,
                Error::NotExact(_) | Error::MissingI3 => EXIT_INTERNAL,
            },
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) | CliError::Io(m) => m.clone(),
            CliError::Core(Error::WuenschmannZero) => "I3 vanishes identically; the invariant tower is undefined".into(),
            CliError::Core(Error::RejectedAnsatz { equation, witness: Some(w) }) => {
                format!("rejected ansatz: residual `{equation}` does not vanish, witness {w}")
            }
            CliError::Core(e) => e.to_string(),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// What a command produced: a JSON document, its text rendering, the exit
/// code.
struct Report {
    json: Value,
    text: String,
    code: u8,
}

struct Inputs {
    fixture: Option<Fixture>,
    cfg: SamplerConfig,
}

fn expr(what: &str, s: &str) -> CliResult<Expr> {
    parse(s).map_err(|e| match e {
        Error::Parse(d) => CliError::Usage(format!("cannot parse {what} `{s}` at byte {}: {}", d.offset, d.message)),
        other => CliError::Core(other),
    })
}

fn pins(raw: &[String]) -> CliResult<BTreeMap<String, BigRational>> {
    raw.iter()
        .map(|p| {
            let (k, v) = p.split_once('=').ok_or_else(|| CliError::Usage(format!("--param expects NAME=VALUE, got `{p}`")))?;
            let v = parse_rational(v).map_err(|e| CliError::Usage(e.to_string()))?;
            contactlin_core::VarId::param(k.trim()).map_err(|e| CliError::Usage(e.to_string()))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

impl Inputs {
    fn new(g: &Global) -> CliResult<Inputs> {
        let fixture = g.fixture.as_deref().map(Fixture::named).transpose()?;
        let cfg = SamplerConfig {
            seed: g.seed,
            points: g.points,
            precision: g.precision,
            pins: pins(&g.params)?,
            ..SamplerConfig::default()
        };
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(Inputs { fixture, cfg })
    }

    fn f(&self, given: &Option<String>) -> CliResult<Expr> {
        match (given, &self.fixture) {
            (Some(f), _) => expr("f", f),
            (None, Some(fx)) => expr("f", &fx.f),
            (None, None) => Err(CliError::Usage("an expression f or --fixture is required".into())),
        }
    }

    /// Fixture pins fill in parameters not pinned on the command line.
    fn with_pins(&self, extra: &BTreeMap<String, String>) -> CliResult<SamplerConfig> {
        let mut cfg = self.cfg.clone();
        for (k, v) in parse_pins(extra)? {
            cfg.pins.entry(k).or_insert(v);
        }
        Ok(cfg)
    }
}

fn cmd_invariants(inp: &Inputs, f: &Option<String>) -> CliResult<Report> {
    let f = inp.f(f)?;
    let t = compute_tower_with(&f, &inp.cfg)?;
    let i3 = to_text(&t.i3);
    let entries = t.entries();
    let mut text = format!("input: {}\nI3 = {i3}\nJ denotes the real root of J^3 = I3\n", to_text(&f));
    for (n, e) in &entries {
        text += &format!("{n} = {}\n", to_text(e));
    }
    let json = json!({
        "command": "invariants",
        "input": to_text(&f),
        "I3": i3,
        "side_condition": format!("J^3 = {i3}"),
        "invariants": entries.iter().map(|(n, e)| json!({ "name": n, "value": to_text(e) })).collect::<Vec<_>>(),
    });
    Ok(Report { json, text, code: EXIT_OK })
}

fn cmd_classify(inp: &Inputs, f: &Option<String>) -> CliResult<Report> {
    let f = inp.f(f)?;
    let c = classify(&f, &inp.cfg)?;
    let code = match c.outcome {
        Outcome::FiveSymmetry { .. } | Outcome::FourSymmetry { .. } => EXIT_OK,
        Outcome::WuenschmannZero => EXIT_WUENSCHMANN,
        Outcome::OutsideScope { .. } => EXIT_OUTSIDE,
    };
    Ok(Report { json: report::classification(&c), text: report::classification_text(&c), code })
}

fn pick(flag: &Option<String>, fixture: Option<&String>) -> Option<String> {
    flag.clone().or_else(|| fixture.cloned())
}

fn cmd_verify(inp: &Inputs, a: &VerifyArgs) -> CliResult<Report> {
    let f = inp.f(&a.f)?;
    let tf = inp.fixture.as_ref().and_then(|fx| fx.transform.clone());
    let from = |flag: &Option<String>, field: fn(&contactlin_core::fixtures::TransformFixture) -> Option<&String>| {
        pick(flag, tf.as_ref().and_then(field))
    };
    let need = |name: &str, v: Option<String>| -> CliResult<Expr> {
        let v = v.ok_or_else(|| CliError::Usage(format!("--{name} is required")))?;
        expr(name, &v)
    };
    let opt = |name: &str, v: Option<String>| -> CliResult<Option<Expr>> { v.map(|v| expr(name, &v)).transpose() };
    let phi = need("phi", from(&a.phi, |t| Some(&t.phi)))?;
    let psi = need("psi", from(&a.psi, |t| Some(&t.psi)))?;
    let chi = need("chi", from(&a.chi, |t| Some(&t.chi)))?;
    let a1 = opt("a1", from(&a.a1, |t| Some(&t.a1)))?;
    let eta = opt("eta", from(&a.eta, |t| t.eta.as_ref()))?;
    let h = opt("H", from(&a.h, |t| t.h.as_ref()))?;
    let b = opt("b", from(&a.b, |t| t.b.as_ref()))?;
    let abar = opt("abar", from(&a.abar, |t| t.abar.as_ref()))?;
    let s = opt("s", from(&a.s, |t| t.s.as_ref()))?;
    let target_kind = match (a.target, &tf) {
        (Some(t), _) => t,
        (None, Some(t)) if t.target == "linear4" => TargetKind::Linear4,
        (None, Some(_)) => TargetKind::Linear5,
        (None, None) => return Err(CliError::Usage("--target is required".into())),
    };
    let cfg = match &tf {
        Some(t) => inp.with_pins(&t.pins)?,
        None => inp.cfg.clone(),
    };

    let tr = ContactTransform::new(phi.clone(), psi.clone(), chi.clone())?;
    let target = match target_kind {
        TargetKind::Linear5 => TargetForm::Linear5 {
            s: s.clone().ok_or_else(|| CliError::Usage("--s is required for --target linear5".into()))?,
        },
        TargetKind::Linear4 => match &abar {
            Some(a) => TargetForm::linear4(a.clone())?,
            None => return Err(CliError::Usage("--abar is required for --target linear4".into())),
        },
    };
    let tower = compute_tower_with(&f, &cfg)?;
    let ctx = tower.ctx.clone();
    let contact = check_contact(&tr, &cfg)?;
    let pr = prolong(&tr, &ctx)?;
    let tgt = verify_target(&tr, &ctx, &target, &cfg)?;
    let systems = match (&a1, target_kind) {
        (None, _) => None,
        (Some(a1), TargetKind::Linear5) => Some(residuals_prop41(
            &tower,
            &Branch1Data { a1: a1.clone(), phi, psi, chi, eta },
            &cfg,
        )?),
        (Some(a1), TargetKind::Linear4) => Some(residuals_prop42(
            &tower,
            &Branch2Data { h: h.clone(), b: b.clone(), a_bar: abar.clone(), a1: a1.clone(), phi, psi, chi, eta },
            &cfg,
        )?),
    };
    let passed = contact.passed() && tgt.passed() && systems.as_ref().is_none_or(|r| r.all_zero());
    let code = if passed { EXIT_OK } else { EXIT_VERIFY };
    let mode = if tgt.verdict.mode() == contactlin_core::Mode::Float
        || systems.as_ref().is_some_and(|r| r.entries.iter().any(|e| e.verdict.mode() == contactlin_core::Mode::Float))
    {
        "float"
    } else {
        "exact"
    };

    let contact_json = json!({
        "lambda": to_text(&contact.lambda),
        "jacobian": to_text(&contact.jacobian),
        "passed": contact.passed(),
        "checks": contact.entries().into_iter().map(|(n, v, expect)| json!({ "name": n, "expect_zero": expect, "passed": v.is_zero() == expect, "verdict": report::verdict(v) })).collect::<Vec<_>>(),
    });
    let json = json!({
        "command": "verify",
        "input": to_text(&f),
        "target": match target_kind { TargetKind::Linear5 => "linear5", TargetKind::Linear4 => "linear4" },
        "transform": { "phi": to_text(&tr.phi), "psi": to_text(&tr.psi), "chi": to_text(&tr.chi) },
        "contact": contact_json,
        "prolongation": { "eta": to_text(&pr.eta), "fbar": to_text(&pr.fbar_pushed), "consistency": to_text(&pr.consistency) },
        "target_residual": { "residual": to_text(&tgt.residual), "verdict": report::verdict(&tgt.verdict) },
        "systems": systems.as_ref().map(report::residuals).unwrap_or(Value::Null),
        "mode": mode,
        "seed": cfg.seed,
        "passed": passed,
    });

    let mut text = format!(
        "input: {}\ntransform: phi = {}, psi = {}, chi = {}\n",
        to_text(&f),
        to_text(&tr.phi),
        to_text(&tr.psi),
        to_text(&tr.chi)
    );
    text += &format!("contact: {} (lambda = {})\n", if contact.passed() { "ok" } else { "FAIL" }, to_text(&contact.lambda));
    for (n, v, _) in contact.entries() {
        text += &format!("  {n}: {}\n", report::verdict_text(v));
    }
    text += &format!("prolongation: eta = {}\n", to_text(&pr.eta));
    text += &format!("target: {}\n", report::verdict_text(&tgt.verdict));
    if let Some(r) = &systems {
        text += "residual systems:\n";
        text += &report::residuals_text(r);
    }
    text += &format!("mode: {mode}\nresult: {}\n", if passed { "verified" } else { "FAILED" });
    Ok(Report { json, text, code })
}

fn triple(what: &str, s: &str) -> CliResult<[f64; 3]> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("invalid {what} `{s}`"))))
        .collect::<CliResult<_>>()?;
    match v.as_slice() {
        [a] => Ok([*a; 3]),
        [a, b, c] => Ok([*a, *b, *c]),
        _ => Err(CliError::Usage(format!("{what} expects one or three comma-separated numbers"))),
    }
}

fn cmd_synthesize(inp: &Inputs, a: &SynthArgs) -> CliResult<Report> {
    let f = inp.f(&a.f)?;
    let sf = inp.fixture.as_ref().and_then(|fx| fx.synthesis.clone());
    let base = match (&a.base, &sf) {
        (Some(b), _) => triple("--base", b)?,
        (None, Some(s)) => s.base,
        (None, None) => return Err(CliError::Usage("--base is required".into())),
    };
    let counts = triple("--grid", &a.grid)?;
    if counts.iter().any(|c| c.fract() != 0.0 || *c < 2.0) {
        return Err(CliError::Usage("--grid expects integers of at least 2".into()));
    }
    let spec = GridSpec {
        base,
        counts: counts.map(|c| c as usize),
        half_width: triple("--half-width", &a.half_width)?,
        q0: a.q0,
    };
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let sampler = match &sf {
        Some(s) => inp.with_pins(&s.pins)?,
        None => inp.cfg.clone(),
    };
    let cfg = SynthConfig { sampler, ..SynthConfig::default() };
    let h = pick(&a.h, sf.as_ref().and_then(|s| s.h.as_ref()));
    let b = pick(&a.b, sf.as_ref().and_then(|s| s.b.as_ref()));

    let cl = classify(&f, &cfg.sampler)?;
    let syn = match &cl.outcome {
        Outcome::FiveSymmetry { .. } => Synthesizer::branch1(&f, &cfg)?,
        Outcome::FourSymmetry { .. } => {
            let (Some(h), Some(b)) = (h, b) else {
                return Err(CliError::Usage("four-symmetry input: --H and --b are required".into()));
            };
            Synthesizer::branch2(&f, &expr("H", &h)?, &expr("b", &b)?, &cfg)?
        }
        Outcome::WuenschmannZero => return Err(Error::WuenschmannZero.into()),
        o => {
            return Err(Error::ClassificationMismatch { expected: "a linearizable equation".into(), found: o.tag().into() }.into())
        }
    };
    let grid = syn.run(&spec)?;

    let fixture_cand = sf.as_ref().map(|s| s.candidate()).transpose()?.unwrap_or_default();
    let fitted = |flag: &Option<String>, fx: Option<Expr>, name: &str| -> CliResult<Option<Expr>> {
        match flag {
            Some(v) => Ok(Some(expr(name, v)?)),
            None => Ok(fx),
        }
    };
    let cand = Candidate {
        a1: fitted(&a.fit_a1, fixture_cand.a1.clone(), "fit-a1")?,
        phi: fitted(&a.fit_phi, fixture_cand.phi.clone(), "fit-phi")?,
        eta: fitted(&a.fit_eta, fixture_cand.eta.clone(), "fit-eta")?,
        chi: fitted(&a.fit_chi, fixture_cand.chi.clone(), "fit-chi")?,
        psi: fitted(&a.fit_psi, fixture_cand.psi.clone(), "fit-psi")?,
    };
    let any = [&cand.a1, &cand.phi, &cand.eta, &cand.chi, &cand.psi].iter().any(|c| c.is_some());
    let fit = if any { Some(syn.fit(&grid, &cand)?) } else { None };

    if let Some(path) = &a.csv {
        std::fs::write(path, grid.to_csv()).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    let json = report::grid(&grid, fit.as_ref(), syn.h.as_ref(), syn.b.as_ref());
    let mut text = report::grid_summary(&grid, fit.as_ref());
    if a.csv.is_none() {
        text += "\n";
        text += &grid.to_csv();
    }
    Ok(Report { json, text, code: EXIT_OK })
}

fn emit(g: &Global, r: &Report) -> CliResult<()> {
    let body = match g.format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&r.json).map_err(|e| CliError::Io(e.to_string()))?;
            s.push('\n');
            s
        }
        Format::Text => r.text.clone(),
    };
    match &g.output {
        Some(p) => std::fs::write(p, body).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => std::io::stdout().write_all(body.as_bytes()).map_err(|e| CliError::Io(e.to_string())),
    }
}

fn emit_error(g: &Global, e: &CliError) {
    if g.format == Format::Json {
        let doc = json!({ "error": e.message(), "exit_code": e.code() });
        let s = serde_json::to_string_pretty(&doc).unwrap_or_default() + "\n";
        match &g.output {
            Some(p) => {
                let _ = std::fs::write(p, s);
            }
            None => print!("{s}"),
        }
    }
    eprintln!("error: {}", e.message());
}

fn run(cli: &Cli) -> CliResult<Report> {
    let inp = Inputs::new(&cli.global)?;
    match &cli.command {
        Command::Invariants { f } => cmd_invariants(&inp, f),
        Command::Classify { f } => cmd_classify(&inp, f),
        Command::Verify(a) => cmd_verify(&inp, a),
        Command::Synthesize(a) => cmd_synthesize(&inp, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.global.jobs {
        if n == 0 {
            eprintln!("error: --jobs must be positive");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INTERNAL);
        }
    }
    match run(&cli).and_then(|r| emit(&cli.global, &r).map(|_| r.code)) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            emit_error(&cli.global, &e);
            ExitCode::from(e.code())
        }
    }
}
