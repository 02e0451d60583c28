//! `cauchycp` command-line front end.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use cauchycp_core::bench::{
    batch_test, power_study, read_marker_matrix, run_method, timing_study, type1_error_study, write_batch_csv,
    write_study_csv, write_timing_csv, Method, StudyOptions,
};
use cauchycp_core::cauchycp::CauchyCpOptions;
use cauchycp_core::simgen::{simulate_trial, ScenarioConfig};
use cauchycp_core::survdata::{read_csv, write_csv_to};
use cauchycp_core::{ChangePointSpec, HrConfig, HrShape, RngStream, ScenarioSpec};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

/// Seed used when neither `--seed`, `CAUCHYCP_SEED` nor the config file gives one.
const DEFAULT_SEED: u64 = 20_220_701;

#[derive(Parser, Debug)]
#[command(name = "cauchycp", version, about = "Change-point Cox omnibus tests for survival data")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    format: Format,

    /// Write the report here instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,

    /// Base random seed.
    #[arg(long, env = "CAUCHYCP_SEED", global = true)]
    seed: Option<u64>,

    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run tests on a dataset CSV (`time,event,x[,z...]`).
    Test(TestArgs),
    /// Generate one piecewise-exponential trial.
    Simulate(SimulateArgs),
    /// Type-I error study from a scenario config.
    Type1(ConfigArgs),
    /// Power study from a scenario config.
    Power(ConfigArgs),
    /// Timing study from a scenario config.
    Timing(ConfigArgs),
    /// Per-marker tests against shared outcome data.
    Batch(BatchArgs),
}

#[derive(Args, Debug, Serialize)]
struct TestArgs {
    #[arg(long, short)]
    input: PathBuf,
    /// Comma-separated: cauchycp, maxcombo, rmst, wkm, coxph, logrank.
    #[arg(long, default_value = "cauchycp")]
    methods: String,
    /// Explicit change points, e.g. `0,182,355`; 0 is the PH model.
    #[arg(long, conflicts_with = "percentiles")]
    changepoints: Option<String>,
    /// Event-time percentiles in (0,1) added to the PH model.
    #[arg(long)]
    percentiles: Option<String>,
    /// RMST truncation time (default: smaller of the arms' largest times).
    #[arg(long)]
    tau: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[arg(long, short = 'n', default_value_t = 200)]
    n_total: usize,
    #[arg(long, value_enum, default_value_t = Shape::One)]
    shape: Shape,
    #[arg(long, default_value_t = 1)]
    p: usize,
    #[arg(long, default_value_t = 1.0)]
    h_l: f64,
    #[arg(long, default_value_t = 1.0)]
    h_r: f64,
    #[arg(long, default_value_t = 0.1)]
    lambda_c: f64,
    #[arg(long, default_value_t = 0.1)]
    censor_rate: f64,
    /// Replicate index within the seed.
    #[arg(long, default_value_t = 0)]
    rep: u64,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Shape {
    One,
    Two,
}

#[derive(Args, Debug, Serialize)]
struct ConfigArgs {
    /// Scenario TOML.
    #[arg(long, short)]
    config: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct BatchArgs {
    /// Outcome CSV shared by every marker; its `x` column is ignored.
    #[arg(long, short)]
    input: PathBuf,
    /// Marker matrix CSV: header of marker ids, one row per subject.
    #[arg(long)]
    markers: PathBuf,
    #[arg(long, default_value = "cauchycp")]
    methods: String,
}

/// Failure with a stable machine-readable kind.
struct Failure {
    kind: &'static str,
    message: String,
    exit: u8,
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        let kind = match e.downcast_ref::<cauchycp_core::Error>() {
            Some(c) => core_kind(c),
            None if e.downcast_ref::<io::Error>().is_some() => "io",
            None => "error",
        };
        let exit = if kind == "usage" { 2 } else { 1 };
        Failure { kind, message: format!("{e:#}"), exit }
    }
}

fn core_kind(e: &cauchycp_core::Error) -> &'static str {
    use cauchycp_core::Error::*;
    match e {
        InvalidArgument(_) => "invalid_argument",
        InvalidRecord { .. } => "invalid_record",
        EmptyDataset => "empty_dataset",
        NoEvents => "no_events",
        DegenerateLikelihood(_) => "degenerate_likelihood",
        RankDeficient { .. } => "rank_deficient",
        NotPositiveDefinite { .. } => "not_positive_definite",
        FitFailure(_) => "fit_failure",
        Parse { .. } => "parse",
        Config(_) => "config",
        Io(_) => "io",
        Json(_) => "json",
    }
}

fn usage(message: String) -> Failure {
    Failure { kind: "usage", message, exit: 2 }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return report_failure(usage(e.render().to_string().trim().to_string())),
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report_failure(f),
    }
}

fn report_failure(f: Failure) -> ExitCode {
    let body = json!({ "error": { "kind": f.kind, "message": f.message } });
    eprintln!("{body}");
    ExitCode::from(f.exit)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(usage("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .context("configuring worker pool")?;
    }
    match &cli.command {
        Command::Test(a) => cmd_test(cli, a),
        Command::Simulate(a) => cmd_simulate(cli, a),
        Command::Type1(a) => cmd_study(cli, a, Study::Type1),
        Command::Power(a) => cmd_study(cli, a, Study::Power),
        Command::Timing(a) => cmd_study(cli, a, Study::Timing),
        Command::Batch(a) => cmd_batch(cli, a),
    }
}

fn parse_methods(s: &str) -> Result<Vec<Method>, Failure> {
    let methods = Method::parse_list(s).map_err(|e| usage(e.to_string()))?;
    if methods.is_empty() {
        return Err(usage("no methods given".into()));
    }
    Ok(methods)
}

fn parse_reals(flag: &str, s: &str) -> Result<Vec<f64>, Failure> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| usage(format!("--{flag}: cannot parse `{}`", t.trim()))))
        .collect()
}

#[derive(Serialize)]
struct Provenance {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: u64,
    config_hash: String,
    args: Value,
}

impl Provenance {
    /// `inputs` are hashed together with the arguments and seed.
    fn new(command: &'static str, seed: u64, args: Value, inputs: &[&Path]) -> anyhow::Result<Self> {
        let mut h = Sha256::new();
        h.update(command.as_bytes());
        h.update(seed.to_le_bytes());
        h.update(args.to_string().as_bytes());
        for p in inputs {
            h.update(fs::read(p).with_context(|| format!("reading {}", p.display()))?);
        }
        let config_hash = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
        Ok(Self { tool: env!("CARGO_PKG_NAME"), version: env!("CARGO_PKG_VERSION"), command, seed, config_hash, args })
    }

    fn csv_header(&self) -> String {
        let mut s = String::new();
        for (k, v) in [
            ("version", self.version.to_string()),
            ("command", self.command.to_string()),
            ("seed", self.seed.to_string()),
            ("config_hash", self.config_hash.clone()),
            ("args", self.args.to_string()),
        ] {
            s.push_str(&format!("# {k}: {v}\n"));
        }
        s
    }
}

/// Rounds every float in a JSON tree to 6 significant digits.
fn round6(v: &Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap_or(f64::NAN);
            format!("{x:.5e}").parse::<f64>().ok().and_then(|r| serde_json::Number::from_f64(r)).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.iter().map(round6).collect()),
        Value::Object(o) => Value::Object(o.iter().map(|(k, v)| (k.clone(), round6(v))).collect()),
        other => other.clone(),
    }
}

fn json_report(prov: &Provenance, results: Value) -> anyhow::Result<String> {
    let report = json!({
        "provenance": prov,
        "summary": round6(&results),
        "results": results,
    });
    Ok(serde_json::to_string_pretty(&report)? + "\n")
}

fn emit(cli: &Cli, text: &str) -> anyhow::Result<()> {
    match &cli.output {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn cmd_test(cli: &Cli, a: &TestArgs) -> Result<(), Failure> {
    let methods = parse_methods(&a.methods)?;
    let changepoints = match (&a.changepoints, &a.percentiles) {
        (Some(t), _) => ChangePointSpec::Times(parse_reals("changepoints", t)?),
        (None, Some(p)) => ChangePointSpec::Percentiles(parse_reals("percentiles", p)?),
        (None, None) => ChangePointSpec::Default,
    };
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    let prov = Provenance::new("test", seed, serde_json::to_value(a).map_err(anyhow::Error::from)?, &[&a.input])?;
    let data = read_csv(&a.input).with_context(|| format!("reading {}", a.input.display()))?;

    let stream = RngStream::new(seed, 0);
    let mut tests = Vec::new();
    let mut cauchy = None;
    for &m in &methods {
        let r = match m {
            Method::CauchyCp => {
                let opts = CauchyCpOptions { changepoints: changepoints.clone(), ..Default::default() };
                let r = cauchycp_core::cauchycp::cauchycp_test_with(&data, &opts).context("cauchycp")?;
                let best = r.best();
                let mut est = std::collections::BTreeMap::new();
                est.insert("best_t".to_string(), best.t);
                est.insert("best_hr_early".to_string(), best.hr_early);
                est.insert("best_hr_late".to_string(), best.hr_late);
                let t = cauchycp_core::TestResult {
                    method: m.name().into(),
                    statistic: best.statistic,
                    p_value: r.p_value,
                    estimates: est,
                };
                cauchy = Some(r);
                t
            }
            Method::Rmst if a.tau.is_some() => cauchycp_core::rivals::rmst_test(&data, a.tau).context("rmst")?,
            _ => run_method(m, &data, stream).with_context(|| m.name().to_string())?,
        };
        tests.push(r);
    }

    let text = match cli.format {
        Format::Json => {
            let results = json!({ "n": data.len(), "n_events": data.n_events(), "tests": tests, "cauchycp": cauchy });
            json_report(&prov, results)?
        }
        Format::Csv => {
            let mut s = prov.csv_header();
            s.push_str("section,method,t_c,df,statistic,p_value,hr_early,hr_late\n");
            for t in &tests {
                s.push_str(&format!("test,{},,,{},{},,\n", t.method, t.statistic, t.p_value));
            }
            if let Some(r) = &cauchy {
                for p in &r.per_point {
                    s.push_str(&format!(
                        "changepoint,cauchycp,{},{},{},{},{},{}\n",
                        p.t, p.df, p.statistic, p.p, p.hr_early, p.hr_late
                    ));
                }
            }
            s
        }
    };
    emit(cli, &text)?;
    Ok(())
}

fn cmd_simulate(cli: &Cli, a: &SimulateArgs) -> Result<(), Failure> {
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    let hr = HrConfig {
        config: match a.shape {
            Shape::One => HrShape::One,
            Shape::Two => HrShape::Two,
        },
        p: a.p,
        h_l: a.h_l,
        h_r: a.h_r,
    };
    let spec = ScenarioSpec {
        lambda_c: a.lambda_c,
        censor_rate: a.censor_rate,
        ..ScenarioSpec::standard(a.n_total, &hr, RngStream::new(seed, 0).with_stream(a.rep))?
    };
    let data = simulate_trial(&spec)?;
    let prov = Provenance::new("simulate", seed, serde_json::to_value(a).map_err(anyhow::Error::from)?, &[])?;
    let mut buf = Vec::new();
    write_csv_to(&data, &mut buf)?;
    let csv = String::from_utf8(buf).map_err(anyhow::Error::from)?;
    let text = match cli.format {
        Format::Csv => prov.csv_header() + &csv,
        Format::Json => {
            let rows: Vec<Value> = data
                .records()
                .iter()
                .map(|r| json!({ "time": r.time, "event": u8::from(r.event), "x": r.x }))
                .collect();
            serde_json::to_string_pretty(&json!({ "provenance": prov, "records": rows })).map_err(anyhow::Error::from)?
                + "\n"
        }
    };
    emit(cli, &text)?;
    Ok(())
}

#[derive(Clone, Copy)]
enum Study {
    Type1,
    Power,
    Timing,
}

fn cmd_study(cli: &Cli, a: &ConfigArgs, which: Study) -> Result<(), Failure> {
    let cfg = ScenarioConfig::from_path(&a.config).with_context(|| format!("loading {}", a.config.display()))?;
    let seed = cli.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED);
    let methods = if cfg.methods.is_empty() {
        match which {
            Study::Type1 => Method::TYPE1.to_vec(),
            Study::Power | Study::Timing => Method::POWER.to_vec(),
        }
    } else {
        parse_methods(&cfg.methods.join(","))?
    };
    let opts = StudyOptions { methods: methods.clone(), lambda_c: cfg.lambda_c, censor_rate: cfg.censor_rate, allocation: cfg.allocation };
    let (name, args) = match which {
        Study::Type1 => ("type1", json!({ "config": a.config })),
        Study::Power => ("power", json!({ "config": a.config })),
        Study::Timing => ("timing", json!({ "config": a.config })),
    };
    let prov = Provenance::new(name, seed, args, &[&a.config])?;
    let text = match which {
        Study::Type1 | Study::Power => {
            let rows = match which {
                Study::Type1 => type1_error_study(&cfg.n_list, &cfg.alpha_list, cfg.n_reps, seed, &opts)?,
                _ => {
                    if cfg.hr.is_empty() {
                        return Err(Failure::from(anyhow::Error::from(cauchycp_core::Error::Config(
                            "power study needs at least one [[hr]] entry".into(),
                        ))));
                    }
                    power_study(&cfg.hr, &cfg.n_list, cfg.alpha_list[0], cfg.n_reps, seed, &opts)?
                }
            };
            match cli.format {
                Format::Json => json_report(&prov, serde_json::to_value(&rows).map_err(anyhow::Error::from)?)?,
                Format::Csv => {
                    let mut buf = prov.csv_header().into_bytes();
                    write_study_csv(&rows, &mut buf)?;
                    String::from_utf8(buf).map_err(anyhow::Error::from)?
                }
            }
        }
        Study::Timing => {
            if cfg.n_runs < 10 {
                return Err(usage(format!("timing needs n_runs >= 10, got {}", cfg.n_runs)));
            }
            let rows = timing_study(&cfg.n_list, cfg.n_runs, &methods, seed)?;
            match cli.format {
                Format::Json => json_report(&prov, serde_json::to_value(&rows).map_err(anyhow::Error::from)?)?,
                Format::Csv => {
                    let mut buf = prov.csv_header().into_bytes();
                    write_timing_csv(&rows, &mut buf)?;
                    String::from_utf8(buf).map_err(anyhow::Error::from)?
                }
            }
        }
    };
    emit(cli, &text)?;
    Ok(())
}

fn cmd_batch(cli: &Cli, a: &BatchArgs) -> Result<(), Failure> {
    let methods = parse_methods(&a.methods)?;
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    let prov =
        Provenance::new("batch", seed, serde_json::to_value(a).map_err(anyhow::Error::from)?, &[&a.input, &a.markers])?;
    let base = read_csv(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let file = fs::File::open(&a.markers).with_context(|| format!("opening {}", a.markers.display()))?;
    let markers = read_marker_matrix(file).with_context(|| format!("reading {}", a.markers.display()))?;
    if let Some((id, x)) = markers.iter().find(|(_, x)| x.len() != base.len()) {
        return Err(cauchycp_core::Error::InvalidArgument(format!(
            "marker `{id}` has {} values but the outcome file has {} subjects",
            x.len(),
            base.len()
        ))
        .into());
    }
    let res = batch_test(&base, &markers, &methods, seed)?;
    let text = match cli.format {
        Format::Json => json_report(&prov, serde_json::to_value(&res).map_err(anyhow::Error::from)?)?,
        Format::Csv => {
            let mut buf = prov.csv_header().into_bytes();
            write_batch_csv(&res, &mut buf)?;
            String::from_utf8(buf).map_err(anyhow::Error::from)?
        }
    };
    emit(cli, &text)?;
    Ok(())
}

impl From<cauchycp_core::Error> for Failure {
    fn from(e: cauchycp_core::Error) -> Self {
        Failure::from(anyhow::Error::from(e))
    }
}
