//! `webnav`: prune pages, run and replay episodes, score benchmarks, build
//! alignment data and self-check the loss math.
//!
//! Exit codes: 0 success, 1 usage or IO, 2 malformed input, 3 backend failure.

use std::fs::OpenOptions;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use webnav::browser::{headless_capabilities, BrowserEnvironment, BrowserOptions};
use webnav::config::{
    Config, ConfigError, LossModeName, LossSection, Overrides, PrunerSection, ENV_CONFIG, ENV_POLICY_TOKEN,
    ENV_POLICY_URL, ENV_WEBDRIVER_URL,
};
use webnav::eval::{evaluate_parallel, EvalError};
use webnav::formats::{
    create_output, id_map_json, open_input, read_sample_sets, read_split, read_traces, write_jsonl_to, FormatError,
};
use webnav::html::{parse_html_at, HtmlError};
use webnav::losscheck::{run_checks, LossCheckOptions};
use webnav::policy::{script_policy, HttpPolicy};
use webnav::rft::{judge_all, Adjudicator, AdjudicatorError};
use webnav::webdriver::WebDriver;
use webnav_core::alignment::{filter_preference_pairs, render_construction_prompt_named, select_rft_traces, LossMode};
use webnav_core::dom::detect_operable;
use webnav_core::episode::{
    replay_environment, run_episode, EpisodeOptions, Language, Outcome, Policy, ScriptedPolicy, Trace,
};
use webnav_core::evaluator::{render_table, OraclePolicy};
use webnav_core::pruner::simplify;

#[derive(Parser)]
#[command(name = "webnav", version, about = "Web navigation agent toolkit")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = ENV_CONFIG)]
    config: Option<PathBuf>,

    #[command(flatten)]
    settings: Settings,

    #[command(subcommand)]
    command: Cmd,
}

/// Settings shared by several commands; each may also come from the config file.
#[derive(Args, Default)]
struct Settings {
    /// Completion endpoint for the `http` policy.
    #[arg(long, global = true, env = ENV_POLICY_URL)]
    policy_url: Option<String>,
    /// Bearer token for the completion endpoint.
    #[arg(long, global = true, env = ENV_POLICY_TOKEN, hide_env_values = true)]
    policy_token: Option<String>,
    #[arg(long, global = true)]
    max_tokens: Option<u32>,
    /// WebDriver server, e.g. http://localhost:4444.
    #[arg(long, global = true, env = ENV_WEBDRIVER_URL)]
    webdriver_url: Option<String>,
    #[arg(long, global = true)]
    max_steps: Option<usize>,
    /// Previous commands shown in the prompt.
    #[arg(long, global = true)]
    history_cap: Option<usize>,
    /// Concurrent policy calls during `eval`.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Ancestor and descendant depth kept around each operable element.
    #[arg(long, global = true)]
    d: Option<usize>,
    /// Children kept per expanded node.
    #[arg(long, global = true)]
    mc: Option<usize>,
    /// Siblings kept on each side.
    #[arg(long, global = true)]
    ms: Option<usize>,
    /// Expansion rounds.
    #[arg(long, global = true)]
    rcc: Option<usize>,
    /// Re-seed each round from the accumulated set.
    #[arg(long, global = true)]
    reseed: bool,
    #[arg(long, global = true, value_enum)]
    loss_mode: Option<LossModeName>,
    #[arg(long, global = true)]
    beta: Option<f64>,
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[arg(long, global = true)]
    sft_weight: Option<f64>,
}

impl Settings {
    fn overrides(&self) -> Overrides {
        Overrides {
            policy_url: self.policy_url.clone(),
            policy_token: self.policy_token.clone(),
            max_tokens: self.max_tokens,
            webdriver_url: self.webdriver_url.clone(),
            max_steps: self.max_steps,
            history_cap: self.history_cap,
            workers: self.workers,
            pruner: PrunerSection {
                d: self.d,
                mc: self.mc,
                ms: self.ms,
                rcc: self.rcc,
                reseed: self.reseed.then_some(true),
            },
            loss: LossSection {
                mode: self.loss_mode,
                beta: self.beta,
                lambda: self.lambda,
                sft_weight: self.sft_weight,
            },
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Simplify an HTML page; reads stdin when no file is given.
    Prune {
        input: Option<PathBuf>,
        /// URL recorded as the page's source.
        #[arg(long, default_value = "")]
        url: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Where to write the id map. Defaults to `<output>.ids.json` when
        /// `--output` is a file.
        #[arg(long)]
        id_map: Option<PathBuf>,
    },
    /// Run one episode in a live browser and append its trace.
    Run {
        #[arg(long)]
        task: String,
        /// Start page.
        #[arg(long)]
        url: String,
        /// `http`, an http(s) URL, or `script:PATH`.
        #[arg(long, default_value = "http")]
        policy: String,
        #[arg(long, default_value = "")]
        site: String,
        #[arg(long, default_value = "other")]
        language: String,
        /// Answer `user_input` requests on the terminal.
        #[arg(long)]
        interactive: bool,
        /// Milliseconds to wait after each page load.
        #[arg(long, default_value_t = 500)]
        settle_ms: u64,
        /// Trace file to append to.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Re-run recorded traces against themselves and check determinism.
    Replay {
        traces: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Teacher-forced step success rate over a gold benchmark.
    Eval {
        #[arg(long)]
        bench: PathBuf,
        /// `{"train_sites": [...]}`; without it only overall scores are reported.
        #[arg(long)]
        split: Option<PathBuf>,
        /// `oracle`, `http`, an http(s) URL, or `script:PATH`.
        #[arg(long)]
        policy: String,
        /// Also write the full report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Preference pairs from judged or raw sample sets.
    Pairs {
        #[arg(long)]
        samples: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Successful, distinct traces for rejection-sampling fine-tuning.
    Rft {
        #[arg(long)]
        traces: PathBuf,
        /// `finished`, `answers:PATH` or `exec:COMMAND`.
        #[arg(long, default_value = "finished")]
        adjudicator: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Check the loss functions against closed forms and finite differences.
    Losscheck {
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Render a data-construction prompt.
    Construct {
        /// recognition, simple-task or trace-intent.
        #[arg(long)]
        kind: String,
        /// `name=value`; repeatable.
        #[arg(long = "field", value_parser = parse_field)]
        fields: Vec<(String, String)>,
    },
}

fn parse_field(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.to_owned(), v.to_owned()))
        .ok_or_else(|| format!("expected name=value, got {s:?}"))
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Schema(String),
    #[error("{0}")]
    Backend(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Schema(_) => 2,
            CliError::Backend(_) => 3,
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::Io { .. } => CliError::Usage(e.to_string()),
            FormatError::Schema { .. } => CliError::Schema(e.to_string()),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Read(inner) => inner.into(),
            ConfigError::Parse { .. } => CliError::Schema(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<AdjudicatorError> for CliError {
    fn from(e: AdjudicatorError) -> Self {
        match e {
            AdjudicatorError::Read(inner) => inner.into(),
            AdjudicatorError::Unknown(_) => CliError::Usage(e.to_string()),
            AdjudicatorError::Answers { .. } => CliError::Schema(e.to_string()),
            AdjudicatorError::Exec { .. } => CliError::Backend(e.to_string()),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Usage(format!("{}: {e}", path.display()))
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// A policy chosen on the command line. The oracle needs the bench.
fn build_policy(spec: &str, config: &Config, bench: Option<&[Trace]>) -> Result<Box<dyn Policy + Sync>, CliError> {
    if spec == "oracle" {
        return match bench {
            Some(traces) => Ok(Box::new(OraclePolicy::from_traces(traces))),
            None => Err(CliError::Usage("the oracle policy only applies to eval".into())),
        };
    }
    if let Some(path) = spec.strip_prefix("script:") {
        return Ok(Box::new(script_policy(Path::new(path))?));
    }
    let endpoint = match spec {
        "http" => config.policy_url.clone().ok_or_else(|| {
            CliError::Usage(format!(
                "the http policy needs --policy-url, {ENV_POLICY_URL} or policy_url in the config file"
            ))
        })?,
        url if url.starts_with("http://") || url.starts_with("https://") => url.to_owned(),
        other => {
            return Err(CliError::Usage(format!(
                "unknown policy {other:?}; expected oracle, http, an http(s) URL or script:PATH"
            )))
        }
    };
    Ok(Box::new(
        HttpPolicy::new(&endpoint)
            .with_token(config.policy_token.clone())
            .with_max_tokens(config.max_tokens),
    ))
}

fn parse_language(s: &str) -> Language {
    serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase())).unwrap_or_default()
}

fn cmd_prune(
    config: &Config,
    input: Option<PathBuf>,
    url: &str,
    output: Option<PathBuf>,
    id_map: Option<PathBuf>,
) -> Result<(), CliError> {
    let source = input.unwrap_or_else(|| PathBuf::from("-"));
    let mut html = String::new();
    open_input(&source)?
        .read_to_string(&mut html)
        .map_err(|e| io_error(&source, e))?;
    let tree =
        parse_html_at(&html, url).map_err(|e: HtmlError| CliError::Schema(format!("{}: {e}", source.display())))?;
    let simplified = simplify(&detect_operable(tree), &config.pruner).map_err(|e| CliError::Usage(e.to_string()))?;

    let out_path = output.as_deref().filter(|p| p.as_os_str() != "-");
    let mut out = create_output(out_path)?;
    out.write_all(simplified.text.as_bytes())
        .and_then(|_| out.write_all(b"\n"))
        .and_then(|_| out.flush())
        .map_err(|e| io_error(out_path.unwrap_or(Path::new("-")), e))?;

    let sidecar = id_map.or_else(|| out_path.map(|p| p.with_extension("ids.json")));
    if let Some(path) = sidecar {
        std::fs::write(&path, id_map_json(&simplified.id_map)).map_err(|e| io_error(&path, e))?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    config: &Config,
    task: &str,
    url: &str,
    policy: &str,
    site: &str,
    language: &str,
    interactive: bool,
    settle_ms: u64,
    output: Option<PathBuf>,
) -> Result<(), CliError> {
    let policy = build_policy(policy, config, None)?;
    let endpoint = config.webdriver_url.clone().ok_or_else(|| {
        CliError::Usage(format!(
            "run needs --webdriver-url, {ENV_WEBDRIVER_URL} or webdriver_url in the config file"
        ))
    })?;
    let driver =
        WebDriver::connect(&endpoint, headless_capabilities()).map_err(|e| CliError::Backend(e.to_string()))?;
    let mut env = BrowserEnvironment::new(
        driver,
        BrowserOptions {
            start_url: Some(url.to_owned()),
            settle: std::time::Duration::from_millis(settle_ms),
            interactive,
            ..Default::default()
        },
    );
    let clock = now_ms;
    let opts = EpisodeOptions {
        max_steps: config.max_steps,
        history_cap: config.history_cap,
        pruner: config.pruner.clone(),
        site: site.to_owned(),
        language: parse_language(language),
        clock: Some(&clock),
        ..Default::default()
    };
    let trace = run_episode(&mut env, policy.as_ref(), task, &opts);
    if let Err(e) = env.into_driver().quit() {
        eprintln!("warning: closing the browser session failed: {e}");
    }

    match output.as_deref().filter(|p| p.as_os_str() != "-") {
        Some(path) => {
            let mut file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| io_error(path, e))?;
            let mut line = serde_json::to_vec(&trace).expect("traces serialize");
            line.push(b'\n');
            file.write_all(&line).map_err(|e| io_error(path, e))?;
        }
        None => write_jsonl_to(None, std::slice::from_ref(&trace))?,
    }
    eprintln!("{} step(s), outcome: {}", trace.steps.len(), describe(&trace.outcome));
    match &trace.outcome {
        Outcome::Error { detail } => Err(CliError::Backend(detail.clone())),
        _ => Ok(()),
    }
}

fn describe(outcome: &Outcome) -> String {
    match outcome {
        Outcome::Finished { answer: Some(a) } => format!("finished with answer {a:?}"),
        Outcome::Finished { answer: None } => "finished".into(),
        Outcome::StepCap => "step cap reached".into(),
        Outcome::UserAbort => "aborted at user input".into(),
        Outcome::Error { detail } => format!("error: {detail}"),
    }
}

fn replay_once(config: &Config, recorded: &Trace) -> Trace {
    let mut env = replay_environment(recorded);
    let policy = ScriptedPolicy::replaying(recorded);
    let opts = EpisodeOptions {
        max_steps: config.max_steps.max(recorded.steps.len()),
        history_cap: config.history_cap,
        pruner: config.pruner.clone(),
        site: recorded.site.clone(),
        language: recorded.language,
        ..Default::default()
    };
    run_episode(&mut env, &policy, &recorded.task, &opts)
}

fn cmd_replay(config: &Config, traces: &Path, output: Option<PathBuf>) -> Result<(), CliError> {
    let recorded = read_traces(traces)?;
    let mut replayed = Vec::with_capacity(recorded.len());
    let mut unstable = Vec::new();
    for (i, trace) in recorded.iter().enumerate() {
        let first = replay_once(config, trace);
        let second = replay_once(config, trace);
        let stable = serde_json::to_string(&first).ok() == serde_json::to_string(&second).ok();
        let mut expected = trace.without_timestamps();
        expected.diagnostics.clear();
        let mut got = first.clone();
        got.diagnostics.clear();
        let faithful = got == expected;
        eprintln!(
            "trace {}: {}, {}",
            i + 1,
            if stable { "deterministic" } else { "NOT deterministic" },
            if faithful {
                "matches the recording"
            } else {
                "differs from the recording"
            }
        );
        if !stable {
            unstable.push(i + 1);
        }
        replayed.push(first);
    }
    write_jsonl_to(output.as_deref(), &replayed)?;
    if unstable.is_empty() {
        Ok(())
    } else {
        Err(CliError::Schema(format!(
            "replay is not deterministic for trace(s) {unstable:?}"
        )))
    }
}

fn cmd_eval(
    config: &Config,
    bench: &Path,
    split: Option<PathBuf>,
    policy: &str,
    json: Option<PathBuf>,
) -> Result<(), CliError> {
    let traces = read_traces(bench)?;
    let spec = split.as_deref().map(read_split).transpose()?;
    let policy = build_policy(policy, config, Some(&traces))?;
    let report = evaluate_parallel(&traces, spec.as_ref(), policy.as_ref(), config.workers).map_err(|e| match e {
        EvalError::Split(e) => CliError::Schema(format!("{}: {e}", bench.display())),
        EvalError::Pool(detail) => CliError::Backend(detail),
    })?;

    if let Some(path) = json.as_deref() {
        let mut text = serde_json::to_string_pretty(&report).expect("reports serialize");
        text.push('\n');
        if path.as_os_str() == "-" {
            print!("{text}");
        } else {
            std::fs::write(path, text).map_err(|e| io_error(path, e))?;
        }
    }
    if json.as_deref().is_none_or(|p| p.as_os_str() != "-") {
        print!("{}", render_table(std::slice::from_ref(&report)));
        match report.overall.ssr {
            Some(ssr) => println!(
                "SSR {:.3} over {} step(s) in {} trace(s)",
                ssr, report.overall.steps, report.overall.traces
            ),
            None => println!("no steps"),
        }
    }
    if report.parse_errors > 0 {
        eprintln!("{} completion(s) did not parse", report.parse_errors);
    }
    if report.bad_records > 0 {
        return Err(CliError::Schema(format!(
            "{}: {} step(s) could not be turned into prompts",
            bench.display(),
            report.bad_records
        )));
    }
    if report.policy_errors > 0 {
        return Err(CliError::Backend(format!(
            "{} policy call(s) failed",
            report.policy_errors
        )));
    }
    Ok(())
}

fn cmd_pairs(samples: &Path, output: Option<PathBuf>) -> Result<(), CliError> {
    let sets = read_sample_sets(samples)?;
    let pairs = filter_preference_pairs(&sets);
    write_jsonl_to(output.as_deref(), &pairs)?;
    eprintln!("{} pair(s) from {} sample set(s)", pairs.len(), sets.len());
    Ok(())
}

fn cmd_rft(traces: &Path, adjudicator: &str, output: Option<PathBuf>) -> Result<(), CliError> {
    let adjudicator = Adjudicator::parse(adjudicator)?;
    let traces = read_traces(traces)?;
    let verdicts = judge_all(&adjudicator, &traces)?;
    let mut verdict = verdicts.iter().copied();
    let kept = select_rft_traces(&traces, |_| verdict.next().unwrap_or(false));
    write_jsonl_to(output.as_deref(), &kept)?;
    eprintln!("{} positive trace(s) from {}", kept.len(), traces.len());
    Ok(())
}

fn cmd_losscheck(config: &Config, samples: usize, seed: u64) -> Result<(), CliError> {
    let lambda = match config.loss {
        LossMode::WeightedDpo { lambda } => lambda,
        LossMode::WeightedSft { .. } => webnav_core::alignment::DEFAULT_LAMBDA,
    };
    let checks = run_checks(&LossCheckOptions {
        beta: config.beta,
        lambda,
        samples,
        seed,
        ..Default::default()
    });
    for c in &checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed == 0 {
        println!("all {} checks passed (beta = {})", checks.len(), config.beta);
        Ok(())
    } else {
        Err(CliError::Usage(format!("{failed} of {} checks failed", checks.len())))
    }
}

fn cmd_construct(kind: &str, fields: &[(String, String)]) -> Result<(), CliError> {
    let pairs: Vec<(&str, &str)> = fields.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
    let prompt = render_construction_prompt_named(kind, &pairs).map_err(|e| CliError::Usage(e.to_string()))?;
    print!("{prompt}");
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let config = Config::load(cli.config.as_deref(), &cli.settings.overrides())?;
    match cli.command {
        Cmd::Prune {
            input,
            url,
            output,
            id_map,
        } => cmd_prune(&config, input, &url, output, id_map),
        Cmd::Run {
            task,
            url,
            policy,
            site,
            language,
            interactive,
            settle_ms,
            output,
        } => cmd_run(
            &config,
            &task,
            &url,
            &policy,
            &site,
            &language,
            interactive,
            settle_ms,
            output,
        ),
        Cmd::Replay { traces, output } => cmd_replay(&config, &traces, output),
        Cmd::Eval {
            bench,
            split,
            policy,
            json,
        } => cmd_eval(&config, &bench, split, &policy, json),
        Cmd::Pairs { samples, output } => cmd_pairs(&samples, output),
        Cmd::Rft {
            traces,
            adjudicator,
            output,
        } => cmd_rft(&traces, &adjudicator, output),
        Cmd::Losscheck { samples, seed } => cmd_losscheck(&config, samples, seed),
        Cmd::Construct { kind, fields } => cmd_construct(&kind, &fields),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("webnav: {e}");
            ExitCode::from(e.code())
        }
    }
}
