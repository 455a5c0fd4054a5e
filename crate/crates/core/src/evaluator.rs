//! Teacher-forced step evaluation.
//!
//! Every gold step is replayed as a prompt built from its recorded
//! observation; the policy answers once and the answer is judged against the
//! gold action. Scores are aggregated per split (in-domain sites seen during
//! training vs. out-of-domain sites) and per language.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::action::{parse_action, Action, Command};
use crate::episode::{Language, Policy, Trace, TraceStep};
use crate::text::fold;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepJudgment {
    pub element_match: bool,
    pub operation_match: bool,
    pub argument_match: bool,
    pub success: bool,
}

fn same_element(a: Option<&str>, b: Option<&str>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(a), Some(b)) => match (a.trim().parse::<u64>(), b.trim().parse::<u64>()) {
            (Ok(x), Ok(y)) => x == y,
            _ => a.trim() == b.trim(),
        },
        _ => false,
    }
}

/// Case- and whitespace-insensitive text equality, as used for typed
/// strings and selected options.
pub fn text_matches(a: &str, b: &str) -> bool {
    fold(a) == fold(b)
}

/// Lowercased, scheme-less, without trailing slashes.
pub fn normalize_url(url: &str) -> String {
    let url = url.trim();
    let rest = match url.split_once("://") {
        Some((scheme, rest)) if scheme.eq_ignore_ascii_case("http") || scheme.eq_ignore_ascii_case("https") => rest,
        _ => url,
    };
    let rest = rest.trim_end_matches('/');
    let host_end = rest.find(['/', '?', '#']).unwrap_or(rest.len());
    let mut out = rest[..host_end].to_lowercase();
    out.push_str(&rest[host_end..]);
    out
}

fn arguments_match(pred: &Command, gold: &Command) -> bool {
    use Command::*;
    match (pred, gold) {
        (Click { .. }, Click { .. }) | (Hover { .. }, Hover { .. }) | (UserInput { .. }, UserInput { .. }) => true,
        (Select { option: a, .. }, Select { option: b, .. }) => fold(a) == fold(b),
        (
            TypeString {
                content: a,
                press_enter: ea,
                ..
            },
            TypeString {
                content: b,
                press_enter: eb,
                ..
            },
        ) => fold(a) == fold(b) && ea == eb,
        (ScrollPage { direction: a }, ScrollPage { direction: b }) => a == b,
        (Go { direction: a }, Go { direction: b }) => a == b,
        (JumpTo { url: a, .. }, JumpTo { url: b, .. }) => normalize_url(a) == normalize_url(b),
        (SwitchTab { tab_index: a }, SwitchTab { tab_index: b }) => a == b,
        (Finish { answer: a }, Finish { answer: b }) => a.is_some() == b.is_some(),
        _ => false,
    }
}

/// Compares a predicted action with the gold one. Comments are ignored.
pub fn judge_step(predicted: &Action, gold: &Action) -> StepJudgment {
    let operation_match = predicted.command.name() == gold.command.name();
    let element_match = same_element(predicted.command.element_id(), gold.command.element_id());
    let argument_match = operation_match && arguments_match(&predicted.command, &gold.command);
    StepJudgment {
        element_match,
        operation_match,
        argument_match,
        success: element_match && operation_match && argument_match,
    }
}

/// Sites seen in training. Everything else is out of domain.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_sites: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    InDomain,
    OutOfDomain,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::InDomain => "in_domain",
            Split::OutOfDomain => "out_of_domain",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SplitError {
    #[error("trace {0} has no site")]
    MissingSite(usize),
}

fn normalize_site(site: &str) -> String {
    site.trim().trim_end_matches('.').to_lowercase()
}

impl SplitSpec {
    pub fn new<S: AsRef<str>>(sites: impl IntoIterator<Item = S>) -> Self {
        SplitSpec {
            train_sites: sites.into_iter().map(|s| normalize_site(s.as_ref())).collect(),
        }
    }

    pub fn split_of(&self, site: &str) -> Split {
        let site = normalize_site(site);
        if self.train_sites.iter().any(|s| normalize_site(s) == site) {
            Split::InDomain
        } else {
            Split::OutOfDomain
        }
    }
}

/// Traces partitioned by split, each also grouped by language.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Partition {
    /// (split, language) → indices into the input slice, in input order.
    pub groups: BTreeMap<(Split, Language), Vec<usize>>,
}

impl Partition {
    pub fn split(&self, split: Split) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .groups
            .iter()
            .filter(|((s, _), _)| *s == split)
            .flat_map(|(_, v)| v.iter().copied())
            .collect();
        out.sort_unstable();
        out
    }

    pub fn get(&self, split: Split, language: Language) -> &[usize] {
        self.groups.get(&(split, language)).map_or(&[], Vec::as_slice)
    }
}

pub fn split_bench(traces: &[Trace], spec: &SplitSpec) -> Result<Partition, SplitError> {
    let mut partition = Partition::default();
    for (i, trace) in traces.iter().enumerate() {
        if trace.site.trim().is_empty() {
            return Err(SplitError::MissingSite(i));
        }
        partition
            .groups
            .entry((spec.split_of(&trace.site), trace.language))
            .or_default()
            .push(i);
    }
    Ok(partition)
}

/// What happened when one gold step was put to the policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepResult {
    Judged {
        predicted: Action,
        judgment: StepJudgment,
    },
    Unparsable(String),
    PolicyError(String),
    /// The recorded step cannot be turned into a prompt.
    BadRecord(String),
}

impl StepResult {
    pub fn success(&self) -> bool {
        matches!(self, StepResult::Judged { judgment, .. } if judgment.success)
    }
}

/// Teacher-forced evaluation of one gold step.
pub fn evaluate_step<P: Policy + ?Sized>(task: &str, step: &TraceStep, policy: &P) -> StepResult {
    let prompt = match step.prompt(task) {
        Ok(p) => p,
        Err(e) => return StepResult::BadRecord(e.to_string()),
    };
    match policy.complete(&prompt) {
        Err(e) => StepResult::PolicyError(e.0),
        Ok(completion) => match parse_action(&completion) {
            Ok(predicted) => {
                let judgment = judge_step(&predicted, &step.action);
                StepResult::Judged { predicted, judgment }
            }
            Err(d) => StepResult::Unparsable(d.to_string()),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SplitScore {
    pub traces: usize,
    pub steps: usize,
    pub successful_steps: usize,
    /// Step success rate; absent for an empty split.
    pub ssr: Option<f64>,
    pub successful_traces: usize,
    pub trace_success_rate: Option<f64>,
}

impl SplitScore {
    fn add(&mut self, steps: usize, successes: usize) {
        self.traces += 1;
        self.steps += steps;
        self.successful_steps += successes;
        if steps > 0 && successes == steps {
            self.successful_traces += 1;
        }
    }

    fn finish(&mut self) {
        self.ssr = (self.steps > 0).then(|| self.successful_steps as f64 / self.steps as f64);
        self.trace_success_rate = (self.traces > 0).then(|| self.successful_traces as f64 / self.traces as f64);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceScore {
    pub task: String,
    pub site: String,
    pub language: Language,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    pub steps: usize,
    pub successful_steps: usize,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub policy: String,
    pub overall: SplitScore,
    /// Keyed `in_domain`, `out_of_domain` and `<split>/<language>`.
    pub splits: BTreeMap<String, SplitScore>,
    pub traces: Vec<TraceScore>,
    pub policy_errors: usize,
    pub parse_errors: usize,
    pub bad_records: usize,
    /// gold operation → predicted operation → count.
    pub confusion: BTreeMap<String, BTreeMap<String, usize>>,
}

/// Folds per-step results (`results[i][j]` for step `j` of trace `i`) into a report.
pub fn aggregate(
    traces: &[Trace],
    spec: Option<&SplitSpec>,
    policy: &str,
    results: &[Vec<StepResult>],
) -> Result<BenchReport, SplitError> {
    let partition = spec.map(|s| split_bench(traces, s)).transpose()?;
    let mut split_of = BTreeMap::new();
    if let Some(p) = &partition {
        for ((split, _), members) in &p.groups {
            for &i in members {
                split_of.insert(i, *split);
            }
        }
    }

    let mut report = BenchReport {
        policy: policy.to_owned(),
        overall: SplitScore::default(),
        splits: BTreeMap::new(),
        traces: Vec::new(),
        policy_errors: 0,
        parse_errors: 0,
        bad_records: 0,
        confusion: BTreeMap::new(),
    };
    if let Some(p) = &partition {
        for split in [Split::InDomain, Split::OutOfDomain] {
            report.splits.entry(split.as_str().to_owned()).or_default();
            for language in [Language::En, Language::Zh] {
                report
                    .splits
                    .entry(format!("{}/{}", split.as_str(), language.as_str()))
                    .or_default();
            }
        }
        let _ = p;
    }

    for (i, (trace, step_results)) in traces.iter().zip(results).enumerate() {
        let mut successes = 0;
        for (step, result) in trace.steps.iter().zip(step_results) {
            let predicted = match result {
                StepResult::Judged { predicted, judgment } => {
                    if judgment.success {
                        successes += 1;
                    }
                    predicted.command.name()
                }
                StepResult::Unparsable(_) => {
                    report.parse_errors += 1;
                    "<unparsable>"
                }
                StepResult::PolicyError(_) => {
                    report.policy_errors += 1;
                    "<policy_error>"
                }
                StepResult::BadRecord(_) => {
                    report.bad_records += 1;
                    "<bad_record>"
                }
            };
            *report
                .confusion
                .entry(step.action.command.name().to_owned())
                .or_default()
                .entry(predicted.to_owned())
                .or_default() += 1;
        }
        let steps = trace.steps.len();
        report.overall.add(steps, successes);
        let split = split_of.get(&i).copied();
        if let Some(split) = split {
            report
                .splits
                .entry(split.as_str().to_owned())
                .or_default()
                .add(steps, successes);
            report
                .splits
                .entry(format!("{}/{}", split.as_str(), trace.language.as_str()))
                .or_default()
                .add(steps, successes);
        }
        report.traces.push(TraceScore {
            task: trace.task.clone(),
            site: trace.site.clone(),
            language: trace.language,
            split,
            steps,
            successful_steps: successes,
            success: steps > 0 && successes == steps,
        });
    }
    report.overall.finish();
    for score in report.splits.values_mut() {
        score.finish();
    }
    Ok(report)
}

/// Sequential teacher-forced evaluation of every step of every trace.
pub fn evaluate<P: Policy + ?Sized>(
    traces: &[Trace],
    spec: Option<&SplitSpec>,
    policy: &P,
) -> Result<BenchReport, SplitError> {
    let results: Vec<Vec<StepResult>> = traces
        .iter()
        .map(|t| t.steps.iter().map(|s| evaluate_step(&t.task, s, policy)).collect())
        .collect();
    aggregate(traces, spec, policy.identity(), &results)
}

/// Answers every recorded prompt with its gold action. When two steps share
/// a prompt the first one's action wins.
#[derive(Debug, Clone, Default)]
pub struct OraclePolicy {
    answers: BTreeMap<String, String>,
}

impl OraclePolicy {
    pub fn from_traces(traces: &[Trace]) -> Self {
        let mut answers = BTreeMap::new();
        for trace in traces {
            for step in &trace.steps {
                if let Ok(prompt) = step.prompt(&trace.task) {
                    answers.entry(prompt).or_insert_with(|| step.action.to_command_string());
                }
            }
        }
        OraclePolicy { answers }
    }

    /// Replaces the answer for one prompt.
    pub fn set(&mut self, prompt: String, completion: String) {
        self.answers.insert(prompt, completion);
    }
}

impl Policy for OraclePolicy {
    fn identity(&self) -> &str {
        "oracle"
    }

    fn complete(&self, prompt: &str) -> Result<String, crate::episode::PolicyError> {
        self.answers
            .get(prompt)
            .cloned()
            .ok_or_else(|| crate::episode::PolicyError("prompt not in the gold set".into()))
    }
}

fn pct(score: Option<&SplitScore>) -> String {
    match score.and_then(|s| s.ssr) {
        Some(ssr) => format!("{:.1}", ssr * 100.0),
        None => "-".into(),
    }
}

/// Step success rates (percent) laid out as English / Chinese ×
/// cross-task (in-domain) / cross-domain (out-of-domain), one row per report.
pub fn render_table(reports: &[BenchReport]) -> String {
    let width = reports
        .iter()
        .map(|r| r.policy.chars().count())
        .max()
        .unwrap_or(0)
        .max(5)
        + 2;
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}{:<28}{:<28}", "Model", "English", "Chinese");
    let _ = writeln!(
        out,
        "{:<width$}{:<14}{:<14}{:<14}{:<14}",
        "", "Cross-Task", "Cross-Domain", "Cross-Task", "Cross-Domain"
    );
    for r in reports {
        let cell = |key: &str| pct(r.splits.get(key));
        let _ = writeln!(
            out,
            "{:<width$}{:<14}{:<14}{:<14}{:<14}",
            r.policy,
            cell("in_domain/en"),
            cell("out_of_domain/en"),
            cell("in_domain/zh"),
            cell("out_of_domain/zh"),
        );
    }
    let lines: Vec<String> = out.lines().map(|l| l.trim_end().to_owned()).collect();
    let mut out = lines.join("\n");
    out.push('\n');
    out
}
