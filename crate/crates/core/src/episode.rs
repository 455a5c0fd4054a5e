//! The observe → prompt → act loop, and the recorded traces it produces.
//!
//! A [`Policy`] turns a prompt into a completion; an [`Environment`] applies
//! actions and reports page state. [`run_episode`] drives the two until the
//! policy finishes, the step cap is reached, or something fails. Failures are
//! recorded in the trace's [`Outcome`], never propagated.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::action::{parse_action, validate, Action, Command};
use crate::dom::{PageContent, PageState, Tab};
use crate::observation::{
    compute_viewport_pages, observe, render_prompt, tab_entries, History, Observation, ObservationError,
    DEFAULT_HISTORY_CAP,
};
use crate::pruner::{PrunerConfig, SimplifiedHtml};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("policy error: {0}")]
pub struct PolicyError(pub String);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EnvironmentError {
    #[error("browser protocol error (status {status}): {detail}")]
    Protocol { status: u16, detail: String },
    #[error("recorded trace exhausted")]
    ExhaustedTrace,
    #[error("user input unavailable: {0}")]
    UserAbort(String),
    #[error("{0}")]
    Other(String),
}

/// The agent's decision function: prompt in, completion out.
pub trait Policy {
    /// Backend label used in reports.
    fn identity(&self) -> &str;
    fn complete(&self, prompt: &str) -> Result<String, PolicyError>;
}

impl<P: Policy + ?Sized> Policy for &P {
    fn identity(&self) -> &str {
        (**self).identity()
    }

    fn complete(&self, prompt: &str) -> Result<String, PolicyError> {
        (**self).complete(prompt)
    }
}

pub trait Environment {
    fn reset(&mut self, task: &str) -> Result<PageState, EnvironmentError>;
    /// Executes a validated action and returns the resulting state.
    fn apply(&mut self, action: &Action) -> Result<PageState, EnvironmentError>;
    fn snapshot(&mut self) -> Result<PageState, EnvironmentError>;

    /// Answers a `user_input` request. Non-interactive environments answer
    /// with an empty string.
    fn resolve_user_input(&mut self, _message: &str) -> Result<String, EnvironmentError> {
        Ok(String::new())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    En,
    Zh,
    #[default]
    #[serde(other)]
    Other,
}

impl Language {
    pub fn as_str(self) -> &'static str {
        match self {
            Language::En => "en",
            Language::Zh => "zh",
            Language::Other => "other",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Finished {
        #[serde(default)]
        answer: Option<String>,
    },
    StepCap,
    UserAbort,
    Error {
        detail: String,
    },
}

/// One executed step: the observation snapshot, the action taken and the raw
/// model output it was parsed from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub index: usize,
    pub url: String,
    pub scroll_y: u32,
    pub viewport_height: u32,
    pub page_height: u32,
    #[serde(default)]
    pub tabs: Vec<Tab>,
    pub simplified_html: String,
    pub id_map: BTreeMap<u32, usize>,
    pub previous_commands: Vec<String>,
    pub action: Action,
    #[serde(default)]
    pub raw_completion: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp_ms: Option<u64>,
}

impl TraceStep {
    pub fn simplified(&self) -> SimplifiedHtml {
        SimplifiedHtml::new(self.simplified_html.clone(), self.id_map.clone())
    }

    /// Tabs as recorded, or a single current tab at the step's URL.
    pub fn tabs_or_default(&self) -> Vec<Tab> {
        if self.tabs.is_empty() {
            vec![Tab {
                title: String::new(),
                url: self.url.clone(),
                is_current: true,
            }]
        } else {
            self.tabs.clone()
        }
    }

    /// The recorded page as an environment state.
    pub fn page_state(&self) -> PageState {
        PageState {
            content: PageContent::Recorded(self.simplified()),
            url: self.url.clone(),
            scroll_y: self.scroll_y,
            viewport_height: self.viewport_height,
            page_height: self.page_height,
            tabs: self.tabs_or_default(),
        }
    }

    /// The observation this step answered, with the recorded history.
    pub fn observation(&self, task: &str) -> Result<Observation, ObservationError> {
        Ok(Observation {
            task: task.to_owned(),
            simplified_html: self.simplified(),
            tabs: tab_entries(&self.tabs_or_default()),
            viewport: compute_viewport_pages(self.scroll_y, self.viewport_height, self.page_height)?,
            previous_commands: self.previous_commands.clone(),
        })
    }

    /// The prompt the policy saw (or would see) at this step.
    pub fn prompt(&self, task: &str) -> Result<String, ObservationError> {
        self.observation(task).map(|o| render_prompt(&o))
    }
}

/// A completion that could not be executed, kept for debugging.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepDiagnostic {
    pub step_index: usize,
    pub attempt: usize,
    pub raw_completion: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub task: String,
    /// Registrable domain the task was performed on.
    pub site: String,
    #[serde(default)]
    pub language: Language,
    pub steps: Vec<TraceStep>,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<StepDiagnostic>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TraceError {
    #[error("step {position} has index {index}")]
    NonContiguous { position: usize, index: usize },
    #[error("last step is finish() but outcome is not finished, or vice versa")]
    FinishMismatch,
}

impl Trace {
    pub fn check(&self) -> Result<(), TraceError> {
        for (position, step) in self.steps.iter().enumerate() {
            if step.index != position {
                return Err(TraceError::NonContiguous {
                    position,
                    index: step.index,
                });
            }
        }
        let last_is_finish = matches!(
            self.steps.last().map(|s| &s.action.command),
            Some(Command::Finish { .. })
        );
        if last_is_finish != matches!(self.outcome, Outcome::Finished { .. }) {
            return Err(TraceError::FinishMismatch);
        }
        Ok(())
    }

    pub fn actions(&self) -> impl Iterator<Item = &Action> {
        self.steps.iter().map(|s| &s.action)
    }

    /// Copy with every timestamp cleared, for determinism comparisons.
    pub fn without_timestamps(&self) -> Trace {
        let mut copy = self.clone();
        for step in &mut copy.steps {
            step.timestamp_ms = None;
        }
        copy
    }
}

pub struct EpisodeOptions<'a> {
    pub max_steps: usize,
    pub history_cap: usize,
    /// Re-prompts allowed after an unparsable or invalid completion.
    pub max_retries: usize,
    pub pruner: PrunerConfig,
    pub site: String,
    pub language: Language,
    /// Milliseconds since the epoch; steps are untimed without a clock.
    pub clock: Option<&'a dyn Fn() -> u64>,
}

pub const DEFAULT_MAX_STEPS: usize = 25;

impl Default for EpisodeOptions<'_> {
    fn default() -> Self {
        EpisodeOptions {
            max_steps: DEFAULT_MAX_STEPS,
            history_cap: DEFAULT_HISTORY_CAP,
            max_retries: 2,
            pruner: PrunerConfig::default(),
            site: String::new(),
            language: Language::Other,
            clock: None,
        }
    }
}

/// Runs one episode and returns its trace.
pub fn run_episode<E, P>(env: &mut E, policy: &P, task: &str, opts: &EpisodeOptions<'_>) -> Trace
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
{
    let mut trace = Trace {
        task: task.to_owned(),
        site: opts.site.clone(),
        language: opts.language,
        steps: Vec::new(),
        outcome: Outcome::StepCap,
        diagnostics: Vec::new(),
    };
    let fail = |trace: &mut Trace, detail: String| trace.outcome = Outcome::Error { detail };

    let mut state = match env.reset(task) {
        Ok(state) => state,
        Err(e) => {
            fail(&mut trace, format!("{e}"));
            return trace;
        }
    };
    let mut history = History::new(opts.history_cap);

    for index in 0..opts.max_steps {
        let observation = match observe(&state, task, &history, &opts.pruner) {
            Ok(o) => o,
            Err(e) => {
                fail(&mut trace, format!("{e}"));
                return trace;
            }
        };
        let prompt = render_prompt(&observation);

        let mut chosen = None;
        for attempt in 0..=opts.max_retries {
            let completion = match policy.complete(&prompt) {
                Ok(c) => c,
                Err(e) => {
                    fail(&mut trace, format!("{e}"));
                    return trace;
                }
            };
            let checked = parse_action(&completion)
                .map_err(|d| format!("{d}"))
                .and_then(|action| {
                    validate(&action, &state, &observation.simplified_html.id_map)
                        .map(|()| action)
                        .map_err(|errors| errors.iter().map(|e| format!("{e}")).collect::<Vec<_>>().join("; "))
                });
            match checked {
                Ok(action) => {
                    chosen = Some((action, completion));
                    break;
                }
                Err(detail) => trace.diagnostics.push(StepDiagnostic {
                    step_index: index,
                    attempt,
                    raw_completion: completion,
                    detail,
                }),
            }
        }
        let Some((action, raw_completion)) = chosen else {
            fail(
                &mut trace,
                format!("no executable action after {} attempt(s)", opts.max_retries + 1),
            );
            return trace;
        };

        trace.steps.push(TraceStep {
            index,
            url: state.url.clone(),
            scroll_y: state.scroll_y,
            viewport_height: state.viewport_height,
            page_height: state.page_height,
            tabs: state.tabs.clone(),
            simplified_html: observation.simplified_html.text,
            id_map: observation.simplified_html.id_map,
            previous_commands: observation.previous_commands,
            action: action.clone(),
            raw_completion,
            intent: None,
            user_response: None,
            timestamp_ms: opts.clock.map(|now| now()),
        });

        if let Command::Finish { answer } = &action.command {
            trace.outcome = Outcome::Finished { answer: answer.clone() };
            return trace;
        }
        if let Command::UserInput { message } = &action.command {
            match env.resolve_user_input(message) {
                Ok(response) => {
                    if let Some(step) = trace.steps.last_mut() {
                        step.user_response = Some(response);
                    }
                }
                Err(_) => {
                    trace.outcome = Outcome::UserAbort;
                    return trace;
                }
            }
        }
        state = match env.apply(&action) {
            Ok(next) => next,
            Err(e) => {
                fail(&mut trace, format!("{e}"));
                return trace;
            }
        };
        history.push(&action);
    }
    trace
}

/// Steps through a recorded trace's pages regardless of the actions applied.
#[derive(Debug, Clone)]
pub struct ReplayEnvironment {
    steps: Vec<TraceStep>,
    cursor: usize,
}

impl ReplayEnvironment {
    pub fn new(trace: &Trace) -> Self {
        ReplayEnvironment {
            steps: trace.steps.clone(),
            cursor: 0,
        }
    }

    fn state(&self, at: usize) -> Result<PageState, EnvironmentError> {
        self.steps
            .get(at)
            .map(TraceStep::page_state)
            .ok_or(EnvironmentError::ExhaustedTrace)
    }
}

pub fn replay_environment(trace: &Trace) -> ReplayEnvironment {
    ReplayEnvironment::new(trace)
}

impl Environment for ReplayEnvironment {
    fn reset(&mut self, _task: &str) -> Result<PageState, EnvironmentError> {
        self.cursor = 0;
        self.state(0)
    }

    /// Moves to the next recorded page. Applying the last step's action leaves
    /// the environment on that page; applying again is an error.
    fn apply(&mut self, _action: &Action) -> Result<PageState, EnvironmentError> {
        if self.cursor >= self.steps.len() {
            return Err(EnvironmentError::ExhaustedTrace);
        }
        self.cursor += 1;
        self.state(self.cursor.min(self.steps.len() - 1))
    }

    fn snapshot(&mut self) -> Result<PageState, EnvironmentError> {
        self.state(self.cursor)
    }

    fn resolve_user_input(&mut self, _message: &str) -> Result<String, EnvironmentError> {
        let step = self.steps.get(self.cursor).ok_or(EnvironmentError::ExhaustedTrace)?;
        Ok(step.user_response.clone().unwrap_or_default())
    }
}

/// Returns canned completions in order.
#[derive(Debug)]
pub struct ScriptedPolicy {
    label: String,
    completions: Vec<String>,
    cursor: AtomicUsize,
    repeat_last: bool,
}

impl ScriptedPolicy {
    /// Errors once the script runs out.
    pub fn once<S: Into<String>>(completions: impl IntoIterator<Item = S>) -> Self {
        ScriptedPolicy {
            label: "scripted".into(),
            completions: completions.into_iter().map(Into::into).collect(),
            cursor: AtomicUsize::new(0),
            repeat_last: false,
        }
    }

    /// Repeats the final completion forever.
    pub fn repeating<S: Into<String>>(completions: impl IntoIterator<Item = S>) -> Self {
        ScriptedPolicy {
            repeat_last: true,
            ..ScriptedPolicy::once(completions)
        }
    }

    /// Replays the raw completions recorded in `trace`.
    pub fn replaying(trace: &Trace) -> Self {
        ScriptedPolicy {
            label: "replay".into(),
            ..ScriptedPolicy::once(trace.steps.iter().map(|s| s.raw_completion.clone()))
        }
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label = label.into();
        self
    }
}

impl Policy for ScriptedPolicy {
    fn identity(&self) -> &str {
        &self.label
    }

    fn complete(&self, _prompt: &str) -> Result<String, PolicyError> {
        let i = self.cursor.fetch_add(1, Ordering::SeqCst);
        match self.completions.get(i) {
            Some(c) => Ok(c.clone()),
            None if self.repeat_last && !self.completions.is_empty() => {
                Ok(self.completions[self.completions.len() - 1].clone())
            }
            None => Err(PolicyError(format!(
                "script exhausted after {} completion(s)",
                self.completions.len()
            ))),
        }
    }
}
