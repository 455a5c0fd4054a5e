//! Alignment-training reference math and data filters.
//!
//! The losses take sequence log-probabilities as plain numbers; nothing here
//! runs a model. The filters turn sampled actions and sampled traces into
//! preference pairs and rejection-sampled positives.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::action::{parse_action, Action};
use crate::episode::Trace;
use crate::evaluator::judge_step;
use crate::template::{placeholders, substitute};

pub const DEFAULT_BETA: f64 = 0.15;
pub const DEFAULT_LAMBDA: f64 = 1.25;
pub const DEFAULT_SFT_WEIGHT: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum LossError {
    #[error("non-finite input: {0}")]
    NonFiniteInput(&'static str),
    #[error("log-probability {0} is positive")]
    PositiveLogProb(&'static str),
    #[error("beta must be positive")]
    NonPositiveBeta,
    #[error("lambda must be non-negative")]
    NegativeLambda,
}

/// Sequence log-probabilities of the chosen and rejected outputs under the
/// trained policy and the frozen reference model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossInputs {
    pub logp_policy_chosen: f64,
    pub logp_ref_chosen: f64,
    pub logp_policy_rejected: f64,
    pub logp_ref_rejected: f64,
    pub beta: f64,
    pub lambda: f64,
}

impl LossInputs {
    /// Inputs with the default β and λ.
    pub fn new(policy_chosen: f64, ref_chosen: f64, policy_rejected: f64, ref_rejected: f64) -> Self {
        LossInputs {
            logp_policy_chosen: policy_chosen,
            logp_ref_chosen: ref_chosen,
            logp_policy_rejected: policy_rejected,
            logp_ref_rejected: ref_rejected,
            beta: DEFAULT_BETA,
            lambda: DEFAULT_LAMBDA,
        }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn validate(&self) -> Result<(), LossError> {
        for (name, v) in [
            ("logp_policy_chosen", self.logp_policy_chosen),
            ("logp_ref_chosen", self.logp_ref_chosen),
            ("logp_policy_rejected", self.logp_policy_rejected),
            ("logp_ref_rejected", self.logp_ref_rejected),
        ] {
            check_logp(name, v)?;
        }
        if !self.beta.is_finite() {
            return Err(LossError::NonFiniteInput("beta"));
        }
        if self.beta <= 0.0 {
            return Err(LossError::NonPositiveBeta);
        }
        if !self.lambda.is_finite() {
            return Err(LossError::NonFiniteInput("lambda"));
        }
        if self.lambda < 0.0 {
            return Err(LossError::NegativeLambda);
        }
        Ok(())
    }

    /// β·(Δw − Δl), the logit of the implicit preference.
    pub fn margin(&self) -> f64 {
        let dw = self.logp_policy_chosen - self.logp_ref_chosen;
        let dl = self.logp_policy_rejected - self.logp_ref_rejected;
        self.beta * (dw - dl)
    }
}

fn check_logp(name: &'static str, v: f64) -> Result<(), LossError> {
    if !v.is_finite() {
        Err(LossError::NonFiniteInput(name))
    } else if v > 0.0 {
        Err(LossError::PositiveLogProb(name))
    } else {
        Ok(())
    }
}

/// log(1 + e^x) without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + libm::log1p(libm::exp(-x.abs()))
}

/// σ(x) without overflow.
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Negative log-likelihood of one sample.
pub fn sft_loss(logp_policy_chosen: f64) -> Result<f64, LossError> {
    check_logp("logp_policy_chosen", logp_policy_chosen)?;
    Ok(-logp_policy_chosen)
}

/// Mean negative log-likelihood; `None` for an empty batch.
pub fn mean_sft_loss(logps: &[f64]) -> Result<Option<f64>, LossError> {
    if logps.is_empty() {
        return Ok(None);
    }
    let mut sum = 0.0;
    for &lp in logps {
        sum += sft_loss(lp)?;
    }
    Ok(Some(sum / logps.len() as f64))
}

/// −log σ(β·(Δw − Δl)).
pub fn dpo_loss(inputs: &LossInputs) -> Result<f64, LossError> {
    inputs.validate()?;
    Ok(softplus(-inputs.margin()))
}

/// Partial derivatives of [`dpo_loss`] with respect to
/// (policy chosen, ref chosen, policy rejected, ref rejected).
pub fn grad_dpo(inputs: &LossInputs) -> Result<[f64; 4], LossError> {
    inputs.validate()?;
    let bs = inputs.beta * sigmoid(-inputs.margin());
    Ok([-bs, bs, bs, -bs])
}

/// λ·DPO + SFT on the chosen output.
pub fn total_loss(inputs: &LossInputs) -> Result<f64, LossError> {
    total_loss_with(inputs, LossMode::WeightedDpo { lambda: inputs.lambda })
}

/// Which term of the combined objective carries the weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LossMode {
    /// λ·DPO + SFT.
    WeightedDpo { lambda: f64 },
    /// DPO + w·SFT.
    WeightedSft { weight: f64 },
}

impl Default for LossMode {
    fn default() -> Self {
        LossMode::WeightedDpo { lambda: DEFAULT_LAMBDA }
    }
}

pub fn total_loss_with(inputs: &LossInputs, mode: LossMode) -> Result<f64, LossError> {
    let dpo = dpo_loss(inputs)?;
    let sft = sft_loss(inputs.logp_policy_chosen)?;
    match mode {
        LossMode::WeightedDpo { lambda } => {
            if !lambda.is_finite() {
                return Err(LossError::NonFiniteInput("lambda"));
            }
            if lambda < 0.0 {
                return Err(LossError::NegativeLambda);
            }
            Ok(lambda * dpo + sft)
        }
        LossMode::WeightedSft { weight } => {
            if !weight.is_finite() {
                return Err(LossError::NonFiniteInput("weight"));
            }
            if weight < 0.0 {
                return Err(LossError::NegativeLambda);
            }
            Ok(dpo + weight * sft)
        }
    }
}

/// One sampled completion and whether it solves the step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub completion: String,
    /// `None` when the completion does not parse.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<Action>,
    pub correct: bool,
}

/// n samples drawn for one gold step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSet {
    pub task_id: String,
    pub prompt: String,
    pub gold: Action,
    pub samples: Vec<Sample>,
}

impl SampleSet {
    /// Parses each completion and judges it against `gold`.
    pub fn judged<S: Into<String>>(
        task_id: impl Into<String>,
        prompt: impl Into<String>,
        gold: Action,
        completions: impl IntoIterator<Item = S>,
    ) -> Self {
        let samples = completions
            .into_iter()
            .map(|c| {
                let completion = c.into();
                let action = parse_action(&completion).ok();
                let correct = action.as_ref().is_some_and(|a| judge_step(a, &gold).success);
                Sample {
                    completion,
                    action,
                    correct,
                }
            })
            .collect();
        SampleSet {
            task_id: task_id.into(),
            prompt: prompt.into(),
            gold,
            samples,
        }
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn correct_count(&self) -> usize {
        self.samples.iter().filter(|s| s.correct).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
}

fn canonical(sample: &Sample) -> String {
    match &sample.action {
        Some(a) => a.command.to_string(),
        None => sample.completion.trim().into(),
    }
}

/// One pair per distinct wrong command from every set solved sometimes but
/// not always. Pairs follow input order; within a set, first occurrence wins.
pub fn filter_preference_pairs(sets: &[SampleSet]) -> Vec<PreferencePair> {
    let mut pairs = Vec::new();
    for set in sets {
        let correct = set.correct_count();
        if correct == 0 || correct == set.n() {
            continue;
        }
        let chosen = set.gold.command.to_string();
        let mut seen = BTreeSet::new();
        for sample in set.samples.iter().filter(|s| !s.correct) {
            let rejected = canonical(sample);
            if rejected.is_empty() || rejected == chosen || !seen.insert(rejected.clone()) {
                continue;
            }
            pairs.push(PreferencePair {
                prompt: set.prompt.clone(),
                chosen: chosen.clone(),
                rejected,
            });
        }
    }
    pairs
}

/// Traces the adjudicator accepts, without repeats of the same task and
/// command sequence. Order is preserved.
pub fn select_rft_traces<F>(traces: &[Trace], mut adjudicator: F) -> Vec<Trace>
where
    F: FnMut(&Trace) -> bool,
{
    let mut seen: BTreeSet<(String, Vec<String>)> = BTreeSet::new();
    let mut out = Vec::new();
    for trace in traces {
        if !adjudicator(trace) {
            continue;
        }
        let key = (
            trace.task.clone(),
            trace.actions().map(|a| a.command.to_string()).collect(),
        );
        if seen.insert(key) {
            out.push(trace.clone());
        }
    }
    out
}

const RECOGNITION_TEMPLATE: &str = include_str!("../templates/recognition.txt");
const SIMPLE_TASK_TEMPLATE: &str = include_str!("../templates/simple_task.txt");
const TRACE_INTENT_TEMPLATE: &str = include_str!("../templates/trace_intent.txt");

const CONSTRUCTION_FIELDS: [&str; 4] = [
    "html_content",
    "task_description",
    "annotated_action_trace",
    "number_of_steps_in_action",
];

/// Prompts used to synthesize training data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstructionKind {
    /// Explain a page's purpose.
    Recognition,
    /// Invent a one-step task for a given operation.
    SimpleTask,
    /// Annotate each step of a trace with its intent.
    TraceIntent,
}

impl ConstructionKind {
    pub fn template(self) -> &'static str {
        match self {
            ConstructionKind::Recognition => RECOGNITION_TEMPLATE,
            ConstructionKind::SimpleTask => SIMPLE_TASK_TEMPLATE,
            ConstructionKind::TraceIntent => TRACE_INTENT_TEMPLATE,
        }
    }

    pub fn fields(self) -> Vec<&'static str> {
        placeholders(self.template(), &CONSTRUCTION_FIELDS)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConstructionError {
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("unknown prompt kind `{0}`")]
    UnknownKind(String),
}

impl FromStr for ConstructionKind {
    type Err = ConstructionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "recognition" => Ok(ConstructionKind::Recognition),
            "simple_task" => Ok(ConstructionKind::SimpleTask),
            "trace_intent" => Ok(ConstructionKind::TraceIntent),
            _ => Err(ConstructionError::UnknownKind(s.into())),
        }
    }
}

/// Fills a construction template. Every placeholder it uses must be
/// supplied; extra fields are ignored.
pub fn render_construction_prompt(
    kind: ConstructionKind,
    fields: &[(&str, &str)],
) -> Result<String, ConstructionError> {
    for name in kind.fields() {
        if !fields.iter().any(|(k, _)| *k == name) {
            return Err(ConstructionError::MissingField(name.into()));
        }
    }
    Ok(substitute(kind.template(), fields))
}

/// As [`render_construction_prompt`], with the kind given by name.
pub fn render_construction_prompt_named(kind: &str, fields: &[(&str, &str)]) -> Result<String, ConstructionError> {
    render_construction_prompt(kind.parse()?, fields)
}
