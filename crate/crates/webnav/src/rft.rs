//! Adjudicators deciding which recorded episodes count as successes.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Stdio};

use webnav_core::episode::{Outcome, Trace};
use webnav_core::evaluator::text_matches;

use crate::formats::{read_to_string, FormatError};

#[derive(Debug, thiserror::Error)]
pub enum AdjudicatorError {
    #[error("unknown adjudicator {0:?}; expected finished, answers:PATH or exec:COMMAND")]
    Unknown(String),
    #[error(transparent)]
    Read(#[from] FormatError),
    #[error("{path}: expected a JSON object of task to answer: {detail}")]
    Answers { path: String, detail: String },
    #[error("adjudicator command {command:?}: {detail}")]
    Exec { command: String, detail: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Adjudicator {
    /// The episode ended with `finish`.
    Finished,
    /// The episode finished with the expected answer for its task.
    Answers(BTreeMap<String, String>),
    /// A shell command reads the trace as JSON on stdin; exit 0 accepts.
    Exec(String),
}

impl Adjudicator {
    pub fn parse(spec: &str) -> Result<Adjudicator, AdjudicatorError> {
        if spec == "finished" {
            return Ok(Adjudicator::Finished);
        }
        if let Some(path) = spec.strip_prefix("answers:") {
            let text = read_to_string(Path::new(path))?;
            let answers = serde_json::from_str(&text).map_err(|e| AdjudicatorError::Answers {
                path: path.to_owned(),
                detail: e.to_string(),
            })?;
            return Ok(Adjudicator::Answers(answers));
        }
        match spec.strip_prefix("exec:") {
            Some(cmd) if !cmd.trim().is_empty() => Ok(Adjudicator::Exec(cmd.to_owned())),
            _ => Err(AdjudicatorError::Unknown(spec.to_owned())),
        }
    }

    pub fn judge(&self, trace: &Trace) -> Result<bool, AdjudicatorError> {
        match self {
            Adjudicator::Finished => Ok(matches!(trace.outcome, Outcome::Finished { .. })),
            Adjudicator::Answers(answers) => Ok(match (&trace.outcome, answers.get(&trace.task)) {
                (Outcome::Finished { answer: Some(got) }, Some(want)) => text_matches(got, want),
                _ => false,
            }),
            Adjudicator::Exec(command) => run_exec(command, trace),
        }
    }
}

fn run_exec(command: &str, trace: &Trace) -> Result<bool, AdjudicatorError> {
    let fail = |detail: String| AdjudicatorError::Exec {
        command: command.to_owned(),
        detail,
    };
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .stdin(Stdio::piped())
        .stdout(Stdio::null())
        .spawn()
        .map_err(|e| fail(e.to_string()))?;
    let payload = serde_json::to_vec(trace).expect("traces serialize");
    if let Some(mut stdin) = child.stdin.take() {
        // A command that ignores its input may close the pipe early.
        let _ = stdin.write_all(&payload);
    }
    let status = child.wait().map_err(|e| fail(e.to_string()))?;
    match status.code() {
        Some(code) => Ok(code == 0),
        None => Err(fail("terminated by a signal".into())),
    }
}

/// Verdicts for every trace, stopping at the first adjudicator failure.
pub fn judge_all(adjudicator: &Adjudicator, traces: &[Trace]) -> Result<Vec<bool>, AdjudicatorError> {
    traces.iter().map(|t| adjudicator.judge(t)).collect()
}
