//! What the agent sees at each step, and the prompt that carries it.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::{self, Write};

use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::dom::{detect_operable, PageContent, PageState, Tab};
use crate::pruner::{simplify, PruneError, PrunerConfig, SimplifiedHtml};
use crate::template::substitute;

/// The agent prompt, with `{placeholders}` for the observation fields.
pub const AGENT_PROMPT_TEMPLATE: &str = include_str!("../templates/agent_prompt.txt");

pub const DEFAULT_HISTORY_CAP: usize = 8;

/// A position or length measured in viewport heights, to one decimal place.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pages {
    pub tenths: u64,
}

impl fmt::Display for Pages {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.tenths / 10, self.tenths % 10)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewportPages {
    pub current: Pages,
    pub max: Pages,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ObservationError {
    #[error("viewport height must be positive")]
    NonPositiveViewport,
    #[error(transparent)]
    Prune(#[from] PruneError),
}

/// `round(numerator / denominator, 1)` with halves rounded up, in tenths.
fn tenths_half_up(numerator: u32, denominator: u32) -> u64 {
    let (n, d) = (u64::from(numerator), u64::from(denominator));
    (20 * n + d) / (2 * d)
}

/// Scroll offset and page height in viewport units; the page is at least one
/// viewport long.
pub fn compute_viewport_pages(
    scroll_y: u32,
    viewport_height: u32,
    page_height: u32,
) -> Result<ViewportPages, ObservationError> {
    if viewport_height == 0 {
        return Err(ObservationError::NonPositiveViewport);
    }
    Ok(ViewportPages {
        current: Pages {
            tenths: tenths_half_up(scroll_y, viewport_height),
        },
        max: Pages {
            tenths: tenths_half_up(page_height, viewport_height).max(10),
        },
    })
}

/// Canonical command strings of the actions executed so far, oldest first,
/// bounded by `cap`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct History {
    commands: VecDeque<String>,
    cap: usize,
}

impl Default for History {
    fn default() -> Self {
        History::new(DEFAULT_HISTORY_CAP)
    }
}

impl History {
    pub fn new(cap: usize) -> Self {
        History {
            commands: VecDeque::new(),
            cap,
        }
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn len(&self) -> usize {
        self.commands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.commands.is_empty()
    }

    pub fn push(&mut self, action: &Action) {
        self.commands.push_back(action.to_command_string());
        while self.commands.len() > self.cap {
            self.commands.pop_front();
        }
    }

    pub fn commands(&self) -> Vec<String> {
        self.commands.iter().cloned().collect()
    }
}

pub fn update_history(mut history: History, action: &Action) -> History {
    history.push(action);
    history
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TabEntry {
    pub index: usize,
    pub title: String,
    pub is_current: bool,
}

pub fn tab_entries(tabs: &[Tab]) -> Vec<TabEntry> {
    tabs.iter()
        .enumerate()
        .map(|(index, tab)| TabEntry {
            index,
            title: tab.title.clone(),
            is_current: tab.is_current,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub task: String,
    pub simplified_html: SimplifiedHtml,
    pub tabs: Vec<TabEntry>,
    pub viewport: ViewportPages,
    pub previous_commands: Vec<String>,
}

/// Builds the observation for `state`. Live pages are marked, pruned and
/// serialized with `pruner`; recorded pages are used as they are.
pub fn observe(
    state: &PageState,
    task: &str,
    history: &History,
    pruner: &PrunerConfig,
) -> Result<Observation, ObservationError> {
    let simplified_html = match &state.content {
        PageContent::Live(tree) => simplify(&detect_operable(tree.clone()), pruner)?,
        PageContent::Recorded(simplified) => simplified.clone(),
    };
    Ok(Observation {
        task: task.into(),
        simplified_html,
        tabs: tab_entries(&state.tabs),
        viewport: compute_viewport_pages(state.scroll_y, state.viewport_height, state.page_height)?,
        previous_commands: history.commands(),
    })
}

/// Python `repr` of a string.
fn py_repr(s: &str, out: &mut String) {
    let quote = if s.contains('\'') && !s.contains('"') {
        '"'
    } else {
        '\''
    };
    out.push(quote);
    for ch in s.chars() {
        match ch {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if c == quote => {
                out.push('\\');
                out.push(c);
            }
            c if c.is_control() => {
                let code = c as u32;
                if code <= 0xff {
                    let _ = write!(out, "\\x{code:02x}");
                } else {
                    let _ = write!(out, "\\u{code:04x}");
                }
            }
            c => out.push(c),
        }
    }
    out.push(quote);
}

/// `['click(element_id="0")', 'finish()']`; `[]` when empty.
pub fn format_previous_commands(commands: &[String]) -> String {
    let mut out = String::from("[");
    for (i, command) in commands.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        py_repr(command, &mut out);
    }
    out.push(']');
    out
}

/// `[*0: Search results, 1: Docs]`, the current tab marked with `*`.
pub fn format_tabs(tabs: &[TabEntry]) -> String {
    let entries: Vec<String> = tabs
        .iter()
        .map(|t| format!("{}{}: {}", if t.is_current { "*" } else { "" }, t.index, t.title))
        .collect();
    format!("[{}]", entries.join(", "))
}

/// Fills the agent prompt template. Pure placeholder substitution.
pub fn render_prompt(obs: &Observation) -> String {
    let previous = format_previous_commands(&obs.previous_commands);
    let tabs = format_tabs(&obs.tabs);
    let current = obs.viewport.current.to_string();
    let max = obs.viewport.max.to_string();
    substitute(
        AGENT_PROMPT_TEMPLATE,
        &[
            ("html_content", &obs.simplified_html.text),
            ("previous_commands", &previous),
            ("exist_window_tabs_with_pointer_to_current_tab", &tabs),
            ("current_position", &current),
            ("max_size", &max),
            ("task_description", &obs.task),
        ],
    )
}
