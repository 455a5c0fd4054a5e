//! The agent's action language.
//!
//! Actions are Python-style function calls, one per model reply, optionally
//! followed by a `# comment`:
//!
//! ```text
//! click(element_id="13") # the search button
//! type_string(element_id="2", content="rust", press_enter=True)
//! ```
//!
//! [`parse_action`] is total: every input yields an [`Action`] or a
//! [`ParseDiagnostic`]. [`Action::to_command_string`] renders the canonical
//! keyword form, which is also how actions are stored in trace files.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::{self, Write};
use core::ops::Range;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dom::{DomNode, PageState};
use crate::text::fold;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScrollDirection {
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GoDirection {
    Forward,
    Backward,
}

impl ScrollDirection {
    pub fn as_str(self) -> &'static str {
        match self {
            ScrollDirection::Up => "up",
            ScrollDirection::Down => "down",
        }
    }
}

impl GoDirection {
    pub fn as_str(self) -> &'static str {
        match self {
            GoDirection::Forward => "forward",
            GoDirection::Backward => "backward",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Command {
    Click {
        element_id: String,
    },
    Hover {
        element_id: String,
    },
    Select {
        element_id: String,
        option: String,
    },
    TypeString {
        element_id: String,
        content: String,
        press_enter: bool,
    },
    ScrollPage {
        direction: ScrollDirection,
    },
    Go {
        direction: GoDirection,
    },
    JumpTo {
        url: String,
        new_tab: bool,
    },
    SwitchTab {
        tab_index: i64,
    },
    UserInput {
        message: String,
    },
    Finish {
        answer: Option<String>,
    },
}

/// Function names in the order the agent prompt lists them.
pub const FUNCTION_NAMES: [&str; 10] = [
    "click",
    "hover",
    "select",
    "type_string",
    "scroll_page",
    "go",
    "jump_to",
    "switch_tab",
    "user_input",
    "finish",
];

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Click { .. } => "click",
            Command::Hover { .. } => "hover",
            Command::Select { .. } => "select",
            Command::TypeString { .. } => "type_string",
            Command::ScrollPage { .. } => "scroll_page",
            Command::Go { .. } => "go",
            Command::JumpTo { .. } => "jump_to",
            Command::SwitchTab { .. } => "switch_tab",
            Command::UserInput { .. } => "user_input",
            Command::Finish { .. } => "finish",
        }
    }

    pub fn element_id(&self) -> Option<&str> {
        match self {
            Command::Click { element_id }
            | Command::Hover { element_id }
            | Command::Select { element_id, .. }
            | Command::TypeString { element_id, .. } => Some(element_id),
            _ => None,
        }
    }

    /// Actions after which the page may navigate and needs to settle.
    pub fn may_navigate(&self) -> bool {
        match self {
            Command::Click { .. } | Command::Go { .. } | Command::JumpTo { .. } | Command::SwitchTab { .. } => true,
            Command::TypeString { press_enter, .. } => *press_enter,
            _ => false,
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        out.push_str(self.name());
        out.push('(');
        match self {
            Command::Click { element_id } | Command::Hover { element_id } => {
                kw_str(&mut out, "element_id", element_id);
            }
            Command::Select { element_id, option } => {
                kw_str(&mut out, "element_id", element_id);
                out.push_str(", ");
                kw_str(&mut out, "option", option);
            }
            Command::TypeString {
                element_id,
                content,
                press_enter,
            } => {
                kw_str(&mut out, "element_id", element_id);
                out.push_str(", ");
                kw_str(&mut out, "content", content);
                out.push_str(", ");
                kw_bool(&mut out, "press_enter", *press_enter);
            }
            Command::ScrollPage { direction } => kw_str(&mut out, "direction", direction.as_str()),
            Command::Go { direction } => kw_str(&mut out, "direction", direction.as_str()),
            Command::JumpTo { url, new_tab } => {
                kw_str(&mut out, "url", url);
                out.push_str(", ");
                kw_bool(&mut out, "new_tab", *new_tab);
            }
            Command::SwitchTab { tab_index } => {
                let _ = write!(out, "tab_index={tab_index}");
            }
            Command::UserInput { message } => kw_str(&mut out, "message", message),
            Command::Finish { answer: Some(answer) } => kw_str(&mut out, "answer", answer),
            Command::Finish { answer: None } => {}
        }
        out.push(')');
        f.write_str(&out)
    }
}

fn kw_str(out: &mut String, key: &str, value: &str) {
    out.push_str(key);
    out.push('=');
    quote_into(value, out);
}

fn kw_bool(out: &mut String, key: &str, value: bool) {
    out.push_str(key);
    out.push('=');
    out.push_str(if value { "True" } else { "False" });
}

/// Double-quoted Python string literal.
fn quote_into(value: &str, out: &mut String) {
    out.push('"');
    for ch in value.chars() {
        match ch {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
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
    out.push('"');
}

/// A command plus the model's optional trailing comment.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Action {
    pub command: Command,
    pub comment: Option<String>,
}

impl From<Command> for Action {
    fn from(command: Command) -> Self {
        Action { command, comment: None }
    }
}

impl Action {
    /// Attaches a comment, flattened to one trimmed line. Blank comments are dropped.
    pub fn with_comment(mut self, comment: &str) -> Self {
        let flat: String = comment.chars().map(|c| if c.is_control() { ' ' } else { c }).collect();
        let flat = flat.trim();
        self.comment = (!flat.is_empty()).then(|| flat.to_owned());
        self
    }

    /// Canonical single-line rendering: keyword arguments in signature order,
    /// followed by `  # comment` when there is one.
    pub fn to_command_string(&self) -> String {
        let mut out = self.command.to_string();
        if let Some(comment) = &self.comment {
            out.push_str("  # ");
            out.push_str(comment);
        }
        out
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_command_string())
    }
}

pub fn to_command_string(action: &Action) -> String {
    action.to_command_string()
}

impl Serialize for Action {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_command_string())
    }
}

impl<'de> Deserialize<'de> for Action {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_action(&text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiagnosticKind {
    UnknownFunction,
    ArityError,
    TypeError,
    UnparsableLine,
    MultipleCommands,
}

/// Why a model reply could not be turned into an action.
/// `span` is a byte range into the parsed text.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{kind:?} at {}..{}: {detail}", span.start, span.end)]
pub struct ParseDiagnostic {
    pub kind: DiagnosticKind,
    pub span: Range<usize>,
    pub detail: String,
}

impl ParseDiagnostic {
    fn new(kind: DiagnosticKind, span: Range<usize>, detail: impl Into<String>) -> Self {
        ParseDiagnostic {
            kind,
            span,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Literal {
    Str(String),
    Int(i64),
    Bool(bool),
    None,
}

impl Literal {
    fn describe(&self) -> &'static str {
        match self {
            Literal::Str(_) => "str",
            Literal::Int(_) => "int",
            Literal::Bool(_) => "bool",
            Literal::None => "None",
        }
    }
}

struct Arg {
    key: Option<String>,
    value: Literal,
    span: Range<usize>,
}

struct Call {
    name: &'static str,
    args: Vec<Arg>,
    span: Range<usize>,
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
}

fn is_ident_start(c: char) -> bool {
    c == '_' || c.is_ascii_alphabetic()
}

fn is_ident_char(c: char) -> bool {
    c == '_' || c.is_ascii_alphanumeric()
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    /// Skips spaces and tabs; a call never spans lines outside string literals
    /// unless it is inside the parentheses.
    fn skip_ws(&mut self, allow_newline: bool) {
        while let Some(c) = self.peek() {
            if c == ' ' || c == '\t' || (allow_newline && (c == '\n' || c == '\r')) {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn ident(&mut self) -> Option<&'a str> {
        let start = self.pos;
        match self.peek() {
            Some(c) if is_ident_start(c) => {}
            _ => return None,
        }
        while matches!(self.peek(), Some(c) if is_ident_char(c)) {
            self.pos += 1;
        }
        Some(&self.text[start..self.pos])
    }

    fn error(&self, kind: DiagnosticKind, start: usize, detail: impl Into<String>) -> ParseDiagnostic {
        let end = self.pos.max(start).min(self.text.len());
        ParseDiagnostic::new(kind, start.min(end)..end, detail)
    }

    fn string(&mut self, quote: char) -> Result<String, ParseDiagnostic> {
        let start = self.pos;
        self.bump();
        let mut out = String::new();
        loop {
            let Some(c) = self.bump() else {
                return Err(self.error(DiagnosticKind::UnparsableLine, start, "unterminated string literal"));
            };
            match c {
                c if c == quote => return Ok(out),
                '\n' => {
                    return Err(self.error(DiagnosticKind::UnparsableLine, start, "newline in string literal"));
                }
                '\\' => {
                    let esc_start = self.pos - 1;
                    let Some(e) = self.bump() else {
                        return Err(self.error(DiagnosticKind::UnparsableLine, start, "unterminated string literal"));
                    };
                    match e {
                        '\\' => out.push('\\'),
                        '\'' => out.push('\''),
                        '"' => out.push('"'),
                        'n' => out.push('\n'),
                        'r' => out.push('\r'),
                        't' => out.push('\t'),
                        '0' => out.push('\0'),
                        '\n' => {}
                        'x' | 'u' | 'U' => {
                            let width = match e {
                                'x' => 2,
                                'u' => 4,
                                _ => 8,
                            };
                            let digits = self
                                .text
                                .get(self.pos..self.pos + width)
                                .filter(|d| d.chars().all(|c| c.is_ascii_hexdigit()));
                            let ch = digits
                                .and_then(|d| u32::from_str_radix(d, 16).ok())
                                .and_then(char::from_u32);
                            match ch {
                                Some(ch) => {
                                    out.push(ch);
                                    self.pos += width;
                                }
                                None => {
                                    return Err(self.error(
                                        DiagnosticKind::UnparsableLine,
                                        esc_start,
                                        "invalid escape sequence",
                                    ));
                                }
                            }
                        }
                        other => {
                            out.push('\\');
                            out.push(other);
                        }
                    }
                }
                c => out.push(c),
            }
        }
    }

    fn literal(&mut self) -> Result<Literal, ParseDiagnostic> {
        let start = self.pos;
        match self.peek() {
            Some(q @ ('"' | '\'')) => self.string(q).map(Literal::Str),
            Some(c) if c.is_ascii_digit() || c == '-' || c == '+' => {
                self.bump();
                while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                    self.pos += 1;
                }
                self.text[start..self.pos]
                    .parse::<i64>()
                    .map(Literal::Int)
                    .map_err(|_| self.error(DiagnosticKind::UnparsableLine, start, "malformed integer"))
            }
            Some(c) if is_ident_start(c) => match self.ident() {
                Some("True") => Ok(Literal::Bool(true)),
                Some("False") => Ok(Literal::Bool(false)),
                Some("None") => Ok(Literal::None),
                Some(other) => Err(self.error(DiagnosticKind::TypeError, start, format!("`{other}` is not a literal"))),
                None => unreachable!(),
            },
            _ => {
                self.bump();
                Err(self.error(DiagnosticKind::UnparsableLine, start, "expected a literal argument"))
            }
        }
    }

    /// `name(args)` where the cursor sits at the start of a known name.
    fn call(&mut self, name: &'static str) -> Result<Call, ParseDiagnostic> {
        let start = self.pos;
        self.pos += name.len();
        self.skip_ws(false);
        if self.bump() != Some('(') {
            return Err(self.error(DiagnosticKind::UnparsableLine, start, "expected `(`"));
        }
        let mut args = Vec::new();
        self.skip_ws(true);
        if self.peek() == Some(')') {
            self.bump();
            return Ok(Call {
                name,
                args,
                span: start..self.pos,
            });
        }
        loop {
            self.skip_ws(true);
            let arg_start = self.pos;
            let mut key = None;
            if matches!(self.peek(), Some(c) if is_ident_start(c)) {
                let save = self.pos;
                let ident = self.ident().unwrap_or_default();
                self.skip_ws(true);
                if self.peek() == Some('=') {
                    self.bump();
                    self.skip_ws(true);
                    key = Some(ident.to_owned());
                } else {
                    self.pos = save;
                }
            }
            let value = self.literal()?;
            args.push(Arg {
                key,
                value,
                span: arg_start..self.pos,
            });
            self.skip_ws(true);
            match self.bump() {
                Some(',') => {
                    self.skip_ws(true);
                    if self.peek() == Some(')') {
                        self.bump();
                        break;
                    }
                }
                Some(')') => break,
                _ => {
                    return Err(self.error(DiagnosticKind::UnparsableLine, start, "expected `,` or `)`"));
                }
            }
        }
        Ok(Call {
            name,
            args,
            span: start..self.pos,
        })
    }
}

#[derive(Clone, Copy)]
enum Param {
    ElementId,
    Str,
    OptStr,
    Bool,
    Int,
    OneOf(&'static [&'static str]),
}

fn signature(name: &str) -> &'static [(&'static str, Param)] {
    match name {
        "click" | "hover" => &[("element_id", Param::ElementId)],
        "select" => &[("element_id", Param::ElementId), ("option", Param::Str)],
        "type_string" => &[
            ("element_id", Param::ElementId),
            ("content", Param::Str),
            ("press_enter", Param::Bool),
        ],
        "scroll_page" => &[("direction", Param::OneOf(&["up", "down"]))],
        "go" => &[("direction", Param::OneOf(&["forward", "backward"]))],
        "jump_to" => &[("url", Param::Str), ("new_tab", Param::Bool)],
        "switch_tab" => &[("tab_index", Param::Int)],
        "user_input" => &[("message", Param::Str)],
        "finish" => &[("answer", Param::OptStr)],
        _ => &[],
    }
}

fn bind(call: Call) -> Result<Command, ParseDiagnostic> {
    use DiagnosticKind::{ArityError, TypeError};
    let params = signature(call.name);
    let mut slots: Vec<Option<(Literal, Range<usize>)>> = params.iter().map(|_| None).collect();
    let mut seen_keyword = false;
    for (i, arg) in call.args.into_iter().enumerate() {
        let slot = match &arg.key {
            None if seen_keyword => {
                return Err(ParseDiagnostic::new(
                    ArityError,
                    arg.span,
                    "positional argument after keyword argument",
                ));
            }
            None if i >= params.len() => {
                return Err(ParseDiagnostic::new(
                    ArityError,
                    arg.span,
                    format!("{}() takes {} argument(s)", call.name, params.len()),
                ));
            }
            None => i,
            Some(key) => {
                seen_keyword = true;
                params.iter().position(|(p, _)| p == key).ok_or_else(|| {
                    ParseDiagnostic::new(
                        ArityError,
                        arg.span.clone(),
                        format!("{}() has no parameter `{key}`", call.name),
                    )
                })?
            }
        };
        if slots[slot].is_some() {
            return Err(ParseDiagnostic::new(
                ArityError,
                arg.span,
                format!("argument `{}` given twice", params[slot].0),
            ));
        }
        slots[slot] = Some((arg.value, arg.span));
    }

    let mut strs: Vec<Option<String>> = Vec::new();
    let mut bools = Vec::new();
    let mut int = 0;
    for ((pname, kind), slot) in params.iter().zip(slots) {
        let Some((value, span)) = slot else {
            if matches!(kind, Param::OptStr) {
                strs.push(None);
                continue;
            }
            return Err(ParseDiagnostic::new(
                ArityError,
                call.span.clone(),
                format!("{}() missing argument `{pname}`", call.name),
            ));
        };
        let mismatch = |value: &Literal| {
            ParseDiagnostic::new(
                TypeError,
                span.clone(),
                format!("`{pname}` cannot be {}", value.describe()),
            )
        };
        match (kind, value) {
            (Param::ElementId, Literal::Str(s)) => {
                let trimmed = s.trim();
                if trimmed.is_empty() || !trimmed.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(ParseDiagnostic::new(TypeError, span, "element_id must be a decimal id"));
                }
                strs.push(Some(trimmed.to_owned()));
            }
            (Param::ElementId, Literal::Int(n)) if n >= 0 => strs.push(Some(n.to_string())),
            (Param::Str | Param::OptStr, Literal::Str(s)) => strs.push(Some(s)),
            (Param::OptStr, Literal::None) => strs.push(None),
            (Param::Bool, Literal::Bool(b)) => bools.push(b),
            (Param::Int, Literal::Int(n)) => int = n,
            (Param::OneOf(allowed), Literal::Str(s)) => {
                if !allowed.contains(&s.as_str()) {
                    return Err(ParseDiagnostic::new(
                        TypeError,
                        span,
                        format!("`{pname}` must be one of {allowed:?}"),
                    ));
                }
                strs.push(Some(s));
            }
            (_, value) => return Err(mismatch(&value)),
        }
    }

    let mut strs = strs.into_iter();
    let mut next = || strs.next().flatten();
    let mut req = || next().unwrap_or_default();
    Ok(match call.name {
        "click" => Command::Click { element_id: req() },
        "hover" => Command::Hover { element_id: req() },
        "select" => Command::Select {
            element_id: req(),
            option: req(),
        },
        "type_string" => Command::TypeString {
            element_id: req(),
            content: req(),
            press_enter: bools[0],
        },
        "scroll_page" => Command::ScrollPage {
            direction: if req() == "up" {
                ScrollDirection::Up
            } else {
                ScrollDirection::Down
            },
        },
        "go" => Command::Go {
            direction: if req() == "forward" {
                GoDirection::Forward
            } else {
                GoDirection::Backward
            },
        },
        "jump_to" => Command::JumpTo {
            url: req(),
            new_tab: bools[0],
        },
        "switch_tab" => Command::SwitchTab { tab_index: int },
        "user_input" => Command::UserInput { message: req() },
        _ => Command::Finish { answer: next() },
    })
}

/// Known-function call sites: (byte offset, name), in order.
fn call_sites(text: &str, from: usize) -> Vec<(usize, &'static str)> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = from;
    while i < bytes.len() {
        let c = bytes[i];
        if (c == b'_' || c.is_ascii_alphabetic())
            && (i == 0 || !(bytes[i - 1] == b'_' || bytes[i - 1].is_ascii_alphanumeric()))
        {
            let start = i;
            while i < bytes.len() && (bytes[i] == b'_' || bytes[i].is_ascii_alphanumeric()) {
                i += 1;
            }
            let word = &text[start..i];
            if let Some(name) = FUNCTION_NAMES.iter().find(|n| **n == word) {
                let rest = text[i..].trim_start_matches([' ', '\t']);
                if rest.starts_with('(') {
                    out.push((start, *name));
                }
            }
        } else {
            i += 1;
        }
    }
    out
}

fn parse_call_at(text: &str, pos: usize, name: &'static str) -> Result<(Command, Range<usize>), ParseDiagnostic> {
    let mut cursor = Cursor { text, pos };
    let call = cursor.call(name)?;
    let span = call.span.clone();
    let command = bind(call)?;
    Ok((command, span))
}

fn first_unknown_call(text: &str) -> Option<Range<usize>> {
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if (c == b'_' || c.is_ascii_alphabetic())
            && (i == 0 || !(bytes[i - 1] == b'_' || bytes[i - 1].is_ascii_alphanumeric()))
        {
            let start = i;
            while i < bytes.len() && (bytes[i] == b'_' || bytes[i].is_ascii_alphanumeric()) {
                i += 1;
            }
            if bytes.get(i) == Some(&b'(') {
                return Some(start..i);
            }
        } else {
            i += 1;
        }
    }
    None
}

/// Parses one model reply into an action.
///
/// The first well-formed call to a known function wins; prose around it is
/// ignored. A `#` after the call on the same line starts the comment. Any
/// further well-formed call after that is a [`DiagnosticKind::MultipleCommands`]
/// error.
pub fn parse_action(text: &str) -> Result<Action, ParseDiagnostic> {
    let mut first_error = None;
    for (pos, name) in call_sites(text, 0) {
        match parse_call_at(text, pos, name) {
            Ok((command, span)) => {
                let line_end = text[span.end..].find('\n').map_or(text.len(), |i| span.end + i);
                let tail = &text[span.end..line_end];
                let comment = tail.find('#').map(|i| tail[i + 1..].trim()).filter(|c| !c.is_empty());

                for (next_pos, next_name) in call_sites(text, line_end) {
                    if let Ok((_, next_span)) = parse_call_at(text, next_pos, next_name) {
                        return Err(ParseDiagnostic::new(
                            DiagnosticKind::MultipleCommands,
                            next_span,
                            "only one command may be given per reply",
                        ));
                    }
                }
                let code_tail = tail.find('#').map_or(tail, |i| &tail[..i]);
                let tail_offset = span.end;
                for (next_pos, next_name) in call_sites(code_tail, 0) {
                    if let Ok((_, s)) = parse_call_at(code_tail, next_pos, next_name) {
                        return Err(ParseDiagnostic::new(
                            DiagnosticKind::MultipleCommands,
                            tail_offset + s.start..tail_offset + s.end,
                            "only one command may be given per reply",
                        ));
                    }
                }
                return Ok(Action {
                    command,
                    comment: comment.map(str::to_owned),
                });
            }
            Err(diag) => {
                first_error.get_or_insert(diag);
            }
        }
    }
    if let Some(diag) = first_error {
        return Err(diag);
    }
    if let Some(span) = first_unknown_call(text) {
        let name = &text[span.clone()];
        return Err(ParseDiagnostic::new(
            DiagnosticKind::UnknownFunction,
            span.clone(),
            format!("unknown function `{name}`"),
        ));
    }
    Err(ParseDiagnostic::new(
        DiagnosticKind::UnparsableLine,
        0..text.len(),
        "no command found",
    ))
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ValidationError {
    #[error("element id {0:?} is not on the page")]
    UnknownElementId(String),
    #[error("cannot type into element {element_id} (<{tag}>); only <input> and <textarea> accept text")]
    IllegalTypeTarget { element_id: String, tag: String },
    #[error("element {element_id} (<{tag}>) is not a <select>")]
    IllegalSelectTarget { element_id: String, tag: String },
    #[error("element {element_id} has no option {option:?}")]
    UnknownOption { element_id: String, option: String },
    #[error("tab index {tab_index} out of range for {tabs} tab(s)")]
    TabOutOfRange { tab_index: i64, tabs: usize },
    #[error("{0:?} is not an absolute URL")]
    InvalidUrl(String),
}

/// Checks an action against the observation it answers. All failures are
/// collected. Tag and option checks need the live tree and are skipped for
/// recorded pages.
pub fn validate(action: &Action, state: &PageState, id_map: &BTreeMap<u32, usize>) -> Result<(), Vec<ValidationError>> {
    let mut errors = Vec::new();
    if let Some(element_id) = action.command.element_id() {
        let node_index = element_id.parse::<u32>().ok().and_then(|id| id_map.get(&id));
        let node = match (node_index, state.tree()) {
            (None, _) => {
                errors.push(ValidationError::UnknownElementId(element_id.into()));
                None
            }
            (Some(&index), Some(tree)) => {
                let node = tree.node(index);
                if node.is_none() {
                    errors.push(ValidationError::UnknownElementId(element_id.into()));
                }
                node
            }
            (Some(_), None) => None,
        };
        if let Some(node) = node {
            check_target(&action.command, element_id, node, &mut errors);
        }
    }
    match &action.command {
        Command::SwitchTab { tab_index } => {
            if *tab_index < 0 || *tab_index as u64 >= state.tabs.len() as u64 {
                errors.push(ValidationError::TabOutOfRange {
                    tab_index: *tab_index,
                    tabs: state.tabs.len(),
                });
            }
        }
        Command::JumpTo { url, .. } if !is_absolute_url(url) => {
            errors.push(ValidationError::InvalidUrl(url.clone()));
        }
        _ => {}
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

fn check_target(command: &Command, element_id: &str, node: &DomNode, errors: &mut Vec<ValidationError>) {
    match command {
        Command::TypeString { .. } if node.tag != "input" && node.tag != "textarea" => {
            errors.push(ValidationError::IllegalTypeTarget {
                element_id: element_id.into(),
                tag: node.tag.clone(),
            });
        }
        Command::Select { option, .. } => {
            if node.tag != "select" {
                errors.push(ValidationError::IllegalSelectTarget {
                    element_id: element_id.into(),
                    tag: node.tag.clone(),
                });
            } else if find_option(node, option).is_none() {
                errors.push(ValidationError::UnknownOption {
                    element_id: element_id.into(),
                    option: option.clone(),
                });
            }
        }
        _ => {}
    }
}

/// The `<option>` under `select` whose value or visible text matches `wanted`
/// (case- and whitespace-insensitive).
pub fn find_option<'a>(select: &'a DomNode, wanted: &str) -> Option<&'a DomNode> {
    let wanted = fold(wanted);
    select
        .iter()
        .skip(1)
        .filter(|n| n.tag == "option")
        .find(|opt| opt.attr("value").is_some_and(|v| fold(v) == wanted) || fold(&opt.deep_text()) == wanted)
}

/// Scheme plus a non-empty remainder without whitespace; hierarchical schemes
/// also need `//host`.
pub fn is_absolute_url(url: &str) -> bool {
    let Some((scheme, rest)) = url.split_once(':') else {
        return false;
    };
    let mut chars = scheme.chars();
    if !matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        || !chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'))
    {
        return false;
    }
    if rest.is_empty() || rest.chars().any(|c| c.is_whitespace() || c.is_control()) {
        return false;
    }
    let hierarchical = ["http", "https", "ws", "wss", "ftp"]
        .iter()
        .any(|s| scheme.eq_ignore_ascii_case(s));
    if hierarchical {
        let Some(after) = rest.strip_prefix("//") else {
            return false;
        };
        let host = after.split(['/', '?', '#']).next().unwrap_or("");
        return !host.is_empty();
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dom::{detect_operable, DomTree, PageState, Tab};
    use alloc::vec;

    fn parse(s: &str) -> Action {
        parse_action(s).unwrap_or_else(|e| panic!("{s:?}: {e}"))
    }

    fn kind(s: &str) -> DiagnosticKind {
        parse_action(s).expect_err(s).kind
    }

    #[test]
    fn click_with_comment() {
        let a = parse("click(element_id=\"13\") # the search button");
        assert_eq!(
            a.command,
            Command::Click {
                element_id: "13".into()
            }
        );
        assert_eq!(a.comment.as_deref(), Some("the search button"));
    }

    #[test]
    fn finish_forms() {
        assert_eq!(parse("finish()").command, Command::Finish { answer: None });
        assert_eq!(parse("finish(None)").command, Command::Finish { answer: None });
        assert_eq!(parse("finish(answer=None)").command, Command::Finish { answer: None });
        assert_eq!(
            parse("finish(answer='42')").command,
            Command::Finish {
                answer: Some("42".into())
            }
        );
        assert_eq!(kind("finish(True)"), DiagnosticKind::TypeError);
        assert_eq!(kind("finish('a', 'b')"), DiagnosticKind::ArityError);
    }

    #[test]
    fn positional_and_keyword() {
        let a = parse("type_string('2', \"hello world\", True)");
        assert_eq!(
            a.command,
            Command::TypeString {
                element_id: "2".into(),
                content: "hello world".into(),
                press_enter: true
            }
        );
        let b = parse("type_string(\"2\", press_enter=True, content='hello world')");
        assert_eq!(a.command, b.command);
        assert_eq!(
            kind("type_string(element_id='2', 'x', True)"),
            DiagnosticKind::ArityError
        );
        assert_eq!(kind("type_string('2', 'x')"), DiagnosticKind::ArityError);
        assert_eq!(kind("click('1', element_id='1')"), DiagnosticKind::ArityError);
        assert_eq!(kind("click(id='1')"), DiagnosticKind::ArityError);
    }

    #[test]
    fn prose_is_ignored() {
        let a = parse("I should scroll first.\nscroll_page(direction='down') # look further\n");
        assert_eq!(
            a.command,
            Command::ScrollPage {
                direction: ScrollDirection::Down
            }
        );
        assert_eq!(a.comment.as_deref(), Some("look further"));
        let b = parse("```python\ngo(direction=\"backward\")\n```");
        assert_eq!(
            b.command,
            Command::Go {
                direction: GoDirection::Backward
            }
        );
    }

    #[test]
    fn hash_inside_string_is_content() {
        let a = parse("type_string(element_id=\"4\", content=\"issue #12\", press_enter=False) # search # twice");
        assert_eq!(
            a.command,
            Command::TypeString {
                element_id: "4".into(),
                content: "issue #12".into(),
                press_enter: false
            }
        );
        assert_eq!(a.comment.as_deref(), Some("search # twice"));
    }

    #[test]
    fn multiple_commands() {
        assert_eq!(
            kind("click(element_id=\"1\")\nclick(element_id=\"2\")"),
            DiagnosticKind::MultipleCommands
        );
        assert_eq!(
            kind("click(element_id=\"1\"); finish()"),
            DiagnosticKind::MultipleCommands
        );
        // a call mentioned in the comment is not a second command
        assert!(parse_action("click(element_id=\"1\") # then finish()").is_ok());
    }

    #[test]
    fn diagnostics() {
        assert_eq!(kind("navigate(url='x')"), DiagnosticKind::UnknownFunction);
        assert_eq!(kind("I am not sure what to do."), DiagnosticKind::UnparsableLine);
        assert_eq!(kind(""), DiagnosticKind::UnparsableLine);
        assert_eq!(kind("click(element_id=\"abc\")"), DiagnosticKind::TypeError);
        assert_eq!(kind("scroll_page(direction='left')"), DiagnosticKind::TypeError);
        assert_eq!(kind("switch_tab(tab_index='1')"), DiagnosticKind::TypeError);
        assert_eq!(kind("click(element_id=\"1"), DiagnosticKind::UnparsableLine);
        assert_eq!(kind("click(element_id=foo)"), DiagnosticKind::TypeError);
        let d = parse_action("xx navigate(1)").unwrap_err();
        assert_eq!(d.span, 3..11);
    }

    #[test]
    fn integer_ids_are_accepted() {
        assert_eq!(parse("click(7)").command, Command::Click { element_id: "7".into() });
    }

    #[test]
    fn canonical_strings() {
        let scroll: Action = Command::ScrollPage {
            direction: ScrollDirection::Down,
        }
        .into();
        assert_eq!(scroll.to_command_string(), "scroll_page(direction=\"down\")");
        let typed: Action = Command::TypeString {
            element_id: "2".into(),
            content: "a\"b".into(),
            press_enter: true,
        }
        .into();
        assert_eq!(
            typed.to_command_string(),
            "type_string(element_id=\"2\", content=\"a\\\"b\", press_enter=True)"
        );
        assert_eq!(parse(&typed.to_command_string()), typed);
        let tab: Action = Command::SwitchTab { tab_index: 1 }.into();
        assert_eq!(tab.to_command_string(), "switch_tab(tab_index=1)");
        let commented = Action::from(Command::Finish { answer: None }).with_comment(" done\nnow ");
        assert_eq!(commented.to_command_string(), "finish()  # done now");
        assert_eq!(parse(&commented.to_command_string()), commented);
    }

    #[test]
    fn escapes_round_trip() {
        let a: Action = Command::UserInput {
            message: "tab\there\nnew \\ line \u{7} bell \u{85}".into(),
        }
        .into();
        assert_eq!(parse(&a.to_command_string()), a);
        assert_eq!(
            parse("user_input('\\x41\\u00e9\\U0001F600')").command,
            Command::UserInput {
                message: "Aé😀".into()
            }
        );
    }

    fn page() -> (PageState, BTreeMap<u32, usize>) {
        let tree = detect_operable(DomTree::new(
            DomNode::new("body")
                .with_child(DomNode::new("input").with_attr("type", "text"))
                .with_child(DomNode::new("div").with_attr("onclick", "x()"))
                .with_child(
                    DomNode::new("select")
                        .with_child(DomNode::new("option").with_attr("value", "nyc").with_text("New York"))
                        .with_child(
                            DomNode::new("option")
                                .with_attr("value", "sf")
                                .with_text("San Francisco"),
                        ),
                ),
        ));
        let id_map = tree
            .iter()
            .filter_map(|n| n.operable_id.map(|id| (id, n.node_index)))
            .collect();
        let mut state = PageState::live(tree, 800, 800);
        state.tabs.push(Tab {
            title: "other".into(),
            url: String::new(),
            is_current: false,
        });
        (state, id_map)
    }

    #[test]
    fn validation() {
        let (state, ids) = page();
        let check = |s: &str| validate(&parse(s), &state, &ids);
        assert_eq!(
            check("click(element_id=\"7\")"),
            Err(vec![ValidationError::UnknownElementId("7".into())])
        );
        assert_eq!(
            check("type_string(element_id=\"1\", content=\"x\", press_enter=False)"),
            Err(vec![ValidationError::IllegalTypeTarget {
                element_id: "1".into(),
                tag: "div".into()
            }])
        );
        assert_eq!(
            check("type_string(element_id=\"0\", content=\"x\", press_enter=False)"),
            Ok(())
        );
        assert_eq!(check("select(element_id=\"2\", option=\"San Francisco\")"), Ok(()));
        assert_eq!(check("select(element_id=\"2\", option=\"nyc\")"), Ok(()));
        assert!(matches!(
            check("select(element_id=\"2\", option=\"Boston\")"),
            Err(e) if matches!(e[0], ValidationError::UnknownOption { .. })
        ));
        assert!(matches!(
            check("select(element_id=\"0\", option=\"x\")"),
            Err(e) if matches!(e[0], ValidationError::IllegalSelectTarget { .. })
        ));
        assert_eq!(check("switch_tab(tab_index=1)"), Ok(()));
        assert_eq!(
            check("switch_tab(tab_index=2)"),
            Err(vec![ValidationError::TabOutOfRange { tab_index: 2, tabs: 2 }])
        );
        assert_eq!(check("jump_to(url=\"https://example.com/a\", new_tab=False)"), Ok(()));
        assert_eq!(
            check("jump_to(url=\"example.com\", new_tab=False)"),
            Err(vec![ValidationError::InvalidUrl("example.com".into())])
        );
    }

    #[test]
    fn urls() {
        for ok in [
            "https://a.b",
            "http://localhost:8080/x?q#f",
            "about:blank",
            "file:///tmp/x.html",
        ] {
            assert!(is_absolute_url(ok), "{ok}");
        }
        for bad in [
            "",
            "/relative",
            "https://",
            "https:/x",
            "ht tp://x",
            "1http://x",
            "https://a b",
        ] {
            assert!(!is_absolute_url(bad), "{bad}");
        }
    }
}
