//! Action generators and the parse-outcome check shared by the grammar tests.

#![allow(dead_code)]

use proptest::prelude::*;
use webnav_core::action::{parse_action, Action, Command, DiagnosticKind, GoDirection, ScrollDirection};

pub fn text() -> impl Strategy<Value = String> {
    prop_oneof![
        any::<String>(),
        "[a-z #\"'\\\\(),=]{0,20}",
        "[\u{4e00}-\u{4e20}é🙂 #]{0,8}",
    ]
}

pub fn element_id() -> impl Strategy<Value = String> {
    "[0-9]{1,4}"
}

pub fn arb_command() -> impl Strategy<Value = Command> {
    prop_oneof![
        element_id().prop_map(|element_id| Command::Click { element_id }),
        element_id().prop_map(|element_id| Command::Hover { element_id }),
        (element_id(), text()).prop_map(|(element_id, option)| Command::Select { element_id, option }),
        (element_id(), text(), any::<bool>()).prop_map(|(element_id, content, press_enter)| Command::TypeString {
            element_id,
            content,
            press_enter
        }),
        prop_oneof![Just(ScrollDirection::Up), Just(ScrollDirection::Down)]
            .prop_map(|direction| Command::ScrollPage { direction }),
        prop_oneof![Just(GoDirection::Backward), Just(GoDirection::Forward)]
            .prop_map(|direction| Command::Go { direction }),
        (text(), any::<bool>()).prop_map(|(url, new_tab)| Command::JumpTo { url, new_tab }),
        any::<i64>().prop_map(|tab_index| Command::SwitchTab { tab_index }),
        text().prop_map(|message| Command::UserInput { message }),
        proptest::option::of(text()).prop_map(|answer| Command::Finish { answer }),
    ]
}

pub fn arb_action() -> impl Strategy<Value = Action> {
    (arb_command(), proptest::option::of(text())).prop_map(|(command, comment)| {
        let action = Action::from(command);
        match comment {
            Some(c) => action.with_comment(&c),
            None => action,
        }
    })
}

/// Panics unless `input` parses to an action whose canonical form parses
/// back, or fails with a well-formed diagnostic of a known kind.
pub fn check_defined(input: &str) {
    match parse_action(input) {
        Ok(action) => {
            let again = parse_action(&action.to_command_string()).expect("canonical form parses");
            assert_eq!(again.command, action.command, "{input:?}");
        }
        Err(d) => {
            assert!(
                d.span.start <= d.span.end && d.span.end <= input.len(),
                "{input:?} {d:?}"
            );
            assert!(input.is_char_boundary(d.span.start) && input.is_char_boundary(d.span.end));
            assert!(matches!(
                d.kind,
                DiagnosticKind::UnknownFunction
                    | DiagnosticKind::ArityError
                    | DiagnosticKind::TypeError
                    | DiagnosticKind::UnparsableLine
                    | DiagnosticKind::MultipleCommands
            ));
        }
    }
}

pub const PIECES: &[&str] = &[
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
    "frobnicate",
    "(",
    ")",
    "(",
    ")",
    ",",
    "=",
    "\"",
    "'",
    "\\",
    "#",
    "\n",
    " ",
    "element_id",
    "content",
    "option",
    "press_enter",
    "direction",
    "url",
    "new_tab",
    "tab_index",
    "message",
    "answer",
    "True",
    "False",
    "None",
    "\"3\"",
    "7",
    "-1",
    "\"up\"",
    "\"forward\"",
    "\"x\"",
    "\\u00e9",
    "\\x4",
    "é",
    "😀",
];
