//! Hand-built recorded traces for evaluator and data-filter tests.

#![allow(dead_code)]

use std::collections::BTreeMap;

use webnav_core::action::parse_action;
use webnav_core::dom::Tab;
use webnav_core::episode::{Language, Outcome, Trace, TraceStep};
use webnav_core::evaluator::SplitSpec;

pub const SITES: [&str; 4] = ["shop.example", "news.example", "maps.example", "travel.example"];

pub fn split_spec() -> SplitSpec {
    SplitSpec::new(["shop.example", "news.example"])
}

const SCRIPT: [&str; 5] = [
    "type_string(element_id=\"0\", content=\"{q}\", press_enter=True)",
    "click(element_id=\"{c}\")",
    "select(element_id=\"2\", option=\"Option {c}\")",
    "scroll_page(direction=\"down\")",
    "finish(answer=\"{q}\")",
];

/// A recorded step at `index` with the given previous commands.
pub fn step(trace_no: usize, index: usize, action: &str, previous: &[String]) -> TraceStep {
    let html = format!(
        "<form><input id=\"0\" type=\"text\" placeholder=\"Search {trace_no}\" />\
         <button id=\"1\">Go</button><select id=\"2\"><option>Option 1</option><option>Option 2</option></select>\
         <a id=\"3\" href=\"/p/{trace_no}/{index}\">Result {index}</a></form>"
    );
    TraceStep {
        index,
        url: format!("https://{}/page/{trace_no}/{index}", SITES[trace_no % 4]),
        scroll_y: (index as u32) * 400,
        viewport_height: 800,
        page_height: 3200,
        tabs: vec![Tab {
            title: format!("Page {index}"),
            url: format!("https://{}/page/{trace_no}/{index}", SITES[trace_no % 4]),
            is_current: true,
        }],
        simplified_html: html,
        id_map: BTreeMap::from([(0, 2), (1, 3), (2, 4), (3, 7)]),
        previous_commands: previous.to_vec(),
        action: parse_action(action).unwrap(),
        raw_completion: action.to_owned(),
        intent: None,
        user_response: None,
        timestamp_ms: None,
    }
}

pub fn trace(trace_no: usize, steps: usize) -> Trace {
    let q = format!("query {trace_no}");
    let c = 1 + trace_no % 2;
    let mut out = Vec::new();
    let mut previous: Vec<String> = Vec::new();
    for index in 0..steps {
        let template = if index + 1 == steps {
            SCRIPT[4]
        } else {
            SCRIPT[index % 4]
        };
        let action = template.replace("{q}", &q).replace("{c}", &c.to_string());
        let s = step(trace_no, index, &action, &previous);
        previous.push(s.action.to_command_string());
        if previous.len() > 8 {
            previous.remove(0);
        }
        out.push(s);
    }
    Trace {
        task: format!("Find {q}"),
        site: SITES[trace_no % 4].to_owned(),
        language: if trace_no.is_multiple_of(2) {
            Language::En
        } else {
            Language::Zh
        },
        steps: out,
        outcome: Outcome::Finished { answer: Some(q) },
        diagnostics: Vec::new(),
    }
}

/// Ten traces of five steps over four sites: fifty gold steps.
pub fn mini_bench() -> Vec<Trace> {
    (0..10).map(|i| trace(i, 5)).collect()
}

/// A completion judged wrong against `gold` (a command string).
pub fn wrong_answer(gold: &str, variant: usize) -> String {
    match variant % 3 {
        0 if !gold.starts_with("scroll_page") => "scroll_page(direction=\"up\")".into(),
        0 => "scroll_page(direction=\"up\")  # wrong way".into(),
        1 => "I would rather not say.".into(),
        _ => "click(element_id=\"3\")".into(),
    }
}
