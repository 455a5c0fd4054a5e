use serde::Deserialize;
use webnav_core::dom::Tab;
use webnav_core::observation::{compute_viewport_pages, render_prompt, tab_entries, Observation};
use webnav_core::pruner::SimplifiedHtml;

#[derive(Deserialize)]
struct FixtureTab {
    title: String,
    is_current: bool,
}

#[derive(Deserialize)]
struct Fixture {
    name: String,
    task: String,
    html: String,
    tabs: Vec<FixtureTab>,
    scroll_y: u32,
    viewport_height: u32,
    page_height: u32,
    previous_commands: Vec<String>,
}

fn observation(f: &Fixture) -> Observation {
    let tabs: Vec<Tab> = f
        .tabs
        .iter()
        .map(|t| Tab {
            title: t.title.clone(),
            url: String::new(),
            is_current: t.is_current,
        })
        .collect();
    Observation {
        task: f.task.clone(),
        simplified_html: SimplifiedHtml::new(f.html.clone(), Default::default()),
        tabs: tab_entries(&tabs),
        viewport: compute_viewport_pages(f.scroll_y, f.viewport_height, f.page_height).unwrap(),
        previous_commands: f.previous_commands.clone(),
    }
}

#[test]
fn prompts_match_golden_files() {
    let fixtures: Vec<Fixture> = serde_json::from_str(include_str!("fixtures/observations.json")).unwrap();
    assert_eq!(fixtures.len(), 3);
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    for f in &fixtures {
        let golden = std::fs::read_to_string(dir.join(format!("prompt_{}.txt", f.name))).unwrap();
        let rendered = render_prompt(&observation(f));
        assert_eq!(rendered.as_bytes(), golden.as_bytes(), "fixture {}", f.name);
        assert!(rendered.contains("You should output one command to interact to the currrent webpage."));
    }
}
