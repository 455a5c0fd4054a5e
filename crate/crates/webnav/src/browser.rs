//! A live [`Environment`] driving a real browser over WebDriver.
//!
//! Each snapshot serializes the current DOM, re-parses it, and attaches
//! geometry and visibility measured in the page. Elements are found again at
//! action time by their child-index path from the document element.

use std::io::{BufRead, Write};
use std::thread::sleep;
use std::time::{Duration, Instant};

use serde::Deserialize;
use serde_json::{json, Value};
use webnav_core::action::{find_option, Action, Command, GoDirection, ScrollDirection};
use webnav_core::dom::{detect_operable, DomNode, DomTree, PageContent, PageState, Rect, Tab};
use webnav_core::episode::{Environment, EnvironmentError};

use crate::html::parse_html_at;
use crate::webdriver::{ElementRef, WebDriver, WebDriverError, ENTER};

const SNAPSHOT_SCRIPT: &str = r#"
const boxes = [];
const walk = (el, path) => {
  const style = window.getComputedStyle(el);
  const r = el.getBoundingClientRect();
  const hidden = style.display === 'none' || style.visibility === 'hidden' || el.getClientRects().length === 0;
  boxes.push([path, hidden, r.x, r.y + window.scrollY, r.width, r.height]);
  for (let i = 0; i < el.children.length; i++) walk(el.children[i], path.concat([i]));
};
walk(document.documentElement, []);
return {
  html: document.documentElement.outerHTML,
  url: window.location.href,
  title: document.title,
  scroll_y: Math.round(window.scrollY),
  viewport_height: Math.round(window.innerHeight),
  page_height: Math.round(Math.max(document.documentElement.scrollHeight, document.body ? document.body.scrollHeight : 0)),
  boxes: boxes
};
"#;

const RESOLVE_SCRIPT: &str = r#"
let node = document.documentElement;
for (const i of arguments[0]) {
  node = node.children[i];
  if (!node) return null;
}
return node;
"#;

#[derive(Deserialize)]
struct Snapshot {
    html: String,
    url: String,
    title: String,
    scroll_y: f64,
    viewport_height: f64,
    page_height: f64,
    boxes: Vec<(Vec<u32>, bool, f64, f64, f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct BrowserOptions {
    /// Opened on reset; the current page is used when absent.
    pub start_url: Option<String>,
    /// Quiet period after the document reports ready.
    pub settle: Duration,
    pub ready_timeout: Duration,
    /// Ask on the terminal for `user_input`; otherwise answer with "".
    pub interactive: bool,
}

impl Default for BrowserOptions {
    fn default() -> Self {
        BrowserOptions {
            start_url: None,
            settle: Duration::from_millis(500),
            ready_timeout: Duration::from_secs(20),
            interactive: false,
        }
    }
}

pub struct BrowserEnvironment {
    driver: WebDriver,
    options: BrowserOptions,
    /// The last snapshot's tree, operable ids assigned.
    tree: Option<DomTree>,
}

fn protocol(e: WebDriverError) -> EnvironmentError {
    EnvironmentError::Protocol {
        status: e.status(),
        detail: e.to_string(),
    }
}

fn attach_geometry(node: &mut DomNode, boxes: &std::collections::HashMap<Vec<u32>, (bool, Rect)>) {
    if let Some((hidden, rect)) = boxes.get(&node.locator) {
        node.hidden = *hidden;
        node.bounds = Some(*rect);
    }
    for child in &mut node.children {
        attach_geometry(child, boxes);
    }
}

fn to_u32(v: f64) -> u32 {
    if v.is_finite() && v > 0.0 {
        v.round().min(u32::MAX as f64) as u32
    } else {
        0
    }
}

impl BrowserEnvironment {
    pub fn new(driver: WebDriver, options: BrowserOptions) -> Self {
        BrowserEnvironment {
            driver,
            options,
            tree: None,
        }
    }

    pub fn driver(&self) -> &WebDriver {
        &self.driver
    }

    pub fn into_driver(self) -> WebDriver {
        self.driver
    }

    /// Waits for `document.readyState == "complete"`, then the settle period.
    fn settle(&self) -> Result<(), EnvironmentError> {
        let deadline = Instant::now() + self.options.ready_timeout;
        loop {
            let state = self
                .driver
                .execute("return document.readyState;", vec![])
                .map_err(protocol)?;
            if state.as_str() == Some("complete") || Instant::now() >= deadline {
                break;
            }
            sleep(Duration::from_millis(50));
        }
        sleep(self.options.settle);
        Ok(())
    }

    fn tabs(&self, current_title: &str) -> Result<Vec<Tab>, EnvironmentError> {
        let current = self.driver.window_handle().map_err(protocol)?;
        let handles = self.driver.window_handles().map_err(protocol)?;
        let mut tabs = Vec::with_capacity(handles.len());
        for handle in &handles {
            if *handle == current {
                tabs.push(Tab {
                    title: current_title.to_owned(),
                    url: self.driver.current_url().map_err(protocol)?,
                    is_current: true,
                });
                continue;
            }
            self.driver.switch_to_window(handle).map_err(protocol)?;
            let title = self.driver.title().map_err(protocol)?;
            let url = self.driver.current_url().map_err(protocol)?;
            tabs.push(Tab {
                title,
                url,
                is_current: false,
            });
        }
        if handles.len() > 1 {
            self.driver.switch_to_window(&current).map_err(protocol)?;
        }
        Ok(tabs)
    }

    fn resolve(&self, locator: &[u32]) -> Result<ElementRef, EnvironmentError> {
        let value = self
            .driver
            .execute(RESOLVE_SCRIPT, vec![json!(locator)])
            .map_err(protocol)?;
        ElementRef::from_json(&value).ok_or_else(|| EnvironmentError::Other(format!("no element at path {locator:?}")))
    }

    fn target(&self, element_id: &str) -> Result<&DomNode, EnvironmentError> {
        let tree = self
            .tree
            .as_ref()
            .ok_or_else(|| EnvironmentError::Other("no snapshot taken yet".into()))?;
        element_id
            .trim()
            .parse::<u32>()
            .ok()
            .and_then(|id| tree.node_by_operable_id(id))
            .ok_or_else(|| EnvironmentError::Other(format!("unknown element id {element_id:?}")))
    }

    fn dispatch(&mut self, command: &Command) -> Result<(), EnvironmentError> {
        match command {
            Command::Click { element_id } => {
                let el = self.resolve(&self.target(element_id)?.locator)?;
                self.driver.click(&el).map_err(protocol)?;
                self.settle()
            }
            Command::Hover { element_id } => {
                let el = self.resolve(&self.target(element_id)?.locator)?;
                self.driver.hover(&el).map_err(protocol)
            }
            Command::Select { element_id, option } => {
                let select = self.target(element_id)?;
                let opt = find_option(select, option)
                    .ok_or_else(|| EnvironmentError::Other(format!("no option {option:?}")))?;
                let el = self.resolve(&opt.locator)?;
                self.driver.click(&el).map_err(protocol)?;
                self.settle()
            }
            Command::TypeString {
                element_id,
                content,
                press_enter,
            } => {
                let el = self.resolve(&self.target(element_id)?.locator)?;
                self.driver.clear(&el).map_err(protocol)?;
                let mut keys = content.clone();
                if *press_enter {
                    keys.push(ENTER);
                }
                self.driver.send_keys(&el, &keys).map_err(protocol)?;
                if *press_enter {
                    self.settle()?;
                }
                Ok(())
            }
            Command::ScrollPage { direction } => {
                let sign = match direction {
                    ScrollDirection::Up => -1,
                    ScrollDirection::Down => 1,
                };
                self.driver
                    .execute(
                        "window.scrollBy(0, arguments[0] * window.innerHeight);",
                        vec![json!(sign)],
                    )
                    .map_err(protocol)?;
                Ok(())
            }
            Command::Go { direction } => {
                match direction {
                    GoDirection::Backward => self.driver.back(),
                    GoDirection::Forward => self.driver.forward(),
                }
                .map_err(protocol)?;
                self.settle()
            }
            Command::JumpTo { url, new_tab } => {
                if *new_tab {
                    let handle = self.driver.new_tab().map_err(protocol)?;
                    self.driver.switch_to_window(&handle).map_err(protocol)?;
                }
                self.driver.navigate(url).map_err(protocol)?;
                self.settle()
            }
            Command::SwitchTab { tab_index } => {
                let handles = self.driver.window_handles().map_err(protocol)?;
                let handle = usize::try_from(*tab_index)
                    .ok()
                    .and_then(|i| handles.get(i))
                    .ok_or_else(|| EnvironmentError::Other(format!("no tab {tab_index}")))?;
                self.driver.switch_to_window(handle).map_err(protocol)
            }
            Command::UserInput { .. } | Command::Finish { .. } => Ok(()),
        }
    }
}

impl Environment for BrowserEnvironment {
    fn reset(&mut self, _task: &str) -> Result<PageState, EnvironmentError> {
        if let Some(url) = self.options.start_url.clone() {
            self.driver.navigate(&url).map_err(protocol)?;
        }
        self.settle()?;
        self.snapshot()
    }

    fn apply(&mut self, action: &Action) -> Result<PageState, EnvironmentError> {
        self.dispatch(&action.command)?;
        self.snapshot()
    }

    fn snapshot(&mut self) -> Result<PageState, EnvironmentError> {
        let raw = self.driver.execute(SNAPSHOT_SCRIPT, vec![]).map_err(protocol)?;
        let snap: Snapshot =
            serde_json::from_value(raw).map_err(|e| EnvironmentError::Other(format!("snapshot: {e}")))?;
        let mut tree = parse_html_at(&snap.html, &snap.url).map_err(|e| EnvironmentError::Other(e.to_string()))?;
        if !snap.title.trim().is_empty() {
            tree.title = Some(snap.title.trim().to_owned());
        }
        let boxes = snap
            .boxes
            .into_iter()
            .map(|(path, hidden, x, y, width, height)| (path, (hidden, Rect { x, y, width, height })))
            .collect();
        attach_geometry(&mut tree.root, &boxes);
        let tree = detect_operable(tree);

        let viewport_height = to_u32(snap.viewport_height).max(1);
        let page_height = to_u32(snap.page_height);
        let max_scroll = page_height.saturating_sub(viewport_height);
        let tabs = self.tabs(tree.title.as_deref().unwrap_or_default())?;
        let state = PageState {
            content: PageContent::Live(tree.clone()),
            url: snap.url,
            scroll_y: to_u32(snap.scroll_y).min(max_scroll),
            viewport_height,
            page_height,
            tabs,
        };
        self.tree = Some(tree);
        Ok(state)
    }

    fn resolve_user_input(&mut self, message: &str) -> Result<String, EnvironmentError> {
        if !self.options.interactive {
            return Ok(String::new());
        }
        let mut stderr = std::io::stderr();
        let _ = write!(stderr, "{message}\n> ");
        let _ = stderr.flush();
        let mut line = String::new();
        match std::io::stdin().lock().read_line(&mut line) {
            Ok(0) | Err(_) => Err(EnvironmentError::UserAbort("no answer on standard input".into())),
            Ok(_) => Ok(line.trim_end_matches(['\r', '\n']).to_owned()),
        }
    }
}

/// Chrome/Chromium headless capabilities; other drivers ignore the vendor key.
pub fn headless_capabilities() -> Value {
    json!({
        "goog:chromeOptions": { "args": ["--headless=new", "--no-sandbox", "--window-size=1280,800"] },
        "moz:firefoxOptions": { "args": ["-headless"] }
    })
}
