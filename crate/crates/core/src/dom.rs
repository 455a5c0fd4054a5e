//! Element tree, operable-element detection and page state.
//!
//! Trees are built either by the HTML parser in the `webnav` crate or by hand
//! with the [`DomNode`] builder methods. [`DomTree::new`] numbers nodes in
//! pre-order; those `node_index` values survive pruning unchanged, so an index
//! always refers to the same element of the source document.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::pruner::SimplifiedHtml;
use crate::text::normalize_whitespace;

/// Element rectangle in CSS pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DomNode {
    /// Lowercase element name.
    pub tag: String,
    /// Attributes in source order.
    pub attributes: Vec<(String, String)>,
    /// The element's own text, whitespace-normalized.
    pub text: String,
    pub children: Vec<DomNode>,
    /// Pre-order position in the source document.
    pub node_index: usize,
    pub operable_id: Option<u32>,
    pub bounds: Option<Rect>,
    /// Known to be invisible. Only live snapshots can set this.
    pub hidden: bool,
    /// Element-child indices from the document element down to this node.
    pub locator: Vec<u32>,
}

impl DomNode {
    pub fn new(tag: &str) -> Self {
        DomNode {
            tag: tag.trim().to_lowercase(),
            ..Default::default()
        }
    }

    pub fn with_attr(mut self, name: &str, value: &str) -> Self {
        self.attributes.push((name.to_lowercase(), value.into()));
        self
    }

    pub fn with_text(mut self, text: &str) -> Self {
        self.text = normalize_whitespace(text);
        self
    }

    pub fn with_child(mut self, child: DomNode) -> Self {
        self.children.push(child);
        self
    }

    pub fn with_children(mut self, children: impl IntoIterator<Item = DomNode>) -> Self {
        self.children.extend(children);
        self
    }

    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attributes
            .iter()
            .find(|(key, _)| key.eq_ignore_ascii_case(name))
            .map(|(_, value)| value.as_str())
    }

    pub fn has_text(&self) -> bool {
        !self.text.is_empty()
    }

    pub fn has_attributes(&self) -> bool {
        !self.attributes.is_empty()
    }

    /// Pre-order iterator over this node and its descendants.
    pub fn iter(&self) -> PreOrder<'_> {
        PreOrder { stack: vec![self] }
    }

    /// Text of this node and all descendants, joined by single spaces.
    pub fn deep_text(&self) -> String {
        let mut out = String::new();
        for node in self.iter() {
            if node.has_text() {
                if !out.is_empty() {
                    out.push(' ');
                }
                out.push_str(&node.text);
            }
        }
        out
    }

    fn renumber(&mut self, next: &mut usize) {
        self.node_index = *next;
        *next += 1;
        for child in &mut self.children {
            child.renumber(next);
        }
    }
}

pub struct PreOrder<'a> {
    stack: Vec<&'a DomNode>,
}

impl<'a> Iterator for PreOrder<'a> {
    type Item = &'a DomNode;

    fn next(&mut self) -> Option<&'a DomNode> {
        let node = self.stack.pop()?;
        self.stack.extend(node.children.iter().rev());
        Some(node)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomTree {
    pub root: DomNode,
    pub source_url: String,
    pub title: Option<String>,
}

impl DomTree {
    /// Wraps `root` and assigns `node_index` in pre-order starting at 0.
    pub fn new(mut root: DomNode) -> Self {
        let mut next = 0;
        root.renumber(&mut next);
        DomTree {
            root,
            source_url: String::new(),
            title: None,
        }
    }

    /// Wraps an already-numbered root (a pruned tree) without renumbering.
    pub fn from_numbered(root: DomNode, source_url: String, title: Option<String>) -> Self {
        DomTree {
            root,
            source_url,
            title,
        }
    }

    pub fn with_url(mut self, url: &str) -> Self {
        self.source_url = url.into();
        self
    }

    pub fn with_title(mut self, title: Option<String>) -> Self {
        self.title = title;
        self
    }

    pub fn iter(&self) -> PreOrder<'_> {
        self.root.iter()
    }

    pub fn len(&self) -> usize {
        self.iter().count()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Looks a node up by `node_index`. Indices increase in pre-order, so the
    /// search descends into the last child whose index does not exceed the target.
    pub fn node(&self, index: usize) -> Option<&DomNode> {
        let mut cur = &self.root;
        loop {
            if cur.node_index == index {
                return Some(cur);
            }
            if index < cur.node_index {
                return None;
            }
            cur = cur.children.iter().take_while(|c| c.node_index <= index).last()?;
        }
    }

    pub fn node_by_operable_id(&self, id: u32) -> Option<&DomNode> {
        self.iter().find(|n| n.operable_id == Some(id))
    }
}

/// Flattened view of a tree: parent and child links by pre-order position.
#[derive(Debug)]
pub struct TreeIndex<'a> {
    pub nodes: Vec<&'a DomNode>,
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
    position: BTreeMap<usize, usize>,
}

impl<'a> TreeIndex<'a> {
    pub fn new(tree: &'a DomTree) -> Self {
        let mut index = TreeIndex {
            nodes: Vec::new(),
            parent: Vec::new(),
            children: Vec::new(),
            position: BTreeMap::new(),
        };
        let mut stack: Vec<(&DomNode, Option<usize>)> = vec![(&tree.root, None)];
        while let Some((node, parent)) = stack.pop() {
            let pos = index.nodes.len();
            index.nodes.push(node);
            index.parent.push(parent);
            index.children.push(Vec::new());
            index.position.insert(node.node_index, pos);
            if let Some(p) = parent {
                index.children[p].push(pos);
            }
            stack.extend(node.children.iter().rev().map(|c| (c, Some(pos))));
        }
        index
    }

    /// Pre-order position of the node with the given `node_index`.
    pub fn position(&self, node_index: usize) -> Option<usize> {
        self.position.get(&node_index).copied()
    }
}

/// Tags that are interactive by themselves.
const OPERABLE_TAGS: &[&str] = &[
    "a", "button", "input", "textarea", "select", "option", "label", "summary",
];

pub fn is_operable(node: &DomNode) -> bool {
    if OPERABLE_TAGS.contains(&node.tag.as_str()) {
        return true;
    }
    if node.attr("onclick").is_some() {
        return true;
    }
    if let Some(role) = node.attr("role") {
        let role = role.trim();
        if role.eq_ignore_ascii_case("button") || role.eq_ignore_ascii_case("link") {
            return true;
        }
    }
    if let Some(v) = node.attr("contenteditable") {
        if !v.trim().eq_ignore_ascii_case("false") {
            return true;
        }
    }
    matches!(node.attr("tabindex").map(|v| v.trim().parse::<i64>()), Some(Ok(n)) if n >= 0)
}

/// Marks operable nodes and numbers them 0.. in pre-order. Idempotent.
pub fn detect_operable(mut tree: DomTree) -> DomTree {
    mark_operable(&mut tree);
    tree
}

pub fn mark_operable(tree: &mut DomTree) {
    fn visit(node: &mut DomNode, next: &mut u32) {
        node.operable_id = if is_operable(node) {
            let id = *next;
            *next += 1;
            Some(id)
        } else {
            None
        };
        for child in &mut node.children {
            visit(child, next);
        }
    }
    let mut next = 0;
    visit(&mut tree.root, &mut next);
}

/// Seed set for pruning: every operable node and every node with own text.
/// Nodes known to be hidden are left out.
pub fn kept_set(tree: &DomTree) -> BTreeSet<usize> {
    tree.iter()
        .filter(|n| !n.hidden && (n.operable_id.is_some() || n.has_text()))
        .map(|n| n.node_index)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tab {
    pub title: String,
    #[serde(default)]
    pub url: String,
    pub is_current: bool,
}

/// What an environment shows the agent: a live tree to prune, or an
/// observation recorded earlier.
#[derive(Debug, Clone, PartialEq)]
pub enum PageContent {
    Live(DomTree),
    Recorded(SimplifiedHtml),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PageState {
    pub content: PageContent,
    pub url: String,
    pub scroll_y: u32,
    pub viewport_height: u32,
    pub page_height: u32,
    pub tabs: Vec<Tab>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PageStateError {
    #[error("viewport height must be positive")]
    NonPositiveViewport,
    #[error("scroll offset {scroll_y} exceeds the scrollable range {max}")]
    ScrollOutOfRange { scroll_y: u32, max: u32 },
    #[error("expected exactly one current tab, found {0}")]
    CurrentTab(usize),
}

impl PageState {
    /// A single-tab live page scrolled to the top.
    pub fn live(tree: DomTree, viewport_height: u32, page_height: u32) -> Self {
        let url = tree.source_url.clone();
        let title = tree.title.clone().unwrap_or_default();
        PageState {
            content: PageContent::Live(tree),
            url: url.clone(),
            scroll_y: 0,
            viewport_height,
            page_height,
            tabs: vec![Tab {
                title,
                url,
                is_current: true,
            }],
        }
    }

    pub fn tree(&self) -> Option<&DomTree> {
        match &self.content {
            PageContent::Live(tree) => Some(tree),
            PageContent::Recorded(_) => None,
        }
    }

    pub fn check(&self) -> Result<(), PageStateError> {
        if self.viewport_height == 0 {
            return Err(PageStateError::NonPositiveViewport);
        }
        let max = self.page_height.saturating_sub(self.viewport_height);
        if self.scroll_y > max {
            return Err(PageStateError::ScrollOutOfRange {
                scroll_y: self.scroll_y,
                max,
            });
        }
        let current = self.tabs.iter().filter(|t| t.is_current).count();
        if current != 1 {
            return Err(PageStateError::CurrentTab(current));
        }
        Ok(())
    }
}
