//! HTML pruning: keep bounded neighbourhoods around the seed elements, drop
//! everything else, collapse structural chaff, and serialize what remains.
//!
//! For each round `t < rcc` every seed contributes itself, `d_t` ancestors,
//! descendants down to depth `d_t` (first `mc_t` children per node) and
//! `ms_t` siblings on either side. The union is the candidate set. Nodes are
//! then visited in reverse document order and removed when they are not
//! candidates, or when they carry no text, no attributes and at most one
//! child. A removed node's children take its place in the parent. The root
//! is never removed.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::dom::{DomNode, DomTree, TreeIndex};

/// Neighbourhood radii for one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Radii {
    pub depth: usize,
    pub children: usize,
    pub siblings: usize,
}

/// How the radii shrink from round to round.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Shrink {
    /// [`shrink_default`]: depth and siblings lose one per round, children halve.
    #[default]
    Halving,
    /// Same radii every round.
    Constant,
    /// Explicit radii for rounds 1.. ; round 0 always uses the configured radii.
    /// The last entry repeats if there are more rounds than entries.
    Custom(Vec<Radii>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrunerConfig {
    pub max_depth: usize,
    pub max_children: usize,
    pub max_siblings: usize,
    pub recursion_count: usize,
    /// Re-seed each round from the accumulated candidate set instead of the
    /// fixed kept set.
    pub reseed: bool,
    pub shrink: Shrink,
}

impl Default for PrunerConfig {
    fn default() -> Self {
        PrunerConfig {
            max_depth: 4,
            max_children: 6,
            max_siblings: 2,
            recursion_count: 1,
            reseed: false,
            shrink: Shrink::Halving,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PruneError {
    #[error("no node with index {0}")]
    UnknownNode(usize),
    #[error("recursion count must be at least 1")]
    ZeroRecursionCount,
    #[error("shrink schedule grows at round {0}")]
    NonMonotoneSchedule(usize),
}

impl PrunerConfig {
    pub fn new(max_depth: usize, max_children: usize, max_siblings: usize, recursion_count: usize) -> Self {
        PrunerConfig {
            max_depth,
            max_children,
            max_siblings,
            recursion_count,
            ..Default::default()
        }
    }

    pub fn base(&self) -> Radii {
        Radii {
            depth: self.max_depth,
            children: self.max_children,
            siblings: self.max_siblings,
        }
    }

    /// Radii used in `round`.
    pub fn radii(&self, round: usize) -> Radii {
        match &self.shrink {
            Shrink::Halving => {
                let (depth, children, siblings) = shrink_default(round, self);
                Radii {
                    depth,
                    children,
                    siblings,
                }
            }
            Shrink::Constant => self.base(),
            Shrink::Custom(rounds) => match round {
                0 => self.base(),
                r => rounds
                    .get(r - 1)
                    .or(rounds.last())
                    .copied()
                    .unwrap_or_else(|| self.base()),
            },
        }
    }

    pub fn validate(&self) -> Result<(), PruneError> {
        if self.recursion_count == 0 {
            return Err(PruneError::ZeroRecursionCount);
        }
        let mut prev = self.radii(0);
        for round in 1..self.recursion_count {
            let cur = self.radii(round);
            if cur.depth > prev.depth || cur.children > prev.children || cur.siblings > prev.siblings {
                return Err(PruneError::NonMonotoneSchedule(round));
            }
            prev = cur;
        }
        Ok(())
    }
}

/// Default shrink schedule: `(d - t, ceil(mc / 2^t), ms - t)`, floored at
/// `(0, 1, 0)`. The children radius never exceeds its configured value, so
/// `mc = 0` stays 0 and round 0 is always the identity.
pub fn shrink_default(round: usize, cfg: &PrunerConfig) -> (usize, usize, usize) {
    let mc = cfg.max_children;
    let halved = match u32::try_from(round).ok().and_then(|r| 1usize.checked_shl(r)) {
        Some(div) => mc.div_ceil(div),
        None => usize::from(mc > 0),
    };
    (
        cfg.max_depth.saturating_sub(round),
        halved.max(1).min(mc),
        cfg.max_siblings.saturating_sub(round),
    )
}

/// Seed plus ancestors, bounded descendants and nearby siblings, as node indices.
pub fn expand_neighborhood(
    tree: &DomTree,
    seed: usize,
    depth: usize,
    children: usize,
    siblings: usize,
) -> Result<BTreeSet<usize>, PruneError> {
    let index = TreeIndex::new(tree);
    let pos = index.position(seed).ok_or(PruneError::UnknownNode(seed))?;
    let mut out = BTreeSet::new();
    expand_into(
        &index,
        pos,
        Radii {
            depth,
            children,
            siblings,
        },
        &mut out,
    );
    Ok(out)
}

fn expand_into(index: &TreeIndex<'_>, pos: usize, radii: Radii, out: &mut BTreeSet<usize>) {
    let id = |p: usize| index.nodes[p].node_index;
    out.insert(id(pos));

    let mut up = index.parent[pos];
    for _ in 0..radii.depth {
        let Some(p) = up else { break };
        out.insert(id(p));
        up = index.parent[p];
    }

    let mut frontier = alloc::vec![pos];
    for _ in 0..radii.depth {
        let mut next = Vec::new();
        for &p in &frontier {
            for &c in index.children[p].iter().take(radii.children) {
                out.insert(id(c));
                next.push(c);
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }

    if let Some(parent) = index.parent[pos] {
        let family = &index.children[parent];
        let at = family.iter().position(|&c| c == pos).unwrap_or(0);
        let lo = at.saturating_sub(radii.siblings);
        let hi = (at + radii.siblings).min(family.len() - 1);
        out.extend(family[lo..=hi].iter().map(|&c| id(c)));
    }
}

/// Union of all seed neighbourhoods over the configured rounds.
pub fn candidate_set(
    tree: &DomTree,
    kept: &BTreeSet<usize>,
    cfg: &PrunerConfig,
) -> Result<BTreeSet<usize>, PruneError> {
    cfg.validate()?;
    let index = TreeIndex::new(tree);
    let mut seeds: Vec<usize> = kept
        .iter()
        .map(|&k| index.position(k).ok_or(PruneError::UnknownNode(k)))
        .collect::<Result<_, _>>()?;
    let mut candidates = BTreeSet::new();
    for round in 0..cfg.recursion_count {
        let radii = cfg.radii(round);
        for &seed in &seeds {
            expand_into(&index, seed, radii, &mut candidates);
        }
        if cfg.reseed {
            seeds = candidates.iter().filter_map(|&n| index.position(n)).collect();
        }
    }
    Ok(candidates)
}

/// Prunes `tree` around the `kept` seeds.
pub fn prune(tree: &DomTree, kept: &BTreeSet<usize>, cfg: &PrunerConfig) -> Result<DomTree, PruneError> {
    let candidates = candidate_set(tree, kept, cfg)?;
    let mut root = tree.root.clone();
    let children = core::mem::take(&mut root.children);
    root.children = children.into_iter().flat_map(|c| collapse(c, &candidates)).collect();
    Ok(DomTree::from_numbered(
        root,
        tree.source_url.clone(),
        tree.title.clone(),
    ))
}

/// Post-order with children in order; equivalent to a reverse pre-order walk
/// because a node's fate depends only on its already-processed subtree.
fn collapse(mut node: DomNode, candidates: &BTreeSet<usize>) -> Vec<DomNode> {
    let children = core::mem::take(&mut node.children);
    node.children = children.into_iter().flat_map(|c| collapse(c, candidates)).collect();
    let worth_keeping = node.has_text() || node.has_attributes() || node.children.len() > 1;
    if candidates.contains(&node.node_index) && worth_keeping {
        alloc::vec![node]
    } else {
        node.children
    }
}

/// The agent-facing serialization of a pruned tree.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SimplifiedHtml {
    pub text: String,
    /// operable id → node index in the source tree.
    pub id_map: BTreeMap<u32, usize>,
    pub token_estimate: usize,
}

impl SimplifiedHtml {
    pub fn new(text: String, id_map: BTreeMap<u32, usize>) -> Self {
        let token_estimate = text.chars().count().div_ceil(4);
        SimplifiedHtml {
            text,
            id_map,
            token_estimate,
        }
    }
}

/// Attributes carried into the simplified markup, besides the operable `id`.
pub const ATTRIBUTE_WHITELIST: &[&str] = &[
    "href",
    "type",
    "value",
    "name",
    "placeholder",
    "alt",
    "title",
    "role",
    "selected",
    "checked",
    "aria-label",
];

const VOID_TAGS: &[&str] = &[
    "area", "base", "br", "col", "embed", "hr", "img", "input", "link", "meta", "source", "track", "wbr",
];

/// Serializes a (pruned) tree. Operable nodes get `id="<operable id>"`; a
/// source `id` attribute is never emitted so that every id in the output
/// resolves through `id_map`.
pub fn serialize_simplified(tree: &DomTree) -> SimplifiedHtml {
    let mut text = String::new();
    let mut id_map = BTreeMap::new();
    write_node(&tree.root, &mut text, &mut id_map);
    SimplifiedHtml::new(text, id_map)
}

fn write_node(node: &DomNode, out: &mut String, id_map: &mut BTreeMap<u32, usize>) {
    out.push('<');
    out.push_str(&node.tag);
    if let Some(id) = node.operable_id {
        id_map.insert(id, node.node_index);
        let _ = write!(out, " id=\"{id}\"");
    }
    for (name, value) in &node.attributes {
        if !ATTRIBUTE_WHITELIST.contains(&name.as_str()) {
            continue;
        }
        out.push(' ');
        out.push_str(name);
        if !value.is_empty() {
            out.push_str("=\"");
            escape_into(value, true, out);
            out.push('"');
        }
    }
    out.push('>');
    if VOID_TAGS.contains(&node.tag.as_str()) && node.children.is_empty() && !node.has_text() {
        return;
    }
    escape_into(&node.text, false, out);
    for child in &node.children {
        write_node(child, out, id_map);
    }
    out.push_str("</");
    out.push_str(&node.tag);
    out.push('>');
}

fn escape_into(s: &str, attribute: bool, out: &mut String) {
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' if !attribute => out.push_str("&gt;"),
            '"' if attribute => out.push_str("&quot;"),
            _ => out.push(ch),
        }
    }
}

/// Full pipeline for an operable-marked tree: seed, prune, serialize.
pub fn simplify(tree: &DomTree, cfg: &PrunerConfig) -> Result<SimplifiedHtml, PruneError> {
    let kept = crate::dom::kept_set(tree);
    let pruned = prune(tree, &kept, cfg)?;
    Ok(serialize_simplified(&pruned))
}
