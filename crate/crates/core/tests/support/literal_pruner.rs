//! Independent pruning oracle: a direct transcription of the published
//! pseudocode over a flat arena, plus tree-shape enumeration helpers.
//!
//! Departures from the literal text, each matching a documented resolution:
//! the root is never removed, and `update` halves `mc` without letting it grow
//! above its previous value. The round loop runs `t = 0..=rcc` as written.

#![allow(dead_code)]

use std::collections::BTreeSet;

use webnav_core::dom::{DomNode, DomTree};

/// `(node_index, children)`, the shape compared between implementations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shape(pub usize, pub Vec<Shape>);

pub fn shape_of(node: &DomNode) -> Shape {
    Shape(node.node_index, node.children.iter().map(shape_of).collect())
}

struct Arena {
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    text_or_attrib: Vec<bool>,
}

impl Arena {
    fn from_tree(tree: &DomTree) -> Self {
        let n = tree.len();
        let mut arena = Arena {
            parent: vec![None; n],
            children: vec![Vec::new(); n],
            text_or_attrib: vec![false; n],
        };
        for node in tree.iter() {
            let i = node.node_index;
            arena.text_or_attrib[i] = !node.text.is_empty() || !node.attributes.is_empty();
            for c in &node.children {
                arena.children[i].push(c.node_index);
                arena.parent[c.node_index] = Some(i);
            }
        }
        arena
    }

    fn get_ancestors(&self, node: usize, d: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = node;
        for _ in 0..d {
            match self.parent[cur] {
                Some(p) => {
                    out.push(p);
                    cur = p;
                }
                None => break,
            }
        }
        out
    }

    fn get_descendants(&self, node: usize, d: usize, mc: usize) -> Vec<usize> {
        let mut out = Vec::new();
        if d == 0 {
            return out;
        }
        for &c in self.children[node].iter().take(mc) {
            out.push(c);
            out.extend(self.get_descendants(c, d - 1, mc));
        }
        out
    }

    fn get_siblings(&self, node: usize, ms: usize) -> Vec<usize> {
        let Some(p) = self.parent[node] else { return Vec::new() };
        let family = &self.children[p];
        let at = family.iter().position(|&c| c == node).unwrap() as isize;
        family
            .iter()
            .enumerate()
            .filter(|(i, &c)| c != node && (*i as isize - at).abs() <= ms as isize)
            .map(|(_, &c)| c)
            .collect()
    }

    fn remove(&mut self, node: usize) {
        let p = self.parent[node].expect("root is never removed");
        let at = self.children[p].iter().position(|&c| c == node).unwrap();
        let orphans = std::mem::take(&mut self.children[node]);
        for &o in &orphans {
            self.parent[o] = Some(p);
        }
        self.children[p].splice(at..=at, orphans);
        self.parent[node] = None;
    }

    fn shape(&self, node: usize) -> Shape {
        Shape(node, self.children[node].iter().map(|&c| self.shape(c)).collect())
    }
}

fn update(d: usize, mc: usize, ms: usize) -> (usize, usize, usize) {
    let halved = mc.div_ceil(2);
    (d.saturating_sub(1), halved.max(1).min(mc), ms.saturating_sub(1))
}

/// The pruned shape, node indices referring to the input tree.
pub fn literal_prune(tree: &DomTree, kept: &BTreeSet<usize>, rcc: usize, d: usize, mc: usize, ms: usize) -> Shape {
    let mut arena = Arena::from_tree(tree);
    let root = tree.root.node_index;
    let (mut d, mut mc, mut ms) = (d, mc, ms);

    let mut nodes: Vec<usize> = Vec::new();
    for _t in 0..=rcc {
        for &id in kept {
            let node = id;
            nodes.push(node);
            nodes.extend(arena.get_ancestors(node, d));
            nodes.extend(arena.get_descendants(node, d, mc));
            nodes.extend(arena.get_siblings(node, ms));
        }
        (d, mc, ms) = update(d, mc, ms);
    }

    let document_order: Vec<usize> = tree.iter().map(|n| n.node_index).collect();
    for &node in document_order.iter().rev() {
        if node == root {
            continue;
        }
        let in_nodes = nodes.contains(&node);
        if !in_nodes || !(arena.text_or_attrib[node] || arena.children[node].len() > 1) {
            arena.remove(node);
        }
    }
    arena.shape(root)
}

/// Calls `f` with every ordered rooted tree of exactly `n` nodes, as a
/// nested shape of plain `div`s.
pub fn for_each_shape(n: usize, f: &mut dyn FnMut(DomNode)) {
    assert!(n >= 1);
    for_each_forest(n - 1, &mut |forest| f(DomNode::new("div").with_children(forest)));
}

fn for_each_forest(n: usize, f: &mut dyn FnMut(Vec<DomNode>)) {
    if n == 0 {
        f(Vec::new());
        return;
    }
    for first in 1..=n {
        for_each_shape(first, &mut |head| {
            for_each_forest(n - first, &mut |tail| {
                let mut forest = Vec::with_capacity(tail.len() + 1);
                forest.push(head.clone());
                forest.extend(tail);
                f(forest);
            });
        });
    }
}

/// Number of ordered rooted trees with `n` nodes (Catalan(n - 1)).
pub fn shape_count(n: usize) -> u64 {
    let m = (n - 1) as u64;
    let mut c = 1u64;
    for k in 0..m {
        c = c * 2 * (2 * k + 1) / (k + 2);
    }
    c
}
