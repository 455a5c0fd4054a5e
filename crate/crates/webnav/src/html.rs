//! Lenient HTML5 parsing into a [`DomTree`].
//!
//! Parsing follows the browser tree-construction rules (via `html5ever`), so
//! malformed markup recovers the way a browser would. `head`, `script`,
//! `style`, `noscript` and `template` subtrees are dropped along with comments;
//! the document title is kept on the tree.

use ego_tree::NodeRef;
use scraper::{Html, Node};
use webnav_core::dom::{DomNode, DomTree};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HtmlError {
    #[error("empty document")]
    EmptyDocument,
}

const SKIPPED: &[&str] = &["head", "script", "style", "noscript", "template"];

pub fn parse_html(text: &str) -> Result<DomTree, HtmlError> {
    parse_html_at(text, "")
}

/// As [`parse_html`], recording `url` as the tree's source.
pub fn parse_html_at(text: &str, url: &str) -> Result<DomTree, HtmlError> {
    if text.trim().is_empty() {
        return Err(HtmlError::EmptyDocument);
    }
    let document = Html::parse_document(text);
    let root = document.root_element();
    let title = document
        .select(&scraper::Selector::parse("head > title, title").expect("static selector"))
        .next()
        .map(|t| DomNode::new("title").with_text(&t.text().collect::<String>()).text)
        .filter(|t| !t.is_empty());
    let node = convert(*root, Vec::new());
    Ok(DomTree::new(node).with_url(url).with_title(title))
}

fn convert(node: NodeRef<'_, Node>, locator: Vec<u32>) -> DomNode {
    let Node::Element(element) = node.value() else {
        unreachable!("only elements are converted")
    };
    let mut out = DomNode::new(element.name());
    for (name, value) in element.attrs() {
        out = out.with_attr(name, value);
    }
    let mut own_text = String::new();
    let mut element_position = 0u32;
    for child in node.children() {
        match child.value() {
            Node::Text(t) => {
                own_text.push_str(t);
                own_text.push(' ');
            }
            Node::Element(e) => {
                let position = element_position;
                element_position += 1;
                if SKIPPED.contains(&e.name()) {
                    continue;
                }
                let mut path = locator.clone();
                path.push(position);
                out.children.push(convert(child, path));
            }
            _ => {}
        }
    }
    out = out.with_text(&own_text);
    out.locator = locator;
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tags(tree: &DomTree) -> Vec<String> {
        tree.iter().map(|n| n.tag.clone()).collect()
    }

    #[test]
    fn minimal_document() {
        let tree = parse_html("<html><body><p>hi</p></body></html>").unwrap();
        assert_eq!(tags(&tree), ["html", "body", "p"]);
        assert_eq!(tree.root.node_index, 0);
        assert_eq!(tree.node(2).unwrap().text, "hi");
    }

    #[test]
    fn unclosed_paragraphs_become_siblings() {
        let tree = parse_html("<p>a<p>b").unwrap();
        let body = &tree.root.children[0];
        assert_eq!(body.tag, "body");
        let texts: Vec<_> = body
            .children
            .iter()
            .map(|p| (p.tag.as_str(), p.text.as_str()))
            .collect();
        assert_eq!(texts, [("p", "a"), ("p", "b")]);
    }

    #[test]
    fn empty_input() {
        assert_eq!(parse_html(""), Err(HtmlError::EmptyDocument));
        assert_eq!(parse_html(" \n\t"), Err(HtmlError::EmptyDocument));
    }

    #[test]
    fn scripts_styles_and_comments_are_dropped() {
        let tree = parse_html(
            "<html><head><title> My  Page </title><style>p{}</style></head>\
             <body><!-- note --><script>var x = 1;</script><p>  keep\n  me </p><noscript>no</noscript></body></html>",
        )
        .unwrap();
        assert_eq!(tags(&tree), ["html", "body", "p"]);
        assert_eq!(tree.title.as_deref(), Some("My Page"));
        assert_eq!(tree.node(2).unwrap().text, "keep me");
    }

    #[test]
    fn locators_count_every_element_child() {
        let tree =
            parse_html("<html><head></head><body><script></script><div><a href=x>x</a></div></body></html>").unwrap();
        let a = tree.iter().find(|n| n.tag == "a").unwrap();
        // body is child 1 of html (after head); div is child 1 of body (after script)
        assert_eq!(a.locator, [1, 1, 0]);
        assert_eq!(tree.root.locator, Vec::<u32>::new());
    }

    #[test]
    fn attributes_keep_source_order() {
        let tree = parse_html("<button type=submit name=go aria-label=Go>Go</button>").unwrap();
        let b = tree.iter().find(|n| n.tag == "button").unwrap();
        let names: Vec<_> = b.attributes.iter().map(|(k, _)| k.as_str()).collect();
        assert_eq!(names, ["type", "name", "aria-label"]);
    }

    #[test]
    fn parsing_is_deterministic() {
        let src = "<div><span>a</span><table><td>cell</table>text<b>bold";
        assert_eq!(parse_html(src), parse_html(src));
    }
}
