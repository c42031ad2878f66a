//! Lenient HTML scanning on top of the html5ever tokenizer.
//!
//! No tree is built. Text is grouped by block-level tags, and anchors are
//! collected in document order.

use std::cell::RefCell;

use html5ever::tendril::StrTendril;
use html5ever::tokenizer::states::RawKind;
use html5ever::tokenizer::{
    BufferQueue, Tag, TagKind, Token, TokenSink, TokenSinkResult, Tokenizer, TokenizerOpts,
};
use url::Url;

const BLOCK_TAGS: &[&str] = &[
    "address", "article", "aside", "blockquote", "body", "br", "caption", "dd", "details", "div",
    "dl", "dt", "fieldset", "figcaption", "figure", "footer", "form", "h1", "h2", "h3", "h4", "h5",
    "h6", "header", "hr", "html", "li", "main", "nav", "ol", "p", "pre", "section", "summary",
    "table", "tbody", "td", "tfoot", "th", "thead", "tr", "ul",
];

/// Elements whose content is never visible text.
const SKIP_TAGS: &[&str] = &["head", "noscript", "script", "style", "template", "title"];

#[derive(Debug, Default)]
struct ScanState {
    blocks: Vec<String>,
    current: String,
    hrefs: Vec<String>,
    skip: Vec<String>,
}

impl ScanState {
    fn flush(&mut self) {
        let block = self.current.split_whitespace().collect::<Vec<_>>().join(" ");
        if !block.is_empty() {
            self.blocks.push(block);
        }
        self.current.clear();
    }

    fn tag(&mut self, tag: Tag) -> TokenSinkResult<()> {
        let name: &str = &tag.name;
        match tag.kind {
            TagKind::StartTag => {
                if name == "body" {
                    // an unclosed <head> must not swallow the document
                    self.skip.retain(|t| t != "head");
                }
                if self.skip.is_empty() && name == "a" {
                    if let Some(a) = tag.attrs.iter().find(|a| &*a.name.local == "href") {
                        self.hrefs.push(a.value.to_string());
                    }
                }
                if BLOCK_TAGS.contains(&name) {
                    self.flush();
                }
                if SKIP_TAGS.contains(&name) && !tag.self_closing {
                    self.skip.push(name.to_string());
                    return match name {
                        "script" => TokenSinkResult::RawData(RawKind::ScriptData),
                        "style" | "noscript" => TokenSinkResult::RawData(RawKind::Rawtext),
                        "title" => TokenSinkResult::RawData(RawKind::Rcdata),
                        _ => TokenSinkResult::Continue,
                    };
                }
            }
            TagKind::EndTag => {
                if let Some(pos) = self.skip.iter().rposition(|t| t == name) {
                    self.skip.truncate(pos);
                }
                if BLOCK_TAGS.contains(&name) {
                    self.flush();
                }
            }
        }
        TokenSinkResult::Continue
    }
}

struct Sink(RefCell<ScanState>);

impl TokenSink for Sink {
    type Handle = ();

    fn process_token(&self, token: Token, _line: u64) -> TokenSinkResult<()> {
        let mut st = self.0.borrow_mut();
        match token {
            Token::TagToken(tag) => return st.tag(tag),
            Token::CharacterTokens(text) if st.skip.is_empty() => st.current.push_str(&text),
            Token::EOFToken => st.flush(),
            _ => {}
        }
        TokenSinkResult::Continue
    }
}

/// Visible text blocks and raw `href` values of one document.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScannedHtml {
    pub blocks: Vec<String>,
    pub hrefs: Vec<String>,
}

pub fn scan_html(html: &str) -> ScannedHtml {
    let tokenizer = Tokenizer::new(Sink(RefCell::new(ScanState::default())), TokenizerOpts::default());
    let input = BufferQueue::default();
    input.push_back(StrTendril::from_slice(html));
    let _ = tokenizer.feed(&input);
    tokenizer.end();
    let st = tokenizer.sink.0.into_inner();
    ScannedHtml {
        blocks: st.blocks,
        hrefs: st.hrefs,
    }
}

/// Visible text grouped by block-level elements, in document order.
/// Script, style, template and head content is dropped; entities are decoded.
pub fn extract_text(html: &str) -> Vec<String> {
    scan_html(html).blocks
}

/// Absolute URL for `href`, or `None` when it does not resolve to http(s).
pub fn resolve_link(href: &str, base: &Url) -> Option<Url> {
    let mut url = base.join(href.trim()).ok()?;
    if !matches!(url.scheme(), "http" | "https") || url.host_str().is_none() {
        return None;
    }
    url.set_fragment(None);
    Some(url)
}

pub(crate) fn resolve_links(hrefs: &[String], base: &Url, same_host_only: bool) -> Vec<Url> {
    let mut out: Vec<Url> = Vec::new();
    for href in hrefs {
        let Some(url) = resolve_link(href, base) else { continue };
        if same_host_only && url.host_str() != base.host_str() {
            continue;
        }
        if !out.contains(&url) {
            out.push(url);
        }
    }
    out
}

/// Anchor targets as deduplicated absolute URLs in document order. Fragments
/// are stripped and non-http(s) schemes dropped; with `same_host_only`, links
/// to other hosts are dropped too.
pub fn extract_links(html: &str, base: &Url, same_host_only: bool) -> Vec<Url> {
    resolve_links(&scan_html(html).hrefs, base, same_host_only)
}
