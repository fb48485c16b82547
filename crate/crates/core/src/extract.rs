//! CVE identifier and price extraction over normalized posts.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{Post, Thread};
use crate::error::{Error, Result};

/// Longest digit suffix accepted in a CVE id. Real ids use 4-7 digits;
/// longer runs are treated as noise and rejected outright.
pub const MAX_CVE_SUFFIX_DIGITS: usize = 7;

/// Price extraction rule: the currency marker must sit within this many
/// whitespace tokens of the amount.
pub const PRICE_MARKER_WINDOW: usize = 2;

/// Accepted price range in USD; amounts outside are discarded as noise.
pub const PRICE_RANGE: (f64, f64) = (1.0, 100_000.0);

/// One textual occurrence of a CVE id inside a post.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CveMention {
    /// Uppercased `CVE-YYYY-NNNN+` form.
    pub cve_id: String,
    pub post_id: String,
    pub thread_id: String,
    /// Offset of the match in Unicode scalar values into `clean_content`.
    pub char_offset: usize,
}

/// A dollar amount with a nearby currency marker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceMention {
    pub amount: f64,
    pub post_id: String,
    /// Up to 40 characters of context on each side of the amount.
    pub context: String,
}

fn cve_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| Regex::new(r"(?i)cve-[0-9]{4}-[0-9]{4,}").unwrap())
}

/// Find every CVE id in a post, case-insensitively, normalized to uppercase.
/// Non-overlapping matches; repeated ids are kept as separate mentions.
pub fn extract_cve_mentions(post: &Post) -> Vec<CveMention> {
    let text = &post.clean_content;
    let mut mentions = Vec::new();
    for m in cve_pattern().find_iter(text) {
        let digits = m.as_str().len() - "cve-xxxx-".len();
        if digits > MAX_CVE_SUFFIX_DIGITS {
            continue;
        }
        mentions.push((m.start(), m.as_str().to_ascii_uppercase()));
    }

    // Convert byte offsets to char offsets in one pass.
    let mut out = Vec::with_capacity(mentions.len());
    let mut iter = mentions.into_iter().peekable();
    for (char_idx, (byte_idx, _)) in text.char_indices().enumerate() {
        while let Some((start, _)) = iter.peek() {
            if *start == byte_idx {
                let (_, cve_id) = iter.next().unwrap();
                out.push(CveMention {
                    cve_id,
                    post_id: post.post_id.clone(),
                    thread_id: post.thread_id.clone(),
                    char_offset: char_idx,
                });
            } else {
                break;
            }
        }
        if iter.peek().is_none() {
            break;
        }
    }
    out
}

/// Threads containing at least one mention, full post lists retained.
pub fn filter_citing_threads(threads: &[Thread], mentions: &[CveMention]) -> Vec<Thread> {
    let citing: HashSet<&str> = mentions.iter().map(|m| m.thread_id.as_str()).collect();
    threads
        .iter()
        .filter(|t| citing.contains(t.thread_id.as_str()))
        .cloned()
        .collect()
}

/// Deduplicated id set over a mention list.
pub fn unique_cves(mentions: &[CveMention]) -> BTreeSet<String> {
    mentions.iter().map(|m| m.cve_id.clone()).collect()
}

struct TokenSpan<'a> {
    text: &'a str,
    char_start: usize,
    char_end: usize,
}

fn token_spans(text: &str) -> Vec<TokenSpan<'_>> {
    let mut spans = Vec::new();
    let mut start_byte = None;
    let mut start_char = 0;
    let mut char_idx = 0;
    for (byte_idx, ch) in text.char_indices() {
        if ch.is_whitespace() {
            if let Some(sb) = start_byte.take() {
                spans.push(TokenSpan {
                    text: &text[sb..byte_idx],
                    char_start: start_char,
                    char_end: char_idx,
                });
            }
        } else if start_byte.is_none() {
            start_byte = Some(byte_idx);
            start_char = char_idx;
        }
        char_idx += 1;
    }
    if let Some(sb) = start_byte {
        spans.push(TokenSpan {
            text: &text[sb..],
            char_start: start_char,
            char_end: char_idx,
        });
    }
    spans
}

/// Trim edge punctuation from a token, keeping `$` so markers and prefixed
/// amounts survive.
fn strip_edges(token: &str) -> &str {
    token.trim_matches(|c: char| !c.is_alphanumeric() && c != '$')
}

fn is_marker(token: &str) -> bool {
    let t = strip_edges(token);
    t == "$" || t.eq_ignore_ascii_case("usd") || t.eq_ignore_ascii_case("dollars")
}

/// Parse a token as a dollar amount. Returns `(value, had_dollar_sign)`.
fn parse_amount(token: &str) -> Option<(f64, bool)> {
    let t = strip_edges(token);
    let (t, marked) = if let Some(rest) = t.strip_prefix('$') {
        (rest, true)
    } else if let Some(rest) = t.strip_suffix('$') {
        (rest, true)
    } else {
        (t, false)
    };
    if t.is_empty() || !t.starts_with(|c: char| c.is_ascii_digit()) {
        return None;
    }
    let mut seen_dot = false;
    for c in t.chars() {
        match c {
            '0'..='9' | ',' => {}
            '.' if !seen_dot => seen_dot = true,
            _ => return None,
        }
    }
    let cleaned: String = t.chars().filter(|c| *c != ',').collect();
    cleaned.parse::<f64>().ok().map(|v| (v, marked))
}

fn char_slice(text: &str, start: usize, end: usize) -> String {
    text.chars().skip(start).take(end.saturating_sub(start)).collect()
}

/// Amounts with an explicit currency marker within [`PRICE_MARKER_WINDOW`]
/// tokens, restricted to [`PRICE_RANGE`].
pub fn extract_price_mentions(post: &Post) -> Vec<PriceMention> {
    let text = &post.clean_content;
    let spans = token_spans(text);
    let mut out = Vec::new();
    for (i, span) in spans.iter().enumerate() {
        let Some((amount, inline_marker)) = parse_amount(span.text) else {
            continue;
        };
        if !(PRICE_RANGE.0..=PRICE_RANGE.1).contains(&amount) {
            continue;
        }
        let lo = i.saturating_sub(PRICE_MARKER_WINDOW);
        let hi = (i + PRICE_MARKER_WINDOW).min(spans.len().saturating_sub(1));
        let nearby_marker = (lo..=hi).any(|j| j != i && is_marker(spans[j].text));
        if inline_marker || nearby_marker {
            let ctx_start = span.char_start.saturating_sub(40);
            let ctx_end = span.char_end + 40;
            out.push(PriceMention {
                amount,
                post_id: post.post_id.clone(),
                context: char_slice(text, ctx_start, ctx_end),
            });
        }
    }
    out
}

/// Export mentions as `cve_id,post_id,thread_id,char_offset`.
pub fn write_mentions_csv(path: &Path, mentions: &[CveMention]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::invalid(e.to_string()))?;
    w.write_record(["cve_id", "post_id", "thread_id", "char_offset"])
        .map_err(|e| Error::invalid(e.to_string()))?;
    for m in mentions {
        w.write_record([
            m.cve_id.as_str(),
            m.post_id.as_str(),
            m.thread_id.as_str(),
            &m.char_offset.to_string(),
        ])
        .map_err(|e| Error::invalid(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_mentions_csv(path: &Path) -> Result<Vec<CveMention>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::invalid(e.to_string()))?;
    let mut out = Vec::new();
    for (i, rec) in reader.deserialize::<CveMention>().enumerate() {
        let m = rec.map_err(|e| Error::record(path, i + 2, e.to_string()))?;
        out.push(m);
    }
    Ok(out)
}

/// Export prices as `amount_usd,post_id,context`.
pub fn write_prices_csv(path: &Path, prices: &[PriceMention]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::invalid(e.to_string()))?;
    w.write_record(["amount_usd", "post_id", "context"])
        .map_err(|e| Error::invalid(e.to_string()))?;
    for p in prices {
        w.write_record([&p.amount.to_string(), p.post_id.as_str(), p.context.as_str()])
            .map_err(|e| Error::invalid(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
