//! Forum dump ingestion and thread assembly.
//!
//! A dump is a flat list of posts (JSONL or CSV, one record per post). Posts
//! are normalized on ingest and then grouped into [`Thread`]s, each carrying a
//! single `document` string used by every downstream consumer.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::OnceLock;

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One forum post, normalized.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Post {
    pub post_id: String,
    pub thread_id: String,
    pub board: String,
    pub forum: String,
    pub author: String,
    pub created_at: DateTime<Utc>,
    pub subject: String,
    pub raw_content: String,
    pub clean_content: String,
}

impl Post {
    /// Calendar day of the post, used for delay arithmetic.
    pub fn date(&self) -> NaiveDate {
        self.created_at.date_naive()
    }
}

/// All posts under one title, in chronological order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Thread {
    pub thread_id: String,
    pub title: String,
    pub board: String,
    pub forum: String,
    pub posts: Vec<Post>,
    /// Title plus the posts' clean content, newline-joined in post order.
    pub document: String,
}

/// Supported dump layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

/// The wire schema of a dump record. `created_at` stays a string until the
/// timestamp is validated.
#[derive(Debug, Deserialize)]
struct DumpRecord {
    post_id: String,
    thread_id: String,
    board: String,
    forum: String,
    author: String,
    created_at: String,
    #[serde(default)]
    subject: String,
    raw_content: String,
}

/// A record that failed to parse, with the 1-based line it came from.
#[derive(Debug, Clone, Serialize)]
pub struct SkippedRecord {
    pub line: usize,
    pub reason: String,
}

/// Outcome of [`ingest_corpus`]: the well-formed posts plus everything skipped.
#[derive(Debug)]
pub struct IngestReport {
    pub posts: Vec<Post>,
    pub skipped: Vec<SkippedRecord>,
}

/// Switches for [`normalize_text_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct NormalizeOptions {
    /// Drop the text inside quote blocks instead of only the wrappers.
    pub strip_quoted_text: bool,
}

fn tag_patterns() -> &'static (Regex, Regex, Regex, Regex) {
    static PATTERNS: OnceLock<(Regex, Regex, Regex, Regex)> = OnceLock::new();
    PATTERNS.get_or_init(|| {
        (
            // HTML-style tags and BBCode wrappers such as [quote=user] / [/b].
            Regex::new(r"<[^<>]*>").unwrap(),
            Regex::new(r"\[/?[a-zA-Z][^\[\]]*\]").unwrap(),
            Regex::new(r"(?i)\b(?:https?://|www\.)\S+").unwrap(),
            // Quote blocks with their contents, for strip_quoted_text.
            Regex::new(r"(?is)(?:\[quote[^\[\]]*\].*?\[/quote\]|<blockquote[^<>]*>.*?</blockquote>)").unwrap(),
        )
    })
}

/// Strip markup tags, quote-block wrappers, and URLs, then collapse
/// whitespace. Case is preserved. Idempotent.
pub fn normalize_text(raw: &str) -> String {
    normalize_text_with(raw, NormalizeOptions::default())
}

pub fn normalize_text_with(raw: &str, opts: NormalizeOptions) -> String {
    let (html, bbcode, url, quoted) = tag_patterns();
    let mut text = raw.to_string();
    if opts.strip_quoted_text {
        // Repeat so nested quote blocks collapse too.
        loop {
            let next = quoted.replace_all(&text, " ").into_owned();
            if next == text {
                break;
            }
            text = next;
        }
    }
    // Strip to a fixpoint: removing one tag can expose another
    // (e.g. "<<b>>" leaves "< >" after the inner tag goes).
    loop {
        let next = html.replace_all(&text, " ");
        let next = bbcode.replace_all(&next, " ");
        let next = url.replace_all(&next, " ").into_owned();
        if next == text {
            break;
        }
        text = next;
    }
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn parse_timestamp(raw: &str) -> Option<DateTime<Utc>> {
    if let Ok(ts) = DateTime::parse_from_rfc3339(raw) {
        return Some(ts.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(naive.and_utc());
        }
    }
    if let Ok(date) = NaiveDate::parse_from_str(raw, "%Y-%m-%d") {
        return Some(date.and_hms_opt(0, 0, 0)?.and_utc());
    }
    None
}

fn record_to_post(rec: DumpRecord, opts: NormalizeOptions) -> std::result::Result<Post, String> {
    if rec.post_id.is_empty() {
        return Err("empty post_id".into());
    }
    let created_at = parse_timestamp(&rec.created_at)
        .ok_or_else(|| format!("unparseable created_at {:?}", rec.created_at))?;
    let clean_content = normalize_text_with(&rec.raw_content, opts);
    Ok(Post {
        post_id: rec.post_id,
        thread_id: rec.thread_id,
        board: rec.board,
        forum: rec.forum,
        author: rec.author,
        created_at,
        subject: rec.subject,
        raw_content: rec.raw_content,
        clean_content,
    })
}

/// Read a dump file into posts. Malformed records are skipped and reported;
/// a duplicate `post_id` is fatal.
pub fn ingest_corpus(path: &Path, format: CorpusFormat) -> Result<IngestReport> {
    ingest_corpus_with(path, format, NormalizeOptions::default())
}

pub fn ingest_corpus_with(
    path: &Path,
    format: CorpusFormat,
    opts: NormalizeOptions,
) -> Result<IngestReport> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut posts = Vec::new();
    let mut skipped = Vec::new();
    let mut seen = HashSet::new();

    let mut handle = |parsed: std::result::Result<DumpRecord, String>, line: usize| -> Result<()> {
        match parsed.and_then(|rec| record_to_post(rec, opts)) {
            Ok(post) => {
                if !seen.insert(post.post_id.clone()) {
                    return Err(Error::record(
                        path,
                        line,
                        format!("duplicate post_id {:?}", post.post_id),
                    ));
                }
                posts.push(post);
            }
            Err(reason) => skipped.push(SkippedRecord { line, reason }),
        }
        Ok(())
    };

    match format {
        CorpusFormat::Jsonl => {
            for (idx, line) in BufReader::new(file).lines().enumerate() {
                let line_no = idx + 1;
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let parsed =
                    serde_json::from_str::<DumpRecord>(&line).map_err(|e| e.to_string());
                handle(parsed, line_no)?;
            }
        }
        CorpusFormat::Csv => {
            let mut reader = csv::Reader::from_reader(file);
            let mut raw = csv::StringRecord::new();
            let headers = reader
                .headers()
                .map_err(|e| Error::record(path, 1, format!("invalid CSV header: {e}")))?
                .clone();
            loop {
                match reader.read_record(&mut raw) {
                    Ok(false) => break,
                    Ok(true) => {
                        let line_no = raw.position().map(|p| p.line() as usize).unwrap_or(0);
                        let parsed = raw
                            .deserialize::<DumpRecord>(Some(&headers))
                            .map_err(|e| e.to_string());
                        handle(parsed, line_no)?;
                    }
                    Err(e) => {
                        let line_no = e.position().map(|p| p.line() as usize).unwrap_or(0);
                        handle(Err(e.to_string()), line_no)?;
                    }
                }
            }
        }
    }

    Ok(IngestReport { posts, skipped })
}

/// Group posts into threads. Posts sort by `(created_at, post_id)`; the title
/// comes from the earliest post's subject unless `titles` provides one.
pub fn assemble_threads(posts: Vec<Post>) -> Result<Vec<Thread>> {
    assemble_threads_titled(posts, &BTreeMap::new())
}

pub fn assemble_threads_titled(
    posts: Vec<Post>,
    titles: &BTreeMap<String, String>,
) -> Result<Vec<Thread>> {
    let mut groups: BTreeMap<String, Vec<Post>> = BTreeMap::new();
    for post in posts {
        if post.thread_id.is_empty() {
            return Err(Error::invalid(format!(
                "post {:?} has an empty thread_id",
                post.post_id
            )));
        }
        groups.entry(post.thread_id.clone()).or_default().push(post);
    }

    let mut threads = Vec::with_capacity(groups.len());
    for (thread_id, mut posts) in groups {
        posts.sort_by(|a, b| {
            a.created_at
                .cmp(&b.created_at)
                .then_with(|| a.post_id.cmp(&b.post_id))
        });
        let first = &posts[0];
        let title = titles
            .get(&thread_id)
            .cloned()
            .unwrap_or_else(|| first.subject.clone());
        let mut document = title.clone();
        for post in &posts {
            document.push('\n');
            document.push_str(&post.clean_content);
        }
        threads.push(Thread {
            thread_id,
            title,
            board: first.board.clone(),
            forum: first.forum.clone(),
            posts,
            document,
        });
    }
    Ok(threads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn post(post_id: &str, thread_id: &str, ts: &str, subject: &str, content: &str) -> Post {
        Post {
            post_id: post_id.into(),
            thread_id: thread_id.into(),
            board: "b".into(),
            forum: "f".into(),
            author: "a".into(),
            created_at: parse_timestamp(ts).unwrap(),
            subject: subject.into(),
            raw_content: content.into(),
            clean_content: normalize_text(content),
        }
    }

    fn jsonl_line(post_id: &str, thread_id: &str, ts: &str, content: &str) -> String {
        format!(
            r#"{{"post_id":"{post_id}","thread_id":"{thread_id}","board":"b","forum":"f","author":"a","created_at":"{ts}","subject":"s","raw_content":"{content}"}}"#
        )
    }

    fn write_temp(lines: &[String]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for line in lines {
            writeln!(f, "{line}").unwrap();
        }
        f
    }

    #[test]
    fn ingest_well_formed_jsonl() {
        let f = write_temp(&[
            jsonl_line("p1", "t1", "2019-01-01T00:00:00Z", "hello"),
            jsonl_line("p2", "t1", "2019-01-02T00:00:00Z", "world"),
            jsonl_line("p3", "t2", "2019-01-03T00:00:00Z", "again"),
        ]);
        let report = ingest_corpus(f.path(), CorpusFormat::Jsonl).unwrap();
        assert_eq!(report.posts.len(), 3);
        assert!(report.skipped.is_empty());
    }

    #[test]
    fn ingest_skips_bad_line_with_warning() {
        let f = write_temp(&[
            jsonl_line("p1", "t1", "2019-01-01T00:00:00Z", "a"),
            jsonl_line("p2", "t1", "2019-01-01T00:00:00Z", "b"),
            "{not json".to_string(),
            jsonl_line("p3", "t1", "2019-01-01T00:00:00Z", "c"),
            jsonl_line("p4", "t1", "2019-01-01T00:00:00Z", "d"),
        ]);
        let report = ingest_corpus(f.path(), CorpusFormat::Jsonl).unwrap();
        assert_eq!(report.posts.len(), 4);
        assert_eq!(report.skipped.len(), 1);
        assert_eq!(report.skipped[0].line, 3);
    }

    #[test]
    fn ingest_rejects_duplicate_post_id() {
        let f = write_temp(&[
            jsonl_line("p1", "t1", "2019-01-01T00:00:00Z", "a"),
            jsonl_line("p1", "t1", "2019-01-02T00:00:00Z", "b"),
        ]);
        let err = ingest_corpus(f.path(), CorpusFormat::Jsonl).unwrap_err();
        assert!(err.to_string().contains("duplicate post_id"));
    }

    #[test]
    fn ingest_csv_matches_jsonl() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            f,
            "post_id,thread_id,board,forum,author,created_at,subject,raw_content"
        )
        .unwrap();
        writeln!(f, "p1,t1,b,f,a,2019-01-01T00:00:00Z,s,\"hi, there\"").unwrap();
        writeln!(f, "p2,t1,b,f,a,2019-01-02T00:00:00Z,s,plain").unwrap();
        let report = ingest_corpus(f.path(), CorpusFormat::Csv).unwrap();
        assert_eq!(report.posts.len(), 2);
        assert_eq!(report.posts[0].clean_content, "hi, there");
    }

    #[test]
    fn ingest_thousand_records_matches_line_oracle() {
        // Oracle: an independent line-by-line serde parse of the same file.
        let mut lines = Vec::new();
        for i in 0..1000 {
            lines.push(jsonl_line(
                &format!("p{i}"),
                &format!("t{}", i % 97),
                "2018-05-05T12:00:00Z",
                &format!("post number {i}"),
            ));
        }
        let f = write_temp(&lines);
        let report = ingest_corpus(f.path(), CorpusFormat::Jsonl).unwrap();

        let raw = std::fs::read_to_string(f.path()).unwrap();
        let oracle: HashSet<(String, String)> = raw
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let v: serde_json::Value = serde_json::from_str(l).unwrap();
                (
                    v["post_id"].as_str().unwrap().to_string(),
                    v["raw_content"].as_str().unwrap().to_string(),
                )
            })
            .collect();
        let got: HashSet<(String, String)> = report
            .posts
            .iter()
            .map(|p| (p.post_id.clone(), p.raw_content.clone()))
            .collect();
        assert_eq!(got, oracle);
        assert!(report.skipped.is_empty());
    }

    #[test]
    fn normalize_empty() {
        assert_eq!(normalize_text(""), "");
    }

    #[test]
    fn normalize_strips_tags_and_collapses() {
        assert_eq!(normalize_text("<b>free  FUD</b>"), "free FUD");
        assert_eq!(normalize_text("[quote=bob]crypter[/quote] for sale"), "crypter for sale");
        assert_eq!(normalize_text("see https://evil.example/kit now"), "see now");
    }

    #[test]
    fn normalize_can_strip_quoted_text() {
        let opts = NormalizeOptions { strip_quoted_text: true };
        assert_eq!(
            normalize_text_with("[quote=bob]old stuff[/quote] new reply", opts),
            "new reply"
        );
    }

    #[test]
    fn normalize_output_has_no_tags_by_scan_oracle() {
        let tagged = Regex::new(r"<[^<>]*>|\[/?[a-zA-Z][^\[\]]*\]").unwrap();
        for i in 0..200 {
            let raw = format!(
                "<div>post {i}</div> [b]bold[/b] [url=http://x{i}.test]link[/url] plain {i}"
            );
            let clean = normalize_text(&raw);
            assert!(!tagged.is_match(&clean), "tags left in {clean:?}");
        }
    }

    #[test]
    fn assemble_groups_and_orders() {
        let posts = vec![
            post("p2", "t1", "2019-01-02T00:00:00Z", "ignored", "second"),
            post("p1", "t1", "2019-01-01T00:00:00Z", "the title", "first"),
        ];
        let threads = assemble_threads(posts).unwrap();
        assert_eq!(threads.len(), 1);
        assert_eq!(threads[0].title, "the title");
        assert_eq!(threads[0].document, "the title\nfirst\nsecond");
    }

    #[test]
    fn assemble_rejects_empty_thread_id() {
        let posts = vec![post("p1", "", "2019-01-01T00:00:00Z", "s", "x")];
        assert!(assemble_threads(posts).is_err());
    }

    #[test]
    fn assemble_order_matches_sort_oracle() {
        let mut posts = Vec::new();
        let stamps = [
            "2019-03-01T08:00:00Z",
            "2019-01-01T08:00:00Z",
            "2019-02-01T08:00:00Z",
            "2019-01-01T08:00:00Z", // tie, broken by post_id
        ];
        for (i, ts) in stamps.iter().enumerate() {
            posts.push(post(&format!("p{i}"), "t1", ts, "s", &format!("c{i}")));
        }
        let expected: Vec<String> = {
            let mut pairs: Vec<(DateTime<Utc>, String)> = posts
                .iter()
                .map(|p| (p.created_at, p.post_id.clone()))
                .collect();
            pairs.sort();
            pairs.into_iter().map(|(_, id)| id).collect()
        };
        let threads = assemble_threads(posts).unwrap();
        let got: Vec<String> = threads[0].posts.iter().map(|p| p.post_id.clone()).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn assemble_corpus_shaped_like_hackforums() {
        // 3,037 posts in 1,162 threads: 713 threads of 3 posts, 449 of 2.
        let mut posts = Vec::new();
        let mut n = 0;
        for t in 0..1162 {
            let per = if t < 713 { 3 } else { 2 };
            for p in 0..per {
                posts.push(post(
                    &format!("p{n}"),
                    &format!("t{t:04}"),
                    "2015-06-01T00:00:00Z",
                    "subj",
                    &format!("body {t} {p}"),
                ));
                n += 1;
            }
        }
        assert_eq!(n, 3037);
        let threads = assemble_threads(posts).unwrap();
        assert_eq!(threads.len(), 1162);
        let total: usize = threads.iter().map(|t| t.posts.len()).sum();
        assert_eq!(total, 3037);
    }

    #[test]
    fn assemble_is_deterministic() {
        let make = || {
            vec![
                post("p1", "t1", "2019-01-01T00:00:00Z", "s", "<b>one</b>"),
                post("p2", "t2", "2019-01-05T00:00:00Z", "s2", "two"),
                post("p3", "t1", "2019-01-03T00:00:00Z", "s", "three"),
            ]
        };
        let a = assemble_threads(make()).unwrap();
        let b = assemble_threads(make()).unwrap();
        let docs_a: Vec<&str> = a.iter().map(|t| t.document.as_str()).collect();
        let docs_b: Vec<&str> = b.iter().map(|t| t.document.as_str()).collect();
        assert_eq!(docs_a, docs_b);
    }

    use std::collections::HashSet;

    proptest! {
        #[test]
        fn normalize_is_idempotent(raw in ".{0,200}") {
            let once = normalize_text(&raw);
            prop_assert_eq!(normalize_text(&once), once);
        }

        #[test]
        fn assemble_is_a_partition(ids in proptest::collection::vec((0usize..20, 0usize..6), 1..60)) {
            let posts: Vec<Post> = ids
                .iter()
                .enumerate()
                .map(|(i, (t, day))| {
                    post(
                        &format!("p{i}"),
                        &format!("t{t}"),
                        &format!("2019-01-{:02}T00:00:00Z", day + 1),
                        "s",
                        "c",
                    )
                })
                .collect();
            let n_posts = posts.len();
            let threads = assemble_threads(posts).unwrap();
            let total: usize = threads.iter().map(|t| t.posts.len()).sum();
            prop_assert_eq!(total, n_posts);
            let mut seen = HashSet::new();
            for t in &threads {
                for p in &t.posts {
                    prop_assert!(seen.insert(p.post_id.clone()));
                    prop_assert_eq!(&p.thread_id, &t.thread_id);
                }
            }
        }
    }
}
