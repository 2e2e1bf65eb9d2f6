//! Raw response parsing, entity resolution and run logs.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, MatchResult};
use crate::error::{Error, Result};
use crate::llmclient::DecodeParams;
use crate::profiles::{ProfileDirectory, Variant};
use crate::taxonomy::{TagSet, Tagger};

pub const MAX_ITEMS: usize = 3;

/// One model call as stored in the raw-response JSONL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawResponse {
    pub profile_id: String,
    pub model_id: String,
    pub variant: Variant,
    pub run_index: u32,
    pub prompt_text: String,
    pub response_text: String,
    pub decode_params: DecodeParams,
    pub timestamp: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attempts: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ResponseKey {
    pub profile_id: String,
    pub model_id: String,
    pub variant: Variant,
    pub run_index: u32,
}

impl RawResponse {
    pub fn key(&self) -> ResponseKey {
        ResponseKey {
            profile_id: self.profile_id.clone(),
            model_id: self.model_id.clone(),
            variant: self.variant,
            run_index: self.run_index,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseFlag {
    Reformatted,
    Truncated,
    ExtraItems,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedPair {
    pub university: String,
    pub program: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub pairs: Vec<ParsedPair>,
    pub flags: BTreeSet<ParseFlag>,
}

const SEPARATORS: [&str; 5] = [" - ", " \u{2013} ", " \u{2014} ", "\u{2014}", ":"];
const DASH_SEPARATORS: [&str; 4] = [" - ", " \u{2013} ", " \u{2014} ", "\u{2014}"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LineKind {
    Numbered,
    Bullet,
    Plain,
}

/// Splits off a list marker: `1.`, `2)`, `(3)`, `-`, `*`, `•`.
fn strip_marker(line: &str) -> (LineKind, &str) {
    let t = line.trim();
    let digits_start = usize::from(t.starts_with('('));
    let rest = &t[digits_start..];
    let n = rest.chars().take_while(char::is_ascii_digit).count();
    if n > 0 && n <= 2 {
        let after = &rest[n..];
        if let Some(body) = after.strip_prefix(['.', ')', ']']) {
            if body.is_empty() || body.starts_with(char::is_whitespace) {
                return (LineKind::Numbered, body.trim());
            }
        }
    }
    for marker in ["- ", "* ", "\u{2022} ", "+ ", "\u{2013} "] {
        if let Some(body) = t.strip_prefix(marker) {
            return (LineKind::Bullet, body.trim());
        }
    }
    if let Some(body) = t.strip_prefix('\u{2022}') {
        return (LineKind::Bullet, body.trim());
    }
    (LineKind::Plain, t)
}

fn strip_markdown(s: &str) -> String {
    s.replace("**", "").replace("__", "").replace('`', "").trim().to_owned()
}

fn find_separator<'a>(s: &str, seps: &[&'a str]) -> Option<(usize, &'a str)> {
    seps.iter()
        .filter_map(|sep| s.find(sep).map(|i| (i, *sep)))
        .min_by(|a, b| a.0.cmp(&b.0).then(b.1.len().cmp(&a.1.len())))
}

fn program_continuation(body: &str) -> Option<String> {
    let cleaned = strip_markdown(body);
    let lower = cleaned.to_ascii_lowercase();
    for prefix in ["programme:", "program:", "programme -", "program -"] {
        if lower.starts_with(prefix) {
            return Some(cleaned[prefix.len()..].trim().to_owned());
        }
    }
    None
}

fn tidy(s: &str) -> String {
    s.trim()
        .trim_end_matches(['.', ',', ';'])
        .trim_matches(|c: char| c == '"' || c == '*' || c == '_')
        .trim()
        .to_owned()
}

fn split_item(body: &str) -> (ParsedPair, bool) {
    let cleaned = strip_markdown(body);
    match find_separator(&cleaned, &SEPARATORS) {
        Some((i, sep)) => (
            ParsedPair { university: tidy(&cleaned[..i]), program: tidy(&cleaned[i + sep.len()..]) },
            sep != " - ",
        ),
        None => (ParsedPair { university: tidy(&cleaned), program: String::new() }, true),
    }
}

/// Extracts up to three (university, program) pairs from free text. Never
/// fails; an empty result carries the `truncated` flag.
pub fn parse_response(raw: &str) -> ParsedResponse {
    let lines: Vec<(LineKind, &str)> =
        raw.lines().map(str::trim).filter(|l| !l.is_empty()).map(strip_marker).collect();
    let has_numbered = lines.iter().any(|(k, _)| *k == LineKind::Numbered);
    let has_bullets = lines.iter().any(|(k, _)| *k == LineKind::Bullet);
    let item_kind = if has_numbered {
        LineKind::Numbered
    } else if has_bullets {
        LineKind::Bullet
    } else {
        LineKind::Plain
    };

    let mut out = ParsedResponse::default();
    if item_kind != LineKind::Numbered {
        out.flags.insert(ParseFlag::Reformatted);
    }
    let mut items: Vec<ParsedPair> = Vec::new();
    for (kind, body) in &lines {
        if let Some(program) = program_continuation(body) {
            if let Some(last) = items.last_mut() {
                if last.program.is_empty() {
                    last.program = tidy(&program);
                    continue;
                }
            }
        }
        let is_item = match item_kind {
            LineKind::Plain => find_separator(&strip_markdown(body), &DASH_SEPARATORS).is_some(),
            k => *kind == k,
        };
        if !is_item {
            continue;
        }
        let (pair, irregular) = split_item(body);
        if pair.university.is_empty() {
            out.flags.insert(ParseFlag::Reformatted);
            continue;
        }
        if irregular || strip_markdown(body) != *body {
            out.flags.insert(ParseFlag::Reformatted);
        }
        items.push(pair);
    }
    if items.len() > MAX_ITEMS {
        out.flags.insert(ParseFlag::ExtraItems);
        items.truncate(MAX_ITEMS);
    }
    if items.len() < MAX_ITEMS {
        out.flags.insert(ParseFlag::Truncated);
    }
    out.pairs = items;
    out
}

/// One parsed and resolved recommendation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationRecord {
    pub profile_id: String,
    pub model_id: String,
    pub variant: Variant,
    pub run_index: u32,
    pub position: u8,
    pub raw_university: String,
    pub raw_program: String,
    #[serde(rename = "match")]
    pub match_result: MatchResult,
    pub program_tags: TagSet,
    pub parse_flags: BTreeSet<ParseFlag>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceCounts {
    pub responses: usize,
    pub empty_responses: usize,
    pub records: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub source: String,
    pub models: BTreeSet<String>,
    pub variants: BTreeSet<Variant>,
    pub decode_params: Vec<DecodeParams>,
    pub first_timestamp: Option<String>,
    pub last_timestamp: Option<String>,
    pub responses: usize,
    pub records: usize,
    pub unmatched: usize,
    pub untagged: usize,
    pub flag_counts: BTreeMap<String, usize>,
    /// Keyed by `model/variant`.
    pub slices: BTreeMap<String, SliceCounts>,
    pub line_errors: Vec<LineError>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    pub manifest: RunManifest,
    pub records: Vec<RecommendationRecord>,
}

pub fn slice_key(model_id: &str, variant: Variant) -> String {
    format!("{model_id}/{variant}")
}

/// Resolution settings shared by every response in a run.
pub struct IngestContext<'a> {
    pub catalog: &'a Catalog,
    pub tagger: &'a Tagger,
    pub profiles: &'a ProfileDirectory,
    pub fuzzy_threshold: f64,
}

impl IngestContext<'_> {
    pub fn records_for(&self, response: &RawResponse) -> (Vec<RecommendationRecord>, ParsedResponse) {
        self.records_cached(response, &mut HashMap::new())
    }

    /// As [`records_for`](Self::records_for), memoising name resolution
    /// across calls; generated names repeat heavily within a run.
    fn records_cached(
        &self,
        response: &RawResponse,
        cache: &mut HashMap<String, MatchResult>,
    ) -> (Vec<RecommendationRecord>, ParsedResponse) {
        let parsed = parse_response(&response.response_text);
        let records = parsed
            .pairs
            .iter()
            .enumerate()
            .map(|(i, pair)| RecommendationRecord {
                profile_id: response.profile_id.clone(),
                model_id: response.model_id.clone(),
                variant: response.variant,
                run_index: response.run_index,
                position: (i + 1) as u8,
                raw_university: pair.university.clone(),
                raw_program: pair.program.clone(),
                match_result: cache
                    .entry(pair.university.clone())
                    .or_insert_with(|| self.catalog.resolve(&pair.university, self.fuzzy_threshold))
                    .clone(),
                program_tags: if pair.program.trim().is_empty() {
                    TagSet::new()
                } else {
                    self.tagger.tag_program(&pair.program).unwrap_or_default()
                },
                parse_flags: parsed.flags.clone(),
            })
            .collect();
        (records, parsed)
    }
}

/// Parses, resolves and tags every line of a raw-response JSONL file.
/// Malformed lines, unknown profiles and duplicate keys become line errors
/// and the run continues.
pub fn ingest_run(path: &Path, ctx: &IngestContext<'_>) -> Result<RunLog> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(BufReader::new(file), &path.display().to_string(), ctx)
}

pub fn ingest_reader(reader: impl BufRead, source: &str, ctx: &IngestContext<'_>) -> Result<RunLog> {
    let mut log = RunLog::default();
    log.manifest.source = source.to_owned();
    let mut seen = HashSet::new();
    let mut cache = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fail = |message: String| {
            log::warn!("{source}:{line_no}: {message}");
            log.manifest.line_errors.push(LineError { line: line_no, message });
        };
        let response: RawResponse = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                fail(format!("malformed record: {e}"));
                continue;
            }
        };
        if response.run_index < 1 {
            fail("run_index must be >= 1".into());
            continue;
        }
        if !ctx.profiles.contains(&response.profile_id) {
            fail(format!("unknown profile_id `{}`", response.profile_id));
            continue;
        }
        if !seen.insert(response.key()) {
            fail(format!("duplicate response for {} run {}", response.profile_id, response.run_index));
            continue;
        }
        let (records, parsed) = ctx.records_cached(&response, &mut cache);
        let m = &mut log.manifest;
        m.models.insert(response.model_id.clone());
        m.variants.insert(response.variant);
        if !m.decode_params.contains(&response.decode_params) {
            m.decode_params.push(response.decode_params);
        }
        let ts = Some(response.timestamp.clone());
        if m.first_timestamp.is_none() || ts < m.first_timestamp {
            m.first_timestamp = ts.clone();
        }
        if ts > m.last_timestamp {
            m.last_timestamp = ts;
        }
        m.responses += 1;
        for flag in &parsed.flags {
            let name = serde_json::to_value(flag)?.as_str().unwrap_or_default().to_owned();
            *m.flag_counts.entry(name).or_default() += 1;
        }
        let slice = m.slices.entry(slice_key(&response.model_id, response.variant)).or_default();
        slice.responses += 1;
        slice.records += records.len();
        if records.is_empty() {
            slice.empty_responses += 1;
        }
        m.records += records.len();
        m.unmatched += records.iter().filter(|r| !r.match_result.is_matched()).count();
        m.untagged += records.iter().filter(|r| r.program_tags.is_empty()).count();
        log.records.extend(records);
    }
    Ok(log)
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a JSONL file, reporting the first malformed line with its number.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Records as JSONL plus the manifest as a `.manifest.json` sidecar.
pub fn write_run_log(log: &RunLog, out: &Path) -> Result<()> {
    write_jsonl(out, &log.records)?;
    let mpath = manifest_path(out);
    let json = serde_json::to_string_pretty(&log.manifest)?;
    std::fs::write(&mpath, json + "\n").map_err(|e| Error::io(&mpath, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(p: &ParsedResponse) -> Vec<(&str, &str)> {
        p.pairs.iter().map(|x| (x.university.as_str(), x.program.as_str())).collect()
    }

    #[test]
    fn canonical_format() {
        let p = parse_response(
            "1. University of Oxford - Social Policy\n2. University of Cambridge - MPhil Economics\n3. Imperial College London - MSc Computing\n",
        );
        assert_eq!(p.pairs.len(), 3);
        assert!(p.flags.is_empty(), "{:?}", p.flags);
        assert_eq!(pairs(&p)[0], ("University of Oxford", "Social Policy"));
    }

    #[test]
    fn bold_en_dash_line() {
        let p = parse_response("**University of Oxford** \u{2013} MSc in Data Science");
        assert_eq!(pairs(&p), vec![("University of Oxford", "MSc in Data Science")]);
        assert!(p.flags.contains(&ParseFlag::Reformatted));
        assert!(p.flags.contains(&ParseFlag::Truncated));
    }

    #[test]
    fn refusal_is_empty() {
        let p = parse_response("I cannot recommend specific universities.");
        assert!(p.pairs.is_empty());
        assert!(p.flags.contains(&ParseFlag::Truncated));
    }

    #[test]
    fn extra_items_dropped() {
        let p = parse_response("1. A - x\n2. B - y\n3. C - z\n4. D - w\n");
        assert_eq!(p.pairs.len(), 3);
        assert!(p.flags.contains(&ParseFlag::ExtraItems));
        assert!(!p.flags.contains(&ParseFlag::Truncated));
    }

    #[test]
    fn no_separator_yields_empty_program() {
        let p = parse_response("1. University of Oxford\n2. B - y\n3. C - z");
        assert_eq!(pairs(&p)[0], ("University of Oxford", ""));
        assert!(p.flags.contains(&ParseFlag::Reformatted));
    }

    #[test]
    fn program_continuation_lines() {
        let p = parse_response(
            "1. **University of Toronto**\n   - Program: MSc Computer Science\n2. McGill University\n   - Program: MA Economics\n3. UBC - MEng",
        );
        assert_eq!(
            pairs(&p),
            vec![
                ("University of Toronto", "MSc Computer Science"),
                ("McGill University", "MA Economics"),
                ("UBC", "MEng"),
            ]
        );
    }

    #[test]
    fn preamble_is_ignored() {
        let p = parse_response(
            "Here are three options for you:\n\n1. University of Lagos - MSc Public Health\n2. University of Ibadan - MPH\n3. University of Nigeria - MBA\n\nGood luck!",
        );
        assert_eq!(p.pairs.len(), 3);
        assert_eq!(p.pairs[2].program, "MBA");
    }
}
