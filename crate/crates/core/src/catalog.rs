//! University catalog, rank-based reputation, availability and name resolution.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use strsim::osa_distance;

use crate::error::{Error, Result};
use crate::geodesy::{CapitalTable, CountryId};
use crate::text;

/// Worst rank that still earns a positive reputation.
pub const R_MAX_GLOBAL: u32 = 1200;
pub const R_MIN_GLOBAL: u32 = 1;
pub const DEFAULT_FUZZY_THRESHOLD: f64 = 0.85;

const DEFAULT_ALIASES: &str = include_str!("../assets/university_aliases.csv");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct University {
    pub id: String,
    pub canonical_name: String,
    pub country: CountryId,
    pub qs_rank: Option<u32>,
    /// Rank as written in the source, e.g. `=15` or `601-610`.
    #[serde(default)]
    pub rank_label: String,
    /// Set for tied ranks and range bands.
    #[serde(default)]
    pub rank_shared: bool,
    #[serde(default)]
    pub aliases: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ParsedRank {
    rank: Option<u32>,
    shared: bool,
}

fn parse_rank(raw: &str) -> std::result::Result<ParsedRank, String> {
    let s = raw.trim();
    let lower = s.to_ascii_lowercase();
    if s.is_empty() || matches!(lower.as_str(), "-" | "n/a" | "na" | "nr" | "unranked") {
        return Ok(ParsedRank { rank: None, shared: false });
    }
    let (body, tied) = match s.strip_prefix('=') {
        Some(rest) => (rest.trim(), true),
        None => (s, false),
    };
    let (first, band) = if let Some(head) = body.strip_suffix('+') {
        (head.trim(), true)
    } else if let Some((lo, hi)) = body.split_once(['-', '\u{2013}']) {
        hi.trim().parse::<u32>().map_err(|_| format!("bad rank band `{s}`"))?;
        (lo.trim(), true)
    } else {
        (body, false)
    };
    let rank: u32 = first.parse().map_err(|_| format!("bad rank `{s}`"))?;
    if rank == 0 {
        return Err(format!("rank must be >= 1, got `{s}`"));
    }
    Ok(ParsedRank { rank: Some(rank), shared: tied || band })
}

/// Normalised form used for exact and alias lookups: folded, leading
/// articles dropped and common abbreviations expanded.
pub fn normalize_name(name: &str) -> String {
    text::tokens(name)
        .into_iter()
        .filter(|t| t != "the")
        .map(|t| match t.as_str() {
            "univ" | "uni" | "u" => "university".to_owned(),
            "inst" => "institute".to_owned(),
            "tech" => "technology".to_owned(),
            "coll" => "college".to_owned(),
            "natl" => "national".to_owned(),
            "intl" => "international".to_owned(),
            "st" => "saint".to_owned(),
            _ => t,
        })
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchStatus {
    Exact,
    Alias,
    Fuzzy,
    Unmatched,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchedUniversity {
    pub id: String,
    pub name: String,
    pub country: CountryId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub status: MatchStatus,
    pub university: Option<MatchedUniversity>,
    pub similarity: f64,
}

impl MatchResult {
    pub fn unmatched(similarity: f64) -> Self {
        MatchResult { status: MatchStatus::Unmatched, university: None, similarity }
    }

    pub fn is_matched(&self) -> bool {
        self.university.is_some()
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct CountryRanks {
    best: Option<u32>,
    worst: Option<u32>,
}

#[derive(Debug, Clone)]
pub struct Catalog {
    universities: Vec<University>,
    by_id: BTreeMap<String, usize>,
    exact: BTreeMap<String, usize>,
    alias: BTreeMap<String, usize>,
    fuzzy_keys: Vec<(Vec<Token>, usize)>,
    per_country: BTreeMap<CountryId, usize>,
    ranks: BTreeMap<CountryId, CountryRanks>,
    warnings: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct CatalogRow {
    name: String,
    country: String,
    #[serde(default)]
    qs_rank: String,
    #[serde(default)]
    aliases: String,
}

#[derive(Debug, Deserialize)]
struct AliasRow {
    alias: String,
    canonical_name: String,
}

impl Catalog {
    pub fn load(path: &Path, capitals: &CapitalTable) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, path, capitals)
    }

    /// Reads `name,country,qs_rank,aliases`. The bundled alias table is
    /// applied afterwards; entries naming universities outside the catalog
    /// are ignored.
    pub fn from_reader(reader: impl Read, source: &Path, capitals: &CapitalTable) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::csv(source, e))?.clone();
        for column in ["name", "country", "qs_rank"] {
            if !headers.iter().any(|h| h.trim() == column) {
                return Err(Error::MissingColumn { path: source.to_path_buf(), column: column.to_owned() });
            }
        }
        let mut universities = Vec::new();
        for (i, row) in rdr.deserialize::<CatalogRow>().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| Error::csv(source, e))?;
            let parse_err = |message: String| Error::Parse { path: source.to_path_buf(), line, message };
            let name = row.name.trim();
            if name.is_empty() {
                return Err(parse_err("university name is empty".into()));
            }
            let country = capitals.resolve_country(&row.country).ok_or_else(|| {
                parse_err(format!(
                    "university `{name}` is in `{}`, which has no capital entry",
                    row.country.trim()
                ))
            })?;
            let rank = parse_rank(&row.qs_rank).map_err(parse_err)?;
            universities.push(University {
                id: text::slug(name),
                canonical_name: name.to_owned(),
                country,
                qs_rank: rank.rank,
                rank_label: row.qs_rank.trim().to_owned(),
                rank_shared: rank.shared,
                aliases: row
                    .aliases
                    .split('|')
                    .map(str::trim)
                    .filter(|a| !a.is_empty())
                    .map(str::to_owned)
                    .collect(),
            });
        }
        if universities.is_empty() {
            return Err(Error::EmptyFile(source.to_path_buf()));
        }
        let mut catalog = Catalog::from_universities(universities)?;
        catalog.add_alias_rows(DEFAULT_ALIASES.as_bytes(), Path::new("<bundled aliases>"), false)?;
        Ok(catalog)
    }

    /// Builds a catalog directly. Universities whose normalised names collide
    /// are merged into the first one, with a warning.
    pub fn from_universities(universities: Vec<University>) -> Result<Self> {
        let mut catalog = Catalog {
            universities: Vec::with_capacity(universities.len()),
            by_id: BTreeMap::new(),
            exact: BTreeMap::new(),
            alias: BTreeMap::new(),
            fuzzy_keys: Vec::new(),
            per_country: BTreeMap::new(),
            ranks: BTreeMap::new(),
            warnings: Vec::new(),
        };
        for u in universities {
            if u.canonical_name.trim().is_empty() {
                return Err(Error::InvalidInput("university with empty name".into()));
            }
            let key = normalize_name(&u.canonical_name);
            if let Some(&existing) = catalog.exact.get(&key) {
                let kept = &mut catalog.universities[existing];
                let msg = format!(
                    "duplicate university `{}` merged into `{}`",
                    u.canonical_name, kept.canonical_name
                );
                log::warn!("{msg}");
                catalog.warnings.push(msg);
                kept.aliases.extend(u.aliases);
                if kept.qs_rank.is_none() {
                    kept.qs_rank = u.qs_rank;
                    kept.rank_label = u.rank_label;
                    kept.rank_shared = u.rank_shared;
                }
                continue;
            }
            let mut u = u;
            if catalog.by_id.contains_key(&u.id) {
                u.id = format!("{}-{}", u.id, catalog.universities.len());
            }
            let idx = catalog.universities.len();
            catalog.by_id.insert(u.id.clone(), idx);
            catalog.exact.insert(key, idx);
            catalog.universities.push(u);
        }
        for idx in 0..catalog.universities.len() {
            let aliases: Vec<String> = catalog.universities[idx].aliases.iter().cloned().collect();
            for a in aliases {
                catalog.index_alias(&a, idx);
            }
        }
        catalog.rebuild_stats();
        Ok(catalog)
    }

    fn index_alias(&mut self, alias: &str, idx: usize) {
        let key = normalize_name(alias);
        if key.is_empty() || self.exact.contains_key(&key) {
            return;
        }
        self.alias.insert(key, idx);
    }

    fn rebuild_stats(&mut self) {
        self.per_country.clear();
        self.ranks.clear();
        self.fuzzy_keys.clear();
        for (idx, u) in self.universities.iter().enumerate() {
            *self.per_country.entry(u.country.clone()).or_default() += 1;
            let entry = self.ranks.entry(u.country.clone()).or_default();
            if let Some(r) = u.qs_rank.filter(|&r| r <= R_MAX_GLOBAL) {
                entry.best = Some(entry.best.map_or(r, |b| b.min(r)));
                entry.worst = Some(entry.worst.map_or(r, |w| w.max(r)));
            }
            self.fuzzy_keys.push((weighted_tokens(&u.canonical_name), idx));
            for a in &u.aliases {
                self.fuzzy_keys.push((weighted_tokens(a), idx));
            }
        }
    }

    /// Adds `alias,canonical_name` rows. With `strict`, an unknown canonical
    /// name is an error; otherwise it is skipped.
    pub fn add_alias_rows(&mut self, reader: impl Read, source: &Path, strict: bool) -> Result<()> {
        let mut rdr = csv::Reader::from_reader(reader);
        for (i, row) in rdr.deserialize::<AliasRow>().enumerate() {
            let row = row.map_err(|e| Error::csv(source, e))?;
            let target = normalize_name(&row.canonical_name);
            match self.exact.get(&target).copied() {
                Some(idx) => {
                    let alias = row.alias.trim().to_owned();
                    self.index_alias(&alias, idx);
                    self.universities[idx].aliases.insert(alias);
                }
                None if strict => {
                    return Err(Error::Parse {
                        path: source.to_path_buf(),
                        line: i + 2,
                        message: format!("alias target `{}` is not in the catalog", row.canonical_name),
                    })
                }
                None => log::debug!("alias target `{}` not in catalog", row.canonical_name),
            }
        }
        self.rebuild_stats();
        Ok(())
    }

    pub fn load_aliases(&mut self, path: &Path) -> Result<()> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        self.add_alias_rows(file, path, true)
    }

    pub fn universities(&self) -> &[University] {
        &self.universities
    }

    pub fn get(&self, id: &str) -> Option<&University> {
        self.by_id.get(id).map(|&i| &self.universities[i])
    }

    pub fn global_count(&self) -> usize {
        self.universities.len()
    }

    pub fn country_count(&self, country: &CountryId) -> usize {
        self.per_country.get(country).copied().unwrap_or(0)
    }

    pub fn per_country_counts(&self) -> &BTreeMap<CountryId, usize> {
        &self.per_country
    }

    pub fn countries(&self) -> impl Iterator<Item = &CountryId> {
        self.per_country.keys()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// |Total_c| / |Total_global|.
    pub fn availability(&self, country: &CountryId) -> Result<f64> {
        match self.country_count(country) {
            0 => Err(Error::NoCoverage(country.to_string())),
            n => Ok(n as f64 / self.global_count() as f64),
        }
    }

    /// Reputation relative to the best and worst ranked universities of the
    /// same country.
    pub fn local_reputation(&self, u: &University) -> f64 {
        let Some(rank) = u.qs_rank.filter(|&r| r <= R_MAX_GLOBAL) else {
            return 0.0;
        };
        let Some(CountryRanks { best: Some(best), worst: Some(worst) }) = self.ranks.get(&u.country).copied()
        else {
            return 0.0;
        };
        if worst == best {
            return 1.0;
        }
        f64::from(worst - rank) / f64::from(worst - best)
    }

    /// Exact, then alias, then fuzzy token-set matching.
    pub fn resolve(&self, name: &str, threshold: f64) -> MatchResult {
        let result = self.resolve_once(name, threshold);
        if result.is_matched() {
            return result;
        }
        match strip_qualifiers(name) {
            Some(stripped) => {
                let retry = self.resolve_once(&stripped, threshold);
                if retry.is_matched() {
                    retry
                } else {
                    MatchResult::unmatched(result.similarity.max(retry.similarity))
                }
            }
            None => result,
        }
    }

    fn resolve_once(&self, name: &str, threshold: f64) -> MatchResult {
        let key = normalize_name(name);
        if key.is_empty() {
            return MatchResult::unmatched(0.0);
        }
        if let Some(&idx) = self.exact.get(&key) {
            return self.matched(MatchStatus::Exact, idx, 1.0);
        }
        if let Some(&idx) = self.alias.get(&key) {
            return self.matched(MatchStatus::Alias, idx, 1.0);
        }
        let query = weighted_tokens(name);
        let mut best: Option<(f64, usize)> = None;
        for (tokens, idx) in &self.fuzzy_keys {
            let s = weighted_similarity(&query, tokens);
            if best.is_none_or(|(b, _)| s > b) {
                best = Some((s, *idx));
            }
        }
        match best {
            Some((s, idx)) if s >= threshold => self.matched(MatchStatus::Fuzzy, idx, s),
            Some((s, _)) => MatchResult::unmatched(s),
            None => MatchResult::unmatched(0.0),
        }
    }

    fn matched(&self, status: MatchStatus, idx: usize, similarity: f64) -> MatchResult {
        let u = &self.universities[idx];
        MatchResult {
            status,
            university: Some(MatchedUniversity {
                id: u.id.clone(),
                name: u.canonical_name.clone(),
                country: u.country.clone(),
            }),
            similarity,
        }
    }
}

/// Reputation against the global ceiling: rank 1 scores 1, rank 1200 and beyond
/// (or unranked) score 0.
pub fn reputation(u: &University) -> f64 {
    rank_reputation(u.qs_rank)
}

pub fn rank_reputation(rank: Option<u32>) -> f64 {
    match rank {
        Some(r) if (R_MIN_GLOBAL..=R_MAX_GLOBAL).contains(&r) => {
            f64::from(R_MAX_GLOBAL - r) / f64::from(R_MAX_GLOBAL - R_MIN_GLOBAL)
        }
        _ => 0.0,
    }
}

/// Drops a trailing parenthetical or `, <place>` suffix.
fn strip_qualifiers(name: &str) -> Option<String> {
    let trimmed = name.trim();
    if let Some(open) = trimmed.rfind('(') {
        if trimmed.ends_with(')') && open > 0 {
            return Some(trimmed[..open].trim().to_owned());
        }
    }
    trimmed.rsplit_once(',').map(|(head, _)| head.trim().to_owned()).filter(|h| !h.is_empty())
}

const GENERIC_TOKENS: [&str; 18] = [
    "university",
    "college",
    "institute",
    "of",
    "and",
    "technology",
    "science",
    "sciences",
    "national",
    "state",
    "school",
    "de",
    "la",
    "del",
    "at",
    "in",
    "for",
    "universidad",
];

const TOKEN_FLOOR: f64 = 0.75;
const GENERIC_WEIGHT: f64 = 0.3;

fn tokenize(name: &str) -> Vec<String> {
    normalize_name(name).split(' ').filter(|t| !t.is_empty()).map(str::to_owned).collect()
}

/// Edit similarity with adjacent transpositions counted as one edit.
fn token_similarity(a: &Token, b: &Token) -> f64 {
    if a.text == b.text {
        return 1.0;
    }
    let longest = a.chars.max(b.chars);
    // cheap bound: the length gap alone already costs that many edits
    if (longest - a.chars.min(b.chars)) as f64 > (1.0 - TOKEN_FLOOR) * longest as f64 {
        return 0.0;
    }
    1.0 - osa_distance(&a.text, &b.text) as f64 / longest as f64
}

#[derive(Debug, Clone)]
struct Token {
    text: String,
    chars: usize,
    weight: f64,
}

impl Token {
    fn new(text: String) -> Self {
        let chars = text.chars().count();
        let mut t = Token { text, chars, weight: 1.0 };
        let generic = GENERIC_TOKENS
            .iter()
            .any(|g| *g == t.text || (t.chars > 3 && token_similarity(&t, &Token::plain(g)) >= 0.85));
        if generic {
            t.weight = GENERIC_WEIGHT;
        }
        t
    }

    fn plain(text: &str) -> Self {
        Token { text: text.to_owned(), chars: text.chars().count(), weight: 1.0 }
    }
}

fn weighted_tokens(name: &str) -> Vec<Token> {
    tokenize(name).into_iter().map(Token::new).collect()
}

fn best_token_score(token: &Token, others: &[Token]) -> f64 {
    let s = others.iter().map(|o| token_similarity(token, o)).fold(0.0, f64::max);
    if s >= TOKEN_FLOOR {
        s
    } else {
        0.0
    }
}

fn weighted_similarity(a: &[Token], b: &[Token]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (side, other) in [(a, b), (b, a)] {
        for t in side {
            num += t.weight * best_token_score(t, other);
            den += t.weight;
        }
    }
    (num / den).clamp(0.0, 1.0)
}

/// Weighted soft token-set similarity in [0, 1]. Each token takes its best
/// edit-distance match on the other side; generic words like "university"
/// carry less weight than distinctive ones.
pub fn token_set_similarity(a: &[String], b: &[String]) -> f64 {
    let wa: Vec<Token> = a.iter().cloned().map(Token::new).collect();
    let wb: Vec<Token> = b.iter().cloned().map(Token::new).collect();
    weighted_similarity(&wa, &wb)
}

pub fn name_similarity(a: &str, b: &str) -> f64 {
    weighted_similarity(&weighted_tokens(a), &weighted_tokens(b))
}
