//! Maps free-form program names onto the five QS broad subject areas.
//!
//! Rules are keyword phrases matched on whole tokens. A phrase that lies
//! inside a longer (or higher-priority) matched phrase is suppressed, so
//! "Political Science" is tagged by its own rule rather than also picking up
//! the generic "science" rule. Exact-name overrides win over everything.

mod external;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text;

pub use external::{classify_external, record_overrides, ExternalTagging, TagSource, FEW_SHOT_EXAMPLES};

const DEFAULT_RULES: &str = include_str!("../../assets/tag_rules.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SubjectTag {
    #[serde(rename = "AH")]
    ArtsHumanities,
    #[serde(rename = "ET")]
    EngineeringTechnology,
    #[serde(rename = "LSM")]
    LifeSciencesMedicine,
    #[serde(rename = "NS")]
    NaturalSciences,
    #[serde(rename = "SSM")]
    SocialSciencesManagement,
}

impl SubjectTag {
    pub const ALL: [SubjectTag; 5] = [
        SubjectTag::ArtsHumanities,
        SubjectTag::EngineeringTechnology,
        SubjectTag::LifeSciencesMedicine,
        SubjectTag::NaturalSciences,
        SubjectTag::SocialSciencesManagement,
    ];

    pub fn code(self) -> &'static str {
        match self {
            SubjectTag::ArtsHumanities => "AH",
            SubjectTag::EngineeringTechnology => "ET",
            SubjectTag::LifeSciencesMedicine => "LSM",
            SubjectTag::NaturalSciences => "NS",
            SubjectTag::SocialSciencesManagement => "SSM",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            SubjectTag::ArtsHumanities => "Arts & Humanities",
            SubjectTag::EngineeringTechnology => "Engineering & Technology",
            SubjectTag::LifeSciencesMedicine => "Life Sciences & Medicine",
            SubjectTag::NaturalSciences => "Natural Sciences",
            SubjectTag::SocialSciencesManagement => "Social Sciences & Management",
        }
    }
}

impl fmt::Display for SubjectTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for SubjectTag {
    type Err = Error;

    /// Accepts codes (`ET`), display names (`Engineering & Technology`) and
    /// variant names (`EngineeringTechnology`), case-insensitively.
    fn from_str(s: &str) -> Result<Self> {
        let key = text::fold(s).replace(' ', "");
        SubjectTag::ALL
            .into_iter()
            .find(|tag| {
                key == tag.code().to_ascii_lowercase()
                    || key == text::fold(tag.display_name()).replace(' ', "")
                    || key == format!("{tag:?}").to_ascii_lowercase()
            })
            .ok_or_else(|| Error::UnknownTag(s.trim().to_owned()))
    }
}

pub type TagSet = BTreeSet<SubjectTag>;

/// Parses `|`-separated tag lists; empty input gives the empty set.
pub fn parse_tag_list(s: &str) -> Result<TagSet> {
    s.split('|').map(str::trim).filter(|t| !t.is_empty()).map(SubjectTag::from_str).collect()
}

pub fn format_tag_list(tags: &TagSet) -> String {
    tags.iter().map(|t| t.code()).collect::<Vec<_>>().join("|")
}

/// Human-readable list: "A", "A and B", "A, B and C".
pub fn describe_tags(tags: &TagSet) -> String {
    let names: Vec<&str> = tags.iter().map(|t| t.display_name()).collect();
    match names.len() {
        0 => String::new(),
        1 => names[0].to_owned(),
        n => format!("{} and {}", names[..n - 1].join(", "), names[n - 1]),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TagRule {
    pattern: Vec<String>,
    pub tags: TagSet,
    pub priority: i32,
}

impl TagRule {
    pub fn new(pattern: &str, tags: TagSet, priority: i32) -> Result<Self> {
        let tokens = text::tokens(pattern);
        if tokens.is_empty() {
            return Err(Error::InvalidInput("tag rule pattern is empty".into()));
        }
        if tags.is_empty() {
            return Err(Error::InvalidInput(format!("tag rule `{pattern}` has no tags")));
        }
        Ok(TagRule { pattern: tokens, tags, priority })
    }

    pub fn pattern(&self) -> String {
        self.pattern.join(" ")
    }

    /// Start offsets of whole-token occurrences. The final token may carry a
    /// plural `s` ("computers" matches "computer").
    fn occurrences(&self, tokens: &[String]) -> Vec<usize> {
        let n = self.pattern.len();
        if tokens.len() < n {
            return Vec::new();
        }
        (0..=tokens.len() - n)
            .filter(|&start| {
                self.pattern.iter().enumerate().all(|(i, p)| {
                    let t = &tokens[start + i];
                    t == p || (i == n - 1 && t.strip_suffix('s') == Some(p.as_str()))
                })
            })
            .collect()
    }
}

#[derive(Debug, Deserialize)]
struct RuleRow {
    pattern: String,
    tags: String,
    #[serde(default)]
    priority: i32,
}

#[derive(Debug, Clone, Default)]
pub struct RuleSet {
    rules: Vec<TagRule>,
}

impl RuleSet {
    pub fn bundled() -> Self {
        Self::from_reader(DEFAULT_RULES.as_bytes(), Path::new("<bundled tag_rules.csv>"))
            .expect("bundled tag_rules.csv is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, path)
    }

    /// Reads `pattern,tags,priority` rows.
    pub fn from_reader(reader: impl Read, source: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut rules = Vec::new();
        for (i, row) in rdr.deserialize::<RuleRow>().enumerate() {
            let row = row.map_err(|e| Error::csv(source, e))?;
            let parse_err =
                |e: Error| Error::Parse { path: source.to_path_buf(), line: i + 2, message: e.to_string() };
            let tags = parse_tag_list(&row.tags).map_err(parse_err)?;
            rules.push(TagRule::new(&row.pattern, tags, row.priority).map_err(parse_err)?);
        }
        Ok(RuleSet::new(rules))
    }

    pub fn new(mut rules: Vec<TagRule>) -> Self {
        // priority first, then longer phrases; stable for equal keys
        rules.sort_by(|a, b| b.priority.cmp(&a.priority).then(b.pattern.len().cmp(&a.pattern.len())));
        RuleSet { rules }
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Union of the tags of every non-suppressed matching rule.
    pub fn apply(&self, name: &str) -> TagSet {
        let tokens = text::tokens(name);
        let mut accepted: Vec<(usize, usize)> = Vec::new();
        let mut tags = TagSet::new();
        for rule in &self.rules {
            for start in rule.occurrences(&tokens) {
                let end = start + rule.pattern.len();
                let inside = accepted.iter().any(|&(s, e)| s <= start && end <= e);
                if !inside {
                    accepted.push((start, end));
                    tags.extend(rule.tags.iter().copied());
                }
            }
        }
        tags
    }
}

/// Exact-name tag assignments from manual review; highest precedence.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    entries: BTreeMap<String, (String, TagSet)>,
    warnings: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct OverrideRow {
    program_name: String,
    tags: String,
}

impl Overrides {
    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, path)
    }

    /// Reads `program_name,tags`. Later duplicates replace earlier ones.
    pub fn from_reader(reader: impl Read, source: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let mut overrides = Overrides::default();
        for (i, row) in rdr.deserialize::<OverrideRow>().enumerate() {
            let row = row.map_err(|e| Error::csv(source, e))?;
            let tags = parse_tag_list(&row.tags).map_err(|e| Error::Parse {
                path: source.to_path_buf(),
                line: i + 2,
                message: e.to_string(),
            })?;
            if overrides.insert(&row.program_name, tags) {
                let msg = format!(
                    "{}:{}: duplicate override for `{}`; keeping the later row",
                    source.display(),
                    i + 2,
                    row.program_name.trim()
                );
                log::warn!("{msg}");
                overrides.warnings.push(msg);
            }
        }
        Ok(overrides)
    }

    /// Returns true when an existing entry was replaced.
    pub fn insert(&mut self, program_name: &str, tags: TagSet) -> bool {
        self.entries.insert(text::fold(program_name), (program_name.trim().to_owned(), tags)).is_some()
    }

    pub fn get(&self, program_name: &str) -> Option<&TagSet> {
        self.entries.get(&text::fold(program_name)).map(|(_, tags)| tags)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(path)
            .map_err(|e| Error::csv(path, e))?;
        wtr.write_record(["program_name", "tags"]).map_err(|e| Error::csv(path, e))?;
        for (name, tags) in self.entries.values() {
            wtr.write_record([name.as_str(), &format_tag_list(tags)]).map_err(|e| Error::csv(path, e))?;
        }
        wtr.flush().map_err(|e| Error::io(path, e))
    }
}

/// Rule table plus override table.
#[derive(Debug, Clone, Default)]
pub struct Tagger {
    pub rules: RuleSet,
    pub overrides: Overrides,
}

impl Tagger {
    pub fn new(rules: RuleSet, overrides: Overrides) -> Self {
        Tagger { rules, overrides }
    }

    pub fn bundled() -> Self {
        Tagger::new(RuleSet::bundled(), Overrides::default())
    }

    /// Subject tags for a program name; the empty set means "untagged".
    pub fn tag_program(&self, name: &str) -> Result<TagSet> {
        if name.trim().is_empty() {
            return Err(Error::InvalidInput("program name is empty".into()));
        }
        if let Some(tags) = self.overrides.get(name) {
            return Ok(tags.clone());
        }
        Ok(self.rules.apply(name))
    }
}
