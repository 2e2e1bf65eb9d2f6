//! Group aggregation, GRS tables, diversity and frequency summaries, export.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::geodesy::CountryId;
use crate::ingest::{slice_key, RunManifest};
use crate::metrics::{country_grs, CountryGrsResult, ScoredRecord};
use crate::profiles::{EconomicClass, Gender, Variant};
use crate::text;

pub const UNSPECIFIED: &str = "unspecified";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Overall,
    Gender,
    EconomicClass,
    Nationality,
}

impl Dimension {
    pub const ALL: [Dimension; 4] =
        [Dimension::Overall, Dimension::Gender, Dimension::EconomicClass, Dimension::Nationality];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Overall => "overall",
            Dimension::Gender => "gender",
            Dimension::EconomicClass => "economic_class",
            Dimension::Nationality => "nationality",
        }
    }
}

impl FromStr for Dimension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        Dimension::ALL
            .into_iter()
            .find(|d| d.as_str() == key || (key == "class" && *d == Dimension::EconomicClass))
            .ok_or_else(|| Error::InvalidInput(format!("unknown dimension `{s}`")))
    }
}

/// Sort key and label for a record's group under `dimension`.
fn group_of(r: &ScoredRecord, dimension: Dimension) -> (u32, String) {
    let d = &r.demographics;
    match dimension {
        Dimension::Overall => (0, "all".to_owned()),
        Dimension::Gender => match d.gender {
            Some(g) => (Gender::ALL.iter().position(|x| *x == g).unwrap_or(0) as u32, g.to_string()),
            None => (u32::MAX, UNSPECIFIED.to_owned()),
        },
        Dimension::EconomicClass => match d.economic_class {
            Some(c) => (EconomicClass::ALL.iter().position(|x| *x == c).unwrap_or(0) as u32, c.to_string()),
            None => (u32::MAX, UNSPECIFIED.to_owned()),
        },
        Dimension::Nationality => match &d.nationality {
            Some(n) => (0, n.to_string()),
            None => (u32::MAX, UNSPECIFIED.to_owned()),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAggregate {
    pub model_id: String,
    pub variant: Variant,
    pub dimension: Dimension,
    pub group_value: String,
    pub mean_acc: Option<f64>,
    pub n_acc: usize,
    pub mean_rep: f64,
    pub mean_acad: Option<f64>,
    pub n_acad: usize,
    pub mean_drs: f64,
    pub n_records: usize,
}

#[derive(Default)]
struct Accum {
    acc: f64,
    n_acc: usize,
    rep: f64,
    acad: f64,
    n_acad: usize,
    drs: f64,
    n: usize,
}

fn mean(sum: f64, n: usize) -> Option<f64> {
    (n > 0).then(|| sum / n as f64)
}

/// Record-level means per (model, variant, group). Acc and Acad average only
/// over records where they are defined.
pub fn aggregate_drs(records: &[ScoredRecord], dimension: Dimension) -> Vec<GroupAggregate> {
    let mut groups: BTreeMap<(String, Variant, u32, String), Accum> = BTreeMap::new();
    for r in records {
        let (order, label) = group_of(r, dimension);
        let a = groups.entry((r.record.model_id.clone(), r.record.variant, order, label)).or_default();
        if let Some(acc) = r.acc {
            a.acc += acc;
            a.n_acc += 1;
        }
        if let Some(acad) = r.acad {
            a.acad += acad;
            a.n_acad += 1;
        }
        a.rep += r.rep;
        a.drs += r.drs;
        a.n += 1;
    }
    groups
        .into_iter()
        .map(|((model_id, variant, _, group_value), a)| GroupAggregate {
            model_id,
            variant,
            dimension,
            group_value,
            mean_acc: mean(a.acc, a.n_acc),
            n_acc: a.n_acc,
            mean_rep: a.rep / a.n as f64,
            mean_acad: mean(a.acad, a.n_acad),
            n_acad: a.n_acad,
            mean_drs: a.drs / a.n as f64,
            n_records: a.n,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrsScope {
    #[default]
    Global,
    Nationality,
}

impl FromStr for GrsScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "global" => Ok(GrsScope::Global),
            "nationality" => Ok(GrsScope::Nationality),
            other => Err(Error::InvalidInput(format!("unknown GRS scope `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrsRow {
    pub model_id: String,
    pub variant: Variant,
    #[serde(flatten)]
    pub result: CountryGrsResult,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GrsTable {
    pub rows: Vec<GrsRow>,
    /// Requested countries without any catalog universities.
    pub no_coverage: Vec<CountryId>,
}

/// Per-country GRS for every (model, variant) slice in `records`.
///
/// Rows cover each country with at least one resolved recommendation plus
/// every `requested` country (zero rows when nothing was recommended there).
/// Under [`GrsScope::Nationality`] a country only counts recommendations made
/// to students of that nationality.
pub fn grs_by_country(
    records: &[ScoredRecord],
    catalog: &Catalog,
    scope: GrsScope,
    requested: &[CountryId],
    epsilon: f64,
) -> Result<GrsTable> {
    let mut slices: BTreeMap<(String, Variant), BTreeMap<CountryId, BTreeMap<String, usize>>> =
        BTreeMap::new();
    for r in records {
        let slice = slices.entry((r.record.model_id.clone(), r.record.variant)).or_default();
        let (Some(m), Some(country)) = (&r.record.match_result.university, &r.university_country) else {
            continue;
        };
        if scope == GrsScope::Nationality && r.demographics.nationality.as_ref() != Some(country) {
            continue;
        }
        *slice.entry(country.clone()).or_default().entry(m.id.clone()).or_default() += 1;
    }
    let mut table = GrsTable::default();
    let mut no_coverage = BTreeSet::new();
    for ((model_id, variant), by_country) in slices {
        let mut countries: BTreeSet<CountryId> = by_country.keys().cloned().collect();
        for c in requested {
            if catalog.country_count(c) == 0 {
                no_coverage.insert(c.clone());
            } else {
                countries.insert(c.clone());
            }
        }
        let empty = BTreeMap::new();
        for c in countries {
            let counts = by_country.get(&c).unwrap_or(&empty);
            table.rows.push(GrsRow {
                model_id: model_id.clone(),
                variant,
                result: country_grs(&c, counts, catalog, epsilon)?,
            });
        }
    }
    table.no_coverage = no_coverage.into_iter().collect();
    Ok(table)
}

/// Relative change between two GRS values, with the markers used for zero
/// baselines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Delta {
    Unchanged,
    New,
    Removed,
    Percent(f64),
}

impl Delta {
    pub fn between(base: f64, other: f64) -> Delta {
        match (base == 0.0, other == 0.0) {
            (true, true) => Delta::Unchanged,
            (true, false) => Delta::New,
            (false, true) => Delta::Removed,
            (false, false) => Delta::Percent((other - base) / base * 100.0),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Delta::Unchanged => "0%".into(),
            Delta::New => "New".into(),
            Delta::Removed => "-100%".into(),
            Delta::Percent(p) => format!("{:+.1}%", clean_zero(*p)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrsDeltaRow {
    pub model_id: String,
    pub country: CountryId,
    pub base_variant: Variant,
    pub other_variant: Variant,
    pub base_grs: f64,
    pub other_grs: f64,
    pub delta: Delta,
}

/// Compares each model's `other` variant against `base`, country by country.
pub fn compare_variants(table: &GrsTable, base: Variant, other: Variant) -> Vec<GrsDeltaRow> {
    let mut by_model: BTreeMap<&str, BTreeMap<&CountryId, (f64, f64)>> = BTreeMap::new();
    let mut has: BTreeSet<(&str, Variant)> = BTreeSet::new();
    for row in &table.rows {
        has.insert((&row.model_id, row.variant));
        let slot =
            by_model.entry(&row.model_id).or_default().entry(&row.result.country).or_insert((0.0, 0.0));
        if row.variant == base {
            slot.0 = row.result.grs;
        } else if row.variant == other {
            slot.1 = row.result.grs;
        }
    }
    let mut out = Vec::new();
    for (model, countries) in by_model {
        if !has.contains(&(model, base)) || !has.contains(&(model, other)) {
            continue;
        }
        for (country, (b, o)) in countries {
            out.push(GrsDeltaRow {
                model_id: model.to_owned(),
                country: country.clone(),
                base_variant: base,
                other_variant: other,
                base_grs: b,
                other_grs: o,
                delta: Delta::between(b, o),
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiversitySummary {
    pub model_id: String,
    pub variant: Variant,
    pub total_responses: usize,
    pub total_recommendations: usize,
    pub unique_universities: usize,
    pub unique_programs: usize,
    pub unique_countries: usize,
}

/// Distinct universities (resolved id, or folded raw name when unmatched),
/// programs (folded raw name) and resolved countries per slice. Response
/// counts come from the ingest manifest when one is given, so refusals are
/// included.
pub fn diversity_summary(records: &[ScoredRecord], manifest: Option<&RunManifest>) -> Vec<DiversitySummary> {
    #[derive(Default)]
    struct Sets {
        responses: BTreeSet<(String, u32)>,
        recs: usize,
        unis: BTreeSet<String>,
        programs: BTreeSet<String>,
        countries: BTreeSet<CountryId>,
    }
    let mut slices: BTreeMap<(String, Variant), Sets> = BTreeMap::new();
    for r in records {
        let rec = &r.record;
        let s = slices.entry((rec.model_id.clone(), rec.variant)).or_default();
        s.responses.insert((rec.profile_id.clone(), rec.run_index));
        s.recs += 1;
        s.unis.insert(match &rec.match_result.university {
            Some(m) => m.id.clone(),
            None => format!("raw:{}", text::fold(&rec.raw_university)),
        });
        let program = text::fold(&rec.raw_program);
        if !program.is_empty() {
            s.programs.insert(program);
        }
        if let Some(c) = &r.university_country {
            s.countries.insert(c.clone());
        }
    }
    if let Some(m) = manifest {
        for (model, variants) in m.models.iter().map(|mo| (mo, &m.variants)) {
            for v in variants {
                if m.slices.contains_key(&slice_key(model, *v)) {
                    slices.entry((model.clone(), *v)).or_default();
                }
            }
        }
    }
    slices
        .into_iter()
        .map(|((model_id, variant), s)| {
            let total_responses = manifest
                .and_then(|m| m.slices.get(&slice_key(&model_id, variant)))
                .map_or(s.responses.len(), |c| c.responses);
            DiversitySummary {
                model_id,
                variant,
                total_responses,
                total_recommendations: s.recs,
                unique_universities: s.unis.len(),
                unique_programs: s.programs.len(),
                unique_countries: s.countries.len(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyKey {
    Country,
    University,
    Program,
}

impl FrequencyKey {
    pub fn as_str(self) -> &'static str {
        match self {
            FrequencyKey::Country => "country",
            FrequencyKey::University => "university",
            FrequencyKey::Program => "program",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyRow {
    pub model_id: String,
    pub variant: Variant,
    pub group: String,
    pub name: String,
    pub count: usize,
    pub share: f64,
}

fn frequency_name(r: &ScoredRecord, key: FrequencyKey) -> Option<String> {
    match key {
        FrequencyKey::Country => r.university_country.as_ref().map(|c| c.to_string()),
        FrequencyKey::University => Some(match &r.record.match_result.university {
            Some(m) => m.name.clone(),
            None => r.record.raw_university.trim().to_owned(),
        }),
        FrequencyKey::Program => {
            let p = r.record.raw_program.trim();
            (!p.is_empty()).then(|| p.to_owned())
        }
    }
}

/// Top-`top_n` names per (model, variant, group) by descending count, ties
/// broken alphabetically. `share` is relative to the group's counted total.
pub fn frequency_tables(
    records: &[ScoredRecord],
    key: FrequencyKey,
    group_by: Option<Dimension>,
    top_n: usize,
) -> Result<Vec<FrequencyRow>> {
    if top_n == 0 {
        return Err(Error::InvalidInput("top_n must be at least 1".into()));
    }
    let dimension = group_by.unwrap_or(Dimension::Overall);
    let mut counts: BTreeMap<(String, Variant, u32, String), BTreeMap<String, usize>> = BTreeMap::new();
    for r in records {
        let Some(name) = frequency_name(r, key) else { continue };
        let (order, label) = group_of(r, dimension);
        *counts
            .entry((r.record.model_id.clone(), r.record.variant, order, label))
            .or_default()
            .entry(name)
            .or_default() += 1;
    }
    let mut out = Vec::new();
    for ((model_id, variant, _, group), names) in counts {
        let total: usize = names.values().sum();
        let mut ranked: Vec<(String, usize)> = names.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        for (name, count) in ranked.into_iter().take(top_n) {
            out.push(FrequencyRow {
                model_id: model_id.clone(),
                variant,
                group: group.clone(),
                name,
                count,
                share: count as f64 / total as f64,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentCell {
    pub model_id: String,
    pub variant: Variant,
    pub nationality: CountryId,
    pub country: CountryId,
    pub count: usize,
    pub proportion: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AlignmentMatrix {
    pub cells: Vec<AlignmentCell>,
    pub unmatched_excluded: usize,
    pub no_nationality_excluded: usize,
}

/// Share of each nationality's resolved recommendations going to each
/// country; each row sums to 1.
pub fn nationality_alignment_matrix(records: &[ScoredRecord]) -> AlignmentMatrix {
    let mut m = AlignmentMatrix::default();
    let mut counts: BTreeMap<(String, Variant, CountryId), BTreeMap<CountryId, usize>> = BTreeMap::new();
    for r in records {
        let Some(nat) = &r.demographics.nationality else {
            m.no_nationality_excluded += 1;
            continue;
        };
        let Some(country) = &r.university_country else {
            m.unmatched_excluded += 1;
            continue;
        };
        *counts
            .entry((r.record.model_id.clone(), r.record.variant, nat.clone()))
            .or_default()
            .entry(country.clone())
            .or_default() += 1;
    }
    for ((model_id, variant, nationality), row) in counts {
        let total: usize = row.values().sum();
        for (country, count) in row {
            m.cells.push(AlignmentCell {
                model_id: model_id.clone(),
                variant,
                nationality: nationality.clone(),
                country,
                count,
                proportion: count as f64 / total as f64,
            });
        }
    }
    m
}

/// Reads a user-supplied `country,status` table (e.g. developed/developing).
pub fn load_status_map(
    path: &Path,
    catalog_countries: &crate::geodesy::CapitalTable,
) -> Result<BTreeMap<CountryId, String>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    status_map_from_reader(file, path, catalog_countries)
}

#[derive(Deserialize)]
struct StatusRow {
    country: String,
    status: String,
}

pub fn status_map_from_reader(
    reader: impl Read,
    source: &Path,
    capitals: &crate::geodesy::CapitalTable,
) -> Result<BTreeMap<CountryId, String>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = BTreeMap::new();
    for (i, row) in rdr.deserialize::<StatusRow>().enumerate() {
        let row = row.map_err(|e| Error::csv(source, e))?;
        let id = capitals.resolve_country(&row.country).ok_or_else(|| Error::Parse {
            path: source.to_path_buf(),
            line: i + 2,
            message: format!("unknown country `{}`", row.country.trim()),
        })?;
        out.insert(id, row.status.trim().to_owned());
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// export

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    Csv,
    Json,
    Markdown,
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Csv => "csv",
            ExportFormat::Json => "json",
            ExportFormat::Markdown => "md",
        }
    }
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            "markdown" | "md" => Ok(ExportFormat::Markdown),
            other => Err(Error::InvalidInput(format!("unknown export format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Int(usize),
    Float(f64),
    Missing,
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_owned())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<usize> for Cell {
    fn from(n: usize) -> Self {
        Cell::Int(n)
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Missing, Cell::Float)
    }
}

fn clean_zero(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x
    }
}

impl Cell {
    fn fixed(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(n) => n.to_string(),
            Cell::Float(x) => format!("{:.4}", clean_zero(*x)),
            Cell::Missing => String::new(),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Cell::Text(s) => serde_json::Value::String(s.clone()),
            Cell::Int(n) => serde_json::Value::from(*n),
            Cell::Float(x) => serde_json::Number::from_f64(clean_zero(*x))
                .map_or(serde_json::Value::Null, serde_json::Value::Number),
            Cell::Missing => serde_json::Value::Null,
        }
    }
}

/// A named rectangular table ready for export.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table {
            name: name.to_owned(),
            columns: columns.iter().map(|c| (*c).to_owned()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut wtr =
            csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let path = PathBuf::from(&self.name);
        wtr.write_record(&self.columns).map_err(|e| Error::csv(&path, e))?;
        for row in &self.rows {
            wtr.write_record(row.iter().map(Cell::fixed)).map_err(|e| Error::csv(&path, e))?;
        }
        let bytes = wtr.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::InvalidInput(e.to_string()))
    }

    /// Array of objects; keys sorted, floats at full precision.
    pub fn to_json(&self) -> Result<String> {
        let rows: Vec<serde_json::Map<String, serde_json::Value>> = self
            .rows
            .iter()
            .map(|row| self.columns.iter().cloned().zip(row.iter().map(Cell::json)).collect())
            .collect();
        Ok(serde_json::to_string_pretty(&rows)? + "\n")
    }

    pub fn to_markdown(&self) -> String {
        let escape = |s: String| s.replace('|', "\\|");
        let mut out = String::new();
        let _ = writeln!(out, "| {} |", self.columns.join(" | "));
        let _ = writeln!(out, "|{}|", self.columns.iter().map(|_| "---").collect::<Vec<_>>().join("|"));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|c| escape(c.fixed())).collect();
            let _ = writeln!(out, "| {} |", cells.join(" | "));
        }
        out
    }

    pub fn render(&self, format: ExportFormat) -> Result<String> {
        match format {
            ExportFormat::Csv => self.to_csv(),
            ExportFormat::Json => self.to_json(),
            ExportFormat::Markdown => Ok(self.to_markdown()),
        }
    }
}

/// Writes each table to `<dir>/<name>.<ext>` and returns the paths.
pub fn export(tables: &[Table], dir: &Path, format: ExportFormat) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::with_capacity(tables.len());
    for t in tables {
        let path = dir.join(format!("{}.{}", t.name, format.extension()));
        std::fs::write(&path, t.render(format)?).map_err(|e| Error::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}

pub fn drs_table(rows: &[GroupAggregate]) -> Table {
    let mut t = Table::new(
        "drs_groups",
        &[
            "model_id",
            "variant",
            "dimension",
            "group",
            "mean_acc",
            "n_acc",
            "mean_rep",
            "mean_acad",
            "n_acad",
            "mean_drs",
            "n_records",
        ],
    );
    for r in rows {
        t.push(vec![
            r.model_id.as_str().into(),
            r.variant.as_str().into(),
            r.dimension.as_str().into(),
            r.group_value.clone().into(),
            r.mean_acc.into(),
            r.n_acc.into(),
            r.mean_rep.into(),
            r.mean_acad.into(),
            r.n_acad.into(),
            r.mean_drs.into(),
            r.n_records.into(),
        ]);
    }
    t
}

pub fn grs_table(table: &GrsTable, status: &BTreeMap<CountryId, String>) -> Table {
    let mut t = Table::new(
        "grs_by_country",
        &[
            "model_id",
            "variant",
            "country",
            "status",
            "repr",
            "avail",
            "scaled_repr",
            "rep_covg",
            "grs",
            "recommended_set_size",
            "recommendation_count",
        ],
    );
    for row in &table.rows {
        let r = &row.result;
        t.push(vec![
            row.model_id.as_str().into(),
            row.variant.as_str().into(),
            r.country.to_string().into(),
            status.get(&r.country).cloned().unwrap_or_default().into(),
            r.repr.into(),
            r.avail.into(),
            r.scaled_repr.into(),
            r.rep_covg.into(),
            r.grs.into(),
            r.recommended_set_size.into(),
            r.recommendation_count.into(),
        ]);
    }
    t
}

pub fn no_coverage_table(table: &GrsTable) -> Table {
    let mut t = Table::new("grs_no_coverage", &["country"]);
    for c in &table.no_coverage {
        t.push(vec![c.to_string().into()]);
    }
    t
}

pub fn delta_table(rows: &[GrsDeltaRow]) -> Table {
    let mut t = Table::new(
        "grs_variant_delta",
        &["model_id", "country", "base_variant", "other_variant", "base_grs", "other_grs", "delta"],
    );
    for r in rows {
        t.push(vec![
            r.model_id.as_str().into(),
            r.country.to_string().into(),
            r.base_variant.as_str().into(),
            r.other_variant.as_str().into(),
            r.base_grs.into(),
            r.other_grs.into(),
            r.delta.label().into(),
        ]);
    }
    t
}

pub fn diversity_table(rows: &[DiversitySummary]) -> Table {
    let mut t = Table::new(
        "diversity",
        &[
            "model_id",
            "variant",
            "total_responses",
            "total_recommendations",
            "unique_universities",
            "unique_programs",
            "unique_countries",
        ],
    );
    for r in rows {
        t.push(vec![
            r.model_id.as_str().into(),
            r.variant.as_str().into(),
            r.total_responses.into(),
            r.total_recommendations.into(),
            r.unique_universities.into(),
            r.unique_programs.into(),
            r.unique_countries.into(),
        ]);
    }
    t
}

pub fn frequency_table(key: FrequencyKey, dimension: Option<Dimension>, rows: &[FrequencyRow]) -> Table {
    let name = match dimension {
        None | Some(Dimension::Overall) => format!("frequency_{}", key.as_str()),
        Some(d) => format!("frequency_{}_by_{}", key.as_str(), d.as_str()),
    };
    let mut t = Table::new(&name, &["model_id", "variant", "group", "rank", key.as_str(), "count", "share"]);
    let mut rank = 0;
    let mut last: Option<(&str, Variant, &str)> = None;
    for r in rows {
        let cur = (r.model_id.as_str(), r.variant, r.group.as_str());
        rank = if last == Some(cur) { rank + 1 } else { 1 };
        last = Some(cur);
        t.push(vec![
            r.model_id.as_str().into(),
            r.variant.as_str().into(),
            r.group.as_str().into(),
            (rank as usize).into(),
            r.name.as_str().into(),
            r.count.into(),
            r.share.into(),
        ]);
    }
    t
}

pub fn alignment_table(m: &AlignmentMatrix) -> Table {
    let mut t = Table::new(
        "nationality_alignment",
        &["model_id", "variant", "nationality", "country", "count", "proportion"],
    );
    for c in &m.cells {
        t.push(vec![
            c.model_id.as_str().into(),
            c.variant.as_str().into(),
            c.nationality.to_string().into(),
            c.country.to_string().into(),
            c.count.into(),
            c.proportion.into(),
        ]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_markers() {
        assert_eq!(Delta::between(0.0, 0.0).label(), "0%");
        assert_eq!(Delta::between(0.0, 0.52).label(), "New");
        assert_eq!(Delta::between(0.8972, 0.0).label(), "-100%");
        assert_eq!(Delta::between(0.9848, 0.9895).label(), "+0.5%");
        assert_eq!(Delta::between(0.9457, 0.7733).label(), "-18.2%");
        assert_eq!(Delta::between(0.5204, 0.5783).label(), "+11.1%");
    }

    #[test]
    fn markdown_rendering() {
        let mut t = Table::new("x", &["country", "grs"]);
        t.push(vec!["India".into(), 0.0.into()]);
        t.push(vec!["United States".into(), 0.889_52.into()]);
        assert_eq!(
            t.to_markdown(),
            "| country | grs |\n|---|---|\n| India | 0.0000 |\n| United States | 0.8895 |\n"
        );
    }

    #[test]
    fn csv_and_json_rendering() {
        let mut t = Table::new("x", &["b", "a"]);
        t.push(vec![Cell::Missing, (-0.0).into()]);
        t.push(vec!["p,q".into(), Cell::Float(1.0 / 3.0)]);
        assert_eq!(t.to_csv().unwrap(), "b,a\n,0.0000\n\"p,q\",0.3333\n");
        let json = t.to_json().unwrap();
        assert!(json.find("\"a\"").unwrap() < json.find("\"b\"").unwrap());
        assert!(json.contains("0.3333333333333333"));
    }
}
