//! File-to-file stages behind the command-line subcommands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::geodesy::{CapitalTable, CountryId, CountryRegistry};
use crate::ingest::{
    self, manifest_path, read_jsonl, write_jsonl, IngestContext, RecommendationRecord, RunManifest,
};
use crate::llmclient::{run_experiment, ChatBackend, ExperimentSummary};
use crate::metrics::{ScoredRecord, ScoringContext};
use crate::profiles::{
    enumerate_profiles, render_grid, ProfileDirectory, PromptInstance, PromptTemplates, Variant,
};
use crate::report::{self, Dimension, ExportFormat, FrequencyKey, GrsScope, Table};
use crate::taxonomy::{Overrides, RuleSet, TagSet, Tagger};

pub fn load_capitals(cfg: &RunConfig) -> Result<CapitalTable> {
    let registry = match &cfg.paths.countries {
        Some(p) => {
            let f = std::fs::File::open(p).map_err(|e| Error::io(p, e))?;
            CountryRegistry::from_reader(f, p)?
        }
        None => CountryRegistry::bundled(),
    };
    let required = &cfg.grid.nationalities;
    match &cfg.paths.capitals {
        Some(p) => CapitalTable::load(p, registry, required),
        None if cfg.paths.countries.is_some() => CapitalTable::from_reader(
            crate::geodesy::bundled_capitals_csv().as_bytes(),
            Path::new("<bundled capitals.csv>"),
            registry,
            required,
        ),
        None => CapitalTable::bundled(required),
    }
}

pub fn load_catalog(cfg: &RunConfig, capitals: &CapitalTable) -> Result<Catalog> {
    let path = cfg.paths.catalog.as_ref().ok_or_else(|| Error::Config("paths.catalog is not set".into()))?;
    let mut catalog = Catalog::load(path, capitals)?;
    if let Some(aliases) = &cfg.paths.aliases {
        catalog.load_aliases(aliases)?;
    }
    Ok(catalog)
}

pub fn load_tagger(cfg: &RunConfig) -> Result<Tagger> {
    let rules = match &cfg.paths.rules {
        Some(p) => RuleSet::load(p)?,
        None => RuleSet::bundled(),
    };
    let overrides = match &cfg.paths.overrides {
        Some(p) => Overrides::load(p)?,
        None => Overrides::default(),
    };
    Ok(Tagger::new(rules, overrides))
}

pub fn load_templates(cfg: &RunConfig) -> Result<PromptTemplates> {
    match &cfg.paths.templates {
        Some(dir) => PromptTemplates::load_dir(dir),
        None => Ok(PromptTemplates::bundled()),
    }
}

pub fn profile_directory(cfg: &RunConfig) -> Result<ProfileDirectory> {
    ProfileDirectory::standard(&cfg.grid)
}

/// Writes the profile grid as JSONL.
pub fn stage_profiles(cfg: &RunConfig, out: &Path) -> Result<usize> {
    let profiles = enumerate_profiles(&cfg.grid)?;
    write_jsonl(out, &profiles)?;
    Ok(profiles.len())
}

pub fn build_prompts(cfg: &RunConfig, variants: &[Variant]) -> Result<Vec<PromptInstance>> {
    let templates = load_templates(cfg)?;
    let interests = cfg.interest_tags()?;
    let mut out = Vec::new();
    for v in variants {
        let tags = interests.get(v).cloned().unwrap_or_default();
        out.extend(render_grid(&cfg.grid, *v, &templates, &tags)?);
    }
    Ok(out)
}

pub fn stage_prompts(cfg: &RunConfig, variants: &[Variant], out: &Path) -> Result<usize> {
    let prompts = build_prompts(cfg, variants)?;
    write_jsonl(out, &prompts)?;
    Ok(prompts.len())
}

/// Prompts either from a prompt JSONL file or rendered from the config.
pub fn stage_query(
    cfg: &RunConfig,
    model: Option<&str>,
    variants: &[Variant],
    prompts_file: Option<&Path>,
    backend: &dyn ChatBackend,
    out: &Path,
) -> Result<ExperimentSummary> {
    let endpoint = cfg.endpoint(model)?;
    let prompts: Vec<PromptInstance> = match prompts_file {
        Some(p) => read_jsonl(p)?,
        None => build_prompts(cfg, variants)?,
    };
    run_experiment(&prompts, endpoint, backend, out)
}

pub fn stage_ingest(cfg: &RunConfig, input: &Path, out: &Path) -> Result<RunManifest> {
    let capitals = load_capitals(cfg)?;
    let catalog = load_catalog(cfg, &capitals)?;
    let tagger = load_tagger(cfg)?;
    let profiles = profile_directory(cfg)?;
    let ctx = IngestContext {
        catalog: &catalog,
        tagger: &tagger,
        profiles: &profiles,
        fuzzy_threshold: cfg.metrics.fuzzy_threshold,
    };
    let log = ingest::ingest_run(input, &ctx)?;
    ingest::write_run_log(&log, out)?;
    Ok(log.manifest)
}

fn read_manifest(records_path: &Path) -> Result<Option<RunManifest>> {
    let path = manifest_path(records_path);
    match std::fs::read_to_string(&path) {
        Ok(s) => Ok(Some(serde_json::from_str(&s)?)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(path, e)),
    }
}

pub fn scoring_interests(cfg: &RunConfig) -> Result<BTreeMap<Variant, TagSet>> {
    cfg.interest_tags()
}

/// Scores parsed records; the ingest manifest, if present, travels along.
pub fn stage_score(cfg: &RunConfig, input: &Path, out: &Path) -> Result<usize> {
    let capitals = load_capitals(cfg)?;
    let catalog = load_catalog(cfg, &capitals)?;
    let profiles = profile_directory(cfg)?;
    let records: Vec<RecommendationRecord> = read_jsonl(input)?;
    let ctx = ScoringContext {
        catalog: &catalog,
        capitals: &capitals,
        profiles: &profiles,
        params: cfg.metrics.params(),
        interests: scoring_interests(cfg)?,
    };
    let scored = ctx.score_all(&records)?;
    write_jsonl(out, &scored)?;
    if let Some(manifest) = read_manifest(input)? {
        let mpath = manifest_path(out);
        let json = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(&mpath, json + "\n").map_err(|e| Error::io(&mpath, e))?;
    }
    Ok(scored.len())
}

fn status_map(cfg: &RunConfig, capitals: &CapitalTable) -> Result<BTreeMap<CountryId, String>> {
    match &cfg.paths.development_status {
        Some(p) => report::load_status_map(p, capitals),
        None => Ok(BTreeMap::new()),
    }
}

pub fn grs_tables(
    cfg: &RunConfig,
    scored: &[ScoredRecord],
    catalog: &Catalog,
    capitals: &CapitalTable,
    scope: GrsScope,
) -> Result<Vec<Table>> {
    let grs =
        report::grs_by_country(scored, catalog, scope, &cfg.requested_countries(), cfg.metrics.epsilon)?;
    let mut tables =
        vec![report::grs_table(&grs, &status_map(cfg, capitals)?), report::no_coverage_table(&grs)];
    let mut deltas = Vec::new();
    for other in [Variant::Regional, Variant::Background] {
        deltas.extend(report::compare_variants(&grs, Variant::Base, other));
    }
    tables.push(report::delta_table(&deltas));
    Ok(tables)
}

/// Every report table, in a fixed order.
pub fn report_tables(
    cfg: &RunConfig,
    scored: &[ScoredRecord],
    manifest: Option<&RunManifest>,
    catalog: &Catalog,
    capitals: &CapitalTable,
    scope: GrsScope,
) -> Result<Vec<Table>> {
    let mut groups = Vec::new();
    for d in Dimension::ALL {
        groups.extend(report::aggregate_drs(scored, d));
    }
    let mut tables = vec![report::drs_table(&groups)];
    tables.extend(grs_tables(cfg, scored, catalog, capitals, scope)?);
    tables.push(report::diversity_table(&report::diversity_summary(scored, manifest)));
    for key in [FrequencyKey::University, FrequencyKey::Country, FrequencyKey::Program] {
        for group in [None, Some(Dimension::Gender), Some(Dimension::EconomicClass)] {
            let rows = report::frequency_tables(scored, key, group, cfg.report.top_n)?;
            tables.push(report::frequency_table(key, group, &rows));
        }
    }
    tables.push(report::alignment_table(&report::nationality_alignment_matrix(scored)));
    Ok(tables)
}

fn load_scored(input: &Path) -> Result<(Vec<ScoredRecord>, Option<RunManifest>)> {
    Ok((read_jsonl(input)?, read_manifest(input)?))
}

pub fn stage_grs(
    cfg: &RunConfig,
    input: &Path,
    out_dir: &Path,
    scope: GrsScope,
    format: ExportFormat,
) -> Result<Vec<PathBuf>> {
    let capitals = load_capitals(cfg)?;
    let catalog = load_catalog(cfg, &capitals)?;
    let (scored, _) = load_scored(input)?;
    report::export(&grs_tables(cfg, &scored, &catalog, &capitals, scope)?, out_dir, format)
}

pub fn stage_report(
    cfg: &RunConfig,
    input: &Path,
    out_dir: &Path,
    scope: GrsScope,
    format: ExportFormat,
) -> Result<Vec<PathBuf>> {
    let capitals = load_capitals(cfg)?;
    let catalog = load_catalog(cfg, &capitals)?;
    let (scored, manifest) = load_scored(input)?;
    let tables = report_tables(cfg, &scored, manifest.as_ref(), &catalog, &capitals, scope)?;
    report::export(&tables, out_dir, format)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub capitals: usize,
    pub catalog_universities: Option<usize>,
    pub catalog_countries: Option<usize>,
    pub tag_rules: usize,
    pub overrides: usize,
    pub profiles: usize,
    pub endpoints: usize,
    pub warnings: Vec<String>,
}

/// Loads every configured asset and checks it, failing on the first problem.
pub fn stage_validate(cfg: &RunConfig) -> Result<ValidationReport> {
    cfg.validate()?;
    let capitals = load_capitals(cfg)?;
    let tagger = load_tagger(cfg)?;
    load_templates(cfg)?;
    let profiles = enumerate_profiles(&cfg.grid)?;
    let mut report = ValidationReport {
        capitals: capitals.len(),
        tag_rules: tagger.rules.len(),
        overrides: tagger.overrides.len(),
        profiles: profiles.len(),
        endpoints: cfg.endpoints.len(),
        warnings: tagger.overrides.warnings().to_vec(),
        ..Default::default()
    };
    if cfg.paths.catalog.is_some() {
        let catalog = load_catalog(cfg, &capitals)?;
        report.catalog_universities = Some(catalog.global_count());
        report.catalog_countries = Some(catalog.per_country_counts().len());
        report.warnings.extend(catalog.warnings().iter().cloned());
        for c in cfg.requested_countries() {
            if catalog.country_count(&c) == 0 {
                report.warnings.push(format!("no catalog universities in {c}"));
            }
        }
    } else {
        report.warnings.push("paths.catalog is not set; ingest and scoring stages will fail".into());
    }
    for e in &cfg.endpoints {
        if let Some(var) = &e.api_key_env {
            if std::env::var_os(var).is_none() {
                report.warnings.push(format!("{}: environment variable `{var}` is not set", e.model_id));
            }
        }
    }
    Ok(report)
}
