//! TOML run configuration. Relative paths resolve against the config file's
//! directory; anything left out falls back to the bundled assets and the
//! reference constants.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::catalog::DEFAULT_FUZZY_THRESHOLD;
use crate::error::{Error, Result};
use crate::geodesy::CountryId;
use crate::llmclient::ModelEndpointConfig;
use crate::metrics::{DrsWeights, LambdaTable, MetricParams, EPSILON};
use crate::profiles::{prompt_nationalities, GridConfig, Variant};
use crate::report::{ExportFormat, GrsScope};
use crate::taxonomy::{parse_tag_list, SubjectTag, TagSet};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub catalog: Option<PathBuf>,
    pub capitals: Option<PathBuf>,
    pub countries: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub overrides: Option<PathBuf>,
    pub aliases: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    /// Optional `country,status` table used to label GRS rows.
    pub development_status: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub lambda: LambdaTable,
    pub weights: DrsWeights,
    pub fuzzy_threshold: f64,
    pub epsilon: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            lambda: LambdaTable::default(),
            weights: DrsWeights::default(),
            fuzzy_threshold: DEFAULT_FUZZY_THRESHOLD,
            epsilon: EPSILON,
        }
    }
}

impl MetricsConfig {
    pub fn params(&self) -> MetricParams {
        MetricParams { lambdas: self.lambda, weights: self.weights, epsilon: self.epsilon }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub scope: GrsScope,
    pub format: ExportFormat,
    pub top_n: usize,
    /// Countries that always get a GRS row; defaults to the prompt nationalities.
    pub countries: Option<Vec<CountryId>>,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig { scope: GrsScope::Global, format: ExportFormat::Csv, top_n: 20, countries: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: PathsConfig,
    pub metrics: MetricsConfig,
    pub grid: GridConfig,
    /// Student interest tags per variant, as `|`-separated codes.
    pub interests: BTreeMap<Variant, String>,
    pub report: ReportConfig,
    pub endpoints: Vec<ModelEndpointConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            paths: PathsConfig::default(),
            metrics: MetricsConfig::default(),
            grid: GridConfig::default(),
            interests: BTreeMap::from([(
                Variant::Background,
                SubjectTag::EngineeringTechnology.code().to_owned(),
            )]),
            report: ReportConfig::default(),
            endpoints: Vec::new(),
        }
    }
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let p = &mut cfg.paths;
        for slot in [
            &mut p.catalog,
            &mut p.capitals,
            &mut p.countries,
            &mut p.rules,
            &mut p.overrides,
            &mut p.aliases,
            &mut p.templates,
            &mut p.development_status,
            &mut p.output_dir,
        ] {
            resolve(base, slot);
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn interest_tags(&self) -> Result<BTreeMap<Variant, TagSet>> {
        self.interests.iter().map(|(v, s)| Ok((*v, parse_tag_list(s)?))).collect()
    }

    pub fn requested_countries(&self) -> Vec<CountryId> {
        self.report.countries.clone().unwrap_or_else(prompt_nationalities)
    }

    pub fn endpoint(&self, model: Option<&str>) -> Result<&ModelEndpointConfig> {
        match model {
            Some(m) => self
                .endpoints
                .iter()
                .find(|e| e.model_id == m)
                .ok_or_else(|| Error::Config(format!("no endpoint configured for model `{m}`"))),
            None => match self.endpoints.as_slice() {
                [only] => Ok(only),
                [] => Err(Error::Config("no endpoints configured".into())),
                _ => Err(Error::Config("several endpoints configured; pass --model".into())),
            },
        }
    }

    /// Range checks and file-existence checks; asset contents are checked by
    /// the pipeline's `validate` stage.
    pub fn validate(&self) -> Result<()> {
        self.metrics.params().validate()?;
        let t = self.metrics.fuzzy_threshold;
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Config(format!("fuzzy_threshold must be in [0, 1], got {t}")));
        }
        if self.report.top_n == 0 {
            return Err(Error::Config("report.top_n must be at least 1".into()));
        }
        self.interest_tags()?;
        for e in &self.endpoints {
            e.validate()?;
        }
        let p = &self.paths;
        for (name, path) in [
            ("catalog", &p.catalog),
            ("capitals", &p.capitals),
            ("countries", &p.countries),
            ("rules", &p.rules),
            ("overrides", &p.overrides),
            ("aliases", &p.aliases),
            ("templates", &p.templates),
            ("development_status", &p.development_status),
        ] {
            if let Some(path) = path {
                if !path.exists() {
                    return Err(Error::Config(format!("paths.{name}: {} does not exist", path.display())));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_reference_constants() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.metrics.lambda, LambdaTable::default());
        assert_eq!(cfg.metrics.epsilon, 1e-6);
        assert_eq!(cfg.metrics.fuzzy_threshold, 0.85);
        assert_eq!(cfg.grid.nationalities.len(), 40);
        let interests = cfg.interest_tags().unwrap();
        assert_eq!(interests[&Variant::Background].len(), 1);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn parses_toml() {
        let cfg = RunConfig::parse(
            r#"
            [paths]
            catalog = "data/catalog.csv"

            [metrics]
            fuzzy_threshold = 0.9
            lambda = { low = 0.002 }

            [interests]
            background = "ET|NS"

            [report]
            scope = "nationality"
            format = "markdown"

            [[endpoints]]
            model_id = "mistral-7b"
            base_url = "http://localhost:8000"
            api_key_env = "AUDIT_KEY"
            decode = { temperature = 0.5 }
            "#,
        )
        .unwrap();
        assert_eq!(cfg.metrics.fuzzy_threshold, 0.9);
        assert_eq!(cfg.metrics.lambda.low, 0.002);
        assert_eq!(cfg.metrics.lambda.high, 0.0001);
        assert_eq!(cfg.report.scope, GrsScope::Nationality);
        assert_eq!(cfg.endpoints[0].decode.temperature, 0.5);
        assert_eq!(cfg.endpoints[0].decode.top_p, 0.95);
        assert_eq!(cfg.endpoint(None).unwrap().model_id, "mistral-7b");
        assert!(cfg.endpoint(Some("other")).is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse("[metrics]\nfuzzy = 0.9\n").is_err());
        assert!(RunConfig::parse("api_key = \"secret\"\n").is_err());
    }

    #[test]
    fn missing_file_is_named() {
        let mut cfg = RunConfig::default();
        cfg.paths.capitals = Some(PathBuf::from("/nonexistent/capitals.csv"));
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("/nonexistent/capitals.csv"));
    }
}
