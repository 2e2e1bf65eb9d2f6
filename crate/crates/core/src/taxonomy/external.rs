//! Optional model-based tagging with the rule table as fallback.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{Overrides, SubjectTag, TagSet, Tagger};
use crate::llmclient::{complete, ChatBackend, ModelEndpointConfig};

/// Hand-written examples for the few-shot prompt. Reconstructed, not taken
/// from any published prompt.
pub const FEW_SHOT_EXAMPLES: [(&str, &str); 6] = [
    ("MSc in Data Science", "ET, NS"),
    ("MA in Gender Studies", "SSM"),
    ("Master of Public Health", "LSM, SSM"),
    ("MA in Art History", "AH"),
    ("MSc Mechanical Engineering", "ET"),
    ("MSc Marine Biology", "LSM, NS"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TagSource {
    External,
    /// Model output was unusable; the rule table answered instead.
    RuleFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalTagging {
    pub tags: TagSet,
    pub source: TagSource,
    /// Set when the endpoint failed or its answer was rejected.
    pub error: Option<String>,
}

fn build_prompt(name: &str) -> String {
    let mut p = String::from(
        "Classify the graduate program into one or more of these subject areas. \
         Answer with the codes only, comma-separated.\n\
         AH = Arts & Humanities\nET = Engineering & Technology\n\
         LSM = Life Sciences & Medicine\nNS = Natural Sciences\n\
         SSM = Social Sciences & Management\n\n",
    );
    for (example, answer) in FEW_SHOT_EXAMPLES {
        p.push_str(&format!("Program: {example}\nTags: {answer}\n\n"));
    }
    p.push_str(&format!("Program: {name}\nTags:"));
    p
}

/// Strict parse of the model's answer: every token must be one of the five
/// codes and at least one must be present.
fn parse_answer(answer: &str) -> Result<TagSet, String> {
    let first_line = answer.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    let body =
        first_line.strip_prefix("Tags:").or_else(|| first_line.strip_prefix("tags:")).unwrap_or(first_line);
    let mut tags = TagSet::new();
    for token in body.split([',', ';', '|', '/', ' ']).map(str::trim).filter(|t| !t.is_empty()) {
        let code = token.trim_matches(|c: char| !c.is_ascii_alphanumeric());
        let tag = SubjectTag::ALL
            .into_iter()
            .find(|t| t.code().eq_ignore_ascii_case(code))
            .ok_or_else(|| format!("out-of-vocabulary tag `{token}`"))?;
        tags.insert(tag);
    }
    if tags.is_empty() {
        return Err("no tags in model output".into());
    }
    Ok(tags)
}

/// Tags each name with one model call, up to `cfg.max_parallel` at a time.
/// Unparseable answers and endpoint failures fall back to the rule table and
/// carry an error note.
pub fn classify_external(
    names: &[String],
    backend: &dyn ChatBackend,
    cfg: &ModelEndpointConfig,
    tagger: &Tagger,
) -> BTreeMap<String, ExternalTagging> {
    let results = Mutex::new(BTreeMap::new());
    let next = AtomicUsize::new(0);
    let workers = cfg.max_parallel.max(1).min(names.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(name) = names.get(i) else { break };
                let outcome = match complete(backend, &build_prompt(name), cfg) {
                    Ok(done) => parse_answer(&done.completion.text),
                    Err(failed) => Err(format!("endpoint failure: {}", failed.error)),
                };
                let tagging = match outcome {
                    Ok(tags) => ExternalTagging { tags, source: TagSource::External, error: None },
                    Err(error) => {
                        log::warn!("external tagging of `{name}` fell back to rules: {error}");
                        ExternalTagging {
                            tags: tagger.tag_program(name).unwrap_or_default(),
                            source: TagSource::RuleFallback,
                            error: Some(error),
                        }
                    }
                };
                results.lock().expect("results lock").insert(name.clone(), tagging);
            });
        }
    });
    results.into_inner().expect("results lock")
}

/// Copies model-sourced results into the override table for review.
pub fn record_overrides(results: &BTreeMap<String, ExternalTagging>, overrides: &mut Overrides) -> usize {
    let mut n = 0;
    for (name, t) in results {
        if t.source == TagSource::External {
            overrides.insert(name, t.tags.clone());
            n += 1;
        }
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llmclient::{Completion, RetryPolicy, TransportError};
    use SubjectTag::*;

    struct Canned(fn(&str) -> std::result::Result<String, TransportError>);

    impl ChatBackend for Canned {
        fn chat(
            &self,
            _: &ModelEndpointConfig,
            prompt: &str,
        ) -> std::result::Result<Completion, TransportError> {
            let name = prompt.rsplit("Program: ").next().unwrap().trim_end_matches("\nTags:");
            (self.0)(name).map(|text| Completion { text, usage: None })
        }
    }

    fn cfg() -> ModelEndpointConfig {
        ModelEndpointConfig {
            model_id: "tagger".into(),
            retry: RetryPolicy { max_attempts: 2, initial_backoff_ms: 0, max_backoff_ms: 0 },
            ..Default::default()
        }
    }

    #[test]
    fn parses_codes() {
        assert_eq!(
            parse_answer(" ET, NS\n").unwrap(),
            [EngineeringTechnology, NaturalSciences].into_iter().collect()
        );
        assert!(parse_answer("Tags: ET | Astrology").is_err());
        assert!(parse_answer("").is_err());
    }

    #[test]
    fn batch_stays_in_vocabulary() {
        let backend = Canned(|name| Ok(if name.contains("Data") { "ET, NS" } else { "SSM" }.into()));
        let names = vec!["MSc in Data Science".to_owned(), "MA Gender Studies".to_owned()];
        let out = classify_external(&names, &backend, &cfg(), &Tagger::bundled());
        assert_eq!(out.len(), 2);
        for t in out.values() {
            assert_eq!(t.source, TagSource::External);
            assert!(!t.tags.is_empty() && t.tags.iter().all(|x| SubjectTag::ALL.contains(x)));
        }
        let mut overrides = Overrides::default();
        assert_eq!(record_overrides(&out, &mut overrides), 2);
        assert!(overrides.get("ma gender studies").is_some());
    }

    #[test]
    fn out_of_vocabulary_falls_back() {
        let backend = Canned(|_| Ok("Quantum Astrology".into()));
        let names = vec!["Gender Studies".to_owned()];
        let out = classify_external(&names, &backend, &cfg(), &Tagger::bundled());
        let t = &out["Gender Studies"];
        assert_eq!(t.source, TagSource::RuleFallback);
        assert!(t.error.is_some());
        assert_eq!(t.tags, [SocialSciencesManagement].into_iter().collect());
    }

    #[test]
    fn endpoint_failure_is_marked() {
        let backend = Canned(|_| Err(TransportError::Network("down".into())));
        let names = vec!["Computer Science".to_owned()];
        let out = classify_external(&names, &backend, &cfg(), &Tagger::bundled());
        let t = &out["Computer Science"];
        assert!(t.error.as_deref().unwrap().contains("endpoint failure"));
        assert_eq!(t.tags, [EngineeringTechnology].into_iter().collect());
    }
}
