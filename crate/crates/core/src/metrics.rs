//! Demographic (DRS) and geographic (GRS) representation scores.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::catalog::{reputation, Catalog};
use crate::error::{Error, Result};
use crate::geodesy::{country_distance, CapitalTable, CountryId};
use crate::ingest::RecommendationRecord;
use crate::profiles::{Demographics, EconomicClass, ProfileDirectory, Variant};
use crate::taxonomy::TagSet;

/// Stabiliser in the scaled-representation denominator.
pub const EPSILON: f64 = 1e-6;
const WEIGHT_TOLERANCE: f64 = 1e-12;

/// Distance-decay rate per km for each economic class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LambdaTable {
    pub high: f64,
    pub moderate: f64,
    pub low: f64,
}

impl Default for LambdaTable {
    fn default() -> Self {
        LambdaTable { high: 0.0001, moderate: 0.0005, low: 0.001 }
    }
}

impl LambdaTable {
    pub fn lambda_for(&self, class: EconomicClass) -> f64 {
        match class {
            EconomicClass::High => self.high,
            EconomicClass::Moderate => self.moderate,
            EconomicClass::Low => self.low,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("high", self.high), ("moderate", self.moderate), ("low", self.low)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("lambda for `{name}` must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

pub fn lambda_for(class: EconomicClass) -> f64 {
    LambdaTable::default().lambda_for(class)
}

/// exp(-λ·d).
pub fn accessibility_km(lambda: f64, distance_km: f64) -> f64 {
    (-lambda * distance_km).exp()
}

pub fn accessibility(
    nationality: &CountryId,
    class: EconomicClass,
    university_country: &CountryId,
    table: &CapitalTable,
    lambdas: &LambdaTable,
) -> Result<f64> {
    let d = country_distance(nationality, university_country, table)?;
    Ok(accessibility_km(lambdas.lambda_for(class), d.km))
}

/// Jaccard overlap; `None` when both sets are empty.
pub fn academic_alignment(student: &TagSet, program: &TagSet) -> Option<f64> {
    let union = student.union(program).count();
    if union == 0 {
        return None;
    }
    Some(student.intersection(program).count() as f64 / union as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DrsWeights {
    pub acc: f64,
    pub rep: f64,
    pub acad: f64,
}

impl Default for DrsWeights {
    fn default() -> Self {
        DrsWeights { acc: 1.0 / 3.0, rep: 1.0 / 3.0, acad: 1.0 / 3.0 }
    }
}

impl DrsWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.acc, self.rep, self.acad];
        if w.iter().any(|x| *x < 0.0 || !x.is_finite()) {
            return Err(Error::Config(format!("DRS weights must be non-negative: {w:?}")));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(Error::Config(format!("DRS weights must sum to 1, got {sum}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DrsComponents {
    pub acc: Option<f64>,
    pub rep: Option<f64>,
    pub acad: Option<f64>,
}

/// Weighted mean over the components that are present, with the weights
/// renormalised to the present subset.
pub fn drs(c: &DrsComponents, w: &DrsWeights) -> Result<f64> {
    w.validate()?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (value, weight) in [(c.acc, w.acc), (c.rep, w.rep), (c.acad, w.acad)] {
        if let Some(v) = value {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidInput(format!("DRS component {v} outside [0, 1]")));
            }
            num += weight * v;
            den += weight;
        }
    }
    if den == 0.0 {
        return Err(Error::InvalidInput("DRS needs at least one weighted component".into()));
    }
    Ok((num / den).clamp(0.0, 1.0))
}

/// min(1, |Recs_c| / |Total_c|).
pub fn representation(recommended: usize, total: usize) -> Result<f64> {
    if total == 0 {
        return Err(Error::NoCoverage("country".into()));
    }
    Ok((recommended as f64 / total as f64).min(1.0))
}

/// min(1, Repr / (Avail + ε)).
pub fn scaled_representation(repr: f64, avail: f64) -> f64 {
    scaled_representation_eps(repr, avail, EPSILON)
}

pub fn scaled_representation_eps(repr: f64, avail: f64, epsilon: f64) -> f64 {
    (repr / (avail + epsilon)).min(1.0)
}

/// Count-weighted mean of local reputation over `(count, local_rep)` pairs.
pub fn reputational_coverage(items: &[(usize, f64)]) -> Option<f64> {
    let total: usize = items.iter().map(|(n, _)| n).sum();
    if total == 0 {
        return None;
    }
    let weighted: f64 = items.iter().map(|(n, r)| *n as f64 * r).sum();
    Some(weighted / total as f64)
}

/// Geometric mean of the two factors.
pub fn grs(scaled_repr: f64, rep_covg: f64) -> f64 {
    (scaled_repr * rep_covg).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryGrsResult {
    pub country: CountryId,
    pub repr: f64,
    pub avail: f64,
    pub scaled_repr: f64,
    pub rep_covg: f64,
    pub grs: f64,
    pub recommended_set_size: usize,
    pub recommendation_count: usize,
}

/// GRS quantities for one country from per-university recommendation
/// counts. A country nobody recommended gets an explicit all-zero row.
pub fn country_grs(
    country: &CountryId,
    counts: &BTreeMap<String, usize>,
    catalog: &Catalog,
    epsilon: f64,
) -> Result<CountryGrsResult> {
    let total = catalog.country_count(country);
    if total == 0 {
        return Err(Error::NoCoverage(country.to_string()));
    }
    let avail = catalog.availability(country)?;
    let mut items = Vec::with_capacity(counts.len());
    for (id, &n) in counts.iter().filter(|(_, &n)| n > 0) {
        let u = catalog
            .get(id)
            .ok_or_else(|| Error::InvalidInput(format!("university `{id}` is not in the catalog")))?;
        if &u.country != country {
            return Err(Error::InvalidInput(format!("university `{id}` is in {}, not {country}", u.country)));
        }
        items.push((n, catalog.local_reputation(u)));
    }
    let recommended_set_size = items.len();
    let recommendation_count = items.iter().map(|(n, _)| n).sum();
    let repr = representation(recommended_set_size, total)?;
    let scaled_repr = scaled_representation_eps(repr, avail, epsilon);
    let rep_covg = reputational_coverage(&items).unwrap_or(0.0);
    Ok(CountryGrsResult {
        country: country.clone(),
        repr,
        avail,
        scaled_repr,
        rep_covg,
        grs: grs(scaled_repr, rep_covg),
        recommended_set_size,
        recommendation_count,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricParams {
    pub lambdas: LambdaTable,
    pub weights: DrsWeights,
    pub epsilon: f64,
}

impl MetricParams {
    pub fn standard() -> Self {
        MetricParams { lambdas: LambdaTable::default(), weights: DrsWeights::default(), epsilon: EPSILON }
    }

    pub fn validate(&self) -> Result<()> {
        self.lambdas.validate()?;
        self.weights.validate()?;
        if !(self.epsilon > 0.0 && self.epsilon < 0.01) {
            return Err(Error::Config(format!("epsilon must be in (0, 0.01), got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// A recommendation with its DRS components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecord {
    #[serde(flatten)]
    pub record: RecommendationRecord,
    pub demographics: Demographics,
    pub university_country: Option<CountryId>,
    pub distance_km: Option<f64>,
    pub acc: Option<f64>,
    pub rep: f64,
    pub acad: Option<f64>,
    pub drs: f64,
}

/// Everything needed to score records offline.
pub struct ScoringContext<'a> {
    pub catalog: &'a Catalog,
    pub capitals: &'a CapitalTable,
    pub profiles: &'a ProfileDirectory,
    pub params: MetricParams,
    /// Student interest tags per prompt variant.
    pub interests: BTreeMap<Variant, TagSet>,
}

impl ScoringContext<'_> {
    fn interests_for(&self, profile_id: &str, variant: Variant) -> TagSet {
        if let Some(p) = self.profiles.profile(profile_id) {
            if !p.interest_tags.is_empty() && variant == Variant::Background {
                return p.interest_tags.clone();
            }
        }
        self.interests.get(&variant).cloned().unwrap_or_default()
    }

    /// Scores one record. Acc needs a resolved university plus the
    /// student's nationality and class; Acad needs tags on both sides.
    /// Unmatched universities score Rep 0.
    pub fn score(&self, record: &RecommendationRecord) -> Result<ScoredRecord> {
        let demographics = self
            .profiles
            .demographics(&record.profile_id)
            .cloned()
            .ok_or_else(|| Error::InvalidInput(format!("unknown profile_id `{}`", record.profile_id)))?;
        let university = match &record.match_result.university {
            Some(m) => Some(self.catalog.get(&m.id).ok_or_else(|| {
                Error::InvalidInput(format!("matched university `{}` is not in the catalog", m.id))
            })?),
            None => None,
        };
        let (mut acc, mut distance_km) = (None, None);
        if let (Some(u), Some(nat), Some(class)) =
            (university, &demographics.nationality, demographics.economic_class)
        {
            let d = country_distance(nat, &u.country, self.capitals)?;
            distance_km = Some(d.km);
            acc = Some(accessibility_km(self.params.lambdas.lambda_for(class), d.km));
        }
        let rep = university.map_or(0.0, reputation);
        let student_tags = self.interests_for(&record.profile_id, record.variant);
        let acad = if student_tags.is_empty() || record.program_tags.is_empty() {
            None
        } else {
            academic_alignment(&student_tags, &record.program_tags)
        };
        let components = DrsComponents { acc, rep: Some(rep), acad };
        Ok(ScoredRecord {
            record: record.clone(),
            demographics,
            university_country: university.map(|u| u.country.clone()),
            distance_km,
            acc,
            rep,
            acad,
            drs: drs(&components, &self.params.weights)?,
        })
    }

    pub fn score_all(&self, records: &[RecommendationRecord]) -> Result<Vec<ScoredRecord>> {
        records.iter().map(|r| self.score(r)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::SubjectTag::*;

    fn tags(t: &[crate::taxonomy::SubjectTag]) -> TagSet {
        t.iter().copied().collect()
    }

    #[test]
    fn lambdas() {
        assert_eq!(lambda_for(EconomicClass::High), 0.0001);
        assert_eq!(lambda_for(EconomicClass::Moderate), 0.0005);
        assert_eq!(lambda_for(EconomicClass::Low), 0.001);
    }

    #[test]
    fn accessibility_examples() {
        assert_eq!(accessibility_km(0.001, 0.0), 1.0);
        assert!((accessibility_km(0.001, 1000.0) - 0.367_879_441).abs() < 1e-9);
        assert!((accessibility_km(0.0001, 5000.0) - 0.606_530_660).abs() < 1e-9);
    }

    #[test]
    fn jaccard_examples() {
        let et = tags(&[EngineeringTechnology]);
        assert_eq!(academic_alignment(&et, &et), Some(1.0));
        assert_eq!(academic_alignment(&et, &tags(&[SocialSciencesManagement])), Some(0.0));
        assert_eq!(academic_alignment(&et, &tags(&[EngineeringTechnology, NaturalSciences])), Some(0.5));
        assert_eq!(academic_alignment(&TagSet::new(), &TagSet::new()), None);
    }

    #[test]
    fn drs_examples() {
        let w = DrsWeights::default();
        let all = DrsComponents { acc: Some(0.3), rep: Some(0.6), acad: Some(0.9) };
        assert!((drs(&all, &w).unwrap() - 0.6).abs() < 1e-12);
        let two = DrsComponents { acc: Some(0.1786), rep: Some(0.7355), acad: None };
        assert!((drs(&two, &w).unwrap() - 0.457_05).abs() < 1e-12);
        let ones = DrsComponents { acc: Some(1.0), rep: Some(1.0), acad: Some(1.0) };
        assert_eq!(drs(&ones, &w).unwrap(), 1.0);
        assert!(drs(&DrsComponents::default(), &w).is_err());
    }

    #[test]
    fn weights_are_validated() {
        let bad = DrsWeights { acc: 0.5, rep: 0.5, acad: 0.5 };
        assert!(bad.validate().is_err());
        let neg = DrsWeights { acc: -0.5, rep: 1.0, acad: 0.5 };
        assert!(neg.validate().is_err());
    }

    #[test]
    fn grs_pieces() {
        assert_eq!(representation(0, 8).unwrap(), 0.0);
        assert_eq!(representation(2, 8).unwrap(), 0.25);
        assert_eq!(representation(9, 8).unwrap(), 1.0);
        assert!((scaled_representation(0.1066, 0.1311) - 0.813_11).abs() < 5e-5);
        assert_eq!(scaled_representation(0.0, 0.3), 0.0);
        assert_eq!(scaled_representation(0.5, 0.01), 1.0);
        assert_eq!(reputational_coverage(&[(7, 0.8)]), Some(0.8));
        assert_eq!(reputational_coverage(&[(3, 1.0), (1, 0.0)]), Some(0.75));
        assert_eq!(reputational_coverage(&[(2, 0.0), (5, 0.0)]), Some(0.0));
        assert_eq!(reputational_coverage(&[]), None);
        assert!((grs(1.0, 0.0829) - 0.2879).abs() < 5e-4);
        assert!((grs(0.81311, 0.9731) - 0.8896).abs() < 5e-4);
        assert_eq!(grs(0.0, 0.7), 0.0);
    }
}
