//! Synthetic profile grid and prompt rendering.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodesy::CountryId;
use crate::taxonomy::{describe_tags, TagSet};
use crate::text;

/// The 40 nationalities used in the prompt grid, in listing order.
pub const PROMPT_NATIONALITIES: [&str; 40] = [
    "Nigeria",
    "Egypt",
    "South Africa",
    "Kenya",
    "Ghana",
    "Ethiopia",
    "Algeria",
    "Morocco",
    "China",
    "India",
    "Japan",
    "South Korea",
    "Indonesia",
    "Thailand",
    "Saudi Arabia",
    "Vietnam",
    "France",
    "Germany",
    "Italy",
    "Spain",
    "United Kingdom",
    "Sweden",
    "Poland",
    "Greece",
    "United States",
    "Canada",
    "Mexico",
    "Cuba",
    "Costa Rica",
    "Jamaica",
    "Brazil",
    "Argentina",
    "Chile",
    "Peru",
    "Colombia",
    "Australia",
    "New Zealand",
    "Fiji",
    "Papua New Guinea",
    "Tonga",
];

pub fn prompt_nationalities() -> Vec<CountryId> {
    PROMPT_NATIONALITIES.iter().map(|n| CountryId::new(*n)).collect()
}

macro_rules! simple_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                let key = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
                $name::ALL
                    .iter()
                    .copied()
                    .find(|v| v.as_str() == key)
                    .ok_or_else(|| Error::InvalidInput(format!(
                        "unknown {} `{}`", stringify!($name), s.trim()
                    )))
            }
        }
    };
}

simple_enum!(Gender {
    Male => "male",
    Female => "female",
    Transgender => "transgender",
});

simple_enum!(EconomicClass {
    Low => "low",
    Moderate => "moderate",
    High => "high",
});

simple_enum!(Variant {
    Base => "base",
    Regional => "regional",
    Background => "background",
    ReducedGender => "reduced_gender",
    ReducedClass => "reduced_class",
    ReducedNationality => "reduced_nationality",
});

simple_enum!(Attribute {
    Gender => "gender",
    EconomicClass => "economic_class",
    Nationality => "nationality",
});

impl Variant {
    /// For reduced-context variants, the single attribute they mention.
    pub fn reduced_attribute(self) -> Option<Attribute> {
        match self {
            Variant::ReducedGender => Some(Attribute::Gender),
            Variant::ReducedClass => Some(Attribute::EconomicClass),
            Variant::ReducedNationality => Some(Attribute::Nationality),
            _ => None,
        }
    }
}

impl Attribute {
    pub fn reduced_variant(self) -> Variant {
        match self {
            Attribute::Gender => Variant::ReducedGender,
            Attribute::EconomicClass => Variant::ReducedClass,
            Attribute::Nationality => Variant::ReducedNationality,
        }
    }
}

/// One synthetic student in the intersectional grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudentProfile {
    pub id: String,
    pub gender: Gender,
    pub economic_class: EconomicClass,
    pub nationality: CountryId,
    #[serde(default)]
    pub interest_tags: TagSet,
}

impl StudentProfile {
    pub fn new(gender: Gender, economic_class: EconomicClass, nationality: CountryId) -> Self {
        StudentProfile {
            id: format!("{gender}-{economic_class}-{}", text::slug(nationality.as_str())),
            gender,
            economic_class,
            nationality,
            interest_tags: TagSet::new(),
        }
    }
}

/// Demographic attributes known for a profile id. Reduced-context profiles
/// carry exactly one of them.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demographics {
    pub gender: Option<Gender>,
    pub economic_class: Option<EconomicClass>,
    pub nationality: Option<CountryId>,
}

impl Demographics {
    pub fn value(&self, attribute: Attribute) -> Option<String> {
        match attribute {
            Attribute::Gender => self.gender.map(|g| g.to_string()),
            Attribute::EconomicClass => self.economic_class.map(|c| c.to_string()),
            Attribute::Nationality => self.nationality.as_ref().map(|n| n.to_string()),
        }
    }
}

impl From<&StudentProfile> for Demographics {
    fn from(p: &StudentProfile) -> Self {
        Demographics {
            gender: Some(p.gender),
            economic_class: Some(p.economic_class),
            nationality: Some(p.nationality.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub genders: Vec<Gender>,
    pub economic_classes: Vec<EconomicClass>,
    pub nationalities: Vec<CountryId>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            genders: Gender::ALL.to_vec(),
            economic_classes: EconomicClass::ALL.to_vec(),
            nationalities: prompt_nationalities(),
        }
    }
}

fn check_unique<T: Ord + fmt::Display>(axis: &str, values: &[T]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for v in values {
        if !seen.insert(v) {
            return Err(Error::InvalidInput(format!("duplicate {axis} `{v}` in profile grid")));
        }
    }
    if values.is_empty() {
        return Err(Error::InvalidInput(format!("profile grid has no {axis} values")));
    }
    Ok(())
}

/// Full Cartesian product, gender-major, then class, then nationality.
pub fn enumerate_profiles(config: &GridConfig) -> Result<Vec<StudentProfile>> {
    check_unique("gender", &config.genders)?;
    check_unique("economic class", &config.economic_classes)?;
    check_unique("nationality", &config.nationalities)?;
    if let Some(bad) = config.nationalities.iter().find(|n| !PROMPT_NATIONALITIES.contains(&n.as_str())) {
        return Err(Error::InvalidInput(format!(
            "nationality `{bad}` is not one of the prompt nationalities"
        )));
    }
    let mut out =
        Vec::with_capacity(config.genders.len() * config.economic_classes.len() * config.nationalities.len());
    for &gender in &config.genders {
        for &class in &config.economic_classes {
            for nationality in &config.nationalities {
                out.push(StudentProfile::new(gender, class, nationality.clone()));
            }
        }
    }
    Ok(out)
}

/// Grid profiles plus reduced-context pseudo-profiles, keyed by id.
#[derive(Debug, Clone, Default)]
pub struct ProfileDirectory {
    profiles: BTreeMap<String, StudentProfile>,
    demographics: BTreeMap<String, Demographics>,
}

impl ProfileDirectory {
    pub fn from_profiles(profiles: impl IntoIterator<Item = StudentProfile>) -> Self {
        let mut dir = ProfileDirectory::default();
        for p in profiles {
            dir.demographics.insert(p.id.clone(), Demographics::from(&p));
            dir.profiles.insert(p.id.clone(), p);
        }
        dir
    }

    /// Grid from `config` plus every reduced-context id.
    pub fn standard(config: &GridConfig) -> Result<Self> {
        let mut dir = ProfileDirectory::from_profiles(enumerate_profiles(config)?);
        for attribute in Attribute::ALL {
            for (id, demo) in reduced_profiles(*attribute, config) {
                dir.demographics.insert(id, demo);
            }
        }
        Ok(dir)
    }

    pub fn profile(&self, id: &str) -> Option<&StudentProfile> {
        self.profiles.get(id)
    }

    pub fn demographics(&self, id: &str) -> Option<&Demographics> {
        self.demographics.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.demographics.contains_key(id)
    }

    pub fn profiles(&self) -> impl Iterator<Item = &StudentProfile> {
        self.profiles.values()
    }
}

fn reduced_profiles(attribute: Attribute, config: &GridConfig) -> Vec<(String, Demographics)> {
    let id = |value: &str| format!("only-{}-{}", attribute, text::slug(value));
    match attribute {
        Attribute::Gender => config
            .genders
            .iter()
            .map(|&g| {
                let demo = Demographics { gender: Some(g), ..Default::default() };
                (id(g.as_str()), demo)
            })
            .collect(),
        Attribute::EconomicClass => config
            .economic_classes
            .iter()
            .map(|&c| {
                let demo = Demographics { economic_class: Some(c), ..Default::default() };
                (id(c.as_str()), demo)
            })
            .collect(),
        Attribute::Nationality => config
            .nationalities
            .iter()
            .map(|n| {
                let demo = Demographics { nationality: Some(n.clone()), ..Default::default() };
                (id(n.as_str()), demo)
            })
            .collect(),
    }
}

/// A rendered prompt ready to send to a model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptInstance {
    pub profile_id: String,
    pub variant: Variant,
    pub text: String,
    pub placeholder_values: BTreeMap<String, String>,
}

const PLACEHOLDERS: [&str; 4] = ["gender", "economic_class", "nationality", "interests"];

/// Template texts. Each is validated for placeholder use on construction.
#[derive(Debug, Clone)]
pub struct PromptTemplates {
    base: String,
    regional_clause: String,
    background_clause: String,
    reduced_gender: String,
    reduced_economic_class: String,
    reduced_nationality: String,
    format_instruction: String,
}

const TEMPLATE_FILES: [&str; 7] = [
    "base.txt",
    "regional.txt",
    "background.txt",
    "reduced_gender.txt",
    "reduced_economic_class.txt",
    "reduced_nationality.txt",
    "format.txt",
];

const BUNDLED_TEMPLATES: [&str; 7] = [
    include_str!("../assets/templates/base.txt"),
    include_str!("../assets/templates/regional.txt"),
    include_str!("../assets/templates/background.txt"),
    include_str!("../assets/templates/reduced_gender.txt"),
    include_str!("../assets/templates/reduced_economic_class.txt"),
    include_str!("../assets/templates/reduced_nationality.txt"),
    include_str!("../assets/templates/format.txt"),
];

/// `{name}` placeholders in order of appearance.
fn placeholders(template: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) => {
                out.push(&after[..close]);
                rest = &after[close + 1..];
            }
            None => break,
        }
    }
    out
}

impl PromptTemplates {
    pub fn bundled() -> Self {
        Self::from_texts(BUNDLED_TEMPLATES.map(str::to_owned)).expect("bundled templates are valid")
    }

    /// Loads the seven template files from `dir`; absent files fall back to
    /// the bundled text.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut texts = BUNDLED_TEMPLATES.map(str::to_owned);
        for (slot, file) in texts.iter_mut().zip(TEMPLATE_FILES) {
            let path = dir.join(file);
            match std::fs::read_to_string(&path) {
                Ok(s) => *slot = s,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                    log::debug!("{} not found, using bundled template", path.display());
                }
                Err(e) => return Err(Error::io(path, e)),
            }
        }
        Self::from_texts(texts)
    }

    fn from_texts(texts: [String; 7]) -> Result<Self> {
        let [base, regional_clause, background_clause, reduced_gender, reduced_economic_class, reduced_nationality, format_instruction] =
            texts.map(|t| t.trim().to_owned());
        let full: &[&str] = &PLACEHOLDERS;
        check_template("base", &base, full, &[])?;
        check_template("regional", &regional_clause, full, &[])?;
        check_template("background", &background_clause, full, &[])?;
        check_template("reduced_gender", &reduced_gender, &["gender", "interests"], &["gender"])?;
        check_template(
            "reduced_economic_class",
            &reduced_economic_class,
            &["economic_class", "interests"],
            &["economic_class"],
        )?;
        check_template(
            "reduced_nationality",
            &reduced_nationality,
            &["nationality", "interests"],
            &["nationality"],
        )?;
        check_template("format", &format_instruction, &[], &[])?;
        Ok(PromptTemplates {
            base,
            regional_clause,
            background_clause,
            reduced_gender,
            reduced_economic_class,
            reduced_nationality,
            format_instruction,
        })
    }

    pub fn format_instruction(&self) -> &str {
        &self.format_instruction
    }

    fn body(&self, variant: Variant) -> Vec<&str> {
        match variant {
            Variant::Base => vec![&self.base],
            Variant::Regional => vec![&self.base, &self.regional_clause],
            Variant::Background => vec![&self.base, &self.background_clause],
            Variant::ReducedGender => vec![&self.reduced_gender],
            Variant::ReducedClass => vec![&self.reduced_economic_class],
            Variant::ReducedNationality => vec![&self.reduced_nationality],
        }
    }
}

fn check_template(name: &str, template: &str, allowed: &[&str], required: &[&str]) -> Result<()> {
    let used = placeholders(template);
    for p in &used {
        if !allowed.contains(p) {
            return Err(Error::UnknownPlaceholder {
                template: name.to_owned(),
                placeholder: (*p).to_owned(),
            });
        }
    }
    for r in required {
        if !used.contains(r) {
            return Err(Error::InvalidInput(format!("template `{name}` must use `{{{r}}}`")));
        }
    }
    Ok(())
}

/// Substitutes placeholders, appends the variant clause and the answer-format
/// instruction.
pub fn render_prompt(
    profile: &StudentProfile,
    variant: Variant,
    templates: &PromptTemplates,
    interests: &TagSet,
) -> Result<PromptInstance> {
    let demographics = match variant.reduced_attribute() {
        Some(attribute) => only(&Demographics::from(profile), attribute),
        None => Demographics::from(profile),
    };
    render_with(&profile.id, variant, &demographics, templates, interests)
}

fn only(d: &Demographics, attribute: Attribute) -> Demographics {
    let mut out = Demographics::default();
    match attribute {
        Attribute::Gender => out.gender = d.gender,
        Attribute::EconomicClass => out.economic_class = d.economic_class,
        Attribute::Nationality => out.nationality = d.nationality.clone(),
    }
    out
}

fn render_with(
    profile_id: &str,
    variant: Variant,
    demographics: &Demographics,
    templates: &PromptTemplates,
    interests: &TagSet,
) -> Result<PromptInstance> {
    let mut values = BTreeMap::new();
    let mut parts = Vec::new();
    for piece in templates.body(variant) {
        let mut rendered = piece.to_owned();
        for name in placeholders(piece) {
            let value = match name {
                "gender" => demographics.gender.map(|g| g.to_string()),
                "economic_class" => demographics.economic_class.map(|c| c.to_string()),
                "nationality" => demographics.nationality.as_ref().map(|n| n.to_string()),
                "interests" => Some(if interests.is_empty() {
                    "a general field".to_owned()
                } else {
                    describe_tags(interests)
                }),
                other => {
                    return Err(Error::UnknownPlaceholder {
                        template: variant.to_string(),
                        placeholder: other.to_owned(),
                    })
                }
            };
            let value = value.ok_or_else(|| {
                Error::InvalidInput(format!("profile `{profile_id}` has no value for `{name}`"))
            })?;
            rendered = rendered.replace(&format!("{{{name}}}"), &value);
            values.insert(name.to_owned(), value);
        }
        parts.push(rendered);
    }
    let text = format!("{}\n\n{}", parts.join(" "), templates.format_instruction());
    Ok(PromptInstance { profile_id: profile_id.to_owned(), variant, text, placeholder_values: values })
}

/// One prompt per value of `attribute`, mentioning only that attribute.
pub fn reduced_context_profiles(
    attribute: Attribute,
    config: &GridConfig,
    templates: &PromptTemplates,
) -> Result<Vec<PromptInstance>> {
    reduced_profiles(attribute, config)
        .into_iter()
        .map(|(id, demo)| render_with(&id, attribute.reduced_variant(), &demo, templates, &TagSet::new()))
        .collect()
}

/// Prompts for every profile in the grid under one variant. Reduced variants
/// expand to their per-value instances instead.
pub fn render_grid(
    config: &GridConfig,
    variant: Variant,
    templates: &PromptTemplates,
    interests: &TagSet,
) -> Result<Vec<PromptInstance>> {
    if let Some(attribute) = variant.reduced_attribute() {
        return reduced_context_profiles(attribute, config, templates);
    }
    enumerate_profiles(config)?
        .iter()
        .map(|p| {
            let tags = if p.interest_tags.is_empty() { interests } else { &p.interest_tags };
            render_prompt(p, variant, templates, tags)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::SubjectTag;

    fn nigeria_female_low() -> StudentProfile {
        StudentProfile::new(Gender::Female, EconomicClass::Low, CountryId::new("Nigeria"))
    }

    #[test]
    fn default_grid_has_360_profiles() {
        let profiles = enumerate_profiles(&GridConfig::default()).unwrap();
        assert_eq!(profiles.len(), 360);
        let ids: BTreeSet<_> = profiles.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids.len(), 360);
        let india = profiles.iter().filter(|p| p.nationality.as_str() == "India").count();
        assert_eq!(india, 9);
        assert_eq!(profiles[0].id, "male-low-nigeria");
        assert_eq!(profiles[1].id, "male-low-egypt");
        assert_eq!(profiles[40].id, "male-moderate-nigeria");
        assert_eq!(profiles[359].id, "transgender-high-tonga");
    }

    #[test]
    fn singleton_grid() {
        let config = GridConfig {
            genders: vec![Gender::Female],
            economic_classes: vec![EconomicClass::High],
            nationalities: vec![CountryId::new("Peru")],
        };
        assert_eq!(enumerate_profiles(&config).unwrap().len(), 1);
    }

    #[test]
    fn duplicate_nationality_rejected() {
        let mut config = GridConfig::default();
        config.nationalities.push(CountryId::new("India"));
        assert!(enumerate_profiles(&config).is_err());
    }

    #[test]
    fn base_prompt_substitutes_attributes() {
        let p =
            render_prompt(&nigeria_female_low(), Variant::Base, &PromptTemplates::bundled(), &TagSet::new())
                .unwrap();
        assert!(p.text.contains("female"));
        assert!(p.text.contains("low"));
        assert!(p.text.contains("Nigeria"));
        assert!(p.text.contains("N. <University Name> - <Program Name>"));
        assert!(!p.text.contains('{'));
        assert_eq!(p.placeholder_values["gender"], "female");
    }

    #[test]
    fn regional_appends_clause() {
        let t = PromptTemplates::bundled();
        let profile = nigeria_female_low();
        let base = render_prompt(&profile, Variant::Base, &t, &TagSet::new()).unwrap();
        let regional = render_prompt(&profile, Variant::Regional, &t, &TagSet::new()).unwrap();
        let base_body = base.text.split("\n\n").next().unwrap();
        assert!(regional.text.starts_with(base_body));
        assert!(regional.text.contains("regionally accessible"));
    }

    #[test]
    fn background_mentions_interests() {
        let tags: TagSet = [SubjectTag::EngineeringTechnology].into_iter().collect();
        let p = render_prompt(&nigeria_female_low(), Variant::Background, &PromptTemplates::bundled(), &tags)
            .unwrap();
        assert!(p.text.contains("Engineering & Technology"));
    }

    #[test]
    fn reduced_counts() {
        let t = PromptTemplates::bundled();
        let c = GridConfig::default();
        assert_eq!(reduced_context_profiles(Attribute::Gender, &c, &t).unwrap().len(), 3);
        assert_eq!(reduced_context_profiles(Attribute::EconomicClass, &c, &t).unwrap().len(), 3);
        assert_eq!(reduced_context_profiles(Attribute::Nationality, &c, &t).unwrap().len(), 40);
        assert!("religion".parse::<Attribute>().is_err());
    }

    #[test]
    fn unknown_placeholder_is_an_error() {
        let mut texts = BUNDLED_TEMPLATES.map(str::to_owned);
        texts[0] = "I am a {gender} student who likes {hobby}.".into();
        let err = PromptTemplates::from_texts(texts).unwrap_err();
        assert!(matches!(err, Error::UnknownPlaceholder { ref placeholder, .. } if placeholder == "hobby"));
    }

    #[test]
    fn reduced_template_must_reference_one_attribute() {
        let mut texts = BUNDLED_TEMPLATES.map(str::to_owned);
        texts[3] = "I am a {gender} student from {nationality}.".into();
        assert!(PromptTemplates::from_texts(texts).is_err());
    }

    #[test]
    fn directory_knows_reduced_ids() {
        let dir = ProfileDirectory::standard(&GridConfig::default()).unwrap();
        assert!(dir.contains("only-gender-transgender"));
        assert!(dir.contains("only-nationality-papua-new-guinea"));
        assert!(dir.profile("only-gender-male").is_none());
        assert!(dir.profile("female-high-peru").is_some());
    }
}
