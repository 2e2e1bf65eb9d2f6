//! Capital-to-capital geodesic distances on the WGS-84 ellipsoid.

mod vincenty;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text;

pub use vincenty::{
    great_circle_m, vincenty_distance, Distance, CONVERGENCE_THRESHOLD, MAX_ITERATIONS, MEAN_RADIUS_M,
    WGS84_A, WGS84_B, WGS84_F,
};

const DEFAULT_CAPITALS: &str = include_str!("../../assets/capitals.csv");
const DEFAULT_COUNTRIES: &str = include_str!("../../assets/countries.csv");

pub fn bundled_capitals_csv() -> &'static str {
    DEFAULT_CAPITALS
}

/// Latitude/longitude in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    latitude: f64,
    longitude: f64,
}

impl GeoPoint {
    pub fn new(latitude: f64, longitude: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&latitude) {
            return Err(Error::InvalidCoordinate(format!("latitude {latitude} outside [-90, 90]")));
        }
        if !(-180.0..=180.0).contains(&longitude) {
            return Err(Error::InvalidCoordinate(format!("longitude {longitude} outside [-180, 180]")));
        }
        Ok(GeoPoint { latitude, longitude })
    }

    pub fn latitude(&self) -> f64 {
        self.latitude
    }

    pub fn longitude(&self) -> f64 {
        self.longitude
    }
}

/// Canonical country name, e.g. `United States`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CountryId(String);

impl CountryId {
    pub fn new(name: impl Into<String>) -> Self {
        CountryId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CountryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for CountryId {
    fn from(s: &str) -> Self {
        CountryId::new(s)
    }
}

fn country_key(name: &str) -> String {
    // "U.S.A." and "USA" must collide, so dots vanish before folding
    text::fold(&name.replace('.', ""))
}

/// Maps aliases and ISO codes onto canonical country names.
#[derive(Debug, Clone, Default)]
pub struct CountryRegistry {
    by_key: BTreeMap<String, CountryId>,
    iso2: BTreeMap<CountryId, String>,
}

#[derive(Debug, Deserialize)]
struct CountryRow {
    country: String,
    iso2: String,
    #[serde(default)]
    aliases: String,
}

impl CountryRegistry {
    /// The bundled registry (canonical names, ISO alpha-2 codes and common aliases).
    pub fn bundled() -> Self {
        Self::from_reader(DEFAULT_COUNTRIES.as_bytes(), Path::new("<bundled countries.csv>"))
            .expect("bundled countries.csv is valid")
    }

    /// Reads `country,iso2,aliases` rows (aliases `|`-separated).
    pub fn from_reader(reader: impl Read, source: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut registry = CountryRegistry::default();
        for row in rdr.deserialize::<CountryRow>() {
            let row = row.map_err(|e| Error::csv(source, e))?;
            let id = CountryId::new(row.country.trim());
            registry.insert_alias(id.as_str(), &id);
            let iso = row.iso2.trim();
            if !iso.is_empty() {
                registry.iso2.insert(id.clone(), iso.to_owned());
            }
            for alias in row.aliases.split('|').map(str::trim).filter(|a| !a.is_empty()) {
                registry.insert_alias(alias, &id);
            }
        }
        Ok(registry)
    }

    pub fn insert_alias(&mut self, alias: &str, country: &CountryId) {
        self.by_key.insert(country_key(alias), country.clone());
    }

    /// Canonical id for a name, alias or ISO-2 code.
    pub fn canonicalize(&self, name: &str) -> Option<CountryId> {
        if let Some(id) = self.by_key.get(&country_key(name)) {
            return Some(id.clone());
        }
        let upper = name.trim().to_ascii_uppercase();
        self.iso2.iter().find(|(_, code)| **code == upper).map(|(id, _)| id.clone())
    }

    pub fn iso2(&self, country: &CountryId) -> Option<&str> {
        self.iso2.get(country).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Capital {
    pub name: String,
    pub location: GeoPoint,
}

/// Capital city for every known country.
#[derive(Debug, Clone)]
pub struct CapitalTable {
    entries: BTreeMap<CountryId, Capital>,
    registry: CountryRegistry,
}

#[derive(Debug, Deserialize)]
struct CapitalRow {
    country: String,
    capital: String,
    lat: f64,
    lon: f64,
}

impl CapitalTable {
    /// Bundled capitals, checked against `required`.
    pub fn bundled(required: &[CountryId]) -> Result<Self> {
        Self::from_reader(
            DEFAULT_CAPITALS.as_bytes(),
            Path::new("<bundled capitals.csv>"),
            CountryRegistry::bundled(),
            required,
        )
    }

    pub fn load(path: &Path, registry: CountryRegistry, required: &[CountryId]) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, path, registry, required)
    }

    /// Parses `country,capital,lat,lon`. Every country in `required` must be
    /// present, so lookups for the prompt nationalities never fail later.
    pub fn from_reader(
        reader: impl Read,
        source: &Path,
        mut registry: CountryRegistry,
        required: &[CountryId],
    ) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::csv(source, e))?.clone();
        for column in ["country", "capital", "lat", "lon"] {
            if !headers.iter().any(|h| h.trim() == column) {
                return Err(Error::MissingColumn { path: source.to_path_buf(), column: column.to_owned() });
            }
        }
        let mut entries = BTreeMap::new();
        for (i, row) in rdr.deserialize::<CapitalRow>().enumerate() {
            let row = row.map_err(|e| Error::csv(source, e))?;
            let location = GeoPoint::new(row.lat, row.lon).map_err(|e| Error::Parse {
                path: source.to_path_buf(),
                line: i + 2,
                message: e.to_string(),
            })?;
            let id =
                registry.canonicalize(&row.country).unwrap_or_else(|| CountryId::new(row.country.trim()));
            registry.insert_alias(id.as_str(), &id);
            entries.insert(id, Capital { name: row.capital.trim().to_owned(), location });
        }
        if entries.is_empty() {
            return Err(Error::EmptyFile(source.to_path_buf()));
        }
        let table = CapitalTable { entries, registry };
        let missing: Vec<&str> = required
            .iter()
            .filter(|c| table.resolve_country(c.as_str()).is_none())
            .map(CountryId::as_str)
            .collect();
        if !missing.is_empty() {
            return Err(Error::UnknownCountry(missing.join(", ")));
        }
        Ok(table)
    }

    /// Canonical id of a country that has a capital entry.
    pub fn resolve_country(&self, name: &str) -> Option<CountryId> {
        let id = self.registry.canonicalize(name)?;
        self.entries.contains_key(&id).then_some(id)
    }

    pub fn capital(&self, country: &CountryId) -> Result<&Capital> {
        self.entries.get(country).ok_or_else(|| Error::UnknownCountry(country.to_string()))
    }

    pub fn countries(&self) -> impl Iterator<Item = &CountryId> {
        self.entries.keys()
    }

    pub fn registry(&self) -> &CountryRegistry {
        &self.registry
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Distance between two countries' capitals.
pub fn country_distance(a: &CountryId, b: &CountryId, table: &CapitalTable) -> Result<Distance> {
    let ca = table.capital(a)?;
    let cb = table.capital(b)?;
    if a == b {
        return Ok(Distance::ZERO);
    }
    Ok(vincenty_distance(ca.location, cb.location))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::prompt_nationalities;

    #[test]
    fn coordinates_are_validated() {
        assert!(GeoPoint::new(90.0, 180.0).is_ok());
        assert!(GeoPoint::new(90.1, 0.0).is_err());
        assert!(GeoPoint::new(0.0, -180.5).is_err());
        assert!(GeoPoint::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn bundled_table_covers_prompt_nationalities() {
        let table = CapitalTable::bundled(&prompt_nationalities()).unwrap();
        assert!(table.len() >= 120);
        for c in prompt_nationalities() {
            assert!(table.capital(&c).is_ok(), "{c}");
        }
    }

    #[test]
    fn aliases_and_iso_codes_resolve() {
        let table = CapitalTable::bundled(&[]).unwrap();
        let us = CountryId::new("United States");
        assert_eq!(table.resolve_country("USA"), Some(us.clone()));
        assert_eq!(table.resolve_country("U.S.A."), Some(us.clone()));
        assert_eq!(table.resolve_country("united states of america"), Some(us.clone()));
        assert_eq!(table.resolve_country("US"), Some(us.clone()));
        assert_eq!(table.resolve_country("UK").unwrap().as_str(), "United Kingdom");
        assert_eq!(table.resolve_country("Türkiye").unwrap().as_str(), "Turkey");
        assert_eq!(table.registry().iso2(&us), Some("US"));
        assert_eq!(table.resolve_country("Atlantis"), None);
    }

    #[test]
    fn missing_required_country_fails_at_load() {
        let csv = "country,capital,lat,lon\nFrance,Paris,48.8566,2.3522\n";
        let err = CapitalTable::from_reader(
            csv.as_bytes(),
            Path::new("caps.csv"),
            CountryRegistry::bundled(),
            &[CountryId::new("France"), CountryId::new("India")],
        )
        .unwrap_err();
        assert!(matches!(err, Error::UnknownCountry(ref c) if c == "India"));
    }

    #[test]
    fn missing_column_is_reported() {
        let csv = "country,capital,lat\nFrance,Paris,48.8\n";
        let err =
            CapitalTable::from_reader(csv.as_bytes(), Path::new("caps.csv"), CountryRegistry::default(), &[])
                .unwrap_err();
        assert!(matches!(err, Error::MissingColumn { ref column, .. } if column == "lon"));
    }

    #[test]
    fn country_distance_cases() {
        let table = CapitalTable::bundled(&[]).unwrap();
        let india = CountryId::new("India");
        let uk = CountryId::new("United Kingdom");
        let fr = CountryId::new("France");
        assert_eq!(country_distance(&india, &india, &table).unwrap().km, 0.0);
        let d = country_distance(&uk, &fr, &table).unwrap();
        assert!((d.km - 343.9).abs() / 343.9 < 1e-3);
        assert_eq!(d, country_distance(&fr, &uk, &table).unwrap());
        let err = country_distance(&uk, &CountryId::new("Narnia"), &table).unwrap_err();
        assert!(err.to_string().contains("Narnia"));
    }
}
