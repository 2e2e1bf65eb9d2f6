use std::collections::BTreeMap;
use std::path::Path;

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use uniaudit_core::metrics::{country_grs, EPSILON};
use uniaudit_core::{parse_response, vincenty_distance, CapitalTable, Catalog, CountryId, GeoPoint};

const CATALOG: &str = "\
name,country,qs_rank,aliases
University of Oxford,United Kingdom,3,
Imperial College London,United Kingdom,8,
University College London,United Kingdom,9,UCL
The University of Manchester,United Kingdom,32,
University of Leeds,United Kingdom,75,
University of Toronto,Canada,21,
McGill University,Canada,30,
University of British Columbia,Canada,38,UBC
University of Cape Town,South Africa,171,UCT
University of the Witwatersrand,South Africa,264,Wits
University of Ibadan,Nigeria,1001-1200,
University of Lagos,Nigeria,1201-1400,UNILAG
";

const RESPONSE: &str = "Here are three programs that fit your profile:\n\n\
1. **University of Oxford** \u{2013} MSc in Social Data Science\n\
2. University College London - MSc Global Health and Development\n\
3. University of Cape Town: MPhil in Development Studies\n\n\
Each offers scholarships for international students.";

fn geodesy(c: &mut Criterion) {
    let london = GeoPoint::new(51.5074, -0.1278).unwrap();
    let wellington = GeoPoint::new(-41.2865, 174.7762).unwrap();
    let paris = GeoPoint::new(48.8566, 2.3522).unwrap();
    c.bench_function("vincenty_short", |b| b.iter(|| vincenty_distance(black_box(london), black_box(paris))));
    c.bench_function("vincenty_long", |b| {
        b.iter(|| vincenty_distance(black_box(london), black_box(wellington)))
    });
    let a = GeoPoint::new(0.0, 0.0).unwrap();
    let q = GeoPoint::new(0.5, 179.7).unwrap();
    c.bench_function("vincenty_fallback", |b| b.iter(|| vincenty_distance(black_box(a), black_box(q))));
}

fn catalog() -> Catalog {
    let capitals = CapitalTable::bundled(&[]).unwrap();
    Catalog::from_reader(CATALOG.as_bytes(), Path::new("bench.csv"), &capitals).unwrap()
}

fn resolution(c: &mut Criterion) {
    let cat = catalog();
    c.bench_function("resolve_exact", |b| b.iter(|| cat.resolve(black_box("University of Oxford"), 0.85)));
    c.bench_function("resolve_fuzzy", |b| {
        b.iter(|| cat.resolve(black_box("Univeristy of Witwatersrand"), 0.85))
    });
    c.bench_function("resolve_unmatched", |b| b.iter(|| cat.resolve(black_box("Hogwarts School"), 0.85)));
}

fn parsing(c: &mut Criterion) {
    c.bench_function("parse_response", |b| b.iter(|| parse_response(black_box(RESPONSE))));
}

fn grs(c: &mut Criterion) {
    let cat = catalog();
    let uk = CountryId::new("United Kingdom");
    let counts: BTreeMap<String, usize> = [
        ("university-of-oxford", 40),
        ("imperial-college-london", 25),
        ("university-college-london", 30),
        ("university-of-leeds", 3),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_owned(), v))
    .collect();
    c.bench_function("country_grs", |b| {
        b.iter(|| country_grs(&uk, black_box(&counts), &cat, EPSILON).unwrap())
    });
}

criterion_group!(benches, geodesy, resolution, parsing, grs);
criterion_main!(benches);
