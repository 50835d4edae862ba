//! Bundled experiment configs, one per space family plus the rate fixtures.

pub const FIXTURES: &[(&str, &str)] = &[
    ("euclidean", include_str!("../../fixtures/euclidean.json")),
    ("sphere", include_str!("../../fixtures/sphere.json")),
    ("hyperbolic", include_str!("../../fixtures/hyperbolic.json")),
    ("cone", include_str!("../../fixtures/cone.json")),
    ("product", include_str!("../../fixtures/product.json")),
    ("planar_rate", include_str!("../../fixtures/planar_rate.json")),
    ("dirac", include_str!("../../fixtures/dirac.json")),
];

pub fn fixture(name: &str) -> Option<&'static str> {
    FIXTURES.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

pub fn fixture_names() -> Vec<&'static str> {
    FIXTURES.iter().map(|(n, _)| *n).collect()
}
