//! Built-in fixture charts shipped with the crate.

use crate::algebroid::ValidChart;
use crate::error::Result;
use crate::spec::parse_spec;

const CHARTS: &[(&str, &str)] = &[
    ("abelian1", include_str!("../fixtures/abelian1.chart")),
    ("abelian2", include_str!("../fixtures/abelian2.chart")),
    ("heis3", include_str!("../fixtures/heis3.chart")),
    ("so3", include_str!("../fixtures/so3.chart")),
    ("axb", include_str!("../fixtures/axb.chart")),
    ("tangent1", include_str!("../fixtures/tangent1.chart")),
    ("tangent2", include_str!("../fixtures/tangent2.chart")),
    ("rank2", include_str!("../fixtures/rank2.chart")),
];

pub const NAMES: &[&str] = &["abelian1", "abelian2", "heis3", "so3", "axb", "tangent1", "tangent2", "rank2"];

/// Fixtures whose base is a point (Lie algebras).
pub const LIE_ALGEBRAS: &[&str] = &["abelian1", "abelian2", "heis3", "so3", "axb"];

pub fn chart_text(name: &str) -> Option<&'static str> {
    CHARTS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn try_chart(name: &str) -> Result<ValidChart> {
    let text = chart_text(name)
        .ok_or_else(|| crate::error::Error::Input(format!("unknown fixture {name:?}")))?;
    parse_spec(text)?.chart.validate()
}

/// A built-in chart; panics on unknown names.
pub fn chart(name: &str) -> ValidChart {
    try_chart(name).unwrap_or_else(|e| panic!("fixture {name}: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_fixtures_validate() {
        for n in NAMES {
            let c = chart(n);
            assert_eq!(&c.name, n);
        }
    }
}
