//! Published codebooks, factor matrices and reference values, embedded as data.
//!
//! Codebook fixtures use the codebook JSON schema plus `"kind"` and a
//! `"meta"` block (`source`, `precision`). Numbers are stored exactly as
//! printed and never re-normalized.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::codebook::{CodebookSet, ParamVector};
use crate::structure::{FactorGraph, StructureTemplate};
use crate::{Error, Result};

const FILES: [(&str, &str); 9] = [
    ("table2_awgn_6x4", include_str!("../data/fixtures/table2_awgn_6x4.json")),
    ("table3_fading_6x4", include_str!("../data/fixtures/table3_fading_6x4.json")),
    ("table5_awgn_12x6", include_str!("../data/fixtures/table5_awgn_12x6.json")),
    ("table6_fading_12x6", include_str!("../data/fixtures/table6_fading_12x6.json")),
    ("eq2_factor_6x4", include_str!("../data/fixtures/eq2_factor_6x4.json")),
    ("eq9_factor_8x4", include_str!("../data/fixtures/eq9_factor_8x4.json")),
    ("eq10_factor_12x6", include_str!("../data/fixtures/eq10_factor_12x6.json")),
    ("example1_vectors", include_str!("../data/fixtures/example1_vectors.json")),
    ("table4_kpis", include_str!("../data/fixtures/table4_kpis.json")),
];

/// Every fixture id, in a stable order.
pub const FIXTURE_IDS: [&str; 9] = [
    "table2_awgn_6x4",
    "table3_fading_6x4",
    "table5_awgn_12x6",
    "table6_fading_12x6",
    "eq2_factor_6x4",
    "eq9_factor_8x4",
    "eq10_factor_12x6",
    "example1_vectors",
    "table4_kpis",
];

#[derive(Clone, Debug, PartialEq)]
pub struct Fixture {
    pub id: String,
    pub source: String,
    pub precision: String,
    /// Full meta block, including any notes beyond source and precision.
    pub meta: serde_json::Value,
    pub payload: Payload,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Codebooks(CodebookSet),
    FactorMatrix(FactorGraph),
    Vectors(Example),
    Kpis(Vec<KpiColumn>),
}

/// Worked DE example: a few initial population rows and the final best row.
#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct Example {
    pub initial_rows: Vec<ParamVector>,
    pub best_row: ParamVector,
    #[serde(deserialize_with = "pairs")]
    pub a_opt: Vec<Complex64>,
}

fn pairs<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Vec<Complex64>, D::Error> {
    let raw: Vec<[f64; 2]> = Deserialize::deserialize(d)?;
    Ok(raw.into_iter().map(|[re, im]| Complex64::new(re, im)).collect())
}

/// Reference indicator values for one codebook fixture.
#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct KpiColumn {
    #[serde(skip)]
    pub name: String,
    pub codebooks: String,
    pub d_e_min: f64,
    pub tau_e: usize,
    pub d_p_min: f64,
    pub tau_p: usize,
}

#[derive(Deserialize)]
struct Meta {
    source: String,
    precision: String,
}

fn unknown(id: &str) -> Error {
    Error::UnknownFixture { name: id.to_string(), available: FIXTURE_IDS.join(", ") }
}

/// Raw JSON text of a fixture.
pub fn fixture_text(id: &str) -> Result<&'static str> {
    FILES.iter().find(|(n, _)| *n == id).map(|(_, t)| *t).ok_or_else(|| unknown(id))
}

/// Loads a fixture; codebook fixtures must pass structural validation.
pub fn load_fixture(id: &str) -> Result<Fixture> {
    let text = fixture_text(id)?;
    let value: serde_json::Value = serde_json::from_str(text)?;
    let invalid = |details: String| Error::InvalidFixture { id: id.to_string(), details };
    let meta_value = value.get("meta").cloned().ok_or_else(|| invalid("missing meta block".into()))?;
    let meta: Meta = serde_json::from_value(meta_value.clone())?;
    let kind = value.get("kind").and_then(|k| k.as_str()).ok_or_else(|| invalid("missing kind".into()))?;
    let payload = match kind {
        "codebooks" => {
            let set = CodebookSet::from_json_str(text)?;
            let report = validate_codebook(&set, None);
            if !report.passed {
                return Err(invalid(report.violations.join("; ")));
            }
            Payload::Codebooks(set)
        }
        "factor_matrix" => Payload::FactorMatrix(serde_json::from_value(value["F"].clone())?),
        "vectors" => Payload::Vectors(serde_json::from_value(value.clone())?),
        "kpis" => {
            let cols: serde_json::Map<String, serde_json::Value> = serde_json::from_value(value["columns"].clone())?;
            let mut out = Vec::new();
            for (name, v) in cols {
                let mut col: KpiColumn = serde_json::from_value(v)?;
                col.name = name;
                out.push(col);
            }
            Payload::Kpis(out)
        }
        other => return Err(invalid(format!("unknown kind `{other}`"))),
    };
    Ok(Fixture { id: id.to_string(), source: meta.source, precision: meta.precision, meta: meta_value, payload })
}

/// Loads a codebook fixture by id.
pub fn load_codebooks(id: &str) -> Result<CodebookSet> {
    match load_fixture(id)?.payload {
        Payload::Codebooks(set) => Ok(set),
        _ => Err(Error::InvalidFixture { id: id.to_string(), details: "not a codebook fixture".into() }),
    }
}

/// Loads a factor-matrix fixture by id.
pub fn load_factor(id: &str) -> Result<FactorGraph> {
    match load_fixture(id)?.payload {
        Payload::FactorMatrix(g) => Ok(g),
        _ => Err(Error::InvalidFixture { id: id.to_string(), details: "not a factor-matrix fixture".into() }),
    }
}

/// Tolerance for the antipodal-symmetry check.
const SYMMETRY_TOL: f64 = 1e-12;
/// Codeword norms further than this from 1 produce a warning.
const NORM_WARN: f64 = 1e-3;

/// Outcome of [`validate_codebook`]. Norm deviations are warnings, not violations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
    /// `[user][symbol]` Euclidean norms.
    pub norms: Vec<Vec<f64>>,
    /// Largest entry difference between the set and the template instantiated
    /// with parameters read back from the set.
    pub template_deviation: Option<f64>,
}

/// Checks supports against the factor matrix, codeword distinctness within
/// each codebook and antipodal symmetry; with a template, also that the
/// factor matrices agree and how far the set is from an exact instantiation.
pub fn validate_codebook(set: &CodebookSet, template: Option<&StructureTemplate>) -> ValidationReport {
    let mut violations = Vec::new();
    let mut warnings = Vec::new();
    let g = set.factor_graph();
    let m = set.codebook_size();
    for (j, book) in set.books().iter().enumerate() {
        let column = g.resources_of(j);
        for (s, cw) in book.codewords.iter().enumerate() {
            if cw.support() != column {
                violations.push(format!(
                    "user {} codeword {}: nonzero resources {:?} differ from factor-matrix column {:?}",
                    j + 1,
                    s + 1,
                    one_based(&cw.support()),
                    one_based(&column)
                ));
            }
        }
        for a in 0..m {
            for b in a + 1..m {
                if book.codewords[a] == book.codewords[b] {
                    violations.push(format!("user {}: codewords {} and {} are identical", j + 1, a + 1, b + 1));
                }
            }
        }
        for s in 0..m / 2 {
            let (x, y) = (&book.codewords[s], &book.codewords[m - 1 - s]);
            if x.entries().iter().zip(y.entries()).any(|(p, q)| (p + q).norm() > SYMMETRY_TOL) {
                violations.push(format!("user {}: codeword {} is not the negation of codeword {}", j + 1, m - s, s + 1));
            }
        }
    }
    let norms: Vec<Vec<f64>> = set.books().iter().map(|b| b.codewords.iter().map(|c| c.norm()).collect()).collect();
    for (j, row) in norms.iter().enumerate() {
        let worst = row.iter().copied().fold(0.0f64, |acc, n| if (n - 1.0).abs() > (acc - 1.0).abs() { n } else { acc });
        if (worst - 1.0).abs() > NORM_WARN {
            warnings.push(format!("user {}: codeword norm {worst:.4} differs from 1", j + 1));
        }
    }
    let mut template_deviation = None;
    if let Some(t) = template {
        if t.factor_graph() != g || t.codebook_size() != m {
            violations.push(format!("factor matrix or codebook size differs from template `{}`", t.name()));
        } else {
            let dev = t
                .extract_params(set)
                .and_then(|a| t.instantiate(&a))
                .map(|rebuilt| max_entry_difference(set, &rebuilt));
            match dev {
                Ok(d) => {
                    if d > 1e-4 {
                        warnings.push(format!("entries deviate from template `{}` by up to {d:.4}", t.name()));
                    }
                    template_deviation = Some(d);
                }
                Err(e) => violations.push(format!("template `{}`: {e}", t.name())),
            }
        }
    }
    ValidationReport { passed: violations.is_empty(), violations, warnings, norms, template_deviation }
}

fn one_based(v: &[usize]) -> Vec<usize> {
    v.iter().map(|k| k + 1).collect()
}

fn max_entry_difference(a: &CodebookSet, b: &CodebookSet) -> f64 {
    a.all_codewords()
        .zip(b.all_codewords())
        .flat_map(|((_, x), (_, y))| x.entries().iter().zip(y.entries()).map(|(p, q)| (p - q).norm()).collect::<Vec<_>>())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::builtin_template;

    #[test]
    fn every_fixture_loads() {
        for id in FIXTURE_IDS {
            let f = load_fixture(id).unwrap_or_else(|e| panic!("{id}: {e}"));
            assert!(!f.source.is_empty() && !f.precision.is_empty());
        }
    }

    #[test]
    fn unknown_id_lists_available() {
        let msg = load_fixture("table7").unwrap_err().to_string();
        assert!(msg.contains("table2_awgn_6x4"), "{msg}");
    }

    #[test]
    fn table2_shape_and_text() {
        let set = load_codebooks("table2_awgn_6x4").unwrap();
        assert_eq!((set.users(), set.resources(), set.codebook_size()), (6, 4, 4));
        assert_eq!(set.entry(0, 0, 0), Complex64::new(-0.3318, 0.6262));
        assert_eq!(set.entry(2, 0, 1), Complex64::new(-0.4202, -0.835));
    }

    #[test]
    fn table5_is_12_users_on_6_resources() {
        let set = load_codebooks("table5_awgn_12x6").unwrap();
        assert_eq!((set.users(), set.resources()), (12, 6));
        assert_eq!(set.factor_graph(), &load_factor("eq10_factor_12x6").unwrap());
    }

    #[test]
    fn eq2_matches_template() {
        assert_eq!(&load_factor("eq2_factor_6x4").unwrap(), builtin_template("6x4").unwrap().factor_graph());
    }

    #[test]
    fn table2_report() {
        let set = load_codebooks("table2_awgn_6x4").unwrap();
        let t = builtin_template("6x4").unwrap();
        let r = validate_codebook(&set, Some(&t));
        assert!(r.passed, "{:?}", r.violations);
        assert!(r.template_deviation.unwrap() < 1e-4);
        assert!((r.norms[3][0] - 1.17).abs() < 0.01, "{:?}", r.norms[3]);
        assert!(r.warnings.iter().any(|w| w.starts_with("user 4")));
    }

    #[test]
    fn zero_set_flags_distinctness() {
        let g = builtin_template("6x4").unwrap().factor_graph().clone();
        let zero = vec![vec![vec![Complex64::new(0.0, 0.0); 4]; 4]; 6];
        let r = validate_codebook(&CodebookSet::new(g, zero).unwrap(), None);
        assert!(!r.passed);
        assert!(r.violations.iter().any(|v| v.contains("identical")));
    }

    #[test]
    fn asymmetric_set_flagged() {
        let set = load_codebooks("table3_fading_6x4").unwrap();
        let mut books = set.to_nested();
        books[1][3][1] = Complex64::new(0.5, 0.5);
        let r = validate_codebook(&CodebookSet::new(set.factor_graph().clone(), books).unwrap(), None);
        assert!(r.violations.iter().any(|v| v.contains("negation")), "{:?}", r.violations);
    }

    #[test]
    fn example_vectors() {
        let Payload::Vectors(ex) = load_fixture("example1_vectors").unwrap().payload else { panic!("wrong kind") };
        assert_eq!(ex.initial_rows.len(), 3);
        assert_eq!(crate::codebook::unpack_params(&ex.best_row).unwrap(), ex.a_opt);
    }
}
