use num_complex::Complex64;
use scma::codebook::{pack_params, unpack_params, CodebookSet};
use scma::fixtures::{load_codebooks, load_factor, load_fixture, validate_codebook, Payload, FIXTURE_IDS};
use scma::metrics::{kpi, DEFAULT_REL_TOL};
use scma::structure::{builtin_template, derive_8x4};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[test]
fn kpi_columns_reproduce() {
    let Payload::Kpis(cols) = load_fixture("table4_kpis").unwrap().payload else { panic!("wrong kind") };
    assert_eq!(cols.len(), 2);
    for col in cols {
        let r = kpi(&load_codebooks(&col.codebooks).unwrap(), DEFAULT_REL_TOL).unwrap();
        assert!((r.d_e_min - col.d_e_min).abs() <= 1e-3, "{}: {r:?}", col.name);
        assert!((r.d_p_min - col.d_p_min).abs() <= 1e-3, "{}: {r:?}", col.name);
        assert_eq!((r.tau_e, r.tau_p), (col.tau_e, col.tau_p), "{}", col.name);
    }
}

#[test]
fn six_by_four_tables_are_template_instances() {
    let t = builtin_template("6x4").unwrap();
    for id in ["table2_awgn_6x4", "table3_fading_6x4"] {
        let set = load_codebooks(id).unwrap();
        let a = t.extract_params(&set).unwrap();
        let rebuilt = t.instantiate(&a).unwrap();
        for ((_, x), (_, y)) in set.all_codewords().zip(rebuilt.all_codewords()) {
            for (p, q) in x.entries().iter().zip(y.entries()) {
                assert!((p - q).norm() < 1e-4, "{id}");
            }
        }
    }
}

#[test]
fn table2_parameters() {
    let set = load_codebooks("table2_awgn_6x4").unwrap();
    let a = builtin_template("6x4").unwrap().extract_params(&set).unwrap();
    let expect = [c(-0.3318, 0.6262), c(-0.8304, 0.4252), c(0.7055, 0.0), c(-0.3601, 0.0), c(-0.4202, -0.835), c(0.5933, 0.3548)];
    assert_eq!(a, expect);
}

#[test]
fn norm_report_for_published_sets() {
    let t = builtin_template("6x4").unwrap();
    let r = validate_codebook(&load_codebooks("table2_awgn_6x4").unwrap(), Some(&t));
    assert!(r.passed);
    for j in [3, 5] {
        assert!(r.norms[j].iter().all(|n| (n - 1.17).abs() < 0.02), "user {}: {:?}", j + 1, r.norms[j]);
    }
    for j in 0..2 {
        assert!(r.norms[j].iter().all(|n| (n - 1.0).abs() < 1e-3));
    }
}

#[test]
fn twelve_by_six_tables_follow_structure_supports() {
    let t = builtin_template("12x6").unwrap();
    for id in ["table5_awgn_12x6", "table6_fading_12x6"] {
        let set = load_codebooks(id).unwrap();
        let r = validate_codebook(&set, Some(&t));
        assert!(r.passed, "{id}: {:?}", r.violations);
        assert!(r.norms.iter().flatten().all(|n| (n - 1.0).abs() < 2e-3), "{id}");
        let meta = load_fixture(id).unwrap().meta;
        assert!(meta.get("structure_mismatch").is_some());
    }
}

#[test]
fn codebook_fixtures_round_trip() {
    for id in ["table2_awgn_6x4", "table3_fading_6x4", "table5_awgn_12x6", "table6_fading_12x6"] {
        let set = load_codebooks(id).unwrap();
        let back = CodebookSet::from_json_str(&set.to_json_string()).unwrap();
        assert_eq!(back, set, "{id}");
    }
}

#[test]
fn factor_matrices() {
    let eq9 = load_factor("eq9_factor_8x4").unwrap();
    let eq10 = load_factor("eq10_factor_12x6").unwrap();
    assert!(eq9.has_four_cycle());
    assert!(!eq10.has_four_cycle());
    assert!(!load_factor("eq2_factor_6x4").unwrap().has_four_cycle());
    assert_eq!(eq10.regular_degree(), Some(4));
    assert_eq!(&eq10, builtin_template("12x6").unwrap().factor_graph());
}

#[test]
fn eight_user_extension_of_fading_set() {
    let base = load_codebooks("table3_fading_6x4").unwrap();
    let ext = derive_8x4(&base).unwrap();
    assert_eq!(ext.factor_graph(), &load_factor("eq9_factor_8x4").unwrap());
    assert_eq!(ext.factor_graph().resources_of(6), vec![0, 1]);
    let pool: Vec<Complex64> = [2usize, 3]
        .iter()
        .flat_map(|&j| (0..4).flat_map(move |m| (0..4).map(move |k| (j, m, k))))
        .map(|(j, m, k)| base.entry(j, m, k))
        .filter(|v| v.norm() > 0.0)
        .collect();
    for j in 6..8 {
        for m in 0..4 {
            for v in ext.codeword(j, m).entries().iter().filter(|v| v.norm() > 0.0) {
                assert!(pool.contains(v));
            }
        }
    }
}

#[test]
fn worked_example() {
    let Payload::Vectors(ex) = load_fixture("example1_vectors").unwrap().payload else { panic!("wrong kind") };
    assert_eq!(pack_params(&ex.a_opt), ex.best_row);
    assert_eq!(unpack_params(&ex.best_row).unwrap(), ex.a_opt);
    let t = builtin_template("6x4").unwrap();
    let set = t.instantiate(&ex.a_opt).unwrap();
    assert_eq!(set.codeword(0, 0).entries(), &[c(-0.33, 0.63), c(0.0, 0.0), c(0.71, 0.0), c(0.0, 0.0)]);
    for row in &ex.initial_rows {
        let n = t.normalize(&unpack_params(row).unwrap()).unwrap();
        let set = t.instantiate(&n.params).unwrap();
        for j in 0..3 {
            for m in 0..4 {
                assert!((set.codeword(j, m).norm() - 1.0).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn ids_are_unique_and_loadable() {
    let mut ids = FIXTURE_IDS.to_vec();
    ids.sort_unstable();
    ids.dedup();
    assert_eq!(ids.len(), FIXTURE_IDS.len());
}
