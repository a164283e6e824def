use num_complex::Complex64;
use scma::channel::{draw_frame, ebn0_to_n0, transmit, ChannelKind, ChannelRealization};
use scma::codebook::CodebookSet;
use scma::detector::{hard_decision, map_detect, MpaConfig, MpaDetector};
use scma::fixtures::load_codebooks;
use scma::montecarlo::compare_detectors;
use scma::seed::{stream_rng, Domain};
use scma::structure::FactorGraph;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Two users, two resources, F = [[1, 0], [1, 1]]: a tree.
fn tree_system() -> CodebookSet {
    let u1 = vec![
        vec![c(0.7, 0.1), c(-0.2, 0.5)],
        vec![c(0.3, -0.6), c(0.4, 0.4)],
        vec![c(-0.3, 0.6), c(-0.4, -0.4)],
        vec![c(-0.7, -0.1), c(0.2, -0.5)],
    ];
    let u2 = vec![
        vec![c(0.0, 0.0), c(0.9, 0.2)],
        vec![c(0.0, 0.0), c(-0.1, 0.8)],
        vec![c(0.0, 0.0), c(0.1, -0.8)],
        vec![c(0.0, 0.0), c(-0.9, -0.2)],
    ];
    CodebookSet::new(FactorGraph::new(vec![vec![1, 0], vec![1, 1]]).unwrap(), vec![u1, u2]).unwrap()
}

/// Exact posterior marginals by enumerating every joint hypothesis.
fn brute_marginals(set: &CodebookSet, y: &[Complex64], h: &[Vec<Complex64>], n0: f64) -> Vec<Vec<f64>> {
    let (j_count, m) = (set.users(), set.codebook_size());
    let mut out = vec![vec![0.0; m]; j_count];
    let total = m.pow(j_count as u32);
    let mut weights = Vec::with_capacity(total);
    for idx in 0..total {
        let syms: Vec<usize> = (0..j_count).map(|j| idx / m.pow((j_count - 1 - j) as u32) % m).collect();
        let ch = ChannelRealization { gains: h.to_vec(), noise: vec![c(0.0, 0.0); y.len()], n0 };
        let clean = transmit(set, &syms, &ch).unwrap();
        let d: f64 = y.iter().zip(&clean).map(|(a, b)| (a - b).norm_sqr()).sum();
        weights.push((syms, (-d / n0).exp()));
    }
    let z: f64 = weights.iter().map(|(_, w)| w).sum();
    for (syms, w) in weights {
        for (j, &s) in syms.iter().enumerate() {
            out[j][s] += w / z;
        }
    }
    out
}

#[test]
fn tree_beliefs_are_exact_after_two_rounds() {
    let set = tree_system();
    for seed in 0..50 {
        let mut rng = stream_rng(seed, Domain::Frame, 0);
        let kind = if seed % 2 == 0 { ChannelKind::Awgn } else { ChannelKind::Rayleigh };
        let n0 = 0.05 + 0.1 * (seed % 7) as f64;
        let f = draw_frame(kind, set.config(), n0, &mut rng);
        let y = transmit(&set, &f.symbols, &f.channel).unwrap();
        let exact = brute_marginals(&set, &y, &f.channel.gains, n0);
        let b = MpaDetector::new(&set, MpaConfig::with_iterations(2)).unwrap().detect(&y, &f.channel.gains, n0).unwrap();
        for (j, row) in exact.iter().enumerate() {
            for (p, q) in b.user(j).iter().zip(row) {
                assert!((p - q).abs() < 1e-10, "seed {seed}: {p} vs {q}");
            }
        }
    }
}

#[test]
fn noiseless_decisions_are_exact() {
    let set = load_codebooks("table2_awgn_6x4").unwrap();
    let mut det = MpaDetector::new(&set, MpaConfig::default()).unwrap();
    for i in 0..100 {
        let mut rng = stream_rng(17, Domain::Frame, i);
        let f = draw_frame(ChannelKind::Awgn, set.config(), 0.0, &mut rng);
        let y = transmit(&set, &f.symbols, &f.channel).unwrap();
        assert_eq!(hard_decision(&det.detect(&y, &f.channel.gains, 1e-4).unwrap()), f.symbols);
        assert_eq!(map_detect(&y, &set, &f.channel.gains, 1e-4).unwrap(), f.symbols);
    }
}

#[test]
fn beliefs_settle_within_default_rounds() {
    // Loopy frames of the other fixtures can oscillate indefinitely; only the
    // AWGN-optimized 6x4 set on its own channel settles on every frame.
    let set = load_codebooks("table2_awgn_6x4").unwrap();
    let n0 = ebn0_to_n0(10.0, set.config());
    let mut det = MpaDetector::new(&set, MpaConfig::default()).unwrap();
    for i in 0..500 {
        let mut rng = stream_rng(23, Domain::Frame, i);
        let f = draw_frame(ChannelKind::Awgn, set.config(), n0, &mut rng);
        let y = transmit(&set, &f.symbols, &f.channel).unwrap();
        let trace = det.detect_traced(&y, &f.channel.gains, n0).unwrap();
        let (a, b) = (&trace[8], &trace[9]);
        let change = (0..set.users())
            .flat_map(|j| a.user(j).iter().zip(b.user(j)).map(|(p, q)| (p - q).abs()).collect::<Vec<_>>())
            .fold(0.0, f64::max);
        assert!(change < 1e-6, "frame {i}: {change}");
    }
}

#[test]
fn map_never_loses_to_mpa_on_paired_frames() {
    let set = load_codebooks("table2_awgn_6x4").unwrap();
    let cmp = compare_detectors(&set, 8.0, ChannelKind::Awgn, 2000, MpaConfig::default(), 5).unwrap();
    assert!(cmp.map_errors <= cmp.mpa_errors, "{cmp:?}");
    assert!(cmp.agreement() >= 0.99, "{cmp:?}");
}

#[test]
fn map_handles_the_largest_allowed_system() {
    let set = load_codebooks("table5_awgn_12x6").unwrap();
    let mut rng = stream_rng(3, Domain::Frame, 0);
    let f = draw_frame(ChannelKind::Awgn, set.config(), 1e-3, &mut rng);
    let y = transmit(&set, &f.symbols, &f.channel).unwrap();
    assert_eq!(map_detect(&y, &set, &f.channel.gains, 1e-3).unwrap(), f.symbols);
}
