//! Codebook quality indicators.
//!
//! Distances are taken over every unordered pair of distinct codewords in the
//! whole system, across users as well as within a codebook. The product
//! distance of a pair multiplies `|x_mk - x_nk|` over the dimensions where the
//! two codewords differ.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::codebook::{CodebookSet, Codeword};
use crate::{Error, Result};

/// Entries closer than this are treated as equal when collecting differing dimensions.
pub const DIFF_TOL: f64 = 1e-12;
/// Default relative tolerance for kissing-number counts.
pub const DEFAULT_REL_TOL: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KpiReport {
    pub d_e_min: f64,
    pub tau_e: usize,
    pub d_p_min: f64,
    pub tau_p: usize,
    pub rel_tol: f64,
}

/// Euclidean distance between two codewords.
pub fn euclidean_distance(a: &Codeword, b: &Codeword) -> f64 {
    a.entries().iter().zip(b.entries()).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

/// Product of `|a_k - b_k|` over dimensions differing by more than [`DIFF_TOL`];
/// zero when no dimension differs.
pub fn product_distance(a: &Codeword, b: &Codeword) -> f64 {
    let mut any = false;
    let mut prod = 1.0;
    for (x, y) in a.entries().iter().zip(b.entries()) {
        let d = (x - y).norm();
        if d > DIFF_TOL {
            any = true;
            prod *= d;
        }
    }
    if any {
        prod
    } else {
        0.0
    }
}

/// Minimum Euclidean and product distances and their kissing numbers.
///
/// A pair counts towards a kissing number when its distance is at most
/// `min * (1 + rel_tol)`.
pub fn kpi(set: &CodebookSet, rel_tol: f64) -> Result<KpiReport> {
    if !(rel_tol > 0.0 && rel_tol <= 0.01) {
        return Err(Error::InvalidConfig(format!("rel_tol must lie in (0, 0.01], got {rel_tol}")));
    }
    let words: Vec<&Codeword> = set.all_codewords().map(|(_, c)| c).collect();
    if words.len() < 2 {
        return Err(Error::InvalidConfig("KPIs need at least two codewords".into()));
    }
    let mut de = Vec::with_capacity(words.len() * (words.len() - 1) / 2);
    let mut dp = Vec::with_capacity(de.capacity());
    for (i, a) in words.iter().enumerate() {
        for b in &words[i + 1..] {
            de.push(euclidean_distance(a, b));
            dp.push(product_distance(a, b));
        }
    }
    let (d_e_min, tau_e) = min_and_count(&de, rel_tol);
    let (d_p_min, tau_p) = min_and_count(&dp, rel_tol);
    Ok(KpiReport { d_e_min, tau_e, d_p_min, tau_p, rel_tol })
}

fn min_and_count(values: &[f64], rel_tol: f64) -> (f64, usize) {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let bound = min * (1.0 + rel_tol);
    (min, values.iter().filter(|&&v| v <= bound).count())
}

/// All `M^{d_f}` superimposed values on one resource.
#[derive(Clone, Debug, PartialEq)]
pub struct SumConstellation {
    pub resource: usize,
    /// Lexicographic in the overlapping users' symbols, lowest-numbered user most significant.
    pub points: Vec<Complex64>,
}

impl SumConstellation {
    /// Mean `|s|^2`.
    pub fn mean_power(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.points.len() as f64
    }
}

pub fn sum_constellation(set: &CodebookSet, resource: usize) -> Result<SumConstellation> {
    if resource >= set.resources() {
        return Err(Error::Shape(format!("resource {} does not exist (K = {})", resource + 1, set.resources())));
    }
    let users = set.factor_graph().users_on(resource);
    let m = set.codebook_size();
    let mut points = vec![Complex64::new(0.0, 0.0)];
    for &j in &users {
        points = points
            .iter()
            .flat_map(|&p| (0..m).map(move |s| p + set.entry(j, s, resource)))
            .collect();
    }
    Ok(SumConstellation { resource, points })
}

/// Lower bound on the mutual information between a resource's sum
/// constellation and its noisy observation, in bits:
///
/// `log2 L - log2(1 + (1/L) sum_j sum_{i != j} exp(-|s_j - s_i|^2 / (4 n0)))`,
/// clamped to `[0, log2 L]` with `L` the number of points.
pub fn i_lower_bound(sc: &SumConstellation, n0: f64) -> Result<f64> {
    if n0.is_nan() || n0 <= 0.0 {
        return Err(Error::InvalidConfig(format!("noise variance must be positive, got {n0}")));
    }
    let l = sc.points.len() as f64;
    let mut total = 0.0;
    for (j, sj) in sc.points.iter().enumerate() {
        for (i, si) in sc.points.iter().enumerate() {
            if i != j {
                total += (-(sj - si).norm_sqr() / (4.0 * n0)).exp();
            }
        }
    }
    let bound = l.log2() - (1.0 + total / l).log2();
    Ok(bound.clamp(0.0, l.log2()))
}

/// `I_L` on every resource at one SNR point, plus the mean across resources.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IlPoint {
    pub snr_db: f64,
    pub per_resource: Vec<f64>,
    pub mean: f64,
}

/// Evaluates `I_L` over an SNR grid. On each resource the SNR is the received
/// one, `P_S / n0`, where `P_S` is the mean power of that resource's sum constellation.
pub fn il_profile(set: &CodebookSet, snr_db: &[f64]) -> Result<Vec<IlPoint>> {
    let constellations = (0..set.resources()).map(|k| sum_constellation(set, k)).collect::<Result<Vec<_>>>()?;
    if let Some(sc) = constellations.iter().find(|sc| sc.mean_power() == 0.0) {
        return Err(Error::InvalidConfig(format!("resource {} carries no signal power", sc.resource + 1)));
    }
    snr_db
        .iter()
        .map(|&snr| {
            let per_resource = constellations
                .iter()
                .map(|sc| i_lower_bound(sc, sc.mean_power() / 10f64.powf(snr / 10.0)))
                .collect::<Result<Vec<_>>>()?;
            let mean = per_resource.iter().sum::<f64>() / per_resource.len() as f64;
            Ok(IlPoint { snr_db: snr, per_resource, mean })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::load_codebooks;
    use crate::structure::FactorGraph;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn line(points: &[Complex64]) -> SumConstellation {
        SumConstellation { resource: 0, points: points.to_vec() }
    }

    #[test]
    fn table2_kpis() {
        let r = kpi(&load_codebooks("table2_awgn_6x4").unwrap(), DEFAULT_REL_TOL).unwrap();
        assert!((r.d_e_min - 0.8966).abs() < 1e-3, "{r:?}");
        assert!((r.d_p_min - 0.1103).abs() < 1e-3, "{r:?}");
        assert_eq!((r.tau_e, r.tau_p), (4, 4));
    }

    #[test]
    fn table3_kpis() {
        let r = kpi(&load_codebooks("table3_fading_6x4").unwrap(), DEFAULT_REL_TOL).unwrap();
        assert!((r.d_e_min - 0.8625).abs() < 1e-3, "{r:?}");
        assert!((r.d_p_min - 0.0595).abs() < 1e-3, "{r:?}");
        assert_eq!((r.tau_e, r.tau_p), (4, 4));
    }

    #[test]
    fn antipodal_pair() {
        let x = [c(0.6, 0.0), c(0.0, 0.8)];
        let set = CodebookSet::new(
            FactorGraph::new(vec![vec![1], vec![1]]).unwrap(),
            vec![vec![x.to_vec(), x.iter().map(|v| -v).collect()]],
        )
        .unwrap();
        let r = kpi(&set, DEFAULT_REL_TOL).unwrap();
        assert!((r.d_e_min - 2.0).abs() < 1e-15);
        assert!((r.d_p_min - 1.2 * 1.6).abs() < 1e-15);
        assert_eq!((r.tau_e, r.tau_p), (1, 1));
    }

    #[test]
    fn kpi_rejects_bad_tolerance() {
        let set = load_codebooks("table2_awgn_6x4").unwrap();
        assert!(kpi(&set, 0.0).is_err());
        assert!(kpi(&set, 0.02).is_err());
    }

    #[test]
    fn identical_codewords_have_zero_distances() {
        let z = vec![c(0.0, 0.0)];
        let set = CodebookSet::new(FactorGraph::new(vec![vec![1]]).unwrap(), vec![vec![z.clone(), z]]).unwrap();
        let r = kpi(&set, DEFAULT_REL_TOL).unwrap();
        assert_eq!((r.d_e_min, r.tau_e, r.d_p_min, r.tau_p), (0.0, 1, 0.0, 1));
    }

    #[test]
    fn single_dimension_product_equals_euclidean() {
        let a = Codeword::new(vec![c(0.3, 0.1), c(0.0, 0.0)]);
        let b = Codeword::new(vec![c(-0.2, 0.4), c(0.0, 0.0)]);
        assert!((product_distance(&a, &b) - euclidean_distance(&a, &b)).abs() < 1e-15);
    }

    #[test]
    fn sum_constellation_sizes_and_balance() {
        let set = load_codebooks("table2_awgn_6x4").unwrap();
        for k in 0..4 {
            let sc = sum_constellation(&set, k).unwrap();
            assert_eq!(sc.points.len(), 64);
            assert!(sc.points.iter().sum::<Complex64>().norm() < 1e-12);
        }
    }

    #[test]
    fn single_user_resource_is_its_constellation() {
        let set = CodebookSet::new(
            FactorGraph::new(vec![vec![1]]).unwrap(),
            vec![vec![vec![c(1.0, 0.0)], vec![c(0.0, 1.0)], vec![c(0.0, -1.0)], vec![c(-1.0, 0.0)]]],
        )
        .unwrap();
        let sc = sum_constellation(&set, 0).unwrap();
        assert_eq!(sc.points, vec![c(1.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(-1.0, 0.0)]);
    }

    #[test]
    fn two_point_bound() {
        let v = i_lower_bound(&line(&[c(1.0, 0.0), c(-1.0, 0.0)]), 0.25).unwrap();
        let expect = 1.0 - (1.0 + (-4.0f64).exp()).log2();
        assert!((v - expect).abs() < 1e-14, "{v} vs {expect}");
    }

    #[test]
    fn bound_limits() {
        let sc = sum_constellation(&load_codebooks("table2_awgn_6x4").unwrap(), 0).unwrap();
        assert!(i_lower_bound(&sc, 1e12).unwrap() < 1e-9);
        assert!((i_lower_bound(&sc, 1e-6).unwrap() - 6.0).abs() < 1e-9);
        assert!(i_lower_bound(&sc, 0.0).is_err());
    }

    #[test]
    fn bound_is_monotone_in_noise() {
        let sc = sum_constellation(&load_codebooks("table3_fading_6x4").unwrap(), 2).unwrap();
        let mut prev = f64::INFINITY;
        for i in -40..=40 {
            let v = i_lower_bound(&sc, 10f64.powf(i as f64 / 10.0)).unwrap();
            assert!(v <= prev + 1e-12);
            prev = v;
        }
    }

    #[test]
    fn table2_profile_endpoints() {
        let set = load_codebooks("table2_awgn_6x4").unwrap();
        let p = il_profile(&set, &[-20.0, 40.0]).unwrap();
        assert!(p[0].mean < 0.01, "{:?}", p[0]);
        assert!((p[1].mean - 6.0).abs() < 0.05, "{:?}", p[1]);
        assert_eq!(p[0].per_resource.len(), 4);
    }
}
