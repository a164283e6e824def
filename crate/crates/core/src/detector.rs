//! Multi-user detection on the factor graph.
//!
//! [`MpaDetector`] runs sum-product message passing between resource nodes and
//! user nodes. Each round updates every resource-to-user message and then
//! every user-to-resource message; final beliefs multiply the last
//! resource-to-user messages. [`map_detect`] is the exhaustive joint ML/MAP
//! oracle used to check it.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::codebook::CodebookSet;
use crate::{Error, Result};

/// Arithmetic used for messages.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MpaDomain {
    /// Probabilities, rescaled on every update.
    #[default]
    Linear,
    /// Log-probabilities with exact log-sum-exp.
    Log,
    /// Log-probabilities with the max approximation of log-sum-exp.
    MaxLog,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpaConfig {
    pub iterations: usize,
    pub domain: MpaDomain,
    /// Weight of the previous user-to-resource message, in `[0, 1)`.
    pub damping: f64,
}

impl Default for MpaConfig {
    fn default() -> Self {
        Self { iterations: 10, domain: MpaDomain::Linear, damping: 0.0 }
    }
}

impl MpaConfig {
    pub fn with_iterations(iterations: usize) -> Self {
        Self { iterations, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("MPA needs at least one iteration".into()));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::InvalidConfig(format!("damping {} is outside [0, 1)", self.damping)));
        }
        Ok(())
    }
}

/// Per-user posterior probability vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct Belief {
    probs: Vec<Vec<f64>>,
}

impl Belief {
    /// Checks that each vector is nonnegative and sums to 1 within `1e-9`.
    pub fn new(probs: Vec<Vec<f64>>) -> Result<Self> {
        for (j, p) in probs.iter().enumerate() {
            let sum: f64 = p.iter().sum();
            if p.iter().any(|&v| v.is_nan() || v < 0.0) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidConfig(format!("belief of user {} is not a probability vector", j + 1)));
            }
        }
        Ok(Self { probs })
    }

    pub fn users(&self) -> usize {
        self.probs.len()
    }

    pub fn user(&self, j: usize) -> &[f64] {
        &self.probs[j]
    }

    pub fn as_rows(&self) -> &[Vec<f64>] {
        &self.probs
    }
}

/// Per-user argmax; ties go to the smaller index.
pub fn hard_decision(b: &Belief) -> Vec<usize> {
    b.probs.iter().map(|p| argmax(p)).collect()
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate().skip(1) {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Graph layout and message storage, reusable across frames of one codebook set.
#[derive(Clone, Debug)]
pub struct MpaDetector {
    cfg: MpaConfig,
    m: usize,
    users: usize,
    /// Users on each resource, ascending.
    on: Vec<Vec<usize>>,
    /// `(resource, position in on[resource])` for each user.
    edges: Vec<Vec<(usize, usize)>>,
    /// Codeword entries `[user][symbol][resource]`.
    values: Vec<Vec<Vec<Complex64>>>,
    /// `[resource][combination * degree + position]` symbol digits, first user most significant.
    digits: Vec<Vec<u8>>,
    // Messages `[resource][position * m + symbol]`, probabilities or logs depending on the domain.
    r2v: Vec<Vec<f64>>,
    v2r: Vec<Vec<f64>>,
    /// `[resource][combination]` likelihoods (linear) or log-likelihoods, fixed for one frame.
    metric: Vec<Vec<f64>>,
    prefix: Vec<f64>,
}

impl MpaDetector {
    pub fn new(set: &CodebookSet, cfg: MpaConfig) -> Result<Self> {
        cfg.validate()?;
        let g = set.factor_graph();
        let m = set.codebook_size();
        let on: Vec<Vec<usize>> = (0..set.resources()).map(|k| g.users_on(k)).collect();
        let mut edges = vec![Vec::new(); set.users()];
        for (k, users) in on.iter().enumerate() {
            for (pos, &j) in users.iter().enumerate() {
                edges[j].push((k, pos));
            }
        }
        let digits = on
            .iter()
            .map(|users| {
                let d = users.len();
                let count = m.pow(d as u32);
                let mut table = vec![0u8; count * d];
                for c in 0..count {
                    let mut rest = c;
                    for pos in (0..d).rev() {
                        table[c * d + pos] = (rest % m) as u8;
                        rest /= m;
                    }
                }
                table
            })
            .collect();
        let r2v = on.iter().map(|u| vec![0.0; u.len() * m]).collect();
        let v2r = on.iter().map(|u| vec![0.0; u.len() * m]).collect();
        let metric = on.iter().map(|u| vec![0.0; m.pow(u.len() as u32)]).collect();
        let max_degree = on.iter().map(Vec::len).max().unwrap_or(0);
        Ok(Self {
            cfg,
            m,
            users: set.users(),
            on,
            edges,
            values: set.to_nested(),
            digits,
            r2v,
            v2r,
            metric,
            prefix: vec![0.0; max_degree],
        })
    }

    pub fn config(&self) -> &MpaConfig {
        &self.cfg
    }

    /// Runs `cfg.iterations` rounds on received vector `y` with gains `h` (`K x J`).
    pub fn detect(&mut self, y: &[Complex64], h: &[Vec<Complex64>], n0: f64) -> Result<Belief> {
        self.check_inputs(y, h, n0)?;
        self.init_messages();
        self.likelihoods(y, h, n0);
        for _ in 0..self.cfg.iterations {
            self.round();
        }
        Ok(self.beliefs())
    }

    /// Like [`detect`](Self::detect) but returns the beliefs after every round.
    pub fn detect_traced(&mut self, y: &[Complex64], h: &[Vec<Complex64>], n0: f64) -> Result<Vec<Belief>> {
        self.check_inputs(y, h, n0)?;
        self.init_messages();
        self.likelihoods(y, h, n0);
        let mut out = Vec::with_capacity(self.cfg.iterations);
        for _ in 0..self.cfg.iterations {
            self.round();
            out.push(self.beliefs());
        }
        Ok(out)
    }

    /// Resource-to-user messages of the last call as probabilities, `[resource][position][symbol]`.
    pub fn resource_messages(&self) -> Vec<Vec<Vec<f64>>> {
        self.export(&self.r2v)
    }

    /// User-to-resource messages of the last call as probabilities, `[resource][position][symbol]`.
    pub fn user_messages(&self) -> Vec<Vec<Vec<f64>>> {
        self.export(&self.v2r)
    }

    fn export(&self, msgs: &[Vec<f64>]) -> Vec<Vec<Vec<f64>>> {
        msgs.iter()
            .map(|row| {
                row.chunks(self.m)
                    .map(|c| if self.is_log() { c.iter().map(|v| v.exp()).collect() } else { c.to_vec() })
                    .collect()
            })
            .collect()
    }

    fn is_log(&self) -> bool {
        self.cfg.domain != MpaDomain::Linear
    }

    fn check_inputs(&self, y: &[Complex64], h: &[Vec<Complex64>], n0: f64) -> Result<()> {
        let k = self.on.len();
        if y.len() != k || h.len() != k || h.iter().any(|r| r.len() != self.users) {
            return Err(Error::Shape(format!("detector expects y of length {k} and a {k} x {} gain matrix", self.users)));
        }
        if !n0.is_finite() || n0 <= 0.0 {
            return Err(Error::InvalidConfig(format!("noise variance must be positive and finite, got {n0}")));
        }
        let finite = |x: &Complex64| x.re.is_finite() && x.im.is_finite();
        if !y.iter().all(finite) || !h.iter().flatten().all(finite) {
            return Err(Error::NonFinite("received vector or channel gains".into()));
        }
        Ok(())
    }

    fn init_messages(&mut self) {
        let init = if self.is_log() { -(self.m as f64).ln() } else { 1.0 / self.m as f64 };
        for row in &mut self.v2r {
            row.fill(init);
        }
        for row in &mut self.r2v {
            row.fill(init);
        }
    }

    /// Fills `metric[k][c]` with `-|y_k - s_c|^2 / n0`, or in the linear
    /// domain its exponential shifted so the largest entry is 1.
    fn likelihoods(&mut self, y: &[Complex64], h: &[Vec<Complex64>], n0: f64) {
        let log = self.is_log();
        for (k, users) in self.on.iter().enumerate() {
            let d = users.len();
            let digits = &self.digits[k];
            let table = &mut self.metric[k];
            for (c, dst) in table.iter_mut().enumerate() {
                let mut s = Complex64::new(0.0, 0.0);
                for (pos, &j) in users.iter().enumerate() {
                    s += h[k][j] * self.values[j][digits[c * d + pos] as usize][k];
                }
                *dst = -(y[k] - s).norm_sqr() / n0;
            }
            if !log {
                let top = table.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                table.iter_mut().for_each(|v| *v = flush((*v - top).exp()));
            }
        }
    }

    fn round(&mut self) {
        for k in 0..self.on.len() {
            self.update_resource(k);
        }
        self.update_users();
    }

    fn update_resource(&mut self, k: usize) {
        let m = self.m;
        let d = self.on[k].len();
        if d == 0 {
            return;
        }
        let count = m.pow(d as u32);
        let digits = &self.digits[k];
        let metric = &self.metric[k];
        let v2r = &self.v2r[k];
        let r2v = &mut self.r2v[k];
        match self.cfg.domain {
            MpaDomain::Linear => {
                r2v.fill(0.0);
                let pre = &mut self.prefix[..d];
                for (c, &mc) in metric.iter().enumerate() {
                    if mc == 0.0 {
                        continue;
                    }
                    let combo = &digits[c * d..(c + 1) * d];
                    // leave-one-out products: prefix before `pos` times suffix after it
                    let mut acc = mc;
                    for (pos, &sym) in combo.iter().enumerate() {
                        pre[pos] = acc;
                        acc *= v2r[pos * m + sym as usize];
                    }
                    let mut suffix = 1.0;
                    for (pos, &sym) in combo.iter().enumerate().rev() {
                        let idx = pos * m + sym as usize;
                        r2v[idx] += pre[pos] * suffix;
                        suffix *= v2r[idx];
                    }
                }
                for msg in r2v.chunks_mut(m) {
                    normalize_linear(msg);
                }
            }
            MpaDomain::Log | MpaDomain::MaxLog => {
                let max_log = self.cfg.domain == MpaDomain::MaxLog;
                // Per (position, symbol): running max and sum of exp(term - max).
                let mut acc = vec![(f64::NEG_INFINITY, 0.0f64); d * m];
                for c in 0..count {
                    let combo = &digits[c * d..(c + 1) * d];
                    for pos in 0..d {
                        let mut t = metric[c];
                        for (other, &sym) in combo.iter().enumerate() {
                            if other != pos {
                                t += v2r[other * m + sym as usize];
                            }
                        }
                        let slot = &mut acc[pos * m + combo[pos] as usize];
                        if max_log {
                            slot.0 = slot.0.max(t);
                        } else {
                            lse_push(slot, t);
                        }
                    }
                }
                for (dst, &(mx, sum)) in r2v.iter_mut().zip(&acc) {
                    *dst = if max_log || mx == f64::NEG_INFINITY { mx } else { mx + sum.ln() };
                }
                for msg in r2v.chunks_mut(m) {
                    normalize_log(msg);
                }
            }
        }
    }

    fn update_users(&mut self) {
        let m = self.m;
        let log = self.is_log();
        let damping = self.cfg.damping;
        let mut scratch = vec![0.0; m];
        for edges in &self.edges {
            for &(k, pos) in edges {
                scratch.fill(if log { 0.0 } else { 1.0 });
                for &(k2, pos2) in edges {
                    if k2 == k {
                        continue;
                    }
                    let incoming = &self.r2v[k2][pos2 * m..(pos2 + 1) * m];
                    for (s, v) in scratch.iter_mut().zip(incoming) {
                        if log {
                            *s += v;
                        } else {
                            *s *= v;
                        }
                    }
                }
                if log {
                    normalize_log(&mut scratch);
                } else {
                    normalize_linear(&mut scratch);
                }
                let out = &mut self.v2r[k][pos * m..(pos + 1) * m];
                if damping > 0.0 {
                    for (o, &s) in out.iter_mut().zip(&scratch) {
                        let (old, new) = if log { (o.exp(), s.exp()) } else { (*o, s) };
                        let mixed = damping * old + (1.0 - damping) * new;
                        *o = if log { mixed.ln() } else { mixed };
                    }
                    if log {
                        normalize_log(out);
                    } else {
                        normalize_linear(out);
                    }
                } else {
                    out.copy_from_slice(&scratch);
                }
            }
        }
    }

    fn beliefs(&self) -> Belief {
        let m = self.m;
        let log = self.is_log();
        let probs = self
            .edges
            .iter()
            .map(|edges| {
                let mut b = vec![if log { 0.0 } else { 1.0 }; m];
                for &(k, pos) in edges {
                    for (s, v) in b.iter_mut().zip(&self.r2v[k][pos * m..(pos + 1) * m]) {
                        if log {
                            *s += v;
                        } else {
                            *s *= v;
                        }
                    }
                }
                if log {
                    normalize_log(&mut b);
                    b.iter_mut().for_each(|v| *v = v.exp());
                    normalize_linear(&mut b);
                } else {
                    normalize_linear(&mut b);
                }
                b
            })
            .collect();
        Belief { probs }
    }
}

/// Linear-domain values below this are set to zero. Products of up to four
/// factors then stay clear of subnormal numbers, which are very slow.
const FLUSH: f64 = 1e-60;

fn flush(x: f64) -> f64 {
    if x < FLUSH {
        0.0
    } else {
        x
    }
}

/// Scales to unit sum, flushing tiny entries; falls back to uniform when the
/// sum is zero or not finite.
fn normalize_linear(v: &mut [f64]) {
    let sum: f64 = v.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        v.iter_mut().for_each(|x| *x = flush(*x / sum));
    } else {
        let u = 1.0 / v.len() as f64;
        v.fill(u);
    }
}

/// Subtracts log-sum-exp so that the exponentials sum to one.
fn normalize_log(v: &mut [f64]) {
    let mut acc = (f64::NEG_INFINITY, 0.0);
    for &x in v.iter() {
        lse_push(&mut acc, x);
    }
    let total = acc.0 + acc.1.ln();
    if total.is_finite() {
        v.iter_mut().for_each(|x| *x -= total);
    } else {
        let u = -(v.len() as f64).ln();
        v.fill(u);
    }
}

/// Streaming log-sum-exp accumulator `(max, sum of exp(x - max))`.
fn lse_push(acc: &mut (f64, f64), x: f64) {
    if x == f64::NEG_INFINITY {
        return;
    }
    if x > acc.0 {
        acc.1 = acc.1 * (acc.0 - x).exp() + 1.0;
        acc.0 = x;
    } else {
        acc.1 += (x - acc.0).exp();
    }
}

/// One-shot MPA detection.
pub fn mpa_detect(y: &[Complex64], set: &CodebookSet, h: &[Vec<Complex64>], n0: f64, cfg: MpaConfig) -> Result<Belief> {
    MpaDetector::new(set, cfg)?.detect(y, h, n0)
}

/// Largest joint hypothesis count accepted by [`map_detect`].
pub const MAP_LIMIT: u128 = 1 << 24;

/// Exhaustive joint detection: the symbol tuple minimizing
/// `sum_k |y_k - sum_j h[k][j] x_j[k]|^2`, ties to the lexicographically smallest tuple.
///
/// Depth-first over users with branch-and-bound; a resource's distance is
/// added once its last user has been fixed.
pub fn map_detect(y: &[Complex64], set: &CodebookSet, h: &[Vec<Complex64>], n0: f64) -> Result<Vec<usize>> {
    let m = set.codebook_size();
    let j_count = set.users();
    let hypotheses = (m as u128).checked_pow(j_count as u32).unwrap_or(u128::MAX);
    if hypotheses > MAP_LIMIT {
        return Err(Error::MapTooLarge { hypotheses, limit: MAP_LIMIT });
    }
    let k_count = set.resources();
    if y.len() != k_count || h.len() != k_count || h.iter().any(|r| r.len() != j_count) {
        return Err(Error::Shape("received vector or gain matrix does not match the codebook".into()));
    }
    if !n0.is_finite() || n0 <= 0.0 {
        return Err(Error::InvalidConfig(format!("noise variance must be positive and finite, got {n0}")));
    }
    let finite = |x: &Complex64| x.re.is_finite() && x.im.is_finite();
    if !y.iter().all(finite) || !h.iter().flatten().all(finite) {
        return Err(Error::NonFinite("received vector or channel gains".into()));
    }
    let g = set.factor_graph();
    // Resources completed when user j is fixed.
    let mut closes: Vec<Vec<usize>> = vec![Vec::new(); j_count];
    for k in 0..k_count {
        if let Some(&last) = g.users_on(k).last() {
            closes[last].push(k);
        }
    }
    let supports: Vec<Vec<usize>> = (0..j_count).map(|j| g.resources_of(j)).collect();
    let mut search = MapSearch {
        set,
        y,
        h,
        m,
        closes,
        supports,
        acc: vec![Complex64::new(0.0, 0.0); k_count],
        current: vec![0; j_count],
        best: vec![0; j_count],
        best_metric: f64::INFINITY,
    };
    search.descend(0, 0.0);
    Ok(search.best)
}

struct MapSearch<'a> {
    set: &'a CodebookSet,
    y: &'a [Complex64],
    h: &'a [Vec<Complex64>],
    m: usize,
    closes: Vec<Vec<usize>>,
    supports: Vec<Vec<usize>>,
    acc: Vec<Complex64>,
    current: Vec<usize>,
    best: Vec<usize>,
    best_metric: f64,
}

impl MapSearch<'_> {
    fn descend(&mut self, j: usize, partial: f64) {
        if j == self.current.len() {
            if partial < self.best_metric {
                self.best_metric = partial;
                self.best.copy_from_slice(&self.current);
            }
            return;
        }
        for s in 0..self.m {
            for i in 0..self.supports[j].len() {
                let k = self.supports[j][i];
                self.acc[k] += self.h[k][j] * self.set.entry(j, s, k);
            }
            let mut next = partial;
            for &k in &self.closes[j] {
                next += (self.y[k] - self.acc[k]).norm_sqr();
            }
            if next < self.best_metric {
                self.current[j] = s;
                self.descend(j + 1, next);
            }
            for i in 0..self.supports[j].len() {
                let k = self.supports[j][i];
                self.acc[k] -= self.h[k][j] * self.set.entry(j, s, k);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::FactorGraph;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn ones(k: usize, j: usize) -> Vec<Vec<Complex64>> {
        vec![vec![c(1.0, 0.0); j]; k]
    }

    #[test]
    fn hard_decision_examples() {
        let b = Belief::new(vec![vec![0.25; 4], vec![0.0, 0.0, 1.0, 0.0], vec![0.1, 0.6, 0.2, 0.1]]).unwrap();
        assert_eq!(hard_decision(&b), vec![0, 2, 1]);
    }

    #[test]
    fn belief_rejects_bad_vectors() {
        assert!(Belief::new(vec![vec![0.5, 0.4]]).is_err());
        assert!(Belief::new(vec![vec![1.5, -0.5]]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(MpaConfig::with_iterations(0).validate().is_err());
        assert!(MpaConfig { damping: 1.0, ..MpaConfig::default() }.validate().is_err());
        assert_eq!(MpaConfig::default().iterations, 10);
    }

    #[test]
    fn single_user_map_is_nearest_codeword() {
        let pts = [c(1.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(-1.0, 0.0)];
        let set = CodebookSet::new(FactorGraph::new(vec![vec![1]]).unwrap(), vec![pts.iter().map(|&p| vec![p]).collect()]).unwrap();
        let got = map_detect(&[c(0.2, 0.7)], &set, &ones(1, 1), 1.0).unwrap();
        assert_eq!(got, vec![1]);
    }

    #[test]
    fn map_tie_breaks_lexicographically() {
        // two users with identical constellations on one resource: (a, b) and (b, a) tie
        let pts = [c(1.0, 0.0), c(-1.0, 0.0)];
        let book: Vec<Vec<Complex64>> = pts.iter().map(|&p| vec![p]).collect();
        let set = CodebookSet::new(FactorGraph::new(vec![vec![1, 1]]).unwrap(), vec![book.clone(), book]).unwrap();
        let got = map_detect(&[c(0.0, 0.0)], &set, &ones(1, 2), 1.0).unwrap();
        assert_eq!(got, vec![0, 1]);
    }

    #[test]
    fn map_guard() {
        let book: Vec<Vec<Complex64>> = (0..4).map(|i| vec![c(i as f64, 0.0)]).collect();
        let set = CodebookSet::new(FactorGraph::new(vec![vec![1; 13]]).unwrap(), vec![book; 13]).unwrap();
        let err = map_detect(&[c(0.0, 0.0)], &set, &ones(1, 13), 1.0).unwrap_err();
        assert!(matches!(err, Error::MapTooLarge { .. }));
        assert!(err.to_string().contains("MPA"));
    }

    #[test]
    fn mpa_rejects_bad_inputs() {
        let book: Vec<Vec<Complex64>> = vec![vec![c(1.0, 0.0)], vec![c(-1.0, 0.0)]];
        let set = CodebookSet::new(FactorGraph::new(vec![vec![1]]).unwrap(), vec![book]).unwrap();
        let mut det = MpaDetector::new(&set, MpaConfig::default()).unwrap();
        assert!(det.detect(&[c(f64::NAN, 0.0)], &ones(1, 1), 1.0).is_err());
        assert!(det.detect(&[c(0.0, 0.0)], &ones(1, 1), 0.0).is_err());
        assert!(det.detect(&[c(0.0, 0.0), c(0.0, 0.0)], &ones(1, 1), 1.0).is_err());
    }

    #[test]
    fn linear_domain_survives_huge_distances() {
        let book: Vec<Vec<Complex64>> = vec![vec![c(1.0, 0.0)], vec![c(-1.0, 0.0)]];
        let set = CodebookSet::new(FactorGraph::new(vec![vec![1]]).unwrap(), vec![book]).unwrap();
        let b = mpa_detect(&[c(1e6, 0.0)], &set, &ones(1, 1), 1e-6, MpaConfig::default()).unwrap();
        assert_eq!(b.user(0), &[1.0, 0.0]);
    }

    #[test]
    fn log_sum_exp_accumulator() {
        let mut acc = (f64::NEG_INFINITY, 0.0);
        for x in [0.0f64.ln(), 1.0f64.ln(), 3.0f64.ln()] {
            lse_push(&mut acc, x);
        }
        assert!((acc.0 + acc.1.ln() - 4.0f64.ln()).abs() < 1e-15);
    }
}
