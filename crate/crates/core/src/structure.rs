//! Factor graphs and symbolic codebook structures.
//!
//! A [`StructureTemplate`] places signed copies of a small set of complex
//! parameters `a_1 .. a_T` into the sparse codewords of every user. Rows of
//! the factor graph carry distinct one-dimensional constellations (the Latin
//! property) and every codebook is antipodal: symbol `m` is the negation of
//! symbol `M - 1 - m`.

use std::collections::BTreeSet;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::codebook::CodebookSet;
use crate::{Error, Result};

/// Binary `K x J` factor matrix: entry `(k, j)` is 1 when user `j` transmits on resource `k`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<u8>>", into = "Vec<Vec<u8>>")]
pub struct FactorGraph {
    rows: Vec<Vec<u8>>,
    row_degrees: Vec<usize>,
    col_degrees: Vec<usize>,
}

impl FactorGraph {
    pub fn new(rows: Vec<Vec<u8>>) -> Result<Self> {
        let users = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || users == 0 {
            return Err(Error::Shape("factor matrix must have at least one row and one column".into()));
        }
        if rows.iter().any(|r| r.len() != users) {
            return Err(Error::Shape("factor matrix rows have different lengths".into()));
        }
        if rows.iter().flatten().any(|&v| v > 1) {
            return Err(Error::Shape("factor matrix entries must be 0 or 1".into()));
        }
        let row_degrees = rows.iter().map(|r| r.iter().map(|&v| v as usize).sum()).collect();
        let col_degrees = (0..users).map(|j| rows.iter().map(|r| r[j] as usize).sum()).collect();
        Ok(Self { rows, row_degrees, col_degrees })
    }

    pub fn resources(&self) -> usize {
        self.rows.len()
    }

    pub fn users(&self) -> usize {
        self.col_degrees.len()
    }

    pub fn rows(&self) -> &[Vec<u8>] {
        &self.rows
    }

    pub fn contains(&self, resource: usize, user: usize) -> bool {
        self.rows[resource][user] == 1
    }

    /// `d_f` per resource.
    pub fn row_degrees(&self) -> &[usize] {
        &self.row_degrees
    }

    /// `N` per user.
    pub fn col_degrees(&self) -> &[usize] {
        &self.col_degrees
    }

    /// Users transmitting on `resource`, ascending.
    pub fn users_on(&self, resource: usize) -> Vec<usize> {
        (0..self.users()).filter(|&j| self.contains(resource, j)).collect()
    }

    /// Resources used by `user`, ascending.
    pub fn resources_of(&self, user: usize) -> Vec<usize> {
        (0..self.resources()).filter(|&k| self.contains(k, user)).collect()
    }

    /// Common row degree when every resource has the same number of users.
    pub fn regular_degree(&self) -> Option<usize> {
        let first = self.row_degrees[0];
        self.row_degrees.iter().all(|&d| d == first).then_some(first)
    }

    /// True iff two resources share at least two users.
    pub fn has_four_cycle(&self) -> bool {
        let k = self.resources();
        (0..k).any(|a| {
            (a + 1..k).any(|b| (0..self.users()).filter(|&j| self.contains(a, j) && self.contains(b, j)).count() >= 2)
        })
    }
}

impl TryFrom<Vec<Vec<u8>>> for FactorGraph {
    type Error = Error;

    fn try_from(rows: Vec<Vec<u8>>) -> Result<Self> {
        Self::new(rows)
    }
}

impl From<FactorGraph> for Vec<Vec<u8>> {
    fn from(g: FactorGraph) -> Self {
        g.rows
    }
}

/// One `(user, symbol, resource)` position of a template.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SlotRepr", into = "SlotRepr")]
pub enum Slot {
    Zero,
    /// `sign * a[index]`, with `index` zero-based.
    Param { index: usize, negated: bool },
}

impl Slot {
    fn value(self, params: &[Complex64]) -> Complex64 {
        match self {
            Slot::Zero => Complex64::new(0.0, 0.0),
            Slot::Param { index, negated: false } => params[index],
            Slot::Param { index, negated: true } => -params[index],
        }
    }

    fn index(self) -> Option<usize> {
        match self {
            Slot::Zero => None,
            Slot::Param { index, .. } => Some(index),
        }
    }
}

/// File representation: `0` or `{"p": <1-based index>, "s": ±1}`.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SlotRepr {
    Zero(u8),
    Param { p: usize, s: i8 },
}

impl TryFrom<SlotRepr> for Slot {
    type Error = String;

    fn try_from(r: SlotRepr) -> std::result::Result<Self, String> {
        match r {
            SlotRepr::Zero(0) => Ok(Slot::Zero),
            SlotRepr::Zero(v) => Err(format!("a bare slot must be 0, found {v}")),
            SlotRepr::Param { p: 0, .. } => Err("parameter indices start at 1".into()),
            SlotRepr::Param { p, s: 1 } => Ok(Slot::Param { index: p - 1, negated: false }),
            SlotRepr::Param { p, s: -1 } => Ok(Slot::Param { index: p - 1, negated: true }),
            SlotRepr::Param { s, .. } => Err(format!("slot sign must be 1 or -1, found {s}")),
        }
    }
}

impl From<Slot> for SlotRepr {
    fn from(s: Slot) -> Self {
        match s {
            Slot::Zero => SlotRepr::Zero(0),
            Slot::Param { index, negated } => SlotRepr::Param { p: index + 1, s: if negated { -1 } else { 1 } },
        }
    }
}

/// Symbolic codebook structure mapping a parameter vector to a full [`CodebookSet`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TemplateFile", into = "TemplateFile")]
pub struct StructureTemplate {
    name: String,
    num_params: usize,
    factor: FactorGraph,
    /// `[user][symbol][resource]`
    slots: Vec<Vec<Vec<Slot>>>,
    /// Parameter indices of each codeword's nonzero slots, users then symbols ascending.
    groups: Vec<(usize, usize, Vec<usize>)>,
}

#[derive(Serialize, Deserialize)]
struct TemplateFile {
    name: String,
    num_params: usize,
    #[serde(rename = "F")]
    factor: FactorGraph,
    slots: Vec<Vec<Vec<Slot>>>,
}

impl TryFrom<TemplateFile> for StructureTemplate {
    type Error = Error;

    fn try_from(f: TemplateFile) -> Result<Self> {
        Self::new(f.name, f.num_params, f.factor, f.slots)
    }
}

impl From<StructureTemplate> for TemplateFile {
    fn from(t: StructureTemplate) -> Self {
        TemplateFile { name: t.name, num_params: t.num_params, factor: t.factor, slots: t.slots }
    }
}

const BUILTIN: [(&str, &str); 2] = [
    ("6x4", include_str!("../data/templates/6x4.json")),
    ("12x6", include_str!("../data/templates/12x6.json")),
];

/// Names accepted by [`builtin_template`].
pub fn builtin_names() -> Vec<&'static str> {
    BUILTIN.iter().map(|(n, _)| *n).collect()
}

/// Built-in structures: `"6x4"` (6 parameters, `d_f = 3`) and `"12x6"` (8 parameters, `d_f = 4`).
pub fn builtin_template(name: &str) -> Result<StructureTemplate> {
    let (_, text) = BUILTIN.iter().find(|(n, _)| *n == name).ok_or_else(|| Error::UnknownTemplate {
        name: name.to_string(),
        available: builtin_names().join(", "),
    })?;
    StructureTemplate::from_json_str(text)
}

/// Outcome of [`StructureTemplate::normalize`].
#[derive(Clone, Debug, PartialEq)]
pub struct Normalized {
    pub params: Vec<Complex64>,
    /// Largest `| ||c|| - 1 |` over all codewords at exit.
    pub residual: f64,
    pub sweeps: usize,
}

/// Target for [`StructureTemplate::normalize`].
pub const NORMALIZE_TOL: f64 = 1e-9;
pub const NORMALIZE_MAX_SWEEPS: usize = 200;

impl StructureTemplate {
    /// Validates shapes, parameter ranges, supports against `factor`, antipodal
    /// symmetry and the Latin property.
    pub fn new(name: String, num_params: usize, factor: FactorGraph, slots: Vec<Vec<Vec<Slot>>>) -> Result<Self> {
        let users = factor.users();
        let resources = factor.resources();
        if slots.len() != users {
            return Err(Error::Shape(format!("template has {} users but F has {users} columns", slots.len())));
        }
        let m = slots[0].len();
        if m < 2 || !m.is_power_of_two() {
            return Err(Error::Shape(format!("template codebook size {m} is not a power of two >= 2")));
        }
        for (j, user) in slots.iter().enumerate() {
            if user.len() != m {
                return Err(Error::Shape(format!("user {} has {} codewords, expected {m}", j + 1, user.len())));
            }
            let support = factor.resources_of(j);
            for (s, cw) in user.iter().enumerate() {
                if cw.len() != resources {
                    return Err(Error::Shape(format!("codeword {} of user {} has {} slots, expected {resources}", s + 1, j + 1, cw.len())));
                }
                if let Some(bad) = cw.iter().filter_map(|sl| sl.index()).find(|&i| i >= num_params) {
                    return Err(Error::Shape(format!("parameter a_{} exceeds num_params = {num_params}", bad + 1)));
                }
                let nonzero: Vec<usize> = (0..resources).filter(|&k| cw[k] != Slot::Zero).collect();
                if nonzero != support {
                    return Err(Error::Shape(format!(
                        "codeword {} of user {} occupies resources {:?} but F column {} is {:?}",
                        s + 1,
                        j + 1,
                        nonzero.iter().map(|k| k + 1).collect::<Vec<_>>(),
                        j + 1,
                        support.iter().map(|k| k + 1).collect::<Vec<_>>()
                    )));
                }
            }
            for s in 0..m {
                for (k, (&a, &b)) in user[s].iter().zip(&user[m - 1 - s]).enumerate() {
                    let mirrored = match (a, b) {
                        (Slot::Zero, Slot::Zero) => true,
                        (Slot::Param { index: i, negated: x }, Slot::Param { index: i2, negated: y }) => i == i2 && x != y,
                        _ => false,
                    };
                    if !mirrored {
                        return Err(Error::Shape(format!(
                            "user {} breaks antipodal symmetry between symbols {} and {} on resource {}",
                            j + 1,
                            s + 1,
                            m - s,
                            k + 1
                        )));
                    }
                }
            }
        }
        for k in 0..resources {
            let mut seen: Vec<(usize, BTreeSet<usize>)> = Vec::new();
            for j in factor.users_on(k) {
                let used: BTreeSet<usize> = slots[j].iter().filter_map(|cw| cw[k].index()).collect();
                if let Some((other, _)) = seen.iter().find(|(_, s)| !s.is_disjoint(&used)) {
                    return Err(Error::Shape(format!(
                        "users {} and {} share a parameter on resource {} (Latin property)",
                        other + 1,
                        j + 1,
                        k + 1
                    )));
                }
                seen.push((j, used));
            }
        }
        let groups = slots
            .iter()
            .enumerate()
            .flat_map(|(j, user)| {
                user.iter()
                    .enumerate()
                    .map(move |(s, cw)| (j, s, cw.iter().filter_map(|sl| sl.index()).collect::<Vec<_>>()))
            })
            .collect();
        Ok(Self { name, num_params, factor, slots, groups })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of complex parameters `T`; the search dimension is `2T`.
    pub fn num_params(&self) -> usize {
        self.num_params
    }

    pub fn factor_graph(&self) -> &FactorGraph {
        &self.factor
    }

    pub fn codebook_size(&self) -> usize {
        self.slots[0].len()
    }

    pub fn slot(&self, user: usize, symbol: usize, resource: usize) -> Slot {
        self.slots[user][symbol][resource]
    }

    /// Parameter indices used by the users overlapping on `resource`, per user.
    pub fn params_on(&self, resource: usize) -> Vec<(usize, BTreeSet<usize>)> {
        self.factor
            .users_on(resource)
            .into_iter()
            .map(|j| (j, self.slots[j].iter().filter_map(|cw| cw[resource].index()).collect()))
            .collect()
    }

    /// Substitutes `params` into every slot.
    pub fn instantiate(&self, params: &[Complex64]) -> Result<CodebookSet> {
        self.check_len(params)?;
        let books = self
            .slots
            .iter()
            .map(|user| user.iter().map(|cw| cw.iter().map(|sl| sl.value(params)).collect()).collect())
            .collect();
        CodebookSet::new(self.factor.clone(), books)
    }

    /// Reads the parameters back out of a set following this structure, taking
    /// each parameter from its first occurrence (users, symbols, resources ascending).
    pub fn extract_params(&self, set: &CodebookSet) -> Result<Vec<Complex64>> {
        if set.users() != self.factor.users() || set.resources() != self.factor.resources() || set.codebook_size() != self.codebook_size() {
            return Err(Error::Shape("codebook set dimensions differ from the template".into()));
        }
        let mut out: Vec<Option<Complex64>> = vec![None; self.num_params];
        for (j, user) in self.slots.iter().enumerate() {
            for (s, cw) in user.iter().enumerate() {
                for (k, sl) in cw.iter().enumerate() {
                    if let Slot::Param { index, negated } = *sl {
                        if out[index].is_none() {
                            let v = set.entry(j, s, k);
                            out[index] = Some(if negated { -v } else { v });
                        }
                    }
                }
            }
        }
        out.into_iter()
            .enumerate()
            .map(|(i, v)| v.ok_or_else(|| Error::Shape(format!("parameter a_{} never appears in the template", i + 1))))
            .collect()
    }

    /// Rescales parameters so that every codeword has unit norm.
    ///
    /// Cyclic projection: codewords are visited users ascending, symbols
    /// ascending, and the parameters of each codeword are divided by its norm.
    /// Sweeps repeat until the largest deviation falls below [`NORMALIZE_TOL`]
    /// or [`NORMALIZE_MAX_SWEEPS`] sweeps have run.
    pub fn normalize(&self, params: &[Complex64]) -> Result<Normalized> {
        self.check_len(params)?;
        let mut a = params.to_vec();
        let mut sweeps = 0;
        loop {
            let residual = self.norm_residual(&a)?;
            if residual < NORMALIZE_TOL || sweeps == NORMALIZE_MAX_SWEEPS {
                return Ok(Normalized { params: a, residual, sweeps });
            }
            for (user, symbol, idx) in &self.groups {
                let norm = idx.iter().map(|&i| a[i].norm_sqr()).sum::<f64>().sqrt();
                if norm == 0.0 || !norm.is_finite() {
                    return Err(Error::DegenerateParams { user: user + 1, symbol: symbol + 1 });
                }
                let mut distinct = idx.clone();
                distinct.sort_unstable();
                distinct.dedup();
                for i in distinct {
                    a[i] /= norm;
                }
            }
            sweeps += 1;
        }
    }

    /// Largest `| ||c|| - 1 |` over the codewords produced by `params`.
    pub fn norm_residual(&self, params: &[Complex64]) -> Result<f64> {
        let mut worst = 0.0f64;
        for (user, symbol, idx) in &self.groups {
            let norm = idx.iter().map(|&i| params[i].norm_sqr()).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::DegenerateParams { user: user + 1, symbol: symbol + 1 });
            }
            worst = worst.max((norm - 1.0).abs());
        }
        Ok(worst)
    }

    fn check_len(&self, params: &[Complex64]) -> Result<()> {
        if params.len() != self.num_params {
            return Err(Error::MalformedParams(format!(
                "template `{}` takes {} complex parameters, got {}",
                self.name,
                self.num_params,
                params.len()
            )));
        }
        Ok(())
    }
}

/// Factor matrix of the 8 x 4 extension: the 6 x 4 matrix with its third and
/// fourth columns repeated as the seventh and eighth.
pub fn factor_8x4() -> FactorGraph {
    FactorGraph::new(vec![
        vec![1, 0, 1, 0, 1, 0, 1, 0],
        vec![0, 1, 1, 0, 0, 1, 1, 0],
        vec![1, 0, 0, 1, 0, 1, 0, 1],
        vec![0, 1, 0, 1, 1, 0, 0, 1],
    ])
    .expect("static matrix")
}

/// Extends a 6 x 4 set to 8 users on 4 resources.
///
/// Users 1-6 are copied. User 7 (support of column 3) reuses the nonzero
/// values of codebook 4 and user 8 (support of column 4) those of codebook 3,
/// each placed on the new support in resource order.
pub fn derive_8x4(base: &CodebookSet) -> Result<CodebookSet> {
    if base.users() != 6 || base.resources() != 4 || base.codebook_size() != 4 {
        return Err(Error::Shape(format!(
            "8x4 extension needs a 6x4 set with M = 4, got J = {}, K = {}, M = {}",
            base.users(),
            base.resources(),
            base.codebook_size()
        )));
    }
    let factor = factor_8x4();
    let mut books = base.to_nested();
    for (target, source) in [(6usize, 3usize), (7, 2)] {
        let source_support = base.factor_graph().resources_of(source);
        let target_support = factor.resources_of(target);
        if source_support.len() != target_support.len() {
            return Err(Error::Shape(format!("codebook {} does not have {} nonzero rows", source + 1, target_support.len())));
        }
        let book = (0..4)
            .map(|m| {
                let mut cw = vec![Complex64::new(0.0, 0.0); 4];
                for (&from, &to) in source_support.iter().zip(&target_support) {
                    cw[to] = base.entry(source, m, from);
                }
                cw
            })
            .collect();
        books.push(book);
    }
    CodebookSet::new(factor, books)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn eq2() -> Vec<Vec<u8>> {
        vec![vec![1, 0, 1, 0, 1, 0], vec![0, 1, 1, 0, 0, 1], vec![1, 0, 0, 1, 0, 1], vec![0, 1, 0, 1, 1, 0]]
    }

    fn eq10() -> Vec<Vec<u8>> {
        vec![
            vec![1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0],
            vec![1, 0, 0, 0, 1, 1, 1, 0, 0, 0, 0, 0],
            vec![0, 1, 0, 0, 0, 0, 0, 1, 1, 1, 0, 0],
            vec![0, 0, 1, 0, 1, 0, 0, 1, 0, 0, 1, 0],
            vec![0, 0, 0, 1, 0, 1, 0, 0, 1, 0, 0, 1],
            vec![0, 0, 0, 0, 0, 0, 1, 0, 0, 1, 1, 1],
        ]
    }

    fn example_a() -> Vec<Complex64> {
        vec![c(-0.33, 0.63), c(-0.83, 0.43), c(0.71, 0.0), c(-0.36, 0.0), c(-0.42, -0.84), c(0.59, 0.35)]
    }

    #[test]
    fn builtin_6x4_matches_factor_matrix() {
        let t = builtin_template("6x4").unwrap();
        assert_eq!(t.num_params(), 6);
        assert_eq!(t.factor_graph().rows(), eq2().as_slice());
        assert_eq!(t.factor_graph().regular_degree(), Some(3));
    }

    #[test]
    fn builtin_12x6_matches_factor_matrix() {
        let t = builtin_template("12x6").unwrap();
        assert_eq!(t.num_params(), 8);
        assert_eq!(t.factor_graph().rows(), eq10().as_slice());
        assert!(t.factor_graph().row_degrees().iter().all(|&d| d == 4));
    }

    #[test]
    fn first_codeword_of_user_one() {
        let t = builtin_template("6x4").unwrap();
        let p = |i| Slot::Param { index: i, negated: false };
        let row: Vec<Slot> = (0..4).map(|k| t.slot(0, 0, k)).collect();
        assert_eq!(row, vec![p(0), Slot::Zero, p(2), Slot::Zero]);
    }

    #[test]
    fn permuted_constellation_in_users_three_and_five() {
        // [-a4, a3, -a3, a4] on resource 1 of user 3 and resource 4 of user 5
        let t = builtin_template("6x4").unwrap();
        let expect = [(3, true), (2, false), (2, true), (3, false)];
        for (user, resource) in [(2, 0), (4, 3)] {
            for (m, &(index, negated)) in expect.iter().enumerate() {
                assert_eq!(t.slot(user, m, resource), Slot::Param { index, negated });
            }
        }
    }

    #[test]
    fn unknown_template_lists_available() {
        let err = builtin_template("5x3").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("6x4") && msg.contains("12x6"), "{msg}");
    }

    #[test]
    fn instantiate_worked_example() {
        let t = builtin_template("6x4").unwrap();
        let set = t.instantiate(&example_a()).unwrap();
        assert_eq!(set.codeword(0, 0).entries(), &[c(-0.33, 0.63), c(0.0, 0.0), c(0.71, 0.0), c(0.0, 0.0)]);
    }

    #[test]
    fn instantiate_zero_params_gives_zero_codewords() {
        let t = builtin_template("6x4").unwrap();
        let set = t.instantiate(&[c(0.0, 0.0); 6]).unwrap();
        assert!(set.all_codewords().all(|(_, cw)| cw.norm() == 0.0));
    }

    #[test]
    fn instantiate_rejects_wrong_length() {
        let t = builtin_template("6x4").unwrap();
        assert!(matches!(t.instantiate(&[c(1.0, 0.0); 5]), Err(Error::MalformedParams(_))));
    }

    #[test]
    fn four_cycles() {
        assert!(factor_8x4().has_four_cycle());
        assert!(!FactorGraph::new(eq10()).unwrap().has_four_cycle());
        let identity = (0..4).map(|k| (0..4).map(|j| u8::from(j == k)).collect()).collect();
        assert!(!FactorGraph::new(identity).unwrap().has_four_cycle());
    }

    #[test]
    fn factor_graph_rejects_non_binary() {
        assert!(FactorGraph::new(vec![vec![1, 2]]).is_err());
        assert!(FactorGraph::new(vec![vec![1, 0], vec![1]]).is_err());
    }

    #[test]
    fn normalize_fixed_point_is_unchanged() {
        let t = builtin_template("6x4").unwrap();
        // |a1|^2 = |a4|^2 = |a6|^2 = 0.7, the rest 0.3
        let (hi, lo) = (0.7f64.sqrt(), 0.3f64.sqrt());
        let a = vec![c(hi, 0.0), c(0.0, lo), c(lo, 0.0), c(0.0, -hi), c(-lo, 0.0), c(hi * 0.6, hi * 0.8)];
        assert!(t.norm_residual(&a).unwrap() < 1e-12);
        let n = t.normalize(&a).unwrap();
        assert_eq!(n.params, a);
        assert_eq!(n.sweeps, 0);
    }

    #[test]
    fn normalize_recovers_scaled_feasible_point() {
        let t = builtin_template("6x4").unwrap();
        let tt = 0.4f64;
        let (hi, lo) = ((1.0 - tt).sqrt(), tt.sqrt());
        let a = vec![c(hi, 0.0), c(lo, 0.0), c(0.0, lo), c(-hi, 0.0), c(lo * 0.6, -lo * 0.8), c(0.0, hi)];
        let scaled: Vec<_> = a.iter().map(|x| x * 3.0).collect();
        let n = t.normalize(&scaled).unwrap();
        // projection stops within the 1e-9 norm tolerance, not at the exact point
        for (x, y) in n.params.iter().zip(&a) {
            assert!((x - y).norm() < 1e-8, "{x} vs {y}");
        }
        let p: Vec<f64> = n.params.iter().map(|x| x.norm_sqr()).collect();
        for (i, j) in [(0, 3), (0, 5), (1, 2), (1, 4)] {
            assert!((p[i] - p[j]).abs() < 1e-8);
        }
        assert!((p[0] + p[1] - 1.0).abs() < 1e-8);
        // direct substitution into every codeword norm
        let set = t.instantiate(&n.params).unwrap();
        for (_, cw) in set.all_codewords() {
            assert!((cw.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn normalize_worked_example_initial_row() {
        let t = builtin_template("6x4").unwrap();
        let a = vec![c(0.46, -0.53), c(-0.90, -0.22), c(-0.68, 0.16), c(-0.34, -0.08), c(0.22, 0.91), c(0.49, 0.48)];
        let n = t.normalize(&a).unwrap();
        assert!(n.residual < 1e-9);
        let set = t.instantiate(&n.params).unwrap();
        for user in 0..3 {
            for m in 0..4 {
                assert!((set.codeword(user, m).norm() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn normalize_rejects_zero_codeword() {
        let t = builtin_template("6x4").unwrap();
        let mut a = example_a();
        a[0] = c(0.0, 0.0);
        a[2] = c(0.0, 0.0);
        assert!(matches!(t.normalize(&a), Err(Error::DegenerateParams { user: 1, symbol: 1 })));
    }

    #[test]
    fn extract_inverts_instantiate() {
        let t = builtin_template("12x6").unwrap();
        let a: Vec<Complex64> = (0..8).map(|i| c(0.1 * i as f64 + 0.05, -0.2 + 0.03 * i as f64)).collect();
        let set = t.instantiate(&a).unwrap();
        assert_eq!(t.extract_params(&set).unwrap(), a);
    }

    #[test]
    fn template_rejects_broken_latin_property() {
        let mut file: serde_json::Value = serde_json::from_str(include_str!("../data/templates/6x4.json")).unwrap();
        // user 3 on resource 1 reuses a1/a2 like user 1
        let slots = file["slots"][2].as_array_mut().unwrap();
        let repl = [(1, 1), (2, 1), (2, -1), (1, -1)];
        for (m, (p, s)) in repl.into_iter().enumerate() {
            slots[m][0] = serde_json::json!({"p": p, "s": s});
        }
        let err = StructureTemplate::from_json_str(&file.to_string()).unwrap_err();
        assert!(err.to_string().contains("Latin"), "{err}");
    }

    #[test]
    fn template_rejects_support_mismatch() {
        let mut file: serde_json::Value = serde_json::from_str(include_str!("../data/templates/6x4.json")).unwrap();
        file["F"][0][0] = serde_json::json!(0);
        assert!(StructureTemplate::from_json_str(&file.to_string()).is_err());
    }

    #[test]
    fn template_round_trips_through_json() {
        let t = builtin_template("12x6").unwrap();
        let text = serde_json::to_string(&t).unwrap();
        assert_eq!(StructureTemplate::from_json_str(&text).unwrap(), t);
    }

    #[test]
    fn derive_8x4_layout() {
        let t = builtin_template("6x4").unwrap();
        let base = t.instantiate(&example_a()).unwrap();
        let ext = derive_8x4(&base).unwrap();
        assert_eq!(ext.users(), 8);
        assert_eq!(ext.config().overloading(), 2.0);
        assert_eq!(ext.factor_graph().resources_of(6), vec![0, 1]);
        assert_eq!(ext.factor_graph().resources_of(7), vec![2, 3]);
        for m in 0..4 {
            assert_eq!(ext.codeword(6, m).support(), vec![0, 1]);
            assert_eq!(ext.entry(6, m, 0), base.entry(3, m, 2));
            assert_eq!(ext.entry(6, m, 1), base.entry(3, m, 3));
            assert_eq!(ext.entry(7, m, 2), base.entry(2, m, 0));
            assert_eq!(ext.entry(7, m, 3), base.entry(2, m, 1));
        }
        for j in 0..6 {
            assert_eq!(ext.books()[j], base.books()[j]);
        }
    }

    #[test]
    fn derive_8x4_rejects_other_shapes() {
        let t = builtin_template("12x6").unwrap();
        let set = t.instantiate(&[c(0.5, 0.5); 8]).unwrap();
        assert!(derive_8x4(&set).is_err());
    }
}
