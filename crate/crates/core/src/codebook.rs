//! Domain types shared by the whole toolkit: system dimensions, sparse
//! codewords, per-user codebooks, and the real parameter vectors searched by
//! the optimizer.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::format::{fmt_sig, JSON_DIGITS};
use crate::structure::FactorGraph;
use crate::{Error, Result};

/// Dimensions of a `J x K` system with `M`-point codebooks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// `J`
    pub users: usize,
    /// `K`
    pub resources: usize,
    /// `M`, symbols per user.
    pub codebook_size: usize,
    /// `N`, nonzero entries per codeword (largest column weight of the factor matrix).
    pub nonzeros: usize,
    /// `d_f`, users colliding on a resource (largest row weight of the factor matrix).
    pub resource_degree: usize,
}

impl SystemConfig {
    pub fn new(
        users: usize,
        resources: usize,
        codebook_size: usize,
        nonzeros: usize,
        resource_degree: usize,
    ) -> Result<Self> {
        if users == 0 || resources == 0 {
            return Err(Error::InvalidConfig("J and K must be at least 1".into()));
        }
        if codebook_size < 2 || !codebook_size.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "codebook size M = {codebook_size} must be a power of two no smaller than 2"
            )));
        }
        if nonzeros == 0 || nonzeros > resources {
            return Err(Error::InvalidConfig(format!(
                "codewords must have between 1 and K = {resources} nonzero entries, got {nonzeros}"
            )));
        }
        if resource_degree == 0 || resource_degree > users {
            return Err(Error::InvalidConfig(format!(
                "resource degree {resource_degree} must lie in 1..={users}"
            )));
        }
        Ok(Self { users, resources, codebook_size, nonzeros, resource_degree })
    }

    /// Overloading factor `J / K`.
    pub fn overloading(&self) -> f64 {
        self.users as f64 / self.resources as f64
    }

    pub fn bits_per_symbol(&self) -> f64 {
        (self.codebook_size as f64).log2()
    }
}

/// A `K`-dimensional complex codeword.
#[derive(Clone, Debug, PartialEq)]
pub struct Codeword(Vec<Complex64>);

impl Codeword {
    pub fn new(entries: Vec<Complex64>) -> Self {
        Self(entries)
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Indices of exactly-nonzero entries.
    pub fn support(&self) -> Vec<usize> {
        self.0.iter().enumerate().filter(|(_, x)| **x != Complex64::new(0.0, 0.0)).map(|(k, _)| k).collect()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }
}

impl std::ops::Index<usize> for Codeword {
    type Output = Complex64;

    fn index(&self, k: usize) -> &Complex64 {
        &self.0[k]
    }
}

/// The `M` codewords assigned to one user.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    pub user: usize,
    pub codewords: Vec<Codeword>,
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.codewords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }

    /// Union of the codeword supports, ascending.
    pub fn support(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.codewords.iter().flat_map(|c| c.support()).collect();
        all.sort_unstable();
        all.dedup();
        all
    }
}

/// All users' codebooks together with the factor graph they are meant to follow.
///
/// Construction only checks dimensions and finiteness; semantic properties
/// (supports against the factor graph, distinctness, symmetry) are reported by
/// [`crate::fixtures::validate_codebook`].
#[derive(Clone, Debug, PartialEq)]
pub struct CodebookSet {
    config: SystemConfig,
    factor: FactorGraph,
    books: Vec<Codebook>,
}

impl CodebookSet {
    /// Builds a set from `J` codebooks of `M` codewords with `K` entries each.
    pub fn new(factor: FactorGraph, books: Vec<Vec<Vec<Complex64>>>) -> Result<Self> {
        let users = factor.users();
        let resources = factor.resources();
        if books.len() != users {
            return Err(Error::Shape(format!("factor graph has {users} users but {} codebooks were given", books.len())));
        }
        let codebook_size = books.first().map_or(0, Vec::len);
        for (j, book) in books.iter().enumerate() {
            if book.len() != codebook_size {
                return Err(Error::Shape(format!(
                    "codebook {} has {} codewords, expected {codebook_size}",
                    j + 1,
                    book.len()
                )));
            }
            for (m, cw) in book.iter().enumerate() {
                if cw.len() != resources {
                    return Err(Error::Shape(format!(
                        "codeword {} of user {} has {} entries, expected K = {resources}",
                        m + 1,
                        j + 1,
                        cw.len()
                    )));
                }
                if cw.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
                    return Err(Error::NonFinite(format!("codeword {} of user {}", m + 1, j + 1)));
                }
            }
        }
        let nonzeros = factor.col_degrees().iter().copied().max().unwrap_or(0);
        let resource_degree = factor.row_degrees().iter().copied().max().unwrap_or(0);
        let config = SystemConfig::new(users, resources, codebook_size, nonzeros, resource_degree)?;
        let books = books
            .into_iter()
            .enumerate()
            .map(|(user, cws)| Codebook { user, codewords: cws.into_iter().map(Codeword::new).collect() })
            .collect();
        Ok(Self { config, factor, books })
    }

    /// Builds a set whose factor graph is inferred from the codeword supports.
    pub fn from_supports(books: Vec<Vec<Vec<Complex64>>>) -> Result<Self> {
        let users = books.len();
        let resources = books.first().and_then(|b| b.first()).map_or(0, Vec::len);
        let mut rows = vec![vec![0u8; users]; resources];
        for (j, book) in books.iter().enumerate() {
            for cw in book {
                for (k, x) in cw.iter().enumerate().take(resources) {
                    if *x != Complex64::new(0.0, 0.0) {
                        rows[k][j] = 1;
                    }
                }
            }
        }
        Self::new(FactorGraph::new(rows)?, books)
    }

    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn factor_graph(&self) -> &FactorGraph {
        &self.factor
    }

    pub fn books(&self) -> &[Codebook] {
        &self.books
    }

    pub fn users(&self) -> usize {
        self.config.users
    }

    pub fn resources(&self) -> usize {
        self.config.resources
    }

    pub fn codebook_size(&self) -> usize {
        self.config.codebook_size
    }

    pub fn codeword(&self, user: usize, symbol: usize) -> &Codeword {
        &self.books[user].codewords[symbol]
    }

    /// Entry `k` of codeword `symbol` of `user`.
    pub fn entry(&self, user: usize, symbol: usize, resource: usize) -> Complex64 {
        self.books[user].codewords[symbol][resource]
    }

    /// Codebook values as nested vectors `[user][symbol][resource]`.
    pub fn to_nested(&self) -> Vec<Vec<Vec<Complex64>>> {
        self.books.iter().map(|b| b.codewords.iter().map(|c| c.entries().to_vec()).collect()).collect()
    }

    /// Every codeword with its `(user, symbol)` label, users then symbols ascending.
    pub fn all_codewords(&self) -> impl Iterator<Item = ((usize, usize), &Codeword)> {
        self.books
            .iter()
            .flat_map(|b| b.codewords.iter().enumerate().map(move |(m, c)| ((b.user, m), c)))
    }

    /// Same set with every codeword multiplied by `factor`.
    pub fn scaled(&self, factor: Complex64) -> Self {
        let nested = self.to_nested().into_iter().map(|b| b.into_iter().map(|c| c.into_iter().map(|x| x * factor).collect()).collect()).collect();
        Self::new(self.factor.clone(), nested).expect("scaling preserves shape")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: CodebookFile = serde_json::from_str(text)?;
        file.into_set()
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Serializes in the codebook JSON schema, one codeword per line.
    pub fn to_json_string(&self) -> String {
        let mut out = String::new();
        let c = &self.config;
        let _ = writeln!(out, "{{\n  \"J\": {},\n  \"K\": {},\n  \"M\": {},", c.users, c.resources, c.codebook_size);
        out.push_str("  \"F\": [\n");
        let rows: Vec<String> = self
            .factor
            .rows()
            .iter()
            .map(|r| format!("    [{}]", r.iter().map(u8::to_string).collect::<Vec<_>>().join(", ")))
            .collect();
        out.push_str(&rows.join(",\n"));
        out.push_str("\n  ],\n  \"codebooks\": [\n");
        let books: Vec<String> = self
            .books
            .iter()
            .map(|b| {
                let cws: Vec<String> = b
                    .codewords
                    .iter()
                    .map(|cw| {
                        let entries: Vec<String> = cw
                            .entries()
                            .iter()
                            .map(|x| format!("[{}, {}]", fmt_sig(x.re, JSON_DIGITS), fmt_sig(x.im, JSON_DIGITS)))
                            .collect();
                        format!("      [{}]", entries.join(", "))
                    })
                    .collect();
                format!("    [\n{}\n    ]", cws.join(",\n"))
            })
            .collect();
        out.push_str(&books.join(",\n"));
        out.push_str("\n  ]\n}\n");
        out
    }

    /// The set as a JSON value in the codebook schema.
    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::from_str(&self.to_json_string()).expect("codebook JSON is well formed")
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }
}

/// On-disk codebook schema.
#[derive(Debug, Deserialize)]
struct CodebookFile {
    #[serde(rename = "J")]
    users: usize,
    #[serde(rename = "K")]
    resources: usize,
    #[serde(rename = "M")]
    codebook_size: usize,
    #[serde(rename = "F", default)]
    factor: Option<Vec<Vec<u8>>>,
    codebooks: Vec<Vec<Vec<[f64; 2]>>>,
}

impl CodebookFile {
    fn into_set(self) -> Result<CodebookSet> {
        if self.codebooks.len() != self.users {
            return Err(Error::Shape(format!("\"J\" is {} but {} codebooks are listed", self.users, self.codebooks.len())));
        }
        for (j, book) in self.codebooks.iter().enumerate() {
            if book.len() != self.codebook_size {
                return Err(Error::Shape(format!("\"M\" is {} but codebook {} has {} codewords", self.codebook_size, j + 1, book.len())));
            }
            if let Some(cw) = book.iter().find(|cw| cw.len() != self.resources) {
                return Err(Error::Shape(format!("\"K\" is {} but codebook {} has a codeword of length {}", self.resources, j + 1, cw.len())));
            }
        }
        let books: Vec<Vec<Vec<Complex64>>> = self
            .codebooks
            .into_iter()
            .map(|b| b.into_iter().map(|c| c.into_iter().map(|[re, im]| Complex64::new(re, im)).collect()).collect())
            .collect();
        match self.factor {
            Some(rows) => {
                let graph = FactorGraph::new(rows)?;
                if graph.resources() != self.resources || graph.users() != self.users {
                    return Err(Error::Shape(format!(
                        "\"F\" is {}x{} but the system is K = {} by J = {}",
                        graph.resources(),
                        graph.users(),
                        self.resources,
                        self.users
                    )));
                }
                CodebookSet::new(graph, books)
            }
            None => CodebookSet::from_supports(books),
        }
    }
}

/// Packed real search vector `[Re a_1, Im a_1, Re a_2, Im a_2, ...]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

pub fn pack_params(params: &[Complex64]) -> ParamVector {
    ParamVector(params.iter().flat_map(|a| [a.re, a.im]).collect())
}

pub fn unpack_params(packed: &ParamVector) -> Result<Vec<Complex64>> {
    if packed.len() % 2 != 0 {
        return Err(Error::MalformedParams(format!("packed length {} is odd", packed.len())));
    }
    Ok(packed.0.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect())
}
