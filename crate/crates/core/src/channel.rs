//! Received-signal synthesis: `y = sum_j diag(h_j) x_j + n`.
//!
//! Noise is circularly symmetric complex Gaussian with total variance `n0`
//! per resource (`n0 / 2` per real dimension). Rayleigh gains are drawn
//! i.i.d. `CN(0, 1)` per (resource, user) pair and held for one codeword
//! transmission (block fading); the receiver knows them exactly.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::codebook::{CodebookSet, SystemConfig};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Awgn,
    Rayleigh,
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChannelKind::Awgn => "awgn",
            ChannelKind::Rayleigh => "rayleigh",
        })
    }
}

impl FromStr for ChannelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "awgn" => Ok(ChannelKind::Awgn),
            "rayleigh" => Ok(ChannelKind::Rayleigh),
            _ => Err(Error::Parse(format!("unknown channel `{s}` (expected awgn or rayleigh)"))),
        }
    }
}

/// Noise variance for a given `E_b/N_0` in dB, with unit codeword energy:
/// `E_b = 1 / log2 M` and `n0 = E_b / 10^(dB / 10)`.
pub fn ebn0_to_n0(ebn0_db: f64, cfg: &SystemConfig) -> f64 {
    let eb = 1.0 / cfg.bits_per_symbol();
    eb / 10f64.powf(ebn0_db / 10.0)
}

/// One sample of `CN(0, variance)`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

/// Gains and noise for one codeword transmission.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization {
    /// `K x J`; all ones for AWGN.
    pub gains: Vec<Vec<Complex64>>,
    /// `K` noise samples.
    pub noise: Vec<Complex64>,
    pub n0: f64,
}

impl ChannelRealization {
    /// Draws gains (Rayleigh only) and then noise from `rng`.
    pub fn draw<R: Rng + ?Sized>(kind: ChannelKind, resources: usize, users: usize, n0: f64, rng: &mut R) -> Self {
        let gains = match kind {
            ChannelKind::Awgn => vec![vec![Complex64::new(1.0, 0.0); users]; resources],
            ChannelKind::Rayleigh => {
                (0..resources).map(|_| (0..users).map(|_| complex_gaussian(rng, 1.0)).collect()).collect()
            }
        };
        let noise = (0..resources).map(|_| complex_gaussian(rng, n0)).collect();
        Self { gains, noise, n0 }
    }

    /// Unit gains and zero noise.
    pub fn noiseless(resources: usize, users: usize) -> Self {
        Self {
            gains: vec![vec![Complex64::new(1.0, 0.0); users]; resources],
            noise: vec![Complex64::new(0.0, 0.0); resources],
            n0: 0.0,
        }
    }
}

/// `y_k = sum_j h[k][j] x_{j, symbols[j]}[k] + n_k`.
pub fn transmit(set: &CodebookSet, symbols: &[usize], ch: &ChannelRealization) -> Result<Vec<Complex64>> {
    if symbols.len() != set.users() {
        return Err(Error::Shape(format!("{} symbols for {} users", symbols.len(), set.users())));
    }
    if let Some((j, &s)) = symbols.iter().enumerate().find(|(_, &s)| s >= set.codebook_size()) {
        return Err(Error::Shape(format!("symbol {s} of user {} is outside 0..{}", j + 1, set.codebook_size())));
    }
    if ch.gains.len() != set.resources() || ch.noise.len() != set.resources() || ch.gains.iter().any(|r| r.len() != set.users()) {
        return Err(Error::Shape("channel realization does not match the codebook dimensions".into()));
    }
    Ok((0..set.resources())
        .map(|k| {
            let sum: Complex64 = symbols.iter().enumerate().map(|(j, &s)| ch.gains[k][j] * set.entry(j, s, k)).sum();
            sum + ch.noise[k]
        })
        .collect())
}

/// Symbols and channel of one simulated frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub symbols: Vec<usize>,
    pub channel: ChannelRealization,
}

/// Draws uniform symbols, then gains, then noise, in that order.
///
/// The draw sequence depends only on the system dimensions, so two codebook
/// sets of equal shape see identical symbols, gains and noise from equal
/// generators.
pub fn draw_frame<R: Rng + ?Sized>(kind: ChannelKind, cfg: &SystemConfig, n0: f64, rng: &mut R) -> Frame {
    let symbols = (0..cfg.users).map(|_| rng.random_range(0..cfg.codebook_size)).collect();
    let channel = ChannelRealization::draw(kind, cfg.resources, cfg.users, n0, rng);
    Frame { symbols, channel }
}
