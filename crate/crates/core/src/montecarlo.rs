//! Monte-Carlo symbol-error-rate estimation.
//!
//! Frame `i` of a run draws its symbols, gains and noise from
//! `stream_rng(seed, Domain::Frame, i)`, so an estimate depends only on
//! `(set, SNR, channel, budget, detector, seed)` and never on the thread
//! count. Frames are processed in parallel and reduced by integer summation.
//! Every SNR point and every codebook set of equal shape reuses the same
//! streams (common random numbers); only the noise scale changes with SNR.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{draw_frame, ebn0_to_n0, transmit, ChannelKind, Frame};
use crate::codebook::CodebookSet;
use crate::detector::{hard_decision, map_detect, MpaConfig, MpaDetector};
use crate::format::{fmt_sig, CSV_DIGITS};
use crate::seed::{stream_rng, Domain};
use crate::{Error, Result};

/// Frames handed to one worker task.
const CHUNK: u64 = 64;
/// Frames per batch in target-error mode; the stop rule is checked between batches.
pub const TARGET_BATCH: u64 = 1000;
pub const DEFAULT_TARGET_ERRORS: u64 = 200;

/// Detection rule applied to every frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Detection {
    Mpa(MpaConfig),
    /// Exhaustive joint detection; only for small systems.
    Map,
}

impl Default for Detection {
    fn default() -> Self {
        Detection::Mpa(MpaConfig::default())
    }
}

/// How many frames to simulate per SNR point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    Frames(u64),
    /// Batches of [`TARGET_BATCH`] frames until at least `errors` symbol errors
    /// or `max_frames` frames.
    TargetErrors { errors: u64, max_frames: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SerEstimate {
    pub ebn0_db: f64,
    pub channel: ChannelKind,
    pub ser: f64,
    pub symbol_errors: u64,
    /// `frames * J`
    pub symbols_sent: u64,
    pub frames: u64,
    pub per_user_errors: Vec<u64>,
    pub per_user_ser: Vec<f64>,
    pub seed: u64,
}

pub const CSV_HEADER: [&str; 5] = ["ebno_db", "ser", "errors", "frames", "seed"];

impl SerEstimate {
    fn from_counts(ebn0_db: f64, channel: ChannelKind, seed: u64, frames: u64, per_user_errors: Vec<u64>) -> Self {
        let symbol_errors: u64 = per_user_errors.iter().sum();
        let symbols_sent = frames * per_user_errors.len() as u64;
        let per_user_ser = per_user_errors.iter().map(|&e| e as f64 / frames as f64).collect();
        Self {
            ebn0_db,
            channel,
            ser: symbol_errors as f64 / symbols_sent as f64,
            symbol_errors,
            symbols_sent,
            frames,
            per_user_errors,
            per_user_ser,
            seed,
        }
    }

    /// Normal-approximation 95% interval `(errors +- 1.96 sqrt(errors)) / symbols`, clipped to `[0, 1]`.
    pub fn ci95(&self) -> (f64, f64) {
        let e = self.symbol_errors as f64;
        let half = 1.96 * e.sqrt();
        let n = self.symbols_sent as f64;
        (((e - half) / n).max(0.0), ((e + half) / n).min(1.0))
    }

    /// Row in [`CSV_HEADER`] order, floats at [`CSV_DIGITS`] significant digits.
    pub fn csv_record(&self) -> [String; 5] {
        [
            fmt_sig(self.ebn0_db, CSV_DIGITS),
            fmt_sig(self.ser, CSV_DIGITS),
            self.symbol_errors.to_string(),
            self.frames.to_string(),
            self.seed.to_string(),
        ]
    }
}

/// Generator for frame `index` of a run.
pub fn frame(set: &CodebookSet, channel: ChannelKind, n0: f64, seed: u64, index: u64) -> Frame {
    let mut rng = stream_rng(seed, Domain::Frame, index);
    draw_frame(channel, set.config(), n0, &mut rng)
}

/// Per-user error counts over frames `start .. start + count`.
fn count_errors(
    set: &CodebookSet,
    channel: ChannelKind,
    n0: f64,
    detection: Detection,
    seed: u64,
    start: u64,
    count: u64,
) -> Result<Vec<u64>> {
    let chunks = count.div_ceil(CHUNK);
    let partial: Vec<Vec<u64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = start + c * CHUNK;
            let hi = (lo + CHUNK).min(start + count);
            let mut errors = vec![0u64; set.users()];
            let mut mpa = match detection {
                Detection::Mpa(cfg) => Some(MpaDetector::new(set, cfg)?),
                Detection::Map => None,
            };
            for i in lo..hi {
                let f = frame(set, channel, n0, seed, i);
                let y = transmit(set, &f.symbols, &f.channel)?;
                let decided = match mpa.as_mut() {
                    Some(det) => hard_decision(&det.detect(&y, &f.channel.gains, n0)?),
                    None => map_detect(&y, set, &f.channel.gains, n0)?,
                };
                for (j, (d, s)) in decided.iter().zip(&f.symbols).enumerate() {
                    errors[j] += u64::from(d != s);
                }
            }
            Ok(errors)
        })
        .collect::<Result<_>>()?;
    let mut total = vec![0u64; set.users()];
    for p in partial {
        for (t, e) in total.iter_mut().zip(p) {
            *t += e;
        }
    }
    Ok(total)
}

fn check_snr(ebn0_db: f64) -> Result<()> {
    if ebn0_db.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("Eb/N0 must be finite, got {ebn0_db}")))
    }
}

/// SER over exactly `frames` frames.
pub fn estimate_ser(
    set: &CodebookSet,
    ebn0_db: f64,
    channel: ChannelKind,
    frames: u64,
    detection: Detection,
    seed: u64,
) -> Result<SerEstimate> {
    estimate_with_budget(set, ebn0_db, channel, Budget::Frames(frames), detection, seed)
}

pub fn estimate_with_budget(
    set: &CodebookSet,
    ebn0_db: f64,
    channel: ChannelKind,
    budget: Budget,
    detection: Detection,
    seed: u64,
) -> Result<SerEstimate> {
    check_snr(ebn0_db)?;
    let n0 = ebn0_to_n0(ebn0_db, set.config());
    match budget {
        Budget::Frames(0) => Err(Error::InvalidConfig("at least one frame is required".into())),
        Budget::Frames(frames) => {
            let errors = count_errors(set, channel, n0, detection, seed, 0, frames)?;
            Ok(SerEstimate::from_counts(ebn0_db, channel, seed, frames, errors))
        }
        Budget::TargetErrors { errors: target, max_frames } => {
            if target == 0 || max_frames == 0 {
                return Err(Error::InvalidConfig("target errors and frame cap must be positive".into()));
            }
            let mut done = 0u64;
            let mut totals = vec![0u64; set.users()];
            while done < max_frames && totals.iter().sum::<u64>() < target {
                let batch = TARGET_BATCH.min(max_frames - done);
                let errs = count_errors(set, channel, n0, detection, seed, done, batch)?;
                totals.iter_mut().zip(errs).for_each(|(t, e)| *t += e);
                done += batch;
            }
            Ok(SerEstimate::from_counts(ebn0_db, channel, seed, done, totals))
        }
    }
}

/// One estimate per SNR point, all from the same seed.
pub fn sweep_ser(
    set: &CodebookSet,
    ebn0_db: &[f64],
    channel: ChannelKind,
    budget: Budget,
    detection: Detection,
    seed: u64,
) -> Result<Vec<SerEstimate>> {
    if ebn0_db.is_empty() {
        return Err(Error::InvalidConfig("SNR list is empty".into()));
    }
    ebn0_db.iter().map(|&snr| estimate_with_budget(set, snr, channel, budget, detection, seed)).collect()
}

/// Paired MPA and MAP decisions over the same frames.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorComparison {
    pub frames: u64,
    pub symbols: u64,
    pub mpa_errors: u64,
    pub map_errors: u64,
    /// Symbol decisions on which both detectors agree.
    pub agreements: u64,
}

impl DetectorComparison {
    pub fn mpa_ser(&self) -> f64 {
        self.mpa_errors as f64 / self.symbols as f64
    }

    pub fn map_ser(&self) -> f64 {
        self.map_errors as f64 / self.symbols as f64
    }

    pub fn agreement(&self) -> f64 {
        self.agreements as f64 / self.symbols as f64
    }
}

pub fn compare_detectors(
    set: &CodebookSet,
    ebn0_db: f64,
    channel: ChannelKind,
    frames: u64,
    mpa: MpaConfig,
    seed: u64,
) -> Result<DetectorComparison> {
    check_snr(ebn0_db)?;
    if frames == 0 {
        return Err(Error::InvalidConfig("at least one frame is required".into()));
    }
    let n0 = ebn0_to_n0(ebn0_db, set.config());
    let parts: Vec<[u64; 3]> = (0..frames.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut det = MpaDetector::new(set, mpa)?;
            let mut out = [0u64; 3];
            for i in c * CHUNK..((c + 1) * CHUNK).min(frames) {
                let f = frame(set, channel, n0, seed, i);
                let y = transmit(set, &f.symbols, &f.channel)?;
                let a = hard_decision(&det.detect(&y, &f.channel.gains, n0)?);
                let b = map_detect(&y, set, &f.channel.gains, n0)?;
                for ((x, z), s) in a.iter().zip(&b).zip(&f.symbols) {
                    out[0] += u64::from(x != s);
                    out[1] += u64::from(z != s);
                    out[2] += u64::from(x == z);
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let sum = |i: usize| parts.iter().map(|p| p[i]).sum();
    Ok(DetectorComparison {
        frames,
        symbols: frames * set.users() as u64,
        mpa_errors: sum(0),
        map_errors: sum(1),
        agreements: sum(2),
    })
}
