//! Monte Carlo simulation of a repeater chain.
//!
//! Time advances in attempt periods. Every segment without a stored link
//! retries link generation each period; its waiting time is geometric with
//! the exhaustive acceptance probability. Neighbouring blocks at the same
//! nesting level are swapped as soon as both exist, within the same period,
//! and a failed swap frees every segment underneath for new attempts.
//!
//! Stored states are the actual sampled memory ensembles, so final fidelities
//! come out of the same exhaustive machinery as single link and swap runs.

use std::io::Write;
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{Ensemble, JointState};
use crate::link::{psi_plus, run_link_exhaustive, LinkConfig, NoiseRealization, LEFT, RIGHT};
use crate::noise::{DetectorKind, DetectorModel};
use crate::optics::ENCODER_FORWARD_PROBABILITY;
use crate::swap::{swap_links, SwapLevel, SwapReport, SwapStation};

const INNER_LEFT: &str = "A";
const INNER_RIGHT: &str = "B";
const IDEAL_TOL: f64 = 1e-12;
const NOISE_INVARIANCE_TOL: f64 = 1e-9;
/// Squared Hilbert-Schmidt distance below which a noisy link state counts
/// as the noiseless one. Cancellation limits the resolution to about 1e-15.
const SAME_STATE_TOL: f64 = 1e-14;

fn two() -> usize {
    2
}

fn one() -> f64 {
    1.0
}

fn default_swap_detector() -> DetectorModel {
    DetectorModel::ideal(DetectorKind::NumberResolving)
}

fn default_max_attempts() -> u64 {
    100_000_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    /// Number of elementary segments, a power of two.
    #[serde(default = "two")]
    pub segments: usize,
    #[serde(default)]
    pub link: LinkConfig,
    #[serde(default = "one")]
    pub attempt_period: f64,
    #[serde(default = "one")]
    pub retrieval_efficiency: f64,
    /// Periods a stored link survives before it is discarded. `None` keeps
    /// links forever.
    #[serde(default)]
    pub memory_cutoff: Option<u64>,
    /// Strength of a fresh random noise realization drawn for every link.
    /// Zero keeps `link.noise` fixed.
    #[serde(default)]
    pub noise_strength: f64,
    /// Count the encoder's backward half as lost light.
    #[serde(default)]
    pub encoder_loss: bool,
    #[serde(default = "default_swap_detector")]
    pub swap_detector: DetectorModel,
    /// Trials still running after this many periods are reported as timed out.
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            segments: 2,
            link: LinkConfig::default(),
            attempt_period: 1.0,
            retrieval_efficiency: 1.0,
            memory_cutoff: None,
            noise_strength: 0.0,
            encoder_loss: false,
            swap_detector: default_swap_detector(),
            max_attempts: default_max_attempts(),
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.segments < 2 || !self.segments.is_power_of_two() {
            return Err(Error::config("segments", format!("{} is not a power of two ≥ 2", self.segments)));
        }
        self.link.validate().map_err(|e| match e {
            Error::Config { key, reason } => Error::config(format!("link.{key}"), reason),
            other => other,
        })?;
        if !(self.attempt_period > 0.0 && self.attempt_period.is_finite()) {
            return Err(Error::config("attempt_period", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.retrieval_efficiency) {
            return Err(Error::config("retrieval_efficiency", "must be in [0, 1]"));
        }
        if self.memory_cutoff == Some(0) {
            return Err(Error::config("memory_cutoff", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.noise_strength) {
            return Err(Error::config("noise_strength", "must be in [0, 1]"));
        }
        if self.max_attempts == 0 {
            return Err(Error::config("max_attempts", "must be at least 1"));
        }
        self.swap_detector.validate("swap_detector")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelCounts {
    pub level: usize,
    pub attempts: u64,
    pub successes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    pub trials: usize,
    pub completed: usize,
    pub timed_out: usize,
    /// Per-period link acceptance used for the waiting times.
    pub link_acceptance: f64,
    pub mean_attempts: f64,
    pub median_attempts: f64,
    pub std_attempts: f64,
    /// Standard error of `mean_attempts`.
    pub attempts_std_error: f64,
    /// 95% half-width of `mean_attempts`.
    pub attempts_half_width: f64,
    pub mean_time: f64,
    /// End-to-end pairs per unit time.
    pub rate: f64,
    pub link_successes: u64,
    pub expired_links: u64,
    pub levels: Vec<LevelCounts>,
    pub fidelity_mean: f64,
    pub fidelity_min: f64,
    pub fidelity_half_width: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Tag {
    /// The heralded link mixture of the fixed-noise link report.
    Link,
    /// Exactly the ideal pair state.
    Ideal,
    Other,
}

#[derive(Clone, Debug)]
struct Block {
    created: u64,
    state: Arc<Ensemble>,
    tag: Tag,
}

#[derive(Clone, Debug, Default)]
struct TrialResult {
    attempts: Option<u64>,
    fidelity: Option<f64>,
    link_successes: u64,
    expired: u64,
    swap_attempts: Vec<u64>,
    swap_successes: Vec<u64>,
}

/// Precomputed link and swap data shared by all trials of one configuration.
pub struct ChainSimulator {
    config: ChainConfig,
    link_acceptance: f64,
    raw_acceptance: f64,
    geometric: Option<Geometric>,
    link_state: Arc<Ensemble>,
    station: SwapStation,
    ideal: Arc<Ensemble>,
    target: JointState,
    link_cache: OnceLock<Arc<SwapReport>>,
    ideal_cache: OnceLock<Arc<SwapReport>>,
}

impl ChainSimulator {
    pub fn new(config: &ChainConfig) -> Result<Self> {
        config.validate()?;
        let report = run_link_exhaustive(&config.link)?;
        let raw = report.acceptance_probability;
        let q = if config.encoder_loss {
            raw * ENCODER_FORWARD_PROBABILITY.powi(2)
        } else {
            raw
        };
        if q <= 0.0 {
            return Err(Error::config("link", "link acceptance probability is zero"));
        }
        let geometric = if q < 1.0 {
            Some(Geometric::new(q).map_err(|e| Error::config("link", e.to_string()))?)
        } else {
            None
        };
        // Later steps never read the herald pattern, so a link is the
        // pattern-averaged mixture.
        let link_state = Arc::new(report.heralded_ensemble()?);
        let mut station = SwapStation::new(INNER_LEFT, INNER_RIGHT)?;
        station.detector = config.swap_detector;
        station.retrieval_efficiency = config.retrieval_efficiency;
        let target = psi_plus(LEFT, RIGHT)?;
        Ok(ChainSimulator {
            config: config.clone(),
            link_acceptance: q,
            raw_acceptance: raw,
            geometric,
            link_state,
            station,
            ideal: Arc::new(Ensemble::pure(target.clone())?),
            target,
            link_cache: OnceLock::new(),
            ideal_cache: OnceLock::new(),
        })
    }

    pub fn link_acceptance(&self) -> f64 {
        self.link_acceptance
    }

    /// Periods until the next successful link attempt, at least one.
    fn wait<R: Rng>(&self, rng: &mut R) -> u64 {
        self.geometric.map_or(1, |g| g.sample(rng).saturating_add(1))
    }

    fn pick(weights: impl Iterator<Item = f64> + Clone, rng: &mut impl Rng) -> usize {
        let total: f64 = weights.clone().sum();
        let mut u = rng.random::<f64>() * total;
        let mut last = 0;
        for (i, w) in weights.enumerate() {
            if u < w {
                return i;
            }
            u -= w;
            last = i;
        }
        last
    }

    fn new_link(&self, rng: &mut ChaCha8Rng, created: u64) -> Result<Block> {
        if self.config.noise_strength > 0.0 {
            let mut link = self.config.link;
            link.noise = NoiseRealization::sample(rng, self.config.noise_strength)?;
            let report = run_link_exhaustive(&link)?;
            let diff = (report.acceptance_probability - self.raw_acceptance).abs();
            if diff > NOISE_INVARIANCE_TOL * self.raw_acceptance {
                return Err(Error::Construction(format!(
                    "link acceptance changed by {diff:e} under channel noise"
                )));
            }
            let state = report.heralded_ensemble()?;
            // A realization that leaves the heralded state untouched can share
            // the cached swap results of the noiseless link.
            let (state, tag) = if state.hs_distance_sqr(&self.link_state)? <= SAME_STATE_TOL {
                (Arc::clone(&self.link_state), Tag::Link)
            } else {
                (Arc::new(state), Tag::Other)
            };
            return Ok(Block { created, state, tag });
        }
        Ok(Block {
            created,
            state: Arc::clone(&self.link_state),
            tag: Tag::Link,
        })
    }

    fn compute_swap(&self, left: &Ensemble, right: &Ensemble, level: SwapLevel) -> Result<SwapReport> {
        swap_links(&self.station, left, right, level)
    }

    fn swap_report(&self, level: usize, left: &Block, right: &Block) -> Result<Arc<SwapReport>> {
        let kind = if level == 0 { SwapLevel::Elementary } else { SwapLevel::Higher };
        match (left.tag, right.tag) {
            (Tag::Link, Tag::Link) if level == 0 => {
                if let Some(r) = self.link_cache.get() {
                    return Ok(Arc::clone(r));
                }
                let r = Arc::new(self.compute_swap(&self.link_state, &self.link_state, kind)?);
                Ok(Arc::clone(self.link_cache.get_or_init(|| r)))
            }
            (Tag::Ideal, Tag::Ideal) if level > 0 => {
                if let Some(r) = self.ideal_cache.get() {
                    return Ok(Arc::clone(r));
                }
                let r = Arc::new(self.compute_swap(&self.ideal, &self.ideal, kind)?);
                Ok(Arc::clone(self.ideal_cache.get_or_init(|| r)))
            }
            _ => Ok(Arc::new(self.compute_swap(&left.state, &right.state, kind)?)),
        }
    }

    /// Outcome of one swap attempt: the merged block on success.
    fn swap(&self, level: usize, left: &Block, right: &Block, rng: &mut ChaCha8Rng) -> Result<Option<Block>> {
        let report = self.swap_report(level, left, right)?;
        let i = Self::pick(report.outcomes.iter().map(|o| o.probability), rng);
        let outcome = &report.outcomes[i];
        if !outcome.accepted {
            return Ok(None);
        }
        let created = left.created.min(right.created);
        let (state, tag) = if outcome.fidelity_to_target >= 1.0 - IDEAL_TOL {
            (Arc::clone(&self.ideal), Tag::Ideal)
        } else {
            (Arc::new(outcome.ensemble.clone()), Tag::Other)
        };
        Ok(Some(Block { created, state, tag }))
    }

    fn run_trial(&self, seed: u64, trial: u64) -> Result<TrialResult> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial);
        let n = self.config.segments;
        let depth = n.trailing_zeros() as usize;
        let mut res = TrialResult {
            swap_attempts: vec![0; depth],
            swap_successes: vec![0; depth],
            ..TrialResult::default()
        };
        let mut slots: Vec<Vec<Option<Block>>> = (0..=depth).map(|k| vec![None; n >> k]).collect();
        let mut pending: Vec<Option<u64>> = (0..n).map(|_| Some(self.wait(&mut rng))).collect();

        loop {
            let next_link = pending.iter().flatten().copied().min();
            let next_expiry = self.config.memory_cutoff.and_then(|c| {
                slots
                    .iter()
                    .flatten()
                    .flatten()
                    .map(|b| b.created.saturating_add(c))
                    .min()
            });
            let t = match (next_link, next_expiry) {
                (Some(a), Some(b)) => a.min(b),
                (Some(a), None) | (None, Some(a)) => a,
                (None, None) => unreachable!("a segment is always pending or stored"),
            };
            if t > self.config.max_attempts {
                return Ok(res);
            }

            for s in 0..n {
                if pending[s] == Some(t) {
                    pending[s] = None;
                    slots[0][s] = Some(self.new_link(&mut rng, t)?);
                    res.link_successes += 1;
                }
            }

            for k in 0..depth {
                for i in 0..(n >> (k + 1)) {
                    if slots[k][2 * i].is_none() || slots[k][2 * i + 1].is_none() {
                        continue;
                    }
                    let left = slots[k][2 * i].take().expect("checked");
                    let right = slots[k][2 * i + 1].take().expect("checked");
                    res.swap_attempts[k] += 1;
                    match self.swap(k, &left, &right, &mut rng)? {
                        Some(block) => {
                            res.swap_successes[k] += 1;
                            slots[k + 1][i] = Some(block);
                        }
                        None => {
                            let width = 1 << (k + 1);
                            for p in &mut pending[i * width..(i + 1) * width] {
                                *p = Some(t + self.wait(&mut rng));
                            }
                        }
                    }
                }
            }

            if let Some(top) = slots[depth][0].take() {
                res.attempts = Some(t);
                res.fidelity = Some(top.state.fidelity_to(&self.target)?);
                return Ok(res);
            }

            if let Some(c) = self.config.memory_cutoff {
                for (k, level) in slots.iter_mut().enumerate() {
                    let width = 1 << k;
                    for (i, slot) in level.iter_mut().enumerate() {
                        if slot.as_ref().is_some_and(|b| b.created.saturating_add(c) <= t) {
                            *slot = None;
                            res.expired += 1;
                            for p in &mut pending[i * width..(i + 1) * width] {
                                *p = Some(t + self.wait(&mut rng));
                            }
                        }
                    }
                }
            }
        }
    }

    /// Run `trials` independent trials. Trial `i` draws from stream `i` of
    /// a generator seeded with `seed`, so results do not depend on thread
    /// scheduling.
    pub fn simulate(&self, seed: u64, trials: usize) -> Result<ChainStats> {
        if trials == 0 {
            return Err(Error::config("trials", "must be at least 1"));
        }
        let results = (0..trials as u64)
            .into_par_iter()
            .map(|i| self.run_trial(seed, i))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.aggregate(&results))
    }

    fn aggregate(&self, results: &[TrialResult]) -> ChainStats {
        let depth = self.config.segments.trailing_zeros() as usize;
        let mut attempts: Vec<f64> = results.iter().filter_map(|r| r.attempts).map(|a| a as f64).collect();
        let fidelities: Vec<f64> = results.iter().filter_map(|r| r.fidelity).collect();
        let completed = attempts.len();
        let (mean, std) = mean_std(&attempts);
        attempts.sort_by(f64::total_cmp);
        let median = match completed {
            0 => f64::NAN,
            c if c % 2 == 1 => attempts[c / 2],
            c => 0.5 * (attempts[c / 2 - 1] + attempts[c / 2]),
        };
        let se = std / (completed as f64).sqrt();
        let (f_mean, f_std) = mean_std(&fidelities);
        let levels = (0..depth)
            .map(|k| LevelCounts {
                level: k,
                attempts: results.iter().map(|r| r.swap_attempts[k]).sum(),
                successes: results.iter().map(|r| r.swap_successes[k]).sum(),
            })
            .collect();
        let mean_time = mean * self.config.attempt_period;
        ChainStats {
            trials: results.len(),
            completed,
            timed_out: results.len() - completed,
            link_acceptance: self.link_acceptance,
            mean_attempts: mean,
            median_attempts: median,
            std_attempts: std,
            attempts_std_error: se,
            attempts_half_width: 1.96 * se,
            mean_time,
            rate: 1.0 / mean_time,
            link_successes: results.iter().map(|r| r.link_successes).sum(),
            expired_links: results.iter().map(|r| r.expired).sum(),
            levels,
            fidelity_mean: f_mean,
            fidelity_min: fidelities.iter().copied().fold(f64::NAN, f64::min),
            fidelity_half_width: 1.96 * f_std / (fidelities.len() as f64).sqrt(),
        }
    }
}

/// Sample mean and (n−1) standard deviation, summed in slice order.
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn simulate_chain(config: &ChainConfig, seed: u64, trials: usize) -> Result<ChainStats> {
    ChainSimulator::new(config)?.simulate(seed, trials)
}

/// Cartesian parameter grid around a base configuration. Empty axes keep the
/// base value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub base: ChainConfig,
    #[serde(default)]
    pub emission_probabilities: Vec<f64>,
    #[serde(default)]
    pub transmittances: Vec<f64>,
    #[serde(default)]
    pub segments: Vec<usize>,
    #[serde(default)]
    pub noise_strengths: Vec<f64>,
}

impl SweepGrid {
    pub fn cells(&self) -> Vec<ChainConfig> {
        fn axis<T: Copy>(values: &[T], base: T) -> Vec<T> {
            if values.is_empty() {
                vec![base]
            } else {
                values.to_vec()
            }
        }
        let mut out = Vec::new();
        for &n in &axis(&self.segments, self.base.segments) {
            for &p in &axis(&self.emission_probabilities, self.base.link.emission_probability) {
                for &t in &axis(&self.transmittances, self.base.link.transmittance) {
                    for &s in &axis(&self.noise_strengths, self.base.noise_strength) {
                        let mut c = self.base.clone();
                        c.segments = n;
                        c.link.emission_probability = p;
                        c.link.transmittance = t;
                        c.noise_strength = s;
                        out.push(c);
                    }
                }
            }
        }
        out
    }
}

/// One CSV row: the swept parameters followed by the scalar statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub segments: usize,
    pub emission_probability: f64,
    pub transmittance: f64,
    pub noise_strength: f64,
    pub trials: usize,
    pub completed: usize,
    pub link_acceptance: f64,
    pub mean_attempts: f64,
    pub attempts_std_error: f64,
    pub attempts_half_width: f64,
    pub median_attempts: f64,
    pub mean_time: f64,
    pub rate: f64,
    pub fidelity_mean: f64,
    pub fidelity_min: f64,
}

impl SweepRow {
    fn new(c: &ChainConfig, s: &ChainStats) -> Self {
        SweepRow {
            segments: c.segments,
            emission_probability: c.link.emission_probability,
            transmittance: c.link.transmittance,
            noise_strength: c.noise_strength,
            trials: s.trials,
            completed: s.completed,
            link_acceptance: s.link_acceptance,
            mean_attempts: s.mean_attempts,
            attempts_std_error: s.attempts_std_error,
            attempts_half_width: s.attempts_half_width,
            median_attempts: s.median_attempts,
            mean_time: s.mean_time,
            rate: s.rate,
            fidelity_mean: s.fidelity_mean,
            fidelity_min: s.fidelity_min,
        }
    }
}

/// Every grid cell is run with the same seed.
pub fn sweep(grid: &SweepGrid, seed: u64, trials: usize) -> Result<Vec<SweepRow>> {
    grid.cells()
        .iter()
        .map(|c| Ok(SweepRow::new(c, &simulate_chain(c, seed, trials)?)))
        .collect()
}

pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
