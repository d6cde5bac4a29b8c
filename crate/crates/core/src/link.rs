//! Elementary entanglement generation between two neighbouring nodes.
//!
//! Each node holds two memories, `<node>1` tied to an `H` photon and
//! `<node>2` to a `V` photon. Photons are time-bin encoded at the node, sent
//! through independent noisy channels and interfered on a balanced beam
//! splitter whose outputs feed detectors `D1` and `D2`.
//!
//! Probabilities are reported relative to the emission expansion with unit
//! vacuum amplitude. To leading order in the emission probability they equal
//! the physical per-attempt probabilities.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{BasisKey, Ensemble, JointState, ModeId, TimeBin, C64};
use crate::noise::{
    collective_pol_unitary, detect, loss, path_phase, sample_jones, ClickPattern, DetectorBank,
    DetectorKind, DetectorModel, JonesUnitary,
};
use crate::optics::{bs50, encode_time_bins};

pub const LEFT: &str = "L";
pub const RIGHT: &str = "R";
pub const LINK_DETECTORS: [&str; 2] = ["D1", "D2"];

/// Memory labels of a node: `[<node>1, <node>2]`.
pub fn node_memories(node: &str) -> [String; 2] {
    [format!("{node}1"), format!("{node}2")]
}

/// One realization of the channel disturbance for both arms of a link.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseRealization {
    #[serde(default)]
    pub left: JonesUnitary,
    #[serde(default)]
    pub right: JonesUnitary,
    #[serde(default)]
    pub phase_left: f64,
    #[serde(default)]
    pub phase_right: f64,
}

impl NoiseRealization {
    /// Independent Jones matrices per arm and one common path phase.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, strength: f64) -> Result<Self> {
        let left = sample_jones(rng, strength)?;
        let right = sample_jones(rng, strength)?;
        let phase = strength * rng.random_range(-PI..PI);
        Ok(NoiseRealization {
            left,
            right,
            phase_left: phase,
            phase_right: phase,
        })
    }
}

fn default_emission_probability() -> f64 {
    0.01
}

fn default_transmittance() -> f64 {
    1.0
}

fn default_link_detector() -> DetectorModel {
    DetectorModel::ideal(DetectorKind::Threshold)
}

fn default_excitations() -> usize {
    2
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    #[serde(default = "default_emission_probability")]
    pub emission_probability: f64,
    #[serde(default)]
    pub noise: NoiseRealization,
    #[serde(default = "default_transmittance")]
    pub transmittance: f64,
    #[serde(default = "default_link_detector")]
    pub detector: DetectorModel,
    /// Highest number of simultaneous memory excitations kept in the
    /// emission expansion.
    #[serde(default = "default_excitations")]
    pub max_excitations: usize,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            emission_probability: default_emission_probability(),
            noise: NoiseRealization::default(),
            transmittance: 1.0,
            detector: default_link_detector(),
            max_excitations: 2,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        let p = self.emission_probability;
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::config("emission_probability", format!("{p} not in (0, 1)")));
        }
        if !(0.0..=1.0).contains(&self.transmittance) {
            return Err(Error::config(
                "transmittance",
                format!("{} not in [0, 1]", self.transmittance),
            ));
        }
        if !(1..=4).contains(&self.max_excitations) {
            return Err(Error::config("max_excitations", "must be between 1 and 4"));
        }
        self.detector.validate("detector")?;
        for (key, u) in [("noise.left", &self.noise.left), ("noise.right", &self.noise.right)] {
            JonesUnitary::new(u.matrix()).map_err(|e| Error::config(key, e.to_string()))?;
        }
        Ok(())
    }
}

/// Weight of the emission expansion beyond `max_excitations`, relative to
/// the untruncated `(1 + p)^4`.
pub fn truncated_weight(p: f64, max_excitations: usize) -> f64 {
    let kept: f64 = (0..=max_excitations.min(4))
        .map(|k| binomial4(k) * p.powi(k as i32))
        .sum();
    ((1.0 + p).powi(4) - kept).max(0.0)
}

fn binomial4(k: usize) -> f64 {
    [1.0, 4.0, 6.0, 4.0, 1.0][k]
}

/// Memory/photon state of both nodes right after the write pulses.
///
/// Every set of `k ≤ max_excitations` memories appears with amplitude
/// `p^{k/2}`: `<node>1` emits `H` and `<node>2` emits `V` on the node's path.
pub fn emission_state(p: f64, max_excitations: usize) -> Result<JointState> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::config("emission_probability", format!("{p} not in [0, 1)")));
    }
    let [l1, l2] = node_memories(LEFT);
    let [r1, r2] = node_memories(RIGHT);
    let sources = [
        (l1, ModeId::h(LEFT)),
        (l2, ModeId::v(LEFT)),
        (r1, ModeId::h(RIGHT)),
        (r2, ModeId::v(RIGHT)),
    ];
    let modes: Vec<ModeId> = sources.iter().map(|(_, m)| m.clone()).collect();
    let memories: Vec<&str> = sources.iter().map(|(m, _)| m.as_str()).collect();
    let vacuum = JointState::vacuum(&modes, &memories)?.with_max_photons(max_excitations.max(4))?;
    if vacuum.memories().len() != 4 {
        return Err(Error::Registry("link memories must be distinct".into()));
    }
    let mut state = vacuum.clone();
    for subset in 1u32..16 {
        let k = subset.count_ones() as usize;
        if k > max_excitations || p == 0.0 {
            continue;
        }
        let mut term = vacuum.clone();
        for (i, (mem, mode)) in sources.iter().enumerate() {
            if subset & (1 << i) != 0 {
                term = term.excite_memory(mem)?.create_photon(mode)?;
            }
        }
        state = state.add(&term.scaled(C64::new(p.powf(k as f64 / 2.0), 0.0)))?;
    }
    Ok(state)
}

/// Classification of a middle-station click pattern.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Herald {
    Rejected,
    /// One click per detector, one per time bin.
    PlusType,
    /// Both clicks on the same detector, one per time bin.
    MinusType,
}

impl Herald {
    pub fn accepted(self) -> bool {
        self != Herald::Rejected
    }
}

pub fn acceptance_rule(pattern: &ClickPattern) -> Herald {
    let entries: Vec<_> = pattern.entries().collect();
    if entries.len() != 2 || entries.iter().any(|&(d, _, n)| n != 1 || !LINK_DETECTORS.contains(&d)) {
        return Herald::Rejected;
    }
    let (a, b) = (entries[0], entries[1]);
    let bins = [a.1, b.1];
    if !(bins.contains(&TimeBin::Bin1) && bins.contains(&TimeBin::Bin2)) {
        return Herald::Rejected;
    }
    if a.0 == b.0 {
        Herald::MinusType
    } else {
        Herald::PlusType
    }
}

/// Detectors `D1`, `D2` with both polarizations in both time bins.
pub fn middle_station_bank(model: DetectorModel) -> Result<DetectorBank> {
    let mut bank = DetectorBank::new();
    for d in LINK_DETECTORS {
        let modes = TimeBin::ENCODED
            .iter()
            .flat_map(|&bin| [ModeId::h(d).with_bin(bin), ModeId::v(d).with_bin(bin)])
            .collect();
        bank = bank.with_detector(d, model, modes)?;
    }
    Ok(bank)
}

/// Photonic state arriving at the detectors, normalized, together with the
/// squared norm of the emission expansion it was normalized by.
///
/// The common phase of each Jones matrix is a path-length phase and is
/// compensated by the loop geometry together with the pump, so only its
/// polarization-changing part acts on the photons.
pub fn pre_detection_state(config: &LinkConfig) -> Result<(Ensemble, f64)> {
    let emitted = emission_state(config.emission_probability, config.max_excitations)?;
    let scale = emitted.norm_sqr();
    let mut state = emitted.normalized()?;
    let arms = [
        (LEFT, config.noise.left, config.noise.phase_left),
        (RIGHT, config.noise.right, config.noise.phase_right),
    ];
    for (node, u, phase) in arms {
        state = encode_time_bins(&state, node)?;
        state = collective_pol_unitary(&state, node, &u.special_part())?;
        state = path_phase(&state, node, phase)?;
    }
    let mut ens = Ensemble::pure(state)?;
    for node in [LEFT, RIGHT] {
        ens = loss(&ens, node, config.transmittance)?;
    }
    // The left arm reaches D1 by reflection and the right arm reaches D2.
    let bs = bs50(LEFT, RIGHT, LINK_DETECTORS[1], LINK_DETECTORS[0], &TimeBin::ENCODED)?;
    let ens = ens.map_states(|s| s.with_modes(bs.inputs())?.apply_mode_map(&bs))?;
    Ok((ens, scale))
}

#[derive(Clone, Debug)]
pub struct LinkOutcome {
    pub herald: Herald,
    pub pattern: ClickPattern,
    pub probability: f64,
    /// Conditional memory ensemble over `L1, L2, R1, R2`.
    pub ensemble: Ensemble,
}

impl LinkOutcome {
    pub fn accepted(&self) -> bool {
        self.herald.accepted()
    }

    /// Conditional ensemble with the heralded sign fixed: minus-type
    /// patterns get a `π` phase on the doubly excited right node.
    pub fn corrected_ensemble(&self) -> Result<Ensemble> {
        match self.herald {
            Herald::MinusType => {
                let right = node_memories(RIGHT);
                self.ensemble.map_states(|s| s.memory_phase(&right, PI))
            }
            _ => Ok(self.ensemble.clone()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LinkReport {
    pub outcomes: Vec<LinkOutcome>,
    pub acceptance_probability: f64,
    pub truncated_weight: f64,
}

impl LinkReport {
    pub fn accepted(&self) -> impl Iterator<Item = &LinkOutcome> {
        self.outcomes.iter().filter(|o| o.accepted())
    }

    pub fn herald_probability(&self, herald: Herald) -> f64 {
        self.outcomes
            .iter()
            .filter(|o| o.herald == herald)
            .map(|o| o.probability)
            .sum()
    }

    /// Memory ensemble left by any accepted pattern once the heralded sign
    /// is fixed.
    pub fn heralded_ensemble(&self) -> Result<Ensemble> {
        let mut out = Ensemble::default();
        for o in self.accepted() {
            out.extend_scaled(&o.corrected_ensemble()?, o.probability);
        }
        if out.is_empty() {
            return Err(Error::ZeroState("no accepted link pattern".into()));
        }
        out.normalized()
    }

    /// Draw one pattern from the exhaustive distribution.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &LinkOutcome {
        let total: f64 = self.outcomes.iter().map(|o| o.probability).sum();
        let mut u = rng.random::<f64>() * total;
        for o in &self.outcomes {
            if u < o.probability {
                return o;
            }
            u -= o.probability;
        }
        self.outcomes.last().expect("at least one detection outcome")
    }
}

pub fn run_link_exhaustive(config: &LinkConfig) -> Result<LinkReport> {
    config.validate()?;
    let (ens, scale) = pre_detection_state(config)?;
    let bank = middle_station_bank(config.detector)?;
    let outcomes = detect(&ens, &bank, &LINK_DETECTORS)?
        .into_iter()
        .map(|o| {
            Ok(LinkOutcome {
                herald: acceptance_rule(&o.pattern),
                probability: o.probability * scale,
                ensemble: o.ensemble.map_states(|s| Ok(s.prune_modes()))?,
                pattern: o.pattern,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let acceptance_probability = outcomes.iter().filter(|o| o.accepted()).map(|o| o.probability).sum();
    Ok(LinkReport {
        outcomes,
        acceptance_probability,
        truncated_weight: truncated_weight(config.emission_probability, config.max_excitations),
    })
}

/// One attempt drawn from the exhaustive distribution.
pub fn run_link_sampled<R: Rng + ?Sized>(config: &LinkConfig, rng: &mut R) -> Result<LinkOutcome> {
    Ok(run_link_exhaustive(config)?.sample(rng).clone())
}

/// Herald counts from repeated sampled attempts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkSampleSummary {
    pub trials: u64,
    pub accepted: u64,
    pub plus_type: u64,
    pub minus_type: u64,
    pub frequency: f64,
    /// Binomial standard error of `frequency` at the exhaustive probability.
    pub std_error: f64,
    /// Exhaustive acceptance as a fraction of all outcomes, the quantity
    /// `frequency` estimates.
    pub expected_frequency: f64,
}

/// `trials` attempts from one exhaustive pass, drawn with a generator
/// seeded by `seed`.
pub fn sample_link(config: &LinkConfig, seed: u64, trials: u64) -> Result<LinkSampleSummary> {
    use rand::SeedableRng;
    if trials == 0 {
        return Err(Error::config("trials", "must be at least 1"));
    }
    let report = run_link_exhaustive(config)?;
    let total: f64 = report.outcomes.iter().map(|o| o.probability).sum();
    let q = report.acceptance_probability / total;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (mut plus, mut minus) = (0, 0);
    for _ in 0..trials {
        match report.sample(&mut rng).herald {
            Herald::PlusType => plus += 1,
            Herald::MinusType => minus += 1,
            Herald::Rejected => {}
        }
    }
    let accepted = plus + minus;
    Ok(LinkSampleSummary {
        trials,
        accepted,
        plus_type: plus,
        minus_type: minus,
        frequency: accepted as f64 / trials as f64,
        std_error: (q * (1.0 - q) / trials as f64).sqrt(),
        expected_frequency: q,
    })
}

fn excited_set(state: &JointState, key: &BasisKey) -> Vec<String> {
    state
        .memories()
        .iter()
        .filter(|m| state.is_excited(key, m))
        .cloned()
        .collect()
}

fn same_set(found: &[String], wanted: &[&str]) -> bool {
    found.len() == wanted.len() && wanted.iter().all(|w| found.iter().any(|f| f == w))
}

/// Terms where exactly one of the two nodes has both memories excited.
pub fn correct_sector<'a>(left: &'a str, right: &'a str) -> impl Fn(&JointState, &BasisKey) -> bool + 'a {
    let [l1, l2] = node_memories(left);
    let [r1, r2] = node_memories(right);
    move |s, k| {
        let set = excited_set(s, k);
        same_set(&set, &[&l1, &l2]) || same_set(&set, &[&r1, &r2])
    }
}

/// Terms where exactly the memories `a` and `b` are excited.
pub fn excitation_sector<'a>(a: &'a str, b: &'a str) -> impl Fn(&JointState, &BasisKey) -> bool + 'a {
    move |s, k| same_set(&excited_set(s, k), &[a, b])
}

/// `(S_{left1} S_{left2} ± S_{right1} S_{right2})|g>/√2` on the four memories.
pub fn pair_state(left: &str, right: &str, sign: f64) -> Result<JointState> {
    let [l1, l2] = node_memories(left);
    let [r1, r2] = node_memories(right);
    let g = JointState::vacuum::<&str>(&[], &[&l1, &l2, &r1, &r2])?;
    let a = g.excite_memory(&l1)?.excite_memory(&l2)?;
    let b = g.excite_memory(&r1)?.excite_memory(&r2)?;
    a.add(&b.scaled(C64::new(sign, 0.0)))?.normalized()
}

pub fn psi_plus(left: &str, right: &str) -> Result<JointState> {
    pair_state(left, right, 1.0)
}

/// The heralded link mixture: the correct pair state with weight 1/3 and
/// each of the four one-excitation-per-node products with weight 1/6.
pub fn reference_link_mixture(left: &str, right: &str) -> Result<Ensemble> {
    let l = node_memories(left);
    let r = node_memories(right);
    let g = JointState::vacuum::<&str>(&[], &[&l[0], &l[1], &r[0], &r[1]])?;
    let mut comps = vec![(1.0 / 3.0, psi_plus(left, right)?)];
    for a in &l {
        for b in &r {
            comps.push((1.0 / 6.0, g.excite_memory(a)?.excite_memory(b)?));
        }
    }
    Ensemble::mix(comps)
}
