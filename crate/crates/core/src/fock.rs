//! Sparse state vectors over two-level memories tensored with bosonic modes.
//!
//! A [`JointState`] stores complex amplitudes keyed by a [`BasisKey`]: a bitmask
//! of excited memories (bit `i` set means memory `i` is in `|s>`) plus an
//! occupation vector indexed by the state's mode registry. Memories are kept in
//! lexicographic order and modes in registry order, so two states built the same
//! way compare equal term by term. Comparisons between independently built
//! states should go through [`fidelity`], which aligns modes by label and
//! ignores global phase.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Amplitudes with modulus below this are dropped after every operation.
pub const AMPLITUDE_CUTOFF: f64 = 1e-14;

/// Default bound on the number of photons in flight.
pub const DEFAULT_MAX_PHOTONS: usize = 4;

const UNITARITY_TOL: f64 = 1e-12;
const MAX_MEMORIES: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarization {
    H,
    V,
}

impl Polarization {
    pub const BOTH: [Polarization; 2] = [Polarization::H, Polarization::V];

    pub fn index(self) -> usize {
        match self {
            Polarization::H => 0,
            Polarization::V => 1,
        }
    }
}

/// Time-bin label. `None` marks a photon that has not been through the encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TimeBin {
    None,
    Bin1,
    Bin2,
}

impl TimeBin {
    pub const ENCODED: [TimeBin; 2] = [TimeBin::Bin1, TimeBin::Bin2];
}

impl fmt::Display for TimeBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeBin::None => f.write_str("none"),
            TimeBin::Bin1 => f.write_str("bin1"),
            TimeBin::Bin2 => f.write_str("bin2"),
        }
    }
}

/// One photonic mode: spatial path, polarization and time-bin.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModeId {
    pub path: String,
    pub pol: Polarization,
    pub bin: TimeBin,
}

impl ModeId {
    pub fn new(path: impl Into<String>, pol: Polarization, bin: TimeBin) -> Self {
        ModeId {
            path: path.into(),
            pol,
            bin,
        }
    }

    pub fn h(path: impl Into<String>) -> Self {
        Self::new(path, Polarization::H, TimeBin::None)
    }

    pub fn v(path: impl Into<String>) -> Self {
        Self::new(path, Polarization::V, TimeBin::None)
    }

    pub fn with_bin(&self, bin: TimeBin) -> Self {
        ModeId {
            bin,
            ..self.clone()
        }
    }

    pub fn with_path(&self, path: impl Into<String>) -> Self {
        ModeId {
            path: path.into(),
            ..self.clone()
        }
    }

    pub fn with_pol(&self, pol: Polarization) -> Self {
        ModeId { pol, ..self.clone() }
    }
}

impl fmt::Display for ModeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pol = match self.pol {
            Polarization::H => 'H',
            Polarization::V => 'V',
        };
        match self.bin {
            TimeBin::None => write!(f, "{}_{}", pol, self.path),
            bin => write!(f, "{}_{}@{}", pol, self.path, bin),
        }
    }
}

impl FromStr for ModeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("malformed mode label `{s}`"));
        let (pol, rest) = s.split_once('_').ok_or_else(bad)?;
        let pol = match pol {
            "H" => Polarization::H,
            "V" => Polarization::V,
            _ => return Err(bad()),
        };
        let (path, bin) = match rest.split_once('@') {
            None => (rest, TimeBin::None),
            Some((path, "bin1")) => (path, TimeBin::Bin1),
            Some((path, "bin2")) => (path, TimeBin::Bin2),
            Some((path, "none")) => (path, TimeBin::None),
            Some(_) => return Err(bad()),
        };
        if path.is_empty() {
            return Err(bad());
        }
        Ok(ModeId::new(path, pol, bin))
    }
}

fn check_label(label: &str, what: &str) -> Result<()> {
    let forbidden = |c: char| c.is_whitespace() || matches!(c, '@' | ',' | '|' | ':');
    if label.is_empty() || label.contains(forbidden) {
        return Err(Error::Registry(format!("invalid {what} label `{label}`")));
    }
    Ok(())
}

/// Level of a two-level memory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MemoryLevel {
    G,
    S,
}

/// Basis label: excited-memory bitmask plus occupation per registered mode.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BasisKey {
    pub memory: u32,
    pub occupation: Vec<u8>,
}

impl BasisKey {
    pub fn photons(&self) -> usize {
        self.occupation.iter().map(|&n| n as usize).sum()
    }

    pub fn excited(&self, memory_index: usize) -> bool {
        self.memory & (1 << memory_index) != 0
    }
}

fn sqrt_factorial(n: u8) -> f64 {
    (1..=n as u32).map(f64::from).product::<f64>().sqrt()
}

fn prune(terms: &mut BTreeMap<BasisKey, C64>) {
    terms.retain(|_, a| a.norm() >= AMPLITUDE_CUTOFF);
}

/// Sparse amplitude vector over (memory configuration x photon occupation).
///
/// States are values: every operation returns a new state. Norms are not
/// renormalized implicitly; `norm_tracking` accumulates post-selection
/// probabilities applied along the way.
#[derive(Clone, Debug, PartialEq)]
pub struct JointState {
    modes: Arc<[ModeId]>,
    memories: Arc<[String]>,
    terms: BTreeMap<BasisKey, C64>,
    norm_tracking: f64,
    max_photons: usize,
}

impl JointState {
    /// All memories in `g`, every mode empty, amplitude 1.
    pub fn vacuum<S: AsRef<str>>(modes: &[ModeId], memories: &[S]) -> Result<Self> {
        if modes.is_empty() && memories.is_empty() {
            return Err(Error::Registry("empty mode and memory registries".into()));
        }
        let mut mem: Vec<String> = Vec::with_capacity(memories.len());
        for m in memories {
            check_label(m.as_ref(), "memory")?;
            mem.push(m.as_ref().to_string());
        }
        mem.sort();
        if mem.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Registry("duplicate memory label".into()));
        }
        if mem.len() > MAX_MEMORIES {
            return Err(Error::Registry(format!("more than {MAX_MEMORIES} memories")));
        }
        let mut seen = BTreeSet::new();
        for m in modes {
            check_label(&m.path, "path")?;
            if !seen.insert(m) {
                return Err(Error::Registry(format!("duplicate mode `{m}`")));
            }
        }
        let mut terms = BTreeMap::new();
        terms.insert(
            BasisKey {
                memory: 0,
                occupation: vec![0; modes.len()],
            },
            C64::new(1.0, 0.0),
        );
        Ok(JointState {
            modes: modes.into(),
            memories: mem.into(),
            terms,
            norm_tracking: 1.0,
            max_photons: DEFAULT_MAX_PHOTONS,
        })
    }

    /// Build a state from explicit terms. Keys must match the registries.
    pub fn from_terms<S: AsRef<str>>(
        modes: &[ModeId],
        memories: &[S],
        terms: impl IntoIterator<Item = (BasisKey, C64)>,
    ) -> Result<Self> {
        let mut state = Self::vacuum(modes, memories)?;
        state.terms.clear();
        let n_mem = state.memories.len();
        for (key, amp) in terms {
            if key.occupation.len() != modes.len() || (n_mem < 32 && key.memory >> n_mem != 0) {
                return Err(Error::Registry("basis key does not match registry".into()));
            }
            *state.terms.entry(key).or_default() += amp;
        }
        prune(&mut state.terms);
        state.check_photons()?;
        Ok(state)
    }

    pub fn with_max_photons(mut self, max_photons: usize) -> Result<Self> {
        self.max_photons = max_photons;
        self.check_photons()?;
        Ok(self)
    }

    pub fn modes(&self) -> &[ModeId] {
        &self.modes
    }

    pub fn memories(&self) -> &[String] {
        &self.memories
    }

    pub fn terms(&self) -> impl Iterator<Item = (&BasisKey, &C64)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn norm_tracking(&self) -> f64 {
        self.norm_tracking
    }

    pub fn max_photons(&self) -> usize {
        self.max_photons
    }

    pub fn mode_index(&self, mode: &ModeId) -> Option<usize> {
        self.modes.iter().position(|m| m == mode)
    }

    pub fn memory_index(&self, label: &str) -> Option<usize> {
        self.memories.binary_search_by(|m| m.as_str().cmp(label)).ok()
    }

    fn require_memory(&self, label: &str) -> Result<usize> {
        self.memory_index(label)
            .ok_or_else(|| Error::UnknownMemory(label.to_string()))
    }

    fn require_mode(&self, mode: &ModeId) -> Result<usize> {
        self.mode_index(mode)
            .ok_or_else(|| Error::UnknownMode(mode.to_string()))
    }

    /// Occupation of `mode` in `key` (0 when the mode is not registered).
    pub fn occupation(&self, key: &BasisKey, mode: &ModeId) -> u8 {
        self.mode_index(mode).map_or(0, |i| key.occupation[i])
    }

    /// True when memory `label` is in `|s>` in `key`.
    pub fn is_excited(&self, key: &BasisKey, label: &str) -> bool {
        self.memory_index(label).is_some_and(|i| key.excited(i))
    }

    pub fn amplitude(&self, key: &BasisKey) -> C64 {
        self.terms.get(key).copied().unwrap_or_default()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.terms.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    fn check_photons(&self) -> Result<()> {
        for key in self.terms.keys() {
            let n = key.photons();
            if n > self.max_photons {
                return Err(Error::Truncation {
                    found: n,
                    limit: self.max_photons,
                });
            }
        }
        Ok(())
    }

    fn with_terms(&self, mut terms: BTreeMap<BasisKey, C64>) -> Self {
        prune(&mut terms);
        JointState {
            modes: self.modes.clone(),
            memories: self.memories.clone(),
            terms,
            norm_tracking: self.norm_tracking,
            max_photons: self.max_photons,
        }
    }

    pub fn scaled(&self, factor: C64) -> Self {
        self.with_terms(self.terms.iter().map(|(k, a)| (k.clone(), a * factor)).collect())
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm_sqr();
        if n <= 0.0 {
            return Err(Error::ZeroState("cannot normalize the zero state".into()));
        }
        Ok(self.scaled(C64::new(1.0 / n.sqrt(), 0.0)))
    }

    /// Register extra modes (empty in every term). Already-registered modes are skipped.
    pub fn with_modes(&self, modes: &[ModeId]) -> Result<Self> {
        let mut out = self.clone();
        for m in modes {
            if out.mode_index(m).is_none() {
                check_label(&m.path, "path")?;
                let mut v = out.modes.to_vec();
                v.push(m.clone());
                out.modes = v.into();
            }
        }
        let extra = out.modes.len() - self.modes.len();
        if extra > 0 {
            out.terms = out
                .terms
                .into_iter()
                .map(|(mut k, a)| {
                    k.occupation.extend(std::iter::repeat_n(0, extra));
                    (k, a)
                })
                .collect();
        }
        Ok(out)
    }

    /// Drop modes that are empty in every term.
    pub fn prune_modes(&self) -> Self {
        let keep: Vec<usize> = (0..self.modes.len())
            .filter(|&i| self.terms.keys().any(|k| k.occupation[i] > 0))
            .collect();
        let terms = self
            .terms
            .iter()
            .map(|(k, a)| {
                (
                    BasisKey {
                        memory: k.memory,
                        occupation: keep.iter().map(|&i| k.occupation[i]).collect(),
                    },
                    *a,
                )
            })
            .collect();
        JointState {
            modes: keep.iter().map(|&i| self.modes[i].clone()).collect(),
            ..self.with_terms(terms)
        }
    }

    /// Bosonic creation `a†` on `mode`. The result is not renormalized.
    pub fn create_photon(&self, mode: &ModeId) -> Result<Self> {
        let idx = self.require_mode(mode)?;
        let mut terms = BTreeMap::new();
        for (k, a) in &self.terms {
            let mut k = k.clone();
            let n = k.occupation[idx];
            k.occupation[idx] = n + 1;
            terms.insert(k, a * (f64::from(n) + 1.0).sqrt());
        }
        let out = self.with_terms(terms);
        out.check_photons()?;
        Ok(out)
    }

    /// `S† = |s><g|` on memory `label`; terms already in `s` are annihilated.
    pub fn excite_memory(&self, label: &str) -> Result<Self> {
        let bit = 1u32 << self.require_memory(label)?;
        Ok(self.with_terms(
            self.terms
                .iter()
                .filter(|(k, _)| k.memory & bit == 0)
                .map(|(k, a)| {
                    (
                        BasisKey {
                            memory: k.memory | bit,
                            occupation: k.occupation.clone(),
                        },
                        *a,
                    )
                })
                .collect(),
        ))
    }

    /// Read-out map: terms with `label` in `s` become `a†_mode` with the
    /// memory back in `g`; terms with `label` in `g` are untouched.
    pub fn retrieve_into(&self, label: &str, mode: &ModeId) -> Result<Self> {
        let bit = 1u32 << self.require_memory(label)?;
        let state = self.with_modes(std::slice::from_ref(mode))?;
        let idx = state.require_mode(mode)?;
        let mut terms = BTreeMap::new();
        for (k, a) in &state.terms {
            if k.memory & bit == 0 {
                *terms.entry(k.clone()).or_default() += *a;
                continue;
            }
            let mut k = k.clone();
            k.memory &= !bit;
            let n = k.occupation[idx];
            k.occupation[idx] = n + 1;
            *terms.entry(k).or_default() += a * (f64::from(n) + 1.0).sqrt();
        }
        let out = state.with_terms(terms);
        out.check_photons()?;
        Ok(out)
    }

    /// Multiply by `e^{i phase}` every term in which all `labels` are excited.
    pub fn memory_phase<S: AsRef<str>>(&self, labels: &[S], phase: f64) -> Result<Self> {
        let mut mask = 0u32;
        for l in labels {
            mask |= 1 << self.require_memory(l.as_ref())?;
        }
        let factor = C64::from_polar(1.0, phase);
        Ok(self.with_terms(
            self.terms
                .iter()
                .map(|(k, a)| {
                    let a = if k.memory & mask == mask { a * factor } else { *a };
                    (k.clone(), a)
                })
                .collect(),
        ))
    }

    /// Remove memories that are in `g` in every term.
    pub fn remove_ground_memories<S: AsRef<str>>(&self, labels: &[S]) -> Result<Self> {
        let mut drop = BTreeSet::new();
        for l in labels {
            let i = self.require_memory(l.as_ref())?;
            if self.terms.keys().any(|k| k.excited(i)) {
                return Err(Error::Registry(format!(
                    "memory `{}` is excited and cannot be removed",
                    l.as_ref()
                )));
            }
            drop.insert(i);
        }
        let keep: Vec<usize> = (0..self.memories.len()).filter(|i| !drop.contains(i)).collect();
        let remap = |bits: u32| {
            keep.iter()
                .enumerate()
                .fold(0u32, |acc, (new, &old)| acc | (((bits >> old) & 1) << new))
        };
        let terms = self
            .terms
            .iter()
            .map(|(k, a)| {
                (
                    BasisKey {
                        memory: remap(k.memory),
                        occupation: k.occupation.clone(),
                    },
                    *a,
                )
            })
            .collect();
        Ok(JointState {
            memories: keep.iter().map(|&i| self.memories[i].clone()).collect(),
            ..self.with_terms(terms)
        })
    }

    /// Relabel memories; the registry is re-sorted.
    pub fn rename_memories(&self, rename: impl Fn(&str) -> String) -> Result<Self> {
        let new_labels: Vec<String> = self.memories.iter().map(|m| rename(m)).collect();
        let mut sorted = new_labels.clone();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Registry("memory rename produced duplicates".into()));
        }
        for l in &sorted {
            check_label(l, "memory")?;
        }
        let position: Vec<usize> = new_labels
            .iter()
            .map(|l| sorted.binary_search(l).unwrap_or(0))
            .collect();
        let remap = |bits: u32| {
            position
                .iter()
                .enumerate()
                .fold(0u32, |acc, (old, &new)| acc | (((bits >> old) & 1) << new))
        };
        let terms = self
            .terms
            .iter()
            .map(|(k, a)| {
                (
                    BasisKey {
                        memory: remap(k.memory),
                        occupation: k.occupation.clone(),
                    },
                    *a,
                )
            })
            .collect();
        Ok(JointState {
            memories: sorted.into(),
            ..self.with_terms(terms)
        })
    }

    /// Keep only the terms accepted by `keep`.
    pub fn filter(&self, keep: impl Fn(&BasisKey) -> bool) -> Self {
        self.with_terms(
            self.terms
                .iter()
                .filter(|(k, _)| keep(k))
                .map(|(k, a)| (k.clone(), *a))
                .collect(),
        )
    }

    /// Coherent sum `self + other`. Memory registries must agree; modes are
    /// aligned by label.
    pub fn add(&self, other: &JointState) -> Result<Self> {
        if self.memories != other.memories {
            return Err(Error::Registry("superposition of different memory registries".into()));
        }
        let lhs = self.with_modes(&other.modes)?;
        let rhs = other.with_modes(&lhs.modes)?;
        let order: Vec<usize> = lhs.modes.iter().map(|m| rhs.mode_index(m).unwrap_or(0)).collect();
        let mut terms = lhs.terms.clone();
        for (k, a) in &rhs.terms {
            let key = BasisKey {
                memory: k.memory,
                occupation: order.iter().map(|&i| k.occupation[i]).collect(),
            };
            *terms.entry(key).or_default() += a;
        }
        let mut out = lhs.with_terms(terms);
        out.max_photons = self.max_photons.max(other.max_photons);
        Ok(out)
    }

    /// Replace every creation operator on a map input by its image and
    /// re-expand into the occupation basis.
    pub fn apply_mode_map(&self, map: &LinearModeMap) -> Result<Self> {
        for m in map.inputs() {
            self.require_mode(m)?;
        }
        self.check_photons()?;
        let out = self.with_modes(map.outputs())?;
        let width = out.modes.len();
        let input_pos: Vec<Option<usize>> = self
            .modes
            .iter()
            .map(|m| map.inputs().iter().position(|i| i == m))
            .collect();
        let out_index: Vec<usize> = map
            .outputs()
            .iter()
            .map(|m| out.mode_index(m).expect("registered above"))
            .collect();
        let images: Vec<Vec<(usize, C64)>> = (0..map.inputs().len())
            .map(|c| {
                (0..map.outputs().len())
                    .filter_map(|r| {
                        let v = map.matrix()[(r, c)];
                        (v.norm() > 0.0).then_some((out_index[r], v))
                    })
                    .collect()
            })
            .collect();

        let mut terms: BTreeMap<BasisKey, C64> = BTreeMap::new();
        let mut herald_weight = 0.0;
        let mut total_weight = 0.0;
        for (key, amp) in &self.terms {
            let mut poly: BTreeMap<Vec<u8>, C64> = BTreeMap::new();
            poly.insert(vec![0; width], *amp);
            let mut routed = 0;
            for (k, &n) in key.occupation.iter().enumerate() {
                if n == 0 {
                    continue;
                }
                let scale = 1.0 / sqrt_factorial(n);
                match input_pos[k] {
                    None => {
                        poly = poly
                            .into_iter()
                            .map(|(mut mono, c)| {
                                mono[k] += n;
                                (mono, c * scale)
                            })
                            .collect();
                    }
                    Some(col) => {
                        routed += n as i32;
                        for _ in 0..n {
                            let mut next: BTreeMap<Vec<u8>, C64> = BTreeMap::new();
                            for (mono, c) in &poly {
                                for &(j, v) in &images[col] {
                                    let mut m = mono.clone();
                                    m[j] += 1;
                                    *next.entry(m).or_default() += c * v;
                                }
                            }
                            poly = next;
                        }
                        for c in poly.values_mut() {
                            *c *= scale;
                        }
                    }
                }
            }
            let w = amp.norm_sqr();
            total_weight += w;
            herald_weight += w * map.herald_probability().powi(routed);
            for (mono, c) in poly {
                let f: f64 = mono.iter().map(|&m| sqrt_factorial(m)).product();
                *terms
                    .entry(BasisKey {
                        memory: key.memory,
                        occupation: mono,
                    })
                    .or_default() += c * f;
            }
        }
        let mut result = out.with_terms(terms);
        if total_weight > 0.0 {
            result.norm_tracking *= herald_weight / total_weight;
        }
        result.check_photons()?;
        Ok(result)
    }

    /// Product state over the union of disjoint registries.
    pub fn tensor(&self, other: &JointState) -> Result<Self> {
        for m in other.memories.iter() {
            if self.memory_index(m).is_some() {
                return Err(Error::Registry(format!("memory `{m}` on both sides of tensor")));
            }
        }
        for m in other.modes.iter() {
            if self.mode_index(m).is_some() {
                return Err(Error::Registry(format!("mode `{m}` on both sides of tensor")));
            }
        }
        let mut memories: Vec<String> = self.memories.iter().chain(other.memories.iter()).cloned().collect();
        memories.sort();
        if memories.len() > MAX_MEMORIES {
            return Err(Error::Registry(format!("more than {MAX_MEMORIES} memories")));
        }
        let pos = |labels: &[String]| -> Vec<usize> {
            labels.iter().map(|l| memories.binary_search(l).unwrap_or(0)).collect()
        };
        let (pa, pb) = (pos(&self.memories), pos(&other.memories));
        let remap = |bits: u32, p: &[usize]| {
            p.iter()
                .enumerate()
                .fold(0u32, |acc, (old, &new)| acc | (((bits >> old) & 1) << new))
        };
        let mut terms = BTreeMap::new();
        for (ka, a) in &self.terms {
            for (kb, b) in &other.terms {
                let mut occupation = ka.occupation.clone();
                occupation.extend_from_slice(&kb.occupation);
                terms.insert(
                    BasisKey {
                        memory: remap(ka.memory, &pa) | remap(kb.memory, &pb),
                        occupation,
                    },
                    a * b,
                );
            }
        }
        prune(&mut terms);
        let out = JointState {
            modes: self.modes.iter().chain(other.modes.iter()).cloned().collect(),
            memories: memories.into(),
            terms,
            norm_tracking: self.norm_tracking * other.norm_tracking,
            max_photons: self.max_photons.max(other.max_photons),
        };
        out.check_photons()?;
        Ok(out)
    }

    fn labelled(&self) -> BTreeMap<(u32, Vec<(ModeId, u8)>), C64> {
        self.terms
            .iter()
            .map(|(k, a)| {
                let mut occ: Vec<(ModeId, u8)> = k
                    .occupation
                    .iter()
                    .enumerate()
                    .filter(|(_, &n)| n > 0)
                    .map(|(i, &n)| (self.modes[i].clone(), n))
                    .collect();
                occ.sort();
                ((k.memory, occ), *a)
            })
            .collect()
    }

    /// `<self|other>` with modes aligned by label.
    pub fn inner(&self, other: &JointState) -> Result<C64> {
        if self.memories != other.memories {
            return Err(Error::Registry("inner product across different memory registries".into()));
        }
        let rhs = other.labelled();
        Ok(self
            .labelled()
            .iter()
            .filter_map(|(k, a)| rhs.get(k).map(|b| a.conj() * b))
            .sum())
    }

    /// Split terms by their occupation of `modes` (unregistered modes read as
    /// 0). Each residual has the measured modes removed and is not normalized.
    pub fn split_by(&self, modes: &[ModeId]) -> BTreeMap<Vec<u8>, JointState> {
        let idx: Vec<Option<usize>> = modes.iter().map(|m| self.mode_index(m)).collect();
        let keep: Vec<usize> = (0..self.modes.len())
            .filter(|i| !idx.contains(&Some(*i)))
            .collect();
        let residual_modes: Arc<[ModeId]> = keep.iter().map(|&i| self.modes[i].clone()).collect();
        let mut groups: BTreeMap<Vec<u8>, BTreeMap<BasisKey, C64>> = BTreeMap::new();
        for (k, a) in &self.terms {
            let assignment: Vec<u8> = idx.iter().map(|i| i.map_or(0, |i| k.occupation[i])).collect();
            let key = BasisKey {
                memory: k.memory,
                occupation: keep.iter().map(|&i| k.occupation[i]).collect(),
            };
            groups.entry(assignment).or_default().insert(key, *a);
        }
        groups
            .into_iter()
            .map(|(assignment, terms)| {
                let state = JointState {
                    modes: residual_modes.clone(),
                    memories: self.memories.clone(),
                    terms,
                    norm_tracking: self.norm_tracking,
                    max_photons: self.max_photons,
                };
                (assignment, state)
            })
            .collect()
    }

    /// Project the listed modes onto the given occupations.
    ///
    /// The probability is the squared norm of the kept part. The residual has
    /// the measured modes stripped, is renormalized, and carries the
    /// probability in `norm_tracking`.
    pub fn project_occupation(&self, assignment: &[(ModeId, u8)]) -> Result<Projection> {
        let mut seen = BTreeSet::new();
        for (m, _) in assignment {
            self.require_mode(m)?;
            if !seen.insert(m) {
                return Err(Error::Registry(format!("mode `{m}` assigned twice")));
            }
        }
        let modes: Vec<ModeId> = assignment.iter().map(|(m, _)| m.clone()).collect();
        let target: Vec<u8> = assignment.iter().map(|(_, n)| *n).collect();
        let Some(kept) = self.split_by(&modes).remove(&target) else {
            return Ok(Projection {
                residual: None,
                probability: 0.0,
            });
        };
        let probability = kept.norm_sqr();
        if probability <= 0.0 {
            return Ok(Projection {
                residual: None,
                probability: 0.0,
            });
        }
        let mut residual = kept.normalized()?;
        residual.norm_tracking *= probability;
        Ok(Projection {
            residual: Some(residual),
            probability,
        })
    }

    /// Human-readable basis label, e.g. `L1:s, L2:g | H_L@bin1:1`.
    pub fn basis_label(&self, key: &BasisKey) -> String {
        let mem: Vec<String> = self
            .memories
            .iter()
            .enumerate()
            .map(|(i, m)| format!("{m}:{}", if key.excited(i) { 's' } else { 'g' }))
            .collect();
        let occ: Vec<String> = key
            .occupation
            .iter()
            .enumerate()
            .filter(|(_, &n)| n > 0)
            .map(|(i, n)| format!("{}:{n}", self.modes[i]))
            .collect();
        format!("{} | {}", mem.join(", "), occ.join(", "))
    }

    /// Inverse of [`JointState::basis_label`] against this state's registries.
    pub fn parse_basis_label(&self, label: &str) -> Result<BasisKey> {
        let bad = |why: &str| Error::Parse(format!("basis label `{label}`: {why}"));
        let (mem, occ) = label.split_once('|').ok_or_else(|| bad("missing `|`"))?;
        let mut key = BasisKey {
            memory: 0,
            occupation: vec![0; self.modes.len()],
        };
        for part in mem.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, level) = part.split_once(':').ok_or_else(|| bad("memory entry"))?;
            let i = self.require_memory(name)?;
            match level {
                "s" => key.memory |= 1 << i,
                "g" => {}
                _ => return Err(bad("memory level")),
            }
        }
        for part in occ.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (mode, n) = part.rsplit_once(':').ok_or_else(|| bad("mode entry"))?;
            let mode: ModeId = mode.parse()?;
            let i = self.require_mode(&mode)?;
            key.occupation[i] = n.parse().map_err(|_| bad("occupation"))?;
        }
        Ok(key)
    }
}

/// Result of [`JointState::project_occupation`]. `residual` is `None` for an
/// impossible outcome.
#[derive(Clone, Debug)]
pub struct Projection {
    pub residual: Option<JointState>,
    pub probability: f64,
}

/// Global-phase-insensitive `|<a|b>|^2` of the normalized inputs.
pub fn fidelity(a: &JointState, b: &JointState) -> Result<f64> {
    let (na, nb) = (a.norm_sqr(), b.norm_sqr());
    if na <= 0.0 || nb <= 0.0 {
        return Err(Error::ZeroState("fidelity with the zero state".into()));
    }
    Ok((a.inner(b)?.norm_sqr() / (na * nb)).min(1.0))
}

/// Weighted list of normalized pure states.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Ensemble {
    components: Vec<(f64, JointState)>,
}

impl Ensemble {
    /// Build a mixture. Component states are normalized; the weights carry
    /// the probabilities.
    pub fn mix(components: Vec<(f64, JointState)>) -> Result<Self> {
        let mut out = Vec::with_capacity(components.len());
        for (w, s) in components {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::Registry(format!("mixture weight {w} is not positive")));
            }
            out.push((w, s.normalized()?));
        }
        Ok(Ensemble { components: out })
    }

    pub fn pure(state: JointState) -> Result<Self> {
        Self::mix(vec![(1.0, state)])
    }

    pub fn components(&self) -> &[(f64, JointState)] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.components.iter().map(|(w, _)| w).sum()
    }

    pub fn memories(&self) -> &[String] {
        self.components.first().map_or(&[], |(_, s)| s.memories())
    }

    /// Rescale weights to sum to one.
    pub fn normalized(&self) -> Result<Self> {
        let total = self.total_weight();
        if total <= 0.0 {
            return Err(Error::ZeroState("empty ensemble".into()));
        }
        Ok(Ensemble {
            components: self
                .components
                .iter()
                .map(|(w, s)| (w / total, s.clone()))
                .collect(),
        })
    }

    /// Apply a state map to every component, keeping weights.
    pub fn map_states(&self, f: impl Fn(&JointState) -> Result<JointState>) -> Result<Self> {
        let components = self
            .components
            .iter()
            .map(|(w, s)| Ok((*w, f(s)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Ensemble { components })
    }

    /// Concatenate with another ensemble scaled by `scale`.
    pub fn extend_scaled(&mut self, other: &Ensemble, scale: f64) {
        if scale > 0.0 {
            self.components
                .extend(other.components.iter().map(|(w, s)| (w * scale, s.clone())));
        }
    }

    /// Enumerate joint occupations of `modes`. For each assignment returns the
    /// absolute probability and the conditional residual ensemble (normalized).
    pub fn outcomes(&self, modes: &[ModeId]) -> Result<Vec<(Vec<u8>, f64, Ensemble)>> {
        let mut groups: BTreeMap<Vec<u8>, Vec<(f64, JointState)>> = BTreeMap::new();
        for (w, s) in &self.components {
            for (assignment, residual) in s.split_by(modes) {
                let p = w * residual.norm_sqr();
                if p > 0.0 {
                    groups.entry(assignment).or_default().push((p, residual));
                }
            }
        }
        groups
            .into_iter()
            .map(|(assignment, comps)| {
                let total: f64 = comps.iter().map(|(p, _)| p).sum();
                let ens = Ensemble::mix(comps)?.normalized()?;
                Ok((assignment, total, ens))
            })
            .collect()
    }

    /// Condition on the measured `modes` satisfying `accept`. Returns the
    /// normalized conditional ensemble (`None` if impossible) and the total
    /// probability.
    pub fn condition(
        &self,
        modes: &[ModeId],
        accept: impl Fn(&[u8]) -> bool,
    ) -> Result<(Option<Ensemble>, f64)> {
        let mut kept = Ensemble::default();
        let mut probability = 0.0;
        for (assignment, p, ens) in self.outcomes(modes)? {
            if accept(&assignment) {
                probability += p;
                kept.extend_scaled(&ens, p);
            }
        }
        if kept.is_empty() {
            return Ok((None, 0.0));
        }
        Ok((Some(kept.normalized()?), probability))
    }

    /// Mixed-state fidelity `sum_k w_k |<target|psi_k>|^2 / sum_k w_k`.
    pub fn fidelity_to(&self, target: &JointState) -> Result<f64> {
        let total = self.total_weight();
        if total <= 0.0 {
            return Err(Error::ZeroState("empty ensemble".into()));
        }
        let mut acc = 0.0;
        for (w, s) in &self.components {
            acc += w * fidelity(s, target)?;
        }
        Ok(acc / total)
    }

    /// `tr(rho_self rho_other)` for the weight-normalized density matrices.
    pub fn overlap(&self, other: &Ensemble) -> Result<f64> {
        let norm = self.total_weight() * other.total_weight();
        if norm <= 0.0 {
            return Err(Error::ZeroState("empty ensemble".into()));
        }
        let mut acc = 0.0;
        for (wa, a) in &self.components {
            for (wb, b) in &other.components {
                acc += wa * wb * fidelity(a, b)?;
            }
        }
        Ok(acc / norm)
    }

    /// Squared Hilbert-Schmidt distance between the two density matrices.
    /// Zero exactly when the ensembles describe the same mixed state.
    pub fn hs_distance_sqr(&self, other: &Ensemble) -> Result<f64> {
        let d = self.overlap(self)? + other.overlap(other)? - 2.0 * other.overlap(self)?;
        Ok(d.max(0.0))
    }

    /// Weight of the subspace selected by `sector` (a basis-term predicate).
    pub fn sector_weight(&self, sector: impl Fn(&JointState, &BasisKey) -> bool) -> f64 {
        let total = self.total_weight();
        if total <= 0.0 {
            return 0.0;
        }
        self.components
            .iter()
            .map(|(w, s)| w * s.filter(|k| sector(s, k)).norm_sqr())
            .sum::<f64>()
            / total
    }

    /// Fidelity of the renormalized sector block to `target`.
    pub fn sector_fidelity(
        &self,
        sector: impl Fn(&JointState, &BasisKey) -> bool,
        target: &JointState,
    ) -> Result<f64> {
        let mut num = 0.0;
        let mut den = 0.0;
        for (w, s) in &self.components {
            let block = s.filter(|k| sector(s, k));
            let n = block.norm_sqr();
            if n > 0.0 {
                den += w * n;
                num += w * block.inner(target)?.norm_sqr() / target.norm_sqr();
            }
        }
        if den <= 0.0 {
            return Err(Error::ZeroState("empty sector".into()));
        }
        Ok(num / den)
    }
}

/// Linear map from input modes to combinations of output modes.
///
/// `matrix[(r, c)]` is the amplitude of output `r` in the image of input `c`.
/// Unitary maps satisfy `M†M = I` (isometries are allowed when the output
/// space is larger). Other maps must be contractions. `herald_probability` is
/// the per-photon success probability of a post-selected element; it is folded
/// into `norm_tracking` when the map is applied.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModeMap {
    inputs: Vec<ModeId>,
    outputs: Vec<ModeId>,
    matrix: DMatrix<C64>,
    unitary: bool,
    herald_probability: f64,
}

impl LinearModeMap {
    pub fn new(
        inputs: Vec<ModeId>,
        outputs: Vec<ModeId>,
        matrix: DMatrix<C64>,
        unitary: bool,
    ) -> Result<Self> {
        if matrix.nrows() != outputs.len() || matrix.ncols() != inputs.len() {
            return Err(Error::InvalidMap(format!(
                "matrix is {}x{}, expected {}x{}",
                matrix.nrows(),
                matrix.ncols(),
                outputs.len(),
                inputs.len()
            )));
        }
        for list in [&inputs, &outputs] {
            let set: BTreeSet<_> = list.iter().collect();
            if set.len() != list.len() {
                return Err(Error::InvalidMap("repeated mode".into()));
            }
        }
        let map = LinearModeMap {
            inputs,
            outputs,
            matrix,
            unitary,
            herald_probability: 1.0,
        };
        map.verify()?;
        Ok(map)
    }

    pub fn identity(modes: &[ModeId]) -> Result<Self> {
        let n = modes.len();
        Self::new(modes.to_vec(), modes.to_vec(), DMatrix::identity(n, n), true)
    }

    pub fn with_herald_probability(mut self, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) || p == 0.0 {
            return Err(Error::InvalidMap(format!("herald probability {p}")));
        }
        self.herald_probability = p;
        Ok(self)
    }

    pub fn inputs(&self) -> &[ModeId] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[ModeId] {
        &self.outputs
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn is_unitary(&self) -> bool {
        self.unitary
    }

    pub fn herald_probability(&self) -> f64 {
        self.herald_probability
    }

    /// Image coefficient of `input` on `output` (0 if either is absent).
    pub fn coefficient(&self, output: &ModeId, input: &ModeId) -> C64 {
        match (
            self.outputs.iter().position(|m| m == output),
            self.inputs.iter().position(|m| m == input),
        ) {
            (Some(r), Some(c)) => self.matrix[(r, c)],
            _ => C64::default(),
        }
    }

    /// Check unitarity (isometry) or sub-unitarity of the matrix.
    pub fn verify(&self) -> Result<()> {
        if self.unitary {
            let gram = self.matrix.adjoint() * &self.matrix;
            let id = DMatrix::<C64>::identity(gram.nrows(), gram.ncols());
            let err = (gram - id).iter().map(|z| z.norm()).fold(0.0, f64::max);
            if err > UNITARITY_TOL {
                return Err(Error::InvalidMap(format!(
                    "declared unitary but |M†M - I| = {err:e}"
                )));
            }
        } else if self.matrix.nrows() > 0 && self.matrix.ncols() > 0 {
            let sv = self.matrix.clone().singular_values();
            let max = sv.iter().copied().fold(0.0, f64::max);
            if max > 1.0 + UNITARITY_TOL {
                return Err(Error::InvalidMap(format!("singular value {max} exceeds 1")));
            }
        }
        Ok(())
    }

    /// The map `next ∘ self`. Inputs are `self`'s inputs plus any `next` inputs
    /// that `self` does not produce; outputs of `self` that `next` does not
    /// consume pass through unchanged.
    pub fn then(&self, next: &LinearModeMap) -> Result<Self> {
        let mut inputs = self.inputs.clone();
        for m in &next.inputs {
            if !self.outputs.contains(m) && !inputs.contains(m) {
                inputs.push(m.clone());
            }
        }
        let mut outputs = next.outputs.clone();
        for m in &self.outputs {
            if !next.inputs.contains(m) && !outputs.contains(m) {
                outputs.push(m.clone());
            }
        }
        let row = |m: &ModeId| outputs.iter().position(|o| o == m).expect("output listed");
        let mut product = DMatrix::<C64>::zeros(outputs.len(), inputs.len());
        let push_image = |col: usize, mode: &ModeId, amp: C64, product: &mut DMatrix<C64>| {
            match next.inputs.iter().position(|i| i == mode) {
                Some(c2) => {
                    for (r2, o) in next.outputs.iter().enumerate() {
                        product[(row(o), col)] += amp * next.matrix[(r2, c2)];
                    }
                }
                None => product[(row(mode), col)] += amp,
            }
        };
        for (col, x) in inputs.iter().enumerate() {
            match self.inputs.iter().position(|i| i == x) {
                Some(c1) => {
                    for (r1, o) in self.outputs.iter().enumerate() {
                        push_image(col, o, self.matrix[(r1, c1)], &mut product);
                    }
                }
                None => push_image(col, x, C64::new(1.0, 0.0), &mut product),
            }
        }
        let gram = product.adjoint() * &product;
        let id = DMatrix::<C64>::identity(inputs.len(), inputs.len());
        let unitary = (gram - id).iter().all(|z| z.norm() <= UNITARITY_TOL);
        let mut out = Self::new(inputs, outputs, product, unitary)?;
        out.herald_probability = self.herald_probability * next.herald_probability;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn vacuum_is_single_unit_term() {
        let s = JointState::vacuum(&[ModeId::h("L")], &["L1"]).unwrap();
        assert_eq!(s.len(), 1);
        let (k, a) = s.terms().next().unwrap();
        assert_eq!(k.memory, 0);
        assert_eq!(k.occupation, vec![0]);
        assert_eq!(*a, c(1.0, 0.0));
        assert_eq!(s.norm_sqr(), 1.0);
        assert_eq!(fidelity(&s, &s.clone()).unwrap(), 1.0);
    }

    #[test]
    fn vacuum_rejects_duplicates_and_empty() {
        assert!(JointState::vacuum(&[ModeId::h("L"), ModeId::h("L")], &["L1"]).is_err());
        assert!(JointState::vacuum(&[ModeId::h("L")], &["L1", "L1"]).is_err());
        assert!(JointState::vacuum::<&str>(&[], &[]).is_err());
        assert!(JointState::vacuum(&[ModeId::h("a b")], &["L1"]).is_err());
    }

    #[test]
    fn creation_is_bosonic() {
        let h = ModeId::h("L");
        let v = ModeId::v("L");
        let s = JointState::vacuum(&[h.clone(), v.clone()], &["L1"]).unwrap();
        let one = s.create_photon(&h).unwrap();
        assert_eq!(one.amplitude(&BasisKey { memory: 0, occupation: vec![1, 0] }), c(1.0, 0.0));
        let two = one.create_photon(&h).unwrap();
        assert_abs_diff_eq!(
            two.amplitude(&BasisKey { memory: 0, occupation: vec![2, 0] }).re,
            2f64.sqrt(),
            epsilon = 1e-15
        );
        let hv = s.create_photon(&h).unwrap().create_photon(&v).unwrap();
        let vh = s.create_photon(&v).unwrap().create_photon(&h).unwrap();
        assert_eq!(hv, vh);
        assert_eq!(hv.amplitude(&BasisKey { memory: 0, occupation: vec![1, 1] }), c(1.0, 0.0));
        assert!(matches!(s.create_photon(&ModeId::h("X")), Err(Error::UnknownMode(_))));
    }

    #[test]
    fn creation_past_max_photons_fails() {
        let h = ModeId::h("L");
        let mut s = JointState::vacuum(std::slice::from_ref(&h), &["L1"]).unwrap();
        for _ in 0..DEFAULT_MAX_PHOTONS {
            s = s.create_photon(&h).unwrap();
        }
        assert!(matches!(s.create_photon(&h), Err(Error::Truncation { .. })));
    }

    #[test]
    fn excite_memory_acts_as_raising_operator() {
        let s = JointState::vacuum(&[ModeId::h("L")], &["L1"]).unwrap();
        let e = s.excite_memory("L1").unwrap();
        assert_eq!(e.amplitude(&BasisKey { memory: 1, occupation: vec![0] }), c(1.0, 0.0));
        assert!(e.excite_memory("L1").unwrap().is_zero());

        let sup = s
            .scaled(c(0.5f64.sqrt(), 0.0))
            .add(&e.scaled(c(0.5f64.sqrt(), 0.0)))
            .unwrap();
        let raised = sup.excite_memory("L1").unwrap();
        assert_eq!(raised.len(), 1);
        assert_abs_diff_eq!(raised.norm_sqr(), 0.5, epsilon = 1e-15);
        assert!(s.excite_memory("Q").is_err());
    }

    #[test]
    fn tensor_products_and_norms() {
        let a = JointState::vacuum(&[ModeId::h("A")], &["A1"]).unwrap();
        let b = JointState::vacuum(&[ModeId::h("B")], &["B1"]).unwrap();
        let ab = a.tensor(&b).unwrap();
        let direct = JointState::vacuum(&[ModeId::h("A"), ModeId::h("B")], &["A1", "B1"]).unwrap();
        assert_eq!(fidelity(&ab, &direct).unwrap(), 1.0);
        let half = a.create_photon(&ModeId::h("A")).unwrap().scaled(c(0.5, 0.0));
        assert_abs_diff_eq!(half.tensor(&b).unwrap().norm_sqr(), 0.25, epsilon = 1e-12);
        assert!(a.tensor(&a).is_err());
    }

    #[test]
    fn memory_order_is_canonical_under_tensor() {
        let r = JointState::vacuum::<&str>(&[], &["R1"]).unwrap().excite_memory("R1").unwrap();
        let l = JointState::vacuum::<&str>(&[], &["L1"]).unwrap();
        let rl = r.tensor(&l).unwrap();
        assert_eq!(rl.memories(), &["L1".to_string(), "R1".to_string()]);
        let (k, _) = rl.terms().next().unwrap();
        assert!(rl.is_excited(k, "R1"));
        assert!(!rl.is_excited(k, "L1"));
    }

    #[test]
    fn fidelity_is_phase_insensitive_and_detects_orthogonality() {
        let h = ModeId::h("a");
        let v = ModeId::v("a");
        let s = JointState::vacuum(&[h.clone(), v.clone()], &["m"]).unwrap();
        let x = s.create_photon(&h).unwrap();
        let y = s.create_photon(&v).unwrap();
        assert_abs_diff_eq!(fidelity(&x, &x.scaled(C64::from_polar(1.0, 0.7))).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(fidelity(&x, &y).unwrap(), 0.0);
        assert!(fidelity(&x, &x.filter(|_| false)).is_err());
    }

    #[test]
    fn projection_onto_single_photon() {
        let h1 = ModeId::new("D", Polarization::H, TimeBin::Bin1);
        let s = JointState::vacuum(std::slice::from_ref(&h1), &["m"]).unwrap().create_photon(&h1).unwrap();
        let p = s.project_occupation(&[(h1.clone(), 1)]).unwrap();
        assert_eq!(p.probability, 1.0);
        let r = p.residual.unwrap();
        assert!(r.modes().is_empty());
        assert_eq!(r.len(), 1);

        let none = s.project_occupation(&[(h1, 0)]).unwrap();
        assert_eq!(none.probability, 0.0);
        assert!(none.residual.is_none());
    }

    #[test]
    fn projection_of_split_photon() {
        let a = ModeId::h("a");
        let b = ModeId::h("b");
        let vac = JointState::vacuum(&[a.clone(), b.clone()], &["m"]).unwrap();
        let s = vac
            .create_photon(&a)
            .unwrap()
            .add(&vac.create_photon(&b).unwrap())
            .unwrap()
            .normalized()
            .unwrap();
        let p = s.project_occupation(&[(a, 1)]).unwrap();
        assert_abs_diff_eq!(p.probability, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p.residual.unwrap().norm_tracking(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn basis_labels_round_trip() {
        let h = ModeId::new("L", Polarization::H, TimeBin::Bin1);
        let s = JointState::vacuum(&[h.clone(), ModeId::v("R")], &["L1", "R1"])
            .unwrap()
            .excite_memory("L1")
            .unwrap()
            .create_photon(&h)
            .unwrap();
        let (k, _) = s.terms().next().unwrap();
        let label = s.basis_label(k);
        assert_eq!(label, "L1:s, R1:g | H_L@bin1:1");
        assert_eq!(&s.parse_basis_label(&label).unwrap(), k);
        assert!(s.parse_basis_label("L1:x | ").is_err());
    }

    #[test]
    fn mode_labels_parse() {
        for s in ["H_L@bin1", "V_D2@bin2", "H_A", "V_some_path"] {
            let m: ModeId = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
        }
        assert!("X_L".parse::<ModeId>().is_err());
        assert!("H_L@bin3".parse::<ModeId>().is_err());
    }

    #[test]
    fn mode_map_rejects_non_unitary_claims() {
        let a = ModeId::h("a");
        let m = DMatrix::from_element(1, 1, c(0.5, 0.0));
        assert!(LinearModeMap::new(vec![a.clone()], vec![a.clone()], m.clone(), true).is_err());
        assert!(LinearModeMap::new(vec![a.clone()], vec![a.clone()], m, false).is_ok());
        let big = DMatrix::from_element(1, 1, c(1.5, 0.0));
        assert!(LinearModeMap::new(vec![a.clone()], vec![a], big, false).is_err());
    }

    #[test]
    fn mode_map_requires_registered_inputs() {
        let a = ModeId::h("a");
        let s = JointState::vacuum(std::slice::from_ref(&a), &["m"]).unwrap();
        let map = LinearModeMap::identity(&[ModeId::h("b")]).unwrap();
        assert!(matches!(s.apply_mode_map(&map), Err(Error::UnknownMode(_))));
    }

    #[test]
    fn remove_and_rename_memories() {
        let s = JointState::vacuum::<&str>(&[], &["A1", "L1"]).unwrap().excite_memory("L1").unwrap();
        let r = s.remove_ground_memories(&["A1"]).unwrap();
        assert_eq!(r.memories(), &["L1".to_string()]);
        assert!(s.remove_ground_memories(&["L1"]).is_err());
        let renamed = s.rename_memories(|m| m.replace('L', "Z")).unwrap();
        assert_eq!(renamed.memories(), &["A1".to_string(), "Z1".to_string()]);
        let (k, _) = renamed.terms().next().unwrap();
        assert!(renamed.is_excited(k, "Z1"));
    }

    #[test]
    fn ensemble_condition_trivial_cases() {
        let a = ModeId::h("a");
        let s = JointState::vacuum(std::slice::from_ref(&a), &["m"]).unwrap().create_photon(&a).unwrap();
        let ens = Ensemble::pure(s.clone()).unwrap();
        let (c_ens, p) = ens.condition(std::slice::from_ref(&a), |_| true).unwrap();
        assert_abs_diff_eq!(p, 1.0, epsilon = 1e-15);
        assert_eq!(c_ens.unwrap().len(), 1);
        let (none, p0) = ens.condition(&[a], |occ| occ[0] == 2).unwrap();
        assert!(none.is_none());
        assert_eq!(p0, 0.0);
        assert!(Ensemble::mix(vec![(0.0, s)]).is_err());
    }
}
