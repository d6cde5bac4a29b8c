//! Channel imperfections and detectors.
//!
//! Polarization noise is collective: one Jones matrix per channel, applied
//! identically to every time-bin on that path. Loss couples each mode to a
//! private environment mode that is traced out immediately.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{Ensemble, JointState, LinearModeMap, ModeId, Polarization, TimeBin, C64};

const UNITARY_TOL: f64 = 1e-12;

/// 2x2 unitary on the (H, V) polarization space. `m[r][c]` is the amplitude
/// of output polarization `r` for input polarization `c`.
/// Serialized as the bare matrix of `[re, im]` pairs; deserialization
/// rejects non-unitary input.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[C64; 2]; 2]", into = "[[C64; 2]; 2]")]
pub struct JonesUnitary {
    m: [[C64; 2]; 2],
}

impl TryFrom<[[C64; 2]; 2]> for JonesUnitary {
    type Error = Error;

    fn try_from(m: [[C64; 2]; 2]) -> Result<Self> {
        JonesUnitary::new(m)
    }
}

impl From<JonesUnitary> for [[C64; 2]; 2] {
    fn from(u: JonesUnitary) -> Self {
        u.m
    }
}

impl Default for JonesUnitary {
    fn default() -> Self {
        Self::identity()
    }
}

impl JonesUnitary {
    pub fn new(m: [[C64; 2]; 2]) -> Result<Self> {
        let u = JonesUnitary { m };
        let g = u.adjoint().mul(&u);
        let err = (g.m[0][0] - 1.0).norm()
            + (g.m[1][1] - 1.0).norm()
            + g.m[0][1].norm()
            + g.m[1][0].norm();
        if err > UNITARY_TOL {
            return Err(Error::InvalidMap(format!("Jones matrix is not unitary (err {err:e})")));
        }
        Ok(u)
    }

    pub fn identity() -> Self {
        let one = C64::new(1.0, 0.0);
        let zero = C64::default();
        JonesUnitary {
            m: [[one, zero], [zero, one]],
        }
    }

    /// Real rotation by `theta`: `H → cos θ H + sin θ V`.
    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        JonesUnitary {
            m: [
                [C64::new(c, 0.0), C64::new(-s, 0.0)],
                [C64::new(s, 0.0), C64::new(c, 0.0)],
            ],
        }
    }

    /// `H → F = (H+V)/√2`, `V → S = (H−V)/√2`.
    pub fn diagonal_basis_swap() -> Self {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        JonesUnitary {
            m: [
                [C64::new(r, 0.0), C64::new(r, 0.0)],
                [C64::new(r, 0.0), C64::new(-r, 0.0)],
            ],
        }
    }

    pub fn matrix(&self) -> [[C64; 2]; 2] {
        self.m
    }

    pub fn adjoint(&self) -> Self {
        let m = self.m;
        JonesUnitary {
            m: [[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]],
        }
    }

    pub fn mul(&self, rhs: &JonesUnitary) -> Self {
        let mut m = [[C64::default(); 2]; 2];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = self.m[r][0] * rhs.m[0][c] + self.m[r][1] * rhs.m[1][c];
            }
        }
        JonesUnitary { m }
    }

    pub fn determinant(&self) -> C64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    /// `U / √det U`, the polarization-changing part with the common phase
    /// removed.
    pub fn special_part(&self) -> Self {
        let g = self.determinant().sqrt().inv();
        JonesUnitary {
            m: self.m.map(|row| row.map(|z| z * g)),
        }
    }

    /// Haar-random element of U(2).
    pub fn haar<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        let phase = rng.random_range(-PI..PI);
        Self::from_quaternion([q[0] / n, q[1] / n, q[2] / n, q[3] / n], phase, 1.0)
    }

    /// `e^{i s φ} (cos(sθ) I + i sin(sθ) n·σ)` for the unit quaternion
    /// `(cos θ, sin θ n)`.
    fn from_quaternion(q: [f64; 4], phase: f64, s: f64) -> Self {
        let theta = q[0].clamp(-1.0, 1.0).acos();
        let sin = theta.sin();
        let axis = if sin.abs() < 1e-300 {
            [0.0, 0.0, 1.0]
        } else {
            [q[1] / sin, q[2] / sin, q[3] / sin]
        };
        let (st, ct) = (s * theta).sin_cos();
        let i = C64::new(0.0, 1.0);
        let g = C64::from_polar(1.0, s * phase);
        let [nx, ny, nz] = axis;
        // n·σ = [[nz, nx - i ny], [nx + i ny, -nz]]
        let m = [
            [g * (ct + i * st * nz), g * (i * st * C64::new(nx, -ny))],
            [g * (i * st * C64::new(nx, ny)), g * (ct - i * st * nz)],
        ];
        JonesUnitary { m }
    }

    /// Map acting on both polarizations of every `bin` on `path`.
    pub fn as_mode_map(&self, path: &str, bins: &[TimeBin]) -> Result<LinearModeMap> {
        let mut modes = Vec::new();
        for &bin in bins {
            for pol in Polarization::BOTH {
                modes.push(ModeId::new(path, pol, bin));
            }
        }
        let n = modes.len();
        let mut m = DMatrix::zeros(n, n);
        for b in 0..bins.len() {
            for r in 0..2 {
                for c in 0..2 {
                    m[(2 * b + r, 2 * b + c)] = self.m[r][c];
                }
            }
        }
        LinearModeMap::new(modes.clone(), modes, m, true)
    }
}

/// Noise realization sampler. `strength` 0 gives the identity, 1 a
/// Haar-uniform unitary; in between the Haar sample is pulled back along
/// the geodesic from the identity.
pub fn sample_jones<R: Rng + ?Sized>(rng: &mut R, strength: f64) -> Result<JonesUnitary> {
    if !(0.0..=1.0).contains(&strength) {
        return Err(Error::config("noise_strength", format!("{strength} not in [0, 1]")));
    }
    let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
    let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    let phase = rng.random_range(-PI..PI);
    Ok(JonesUnitary::from_quaternion(
        [q[0] / n, q[1] / n, q[2] / n, q[3] / n],
        phase,
        strength,
    ))
}

fn bins_on_path(state: &JointState, path: &str) -> Vec<TimeBin> {
    let mut bins: Vec<TimeBin> = state
        .modes()
        .iter()
        .filter(|m| m.path == path)
        .map(|m| m.bin)
        .collect();
    bins.sort();
    bins.dedup();
    bins
}

/// Apply the same Jones matrix to every time-bin on `path`.
pub fn collective_pol_unitary(state: &JointState, path: &str, u: &JonesUnitary) -> Result<JointState> {
    let bins = bins_on_path(state, path);
    if bins.is_empty() {
        return Err(Error::UnknownMode(format!("no modes on path `{path}`")));
    }
    let map = u.as_mode_map(path, &bins)?;
    state.with_modes(map.inputs())?.apply_mode_map(&map)
}

/// Every photon on `path` picks up `e^{iφ}`.
pub fn path_phase(state: &JointState, path: &str, phi: f64) -> Result<JointState> {
    let modes: Vec<ModeId> = state.modes().iter().filter(|m| m.path == path).cloned().collect();
    if modes.is_empty() {
        return Err(Error::UnknownMode(format!("no modes on path `{path}`")));
    }
    let diag = nalgebra::DVector::from_element(modes.len(), C64::from_polar(1.0, phi));
    let map = LinearModeMap::new(modes.clone(), modes, DMatrix::from_diagonal(&diag), true)?;
    state.apply_mode_map(&map)
}

fn env_mode(mode: &ModeId) -> ModeId {
    mode.with_path(format!("env.{}", mode.path))
}

/// Independent photon loss with transmittance `t` on `path`.
pub fn loss(ensemble: &Ensemble, path: &str, t: f64) -> Result<Ensemble> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::config("transmittance", format!("{t} not in [0, 1]")));
    }
    if t == 1.0 {
        return Ok(ensemble.clone());
    }
    let (keep, drop) = (t.sqrt(), (1.0 - t).sqrt());
    let mut env_modes = Vec::new();
    let coupled = ensemble.map_states(|s| {
        let mut s = s.clone();
        for mode in s.modes().to_vec().iter().filter(|m| m.path == path) {
            let env = env_mode(mode);
            let m = DMatrix::from_column_slice(2, 1, &[C64::new(keep, 0.0), C64::new(drop, 0.0)]);
            let map = LinearModeMap::new(vec![mode.clone()], vec![mode.clone(), env], m, true)?;
            s = s.apply_mode_map(&map)?;
        }
        Ok(s)
    })?;
    for (_, s) in coupled.components() {
        for m in s.modes().iter().filter(|m| m.path == format!("env.{path}")) {
            if !env_modes.contains(m) {
                env_modes.push(m.clone());
            }
        }
    }
    let mut out = Ensemble::default();
    for (_, p, ens) in coupled.outcomes(&env_modes)? {
        out.extend_scaled(&ens, p);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    Threshold,
    NumberResolving,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorModel {
    pub kind: DetectorKind,
    #[serde(default = "one")]
    pub efficiency: f64,
    #[serde(default)]
    pub dark_count_prob: f64,
}

fn one() -> f64 {
    1.0
}

impl DetectorModel {
    pub fn ideal(kind: DetectorKind) -> Self {
        DetectorModel {
            kind,
            efficiency: 1.0,
            dark_count_prob: 0.0,
        }
    }

    pub fn validate(&self, key: &str) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::config(format!("{key}.efficiency"), "must be in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.dark_count_prob) {
            return Err(Error::config(format!("{key}.dark_count_prob"), "must be in [0, 1]"));
        }
        Ok(())
    }

    /// Distribution of reported counts for `n` incident photons.
    fn readout(&self, n: u32) -> Vec<(u32, f64)> {
        let (eta, d) = (self.efficiency, self.dark_count_prob);
        let mut out = Vec::new();
        match self.kind {
            DetectorKind::Threshold => {
                let silent = (1.0 - eta).powi(n as i32) * (1.0 - d);
                out.push((0, silent));
                out.push((1, 1.0 - silent));
            }
            DetectorKind::NumberResolving => {
                for k in 0..=n {
                    let p = binomial(n, k) * eta.powi(k as i32) * (1.0 - eta).powi((n - k) as i32);
                    out.push((k, p * (1.0 - d)));
                    out.push((k + 1, p * d));
                }
            }
        }
        let mut merged: BTreeMap<u32, f64> = BTreeMap::new();
        for (k, p) in out {
            if p > 0.0 {
                *merged.entry(k).or_default() += p;
            }
        }
        merged.into_iter().collect()
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

/// Counts per (detector, time-bin). Only non-zero entries are stored.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClickPattern(BTreeMap<(String, TimeBin), u32>);

impl ClickPattern {
    pub fn from_counts<S: Into<String>>(counts: impl IntoIterator<Item = (S, TimeBin, u32)>) -> Self {
        ClickPattern(
            counts
                .into_iter()
                .filter(|(_, _, n)| *n > 0)
                .map(|(d, b, n)| ((d.into(), b), n))
                .collect(),
        )
    }

    pub fn count(&self, detector: &str, bin: TimeBin) -> u32 {
        self.0.get(&(detector.to_string(), bin)).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u32 {
        self.0.values().sum()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, TimeBin, u32)> {
        self.0.iter().map(|((d, b), n)| (d.as_str(), *b, *n))
    }

    /// Total count in one detector across bins.
    pub fn detector_total(&self, detector: &str) -> u32 {
        self.entries().filter(|(d, _, _)| *d == detector).map(|(_, _, n)| n).sum()
    }
}

impl fmt::Display for ClickPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("none");
        }
        let parts: Vec<String> = self
            .entries()
            .map(|(d, b, n)| match b {
                TimeBin::None => format!("{d}:{n}"),
                b => format!("{d}@{b}:{n}"),
            })
            .collect();
        f.write_str(&parts.join(" "))
    }
}

/// Detectors with the modes each one sees.
#[derive(Clone, Debug, Default)]
pub struct DetectorBank {
    detectors: Vec<(String, DetectorModel, Vec<ModeId>)>,
}

impl DetectorBank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_detector(mut self, label: &str, model: DetectorModel, modes: Vec<ModeId>) -> Result<Self> {
        model.validate(label)?;
        for (other, _, m) in &self.detectors {
            if other == label {
                return Err(Error::Registry(format!("detector `{label}` listed twice")));
            }
            if let Some(dup) = modes.iter().find(|x| m.contains(x)) {
                return Err(Error::Registry(format!("mode `{dup}` assigned to two detectors")));
            }
        }
        self.detectors.push((label.to_string(), model, modes));
        Ok(self)
    }

    pub fn modes(&self) -> Vec<ModeId> {
        self.detectors.iter().flat_map(|(_, _, m)| m.iter().cloned()).collect()
    }

    /// Readout channels: one per (detector, bin) pair, with indices into
    /// [`DetectorBank::modes`].
    fn channels(&self) -> Vec<(String, TimeBin, DetectorModel, Vec<usize>)> {
        let mut out: Vec<(String, TimeBin, DetectorModel, Vec<usize>)> = Vec::new();
        let mut idx = 0;
        for (label, model, modes) in &self.detectors {
            for m in modes {
                match out.iter_mut().find(|(l, b, _, _)| l == label && *b == m.bin) {
                    Some(ch) => ch.3.push(idx),
                    None => out.push((label.clone(), m.bin, *model, vec![idx])),
                }
                idx += 1;
            }
        }
        out
    }
}

/// One click pattern with its probability and conditional (normalized)
/// residual ensemble.
#[derive(Clone, Debug)]
pub struct DetectionOutcome {
    pub pattern: ClickPattern,
    pub probability: f64,
    pub ensemble: Ensemble,
}

/// Exhaustive detection: every click pattern with its probability and the
/// conditional state of everything not measured.
pub fn detect(ensemble: &Ensemble, bank: &DetectorBank, measured_paths: &[&str]) -> Result<Vec<DetectionOutcome>> {
    let modes = bank.modes();
    for (_, s) in ensemble.components() {
        if let Some(m) = s
            .modes()
            .iter()
            .find(|m| measured_paths.contains(&m.path.as_str()) && !modes.contains(m))
        {
            return Err(Error::UnknownMode(format!("measured mode `{m}` has no detector")));
        }
    }
    let channels = bank.channels();
    let mut patterns: BTreeMap<ClickPattern, (f64, Ensemble)> = BTreeMap::new();
    for (assignment, p, ens) in ensemble.outcomes(&modes)? {
        let mut readouts: Vec<(Vec<u32>, f64)> = vec![(Vec::new(), 1.0)];
        for (_, _, model, idx) in &channels {
            let n: u32 = idx.iter().map(|&i| u32::from(assignment[i])).sum();
            let dist = model.readout(n);
            readouts = readouts
                .into_iter()
                .flat_map(|(counts, q)| {
                    dist.iter().map(move |&(k, r)| {
                        let mut c = counts.clone();
                        c.push(k);
                        (c, q * r)
                    })
                })
                .collect();
        }
        for (counts, q) in readouts {
            let pattern = ClickPattern::from_counts(
                channels
                    .iter()
                    .zip(&counts)
                    .map(|((label, bin, _, _), &k)| (label.clone(), *bin, k)),
            );
            let entry = patterns.entry(pattern).or_insert_with(|| (0.0, Ensemble::default()));
            entry.0 += p * q;
            entry.1.extend_scaled(&ens, p * q);
        }
    }
    patterns
        .into_iter()
        .map(|(pattern, (probability, ens))| {
            Ok(DetectionOutcome {
                pattern,
                probability,
                ensemble: ens.normalized()?,
            })
        })
        .collect()
}

/// Draw one outcome with probability proportional to its weight.
pub fn sample_outcome<'a, R: Rng + ?Sized>(outcomes: &'a [DetectionOutcome], rng: &mut R) -> Option<&'a DetectionOutcome> {
    let total: f64 = outcomes.iter().map(|o| o.probability).sum();
    if total <= 0.0 {
        return None;
    }
    let mut u = rng.random::<f64>() * total;
    for o in outcomes {
        if u < o.probability {
            return Some(o);
        }
        u -= o.probability;
    }
    outcomes.last()
}
