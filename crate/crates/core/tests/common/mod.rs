//! Independent reference calculations shared by the integration tests.
//!
//! Nothing here uses the simulator's state engine: the link oracle pushes
//! single-photon amplitudes through the optics by hand and combines them
//! into two-photon amplitudes, and the chain oracle sums the waiting-time
//! series directly.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64 as C;

/// Memories in the order L1, L2, R1, R2.
pub const MEMORIES: [&str; 4] = ["L1", "L2", "R1", "R2"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct OutMode {
    pub detector: u8,
    pub pol_h: bool,
    pub bin: u8,
}

/// Single-photon amplitude from memory `m` to an output mode.
///
/// Encoder: `H → (H1 − H2)/√2`, `V → (V1 + V2)/√2`. Beam splitter: the
/// left arm reaches D1 by reflection (`i`) and D2 by transmission, the
/// right arm the other way round.
fn transfer(m: usize, out: OutMode) -> C {
    let pol_h = m.is_multiple_of(2);
    if pol_h != out.pol_h {
        return C::new(0.0, 0.0);
    }
    let enc = match (pol_h, out.bin) {
        (true, 1) => FRAC_1_SQRT_2,
        (true, _) => -FRAC_1_SQRT_2,
        (false, _) => FRAC_1_SQRT_2,
    };
    let left = m < 2;
    let bs = match (left, out.detector) {
        (true, 1) | (false, 2) => C::new(0.0, FRAC_1_SQRT_2),
        _ => C::new(FRAC_1_SQRT_2, 0.0),
    };
    bs * enc
}

fn all_modes() -> Vec<OutMode> {
    let mut v = Vec::new();
    for detector in [1, 2] {
        for pol_h in [true, false] {
            for bin in [1, 2] {
                v.push(OutMode { detector, pol_h, bin });
            }
        }
    }
    v
}

/// The six memory pairs, each an index pair into [`MEMORIES`].
pub fn pairs() -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for a in 0..4 {
        for b in a + 1..4 {
            v.push((a, b));
        }
    }
    v
}

/// Threshold-detector pattern label in the simulator's display format.
fn pattern_label(x: OutMode, y: OutMode) -> String {
    let mut clicks: Vec<(u8, u8)> = vec![(x.detector, x.bin), (y.detector, y.bin)];
    clicks.sort();
    clicks.dedup();
    clicks
        .iter()
        .map(|(d, b)| format!("D{d}@bin{b}:1"))
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Clone, Debug)]
pub struct OraclePattern {
    pub label: String,
    pub accepted: bool,
    pub same_detector: bool,
    pub probability: f64,
    /// Unnormalized density matrix over the six memory pairs.
    pub rho: [[C; 6]; 6],
}

impl OraclePattern {
    /// Weight of `(|L1L2> + sign |R1R2>)/√2` in the normalized state.
    pub fn pair_weight(&self, sign: f64) -> f64 {
        let ll = pairs().iter().position(|&p| p == (0, 1)).unwrap();
        let rr = pairs().iter().position(|&p| p == (2, 3)).unwrap();
        let r = &self.rho;
        let v = 0.5 * (r[ll][ll] + r[rr][rr] + sign * (r[ll][rr] + r[rr][ll]));
        v.re / self.probability
    }
}

/// Every two-click outcome of a noiseless link with emission probability
/// `p`, two-photon terms only.
pub fn link_oracle(p: f64) -> Vec<OraclePattern> {
    let modes = all_modes();
    let pr = pairs();
    let mut by_label: BTreeMap<String, OraclePattern> = BTreeMap::new();
    for (i, &x) in modes.iter().enumerate() {
        for &y in &modes[i..] {
            let mut psi = [C::new(0.0, 0.0); 6];
            for (k, &(a, b)) in pr.iter().enumerate() {
                let amp = if x == y {
                    transfer(a, x) * transfer(b, x) * 2f64.sqrt()
                } else {
                    transfer(a, x) * transfer(b, y) + transfer(a, y) * transfer(b, x)
                };
                psi[k] = amp * p;
            }
            let label = pattern_label(x, y);
            let clicks = label.split(' ').count();
            let entry = by_label.entry(label.clone()).or_insert_with(|| OraclePattern {
                label: label.clone(),
                accepted: clicks == 2 && x.bin != y.bin,
                same_detector: x.detector == y.detector,
                probability: 0.0,
                rho: [[C::new(0.0, 0.0); 6]; 6],
            });
            for r in 0..6 {
                for c in 0..6 {
                    entry.rho[r][c] += psi[r] * psi[c].conj();
                }
                entry.probability += psi[r].norm_sqr();
            }
        }
    }
    by_label.into_values().collect()
}

/// Accepted union with the heralded π phase on `R1R2` for same-detector
/// patterns: `(acceptance, correct weight, four error weights)`.
pub fn link_union(p: f64) -> (f64, f64, [f64; 4]) {
    let rr = pairs().iter().position(|&q| q == (2, 3)).unwrap();
    let mut rho = [[C::new(0.0, 0.0); 6]; 6];
    let mut total = 0.0;
    for pat in link_oracle(p).into_iter().filter(|o| o.accepted) {
        let flip = |k: usize| if pat.same_detector && k == rr { -1.0 } else { 1.0 };
        for (r, row) in rho.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                *cell += pat.rho[r][c] * flip(r) * flip(c);
            }
        }
        total += pat.probability;
    }
    let pr = pairs();
    let idx = |a, b| pr.iter().position(|&q| q == (a, b)).unwrap();
    let (ll, rr) = (idx(0, 1), idx(2, 3));
    let correct = 0.5 * (rho[ll][ll] + rho[rr][rr] + rho[ll][rr] + rho[rr][ll]).re / total;
    let errors = [idx(0, 2), idx(0, 3), idx(1, 2), idx(1, 3)].map(|k| rho[k][k].re / total);
    (total, correct, errors)
}

/// Mean periods until a two-segment chain holds an end-to-end pair: each
/// round waits for the later of two geometric(q) links, then one swap
/// succeeds with probability `s`; a failed swap restarts both links.
/// Evaluated by summing `P(max > t)` term by term.
pub fn two_segment_mean(q: f64, s: f64) -> f64 {
    let mut mean_max = 0.0;
    let mut t = 0u64;
    loop {
        let p_le = 1.0 - (1.0 - q).powi(t as i32);
        let tail = 1.0 - p_le * p_le;
        mean_max += tail;
        if tail < 1e-16 {
            break;
        }
        t += 1;
    }
    mean_max / s
}

/// Closed form of [`two_segment_mean`].
pub fn two_segment_mean_closed(q: f64, s: f64) -> f64 {
    (2.0 / q - 1.0 / (1.0 - (1.0 - q).powi(2))) / s
}
