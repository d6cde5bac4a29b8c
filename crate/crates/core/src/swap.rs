//! Entanglement swapping at a station holding the inner nodes of two links.
//!
//! The inner memories are read out into photons, interfered on the fixed
//! four-port network and detected with number-resolving detectors. The
//! station has no channel between retrieval and detection, so no noise
//! enters here.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{Ensemble, JointState, LinearModeMap, ModeId};
use crate::link::{node_memories, psi_plus, LEFT, RIGHT};
use crate::noise::{detect, loss, ClickPattern, DetectorBank, DetectorKind, DetectorModel};
use crate::optics::{check_swap_network, swap_network, SwapPorts};

/// Move the excitations of `node` into photons: `<node>1 → H`, `<node>2 → V`.
pub fn retrieve(state: &JointState, node: &str) -> Result<JointState> {
    let [m1, m2] = node_memories(node);
    state
        .retrieve_into(&m1, &ModeId::h(node))?
        .retrieve_into(&m2, &ModeId::v(node))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwapLevel {
    /// Inputs may carry the error components of a fresh link; only
    /// coincidences are kept.
    Elementary,
    /// Inputs are error-free pair states; same-detector double hits are
    /// kept as well and sign-corrected.
    Higher,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwapHerald {
    Rejected,
    /// One photon at each of `D1, D2` or of `D3, D4`.
    Coincidence,
    /// Both photons at one detector.
    DoubleHit,
}

#[derive(Clone, Debug)]
pub struct SwapStation {
    inner_left: String,
    inner_right: String,
    ports: SwapPorts,
    network: LinearModeMap,
    pub detector: DetectorModel,
    pub retrieval_efficiency: f64,
}

impl SwapStation {
    /// Station for inner nodes `a` (left link) and `b` (right link).
    pub fn new(a: &str, b: &str) -> Result<Self> {
        let ports = SwapPorts::default();
        let network = swap_network(a, b, &ports)?;
        Ok(Self::assemble(a, b, ports, network))
    }

    /// Station with an arbitrary network on the retrieval modes of `a` and
    /// `b`, skipping the construction checks.
    pub fn with_network(a: &str, b: &str, ports: SwapPorts, network: LinearModeMap) -> Result<Self> {
        let expected = [ModeId::h(a), ModeId::v(a), ModeId::h(b), ModeId::v(b)];
        if network.inputs() != expected || network.outputs() != ports.modes() {
            return Err(Error::InvalidMap("network does not act on the station modes".into()));
        }
        Ok(Self::assemble(a, b, ports, network))
    }

    fn assemble(a: &str, b: &str, ports: SwapPorts, network: LinearModeMap) -> Self {
        SwapStation {
            inner_left: a.to_string(),
            inner_right: b.to_string(),
            ports,
            network,
            detector: DetectorModel::ideal(DetectorKind::NumberResolving),
            retrieval_efficiency: 1.0,
        }
    }

    pub fn network(&self) -> &LinearModeMap {
        &self.network
    }

    pub fn ports(&self) -> &SwapPorts {
        &self.ports
    }

    /// Re-run the construction checks on the installed network.
    pub fn check(&self) -> Result<()> {
        check_swap_network(&self.network, &self.inner_left, &self.inner_right, &self.ports)
    }

    fn bank(&self) -> Result<DetectorBank> {
        let mut bank = DetectorBank::new();
        for (label, mode) in self.ports.detectors.iter().zip(self.ports.modes()) {
            bank = bank.with_detector(label, self.detector, vec![mode])?;
        }
        Ok(bank)
    }

    pub fn classify(&self, pattern: &ClickPattern) -> SwapHerald {
        let d = &self.ports.detectors;
        let entries: Vec<_> = pattern.entries().collect();
        match entries.as_slice() {
            [(x, _, 1), (y, _, 1)] => {
                let pair = |p: &str, q: &str| (*x == p && *y == q) || (*x == q && *y == p);
                if pair(&d[0], &d[1]) || pair(&d[2], &d[3]) {
                    SwapHerald::Coincidence
                } else {
                    SwapHerald::Rejected
                }
            }
            [(_, _, 2)] => SwapHerald::DoubleHit,
            _ => SwapHerald::Rejected,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SwapOutcome {
    pub herald: SwapHerald,
    pub accepted: bool,
    pub pattern: ClickPattern,
    pub probability: f64,
    /// Conditional memory ensemble of the two outer nodes, sign-corrected
    /// when accepted.
    pub ensemble: Ensemble,
    pub fidelity_to_target: f64,
}

#[derive(Clone, Debug)]
pub struct SwapReport {
    pub outer_left: String,
    pub outer_right: String,
    pub outcomes: Vec<SwapOutcome>,
    pub acceptance_probability: f64,
}

impl SwapReport {
    pub fn accepted(&self) -> impl Iterator<Item = &SwapOutcome> {
        self.outcomes.iter().filter(|o| o.accepted)
    }

    /// Outer-node ensemble over every accepted pattern.
    pub fn accepted_ensemble(&self) -> Result<Ensemble> {
        let mut out = Ensemble::default();
        for o in self.accepted() {
            out.extend_scaled(&o.ensemble, o.probability);
        }
        if out.is_empty() {
            return Err(Error::ZeroState("no accepted swap pattern".into()));
        }
        out.normalized()
    }

    /// Fidelity of the accepted ensemble to the ideal outer pair state.
    pub fn fidelity(&self) -> Result<f64> {
        self.accepted_ensemble()?
            .fidelity_to(&psi_plus(&self.outer_left, &self.outer_right)?)
    }
}

fn check_labels(ens: &Ensemble, outer: &str, inner: &str, side: &str) -> Result<()> {
    let mut want: Vec<String> = node_memories(outer).into_iter().chain(node_memories(inner)).collect();
    want.sort();
    for (_, s) in ens.components() {
        let mut have = s.memories().to_vec();
        have.sort();
        if have != want {
            return Err(Error::Registry(format!(
                "{side} link holds memories {have:?}, expected {want:?}"
            )));
        }
    }
    if ens.is_empty() {
        return Err(Error::ZeroState(format!("{side} link ensemble is empty")));
    }
    Ok(())
}

/// Swap the link `outer_left–a` with the link `b–outer_right`.
pub fn run_swap(
    station: &SwapStation,
    left: &Ensemble,
    right: &Ensemble,
    outer_left: &str,
    outer_right: &str,
    level: SwapLevel,
) -> Result<SwapReport> {
    let (a, b) = (station.inner_left.as_str(), station.inner_right.as_str());
    check_labels(left, outer_left, a, "left")?;
    check_labels(right, outer_right, b, "right")?;
    if !(0.0..=1.0).contains(&station.retrieval_efficiency) {
        return Err(Error::config("retrieval_efficiency", "must be in [0, 1]"));
    }

    let mut joint = Vec::with_capacity(left.len() * right.len());
    for (wl, sl) in left.components() {
        for (wr, sr) in right.components() {
            let s = retrieve(&retrieve(&sl.tensor(sr)?, a)?, b)?;
            joint.push((wl * wr, s));
        }
    }
    let mut ens = Ensemble::mix(joint)?.normalized()?;
    for node in [a, b] {
        ens = loss(&ens, node, station.retrieval_efficiency)?;
    }
    let net = &station.network;
    let ens = ens.map_states(|s| s.with_modes(net.inputs())?.apply_mode_map(net))?;

    let inner: Vec<String> = node_memories(a).into_iter().chain(node_memories(b)).collect();
    let outer_right_pair = node_memories(outer_right);
    let target = psi_plus(outer_left, outer_right)?;
    let detectors: Vec<&str> = station.ports.detectors.iter().map(String::as_str).collect();
    let mut outcomes = Vec::new();
    for o in detect(&ens, &station.bank()?, &detectors)? {
        let herald = station.classify(&o.pattern);
        let accepted = matches!(
            (herald, level),
            (SwapHerald::Coincidence, _) | (SwapHerald::DoubleHit, SwapLevel::Higher)
        );
        let mut ensemble = o
            .ensemble
            .map_states(|s| s.prune_modes().remove_ground_memories(&inner))?;
        if accepted && herald == SwapHerald::DoubleHit {
            ensemble = ensemble.map_states(|s| s.memory_phase(&outer_right_pair, PI))?;
        }
        let fidelity_to_target = ensemble.fidelity_to(&target)?;
        outcomes.push(SwapOutcome {
            herald,
            accepted,
            pattern: o.pattern,
            probability: o.probability,
            ensemble,
            fidelity_to_target,
        });
    }
    let acceptance_probability = outcomes.iter().filter(|o| o.accepted).map(|o| o.probability).sum();
    Ok(SwapReport {
        outer_left: outer_left.to_string(),
        outer_right: outer_right.to_string(),
        outcomes,
        acceptance_probability,
    })
}

/// Rename memories `<from>1, <from>2` to `<to>1, <to>2`.
pub fn relabel(ens: &Ensemble, from: &str, to: &str) -> Result<Ensemble> {
    let pairs: Vec<(String, String)> = node_memories(from).into_iter().zip(node_memories(to)).collect();
    ens.map_states(|s| {
        s.rename_memories(|m| {
            pairs
                .iter()
                .find(|(f, _)| f == m)
                .map_or_else(|| m.to_string(), |(_, t)| t.clone())
        })
    })
}

/// Swap two adjacent links that are both labelled with outer nodes `L`
/// and `R`: the right end of `left` and the left end of `right` become the
/// station's inner nodes, and the result again spans `L` to `R`.
pub fn swap_links(station: &SwapStation, left: &Ensemble, right: &Ensemble, level: SwapLevel) -> Result<SwapReport> {
    let l = relabel(left, RIGHT, &station.inner_left)?;
    let r = relabel(right, LEFT, &station.inner_right)?;
    run_swap(station, &l, &r, LEFT, RIGHT, level)
}

/// First-level swap: coincidences only.
pub fn run_elementary_swap(
    station: &SwapStation,
    left: &Ensemble,
    right: &Ensemble,
    outer_left: &str,
    outer_right: &str,
) -> Result<SwapReport> {
    run_swap(station, left, right, outer_left, outer_right, SwapLevel::Elementary)
}

/// Swap of two error-free pair states.
pub fn run_higher_swap(
    station: &SwapStation,
    left: &Ensemble,
    right: &Ensemble,
    outer_left: &str,
    outer_right: &str,
) -> Result<SwapReport> {
    run_swap(station, left, right, outer_left, outer_right, SwapLevel::Higher)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link::{pair_state, reference_link_mixture};
    use approx::assert_abs_diff_eq;

    fn pure(s: JointState) -> Ensemble {
        Ensemble::pure(s).unwrap()
    }

    fn excited(memories: &[String], on: &[&str]) -> JointState {
        let mut s = JointState::vacuum(&[], memories).unwrap();
        for m in on {
            s = s.excite_memory(m).unwrap();
        }
        s
    }

    #[test]
    fn retrieval_maps_excitations_to_photons() {
        let mems = node_memories("A");
        let both = retrieve(&excited(&mems, &["A1", "A2"]), "A").unwrap();
        let key = both.parse_basis_label("A1:g, A2:g | H_A:1, V_A:1").unwrap();
        assert_abs_diff_eq!(both.amplitude(&key).norm(), 1.0, epsilon = 1e-15);
        let one = retrieve(&excited(&mems, &["A1"]), "A").unwrap();
        let key = one.parse_basis_label("A1:g, A2:g | H_A:1").unwrap();
        assert_abs_diff_eq!(one.amplitude(&key).norm(), 1.0, epsilon = 1e-15);
        let none = retrieve(&excited(&mems, &[]), "A").unwrap();
        assert!(none.terms().all(|(k, _)| k.photons() == 0));
    }

    #[test]
    fn ideal_elementary_swap() {
        let st = SwapStation::new("A", "B").unwrap();
        let left = pure(psi_plus("L", "A").unwrap());
        let right = pure(psi_plus("B", "R").unwrap());
        let r = run_elementary_swap(&st, &left, &right, "L", "R").unwrap();
        assert_abs_diff_eq!(r.acceptance_probability, 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(r.fidelity().unwrap(), 1.0, epsilon = 1e-12);
        for o in r.accepted() {
            assert_eq!(o.herald, SwapHerald::Coincidence);
            assert_abs_diff_eq!(o.fidelity_to_target, 1.0, epsilon = 1e-12);
        }
        let total: f64 = r.outcomes.iter().map(|o| o.probability).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn mixture_swap_is_one_in_thirty_six() {
        let st = SwapStation::new("A", "B").unwrap();
        let left = reference_link_mixture("L", "A").unwrap();
        let right = reference_link_mixture("B", "R").unwrap();
        let r = run_elementary_swap(&st, &left, &right, "L", "R").unwrap();
        assert_abs_diff_eq!(r.acceptance_probability, 1.0 / 36.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.fidelity().unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn higher_swap_accepts_half() {
        let st = SwapStation::new("A", "B").unwrap();
        let left = pure(psi_plus("L", "A").unwrap());
        let right = pure(psi_plus("B", "R").unwrap());
        let r = run_higher_swap(&st, &left, &right, "L", "R").unwrap();
        assert_abs_diff_eq!(r.acceptance_probability, 0.5, epsilon = 1e-12);
        for o in r.accepted() {
            assert_abs_diff_eq!(o.fidelity_to_target, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn double_hits_carry_the_minus_sign() {
        let st = SwapStation::new("A", "B").unwrap();
        let left = pure(psi_plus("L", "A").unwrap());
        let right = pure(psi_plus("B", "R").unwrap());
        let r = run_elementary_swap(&st, &left, &right, "L", "R").unwrap();
        let minus = pair_state("L", "R", -1.0).unwrap();
        let hits: Vec<_> = r.outcomes.iter().filter(|o| o.herald == SwapHerald::DoubleHit).collect();
        assert_eq!(hits.len(), 4);
        for o in hits {
            assert!(!o.accepted);
            assert_abs_diff_eq!(o.ensemble.fidelity_to(&minus).unwrap(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn ground_input_gives_no_entanglement() {
        // Coincidences from the other link's pair cannot be told apart, but the
        // outer nodes end up unentangled.
        let st = SwapStation::new("A", "B").unwrap();
        let mut mems: Vec<String> = node_memories("L").to_vec();
        mems.extend(node_memories("A"));
        let left = pure(excited(&mems, &[]));
        let right = pure(psi_plus("B", "R").unwrap());
        let r = run_elementary_swap(&st, &left, &right, "L", "R").unwrap();
        assert_abs_diff_eq!(r.acceptance_probability, 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(r.fidelity().unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn mislabelled_inputs_are_an_error() {
        let st = SwapStation::new("A", "B").unwrap();
        let left = pure(psi_plus("L", "X").unwrap());
        let right = pure(psi_plus("B", "R").unwrap());
        assert!(matches!(
            run_elementary_swap(&st, &left, &right, "L", "R"),
            Err(Error::Registry(_))
        ));
    }

    #[test]
    fn retrieval_loss_admits_false_heralds() {
        let mut st = SwapStation::new("A", "B").unwrap();
        st.retrieval_efficiency = 0.8;
        let left = pure(psi_plus("L", "A").unwrap());
        let right = pure(psi_plus("B", "R").unwrap());
        let r = run_elementary_swap(&st, &left, &right, "L", "R").unwrap();
        // Correct events scale with both retrievals; four-photon events with
        // two losses add unentangled false heralds.
        let good = r.acceptance_probability * r.fidelity().unwrap();
        assert_abs_diff_eq!(good, 0.25 * 0.64, epsilon = 1e-12);
        assert!(r.acceptance_probability > good);
    }
}
