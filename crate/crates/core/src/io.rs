//! JSON records for run results.
//!
//! Amplitudes are written as `[re, im]` pairs and basis states as readable
//! labels such as `L1:s, L2:s, R1:g, R2:g | `, so emitted files can be
//! reviewed by eye and read back into states.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::chain::ChainStats;
use crate::error::{Error, Result};
use crate::fock::{Ensemble, JointState, ModeId, C64};
use crate::link::{
    correct_sector, excitation_sector, node_memories, psi_plus, Herald, LinkReport, LEFT, RIGHT,
};
use crate::swap::{SwapHerald, SwapReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermRecord {
    pub basis: String,
    pub amplitude: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub memories: Vec<String>,
    pub modes: Vec<String>,
    pub terms: Vec<TermRecord>,
}

impl StateRecord {
    pub fn from_state(state: &JointState) -> Self {
        StateRecord {
            memories: state.memories().to_vec(),
            modes: state.modes().iter().map(ToString::to_string).collect(),
            terms: state
                .terms()
                .map(|(k, a)| TermRecord {
                    basis: state.basis_label(k),
                    amplitude: [a.re, a.im],
                })
                .collect(),
        }
    }

    pub fn to_state(&self) -> Result<JointState> {
        let modes = self
            .modes
            .iter()
            .map(|m| m.parse())
            .collect::<Result<Vec<ModeId>>>()?;
        let shell = JointState::vacuum(&modes, &self.memories)?;
        let terms = self
            .terms
            .iter()
            .map(|t| Ok((shell.parse_basis_label(&t.basis)?, C64::new(t.amplitude[0], t.amplitude[1]))))
            .collect::<Result<Vec<_>>>()?;
        JointState::from_terms(&modes, &self.memories, terms)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentRecord {
    pub weight: f64,
    pub state: StateRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRecord {
    pub components: Vec<ComponentRecord>,
}

impl EnsembleRecord {
    pub fn from_ensemble(ens: &Ensemble) -> Self {
        EnsembleRecord {
            components: ens
                .components()
                .iter()
                .map(|(w, s)| ComponentRecord {
                    weight: *w,
                    state: StateRecord::from_state(s),
                })
                .collect(),
        }
    }

    pub fn to_ensemble(&self) -> Result<Ensemble> {
        let comps = self
            .components
            .iter()
            .map(|c| Ok((c.weight, c.state.to_state()?)))
            .collect::<Result<Vec<_>>>()?;
        if comps.is_empty() {
            return Ok(Ensemble::default());
        }
        Ensemble::mix(comps)
    }
}

/// Weight of one physical component of the accepted link mixture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureEntry {
    /// `psi_plus` or the pair of excited memories, e.g. `L1+R2`.
    pub component: String,
    pub weight: f64,
    /// Fidelity of the sector to its reference state.
    pub fidelity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkOutcomeRecord {
    pub pattern: String,
    pub herald: Herald,
    pub probability: f64,
    /// Present for accepted patterns only, with the heralded sign applied.
    pub ensemble: Option<EnsembleRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkRecord {
    pub acceptance_probability: f64,
    pub plus_type_probability: f64,
    pub minus_type_probability: f64,
    pub truncated_weight: f64,
    pub mixture: Vec<MixtureEntry>,
    pub heralded_ensemble: EnsembleRecord,
    pub outcomes: Vec<LinkOutcomeRecord>,
}

/// Split an accepted link ensemble into the pair state and the four
/// one-excitation-per-node products.
pub fn link_mixture(ens: &Ensemble) -> Result<Vec<MixtureEntry>> {
    let sector = correct_sector(LEFT, RIGHT);
    let mut out = vec![MixtureEntry {
        component: "psi_plus".into(),
        weight: ens.sector_weight(&sector),
        fidelity: ens.sector_fidelity(&sector, &psi_plus(LEFT, RIGHT)?)?,
    }];
    for a in node_memories(LEFT) {
        for b in node_memories(RIGHT) {
            let sector = excitation_sector(&a, &b);
            // A product sector holds a single basis state, so it is pure.
            let weight = ens.sector_weight(&sector);
            out.push(MixtureEntry {
                component: format!("{a}+{b}"),
                weight,
                fidelity: if weight > 0.0 { 1.0 } else { 0.0 },
            });
        }
    }
    Ok(out)
}

impl LinkRecord {
    pub fn from_report(report: &LinkReport) -> Result<Self> {
        let heralded = report.heralded_ensemble()?;
        let outcomes = report
            .outcomes
            .iter()
            .map(|o| {
                Ok(LinkOutcomeRecord {
                    pattern: o.pattern.to_string(),
                    herald: o.herald,
                    probability: o.probability,
                    ensemble: if o.accepted() {
                        Some(EnsembleRecord::from_ensemble(&o.corrected_ensemble()?))
                    } else {
                        None
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LinkRecord {
            acceptance_probability: report.acceptance_probability,
            plus_type_probability: report.herald_probability(Herald::PlusType),
            minus_type_probability: report.herald_probability(Herald::MinusType),
            truncated_weight: report.truncated_weight,
            mixture: link_mixture(&heralded)?,
            heralded_ensemble: EnsembleRecord::from_ensemble(&heralded),
            outcomes,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwapOutcomeRecord {
    pub pattern: String,
    pub herald: SwapHerald,
    pub accepted: bool,
    pub probability: f64,
    pub fidelity_to_target: f64,
    pub ensemble: Option<EnsembleRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwapRecord {
    pub outer_left: String,
    pub outer_right: String,
    pub acceptance_probability: f64,
    /// Fidelity of the accepted outer ensemble to the ideal pair; absent
    /// when nothing is accepted.
    pub fidelity: Option<f64>,
    pub outcomes: Vec<SwapOutcomeRecord>,
}

impl SwapRecord {
    pub fn from_report(report: &SwapReport) -> Self {
        SwapRecord {
            outer_left: report.outer_left.clone(),
            outer_right: report.outer_right.clone(),
            acceptance_probability: report.acceptance_probability,
            fidelity: report.fidelity().ok(),
            outcomes: report
                .outcomes
                .iter()
                .map(|o| SwapOutcomeRecord {
                    pattern: o.pattern.to_string(),
                    herald: o.herald,
                    accepted: o.accepted,
                    probability: o.probability,
                    fidelity_to_target: o.fidelity_to_target,
                    ensemble: o.accepted.then(|| EnsembleRecord::from_ensemble(&o.ensemble)),
                })
                .collect(),
        }
    }
}

/// Chain statistics together with the inputs that produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub seed: u64,
    pub stats: ChainStats,
}

pub fn write_json<T: Serialize, W: Write>(value: &T, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}
