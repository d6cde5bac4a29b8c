//! Self-check suite: the protocol's stated amplitudes and probabilities
//! recomputed from the simulator, one line per claim.
//!
//! Expected values here are written out by hand from the protocol
//! description, independently of the engine that produces the computed
//! values. A check whose computation errors is reported as failed rather
//! than aborting the suite.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fock::{fidelity, BasisKey, Ensemble, JointState, ModeId, Polarization, TimeBin, C64};
use crate::io::link_mixture;
use crate::link::{
    correct_sector, node_memories, pair_state, pre_detection_state, psi_plus, reference_link_mixture,
    run_link_exhaustive, Herald, LinkConfig, NoiseRealization, LEFT, RIGHT,
};
use crate::noise::{collective_pol_unitary, JonesUnitary};
use crate::optics::{bs50, encode_time_bins, swap_network_from_matrix, SwapPorts};
use crate::swap::{run_swap, swap_links, SwapHerald, SwapLevel, SwapReport, SwapStation};

const INNER_LEFT: &str = "A";
const INNER_RIGHT: &str = "B";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub id: String,
    pub expected: f64,
    pub computed: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Why the computation could not run, when it could not.
    pub error: Option<String>,
}

impl Check {
    fn new(id: &str, expected: f64, tolerance: f64, computed: Result<f64>) -> Self {
        match computed {
            Ok(c) => Check {
                id: id.to_string(),
                expected,
                computed: c,
                tolerance,
                passed: (c - expected).abs() <= tolerance,
                error: None,
            },
            Err(e) => Check {
                id: id.to_string(),
                expected,
                computed: f64::NAN,
                tolerance,
                passed: false,
                error: Some(e.to_string()),
            },
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<32} expected {:<22.15e} computed {:<22.15e} tol {:.0e}  {}",
            self.id,
            self.expected,
            self.computed,
            self.tolerance,
            if self.passed { "PASS" } else { "FAIL" }
        )?;
        if let Some(e) = &self.error {
            write!(f, "  ({e})")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, id: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.id == id)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        write!(f, "{} checks, {} failed", self.checks.len(), failed)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyOptions {
    /// Replacement swap-station matrix (rows `H@D1, V@D2, V@D3, H@D4`,
    /// columns `H_A, V_A, H_B, V_B`), installed without construction checks.
    pub swap_matrix: Option<[[f64; 4]; 4]>,
    pub noise_realizations: usize,
    pub random_unitaries: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            swap_matrix: None,
            noise_realizations: 50,
            random_unitaries: 100,
            seed: 2024,
        }
    }
}

fn station(opts: &VerifyOptions) -> Result<SwapStation> {
    match opts.swap_matrix {
        None => SwapStation::new(INNER_LEFT, INNER_RIGHT),
        Some(m) => {
            let ports = SwapPorts::default();
            let net = swap_network_from_matrix(INNER_LEFT, INNER_RIGHT, &ports, m, false)?;
            SwapStation::with_network(INNER_LEFT, INNER_RIGHT, ports, net)
        }
    }
}

fn bin(m: ModeId, b: TimeBin) -> ModeId {
    m.with_bin(b)
}

/// Sum of `coef · Π S† Π a† |vac>` over the given terms.
fn build(
    modes: &[ModeId],
    memories: &[String],
    terms: &[(C64, Vec<&str>, Vec<ModeId>)],
) -> Result<JointState> {
    let vac = JointState::vacuum(modes, memories)?;
    let mut out: Option<JointState> = None;
    for (coef, mems, photons) in terms {
        let mut s = vac.clone();
        for m in mems {
            s = s.excite_memory(m)?;
        }
        for p in photons {
            s = s.create_photon(p)?;
        }
        let s = s.scaled(*coef);
        out = Some(match out {
            None => s,
            Some(acc) => acc.add(&s)?,
        });
    }
    Ok(out.expect("at least one term"))
}

/// Encoder output for one H and one V photon on the same path.
fn encoder_check() -> Result<f64> {
    let (h, v) = (ModeId::h(LEFT), ModeId::v(LEFT));
    let input = JointState::vacuum::<&str>(&[h.clone(), v.clone()], &[])?
        .create_photon(&h)?
        .create_photon(&v)?;
    let out = encode_time_bins(&input, LEFT)?;
    let [h1, v1, h2, v2] = [
        bin(h.clone(), TimeBin::Bin1),
        bin(v.clone(), TimeBin::Bin1),
        bin(h, TimeBin::Bin2),
        bin(v, TimeBin::Bin2),
    ];
    let half = C64::new(0.5, 0.0);
    let expected = build(
        &[h1.clone(), v1.clone(), h2.clone(), v2.clone()],
        &[],
        &[
            (half, vec![], vec![h1.clone(), v1.clone()]),
            (-half, vec![], vec![h2.clone(), v2.clone()]),
            (half, vec![], vec![h1, v2]),
            (-half, vec![], vec![v1, h2]),
        ],
    )?;
    fidelity(&out, &expected)
}

/// Photonic state at the link detectors restricted to the terms where one
/// node holds both excitations and the photons sit in different time bins.
fn pair_interference_check() -> Result<f64> {
    let (ens, _) = pre_detection_state(&LinkConfig::default())?;
    let state = &ens.components()[0].1;
    let l = node_memories(LEFT);
    let r = node_memories(RIGHT);
    let pair = correct_sector(LEFT, RIGHT);
    let split_bins = |k: &BasisKey| {
        let in_bin = |b| {
            state
                .modes()
                .iter()
                .zip(&k.occupation)
                .filter(|(m, _)| m.bin == b)
                .map(|(_, &n)| n as usize)
                .sum::<usize>()
        };
        in_bin(TimeBin::Bin1) == 1 && in_bin(TimeBin::Bin2) == 1
    };
    let restricted = state.filter(|k| pair(state, k) && split_bins(k));

    let m = |pol: Polarization, b: TimeBin, d: &str| ModeId::new(d, pol, b);
    let (b1, b2) = (TimeBin::Bin1, TimeBin::Bin2);
    let (h, v) = (Polarization::H, Polarization::V);
    let modes: Vec<ModeId> = ["D1", "D2"]
        .iter()
        .flat_map(|d| [m(h, b1, d), m(v, b1, d), m(h, b2, d), m(v, b2, d)])
        .collect();
    let memories: Vec<String> = l.iter().chain(&r).cloned().collect();
    let c = 1.0 / (2.0 * 2f64.sqrt());
    let (lp, rp) = (vec![l[0].as_str(), l[1].as_str()], vec![r[0].as_str(), r[1].as_str()]);
    let mut terms = Vec::new();
    // Same-detector photons come with the antisymmetric memory state.
    let same = [
        (-1.0, m(h, b1, "D1"), m(v, b2, "D1")),
        (1.0, m(v, b1, "D1"), m(h, b2, "D1")),
        (1.0, m(h, b1, "D2"), m(v, b2, "D2")),
        (-1.0, m(v, b1, "D2"), m(h, b2, "D2")),
    ];
    for (s, x, y) in same {
        terms.push((C64::new(c * s, 0.0), lp.clone(), vec![x.clone(), y.clone()]));
        terms.push((C64::new(-c * s, 0.0), rp.clone(), vec![x, y]));
    }
    // One photon per detector comes with the symmetric memory state.
    let split = [
        (1.0, m(h, b1, "D1"), m(v, b2, "D2")),
        (1.0, m(h, b1, "D2"), m(v, b2, "D1")),
        (-1.0, m(v, b1, "D1"), m(h, b2, "D2")),
        (-1.0, m(v, b1, "D2"), m(h, b2, "D1")),
    ];
    for (s, x, y) in split {
        terms.push((C64::new(0.0, c * s), lp.clone(), vec![x.clone(), y.clone()]));
        terms.push((C64::new(0.0, c * s), rp.clone(), vec![x, y]));
    }
    let expected = build(&modes, &memories, &terms)?;
    fidelity(&restricted, &expected)
}

/// Lowest correct-sector fidelity to the `sign` pair state over the raw
/// (uncorrected) ensembles of every pattern with the given herald.
fn herald_sign_check(herald: Herald, sign: f64) -> Result<f64> {
    let report = run_link_exhaustive(&LinkConfig::default())?;
    let target = pair_state(LEFT, RIGHT, sign)?;
    let sector = correct_sector(LEFT, RIGHT);
    let mut worst = f64::INFINITY;
    for o in report.outcomes.iter().filter(|o| o.herald == herald) {
        worst = worst.min(o.ensemble.sector_fidelity(&sector, &target)?);
    }
    Ok(worst)
}

fn ideal_pairs() -> Result<(Ensemble, Ensemble)> {
    Ok((
        Ensemble::pure(psi_plus(LEFT, INNER_LEFT)?)?,
        Ensemble::pure(psi_plus(INNER_RIGHT, RIGHT)?)?,
    ))
}

fn pattern_probability(report: &SwapReport, pred: impl Fn(&SwapStation, &crate::noise::ClickPattern) -> bool, st: &SwapStation) -> f64 {
    report
        .outcomes
        .iter()
        .filter(|o| pred(st, &o.pattern))
        .map(|o| o.probability)
        .sum()
}

fn one_each(p: &crate::noise::ClickPattern, a: &str, b: &str) -> bool {
    p.total() == 2 && p.detector_total(a) == 1 && p.detector_total(b) == 1
}

/// One-excitation-per-node product on the two nodes.
fn product(a: &str, b: &str, ia: usize, ib: usize) -> Result<Ensemble> {
    let ma = node_memories(a);
    let mb = node_memories(b);
    let g = JointState::vacuum::<&str>(&[], &[&ma[0], &ma[1], &mb[0], &mb[1]])?;
    Ensemble::pure(g.excite_memory(&ma[ia])?.excite_memory(&mb[ib])?)
}

fn error_filter_checks(st: &SwapStation) -> Result<(f64, f64)> {
    let (good_l, good_r) = ideal_pairs()?;
    let mut worst_accept: f64 = 0.0;
    let mut even_mass: f64 = 0.0;
    for i in 0..4 {
        let err_l = product(LEFT, INNER_LEFT, i / 2, i % 2)?;
        let err_r = product(INNER_RIGHT, RIGHT, i / 2, i % 2)?;
        for j in 0..4 {
            let other_r = product(INNER_RIGHT, RIGHT, j / 2, j % 2)?;
            let rep = run_swap(st, &err_l, &other_r, LEFT, RIGHT, SwapLevel::Elementary)?;
            worst_accept = worst_accept.max(
                rep.outcomes
                    .iter()
                    .filter(|o| st.classify(&o.pattern) == SwapHerald::Coincidence)
                    .map(|o| o.probability)
                    .sum(),
            );
        }
        for rep in [
            run_swap(st, &good_l, &err_r, LEFT, RIGHT, SwapLevel::Elementary)?,
            run_swap(st, &err_l, &good_r, LEFT, RIGHT, SwapLevel::Elementary)?,
        ] {
            even_mass += rep
                .outcomes
                .iter()
                .filter(|o| o.pattern.total() % 2 == 0)
                .map(|o| o.probability)
                .sum::<f64>();
        }
    }
    Ok((worst_accept, even_mass))
}

struct NoiseSummary {
    acceptance_dev: f64,
    weight_dev: f64,
    pair_fidelity: f64,
    swap_acceptance_dev: f64,
    swap_fidelity: f64,
}

fn noise_checks(st: &SwapStation, opts: &VerifyOptions) -> Result<NoiseSummary> {
    let clean = run_link_exhaustive(&LinkConfig::default())?;
    let reference = reference_link_mixture(LEFT, RIGHT)?;
    let ref_weights: Vec<f64> = link_mixture(&reference)?.iter().map(|m| m.weight).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut s = NoiseSummary {
        acceptance_dev: 0.0,
        weight_dev: 0.0,
        pair_fidelity: 1.0,
        swap_acceptance_dev: 0.0,
        swap_fidelity: 1.0,
    };
    let sector = correct_sector(LEFT, RIGHT);
    let target = psi_plus(LEFT, RIGHT)?;
    for _ in 0..opts.noise_realizations {
        let mut links = Vec::with_capacity(2);
        for _ in 0..2 {
            let config = LinkConfig {
                noise: NoiseRealization::sample(&mut rng, 1.0)?,
                ..LinkConfig::default()
            };
            let report = run_link_exhaustive(&config)?;
            s.acceptance_dev = s
                .acceptance_dev
                .max((report.acceptance_probability - clean.acceptance_probability).abs());
            let ens = report.heralded_ensemble()?;
            for (m, w) in link_mixture(&ens)?.iter().zip(&ref_weights) {
                s.weight_dev = s.weight_dev.max((m.weight - w).abs());
            }
            s.pair_fidelity = s.pair_fidelity.min(ens.sector_fidelity(&sector, &target)?);
            links.push(ens);
        }
        let rep = swap_links(st, &links[0], &links[1], SwapLevel::Elementary)?;
        s.swap_acceptance_dev = s.swap_acceptance_dev.max((rep.acceptance_probability - 1.0 / 36.0).abs());
        s.swap_fidelity = s.swap_fidelity.min(rep.fidelity()?);
    }
    Ok(s)
}

/// `(H1 V2 - V1 H2)/√2` on one path.
fn psi_minus(path: &str) -> Result<JointState> {
    let h1 = ModeId::h(path).with_bin(TimeBin::Bin1);
    let v1 = ModeId::v(path).with_bin(TimeBin::Bin1);
    let h2 = ModeId::h(path).with_bin(TimeBin::Bin2);
    let v2 = ModeId::v(path).with_bin(TimeBin::Bin2);
    let c = C64::new(FRAC_1_SQRT_2, 0.0);
    build(
        &[h1.clone(), v1.clone(), h2.clone(), v2.clone()],
        &[],
        &[(c, vec![], vec![h1, v2]), (-c, vec![], vec![v1, h2])],
    )
}

fn psi_minus_check(opts: &VerifyOptions) -> Result<f64> {
    let s = psi_minus(LEFT)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37);
    let mut worst: f64 = 1.0;
    for _ in 0..opts.random_unitaries {
        let u = JonesUnitary::haar(&mut rng);
        worst = worst.min(fidelity(&collective_pol_unitary(&s, LEFT, &u)?, &s)?);
    }
    Ok(worst)
}

/// Probabilities of `(1,1)` and `(2,0)` after a balanced beam splitter on
/// one photon per input.
fn hom_check() -> Result<(f64, f64)> {
    let (a, b) = (ModeId::h("a"), ModeId::h("b"));
    let map = bs50("a", "b", "c", "d", &[TimeBin::None])?;
    let out = JointState::vacuum::<&str>(map.inputs(), &[])?
        .create_photon(&a)?
        .create_photon(&b)?
        .apply_mode_map(&map)?;
    let (c, d) = (ModeId::h("c"), ModeId::h("d"));
    let prob = |nc: u8, nd: u8| {
        out.terms()
            .filter(|(k, _)| out.occupation(k, &c) == nc && out.occupation(k, &d) == nd)
            .map(|(_, z)| z.norm_sqr())
            .sum::<f64>()
            / out.norm_sqr()
    };
    Ok((prob(1, 1), prob(2, 0)))
}

/// Run every check. Never returns early: a failing computation becomes a
/// failed line.
pub fn run_verification(opts: &VerifyOptions) -> VerifyReport {
    let mut checks = Vec::new();
    let mut push = |id: &str, expected: f64, tol: f64, v: Result<f64>| checks.push(Check::new(id, expected, tol, v));

    push("encoder.two_photon_state", 1.0, 1e-10, encoder_check());
    push("link.pair_interference", 1.0, 1e-10, pair_interference_check());

    let link = run_link_exhaustive(&LinkConfig::default());
    let p = LinkConfig::default().emission_probability;
    push(
        "link.acceptance_3p2",
        3.0 * p * p,
        1e-12,
        link.as_ref().map(|r| r.acceptance_probability).map_err(Clone::clone),
    );
    let mixture = link
        .as_ref()
        .map_err(Clone::clone)
        .and_then(|r| link_mixture(&r.heralded_ensemble()?));
    match &mixture {
        Ok(m) => {
            for (i, entry) in m.iter().enumerate() {
                let expected = if i == 0 { 1.0 / 3.0 } else { 1.0 / 6.0 };
                push(&format!("link.weight.{}", entry.component), expected, 1e-10, Ok(entry.weight));
            }
            push("link.pair_fidelity", 1.0, 1e-10, Ok(m[0].fidelity));
            push("link.both_correct_1_9", 1.0 / 9.0, 1e-10, Ok(m[0].weight * m[0].weight));
        }
        Err(e) => push("link.weights", 1.0 / 3.0, 1e-10, Err(e.clone())),
    }
    push("link.plus_type_sign", 1.0, 1e-10, herald_sign_check(Herald::PlusType, 1.0));
    push("link.minus_type_sign", 1.0, 1e-10, herald_sign_check(Herald::MinusType, -1.0));

    let st = station(opts);
    let ideal = st.as_ref().map_err(Clone::clone).and_then(|st| {
        let (l, r) = ideal_pairs()?;
        run_swap(st, &l, &r, LEFT, RIGHT, SwapLevel::Elementary)
    });
    let with = |f: &dyn Fn(&SwapStation, &SwapReport) -> Result<f64>| -> Result<f64> {
        let st = st.as_ref().map_err(Clone::clone)?;
        let rep = ideal.as_ref().map_err(Clone::clone)?;
        f(st, rep)
    };
    push(
        "swap.pattern_D1_D2",
        0.125,
        1e-10,
        with(&|st, r| Ok(pattern_probability(r, |_, p| one_each(p, "D1", "D2"), st))),
    );
    push(
        "swap.pattern_D3_D4",
        0.125,
        1e-10,
        with(&|st, r| Ok(pattern_probability(r, |_, p| one_each(p, "D3", "D4"), st))),
    );
    push(
        "swap.double_hits",
        0.25,
        1e-10,
        with(&|st, r| Ok(pattern_probability(r, |s, p| s.classify(p) == SwapHerald::DoubleHit, st))),
    );
    push(
        "swap.double_hit_sign",
        1.0,
        1e-10,
        with(&|st, r| {
            let minus = pair_state(LEFT, RIGHT, -1.0)?;
            let mut worst: f64 = 1.0;
            for o in r.outcomes.iter().filter(|o| st.classify(&o.pattern) == SwapHerald::DoubleHit) {
                worst = worst.min(o.ensemble.fidelity_to(&minus)?);
            }
            Ok(worst)
        }),
    );
    push("swap.ideal_acceptance", 0.25, 1e-10, with(&|_, r| Ok(r.acceptance_probability)));
    push("swap.ideal_fidelity", 1.0, 1e-10, with(&|_, r| r.fidelity()));

    let filters = st.as_ref().map_err(Clone::clone).and_then(error_filter_checks);
    push("swap.error_pairs_rejected", 0.0, 1e-12, filters.as_ref().map(|f| f.0).map_err(Clone::clone));
    push("swap.mixed_pairs_odd_clicks", 0.0, 1e-12, filters.as_ref().map(|f| f.1).map_err(Clone::clone));

    let mixed = st.as_ref().map_err(Clone::clone).and_then(|st| {
        let l = reference_link_mixture(LEFT, RIGHT)?;
        swap_links(st, &l, &l, SwapLevel::Elementary)
    });
    push("swap.mixture_1_36", 1.0 / 36.0, 1e-10, mixed.as_ref().map(|r| r.acceptance_probability).map_err(Clone::clone));
    push("swap.mixture_fidelity", 1.0, 1e-10, mixed.as_ref().map_err(Clone::clone).and_then(|r| r.fidelity()));

    let higher = st.as_ref().map_err(Clone::clone).and_then(|st| {
        let (l, r) = ideal_pairs()?;
        run_swap(st, &l, &r, LEFT, RIGHT, SwapLevel::Higher)
    });
    push("swap.higher_1_2", 0.5, 1e-10, higher.as_ref().map(|r| r.acceptance_probability).map_err(Clone::clone));
    push("swap.higher_fidelity", 1.0, 1e-10, higher.as_ref().map_err(Clone::clone).and_then(|r| r.fidelity()));

    let noise = st.as_ref().map_err(Clone::clone).and_then(|st| noise_checks(st, opts));
    let field = |f: fn(&NoiseSummary) -> f64| noise.as_ref().map(f).map_err(Clone::clone);
    push("noise.link_acceptance_shift", 0.0, 1e-10, field(|s| s.acceptance_dev));
    push("noise.link_weight_shift", 0.0, 1e-10, field(|s| s.weight_dev));
    push("noise.link_pair_fidelity", 1.0, 1e-9, field(|s| s.pair_fidelity));
    push("noise.swap_acceptance_shift", 0.0, 1e-10, field(|s| s.swap_acceptance_dev));
    push("noise.end_to_end_fidelity", 1.0, 1e-9, field(|s| s.swap_fidelity));

    push("unit.psi_minus_invariance", 1.0, 1e-9, psi_minus_check(opts));
    let hom = hom_check();
    push("unit.hom_coincidence", 0.0, 1e-9, hom.as_ref().map(|h| h.0).map_err(Clone::clone));
    push("unit.hom_bunching", 0.5, 1e-9, hom.as_ref().map(|h| h.1).map_err(Clone::clone));

    VerifyReport { checks }
}
