//! Optical elements as [`LinearModeMap`]s.
//!
//! Phase conventions:
//! - 50:50 beam splitter: transmission amplitude `1/√2`, reflection `i/√2`.
//! - PBS / RPBS: both output ports have amplitude `+1`; any reflection phase is
//!   absorbed into the output mode definition.
//! - RPBS outputs are labelled with the rotated basis stored in the `H` slot
//!   (`F` on the transmitted port) and the `V` slot (`S` on the reflected port).
//! - Time-bin encoder: bin 1 is the long arm, which carries a phase modulator
//!   adding `π` to `H` only.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fock::{JointState, LinearModeMap, ModeId, Polarization, TimeBin, C64};

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn distinct(labels: &[&str]) -> Result<()> {
    for (i, a) in labels.iter().enumerate() {
        if labels[i + 1..].contains(a) {
            return Err(Error::InvalidMap(format!("port `{a}` used twice")));
        }
    }
    Ok(())
}

/// Balanced beam splitter between paths `a` and `b`, acting on both
/// polarizations in each of `bins`: `a → (a' + i b')/√2`, `b → (i a' + b')/√2`.
pub fn bs50(a: &str, b: &str, out_a: &str, out_b: &str, bins: &[TimeBin]) -> Result<LinearModeMap> {
    distinct(&[a, b])?;
    distinct(&[out_a, out_b])?;
    let mut inputs = Vec::new();
    let mut outputs = Vec::new();
    for &bin in bins {
        for pol in Polarization::BOTH {
            inputs.push(ModeId::new(a, pol, bin));
            inputs.push(ModeId::new(b, pol, bin));
            outputs.push(ModeId::new(out_a, pol, bin));
            outputs.push(ModeId::new(out_b, pol, bin));
        }
    }
    let n = inputs.len();
    let mut m = DMatrix::zeros(n, n);
    for k in (0..n).step_by(2) {
        m[(k, k)] = c(FRAC_1_SQRT_2, 0.0);
        m[(k + 1, k)] = c(0.0, FRAC_1_SQRT_2);
        m[(k, k + 1)] = c(0.0, FRAC_1_SQRT_2);
        m[(k + 1, k + 1)] = c(FRAC_1_SQRT_2, 0.0);
    }
    LinearModeMap::new(inputs, outputs, m, true)
}

/// Polarizing beam splitter: `H` modes go to `h_out`, `V` modes to `v_out`.
pub fn pbs(input: &str, h_out: &str, v_out: &str, bins: &[TimeBin]) -> Result<LinearModeMap> {
    distinct(&[h_out, v_out])?;
    let mut inputs = Vec::new();
    let mut outputs = Vec::new();
    for &bin in bins {
        inputs.push(ModeId::new(input, Polarization::H, bin));
        outputs.push(ModeId::new(h_out, Polarization::H, bin));
        inputs.push(ModeId::new(input, Polarization::V, bin));
        outputs.push(ModeId::new(v_out, Polarization::V, bin));
    }
    let n = inputs.len();
    LinearModeMap::new(inputs, outputs, DMatrix::identity(n, n), true)
}

/// Rotated PBS: transmits `F = (H+V)/√2` to `f_out`, reflects `S = (H−V)/√2`
/// to `s_out`. So `H → (f + s)/√2` and `V → (f − s)/√2`.
pub fn rpbs(input: &str, f_out: &str, s_out: &str, bins: &[TimeBin]) -> Result<LinearModeMap> {
    distinct(&[f_out, s_out])?;
    let mut inputs = Vec::new();
    let mut outputs = Vec::new();
    for &bin in bins {
        inputs.push(ModeId::new(input, Polarization::H, bin));
        inputs.push(ModeId::new(input, Polarization::V, bin));
        outputs.push(ModeId::new(f_out, Polarization::H, bin));
        outputs.push(ModeId::new(s_out, Polarization::V, bin));
    }
    let n = inputs.len();
    let mut m = DMatrix::zeros(n, n);
    for k in (0..n).step_by(2) {
        m[(k, k)] = c(FRAC_1_SQRT_2, 0.0);
        m[(k + 1, k)] = c(FRAC_1_SQRT_2, 0.0);
        m[(k, k + 1)] = c(FRAC_1_SQRT_2, 0.0);
        m[(k + 1, k + 1)] = c(-FRAC_1_SQRT_2, 0.0);
    }
    LinearModeMap::new(inputs, outputs, m, true)
}

/// Recombines the two RPBS outputs back into `H`/`V` on `output`.
pub fn rpbs_inverse(f_in: &str, s_in: &str, output: &str, bins: &[TimeBin]) -> Result<LinearModeMap> {
    distinct(&[f_in, s_in])?;
    let mut inputs = Vec::new();
    let mut outputs = Vec::new();
    for &bin in bins {
        inputs.push(ModeId::new(f_in, Polarization::H, bin));
        inputs.push(ModeId::new(s_in, Polarization::V, bin));
        outputs.push(ModeId::new(output, Polarization::H, bin));
        outputs.push(ModeId::new(output, Polarization::V, bin));
    }
    let n = inputs.len();
    let mut m = DMatrix::zeros(n, n);
    for k in (0..n).step_by(2) {
        m[(k, k)] = c(FRAC_1_SQRT_2, 0.0);
        m[(k + 1, k)] = c(FRAC_1_SQRT_2, 0.0);
        m[(k, k + 1)] = c(FRAC_1_SQRT_2, 0.0);
        m[(k + 1, k + 1)] = c(-FRAC_1_SQRT_2, 0.0);
    }
    LinearModeMap::new(inputs, outputs, m, true)
}

/// Polarization-dependent phase modulator on `port`.
pub fn pol_phase_mod(port: &str, phase_h: f64, phase_v: f64, bins: &[TimeBin]) -> Result<LinearModeMap> {
    let mut modes = Vec::new();
    let mut diag = Vec::new();
    for &bin in bins {
        modes.push(ModeId::new(port, Polarization::H, bin));
        diag.push(C64::from_polar(1.0, phase_h));
        modes.push(ModeId::new(port, Polarization::V, bin));
        diag.push(C64::from_polar(1.0, phase_v));
    }
    let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag));
    LinearModeMap::new(modes.clone(), modes, m, true)
}

/// Per-photon probability that the unbalanced interferometer returns the
/// photon forward into the channel.
pub const ENCODER_FORWARD_PROBABILITY: f64 = 0.5;

/// Unbalanced polarization interferometer turning an unbinned photon on
/// `port` into a time-bin superposition.
///
/// The forward branch is renormalized: `H → (−H₁ + H₂)/√2`,
/// `V → (V₁ + V₂)/√2`, with bin 1 the long arm. The discarded backward half is
/// recorded as a per-photon herald probability of 1/2.
pub fn timebin_encoder(port: &str) -> Result<LinearModeMap> {
    let inputs = vec![ModeId::h(port), ModeId::v(port)];
    let mut outputs = Vec::new();
    for bin in TimeBin::ENCODED {
        for pol in Polarization::BOTH {
            outputs.push(ModeId::new(port, pol, bin));
        }
    }
    // Outputs: H1, V1, H2, V2. Long and short arm each carry amplitude 1/√2.
    let mut split = DMatrix::zeros(4, 2);
    split[(0, 0)] = c(FRAC_1_SQRT_2, 0.0);
    split[(2, 0)] = c(FRAC_1_SQRT_2, 0.0);
    split[(1, 1)] = c(FRAC_1_SQRT_2, 0.0);
    split[(3, 1)] = c(FRAC_1_SQRT_2, 0.0);
    let long_arm_pm = pol_phase_mod(port, PI, 0.0, &[TimeBin::Bin1])?;
    let mut m = split;
    for (r, out) in outputs.iter().enumerate() {
        if out.bin == TimeBin::Bin1 {
            let phase = long_arm_pm.coefficient(out, out);
            for col in 0..2 {
                m[(r, col)] *= phase;
            }
        }
    }
    LinearModeMap::new(inputs, outputs, m, true)?.with_herald_probability(ENCODER_FORWARD_PROBABILITY)
}

/// Apply the encoder on `port`, refusing photons that are already binned.
pub fn encode_time_bins(state: &JointState, port: &str) -> Result<JointState> {
    for (key, _) in state.terms() {
        for (i, mode) in state.modes().iter().enumerate() {
            if mode.path == port && mode.bin != TimeBin::None && key.occupation[i] > 0 {
                return Err(Error::InvalidMap(format!(
                    "photon on `{port}` is already time-binned ({mode})"
                )));
            }
        }
    }
    let state = state.with_modes(&[ModeId::h(port), ModeId::v(port)])?;
    state.apply_mode_map(&timebin_encoder(port)?)
}

/// Detector labels of the swap station, in the order D1, D2, D3, D4.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SwapPorts {
    pub detectors: [String; 4],
}

impl Default for SwapPorts {
    fn default() -> Self {
        SwapPorts {
            detectors: ["D1", "D2", "D3", "D4"].map(String::from),
        }
    }
}

impl SwapPorts {
    /// Output modes `H@D1, V@D2, V@D3, H@D4`.
    pub fn modes(&self) -> [ModeId; 4] {
        let d = &self.detectors;
        [
            ModeId::h(d[0].as_str()),
            ModeId::v(d[1].as_str()),
            ModeId::v(d[2].as_str()),
            ModeId::h(d[3].as_str()),
        ]
    }
}

/// Real 4x4 matrix of the swap station, rows `H@D1, V@D2, V@D3, H@D4`,
/// columns `H_A, V_A, H_B, V_B`.
pub const SWAP_NETWORK_MATRIX: [[f64; 4]; 4] = [
    [0.5, -0.5, 0.5, 0.5],
    [-0.5, 0.5, 0.5, 0.5],
    [0.5, 0.5, -0.5, 0.5],
    [0.5, 0.5, 0.5, -0.5],
];

/// Map from raw entries, skipping the protocol checks. Unitarity is still
/// enforced when `unitary` is set.
pub fn swap_network_from_matrix(
    a: &str,
    b: &str,
    ports: &SwapPorts,
    matrix: [[f64; 4]; 4],
    unitary: bool,
) -> Result<LinearModeMap> {
    distinct(&[a, b])?;
    let inputs = vec![ModeId::h(a), ModeId::v(a), ModeId::h(b), ModeId::v(b)];
    let m = DMatrix::from_fn(4, 4, |r, col| c(matrix[r][col], 0.0));
    LinearModeMap::new(inputs, ports.modes().to_vec(), m, unitary)
}

/// The swap station interferometer for retrieval photons from nodes `a` and
/// `b`. Validated against the required two-photon behaviour before it is
/// returned.
pub fn swap_network(a: &str, b: &str, ports: &SwapPorts) -> Result<LinearModeMap> {
    let map = swap_network_from_matrix(a, b, ports, SWAP_NETWORK_MATRIX, true)?;
    check_swap_network(&map, a, b, ports)?;
    Ok(map)
}

/// Amplitudes of the accepted coincidences `(H@D1 V@D2, V@D3 H@D4)` produced
/// by the two-photon input `first† second† |0>`.
pub fn coincidence_amplitudes(
    map: &LinearModeMap,
    first: &ModeId,
    second: &ModeId,
    ports: &SwapPorts,
) -> Result<[C64; 2]> {
    let out = two_photon_output(map, first, second)?;
    let [d1, d2, d3, d4] = ports.modes();
    let amp = |x: &ModeId, y: &ModeId| {
        out.terms()
            .filter(|(k, _)| {
                out.occupation(k, x) == 1 && out.occupation(k, y) == 1 && k.photons() == 2
            })
            .map(|(_, a)| *a)
            .sum::<C64>()
    };
    Ok([amp(&d1, &d2), amp(&d3, &d4)])
}

/// `first† second† |0>` pushed through `map`.
pub fn two_photon_output(map: &LinearModeMap, first: &ModeId, second: &ModeId) -> Result<JointState> {
    let vac = JointState::vacuum::<&str>(map.inputs(), &[])?;
    vac.create_photon(first)?.create_photon(second)?.apply_mode_map(map)
}

/// Protocol checks on a candidate swap network:
/// - `H_A V_A` and `H_B V_B` each put amplitude of modulus 1/2 on both accepted
///   coincidences, with equal phases across the two inputs (so the retrieved
///   superposition keeps its `+` sign);
/// - every single-photon-per-node input (`X_A Y_B`) has zero amplitude on both
///   accepted coincidences.
pub fn check_swap_network(map: &LinearModeMap, a: &str, b: &str, ports: &SwapPorts) -> Result<()> {
    const TOL: f64 = 1e-12;
    let fail = |why: String| Err(Error::Construction(format!("swap network: {why}")));
    let aa = coincidence_amplitudes(map, &ModeId::h(a), &ModeId::v(a), ports)?;
    let bb = coincidence_amplitudes(map, &ModeId::h(b), &ModeId::v(b), ports)?;
    for (which, amps) in [("A", aa), ("B", bb)] {
        for z in amps {
            if (z.norm() - 0.5).abs() > TOL {
                return fail(format!("pair from {which} gives coincidence amplitude {z}"));
            }
        }
    }
    for i in 0..2 {
        if (aa[i] - bb[i]).norm() > TOL {
            return fail(format!("coincidence {i} differs in phase between A and B pairs"));
        }
    }
    for pa in Polarization::BOTH {
        for pb in Polarization::BOTH {
            let x = ModeId::new(a, pa, TimeBin::None);
            let y = ModeId::new(b, pb, TimeBin::None);
            for z in coincidence_amplitudes(map, &x, &y, ports)? {
                if z.norm() > TOL {
                    return fail(format!("error input {x} {y} reaches an accepted coincidence"));
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{fidelity, BasisKey};
    use approx::assert_abs_diff_eq;

    fn prob_on_path(s: &JointState, path: &str) -> f64 {
        s.terms()
            .filter(|(k, _)| {
                s.modes()
                    .iter()
                    .zip(&k.occupation)
                    .any(|(m, &n)| m.path == path && n > 0)
            })
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    fn photon(mode: &ModeId) -> JointState {
        JointState::vacuum::<&str>(std::slice::from_ref(mode), &[])
            .unwrap()
            .create_photon(mode)
            .unwrap()
    }

    #[test]
    fn bs50_is_unitary_and_balanced() {
        let bs = bs50("L", "R", "D1", "D2", &[TimeBin::None]).unwrap();
        assert!(bs.is_unitary());
        let out = photon(&ModeId::h("L")).with_modes(bs.inputs()).unwrap().apply_mode_map(&bs).unwrap();
        assert_abs_diff_eq!(prob_on_path(&out, "D1"), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(prob_on_path(&out, "D2"), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(out.norm_sqr(), 1.0, epsilon = 1e-12);
        assert!(bs50("L", "L", "D1", "D2", &[TimeBin::None]).is_err());
    }

    #[test]
    fn bs50_reflection_carries_i() {
        let bs = bs50("L", "R", "D1", "D2", &[TimeBin::None]).unwrap();
        assert_eq!(bs.coefficient(&ModeId::h("D2"), &ModeId::h("L")), C64::new(0.0, FRAC_1_SQRT_2));
        assert_eq!(bs.coefficient(&ModeId::h("D1"), &ModeId::h("L")), C64::new(FRAC_1_SQRT_2, 0.0));
    }

    #[test]
    fn hong_ou_mandel_cancels_coincidences() {
        let bs = bs50("a", "b", "c", "d", &[TimeBin::None]).unwrap();
        let (a, b) = (ModeId::h("a"), ModeId::h("b"));
        let out = two_photon_output(&bs, &a, &b).unwrap();
        let coincidence = BasisKey {
            memory: 0,
            occupation: out
                .modes()
                .iter()
                .map(|m| u8::from(*m == ModeId::h("c") || *m == ModeId::h("d")))
                .collect(),
        };
        assert!(out.amplitude(&coincidence).norm() < 1e-15);
        assert_abs_diff_eq!(out.norm_sqr(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn pbs_routes_by_polarization() {
        let p = pbs("in", "t", "r", &[TimeBin::None]).unwrap();
        let h = photon(&ModeId::h("in")).with_modes(&[ModeId::v("in")]).unwrap();
        assert_abs_diff_eq!(prob_on_path(&h.apply_mode_map(&p).unwrap(), "t"), 1.0);
        let v = photon(&ModeId::v("in")).with_modes(&[ModeId::h("in")]).unwrap();
        assert_abs_diff_eq!(prob_on_path(&v.apply_mode_map(&p).unwrap(), "r"), 1.0);
        let d = h.add(&v).unwrap().normalized().unwrap().apply_mode_map(&p).unwrap();
        assert_abs_diff_eq!(prob_on_path(&d, "t"), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(prob_on_path(&d, "r"), 0.5, epsilon = 1e-15);
        assert!(pbs("in", "t", "t", &[TimeBin::None]).is_err());
    }

    #[test]
    fn rpbs_routes_diagonal_polarization() {
        let r = rpbs("in", "f", "s", &[TimeBin::None]).unwrap();
        let h = photon(&ModeId::h("in")).with_modes(&[ModeId::v("in")]).unwrap();
        let v = photon(&ModeId::v("in")).with_modes(&[ModeId::h("in")]).unwrap();
        let f = h.add(&v).unwrap().normalized().unwrap();
        assert_abs_diff_eq!(prob_on_path(&f.apply_mode_map(&r).unwrap(), "f"), 1.0, epsilon = 1e-15);
        let hout = h.apply_mode_map(&r).unwrap();
        assert_abs_diff_eq!(prob_on_path(&hout, "f"), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(prob_on_path(&hout, "s"), 0.5, epsilon = 1e-15);

        let round = r.then(&rpbs_inverse("f", "s", "in", &[TimeBin::None]).unwrap()).unwrap();
        for inp in [ModeId::h("in"), ModeId::v("in")] {
            for out in [ModeId::h("in"), ModeId::v("in")] {
                let want = if inp == out { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(round.coefficient(&out, &inp).re, want, epsilon = 1e-12);
                assert_abs_diff_eq!(round.coefficient(&out, &inp).im, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn phase_modulator() {
        let pm = pol_phase_mod("L", PI, 0.0, &[TimeBin::None]).unwrap();
        let h = ModeId::h("L");
        assert_abs_diff_eq!(pm.coefficient(&h, &h).re, -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(pm.coefficient(&ModeId::v("L"), &ModeId::v("L")).re, 1.0);
        let id = pol_phase_mod("L", 0.0, 0.0, &[TimeBin::None]).unwrap();
        assert_eq!(id, LinearModeMap::identity(id.inputs()).unwrap());
        let twice = pm.then(&pm).unwrap();
        for m in twice.inputs() {
            assert_abs_diff_eq!(twice.coefficient(m, m).re, 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn encoder_splits_single_photon_evenly() {
        let s = encode_time_bins(&photon(&ModeId::h("L")), "L").unwrap();
        let in_bin = |bin| {
            s.terms()
                .filter(|(k, _)| s.modes().iter().zip(&k.occupation).any(|(m, &n)| m.bin == bin && n > 0))
                .map(|(_, a)| a.norm_sqr())
                .sum::<f64>()
        };
        assert_abs_diff_eq!(in_bin(TimeBin::Bin1), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(in_bin(TimeBin::Bin2), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s.norm_tracking(), 0.5, epsilon = 1e-15);
        assert!(encode_time_bins(&s, "L").is_err());
    }

    #[test]
    fn encoder_long_arm_flips_h_only() {
        let e = timebin_encoder("L").unwrap();
        let h1 = ModeId::new("L", Polarization::H, TimeBin::Bin1);
        let v1 = ModeId::new("L", Polarization::V, TimeBin::Bin1);
        assert_abs_diff_eq!(e.coefficient(&h1, &ModeId::h("L")).re, -FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(e.coefficient(&v1, &ModeId::v("L")).re, FRAC_1_SQRT_2, epsilon = 1e-15);
    }

    #[test]
    fn encoder_bin_mixed_part_is_singlet() {
        let (h, v) = (ModeId::h("L"), ModeId::v("L"));
        let pair = JointState::vacuum::<&str>(&[h.clone(), v.clone()], &[])
            .unwrap()
            .create_photon(&h)
            .unwrap()
            .create_photon(&v)
            .unwrap();
        let out = encode_time_bins(&pair, "L").unwrap();
        let mixed = out.filter(|k| {
            let b1 = out.modes().iter().zip(&k.occupation).filter(|(m, _)| m.bin == TimeBin::Bin1).map(|(_, &n)| n).sum::<u8>();
            b1 == 1
        });
        assert_abs_diff_eq!(mixed.norm_sqr(), 0.5, epsilon = 1e-15);
        let m = |p, b| ModeId::new("L", p, b);
        let vac = JointState::vacuum::<&str>(out.modes(), &[]).unwrap();
        let hv = vac.create_photon(&m(Polarization::H, TimeBin::Bin1)).unwrap().create_photon(&m(Polarization::V, TimeBin::Bin2)).unwrap();
        let vh = vac.create_photon(&m(Polarization::V, TimeBin::Bin1)).unwrap().create_photon(&m(Polarization::H, TimeBin::Bin2)).unwrap();
        let singlet = hv.add(&vh.scaled(C64::new(-1.0, 0.0))).unwrap();
        assert_abs_diff_eq!(fidelity(&mixed, &singlet).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn swap_network_rows_are_orthonormal() {
        let m = SWAP_NETWORK_MATRIX;
        for i in 0..4 {
            for j in 0..4 {
                let dot: f64 = (0..4).map(|k| m[i][k] * m[j][k]).sum();
                assert_abs_diff_eq!(dot, if i == j { 1.0 } else { 0.0 }, epsilon = 1e-15);
            }
        }
        assert!(swap_network("A", "B", &SwapPorts::default()).is_ok());
    }

    #[test]
    fn swap_network_pair_coincidences() {
        let ports = SwapPorts::default();
        let net = swap_network("A", "B", &ports).unwrap();
        let [c12, c34] = coincidence_amplitudes(&net, &ModeId::h("A"), &ModeId::v("A"), &ports).unwrap();
        assert_abs_diff_eq!(c12.re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(c34.re, 0.5, epsilon = 1e-15);
        let out = two_photon_output(&net, &ModeId::h("A"), &ModeId::v("A")).unwrap();
        // Remaining half of the weight sits on same-detector pairs.
        let same: f64 = out.terms().filter(|(k, _)| k.occupation.contains(&2)).map(|(_, a)| a.norm_sqr()).sum();
        assert_abs_diff_eq!(same, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn error_inputs_never_reach_accepted_coincidences() {
        let ports = SwapPorts::default();
        let net = swap_network("A", "B", &ports).unwrap();
        let amps = coincidence_amplitudes(&net, &ModeId::h("A"), &ModeId::h("B"), &ports).unwrap();
        assert!(amps.iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn corrupted_swap_network_is_rejected() {
        let mut m = SWAP_NETWORK_MATRIX;
        for row in m.iter_mut() {
            row[0] = -row[0];
        }
        let ports = SwapPorts::default();
        let bad = swap_network_from_matrix("A", "B", &ports, m, true).unwrap();
        assert!(check_swap_network(&bad, "A", "B", &ports).is_err());
    }
}
