//! Two capacitively coupled transmons, three levels each, with qubit 1's
//! frequency modulated as `omega1 + A sin(Delta t + phi)`.
//!
//! Basis index is `3 n1 + n2`. The rotating frame removes every diagonal term
//! of the lab Hamiltonian, including the modulation phase
//! `Phi(t) = int A sin(Delta t' + phi) dt'`, so an element coupling `|a>` to
//! `|b>` (with `n1(a) = n1(b) + 1`) picks up `exp(i[(E_a - E_b) t + Phi(t)])`.
//! All coupling elements of `g (a1 + a1^dag)(a2 + a2^dag)` are kept; nothing
//! is dropped by a rotating-wave argument.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bessel::{self, J1_PEAK, J1_PEAK_ARG};
use crate::evolution::{ErrorModel, EvolutionResult, DEFAULT_STEPS};
use crate::geometry::wrap;
use crate::linalg::{subspace_fidelity, ComplexMatrix, UnitaryMatrix};
use crate::pulses::{PulseError, PulseSchedule};
use crate::{CMatrix, State, Unitary};

pub const LEVELS: usize = 3;
pub const DIM: usize = LEVELS * LEVELS;
/// Indices of `|00>, |01>, |10>, |11>`.
pub const COMPUTATIONAL: [usize; 4] = [0, 1, 3, 4];
/// Default effective-coupling operating point `J1(A/Delta)`.
pub const DEFAULT_J1: f64 = 0.4;
/// Default step in the rotating frame (s).
pub const DEFAULT_ROTATING_DT: f64 = 2e-12;
/// Default step in the lab frame (s); the rotating frame carries the same
/// sum-frequency oscillations, so the two need the same resolution.
pub const DEFAULT_LAB_DT: f64 = 2e-12;
/// Step-halving tolerance on the final unitary.
pub const HALVING_TOLERANCE: f64 = 1e-7;
pub const DEFAULT_CUTOFF: usize = 20;
/// Bound on the dropped Bessel weight `sum_{|m| > cutoff} |J_m|`.
pub const SIDEBAND_TAIL_BOUND: f64 = 1e-10;

const EVEN: [usize; 5] = [0, 2, 4, 6, 8];
const ODD: [usize; 4] = [1, 3, 5, 7];

pub fn basis_index(n1: usize, n2: usize) -> usize {
    LEVELS * n1 + n2
}

fn levels(a: usize) -> (usize, usize) {
    (a / LEVELS, a % LEVELS)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TwoQubitError {
    #[error("invalid device parameters: {0}")]
    InvalidParams(String),
    #[error("invalid drive: {0}")]
    InvalidDrive(String),
    #[error("sideband cutoff {cutoff} leaves Bessel tail {tail:e}")]
    CutoffTooLow { cutoff: usize, tail: f64 },
    #[error("segment {segment}: coupling {required:e} rad/s exceeds the reachable {max:e} rad/s")]
    AmplitudeUnreachable { segment: usize, required: f64, max: f64 },
    #[error("segment {segment}: no drive phase reproduces the target phase")]
    NoPhaseSolution { segment: usize },
    #[error("step halving changed the unitary by {change:e} (> {HALVING_TOLERANCE:e})")]
    ConvergenceFailure { change: f64 },
    #[error("A/Delta = {ratio} leaves the monotone branch (0, {J1_PEAK_ARG})")]
    BranchExceeded { ratio: f64 },
    #[error(transparent)]
    Pulse(#[from] PulseError),
}

/// Device parameters, all angular frequencies in rad/s.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeviceParams {
    pub omega1: f64,
    pub omega2: f64,
    pub anh1: f64,
    pub anh2: f64,
    pub g12: f64,
    pub levels_per_qubit: usize,
}

impl Default for DeviceParams {
    fn default() -> Self {
        let w = 2.0 * PI;
        Self {
            omega1: w * 4.8e9,
            omega2: w * 5.4e9,
            anh1: w * -220e6,
            anh2: w * -230e6,
            g12: w * 12e6,
            levels_per_qubit: LEVELS,
        }
    }
}

/// On-disk form of [`DeviceParams`], frequencies in Hz.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeviceFile {
    omega1_hz: f64,
    omega2_hz: f64,
    anh1_hz: f64,
    anh2_hz: f64,
    g12_hz: f64,
    #[serde(default = "default_levels")]
    levels_per_qubit: usize,
}

fn default_levels() -> usize {
    LEVELS
}

impl DeviceParams {
    pub fn validate(&self) -> Result<(), TwoQubitError> {
        let vals = [self.omega1, self.omega2, self.anh1, self.anh2, self.g12];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(TwoQubitError::InvalidParams("non-finite value".into()));
        }
        if self.levels_per_qubit != LEVELS {
            return Err(TwoQubitError::InvalidParams(format!(
                "only {LEVELS} levels per qubit are modelled, got {}",
                self.levels_per_qubit
            )));
        }
        if self.omega1 <= 0.0 || self.omega2 <= 0.0 {
            return Err(TwoQubitError::InvalidParams("qubit frequencies must be positive".into()));
        }
        if self.anh1 >= 0.0 || self.anh2 >= 0.0 {
            return Err(TwoQubitError::InvalidParams("anharmonicities must be negative".into()));
        }
        if self.g12 <= 0.0 {
            return Err(TwoQubitError::InvalidParams("g12 must be positive".into()));
        }
        Ok(())
    }

    /// `|g12| / |omega1 - omega2|`.
    pub fn dispersive_ratio(&self) -> f64 {
        self.g12.abs() / (self.omega1 - self.omega2).abs()
    }

    pub fn warnings(&self) -> Vec<String> {
        let r = self.dispersive_ratio();
        if r > 0.1 {
            vec![format!("g12/|omega1 - omega2| = {r:.3} is outside the dispersive regime")]
        } else {
            Vec::new()
        }
    }

    /// Parses the TOML parameter file (keys in Hz).
    pub fn from_toml_str(text: &str) -> Result<Self, TwoQubitError> {
        let f: DeviceFile = toml::from_str(text).map_err(|e| TwoQubitError::InvalidParams(e.to_string()))?;
        let w = 2.0 * PI;
        let p = Self {
            omega1: w * f.omega1_hz,
            omega2: w * f.omega2_hz,
            anh1: w * f.anh1_hz,
            anh2: w * f.anh2_hz,
            g12: w * f.g12_hz,
            levels_per_qubit: f.levels_per_qubit,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn to_toml_string(&self) -> String {
        let w = 2.0 * PI;
        let f = DeviceFile {
            omega1_hz: self.omega1 / w,
            omega2_hz: self.omega2 / w,
            anh1_hz: self.anh1 / w,
            anh2_hz: self.anh2 / w,
            g12_hz: self.g12 / w,
            levels_per_qubit: self.levels_per_qubit,
        };
        format!("# frequencies in Hz (cycles per second)\n{}", toml::to_string(&f).expect("plain table"))
    }

    fn kerr(&self, a: usize) -> f64 {
        let (n1, n2) = levels(a);
        let (n1, n2) = (n1 as f64, n2 as f64);
        0.5 * self.anh1 * n1 * (n1 - 1.0) + 0.5 * self.anh2 * n2 * (n2 - 1.0)
    }

    /// Undriven energy of basis state `a`.
    pub fn bare_energy(&self, a: usize) -> f64 {
        let (n1, n2) = levels(a);
        self.omega1 * n1 as f64 + self.omega2 * n2 as f64 + self.kerr(a)
    }

    /// `Delta^{nu mu}_{12} = omega1 - omega2 + (nu - 1) anh1 - mu anh2`.
    pub fn transition_detuning(&self, nu: usize, mu: usize) -> f64 {
        self.omega1 - self.omega2 + (nu as f64 - 1.0) * self.anh1 - mu as f64 * self.anh2
    }
}

/// One element of `g (a1 + a1^dag)(a2 + a2^dag)`; `hi` has one more qubit-1
/// excitation than `lo`.
#[derive(Clone, Copy, Debug)]
struct Coupling {
    hi: usize,
    lo: usize,
    strength: f64,
    /// `E_hi - E_lo` of the undriven system.
    freq: f64,
}

fn couplings(p: &DeviceParams) -> Vec<Coupling> {
    let mut out = Vec::new();
    for hi in 0..DIM {
        for lo in 0..DIM {
            let (i, j) = levels(hi);
            let (k, l) = levels(lo);
            if i == k + 1 && j.abs_diff(l) == 1 {
                let strength = p.g12 * (i as f64).sqrt() * (j.max(l) as f64).sqrt();
                out.push(Coupling { hi, lo, strength, freq: p.bare_energy(hi) - p.bare_energy(lo) });
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TwoQubitGate {
    ISwap,
    Cz,
}

impl TwoQubitGate {
    pub fn as_str(self) -> &'static str {
        match self {
            TwoQubitGate::ISwap => "iswap",
            TwoQubitGate::Cz => "cz",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "iswap" => Some(TwoQubitGate::ISwap),
            "cz" | "cphase" => Some(TwoQubitGate::Cz),
            _ => None,
        }
    }

    /// `(lo, hi)` states of the resonant transition; `lo` plays the role of `|0>`.
    pub fn transition(self) -> (usize, usize) {
        match self {
            TwoQubitGate::ISwap => (basis_index(0, 1), basis_index(1, 0)),
            TwoQubitGate::Cz => (basis_index(0, 2), basis_index(1, 1)),
        }
    }

    /// Ladder factor of the resonant matrix element.
    pub fn ladder(self) -> f64 {
        match self {
            TwoQubitGate::ISwap => 1.0,
            TwoQubitGate::Cz => 2f64.sqrt(),
        }
    }
}

/// Modulation frequency that makes the gate's transition resonant.
pub fn resonance_select(params: &DeviceParams, gate: TwoQubitGate) -> f64 {
    match gate {
        TwoQubitGate::ISwap => params.omega2 - params.omega1,
        TwoQubitGate::Cz => params.omega2 + params.anh2 - params.omega1,
    }
}

/// A constant-amplitude, constant-phase modulation segment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriveSegment {
    /// `A` (rad/s).
    pub amplitude: f64,
    /// `Delta` (rad/s).
    pub mod_freq: f64,
    /// `phi` (rad).
    pub phase: f64,
    /// Segment length (s).
    pub duration: f64,
    /// Phase of the resonant effective coupling realized by this segment,
    /// `phi + frame_phase - pi/2`, i.e. the single-qubit drive phase it emulates.
    pub compensated_phase: f64,
    /// Offset `c` in `Phi(t) = -(A/Delta) cos(Delta t + phi) + c` over this segment.
    pub frame_phase: f64,
}

impl DriveSegment {
    pub fn new(amplitude: f64, mod_freq: f64, phase: f64, duration: f64) -> Self {
        Self { amplitude, mod_freq, phase, duration, compensated_phase: 0.0, frame_phase: 0.0 }
    }

    fn ratio(&self) -> f64 {
        self.amplitude / self.mod_freq
    }

    /// `Phi(t)` for absolute time `t`, using this segment's closed form.
    fn phi_at(&self, t: f64) -> f64 {
        -self.ratio() * (self.mod_freq * t + self.phase).cos() + self.frame_phase
    }

    fn phi_dot(&self, t: f64) -> f64 {
        self.amplitude * (self.mod_freq * t + self.phase).sin()
    }
}

/// Validates `segments` and recomputes `frame_phase` and `compensated_phase`
/// from the schedule prefix, keeping `Phi` continuous across boundaries.
pub fn with_bookkeeping(mut segments: Vec<DriveSegment>) -> Result<Vec<DriveSegment>, TwoQubitError> {
    if segments.is_empty() {
        return Err(TwoQubitError::InvalidDrive("no segments".into()));
    }
    let mut t = 0.0;
    let mut phi = 0.0;
    for (i, s) in segments.iter_mut().enumerate() {
        if !(s.mod_freq.is_finite() && s.mod_freq != 0.0) {
            return Err(TwoQubitError::InvalidDrive(format!("segment {i}: modulation frequency must be nonzero")));
        }
        if !(s.duration.is_finite() && s.duration > 0.0) {
            return Err(TwoQubitError::InvalidDrive(format!("segment {i}: duration must be > 0")));
        }
        if !(s.amplitude.is_finite() && s.phase.is_finite()) {
            return Err(TwoQubitError::InvalidDrive(format!("segment {i}: non-finite amplitude or phase")));
        }
        s.frame_phase = s.ratio() * (s.mod_freq * t + s.phase).cos() + phi;
        s.compensated_phase = wrap(s.phase + s.frame_phase - FRAC_PI_2);
        t += s.duration;
        phi = s.phi_at(t);
    }
    Ok(segments)
}

fn starts(drive: &[DriveSegment]) -> Vec<f64> {
    let mut out = Vec::with_capacity(drive.len() + 1);
    let mut t = 0.0;
    out.push(0.0);
    for s in drive {
        t += s.duration;
        out.push(t);
    }
    out
}

pub fn total_duration(drive: &[DriveSegment]) -> f64 {
    drive.iter().map(|s| s.duration).sum()
}

fn locate(drive: &[DriveSegment], t: f64) -> Result<usize, TwoQubitError> {
    let b = starts(drive);
    let total = b[b.len() - 1];
    if !(t >= 0.0 && t <= total * (1.0 + 1e-12)) {
        return Err(TwoQubitError::InvalidDrive(format!("t = {t:e} s outside [0, {total:e}]")));
    }
    Ok((0..drive.len()).find(|&k| t < b[k + 1]).unwrap_or(drive.len() - 1))
}

/// Resonant effective coupling `<hi|H^R|lo>` of one segment:
/// `-i g ladder J1(A/Delta) exp(i(phi + c))`.
pub fn effective_coupling(params: &DeviceParams, gate: TwoQubitGate, seg: &DriveSegment) -> C64 {
    let mag = params.g12 * gate.ladder() * bessel::bessel_j(1, seg.ratio());
    C64::from_polar(mag, seg.phase + seg.frame_phase - FRAC_PI_2)
}

/// Lab-frame Hamiltonian at absolute time `t` under `drive`.
pub fn lab_hamiltonian(params: &DeviceParams, drive: &DriveSegment, t: f64) -> CMatrix {
    let mut h = ComplexMatrix::zeros(DIM);
    let mod_shift = drive.phi_dot(t);
    for a in 0..DIM {
        let (n1, _) = levels(a);
        h[(a, a)] = C64::new(params.bare_energy(a) + n1 as f64 * mod_shift, 0.0);
    }
    for c in couplings(params) {
        h[(c.hi, c.lo)] = C64::new(c.strength, 0.0);
        h[(c.lo, c.hi)] = C64::new(c.strength, 0.0);
    }
    h
}

/// Phases `theta_a(t)` with `U(t) = diag(exp(-i theta_a))`, evaluated with
/// segment `k`'s closed form for `Phi`.
fn frame_angles(params: &DeviceParams, seg: &DriveSegment, t: f64) -> [f64; DIM] {
    let phi = seg.phi_at(t);
    let mut out = [0.0; DIM];
    for (a, v) in out.iter_mut().enumerate() {
        *v = params.bare_energy(a) * t + levels(a).0 as f64 * phi;
    }
    out
}

/// `U(t) = exp(-i int_0^t H0(t') dt')`, diagonal.
pub fn rotating_frame_unitary(params: &DeviceParams, drive: &[DriveSegment], t: f64) -> Result<Unitary, TwoQubitError> {
    let drive = with_bookkeeping(drive.to_vec())?;
    let k = locate(&drive, t)?;
    let th = frame_angles(params, &drive[k], t);
    let d: Vec<C64> = th.iter().map(|&x| C64::from_polar(1.0, -x)).collect();
    Ok(UnitaryMatrix::new(ComplexMatrix::diagonal(&d)).expect("diagonal phases"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HamiltonianMethod {
    /// Truncated Jacobi-Anger sideband sum.
    Analytic { cutoff: usize },
    /// `U^dag H_lab U - i U^dag dU/dt` with a finite-difference derivative.
    FrameTransform,
    /// Closed-form phase factors.
    Exact,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SidebandTerm {
    pub m: i32,
    pub coefficient: C64,
    /// `(row, column)` of the matrix element; its transpose carries the conjugate.
    pub transition: (usize, usize),
    /// Oscillation frequency `E_row - E_col + m Delta` (rad/s).
    pub oscillation_freq: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SidebandExpansion {
    pub order_cutoff: usize,
    /// `A/Delta` the Bessel weights were evaluated at.
    pub ratio: f64,
    pub terms: Vec<SidebandTerm>,
}

impl SidebandExpansion {
    pub fn hamiltonian(&self, t: f64) -> CMatrix {
        let mut h = ComplexMatrix::zeros(DIM);
        for term in &self.terms {
            let v = term.coefficient * C64::from_polar(1.0, term.oscillation_freq * t);
            let (r, c) = term.transition;
            h[(r, c)] += v;
            h[(c, r)] += v.conj();
        }
        h
    }
}

/// Sideband expansion of `H^R` over one (bookkept) segment:
/// `exp(i Phi) = exp(i c) sum_m (-i)^m J_m(A/Delta) exp(i m (Delta t + phi))`.
pub fn sideband_expansion(
    params: &DeviceParams,
    seg: &DriveSegment,
    cutoff: usize,
) -> Result<SidebandExpansion, TwoQubitError> {
    let x = seg.ratio();
    let tail = bessel::tail_sum(cutoff, x);
    if tail >= SIDEBAND_TAIL_BOUND {
        return Err(TwoQubitError::CutoffTooLow { cutoff, tail });
    }
    let j = bessel::bessel_j_upto(cutoff, x);
    let mut terms = Vec::new();
    for c in couplings(params) {
        for m in -(cutoff as i32)..=(cutoff as i32) {
            let jm = if m < 0 && m % 2 != 0 { -j[m.unsigned_abs() as usize] } else { j[m.unsigned_abs() as usize] };
            let phase = seg.frame_phase - m as f64 * FRAC_PI_2 + m as f64 * seg.phase;
            terms.push(SidebandTerm {
                m,
                coefficient: C64::from_polar(c.strength * jm, phase),
                transition: (c.hi, c.lo),
                oscillation_freq: c.freq + m as f64 * seg.mod_freq,
            });
        }
    }
    Ok(SidebandExpansion { order_cutoff: cutoff, ratio: x, terms })
}

fn exact_rotating(params: &DeviceParams, seg: &DriveSegment, t: f64) -> CMatrix {
    let phi = seg.phi_at(t);
    let mut h = ComplexMatrix::zeros(DIM);
    for c in couplings(params) {
        let v = C64::from_polar(c.strength, c.freq * t + phi);
        h[(c.hi, c.lo)] = v;
        h[(c.lo, c.hi)] = v.conj();
    }
    h
}

fn frame_transform(params: &DeviceParams, seg: &DriveSegment, t: f64) -> CMatrix {
    let lab = lab_hamiltonian(params, seg, t);
    let rate =
        (0..DIM).map(|a| params.bare_energy(a).abs() + levels(a).0 as f64 * seg.amplitude.abs()).fold(0.0, f64::max);
    let delta = 0.05 / rate;
    const W: [f64; 3] = [3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0];
    let u = |s: f64| -> [C64; DIM] {
        let th = frame_angles(params, seg, s);
        th.map(|x| C64::from_polar(1.0, -x))
    };
    let u0 = u(t);
    let mut du = [C64::new(0.0, 0.0); DIM];
    for (j, w) in W.iter().enumerate() {
        let s = (j + 1) as f64 * delta;
        let (up, dn) = (u(t + s), u(t - s));
        for a in 0..DIM {
            du[a] += (up[a] - dn[a]) * (*w / delta);
        }
    }
    let mut h = ComplexMatrix::zeros(DIM);
    for a in 0..DIM {
        for b in 0..DIM {
            h[(a, b)] = u0[a].conj() * lab[(a, b)] * u0[b];
        }
        h[(a, a)] += C64::new(0.0, -1.0) * u0[a].conj() * du[a];
    }
    h
}

/// Rotating-frame Hamiltonian at absolute time `t`.
pub fn rotating_hamiltonian(
    params: &DeviceParams,
    drive: &[DriveSegment],
    t: f64,
    method: HamiltonianMethod,
) -> Result<CMatrix, TwoQubitError> {
    let drive = with_bookkeeping(drive.to_vec())?;
    let seg = &drive[locate(&drive, t)?];
    Ok(match method {
        HamiltonianMethod::Exact => exact_rotating(params, seg, t),
        HamiltonianMethod::FrameTransform => frame_transform(params, seg, t),
        HamiltonianMethod::Analytic { cutoff } => sideband_expansion(params, seg, cutoff)?.hamiltonian(t),
    })
}

/// Per-segment constant amplitude that keeps each segment's duration and area.
fn segment_rabi(ideal: &PulseSchedule) -> Vec<(f64, f64, f64)> {
    ideal
        .segments
        .iter()
        .map(|s| {
            let tau = s.duration / ideal.omega0;
            (s.area() / tau, tau, s.phase)
        })
        .collect()
}

/// `omega0` that puts the strongest segment of `schedule` at `J1(A/Delta) = j1`.
pub fn omega0_for_j1(params: &DeviceParams, gate: TwoQubitGate, schedule: &PulseSchedule, j1: f64) -> f64 {
    let peak = schedule.segments.iter().map(|s| s.area() / s.duration).fold(0.0, f64::max);
    2.0 * params.g12 * gate.ladder() * j1 / peak
}

fn drive_amplitudes(
    params: &DeviceParams,
    gate: TwoQubitGate,
    ideal: &PulseSchedule,
) -> Result<(f64, Vec<(f64, f64, f64)>), TwoQubitError> {
    params.validate()?;
    ideal.validate()?;
    let delta = resonance_select(params, gate);
    if delta == 0.0 {
        return Err(TwoQubitError::InvalidDrive("resonant modulation frequency is zero".into()));
    }
    let gmax = params.g12 * gate.ladder();
    let mut out = Vec::new();
    for (i, (rabi, tau, phase)) in segment_rabi(ideal).into_iter().enumerate() {
        let required = 0.5 * rabi;
        let x = bessel::inverse_j1(required / gmax).ok_or(TwoQubitError::AmplitudeUnreachable {
            segment: i,
            required,
            max: gmax * J1_PEAK,
        })?;
        out.push((x * delta, tau, phase));
    }
    Ok((delta, out))
}

/// Smallest-`|phi|`-agnostic root of `wrap(phi + x cos(w + phi) + offset - target) = 0`.
fn solve_phase(x: f64, w: f64, offset: f64, target: f64) -> Option<f64> {
    let h = |p: f64| p + x * (w + p).cos() + offset - target;
    let h0 = h(-PI);
    if !h0.is_finite() {
        return None;
    }
    let n = (h0 / (2.0 * PI)).ceil();
    let g = |p: f64| h(p) - 2.0 * PI * n;
    let (mut lo, mut hi) = (-PI, PI);
    if g(lo) == 0.0 {
        return Some(lo);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    let p = 0.5 * (lo + hi);
    p.is_finite().then_some(p)
}

/// Maps a single-qubit schedule onto segmented parametric driving with the
/// segment-wise phase compensation, so each segment's effective coupling is
/// `(Omega_k / 2) exp(i phi_k)` with `Omega_k` the segment's mean Rabi rate.
pub fn compensate_schedule(
    ideal: &PulseSchedule,
    params: &DeviceParams,
    gate: TwoQubitGate,
) -> Result<Vec<DriveSegment>, TwoQubitError> {
    let (delta, amps) = drive_amplitudes(params, gate, ideal)?;
    let mut t = 0.0;
    let mut phi_acc = 0.0;
    let mut out = Vec::with_capacity(amps.len());
    for (i, (a, tau, target)) in amps.into_iter().enumerate() {
        let x = a / delta;
        let p = solve_phase(x, delta * t, phi_acc - FRAC_PI_2, target)
            .ok_or(TwoQubitError::NoPhaseSolution { segment: i })?;
        let mut seg = DriveSegment::new(a, delta, p, tau);
        seg.frame_phase = x * (delta * t + p).cos() + phi_acc;
        t += tau;
        phi_acc = seg.phi_at(t);
        out.push(seg);
    }
    with_bookkeeping(out)
}

/// Same mapping without compensation: `phi_k = phi_k^target + pi/2`.
pub fn uncompensated_schedule(
    ideal: &PulseSchedule,
    params: &DeviceParams,
    gate: TwoQubitGate,
) -> Result<Vec<DriveSegment>, TwoQubitError> {
    let (delta, amps) = drive_amplitudes(params, gate, ideal)?;
    let segs = amps.into_iter().map(|(a, tau, phase)| DriveSegment::new(a, delta, phase + FRAC_PI_2, tau)).collect();
    with_bookkeeping(segs)
}

/// Embeds a single-qubit unitary on the gate's `(lo, hi)` transition.
pub fn embed_target(gate: TwoQubitGate, single: &Unitary) -> Unitary {
    let (lo, hi) = gate.transition();
    let m = single.matrix();
    let mut u = ComplexMatrix::identity(DIM);
    u[(lo, lo)] = m[(0, 0)];
    u[(lo, hi)] = m[(0, 1)];
    u[(hi, lo)] = m[(1, 0)];
    u[(hi, hi)] = m[(1, 1)];
    UnitaryMatrix::new(u).expect("embedding of a unitary")
}

/// A parametric two-qubit drive together with its ideal 9-level target.
#[derive(Clone, Debug)]
pub struct ParametricGate {
    pub name: String,
    pub kind: TwoQubitGate,
    pub drive: Vec<DriveSegment>,
    pub target: Unitary,
}

/// Builds the parametric version of `schedule` at operating point `j1`.
pub fn parametric_gate(
    params: &DeviceParams,
    schedule: &PulseSchedule,
    kind: TwoQubitGate,
    j1: f64,
    compensated: bool,
) -> Result<ParametricGate, TwoQubitError> {
    let single = schedule
        .ideal()
        .ok_or_else(|| TwoQubitError::InvalidDrive(format!("schedule '{}' names no gate", schedule.name)))?;
    // The sequence's global phase becomes a relative phase once embedded, so
    // align the target with the error-free single-qubit evolution.
    let realized = crate::evolution::evolve_unchecked(schedule, &ErrorModel::none(), DEFAULT_STEPS);
    let single = single.with_phase((&single.matrix().adjoint() * realized.matrix()).trace().arg());
    let mut s = schedule.clone();
    s.omega0 = omega0_for_j1(params, kind, schedule, j1);
    let drive =
        if compensated { compensate_schedule(&s, params, kind)? } else { uncompensated_schedule(&s, params, kind)? };
    let suffix = if compensated { "" } else { "-uncompensated" };
    Ok(ParametricGate {
        name: format!("{}-{}{}", kind.as_str(), schedule.name, suffix),
        kind,
        drive,
        target: embed_target(kind, &single),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Frame {
    Rotating,
    Lab,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimOptions {
    pub frame: Frame,
    /// Target step (s); each segment uses `ceil(duration / dt)` steps.
    pub dt: f64,
    /// Basis state whose trajectory is sampled.
    pub initial: Option<usize>,
    /// Approximate number of trajectory samples.
    pub samples: usize,
    pub check_halving: bool,
}

impl SimOptions {
    pub fn rotating() -> Self {
        Self { frame: Frame::Rotating, dt: DEFAULT_ROTATING_DT, initial: None, samples: 0, check_halving: true }
    }

    pub fn lab() -> Self {
        Self { frame: Frame::Lab, dt: DEFAULT_LAB_DT, ..Self::rotating() }
    }

    pub fn sampled(mut self, initial: usize, samples: usize) -> Self {
        self.initial = Some(initial);
        self.samples = samples;
        self
    }
}

type Blk<const N: usize> = [[C64; N]; N];

fn zero<const N: usize>() -> Blk<N> {
    [[C64::new(0.0, 0.0); N]; N]
}

fn eye<const N: usize>() -> Blk<N> {
    let mut m = zero::<N>();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = C64::new(1.0, 0.0);
    }
    m
}

fn mm<const N: usize>(a: &Blk<N>, b: &Blk<N>) -> Blk<N> {
    let mut c = zero::<N>();
    for i in 0..N {
        for k in 0..N {
            let aik = a[i][k];
            if aik.re == 0.0 && aik.im == 0.0 {
                continue;
            }
            for j in 0..N {
                c[i][j] += aik * b[k][j];
            }
        }
    }
    c
}

fn norm1<const N: usize>(a: &Blk<N>) -> f64 {
    (0..N).map(|j| (0..N).map(|i| a[i][j].norm()).sum::<f64>()).fold(0.0, f64::max)
}

/// `exp(m)` by scaled Taylor series, order chosen for double precision.
fn expm_small<const N: usize>(m: &Blk<N>) -> Blk<N> {
    let mut nrm = norm1(m);
    let mut squarings = 0;
    while nrm > 0.25 {
        nrm *= 0.5;
        squarings += 1;
    }
    let scale = 0.5f64.powi(squarings);
    let mut order = 1;
    let mut bound = nrm;
    while bound > 1e-18 && order < 30 {
        order += 1;
        bound *= nrm / order as f64;
    }
    let mut a = *m;
    for row in a.iter_mut() {
        for v in row.iter_mut() {
            *v *= scale;
        }
    }
    let mut e = eye::<N>();
    for k in (1..=order).rev() {
        let mut p = mm(&a, &e);
        let inv = 1.0 / k as f64;
        for (i, row) in p.iter_mut().enumerate() {
            for v in row.iter_mut() {
                *v *= inv;
            }
            row[i] += C64::new(1.0, 0.0);
        }
        e = p;
    }
    for _ in 0..squarings {
        e = mm(&e, &e);
    }
    e
}

/// Couplings and diagonal data restricted to one parity block.
struct BlockSpec<const N: usize> {
    /// `(local hi, local lo, strength, freq)`.
    couplings: Vec<(usize, usize, f64, f64)>,
    energy: [f64; N],
    n1: [f64; N],
}

impl<const N: usize> BlockSpec<N> {
    fn new(params: &DeviceParams, idx: [usize; N]) -> Self {
        let local = |a: usize| idx.iter().position(|&x| x == a);
        let couplings = couplings(params)
            .into_iter()
            .filter_map(|c| Some((local(c.hi)?, local(c.lo)?, c.strength, c.freq)))
            .collect();
        Self { couplings, energy: idx.map(|a| params.bare_energy(a)), n1: idx.map(|a| levels(a).0 as f64) }
    }

    fn hamiltonian(&self, frame: Frame, seg: &DriveSegment, t: f64) -> Blk<N> {
        let mut h = zero::<N>();
        match frame {
            Frame::Rotating => {
                let phi = seg.phi_at(t);
                for &(hi, lo, s, f) in &self.couplings {
                    let v = C64::from_polar(s, f * t + phi);
                    h[hi][lo] = v;
                    h[lo][hi] = v.conj();
                }
            }
            Frame::Lab => {
                let shift = seg.phi_dot(t);
                for i in 0..N {
                    h[i][i] = C64::new(self.energy[i] + self.n1[i] * shift, 0.0);
                }
                for &(hi, lo, s, _) in &self.couplings {
                    h[hi][lo] = C64::new(s, 0.0);
                    h[lo][hi] = C64::new(s, 0.0);
                }
            }
        }
        h
    }

    /// Fourth-order Magnus propagation over the drive; optionally records the
    /// column `sample.0` every `sample.1` steps.
    fn propagate(
        &self,
        frame: Frame,
        drive: &[DriveSegment],
        dt: f64,
        sample: Option<(usize, usize)>,
    ) -> (Blk<N>, Vec<(f64, [C64; N])>) {
        let c1 = 0.5 - 3f64.sqrt() / 6.0;
        let c2 = 0.5 + 3f64.sqrt() / 6.0;
        let k = 3f64.sqrt() / 12.0;
        let mut u = eye::<N>();
        let mut trace = Vec::new();
        let record = |t: f64, u: &Blk<N>, trace: &mut Vec<(f64, [C64; N])>| {
            if let Some((col, _)) = sample {
                trace.push((t, std::array::from_fn(|i| u[i][col])));
            }
        };
        record(0.0, &u, &mut trace);
        let mut count = 0usize;
        let mut start = 0.0;
        for seg in drive {
            let n = (seg.duration / dt).ceil().max(2.0) as usize;
            let h = seg.duration / n as f64;
            for j in 0..n {
                let t0 = start + j as f64 * h;
                let h1 = self.hamiltonian(frame, seg, t0 + c1 * h);
                let h2 = self.hamiltonian(frame, seg, t0 + c2 * h);
                let p = mm(&h2, &h1);
                let q = mm(&h1, &h2);
                let mut om = zero::<N>();
                for r in 0..N {
                    for c in 0..N {
                        om[r][c] = C64::new(0.0, -0.5 * h) * (h1[r][c] + h2[r][c]) - (p[r][c] - q[r][c]) * (k * h * h);
                    }
                }
                u = mm(&expm_small(&om), &u);
                count += 1;
                if let Some((_, stride)) = sample {
                    if count % stride == 0 {
                        record(t0 + h, &u, &mut trace);
                    }
                }
            }
            start += seg.duration;
        }
        if let Some((_, stride)) = sample {
            if count % stride != 0 {
                record(start, &u, &mut trace);
            }
        }
        (u, trace)
    }
}

struct RunOutput {
    unitary: CMatrix,
    trace: Vec<(f64, Vec<C64>)>,
    steps: usize,
}

fn run_once(params: &DeviceParams, drive: &[DriveSegment], opts: &SimOptions, dt: f64) -> RunOutput {
    let even = BlockSpec::new(params, EVEN);
    let odd = BlockSpec::new(params, ODD);
    let steps: usize = drive.iter().map(|s| (s.duration / dt).ceil().max(2.0) as usize).sum();
    let stride = if opts.samples > 0 { (steps / opts.samples).max(1) } else { usize::MAX };
    let sample_in = |idx: &[usize]| opts.initial.and_then(|a| idx.iter().position(|&x| x == a)).map(|c| (c, stride));
    let (ue, te) = even.propagate(opts.frame, drive, dt, sample_in(&EVEN));
    let (uo, to) = odd.propagate(opts.frame, drive, dt, sample_in(&ODD));
    let mut u = ComplexMatrix::zeros(DIM);
    for (i, &a) in EVEN.iter().enumerate() {
        for (j, &b) in EVEN.iter().enumerate() {
            u[(a, b)] = ue[i][j];
        }
    }
    for (i, &a) in ODD.iter().enumerate() {
        for (j, &b) in ODD.iter().enumerate() {
            u[(a, b)] = uo[i][j];
        }
    }
    let lift = |t: f64, col: &[C64], idx: &[usize]| {
        let mut v = vec![C64::new(0.0, 0.0); DIM];
        for (i, &a) in idx.iter().enumerate() {
            v[a] = col[i];
        }
        (t, v)
    };
    let mut trace: Vec<(f64, Vec<C64>)> = te.iter().map(|(t, c)| lift(*t, c, &EVEN)).collect();
    trace.extend(to.iter().map(|(t, c)| lift(*t, c, &ODD)));
    if opts.frame == Frame::Lab {
        let last = drive.last().expect("nonempty drive");
        let th = frame_angles(params, last, total_duration(drive));
        for (a, x) in th.iter().enumerate() {
            let ph = C64::from_polar(1.0, *x);
            for b in 0..DIM {
                u[(a, b)] *= ph;
            }
        }
        // sampled states stay in the lab frame; populations are frame independent
    }
    RunOutput { unitary: u, trace, steps }
}

/// Evolves the 9-level system under `drive`; the final unitary is always
/// reported in the rotating frame.
pub fn simulate_two_qubit(
    params: &DeviceParams,
    drive: &[DriveSegment],
    opts: &SimOptions,
) -> Result<EvolutionResult, TwoQubitError> {
    params.validate()?;
    if !(opts.dt.is_finite() && opts.dt > 0.0) {
        return Err(TwoQubitError::InvalidDrive(format!("step must be > 0, got {}", opts.dt)));
    }
    if let Some(a) = opts.initial {
        if a >= DIM {
            return Err(TwoQubitError::InvalidDrive(format!("initial state {a} out of range")));
        }
    }
    let drive = with_bookkeeping(drive.to_vec())?;
    let fine = run_once(params, &drive, opts, opts.dt * if opts.check_halving { 0.5 } else { 1.0 });
    let halving_change = if opts.check_halving {
        let coarse = run_once(params, &drive, &SimOptions { samples: 0, initial: None, ..*opts }, opts.dt);
        let change = coarse.unitary.max_abs_diff(&fine.unitary);
        if !(change <= HALVING_TOLERANCE) {
            return Err(TwoQubitError::ConvergenceFailure { change });
        }
        change
    } else {
        0.0
    };
    let defect = fine.unitary.unitarity_defect();
    let final_unitary =
        UnitaryMatrix::new(fine.unitary).map_err(|_| TwoQubitError::ConvergenceFailure { change: defect })?;
    let sampled_states = opts.initial.map(|_| {
        let mut tr = fine.trace;
        tr.sort_by(|a, b| a.0.total_cmp(&b.0));
        tr.into_iter().map(|(t, v)| (t, vec![State::normalized(v).expect("unitary column")])).collect()
    });
    Ok(EvolutionResult {
        final_unitary,
        sampled_states,
        steps: fine.steps,
        max_unitarity_defect: defect,
        halving_change,
    })
}

/// `(t, populations)` rows from a sampled run.
pub fn population_traces(result: &EvolutionResult) -> Vec<(f64, Vec<f64>)> {
    result
        .sampled_states
        .as_ref()
        .map(|rows| rows.iter().map(|(t, s)| (*t, s[0].populations())).collect())
        .unwrap_or_default()
}

/// Fidelity on the computational subspace.
pub fn gate_fidelity_2q(u: &Unitary, target: &Unitary) -> f64 {
    subspace_fidelity(u, target, &COMPUTATIONAL).expect("9-level unitaries")
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeltaAPoint {
    /// Amplitude offset (rad/s).
    pub delta_a: f64,
    /// `J1((A + dA)/Delta) / J1(A/Delta) - 1`.
    pub equivalent_epsilon: f64,
    pub fidelity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeltaASweep {
    pub points: Vec<DeltaAPoint>,
}

impl DeltaASweep {
    /// Spread `max F - min F` over the grid.
    pub fn variation(&self) -> f64 {
        let f = self.points.iter().map(|p| p.fidelity);
        f.clone().fold(f64::NEG_INFINITY, f64::max) - f.fold(f64::INFINITY, f64::min)
    }
}

fn shifted(drive: &[DriveSegment], delta_a: f64) -> Result<Vec<DriveSegment>, TwoQubitError> {
    let mut out = drive.to_vec();
    for s in &mut out {
        s.amplitude += delta_a;
        let ratio = s.ratio();
        if !(ratio > 0.0 && ratio < J1_PEAK_ARG) {
            return Err(TwoQubitError::BranchExceeded { ratio });
        }
    }
    with_bookkeeping(out)
}

/// Equivalent Rabi error of an amplitude offset, from the first segment.
pub fn equivalent_epsilon(gate: &ParametricGate, delta_a: f64) -> f64 {
    let s = &gate.drive[0];
    bessel::bessel_j(1, (s.amplitude + delta_a) / s.mod_freq) / bessel::bessel_j(1, s.ratio()) - 1.0
}

/// Amplitude offset whose equivalent Rabi error is `epsilon`.
pub fn delta_a_for_epsilon(gate: &ParametricGate, epsilon: f64) -> Result<f64, TwoQubitError> {
    let s = &gate.drive[0];
    let want = (1.0 + epsilon) * bessel::bessel_j(1, s.ratio());
    let x = bessel::inverse_j1(want).ok_or(TwoQubitError::BranchExceeded { ratio: f64::NAN })?;
    Ok(x * s.mod_freq - s.amplitude)
}

/// Subspace fidelity with every segment's `A` shifted by each grid value,
/// phases held at their nominal compensated values.
pub fn delta_a_sweep(
    params: &DeviceParams,
    gate: &ParametricGate,
    grid: &[f64],
    opts: &SimOptions,
) -> Result<DeltaASweep, TwoQubitError> {
    let points = grid
        .par_iter()
        .map(|&da| {
            let drive = shifted(&gate.drive, da)?;
            let r = simulate_two_qubit(params, &drive, opts)?;
            Ok(DeltaAPoint {
                delta_a: da,
                equivalent_epsilon: equivalent_epsilon(gate, da),
                fidelity: gate_fidelity_2q(&r.final_unitary, &gate.target),
            })
        })
        .collect::<Result<Vec<_>, TwoQubitError>>()?;
    Ok(DeltaASweep { points })
}

/// Diagonal phases `(p00, p01, p10, p11)` of the computational block.
pub fn computational_phases(u: &Unitary) -> [f64; 4] {
    COMPUTATIONAL.map(|a| u.matrix()[(a, a)].arg())
}

/// `p11 - p10 - p01 + p00`, wrapped to `(-pi, pi]`.
pub fn conditional_phase(u: &Unitary) -> f64 {
    let [p00, p01, p10, p11] = computational_phases(u);
    let w = wrap(p11 - p10 - p01 + p00);
    if w <= -PI + 1e-15 {
        PI
    } else {
        w
    }
}

/// Applies the single-qubit Z rotations that zero the phases of `|01>` and
/// `|10>` relative to `|00>`.
pub fn z_corrected(u: &Unitary) -> Unitary {
    let [p00, p01, p10, _] = computational_phases(u);
    let (z1, z2) = (p10 - p00, p01 - p00);
    let d: Vec<C64> = (0..DIM)
        .map(|a| {
            let (n1, n2) = levels(a);
            C64::from_polar(1.0, -(p00 + n1.min(1) as f64 * z1 + n2.min(1) as f64 * z2))
        })
        .collect();
    UnitaryMatrix::new(ComplexMatrix::diagonal(&d)).expect("phases").compose(u)
}

/// CZ on the computational subspace.
pub fn cz_target() -> Unitary {
    let mut d = vec![C64::new(1.0, 0.0); DIM];
    d[basis_index(1, 1)] = C64::new(-1.0, 0.0);
    UnitaryMatrix::new(ComplexMatrix::diagonal(&d)).expect("diagonal")
}

#[derive(Clone, Debug)]
pub struct CzOutcome {
    pub gate: ParametricGate,
    pub result: EvolutionResult,
    /// Phase offset of the second pi segment.
    pub delta: f64,
    pub conditional_phase: f64,
    /// Subspace fidelity to CZ after Z corrections.
    pub fidelity: f64,
}

/// Two compensated pi rotations on `|02> <-> |11>`, the second with phase
/// offset `delta`; a full cycle returns `|11>` with a phase `pi + delta`.
pub fn cz_gate(params: &DeviceParams, j1: f64, delta: f64) -> Result<ParametricGate, TwoQubitError> {
    use crate::pulses::{Envelope, PulseSegment, Scheme};
    let seg = |phase: f64| PulseSegment {
        duration: PI,
        envelope: Envelope::Constant { amplitude: 1.0 },
        phase,
        path_lambda: None,
    };
    let sched = PulseSchedule {
        name: "cz".into(),
        scheme: Scheme::Custom,
        gate: None,
        omega0: 1.0,
        alpha0: 0.0,
        lambda0: 0.0,
        segments: vec![seg(0.0), seg(delta)],
    };
    let mut s = sched.clone();
    s.omega0 = omega0_for_j1(params, TwoQubitGate::Cz, &sched, j1);
    Ok(ParametricGate {
        name: "cz".into(),
        kind: TwoQubitGate::Cz,
        drive: compensate_schedule(&s, params, TwoQubitGate::Cz)?,
        target: cz_target(),
    })
}

/// Simulates the CZ sequence; with `calibrate` the second segment's phase
/// offset is tuned by secant iteration until the conditional phase is `pi`.
pub fn run_cz(params: &DeviceParams, j1: f64, calibrate: bool, opts: &SimOptions) -> Result<CzOutcome, TwoQubitError> {
    let eval = |delta: f64| -> Result<(ParametricGate, EvolutionResult, f64), TwoQubitError> {
        let g = cz_gate(params, j1, delta)?;
        let r = simulate_two_qubit(params, &g.drive, opts)?;
        let c = conditional_phase(&r.final_unitary);
        Ok((g, r, c))
    };
    let miss = |c: f64| wrap(c - PI);
    let (mut d0, mut d1) = (0.0, 0.05);
    let (mut g, mut r, mut c) = eval(d0)?;
    if calibrate {
        let mut f0 = miss(c);
        let mut best = (d0, f0.abs());
        for _ in 0..30 {
            if f0.abs() < 1e-9 {
                break;
            }
            let (g1, r1, c1) = eval(d1)?;
            let f1 = miss(c1);
            (g, r, c) = (g1, r1, c1);
            if f1.abs() < best.1 {
                best = (d1, f1.abs());
            }
            if f1.abs() < 1e-9 || f1 == f0 {
                d0 = d1;
                break;
            }
            let next = d1 - f1 * (d1 - d0) / (f1 - f0);
            (d0, f0, d1) = (d1, f1, next);
        }
        if best.0 != d0 {
            d0 = best.0;
            (g, r, c) = eval(d0)?;
        }
    }
    let fidelity = gate_fidelity_2q(&z_corrected(&r.final_unitary), &cz_target());
    Ok(CzOutcome { gate: g, result: r, delta: d0, conditional_phase: c, fidelity })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pulses::{build_sr_ngqg, Gate, DEFAULT_OMEGA0};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p() -> DeviceParams {
        DeviceParams::default()
    }

    #[test]
    fn free_hamiltonian_diagonal() {
        let mut q = p();
        q.g12 = 1e-300;
        let h = lab_hamiltonian(&q, &DriveSegment::new(0.0, 1.0, 0.0, 1.0), 0.3);
        assert_eq!(h[(4, 4)].re, q.omega1 + q.omega2);
        assert!(h.max_abs_diff(&ComplexMatrix::diagonal(&(0..DIM).map(|a| h[(a, a)]).collect::<Vec<_>>())) < 1e-290);
    }

    #[test]
    fn ladder_element() {
        let q = p();
        let h = lab_hamiltonian(&q, &DriveSegment::new(1e8, 1e9, 0.3, 1e-8), 1e-9);
        let v = h[(basis_index(2, 0), basis_index(1, 1))];
        assert!((v.re - 2f64.sqrt() * q.g12).abs() < 1e-6);
        assert!(h.hermiticity_defect() < 1e-12);
    }

    #[test]
    fn frame_phase_single_segment() {
        // Phi over [0, pi/Delta] with A = Delta and phi = 0 is 2
        let d = 1e9;
        let seg = with_bookkeeping(vec![DriveSegment::new(d, d, 0.0, PI / d)]).unwrap();
        let phi = seg[0].phi_at(PI / d);
        assert!((phi - 2.0).abs() < 1e-12);
        let quad = crate::pulses::gauss_legendre(|t| d * (d * t).sin(), 0.0, PI / d, 16);
        assert!((quad - 2.0).abs() < 1e-10);
    }

    #[test]
    fn frame_is_continuous() {
        let segs = with_bookkeeping(vec![
            DriveSegment::new(3e8, 7e8, 0.4, 1.3e-8),
            DriveSegment::new(5e8, 7e8, -2.0, 0.7e-8),
            DriveSegment::new(1e8, 7e8, 1.0, 1.0e-8),
        ])
        .unwrap();
        let b = starts(&segs);
        for k in 0..2 {
            assert!((segs[k].phi_at(b[k + 1]) - segs[k + 1].phi_at(b[k + 1])).abs() < 1e-12);
        }
        let u = rotating_frame_unitary(&p(), &segs, 2.0e-8).unwrap();
        let m = u.matrix();
        for a in 0..DIM {
            for c in 0..DIM {
                if a != c {
                    assert_eq!(m[(a, c)], C64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn zero_amplitude_frame_is_free() {
        let q = p();
        let t = 3.3e-9;
        let u = rotating_frame_unitary(&q, &[DriveSegment::new(0.0, 1e9, 0.0, 1e-8)], t).unwrap();
        for a in 0..DIM {
            let want = C64::from_polar(1.0, -q.bare_energy(a) * t);
            assert!((u.matrix()[(a, a)] - want).norm() < 1e-9);
        }
    }

    #[test]
    fn zero_drive_keeps_only_m0() {
        let q = p();
        let drive = with_bookkeeping(vec![DriveSegment::new(0.0, 1e9, 0.0, 1e-8)]).unwrap();
        let ex = sideband_expansion(&q, &drive[0], 5).unwrap();
        let (lo, hi) = TwoQubitGate::ISwap.transition();
        let nonzero: Vec<_> = ex.terms.iter().filter(|t| t.coefficient.norm() > 0.0).collect();
        assert!(nonzero.iter().all(|t| t.m == 0));
        let main = nonzero.iter().find(|t| t.transition == (hi, lo)).unwrap();
        assert!((main.coefficient.norm() - q.g12).abs() < 1e-6);
        assert!((main.oscillation_freq - q.transition_detuning(1, 0)).abs() < 1e-3);
    }

    #[test]
    fn cutoff_too_low_is_reported() {
        let seg = with_bookkeeping(vec![DriveSegment::new(1.5e9, 1e9, 0.0, 1e-8)]).unwrap();
        assert!(matches!(sideband_expansion(&p(), &seg[0], 2), Err(TwoQubitError::CutoffTooLow { .. })));
    }

    #[test]
    fn analytic_matches_frame_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let mut q = p();
            q.omega1 = 2.0 * PI * rng.random_range(4.0e9..5.0e9);
            q.omega2 = 2.0 * PI * rng.random_range(5.2e9..6.0e9);
            let delta = q.omega2 - q.omega1;
            let drive = with_bookkeeping(
                (0..3)
                    .map(|_| {
                        DriveSegment::new(
                            rng.random_range(0.0..1.8) * delta,
                            delta,
                            rng.random_range(-PI..PI),
                            rng.random_range(5e-9..2e-8),
                        )
                    })
                    .collect(),
            )
            .unwrap();
            let total = total_duration(&drive);
            for _ in 0..5 {
                let t = rng.random_range(0.0..total);
                let a = rotating_hamiltonian(&q, &drive, t, HamiltonianMethod::Analytic { cutoff: 20 }).unwrap();
                let f = rotating_hamiltonian(&q, &drive, t, HamiltonianMethod::FrameTransform).unwrap();
                let e = rotating_hamiltonian(&q, &drive, t, HamiltonianMethod::Exact).unwrap();
                assert!(a.max_abs_diff(&f) < 1e-6 * q.g12, "{}", a.max_abs_diff(&f) / q.g12);
                assert!(a.max_abs_diff(&e) < 1e-9 * q.g12);
                assert!(a.hermiticity_defect() < 1e-10 * q.g12);
            }
        }
    }

    #[test]
    fn compensation_single_segment_limit() {
        // A -> 0: phi^ideal = phi + pi/2 - ... reduces to phi = target + pi/2
        let (x, target) = (1e-12, 0.7);
        let phi = solve_phase(x, 0.0, -FRAC_PI_2, target).unwrap();
        assert!((wrap(phi - target - FRAC_PI_2)).abs() < 1e-9);
    }

    #[test]
    fn compensation_back_substitution() {
        let q = p();
        let s = build_sr_ngqg(Gate::X, DEFAULT_OMEGA0);
        let g = parametric_gate(&q, &s, TwoQubitGate::ISwap, DEFAULT_J1, true).unwrap();
        assert_eq!(g.drive.len(), 4);
        let mut t = 0.0;
        for (seg, ps) in g.drive.iter().zip(&s.segments) {
            assert!(wrap(seg.compensated_phase - ps.phase).abs() < 1e-9);
            let want = C64::from_polar(q.g12 * DEFAULT_J1, ps.phase);
            assert!((effective_coupling(&q, TwoQubitGate::ISwap, seg) - want).norm() < 1e-9 * q.g12);
            // independent forward evaluation of the accumulated phase
            let quad: f64 = crate::pulses::gauss_legendre(
                |u| seg.amplitude * (seg.mod_freq * u + seg.phase).sin(),
                t,
                t + seg.duration,
                4096,
            );
            let end = seg.phi_at(t + seg.duration) - seg.phi_at(t);
            assert!((quad - end).abs() < 1e-8);
            t += seg.duration;
        }
    }

    #[test]
    fn amplitude_unreachable() {
        let q = p();
        let s = build_sr_ngqg(Gate::X, DEFAULT_OMEGA0);
        let r = parametric_gate(&q, &s, TwoQubitGate::ISwap, 0.6, true);
        assert!(matches!(r, Err(TwoQubitError::AmplitudeUnreachable { .. })));
    }

    #[test]
    fn resonances() {
        let q = p();
        assert_eq!(resonance_select(&q, TwoQubitGate::ISwap), q.omega2 - q.omega1);
        assert_eq!(resonance_select(&q, TwoQubitGate::Cz), q.omega2 + q.anh2 - q.omega1);
        let mut d = q;
        d.omega2 = d.omega1;
        let r = with_bookkeeping(vec![DriveSegment::new(1.0, resonance_select(&d, TwoQubitGate::ISwap), 0.0, 1e-8)]);
        assert!(matches!(r, Err(TwoQubitError::InvalidDrive(_))));
    }

    #[test]
    fn params_file_round_trip() {
        let q = p();
        let back = DeviceParams::from_toml_str(&q.to_toml_string()).unwrap();
        assert!((back.omega1 - q.omega1).abs() < 1e-3);
        assert!((back.g12 - q.g12).abs() < 1e-6);
        assert!(DeviceParams::from_toml_str("omega1_hz = 1").is_err());
        assert!(q.warnings().is_empty());
    }

    #[test]
    fn zero_drive_stays_near_identity() {
        let q = p();
        let d = resonance_select(&q, TwoQubitGate::ISwap);
        let r = simulate_two_qubit(&q, &[DriveSegment::new(0.0, d, 0.0, 30e-9)], &SimOptions::rotating()).unwrap();
        let u = r.final_unitary.matrix();
        // two-level off-resonant transfer bounds (2 g_ab / detuning)^2 per state
        let single = (2.0 * q.g12 / q.transition_detuning(1, 0)).powi(2);
        let double = (2.0 * 2f64.sqrt() * q.g12 / q.transition_detuning(1, 1)).powi(2)
            + (2.0 * 2f64.sqrt() * q.g12 / q.transition_detuning(2, 0)).powi(2);
        let counter = (2.0 * q.g12 / (q.omega1 + q.omega2)).powi(2);
        let leak = |a: usize| 1.0 - u[(a, a)].norm_sqr();
        assert!(leak(0) <= counter);
        assert!(leak(1) <= single + counter && leak(3) <= single + counter);
        assert!(leak(4) <= double + 2.0 * counter);
    }

    #[test]
    fn lab_frame_matches_rotating_frame() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let q = p();
            let gate = if rng.random_bool(0.5) { TwoQubitGate::ISwap } else { TwoQubitGate::Cz };
            let delta = resonance_select(&q, gate) * rng.random_range(0.97..1.03);
            let segments = rng.random_range(1..=3);
            let drive: Vec<_> = (0..segments)
                .map(|_| {
                    DriveSegment::new(
                        rng.random_range(0.2..1.6) * delta,
                        delta,
                        rng.random_range(-PI..PI),
                        rng.random_range(20e-9..60e-9) / segments as f64,
                    )
                })
                .collect();
            let rot = simulate_two_qubit(&q, &drive, &SimOptions::rotating()).unwrap();
            let lab = simulate_two_qubit(&q, &drive, &SimOptions::lab()).unwrap();
            worst = worst.max(rot.final_unitary.matrix().max_abs_diff(lab.final_unitary.matrix()));
        }
        assert!(worst < 1e-5, "{worst}");
    }

    #[test]
    fn iswap_transfers_population() {
        let q = p();
        let s = crate::pulses::build_dynamical_gaussian(Gate::X, 1.0 / 6.0, DEFAULT_OMEGA0);
        let g = parametric_gate(&q, &s, TwoQubitGate::ISwap, DEFAULT_J1, true).unwrap();
        let (lo, hi) = TwoQubitGate::ISwap.transition();
        let r = simulate_two_qubit(&q, &g.drive, &SimOptions::rotating().sampled(lo, 50)).unwrap();
        let rows = population_traces(&r);
        assert!(rows.len() >= 50);
        for (_, pops) in &rows {
            assert!((pops.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
        let last = &rows.last().unwrap().1;
        assert!(last[hi] > 0.99, "{}", last[hi]);
        assert!(rows.windows(2).all(|w| w[0].0 < w[1].0));
        assert!((rows.last().unwrap().0 - total_duration(&g.drive)).abs() < 1e-15);
    }

    #[test]
    fn taylor_exponential_matches_eigen() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut h = ComplexMatrix::zeros(4);
        for i in 0..4 {
            for j in i..4 {
                let v = C64::new(rng.random_range(-1.0..1.0), if i == j { 0.0 } else { rng.random_range(-1.0..1.0) });
                h[(i, j)] = v;
                h[(j, i)] = v.conj();
            }
        }
        let want = crate::linalg::mat_exp(&h, 0.9).unwrap();
        let m: Blk<4> = std::array::from_fn(|i| std::array::from_fn(|j| h[(i, j)] * C64::new(0.0, -0.9)));
        let e = expm_small(&m);
        for i in 0..4 {
            for j in 0..4 {
                assert!((e[i][j] - want.matrix()[(i, j)]).norm() < 1e-13);
            }
        }
    }
}
