//! Single-qubit time-ordered evolution under the drive Hamiltonian
//! `H0 = (Omega/2)(cos(phi) X + sin(phi) Y)` with a quasi-static Rabi error,
//! fidelity sweeps and scaling fits.
//!
//! Each step applies the fourth-order Magnus exponential built from the two
//! Gauss-Legendre points of the step. For constant-phase segments the
//! Hamiltonians commute and the step reduces to the exact exponential of the
//! step's pulse area.

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{self, GeometryError};
use crate::linalg::{gate_fidelity, su2_exp, ComplexMatrix, UnitaryMatrix};
use crate::pulses::{Envelope, PulseSchedule, PulseSegment};
use crate::{CMatrix, Unitary};

/// Default steps per segment.
pub const DEFAULT_STEPS: usize = 4096;
/// Minimum steps per segment accepted by [`evolve`].
pub const MIN_STEPS: usize = 256;
/// Step-halving tolerance on the final unitary.
pub const HALVING_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvolutionError {
    #[error("step halving changed the result by {change:e} (> {HALVING_TOLERANCE:e})")]
    StepTooCoarse { change: f64 },
    #[error("steps per segment must be >= {MIN_STEPS}, got {0}")]
    TooFewSteps(usize),
    #[error("|epsilon| = {0} outside the perturbative guard")]
    EpsilonOutOfRange(f64),
    #[error("fit needs >= 3 usable points, got {0}")]
    DegenerateFit(usize),
    #[error("invalid epsilon grid: {0}")]
    InvalidGrid(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    /// `Omega -> (1 + epsilon) Omega`.
    RabiProportional,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorModel {
    pub kind: ErrorKind,
    pub epsilon: f64,
}

impl ErrorModel {
    /// Default bound on `|epsilon|`.
    pub const GUARD: f64 = 1.0;

    pub fn rabi(epsilon: f64) -> Result<Self, EvolutionError> {
        Self::rabi_with_guard(epsilon, Self::GUARD)
    }

    pub fn rabi_with_guard(epsilon: f64, guard: f64) -> Result<Self, EvolutionError> {
        if !(epsilon.abs() < guard) {
            return Err(EvolutionError::EpsilonOutOfRange(epsilon));
        }
        Ok(Self { kind: ErrorKind::RabiProportional, epsilon })
    }

    pub fn none() -> Self {
        Self { kind: ErrorKind::RabiProportional, epsilon: 0.0 }
    }

    fn amplitude_scale(&self) -> f64 {
        match self.kind {
            ErrorKind::RabiProportional => 1.0 + self.epsilon,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EvolutionResult {
    pub final_unitary: Unitary,
    /// `(t, [U(t)|0>, U(t)|1>])` when sampling was requested.
    pub sampled_states: Option<Vec<(f64, Vec<crate::State>)>>,
    pub steps: usize,
    pub max_unitarity_defect: f64,
    /// `max |U_n - U_2n|` from the step-halving check.
    pub halving_change: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub points: Vec<(f64, f64)>,
    pub fitted_slope: f64,
    pub fit_range: (f64, f64),
}

/// Steps used for a segment: even, and aligned with table samples.
fn segment_steps(seg: &PulseSegment, requested: usize) -> usize {
    let n = requested.max(2);
    match &seg.envelope {
        Envelope::Table { amplitude, .. } => {
            let k = amplitude.len() - 1;
            let m = n.div_ceil(k);
            let steps = m * k;
            steps + steps % 2
        }
        _ => n + n % 2,
    }
}

/// Pauli vector `a` with `H = a . sigma` at local time `s`.
fn field(seg: &PulseSegment, s: f64, scale: f64) -> [f64; 3] {
    let (om, ph) = seg.drive(s);
    let r = 0.5 * scale * om;
    [r * ph.cos(), r * ph.sin(), 0.0]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Fourth-order Magnus propagator over local times `[s0, s1]`.
fn magnus_step(seg: &PulseSegment, s0: f64, s1: f64, scale: f64) -> CMatrix {
    let h = s1 - s0;
    let mid = 0.5 * (s0 + s1);
    let d = h / (2.0 * 3f64.sqrt());
    let a1 = field(seg, mid - d, scale);
    let a2 = field(seg, mid + d, scale);
    let c = cross(a2, a1);
    let k = 3f64.sqrt() / 6.0 * h * h;
    let g = [
        0.5 * h * (a1[0] + a2[0]) + k * c[0],
        0.5 * h * (a1[1] + a2[1]) + k * c[1],
        0.5 * h * (a1[2] + a2[2]) + k * c[2],
    ];
    su2_exp(0.0, g[0], g[1], g[2], 1.0)
}

fn mul2(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b
}

/// Propagates through the schedule, calling `visit(segment, local time, U)` at
/// every grid node (including both ends of each segment).
fn propagate(
    schedule: &PulseSchedule,
    error: &ErrorModel,
    steps_per_segment: usize,
    mut visit: impl FnMut(usize, f64, &CMatrix),
) -> (CMatrix, usize) {
    let scale = error.amplitude_scale();
    let mut u = ComplexMatrix::identity(2);
    let mut total = 0;
    for (i, seg) in schedule.segments.iter().enumerate() {
        let n = segment_steps(seg, steps_per_segment);
        let h = seg.duration / n as f64;
        visit(i, 0.0, &u);
        for k in 0..n {
            let s0 = k as f64 * h;
            let s1 = if k + 1 == n { seg.duration } else { (k + 1) as f64 * h };
            u = mul2(&magnus_step(seg, s0, s1, scale), &u);
            visit(i, s1, &u);
        }
        total += n;
    }
    (u, total)
}

fn check_inputs(schedule: &PulseSchedule, steps: usize) -> Result<(), EvolutionError> {
    if steps < MIN_STEPS {
        return Err(EvolutionError::TooFewSteps(steps));
    }
    schedule.validate().map_err(|e| EvolutionError::InvalidSchedule(e.to_string()))
}

/// Final unitary without the step-halving check.
pub fn evolve_unchecked(schedule: &PulseSchedule, error: &ErrorModel, steps_per_segment: usize) -> Unitary {
    let (u, _) = propagate(schedule, error, steps_per_segment, |_, _, _| {});
    UnitaryMatrix::new(u).expect("product of exact SU(2) steps")
}

/// Evolves the schedule and certifies the result by step halving.
pub fn evolve(
    schedule: &PulseSchedule,
    error: &ErrorModel,
    steps_per_segment: usize,
) -> Result<EvolutionResult, EvolutionError> {
    check_inputs(schedule, steps_per_segment)?;
    let (coarse, _) = propagate(schedule, error, steps_per_segment, |_, _, _| {});
    let mut defect: f64 = 0.0;
    let mut count = 0usize;
    let (fine, steps) = propagate(schedule, error, 2 * steps_per_segment, |_, _, u| {
        count += 1;
        if count % 64 == 0 {
            defect = defect.max(u.unitarity_defect());
        }
    });
    defect = defect.max(fine.unitarity_defect());
    let change = coarse.max_abs_diff(&fine);
    if !(change <= HALVING_TOLERANCE) {
        return Err(EvolutionError::StepTooCoarse { change });
    }
    let final_unitary = UnitaryMatrix::new(fine).map_err(|e| EvolutionError::InvalidSchedule(e.to_string()))?;
    Ok(EvolutionResult {
        final_unitary,
        sampled_states: None,
        steps,
        max_unitarity_defect: defect,
        halving_change: change,
    })
}

/// As [`evolve`], also recording `U(t)|0>` and `U(t)|1>` at `samples` evenly
/// spaced times.
pub fn evolve_sampled(
    schedule: &PulseSchedule,
    error: &ErrorModel,
    steps_per_segment: usize,
    samples: usize,
) -> Result<EvolutionResult, EvolutionError> {
    let mut r = evolve(schedule, error, steps_per_segment)?;
    let total = schedule.total_duration();
    let samples = samples.max(2);
    let times: Vec<f64> = (0..samples).map(|k| total * k as f64 / (samples - 1) as f64).collect();
    let us = unitaries_at(schedule, error, steps_per_segment, &times)?;
    r.sampled_states = Some(
        times
            .iter()
            .zip(us)
            .map(|(&t, u)| {
                let cols = (0..2).map(|c| u.apply(&crate::linalg::StateVector::basis(2, c))).collect();
                (t, cols)
            })
            .collect(),
    );
    Ok(r)
}

/// `U(t)` at each requested time (sorted ascending or not), stepping on the
/// regular grid and finishing each sample with a partial step.
pub fn unitaries_at(
    schedule: &PulseSchedule,
    error: &ErrorModel,
    steps_per_segment: usize,
    times: &[f64],
) -> Result<Vec<Unitary>, EvolutionError> {
    check_inputs(schedule, steps_per_segment)?;
    let scale = error.amplitude_scale();
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut out: Vec<Option<Unitary>> = vec![None; times.len()];
    let mut next = 0;
    let mut u = ComplexMatrix::identity(2);
    let mut t0 = 0.0;
    let nseg = schedule.segments.len();
    for (i, seg) in schedule.segments.iter().enumerate() {
        let n = segment_steps(seg, steps_per_segment);
        let h = seg.duration / n as f64;
        for k in 0..n {
            let s0 = k as f64 * h;
            let s1 = if k + 1 == n { seg.duration } else { (k + 1) as f64 * h };
            let last_step = i + 1 == nseg && k + 1 == n;
            while next < order.len() {
                let t = times[order[next]];
                let inside = t - t0 < s1 || last_step;
                if !inside {
                    break;
                }
                let s = (t - t0).clamp(s0, s1);
                let part = if s > s0 { mul2(&magnus_step(seg, s0, s, scale), &u) } else { u.clone() };
                out[order[next]] = Some(UnitaryMatrix::new(part).expect("unitary step product"));
                next += 1;
            }
            u = mul2(&magnus_step(seg, s0, s1, scale), &u);
        }
        t0 += seg.duration;
    }
    Ok(out.into_iter().map(|u| u.expect("every time visited")).collect())
}

/// `M = int U(t)^dagger H0(t) U(t) dt` at zero error, by composite Simpson
/// quadrature on the grid nodes of each segment.
pub fn response_matrix(schedule: &PulseSchedule, steps_per_segment: usize) -> Result<CMatrix, EvolutionError> {
    check_inputs(schedule, steps_per_segment)?;
    let mut m = ComplexMatrix::zeros(2);
    let mut node = 0usize;
    let mut current = usize::MAX;
    let mut h = 0.0;
    let mut n = 0usize;
    propagate(schedule, &ErrorModel::none(), steps_per_segment, |i, s, u| {
        let seg = &schedule.segments[i];
        if i != current {
            current = i;
            node = 0;
            n = segment_steps(seg, steps_per_segment);
            h = seg.duration / n as f64;
        }
        let w = if node == 0 || node == n {
            1.0
        } else if node % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let a = field(seg, s, 1.0);
        let hm = ComplexMatrix::from_vec(
            2,
            vec![
                Complex64::new(a[2], 0.0),
                Complex64::new(a[0], -a[1]),
                Complex64::new(a[0], a[1]),
                Complex64::new(-a[2], 0.0),
            ],
        )
        .expect("finite field");
        let f = &(&u.adjoint() * &hm) * u;
        m = &m + &f.scale_re(w * h / 3.0);
        node += 1;
    });
    Ok(m)
}

/// Least-squares slope of `log(1 - F)` against `log|eps|`, skipping `eps = 0`
/// and points with `1 - F < 1e-12`.
pub fn fit_log_slope(points: &[(f64, f64)]) -> Result<f64, EvolutionError> {
    let xy: Vec<(f64, f64)> = points
        .iter()
        .filter(|(e, f)| *e != 0.0 && 1.0 - f >= 1e-12)
        .map(|(e, f)| (e.abs().ln(), (1.0 - f).ln()))
        .collect();
    if xy.len() < 3 {
        return Err(EvolutionError::DegenerateFit(xy.len()));
    }
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return Err(EvolutionError::DegenerateFit(1));
    }
    Ok(sxy / sxx)
}

/// Fidelity to `ideal` at each `eps` (evaluated in parallel) and the fitted
/// log-log slope of the infidelity.
pub fn fidelity_sweep(
    schedule: &PulseSchedule,
    ideal: &Unitary,
    eps_grid: &[f64],
) -> Result<SweepResult, EvolutionError> {
    fidelity_sweep_with_steps(schedule, ideal, eps_grid, DEFAULT_STEPS)
}

pub fn fidelity_sweep_with_steps(
    schedule: &PulseSchedule,
    ideal: &Unitary,
    eps_grid: &[f64],
    steps_per_segment: usize,
) -> Result<SweepResult, EvolutionError> {
    let mut sorted = eps_grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(EvolutionError::InvalidGrid("grid values must be distinct".into()));
    }
    let points: Vec<(f64, f64)> = sorted
        .par_iter()
        .map(|&e| {
            let err = ErrorModel::rabi(e)?;
            let r = evolve(schedule, &err, steps_per_segment)?;
            let f = gate_fidelity(&r.final_unitary, ideal).expect("qubit dimensions");
            Ok((e, f))
        })
        .collect::<Result<_, EvolutionError>>()?;
    let fitted_slope = fit_log_slope(&points)?;
    let fit_range = (sorted[0], sorted[sorted.len() - 1]);
    Ok(SweepResult { points, fitted_slope, fit_range })
}

/// `1 - (1/4) sum_mn |D_mn|^2`, valid to second order in `eps`.
pub fn first_order_fidelity(schedule: &PulseSchedule, epsilon: f64) -> Result<f64, GeometryError> {
    if epsilon == 0.0 {
        return Ok(1.0);
    }
    let d = geometry::robustness_integral(schedule, DEFAULT_STEPS)?;
    Ok(1.0 - 0.25 * d.sum_sq() * epsilon * epsilon)
}

/// `max |U(eps) - U0 (1 - i eps M)|`, the residual of the first-order
/// expansion of the evolution operator.
pub fn first_order_residual(schedule: &PulseSchedule, epsilon: f64) -> Result<f64, EvolutionError> {
    let u0 = evolve(schedule, &ErrorModel::none(), DEFAULT_STEPS)?.final_unitary;
    let u = evolve(schedule, &ErrorModel::rabi(epsilon)?, DEFAULT_STEPS)?.final_unitary;
    let m = response_matrix(schedule, DEFAULT_STEPS)?;
    let lin = &ComplexMatrix::identity(2) - &m.scale(Complex64::new(0.0, epsilon));
    let approx = u0.matrix() * &lin;
    Ok(u.matrix().max_abs_diff(&approx))
}

/// Rotation angle of a qubit unitary, `2 acos(|Tr U|/2)`.
pub fn rotation_angle(u: &Unitary) -> f64 {
    2.0 * (u.matrix().trace().norm() / 2.0).min(1.0).acos()
}
