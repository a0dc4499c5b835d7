//! Auxiliary-state geometry: polar/azimuth paths, the drive they imply, the
//! connection (A) and dynamical (K) matrices, geometric and dynamical phases,
//! the robustness integral and Bloch trajectories.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use thiserror::Error;

use crate::evolution::{self, ErrorModel, EvolutionError};
use crate::linalg::{ComplexMatrix, StateVector, UnitaryMatrix};
use crate::pulses::{gauss_legendre, Envelope, Gate, PulseSchedule, PulseSegment, Scheme, MIN_TABLE_SAMPLES};
use crate::{State, Unitary};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("path is singular at t = {t}: drive amplitude diverges")]
    SingularPath { t: f64 },
    #[error("t = {t} lies on a segment boundary or outside the schedule")]
    BoundaryTime { t: f64 },
    #[error("schedule segment {0} has no closed-form auxiliary path")]
    NoPath(usize),
    #[error(transparent)]
    EvolutionFailed(#[from] EvolutionError),
}

/// Polar-angle profile `alpha(s) - alpha(segment start)`.
#[derive(Clone, Debug, PartialEq)]
pub enum AlphaProfile {
    Hold,
    /// `alpha_dot` equals the envelope value.
    Envelope(Envelope),
    Linear {
        rate: f64,
    },
    /// `total * s / D + sum_m c_m sin(2 m pi s / D)`.
    Fourier {
        total: f64,
        coeffs: Vec<f64>,
    },
}

/// Azimuth profile.
#[derive(Clone, Debug, PartialEq)]
pub enum LambdaProfile {
    Constant(f64),
    Linear {
        start: f64,
        rate: f64,
    },
    /// `lambda_dot = gamma'(alpha) alpha_dot cos(alpha)` with
    /// `gamma(alpha) = 2 alpha + sum_n C_n sin(2 n alpha)`; `start` is the
    /// azimuth where the segment begins.
    GammaSeries {
        start: f64,
        coeffs: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathSegment {
    pub duration: f64,
    pub alpha: AlphaProfile,
    pub lambda: LambdaProfile,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathSpec {
    pub alpha0: f64,
    pub segments: Vec<PathSegment>,
}

fn gamma_prime(coeffs: &[f64], a: f64) -> f64 {
    2.0 + coeffs
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let n = (k + 1) as f64;
            2.0 * n * c * (2.0 * n * a).cos()
        })
        .sum::<f64>()
}

/// Antiderivative of `gamma'(alpha) cos(alpha)`.
fn gamma_lambda(coeffs: &[f64], a: f64) -> f64 {
    2.0 * a.sin()
        + coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let n = (k + 1) as f64;
                n * c * (((2.0 * n + 1.0) * a).sin() / (2.0 * n + 1.0) + ((2.0 * n - 1.0) * a).sin() / (2.0 * n - 1.0))
            })
            .sum::<f64>()
}

impl PathSegment {
    /// `alpha(s) - alpha(0)` in local time.
    pub fn alpha_increment(&self, s: f64) -> f64 {
        match &self.alpha {
            AlphaProfile::Hold => 0.0,
            AlphaProfile::Envelope(e) => e.area_until(s, self.duration),
            AlphaProfile::Linear { rate } => rate * s,
            AlphaProfile::Fourier { total, coeffs } => {
                let u = s / self.duration;
                total * u
                    + coeffs.iter().enumerate().map(|(k, c)| c * (2.0 * (k + 1) as f64 * PI * u).sin()).sum::<f64>()
            }
        }
    }

    pub fn alpha_dot(&self, s: f64) -> f64 {
        match &self.alpha {
            AlphaProfile::Hold => 0.0,
            AlphaProfile::Envelope(e) => e.value(s, self.duration),
            AlphaProfile::Linear { rate } => *rate,
            AlphaProfile::Fourier { total, coeffs } => {
                let d = self.duration;
                total / d
                    + coeffs
                        .iter()
                        .enumerate()
                        .map(|(k, c)| {
                            let w = 2.0 * (k + 1) as f64 * PI / d;
                            c * w * (w * s).cos()
                        })
                        .sum::<f64>()
            }
        }
    }

    /// Azimuth at local time `s`, given the segment's starting polar angle.
    pub fn lambda(&self, s: f64, alpha_start: f64) -> f64 {
        match &self.lambda {
            LambdaProfile::Constant(l) => *l,
            LambdaProfile::Linear { start, rate } => start + rate * s,
            LambdaProfile::GammaSeries { start, coeffs } => {
                let a = alpha_start + self.alpha_increment(s);
                start + gamma_lambda(coeffs, a) - gamma_lambda(coeffs, alpha_start)
            }
        }
    }

    pub fn lambda_dot(&self, s: f64, alpha_start: f64) -> f64 {
        match &self.lambda {
            LambdaProfile::Constant(_) => 0.0,
            LambdaProfile::Linear { rate, .. } => *rate,
            LambdaProfile::GammaSeries { coeffs, .. } => {
                let a = alpha_start + self.alpha_increment(s);
                gamma_prime(coeffs, a) * self.alpha_dot(s) * a.cos()
            }
        }
    }

    /// `lambda_dot * tan(alpha)`, kept finite where the profile allows it.
    pub fn lambda_dot_tan_alpha(&self, s: f64, alpha_start: f64) -> f64 {
        let a = alpha_start + self.alpha_increment(s);
        match &self.lambda {
            LambdaProfile::Constant(_) => 0.0,
            LambdaProfile::Linear { rate, .. } if *rate == 0.0 => 0.0,
            LambdaProfile::Linear { rate, .. } => {
                if a.cos().abs() < 1e-12 {
                    f64::INFINITY
                } else {
                    rate * a.tan()
                }
            }
            LambdaProfile::GammaSeries { coeffs, .. } => gamma_prime(coeffs, a) * self.alpha_dot(s) * a.sin(),
        }
    }
}

impl PathSpec {
    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Polar angle at each segment start, plus the final value.
    pub fn alpha_starts(&self) -> Vec<f64> {
        let mut a = self.alpha0;
        let mut out = vec![a];
        for s in &self.segments {
            a += s.alpha_increment(s.duration);
            out.push(a);
        }
        out
    }

    fn locate(&self, t: f64) -> (usize, f64, f64) {
        let starts = self.alpha_starts();
        let mut t0 = 0.0;
        for (i, s) in self.segments.iter().enumerate() {
            if t <= t0 + s.duration || i + 1 == self.segments.len() {
                return (i, (t - t0).clamp(0.0, s.duration), starts[i]);
            }
            t0 += s.duration;
        }
        unreachable!("path has segments")
    }

    pub fn alpha(&self, t: f64) -> f64 {
        let (i, s, a0) = self.locate(t);
        a0 + self.segments[i].alpha_increment(s)
    }

    pub fn lambda(&self, t: f64) -> f64 {
        let (i, s, a0) = self.locate(t);
        self.segments[i].lambda(s, a0)
    }

    /// Reads the path encoded by a constant-phase schedule: `alpha_dot = Omega`
    /// and `lambda = phi - pi/2`. The single-shot shaped pulse maps back to its
    /// defining path.
    pub fn from_schedule(schedule: &PulseSchedule) -> Result<PathSpec, GeometryError> {
        if schedule.scheme == Scheme::Sssp {
            return Ok(sssp_path());
        }
        let mut segments = Vec::with_capacity(schedule.segments.len());
        for (i, seg) in schedule.segments.iter().enumerate() {
            if !seg.envelope.has_constant_phase() {
                return Err(GeometryError::NoPath(i));
            }
            segments.push(PathSegment {
                duration: seg.duration,
                alpha: AlphaProfile::Envelope(seg.envelope.clone()),
                lambda: LambdaProfile::Constant(seg.path_lambda.unwrap_or(seg.phase - FRAC_PI_2)),
            });
        }
        Ok(PathSpec { alpha0: schedule.alpha0, segments })
    }
}

/// Path of the single-shot shaped `X` pulse, scaled so its peak drive is 1.
pub fn sssp_path() -> PathSpec {
    let coeffs = crate::pulses::SSSP_GAMMA_COEFFS.to_vec();
    let unit = PathSegment {
        duration: 1.0,
        alpha: AlphaProfile::Fourier { total: PI, coeffs: crate::pulses::SSSP_ALPHA_COEFFS.to_vec() },
        lambda: LambdaProfile::GammaSeries { start: -FRAC_PI_2, coeffs },
    };
    // Omega scales as 1/T, so the peak over unit time is the duration needed
    // for a unit peak.
    let n = 20_000;
    let peak = (0..=n)
        .map(|k| {
            let s = k as f64 / n as f64;
            unit.alpha_dot(s).hypot(unit.lambda_dot_tan_alpha(s, 0.0))
        })
        .fold(0.0, f64::max);
    PathSpec { alpha0: 0.0, segments: vec![PathSegment { duration: peak, ..unit }] }
}

/// Drive `(Omega, phi)` implied by the path at local time `s` of a segment.
fn implied_drive(seg: &PathSegment, s: f64, alpha_start: f64) -> (f64, f64) {
    let ad = seg.alpha_dot(s);
    let lt = seg.lambda_dot_tan_alpha(s, alpha_start);
    let lam = seg.lambda(s, alpha_start);
    let omega = ad.hypot(lt);
    let phi = if omega > 0.0 { lam + ad.atan2(-lt) } else { lam + FRAC_PI_2 };
    (omega, phi)
}

/// Converts a path to the drive that keeps the auxiliary states on it,
/// `Omega = sqrt(alpha_dot^2 + (lambda_dot tan alpha)^2)` and
/// `phi = lambda + atan2(alpha_dot, -lambda_dot tan alpha)` (the `Omega >= 0`
/// branch).
pub fn path_to_pulse(path: &PathSpec) -> Result<PulseSchedule, GeometryError> {
    path_to_pulse_sampled(path, MIN_TABLE_SAMPLES)
}

/// As [`path_to_pulse`], with `samples` points for segments that need a table.
pub fn path_to_pulse_sampled(path: &PathSpec, samples: usize) -> Result<PulseSchedule, GeometryError> {
    let samples = samples.max(MIN_TABLE_SAMPLES);
    let starts = path.alpha_starts();
    let mut segments = Vec::with_capacity(path.segments.len());
    let mut t0 = 0.0;
    for (i, seg) in path.segments.iter().enumerate() {
        let out = match (&seg.alpha, &seg.lambda) {
            (AlphaProfile::Envelope(e), LambdaProfile::Constant(l)) => PulseSegment {
                duration: seg.duration,
                envelope: e.clone(),
                phase: l + FRAC_PI_2,
                path_lambda: Some(*l),
            },
            (AlphaProfile::Hold, LambdaProfile::Constant(l)) => PulseSegment {
                duration: seg.duration,
                envelope: Envelope::Constant { amplitude: 0.0 },
                phase: l + FRAC_PI_2,
                path_lambda: Some(*l),
            },
            (AlphaProfile::Linear { rate }, LambdaProfile::Constant(l)) => PulseSegment {
                duration: seg.duration,
                envelope: Envelope::Constant { amplitude: rate.abs() },
                phase: l + FRAC_PI_2.copysign(*rate),
                path_lambda: Some(*l),
            },
            _ => {
                let mut amp = Vec::with_capacity(samples);
                let mut ph = Vec::with_capacity(samples);
                let mut prev: Option<f64> = None;
                for k in 0..samples {
                    let s = seg.duration * k as f64 / (samples - 1) as f64;
                    let (o, mut p) = implied_drive(seg, s, starts[i]);
                    if !(o.is_finite() && p.is_finite()) {
                        return Err(GeometryError::SingularPath { t: t0 + s });
                    }
                    if let Some(q) = prev {
                        p = q + wrap(p - q);
                    }
                    prev = Some(p);
                    amp.push(o);
                    ph.push(p);
                }
                let base = ph[0];
                PulseSegment {
                    duration: seg.duration,
                    envelope: Envelope::Table { amplitude: amp, phase: ph.iter().map(|p| p - base).collect() },
                    phase: base,
                    path_lambda: None,
                }
            }
        };
        segments.push(out);
        t0 += seg.duration;
    }
    let lambda0 = path.segments[0].lambda(0.0, path.alpha0);
    Ok(PulseSchedule {
        name: "path".into(),
        scheme: Scheme::Custom,
        gate: None,
        omega0: crate::pulses::DEFAULT_OMEGA0,
        alpha0: path.alpha0,
        lambda0,
        segments,
    })
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Largest deviations between a schedule and the drive its path implies.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Eq2Residual {
    pub amplitude: f64,
    pub phase: f64,
}

/// Checks the path/drive relations on `points` interior times per segment.
/// Tabulated segments are checked on their sample nodes, where the table is
/// defined; between nodes they carry linear-interpolation error.
pub fn eq2_residual(path: &PathSpec, schedule: &PulseSchedule, points: usize) -> Eq2Residual {
    let starts = path.alpha_starts();
    let mut res = Eq2Residual { amplitude: 0.0, phase: 0.0 };
    for (i, (pseg, sseg)) in path.segments.iter().zip(&schedule.segments).enumerate() {
        let times: Vec<f64> = match &sseg.envelope {
            Envelope::Table { amplitude, .. } => {
                let n = amplitude.len() - 1;
                (0..=n).map(|k| sseg.duration * k as f64 / n as f64).collect()
            }
            _ => (0..points).map(|k| sseg.duration * (k as f64 + 0.5) / points as f64).collect(),
        };
        for s in times {
            let (o_path, p_path) = implied_drive(pseg, s, starts[i]);
            let (o, p) = sseg.drive(s);
            res.amplitude = res.amplitude.max((o - o_path).abs());
            if o_path > 1e-9 {
                res.phase = res.phase.max(wrap(p - p_path).abs());
            }
        }
    }
    res
}

/// Orthonormal auxiliary pair at `(alpha, lambda)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AuxiliaryFrame {
    pub xi1: State,
    pub xi2: State,
}

impl AuxiliaryFrame {
    pub fn at(alpha: f64, lambda: f64) -> Self {
        let (s, c) = (0.5 * alpha).sin_cos();
        let e = Complex64::from_polar(1.0, lambda);
        let xi1 = StateVector::new(vec![Complex64::new(c, 0.0), e * s]).expect("unit norm");
        let xi2 = StateVector::new(vec![e.conj() * s, Complex64::new(-c, 0.0)]).expect("unit norm");
        Self { xi1, xi2 }
    }

    pub fn of_schedule(schedule: &PulseSchedule) -> Self {
        Self::at(schedule.alpha0, schedule.lambda0)
    }
}

/// Diagonal connection and dynamical terms and the off-diagonal residual.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeomKinetics {
    pub a_diag: f64,
    pub k_diag: f64,
    pub offdiag_residual: Complex64,
}

/// Evaluates `A_ij = i<xi_i|d_t xi_j>` and `K_ij = -<xi_i|H0|xi_j>` at `t`.
pub fn ak_matrices(path: &PathSpec, schedule: &PulseSchedule, t: f64) -> Result<GeomKinetics, GeometryError> {
    let total = path.total_duration();
    let tol = 1e-9 * total.max(1.0);
    if !(t > tol && t < total - tol) || schedule.boundaries().iter().any(|b| (t - b).abs() < tol) {
        return Err(GeometryError::BoundaryTime { t });
    }
    let (i, s, a_start) = path.locate(t);
    let seg = &path.segments[i];
    let a = a_start + seg.alpha_increment(s);
    let l = seg.lambda(s, a_start);
    let ad = seg.alpha_dot(s);
    let ld = seg.lambda_dot(s, a_start);
    let (sn, cs) = (0.5 * a).sin_cos();
    let e = Complex64::from_polar(1.0, l);
    let i1 = Complex64::i();
    let xi1 = [Complex64::new(cs, 0.0), e * sn];
    let xi2 = [e.conj() * sn, Complex64::new(-cs, 0.0)];
    let dxi1 = [Complex64::new(-0.5 * sn * ad, 0.0), e * (0.5 * cs * ad) + i1 * e * (ld * sn)];
    let dxi2 = [e.conj() * (0.5 * cs * ad) - i1 * e.conj() * (ld * sn), Complex64::new(0.5 * sn * ad, 0.0)];
    let inner = |u: &[Complex64; 2], v: &[Complex64; 2]| u[0].conj() * v[0] + u[1].conj() * v[1];
    let (om, ph) = schedule.drive(t);
    let h01 = Complex64::from_polar(0.5 * om, -ph);
    let hv = |v: &[Complex64; 2]| [h01 * v[1], h01.conj() * v[0]];
    let a11 = i1 * inner(&xi1, &dxi1);
    let a12 = i1 * inner(&xi1, &dxi2);
    let k11 = -inner(&xi1, &hv(&xi1));
    let k12 = -inner(&xi1, &hv(&xi2));
    Ok(GeomKinetics { a_diag: a11.re, k_diag: k11.re, offdiag_residual: a12 + k12 })
}

/// Boundary jumps `(alpha at boundary, delta lambda)` between segments.
fn lambda_jumps(path: &PathSpec) -> Vec<(f64, f64)> {
    let starts = path.alpha_starts();
    path.segments
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            let a = starts[k + 1];
            let before = w[0].lambda(w[0].duration, starts[k]);
            let after = w[1].lambda(0.0, a);
            (a, after - before)
        })
        .collect()
}

fn smooth_integral(path: &PathSpec, f: impl Fn(&PathSegment, f64, f64) -> f64) -> f64 {
    let starts = path.alpha_starts();
    path.segments
        .iter()
        .enumerate()
        .map(|(i, seg)| match seg.lambda {
            LambdaProfile::Constant(_) => 0.0,
            _ => gauss_legendre(|s| f(seg, s, starts[i]), 0.0, seg.duration, 512),
        })
        .sum()
}

/// `int (1/2) lambda_dot sin(alpha) tan(alpha) dt`, the residual dynamical
/// phase. Azimuth jumps count only where `sin(alpha) tan(alpha)` is finite
/// and nonzero.
pub fn dynamical_phase_check(path: &PathSpec) -> f64 {
    let smooth = smooth_integral(path, |seg, s, a0| {
        let a = a0 + seg.alpha_increment(s);
        0.5 * seg.lambda_dot_tan_alpha(s, a0) * a.sin()
    });
    let jumps: f64 = lambda_jumps(path)
        .into_iter()
        .map(|(a, dl)| {
            let w = a.sin() * a.tan();
            if a.cos().abs() > 1e-12 && w.abs() > 1e-12 {
                0.5 * dl * w
            } else {
                0.0
            }
        })
        .sum();
    smooth + jumps
}

/// `-int lambda_dot sin^2(alpha/2) dt`, with each azimuth jump contributing
/// `-delta_lambda sin^2(alpha/2)`.
pub fn geometric_phase(path: &PathSpec) -> f64 {
    let smooth = smooth_integral(path, |seg, s, a0| {
        let a = a0 + seg.alpha_increment(s);
        let h = (0.5 * a).sin();
        -seg.lambda_dot(s, a0) * h * h
    });
    let jumps: f64 = lambda_jumps(path)
        .into_iter()
        .map(|(a, dl)| {
            let h = (0.5 * a).sin();
            -dl * h * h
        })
        .sum();
    smooth + jumps
}

/// Ideal operator `e^{i g}|xi1(T)><xi1(0)| + e^{-i g}|xi2(T)><xi2(0)|`, with
/// `g` the geometric phase plus any residual dynamical phase.
pub fn ideal_gate_from_path(path: &PathSpec) -> Unitary {
    let a_end = *path.alpha_starts().last().expect("nonempty");
    let last = path.segments.last().expect("nonempty");
    let starts = path.alpha_starts();
    let l_end = last.lambda(last.duration, starts[starts.len() - 2]);
    let l_start = path.segments[0].lambda(0.0, path.alpha0);
    let f0 = AuxiliaryFrame::at(path.alpha0, l_start);
    let f1 = AuxiliaryFrame::at(a_end, l_end);
    let g = geometric_phase(path) + dynamical_phase_check(path);
    let p = Complex64::from_polar(1.0, g);
    let mut m = ComplexMatrix::zeros(2);
    for r in 0..2 {
        for c in 0..2 {
            m[(r, c)] = p * f1.xi1.amplitudes()[r] * f0.xi1.amplitudes()[c].conj()
                + p.conj() * f1.xi2.amplitudes()[r] * f0.xi2.amplitudes()[c].conj();
        }
    }
    UnitaryMatrix::new(m).expect("outer products of orthonormal frames")
}

/// Normalized robustness integrals `D_mn / eps` for `V = eps H0`, in the
/// schedule's initial auxiliary frame.
#[derive(Clone, Debug, PartialEq)]
pub struct RobustnessIntegral {
    pub scheme: Scheme,
    pub gate: Option<Gate>,
    /// `[[D11, D12], [D21, D22]] / eps`.
    pub d_over_eps: [[Complex64; 2]; 2],
}

impl RobustnessIntegral {
    pub fn d12_over_eps(&self) -> Complex64 {
        self.d_over_eps[0][1]
    }

    pub fn d21_over_eps(&self) -> Complex64 {
        self.d_over_eps[1][0]
    }

    /// `sum_mn |D_mn / eps|^2`.
    pub fn sum_sq(&self) -> f64 {
        self.d_over_eps.iter().flatten().map(|z| z.norm_sqr()).sum()
    }
}

/// `D_mn / eps = int <psi_m(t)|H0(t)|psi_n(t)> dt` with `psi_m(t) = U(t) xi_m(0)`
/// evolved at zero error; composite Simpson quadrature on the evolution grid.
pub fn robustness_integral(
    schedule: &PulseSchedule,
    steps_per_segment: usize,
) -> Result<RobustnessIntegral, GeometryError> {
    let m = evolution::response_matrix(schedule, steps_per_segment)?;
    let f = AuxiliaryFrame::of_schedule(schedule);
    let basis = [f.xi1.amplitudes(), f.xi2.amplitudes()];
    let mut d = [[Complex64::new(0.0, 0.0); 2]; 2];
    for (a, u) in basis.iter().enumerate() {
        for (b, v) in basis.iter().enumerate() {
            let mv = m.mul_vec(v);
            d[a][b] = u[0].conj() * mv[0] + u[1].conj() * mv[1];
        }
    }
    Ok(RobustnessIntegral { scheme: schedule.scheme, gate: schedule.gate, d_over_eps: d })
}

/// One Bloch-trajectory sample `(t, x, y, z)`, time in units of `1/omega0`.
pub type BlochPoint = (f64, f64, f64, f64);

/// Bloch coordinates of `psi1(t) = U(t) xi1(0)` at `samples` evenly spaced
/// times, under Rabi error `epsilon`.
pub fn bloch_trajectory(
    path: &PathSpec,
    schedule: &PulseSchedule,
    epsilon: f64,
    samples: usize,
) -> Result<Vec<BlochPoint>, GeometryError> {
    let samples = samples.max(2);
    let total = schedule.total_duration();
    let times: Vec<f64> = (0..samples).map(|k| total * k as f64 / (samples - 1) as f64).collect();
    let xi = AuxiliaryFrame::at(path.alpha0, path.segments[0].lambda(0.0, path.alpha0)).xi1;
    let us = evolution::unitaries_at(schedule, &ErrorModel::rabi(epsilon)?, evolution::DEFAULT_STEPS, &times)?;
    Ok(times
        .iter()
        .zip(us)
        .map(|(&t, u)| {
            let b = u.apply(&xi).bloch();
            (t, b[0], b[1], b[2])
        })
        .collect())
}

/// Largest drive/path mismatch (units of `omega0`, radians) accepted by
/// [`ConstraintReport::path_consistent`].
pub const DRIVE_RESIDUAL_TOLERANCE: f64 = 1e-6;
/// Largest residual dynamical phase (radians) for a purely geometric gate.
pub const DYNAMICAL_PHASE_TOLERANCE: f64 = 1e-6;
/// `|D12/eps|` at or below which a schedule counts as super-robust.
pub const SUPER_ROBUST_TOLERANCE: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintReport {
    pub drive_residual: Eq2Residual,
    pub dynamical_phase: f64,
    pub d12_over_eps: f64,
}

impl ConstraintReport {
    pub fn path_consistent(&self) -> bool {
        self.drive_residual.amplitude <= DRIVE_RESIDUAL_TOLERANCE
            && self.drive_residual.phase <= DRIVE_RESIDUAL_TOLERANCE
    }

    pub fn dynamical_phase_free(&self) -> bool {
        self.dynamical_phase.abs() <= DYNAMICAL_PHASE_TOLERANCE
    }

    pub fn super_robust(&self) -> bool {
        self.d12_over_eps <= SUPER_ROBUST_TOLERANCE
    }
}

/// Path consistency, residual dynamical phase and `|D12/eps|` of a schedule.
pub fn constraint_report(schedule: &PulseSchedule) -> Result<ConstraintReport, GeometryError> {
    let path = PathSpec::from_schedule(schedule)?;
    Ok(ConstraintReport {
        drive_residual: eq2_residual(&path, schedule, 1000),
        dynamical_phase: dynamical_phase_check(&path),
        d12_over_eps: robustness_integral(schedule, evolution::DEFAULT_STEPS)?.d12_over_eps().norm(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gate_fidelity, Pauli};
    use crate::pulses::{build_ngqg_reference, build_sr_ngqg, build_sssp, DEFAULT_OMEGA0 as W};

    #[test]
    fn sr_x_path_reproduces_schedule() {
        let s = build_sr_ngqg(Gate::X, W);
        let p = PathSpec::from_schedule(&s).unwrap();
        let back = path_to_pulse(&p).unwrap();
        for (a, b) in s.segments.iter().zip(&back.segments) {
            assert!((wrap(a.phase - b.phase)).abs() < 1e-12);
            assert_eq!(a.envelope, b.envelope);
            // phi - lambda = pi/2 in every segment
            assert!((a.phase - a.path_lambda.unwrap() - FRAC_PI_2).abs() < 1e-12);
        }
        let r = eq2_residual(&p, &s, 10_000);
        assert!(r.amplitude < 1e-8 && r.phase < 1e-8);
    }

    #[test]
    fn idle_segment_has_zero_drive() {
        let p = PathSpec {
            alpha0: 0.3,
            segments: vec![PathSegment {
                duration: 1.0,
                alpha: AlphaProfile::Hold,
                lambda: LambdaProfile::Constant(0.2),
            }],
        };
        let s = path_to_pulse(&p).unwrap();
        assert_eq!(s.segments[0].envelope.value(0.5, 1.0), 0.0);
    }

    #[test]
    fn constant_lambda_gives_omega_equal_alpha_dot() {
        // d/dt(t/2 - sin(2t)/4) = sin^2 t
        let seg = PathSegment {
            duration: PI,
            alpha: AlphaProfile::Envelope(Envelope::SinSquared { amplitude: 1.0 }),
            lambda: LambdaProfile::Constant(0.0),
        };
        for k in 1..10 {
            let t = PI * k as f64 / 10.0;
            let num = (seg.alpha_increment(t + 1e-6) - seg.alpha_increment(t - 1e-6)) / 2e-6;
            assert!((num - t.sin().powi(2)).abs() < 1e-8);
            let (o, _) = implied_drive(&seg, t, 0.0);
            assert!((o - t.sin().powi(2)).abs() < 1e-14);
        }
    }

    #[test]
    fn singular_path_reported() {
        let p = PathSpec {
            alpha0: FRAC_PI_2,
            segments: vec![PathSegment {
                duration: 1.0,
                alpha: AlphaProfile::Linear { rate: 0.0 },
                lambda: LambdaProfile::Linear { start: 0.0, rate: 1.0 },
            }],
        };
        assert!(matches!(path_to_pulse(&p), Err(GeometryError::SingularPath { .. })));
    }

    #[test]
    fn ak_on_table_path() {
        let s = build_sr_ngqg(Gate::X, W);
        let p = PathSpec::from_schedule(&s).unwrap();
        for k in 1..60 {
            let t = 6.0 * PI * (k as f64 + 0.37) / 60.0;
            let g = ak_matrices(&p, &s, t).unwrap();
            assert!(g.a_diag.abs() < 1e-15);
            assert!(g.k_diag.abs() < 1e-12);
            assert!(g.offdiag_residual.norm() < 1e-8);
        }
        let perturbed = s.scaled(1.1);
        let g = ak_matrices(&p, &perturbed, 1.0).unwrap();
        assert!(g.offdiag_residual.norm() > 1e-3);
        assert!(matches!(ak_matrices(&p, &s, PI), Err(GeometryError::BoundaryTime { .. })));
    }

    #[test]
    fn ak_diagonals_follow_closed_forms() {
        let p = PathSpec {
            alpha0: 0.4,
            segments: vec![PathSegment {
                duration: 1.0,
                alpha: AlphaProfile::Linear { rate: 0.7 },
                lambda: LambdaProfile::Linear { start: 0.1, rate: 0.9 },
            }],
        };
        let s = path_to_pulse(&p).unwrap();
        for k in 1..9 {
            let t = k as f64 / 9.0;
            let g = ak_matrices(&p, &s, t).unwrap();
            let a = p.alpha(t);
            assert!((g.a_diag + 0.9 * (0.5 * a).sin().powi(2)).abs() < 1e-12);
            // tabulated drive is exact on nodes only; compare at 1e-6
            assert!((g.k_diag - 0.5 * 0.9 * a.sin() * a.tan()).abs() < 1e-6);
            assert!(g.offdiag_residual.norm() < 1e-6);
        }
    }

    #[test]
    fn dynamical_check_values() {
        let s = build_sr_ngqg(Gate::X, W);
        assert!(dynamical_phase_check(&PathSpec::from_schedule(&s).unwrap()).abs() < 1e-9);
        let p = PathSpec {
            alpha0: PI / 4.0,
            segments: vec![PathSegment {
                duration: 1.0,
                alpha: AlphaProfile::Hold,
                lambda: LambdaProfile::Linear { start: 0.0, rate: 1.0 },
            }],
        };
        assert!((dynamical_phase_check(&p) - 2f64.sqrt() / 4.0).abs() < 1e-12);
    }

    #[test]
    fn geometric_phase_examples() {
        let hold = PathSpec {
            alpha0: 1.0,
            segments: vec![PathSegment {
                duration: 1.0,
                alpha: AlphaProfile::Hold,
                lambda: LambdaProfile::Constant(0.5),
            }],
        };
        assert_eq!(geometric_phase(&hold), 0.0);
        let jump = PathSpec {
            alpha0: PI,
            segments: vec![
                PathSegment { duration: 1.0, alpha: AlphaProfile::Hold, lambda: LambdaProfile::Constant(0.0) },
                PathSegment { duration: 1.0, alpha: AlphaProfile::Hold, lambda: LambdaProfile::Constant(PI) },
            ],
        };
        assert!((geometric_phase(&jump) + PI).abs() < 1e-12);
    }

    #[test]
    fn sr_x_ideal_operator_is_minus_i_sigma_x() {
        let s = build_sr_ngqg(Gate::X, W);
        let u = ideal_gate_from_path(&PathSpec::from_schedule(&s).unwrap());
        let target = Pauli::X.matrix::<f64>().scale(Complex64::new(0.0, -1.0));
        assert!(u.matrix().max_abs_diff(&target) < 1e-12);
    }

    #[test]
    fn reference_schedules_paths_are_continuous() {
        // every boundary sits on a pole, so the azimuth jumps are frame changes
        for g in [Gate::X, Gate::XHalf] {
            for sc in [Scheme::NgqgP1, Scheme::NgqgP2] {
                let s = build_ngqg_reference(sc, g, W).unwrap();
                let p = PathSpec::from_schedule(&s).unwrap();
                for a in &p.alpha_starts()[1..p.segments.len()] {
                    assert!((a / PI - (a / PI).round()).abs() < 1e-12);
                }
                let u = ideal_gate_from_path(&p);
                let f = gate_fidelity(&u, &s.ideal().unwrap()).unwrap();
                assert!(f > 1.0 - 1e-12, "{sc} {g}: {f}");
            }
        }
    }

    #[test]
    fn constraint_reports() {
        for scheme in [Scheme::SrNgqg, Scheme::NgqgP1, Scheme::NgqgP2, Scheme::Dynamical, Scheme::Sssp] {
            let s = crate::pulses::build(scheme, Gate::X, W).unwrap();
            let r = constraint_report(&s).unwrap();
            assert!(r.path_consistent(), "{scheme}: {r:?}");
            // the shaped pulse is optimized numerically and is not purely geometric
            assert_eq!(r.dynamical_phase_free(), scheme != Scheme::Sssp, "{scheme}: {r:?}");
            assert_eq!(r.super_robust(), scheme == Scheme::SrNgqg, "{scheme}: {r:?}");
        }
    }

    #[test]
    fn sssp_eq2_on_nodes() {
        let s = build_sssp(W);
        let p = sssp_path();
        let r = eq2_residual(&p, &s, 10_000);
        assert!(r.amplitude < 1e-8 && r.phase < 1e-8, "{r:?}");
    }
}
