//! Pulse segments and schedules, the builders for every tabulated sequence,
//! and the schedule text format.
//!
//! Time is dimensionless (`omega0 * t`) and envelope amplitudes are in units
//! of `omega0`. `omega0` itself (rad/s) is carried on the schedule for
//! physical-unit output.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;

use thiserror::Error;

use crate::geometry;
use crate::linalg::rotation;
use crate::Unitary;

/// Default drive scale, `2 pi x 10 MHz`.
pub const DEFAULT_OMEGA0: f64 = 2.0 * PI * 10e6;

/// Minimum sample count for tabulated envelopes.
pub const MIN_TABLE_SAMPLES: usize = 4097;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PulseError {
    #[error("gate {gate} is not tabulated for scheme {scheme}")]
    UnsupportedGate { scheme: Scheme, gate: Gate },
    #[error("invalid schedule: {0}")]
    Invalid(String),
    #[error("parse error at line {line}: {field}: {message}")]
    Parse { line: usize, field: String, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    SrNgqg,
    NgqgP1,
    NgqgP2,
    Sssp,
    Dynamical,
    /// Schedules produced from an arbitrary path.
    Custom,
}

impl Scheme {
    pub const ALL: [Scheme; 6] =
        [Scheme::SrNgqg, Scheme::NgqgP1, Scheme::NgqgP2, Scheme::Sssp, Scheme::Dynamical, Scheme::Custom];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::SrNgqg => "sr-ngqg",
            Scheme::NgqgP1 => "ngqg-p1",
            Scheme::NgqgP2 => "ngqg-p2",
            Scheme::Sssp => "sssp",
            Scheme::Dynamical => "dynamical",
            Scheme::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Self::ALL.into_iter().find(|k| k.as_str() == norm)
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Gate {
    X,
    Y,
    XHalf,
    YHalf,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::X, Gate::Y, Gate::XHalf, Gate::YHalf];

    pub fn as_str(self) -> &'static str {
        match self {
            Gate::X => "x",
            Gate::Y => "y",
            Gate::XHalf => "x-half",
            Gate::YHalf => "y-half",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "x" => Some(Gate::X),
            "y" => Some(Gate::Y),
            "x-half" | "x/2" | "xhalf" => Some(Gate::XHalf),
            "y-half" | "y/2" | "yhalf" => Some(Gate::YHalf),
            _ => None,
        }
    }

    /// Rotation angle of the gate.
    pub fn angle(self) -> f64 {
        match self {
            Gate::X | Gate::Y => PI,
            Gate::XHalf | Gate::YHalf => FRAC_PI_2,
        }
    }

    /// Azimuth of the rotation axis in the xy plane.
    pub fn axis(self) -> f64 {
        match self {
            Gate::X | Gate::XHalf => 0.0,
            Gate::Y | Gate::YHalf => FRAC_PI_2,
        }
    }

    fn is_y_family(self) -> bool {
        matches!(self, Gate::Y | Gate::YHalf)
    }

    fn x_family(self) -> Gate {
        match self {
            Gate::X | Gate::Y => Gate::X,
            Gate::XHalf | Gate::YHalf => Gate::XHalf,
        }
    }
}

impl std::fmt::Display for Gate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Drive amplitude profile of one segment, `Omega(t) >= 0`.
#[derive(Clone, Debug, PartialEq)]
pub enum Envelope {
    /// `amplitude * sin^2(pi s / duration)` for local time `s`.
    SinSquared {
        amplitude: f64,
    },
    /// Gaussian of width `sigma` centred on the segment, offset-subtracted so it
    /// vanishes at both edges; `amplitude` is the peak value.
    Gaussian {
        amplitude: f64,
        sigma: f64,
    },
    Constant {
        amplitude: f64,
    },
    /// Uniformly sampled amplitude and phase offset (added to the segment
    /// phase), linearly interpolated; the first and last samples sit on the
    /// segment edges.
    Table {
        amplitude: Vec<f64>,
        phase: Vec<f64>,
    },
}

impl Envelope {
    pub fn kind(&self) -> &'static str {
        match self {
            Envelope::SinSquared { .. } => "sin-squared",
            Envelope::Gaussian { .. } => "gaussian",
            Envelope::Constant { .. } => "constant",
            Envelope::Table { .. } => "table",
        }
    }

    /// `Omega(s)` at local time `s` in `[0, duration]`.
    pub fn value(&self, s: f64, duration: f64) -> f64 {
        match self {
            Envelope::SinSquared { amplitude } => {
                let x = (PI * s / duration).sin();
                amplitude * x * x
            }
            Envelope::Gaussian { amplitude, sigma } => amplitude * gaussian_shape(s, duration, *sigma),
            Envelope::Constant { amplitude } => *amplitude,
            Envelope::Table { amplitude, .. } => interpolate(amplitude, s / duration),
        }
    }

    /// Phase offset at local time `s`, nonzero only for tables.
    pub fn phase_offset(&self, s: f64, duration: f64) -> f64 {
        match self {
            Envelope::Table { phase, .. } => interpolate(phase, s / duration),
            _ => 0.0,
        }
    }

    pub fn has_constant_phase(&self) -> bool {
        !matches!(self, Envelope::Table { .. })
    }

    /// Pulse area accumulated up to local time `s`.
    pub fn area_until(&self, s: f64, duration: f64) -> f64 {
        match self {
            Envelope::SinSquared { amplitude } => {
                amplitude * (0.5 * s - duration / (4.0 * PI) * (2.0 * PI * s / duration).sin())
            }
            Envelope::Constant { amplitude } => amplitude * s,
            Envelope::Gaussian { amplitude, sigma } => {
                amplitude * gauss_legendre(|x| gaussian_shape(x, duration, *sigma), 0.0, s, 64)
            }
            Envelope::Table { amplitude, .. } => {
                let n = amplitude.len() - 1;
                let h = duration / n as f64;
                let x = (s / h).clamp(0.0, n as f64);
                let k = (x.floor() as usize).min(n.saturating_sub(1));
                let mut acc = 0.0;
                for i in 0..k {
                    acc += 0.5 * h * (amplitude[i] + amplitude[i + 1]);
                }
                let f = x - k as f64;
                let mid = amplitude[k] + f * (amplitude[k + 1] - amplitude[k]);
                acc + 0.5 * f * h * (amplitude[k] + mid)
            }
        }
    }

    /// Full segment area.
    pub fn area(&self, duration: f64) -> f64 {
        self.area_until(duration, duration)
    }

    fn scaled(&self, factor: f64) -> Envelope {
        match self {
            Envelope::SinSquared { amplitude } => Envelope::SinSquared { amplitude: amplitude * factor },
            Envelope::Gaussian { amplitude, sigma } => {
                Envelope::Gaussian { amplitude: amplitude * factor, sigma: *sigma }
            }
            Envelope::Constant { amplitude } => Envelope::Constant { amplitude: amplitude * factor },
            Envelope::Table { amplitude, phase } => {
                Envelope::Table { amplitude: amplitude.iter().map(|a| a * factor).collect(), phase: phase.clone() }
            }
        }
    }

    fn validate(&self) -> Result<(), String> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        match self {
            Envelope::SinSquared { amplitude } | Envelope::Constant { amplitude } => {
                if !ok(*amplitude) {
                    return Err(format!("amplitude must be finite and >= 0, got {amplitude}"));
                }
            }
            Envelope::Gaussian { amplitude, sigma } => {
                if !ok(*amplitude) || !(sigma.is_finite() && *sigma > 0.0) {
                    return Err("gaussian needs amplitude >= 0 and sigma > 0".into());
                }
            }
            Envelope::Table { amplitude, phase } => {
                if amplitude.len() < 2 || amplitude.len() != phase.len() {
                    return Err("table needs >= 2 amplitude samples and as many phase samples".into());
                }
                if amplitude.iter().any(|a| !ok(*a)) || phase.iter().any(|p| !p.is_finite()) {
                    return Err("table samples must be finite with amplitude >= 0".into());
                }
            }
        }
        Ok(())
    }
}

fn gaussian_shape(s: f64, duration: f64, sigma: f64) -> f64 {
    let c = 0.5 * duration;
    let edge = (-(c * c) / (2.0 * sigma * sigma)).exp();
    let g = (-((s - c) * (s - c)) / (2.0 * sigma * sigma)).exp();
    (g - edge) / (1.0 - edge)
}

fn interpolate(samples: &[f64], u: f64) -> f64 {
    let n = samples.len() - 1;
    let x = (u * n as f64).clamp(0.0, n as f64);
    let k = (x.floor() as usize).min(n - 1);
    let f = x - k as f64;
    samples[k] + f * (samples[k + 1] - samples[k])
}

/// Composite 5-point Gauss-Legendre quadrature on `panels` equal panels.
pub(crate) fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    const X: [f64; 5] =
        [0.0, 0.538_469_310_105_683_1, -0.538_469_310_105_683_1, 0.906_179_845_938_664, -0.906_179_845_938_664];
    const W: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    let h = (b - a) / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        for k in 0..5 {
            acc += W[k] * f(mid + 0.5 * h * X[k]);
        }
    }
    0.5 * h * acc
}

#[derive(Clone, Debug, PartialEq)]
pub struct PulseSegment {
    /// Duration in units of `1/omega0`.
    pub duration: f64,
    pub envelope: Envelope,
    /// Drive phase (radians), constant over the segment apart from table offsets.
    pub phase: f64,
    /// Auxiliary-state azimuth held during the segment, when defined.
    pub path_lambda: Option<f64>,
}

impl PulseSegment {
    pub fn area(&self) -> f64 {
        self.envelope.area(self.duration)
    }

    /// `(Omega, phi)` at local time `s`.
    pub fn drive(&self, s: f64) -> (f64, f64) {
        (self.envelope.value(s, self.duration), self.phase + self.envelope.phase_offset(s, self.duration))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PulseSchedule {
    pub name: String,
    pub scheme: Scheme,
    pub gate: Option<Gate>,
    /// Drive scale in rad/s.
    pub omega0: f64,
    /// Initial auxiliary polar angle.
    pub alpha0: f64,
    /// Initial auxiliary azimuth.
    pub lambda0: f64,
    pub segments: Vec<PulseSegment>,
}

impl PulseSchedule {
    pub fn validate(&self) -> Result<(), PulseError> {
        if self.segments.is_empty() {
            return Err(PulseError::Invalid("schedule has no segments".into()));
        }
        if !(self.omega0.is_finite() && self.omega0 > 0.0) {
            return Err(PulseError::Invalid(format!("omega0 must be > 0, got {}", self.omega0)));
        }
        for (i, s) in self.segments.iter().enumerate() {
            if !(s.duration.is_finite() && s.duration > 0.0) {
                return Err(PulseError::Invalid(format!("segment {i}: duration must be > 0")));
            }
            if !s.phase.is_finite() {
                return Err(PulseError::Invalid(format!("segment {i}: phase must be finite")));
            }
            s.envelope.validate().map_err(|m| PulseError::Invalid(format!("segment {i}: {m}")))?;
        }
        Ok(())
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Per-segment pulse areas.
    pub fn rotation_angles(&self) -> Vec<f64> {
        self.segments.iter().map(PulseSegment::area).collect()
    }

    pub fn total_area(&self) -> f64 {
        self.rotation_angles().iter().sum()
    }

    /// Segment start times.
    pub fn boundaries(&self) -> Vec<f64> {
        let mut t = 0.0;
        let mut out = Vec::with_capacity(self.segments.len() + 1);
        out.push(0.0);
        for s in &self.segments {
            t += s.duration;
            out.push(t);
        }
        out
    }

    /// Locates global time `t`: `(segment index, local time)`.
    pub fn locate(&self, t: f64) -> (usize, f64) {
        let mut start = 0.0;
        for (i, s) in self.segments.iter().enumerate() {
            if t <= start + s.duration || i + 1 == self.segments.len() {
                return (i, (t - start).clamp(0.0, s.duration));
            }
            start += s.duration;
        }
        unreachable!("schedule has segments")
    }

    /// `(Omega, phi)` at global time `t`.
    pub fn drive(&self, t: f64) -> (f64, f64) {
        let (i, s) = self.locate(t);
        self.segments[i].drive(s)
    }

    /// Copy with every amplitude multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> PulseSchedule {
        let mut out = self.clone();
        for s in &mut out.segments {
            s.envelope = s.envelope.scaled(factor);
        }
        out
    }

    /// Copy with `delta` added to every phase and to the frame azimuth.
    pub fn phase_shifted(&self, delta: f64) -> PulseSchedule {
        let mut out = self.clone();
        for s in &mut out.segments {
            s.phase += delta;
            s.path_lambda = s.path_lambda.map(|l| l + delta);
        }
        out.lambda0 += delta;
        out
    }

    /// Ideal target for the schedule's gate, if it names one.
    pub fn ideal(&self) -> Option<Unitary> {
        self.gate.map(|g| ideal_gate(self.scheme, g))
    }
}

/// Ideal unitary for `(scheme, gate)`.
///
/// The reference NGQG half-angle sequences rotate in the opposite sense under
/// this crate's phase convention, so their target is the `-pi/2` rotation.
pub fn ideal_gate(scheme: Scheme, gate: Gate) -> Unitary {
    let mirrored = matches!(scheme, Scheme::NgqgP1 | Scheme::NgqgP2) && matches!(gate, Gate::XHalf | Gate::YHalf);
    let angle = if mirrored { -gate.angle() } else { gate.angle() };
    rotation(angle, gate.axis())
}

fn sin2_segment(duration: f64, phase: f64) -> PulseSegment {
    PulseSegment {
        duration,
        envelope: Envelope::SinSquared { amplitude: 1.0 },
        phase,
        path_lambda: Some(phase - FRAC_PI_2),
    }
}

fn schedule_from(
    name: String,
    scheme: Scheme,
    gate: Gate,
    omega0: f64,
    alpha0: f64,
    segments: Vec<PulseSegment>,
) -> PulseSchedule {
    let lambda0 = segments[0].path_lambda.unwrap_or(segments[0].phase - FRAC_PI_2);
    PulseSchedule { name, scheme, gate: Some(gate), omega0, alpha0, lambda0, segments }
}

fn check_omega0(omega0: f64) {
    assert!(omega0.is_finite() && omega0 > 0.0, "omega0 must be positive, got {omega0}");
}

/// Half-area of the outer segments of the super-robust `X/2` sequence.
///
/// Solves the half-angle sequence `(a, phi1), (pi, phi2), (a, phi1)` for an
/// exact `pi/2` rotation about x with vanishing first-order error response.
pub const SR_HALF_AREA: f64 = 0.639_902_003_580_674_8 * PI;
/// Outer-segment phase of the calibrated super-robust `X/2`.
pub const SR_HALF_PHI1: f64 = 1.081_292_205_671_836_6;
/// Middle-segment phase of the calibrated super-robust `X/2`.
pub const SR_HALF_PHI2: f64 = -1.386_361_632_549_778_3;

/// Super-robust open-path sequence for `gate`.
///
/// `X`/`Y` follow the tabulated four-segment sequence. The half-angle gates
/// use the calibrated solution (see [`SR_HALF_AREA`]); the rounded tabulated
/// values are available from [`build_sr_ngqg_tabulated`].
pub fn build_sr_ngqg(gate: Gate, omega0: f64) -> PulseSchedule {
    check_omega0(omega0);
    let (segments, alpha0) = match gate.x_family() {
        Gate::X => (sr_x_segments(), FRAC_PI_2),
        _ => {
            let d = 2.0 * SR_HALF_AREA;
            (
                vec![
                    sin2_segment(d, SR_HALF_PHI1),
                    sin2_segment(2.0 * PI, SR_HALF_PHI2),
                    sin2_segment(d, SR_HALF_PHI1),
                ],
                PI - SR_HALF_AREA,
            )
        }
    };
    finish_sr(gate, omega0, segments, alpha0, "sr-ngqg")
}

/// Super-robust sequence using the rounded tabulated half-angle values
/// (durations `1.28 pi`, phases `1.232, -1.236, 1.232`).
pub fn build_sr_ngqg_tabulated(gate: Gate, omega0: f64) -> PulseSchedule {
    check_omega0(omega0);
    let (segments, alpha0) = match gate.x_family() {
        Gate::X => (sr_x_segments(), FRAC_PI_2),
        _ => {
            let d = 1.28 * PI;
            (vec![sin2_segment(d, 1.232), sin2_segment(2.0 * PI, -1.236), sin2_segment(d, 1.232)], PI - 0.5 * d)
        }
    };
    finish_sr(gate, omega0, segments, alpha0, "sr-ngqg-tabulated")
}

fn sr_x_segments() -> Vec<PulseSegment> {
    vec![
        sin2_segment(PI, PI / 3.0),
        sin2_segment(2.0 * PI, 5.0 * PI / 3.0),
        sin2_segment(2.0 * PI, PI / 3.0),
        sin2_segment(PI, 5.0 * PI / 3.0),
    ]
}

fn finish_sr(gate: Gate, omega0: f64, segments: Vec<PulseSegment>, alpha0: f64, tag: &str) -> PulseSchedule {
    let s = schedule_from(format!("{tag}-{gate}"), Scheme::SrNgqg, gate, omega0, alpha0, segments);
    if gate.is_y_family() {
        s.phase_shifted(FRAC_PI_2)
    } else {
        s
    }
}

/// Reference segmented NGQG sequences (`X` and `X/2` only).
pub fn build_ngqg_reference(scheme: Scheme, gate: Gate, omega0: f64) -> Result<PulseSchedule, PulseError> {
    check_omega0(omega0);
    let h = FRAC_PI_2;
    let table: Vec<(f64, f64)> = match (scheme, gate) {
        (Scheme::NgqgP1, Gate::X) => {
            vec![(h, -h), (PI, 0.75 * PI), (PI, -h), (PI, 0.75 * PI), (h, -h)]
        }
        (Scheme::NgqgP1, Gate::XHalf) => vec![(h, -h), (PI, 0.75 * PI), (h, -h)],
        (Scheme::NgqgP2, Gate::X) => vec![(h, -h), (PI, 0.0), (h, -h)],
        (Scheme::NgqgP2, Gate::XHalf) => vec![(h, -h), (PI, -0.25 * PI), (h, -h)],
        _ => return Err(PulseError::UnsupportedGate { scheme, gate }),
    };
    // sin^2 envelopes with peak omega0 have area duration/2.
    let segments = table.iter().map(|&(theta, phi)| sin2_segment(2.0 * theta, phi)).collect();
    Ok(schedule_from(format!("{scheme}-{gate}"), scheme, gate, omega0, FRAC_PI_2, segments))
}

/// Polar-angle Fourier coefficients of the single-shot shaped pulse.
pub const SSSP_ALPHA_COEFFS: [f64; 5] = [-0.0990, -0.1176, -0.0394, -0.0119, 0.0];
/// Azimuth-generating coefficients of the single-shot shaped pulse.
pub const SSSP_GAMMA_COEFFS: [f64; 5] = [2.3347, -1.9450, 0.3944, -0.1139, -0.3723];
/// Samples used for the tabulated single-shot shaped pulse.
pub const SSSP_SAMPLES: usize = 8193;

/// Single-shot shaped `X` pulse, one tabulated segment.
///
/// The duration is chosen so the peak amplitude equals `omega0`.
pub fn build_sssp(omega0: f64) -> PulseSchedule {
    check_omega0(omega0);
    let path = geometry::sssp_path();
    let mut s = geometry::path_to_pulse_sampled(&path, SSSP_SAMPLES).expect("single-shot path is regular");
    s.name = "sssp-x".into();
    s.scheme = Scheme::Sssp;
    s.gate = Some(Gate::X);
    s.omega0 = omega0;
    s
}

/// Gaussian dynamical gate. `sigma_ratio` is the width as a fraction of the
/// segment duration; the duration is chosen so the peak amplitude is `omega0`.
///
/// The x family uses `phi = 0` and the y family `phi = pi/2`.
pub fn build_dynamical_gaussian(gate: Gate, sigma_ratio: f64, omega0: f64) -> PulseSchedule {
    check_omega0(omega0);
    assert!(sigma_ratio.is_finite() && sigma_ratio > 0.0, "sigma_ratio must be positive");
    let unit = gauss_legendre(|x| gaussian_shape(x, 1.0, sigma_ratio), 0.0, 1.0, 64);
    let duration = gate.angle() / unit;
    let phase = gate.axis();
    let seg = PulseSegment {
        duration,
        envelope: Envelope::Gaussian { amplitude: 1.0, sigma: sigma_ratio * duration },
        phase,
        path_lambda: Some(phase - FRAC_PI_2),
    };
    schedule_from(format!("dynamical-{gate}"), Scheme::Dynamical, gate, omega0, 0.0, vec![seg])
}

/// Builds the schedule named by `(scheme, gate)` with default shape choices.
pub fn build(scheme: Scheme, gate: Gate, omega0: f64) -> Result<PulseSchedule, PulseError> {
    match scheme {
        Scheme::SrNgqg => Ok(build_sr_ngqg(gate, omega0)),
        Scheme::NgqgP1 | Scheme::NgqgP2 => build_ngqg_reference(scheme, gate, omega0),
        Scheme::Sssp if gate == Gate::X => Ok(build_sssp(omega0)),
        Scheme::Dynamical => Ok(build_dynamical_gaussian(gate, 1.0 / 6.0, omega0)),
        _ => Err(PulseError::UnsupportedGate { scheme, gate }),
    }
}

fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_list(xs: &[f64]) -> String {
    let mut s = String::from("[");
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        if i % 4 == 0 {
            s.push_str("\n  ");
        }
        s.push_str(&fmt_f(*x));
    }
    s.push_str(",\n]");
    s
}

/// Serializes a schedule to the canonical TOML document.
pub fn serialize_schedule(s: &PulseSchedule) -> String {
    let mut out = String::new();
    out.push_str("# geomgate pulse schedule\n");
    out.push_str("# units: duration in 1/omega0 (dimensionless omega0*t); amplitude in units of omega0;\n");
    out.push_str(
        "#        phase, path_lambda, alpha0, lambda0 in radians; omega0_hz in Hz (omega0 = 2*pi*omega0_hz)\n",
    );
    let _ = writeln!(out, "name = {:?}", s.name);
    let _ = writeln!(out, "scheme = {:?}", s.scheme.as_str());
    if let Some(g) = s.gate {
        let _ = writeln!(out, "gate = {:?}", g.as_str());
    }
    let _ = writeln!(out, "omega0_hz = {}", fmt_f(s.omega0 / (2.0 * PI)));
    let _ = writeln!(out, "alpha0 = {}", fmt_f(s.alpha0));
    let _ = writeln!(out, "lambda0 = {}", fmt_f(s.lambda0));
    for seg in &s.segments {
        out.push_str("\n[[segment]]\n");
        let _ = writeln!(out, "duration = {}", fmt_f(seg.duration));
        let _ = writeln!(out, "phase = {}", fmt_f(seg.phase));
        if let Some(l) = seg.path_lambda {
            let _ = writeln!(out, "path_lambda = {}", fmt_f(l));
        }
        let _ = writeln!(out, "envelope.kind = {:?}", seg.envelope.kind());
        match &seg.envelope {
            Envelope::SinSquared { amplitude } | Envelope::Constant { amplitude } => {
                let _ = writeln!(out, "envelope.params.amplitude = {}", fmt_f(*amplitude));
            }
            Envelope::Gaussian { amplitude, sigma } => {
                let _ = writeln!(out, "envelope.params.amplitude = {}", fmt_f(*amplitude));
                let _ = writeln!(out, "envelope.params.sigma = {}", fmt_f(*sigma));
            }
            Envelope::Table { amplitude, phase } => {
                let _ = writeln!(out, "envelope.params.amplitude = {}", fmt_list(amplitude));
                let _ = writeln!(out, "envelope.params.phase = {}", fmt_list(phase));
            }
        }
    }
    out
}

/// Byte offset to 1-based line number.
fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Parses the canonical schedule document.
pub fn parse_schedule(text: &str) -> Result<PulseSchedule, PulseError> {
    let doc: toml::Table = text.parse().map_err(|e: toml::de::Error| PulseError::Parse {
        line: e.span().map(|r| line_of(text, r.start)).unwrap_or(0),
        field: "document".into(),
        message: e.message().to_string(),
    })?;
    let seg_lines: Vec<usize> = text.match_indices("[[segment]]").map(|(off, _)| line_of(text, off)).collect();
    let top = |field: &str, msg: &str| PulseError::Parse { line: 1, field: field.into(), message: msg.into() };

    let get_str = |key: &str| -> Result<String, PulseError> {
        doc.get(key)
            .ok_or_else(|| top(key, "missing field"))?
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| top(key, "expected a string"))
    };
    let get_f = |key: &str| -> Result<f64, PulseError> {
        as_f64(doc.get(key).ok_or_else(|| top(key, "missing field"))?).ok_or_else(|| top(key, "expected a number"))
    };

    let name = get_str("name")?;
    let scheme_s = get_str("scheme")?;
    let scheme = Scheme::parse(&scheme_s).ok_or_else(|| top("scheme", &format!("unknown scheme `{scheme_s}`")))?;
    let gate = match doc.get("gate") {
        None => None,
        Some(v) => {
            let g = v.as_str().ok_or_else(|| top("gate", "expected a string"))?;
            Some(Gate::parse(g).ok_or_else(|| top("gate", &format!("unknown gate `{g}`")))?)
        }
    };
    let omega0 = 2.0 * PI * get_f("omega0_hz")?;
    let alpha0 = match doc.get("alpha0") {
        Some(v) => as_f64(v).ok_or_else(|| top("alpha0", "expected a number"))?,
        None => 0.0,
    };
    let segs = doc
        .get("segment")
        .ok_or_else(|| top("segment", "missing field"))?
        .as_array()
        .ok_or_else(|| top("segment", "expected an array of tables"))?;

    let mut segments = Vec::with_capacity(segs.len());
    for (i, v) in segs.iter().enumerate() {
        let line = seg_lines.get(i).copied().unwrap_or(0);
        let err = |field: &str, msg: &str| PulseError::Parse {
            line,
            field: format!("segment[{i}].{field}"),
            message: msg.into(),
        };
        let t = v.as_table().ok_or_else(|| err("", "expected a table"))?;
        let num = |key: &str| -> Result<f64, PulseError> {
            as_f64(t.get(key).ok_or_else(|| err(key, "missing field"))?).ok_or_else(|| err(key, "expected a number"))
        };
        let duration = num("duration")?;
        let phase = num("phase")?;
        let path_lambda = match t.get("path_lambda") {
            Some(x) => Some(as_f64(x).ok_or_else(|| err("path_lambda", "expected a number"))?),
            None => None,
        };
        let env = t
            .get("envelope")
            .ok_or_else(|| err("envelope", "missing field"))?
            .as_table()
            .ok_or_else(|| err("envelope", "expected a table"))?;
        let kind = env
            .get("kind")
            .ok_or_else(|| err("envelope.kind", "missing field"))?
            .as_str()
            .ok_or_else(|| err("envelope.kind", "expected a string"))?;
        let empty = toml::Table::new();
        let params = match env.get("params") {
            Some(p) => p.as_table().ok_or_else(|| err("envelope.params", "expected a table"))?,
            None => &empty,
        };
        let pnum = |key: &str| -> Result<f64, PulseError> {
            let f = format!("envelope.params.{key}");
            as_f64(params.get(key).ok_or_else(|| err(&f, "missing field"))?).ok_or_else(|| err(&f, "expected a number"))
        };
        let plist = |key: &str| -> Result<Vec<f64>, PulseError> {
            let f = format!("envelope.params.{key}");
            params
                .get(key)
                .ok_or_else(|| err(&f, "missing field"))?
                .as_array()
                .ok_or_else(|| err(&f, "expected an array"))?
                .iter()
                .map(|x| as_f64(x).ok_or_else(|| err(&f, "expected numbers")))
                .collect()
        };
        let envelope = match kind {
            "sin-squared" => Envelope::SinSquared { amplitude: pnum("amplitude")? },
            "constant" => Envelope::Constant { amplitude: pnum("amplitude")? },
            "gaussian" => Envelope::Gaussian { amplitude: pnum("amplitude")?, sigma: pnum("sigma")? },
            "table" => Envelope::Table { amplitude: plist("amplitude")?, phase: plist("phase")? },
            other => return Err(err("envelope.kind", &format!("unknown kind `{other}`"))),
        };
        segments.push(PulseSegment { duration, envelope, phase, path_lambda });
    }
    if segments.is_empty() {
        return Err(top("segment", "schedule has no segments"));
    }
    let lambda0 = match doc.get("lambda0") {
        Some(v) => as_f64(v).ok_or_else(|| top("lambda0", "expected a number"))?,
        None => segments[0].path_lambda.unwrap_or(segments[0].phase - FRAC_PI_2),
    };
    let s = PulseSchedule { name, scheme, gate, omega0, alpha0, lambda0, segments };
    s.validate().map_err(|e| match e {
        PulseError::Invalid(m) => PulseError::Parse { line: 0, field: "schedule".into(), message: m },
        other => other,
    })?;
    Ok(s)
}

fn as_f64(v: &toml::Value) -> Option<f64> {
    match v {
        toml::Value::Float(f) => Some(*f),
        toml::Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}
