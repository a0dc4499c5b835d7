//! Simulated single-qubit process tomography and randomized benchmarking.

use std::sync::OnceLock;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{hermitian_eigen, rotation, ComplexMatrix, LinalgError, Pauli, UnitaryMatrix};
use crate::{CMatrix, Unitary};

/// Tolerance for Hermiticity, trace and the eigenvalue floor of `chi`.
pub const CHI_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CharacterizeError {
    #[error("reconstructed process is unphysical: min eigenvalue {min_eigenvalue:e}, trace {trace}, hermiticity defect {hermiticity:e}")]
    UnphysicalChannel { min_eigenvalue: f64, trace: f64, hermiticity: f64 },
    #[error("fit failed: {0}")]
    FitFailure(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// A single-qubit CPTP map in Kraus form.
#[derive(Clone, Debug)]
pub struct Channel {
    kraus: Vec<CMatrix>,
}

impl Channel {
    pub fn unitary(u: &Unitary) -> Self {
        Self { kraus: vec![u.matrix().clone()] }
    }

    /// `rho -> (1 - q) U rho U^dagger + q I/2`.
    pub fn depolarizing(u: &Unitary, q: f64) -> Result<Self, CharacterizeError> {
        if !(0.0..=1.0).contains(&q) {
            return Err(CharacterizeError::InvalidInput(format!("depolarizing probability {q} outside [0, 1]")));
        }
        let w = (q / 4.0).sqrt();
        let mut kraus = vec![u.matrix().scale_re((1.0 - 0.75 * q).sqrt())];
        for p in [Pauli::X, Pauli::Y, Pauli::Z] {
            kraus.push((&p.matrix::<f64>() * u.matrix()).scale_re(w));
        }
        Ok(Self { kraus })
    }

    /// Arbitrary Kraus operators; completeness is checked to 1e-9.
    pub fn kraus(ops: Vec<CMatrix>) -> Result<Self, CharacterizeError> {
        if ops.is_empty() || ops.iter().any(|k| k.dim() != 2) {
            return Err(CharacterizeError::InvalidInput("need one or more 2x2 Kraus operators".into()));
        }
        let mut sum = ComplexMatrix::zeros(2);
        for k in &ops {
            sum = &sum + &(&k.adjoint() * k);
        }
        let defect = sum.max_abs_diff(&ComplexMatrix::identity(2));
        if defect > 1e-9 {
            return Err(CharacterizeError::InvalidInput(format!("Kraus operators not trace preserving ({defect:e})")));
        }
        Ok(Self { kraus: ops })
    }

    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let mut out = ComplexMatrix::zeros(2);
        for k in &self.kraus {
            out = &out + &(&(k * rho) * &k.adjoint());
        }
        out
    }
}

/// Process matrix in the Pauli basis `{I, X, Y, Z}`:
/// `E(rho) = sum_mn chi_mn P_m rho P_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProcessMatrix {
    chi: CMatrix,
}

impl ProcessMatrix {
    pub fn chi(&self) -> &CMatrix {
        &self.chi
    }

    /// `chi` of a unitary: `a a^dagger` with `a_m = Tr(P_m U) / 2`.
    pub fn from_unitary(u: &Unitary) -> Self {
        let a: Vec<C64> = Pauli::ALL.iter().map(|p| (&p.matrix::<f64>() * u.matrix()).trace() * 0.5).collect();
        let mut chi = ComplexMatrix::zeros(4);
        for m in 0..4 {
            for n in 0..4 {
                chi[(m, n)] = a[m] * a[n].conj();
            }
        }
        Self { chi }
    }

    /// `F_p = Tr(chi_ideal chi)`.
    pub fn process_fidelity(&self, ideal: &ProcessMatrix) -> f64 {
        (&ideal.chi * &self.chi).trace().re
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>, CharacterizeError> {
        Ok(hermitian_eigen(&self.chi)?.0)
    }

    /// `[[[re, im]; 4]; 4]`, row-major.
    pub fn to_nested(&self) -> Vec<Vec<[f64; 2]>> {
        (0..4).map(|m| (0..4).map(|n| [self.chi[(m, n)].re, self.chi[(m, n)].im]).collect()).collect()
    }
}

/// `F_avg = (d F_p + 1) / (d + 1)` for `d = 2`.
pub fn average_gate_fidelity(process_fidelity: f64) -> f64 {
    (2.0 * process_fidelity + 1.0) / 3.0
}

fn projector(v: [C64; 2]) -> CMatrix {
    let mut m = ComplexMatrix::zeros(2);
    for i in 0..2 {
        for j in 0..2 {
            m[(i, j)] = v[i] * v[j].conj();
        }
    }
    m
}

/// Linear-inversion tomography from the outputs on `|0>, |1>, |+>, |+i>`.
///
/// With `E~ = {I, X, -iY, Z}` the block matrix of output operators is
/// `Lambda rho Lambda`, `Lambda = 1/2 [[I, X], [X, -I]]`; the result is then
/// rotated into the plain Pauli basis.
pub fn qpt(channel: impl Fn(&CMatrix) -> CMatrix) -> Result<ProcessMatrix, CharacterizeError> {
    let (o, z, i) = (C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 1.0));
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let r0 = channel(&projector([o, z]));
    let r1 = channel(&projector([z, o]));
    let rp = channel(&projector([o * h, o * h]));
    let ri = channel(&projector([o * h, i * h]));
    let mix = &r0 + &r1;
    // E(|0><1|) and E(|1><0|)
    let b01 = &(&rp + &ri.scale(i)) - &mix.scale(C64::new(0.5, 0.5));
    let b10 = &(&rp - &ri.scale(i)) - &mix.scale(C64::new(0.5, -0.5));
    let mut big = ComplexMatrix::zeros(4);
    for (bi, bj, blk) in [(0, 0, &r0), (0, 1, &b01), (1, 0, &b10), (1, 1, &r1)] {
        for r in 0..2 {
            for c in 0..2 {
                big[(2 * bi + r, 2 * bj + c)] = blk[(r, c)];
            }
        }
    }
    let x = Pauli::X.matrix::<f64>();
    let lambda = ComplexMatrix::from_rows(&[
        &[o * 0.5, z, x[(0, 0)] * 0.5, x[(0, 1)] * 0.5],
        &[z, o * 0.5, x[(1, 0)] * 0.5, x[(1, 1)] * 0.5],
        &[x[(0, 0)] * 0.5, x[(0, 1)] * 0.5, -o * 0.5, z],
        &[x[(1, 0)] * 0.5, x[(1, 1)] * 0.5, z, -o * 0.5],
    ])?;
    let tilde = &(&lambda * &big) * &lambda;
    // E~_m = c_m P_m
    let c = [o, o, -i, o];
    let mut chi = ComplexMatrix::zeros(4);
    for m in 0..4 {
        for n in 0..4 {
            chi[(m, n)] = c[m] * tilde[(m, n)] * c[n].conj();
        }
    }
    let hermiticity = chi.hermiticity_defect();
    let trace = chi.trace();
    let unphysical =
        |min_eigenvalue: f64| CharacterizeError::UnphysicalChannel { min_eigenvalue, trace: trace.re, hermiticity };
    if !(hermiticity <= CHI_TOLERANCE) || !((trace - o).norm() <= CHI_TOLERANCE) {
        return Err(unphysical(f64::NAN));
    }
    let chi = (&chi + &chi.adjoint()).scale_re(0.5);
    let min = hermitian_eigen(&chi)?.0[0];
    if min < -CHI_TOLERANCE {
        return Err(unphysical(min));
    }
    Ok(ProcessMatrix { chi })
}

/// Haar-random element of SU(2) from a uniformly distributed unit quaternion.
pub fn random_unitary(rng: &mut impl Rng) -> Unitary {
    let mut q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    q.iter_mut().for_each(|v| *v /= n);
    let [a, b, c, d] = q;
    let m = ComplexMatrix::from_rows(&[&[C64::new(a, -d), C64::new(-c, -b)], &[C64::new(c, -b), C64::new(a, d)]])
        .expect("2x2");
    UnitaryMatrix::new(m).expect("unit quaternion is unitary")
}

/// Physical generators the Clifford words are built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Generator {
    X,
    Y,
    X2,
    MX2,
    Y2,
    MY2,
}

impl Generator {
    /// `(angle, phase)` of the rotation `R(angle, phase)`.
    fn rotation(self) -> (f64, f64) {
        use std::f64::consts::{FRAC_PI_2, PI};
        match self {
            Generator::X => (PI, 0.0),
            Generator::Y => (PI, FRAC_PI_2),
            Generator::X2 => (FRAC_PI_2, 0.0),
            Generator::MX2 => (FRAC_PI_2, PI),
            Generator::Y2 => (FRAC_PI_2, FRAC_PI_2),
            Generator::MY2 => (FRAC_PI_2, -FRAC_PI_2),
        }
    }

    /// The generator as realized with a proportional Rabi error.
    pub fn unitary(self, epsilon: f64) -> Unitary {
        let (theta, phi) = self.rotation();
        rotation(theta * (1.0 + epsilon), phi)
    }
}

/// The 24 single-qubit Cliffords as generator words, applied left to right.
pub const CLIFFORD_WORDS: [&[Generator]; 24] = {
    use Generator::*;
    [
        &[],
        &[X],
        &[Y],
        &[Y, X],
        &[X2, Y2],
        &[X2, MY2],
        &[MX2, Y2],
        &[MX2, MY2],
        &[Y2, X2],
        &[Y2, MX2],
        &[MY2, X2],
        &[MY2, MX2],
        &[X2],
        &[MX2],
        &[Y2],
        &[MY2],
        &[MX2, Y2, X2],
        &[MX2, MY2, X2],
        &[X, Y2],
        &[X, MY2],
        &[Y, X2],
        &[Y, MX2],
        &[X2, Y2, X2],
        &[MX2, Y2, MX2],
    ]
};

/// Product of a word's noisy generator unitaries.
pub fn word_unitary(word: &[Generator], epsilon: f64) -> Unitary {
    word.iter().fold(UnitaryMatrix::identity(2), |acc, g| g.unitary(epsilon).compose(&acc))
}

/// The ideal Clifford group with its multiplication table.
pub struct CliffordGroup {
    pub elements: Vec<Unitary>,
    /// `table[a][b]` is the index of `C_a C_b`.
    pub table: Vec<[usize; 24]>,
    pub inverse: [usize; 24],
}

impl CliffordGroup {
    pub fn get() -> &'static CliffordGroup {
        static GROUP: OnceLock<CliffordGroup> = OnceLock::new();
        GROUP.get_or_init(|| {
            let elements: Vec<Unitary> = CLIFFORD_WORDS.iter().map(|w| word_unitary(w, 0.0)).collect();
            let find = |m: &Unitary| index_of(&elements, m).expect("Clifford words close under multiplication");
            let table: Vec<[usize; 24]> =
                (0..24).map(|a| std::array::from_fn(|b| find(&elements[a].compose(&elements[b])))).collect();
            let inverse = std::array::from_fn(|a| find(&elements[a].adjoint()));
            CliffordGroup { elements, table, inverse }
        })
    }

    /// Index of the element equal to `u` up to a global phase.
    pub fn index_of(&self, u: &Unitary) -> Option<usize> {
        index_of(&self.elements, u)
    }
}

fn index_of(elements: &[Unitary], u: &Unitary) -> Option<usize> {
    elements.iter().position(|e| (&e.matrix().adjoint() * u.matrix()).trace().norm() > 2.0 * (1.0 - 1e-9))
}

/// Error applied to every Clifford in an RB sequence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RbNoise {
    None,
    /// Depolarizing channel with probability `q` after each Clifford.
    Depolarizing(f64),
    /// Proportional Rabi error on every generator pulse.
    Rabi(f64),
}

/// A gate interleaved after every reference Clifford.
#[derive(Clone, Debug)]
pub struct Interleaved {
    /// The ideal gate; must be a Clifford.
    pub ideal: Unitary,
    /// The gate as actually implemented.
    pub actual: Unitary,
}

#[derive(Clone, Debug)]
pub struct RbConfig {
    pub noise: RbNoise,
    pub interleaved: Option<Interleaved>,
    pub lengths: Vec<usize>,
    pub sequences_per_length: usize,
    pub seed: u64,
    /// Binomial measurement sampling; `None` uses exact survival probabilities.
    pub shots: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RbResult {
    pub lengths: Vec<usize>,
    /// Mean over sequences, per length.
    pub sequence_fidelities: Vec<f64>,
    pub decay_p: f64,
    /// Standard error of `decay_p`.
    pub sigma_p: f64,
    pub fit_a: f64,
    pub fit_b: f64,
    /// `(1 + p) / 2`.
    pub avg_gate_fidelity: f64,
}

fn sequence_fidelity(config: &RbConfig, length: usize, rng: &mut ChaCha8Rng) -> f64 {
    let group = CliffordGroup::get();
    let noisy_elements: Option<Vec<Unitary>> = match config.noise {
        RbNoise::Rabi(eps) => Some(CLIFFORD_WORDS.iter().map(|w| word_unitary(w, eps)).collect()),
        _ => None,
    };
    let interleaved = config
        .interleaved
        .as_ref()
        .map(|g| (group.index_of(&g.ideal).expect("checked before the run"), Channel::unitary(&g.actual)));
    let step = |rho: &CMatrix, idx: usize| -> CMatrix {
        match (&config.noise, &noisy_elements) {
            (_, Some(noisy)) => Channel::unitary(&noisy[idx]).apply(rho),
            (RbNoise::Depolarizing(q), _) => {
                Channel::depolarizing(&group.elements[idx], *q).expect("validated").apply(rho)
            }
            _ => Channel::unitary(&group.elements[idx]).apply(rho),
        }
    };
    let mut rho = projector([C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
    let mut total = 0usize;
    for _ in 0..length {
        let c = rng.random_range(0..24);
        rho = step(&rho, c);
        total = group.table[c][total];
        if let Some((ideal, actual)) = &interleaved {
            rho = actual.apply(&rho);
            total = group.table[*ideal][total];
        }
    }
    rho = step(&rho, group.inverse[total]);
    let survival = rho[(0, 0)].re.clamp(0.0, 1.0);
    match config.shots {
        Some(n) => Binomial::new(n, survival).expect("probability in [0, 1]").sample(rng) as f64 / n as f64,
        None => survival,
    }
}

/// Runs reference (or interleaved) RB. Every sequence has its own stream
/// `(seed, index)`, so results do not depend on thread scheduling.
pub fn rb_run(config: &RbConfig) -> Result<RbResult, CharacterizeError> {
    if config.lengths.len() < 2 {
        return Err(CharacterizeError::InvalidInput("need at least two sequence lengths".into()));
    }
    if config.sequences_per_length < 10 {
        return Err(CharacterizeError::InvalidInput("need at least 10 sequences per length".into()));
    }
    match config.noise {
        RbNoise::Depolarizing(q) if !(0.0..=1.0).contains(&q) => {
            return Err(CharacterizeError::InvalidInput(format!("depolarizing probability {q} outside [0, 1]")))
        }
        RbNoise::Rabi(e) if !e.is_finite() => {
            return Err(CharacterizeError::InvalidInput("Rabi error must be finite".into()))
        }
        _ => {}
    }
    if let Some(g) = &config.interleaved {
        if g.ideal.dim() != 2 || g.actual.dim() != 2 {
            return Err(CharacterizeError::InvalidInput("interleaved gate must be single-qubit".into()));
        }
        if CliffordGroup::get().index_of(&g.ideal).is_none() {
            return Err(CharacterizeError::InvalidInput("interleaved gate is not a Clifford".into()));
        }
    }
    if config.shots == Some(0) {
        return Err(CharacterizeError::InvalidInput("shots must be positive".into()));
    }
    let per = config.sequences_per_length;
    let jobs: Vec<(usize, usize)> =
        config.lengths.iter().enumerate().flat_map(|(li, &m)| (0..per).map(move |s| (li * per + s, m))).collect();
    let samples: Vec<f64> = jobs
        .par_iter()
        .map(|&(index, m)| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(index as u64);
            sequence_fidelity(config, m, &mut rng)
        })
        .collect();
    let points: Vec<(f64, f64)> = jobs.iter().zip(&samples).map(|(&(_, m), &f)| (m as f64, f)).collect();
    let sequence_fidelities = samples.chunks(per).map(|c| c.iter().sum::<f64>() / per as f64).collect();
    let fit = fit_decay(&points)?;
    Ok(RbResult {
        lengths: config.lengths.clone(),
        sequence_fidelities,
        decay_p: fit.p,
        sigma_p: fit.sigma_p,
        fit_a: fit.a,
        fit_b: fit.b,
        avg_gate_fidelity: 0.5 * (1.0 + fit.p),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct InterleavedResult {
    pub reference: RbResult,
    pub interleaved: RbResult,
    /// `1 - (1 - p_int / p_ref) / 2`.
    pub gate_fidelity: f64,
}

/// Reference and interleaved runs sharing the same seed.
pub fn interleaved_rb(config: &RbConfig, gate: Interleaved) -> Result<InterleavedResult, CharacterizeError> {
    let reference = rb_run(&RbConfig { interleaved: None, ..config.clone() })?;
    let interleaved = rb_run(&RbConfig { interleaved: Some(gate), ..config.clone() })?;
    let gate_fidelity = 1.0 - 0.5 * (1.0 - interleaved.decay_p / reference.decay_p);
    Ok(InterleavedResult { reference, interleaved, gate_fidelity })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayFit {
    pub a: f64,
    pub p: f64,
    pub b: f64,
    pub sigma_p: f64,
}

/// Least-squares `A p^m + B` with `A, B` solved linearly for each trial `p`.
fn linear_part(points: &[(f64, f64)], p: f64) -> (f64, f64, f64) {
    let (mut s11, mut s12, mut s22, mut t1, mut t2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(m, y) in points {
        let e = p.powf(m);
        s11 += e * e;
        s12 += e;
        s22 += 1.0;
        t1 += e * y;
        t2 += y;
    }
    let det = s11 * s22 - s12 * s12;
    let (a, b) = if det.abs() <= 1e-12 * s11 * s22 {
        (0.0, t2 / s22)
    } else {
        ((t1 * s22 - t2 * s12) / det, (s11 * t2 - s12 * t1) / det)
    };
    let rss = points.iter().map(|&(m, y)| (a * p.powf(m) + b - y).powi(2)).sum();
    (a, b, rss)
}

/// Fits `F(m) = A p^m + B` over `p` in `(0, 1]`.
pub fn fit_decay(points: &[(f64, f64)]) -> Result<DecayFit, CharacterizeError> {
    if points.len() < 4 || points.iter().any(|(m, y)| !m.is_finite() || !y.is_finite()) {
        return Err(CharacterizeError::FitFailure("need at least four finite points".into()));
    }
    let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &(_, y)| (l.min(y), h.max(y)));
    if hi - lo < 1e-12 {
        return Ok(DecayFit { a: 0.0, p: 1.0, b: 0.5 * (lo + hi), sigma_p: 0.0 });
    }
    let rss = |p: f64| linear_part(points, p).2;
    let grid = 4000;
    let at = |k: usize| k as f64 / grid as f64;
    let best = (1..=grid).min_by(|&i, &j| rss(at(i)).total_cmp(&rss(at(j)))).expect("nonempty grid");
    let (mut a, mut b) = (at(best - 1).max(1e-12), at((best + 1).min(grid)));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if rss(c) <= rss(d) {
            b = d;
        } else {
            a = c;
        }
        if b - a < 1e-15 {
            break;
        }
    }
    let mut p = 0.5 * (a + b);
    if rss(1.0) <= rss(p) {
        p = 1.0;
    }
    if !(p > 1e-9 && p <= 1.0) {
        return Err(CharacterizeError::FitFailure(format!("decay parameter {p} outside (0, 1]")));
    }
    let (fa, fb, _) = linear_part(points, p);
    // heteroscedasticity-robust covariance (J^T J)^-1 (sum r_i^2 J_i J_i^T) (J^T J)^-1;
    // shot noise variance changes with m, so a pooled residual variance is biased
    let mut jtj = [[0.0; 3]; 3];
    let mut meat = [[0.0; 3]; 3];
    for &(m, y) in points {
        let row = [p.powf(m), fa * m * p.powf(m - 1.0), 1.0];
        let r2 = (fa * p.powf(m) + fb - y).powi(2);
        for i in 0..3 {
            for j in 0..3 {
                jtj[i][j] += row[i] * row[j];
                meat[i][j] += r2 * row[i] * row[j];
            }
        }
    }
    let n = points.len() as f64;
    let sigma_p = inverse3(&jtj)
        .map(|inv| {
            let v: f64 =
                (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| inv[1][i] * meat[i][j] * inv[j][1]).sum();
            (v * n / (n - 3.0)).max(0.0).sqrt()
        })
        .unwrap_or(f64::INFINITY);
    Ok(DecayFit { a: fa, p, b: fb, sigma_p })
}

fn inverse3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let c = |i: usize, j: usize| {
        let (r0, r1) = ((i + 1) % 3, (i + 2) % 3);
        let (c0, c1) = ((j + 1) % 3, (j + 2) % 3);
        m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]
    };
    let det = m[0][0] * c(0, 0) + m[0][1] * c(0, 1) + m[0][2] * c(0, 2);
    let scale = m.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max).powi(3);
    if !(det.abs() > 1e-14 * scale) {
        return None;
    }
    Some(std::array::from_fn(|i| std::array::from_fn(|j| c(j, i) / det)))
}
