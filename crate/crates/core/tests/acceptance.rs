//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line to
//! stderr (uncaptured, so it shows up in a normal `cargo test` run) and then
//! asserts the same condition.

use std::io::Write as _;
use std::time::{Duration, Instant};

use geomgate_core::characterize::{qpt, random_unitary, rb_run, Channel, ProcessMatrix, RbConfig, RbNoise};
use geomgate_core::evolution::{evolve, fidelity_sweep, first_order_fidelity, ErrorModel, DEFAULT_STEPS};
use geomgate_core::linalg::{gate_fidelity, Pauli, UnitaryMatrix};
use geomgate_core::pulses::{build, build_dynamical_gaussian, Gate, Scheme, DEFAULT_OMEGA0};
use geomgate_core::reproduce::{fig4c, linear_grid, log_grid, table3, TABLE3};
use geomgate_core::twoqubit::{
    gate_fidelity_2q, parametric_gate, rotating_hamiltonian, run_cz, simulate_two_qubit, with_bookkeeping,
    DeviceParams, DriveSegment, Frame, HamiltonianMethod, SimOptions, TwoQubitGate, DEFAULT_CUTOFF, DEFAULT_J1,
};
use geomgate_core::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: usize, title: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {n:>2} [{verdict}] {title}: {detail}");
}

#[test]
fn criterion_01_robustness_table() {
    let start = Instant::now();
    let rows = table3().unwrap();
    let elapsed = start.elapsed();
    let mut detail = Vec::new();
    for r in &rows {
        let mark = if r.pass() { "" } else { " <-- outside tolerance" };
        detail.push(format!(
            "{} {} {:.3} (reference {:.2} +/- {:.2}){mark}",
            r.scheme, r.gate, r.computed, r.reference, r.tolerance
        ));
    }
    let pass = rows.len() == TABLE3.len() && rows.iter().all(|r| r.pass()) && elapsed < Duration::from_secs(30);
    report(1, "|D12/eps| table", pass, &format!("{:.2?}; {}", elapsed, detail.join("; ")));
    assert!(pass);
}

#[test]
fn criterion_02_scaling_laws() {
    let grid = log_grid(0.02, 0.2, 9);
    let start = Instant::now();
    let cases = [
        (Scheme::SrNgqg, Gate::X, 3.7, 4.3),
        (Scheme::SrNgqg, Gate::Y, 3.7, 4.3),
        (Scheme::Dynamical, Gate::X, 1.8, 2.2),
        (Scheme::NgqgP1, Gate::X, 3.5, f64::INFINITY),
        (Scheme::NgqgP2, Gate::X, 1.7, 2.3),
    ];
    let mut pass = true;
    let mut detail = Vec::new();
    for (scheme, gate, lo, hi) in cases {
        let s = build(scheme, gate, DEFAULT_OMEGA0).unwrap();
        let slope = fidelity_sweep(&s, &s.ideal().unwrap(), &grid).unwrap().fitted_slope;
        let ok = slope >= lo && slope <= hi;
        pass &= ok;
        detail.push(format!("{scheme} {gate} {slope:.2}{}", if ok { "" } else { " <-- out of range" }));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(120);
    report(2, "infidelity slopes", pass, &format!("{:.2?}; {}", elapsed, detail.join("; ")));
    assert!(pass);
}

#[test]
fn criterion_03_ideal_gates() {
    let s = build(Scheme::SrNgqg, Gate::X, DEFAULT_OMEGA0).unwrap();
    let u = evolve(&s, &ErrorModel::none(), DEFAULT_STEPS).unwrap().final_unitary;
    let minus_i_x = Pauli::X.matrix::<f64>().scale(Complex64::new(0.0, -1.0));
    let diff = u.matrix().max_abs_diff(&minus_i_x);
    let mut worst = 1.0f64;
    for gate in Gate::ALL {
        let s = build(Scheme::SrNgqg, gate, DEFAULT_OMEGA0).unwrap();
        let u = evolve(&s, &ErrorModel::none(), DEFAULT_STEPS).unwrap().final_unitary;
        worst = worst.min(gate_fidelity(&u, &s.ideal().unwrap()).unwrap());
    }
    let pass = diff < 1e-6 && worst >= 0.9999;
    report(3, "ideal gates", pass, &format!("|U - (-i sigma_x)| = {diff:.1e}; min fidelity {worst:.12}"));
    assert!(pass);
}

#[test]
fn criterion_04_second_order_expansion() {
    let mut entries: Vec<(Scheme, Gate)> = TABLE3.iter().map(|r| (r.0, r.1)).collect();
    entries.extend([(Scheme::SrNgqg, Gate::Y), (Scheme::SrNgqg, Gate::YHalf)]);
    let mut worst_ratio = 0.0f64;
    for (scheme, gate) in entries {
        let s = build(scheme, gate, DEFAULT_OMEGA0).unwrap();
        let ideal = s.ideal().unwrap();
        for eps in [0.01, 0.02, 0.03, 0.05, -0.05] {
            let u = evolve(&s, &ErrorModel::rabi(eps).unwrap(), DEFAULT_STEPS).unwrap().final_unitary;
            let exact = gate_fidelity(&u, &ideal).unwrap();
            let approx = first_order_fidelity(&s, eps).unwrap();
            worst_ratio = worst_ratio.max((exact - approx).abs() / (10.0 * eps.powi(4)));
        }
    }
    let pass = worst_ratio < 1.0;
    report(4, "second-order fidelity expansion", pass, &format!("max |F - F2| / (10 eps^4) = {worst_ratio:.3}"));
    assert!(pass);
}

#[test]
fn criterion_05_frame_equivalence() {
    let q = DeviceParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst_u, mut worst_h) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let gate = if rng.random_bool(0.5) { TwoQubitGate::ISwap } else { TwoQubitGate::Cz };
        let delta = geomgate_core::twoqubit::resonance_select(&q, gate) * rng.random_range(0.97..1.03);
        let n = rng.random_range(1..=3);
        let drive: Vec<_> = (0..n)
            .map(|_| {
                DriveSegment::new(
                    rng.random_range(0.2..1.6) * delta,
                    delta,
                    rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
                    rng.random_range(20e-9..60e-9) / n as f64,
                )
            })
            .collect();
        let rot = simulate_two_qubit(&q, &drive, &SimOptions::rotating()).unwrap();
        let lab = simulate_two_qubit(&q, &drive, &SimOptions::lab()).unwrap();
        worst_u = worst_u.max(rot.final_unitary.matrix().max_abs_diff(lab.final_unitary.matrix()));
        let booked = with_bookkeeping(drive).unwrap();
        let total: f64 = booked.iter().map(|s| s.duration).sum();
        for _ in 0..5 {
            let t = rng.random_range(0.0..total);
            let a =
                rotating_hamiltonian(&q, &booked, t, HamiltonianMethod::Analytic { cutoff: DEFAULT_CUTOFF }).unwrap();
            let f = rotating_hamiltonian(&q, &booked, t, HamiltonianMethod::FrameTransform).unwrap();
            worst_h = worst_h.max(a.max_abs_diff(&f) / q.g12);
        }
    }
    let pass = worst_u < 1e-5 && worst_h < 1e-6;
    report(
        5,
        "frame equivalence",
        pass,
        &format!("lab vs rotating {worst_u:.1e}; analytic vs frame transform {worst_h:.1e} g12"),
    );
    assert!(pass);
}

#[test]
fn criterion_06_two_qubit_gates() {
    let q = DeviceParams::default();
    let s = build(Scheme::SrNgqg, Gate::X, DEFAULT_OMEGA0).unwrap();
    let g = parametric_gate(&q, &s, TwoQubitGate::ISwap, DEFAULT_J1, true).unwrap();
    let r = simulate_two_qubit(&q, &g.drive, &SimOptions::rotating()).unwrap();
    let f_iswap = gate_fidelity_2q(&r.final_unitary, &g.target);
    let cz = run_cz(&q, DEFAULT_J1, true, &SimOptions::rotating()).unwrap();
    let phase_err = (cz.conditional_phase.abs() - std::f64::consts::PI).abs();
    let pass = f_iswap >= 0.99 && f_iswap < 1.0 - 1e-5 && phase_err < 0.02;
    report(
        6,
        "two-qubit gates",
        pass,
        &format!(
            "iSWAP fidelity {f_iswap:.5}; CZ conditional phase {:.5} (error {phase_err:.1e})",
            cz.conditional_phase
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_07_amplitude_offset_robustness() {
    let q = DeviceParams::default();
    let sweeps = fig4c(&q, &linear_grid(-0.1, 0.1, 5), &SimOptions::rotating()).unwrap();
    let mut pass = true;
    let mut detail = Vec::new();
    for (scheme, sw) in &sweeps {
        let v = sw.variation();
        pass &= v < 0.005;
        let f: Vec<String> = sw.points.iter().map(|p| format!("{:.4}", p.fidelity)).collect();
        detail.push(format!("{scheme} variation {:.2}% [{}]", 100.0 * v, f.join(" ")));
    }
    report(7, "amplitude-offset robustness", pass, &detail.join("; "));
    assert!(pass);
}

#[test]
fn criterion_08_phase_compensation() {
    let q = DeviceParams::default();
    let s = build(Scheme::SrNgqg, Gate::X, DEFAULT_OMEGA0).unwrap();
    let infidelity = |compensated: bool| {
        let g = parametric_gate(&q, &s, TwoQubitGate::ISwap, DEFAULT_J1, compensated).unwrap();
        let r = simulate_two_qubit(&q, &g.drive, &SimOptions::rotating()).unwrap();
        1.0 - gate_fidelity_2q(&r.final_unitary, &g.target)
    };
    let (on, off) = (infidelity(true), infidelity(false));
    let pass = s.segments.len() >= 3 && off >= 10.0 * on;
    report(
        8,
        "phase compensation",
        pass,
        &format!("{} segments; infidelity {on:.2e} compensated, {off:.2e} without", s.segments.len()),
    );
    assert!(pass);
}

#[test]
fn criterion_09_characterization() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst_qpt = 1.0f64;
    for _ in 0..100 {
        let u = random_unitary(&mut rng);
        let ch = Channel::unitary(&u);
        let chi = qpt(|r| ch.apply(r)).unwrap();
        worst_qpt = worst_qpt.min(chi.process_fidelity(&ProcessMatrix::from_unitary(&u)));
    }

    let q = 0.01;
    let rb = rb_run(&RbConfig {
        noise: RbNoise::Depolarizing(q),
        interleaved: None,
        lengths: vec![1, 2, 4, 8, 16, 32, 64, 128],
        sequences_per_length: 50,
        seed: 7,
        shots: Some(1000),
    })
    .unwrap();
    let z = (rb.decay_p - (1.0 - q)) / rb.sigma_p;

    let clean = rb_run(&RbConfig {
        noise: RbNoise::None,
        interleaved: None,
        lengths: vec![1, 16, 128],
        sequences_per_length: 20,
        seed: 8,
        shots: None,
    })
    .unwrap();
    let drop = clean.sequence_fidelities[0] - clean.sequence_fidelities[2];

    let pass = worst_qpt > 1.0 - 1e-9 && z.abs() <= 2.0 && drop.abs() < 1e-4;
    report(
        9,
        "characterization harness",
        pass,
        &format!(
            "min QPT fidelity {worst_qpt:.12}; RB p = {:.5} +/- {:.1e} ({z:+.2} sigma); error-free drop over 128 Cliffords {drop:.1e}",
            rb.decay_p, rb.sigma_p
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_10_numerical_hygiene() {
    let mut worst_change = 0.0f64;
    let mut worst_defect = 0.0f64;
    let mut entries: Vec<(Scheme, Gate)> = TABLE3.iter().map(|r| (r.0, r.1)).collect();
    entries.extend([(Scheme::SrNgqg, Gate::Y), (Scheme::SrNgqg, Gate::YHalf)]);
    for (scheme, gate) in entries {
        let s = build(scheme, gate, DEFAULT_OMEGA0).unwrap();
        let ideal = s.ideal().unwrap();
        for eps in [0.0, 0.1, -0.2] {
            let e = ErrorModel::rabi(eps).unwrap();
            let coarse = evolve(&s, &e, DEFAULT_STEPS).unwrap();
            let fine = evolve(&s, &e, 2 * DEFAULT_STEPS).unwrap();
            let df = gate_fidelity(&coarse.final_unitary, &ideal).unwrap()
                - gate_fidelity(&fine.final_unitary, &ideal).unwrap();
            worst_change = worst_change.max(df.abs());
            worst_defect = worst_defect.max(coarse.max_unitarity_defect);
        }
    }

    let q = DeviceParams::default();
    let dynx = build_dynamical_gaussian(Gate::X, 1.0 / 6.0, DEFAULT_OMEGA0);
    let g = parametric_gate(&q, &dynx, TwoQubitGate::ISwap, DEFAULT_J1, true).unwrap();
    let opts = SimOptions { frame: Frame::Rotating, check_halving: false, ..SimOptions::rotating() };
    let a = simulate_two_qubit(&q, &g.drive, &opts).unwrap();
    let b = simulate_two_qubit(&q, &g.drive, &SimOptions { dt: opts.dt / 2.0, ..opts }).unwrap();
    let df2 = (gate_fidelity_2q(&a.final_unitary, &g.target) - gate_fidelity_2q(&b.final_unitary, &g.target)).abs();
    worst_change = worst_change.max(df2);
    worst_defect = worst_defect.max(a.max_unitarity_defect).max(b.max_unitarity_defect);

    let cfg = RbConfig {
        noise: RbNoise::Depolarizing(0.02),
        interleaved: None,
        lengths: vec![1, 8, 32],
        sequences_per_length: 12,
        seed: 3,
        shots: Some(300),
    };
    let deterministic = rb_run(&cfg).unwrap() == rb_run(&cfg).unwrap();
    let mut r1 = ChaCha8Rng::seed_from_u64(5);
    let mut r2 = ChaCha8Rng::seed_from_u64(5);
    let same_draw: UnitaryMatrix<f64> = random_unitary(&mut r1);
    let deterministic = deterministic && same_draw.matrix().max_abs_diff(random_unitary(&mut r2).matrix()) == 0.0;

    let pass = worst_change < 1e-8 && worst_defect < 1e-8 && deterministic;
    report(
        10,
        "numerical hygiene",
        pass,
        &format!("max fidelity change on halving {worst_change:.1e}; max unitarity defect {worst_defect:.1e}; seeded runs identical: {deterministic}"),
    );
    assert!(pass);
}
