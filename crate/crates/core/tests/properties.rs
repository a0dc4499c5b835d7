use std::f64::consts::PI;

use geomgate_core::bessel::bessel_j_upto;
use geomgate_core::characterize::{qpt, Channel, CliffordGroup, ProcessMatrix, CLIFFORD_WORDS};
use geomgate_core::evolution::{evolve, ErrorModel};
use geomgate_core::geometry::wrap;
use geomgate_core::linalg::{axis_rotation, gate_fidelity, mat_exp, ComplexMatrix};
use geomgate_core::pulses::{build_sr_ngqg, parse_schedule, serialize_schedule, Gate, DEFAULT_OMEGA0};
use geomgate_core::{CMatrix, Complex64};
use proptest::prelude::*;

fn hermitian(dim: usize) -> impl Strategy<Value = CMatrix> {
    prop::collection::vec(-1.0f64..1.0, dim * dim * 2).prop_map(move |v| {
        let mut h = ComplexMatrix::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                let k = 2 * (i * dim + j);
                let z = if i == j { Complex64::new(v[k], 0.0) } else { Complex64::new(v[k], v[k + 1]) };
                h[(i, j)] = z;
                h[(j, i)] = z.conj();
            }
        }
        h
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exponential_composes(h in hermitian(4), t1 in -2.0f64..2.0, t2 in -2.0f64..2.0) {
        let a = mat_exp(&h, t1).unwrap();
        let b = mat_exp(&h, t2).unwrap();
        let ab = mat_exp(&h, t1 + t2).unwrap();
        prop_assert!(a.compose(&b).matrix().max_abs_diff(ab.matrix()) < 1e-12);
        prop_assert!(ab.defect() < 1e-12);
    }

    #[test]
    fn fidelity_ignores_global_phase(theta in 0.0f64..PI, nx in -1.0f64..1.0, ny in -1.0f64..1.0, g in -PI..PI) {
        let u = axis_rotation(theta, [nx, ny, 1.0]);
        let f = gate_fidelity(&u, &u.with_phase(g)).unwrap();
        prop_assert!((f - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unitary_columns_are_orthonormal(h in hermitian(3), t in -3.0f64..3.0) {
        let m = mat_exp(&h, t).unwrap().into_matrix();
        let g = &m.adjoint() * &m;
        prop_assert!(g.max_abs_diff(&ComplexMatrix::identity(3)) < 1e-12);
    }

    #[test]
    fn wrap_stays_in_range(x in -1e3f64..1e3) {
        let w = wrap(x);
        prop_assert!(w > -PI - 1e-12 && w <= PI + 1e-12);
        let turns = (x - w) / (2.0 * PI);
        prop_assert!((turns - turns.round()).abs() < 1e-9);
    }

    #[test]
    fn bessel_squares_sum_to_one(x in 0.0f64..3.0) {
        let j = bessel_j_upto(40, x);
        let s = j[0] * j[0] + 2.0 * j[1..].iter().map(|v| v * v).sum::<f64>();
        prop_assert!((s - 1.0).abs() < 1e-10);
    }

    #[test]
    fn tomography_round_trip(theta in 0.0f64..2.0 * PI, nx in -1.0f64..1.0, ny in -1.0f64..1.0, nz in 0.1f64..1.0) {
        let u = axis_rotation(theta, [nx, ny, nz]);
        let ch = Channel::unitary(&u);
        let chi = qpt(|r| ch.apply(r)).unwrap();
        prop_assert!(chi.process_fidelity(&ProcessMatrix::from_unitary(&u)) > 1.0 - 1e-9);
    }

    #[test]
    fn clifford_words_stay_in_group(a in 0usize..24, b in 0usize..24) {
        let g = CliffordGroup::get();
        let prod = g.elements[a].compose(&g.elements[b]);
        prop_assert_eq!(g.index_of(&prod), Some(g.table[a][b]));
        prop_assert_eq!(CLIFFORD_WORDS[a].is_empty(), a == 0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn evolution_stays_unitary(eps in -0.3f64..0.3) {
        let s = build_sr_ngqg(Gate::X, DEFAULT_OMEGA0);
        let r = evolve(&s, &ErrorModel::rabi(eps).unwrap(), 2048).unwrap();
        prop_assert!(r.max_unitarity_defect < 1e-8);
        prop_assert!(r.halving_change < 1e-8);
    }

    #[test]
    fn schedule_text_round_trip(scale in 0.5f64..2.0, shift in -PI..PI) {
        let s = build_sr_ngqg(Gate::Y, DEFAULT_OMEGA0).scaled(scale).phase_shifted(shift);
        let back = parse_schedule(&serialize_schedule(&s)).unwrap();
        prop_assert_eq!(back.segments.len(), s.segments.len());
        for (a, b) in back.segments.iter().zip(&s.segments) {
            prop_assert!((a.duration - b.duration).abs() <= 1e-12 * b.duration);
            prop_assert!((a.phase - b.phase).abs() < 1e-12);
        }
    }
}
