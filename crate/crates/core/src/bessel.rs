//! Bessel functions of the first kind for integer order.

/// Location of the first maximum of `J1`.
pub const J1_PEAK_ARG: f64 = 1.841_183_781_340_659_3;
/// `J1(J1_PEAK_ARG)`.
pub const J1_PEAK: f64 = 0.581_865_224_281_596_4;

/// `J_0(x) ..= J_n(x)` by Miller's downward recurrence, normalized with
/// `J0 + 2 sum J_2k = 1`.
pub fn bessel_j_upto(n: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let ax = x.abs();
    if ax < 1e-6 {
        for (k, v) in out.iter_mut().enumerate() {
            *v = series(k, ax);
        }
    } else {
        let start = {
            let m = n.max(ax.ceil() as usize) + 30 + (ax.sqrt() * 10.0) as usize;
            m + m % 2
        };
        let mut next = 0.0;
        let mut cur = 1e-30;
        let mut norm = 0.0;
        for k in (1..=start).rev() {
            let prev = 2.0 * k as f64 / ax * cur - next;
            next = cur;
            cur = prev;
            // cur now holds J_{k-1} (unnormalized)
            let j = k - 1;
            if j <= n {
                out[j] = cur;
            }
            if j > 0 && j % 2 == 0 {
                norm += 2.0 * cur;
            }
            if cur.abs() > 1e250 {
                let s = 1e-250;
                next *= s;
                cur *= s;
                norm *= s;
                for v in out.iter_mut() {
                    *v *= s;
                }
            }
        }
        norm += cur;
        for v in out.iter_mut() {
            *v /= norm;
        }
    }
    if x < 0.0 {
        for (k, v) in out.iter_mut().enumerate() {
            if k % 2 == 1 {
                *v = -*v;
            }
        }
    }
    out
}

/// `J_m(x)` for any integer `m`.
pub fn bessel_j(m: i32, x: f64) -> f64 {
    let n = m.unsigned_abs() as usize;
    let v = bessel_j_upto(n, x)[n];
    if m < 0 && n % 2 == 1 {
        -v
    } else {
        v
    }
}

/// `dJ1/dx = J0 - J1/x`.
pub fn bessel_j1_prime(x: f64) -> f64 {
    if x == 0.0 {
        return 0.5;
    }
    let j = bessel_j_upto(1, x);
    j[0] - j[1] / x
}

/// Power series `sum_k (-1)^k (x/2)^(2k+n) / (k! (k+n)!)`; accurate for small `|x|`.
pub fn series(n: usize, x: f64) -> f64 {
    let h = 0.5 * x;
    let mut term = 1.0;
    for k in 1..=n {
        term *= h / k as f64;
    }
    let mut sum = term;
    for k in 1..200 {
        term *= -h * h / (k as f64 * (k + n) as f64);
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

/// Inverse of `J1` on its monotone branch `(0, J1_PEAK_ARG)`.
pub fn inverse_j1(value: f64) -> Option<f64> {
    if !(value > 0.0 && value <= J1_PEAK) {
        return None;
    }
    let (mut lo, mut hi) = (0.0, J1_PEAK_ARG);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if bessel_j(1, mid) < value {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}

/// `sum_{|m| > cutoff} |J_m(x)|`.
pub fn tail_sum(cutoff: usize, x: f64) -> f64 {
    let j = bessel_j_upto(cutoff + 60, x);
    2.0 * j[cutoff + 1..].iter().map(|v| v.abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn j1_small_argument() {
        assert!((bessel_j(1, 0.1) - 0.049_938).abs() < 1e-6);
        assert!((bessel_j(1, 0.1) - series(1, 0.1)).abs() < 1e-15);
    }

    #[test]
    fn matches_series_on_used_range() {
        for i in 0..=60 {
            let x = 0.05 * i as f64;
            let j = bessel_j_upto(8, x);
            for (n, v) in j.iter().enumerate() {
                assert!((v - series(n, x)).abs() < 1e-12, "n={n} x={x}");
            }
        }
    }

    #[test]
    fn sum_of_squares_is_one() {
        for x in [0.5, 1.0, 1.8] {
            let j = bessel_j_upto(40, x);
            let s = j[0] * j[0] + 2.0 * j[1..].iter().map(|v| v * v).sum::<f64>();
            assert!((s - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn negative_order_and_argument() {
        assert!((bessel_j(-3, 1.3) + bessel_j(3, 1.3)).abs() < 1e-15);
        assert!((bessel_j(3, -1.3) + bessel_j(3, 1.3)).abs() < 1e-15);
        assert!((bessel_j(2, -1.3) - bessel_j(2, 1.3)).abs() < 1e-15);
    }

    #[test]
    fn large_argument_known_values() {
        // J0(10) and J5(20) from standard tables
        assert!((bessel_j(0, 10.0) - (-0.245_935_764_451_348_3)).abs() < 1e-12);
        assert!((bessel_j(5, 20.0) - 0.151_169_767_982_394_9).abs() < 1e-12);
    }

    #[test]
    fn derivative_at_1p2() {
        let d = bessel_j1_prime(1.2);
        let oracle = 0.5 * (series(0, 1.2) - series(2, 1.2));
        assert!((d - oracle).abs() < 1e-12);
        assert!((d - 0.2559).abs() < 1e-4);
    }

    #[test]
    fn peak_and_inverse() {
        assert!(bessel_j1_prime(J1_PEAK_ARG).abs() < 1e-12);
        assert!((bessel_j(1, J1_PEAK_ARG) - J1_PEAK).abs() < 1e-15);
        for v in [1e-3, 0.1, 0.4, 0.5, 0.58] {
            let x = inverse_j1(v).unwrap();
            assert!((bessel_j(1, x) - v).abs() < 1e-14);
        }
        assert!(inverse_j1(0.6).is_none());
    }

    #[test]
    fn tail_bound() {
        assert!(tail_sum(20, 1.8) < 1e-10);
        assert!(tail_sum(1, 1.8) > 1e-2);
    }
}
