//! Bessel functions of the first kind of orders 0 and 1 and the zeros of
//! their derivatives used by the disk experiments.

use std::f64::consts::PI;

/// Below this argument the power series is summed directly; its
/// cancellation error stays under 1e-12 there.
const SERIES_LIMIT: f64 = 12.0;

/// `J_n(x)` for `n` in {0, 1}.
pub fn bessel_j(order: u32, x: f64) -> f64 {
    assert!(order <= 1, "only J0 and J1 are available");
    if x < 0.0 {
        // J0 is even, J1 odd.
        let value = bessel_j(order, -x);
        return if order == 0 { value } else { -value };
    }
    if x <= SERIES_LIMIT {
        series(order, x)
    } else {
        hankel(order, x)
    }
}

pub fn j0(x: f64) -> f64 {
    bessel_j(0, x)
}

pub fn j1(x: f64) -> f64 {
    bessel_j(1, x)
}

/// `sum_k (-1)^k (x/2)^(2k+n) / (k! (k+n)!)`.
fn series(n: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut term = if n == 0 { 1.0 } else { half };
    let mut sum = term;
    for k in 1..200 {
        let k = k as f64;
        term *= -half * half / (k * (k + n as f64));
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

/// Hankel asymptotic expansion for large arguments.
fn hankel(n: u32, x: f64) -> f64 {
    let mu = 4.0 * (n * n) as f64;
    let z = 8.0 * x;
    let (mut p, mut q) = (1.0, 0.0);
    let mut term: f64 = 1.0;
    for k in 1..60 {
        let kf = k as f64;
        let a = 2.0 * kf - 1.0;
        let next = term * (mu - a * a) / (kf * z);
        // The expansion diverges; stop at its smallest term.
        if next.abs() >= term.abs() || next.abs() < 1e-17 {
            break;
        }
        term = next;
        // Terms alternate between the cosine and sine series.
        match k % 4 {
            1 => q += term,
            2 => p -= term,
            3 => q -= term,
            _ => p += term,
        }
    }
    let chi = x - (0.5 * n as f64 + 0.25) * PI;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// `J_n'(x)`: `J0' = -J1`, `J1' = J0 - J1/x`.
pub fn bessel_j_derivative(order: u32, x: f64) -> f64 {
    match order {
        0 => -j1(x),
        1 if x == 0.0 => 0.5,
        1 => j0(x) - j1(x) / x,
        _ => panic!("only J0 and J1 are available"),
    }
}

/// First positive zero of `J_n'` (the first nonzero one for `J0'`), by
/// bisection between known brackets.
pub fn first_derivative_zero(order: u32) -> f64 {
    let (mut lo, mut hi) = match order {
        0 => (3.0, 4.5),
        1 => (1.0, 2.5),
        _ => panic!("only J0 and J1 are available"),
    };
    let f = |x| bessel_j_derivative(order, x);
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid).signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}
