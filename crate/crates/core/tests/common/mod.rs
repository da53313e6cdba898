//! Oracles shared by the integration tests. Everything here is written
//! against textbook definitions and uses nothing from the library's
//! numerical code.

#![allow(dead_code)]

use std::f64::consts::PI;

use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Sub};

/// Unevaluated sum `hi + lo` carrying about 32 significant digits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoFloat {
    hi: f64,
    lo: f64,
}

fn two_sum(a: f64, b: f64) -> TwoFloat {
    let s = a + b;
    let bb = s - a;
    TwoFloat { hi: s, lo: (a - (s - bb)) + (b - bb) }
}

fn quick_two_sum(a: f64, b: f64) -> TwoFloat {
    let s = a + b;
    TwoFloat { hi: s, lo: b - (s - a) }
}

impl From<f64> for TwoFloat {
    fn from(v: f64) -> Self {
        TwoFloat { hi: v, lo: 0.0 }
    }
}

impl From<TwoFloat> for f64 {
    fn from(v: TwoFloat) -> f64 {
        v.hi + v.lo
    }
}

impl Add for TwoFloat {
    type Output = TwoFloat;
    fn add(self, o: TwoFloat) -> TwoFloat {
        let s = two_sum(self.hi, o.hi);
        let t = two_sum(self.lo, o.lo);
        let s = quick_two_sum(s.hi, s.lo + t.hi);
        quick_two_sum(s.hi, s.lo + t.lo)
    }
}

impl Sub for TwoFloat {
    type Output = TwoFloat;
    fn sub(self, o: TwoFloat) -> TwoFloat {
        self + TwoFloat { hi: -o.hi, lo: -o.lo }
    }
}

impl Mul for TwoFloat {
    type Output = TwoFloat;
    fn mul(self, o: TwoFloat) -> TwoFloat {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        quick_two_sum(p, e + (self.hi * o.lo + self.lo * o.hi))
    }
}

impl Mul<f64> for TwoFloat {
    type Output = TwoFloat;
    fn mul(self, o: f64) -> TwoFloat {
        self * TwoFloat::from(o)
    }
}

impl Mul<TwoFloat> for f64 {
    type Output = TwoFloat;
    fn mul(self, o: TwoFloat) -> TwoFloat {
        o * self
    }
}

impl Div<f64> for TwoFloat {
    type Output = TwoFloat;
    fn div(self, o: f64) -> TwoFloat {
        let q1 = self.hi / o;
        let r = self - TwoFloat::from(q1) * o;
        let q2 = r.hi / o;
        let r = r - TwoFloat::from(q2) * o;
        let q3 = r.hi / o;
        quick_two_sum(q1, q2) + TwoFloat::from(q3)
    }
}

impl AddAssign for TwoFloat {
    fn add_assign(&mut self, o: TwoFloat) {
        *self = *self + o;
    }
}

impl MulAssign<f64> for TwoFloat {
    fn mul_assign(&mut self, o: f64) {
        *self = *self * o;
    }
}

/// Legendre polynomials `P_0..=P_n` at `t` by the three-term recurrence.
pub fn legendre_all(n: usize, t: f64) -> Vec<f64> {
    let mut p = vec![1.0; n + 1];
    if n >= 1 {
        p[1] = t;
    }
    for k in 2..=n {
        let kf = k as f64;
        p[k] = ((2.0 * kf - 1.0) * t * p[k - 1] - (kf - 1.0) * p[k - 2]) / kf;
    }
    p
}

/// `Σ_{n<terms} w(n) P_n(τ)` in double-double arithmetic, where `w(n)`
/// already contains the radial factor. The recurrence and the sum keep
/// about 32 digits, so cancellation near `τ = -1` does not pollute the
/// reference value.
pub fn dd_legendre_sum(tau: f64, terms: usize, w: impl Fn(usize, TwoFloat) -> TwoFloat) -> f64 {
    let t = TwoFloat::from(tau);
    let mut p_prev = TwoFloat::from(1.0);
    let mut p = t;
    let mut acc = w(0, p_prev);
    if terms > 1 {
        acc += w(1, p);
    }
    for k in 2..terms {
        let kf = k as f64;
        let next = ((2.0 * kf - 1.0) * t * p - (kf - 1.0) * p_prev) / kf;
        p_prev = p;
        p = next;
        acc += w(k, p);
    }
    f64::from(acc)
}

/// `qⁿ` in double-double for all `n < terms`.
pub fn dd_powers(q: f64, terms: usize) -> Vec<TwoFloat> {
    let mut out = Vec::with_capacity(terms);
    let mut v = TwoFloat::from(1.0);
    for _ in 0..terms {
        out.push(v);
        v *= q;
    }
    out
}

/// Number of terms after which `n⁶ qⁿ` is below `1e-40` of its peak, a
/// safe truncation for every series with polynomial weight up to degree 6.
pub fn terms_for(q: f64) -> usize {
    if q == 0.0 {
        return 1;
    }
    let lq = -q.ln();
    let log_term = |n: f64| 6.0 * n.ln() - lq * n;
    let peak = (6.0 / lq).max(1.0);
    let floor = log_term(peak) - 92.0;
    let mut n = peak.ceil();
    while log_term(n) > floor {
        n += 1.0;
    }
    n as usize + 1
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, by Newton iteration on
/// `P_n` from the Chebyshev guesses.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        ((got - want) / want).abs()
    }
}
