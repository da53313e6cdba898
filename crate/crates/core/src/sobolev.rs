//! Closed-form `H_2` inner products of Abel–Poisson kernels and wavelets.
//!
//! Every kernel/wavelet pairing reduces to sums of
//! `S(q, τ) = (1/4π) Σ_n (n+½)⁴ (2n+1) qⁿ P_n(τ)` with `q = h^m h̃^m̃`.
//! Expanding `(2n+1)⁵` binomially leaves the six series `Σ nᵏ qⁿ P_n(τ)`,
//! which equal `(q d/dq)ᵏ φ(q)` for the generating function
//! `φ(q) = (1 + q² - 2qτ)^{-1/2}`. The six closed forms and their
//! gradients with respect to the first center are evaluated here with all
//! subterms shared.
//!
//! Naming of the shared subterms: `tqm{c}qsq = τq - c q²`,
//! `den{k} = (1 + q² - 2qτ)^{-k/2}`, and `id{2ⁿ} = (τ - 2ⁿq)∇q + q∇τ`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::harmonics::{sh_eval, sh_surface_grad};
use crate::sphere::{Direction, Vec3};
use crate::trial::{DictionaryElement, KernelFamily};

/// Upper bound for `q`; values at or above it are rejected.
pub const Q_MAX: f64 = 1.0 - 1e-12;

/// Binomial weights `C(5,k)·2ᵏ` of `(2n+1)⁵`.
pub const SOB_WEIGHTS: [f64; 6] = [1.0, 10.0, 40.0, 80.0, 80.0, 32.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadderInput {
    pub q: f64,
    pub tau: f64,
}

impl LadderInput {
    pub fn new(q: f64, tau: f64) -> Result<Self> {
        if !(0.0..Q_MAX).contains(&q) || !q.is_finite() {
            return Err(Error::OutsideBall(q));
        }
        Ok(LadderInput {
            q,
            tau: tau.clamp(-1.0, 1.0),
        })
    }
}

/// The six values `(q d_q)ᵏ φ(q)`, `k = 0..=5`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ladder(pub [f64; 6]);

/// Shared subterms of the ladder and its gradient.
struct Sub {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    e: f64,
    den: [f64; 7],
}

impl Sub {
    #[inline]
    fn new(q: f64, tau: f64) -> Self {
        let tq = tau * q;
        let qsq = q * q;
        let denom = 1.0 + qsq - 2.0 * tq;
        let inv = 1.0 / denom;
        let den1 = 1.0 / denom.sqrt();
        let den3 = den1 * inv;
        let den5 = den3 * inv;
        let den7 = den5 * inv;
        let den9 = den7 * inv;
        let den11 = den9 * inv;
        let den13 = den11 * inv;
        Sub {
            a: tq - qsq,
            b: tq - 2.0 * qsq,
            c: tq - 4.0 * qsq,
            d: tq - 8.0 * qsq,
            e: tq - 16.0 * qsq,
            den: [den1, den3, den5, den7, den9, den11, den13],
        }
    }

    #[inline]
    fn ladder(&self) -> [f64; 6] {
        let Sub { a, b, c, d, e, den } = *self;
        let [den1, den3, den5, den7, den9, den11, _] = den;
        let (a2, a3) = (a * a, a * a * a);
        let a4 = a2 * a2;
        let a5 = a4 * a;
        let b2 = b * b;
        [
            den1,
            a * den3,
            b * den3 + 3.0 * a2 * den5,
            c * den3 + 9.0 * a * b * den5 + 15.0 * a3 * den7,
            d * den3 + (12.0 * c * a + 9.0 * b2) * den5 + 90.0 * a2 * b * den7 + 105.0 * a4 * den9,
            e * den3
                + (15.0 * d * a + 30.0 * c * b) * den5
                + (150.0 * c * a2 + 225.0 * b2 * a) * den7
                + 1050.0 * a3 * b * den9
                + 945.0 * a5 * den11,
        ]
    }

    /// Gradients given the combined terms `id[n] = (τ - 2ⁿq)∇q + q∇τ`.
    #[inline]
    fn grads(&self, id: &[Vec3; 6]) -> [Vec3; 6] {
        let Sub { a, b, c, d, e, den } = *self;
        let [_, den3, den5, den7, den9, den11, den13] = den;
        let [id1, id2, id4, id8, id16, id32] = *id;
        let (a2, a3) = (a * a, a * a * a);
        let a4 = a2 * a2;
        let a5 = a4 * a;
        let b2 = b * b;
        [
            den3 * id1,
            den3 * id2 + (3.0 * a * den5) * id1,
            den3 * id4 + den5 * (3.0 * b * id1 + 6.0 * a * id2) + (15.0 * a2 * den7) * id1,
            den3 * id8
                + den5 * (3.0 * c * id1 + 9.0 * b * id2 + 9.0 * a * id4)
                + den7 * (45.0 * a * b * id1 + 45.0 * a2 * id2)
                + (105.0 * a3 * den9) * id1,
            den3 * id16
                + den5 * (3.0 * d * id1 + 12.0 * a * id8 + 12.0 * c * id2 + 18.0 * b * id4)
                + den7 * ((60.0 * c * a + 45.0 * b2) * id1 + 180.0 * a * b * id2 + 90.0 * a2 * id4)
                + den9 * (630.0 * a2 * b * id1 + 420.0 * a3 * id2)
                + (945.0 * a4 * den11) * id1,
            den3 * id32
                + den5
                    * (3.0 * e * id1 + 15.0 * a * id16 + 15.0 * d * id2 + 30.0 * b * id8 + 30.0 * c * id4)
                + den7
                    * ((75.0 * d * a + 150.0 * c * b) * id1
                        + 150.0 * a2 * id8
                        + (300.0 * c * a + 225.0 * b2) * id2
                        + 450.0 * b * a * id4)
                + den9
                    * ((1050.0 * c * a2 + 1575.0 * b2 * a) * id1 + 3150.0 * a2 * b * id2 + 1050.0 * a3 * id4)
                + den11 * (9450.0 * a3 * b * id1 + 4725.0 * a4 * id2)
                + (10395.0 * a5 * den13) * id1,
        ]
    }
}

/// The six closed forms `(q d_q)ᵏ φ(q)`.
pub fn phi_ladder(input: LadderInput) -> Ladder {
    Ladder(Sub::new(input.q, input.tau).ladder())
}

#[inline]
fn assemble(v: &[f64; 6]) -> f64 {
    let mut acc = 0.0;
    for k in 0..6 {
        acc += SOB_WEIGHTS[k] * v[k];
    }
    acc / (64.0 * PI)
}

/// `(1/4π) Σ (n+½)⁴ (2n+1) qⁿ P_n(τ)` in closed form.
pub fn sob_term(input: LadderInput) -> f64 {
    assemble(&phi_ladder(input).0)
}

/// Two centers and the exponents `m, m̃ ∈ {1, 2}` that form
/// `q = |x|^m |x̃|^m̃` and `τ = (x/|x|)·(x̃/|x̃|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairContext {
    pub x: Vec3,
    pub x_tilde: Vec3,
    pub m: u8,
    pub m_tilde: u8,
}

#[inline]
fn pow_m(h: f64, m: u8) -> f64 {
    if m == 1 {
        h
    } else {
        h * h
    }
}

impl PairContext {
    pub fn new(x: Vec3, x_tilde: Vec3, m: u8, m_tilde: u8) -> Result<Self> {
        if !matches!(m, 1 | 2) || !matches!(m_tilde, 1 | 2) {
            return Err(Error::InvalidArgument(format!("exponents must be 1 or 2, got ({m}, {m_tilde})")));
        }
        Ok(PairContext { x, x_tilde, m, m_tilde })
    }

    #[inline]
    fn parts(&self) -> Parts {
        let h = self.x.norm();
        let ht = self.x_tilde.norm();
        let tau = if h > 0.0 && ht > 0.0 {
            (self.x.dot(&self.x_tilde) / (h * ht)).clamp(-1.0, 1.0)
        } else {
            1.0
        };
        let ht_m = pow_m(ht, self.m_tilde);
        Parts {
            h,
            ht,
            ht_m,
            q: pow_m(h, self.m) * ht_m,
            tau,
        }
    }

    pub fn q(&self) -> f64 {
        self.parts().q
    }

    pub fn tau(&self) -> f64 {
        self.parts().tau
    }

    pub fn ladder_input(&self) -> Result<LadderInput> {
        let p = self.parts();
        LadderInput::new(p.q, p.tau)
    }
}

#[derive(Clone, Copy)]
struct Parts {
    h: f64,
    ht: f64,
    ht_m: f64,
    q: f64,
    tau: f64,
}

/// `∇_x q`. Undefined at `x = 0` when `m = 1`.
pub fn grad_q(ctx: &PairContext) -> Result<Vec3> {
    let p = ctx.parts();
    if ctx.m == 1 {
        if p.h == 0.0 {
            return Err(Error::UseCombinedForm);
        }
        Ok((p.ht_m / p.h) * ctx.x)
    } else {
        Ok((2.0 * p.ht_m) * ctx.x)
    }
}

/// `q ∇_x τ = h̃^m̃ h^{m-1} (ξ̃ - τ ξ)`, the tangential part of `ξ̃` at `ξ`.
/// At `x = 0` the direction `ξ` is identified with `ξ̃`, consistent with the
/// convention `τ = 1`, so the result vanishes there.
pub fn q_grad_tau(ctx: &PairContext) -> Vec3 {
    let p = ctx.parts();
    if p.h == 0.0 || p.ht == 0.0 {
        return Vec3::ZERO;
    }
    let xi = (1.0 / p.h) * ctx.x;
    let xi_t = (1.0 / p.ht) * ctx.x_tilde;
    let scale = p.ht_m * if ctx.m == 1 { 1.0 } else { p.h };
    scale * (xi_t - p.tau * xi)
}

#[inline]
fn combined_from_parts(ctx: &PairContext, p: &Parts, n: u32) -> Vec3 {
    let two_n = (1u32 << n) as f64;
    if ctx.m == 1 {
        // h̃^{m̃-1} x̃ - 2ⁿ h̃^{2m̃} x, continuous through x = 0
        let ht_m1 = if ctx.m_tilde == 1 { 1.0 } else { p.ht };
        ht_m1 * ctx.x_tilde - (two_n * p.ht_m * p.ht_m) * ctx.x
    } else {
        // ∇q = 2 h̃^m̃ x and q∇τ = h̃^m̃ (h ξ̃ - τ x)
        let ht_m1 = if ctx.m_tilde == 1 { 1.0 } else { p.ht };
        (p.ht_m * (p.tau - 2.0 * two_n * p.q)) * ctx.x + (ht_m1 * p.h) * ctx.x_tilde
    }
}

/// `(τ - 2ⁿq)∇q + q∇τ`, continuously extended to `x = 0`.
pub fn combined_grad(ctx: &PairContext, n: u32) -> Vec3 {
    combined_from_parts(ctx, &ctx.parts(), n)
}

/// Ladder values and their gradients with respect to `x`.
pub fn ladder_with_grad(ctx: &PairContext) -> Result<(Ladder, [Vec3; 6])> {
    let p = ctx.parts();
    LadderInput::new(p.q, p.tau)?;
    let sub = Sub::new(p.q, p.tau);
    let id = [
        combined_from_parts(ctx, &p, 0),
        combined_from_parts(ctx, &p, 1),
        combined_from_parts(ctx, &p, 2),
        combined_from_parts(ctx, &p, 3),
        combined_from_parts(ctx, &p, 4),
        combined_from_parts(ctx, &p, 5),
    ];
    Ok((Ladder(sub.ladder()), sub.grads(&id)))
}

/// The six gradients `∇_x (q d_q)ᵏ φ(q)`.
pub fn ladder_grad(ctx: &PairContext) -> Result<[Vec3; 6]> {
    ladder_with_grad(ctx).map(|(_, g)| g)
}

/// `φ + 2 q d_q φ = Σ (2n+1) qⁿ P_n(τ)` and its `x`-gradient; the building
/// block of point evaluations of upward-continued kernels.
#[inline]
pub(crate) fn kernel_series_with_grad(ctx: &PairContext) -> (f64, Vec3) {
    let p = ctx.parts();
    let tq = p.tau * p.q;
    let a = tq - p.q * p.q;
    let denom = 1.0 + p.q * p.q - 2.0 * tq;
    let inv = 1.0 / denom;
    let den1 = 1.0 / denom.sqrt();
    let den3 = den1 * inv;
    let den5 = den3 * inv;
    let id1 = combined_from_parts(ctx, &p, 0);
    let id2 = combined_from_parts(ctx, &p, 1);
    let value = den1 + 2.0 * a * den3;
    let grad = (den3 + 6.0 * a * den5) * id1 + (2.0 * den3) * id2;
    (value, grad)
}

/// Exponent/sign pairs contributed by a kernel family: `K` gives `h^n`,
/// `W` gives `h^n - h^{2n}`.
#[inline]
fn exponents(family: KernelFamily) -> &'static [(u8, f64)] {
    match family {
        KernelFamily::Apk => &[(1, 1.0)],
        KernelFamily::Apw => &[(1, 1.0), (2, -1.0)],
    }
}

fn kernel_parts(d: &DictionaryElement) -> Result<(KernelFamily, Vec3)> {
    d.kernel()
        .map(|(f, x)| (f, x.cartesian()))
        .ok_or_else(|| Error::InvalidArgument(format!("{d:?} is not a kernel or wavelet")))
}

/// Closed-form `⟨d1, d2⟩_{H_2}` for kernels and wavelets.
pub fn h2_kernel_inner(d1: &DictionaryElement, d2: &DictionaryElement) -> Result<f64> {
    let (f1, x1) = kernel_parts(d1)?;
    let (f2, x2) = kernel_parts(d2)?;
    kernel_inner(f1, x1, f2, x2)
}

pub(crate) fn kernel_inner(f1: KernelFamily, x1: Vec3, f2: KernelFamily, x2: Vec3) -> Result<f64> {
    let mut acc = 0.0;
    for &(m, s1) in exponents(f1) {
        for &(mt, s2) in exponents(f2) {
            let ctx = PairContext { x: x1, x_tilde: x2, m, m_tilde: mt };
            acc += s1 * s2 * sob_term(ctx.ladder_input()?);
        }
    }
    Ok(acc)
}

pub(crate) fn kernel_inner_with_grad(f1: KernelFamily, x1: Vec3, f2: KernelFamily, x2: Vec3) -> Result<(f64, Vec3)> {
    let mut acc = 0.0;
    let mut grad = Vec3::ZERO;
    for &(m, s1) in exponents(f1) {
        for &(mt, s2) in exponents(f2) {
            let ctx = PairContext { x: x1, x_tilde: x2, m, m_tilde: mt };
            let (lad, g) = ladder_with_grad(&ctx)?;
            let s = s1 * s2;
            acc += s * assemble(&lad.0);
            for k in 0..6 {
                grad += (s * SOB_WEIGHTS[k] / (64.0 * PI)) * g[k];
            }
        }
    }
    Ok((acc, grad))
}

/// Gradient of `⟨d1, d2⟩_{H_2}` with respect to the center of `d1`.
pub fn h2_kernel_inner_grad(d1: &DictionaryElement, d2: &DictionaryElement) -> Result<Vec3> {
    let (f1, x1) = kernel_parts(d1)?;
    let (f2, x2) = kernel_parts(d2)?;
    kernel_inner_with_grad(f1, x1, f2, x2).map(|(_, g)| g)
}

/// `‖d‖²_{H_2}` and its gradient with respect to the center of `d`.
pub fn h2_kernel_norm_sq_with_grad(d: &DictionaryElement) -> Result<(f64, Vec3)> {
    let (f, x) = kernel_parts(d)?;
    kernel_inner_with_grad(f, x, f, x).map(|(v, g)| (v, 2.0 * g))
}

/// Sobolev weight `(n+½)⁴`, the squared `H_2` norm of `Y_{n,j}`.
#[inline]
pub fn h2_sh_norm(n: usize) -> f64 {
    let v = n as f64 + 0.5;
    let v2 = v * v;
    v2 * v2
}

/// Radial profile `(g, g', g/h)` of degree `n` for a kernel family:
/// `hⁿ` for kernels, `hⁿ - h²ⁿ` for wavelets.
#[inline]
pub(crate) fn radial_profile(family: KernelFamily, n: usize, h: f64) -> (f64, f64, f64) {
    let ni = n as i32;
    let nf = n as f64;
    let hn = h.powi(ni);
    let hn1 = if n == 0 { 0.0 } else { h.powi(ni - 1) };
    match family {
        KernelFamily::Apk => (hn, nf * hn1, hn1),
        KernelFamily::Apw => {
            let h2n1 = if n == 0 { 0.0 } else { h.powi(2 * ni - 1) };
            (hn - hn * hn, nf * hn1 - 2.0 * nf * h2n1, hn1 - h2n1)
        }
    }
}

/// `⟨Y_{n,j}, d⟩_{H_2} = (n+½)⁴ g_n(|x|) Y_{n,j}(x/|x|)` for a kernel or
/// wavelet `d` with center `x`.
pub fn h2_sh_kernel_inner(n: usize, j: i64, d: &DictionaryElement) -> Result<f64> {
    let (f, x) = kernel_parts(d)?;
    let h = x.norm();
    let (g, _, _) = radial_profile(f, n, h);
    if g == 0.0 {
        return Ok(0.0);
    }
    let dir = crate::sphere::from_cartesian(x).map(|(_, d)| d).unwrap_or(Direction::NORTH_POLE);
    Ok(h2_sh_norm(n) * g * sh_eval(n, j, dir))
}

/// Gradient of [`h2_sh_kernel_inner`] with respect to the center of `d`.
pub fn h2_sh_kernel_inner_grad(n: usize, j: i64, d: &DictionaryElement) -> Result<Vec3> {
    let (f, x) = kernel_parts(d)?;
    let h = x.norm();
    let dir = crate::sphere::from_cartesian(x).map(|(_, d)| d).unwrap_or(Direction::NORTH_POLE);
    let (_, dg, g_over_h) = radial_profile(f, n, h);
    let frame_r = dir.unit();
    let grad = (dg * sh_eval(n, j, dir)) * frame_r + g_over_h * sh_surface_grad(n, j, dir);
    Ok(h2_sh_norm(n) * grad)
}

/// Largest number of terms any series evaluation may use.
pub const SERIES_MAX_TERMS: usize = 2_000_000;

/// `Σ_n w(n) qⁿ P_n(τ)` by Clenshaw summation. The truncation degree `N` is
/// the first one where the ratio of successive coefficient magnitudes is
/// below one and the geometric tail bound falls under `tol` times the
/// absolute coefficient sum.
pub fn legendre_series(q: f64, tau: f64, weight: impl Fn(usize) -> f64, tol: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&q) {
        return Err(Error::OutsideBall(q));
    }
    let mut coeffs: Vec<f64> = Vec::new();
    let mut abs_sum = 0.0;
    let mut qn = 1.0;
    let mut n = 0usize;
    loop {
        let c = weight(n) * qn;
        coeffs.push(c);
        abs_sum += c.abs();
        let next = weight(n + 1) * qn * q;
        if next == 0.0 && q == 0.0 {
            break;
        }
        if c != 0.0 {
            let ratio = (next / c).abs();
            if ratio < 1.0 && next.abs() / (1.0 - ratio) <= tol * abs_sum {
                break;
            }
        }
        n += 1;
        qn *= q;
        if n >= SERIES_MAX_TERMS {
            return Err(Error::BudgetExceeded(SERIES_MAX_TERMS));
        }
    }
    let tau = tau.clamp(-1.0, 1.0);
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for k in (0..coeffs.len()).rev() {
        let kf = k as f64;
        let alpha = (2.0 * kf + 1.0) * tau / (kf + 1.0);
        let beta = -(kf + 1.0) / (kf + 2.0);
        let b0 = coeffs[k] + alpha * b1 + beta * b2;
        b2 = b1;
        b1 = b0;
    }
    Ok(b1)
}

/// `Σ_n nᵏ qⁿ P_n(τ)` by truncated Clenshaw summation.
pub fn series_oracle(q: f64, tau: f64, k: u32, tol: f64) -> Result<f64> {
    legendre_series(q, tau, |n| (n as f64).powi(k as i32), tol)
}

/// `⟨d1, d2⟩_{H_2}` for any two dictionary elements.
pub fn h2_inner(d1: &DictionaryElement, d2: &DictionaryElement) -> Result<f64> {
    match (*d1, *d2) {
        (DictionaryElement::Sh { n, j }, DictionaryElement::Sh { n: n2, j: j2 }) => {
            Ok(if n == n2 && j == j2 { h2_sh_norm(n) } else { 0.0 })
        }
        (DictionaryElement::Sh { n, j }, k) | (k, DictionaryElement::Sh { n, j }) => h2_sh_kernel_inner(n, j, &k),
        _ => h2_kernel_inner(d1, d2),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::{moving_frame, BallPoint};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_ball(rng: &mut ChaCha8Rng, hmin: f64, hmax: f64) -> Vec3 {
        let z: f64 = rng.random_range(-1.0..1.0);
        let lon: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let h = rng.random_range(hmin..hmax);
        crate::sphere::to_cartesian(Direction::new(lon, z), h)
    }

    fn apk(x: Vec3) -> DictionaryElement {
        DictionaryElement::Apk { x: BallPoint::new(x).unwrap() }
    }

    fn apw(x: Vec3) -> DictionaryElement {
        DictionaryElement::Apw { x: BallPoint::new(x).unwrap() }
    }

    #[test]
    fn ladder_examples() {
        let l = phi_ladder(LadderInput::new(0.0, 0.3).unwrap());
        assert_eq!(l.0, [1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let l = phi_ladder(LadderInput::new(0.5, 1.0).unwrap());
        assert_abs_diff_eq!(l.0[0], 2.0, epsilon = 1e-15);
        assert!(LadderInput::new(1.0, 0.0).is_err());
        assert!(LadderInput::new(1.0 - 1e-13, 0.0).is_err());
    }

    #[test]
    fn sob_term_examples() {
        let v = sob_term(LadderInput::new(0.0, -0.4).unwrap());
        assert_eq!(v, 1.0 / (64.0 * PI));
        assert_eq!(SOB_WEIGHTS.iter().sum::<f64>(), 243.0);
    }

    #[test]
    fn oracle_examples() {
        assert_eq!(series_oracle(0.0, 0.2, 0, 1e-15).unwrap(), 1.0);
        assert_abs_diff_eq!(series_oracle(0.5, 1.0, 0, 1e-16).unwrap(), 2.0, epsilon = 1e-14);
        let want = series_oracle(0.9, -0.3, 5, 1e-16).unwrap();
        let got = phi_ladder(LadderInput::new(0.9, -0.3).unwrap()).0[5];
        assert!((got - want).abs() <= 1e-9 * want.abs());
        assert!(matches!(
            series_oracle(0.999_999_9, 1.0, 5, 1e-300),
            Err(Error::BudgetExceeded(_))
        ));
    }

    #[test]
    fn induction_identity_by_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..100 {
            let q = rng.random_range(0.05..0.9);
            let tau = rng.random_range(-1.0..=1.0);
            let eps = 1e-5 * q;
            let hi = phi_ladder(LadderInput::new(q + eps, tau).unwrap()).0;
            let lo = phi_ladder(LadderInput::new(q - eps, tau).unwrap()).0;
            let mid = phi_ladder(LadderInput::new(q, tau).unwrap()).0;
            for k in 0..5 {
                let fd = q * (hi[k] - lo[k]) / (2.0 * eps);
                let scale = mid[k + 1].abs().max(1e-3 * mid[0].abs());
                assert!((fd - mid[k + 1]).abs() <= 1e-6 * scale, "k={k} q={q} tau={tau}");
            }
        }
    }

    #[test]
    fn grad_q_and_tau_examples() {
        let x = Vec3::ZERO;
        let xt = Vec3::new(0.0, 0.5, 0.0);
        let ctx = PairContext::new(x, xt, 2, 1).unwrap();
        assert_eq!(grad_q(&ctx).unwrap(), Vec3::ZERO);
        let ctx = PairContext::new(x, xt, 1, 1).unwrap();
        assert!(matches!(grad_q(&ctx), Err(Error::UseCombinedForm)));

        let ctx = PairContext::new(Vec3::new(0.3, 0.0, 0.4), Vec3::new(0.0, 1.0 - 1e-15, 0.0), 1, 1).unwrap();
        let g = grad_q(&ctx).unwrap();
        assert!((g.norm() - 1.0).abs() < 1e-14);

        // ξ = ξ̃ → no tangential part
        let ctx = PairContext::new(Vec3::new(0.3, 0.0, 0.4), Vec3::new(0.6, 0.0, 0.8), 1, 1).unwrap();
        assert!(q_grad_tau(&ctx).norm() < 1e-15);
    }

    #[test]
    fn q_grad_tau_matches_frame_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let x = random_ball(&mut rng, 0.05, 0.95);
            let xt = random_ball(&mut rng, 0.05, 0.95);
            for m in [1u8, 2] {
                for mt in [1u8, 2] {
                    let ctx = PairContext::new(x, xt, m, mt).unwrap();
                    let (h, dir) = crate::sphere::from_cartesian(x).unwrap();
                    let ht = xt.norm();
                    let frame = moving_frame(dir).unwrap();
                    let xi_t = (1.0 / ht) * xt;
                    let scale = pow_m(ht, mt) * if m == 1 { 1.0 } else { h };
                    let want = scale
                        * (xi_t.dot(&frame.eps_lon) * frame.eps_lon + xi_t.dot(&frame.eps_t) * frame.eps_t);
                    assert!((q_grad_tau(&ctx) - want).norm() <= 1e-13);
                    if m == 1 {
                        let tau = ctx.tau();
                        let mag = pow_m(ht, mt) * (1.0 - tau * tau).max(0.0).sqrt();
                        assert!((q_grad_tau(&ctx).norm() - mag).abs() <= 1e-12);
                    }
                    // product rule: ∇(qτ) = τ∇q + q∇τ
                    let f = |p: Vec3| {
                        let c = PairContext::new(p, xt, m, mt).unwrap();
                        c.q() * c.tau()
                    };
                    let eps = 1e-6;
                    let mut fd = Vec3::ZERO;
                    for k in 0..3 {
                        let mut e = Vec3::ZERO;
                        e.0[k] = eps;
                        fd.0[k] = (f(x + e) - f(x - e)) / (2.0 * eps);
                    }
                    let analytic = ctx.tau() * grad_q(&ctx).unwrap() + q_grad_tau(&ctx);
                    assert!((fd - analytic).norm() <= 1e-6 * analytic.norm().max(1.0));
                    // grad q itself
                    let fq = |p: Vec3| PairContext::new(p, xt, m, mt).unwrap().q();
                    for k in 0..3 {
                        let mut e = Vec3::ZERO;
                        e.0[k] = eps;
                        fd.0[k] = (fq(x + e) - fq(x - e)) / (2.0 * eps);
                    }
                    let gq = grad_q(&ctx).unwrap();
                    assert!((fd - gq).norm() <= 1e-6 * gq.norm().max(1e-3));
                }
            }
        }
    }

    #[test]
    fn combined_term_examples() {
        let xt = Vec3::new(0.3, -0.4, 0.5);
        let ht = xt.norm();
        let xi_t = (1.0 / ht) * xt;
        for mt in [1u8, 2] {
            let ctx = PairContext::new(Vec3::ZERO, xt, 1, mt).unwrap();
            for n in 0..6 {
                let got = combined_grad(&ctx, n);
                let want = pow_m(ht, mt) * xi_t;
                assert!((got - want).norm() <= 1e-16, "{got:?} {want:?}");
            }
        }
        // x̃ = 0
        let x = Vec3::new(0.1, 0.2, 0.3);
        let ctx = PairContext::new(x, Vec3::ZERO, 1, 1).unwrap();
        assert_eq!(combined_grad(&ctx, 3), Vec3::ZERO);
        // algebraic identity away from the origin
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let x = random_ball(&mut rng, 0.01, 0.99);
            let xt = random_ball(&mut rng, 0.01, 0.99);
            for m in [1u8, 2] {
                for mt in [1u8, 2] {
                    let ctx = PairContext::new(x, xt, m, mt).unwrap();
                    for n in 0..6u32 {
                        let two_n = (1u32 << n) as f64;
                        let want = (ctx.tau() - two_n * ctx.q()) * grad_q(&ctx).unwrap() + q_grad_tau(&ctx);
                        assert!((combined_grad(&ctx, n) - want).norm() <= 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn ladder_gradients_vanish_when_q_is_zero() {
        let ctx = PairContext::new(Vec3::new(0.1, 0.2, 0.3), Vec3::ZERO, 1, 2).unwrap();
        let g = ladder_grad(&ctx).unwrap();
        for gk in &g[1..] {
            assert_eq!(*gk, Vec3::ZERO);
        }
    }

    #[test]
    fn inner_product_examples() {
        let k0 = apk(Vec3::ZERO);
        let w0 = apw(Vec3::ZERO);
        assert_abs_diff_eq!(h2_kernel_inner(&k0, &k0).unwrap(), 1.0 / (64.0 * PI), epsilon = 1e-18);
        let other = apw(Vec3::new(0.2, 0.5, -0.1));
        assert_eq!(h2_kernel_inner(&w0, &other).unwrap(), 0.0);
        assert_eq!(h2_kernel_inner(&w0, &k0).unwrap(), 0.0);
    }

    #[test]
    fn sh_kernel_examples() {
        let k = apk(Vec3::new(0.3, 0.1, -0.5));
        let v = h2_sh_kernel_inner(0, 0, &k).unwrap();
        assert_abs_diff_eq!(v, 0.0625 / (4.0 * PI).sqrt(), epsilon = 1e-16);
        let w = apw(Vec3::new(0.3, 0.1, -0.5));
        assert_eq!(h2_sh_kernel_inner(0, 0, &w).unwrap(), 0.0);
        assert_eq!(h2_sh_norm(0), 0.0625);
        assert_eq!(h2_sh_norm(1), 5.0625);
        assert_eq!(h2_sh_norm(3), 150.0625);
    }

    #[test]
    fn sh_kernel_gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let n = rng.random_range(0..12usize);
            let j = rng.random_range(-(n as i64)..=(n as i64));
            let x = random_ball(&mut rng, 0.05, 0.95);
            for fam in [KernelFamily::Apk, KernelFamily::Apw] {
                let mk = |p: Vec3| DictionaryElement::from_kernel(fam, BallPoint::new(p).unwrap());
                let g = h2_sh_kernel_inner_grad(n, j, &mk(x)).unwrap();
                let eps = 1e-6;
                let mut fd = Vec3::ZERO;
                for k in 0..3 {
                    let mut e = Vec3::ZERO;
                    e.0[k] = eps;
                    fd.0[k] = (h2_sh_kernel_inner(n, j, &mk(x + e)).unwrap()
                        - h2_sh_kernel_inner(n, j, &mk(x - e)).unwrap())
                        / (2.0 * eps);
                }
                assert!((fd - g).norm() <= 1e-5 * g.norm().max(1e-2), "{n} {j} {fd:?} {g:?}");
            }
        }
    }
}
