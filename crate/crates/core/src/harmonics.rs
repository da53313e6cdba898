//! Legendre functions and the fully normalized real spherical harmonics
//!
//! `Y_{n,j}(φ,t) = p_{n,j} P_{n,|j|}(t) cos(jφ)` for `j ≤ 0` and
//! `p_{n,j} P_{n,|j|}(t) sin(jφ)` for `j > 0`, with
//! `p_{n,0} = √((2n+1)/4π)` and `p_{n,j} = √((2n+1)/2π · (n-|j|)!/(n+|j|)!)`.
//! No Condon–Shortley phase. The family is orthonormal in `L²(Ω)`.
//!
//! Internally everything runs on the *reduced* normalized functions
//! `R_{n,m}(t) = p_{n,m} P_{n,m}(t) / (1-t²)^{m/2}`, which obey the standard
//! fully normalized column recurrence and stay finite at the poles. The
//! factor `(1-t²)^{m/2}` is applied last, so there is no overflow for high
//! degrees.

use std::f64::consts::PI;

use crate::sphere::{moving_frame_unchecked, Direction, Vec3};

/// Flat index of `(n, j)` in degree-major order: `n² + n + j`.
#[inline]
pub fn sh_index(n: usize, j: i64) -> usize {
    ((n * n + n) as i64 + j) as usize
}

/// Inverse of [`sh_index`].
pub fn sh_from_index(k: usize) -> (usize, i64) {
    let n = (k as f64).sqrt() as usize;
    let n = if (n + 1) * (n + 1) <= k { n + 1 } else if n * n > k { n - 1 } else { n };
    (n, k as i64 - (n * n + n) as i64)
}

/// Number of harmonics up to and including degree `max_degree`.
#[inline]
pub fn sh_count(max_degree: usize) -> usize {
    (max_degree + 1) * (max_degree + 1)
}

/// Legendre polynomial `P_n(t)` by the three-term recurrence.
pub fn legendre(n: usize, t: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, t);
    if n == 0 {
        return p0;
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * t * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Unnormalized associated Legendre function `P_{n,m}(t) = (1-t²)^{m/2} dᵐP_n/dtᵐ`
/// without Condon–Shortley phase. Uses the double-factorial diagonal seed up
/// to degree 100 and the normalized recurrence beyond, where the values grow
/// past the range of the direct column recurrence.
pub fn assoc_legendre(n: usize, m: usize, t: f64) -> f64 {
    assert!(m <= n, "order {m} exceeds degree {n}");
    let s = ((1.0 - t) * (1.0 + t)).max(0.0).sqrt();
    if n <= 100 {
        let mut pmm = 1.0;
        for k in 1..=m {
            pmm *= (2 * k - 1) as f64 * s;
        }
        if n == m {
            return pmm;
        }
        let mut p0 = pmm;
        let mut p1 = t * (2 * m + 1) as f64 * pmm;
        for k in (m + 2)..=n {
            let p2 = ((2 * k - 1) as f64 * t * p1 - (k + m - 1) as f64 * p0) / (k - m) as f64;
            p0 = p1;
            p1 = p2;
        }
        return p1;
    }
    let reduced = reduced_single(n, m, t);
    if reduced == 0.0 {
        return 0.0;
    }
    let ln_norm = ln_normalization(n, m);
    let ln_val = reduced.abs().ln() + m as f64 * s.ln() - ln_norm;
    reduced.signum() * ln_val.exp()
}

fn ln_factorial(k: usize) -> f64 {
    (1..=k).map(|i| (i as f64).ln()).sum()
}

fn ln_normalization(n: usize, m: usize) -> f64 {
    let base = if m == 0 {
        (2 * n + 1) as f64 / (4.0 * PI)
    } else {
        (2 * n + 1) as f64 / (2.0 * PI)
    };
    0.5 * (base.ln() + ln_factorial(n - m) - ln_factorial(n + m))
}

/// Normalization constant `p_{n,j}`.
pub fn sh_normalization(n: usize, j: i64) -> f64 {
    ln_normalization(n, j.unsigned_abs() as usize).exp()
}

#[inline]
fn sectoral_step(m: usize) -> f64 {
    if m == 1 {
        3.0_f64.sqrt()
    } else {
        ((2 * m + 1) as f64 / (2 * m) as f64).sqrt()
    }
}

#[inline]
fn rec_a(n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    ((2.0 * n - 1.0) * (2.0 * n + 1.0) / ((n - m) * (n + m))).sqrt()
}

#[inline]
fn rec_b(n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    ((2.0 * n + 1.0) * (n + m - 1.0) * (n - m - 1.0) / ((n - m) * (n + m) * (2.0 * n - 3.0))).sqrt()
}

/// Ratio `p_{n,m} / p_{n,m+1}`, converting `R_{n,m+1}` into `p_{n,m} dᵐ⁺¹P_n/dtᵐ⁺¹`.
#[inline]
fn deriv_ratio(n: usize, m: usize) -> f64 {
    let v = ((n - m) * (n + m + 1)) as f64;
    if m == 0 {
        (0.5 * v).sqrt()
    } else {
        v.sqrt()
    }
}

fn reduced_single(n: usize, m: usize, t: f64) -> f64 {
    let mut rmm = 1.0 / (4.0 * PI).sqrt();
    for k in 1..=m {
        rmm *= sectoral_step(k);
    }
    if n == m {
        return rmm;
    }
    let mut r0 = 0.0;
    let mut r1 = rmm;
    for k in (m + 1)..=n {
        let r2 = rec_a(k, m) * t * r1 - if k >= m + 2 { rec_b(k, m) * r0 } else { 0.0 };
        r0 = r1;
        r1 = r2;
    }
    r1
}

#[inline]
fn trig(j: i64, lon: f64) -> (f64, f64) {
    // value and φ-derivative of cos(jφ) (j ≤ 0) or sin(jφ) (j > 0)
    let m = j.unsigned_abs() as f64;
    let (s, c) = (m * lon).sin_cos();
    if j <= 0 {
        (c, -m * s)
    } else {
        (s, m * c)
    }
}

/// Fully normalized real spherical harmonic `Y_{n,j}(d)`.
pub fn sh_eval(n: usize, j: i64, d: Direction) -> f64 {
    assert!(j.unsigned_abs() as usize <= n, "order {j} exceeds degree {n}");
    let m = j.unsigned_abs() as usize;
    let s = d.sin_colat();
    reduced_single(n, m, d.t) * s.powi(m as i32) * trig(j, d.lon).0
}

/// Surface gradient `∇*Y_{n,j}(d)` as a Cartesian tangent vector. At the
/// poles the meridian `φ = d.lon` limit is returned.
pub fn sh_surface_grad(n: usize, j: i64, d: Direction) -> Vec3 {
    let m = j.unsigned_abs() as usize;
    let s = d.sin_colat();
    let r = reduced_single(n, m, d.t);
    let dr = if m < n {
        deriv_ratio(n, m) * reduced_single(n, m + 1, d.t)
    } else {
        0.0
    };
    let (tv, td) = trig(j, d.lon);
    surface_grad_terms(m, s, d.t, r, dr, tv, td, d)
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn surface_grad_terms(m: usize, s: f64, t: f64, r: f64, dr: f64, tv: f64, td: f64, d: Direction) -> Vec3 {
    let frame = moving_frame_unchecked(d);
    let (lon_part, t_part) = if m == 0 {
        (0.0, s * dr * tv)
    } else {
        let sm1 = s.powi(m as i32 - 1);
        (r * sm1 * td, (-(m as f64) * t * sm1 * r + sm1 * s * s * dr) * tv)
    };
    lon_part * frame.eps_lon + t_part * frame.eps_t
}

/// Precomputed recurrence tables for all harmonics up to a fixed degree.
#[derive(Debug, Clone)]
pub struct ShBasis {
    max_degree: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    seed: Vec<f64>,
    dratio: Vec<f64>,
}

#[inline]
fn tri(n: usize, m: usize) -> usize {
    n * (n + 1) / 2 + m
}

/// Per-thread scratch space for [`ShBasis`] evaluations.
#[derive(Debug, Clone, Default)]
pub struct ShScratch {
    reduced: Vec<f64>,
    cos_m: Vec<f64>,
    sin_m: Vec<f64>,
    spow: Vec<f64>,
}

impl ShBasis {
    pub fn new(max_degree: usize) -> Self {
        let size = tri(max_degree, max_degree) + 1;
        let mut a = vec![0.0; size];
        let mut b = vec![0.0; size];
        let mut dratio = vec![0.0; size];
        for n in 0..=max_degree {
            for m in 0..n {
                a[tri(n, m)] = rec_a(n, m);
                if n >= m + 2 {
                    b[tri(n, m)] = rec_b(n, m);
                }
                dratio[tri(n, m)] = deriv_ratio(n, m);
            }
        }
        let mut seed = Vec::with_capacity(max_degree + 1);
        let mut v = 1.0 / (4.0 * PI).sqrt();
        seed.push(v);
        for m in 1..=max_degree {
            v *= sectoral_step(m);
            seed.push(v);
        }
        ShBasis {
            max_degree,
            a,
            b,
            seed,
            dratio,
        }
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn len(&self) -> usize {
        sh_count(self.max_degree)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn scratch(&self) -> ShScratch {
        let n = self.max_degree;
        ShScratch {
            reduced: vec![0.0; tri(n, n) + 1],
            cos_m: vec![0.0; n + 1],
            sin_m: vec![0.0; n + 1],
            spow: vec![0.0; n + 2],
        }
    }

    fn fill(&self, d: Direction, sc: &mut ShScratch) -> f64 {
        let t = d.t;
        let s = d.sin_colat();
        let nmax = self.max_degree;
        for m in 0..=nmax {
            let mut r0 = 0.0;
            let mut r1 = self.seed[m];
            sc.reduced[tri(m, m)] = r1;
            for n in (m + 1)..=nmax {
                let k = tri(n, m);
                let r2 = self.a[k] * t * r1 - self.b[k] * r0;
                sc.reduced[k] = r2;
                r0 = r1;
                r1 = r2;
            }
        }
        let (sl, cl) = d.lon.sin_cos();
        sc.cos_m[0] = 1.0;
        sc.sin_m[0] = 0.0;
        sc.spow[0] = 1.0;
        for m in 1..=nmax {
            sc.cos_m[m] = sc.cos_m[m - 1] * cl - sc.sin_m[m - 1] * sl;
            sc.sin_m[m] = sc.sin_m[m - 1] * cl + sc.cos_m[m - 1] * sl;
            sc.spow[m] = sc.spow[m - 1] * s;
        }
        s
    }

    /// Writes `scale(n) · Y_{n,j}(d)` for every harmonic into `out`
    /// (degree-major order).
    pub fn eval_scaled(&self, d: Direction, scale: impl Fn(usize) -> f64, sc: &mut ShScratch, out: &mut [f64]) {
        self.fill(d, sc);
        for n in 0..=self.max_degree {
            let w = scale(n);
            let base = n * n + n;
            out[base] = w * sc.reduced[tri(n, 0)];
            for m in 1..=n {
                let v = w * sc.reduced[tri(n, m)] * sc.spow[m];
                out[base - m] = v * sc.cos_m[m];
                out[base + m] = v * sc.sin_m[m];
            }
        }
    }

    pub fn eval_all(&self, d: Direction, sc: &mut ShScratch, out: &mut [f64]) {
        self.eval_scaled(d, |_| 1.0, sc, out)
    }

    /// `Σ_k coeffs[k]·scale(n_k)·Y_k(d)` over the first `coeffs.len()` harmonics.
    pub fn synthesize(&self, d: Direction, coeffs: &[f64], scale: impl Fn(usize) -> f64, sc: &mut ShScratch) -> f64 {
        self.fill(d, sc);
        let mut total = 0.0;
        for n in 0..=self.max_degree {
            let base = n * n + n;
            if base >= coeffs.len() + n {
                break;
            }
            let mut acc = coeffs[base] * sc.reduced[tri(n, 0)];
            for m in 1..=n {
                let trig = coeffs[base - m] * sc.cos_m[m] + coeffs[base + m] * sc.sin_m[m];
                acc += trig * sc.reduced[tri(n, m)] * sc.spow[m];
            }
            total += scale(n) * acc;
        }
        total
    }

    /// Value and Cartesian gradient of `x ↦ Σ_k coeffs[k]·g(n_k, |x|)·Y_k(x/|x|)`.
    ///
    /// `radial(n, h)` returns `(g, g', g/h)` for the radial profile of degree
    /// `n`; the third entry must be the finite limit at `h = 0`. At `x = 0`
    /// the north-pole direction on the zero meridian is used, which gives the
    /// exact gradient because only degree-one terms survive there.
    pub fn solid_sum_with_grad(
        &self,
        x: Vec3,
        coeffs: &[f64],
        radial: impl Fn(usize, f64) -> (f64, f64, f64),
        sc: &mut ShScratch,
    ) -> (f64, Vec3) {
        let h = x.norm();
        let d = if h > 0.0 {
            let t = (x.z() / h).clamp(-1.0, 1.0);
            let lon = if x.x() == 0.0 && x.y() == 0.0 { 0.0 } else { x.y().atan2(x.x()) };
            Direction::new(lon, t)
        } else {
            Direction::NORTH_POLE
        };
        let s = self.fill(d, sc);
        let t = d.t;
        let frame = moving_frame_unchecked(d);
        let mut value = 0.0;
        let (mut gr, mut glon, mut gt) = (0.0, 0.0, 0.0);
        for n in 0..=self.max_degree {
            let base = n * n + n;
            if base >= coeffs.len() + n {
                break;
            }
            let (g, dg, g_over_h) = radial(n, h);
            if n == 0 {
                value += g * coeffs[0] * sc.reduced[0];
                continue;
            }
            // m = 0
            let c0 = coeffs[base];
            let r0 = sc.reduced[tri(n, 0)];
            let dr0 = self.dratio[tri(n, 0)] * sc.reduced[tri(n, 1)];
            let mut y_sum = c0 * r0;
            let mut lon_sum = 0.0;
            let mut t_sum = c0 * s * dr0;
            for m in 1..=n {
                let (cc, cs) = (coeffs[base - m], coeffs[base + m]);
                let (cm, sm) = (sc.cos_m[m], sc.sin_m[m]);
                let r = sc.reduced[tri(n, m)];
                let dr = if m < n { self.dratio[tri(n, m)] * sc.reduced[tri(n, m + 1)] } else { 0.0 };
                let sm1 = sc.spow[m - 1];
                let tv = cc * cm + cs * sm;
                let td = (m as f64) * (-cc * sm + cs * cm);
                y_sum += tv * r * sc.spow[m];
                lon_sum += td * r * sm1;
                t_sum += tv * (-(m as f64) * t * sm1 * r + sm1 * s * s * dr);
            }
            value += g * y_sum;
            gr += dg * y_sum;
            glon += g_over_h * lon_sum;
            gt += g_over_h * t_sum;
        }
        (value, gr * frame.eps_r + glon * frame.eps_lon + gt * frame.eps_t)
    }
}
