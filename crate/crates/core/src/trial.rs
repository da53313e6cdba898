//! Dictionary elements and their (upward-continued) point values.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonics::sh_eval;
use crate::sobolev::{kernel_series_with_grad, PairContext};
use crate::sphere::{BallPoint, Direction, Vec3};

const INV_4PI: f64 = 1.0 / (4.0 * PI);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum KernelFamily {
    /// Abel–Poisson kernel, a low-pass radial basis function.
    Apk,
    /// Abel–Poisson wavelet `K(x,·) - K(|x|x,·)`, a band-pass function.
    Apw,
}

/// One trial function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DictionaryElement {
    Sh { n: usize, j: i64 },
    Apk { x: BallPoint },
    Apw { x: BallPoint },
}

impl DictionaryElement {
    pub fn sh(n: usize, j: i64) -> Result<Self> {
        if j.unsigned_abs() as usize > n {
            return Err(Error::InvalidArgument(format!("order {j} out of range for degree {n}")));
        }
        Ok(DictionaryElement::Sh { n, j })
    }

    pub fn from_kernel(family: KernelFamily, x: BallPoint) -> Self {
        match family {
            KernelFamily::Apk => DictionaryElement::Apk { x },
            KernelFamily::Apw => DictionaryElement::Apw { x },
        }
    }

    /// Family and center for kernels and wavelets.
    pub fn kernel(&self) -> Option<(KernelFamily, BallPoint)> {
        match *self {
            DictionaryElement::Sh { .. } => None,
            DictionaryElement::Apk { x } => Some((KernelFamily::Apk, x)),
            DictionaryElement::Apw { x } => Some((KernelFamily::Apw, x)),
        }
    }

    pub fn type_tag(&self) -> &'static str {
        match self {
            DictionaryElement::Sh { .. } => "SH",
            DictionaryElement::Apk { .. } => "APK",
            DictionaryElement::Apw { .. } => "APW",
        }
    }
}

/// Starting dictionary: all harmonics up to `sh_max_degree` and the kernel
/// seeds shared by both kernel families.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    pub sh_max_degree: usize,
    pub kernel_seeds: Vec<BallPoint>,
    pub learning_enabled: bool,
}

impl Dictionary {
    /// Seeds at radius `seed_radius` on a Reuter grid with parameter `gamma`.
    pub fn with_reuter_seeds(sh_max_degree: usize, gamma: usize, seed_radius: f64, learning_enabled: bool) -> Result<Self> {
        let grid = crate::sphere::reuter(gamma)?;
        let kernel_seeds = grid
            .points
            .iter()
            .map(|d| BallPoint::from_polar(seed_radius, *d))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dictionary {
            sh_max_degree,
            kernel_seeds,
            learning_enabled,
        })
    }

    /// Number of elements in the starting dictionary.
    pub fn len(&self) -> usize {
        crate::harmonics::sh_count(self.sh_max_degree) + 2 * self.kernel_seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[inline]
pub(crate) fn apk_cartesian(x: Vec3, eta: Vec3) -> f64 {
    let h2 = x.norm_sq();
    let denom = 1.0 + h2 - 2.0 * x.dot(&eta);
    (1.0 - h2) * INV_4PI / (denom * denom.sqrt())
}

/// Abel–Poisson kernel `(1-|x|²) / (4π (1+|x|²-2x·η)^{3/2})`.
pub fn apk_eval(x: BallPoint, eta: Direction) -> f64 {
    apk_cartesian(x.cartesian(), eta.unit())
}

/// Abel–Poisson wavelet `K(x,η) - K(|x|x,η)`.
pub fn apw_eval(x: BallPoint, eta: Direction) -> f64 {
    let e = eta.unit();
    let xc = x.cartesian();
    apk_cartesian(xc, e) - apk_cartesian(x.h() * xc, e)
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidSigma(sigma));
    }
    Ok(())
}

/// Upward-continued value at a point already in Cartesian form,
/// `eta` a unit vector and `inv_sigma = 1/σ`.
#[inline]
pub(crate) fn upward_cartesian(d: &DictionaryElement, inv_sigma: f64, eta: Vec3, sh_dir: Direction) -> f64 {
    match *d {
        DictionaryElement::Sh { n, j } => inv_sigma.powi(n as i32 + 1) * sh_eval(n, j, sh_dir),
        DictionaryElement::Apk { x } => inv_sigma * apk_cartesian(inv_sigma * x.cartesian(), eta),
        DictionaryElement::Apw { x } => {
            let xc = x.cartesian();
            let inner = inv_sigma * xc;
            inv_sigma * (apk_cartesian(inner, eta) - apk_cartesian(xc.norm() * inner, eta))
        }
    }
}

/// `(T d)(ση)`: harmonics pick up `σ^{-n-1}`, kernels become
/// `σ^{-1} K(x/σ, η)`.
pub fn upward_eval(d: &DictionaryElement, sigma: f64, eta: Direction) -> Result<f64> {
    check_sigma(sigma)?;
    Ok(upward_cartesian(d, 1.0 / sigma, eta.unit(), eta))
}

/// Value and center-gradient of an upward-continued kernel or wavelet.
#[inline]
pub(crate) fn upward_kernel_with_grad(family: KernelFamily, x: Vec3, inv_sigma: f64, eta: Vec3) -> (f64, Vec3) {
    // the evaluation point acts as the second center η/σ
    let eta_s = inv_sigma * eta;
    let scale = inv_sigma * INV_4PI;
    let (v1, g1) = kernel_series_with_grad(&PairContext { x, x_tilde: eta_s, m: 1, m_tilde: 1 });
    match family {
        KernelFamily::Apk => (scale * v1, scale * g1),
        KernelFamily::Apw => {
            let (v2, g2) = kernel_series_with_grad(&PairContext { x, x_tilde: eta_s, m: 2, m_tilde: 1 });
            (scale * (v1 - v2), scale * (g1 - g2))
        }
    }
}

/// Gradient of `(T d)(ση)` with respect to the center of a kernel or wavelet.
pub fn upward_grad_x(d: &DictionaryElement, sigma: f64, eta: Direction) -> Result<Vec3> {
    check_sigma(sigma)?;
    let (family, x) = d
        .kernel()
        .ok_or_else(|| Error::InvalidArgument("gradient needs a kernel or wavelet".into()))?;
    Ok(upward_kernel_with_grad(family, x.cartesian(), 1.0 / sigma, eta.unit()).1)
}

/// Surface value `d(η)`.
pub fn element_eval(d: &DictionaryElement, eta: Direction) -> f64 {
    upward_cartesian(d, 1.0, eta.unit(), eta)
}
