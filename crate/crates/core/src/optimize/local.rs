//! Projected BFGS ascent with Armijo backtracking on the ball.

use std::time::Instant;

use super::{Budget, Objective, SearchDomain, SearchResult, StopReason};
use crate::error::{Error, Result};
use crate::sphere::Vec3;

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;

type Mat3 = [[f64; 3]; 3];

const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

fn mat_vec(m: &Mat3, v: Vec3) -> Vec3 {
    Vec3::new(
        m[0][0] * v.0[0] + m[0][1] * v.0[1] + m[0][2] * v.0[2],
        m[1][0] * v.0[0] + m[1][1] * v.0[1] + m[1][2] * v.0[2],
        m[2][0] * v.0[0] + m[2][1] * v.0[1] + m[2][2] * v.0[2],
    )
}

/// Inverse-Hessian BFGS update for minimizing `-f` with step `s` and
/// gradient change `y` of `-f`.
fn bfgs_update(h: &mut Mat3, s: Vec3, y: Vec3) {
    let sy = s.dot(&y);
    if !(sy > 1e-12 * s.norm() * y.norm()) {
        return;
    }
    let rho = 1.0 / sy;
    let hy = mat_vec(h, y);
    let yhy = y.dot(&hy);
    let mut out = *h;
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] += -rho * (hy.0[i] * s.0[j] + s.0[i] * hy.0[j]) + (rho * rho * yhy + rho) * s.0[i] * s.0[j];
        }
    }
    *h = out;
}

/// Refines a maximizer estimate from `x0`. The accepted values never
/// decrease, so the result is at least the value at the (projected) start.
///
/// Stops when an accepted step changes the value by at most `abs_tol_f` or
/// moves by at most `abs_tol_x`, when no ascent step is found, or when the
/// evaluation or time budget runs out.
pub fn local_refine<O: Objective + ?Sized>(obj: &O, x0: Vec3, dom: SearchDomain, b: Budget) -> Result<SearchResult> {
    b.validate()?;
    if !x0.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite start {x0:?}")));
    }
    let start = Instant::now();
    let limit = b.time_limit();
    let mut warnings = Vec::new();
    let mut x = x0;
    if !dom.contains(x0) {
        x = dom.project(x0);
        let msg = format!("start point |x0| = {} outside the ball, projected", x0.norm());
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let eval = |x: Vec3| -> Result<(f64, Vec3)> {
        obj.value_grad(x)
            .ok_or_else(|| Error::InvalidArgument("local refinement needs an objective gradient".into()))
    };
    let (mut f, mut g) = eval(x)?;
    let mut evals = 1;
    let mut trace = vec![f];
    let mut h = IDENTITY;
    let stop = loop {
        if evals >= b.max_evals {
            break StopReason::Evaluations;
        }
        if start.elapsed() > limit {
            break StopReason::Time;
        }
        if !(g.norm() > 0.0) {
            break StopReason::ToleranceX;
        }
        let mut p = mat_vec(&h, g);
        if !(p.dot(&g) > 0.0) {
            h = IDENTITY;
            p = g;
        }
        let mut t = 1.0;
        let mut accepted = None;
        let mut out_of_budget = false;
        for _ in 0..MAX_BACKTRACKS {
            if evals >= b.max_evals {
                out_of_budget = true;
                break;
            }
            let xn = dom.project(x + t * p);
            let step = xn - x;
            if step.norm() == 0.0 {
                break;
            }
            let (fn_, gn) = eval(xn)?;
            evals += 1;
            if fn_.is_finite() && fn_ >= f + ARMIJO * g.dot(&step) && fn_ >= f {
                accepted = Some((xn, fn_, gn));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            break if out_of_budget { StopReason::Evaluations } else { StopReason::NoProgress };
        };
        let s = xn - x;
        bfgs_update(&mut h, s, -1.0 * (gn - g));
        let df = fn_ - f;
        x = xn;
        f = fn_;
        g = gn;
        trace.push(f);
        if df.abs() <= b.abs_tol_f {
            break StopReason::ToleranceF;
        }
        if s.norm() <= b.abs_tol_x {
            break StopReason::ToleranceX;
        }
    };
    Ok(SearchResult {
        x,
        value: f,
        evals,
        stop,
        trace,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimize::FnObjective;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn quadratic(center: Vec3) -> impl Objective {
        FnObjective::with_grad(
            move |x: Vec3| -(x - center).norm_sq(),
            move |x: Vec3| (-(x - center).norm_sq(), -2.0 * (x - center)),
        )
    }

    #[test]
    fn stays_at_maximizer() {
        let c = Vec3::new(0.3, 0.2, -0.1);
        let res = local_refine(&quadratic(c), c, SearchDomain::default(), Budget::default()).unwrap();
        assert!((res.x - c).norm() <= 1e-8);
        assert_eq!(res.evals, 1);
    }

    #[test]
    fn converges_from_random_starts() {
        let c = Vec3::new(0.3, 0.2, -0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let x0 = loop {
                let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                if v.norm() < 0.99 {
                    break v;
                }
            };
            let res = local_refine(&quadratic(c), x0, SearchDomain::default(), Budget::default()).unwrap();
            assert!((res.x - c).norm() <= 1e-6, "{:?}", res.x);
            assert!(res.trace.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn anisotropic_objective() {
        let c = Vec3::new(-0.2, 0.5, 0.1);
        let w = [1.0, 30.0, 0.2];
        let val = move |x: Vec3| -(0..3).map(|i| w[i] * (x.0[i] - c.0[i]).powi(2)).sum::<f64>();
        let obj = FnObjective::with_grad(val, move |x: Vec3| {
            (val(x), Vec3::new(-2.0 * w[0] * (x.0[0] - c.0[0]), -2.0 * w[1] * (x.0[1] - c.0[1]), -2.0 * w[2] * (x.0[2] - c.0[2])))
        });
        let res = local_refine(&obj, Vec3::new(0.5, -0.5, 0.5), SearchDomain::default(), Budget::default()).unwrap();
        assert!((res.x - c).norm() <= 1e-5, "{:?}", res.x);
    }

    #[test]
    fn boundary_maximizer_and_projection() {
        let dom = SearchDomain::default();
        let outside = Vec3::new(0.0, 0.0, 2.0);
        let res = local_refine(&quadratic(outside), Vec3::new(0.1, 0.1, 0.1), dom, Budget::default()).unwrap();
        assert!(res.x.norm() <= dom.radius() + 1e-15);
        assert!((res.x - Vec3::new(0.0, 0.0, dom.radius())).norm() < 1e-4);

        let res = local_refine(&quadratic(Vec3::ZERO), Vec3::new(3.0, 0.0, 0.0), dom, Budget::default()).unwrap();
        assert_eq!(res.warnings.len(), 1);
        assert!(res.x.norm() < 1e-6);
    }

    #[test]
    fn respects_budget() {
        let obj = quadratic(Vec3::new(0.3, 0.2, -0.1));
        let b = Budget { max_evals: 3, ..Budget::default() };
        let res = local_refine(&obj, Vec3::new(-0.5, 0.5, 0.5), SearchDomain::default(), b).unwrap();
        assert!(res.evals <= 3);
        let no_grad = FnObjective::new(|_| 0.0);
        assert!(local_refine(&no_grad, Vec3::ZERO, SearchDomain::default(), Budget::default()).is_err());
    }
}
