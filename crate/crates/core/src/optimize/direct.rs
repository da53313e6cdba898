//! Rectangle-division global search (DIRECT, Jones et al.) on the box
//! `[-(1-δ), 1-δ]³`, minimizing the negated objective.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;

use super::{Budget, Objective, SearchDomain, SearchResult, StopReason};
use crate::error::Result;
use crate::sphere::Vec3;

/// Jones' balance parameter for the potential-optimality test.
const EPSILON: f64 = 1e-4;

#[derive(Debug, Clone)]
struct Rect {
    /// Center in unit-cube coordinates.
    center: [f64; 3],
    /// Side length in unit coordinates is `3^{-levels[i]}`.
    levels: [u32; 3],
    /// Negated objective at the center, or at a feasible surrogate point
    /// when the center lies outside the ball; `+∞` if unknown.
    f: f64,
    center_feasible: bool,
    /// False once the rectangle is known to miss the ball.
    alive: bool,
}

impl Rect {
    fn size_key(&self) -> [u32; 3] {
        let mut k = self.levels;
        k.sort_unstable();
        k
    }

    fn min_level(&self) -> u32 {
        *self.levels.iter().min().unwrap()
    }
}

struct Search<'a, O: Objective + ?Sized> {
    obj: &'a O,
    dom: SearchDomain,
    max_evals: usize,
    evals: usize,
    best_x: Vec3,
    best_f: f64,
}

impl<O: Objective + ?Sized> Search<'_, O> {
    fn to_x(&self, u: [f64; 3]) -> Vec3 {
        let r = self.dom.radius();
        Vec3::new(r * (2.0 * u[0] - 1.0), r * (2.0 * u[1] - 1.0), r * (2.0 * u[2] - 1.0))
    }

    /// Evaluates a batch in parallel; results come back in input order and
    /// the incumbent is updated in that order.
    fn eval_batch(&mut self, xs: &[Vec3]) -> Vec<f64> {
        let obj = self.obj;
        let fs: Vec<f64> = xs
            .par_iter()
            .map(|&x| {
                let v = obj.value(x);
                if v.is_finite() {
                    -v
                } else {
                    f64::INFINITY
                }
            })
            .collect();
        self.evals += xs.len();
        for (&x, &f) in xs.iter().zip(&fs) {
            if f < self.best_f {
                self.best_f = f;
                self.best_x = x;
            }
        }
        fs
    }

    /// Feasible point of the rectangle on the segment from its point nearest
    /// the origin towards its center, as far along as the ball allows.
    fn surrogate_point(&self, rect: &Rect) -> Option<Vec3> {
        let r = self.dom.radius();
        let c = self.to_x(rect.center);
        let mut p = Vec3::ZERO;
        for i in 0..3 {
            let half = r * 3f64.powi(-(rect.levels[i] as i32));
            p.0[i] = 0.0f64.clamp(c.0[i] - half, c.0[i] + half);
        }
        if p.norm() > r {
            return None;
        }
        let v = c - p;
        let a = v.norm_sq();
        if a == 0.0 {
            return Some(p);
        }
        let b = 2.0 * p.dot(&v);
        let cc = p.norm_sq() - r * r;
        let t = ((-b + (b * b - 4.0 * a * cc).max(0.0).sqrt()) / (2.0 * a)).clamp(0.0, 1.0);
        Some(self.dom.project(p + t * v))
    }
}

/// Indices of potentially optimal rectangles, one per size class, in
/// increasing size order.
fn potentially_optimal(rects: &[Rect]) -> Vec<usize> {
    let mut groups: BTreeMap<[u32; 3], usize> = BTreeMap::new();
    for (i, r) in rects.iter().enumerate() {
        if !r.alive || !r.f.is_finite() {
            continue;
        }
        groups
            .entry(r.size_key())
            .and_modify(|b| {
                if r.f < rects[*b].f {
                    *b = i;
                }
            })
            .or_insert(i);
    }
    let size = |i: usize| {
        let l = rects[i].levels;
        l.iter().map(|&k| 9f64.powi(-(k as i32))).sum::<f64>().sqrt()
    };
    let mut pts: Vec<(f64, f64, usize)> = groups.values().map(|&i| (size(i), rects[i].f, i)).collect();
    if pts.is_empty() {
        return Vec::new();
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    // start the hull at the smallest value, preferring the larger size on ties
    let mut start = 0;
    for (k, p) in pts.iter().enumerate() {
        if p.1 <= pts[start].1 {
            start = k;
        }
    }
    let fmin = pts[start].1;
    let mut hull: Vec<(f64, f64, usize)> = Vec::new();
    for &p in &pts[start..] {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    let threshold = fmin - EPSILON * fmin.abs();
    let mut out = Vec::new();
    for k in 0..hull.len() {
        let (d, f, idx) = hull[k];
        let keep = match hull.get(k + 1) {
            None => true,
            Some(&(d2, f2, _)) => {
                let slope = (f2 - f) / (d2 - d);
                f - slope * d <= threshold
            }
        };
        if keep {
            out.push(idx);
        }
    }
    out
}

/// Deterministic global maximizer estimate of `obj` over the ball.
///
/// Centers outside the ball are never evaluated. A rectangle whose center is
/// infeasible but which still meets the ball is scored at one feasible
/// surrogate point inside it, so the region near the sphere keeps being
/// divided. Every objective call counts against `b.max_evals`, which is
/// never exceeded.
pub fn global_search<O: Objective + ?Sized>(obj: &O, dom: SearchDomain, b: Budget) -> Result<SearchResult> {
    b.validate()?;
    let start = Instant::now();
    let limit = b.time_limit();
    let mut s = Search {
        obj,
        dom,
        max_evals: b.max_evals,
        evals: 0,
        best_x: Vec3::ZERO,
        best_f: f64::INFINITY,
    };
    let f0 = s.eval_batch(&[Vec3::ZERO])[0];
    s.best_x = Vec3::ZERO;
    let mut rects = vec![Rect {
        center: [0.5; 3],
        levels: [0; 3],
        f: f0,
        center_feasible: true,
        alive: true,
    }];
    let mut trace = vec![-s.best_f];
    let stop = loop {
        if s.evals >= s.max_evals {
            break StopReason::Evaluations;
        }
        if start.elapsed() > limit {
            break StopReason::Time;
        }
        let selected = potentially_optimal(&rects);
        if selected.is_empty() {
            break StopReason::NoProgress;
        }
        let r = s.dom.radius();
        if selected
            .iter()
            .all(|&i| 2.0 * r * 3f64.powi(-(rects[i].min_level() as i32)) < b.abs_tol_x)
        {
            break StopReason::ToleranceX;
        }

        // sampling plan: c ± δ e_i along every longest side
        struct Plan {
            rect: usize,
            dims: Vec<usize>,
            points: Vec<[f64; 3]>,
        }
        let mut plans = Vec::new();
        let mut planned_evals = 0;
        for &i in &selected {
            let rect = &rects[i];
            let lmin = rect.min_level();
            let step = 3f64.powi(-(lmin as i32 + 1));
            let dims: Vec<usize> = (0..3).filter(|&k| rect.levels[k] == lmin).collect();
            let mut points = Vec::new();
            for &k in &dims {
                for sign in [1.0, -1.0] {
                    let mut c = rect.center;
                    c[k] += sign * step;
                    points.push(c);
                }
            }
            let needed = points.iter().filter(|&&u| s.dom.contains(s.to_x(u))).count();
            if s.evals + planned_evals + needed > s.max_evals {
                break;
            }
            planned_evals += needed;
            plans.push(Plan { rect: i, dims, points });
        }
        if plans.is_empty() {
            break StopReason::Evaluations;
        }

        let all_points: Vec<[f64; 3]> = plans.iter().flat_map(|p| p.points.iter().copied()).collect();
        let feasible: Vec<bool> = all_points.iter().map(|&u| s.dom.contains(s.to_x(u))).collect();
        let xs: Vec<Vec3> = all_points
            .iter()
            .zip(&feasible)
            .filter(|(_, &ok)| ok)
            .map(|(&u, _)| s.to_x(u))
            .collect();
        let mut values = s.eval_batch(&xs).into_iter();
        let point_f: Vec<f64> = feasible
            .iter()
            .map(|&ok| if ok { values.next().unwrap() } else { f64::INFINITY })
            .collect();

        let mut offset = 0;
        let mut touched = Vec::new();
        for plan in &plans {
            let pf = &point_f[offset..offset + plan.points.len()];
            let pfeas = &feasible[offset..offset + plan.points.len()];
            offset += plan.points.len();
            let mut order: Vec<(f64, usize, usize)> = plan
                .dims
                .iter()
                .enumerate()
                .map(|(slot, &k)| (pf[2 * slot].min(pf[2 * slot + 1]), k, slot))
                .collect();
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut levels = rects[plan.rect].levels;
            for &(_, k, slot) in &order {
                levels[k] += 1;
                for side in 0..2 {
                    touched.push(rects.len());
                    rects.push(Rect {
                        center: plan.points[2 * slot + side],
                        levels,
                        f: pf[2 * slot + side],
                        center_feasible: pfeas[2 * slot + side],
                        alive: true,
                    });
                }
            }
            rects[plan.rect].levels = levels;
            touched.push(plan.rect);
        }

        // rescore rectangles whose center lies outside the ball
        touched.sort_unstable();
        let mut surrogate_rects = Vec::new();
        let mut surrogate_points = Vec::new();
        for &i in &touched {
            if rects[i].center_feasible {
                continue;
            }
            match s.surrogate_point(&rects[i]) {
                Some(p) if s.evals + surrogate_points.len() < s.max_evals => {
                    surrogate_rects.push(i);
                    surrogate_points.push(p);
                }
                Some(_) => rects[i].f = f64::INFINITY,
                None => {
                    rects[i].alive = false;
                    rects[i].f = f64::INFINITY;
                }
            }
        }
        let sf = s.eval_batch(&surrogate_points);
        for (&i, f) in surrogate_rects.iter().zip(sf) {
            rects[i].f = f;
        }
        trace.push(-s.best_f);
    };
    Ok(SearchResult {
        x: s.best_x,
        value: -s.best_f,
        evals: s.evals,
        stop,
        trace,
        warnings: Vec::new(),
    })
}
