//! Error metrics and gridded surface fields.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forward::{CoefficientModel, Synthesizer};
use crate::solver::{eval_many, Approximation};
use crate::sphere::{Direction, SurfaceGrid};

/// Values aligned with the points of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldOnGrid {
    pub grid: SurfaceGrid,
    pub values: Vec<f64>,
}

impl FieldOnGrid {
    pub fn new(grid: SurfaceGrid, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::InvalidArgument(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        Ok(FieldOnGrid { grid, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Point weighting used by [`rrmse_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    /// Every grid point counts once.
    #[default]
    Unweighted,
    /// Points weighted by `sin θ`, approximating surface area on
    /// latitude-longitude grids.
    Area,
}

/// `f_N` on the surface at every grid point.
pub fn evaluate_approx(a: &Approximation, grid: &SurfaceGrid) -> FieldOnGrid {
    FieldOnGrid {
        grid: grid.clone(),
        values: eval_many(a, &grid.points),
    }
}

/// The truncated model at `σ = 1` at every grid point.
pub fn evaluate_model(m: &CoefficientModel, grid: &SurfaceGrid) -> FieldOnGrid {
    let values = if m.is_empty() {
        vec![0.0; grid.len()]
    } else {
        let syn = Synthesizer::new(m, m.min_degree);
        let pts: Vec<(f64, Direction)> = grid.points.iter().map(|&d| (1.0, d)).collect();
        syn.eval_many(&pts)
    };
    FieldOnGrid {
        grid: grid.clone(),
        values,
    }
}

fn check_same_grid(a: &FieldOnGrid, b: &FieldOnGrid) -> Result<()> {
    if a.grid != b.grid || a.values.len() != b.values.len() {
        return Err(Error::InvalidArgument("fields live on different grids".into()));
    }
    Ok(())
}

/// `√(Σ (f_ν - f)² / Σ f²)` over all grid points.
pub fn rrmse(approx: &FieldOnGrid, reference: &FieldOnGrid) -> Result<f64> {
    rrmse_with(approx, reference, Weighting::Unweighted)
}

pub fn rrmse_with(approx: &FieldOnGrid, reference: &FieldOnGrid, weighting: Weighting) -> Result<f64> {
    check_same_grid(approx, reference)?;
    let w = |d: &Direction| match weighting {
        Weighting::Unweighted => 1.0,
        Weighting::Area => d.sin_colat(),
    };
    let (num, den) = approx
        .values
        .iter()
        .zip(&reference.values)
        .zip(&reference.grid.points)
        .fold((0.0, 0.0), |(n, d), ((a, r), p)| {
            let wi = w(p);
            (n + wi * (a - r) * (a - r), d + wi * r * r)
        });
    if !(den > 0.0) {
        return Err(Error::ZeroNorm);
    }
    Ok((num / den).sqrt())
}

/// Relative data error `‖R^ν‖ / ‖R⁰‖`.
pub fn rde(residual_norm: f64, initial_norm: f64) -> Result<f64> {
    if !(initial_norm > 0.0) {
        return Err(Error::ZeroNorm);
    }
    Ok(residual_norm / initial_norm)
}

/// Pointwise `|f_ν - f|`.
pub fn abs_error_field(approx: &FieldOnGrid, reference: &FieldOnGrid) -> Result<FieldOnGrid> {
    check_same_grid(approx, reference)?;
    Ok(FieldOnGrid {
        grid: approx.grid.clone(),
        values: approx
            .values
            .par_iter()
            .zip(&reference.values)
            .map(|(a, r)| (a - r).abs())
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonics::sh_eval;
    use crate::solver::Term;
    use crate::sphere::{driscoll_healy, BallPoint, Vec3};
    use crate::trial::{element_eval, DictionaryElement};

    fn grid() -> SurfaceGrid {
        driscoll_healy(19, 37).unwrap()
    }

    fn model() -> CoefficientModel {
        CoefficientModel::random_kaula(3, 9, 8)
    }

    #[test]
    fn approximation_fields() {
        let g = grid();
        let empty = evaluate_approx(&Approximation::default(), &g);
        assert!(empty.values.iter().all(|v| *v == 0.0));
        let single = Approximation {
            terms: vec![Term { alpha: 2.5, element: DictionaryElement::Sh { n: 4, j: -3 } }],
            ..Default::default()
        };
        let f = evaluate_approx(&single, &g);
        for (v, d) in f.values.iter().zip(&g.points) {
            assert!((v - 2.5 * sh_eval(4, -3, *d)).abs() < 1e-14);
        }
        let terms = vec![
            Term { alpha: 0.3, element: DictionaryElement::Sh { n: 2, j: 1 } },
            Term { alpha: -1.1, element: DictionaryElement::Apk { x: BallPoint::new(Vec3::new(0.1, 0.2, 0.5)).unwrap() } },
            Term { alpha: 0.7, element: DictionaryElement::Apw { x: BallPoint::new(Vec3::new(-0.6, 0.0, 0.3)).unwrap() } },
        ];
        let three = Approximation { terms: terms.clone(), ..Default::default() };
        let f = evaluate_approx(&three, &g);
        for (v, d) in f.values.iter().zip(&g.points) {
            let want: f64 = terms.iter().map(|t| t.alpha * element_eval(&t.element, *d)).sum();
            assert!((v - want).abs() < 1e-13);
        }
    }

    #[test]
    fn model_fields_and_linearity() {
        let g = grid();
        assert!(evaluate_model(&CoefficientModel::default(), &g).values.iter().all(|v| *v == 0.0));
        let single = CoefficientModel::from_entries([(5, 2, 3.0)]).unwrap();
        let f = evaluate_model(&single, &g);
        for (v, d) in f.values.iter().zip(&g.points) {
            assert!((v - 3.0 * sh_eval(5, 2, *d)).abs() < 1e-13);
        }
        let (a, b) = (model(), CoefficientModel::random_kaula(3, 9, 9));
        let fs = evaluate_model(&a.add(&b), &g);
        let (fa, fb) = (evaluate_model(&a, &g), evaluate_model(&b, &g));
        for i in 0..g.len() {
            assert!((fs.values[i] - fa.values[i] - fb.values[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn approximation_with_f0_matches_model() {
        let g = grid();
        let m = model();
        let a = Approximation { f0: m.clone(), terms: vec![] };
        let (fa, fm) = (evaluate_approx(&a, &g), evaluate_model(&m, &g));
        assert!(rrmse(&fa, &fm).unwrap() < 1e-14);
    }

    #[test]
    fn rrmse_examples() {
        let g = grid();
        let r = evaluate_model(&model(), &g);
        assert_eq!(rrmse(&r, &r).unwrap(), 0.0);
        let zero = FieldOnGrid::new(g.clone(), vec![0.0; g.len()]).unwrap();
        assert!((rrmse(&zero, &r).unwrap() - 1.0).abs() < 1e-15);
        let twice = FieldOnGrid::new(g.clone(), r.values.iter().map(|v| 2.0 * v).collect()).unwrap();
        assert!((rrmse(&twice, &r).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(rrmse(&r, &zero), Err(Error::ZeroNorm)));
        let other = FieldOnGrid::new(driscoll_healy(5, 5).unwrap(), vec![1.0; 25]).unwrap();
        assert!(rrmse(&other, &r).is_err());
    }

    #[test]
    fn rrmse_scale_invariance_and_weighting() {
        let g = grid();
        let r = evaluate_model(&model(), &g);
        let a = FieldOnGrid::new(g.clone(), r.values.iter().enumerate().map(|(i, v)| v + 1e-3 * (i as f64).sin()).collect()).unwrap();
        let scale = |f: &FieldOnGrid, s: f64| FieldOnGrid::new(f.grid.clone(), f.values.iter().map(|v| s * v).collect()).unwrap();
        let base = rrmse(&a, &r).unwrap();
        assert!((rrmse(&scale(&a, 7.5), &scale(&r, 7.5)).unwrap() - base).abs() < 1e-14 * base.max(1.0));
        let area = rrmse_with(&a, &r, Weighting::Area).unwrap();
        assert!(area > 0.0 && area != base);
    }

    #[test]
    fn rde_examples() {
        assert_eq!(rde(0.0, 5.0).unwrap(), 0.0);
        assert_eq!(rde(5.0, 5.0).unwrap(), 1.0);
        assert_eq!(rde(2.0 * 3.0, 2.0 * 7.0).unwrap(), rde(3.0, 7.0).unwrap());
        assert!(rde(1.0, 0.0).is_err());
    }

    #[test]
    fn abs_error_examples() {
        let g = grid();
        let r = evaluate_model(&model(), &g);
        assert!(abs_error_field(&r, &r).unwrap().values.iter().all(|v| *v == 0.0));
        let mut a = r.clone();
        a.values[17] += 0.5;
        a.values[3] -= 0.1;
        let e = abs_error_field(&a, &r).unwrap();
        let e2 = abs_error_field(&r, &a).unwrap();
        assert_eq!(e, e2);
        let argmax = e.values.iter().enumerate().max_by(|x, y| x.1.total_cmp(y.1)).unwrap().0;
        assert_eq!(argmax, 17);
    }
}
