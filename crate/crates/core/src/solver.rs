//! The greedy regularized iteration.
//!
//! Each step maximizes `A²/B` over the candidates, where
//! `A = ⟨R^N, T_ℓ d⟩ - λ⟨f_N, d⟩_{H_2}` and `B = ‖T_ℓ d‖² + λ‖d‖²_{H_2}`,
//! appends `α = A/B` times the winner and lowers the Tikhonov functional
//! by exactly `A²/B`.
//!
//! Sobolev bookkeeping: `full_spec` holds the `L²` spectral coefficients of
//! `f_N` up to the scanned degree (a kernel with center `x` contributes
//! `g_n(|x|) Y_{n,j}(x/|x|)`), which gives `⟨f_N, Y_{n,j}⟩_{H_2}` directly.
//! `sh_weighted` holds `(n+½)⁴` times the coefficients of the harmonic terms
//! alone; against a kernel candidate these are summed as a solid harmonic
//! series, while kernel terms use the closed forms.

use std::f64::consts::PI;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::rde;
use crate::forward::{CoefficientModel, DataSet, PointCloud, Synthesizer};
use crate::harmonics::{sh_count, sh_from_index, ShBasis};
use crate::optimize::{global_search, local_refine, Budget, Objective, SearchDomain};
use crate::parallel::chunked_reduce;
use crate::sobolev::{h2_inner, h2_sh_kernel_inner, h2_sh_norm, kernel_inner, kernel_inner_with_grad, radial_profile};
use crate::sphere::{BallPoint, Direction, Vec3};
use crate::trial::{element_eval, upward_cartesian, upward_kernel_with_grad, Dictionary, DictionaryElement, KernelFamily};

/// Relative size below which `B` marks a degenerate candidate.
const DEGENERATE_B: f64 = 1e-14;
/// A step is a stall when its gain is at most this fraction of `J_N`.
const STALL: f64 = 1e-14;

/// Starting dictionary parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DictionarySpec {
    pub sh_max_degree: usize,
    pub learning: bool,
    /// Reuter grid parameter for the kernel seeds; 0 disables seeding.
    pub seed_gamma: usize,
    pub seed_radius: f64,
}

impl Default for DictionarySpec {
    fn default() -> Self {
        DictionarySpec {
            sh_max_degree: 96,
            learning: true,
            seed_gamma: 10,
            seed_radius: 0.94,
        }
    }
}

impl DictionarySpec {
    pub fn build(&self) -> Result<Dictionary> {
        if self.seed_gamma == 0 {
            return Ok(Dictionary {
                sh_max_degree: self.sh_max_degree,
                kernel_seeds: Vec::new(),
                learning_enabled: self.learning,
            });
        }
        Dictionary::with_reuter_seeds(self.sh_max_degree, self.seed_gamma, self.seed_radius, self.learning)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub lambda: f64,
    pub max_iterations: usize,
    pub rde_threshold: f64,
    pub dictionary: DictionarySpec,
    pub domain: SearchDomain,
    /// Budget of the global stage of each center search.
    pub global_budget: Budget,
    /// Budget of each local refinement.
    pub local_budget: Budget,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lambda: 1e-8,
            max_iterations: 1600,
            rde_threshold: 0.05,
            dictionary: DictionarySpec::default(),
            domain: SearchDomain::default(),
            global_budget: Budget::default(),
            local_budget: Budget::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be >= 1".into()));
        }
        if !(self.rde_threshold >= 0.0) {
            return Err(Error::InvalidArgument(format!("rde threshold must be >= 0, got {}", self.rde_threshold)));
        }
        self.global_budget.validate()?;
        self.local_budget.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub alpha: f64,
    pub element: DictionaryElement,
}

/// `f_N = f_0 + Σ α_n d_n`, with `f_0` a harmonic model (empty means zero).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Approximation {
    pub f0: CoefficientModel,
    pub terms: Vec<Term>,
}

impl Approximation {
    /// `f_0` as harmonic terms, degrees below its `min_degree` dropped.
    fn f0_terms(&self) -> impl Iterator<Item = Term> + '_ {
        let min = self.f0.min_degree;
        self.f0
            .coeffs
            .iter()
            .filter(move |(k, _)| k.0 >= min)
            .map(|(&(n, j), &alpha)| Term {
                alpha,
                element: DictionaryElement::Sh { n, j },
            })
    }

    /// Surface value `f_N(η)`.
    pub fn eval(&self, eta: Direction) -> f64 {
        self.upward(1.0, eta)
    }

    /// `(T f_N)(σ η)`.
    pub fn upward(&self, sigma: f64, eta: Direction) -> f64 {
        let inv = 1.0 / sigma;
        let unit = eta.unit();
        let base: f64 = self.f0_terms().map(|t| t.alpha * upward_cartesian(&t.element, inv, unit, eta)).sum();
        base + self
            .terms
            .iter()
            .map(|t| t.alpha * upward_cartesian(&t.element, inv, unit, eta))
            .sum::<f64>()
    }

    /// `‖f_N‖²_{H_2}` by the full pairwise sum.
    pub fn h2_norm_sq(&self) -> Result<f64> {
        let all: Vec<Term> = self.f0_terms().chain(self.terms.iter().copied()).collect();
        let rows: Vec<f64> = all
            .par_iter()
            .map(|a| {
                all.iter()
                    .map(|b| Ok(a.alpha * b.alpha * h2_inner(&a.element, &b.element)?))
                    .sum::<Result<f64>>()
            })
            .collect::<Result<_>>()?;
        Ok(rows.iter().sum())
    }
}

/// Pieces of the objective for one candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub element: DictionaryElement,
    /// `⟨R^N, T_ℓ d⟩`
    pub data_inner: f64,
    /// `⟨f_N, d⟩_{H_2}`
    pub fn_inner: f64,
    /// `‖T_ℓ d‖²`
    pub column_norm_sq: f64,
    /// `‖d‖²_{H_2}`
    pub h2_norm_sq: f64,
    pub a: f64,
    pub b: f64,
    /// `A²/B`
    pub value: f64,
}

impl Candidate {
    fn new(element: DictionaryElement, data_inner: f64, fn_inner: f64, column_norm_sq: f64, h2_norm_sq: f64, lambda: f64) -> Self {
        let a = data_inner - lambda * fn_inner;
        let b = column_norm_sq + lambda * h2_norm_sq;
        let value = if b > 0.0 { a * a / b } else { 0.0 };
        Candidate {
            element,
            data_inner,
            fn_inner,
            column_norm_sq,
            h2_norm_sq,
            a,
            b,
            value,
        }
    }
}

/// `α = A/B`.
pub fn weight(a: f64, b: f64) -> Result<f64> {
    if !(b > 0.0) {
        return Err(Error::DegenerateCandidate(b));
    }
    Ok(a / b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIterations,
    Stalled,
}

/// One accepted iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub iteration: usize,
    pub element: DictionaryElement,
    pub alpha: f64,
    /// `A²/B` of the chosen candidate, the predicted drop of the functional.
    pub objective: f64,
    /// Relative data error after the step.
    pub rde: f64,
    /// Tikhonov functional after the step.
    pub tikhonov: f64,
}

/// Residual, expansion and Sobolev bookkeeping of a running solve.
#[derive(Debug, Clone)]
pub struct SolverState {
    points: PointCloud,
    data: Vec<f64>,
    residual: Vec<f64>,
    approx: Approximation,
    dictionary: Dictionary,
    basis: ShBasis,
    /// `‖T_ℓ Y_k‖²` for the scanned harmonics.
    sh_column_norms: Vec<f64>,
    full_spec: Vec<f64>,
    sh_weighted: Vec<f64>,
    has_sh_terms: bool,
    kernel_terms: Vec<(KernelFamily, Vec3, f64)>,
    fn_norm_sq: f64,
    residual_norm_sq: f64,
    data_norm0: f64,
    b_scale: f64,
    history: Vec<HistoryRow>,
    warnings: Vec<String>,
}

fn norm_sq(v: &[f64]) -> f64 {
    chunked_reduce(v.len(), 0.0, |a, b| v[a..b].iter().map(|x| x * x).sum::<f64>(), |x, y| x + y)
}

fn add_vecs(mut a: Vec<f64>, b: Vec<f64>) -> Vec<f64> {
    if a.is_empty() {
        return b;
    }
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
    a
}

impl SolverState {
    /// Initial state `R⁰ = y - T_ℓ f_0` with an empty expansion.
    pub fn new(ds: &DataSet, f0: CoefficientModel, dictionary: Dictionary) -> Result<Self> {
        if ds.is_empty() {
            return Err(Error::InvalidArgument("dataset must not be empty".into()));
        }
        let points = ds.points();
        let data = ds.values();
        let residual = if f0.is_empty() {
            data.clone()
        } else {
            let syn = Synthesizer::new(&f0, f0.min_degree);
            let pts: Vec<(f64, Direction)> = ds.samples.iter().map(|s| (s.sigma, s.eta)).collect();
            let tf0 = syn.eval_many(&pts);
            data.iter().zip(tf0).map(|(y, t)| y - t).collect()
        };
        let book_degree = dictionary.sh_max_degree.max(if f0.is_empty() { 0 } else { f0.max_degree });
        let basis = ShBasis::new(book_degree);
        let n_book = sh_count(book_degree);
        let n_scan = sh_count(dictionary.sh_max_degree);

        // column norms in one streaming pass
        let sh_column_norms = {
            let pc = &points;
            let basis = &basis;
            let mut norms = chunked_reduce(
                pc.len(),
                Vec::new(),
                |a, b| {
                    let mut sc = basis.scratch();
                    let mut buf = vec![0.0; n_book];
                    let mut acc = vec![0.0; n_book];
                    for i in a..b {
                        let inv = pc.inv_sigma[i];
                        basis.eval_scaled(pc.dirs[i], |n| inv.powi(n as i32 + 1), &mut sc, &mut buf);
                        for (s, v) in acc.iter_mut().zip(&buf) {
                            *s += v * v;
                        }
                    }
                    acc
                },
                add_vecs,
            );
            norms.truncate(n_scan);
            norms
        };

        let mut full_spec = vec![0.0; n_book];
        let mut sh_weighted = vec![0.0; n_book];
        let mut approx = Approximation {
            f0,
            terms: Vec::new(),
        };
        let mut has_sh_terms = false;
        for t in approx.f0_terms() {
            if let DictionaryElement::Sh { n, j } = t.element {
                let k = crate::harmonics::sh_index(n, j);
                full_spec[k] += t.alpha;
                sh_weighted[k] += h2_sh_norm(n) * t.alpha;
                has_sh_terms = true;
            }
        }
        let fn_norm_sq = approx.h2_norm_sq()?;
        approx.terms.clear();
        let residual_norm_sq = norm_sq(&residual);
        let b_scale = points.inv_sigma.iter().map(|s| s * s).sum::<f64>() / (4.0 * PI);
        Ok(SolverState {
            points,
            data,
            data_norm0: residual_norm_sq.sqrt(),
            residual,
            approx,
            dictionary,
            basis,
            sh_column_norms,
            full_spec,
            sh_weighted,
            has_sh_terms,
            kernel_terms: Vec::new(),
            fn_norm_sq,
            residual_norm_sq,
            b_scale,
            history: Vec::new(),
            warnings: Vec::new(),
        })
    }

    pub fn residual(&self) -> &[f64] {
        &self.residual
    }

    pub fn approximation(&self) -> &Approximation {
        &self.approx
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dictionary
    }

    pub fn history(&self) -> &[HistoryRow] {
        &self.history
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn iterations(&self) -> usize {
        self.approx.terms.len()
    }

    pub fn data_norm0(&self) -> f64 {
        self.data_norm0
    }

    pub fn residual_norm(&self) -> f64 {
        self.residual_norm_sq.sqrt()
    }

    /// `‖f_N‖²_{H_2}` as maintained incrementally.
    pub fn fn_norm_sq(&self) -> f64 {
        self.fn_norm_sq
    }

    /// `‖R^N‖ / ‖R⁰‖`; zero when `f_0` already fits the data exactly.
    pub fn rde(&self) -> Result<f64> {
        if self.data_norm0 == 0.0 {
            return Ok(0.0);
        }
        rde(self.residual_norm(), self.data_norm0)
    }

    /// `J_N = ‖R^N‖² + λ‖f_N‖²_{H_2}`.
    pub fn tikhonov(&self, lambda: f64) -> f64 {
        self.residual_norm_sq + lambda * self.fn_norm_sq
    }

    /// `y - T_ℓ f_N` computed from scratch.
    pub fn recompute_residual(&self) -> Vec<f64> {
        let approx = &self.approx;
        let pc = &self.points;
        (0..pc.len())
            .into_par_iter()
            .map(|i| self.data[i] - approx.upward(1.0 / pc.inv_sigma[i], pc.dirs[i]))
            .collect()
    }

    /// Harmonic candidate pieces, all degrees up to the scanned maximum.
    fn sh_candidates(&self, lambda: f64) -> Vec<Candidate> {
        let n_scan = self.sh_column_norms.len();
        let pc = &self.points;
        let basis = &self.basis;
        let r = &self.residual;
        let n_book = sh_count(basis.max_degree());
        let tr = chunked_reduce(
            pc.len(),
            Vec::new(),
            |a, b| {
                let mut sc = basis.scratch();
                let mut buf = vec![0.0; n_book];
                let mut acc = vec![0.0; n_scan];
                for i in a..b {
                    let inv = pc.inv_sigma[i];
                    basis.eval_scaled(pc.dirs[i], |n| inv.powi(n as i32 + 1), &mut sc, &mut buf);
                    let ri = r[i];
                    for (s, v) in acc.iter_mut().zip(&buf) {
                        *s += ri * v;
                    }
                }
                acc
            },
            add_vecs,
        );
        (0..n_scan)
            .map(|k| {
                let (n, j) = sh_from_index(k);
                let w = h2_sh_norm(n);
                Candidate::new(DictionaryElement::Sh { n, j }, tr[k], w * self.full_spec[k], self.sh_column_norms[k], w, lambda)
            })
            .collect()
    }

    /// `⟨f_N, d⟩_{H_2}` for a kernel or wavelet, optionally with its gradient.
    fn fn_inner_kernel(&self, family: KernelFamily, x: Vec3, with_grad: bool) -> Result<(f64, Vec3)> {
        let mut value = 0.0;
        let mut grad = Vec3::ZERO;
        if self.has_sh_terms {
            let mut sc = self.basis.scratch();
            let (v, g) = self
                .basis
                .solid_sum_with_grad(x, &self.sh_weighted, |n, h| radial_profile(family, n, h), &mut sc);
            value += v;
            grad += g;
        }
        for &(f2, x2, alpha) in &self.kernel_terms {
            if with_grad {
                let (v, g) = kernel_inner_with_grad(family, x, f2, x2)?;
                value += alpha * v;
                grad += alpha * g;
            } else {
                value += alpha * kernel_inner(family, x, f2, x2)?;
            }
        }
        Ok((value, grad))
    }

    /// Objective pieces of a kernel or wavelet with center `x`; with
    /// `with_grad` also the gradient of `A²/B`.
    fn kernel_candidate(&self, family: KernelFamily, x: Vec3, lambda: f64, with_grad: bool) -> Result<(Candidate, Vec3)> {
        let element = DictionaryElement::from_kernel(family, BallPoint::new(x)?);
        let pc = &self.points;
        let r = &self.residual;
        type Acc = (f64, f64, Vec3, Vec3);
        let zero: Acc = (0.0, 0.0, Vec3::ZERO, Vec3::ZERO);
        let (ad, bd, gad, gbd) = chunked_reduce(
            pc.len(),
            zero,
            |a, b| {
                let mut acc = zero;
                for i in a..b {
                    if with_grad {
                        let (c, g) = upward_kernel_with_grad(family, x, pc.inv_sigma[i], pc.unit[i]);
                        acc.0 += r[i] * c;
                        acc.1 += c * c;
                        acc.2 += r[i] * g;
                        acc.3 += (2.0 * c) * g;
                    } else {
                        let c = upward_cartesian(&element, pc.inv_sigma[i], pc.unit[i], pc.dirs[i]);
                        acc.0 += r[i] * c;
                        acc.1 += c * c;
                    }
                }
                acc
            },
            |p, q| (p.0 + q.0, p.1 + q.1, p.2 + q.2, p.3 + q.3),
        );
        let (fd, gfd) = self.fn_inner_kernel(family, x, with_grad)?;
        let (nd, gnd) = if with_grad {
            let (v, g) = kernel_inner_with_grad(family, x, family, x)?;
            (v, 2.0 * g)
        } else {
            (kernel_inner(family, x, family, x)?, Vec3::ZERO)
        };
        let cand = Candidate::new(element, ad, fd, bd, nd, lambda);
        let mut grad = Vec3::ZERO;
        if with_grad && cand.b > 0.0 {
            let ga = gad - lambda * gfd;
            let gb = gbd + lambda * gnd;
            let (a, b) = (cand.a, cand.b);
            grad = (1.0 / (b * b)) * ((2.0 * a * b) * ga - (a * a) * gb);
        }
        Ok((cand, grad))
    }

    fn is_degenerate(&self, c: &Candidate) -> bool {
        !(c.b >= DEGENERATE_B * self.b_scale)
    }

    fn column(&self, d: &DictionaryElement) -> Vec<f64> {
        self.points.column(d)
    }

    /// Appends `α d`, updating residual and bookkeeping.
    fn accept(&mut self, c: &Candidate, lambda: f64) -> Result<HistoryRow> {
        let alpha = weight(c.a, c.b)?;
        let col = self.column(&c.element);
        for (r, t) in self.residual.iter_mut().zip(&col) {
            *r -= alpha * t;
        }
        self.residual_norm_sq = norm_sq(&self.residual);
        self.fn_norm_sq += 2.0 * alpha * c.fn_inner + alpha * alpha * c.h2_norm_sq;
        match c.element {
            DictionaryElement::Sh { n, j } => {
                let k = crate::harmonics::sh_index(n, j);
                self.full_spec[k] += alpha;
                self.sh_weighted[k] += alpha * h2_sh_norm(n);
                self.has_sh_terms = true;
            }
            _ => {
                let (family, x) = c.element.kernel().expect("kernel element");
                let xc = x.cartesian();
                let h = xc.norm();
                let dir = x.dir().unwrap_or(Direction::NORTH_POLE);
                let mut sc = self.basis.scratch();
                let mut buf = vec![0.0; self.full_spec.len()];
                self.basis.eval_scaled(dir, |n| radial_profile(family, n, h).0, &mut sc, &mut buf);
                for (s, v) in self.full_spec.iter_mut().zip(&buf) {
                    *s += alpha * v;
                }
                self.kernel_terms.push((family, xc, alpha));
            }
        }
        self.approx.terms.push(Term { alpha, element: c.element });
        let row = HistoryRow {
            iteration: self.approx.terms.len(),
            element: c.element,
            alpha,
            objective: c.value,
            rde: self.rde()?,
            tikhonov: self.tikhonov(lambda),
        };
        self.history.push(row);
        Ok(row)
    }
}

/// `(A²/B, A, B)` for any dictionary element against the current state.
pub fn objective(d: &DictionaryElement, state: &SolverState, lambda: f64) -> Result<(f64, f64, f64)> {
    let c = match *d {
        DictionaryElement::Sh { n, j } => {
            let col = state.column(d);
            let data_inner: f64 = col.iter().zip(&state.residual).map(|(c, r)| c * r).sum();
            let column_norm_sq: f64 = col.iter().map(|c| c * c).sum();
            let fn_inner = if n <= state.basis.max_degree() {
                h2_sh_norm(n) * state.full_spec[crate::harmonics::sh_index(n, j)]
            } else {
                state
                    .kernel_terms
                    .iter()
                    .map(|&(f, x, a)| Ok(a * h2_sh_kernel_inner(n, j, &DictionaryElement::from_kernel(f, BallPoint::new(x)?))?))
                    .sum::<Result<f64>>()?
            };
            Candidate::new(*d, data_inner, fn_inner, column_norm_sq, h2_sh_norm(n), lambda)
        }
        _ => {
            let (family, x) = d.kernel().expect("kernel element");
            state.kernel_candidate(family, x.cartesian(), lambda, false)?.0
        }
    };
    if state.is_degenerate(&c) {
        return Err(Error::DegenerateCandidate(c.b));
    }
    Ok((c.value, c.a, c.b))
}

/// Exhaustive scan of the harmonics; ties go to the lower index.
pub fn learn_sh(state: &SolverState, config: &SolverConfig) -> Candidate {
    let mut best: Option<Candidate> = None;
    for c in state.sh_candidates(config.lambda) {
        if state.is_degenerate(&c) {
            continue;
        }
        if best.is_none_or(|b| c.value > b.value) {
            best = Some(c);
        }
    }
    best.expect("the constant harmonic is never degenerate")
}

/// The objective divided by `J_N`, as seen by the optimizer.
struct ScaledObjective<'a> {
    state: &'a SolverState,
    family: KernelFamily,
    lambda: f64,
    scale: f64,
}

impl Objective for ScaledObjective<'_> {
    fn value(&self, x: Vec3) -> f64 {
        match self.state.kernel_candidate(self.family, x, self.lambda, false) {
            Ok((c, _)) if !self.state.is_degenerate(&c) => self.scale * c.value,
            Ok(_) => 0.0,
            Err(_) => f64::NEG_INFINITY,
        }
    }

    fn value_grad(&self, x: Vec3) -> Option<(f64, Vec3)> {
        match self.state.kernel_candidate(self.family, x, self.lambda, true) {
            Ok((c, g)) if !self.state.is_degenerate(&c) => Some((self.scale * c.value, self.scale * g)),
            Ok(_) => Some((0.0, Vec3::ZERO)),
            Err(_) => Some((f64::NEG_INFINITY, Vec3::ZERO)),
        }
    }
}

/// Best learned kernel or wavelet, with any warnings raised on the way.
///
/// Seeds are scored first. With learning enabled, a global search is
/// followed by local refinements from its incumbent and from the best seed,
/// and the best refined point wins; a failed refinement falls back to the
/// best unrefined point.
pub fn learn_kernel(state: &SolverState, config: &SolverConfig, family: KernelFamily) -> Result<(Option<Candidate>, Vec<String>)> {
    let lambda = config.lambda;
    let mut warnings = Vec::new();
    let seeds = &state.dictionary.kernel_seeds;
    let scored: Vec<Candidate> = seeds
        .par_iter()
        .map(|x| state.kernel_candidate(family, x.cartesian(), lambda, false).map(|c| c.0))
        .collect::<Result<_>>()?;
    let mut best_seed: Option<Candidate> = None;
    for c in scored {
        if state.is_degenerate(&c) {
            continue;
        }
        if best_seed.is_none_or(|b| c.value > b.value) {
            best_seed = Some(c);
        }
    }
    if !state.dictionary.learning_enabled {
        return Ok((best_seed, warnings));
    }

    let j = state.tikhonov(lambda);
    let obj = ScaledObjective {
        state,
        family,
        lambda,
        scale: if j > 0.0 { 1.0 / j } else { 1.0 },
    };
    let global = global_search(&obj, config.domain, config.global_budget)?;
    let mut starts = vec![global.x];
    if let Some(s) = best_seed {
        starts.push(s.element.kernel().expect("kernel element").1.cartesian());
    }
    let mut refined = Vec::new();
    for &x0 in &starts {
        match local_refine(&obj, x0, config.domain, config.local_budget) {
            Ok(res) => {
                warnings.extend(res.warnings);
                refined.push(res.x);
            }
            Err(e) => {
                let msg = format!("local refinement of {family:?} from {x0:?} failed: {e}");
                warn!("{msg}");
                warnings.push(msg);
            }
        }
    }
    // refined points first, then the unrefined fallbacks
    let points: Vec<Vec3> = refined.into_iter().chain(starts).collect();
    let mut best: Option<Candidate> = None;
    for x in points {
        let (c, _) = state.kernel_candidate(family, x, lambda, false)?;
        if state.is_degenerate(&c) {
            continue;
        }
        if best.is_none_or(|b| c.value > b.value) {
            best = Some(c);
        }
    }
    if let Some(s) = best_seed {
        if best.is_none_or(|b| s.value > b.value) {
            best = Some(s);
        }
    }
    Ok((best, warnings))
}

/// One greedy step. Returns `Some(Status::Stalled)` if no candidate lowers
/// the functional noticeably; the state is then left unchanged.
pub fn iterate(state: &mut SolverState, config: &SolverConfig) -> Result<Option<Status>> {
    let lambda = config.lambda;
    let j_before = state.tikhonov(lambda);
    let mut best = learn_sh(state, config);
    let mut warnings = Vec::new();
    for family in [KernelFamily::Apk, KernelFamily::Apw] {
        let (cand, w) = learn_kernel(state, config, family)?;
        warnings.extend(w);
        if let Some(c) = cand {
            if c.value > best.value {
                best = c;
            }
        }
    }
    state.warnings.extend(warnings);
    if !(best.value > STALL * j_before) {
        return Ok(Some(Status::Stalled));
    }
    let row = state.accept(&best, lambda)?;
    debug!(
        "iteration {}: {:?} alpha = {:.6e} rde = {:.6e} J = {:.6e}",
        row.iteration, row.element, row.alpha, row.rde, row.tikhonov
    );
    Ok(None)
}

/// Result of [`solve`].
#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub approximation: Approximation,
    pub history: Vec<HistoryRow>,
    pub status: Status,
    pub final_rde: f64,
    pub warnings: Vec<String>,
}

/// Runs the iteration from `f_0 = 0` with the dictionary from `config`.
pub fn solve(config: &SolverConfig, ds: &DataSet) -> Result<SolveOutput> {
    solve_with(config, ds, config.dictionary.build()?, CoefficientModel::default())
}

/// Runs the iteration with an explicit starting dictionary and `f_0`.
/// Stops when the relative data error reaches `rde_threshold`, after
/// `max_iterations` steps, or on a stall.
pub fn solve_with(config: &SolverConfig, ds: &DataSet, dictionary: Dictionary, f0: CoefficientModel) -> Result<SolveOutput> {
    config.validate()?;
    let mut state = SolverState::new(ds, f0, dictionary)?;
    let status = run(&mut state, config)?;
    Ok(SolveOutput {
        final_rde: state.rde()?,
        approximation: state.approx,
        history: state.history,
        status,
        warnings: state.warnings,
    })
}

/// Iterates an existing state until one of the stopping rules applies.
pub fn run(state: &mut SolverState, config: &SolverConfig) -> Result<Status> {
    loop {
        if state.rde()? <= config.rde_threshold {
            return Ok(Status::Converged);
        }
        if state.iterations() >= config.max_iterations {
            return Ok(Status::MaxIterations);
        }
        if let Some(status) = iterate(state, config)? {
            return Ok(status);
        }
    }
}

/// Surface values of an approximation at many directions.
pub fn eval_many(a: &Approximation, dirs: &[Direction]) -> Vec<f64> {
    if a.f0.is_empty() {
        return dirs
            .par_iter()
            .map(|&d| a.terms.iter().map(|t| t.alpha * element_eval(&t.element, d)).sum())
            .collect();
    }
    let syn = Synthesizer::new(&a.f0, a.f0.min_degree);
    dirs.par_iter()
        .map_init(
            || syn.scratch(),
            |sc, &d| syn.eval(1.0, d, sc) + a.terms.iter().map(|t| t.alpha * element_eval(&t.element, d)).sum::<f64>(),
        )
        .collect()
}
