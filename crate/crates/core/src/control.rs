//! Stochastic optimal control on the truncated space: Hamiltonians, the
//! HJB residual, controlled mild dynamics, Monte Carlo costs and the
//! verification identity
//!
//! ```text
//! J(s, x; a) − v(s, x) = E ∫_s^T [F_CV(r, X, ∂_x v, a) − F(r, X, ∂_x v)] dr
//! ```
//!
//! for strong solutions `v` of the HJB equation.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::ensemble::{mean, standard_error, EnsembleSpec};
use crate::error::{check_dim, Error, Result};
use crate::noise::{sample_q_wiener, GridPath, SeedSpec, StreamPurpose, TimeGrid};
use crate::spaces::{dot, norm, trace_pairing, HVector, TensorElement, TruncatedSpace};
use crate::spde::{noise_covariance, simulate_driven, Diffusion, MildPath};

/// `(t, x, a, out)` controlled vector field.
pub type ControlField = Arc<dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;
/// `(t, x, a)` running cost.
pub type CostFn = Arc<dyn Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync>;
/// `(t, x)` scalar field.
pub type ScalarField = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
/// `(t, x)` vector field.
pub type VectorField = Arc<dyn Fn(f64, &[f64]) -> HVector + Send + Sync>;

/// Relative slack accepted on ball membership.
const BALL_SLACK: f64 = 1e-12;

#[derive(Clone)]
pub enum ControlDrift {
    /// `b(t, x, a) = a`
    Identity,
    /// `b = b_g + b_i`; the split is kept for the boundedness report.
    Split {
        b_g: ControlField,
        b_i: ControlField,
    },
    Custom(ControlField),
}

impl ControlDrift {
    pub fn eval(&self, t: f64, x: &[f64], a: &[f64], out: &mut [f64]) {
        match self {
            ControlDrift::Identity => out.copy_from_slice(a),
            ControlDrift::Split { b_g, b_i } => {
                let mut tmp = vec![0.0; out.len()];
                b_g(t, x, a, out);
                b_i(t, x, a, &mut tmp);
                out.iter_mut().zip(&tmp).for_each(|(o, v)| *o += v);
            }
            ControlDrift::Custom(f) => f(t, x, a, out),
        }
    }
}

#[derive(Clone)]
pub enum RunningCost {
    /// `l(t, x, a) = |a|² / 2`
    HalfSquare,
    Custom(CostFn),
}

impl RunningCost {
    pub fn eval(&self, t: f64, x: &[f64], a: &[f64]) -> f64 {
        match self {
            RunningCost::HalfSquare => 0.5 * dot(a, a),
            RunningCost::Custom(f) => f(t, x, a),
        }
    }
}

#[derive(Clone)]
pub enum TerminalCost {
    /// `g(x) = ⟨x, h⟩`
    Linear(HVector),
    Custom(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl TerminalCost {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            TerminalCost::Linear(h) => dot(x, h),
            TerminalCost::Custom(g) => g(x),
        }
    }
}

/// Control problem with control set the closed ball of radius `radius`.
#[derive(Clone)]
pub struct ControlProblem {
    pub id: String,
    pub space: TruncatedSpace,
    pub t_start: f64,
    pub t_end: f64,
    pub radius: f64,
    pub x0: HVector,
    pub drift: ControlDrift,
    pub diffusion: Diffusion,
    pub running: RunningCost,
    pub terminal: TerminalCost,
    /// Seed of the multistart search in [`hamiltonian`].
    pub search_seed: u64,
}

impl fmt::Debug for ControlProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlProblem")
            .field("id", &self.id)
            .field("space", &self.space.label())
            .field("horizon", &(self.t_start, self.t_end))
            .field("radius", &self.radius)
            .finish_non_exhaustive()
    }
}

impl ControlProblem {
    /// `b = a`, `l = |a|²/2`, `g = 0`, `σ = I`.
    pub fn new(
        space: TruncatedSpace,
        t_start: f64,
        t_end: f64,
        radius: f64,
        x0: HVector,
    ) -> Result<Self> {
        space.check(&x0)?;
        if !(t_end > t_start) {
            return Err(Error::InvalidGrid(format!(
                "empty horizon [{t_start}, {t_end}]"
            )));
        }
        if !(radius > 0.0) {
            return Err(Error::Config {
                line: 0,
                message: format!("control radius must be positive, got {radius}"),
            });
        }
        let n = space.n_modes();
        Ok(Self {
            id: "problem".into(),
            terminal: TerminalCost::Linear(HVector::zeros(n)),
            diffusion: Diffusion::identity(n),
            space,
            t_start,
            t_end,
            radius,
            x0,
            drift: ControlDrift::Identity,
            running: RunningCost::HalfSquare,
            search_seed: 0,
        })
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn n_modes(&self) -> usize {
        self.space.n_modes()
    }

    fn has_closed_form_hamiltonian(&self) -> bool {
        matches!(self.drift, ControlDrift::Identity)
            && matches!(self.running, RunningCost::HalfSquare)
    }

    pub fn contains(&self, a: &[f64]) -> bool {
        norm(a) <= self.radius * (1.0 + BALL_SLACK)
    }

    fn check_control(&self, a: &[f64]) -> Result<()> {
        check_dim(self.n_modes(), a.len())?;
        if self.contains(a) {
            Ok(())
        } else {
            Err(Error::ControlOutsideSet {
                norm: norm(a),
                radius: self.radius,
            })
        }
    }

    pub fn grid(&self, n_steps: usize) -> Result<TimeGrid> {
        TimeGrid::new(self.t_start, self.t_end, n_steps)
    }

    fn check_grid(&self, grid: &TimeGrid) -> Result<()> {
        let tol = 1e-12 * (1.0 + self.t_end.abs());
        if (grid.t_start() - self.t_start).abs() > tol || (grid.t_end() - self.t_end).abs() > tol {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// Spot-checks of the growth and Lipschitz bounds on `b` and finiteness
    /// of `F` at random `(t, x, a, p)` probes.
    pub fn check_hypotheses(&self, probes: usize, seed: u64) -> Result<HypothesisReport> {
        let n = self.n_modes();
        let mut rng = SeedSpec::new(seed, 0, StreamPurpose::Auxiliary(5)).rng(0);
        let mut report = HypothesisReport {
            growth_ratio: 0.0,
            lipschitz_ratio: 0.0,
        };
        let (mut bx, mut by) = (vec![0.0; n], vec![0.0; n]);
        for _ in 0..probes {
            let t = self.t_start + (self.t_end - self.t_start) * rng.random::<f64>();
            let x = gaussian(&mut rng, n, 2.0);
            let y = gaussian(&mut rng, n, 2.0);
            let a = uniform_in_ball(&mut rng, n, self.radius);
            self.drift.eval(t, &x, &a, &mut bx);
            self.drift.eval(t, &y, &a, &mut by);
            report.growth_ratio = report.growth_ratio.max(norm(&bx) / (1.0 + norm(&x)));
            let d = norm(&sub(&x, &y));
            if d > 0.0 {
                report.lipschitz_ratio = report.lipschitz_ratio.max(norm(&sub(&bx, &by)) / d);
            }
            let p = gaussian(&mut rng, n, 1.0);
            let value = hamiltonian(self, t, &x, &p)?.value;
            if !value.is_finite() {
                return Err(Error::NonFiniteCost);
            }
        }
        Ok(report)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HypothesisReport {
    /// `sup |b(t,x,a)| / (1 + |x|)`
    pub growth_ratio: f64,
    /// `sup |b(t,x,a) − b(t,y,a)| / |x − y|`
    pub lipschitz_ratio: f64,
}

fn gaussian(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Uniform sample from the ball of radius `r` in `R^n`.
pub fn uniform_in_ball(rng: &mut impl Rng, n: usize, r: f64) -> Vec<f64> {
    let g = gaussian(rng, n, 1.0);
    let len = norm(&g);
    let radius = r * rng.random::<f64>().powf(1.0 / n as f64);
    g.iter().map(|v| v * radius / len).collect()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(a, b)| a - b).collect()
}

fn project_ball(a: &mut [f64], r: f64) {
    let n = norm(a);
    if n > r {
        a.iter_mut().for_each(|v| *v *= r / n);
    }
}

/// `⟨p, b(t, x, a)⟩ + l(t, x, a)`.
pub fn current_value_hamiltonian(
    problem: &ControlProblem,
    t: f64,
    x: &[f64],
    p: &[f64],
    a: &[f64],
) -> Result<f64> {
    problem.check_control(a)?;
    check_dim(problem.n_modes(), x.len())?;
    check_dim(problem.n_modes(), p.len())?;
    Ok(cv_unchecked(problem, t, x, p, a))
}

fn cv_unchecked(problem: &ControlProblem, t: f64, x: &[f64], p: &[f64], a: &[f64]) -> f64 {
    let mut b = vec![0.0; a.len()];
    problem.drift.eval(t, x, a, &mut b);
    dot(p, &b) + problem.running.eval(t, x, a)
}

/// Infimum of the current-value Hamiltonian over the control ball.
#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianValue {
    pub value: f64,
    pub argmin: HVector,
    /// Distinct near-optimal points were found; `argmin` is then the
    /// lexicographically smallest of them.
    pub ambiguous: bool,
}

/// Settings of the generic minimizer.
pub const DESCENT_STARTS: usize = 32;
pub const DESCENT_ITERATIONS: usize = 200;
pub const DESCENT_TOL: f64 = 1e-10;

pub fn hamiltonian(
    problem: &ControlProblem,
    t: f64,
    x: &[f64],
    p: &[f64],
) -> Result<HamiltonianValue> {
    check_dim(problem.n_modes(), x.len())?;
    check_dim(problem.n_modes(), p.len())?;
    if problem.has_closed_form_hamiltonian() {
        let r = problem.radius;
        let np = norm(p);
        let (value, argmin) = if np <= r {
            (-0.5 * np * np, p.iter().map(|v| -v).collect::<Vec<_>>())
        } else {
            (
                0.5 * r * r - r * np,
                p.iter().map(|v| -r * v / np).collect(),
            )
        };
        if !value.is_finite() {
            return Err(Error::NonFiniteCost);
        }
        return Ok(HamiltonianValue {
            value,
            argmin: argmin.into(),
            ambiguous: false,
        });
    }
    projected_descent(problem, t, x, p)
}

fn projected_descent(
    problem: &ControlProblem,
    t: f64,
    x: &[f64],
    p: &[f64],
) -> Result<HamiltonianValue> {
    let n = problem.n_modes();
    let r = problem.radius;
    let objective = |a: &[f64]| cv_unchecked(problem, t, x, p, a);
    let mut rng = SeedSpec::new(problem.search_seed, 0, StreamPurpose::Auxiliary(3)).rng(0);
    let fd_step = 1e-6 * (1.0 + r);
    let mut finals: Vec<(f64, Vec<f64>)> = Vec::with_capacity(DESCENT_STARTS);
    for start in 0..DESCENT_STARTS {
        let mut a = if start == 0 {
            vec![0.0; n]
        } else {
            uniform_in_ball(&mut rng, n, r)
        };
        let mut fa = objective(&a);
        if !fa.is_finite() {
            return Err(Error::NonFiniteCost);
        }
        let mut step = 1.0;
        for _ in 0..DESCENT_ITERATIONS {
            let grad: Vec<f64> = (0..n)
                .map(|k| {
                    let mut up = a.clone();
                    let mut dn = a.clone();
                    up[k] += fd_step;
                    dn[k] -= fd_step;
                    (objective(&up) - objective(&dn)) / (2.0 * fd_step)
                })
                .collect();
            let mut improved = false;
            while step > 1e-14 {
                let mut cand: Vec<f64> = a.iter().zip(&grad).map(|(a, g)| a - step * g).collect();
                project_ball(&mut cand, r);
                let fc = objective(&cand);
                if !fc.is_finite() {
                    return Err(Error::NonFiniteCost);
                }
                if fc < fa {
                    let gain = fa - fc;
                    a = cand;
                    fa = fc;
                    step *= 1.5;
                    improved = gain > DESCENT_TOL;
                    break;
                }
                step *= 0.5;
            }
            if !improved {
                break;
            }
        }
        finals.push((fa, a));
    }
    let best = finals.iter().map(|f| f.0).fold(f64::INFINITY, f64::min);
    let mut near: Vec<Vec<f64>> = finals
        .into_iter()
        .filter(|(v, _)| *v <= best + 1e-8 * (1.0 + best.abs()))
        .map(|(_, a)| a)
        .collect();
    near.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let ambiguous = near
        .iter()
        .any(|a| norm(&sub(a, &near[0])) > 1e-4 * (1.0 + r));
    Ok(HamiltonianValue {
        value: best,
        argmin: near.swap_remove(0).into(),
        ambiguous,
    })
}

/// Where a value candidate comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    ClosedForm,
    /// `n`-th member of an approximating sequence.
    SequenceMember(usize),
    /// Supplied without a sequence: the decomposition along controlled
    /// paths is taken on trust.
    Assumed,
}

impl Provenance {
    pub fn decomposition_status(&self) -> &'static str {
        match self {
            Provenance::ClosedForm => "closed-form",
            Provenance::SequenceMember(_) => "verified-by-sequence",
            Provenance::Assumed => "assumed",
        }
    }
}

/// A candidate solution of the HJB equation with analytic derivatives.
#[derive(Clone)]
pub struct ValueCandidate {
    pub v: ScalarField,
    pub grad: VectorField,
    /// `∂_t v`; central differences are used when absent.
    pub time_derivative: Option<ScalarField>,
    pub hess: Option<Arc<dyn Fn(f64, &[f64]) -> TensorElement + Send + Sync>>,
    /// `v` is affine in `x`, so the second-order term vanishes.
    pub affine: bool,
    pub provenance: Provenance,
}

/// Step of the central difference used for `∂_t v` when no derivative is supplied.
pub const TIME_FD_STEP: f64 = 1e-5;

impl ValueCandidate {
    pub fn value(&self, t: f64, x: &[f64]) -> f64 {
        (self.v)(t, x)
    }

    pub fn gradient(&self, t: f64, x: &[f64]) -> HVector {
        (self.grad)(t, x)
    }

    pub fn dt(&self, t: f64, x: &[f64]) -> f64 {
        match &self.time_derivative {
            Some(d) => d(t, x),
            None => {
                ((self.v)(t + TIME_FD_STEP, x) - (self.v)(t - TIME_FD_STEP, x))
                    / (2.0 * TIME_FD_STEP)
            }
        }
    }

    /// Graph norm of `∂_x v(t, x)`, recorded since the gradient must lie in the generator's domain.
    pub fn grad_graph_norm(&self, space: &TruncatedSpace, t: f64, x: &[f64]) -> Result<f64> {
        space.graph_norm(&self.gradient(t, x))
    }

    /// Largest relative mismatch between directional finite differences of
    /// `v` and `⟨∂_x v, d⟩` over random probes.
    pub fn gradient_mismatch(
        &self,
        space: &TruncatedSpace,
        t_range: (f64, f64),
        probes: usize,
        seed: u64,
    ) -> f64 {
        let n = space.n_modes();
        let mut rng = SeedSpec::new(seed, 0, StreamPurpose::Auxiliary(6)).rng(0);
        let step = 1e-6;
        let mut worst: f64 = 0.0;
        for _ in 0..probes {
            let t = t_range.0 + (t_range.1 - t_range.0) * rng.random::<f64>();
            let x = gaussian(&mut rng, n, 1.0);
            let d = gaussian(&mut rng, n, 1.0);
            let xp: Vec<f64> = x.iter().zip(&d).map(|(x, d)| x + step * d).collect();
            let xm: Vec<f64> = x.iter().zip(&d).map(|(x, d)| x - step * d).collect();
            let fd = (self.value(t, &xp) - self.value(t, &xm)) / (2.0 * step);
            let exact = dot(&self.gradient(t, &x), &d);
            worst = worst.max((fd - exact).abs() / exact.abs().max(1.0));
        }
        worst
    }
}

/// `∂_t v + ⟨A*∂_x v, x⟩ + ½ Tr[σQσ* ∂²_x v]` with `σ` row-major.
pub fn l0_apply(
    space: &TruncatedSpace,
    candidate: &ValueCandidate,
    t: f64,
    x: &[f64],
    sigma: &[f64],
) -> Result<f64> {
    space.check(x)?;
    let n = space.n_modes();
    check_dim(n * n, sigma.len())?;
    let grad = candidate.gradient(t, x);
    let generator = dot(&space.apply_generator(&grad)?, x);
    let trace = if candidate.affine {
        0.0
    } else {
        let hess = candidate.hess.as_ref().ok_or(Error::MissingHessian)?;
        0.5 * trace_pairing(&hess(t, x), &noise_covariance(space, sigma))?
    };
    Ok(candidate.dt(t, x) + generator + trace)
}

fn sigma_at(problem: &ControlProblem, t: f64, x: &[f64]) -> Vec<f64> {
    let n = problem.n_modes();
    let mut s = vec![0.0; n * n];
    problem.diffusion.eval(t, x, &mut s);
    s
}

/// `ℒ₀v + F(t, x, ∂_x v)`.
pub fn hjb_residual(
    problem: &ControlProblem,
    candidate: &ValueCandidate,
    t: f64,
    x: &[f64],
) -> Result<f64> {
    let l0 = l0_apply(&problem.space, candidate, t, x, &sigma_at(problem, t, x))?;
    let f = hamiltonian(problem, t, x, &candidate.gradient(t, x))?;
    Ok(l0 + f.value)
}

/// `v(T, x) − g(x)`.
pub fn terminal_residual(problem: &ControlProblem, candidate: &ValueCandidate, x: &[f64]) -> f64 {
    candidate.value(problem.t_end, x) - problem.terminal.eval(x)
}

/// Feedback `φ(t, x) ∈ Λ`.
#[derive(Clone)]
pub struct FeedbackPolicy {
    pub id: String,
    pub phi: Arc<dyn Fn(f64, &[f64]) -> Result<HVector> + Send + Sync>,
    /// Selection rule used when the argmin is not unique.
    pub tie_break: &'static str,
    /// The policy attains the Hamiltonian infimum at `∂_x v`.
    pub is_argmin: bool,
}

impl fmt::Debug for FeedbackPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FeedbackPolicy")
            .field("id", &self.id)
            .field("tie_break", &self.tie_break)
            .field("is_argmin", &self.is_argmin)
            .finish_non_exhaustive()
    }
}

pub const NO_TIE_BREAK: &str = "none";
pub const LEXICOGRAPHIC_TIE_BREAK: &str = "lexicographic-min";

impl FeedbackPolicy {
    pub fn new(
        id: impl Into<String>,
        phi: impl Fn(f64, &[f64]) -> Result<HVector> + Send + Sync + 'static,
    ) -> Self {
        Self {
            id: id.into(),
            phi: Arc::new(phi),
            tie_break: NO_TIE_BREAK,
            is_argmin: false,
        }
    }

    pub fn zero(n: usize) -> Self {
        Self::new("zero", move |_, _| Ok(HVector::zeros(n)))
    }

    pub fn constant(id: impl Into<String>, a: HVector) -> Self {
        Self::new(id, move |_, _| Ok(a.clone()))
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> Result<HVector> {
        (self.phi)(t, x)
    }
}

/// `φ(t, x)` = argmin of the Hamiltonian at `p = ∂_x v(t, x)`. Non-unique
/// minimizers are reported as [`Error::AmbiguousArgmin`].
pub fn argmin_feedback(problem: &ControlProblem, candidate: &ValueCandidate) -> FeedbackPolicy {
    let problem = problem.clone();
    let candidate = candidate.clone();
    let mut policy = FeedbackPolicy::new("argmin", move |t, x| {
        let h = hamiltonian(&problem, t, x, &candidate.gradient(t, x))?;
        if h.ambiguous {
            return Err(Error::AmbiguousArgmin { t });
        }
        Ok(h.argmin)
    });
    policy.tie_break = LEXICOGRAPHIC_TIE_BREAK;
    policy.is_argmin = true;
    policy
}

/// Reference problem `b = a`, `l = |a|²/2`, `g = ⟨·, h⟩`, `σ = I` with
/// `v(t, x) = ⟨x, e^{(T−t)A}h⟩ − ½ ∫_t^T |e^{(T−r)A}h|² dr`.
pub fn lq_reference(
    space: &TruncatedSpace,
    h: HVector,
    radius: f64,
    t_start: f64,
    t_end: f64,
    x0: HVector,
) -> Result<(ControlProblem, ValueCandidate, FeedbackPolicy)> {
    space.check(&h)?;
    if !space.is_dissipative() {
        return Err(Error::InvalidSpace(
            "reference problem needs λ_k ≤ 0".into(),
        ));
    }
    let h_norm = norm(&h);
    if radius < h_norm {
        return Err(Error::ReferenceOutOfScope { h_norm, radius });
    }
    let mut problem =
        ControlProblem::new(space.clone(), t_start, t_end, radius, x0)?.with_id("lq_reference");
    problem.terminal = TerminalCost::Linear(h.clone());
    let lambda: Arc<[f64]> = space.eigenvalues().into();
    let h: Arc<[f64]> = h.0.into();

    // e^{τλ_k} h_k
    let flow = {
        let (lambda, h) = (lambda.clone(), h.clone());
        move |t: f64| -> Vec<f64> {
            let tau = t_end - t;
            lambda
                .iter()
                .zip(h.iter())
                .map(|(l, h)| (l * tau).exp() * h)
                .collect()
        }
    };
    // ∫_0^τ e^{2λu} du per mode
    let energy = {
        let (lambda, h) = (lambda.clone(), h.clone());
        move |t: f64| -> f64 {
            let tau = t_end - t;
            lambda
                .iter()
                .zip(h.iter())
                .map(|(&l, &h)| {
                    let w = if l == 0.0 {
                        tau
                    } else {
                        (2.0 * l * tau).exp_m1() / (2.0 * l)
                    };
                    h * h * w
                })
                .sum()
        }
    };
    let v: ScalarField = {
        let (flow, energy) = (flow.clone(), energy.clone());
        Arc::new(move |t, x| dot(x, &flow(t)) - 0.5 * energy(t))
    };
    let grad: VectorField = {
        let flow = flow.clone();
        Arc::new(move |t, _| HVector::new(flow(t)))
    };
    let time_derivative: ScalarField = {
        let (flow, lambda) = (flow.clone(), lambda.clone());
        Arc::new(move |t, x| {
            let e = flow(t);
            let generator: f64 = x
                .iter()
                .zip(&e)
                .zip(lambda.iter())
                .map(|((x, e), l)| x * l * e)
                .sum();
            -generator + 0.5 * dot(&e, &e)
        })
    };
    let candidate = ValueCandidate {
        v,
        grad,
        time_derivative: Some(time_derivative),
        hess: None,
        affine: true,
        provenance: Provenance::ClosedForm,
    };
    let mut policy = FeedbackPolicy::new("lq_optimal", move |t, _| {
        Ok(HVector::new(flow(t).into_iter().map(|v| -v).collect()))
    });
    policy.is_argmin = true;
    Ok((problem, candidate, policy))
}

/// A controlled trajectory with its controls and cumulative running cost.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlledPath {
    pub mild: MildPath,
    /// `a(t_i) = φ(t_i, X(t_i))`
    pub controls: GridPath,
    /// `Σ_{i<j} l(t_i, X(t_i), a_i) dt`
    pub cost: GridPath,
}

pub fn simulate_controlled(
    problem: &ControlProblem,
    policy: &FeedbackPolicy,
    grid: &TimeGrid,
    noise: &GridPath,
) -> Result<ControlledPath> {
    problem.check_grid(grid)?;
    let n = problem.n_modes();
    let dt = grid.dt();
    let mut controls = GridPath::zeros(*grid, n);
    let mut cost = vec![0.0; grid.n_steps() + 1];
    let mild = simulate_driven(
        &problem.space,
        &problem.diffusion,
        &problem.x0,
        grid,
        noise,
        |i, t, x, out| {
            let a = policy.eval(t, x)?;
            problem.check_control(&a)?;
            problem.drift.eval(t, x, &a, out);
            controls.at_mut(i).copy_from_slice(&a);
            if i < grid.n_steps() {
                cost[i + 1] = cost[i] + problem.running.eval(t, x, &a) * dt;
            }
            Ok(())
        },
    )?;
    Ok(ControlledPath {
        mild,
        controls,
        cost: GridPath::scalar(*grid, cost)?,
    })
}

/// Monte Carlo estimate of `J(s, x; φ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CostEstimate {
    pub j_hat: f64,
    pub se: f64,
    pub n_paths: usize,
    /// Paths with non-finite cost, excluded from the estimate.
    pub n_excluded: usize,
    pub seed: u64,
}

fn path_noise(
    problem: &ControlProblem,
    grid: &TimeGrid,
    ensemble: &EnsembleSpec,
    path: u64,
) -> GridPath {
    sample_q_wiener(
        &problem.space,
        grid,
        ensemble.seed(path, StreamPurpose::QWiener),
    )
}

fn path_cost(problem: &ControlProblem, cp: &ControlledPath) -> f64 {
    cp.cost.last()[0] + problem.terminal.eval(cp.mild.x().last())
}

pub fn cost_mc(
    problem: &ControlProblem,
    policy: &FeedbackPolicy,
    grid: &TimeGrid,
    ensemble: &EnsembleSpec,
) -> Result<CostEstimate> {
    let samples = ensemble.map(|path| -> Result<Option<f64>> {
        let noise = path_noise(problem, grid, ensemble, path);
        match simulate_controlled(problem, policy, grid, &noise) {
            Ok(cp) => {
                let c = path_cost(problem, &cp);
                Ok(c.is_finite().then_some(c))
            }
            Err(Error::NonFinite { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    });
    let samples: Vec<Option<f64>> = samples.into_iter().collect::<Result<_>>()?;
    let finite: Vec<f64> = samples.iter().flatten().copied().collect();
    Ok(CostEstimate {
        j_hat: mean(&finite),
        se: standard_error(&finite),
        n_paths: finite.len(),
        n_excluded: samples.len() - finite.len(),
        seed: ensemble.master_seed,
    })
}

/// Outcome of the Monte Carlo verification identity for one policy.
#[derive(Clone, Debug, PartialEq)]
pub struct VerificationReport {
    pub problem_id: String,
    pub policy_id: String,
    pub v_sx: f64,
    pub cost: CostEstimate,
    /// `Ĵ − v(s, x)`
    pub gap1: f64,
    /// Monte Carlo mean of `Σ (F_CV − F) dt`
    pub gap2: f64,
    pub se_gap2: f64,
    pub combined_se: f64,
    /// Mean absolute discrete Dynkin remainder plus the HJB and terminal residuals along paths.
    pub bias_bound: f64,
    pub nonnegative: bool,
    pub gaps_agree: bool,
    /// Only meaningful for argmin policies: `gap₂ ≤ 3 SE`.
    pub optimal_small: Option<bool>,
    /// `v(s, x) ≤ Ĵ + 3 SE`
    pub lower_bound: bool,
}

impl VerificationReport {
    pub const CSV_HEADER: [&'static str; 8] = [
        "problem_id",
        "policy_id",
        "v_sx",
        "J_hat",
        "se",
        "gap1",
        "gap2",
        "verdict",
    ];

    pub fn passed(&self) -> bool {
        self.nonnegative
            && self.gaps_agree
            && self.lower_bound
            && self.optimal_small.unwrap_or(true)
    }

    pub fn verdict(&self) -> &'static str {
        if self.passed() {
            "PASS"
        } else {
            "FAIL"
        }
    }

    pub fn csv_row(&self) -> Vec<String> {
        vec![
            self.problem_id.clone(),
            self.policy_id.clone(),
            format!("{:.9e}", self.v_sx),
            format!("{:.9e}", self.cost.j_hat),
            format!("{:.9e}", self.cost.se),
            format!("{:.9e}", self.gap1),
            format!("{:.9e}", self.gap2),
            self.verdict().to_string(),
        ]
    }
}

struct PathVerification {
    cost: f64,
    gap2: f64,
    remainder: f64,
}

fn verify_path(
    problem: &ControlProblem,
    candidate: &ValueCandidate,
    cp: &ControlledPath,
) -> Result<PathVerification> {
    let grid = *cp.mild.grid();
    let dt = grid.dt();
    let x = cp.mild.x();
    let mut gap2 = 0.0;
    let mut rho = 0.0;
    let mut hjb = 0.0;
    for i in 0..grid.n_steps() {
        let t = grid.time(i);
        let xi = x.at(i);
        let p = candidate.gradient(t, xi);
        let a = cp.controls.at(i);
        let f_cv = cv_unchecked(problem, t, xi, &p, a);
        let f = hamiltonian(problem, t, xi, &p)?.value;
        gap2 += (f_cv - f) * dt;
        let l0 = l0_apply(&problem.space, candidate, t, xi, cp.mild.sigma_at(i))?;
        hjb += (l0 + f) * dt;
        let dv = candidate.value(grid.time(i + 1), x.at(i + 1)) - candidate.value(t, xi);
        let predicted =
            (l0 + dot(&p, cp.mild.drift().at(i))) * dt + dot(&p, cp.mild.sigma_dw().at(i));
        rho += dv - predicted;
    }
    let terminal = terminal_residual(problem, candidate, x.last());
    Ok(PathVerification {
        cost: path_cost(problem, cp),
        gap2,
        remainder: rho.abs() + hjb.abs() + terminal.abs(),
    })
}

pub fn verification_gap(
    problem: &ControlProblem,
    candidate: &ValueCandidate,
    policy: &FeedbackPolicy,
    grid: &TimeGrid,
    ensemble: &EnsembleSpec,
) -> Result<VerificationReport> {
    let per_path = ensemble.map(|path| -> Result<Option<PathVerification>> {
        let noise = path_noise(problem, grid, ensemble, path);
        match simulate_controlled(problem, policy, grid, &noise) {
            Ok(cp) => {
                let pv = verify_path(problem, candidate, &cp)?;
                Ok(pv.cost.is_finite().then_some(pv))
            }
            Err(Error::NonFinite { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    });
    let per_path: Vec<Option<PathVerification>> = per_path.into_iter().collect::<Result<_>>()?;
    let kept: Vec<&PathVerification> = per_path.iter().flatten().collect();
    let costs: Vec<f64> = kept.iter().map(|p| p.cost).collect();
    let gaps: Vec<f64> = kept.iter().map(|p| p.gap2).collect();
    let remainders: Vec<f64> = kept.iter().map(|p| p.remainder).collect();
    let cost = CostEstimate {
        j_hat: mean(&costs),
        se: standard_error(&costs),
        n_paths: kept.len(),
        n_excluded: per_path.len() - kept.len(),
        seed: ensemble.master_seed,
    };
    let v_sx = candidate.value(problem.t_start, &problem.x0);
    let gap1 = cost.j_hat - v_sx;
    let gap2 = mean(&gaps);
    let se_gap2 = standard_error(&gaps);
    let combined_se = cost.se.hypot(se_gap2);
    let bias_bound = mean(&remainders);
    // rounding floor for deterministic (zero-variance) gaps
    let floor = 1e-12 * (1.0 + v_sx.abs());
    Ok(VerificationReport {
        problem_id: problem.id.clone(),
        policy_id: policy.id.clone(),
        v_sx,
        gap1,
        gap2,
        se_gap2,
        combined_se,
        bias_bound,
        nonnegative: gap2 >= -3.0 * se_gap2 - floor,
        gaps_agree: (gap1 - gap2).abs() <= 3.0 * combined_se + bias_bound + floor,
        optimal_small: policy.is_argmin.then_some(gap2 <= 3.0 * se_gap2 + floor),
        lower_bound: v_sx <= cost.j_hat + 3.0 * cost.se + floor,
        cost,
    })
}

/// Largest `|σ⁺ b_g(t_i, X(t_i), a_i)|` along a controlled path, for problems with a split drift.
pub fn split_drift_bound(problem: &ControlProblem, cp: &ControlledPath) -> Option<f64> {
    let ControlDrift::Split { b_g, .. } = &problem.drift else {
        return None;
    };
    let n = problem.n_modes();
    let grid = *cp.mild.grid();
    let mut worst: f64 = 0.0;
    let mut bg = vec![0.0; n];
    for i in 0..grid.n_steps() {
        let t = grid.time(i);
        let x = cp.mild.x().at(i);
        b_g(t, x, cp.controls.at(i), &mut bg);
        let sigma = nalgebra::DMatrix::from_row_slice(n, n, cp.mild.sigma_at(i));
        let pinv = sigma.pseudo_inverse(1e-12).ok()?;
        let v = pinv * nalgebra::DVector::from_column_slice(&bg);
        worst = worst.max(v.norm());
    }
    Some(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn space(n: usize) -> TruncatedSpace {
        TruncatedSpace::dirichlet_laplacian(n).unwrap()
    }

    fn default_problem(n: usize, r: f64) -> ControlProblem {
        ControlProblem::new(space(n), 0.0, 1.0, r, HVector::zeros(n)).unwrap()
    }

    fn reference(n: usize) -> (ControlProblem, ValueCandidate, FeedbackPolicy) {
        let h = HVector::new((1..=n).map(|k| 0.8 / k as f64).collect());
        let x0 = HVector::new((1..=n).map(|k| 0.5 / k as f64).collect());
        lq_reference(&space(n), h, 2.0, 0.0, 1.0, x0).unwrap()
    }

    #[test]
    fn current_value_hamiltonian_examples() {
        let pr = default_problem(3, 2.0);
        let p = [0.3, -0.4, 0.5];
        assert_eq!(
            current_value_hamiltonian(&pr, 0.0, &[0.0; 3], &p, &[0.0; 3]).unwrap(),
            0.0
        );
        let a = [-0.3, 0.4, -0.5];
        let v = current_value_hamiltonian(&pr, 0.0, &[0.0; 3], &p, &a).unwrap();
        assert!((v + 0.5 * dot(&p, &p)).abs() < 1e-15);
        assert!(matches!(
            current_value_hamiltonian(&pr, 0.0, &[0.0; 3], &p, &[3.0, 0.0, 0.0]),
            Err(Error::ControlOutsideSet { .. })
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let p = gaussian(&mut rng, 3, 1.0);
            let a = uniform_in_ball(&mut rng, 3, 2.0);
            let direct = p[0] * a[0]
                + p[1] * a[1]
                + p[2] * a[2]
                + 0.5 * (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
            let v = current_value_hamiltonian(&pr, 0.3, &[1.0; 3], &p, &a).unwrap();
            assert!((v - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn closed_form_hamiltonian_branches() {
        let pr = default_problem(2, 1.0);
        let inside = hamiltonian(&pr, 0.0, &[0.0; 2], &[0.3, 0.4]).unwrap();
        assert!((inside.value + 0.125).abs() < 1e-15);
        assert_eq!(inside.argmin.0, vec![-0.3, -0.4]);
        let outside = hamiltonian(&pr, 0.0, &[0.0; 2], &[3.0, 4.0]).unwrap();
        assert!((outside.value - (0.5 - 5.0)).abs() < 1e-14);
        assert!((outside.argmin[0] + 0.6).abs() < 1e-15 && (outside.argmin[1] + 0.8).abs() < 1e-15);
        assert!(pr.contains(&outside.argmin));
        assert_eq!(
            hamiltonian(&pr, 0.0, &[0.0; 2], &[0.0; 2])
                .unwrap()
                .argmin
                .0,
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn infimum_bound_on_random_probes() {
        let pr = default_problem(4, 1.5);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..2000 {
            let p = gaussian(&mut rng, 4, 1.5);
            let x = gaussian(&mut rng, 4, 1.0);
            let f = hamiltonian(&pr, 0.5, &x, &p).unwrap().value;
            let a = uniform_in_ball(&mut rng, 4, 1.5);
            assert!(f <= current_value_hamiltonian(&pr, 0.5, &x, &p, &a).unwrap() + 1e-14);
        }
    }

    fn quartic_problem(n: usize) -> ControlProblem {
        let mut pr = default_problem(n, 1.0);
        pr.running = RunningCost::Custom(Arc::new(|_, _, a| {
            0.5 * dot(a, a) + 0.3 * a.iter().map(|v| v.powi(4)).sum::<f64>()
        }));
        pr
    }

    #[test]
    fn generic_descent_beats_random_search() {
        let pr = quartic_problem(3);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..5 {
            let p = gaussian(&mut rng, 3, 1.5);
            let h = hamiltonian(&pr, 0.0, &[0.0; 3], &p).unwrap();
            assert!(!h.ambiguous);
            let best_random = (0..10_000)
                .map(|_| cv_unchecked(&pr, 0.0, &[0.0; 3], &p, &uniform_in_ball(&mut rng, 3, 1.0)))
                .fold(f64::INFINITY, f64::min);
            assert!(
                h.value <= best_random + 1e-6,
                "{} vs {best_random}",
                h.value
            );
        }
    }

    #[test]
    fn generic_descent_agrees_with_closed_form() {
        let mut pr = default_problem(3, 1.0);
        pr.drift = ControlDrift::Custom(Arc::new(|_, _, a, out| out.copy_from_slice(a)));
        let closed = default_problem(3, 1.0);
        for p in [[0.2, -0.1, 0.3], [2.0, 1.0, -2.0]] {
            let g = hamiltonian(&pr, 0.0, &[0.0; 3], &p).unwrap();
            let c = hamiltonian(&closed, 0.0, &[0.0; 3], &p).unwrap();
            assert!((g.value - c.value).abs() < 1e-9);
            assert!(norm(&sub(&g.argmin, &c.argmin)) < 1e-4);
        }
    }

    #[test]
    fn argmin_is_invariant_under_joint_scaling() {
        let base = default_problem(3, 1.0);
        for c in [0.5, 3.0] {
            let mut scaled = default_problem(3, 1.0);
            scaled.drift = ControlDrift::Custom(Arc::new(move |_, _, a, out| {
                out.iter_mut().zip(a).for_each(|(o, a)| *o = c * a)
            }));
            scaled.running = RunningCost::Custom(Arc::new(move |_, _, a| 0.5 * c * dot(a, a)));
            for p in [[0.1, 0.2, -0.3], [1.0, -2.0, 0.5]] {
                let hs = hamiltonian(&scaled, 0.0, &[0.0; 3], &p).unwrap();
                let hb = hamiltonian(&base, 0.0, &[0.0; 3], &p).unwrap();
                assert!(norm(&sub(&hs.argmin, &hb.argmin)) < 1e-4);
            }
        }
    }

    #[test]
    fn flat_objective_is_flagged_ambiguous() {
        let mut pr = default_problem(2, 1.0);
        pr.running = RunningCost::Custom(Arc::new(|_, _, _| 0.0));
        let h = hamiltonian(&pr, 0.0, &[0.0; 2], &[0.0, 0.0]).unwrap();
        assert!(h.ambiguous);
        let candidate = ValueCandidate {
            v: Arc::new(|_, _| 0.0),
            grad: Arc::new(|_, _| HVector::zeros(2)),
            time_derivative: None,
            hess: None,
            affine: true,
            provenance: Provenance::ClosedForm,
        };
        let policy = argmin_feedback(&pr, &candidate);
        assert_eq!(
            policy.eval(0.2, &[0.0; 2]),
            Err(Error::AmbiguousArgmin { t: 0.2 })
        );
        let nonfinite = {
            let mut p = default_problem(2, 1.0);
            p.running = RunningCost::Custom(Arc::new(|_, _, _| f64::NAN));
            p
        };
        assert_eq!(
            hamiltonian(&nonfinite, 0.0, &[0.0; 2], &[1.0, 0.0]),
            Err(Error::NonFiniteCost)
        );
    }

    #[test]
    fn l0_examples() {
        let sp = space(3);
        let h = HVector::new(vec![1.0, -0.5, 0.25]);
        let hc = h.clone();
        let linear = ValueCandidate {
            v: Arc::new(move |_, x| dot(x, &hc)),
            grad: {
                let h = h.clone();
                Arc::new(move |_, _| h.clone())
            },
            time_derivative: None,
            hess: None,
            affine: true,
            provenance: Provenance::ClosedForm,
        };
        let x = [0.3, 0.2, -0.1];
        let sigma = Diffusion::identity(3);
        let mut s = vec![0.0; 9];
        sigma.eval(0.0, &x, &mut s);
        let got = l0_apply(&sp, &linear, 0.4, &x, &s).unwrap();
        let expect: f64 = (0..3).map(|k| sp.eigenvalues()[k] * h[k] * x[k]).sum();
        assert!((got - expect).abs() < 1e-9 * expect.abs().max(1.0));

        // quadratic v = ½ xᵀMx: trace term against an independent contraction
        let m = [2.0, 0.5, 0.0, 0.5, 1.0, -0.3, 0.0, -0.3, 3.0];
        let quad = ValueCandidate {
            v: Arc::new(move |_, x| {
                0.5 * (0..3)
                    .map(|j| (0..3).map(|k| x[j] * m[j * 3 + k] * x[k]).sum::<f64>())
                    .sum::<f64>()
            }),
            grad: Arc::new(move |_, x| {
                HVector::new(
                    (0..3)
                        .map(|j| (0..3).map(|k| m[j * 3 + k] * x[k]).sum())
                        .collect(),
                )
            }),
            time_derivative: Some(Arc::new(|_, _| 0.0)),
            hess: Some(Arc::new(move |_, _| {
                TensorElement::from_row_major(3, &m).unwrap()
            })),
            affine: false,
            provenance: Provenance::ClosedForm,
        };
        let sigma = [1.0, 0.2, 0.0, 0.0, 0.5, 0.0, 0.3, 0.0, 1.0];
        let q = sp.q_eigenvalues();
        let mut contraction = 0.0;
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    contraction += m[j * 3 + k] * sigma[j * 3 + l] * q[l] * sigma[k * 3 + l];
                }
            }
        }
        let grad = quad.gradient(0.0, &x);
        let generator: f64 = (0..3).map(|k| sp.eigenvalues()[k] * grad[k] * x[k]).sum();
        let got = l0_apply(&sp, &quad, 0.0, &x, &sigma).unwrap();
        assert!((got - (generator + 0.5 * contraction)).abs() < 1e-12 * (1.0 + got.abs()));
        let mut missing = quad.clone();
        missing.hess = None;
        assert_eq!(
            l0_apply(&sp, &missing, 0.0, &x, &sigma),
            Err(Error::MissingHessian)
        );
    }

    #[test]
    fn reference_solves_hjb() {
        let (pr, v, _) = reference(8);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let t = rng.random::<f64>();
            let x = gaussian(&mut rng, 8, 1.0);
            assert!(hjb_residual(&pr, &v, t, &x).unwrap().abs() <= 1e-9);
        }
        let x = gaussian(&mut rng, 8, 1.0);
        assert_eq!(terminal_residual(&pr, &v, &x), 0.0);
        assert!(v.gradient_mismatch(&pr.space, (0.0, 1.0), 50, 3) < 1e-6);
        assert!(v.grad_graph_norm(&pr.space, 0.5, &x).unwrap().is_finite());
    }

    #[test]
    fn perturbed_candidate_has_predicted_residual() {
        let (pr, v, _) = reference(4);
        let delta = 1e-3;
        let mut w = v.clone();
        let (vv, vg) = (v.v.clone(), v.grad.clone());
        w.v = Arc::new(move |t, x| vv(t, x) + delta * x[0]);
        w.grad = Arc::new(move |t, x| {
            let mut g = vg(t, x);
            g.0[0] += delta;
            g
        });
        let (t, x) = (0.3, [0.2, -0.1, 0.4, 0.0]);
        let p = v.gradient(t, &x);
        // ∂_t unchanged; generator picks up λ₁x₁δ; F = −½|p|² shifts by −p₁δ − δ²/2
        let predicted =
            pr.space.eigenvalues()[0] * x[0] * delta - p[0] * delta - 0.5 * delta * delta;
        let got = hjb_residual(&pr, &w, t, &x).unwrap();
        assert!(got.abs() > 1e-6);
        assert!((got - predicted).abs() < 1e-12, "{got} vs {predicted}");
    }

    #[test]
    fn flat_scalar_reference_is_classic_lq() {
        let sp = TruncatedSpace::new(vec![0.0], vec![1.0], "flat").unwrap();
        let (_, v, policy) =
            lq_reference(&sp, vec![0.7].into(), 1.0, 0.0, 2.0, vec![0.0].into()).unwrap();
        for (t, x) in [(0.0, 1.0), (1.5, -0.3), (2.0, 4.0)] {
            let expect = 0.7 * x - 0.49 * (2.0 - t) / 2.0;
            assert!((v.value(t, &[x]) - expect).abs() < 1e-14);
        }
        assert!((policy.eval(0.5, &[0.0]).unwrap()[0] + 0.7).abs() < 1e-15);
        assert!(matches!(
            lq_reference(&sp, vec![2.0].into(), 1.0, 0.0, 1.0, vec![0.0].into()),
            Err(Error::ReferenceOutOfScope { .. })
        ));
    }

    #[test]
    fn argmin_feedback_recovers_reference_policy() {
        let (pr, v, reference_policy) = reference(5);
        let policy = argmin_feedback(&pr, &v);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let t = rng.random::<f64>();
            let x = gaussian(&mut rng, 5, 1.0);
            let a = policy.eval(t, &x).unwrap();
            let b = reference_policy.eval(t, &x).unwrap();
            assert!(norm(&sub(&a, &b)) < 1e-15);
            assert!(pr.contains(&a));
        }
    }

    #[test]
    fn zero_policy_reduces_to_uncontrolled_path() {
        let (pr, _, _) = reference(3);
        let grid = pr.grid(128).unwrap();
        let noise = sample_q_wiener(
            &pr.space,
            &grid,
            SeedSpec::new(3, 0, StreamPurpose::QWiener),
        );
        let cp = simulate_controlled(&pr, &FeedbackPolicy::zero(3), &grid, &noise).unwrap();
        let model = crate::spde::SPDEModel::new(
            pr.space.clone(),
            crate::spde::Drift::Zero,
            Diffusion::identity(3),
            pr.x0.clone(),
        )
        .unwrap();
        let mild = crate::spde::simulate_mild(&model, &grid, &noise).unwrap();
        assert_eq!(cp.mild.x(), mild.x());
        assert!(cp.cost.data().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn deterministic_feedback_matches_controlled_ode() {
        // dx = (λx − κx) dt in one mode with |κx| inside the ball
        let sp = TruncatedSpace::new(vec![-1.0], vec![1.0], "one").unwrap();
        let mut pr = ControlProblem::new(sp, 0.0, 1.0, 10.0, vec![1.0].into()).unwrap();
        pr.diffusion = Diffusion::zero(1);
        let kappa = 0.5;
        let policy =
            FeedbackPolicy::new("linear", move |_, x| Ok(HVector::new(vec![-kappa * x[0]])));
        let exact = (-1.5f64).exp();
        let err = |m: usize| {
            let grid = pr.grid(m).unwrap();
            let cp = simulate_controlled(&pr, &policy, &grid, &GridPath::zeros(grid, 1)).unwrap();
            assert!(cp.cost.data().windows(2).all(|w| w[1] >= w[0]));
            (cp.mild.x().last()[0] - exact).abs()
        };
        let ratio = err(512) / err(256);
        assert!((0.45..0.55).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn policy_outside_ball_is_rejected() {
        let pr = default_problem(2, 1.0);
        let grid = pr.grid(8).unwrap();
        let bad = FeedbackPolicy::constant("bad", vec![2.0, 0.0].into());
        assert!(matches!(
            simulate_controlled(&pr, &bad, &grid, &GridPath::zeros(grid, 2)),
            Err(Error::ControlOutsideSet { .. })
        ));
    }

    #[test]
    fn zero_cost_problem_has_zero_estimate() {
        let mut pr = default_problem(3, 1.0);
        pr.running = RunningCost::Custom(Arc::new(|_, _, _| 0.0));
        let grid = pr.grid(32).unwrap();
        let est = cost_mc(
            &pr,
            &FeedbackPolicy::zero(3),
            &grid,
            &EnsembleSpec::new(20, 1),
        )
        .unwrap();
        assert_eq!(est.j_hat, 0.0);
        assert_eq!(est.se, 0.0);
        assert_eq!(est.n_excluded, 0);
    }

    #[test]
    fn optimal_policy_closes_both_gaps() {
        let (pr, v, policy) = reference(4);
        let grid = pr.grid(256).unwrap();
        let report = verification_gap(&pr, &v, &policy, &grid, &EnsembleSpec::new(400, 2)).unwrap();
        assert!(report.passed(), "{report:?}");
        assert!(report.gap2.abs() < 1e-12);
        assert!(report.gap1.abs() <= 3.0 * report.combined_se + report.bias_bound);
    }

    #[test]
    fn zero_policy_gap_is_the_control_energy() {
        let (pr, v, _) = reference(4);
        let grid = pr.grid(256).unwrap();
        let report = verification_gap(
            &pr,
            &v,
            &FeedbackPolicy::zero(4),
            &grid,
            &EnsembleSpec::new(200, 3),
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
        let dt = grid.dt();
        let left_sum: f64 = (0..256)
            .map(|i| 0.5 * v.gradient(grid.time(i), &[0.0; 4]).norm().powi(2) * dt)
            .sum();
        assert!((report.gap2 - left_sum).abs() < 1e-12);
        // the continuous control energy
        let energy = v.value(1.0, &[0.0; 4]) - v.value(0.0, &[0.0; 4]);
        assert!((report.gap2 - energy).abs() < 5.0 * dt);
    }

    #[test]
    fn approximating_sequence_members_solve_their_hjb() {
        let sp = space(4);
        let h = HVector::new(vec![0.6, -0.3, 0.2, 0.1]);
        let x0 = HVector::new(vec![0.2, 0.0, 0.1, 0.0]);
        let (pr, v, policy) = lq_reference(&sp, h.clone(), 1.0, 0.0, 1.0, x0.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let probes: Vec<(f64, Vec<f64>)> = (0..20)
            .map(|_| (rng.random::<f64>(), gaussian(&mut rng, 4, 1.0)))
            .collect();
        let mut prev_gap = f64::INFINITY;
        for n in [2usize, 4, 8, 16, 32] {
            let hn = h.scaled(1.0 - 1.0 / n as f64);
            let (prn, vn, _) = lq_reference(&sp, hn, 1.0, 0.0, 1.0, x0.clone()).unwrap();
            let mut sup_gap: f64 = 0.0;
            for (t, x) in &probes {
                assert!(hjb_residual(&prn, &vn, *t, x).unwrap().abs() <= 1e-9);
                sup_gap = sup_gap.max((vn.value(*t, x) - v.value(*t, x)).abs());
            }
            assert!(sup_gap < prev_gap);
            prev_gap = sup_gap;
        }
        let grid = pr.grid(128).unwrap();
        let report = verification_gap(&pr, &v, &policy, &grid, &EnsembleSpec::new(100, 4)).unwrap();
        assert!(report.passed());
    }

    #[test]
    fn split_drift_is_reported() {
        let mut pr = default_problem(2, 1.0);
        pr.drift = ControlDrift::Split {
            b_g: Arc::new(|_, _, a, out| out.copy_from_slice(a)),
            b_i: Arc::new(|_, x, _, out| out.iter_mut().zip(x).for_each(|(o, x)| *o = -0.1 * x)),
        };
        let grid = pr.grid(16).unwrap();
        let noise = sample_q_wiener(
            &pr.space,
            &grid,
            SeedSpec::new(1, 0, StreamPurpose::QWiener),
        );
        let policy = FeedbackPolicy::constant("c", vec![0.6, 0.0].into());
        let cp = simulate_controlled(&pr, &policy, &grid, &noise).unwrap();
        assert!((split_drift_bound(&pr, &cp).unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(split_drift_bound(&default_problem(2, 1.0), &cp), None);
    }

    #[test]
    fn hypothesis_spot_checks() {
        let pr = default_problem(3, 2.0);
        let r = pr.check_hypotheses(200, 1).unwrap();
        assert!(r.growth_ratio <= 2.0);
        assert_eq!(r.lipschitz_ratio, 0.0);
    }

    #[test]
    fn provenance_labels_decomposition_status() {
        assert_eq!(Provenance::ClosedForm.decomposition_status(), "closed-form");
        assert_eq!(
            Provenance::SequenceMember(3).decomposition_status(),
            "verified-by-sequence"
        );
        assert_eq!(Provenance::Assumed.decomposition_status(), "assumed");
    }
}
