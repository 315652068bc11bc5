//! Mild solutions of `dX = (AX + b(t, X)) dt + σ(t, X) dW_Q` on a truncated
//! space, the Y-process, the Itô formula checker and the weak-Dirichlet
//! decomposition.
//!
//! The time stepper is exponential Euler in the form
//!
//! ```text
//! X(t_{i+1}) = e^{dt·A} X(t_i) + b(t_i, X(t_i))·dt + σ(t_i, X(t_i))·ΔW_i
//! ```
//!
//! so `Y(t_{i+1}) − Y(t_i) = (e^{dt·A} − I) X(t_i)` holds exactly.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::ensemble::EnsembleSpec;
use crate::error::{check_dim, Error, Result};
use crate::noise::{sample_q_wiener, sample_real_bm, GridPath, SeedSpec, StreamPurpose, TimeGrid};
use crate::regularization::{
    h1_diagnostic, ladder_study_with, real_covariation, ConvergenceReport, EpsilonLadder,
    VerdictRule,
};
use crate::spaces::{dot, norm, trace_pairing, HVector, TensorElement, TruncatedSpace};

/// `(t, x, out)` callback filling a vector or a row-major matrix.
pub type Field = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;

#[derive(Clone)]
pub enum Drift {
    Zero,
    /// `b(t, x) = c·x`
    Linear(f64),
    Field(Field),
}

impl Drift {
    pub fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) {
        match self {
            Drift::Zero => out.fill(0.0),
            Drift::Linear(c) => out.iter_mut().zip(x).for_each(|(o, x)| *o = c * x),
            Drift::Field(f) => f(t, x, out),
        }
    }
}

impl fmt::Debug for Drift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Drift::Zero => write!(f, "Zero"),
            Drift::Linear(c) => write!(f, "Linear({c})"),
            Drift::Field(_) => write!(f, "Field(..)"),
        }
    }
}

/// Diffusion operator acting on increments of `W_Q`, as an `N × N` row-major matrix.
#[derive(Clone)]
pub enum Diffusion {
    Constant(Vec<f64>),
    /// Deterministic diagonal `ψ(t)`.
    TimeDiagonal(Arc<dyn Fn(f64, &mut [f64]) + Send + Sync>),
    Field(Field),
}

impl Diffusion {
    pub fn identity(n: usize) -> Self {
        let mut m = vec![0.0; n * n];
        (0..n).for_each(|k| m[k * n + k] = 1.0);
        Diffusion::Constant(m)
    }

    pub fn zero(n: usize) -> Self {
        Diffusion::Constant(vec![0.0; n * n])
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Diffusion::Constant(_))
    }

    pub fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) {
        match self {
            Diffusion::Constant(m) => out.copy_from_slice(m),
            Diffusion::TimeDiagonal(f) => {
                let n = x.len();
                let mut d = vec![0.0; n];
                f(t, &mut d);
                out.fill(0.0);
                (0..n).for_each(|k| out[k * n + k] = d[k]);
            }
            Diffusion::Field(f) => f(t, x, out),
        }
    }
}

impl fmt::Debug for Diffusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diffusion::Constant(m) => write!(f, "Constant({m:?})"),
            Diffusion::TimeDiagonal(_) => write!(f, "TimeDiagonal(..)"),
            Diffusion::Field(_) => write!(f, "Field(..)"),
        }
    }
}

pub(crate) fn mat_vec(m: &[f64], v: &[f64], out: &mut [f64]) {
    let n = v.len();
    for (r, o) in out.iter_mut().enumerate() {
        *o = dot(&m[r * n..(r + 1) * n], v);
    }
}

/// `σ Q σ*` for a row-major `σ`.
pub(crate) fn noise_covariance(space: &TruncatedSpace, sigma: &[f64]) -> TensorElement {
    let n = space.n_modes();
    let q = space.q_eigenvalues();
    let mut c = vec![0.0; n * n];
    for j in 0..n {
        for k in 0..n {
            c[j * n + k] = (0..n)
                .map(|l| sigma[j * n + l] * q[l] * sigma[k * n + l])
                .sum();
        }
    }
    TensorElement::from_row_major(n, &c).expect("square")
}

#[derive(Clone, Debug)]
pub struct SPDEModel {
    pub space: TruncatedSpace,
    pub drift: Drift,
    pub diffusion: Diffusion,
    pub x0: HVector,
}

impl SPDEModel {
    pub fn new(
        space: TruncatedSpace,
        drift: Drift,
        diffusion: Diffusion,
        x0: HVector,
    ) -> Result<Self> {
        let n = space.n_modes();
        space.check(&x0)?;
        if let Diffusion::Constant(m) = &diffusion {
            check_dim(n * n, m.len())?;
        }
        Ok(Self {
            space,
            drift,
            diffusion,
            x0,
        })
    }

    /// Stochastic heat equation with additive noise started at `x_k = 1/k`.
    pub fn heat(space: TruncatedSpace) -> Self {
        let n = space.n_modes();
        let x0 = HVector::new((1..=n).map(|k| 1.0 / k as f64).collect());
        Self::new(space, Drift::Zero, Diffusion::identity(n), x0).expect("consistent dimensions")
    }

    pub fn n_modes(&self) -> usize {
        self.space.n_modes()
    }

    /// Largest observed ratio `|b(t,x) − b(t,y)| / |x − y|` (and the same for
    /// `σQ^{1/2}` in Hilbert–Schmidt norm) over random probes. Errors when it
    /// exceeds `constant`.
    pub fn check_lipschitz(&self, constant: f64, probes: usize, seed: u64) -> Result<f64> {
        let n = self.n_modes();
        let mut rng = SeedSpec::new(seed, 0, StreamPurpose::Auxiliary(1)).rng(0);
        let q = self.space.q_eigenvalues();
        let mut worst: f64 = 0.0;
        let (mut bx, mut by) = (vec![0.0; n], vec![0.0; n]);
        let (mut sx, mut sy) = (vec![0.0; n * n], vec![0.0; n * n]);
        for _ in 0..probes {
            let t: f64 = rng.random();
            let x: Vec<f64> = (0..n)
                .map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let y: Vec<f64> = (0..n)
                .map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let d = norm(&x.iter().zip(&y).map(|(a, b)| a - b).collect::<Vec<_>>());
            if d == 0.0 {
                continue;
            }
            self.drift.eval(t, &x, &mut bx);
            self.drift.eval(t, &y, &mut by);
            let db = norm(&bx.iter().zip(&by).map(|(a, b)| a - b).collect::<Vec<_>>());
            self.diffusion.eval(t, &x, &mut sx);
            self.diffusion.eval(t, &y, &mut sy);
            let ds = (0..n * n)
                .map(|i| (sx[i] - sy[i]).powi(2) * q[i % n])
                .sum::<f64>()
                .sqrt();
            worst = worst.max(db / d).max(ds / d);
        }
        if worst > constant {
            return Err(Error::LipschitzViolation {
                ratio: worst,
                constant,
            });
        }
        Ok(worst)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum SigmaRecord {
    Constant(Vec<f64>),
    PerStep(Vec<f64>),
}

/// A simulated trajectory with the coefficients seen along it.
#[derive(Clone, Debug, PartialEq)]
pub struct MildPath {
    x: GridPath,
    noise: GridPath,
    drift: GridPath,
    sigma_dw: GridPath,
    sigma: SigmaRecord,
}

impl MildPath {
    pub fn x(&self) -> &GridPath {
        &self.x
    }

    pub fn noise(&self) -> &GridPath {
        &self.noise
    }

    /// `b(t_i, X(t_i))`.
    pub fn drift(&self) -> &GridPath {
        &self.drift
    }

    /// `σ(t_i, X(t_i))·ΔW_i`; the final row is zero.
    pub fn sigma_dw(&self) -> &GridPath {
        &self.sigma_dw
    }

    /// Row-major `σ(t_i, X(t_i))`.
    pub fn sigma_at(&self, i: usize) -> &[f64] {
        match &self.sigma {
            SigmaRecord::Constant(m) => m,
            SigmaRecord::PerStep(all) => {
                let b = self.x.dim() * self.x.dim();
                &all[i * b..(i + 1) * b]
            }
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        self.x.grid()
    }

    pub fn x0(&self) -> &[f64] {
        self.x.at(0)
    }
}

pub fn simulate_mild(model: &SPDEModel, grid: &TimeGrid, noise: &GridPath) -> Result<MildPath> {
    simulate_driven(
        &model.space,
        &model.diffusion,
        &model.x0,
        grid,
        noise,
        |_, t, x, out| {
            model.drift.eval(t, x, out);
            Ok(())
        },
    )
}

/// Exponential-Euler loop with the drift supplied per step by `drift(i, t_i, X(t_i), out)`.
pub(crate) fn simulate_driven<D>(
    space: &TruncatedSpace,
    diffusion: &Diffusion,
    x0: &[f64],
    grid: &TimeGrid,
    noise: &GridPath,
    mut drift_at: D,
) -> Result<MildPath>
where
    D: FnMut(usize, f64, &[f64], &mut [f64]) -> Result<()>,
{
    if noise.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let n = space.n_modes();
    check_dim(n, noise.dim())?;
    check_dim(n, x0.len())?;
    let m = grid.n_steps();
    let dt = grid.dt();
    let factors = space.semigroup_factors(dt)?;
    let mut x = GridPath::zeros(*grid, n);
    let mut drift = GridPath::zeros(*grid, n);
    let mut sigma_dw = GridPath::zeros(*grid, n);
    let constant = diffusion.is_constant();
    let mut sigma_all = if constant {
        Vec::new()
    } else {
        vec![0.0; (m + 1) * n * n]
    };
    let mut sigma = vec![0.0; n * n];
    let mut dw = vec![0.0; n];
    let mut xi = vec![0.0; n];
    x.at_mut(0).copy_from_slice(x0);
    for i in 0..=m {
        let t = grid.time(i);
        xi.copy_from_slice(x.at(i));
        drift_at(i, t, &xi, drift.at_mut(i))?;
        diffusion.eval(t, &xi, &mut sigma);
        if !constant {
            sigma_all[i * n * n..(i + 1) * n * n].copy_from_slice(&sigma);
        }
        if i == m {
            break;
        }
        for k in 0..n {
            dw[k] = noise.at(i + 1)[k] - noise.at(i)[k];
        }
        mat_vec(&sigma, &dw, sigma_dw.at_mut(i));
        let (b, sdw) = (drift.at(i), sigma_dw.at(i));
        let next: Vec<f64> = (0..n)
            .map(|k| factors[k] * xi[k] + b[k] * dt + sdw[k])
            .collect();
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                step: i + 1,
                t: grid.time(i + 1),
            });
        }
        x.at_mut(i + 1).copy_from_slice(&next);
    }
    let sigma = if constant {
        SigmaRecord::Constant(sigma)
    } else {
        SigmaRecord::PerStep(sigma_all)
    };
    Ok(MildPath {
        x,
        noise: noise.clone(),
        drift,
        sigma_dw,
        sigma,
    })
}

/// `Y(t) = X(t) − ∫ b dr − ∫ σ dW_Q − x` with left-point sums.
pub fn y_process(mild: &MildPath) -> GridPath {
    let grid = *mild.grid();
    let n = mild.x.dim();
    let dt = grid.dt();
    let x0 = mild.x0().to_vec();
    let mut acc = vec![0.0; n];
    let mut y = GridPath::zeros(grid, n);
    for j in 0..=grid.n_steps() {
        let xj = mild.x.at(j);
        let row = y.at_mut(j);
        for k in 0..n {
            row[k] = xj[k] - acc[k] - x0[k];
        }
        if j < grid.n_steps() {
            for k in 0..n {
                acc[k] += mild.drift.at(j)[k] * dt + mild.sigma_dw.at(j)[k];
            }
        }
    }
    y
}

/// `⟨Y(t), z⟩ − Σ ⟨X(t_i), A*z⟩ dt`.
pub fn ondrejat_residual(
    space: &TruncatedSpace,
    mild: &MildPath,
    y: &GridPath,
    z: &[f64],
) -> Result<GridPath> {
    space.check(z)?;
    mild.x.same_grid(y)?;
    let az = space.apply_generator(z)?;
    let grid = *mild.grid();
    let dt = grid.dt();
    let mut acc = 0.0;
    let mut values = Vec::with_capacity(grid.n_steps() + 1);
    for j in 0..=grid.n_steps() {
        values.push(dot(y.at(j), z) - acc);
        acc += dot(mild.x.at(j), &az) * dt;
    }
    GridPath::scalar(grid, values)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CertificateRow {
    pub epsilon: f64,
    pub a_eps: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Pathwise check of `A(ε) ≤ ε·(T − s)·sup_t |X(t)|²` for the Y-process.
#[derive(Clone, Debug, PartialEq)]
pub struct Certificate {
    pub rows: Vec<CertificateRow>,
    pub sup_x_sq: f64,
}

impl Certificate {
    pub fn holds(&self) -> bool {
        self.rows.iter().all(|r| r.holds)
    }
}

pub fn zero_chi_qv_certificate(
    space: &TruncatedSpace,
    mild: &MildPath,
    ladder: &EpsilonLadder,
) -> Result<Certificate> {
    let y = y_process(mild);
    let sup = mild.x.sup_norm();
    let horizon = mild.grid().horizon();
    let rows = ladder
        .epsilons()
        .into_iter()
        .map(|eps| {
            let a = h1_diagnostic(space, &y, &y, eps)?;
            let bound = eps * horizon * sup * sup;
            Ok(CertificateRow {
                epsilon: eps,
                a_eps: a,
                bound,
                holds: a <= bound * (1.0 + 1e-12),
            })
        })
        .collect::<Result<_>>()?;
    Ok(Certificate {
        rows,
        sup_x_sq: sup * sup,
    })
}

/// Outer function `g` in `f(t, x) = e^{κt} g(⟨x, h⟩)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TestKind {
    Constant,
    Linear,
    Quadratic,
    Sin,
}

impl FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "constant" => Ok(TestKind::Constant),
            "linear" => Ok(TestKind::Linear),
            "quadratic" => Ok(TestKind::Quadratic),
            "sin" => Ok(TestKind::Sin),
            other => Err(Error::UnknownTestFunction(other.to_string())),
        }
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TestKind::Constant => "constant",
            TestKind::Linear => "linear",
            TestKind::Quadratic => "quadratic",
            TestKind::Sin => "sin",
        };
        f.write_str(s)
    }
}

/// Closed-form catalog function `f(t, x) = e^{κt} g(⟨x, h⟩)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TestFunction {
    pub kind: TestKind,
    pub h: HVector,
    pub kappa: f64,
}

impl TestFunction {
    pub fn new(kind: TestKind, h: HVector) -> Self {
        Self {
            kind,
            h,
            kappa: 0.0,
        }
    }

    pub fn time_scaled(self, kappa: f64) -> Self {
        Self { kappa, ..self }
    }

    /// `name` is one of `constant`, `linear`, `quadratic`, `sin`.
    pub fn parse(name: &str, h: HVector) -> Result<Self> {
        Ok(Self::new(name.parse()?, h))
    }

    fn outer(&self, u: f64) -> [f64; 3] {
        match self.kind {
            TestKind::Constant => [1.0, 0.0, 0.0],
            TestKind::Linear => [u, 1.0, 0.0],
            TestKind::Quadratic => [u * u, 2.0 * u, 2.0],
            TestKind::Sin => [u.sin(), u.cos(), -u.sin()],
        }
    }

    fn rho(&self, t: f64) -> f64 {
        (self.kappa * t).exp()
    }

    pub fn value(&self, t: f64, x: &[f64]) -> f64 {
        self.rho(t) * self.outer(dot(x, &self.h))[0]
    }

    pub fn time_derivative(&self, t: f64, x: &[f64]) -> f64 {
        self.kappa * self.value(t, x)
    }

    pub fn grad(&self, t: f64, x: &[f64]) -> HVector {
        self.h.scaled(self.rho(t) * self.outer(dot(x, &self.h))[1])
    }

    /// Scalar `c` with `∂²f(t, x) = c·h ⊗ h`.
    pub fn hess_factor(&self, t: f64, x: &[f64]) -> f64 {
        self.rho(t) * self.outer(dot(x, &self.h))[2]
    }

    pub fn hess(&self, t: f64, x: &[f64]) -> TensorElement {
        let mut u = TensorElement::rank_one(&self.h, &self.h).expect("same dimension");
        u = TensorElement::from_matrix(u.into_matrix() * self.hess_factor(t, x)).expect("square");
        u
    }
}

/// Terms of the Itô formula for a mild process, integrated over the whole grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ItoTerms {
    /// `f(T, X(T)) − f(s, x)`
    pub lhs: f64,
    pub time: f64,
    pub generator: f64,
    pub drift: f64,
    pub trace: f64,
    pub noise: f64,
}

impl ItoTerms {
    pub fn rhs(&self) -> f64 {
        self.time + self.generator + self.drift + self.trace + self.noise
    }

    pub fn residual(&self) -> f64 {
        self.lhs - self.rhs()
    }
}

pub fn ito_terms(f: &TestFunction, model: &SPDEModel, mild: &MildPath) -> Result<ItoTerms> {
    let space = &model.space;
    space.check(&f.h)?;
    let grid = *mild.grid();
    let dt = grid.dt();
    let m = grid.n_steps();
    let ah = space.apply_generator(&f.h)?;
    let hh = TensorElement::rank_one(&f.h, &f.h)?;
    let constant_pairing = match &mild.sigma {
        SigmaRecord::Constant(s) => Some(trace_pairing(&hh, &noise_covariance(space, s))?),
        SigmaRecord::PerStep(_) => None,
    };
    let mut terms = ItoTerms {
        lhs: f.value(grid.t_end(), mild.x.last()) - f.value(grid.t_start(), mild.x0()),
        time: 0.0,
        generator: 0.0,
        drift: 0.0,
        trace: 0.0,
        noise: 0.0,
    };
    for i in 0..m {
        let t = grid.time(i);
        let x = mild.x.at(i);
        let g1 = f.rho(t) * f.outer(dot(x, &f.h))[1];
        terms.time += f.time_derivative(t, x) * dt;
        terms.generator += g1 * dot(x, &ah) * dt;
        terms.drift += g1 * dot(&f.h, mild.drift.at(i)) * dt;
        let pairing = match constant_pairing {
            Some(p) => p,
            None => trace_pairing(&hh, &noise_covariance(space, mild.sigma_at(i)))?,
        };
        terms.trace += 0.5 * f.hess_factor(t, x) * pairing * dt;
        terms.noise += g1 * dot(&f.h, mild.sigma_dw.at(i));
    }
    Ok(terms)
}

/// `LHS − RHS` of the Itô formula at `T`.
pub fn ito_residual(f: &TestFunction, model: &SPDEModel, mild: &MildPath) -> Result<f64> {
    Ok(ito_terms(f, model, mild)?.residual())
}

/// `R(t) = f(s, x) + Σ ⟨∂_x f(t_i, X(t_i)), σ_i ΔW_i⟩`.
pub fn martingale_part(f: &TestFunction, mild: &MildPath) -> Result<GridPath> {
    check_dim(mild.x.dim(), f.h.dim())?;
    let grid = *mild.grid();
    let mut acc = f.value(grid.t_start(), mild.x0());
    let mut values = Vec::with_capacity(grid.n_steps() + 1);
    for i in 0..=grid.n_steps() {
        values.push(acc);
        if i < grid.n_steps() {
            acc += dot(&f.grad(grid.time(i), mild.x.at(i)), mild.sigma_dw.at(i));
        }
    }
    GridPath::scalar(grid, values)
}

/// `A_f(t) = f(t, X(t)) − R(t)`.
pub fn dirichlet_remainder(f: &TestFunction, mild: &MildPath) -> Result<GridPath> {
    let r = martingale_part(f, mild)?;
    let grid = *mild.grid();
    let values = (0..=grid.n_steps())
        .map(|i| f.value(grid.time(i), mild.x.at(i)) - r.value(i))
        .collect();
    GridPath::scalar(grid, values)
}

/// Continuous martingales tested against `A_f`.
#[derive(Clone, Debug, PartialEq)]
pub enum TestMartingale {
    /// `⟨W_Q(t), e_j⟩`
    WienerMode(usize),
    /// `⟨g, ∫_s^t e^{(T−r)A} dW_Q(r)⟩`
    HorizonConvolution(HVector),
    /// Real Brownian motion independent of `W_Q`.
    IndependentBm,
}

impl TestMartingale {
    pub fn label(&self) -> String {
        match self {
            TestMartingale::WienerMode(j) => format!("wiener_mode_{}", j + 1),
            TestMartingale::HorizonConvolution(_) => "horizon_convolution".into(),
            TestMartingale::IndependentBm => "independent_bm".into(),
        }
    }

    /// Path of the martingale for one trajectory; `seed` drives the independent BM.
    pub fn path(
        &self,
        space: &TruncatedSpace,
        mild: &MildPath,
        seed: SeedSpec,
    ) -> Result<GridPath> {
        let w = mild.noise();
        match self {
            TestMartingale::WienerMode(j) => w.component(*j),
            TestMartingale::HorizonConvolution(g) => {
                space.check(g)?;
                let grid = *w.grid();
                let lambda = space.eigenvalues();
                let t_end = grid.t_end();
                let mut acc = 0.0;
                let mut values = Vec::with_capacity(grid.n_steps() + 1);
                for i in 0..=grid.n_steps() {
                    values.push(acc);
                    if i < grid.n_steps() {
                        let r = grid.time(i);
                        acc += (0..g.dim())
                            .map(|k| {
                                g[k] * (lambda[k] * (t_end - r)).exp()
                                    * (w.at(i + 1)[k] - w.at(i)[k])
                            })
                            .sum::<f64>();
                    }
                }
                GridPath::scalar(grid, values)
            }
            TestMartingale::IndependentBm => Ok(sample_real_bm(
                w.grid(),
                seed.with_purpose(StreamPurpose::Auxiliary(7)),
            )),
        }
    }
}

/// Ladder study of `[A_f, N]_ε(T)` over an ensemble of mild paths.
#[allow(clippy::too_many_arguments)]
pub fn orthogonality_check(
    model: &SPDEModel,
    f: &TestFunction,
    martingale: &TestMartingale,
    grid: &TimeGrid,
    ladder: &EpsilonLadder,
    ensemble: &EnsembleSpec,
    rule: &VerdictRule,
) -> Result<ConvergenceReport> {
    let label = format!("covariation[A_{}:{}]", f.kind, martingale.label());
    let dt = grid.dt();
    ladder_study_with(
        &label,
        grid,
        ladder,
        ensemble,
        &[grid.n_steps()],
        rule,
        |path, multiples| {
            let seed = ensemble.seed(path, StreamPurpose::QWiener);
            let w = sample_q_wiener(&model.space, grid, seed);
            let mild = simulate_mild(model, grid, &w)?;
            let a = dirichlet_remainder(f, &mild)?;
            let n = martingale.path(&model.space, &mild, seed)?;
            multiples
                .iter()
                .map(|&p| Ok(vec![real_covariation(&a, &n, p as f64 * dt)?.last()[0]]))
                .collect()
        },
    )
}

/// Default test direction for the Itô and Ondrejat checks.
pub fn first_mode(space: &TruncatedSpace) -> HVector {
    space.unit(0)
}

/// Closed form of `∫_s^t λ x e^{λ(r−s)} dr = x (e^{λ(t−s)} − 1)`.
pub fn deterministic_generator_integral(lambda: f64, x: f64, elapsed: f64) -> f64 {
    x * (lambda * elapsed).exp_m1()
}

/// Stable `(e^{λ dt} − 1 − λ dt)` used in quadrature-error bounds.
pub fn exp_remainder(z: f64) -> f64 {
    if z.abs() < 1e-3 {
        z * z / 2.0 + z * z * z / 6.0 + z.powi(4) / 24.0
    } else {
        z.exp_m1() - z
    }
}
