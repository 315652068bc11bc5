//! ε-regularized estimators on grid paths.
//!
//! Every estimator is a Riemann sum over the grid with `ε = p·dt`:
//!
//! ```text
//! I_ε(t_j) = Σ_{i<j} X(t_i) (Y(t_{i+p}) − Y(t_i)) / p
//! C_ε(t_j) = Σ_{i<j} (X(t_{i+p}) − X(t_i)) (Y(t_{i+p}) − Y(t_i)) / p
//! ```
//!
//! with `t_{i+p}` clamped to `T` (paths are extended by their final value),
//! so the boundary cells are kept rather than dropped.

use std::fmt;
use std::str::FromStr;

use crate::ensemble::{quantile, EnsembleSpec, Summary};
use crate::error::{check_dim, Error, Result};
use crate::noise::{GridPath, TimeGrid};
use crate::spaces::{dot, ChiFunctional, TensorElement, TruncatedSpace};

/// Number of grid steps `p` with `ε = p·dt`.
pub fn shift_steps(grid: &TimeGrid, eps: f64) -> Result<usize> {
    let dt = grid.dt();
    let p = (eps / dt).round();
    if !(p >= 1.0) || (eps - p * dt).abs() > 1e-9 * dt {
        return Err(Error::EpsilonNotOnGrid { eps, dt });
    }
    Ok(p as usize)
}

/// Strictly decreasing list of ε values, each a positive multiple of dt.
#[derive(Clone, Debug, PartialEq)]
pub struct EpsilonLadder {
    dt: f64,
    multiples: Vec<usize>,
}

impl EpsilonLadder {
    pub const DEFAULT_MULTIPLES: [usize; 6] = [32, 16, 8, 4, 2, 1];

    pub fn new(grid: &TimeGrid, multiples: Vec<usize>) -> Result<Self> {
        if multiples.is_empty() {
            return Err(Error::InvalidLadder("empty ladder".into()));
        }
        if multiples.contains(&0) {
            return Err(Error::InvalidLadder("ε must be at least dt".into()));
        }
        if multiples.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidLadder(
                "ε values must be strictly decreasing".into(),
            ));
        }
        if multiples[0] > grid.n_steps() {
            return Err(Error::InvalidLadder("largest ε exceeds the horizon".into()));
        }
        Ok(Self {
            dt: grid.dt(),
            multiples,
        })
    }

    pub fn default_for(grid: &TimeGrid) -> Result<Self> {
        Self::new(grid, Self::DEFAULT_MULTIPLES.to_vec())
    }

    pub fn multiples(&self) -> &[usize] {
        &self.multiples
    }

    pub fn epsilons(&self) -> Vec<f64> {
        self.multiples.iter().map(|&p| p as f64 * self.dt).collect()
    }

    pub fn len(&self) -> usize {
        self.multiples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.multiples.is_empty()
    }
}

/// Operator-valued path `X(t_i) ∈ L(U, H)` as `rows × cols` row-major blocks.
/// A covector path has `rows = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorPath {
    grid: TimeGrid,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl OperatorPath {
    pub fn from_fn(
        grid: TimeGrid,
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, f64, &mut [f64]),
    ) -> Self {
        let block = rows * cols;
        let mut data = vec![0.0; (grid.n_steps() + 1) * block];
        for i in 0..=grid.n_steps() {
            f(i, grid.time(i), &mut data[i * block..(i + 1) * block]);
        }
        Self {
            grid,
            rows,
            cols,
            data,
        }
    }

    pub fn constant(grid: TimeGrid, rows: usize, cols: usize, op: &[f64]) -> Result<Self> {
        check_dim(rows * cols, op.len())?;
        Ok(Self::from_fn(grid, rows, cols, |_, _, out| {
            out.copy_from_slice(op)
        }))
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, i: usize) -> &[f64] {
        let block = self.rows * self.cols;
        &self.data[i * block..(i + 1) * block]
    }

    fn apply_into(&self, i: usize, v: &[f64], out: &mut [f64], scale: f64) {
        let op = self.at(i);
        for (r, o) in out.iter_mut().enumerate() {
            *o += scale * dot(&op[r * self.cols..(r + 1) * self.cols], v);
        }
    }
}

fn check_pair(x: &GridPath, y: &GridPath) -> Result<()> {
    x.same_grid(y)
}

fn increment(path: &GridPath, i: usize, p: usize, out: &mut [f64]) {
    let a = path.at(i);
    let b = path.clamped(i + p);
    for ((o, a), b) in out.iter_mut().zip(a).zip(b) {
        *o = b - a;
    }
}

/// Forward integral `I_ε(t) = (1/ε) ∫ X(r)(Y(r+ε) − Y(r)) dr` on the grid.
pub fn forward_integral(x: &OperatorPath, y: &GridPath, eps: f64) -> Result<GridPath> {
    if x.grid != *y.grid() {
        return Err(Error::GridMismatch);
    }
    check_dim(x.cols, y.dim())?;
    let p = shift_steps(&x.grid, eps)?;
    let m = x.grid.n_steps();
    let mut out = GridPath::zeros(x.grid, x.rows);
    let mut acc = vec![0.0; x.rows];
    let mut dy = vec![0.0; y.dim()];
    let scale = 1.0 / p as f64;
    for i in 0..m {
        increment(y, i, p, &mut dy);
        x.apply_into(i, &dy, &mut acc, scale);
        out.at_mut(i + 1).copy_from_slice(&acc);
    }
    Ok(out)
}

/// Left-point Itô sum `Σ_{i<j} X(t_i)(Y(t_{i+1}) − Y(t_i))`.
pub fn ito_sum(x: &OperatorPath, y: &GridPath) -> Result<GridPath> {
    forward_integral(x, y, x.grid.dt())
}

/// Real covariation `C_ε(t)` of two scalar paths.
pub fn real_covariation(x: &GridPath, y: &GridPath, eps: f64) -> Result<GridPath> {
    check_pair(x, y)?;
    check_dim(1, x.dim())?;
    check_dim(1, y.dim())?;
    let grid = *x.grid();
    let p = shift_steps(&grid, eps)?;
    let m = grid.n_steps();
    let mut values = Vec::with_capacity(m + 1);
    let mut acc = 0.0;
    values.push(acc);
    for i in 0..m {
        let j = (i + p).min(m);
        acc += (x.value(j) - x.value(i)) * (y.value(j) - y.value(i)) / p as f64;
        values.push(acc);
    }
    GridPath::scalar(grid, values)
}

/// Scalar quadratic variation `(1/ε) Σ |X(t_i+ε) − X(t_i)|² dt`.
pub fn scalar_qv(x: &GridPath, eps: f64) -> Result<GridPath> {
    let grid = *x.grid();
    let p = shift_steps(&grid, eps)?;
    let m = grid.n_steps();
    let mut values = Vec::with_capacity(m + 1);
    let mut acc = 0.0;
    values.push(acc);
    for i in 0..m {
        let a = x.at(i);
        let b = x.clamped(i + p);
        acc += a.iter().zip(b).map(|(a, b)| (b - a) * (b - a)).sum::<f64>() / p as f64;
        values.push(acc);
    }
    GridPath::scalar(grid, values)
}

/// Path of `N × N` arrays.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorPath {
    grid: TimeGrid,
    n: usize,
    data: Vec<f64>,
}

impl TensorPath {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Row-major coefficients at index `i`.
    pub fn raw(&self, i: usize) -> &[f64] {
        let b = self.n * self.n;
        &self.data[i * b..(i + 1) * b]
    }

    pub fn at(&self, i: usize) -> TensorElement {
        TensorElement::from_row_major(self.n, self.raw(i)).expect("square block")
    }

    pub fn last(&self) -> TensorElement {
        self.at(self.grid.n_steps())
    }
}

/// Tensor covariation `(1/ε) Σ ΔX ⊗ ΔY dt`.
pub fn tensor_qv(x: &GridPath, y: &GridPath, eps: f64) -> Result<TensorPath> {
    check_pair(x, y)?;
    check_dim(x.dim(), y.dim())?;
    let grid = *x.grid();
    let n = x.dim();
    let p = shift_steps(&grid, eps)?;
    let m = grid.n_steps();
    let block = n * n;
    let mut data = vec![0.0; (m + 1) * block];
    let mut dx = vec![0.0; n];
    let mut dy = vec![0.0; n];
    let scale = 1.0 / p as f64;
    for i in 0..m {
        increment(x, i, p, &mut dx);
        increment(y, i, p, &mut dy);
        let (prev, next) = data.split_at_mut((i + 1) * block);
        let prev = &prev[i * block..];
        let next = &mut next[..block];
        for j in 0..n {
            for k in 0..n {
                next[j * n + k] = prev[j * n + k] + scale * dx[j] * dy[k];
            }
        }
    }
    Ok(TensorPath { grid, n, data })
}

/// χ-covariation `(1/ε) Σ Σ_i ⟨a*_i, ΔX⟩⟨b*_i, ΔY⟩ dt` against `φ`.
pub fn chi_covariation(
    space: &TruncatedSpace,
    x: &GridPath,
    y: &GridPath,
    phi: &ChiFunctional,
    eps: f64,
) -> Result<GridPath> {
    check_pair(x, y)?;
    space.check(x.at(0))?;
    space.check(y.at(0))?;
    for (a, b) in phi.terms() {
        space.check(a)?;
        space.check(b)?;
    }
    let grid = *x.grid();
    let p = shift_steps(&grid, eps)?;
    let m = grid.n_steps();
    let n = space.n_modes();
    let mut dx = vec![0.0; n];
    let mut dy = vec![0.0; n];
    let mut values = Vec::with_capacity(m + 1);
    let mut acc = 0.0;
    values.push(acc);
    for i in 0..m {
        increment(x, i, p, &mut dx);
        increment(y, i, p, &mut dy);
        acc += phi.eval_pair(&dx, &dy) / p as f64;
        values.push(acc);
    }
    GridPath::scalar(grid, values)
}

/// `A(ε) = (1/ε) ∫ |J(ΔX ⊗ ΔY)|_{χ̄*} dr` using the rank-one dual norm.
///
/// Boundedness along a finite ladder is only a surrogate for the condition
/// over all sequences `ε_n → 0`: it can falsify it, never establish it.
pub fn h1_diagnostic(space: &TruncatedSpace, x: &GridPath, y: &GridPath, eps: f64) -> Result<f64> {
    check_pair(x, y)?;
    space.check(x.at(0))?;
    space.check(y.at(0))?;
    let grid = *x.grid();
    let p = shift_steps(&grid, eps)?;
    let n = space.n_modes();
    let mut dx = vec![0.0; n];
    let mut dy = vec![0.0; n];
    let mut acc = 0.0;
    for i in 0..grid.n_steps() {
        increment(x, i, p, &mut dx);
        increment(y, i, p, &mut dy);
        acc += space.dual_graph_norm_unchecked(&dx) * space.dual_graph_norm_unchecked(&dy);
    }
    Ok(acc / p as f64)
}

/// Scalar quadratic variation of `X` measured in the dual graph norm.
pub fn dual_scalar_qv(space: &TruncatedSpace, x: &GridPath, eps: f64) -> Result<f64> {
    space.check(x.at(0))?;
    let grid = *x.grid();
    let p = shift_steps(&grid, eps)?;
    let mut dx = vec![0.0; space.n_modes()];
    let mut acc = 0.0;
    for i in 0..grid.n_steps() {
        increment(x, i, p, &mut dx);
        acc += space.dual_graph_norm_sq_unchecked(&dx);
    }
    Ok(acc / p as f64)
}

/// Outcome of a ladder study at the documented decision rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Verdict {
    Converges { limit: f64, tol: f64 },
    Diverges,
    Inconclusive,
}

impl Verdict {
    pub fn converges(&self) -> bool {
        matches!(self, Verdict::Converges { .. })
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Converges { limit, tol } => {
                write!(f, "CONVERGES(limit={limit:.6e};tol={tol:.3e})")
            }
            Verdict::Diverges => write!(f, "DIVERGES"),
            Verdict::Inconclusive => write!(f, "INCONCLUSIVE"),
        }
    }
}

/// Decision rule applied to ensemble medians along a ladder.
///
/// CONVERGES when the medians of the last three rungs lie within `tol` of
/// each other, the final median is within `tol` of `target` (if any), and
/// the 95% quantile of `|estimate − limit|` at the final rung is at most
/// `5·tol`. DIVERGES when `|median|` grows strictly along the ladder and
/// ends above `divergence_bound`. Anything else is INCONCLUSIVE.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerdictRule {
    pub tol: f64,
    pub target: Option<f64>,
    pub divergence_bound: f64,
}

impl VerdictRule {
    pub fn new(tol: f64) -> Self {
        Self {
            tol,
            target: None,
            divergence_bound: f64::INFINITY,
        }
    }

    pub fn with_target(self, target: f64) -> Self {
        Self {
            target: Some(target),
            ..self
        }
    }

    pub fn with_divergence_bound(self, bound: f64) -> Self {
        Self {
            divergence_bound: bound,
            ..self
        }
    }

    /// `medians` in ladder order; `final_samples` are the raw estimates at the last rung.
    pub fn decide(&self, medians: &[f64], final_samples: &[f64]) -> Verdict {
        let Some(&last) = medians.last() else {
            return Verdict::Inconclusive;
        };
        let tail = &medians[medians.len().saturating_sub(3)..];
        let hi = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
        let limit = self.target.unwrap_or(last);
        let cauchy = hi - lo <= self.tol;
        let on_target = (last - limit).abs() <= self.tol;
        let deviations: Vec<f64> = final_samples.iter().map(|v| (v - limit).abs()).collect();
        let concentrated = deviations.is_empty() || quantile(&deviations, 0.95) <= 5.0 * self.tol;
        if cauchy && on_target && concentrated {
            return Verdict::Converges {
                limit,
                tol: self.tol,
            };
        }
        let growing = medians.windows(2).all(|w| w[1].abs() > w[0].abs());
        if growing && last.abs() > self.divergence_bound {
            return Verdict::Diverges;
        }
        Verdict::Inconclusive
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LadderRow {
    pub epsilon: f64,
    pub t: f64,
    pub summary: Summary,
}

/// Per-(ε, t) quantiles of one estimator over an ensemble, with its verdict.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub estimator: String,
    pub rows: Vec<LadderRow>,
    pub verdict: Verdict,
    pub n_paths: usize,
}

impl ConvergenceReport {
    pub const CSV_HEADER: [&'static str; 8] = [
        "estimator",
        "epsilon",
        "t",
        "q05",
        "q50",
        "q95",
        "n_paths",
        "verdict",
    ];

    /// Ensemble medians at report time `t` in ladder order.
    pub fn medians_at(&self, t: f64) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| (r.t - t).abs() < 1e-12)
            .map(|r| r.summary.q50)
            .collect()
    }

    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    self.estimator.clone(),
                    format!("{:.9e}", r.epsilon),
                    format!("{:.9e}", r.t),
                    format!("{:.9e}", r.summary.q05),
                    format!("{:.9e}", r.summary.q50),
                    format!("{:.9e}", r.summary.q95),
                    self.n_paths.to_string(),
                    self.verdict.to_string(),
                ]
            })
            .collect()
    }
}

/// Runs `estimate(path_index, multiples)` for every path; it returns, per
/// rung, one value for each entry of `report_indices`. The verdict is the
/// worst per-time verdict (uniform over reported times).
pub fn ladder_study_with<F>(
    estimator: &str,
    grid: &TimeGrid,
    ladder: &EpsilonLadder,
    ensemble: &EnsembleSpec,
    report_indices: &[usize],
    rule: &VerdictRule,
    estimate: F,
) -> Result<ConvergenceReport>
where
    F: Fn(u64, &[usize]) -> Result<Vec<Vec<f64>>> + Sync + Send,
{
    let multiples = ladder.multiples().to_vec();
    // samples[path][rung][time]
    let samples: Vec<Vec<Vec<f64>>> = ensemble
        .map(|path| estimate(path, &multiples))
        .into_iter()
        .collect::<Result<_>>()?;
    summarize_ladder(estimator, grid, ladder, report_indices, &samples, rule)
}

/// Builds the report from raw estimates `samples[path][rung][time]`.
pub fn summarize_ladder(
    estimator: &str,
    grid: &TimeGrid,
    ladder: &EpsilonLadder,
    report_indices: &[usize],
    samples: &[Vec<Vec<f64>>],
    rule: &VerdictRule,
) -> Result<ConvergenceReport> {
    let multiples = ladder.multiples();
    if report_indices.is_empty() {
        return Err(Error::InvalidLadder("no report times".into()));
    }
    for per_rung in samples {
        check_dim(multiples.len(), per_rung.len())?;
        for v in per_rung {
            check_dim(report_indices.len(), v.len())?;
        }
    }
    let mut rows = Vec::new();
    let mut verdicts = Vec::new();
    let mut medians = vec![Vec::new(); report_indices.len()];
    for (r, &p) in multiples.iter().enumerate() {
        for (ti, &idx) in report_indices.iter().enumerate() {
            let values: Vec<f64> = samples.iter().map(|s| s[r][ti]).collect();
            let summary = Summary::of(&values);
            medians[ti].push(summary.q50);
            rows.push(LadderRow {
                epsilon: p as f64 * grid.dt(),
                t: grid.time(idx),
                summary,
            });
        }
    }
    let last = multiples.len() - 1;
    for (ti, m) in medians.iter().enumerate() {
        let finals: Vec<f64> = samples.iter().map(|s| s[last][ti]).collect();
        verdicts.push(rule.decide(m, &finals));
    }
    let verdict = if verdicts.contains(&Verdict::Diverges) {
        Verdict::Diverges
    } else if verdicts.iter().all(Verdict::converges) {
        *verdicts.last().expect("at least one report time")
    } else {
        Verdict::Inconclusive
    };
    Ok(ConvergenceReport {
        estimator: estimator.to_string(),
        rows,
        verdict,
        n_paths: samples.len(),
    })
}

/// Named estimators accepted by [`ladder_study`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EstimatorKind {
    ScalarQv,
    RealCovariation,
    TensorQvEntry(usize, usize),
    ChiCovariation,
    H1Diagnostic,
    ForwardIntegral,
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "scalar_qv" => return Ok(Self::ScalarQv),
            "real_covariation" => return Ok(Self::RealCovariation),
            "chi_covariation" => return Ok(Self::ChiCovariation),
            "h1_diagnostic" => return Ok(Self::H1Diagnostic),
            "forward_integral" => return Ok(Self::ForwardIntegral),
            _ => {}
        }
        // tensor_qv[j,k]
        if let Some(inner) = s
            .strip_prefix("tensor_qv[")
            .and_then(|r| r.strip_suffix(']'))
        {
            let mut it = inner.split(',').map(|v| v.trim().parse::<usize>());
            if let (Some(Ok(j)), Some(Ok(k)), None) = (it.next(), it.next(), it.next()) {
                return Ok(Self::TensorQvEntry(j, k));
            }
        }
        Err(Error::UnknownEstimator(s.to_string()))
    }
}

/// Processes fed to a named estimator for one path.
pub struct StudySample {
    pub x: GridPath,
    pub y: GridPath,
    pub integrand: Option<OperatorPath>,
}

/// Ladder study of a named estimator. `sample` regenerates the processes of
/// one path; `chi` is required by `chi_covariation`, `space` by the
/// χ-based estimators. Scalar-valued estimators are reported directly;
/// `forward_integral` reports the `H`-norm of `I_ε(t)`.
#[allow(clippy::too_many_arguments)]
pub fn ladder_study<S>(
    name: &str,
    space: &TruncatedSpace,
    chi: Option<&ChiFunctional>,
    grid: &TimeGrid,
    ladder: &EpsilonLadder,
    ensemble: &EnsembleSpec,
    report_indices: &[usize],
    rule: &VerdictRule,
    sample: S,
) -> Result<ConvergenceReport>
where
    S: Fn(u64) -> Result<StudySample> + Sync + Send,
{
    let kind: EstimatorKind = name.parse()?;
    if kind == EstimatorKind::ChiCovariation && chi.is_none() {
        return Err(Error::UnknownEstimator(format!(
            "{name} (no χ functional supplied)"
        )));
    }
    let empty = ChiFunctional::empty();
    let chi = chi.unwrap_or(&empty);
    let dt = grid.dt();
    ladder_study_with(
        name,
        grid,
        ladder,
        ensemble,
        report_indices,
        rule,
        |path, multiples| {
            let s = sample(path)?;
            multiples
                .iter()
                .map(|&p| named_estimate(kind, name, space, chi, &s, p as f64 * dt, report_indices))
                .collect()
        },
    )
}

fn named_estimate(
    kind: EstimatorKind,
    name: &str,
    space: &TruncatedSpace,
    chi: &ChiFunctional,
    s: &StudySample,
    eps: f64,
    report_indices: &[usize],
) -> Result<Vec<f64>> {
    let at = |g: &GridPath| {
        report_indices
            .iter()
            .map(|&i| g.value(i))
            .collect::<Vec<_>>()
    };
    match kind {
        EstimatorKind::ScalarQv => Ok(at(&scalar_qv(&s.x, eps)?)),
        EstimatorKind::RealCovariation => Ok(at(&real_covariation(&s.x, &s.y, eps)?)),
        EstimatorKind::ChiCovariation => Ok(at(&chi_covariation(space, &s.x, &s.y, chi, eps)?)),
        EstimatorKind::TensorQvEntry(j, k) => {
            let n = s.x.dim();
            if j >= n || k >= n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: j.max(k) + 1,
                });
            }
            let tq = tensor_qv(&s.x, &s.y, eps)?;
            Ok(report_indices
                .iter()
                .map(|&i| tq.raw(i)[j * n + k])
                .collect())
        }
        EstimatorKind::H1Diagnostic => {
            // A(ε) is an integral over the whole horizon; report it at every time.
            let a = h1_diagnostic(space, &s.x, &s.y, eps)?;
            Ok(vec![a; report_indices.len()])
        }
        EstimatorKind::ForwardIntegral => {
            let x = s.integrand.as_ref().ok_or_else(|| {
                Error::UnknownEstimator(format!("{name} (no integrand supplied)"))
            })?;
            let out = forward_integral(x, &s.y, eps)?;
            Ok(report_indices
                .iter()
                .map(|&i| crate::spaces::norm(out.at(i)))
                .collect())
        }
    }
}
