//! Uniform time grids, sampled paths, and seeded Gaussian noise.
//!
//! Every random stream is keyed by `(master_seed, purpose, component)` and
//! selected by `path_index` through the ChaCha stream counter, so a path can
//! be regenerated in isolation and ensembles do not depend on the order in
//! which paths are produced. Q-Wiener modes draw from separate components:
//! mode `k` of path `i` is identical whatever the truncation level `N`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::spaces::TruncatedSpace;

/// Uniform grid `t_i = s + i·dt`, `i = 0..=M`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    t_start: f64,
    t_end: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, n_steps: usize) -> Result<Self> {
        if !(t_start.is_finite() && t_end.is_finite()) || t_end <= t_start {
            return Err(Error::InvalidGrid(format!(
                "need s < T, got [{t_start}, {t_end}]"
            )));
        }
        if n_steps == 0 {
            return Err(Error::InvalidGrid("need at least one step".into()));
        }
        Ok(Self {
            t_start,
            t_end,
            n_steps,
        })
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn horizon(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn dt(&self) -> f64 {
        self.horizon() / self.n_steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        if i == self.n_steps {
            self.t_end
        } else {
            self.t_start + i as f64 * self.dt()
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(|i| self.time(i))
    }

    /// Grid index of `t` after clamping to `[s, T]`.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        if t <= self.t_start {
            return Ok(0);
        }
        if t >= self.t_end {
            return Ok(self.n_steps);
        }
        let x = (t - self.t_start) / self.dt();
        let i = x.round();
        if (x - i).abs() > 1e-9 {
            return Err(Error::OffGrid { t, dt: self.dt() });
        }
        Ok(i as usize)
    }

    /// Same interval with `factor` times fewer steps.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.n_steps.is_multiple_of(factor) {
            return Err(Error::InvalidGrid(format!(
                "cannot coarsen {} steps by {factor}",
                self.n_steps
            )));
        }
        Self::new(self.t_start, self.t_end, self.n_steps / factor)
    }
}

/// A process sampled on a grid, stored row-major: `dim` values per time.
#[derive(Clone, Debug, PartialEq)]
pub struct GridPath {
    grid: TimeGrid,
    dim: usize,
    data: Vec<f64>,
}

impl GridPath {
    pub fn from_data(grid: TimeGrid, dim: usize, data: Vec<f64>) -> Result<Self> {
        check_dim((grid.n_steps() + 1) * dim, data.len())?;
        Ok(Self { grid, dim, data })
    }

    pub fn zeros(grid: TimeGrid, dim: usize) -> Self {
        Self {
            grid,
            dim,
            data: vec![0.0; (grid.n_steps() + 1) * dim],
        }
    }

    /// Scalar path from its `M + 1` values.
    pub fn scalar(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        Self::from_data(grid, 1, values)
    }

    pub fn from_fn(grid: TimeGrid, dim: usize, mut f: impl FnMut(usize, f64, &mut [f64])) -> Self {
        let mut path = Self::zeros(grid, dim);
        for i in 0..=grid.n_steps() {
            let t = grid.time(i);
            f(i, t, path.at_mut(i));
        }
        path
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.grid.n_steps() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn at(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn at_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Value at index `i`, with indices beyond `M` held at the final value.
    pub fn clamped(&self, i: usize) -> &[f64] {
        self.at(i.min(self.grid.n_steps()))
    }

    pub fn last(&self) -> &[f64] {
        self.at(self.grid.n_steps())
    }

    /// Scalar value at index `i` (first coordinate).
    pub fn value(&self, i: usize) -> f64 {
        self.data[i * self.dim]
    }

    pub fn scalar_values(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.value(i)).collect()
    }

    /// Evaluation at `t` with the extension `X(t) = X(s)` for `t < s` and
    /// `X(t) = X(T)` for `t > T`; interior `t` must be a grid point.
    pub fn clamp_eval(&self, t: f64) -> Result<&[f64]> {
        Ok(self.at(self.grid.index_of(t)?))
    }

    /// Keep every `factor`-th sample.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        let grid = self.grid.coarsen(factor)?;
        let mut data = Vec::with_capacity((grid.n_steps() + 1) * self.dim);
        for i in 0..=grid.n_steps() {
            data.extend_from_slice(self.at(i * factor));
        }
        Self::from_data(grid, self.dim, data)
    }

    /// Coordinate `k` as a scalar path.
    pub fn component(&self, k: usize) -> Result<Self> {
        if k >= self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: k + 1,
            });
        }
        Ok(Self {
            grid: self.grid,
            dim: 1,
            data: (0..self.len()).map(|i| self.at(i)[k]).collect(),
        })
    }

    /// `⟨X(t), h⟩` as a scalar path.
    pub fn project(&self, h: &[f64]) -> Result<Self> {
        check_dim(self.dim, h.len())?;
        Ok(Self {
            grid: self.grid,
            dim: 1,
            data: (0..self.len())
                .map(|i| crate::spaces::dot(self.at(i), h))
                .collect(),
        })
    }

    /// Pointwise `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        self.same_grid(other)?;
        check_dim(self.dim, other.dim)?;
        Ok(Self {
            grid: self.grid,
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        })
    }

    /// First `n` coordinates at every time.
    pub fn truncate_modes(&self, n: usize) -> Result<Self> {
        if n > self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: n,
            });
        }
        let mut data = Vec::with_capacity(self.len() * n);
        for i in 0..self.len() {
            data.extend_from_slice(&self.at(i)[..n]);
        }
        Self::from_data(self.grid, n, data)
    }

    pub fn same_grid(&self, other: &Self) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// `sup_i |X(t_i)|`.
    pub fn sup_norm(&self) -> f64 {
        (0..self.len())
            .map(|i| crate::spaces::norm(self.at(i)))
            .fold(0.0, f64::max)
    }
}

/// Purpose tags separating independent random streams of one path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StreamPurpose {
    QWiener,
    RealBrownian,
    Auxiliary(u32),
}

impl StreamPurpose {
    fn tag(self) -> u64 {
        match self {
            StreamPurpose::QWiener => 1,
            StreamPurpose::RealBrownian => 2,
            StreamPurpose::Auxiliary(k) => 0x1000_0000 + k as u64,
        }
    }
}

/// Identifies one deterministic random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub path_index: u64,
    pub purpose: StreamPurpose,
}

impl SeedSpec {
    pub fn new(master_seed: u64, path_index: u64, purpose: StreamPurpose) -> Self {
        Self {
            master_seed,
            path_index,
            purpose,
        }
    }

    pub fn with_purpose(self, purpose: StreamPurpose) -> Self {
        Self { purpose, ..self }
    }

    /// Generator for sub-stream `component` (e.g. a mode index).
    pub fn rng(&self, component: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.master_seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.purpose.tag().to_le_bytes());
        key[16..24].copy_from_slice(&component.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.path_index);
        rng
    }
}

/// `W_Q` on `grid` with `W_Q(s) = 0` and mode-`k` increments `N(0, q_k dt)`.
pub fn sample_q_wiener(space: &TruncatedSpace, grid: &TimeGrid, seed: SeedSpec) -> GridPath {
    let n = space.n_modes();
    let m = grid.n_steps();
    let dt = grid.dt();
    let mut path = GridPath::zeros(*grid, n);
    let seed = seed.with_purpose(StreamPurpose::QWiener);
    for (k, q) in space.q_eigenvalues().iter().enumerate() {
        let mut rng = seed.rng(k as u64);
        let scale = (q * dt).sqrt();
        let mut w = 0.0;
        for i in 1..=m {
            let z: f64 = rng.sample(StandardNormal);
            w += scale * z;
            path.data[i * n + k] = w;
        }
    }
    path
}

/// Standard real Brownian motion with `B(s) = 0`.
pub fn sample_real_bm(grid: &TimeGrid, seed: SeedSpec) -> GridPath {
    let mut rng = seed.rng(0);
    let scale = grid.dt().sqrt();
    let mut values = Vec::with_capacity(grid.n_steps() + 1);
    let mut b = 0.0;
    values.push(b);
    for _ in 0..grid.n_steps() {
        let z: f64 = rng.sample(StandardNormal);
        b += scale * z;
        values.push(b);
    }
    GridPath {
        grid: *grid,
        dim: 1,
        data: values,
    }
}

/// Free function form of [`GridPath::clamp_eval`].
pub fn clamp_eval(path: &GridPath, t: f64) -> Result<&[f64]> {
    path.clamp_eval(t)
}
