//! Finite spectral truncation of a separable Hilbert space.
//!
//! The generator `A` is diagonal in a fixed orthonormal basis `e_k` with
//! eigenvalues `λ_k`, and the noise covariance `Q` is diagonal in the same
//! basis with eigenvalues `q_k`. Under this truncation `D(A*)` is the whole
//! space carrying the graph weights `1 + λ_k²`, and tensor products `H ⊗ H`
//! are `N × N` coefficient arrays whose projective and injective norms are
//! the nuclear and operator norms.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};

/// An `N`-mode model of `H` with diagonal generator and covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedSpace {
    eigenvalues: Vec<f64>,
    q_eigenvalues: Vec<f64>,
    label: String,
}

impl TruncatedSpace {
    pub fn new(
        eigenvalues: Vec<f64>,
        q_eigenvalues: Vec<f64>,
        label: impl Into<String>,
    ) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::InvalidSpace("at least one mode is required".into()));
        }
        check_dim(eigenvalues.len(), q_eigenvalues.len())?;
        if eigenvalues.iter().any(|l| !l.is_finite()) {
            return Err(Error::InvalidSpace(
                "generator eigenvalues must be finite".into(),
            ));
        }
        if q_eigenvalues.iter().any(|q| !(q.is_finite() && *q > 0.0)) {
            return Err(Error::InvalidSpace(
                "covariance eigenvalues must be positive and finite".into(),
            ));
        }
        Ok(Self {
            eigenvalues,
            q_eigenvalues,
            label: label.into(),
        })
    }

    /// Dirichlet Laplacian on `(0, 1)`: `λ_k = -(kπ)²`, `q_k = k⁻²`.
    pub fn dirichlet_laplacian(n_modes: usize) -> Result<Self> {
        let eig = (1..=n_modes).map(|k| -(k as f64 * PI).powi(2)).collect();
        let q = (1..=n_modes).map(|k| 1.0 / (k as f64).powi(2)).collect();
        Self::new(eig, q, format!("dirichlet-laplacian-{n_modes}"))
    }

    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn q_eigenvalues(&self) -> &[f64] {
        &self.q_eigenvalues
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn trace_q(&self) -> f64 {
        self.q_eigenvalues.iter().sum()
    }

    /// True when every `λ_k ≤ 0`, so that `e^{tA}` is a contraction.
    pub fn is_dissipative(&self) -> bool {
        self.eigenvalues.iter().all(|&l| l <= 0.0)
    }

    /// Graph weight `1 + λ_k²` of mode `k` (zero-based).
    pub fn graph_weight(&self, k: usize) -> f64 {
        1.0 + self.eigenvalues[k] * self.eigenvalues[k]
    }

    pub fn zero(&self) -> HVector {
        HVector::zeros(self.n_modes())
    }

    /// Basis vector `e_k` (zero-based index).
    pub fn unit(&self, k: usize) -> HVector {
        HVector::unit(self.n_modes(), k)
    }

    pub fn check(&self, x: &[f64]) -> Result<()> {
        check_dim(self.n_modes(), x.len())
    }

    /// `(|z|² + |A*z|²)^{1/2}`.
    pub fn graph_norm(&self, z: &[f64]) -> Result<f64> {
        self.check(z)?;
        Ok(self.graph_norm_unchecked(z))
    }

    pub(crate) fn graph_norm_unchecked(&self, z: &[f64]) -> f64 {
        z.iter()
            .zip(&self.eigenvalues)
            .map(|(z, l)| (1.0 + l * l) * z * z)
            .sum::<f64>()
            .sqrt()
    }

    /// Norm of `x` as a functional on `D(A*)` with its graph norm.
    pub fn dual_graph_norm(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        Ok(self.dual_graph_norm_unchecked(x))
    }

    pub(crate) fn dual_graph_norm_unchecked(&self, x: &[f64]) -> f64 {
        self.dual_graph_norm_sq_unchecked(x).sqrt()
    }

    pub(crate) fn dual_graph_norm_sq_unchecked(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.eigenvalues)
            .map(|(x, l)| x * x / (1.0 + l * l))
            .sum::<f64>()
    }

    /// `A* z` (equal to `A z` in this self-adjoint truncation).
    pub fn apply_generator(&self, z: &[f64]) -> Result<HVector> {
        self.check(z)?;
        Ok(HVector(
            z.iter()
                .zip(&self.eigenvalues)
                .map(|(z, l)| l * z)
                .collect(),
        ))
    }

    /// Mode-wise multipliers `e^{λ_k t}`.
    pub fn semigroup_factors(&self, t: f64) -> Result<Vec<f64>> {
        if t < 0.0 {
            return Err(Error::NegativeTime(t));
        }
        Ok(self.eigenvalues.iter().map(|l| (l * t).exp()).collect())
    }

    /// `e^{tA} x`.
    pub fn semigroup_apply(&self, t: f64, x: &[f64]) -> Result<HVector> {
        self.check(x)?;
        let factors = self.semigroup_factors(t)?;
        Ok(HVector(
            x.iter().zip(&factors).map(|(x, f)| x * f).collect(),
        ))
    }

    /// `|J(u)|` in the dual of `D(A*) ⊗_π D(A*)`: the operator norm of
    /// `G^{-1/2} u G^{-1/2}` with `G = diag(1 + λ_k²)`.
    pub fn chi_dual_norm(&self, u: &TensorElement) -> Result<f64> {
        check_dim(self.n_modes(), u.dim())?;
        let w: Vec<f64> = (0..self.n_modes())
            .map(|k| self.graph_weight(k).sqrt().recip())
            .collect();
        let scaled = DMatrix::from_fn(u.dim(), u.dim(), |j, k| w[j] * u.coeffs()[(j, k)] * w[k]);
        Ok(largest_singular_value(&scaled))
    }

    /// Graph-norm weighted embedding constant of `D(A*) ⊗_π D(A*)` into the
    /// dual of `H ⊗_π H`; equals `1 / min_k (1 + λ_k²)` here. This is the
    /// constant of the truncation, not of the infinite-dimensional space.
    pub fn chi_embedding_constant(&self) -> f64 {
        (0..self.n_modes())
            .map(|k| self.graph_weight(k))
            .fold(f64::INFINITY, f64::min)
            .recip()
    }
}

/// Coordinates of an element of `H` against the eigenbasis.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct HVector(pub Vec<f64>);

impl HVector {
    pub fn new(coords: Vec<f64>) -> Self {
        Self(coords)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn unit(n: usize, k: usize) -> Self {
        let mut v = vec![0.0; n];
        v[k] = 1.0;
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        dot(&self.0, other)
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(self.0.iter().map(|x| c * x).collect())
    }
}

impl std::ops::Deref for HVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for HVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// An element `Σ u_{jk} e_j ⊗ e_k` of `H ⊗ H`.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorElement {
    coeffs: DMatrix<f64>,
}

impl TensorElement {
    pub fn from_matrix(coeffs: DMatrix<f64>) -> Result<Self> {
        if coeffs.nrows() != coeffs.ncols() {
            return Err(Error::DimensionMismatch {
                expected: coeffs.nrows(),
                found: coeffs.ncols(),
            });
        }
        Ok(Self { coeffs })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            coeffs: DMatrix::zeros(n, n),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            coeffs: DMatrix::identity(n, n),
        }
    }

    pub fn from_row_major(n: usize, data: &[f64]) -> Result<Self> {
        check_dim(n * n, data.len())?;
        Ok(Self {
            coeffs: DMatrix::from_row_slice(n, n, data),
        })
    }

    /// `x ⊗ y`.
    pub fn rank_one(x: &[f64], y: &[f64]) -> Result<Self> {
        check_dim(x.len(), y.len())?;
        Ok(Self {
            coeffs: DMatrix::from_fn(x.len(), y.len(), |j, k| x[j] * y[k]),
        })
    }

    pub fn dim(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.coeffs
    }

    pub fn singular_values(&self) -> Vec<f64> {
        self.coeffs
            .clone()
            .svd(false, false)
            .singular_values
            .iter()
            .copied()
            .collect()
    }

    /// Projective norm `π(u)`: sum of singular values.
    pub fn projective_norm(&self) -> f64 {
        self.singular_values().iter().sum()
    }

    /// Injective norm `ε(u)`: largest singular value.
    pub fn injective_norm(&self) -> f64 {
        largest_singular_value(&self.coeffs)
    }

    /// Bilinear form `(x, y) ↦ Σ u_{jk} x_j y_k`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        check_dim(self.dim(), y.len())?;
        let mut acc = 0.0;
        for j in 0..self.dim() {
            for k in 0..self.dim() {
                acc += self.coeffs[(j, k)] * x[j] * y[k];
            }
        }
        Ok(acc)
    }
}

fn largest_singular_value(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// `Tr(T_u B_ψ)` with `ψ` read as the bilinear form of its coefficient array.
pub fn trace_pairing(psi: &TensorElement, u: &TensorElement) -> Result<f64> {
    check_dim(psi.dim(), u.dim())?;
    Ok(psi.coeffs.component_mul(&u.coeffs).sum())
}

/// A finite-rank element `Σ a*_i ⊗ b*_i` of `D(A*) ⊗_π D(A*)`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ChiFunctional {
    terms: Vec<(HVector, HVector)>,
}

impl ChiFunctional {
    pub fn new(space: &TruncatedSpace, terms: Vec<(HVector, HVector)>) -> Result<Self> {
        for (a, b) in &terms {
            space.check(a)?;
            space.check(b)?;
        }
        Ok(Self { terms })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// `e_j* ⊗ e_k*`.
    pub fn elementary(space: &TruncatedSpace, j: usize, k: usize) -> Self {
        Self {
            terms: vec![(space.unit(j), space.unit(k))],
        }
    }

    pub fn terms(&self) -> &[(HVector, HVector)] {
        &self.terms
    }

    /// `Σ_i ⟨a*_i, x⟩⟨b*_i, y⟩`.
    pub fn eval_pair(&self, x: &[f64], y: &[f64]) -> f64 {
        self.terms.iter().map(|(a, b)| a.dot(x) * b.dot(y)).sum()
    }

    pub fn eval(&self, u: &TensorElement) -> Result<f64> {
        let mut acc = 0.0;
        for (a, b) in &self.terms {
            acc += u.bilinear(a, b)?;
        }
        Ok(acc)
    }

    /// `Σ_i |a*_i|_{D(A*)} |b*_i|_{D(A*)}`, an upper bound on the projective norm.
    pub fn norm_upper(&self, space: &TruncatedSpace) -> Result<f64> {
        let mut acc = 0.0;
        for (a, b) in &self.terms {
            acc += space.graph_norm(a)? * space.graph_norm(b)?;
        }
        Ok(acc)
    }
}

impl fmt::Display for TruncatedSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} (N = {}, Tr Q = {:.6})",
            self.label,
            self.n_modes(),
            self.trace_q()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gauss(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    // Sup of ⟨φ, x⟩ over graph-unit φ. Writing φ_k = ψ_k / sqrt(1 + λ_k²) puts ψ on
    // the Euclidean unit sphere; random starts there are refined by projected ascent.
    fn dual_sup_oracle(
        space: &TruncatedSpace,
        x: &[f64],
        starts: usize,
        rng: &mut ChaCha8Rng,
    ) -> f64 {
        let n = x.len();
        let c: Vec<f64> = (0..n)
            .map(|k| x[k] / space.graph_weight(k).sqrt())
            .collect();
        let unit = |v: &mut Vec<f64>| {
            let r = norm(v);
            v.iter_mut().for_each(|p| *p /= r);
        };
        let mut best = f64::NEG_INFINITY;
        for _ in 0..starts {
            let mut psi = gauss(rng, n);
            unit(&mut psi);
            let mut step = 1.0;
            let mut val = dot(&psi, &c);
            for _ in 0..200 {
                let mut cand: Vec<f64> = psi.iter().zip(&c).map(|(p, c)| p + step * c).collect();
                unit(&mut cand);
                let v = dot(&cand, &c);
                if v > val {
                    psi = cand;
                    val = v;
                    step *= 2.0;
                } else {
                    step *= 0.5;
                }
            }
            // evaluate in the original coordinates
            let phi: Vec<f64> = (0..n)
                .map(|k| psi[k] / space.graph_weight(k).sqrt())
                .collect();
            let g = space.graph_norm_unchecked(&phi);
            best = best.max(dot(&phi, x) / g);
        }
        best
    }

    #[test]
    fn graph_norm_examples() {
        let flat = TruncatedSpace::new(vec![0.0, -1.0], vec![1.0, 1.0], "flat").unwrap();
        assert_eq!(flat.graph_norm(&flat.unit(0)).unwrap(), 1.0);
        let heat = TruncatedSpace::dirichlet_laplacian(8).unwrap();
        let expect = (1.0 + PI.powi(4)).sqrt();
        assert!(rel(heat.graph_norm(&heat.unit(0)).unwrap(), expect) < 1e-14);
    }

    #[test]
    fn graph_norm_matches_weighted_quadratic_form() {
        let space = TruncatedSpace::dirichlet_laplacian(8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let z = gauss(&mut rng, 8);
            let g = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                8,
                space.eigenvalues().iter().map(|l| 1.0 + l * l),
            ));
            let zv = nalgebra::DVector::from_vec(z.clone());
            let oracle = (zv.transpose() * g * &zv)[(0, 0)].sqrt();
            assert!(rel(space.graph_norm(&z).unwrap(), oracle) < 1e-12);
        }
    }

    #[test]
    fn dual_graph_norm_examples_and_sup_oracle() {
        let flat = TruncatedSpace::new(vec![0.0], vec![1.0], "flat").unwrap();
        assert_eq!(flat.dual_graph_norm(&[1.0]).unwrap(), 1.0);
        let space = TruncatedSpace::dirichlet_laplacian(8).unwrap();
        for k in 0..8 {
            let expect = (1.0 + ((k + 1) as f64 * PI).powi(4)).powf(-0.5);
            assert!(rel(space.dual_graph_norm(&space.unit(k)).unwrap(), expect) < 1e-14);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let x = gauss(&mut rng, 8);
            let exact = space.dual_graph_norm(&x).unwrap();
            let sup = dual_sup_oracle(&space, &x, 20, &mut rng);
            assert!(sup <= exact * (1.0 + 1e-12), "oracle {sup} exceeds {exact}");
            assert!(sup >= 0.99 * exact, "oracle {sup} too far below {exact}");
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let space = TruncatedSpace::dirichlet_laplacian(4).unwrap();
        assert_eq!(
            space.graph_norm(&[1.0, 2.0]),
            Err(Error::DimensionMismatch {
                expected: 4,
                found: 2
            })
        );
        assert!(space.dual_graph_norm(&[1.0; 5]).is_err());
    }

    #[test]
    fn tensor_norm_examples() {
        let id = TensorElement::identity(2);
        assert!((id.projective_norm() - 2.0).abs() < 1e-14);
        assert!((id.injective_norm() - 1.0).abs() < 1e-14);
        // |x| = 3, |y| = 2
        let u = TensorElement::rank_one(&[3.0, 0.0, 0.0], &[0.0, 1.2, 1.6]).unwrap();
        assert!(rel(u.projective_norm(), 6.0) < 1e-12);
        assert!(rel(u.injective_norm(), 6.0) < 1e-12);
    }

    #[test]
    fn projective_norm_matches_gram_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let u = TensorElement::from_row_major(3, &gauss(&mut rng, 9)).unwrap();
            let gram = u.coeffs().transpose() * u.coeffs();
            let eig = SymmetricEigen::new(gram).eigenvalues;
            let oracle: f64 = eig.iter().map(|e| e.max(0.0).sqrt()).sum();
            assert!(rel(u.projective_norm(), oracle) < 1e-10);
        }
    }

    #[test]
    fn injective_norm_random_bilinear_sup() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = TensorElement::from_row_major(4, &gauss(&mut rng, 16)).unwrap();
        let exact = u.injective_norm();
        let mut best: f64 = 0.0;
        for _ in 0..100_000 {
            let x = gauss(&mut rng, 4);
            let x: Vec<f64> = x.iter().map(|v| v / norm(&x)).collect();
            // Best partner for a fixed x is along uᵀx.
            let y: Vec<f64> = (0..4)
                .map(|k| (0..4).map(|j| u.coeffs()[(j, k)] * x[j]).sum())
                .collect();
            let ny = norm(&y);
            let y: Vec<f64> = y.iter().map(|v| v / ny).collect();
            best = best.max(u.bilinear(&x, &y).unwrap().abs());
        }
        assert!(best <= exact * (1.0 + 1e-12));
        assert!(best >= 0.99 * exact);
    }

    #[test]
    fn trace_pairing_examples() {
        let id = TensorElement::identity(3);
        let e11 = TensorElement::rank_one(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(trace_pairing(&id, &e11).unwrap(), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = TensorElement::from_row_major(3, &gauss(&mut rng, 9)).unwrap();
        assert!((trace_pairing(&id, &u).unwrap() - u.coeffs().trace()).abs() < 1e-14);
        assert!(trace_pairing(&id, &TensorElement::identity(2)).is_err());
    }

    #[test]
    fn trace_pairing_matches_singular_decomposition() {
        // Σ_n s_n ⟨L_ψ a_n, b_n⟩ for u = Σ s_n a_n ⊗ b_n of rank 2.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let psi = TensorElement::from_row_major(5, &gauss(&mut rng, 25)).unwrap();
            let a1 = gauss(&mut rng, 5);
            let b1 = gauss(&mut rng, 5);
            let a2 = gauss(&mut rng, 5);
            let b2 = gauss(&mut rng, 5);
            let u = TensorElement::from_matrix(
                TensorElement::rank_one(&a1, &b1).unwrap().into_matrix()
                    + TensorElement::rank_one(&a2, &b2).unwrap().into_matrix(),
            )
            .unwrap();
            let svd = u.coeffs().clone().svd(true, true);
            let (lu, lv) = (svd.u.unwrap(), svd.v_t.unwrap());
            let mut oracle = 0.0;
            for n in 0..5 {
                let a: Vec<f64> = lu.column(n).iter().copied().collect();
                let b: Vec<f64> = lv.row(n).iter().copied().collect();
                oracle += svd.singular_values[n] * psi.bilinear(&a, &b).unwrap();
            }
            let got = trace_pairing(&psi, &u).unwrap();
            assert!((got - oracle).abs() <= 1e-10 * oracle.abs().max(1.0));
        }
    }

    #[test]
    fn chi_dual_norm_examples() {
        let flat = TruncatedSpace::new(vec![0.0, -2.0], vec![1.0, 1.0], "flat").unwrap();
        let e11 = TensorElement::rank_one(&[1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!((flat.chi_dual_norm(&e11).unwrap() - 1.0).abs() < 1e-14);
        let space = TruncatedSpace::dirichlet_laplacian(6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let a = gauss(&mut rng, 6);
            let b = gauss(&mut rng, 6);
            let u = TensorElement::rank_one(&a, &b).unwrap();
            let expect = space.dual_graph_norm(&a).unwrap() * space.dual_graph_norm(&b).unwrap();
            assert!(rel(space.chi_dual_norm(&u).unwrap(), expect) < 1e-10);
        }
    }

    #[test]
    fn chi_dual_norm_sup_over_graph_unit_pairs() {
        let space = TruncatedSpace::dirichlet_laplacian(6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u = TensorElement::from_row_major(6, &gauss(&mut rng, 36)).unwrap();
        let exact = space.chi_dual_norm(&u).unwrap();
        // For fixed graph-unit φ the best ψ is explicit; refine φ by ascent.
        let partner = |phi: &[f64]| -> f64 {
            let y: Vec<f64> = (0..6)
                .map(|k| (0..6).map(|j| u.coeffs()[(j, k)] * phi[j]).sum())
                .collect();
            space.dual_graph_norm_unchecked(&y)
        };
        let mut best: f64 = 0.0;
        for _ in 0..100_000 {
            // uniform on the graph-norm unit sphere
            let mut phi = gauss(&mut rng, 6);
            let r = norm(&phi);
            for (k, p) in phi.iter_mut().enumerate() {
                *p /= r * space.graph_weight(k).sqrt();
            }
            best = best.max(partner(&phi));
        }
        assert!(best <= exact * (1.0 + 1e-12));
        assert!(best >= 0.99 * exact, "{best} vs {exact}");
    }

    #[test]
    fn semigroup_examples() {
        let space = TruncatedSpace::new(vec![-1.0, -4.0], vec![1.0, 0.25], "s").unwrap();
        let x = [0.3, -1.2];
        assert_eq!(space.semigroup_apply(0.0, &x).unwrap().0, x.to_vec());
        let y = space.semigroup_apply(1.0, &[1.0, 0.0]).unwrap();
        assert!((y[0] - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(
            space.semigroup_apply(-0.1, &x),
            Err(Error::NegativeTime(-0.1))
        );
    }

    #[test]
    fn chi_functional_evaluates_rank_one_tensors() {
        let space = TruncatedSpace::dirichlet_laplacian(3).unwrap();
        let phi = ChiFunctional::new(
            &space,
            vec![
                (HVector(vec![1.0, 2.0, 0.0]), HVector(vec![0.0, 1.0, -1.0])),
                (HVector(vec![0.5, 0.0, 1.0]), HVector(vec![1.0, 1.0, 1.0])),
            ],
        )
        .unwrap();
        let x = [0.2, -0.4, 1.0];
        let y = [1.5, 0.1, 0.3];
        let direct = phi.eval_pair(&x, &y);
        let via_tensor = phi.eval(&TensorElement::rank_one(&x, &y).unwrap()).unwrap();
        assert!((direct - via_tensor).abs() < 1e-14);
        assert_eq!(ChiFunctional::empty().eval_pair(&x, &y), 0.0);
        let bound = phi.norm_upper(&space).unwrap()
            * space.dual_graph_norm(&x).unwrap()
            * space.dual_graph_norm(&y).unwrap();
        assert!(direct.abs() <= bound);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn tensor(n: usize) -> impl Strategy<Value = TensorElement> {
            proptest::collection::vec(-5.0f64..5.0, n * n)
                .prop_map(move |v| TensorElement::from_row_major(n, &v).unwrap())
        }

        proptest! {
            #[test]
            fn injective_never_exceeds_projective(u in (2usize..=8).prop_flat_map(tensor)) {
                prop_assert!(u.injective_norm() <= u.projective_norm() * (1.0 + 1e-12) + 1e-12);
            }

            #[test]
            fn rank_one_norms_coincide(x in proptest::collection::vec(-3.0f64..3.0, 4),
                                       y in proptest::collection::vec(-3.0f64..3.0, 4)) {
                let u = TensorElement::rank_one(&x, &y).unwrap();
                let expect = norm(&x) * norm(&y);
                prop_assert!((u.projective_norm() - expect).abs() <= 1e-10 * expect.max(1e-12));
                prop_assert!((u.injective_norm() - expect).abs() <= 1e-10 * expect.max(1e-12));
            }

            #[test]
            fn pairing_bounded_by_form_norm_times_projective(psi in tensor(4), u in tensor(4)) {
                let lhs = trace_pairing(&psi, &u).unwrap().abs();
                prop_assert!(lhs <= psi.injective_norm() * u.projective_norm() * (1.0 + 1e-10) + 1e-10);
            }

            #[test]
            fn dual_times_graph_dominates_square(x in proptest::collection::vec(-2.0f64..2.0, 6)) {
                let space = TruncatedSpace::dirichlet_laplacian(6).unwrap();
                let lhs = space.dual_graph_norm(&x).unwrap() * space.graph_norm(&x).unwrap();
                let sq = dot(&x, &x);
                prop_assert!(lhs >= sq * (1.0 - 1e-12));
            }

            #[test]
            fn chi_dual_bounded_by_projective(u in tensor(5)) {
                let space = TruncatedSpace::dirichlet_laplacian(5).unwrap();
                let c = space.chi_embedding_constant();
                prop_assert!(c <= 1.0);
                prop_assert!(space.chi_dual_norm(&u).unwrap() <= c * u.projective_norm() * (1.0 + 1e-10) + 1e-12);
            }

            #[test]
            fn semigroup_law(t1 in 0.0f64..0.5, t2 in 0.0f64..0.5,
                             x in proptest::collection::vec(-2.0f64..2.0, 8)) {
                let space = TruncatedSpace::dirichlet_laplacian(8).unwrap();
                let two = space.semigroup_apply(t2, &space.semigroup_apply(t1, &x).unwrap()).unwrap();
                let one = space.semigroup_apply(t1 + t2, &x).unwrap();
                for (a, b) in two.iter().zip(one.iter()) {
                    prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
                }
            }
        }
    }

    #[test]
    fn duality_equality_on_single_weight_support() {
        let space = TruncatedSpace::new(vec![-1.0, -1.0, -3.0], vec![1.0; 3], "w").unwrap();
        let x = [0.6, -0.8, 0.0];
        let lhs = space.dual_graph_norm(&x).unwrap() * space.graph_norm(&x).unwrap();
        assert!((lhs - dot(&x, &x)).abs() < 1e-14);
        let x = [0.6, 0.0, 0.8];
        let lhs = space.dual_graph_norm(&x).unwrap() * space.graph_norm(&x).unwrap();
        assert!(lhs > dot(&x, &x) + 1e-6);
    }
}
