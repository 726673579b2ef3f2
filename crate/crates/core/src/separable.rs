//! K-separable covariance dynamics of N harmonically coupled oscillators.
//!
//! In natural units (tau = omega t, R = kappa/(m omega^2), beta =
//! hbar omega/(k_B T)) the per-block quadratic generator is G_j =
//! (1 + R N) E_j - R n_j n_j^T, and every covariance quadrant of a thermal
//! block stays inside the two-dimensional commutative algebra
//! { a E + b n n^T / N_j }. The symplectic update C -> S C S^T therefore
//! reduces to scalar trigonometry on the two eigenspaces of G_j, with cost
//! independent of the block size; a dense matrix-ODE oracle provides the
//! independent cross-check.
//!
//! Algebra closure: E and P = n n^T/N_j satisfy P^2 = P, so products and
//! sums of elements a E + b P stay in the span of {E, P}; cos(G^{1/2} tau),
//! G^{-1/2} sin(G^{1/2} tau) and the quadrant update polynomials are all
//! algebra elements, which is the closure property the blockwise propagator
//! relies on.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::ode::Dopri5;

/// Largest oscillator count the dense oracle accepts.
pub const DENSE_ORACLE_MAX_N: usize = 256;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("invalid partition: {0}")]
    BadPartition(String),
    #[error("K = {k} does not divide N = {n}; valid K: {}", format_list(.valid))]
    InvalidDivision { n: usize, k: usize, valid: Vec<usize> },
    #[error("balanced partition required; propagate each block with propagate_block instead")]
    UnbalancedPartition,
    #[error("dense oracle limited to N <= {max}, got N = {n}")]
    OracleTooLarge { n: usize, max: usize },
    #[error("matrix is not in the identity-plus-projector algebra (residual {residual:.3e}); use the dense oracle")]
    NotInAlgebra { residual: f64 },
    #[error("{0}")]
    BadInput(String),
}

fn format_list(values: &[usize]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

/// Division of N oscillators into K parties of sizes N_1..N_K.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Partition {
    sizes: Vec<usize>,
}

impl Partition {
    pub fn new(sizes: Vec<usize>) -> Result<Self, EnsembleError> {
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(EnsembleError::BadPartition(
                "partition needs at least one nonempty block".into(),
            ));
        }
        Ok(Self { sizes })
    }

    /// N/K oscillators per block; K must divide N.
    pub fn balanced(n: usize, k: usize) -> Result<Self, EnsembleError> {
        if n == 0 || k == 0 || !n.is_multiple_of(k) {
            let valid = (1..=n).filter(|d| n.is_multiple_of(*d)).collect();
            return Err(EnsembleError::InvalidDivision { n, k, valid });
        }
        Self::new(vec![n / k; k])
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn total(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn block_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_balanced(&self) -> bool {
        self.sizes.iter().all(|&s| s == self.sizes[0])
    }
}

/// Dimensionless parameter bundle: coupling R = kappa/(m omega^2), inverse
/// temperature beta = hbar omega/(k_B T), and time tau = omega t.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NaturalUnits {
    pub coupling: f64,
    pub beta: f64,
    pub tau: f64,
}

impl NaturalUnits {
    pub fn new(coupling: f64, beta: f64, tau: f64) -> Result<Self, EnsembleError> {
        if !coupling.is_finite() || coupling < 0.0 {
            return Err(EnsembleError::BadInput("coupling R must be >= 0".into()));
        }
        if !beta.is_finite() || beta <= 0.0 {
            return Err(EnsembleError::BadInput("beta must be positive".into()));
        }
        if !tau.is_finite() {
            return Err(EnsembleError::BadInput("tau must be finite".into()));
        }
        Ok(Self { coupling, beta, tau })
    }
}

/// Element a E + b P of the commutative algebra generated by the identity
/// and the rank-one projector P = n n^T / dim onto the all-ones direction.
///
/// Eigenvalues: `a` on the complement of n (multiplicity dim - 1) and
/// `a + b` along n.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgebraElement {
    pub iso: f64,
    pub proj: f64,
    pub dim: usize,
}

impl AlgebraElement {
    pub fn new(iso: f64, proj: f64, dim: usize) -> Self {
        assert!(dim >= 1);
        Self { iso, proj, dim }
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(1.0, 0.0, dim)
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(0.0, 0.0, dim)
    }

    pub fn eigen_perp(&self) -> f64 {
        self.iso
    }

    pub fn eigen_para(&self) -> f64 {
        self.iso + self.proj
    }

    pub fn from_eigs(perp: f64, para: f64, dim: usize) -> Self {
        Self::new(perp, para - perp, dim)
    }

    /// Applies a scalar function on both eigenspaces.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_eigs(f(self.eigen_perp()), f(self.eigen_para()), self.dim)
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        Self::from_eigs(
            self.eigen_perp() * other.eigen_perp(),
            self.eigen_para() * other.eigen_para(),
            self.dim,
        )
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        Self::new(self.iso + other.iso, self.proj + other.proj, self.dim)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.iso * s, self.proj * s, self.dim)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let d = self.dim;
        let mut m = DMatrix::from_element(d, d, self.proj / d as f64);
        for i in 0..d {
            m[(i, i)] += self.iso;
        }
        m
    }

    /// Recovers (a, b) from a dense matrix, failing when the matrix lies
    /// outside the algebra.
    pub fn from_dense(m: &DMatrix<f64>, tol: f64) -> Result<Self, EnsembleError> {
        let d = m.nrows();
        if d == 0 || m.ncols() != d {
            return Err(EnsembleError::BadInput("matrix must be square".into()));
        }
        let trace = m.diagonal().sum();
        let total: f64 = m.iter().sum();
        // trace = a d + b, total = a d + b d.
        let (iso, proj) = if d == 1 {
            (0.0, m[(0, 0)])
        } else {
            let proj = (total - trace) / (d as f64 - 1.0);
            let iso = (trace - proj) / d as f64;
            (iso, proj)
        };
        let candidate = Self::new(iso, proj, d);
        let residual = (m - candidate.to_dense())
            .iter()
            .map(|v| v.abs())
            .fold(0.0, f64::max);
        if residual > tol {
            return Err(EnsembleError::NotInAlgebra { residual });
        }
        Ok(candidate)
    }
}

/// Quadratic generator G_j = (1 + R N) E - R N_j P of one block.
pub fn block_generator(block_size: usize, n_total: usize, coupling: f64) -> AlgebraElement {
    AlgebraElement::new(
        1.0 + coupling * n_total as f64,
        -coupling * block_size as f64,
        block_size,
    )
}

/// Matrix square root of the block generator:
/// sqrt(1 + R N)(E - P) + sqrt(1 + R (N - N_j)) P.
pub fn sqrt_g(block_size: usize, n_total: usize, coupling: f64) -> AlgebraElement {
    assert!(coupling >= 0.0, "coupling must be nonnegative");
    block_generator(block_size, n_total, coupling).map(f64::sqrt)
}

/// Covariance of one block: quadrants xx, xp, pp, each an algebra element
/// (six scalar coefficients in total). The xp quadrant is symmetric inside
/// the algebra, so the block is symmetric by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructuredBlock {
    pub xx: AlgebraElement,
    pub xp: AlgebraElement,
    pub pp: AlgebraElement,
}

impl StructuredBlock {
    pub fn new(xx: AlgebraElement, xp: AlgebraElement, pp: AlgebraElement) -> Self {
        assert!(xx.dim == xp.dim && xp.dim == pp.dim);
        Self { xx, xp, pp }
    }

    /// Isotropic thermal block, sigma on both diagonal quadrants.
    pub fn thermal(sigma: f64, dim: usize) -> Self {
        Self::new(
            AlgebraElement::new(sigma, 0.0, dim),
            AlgebraElement::zero(dim),
            AlgebraElement::new(sigma, 0.0, dim),
        )
    }

    pub fn dim(&self) -> usize {
        self.xx.dim
    }

    /// The six coefficients (a_xx, b_xx, a_xp, b_xp, a_pp, b_pp).
    pub fn coefficients(&self) -> [f64; 6] {
        [
            self.xx.iso,
            self.xx.proj,
            self.xp.iso,
            self.xp.proj,
            self.pp.iso,
            self.pp.proj,
        ]
    }

    /// Positive definiteness of the xx and pp quadrants.
    pub fn validate(&self) -> Result<(), EnsembleError> {
        for (name, q) in [("xx", &self.xx), ("pp", &self.pp)] {
            if q.eigen_perp() <= 0.0 && q.dim > 1 || q.eigen_para() <= 0.0 {
                return Err(EnsembleError::BadInput(format!(
                    "{name} quadrant is not positive definite"
                )));
            }
        }
        Ok(())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(2 * d, 2 * d);
        m.view_mut((0, 0), (d, d)).copy_from(&self.xx.to_dense());
        m.view_mut((0, d), (d, d)).copy_from(&self.xp.to_dense());
        m.view_mut((d, 0), (d, d)).copy_from(&self.xp.to_dense());
        m.view_mut((d, d), (d, d)).copy_from(&self.pp.to_dense());
        m
    }

    pub fn from_dense(m: &DMatrix<f64>, tol: f64) -> Result<Self, EnsembleError> {
        let rows = m.nrows();
        if !rows.is_multiple_of(2) || m.ncols() != rows {
            return Err(EnsembleError::BadInput(
                "block must be square with even dimension".into(),
            ));
        }
        let d = rows / 2;
        let xx = AlgebraElement::from_dense(&m.view((0, 0), (d, d)).into_owned(), tol)?;
        let xp = AlgebraElement::from_dense(&m.view((0, d), (d, d)).into_owned(), tol)?;
        let px = AlgebraElement::from_dense(&m.view((d, 0), (d, d)).into_owned(), tol)?;
        let pp = AlgebraElement::from_dense(&m.view((d, d), (d, d)).into_owned(), tol)?;
        let asym = (xp.iso - px.iso).abs().max((xp.proj - px.proj).abs());
        if asym > tol {
            return Err(EnsembleError::NotInAlgebra { residual: asym });
        }
        Ok(Self::new(xx, xp, pp))
    }
}

/// Propagates one covariance block by C -> S_j(tau) C S_j(tau)^T entirely
/// inside the algebra: on each eigenspace of G_j the update is scalar, so
/// the cost is independent of the block size.
pub fn propagate_block(
    c0: &StructuredBlock,
    n_total: usize,
    coupling: f64,
    tau: f64,
) -> StructuredBlock {
    let dim = c0.dim();
    let g = block_generator(dim, n_total, coupling);
    let branch = |pick: fn(&AlgebraElement) -> f64| -> (f64, f64, f64) {
        let w = pick(&g).sqrt();
        let (sin, cos) = (w * tau).sin_cos();
        let a = pick(&c0.xx);
        let b = pick(&c0.xp);
        let d = pick(&c0.pp);
        let u = sin / w;
        let v = sin * w;
        (
            cos * cos * a + 2.0 * cos * u * b + u * u * d,
            -cos * v * a + (cos * cos - u * v) * b + cos * u * d,
            v * v * a - 2.0 * cos * v * b + cos * cos * d,
        )
    };
    let perp = branch(AlgebraElement::eigen_perp);
    let para = branch(AlgebraElement::eigen_para);
    StructuredBlock::new(
        AlgebraElement::from_eigs(perp.0, para.0, dim),
        AlgebraElement::from_eigs(perp.1, para.1, dim),
        AlgebraElement::from_eigs(perp.2, para.2, dim),
    )
}

/// Dense symplectic propagator of one block, assembled from algebra
/// functions of G_j; used for cross-checks against the structured path.
pub fn block_symplectic_dense(
    block_size: usize,
    n_total: usize,
    coupling: f64,
    tau: f64,
) -> DMatrix<f64> {
    let g = block_generator(block_size, n_total, coupling);
    let cos = g.map(|x| (x.sqrt() * tau).cos()).to_dense();
    let u = g.map(|x| (x.sqrt() * tau).sin() / x.sqrt()).to_dense();
    let v = g.map(|x| (x.sqrt() * tau).sin() * x.sqrt()).to_dense();
    let d = block_size;
    let mut s = DMatrix::zeros(2 * d, 2 * d);
    s.view_mut((0, 0), (d, d)).copy_from(&cos);
    s.view_mut((0, d), (d, d)).copy_from(&u);
    s.view_mut((d, 0), (d, d)).copy_from(&(-v));
    s.view_mut((d, d), (d, d)).copy_from(&cos);
    s
}

/// Mean thermal quadrature variance 1/2 + e^{-beta}/(1 - e^{-beta}).
pub fn thermal_sigma(beta: f64) -> Result<f64, EnsembleError> {
    if !beta.is_finite() || beta <= 0.0 {
        return Err(EnsembleError::BadInput("beta must be positive".into()));
    }
    let e = (-beta).exp();
    Ok(0.5 + e / (1.0 - e))
}

/// Blockwise covariance state, one structured block per party.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCovariance {
    partition: Partition,
    blocks: Vec<StructuredBlock>,
}

impl BlockCovariance {
    pub fn new(partition: Partition, blocks: Vec<StructuredBlock>) -> Result<Self, EnsembleError> {
        if partition.block_count() != blocks.len()
            || partition
                .sizes()
                .iter()
                .zip(&blocks)
                .any(|(&s, b)| s != b.dim())
        {
            return Err(EnsembleError::BadPartition(
                "blocks must match the partition sizes".into(),
            ));
        }
        Ok(Self { partition, blocks })
    }

    /// Thermal state of the uncoupled system: sigma on every quadrature,
    /// vanishing cross moments and first moments.
    pub fn thermal(beta: f64, partition: &Partition) -> Result<Self, EnsembleError> {
        let sigma = thermal_sigma(beta)?;
        let blocks = partition
            .sizes()
            .iter()
            .map(|&d| StructuredBlock::thermal(sigma, d))
            .collect();
        Self::new(partition.clone(), blocks)
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn blocks(&self) -> &[StructuredBlock] {
        &self.blocks
    }

    pub fn propagate(&self, coupling: f64, tau: f64) -> Self {
        let n = self.partition.total();
        Self {
            partition: self.partition.clone(),
            blocks: self
                .blocks
                .iter()
                .map(|b| propagate_block(b, n, coupling, tau))
                .collect(),
        }
    }

    /// Variance of the mean momentum Pi = sum_k pi_k / N.
    pub fn variance_mean_momentum(&self) -> f64 {
        let n = self.partition.total() as f64;
        self.blocks
            .iter()
            .map(|b| b.dim() as f64 * b.pp.eigen_para())
            .sum::<f64>()
            / (n * n)
    }

    /// Assembles the full 2N x 2N covariance (positions first, then
    /// momenta); off-party correlations vanish in the separable dynamics.
    pub fn to_dense(&self) -> DenseCovariance {
        let n = self.partition.total();
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        let mut offset = 0;
        for block in &self.blocks {
            let d = block.dim();
            m.view_mut((offset, offset), (d, d))
                .copy_from(&block.xx.to_dense());
            m.view_mut((offset, n + offset), (d, d))
                .copy_from(&block.xp.to_dense());
            m.view_mut((n + offset, offset), (d, d))
                .copy_from(&block.xp.to_dense());
            m.view_mut((n + offset, n + offset), (d, d))
                .copy_from(&block.pp.to_dense());
            offset += d;
        }
        DenseCovariance { matrix: m }
    }
}

/// Full 2N x 2N real symmetric covariance, ordered (xi_1..xi_N, pi_1..pi_N).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseCovariance {
    matrix: DMatrix<f64>,
}

impl DenseCovariance {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self, EnsembleError> {
        let rows = matrix.nrows();
        if rows == 0 || !rows.is_multiple_of(2) || matrix.ncols() != rows {
            return Err(EnsembleError::BadInput(
                "covariance must be square with even dimension".into(),
            ));
        }
        let asym = (&matrix - matrix.transpose())
            .iter()
            .map(|v| v.abs())
            .fold(0.0, f64::max);
        if asym > 1e-12 {
            return Err(EnsembleError::BadInput(format!(
                "covariance asymmetry {asym:.3e} exceeds 1e-12"
            )));
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn n_oscillators(&self) -> usize {
        self.matrix.nrows() / 2
    }

    pub fn variance_mean_momentum(&self) -> f64 {
        let n = self.n_oscillators();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += self.matrix[(n + i, n + j)];
            }
        }
        acc / (n * n) as f64
    }

    pub fn max_abs_diff(&self, other: &DenseCovariance) -> f64 {
        (&self.matrix - &other.matrix)
            .iter()
            .map(|v| v.abs())
            .fold(0.0, f64::max)
    }
}

/// Dense generator of the separable dynamics: block-diagonal G with
/// G_j = (1 + R N) E - R n_j n_j^T. The trivial partition K = 1 yields the
/// entangled (full) dynamics.
pub fn dense_g(partition: &Partition, coupling: f64) -> DMatrix<f64> {
    let n = partition.total();
    let mut g = DMatrix::zeros(n, n);
    let mut offset = 0;
    for &d in partition.sizes() {
        g.view_mut((offset, offset), (d, d))
            .copy_from(&block_generator(d, n, coupling).to_dense());
        offset += d;
    }
    g
}

/// Integrates the covariance matrix ODE dC/dtau = A C + C A^T with
/// A = [[0, E], [-G, 0]], sampling at `tau_grid`. This is the slow, generic
/// reference path for validating the structured propagator.
pub fn dense_oracle(
    c0: &DenseCovariance,
    g: &DMatrix<f64>,
    tau_grid: &[f64],
) -> Result<Vec<DenseCovariance>, EnsembleError> {
    let n = c0.n_oscillators();
    if n > DENSE_ORACLE_MAX_N {
        return Err(EnsembleError::OracleTooLarge {
            n,
            max: DENSE_ORACLE_MAX_N,
        });
    }
    if g.nrows() != n || g.ncols() != n {
        return Err(EnsembleError::BadInput(
            "generator dimension must match the covariance".into(),
        ));
    }
    let dim = 2 * n;
    let y0: Vec<f64> = c0.matrix.as_slice().to_vec();
    let solver = Dopri5 {
        rtol: 1e-13,
        atol: 1e-14,
        ..Default::default()
    };
    let mut c_buf = DMatrix::zeros(dim, dim);
    let mut m_buf = DMatrix::zeros(dim, dim);
    let sol = solver
        .solve(&y0, tau_grid, |_, y, dy| {
            c_buf.as_mut_slice().copy_from_slice(y);
            // M = A C: top half = momentum rows of C, bottom = -G x position rows.
            let top = c_buf.rows(n, n).into_owned();
            let bottom = -(g * c_buf.rows(0, n));
            m_buf.rows_mut(0, n).copy_from(&top);
            m_buf.rows_mut(n, n).copy_from(&bottom);
            // dC = M + M^T (C stays symmetric).
            for i in 0..dim {
                for j in 0..dim {
                    dy[i + j * dim] = m_buf[(i, j)] + m_buf[(j, i)];
                }
            }
        })
        .map_err(|e| EnsembleError::BadInput(format!("oracle integration failed: {e}")))?;
    Ok(sol
        .states
        .into_iter()
        .map(|v| DenseCovariance {
            matrix: DMatrix::from_column_slice(dim, dim, &v),
        })
        .collect())
}

/// Closed-form variance of the mean momentum for a balanced K-partition of
/// an initially thermal ensemble:
/// V(tau) = (sigma/N) [1 + r_K sin^2(sqrt(1 + r_K) tau)] with
/// r_K = R N (1 - 1/K). For K = 1 the mean-momentum mode decouples and the
/// variance is constant.
pub fn variance_mean_momentum(
    partition: &Partition,
    coupling: f64,
    beta: f64,
    tau: f64,
) -> Result<f64, EnsembleError> {
    if !partition.is_balanced() {
        return Err(EnsembleError::UnbalancedPartition);
    }
    let sigma = thermal_sigma(beta)?;
    let n = partition.total() as f64;
    let r_k = amplification(partition.total(), partition.block_count(), coupling);
    let q = (1.0 + r_k).sqrt();
    Ok(sigma / n * (1.0 + r_k * (q * tau).sin().powi(2)))
}

/// Same in physical units, multiplied by hbar m omega.
pub fn variance_mean_momentum_physical(
    partition: &Partition,
    coupling: f64,
    beta: f64,
    tau: f64,
    hbar: f64,
    mass: f64,
    omega: f64,
) -> Result<f64, EnsembleError> {
    Ok(hbar * mass * omega * variance_mean_momentum(partition, coupling, beta, tau)?)
}

/// r_K = R N (1 - 1/K), the variance amplification factor of a balanced
/// K-partition.
pub fn amplification(n: usize, k: usize, coupling: f64) -> f64 {
    coupling * n as f64 * (1.0 - 1.0 / k as f64)
}

/// Propagates first moments (`<xi>`, `<pi>`) with the full-system symplectic
/// map. The separable and entangled first-moment dynamics coincide, so the
/// partition only validates dimensions; the all-ones mode rotates at unit
/// frequency, the complement at sqrt(1 + R N).
pub fn mean_propagation(
    xi: &[f64],
    pi: &[f64],
    partition: &Partition,
    coupling: f64,
    tau: f64,
) -> Result<(Vec<f64>, Vec<f64>), EnsembleError> {
    let n = partition.total();
    if xi.len() != n || pi.len() != n {
        return Err(EnsembleError::BadInput(
            "first moments must have one entry per oscillator".into(),
        ));
    }
    let nf = n as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / nf;
    let (mx, mp) = (mean(xi), mean(pi));
    // Parallel sector: G eigenvalue 1.
    let (s1, c1) = tau.sin_cos();
    let mx_new = c1 * mx + s1 * mp;
    let mp_new = -s1 * mx + c1 * mp;
    // Perpendicular sector: G eigenvalue 1 + R N.
    let w = (1.0 + coupling * nf).sqrt();
    let (sw, cw) = (w * tau).sin_cos();
    let mut xi_out = vec![0.0; n];
    let mut pi_out = vec![0.0; n];
    for i in 0..n {
        let dx = xi[i] - mx;
        let dp = pi[i] - mp;
        xi_out[i] = cw * dx + sw / w * dp + mx_new;
        pi_out[i] = -w * sw * dx + cw * dp + mp_new;
    }
    Ok((xi_out, pi_out))
}

/// One point of a variance-ratio sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub tau: f64,
    pub k: usize,
    pub ratio: f64,
}

/// Relative-variance curves V(tau)/V(0) per partition count, plus the locus
/// of first maxima (the dashed envelope (pi/(2 tau))^2 between the earliest
/// and latest peak).
#[derive(Debug, Clone, Serialize)]
pub struct SweepTable {
    pub n: usize,
    pub coupling: f64,
    pub rows: Vec<SweepRow>,
    pub envelope: Vec<(f64, f64)>,
}

/// Sweeps V(tau)/V(0) over the given partition counts. Each K's sample set
/// is the grid plus the exact peak time pi/(2 sqrt(1 + r_K)), so the curve
/// maxima are exact. The ratio is computed at two different temperatures
/// and asserted identical: the thermal occupation cancels.
pub fn variance_ratio_sweep(
    n: usize,
    k_list: &[usize],
    coupling: f64,
    tau_grid: &[f64],
) -> Result<SweepTable, EnsembleError> {
    if k_list.is_empty() || tau_grid.is_empty() {
        return Err(EnsembleError::BadInput(
            "need at least one K and one tau sample".into(),
        ));
    }
    let (beta_a, beta_b) = (1.0, 2.5);
    let mut rows = Vec::new();
    let mut peaks = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let partition = Partition::balanced(n, k)?;
        let v0_a = variance_mean_momentum(&partition, coupling, beta_a, 0.0)?;
        let v0_b = variance_mean_momentum(&partition, coupling, beta_b, 0.0)?;
        let r_k = amplification(n, k, coupling);
        let peak_tau = 0.5 * PI / (1.0 + r_k).sqrt();
        peaks.push(peak_tau);

        let mut taus: Vec<f64> = tau_grid.to_vec();
        if peak_tau > tau_grid[0] && peak_tau < *tau_grid.last().unwrap() {
            taus.push(peak_tau);
            taus.sort_by(f64::total_cmp);
        }
        for tau in taus {
            let ratio_a = variance_mean_momentum(&partition, coupling, beta_a, tau)? / v0_a;
            let ratio_b = variance_mean_momentum(&partition, coupling, beta_b, tau)? / v0_b;
            assert!(
                (ratio_a - ratio_b).abs() <= 1e-12,
                "variance ratio must not depend on the temperature"
            );
            rows.push(SweepRow { tau, k, ratio: ratio_a });
        }
    }
    let (lo, hi) = peaks
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| {
            (lo.min(p), hi.max(p))
        });
    let envelope = if lo < hi {
        let steps = 200;
        (0..=steps)
            .map(|i| {
                let tau = lo + (hi - lo) * i as f64 / steps as f64;
                (tau, (0.5 * PI / tau).powi(2))
            })
            .collect()
    } else {
        vec![(lo, (0.5 * PI / lo).powi(2))]
    };
    Ok(SweepTable {
        n,
        coupling,
        rows,
        envelope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thermal_sigma_limits() {
        // Ground state: the correction is ~2e-22 and vanishes in f64.
        let sigma = thermal_sigma(50.0).unwrap();
        assert!((sigma - 0.5).abs() <= 1e-20);
        // beta = ln 2 makes the occupation term exactly 1.
        let sigma2 = thermal_sigma(2.0_f64.ln()).unwrap();
        assert!((sigma2 - 1.5).abs() < 1e-12);
        assert!(thermal_sigma(0.0).is_err());
        assert!(thermal_sigma(-1.0).is_err());
    }

    #[test]
    fn thermal_covariance_is_isotropic_with_zero_cross_moments() {
        let partition = Partition::new(vec![2, 3]).unwrap();
        let cov = BlockCovariance::thermal(1.0, &partition).unwrap();
        let sigma = thermal_sigma(1.0).unwrap();
        for block in cov.blocks() {
            let [a_xx, b_xx, a_xp, b_xp, a_pp, b_pp] = block.coefficients();
            assert_eq!((a_xx, b_xx), (sigma, 0.0));
            assert_eq!((a_xp, b_xp), (0.0, 0.0));
            assert_eq!((a_pp, b_pp), (sigma, 0.0));
        }
    }

    #[test]
    fn sqrt_g_examples() {
        // R = 0: the generator is the identity.
        let s = sqrt_g(3, 9, 0.0);
        assert_eq!((s.iso, s.proj), (1.0, 0.0));

        // N = 4, K = 2, N_j = 2, R = 1: eigenvalues sqrt(5) and sqrt(3).
        let s = sqrt_g(2, 4, 1.0);
        assert!((s.eigen_perp() - 5.0_f64.sqrt()).abs() < 1e-15);
        assert!((s.eigen_para() - 3.0_f64.sqrt()).abs() < 1e-15);

        // (G^{1/2})^2 reconstructs G densely.
        let g = block_generator(3, 12, 0.4);
        let dense_sq = {
            let s = sqrt_g(3, 12, 0.4).to_dense();
            &s * &s
        };
        let diff = (dense_sq - g.to_dense())
            .iter()
            .map(|v| v.abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-12);
    }

    #[test]
    fn algebra_round_trip_and_rejection() {
        let e = AlgebraElement::new(1.7, -0.3, 4);
        let back = AlgebraElement::from_dense(&e.to_dense(), 1e-14).unwrap();
        assert!((back.iso - e.iso).abs() < 1e-14);
        assert!((back.proj - e.proj).abs() < 1e-14);

        let mut outside = e.to_dense();
        outside[(0, 1)] += 0.5;
        assert!(matches!(
            AlgebraElement::from_dense(&outside, 1e-10),
            Err(EnsembleError::NotInAlgebra { .. })
        ));
    }

    #[test]
    fn block_validation_requires_positive_definite_quadrants() {
        StructuredBlock::thermal(0.7, 3).validate().unwrap();
        let broken = StructuredBlock::new(
            AlgebraElement::new(-0.1, 0.0, 3),
            AlgebraElement::zero(3),
            AlgebraElement::identity(3),
        );
        assert!(broken.validate().is_err());
        // A negative projector coefficient that keeps both eigenvalues
        // positive is still fine.
        let skewed = StructuredBlock::new(
            AlgebraElement::new(1.0, -0.5, 3),
            AlgebraElement::zero(3),
            AlgebraElement::new(1.0, 0.5, 3),
        );
        skewed.validate().unwrap();
    }

    #[test]
    fn structured_block_round_trip() {
        let block = StructuredBlock::new(
            AlgebraElement::new(1.2, 0.4, 3),
            AlgebraElement::new(-0.1, 0.2, 3),
            AlgebraElement::new(0.9, -0.2, 3),
        );
        let back = StructuredBlock::from_dense(&block.to_dense(), 1e-14).unwrap();
        for (a, b) in block.coefficients().iter().zip(back.coefficients()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn uncoupled_thermal_block_is_stationary() {
        let block = StructuredBlock::thermal(1.3, 4);
        for tau in [0.0, 0.4, 2.0, 17.0] {
            let out = propagate_block(&block, 8, 0.0, tau);
            for (a, b) in out.coefficients().iter().zip(block.coefficients()) {
                assert!((a - b).abs() < 1e-13, "tau = {tau}");
            }
        }
    }

    #[test]
    fn zero_time_is_identity_map() {
        let block = StructuredBlock::new(
            AlgebraElement::new(0.9, 0.3, 2),
            AlgebraElement::new(0.1, -0.05, 2),
            AlgebraElement::new(1.1, 0.0, 2),
        );
        let out = propagate_block(&block, 6, 0.7, 0.0);
        for (a, b) in out.coefficients().iter().zip(block.coefficients()) {
            // Exact up to the eigenbasis round trip.
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn structured_propagation_matches_dense_s_c_st() {
        let block = StructuredBlock::new(
            AlgebraElement::new(1.4, -0.2, 3),
            AlgebraElement::new(0.2, 0.1, 3),
            AlgebraElement::new(0.8, 0.3, 3),
        );
        let (n_total, coupling, tau) = (9, 0.35, 1.23);
        let fast = propagate_block(&block, n_total, coupling, tau).to_dense();
        let s = block_symplectic_dense(3, n_total, coupling, tau);
        let slow = &s * block.to_dense() * s.transpose();
        let diff = (fast - slow).iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(diff < 1e-12);
    }

    #[test]
    fn dense_symplectic_satisfies_s_j_st_equals_j() {
        let d = 4;
        let mut j = DMatrix::zeros(2 * d, 2 * d);
        for i in 0..d {
            j[(i, d + i)] = 1.0;
            j[(d + i, i)] = -1.0;
        }
        for tau in [0.3, 1.0, 4.7] {
            let s = block_symplectic_dense(d, 8, 0.25, tau);
            let res = (&s * &j * s.transpose() - &j)
                .iter()
                .map(|v| v.abs())
                .fold(0.0, f64::max);
            assert!(res < 1e-10, "tau = {tau}: {res:.3e}");
        }
    }

    #[test]
    fn oracle_keeps_isotropic_covariance_constant_for_identity_generator() {
        let n = 3;
        let sigma = 0.9;
        let c0 = DenseCovariance::new(DMatrix::identity(2 * n, 2 * n) * sigma).unwrap();
        let g = DMatrix::identity(n, n);
        let taus = [0.0, 0.5, 1.5];
        let out = dense_oracle(&c0, &g, &taus).unwrap();
        for c in &out {
            assert!(c.max_abs_diff(&c0) < 1e-10);
        }
    }

    #[test]
    fn entangled_mean_momentum_variance_is_constant() {
        // K = 1: the center-of-mass mode decouples, r_1 = 0.
        let n = 6;
        let partition = Partition::balanced(n, 1).unwrap();
        let c0 = BlockCovariance::thermal(0.8, &partition).unwrap().to_dense();
        let g = dense_g(&partition, 0.7);
        let taus: Vec<f64> = (0..=10).map(|i| i as f64 * 0.3).collect();
        let out = dense_oracle(&c0, &g, &taus).unwrap();
        let v0 = out[0].variance_mean_momentum();
        for c in &out {
            assert!((c.variance_mean_momentum() - v0).abs() < 1e-10);
        }
    }

    #[test]
    fn oracle_agrees_with_matrix_function_closed_form() {
        // Entangled case at N = 8 against S(tau) C0 S(tau)^T with S built
        // from the spectral functions of G.
        let n = 8;
        let partition = Partition::balanced(n, 1).unwrap();
        let c0 = BlockCovariance::thermal(1.2, &partition).unwrap().to_dense();
        let g = dense_g(&partition, 0.3);
        let tau = 2.4;
        let oracle = dense_oracle(&c0, &g, &[0.0, tau]).unwrap();
        let s = block_symplectic_dense(n, n, 0.3, tau);
        let closed = &s * c0.matrix() * s.transpose();
        let diff = (oracle[1].matrix() - closed)
            .iter()
            .map(|v| v.abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-9, "{diff:.3e}");
    }

    #[test]
    fn oracle_handles_covariances_outside_the_structured_algebra() {
        // A correlated initial covariance that no StructuredBlock can
        // represent; the dense path is the designated fallback and must
        // still agree with the matrix-function closed form.
        let n = 4;
        let mut c0 = DMatrix::identity(2 * n, 2 * n);
        c0[(0, 1)] = 0.3;
        c0[(1, 0)] = 0.3;
        c0[(2, n + 3)] = -0.15;
        c0[(n + 3, 2)] = -0.15;
        let c0 = DenseCovariance::new(c0).unwrap();
        assert!(StructuredBlock::from_dense(c0.matrix(), 1e-10).is_err());

        let partition = Partition::balanced(n, 1).unwrap();
        let coupling = 0.45;
        let g = dense_g(&partition, coupling);
        let tau = 1.8;
        let oracle = dense_oracle(&c0, &g, &[0.0, tau]).unwrap();
        let s = block_symplectic_dense(n, n, coupling, tau);
        let closed = &s * c0.matrix() * s.transpose();
        let diff = (oracle[1].matrix() - closed)
            .iter()
            .map(|v| v.abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-10, "{diff:.3e}");
    }

    #[test]
    fn structured_matches_oracle_on_a_balanced_three_way_partition() {
        let partition = Partition::balanced(12, 3).unwrap();
        let (coupling, beta, tau) = (0.1, 1.0, 0.7);
        let cov = BlockCovariance::thermal(beta, &partition).unwrap();
        let fast = cov.propagate(coupling, tau).to_dense();
        let g = dense_g(&partition, coupling);
        let oracle = dense_oracle(&cov.to_dense(), &g, &[0.0, tau]).unwrap();
        assert!(fast.max_abs_diff(&oracle[1]) <= 1e-9);
    }

    #[test]
    fn structured_matches_oracle_on_a_mixed_partition() {
        let partition = Partition::new(vec![2, 1, 3]).unwrap();
        let (coupling, beta, tau) = (0.4, 1.1, 0.9);
        let cov = BlockCovariance::thermal(beta, &partition).unwrap();
        let fast = cov.propagate(coupling, tau).to_dense();
        let g = dense_g(&partition, coupling);
        let oracle = dense_oracle(&cov.to_dense(), &g, &[0.0, tau]).unwrap();
        assert!(fast.max_abs_diff(&oracle[1]) < 1e-10);
    }

    #[test]
    fn closed_form_variance_examples() {
        let partition = Partition::balanced(12, 3).unwrap();
        let (coupling, beta) = (0.1, 1.0);
        let sigma = thermal_sigma(beta).unwrap();
        // tau = 0: sigma/N, ratio 1.
        let v0 = variance_mean_momentum(&partition, coupling, beta, 0.0).unwrap();
        assert!((v0 - sigma / 12.0).abs() < 1e-15);

        // K = 1 is constant.
        let trivial = Partition::balanced(12, 1).unwrap();
        for tau in [0.0, 0.7, 3.0] {
            let v = variance_mean_momentum(&trivial, coupling, beta, tau).unwrap();
            assert!((v - sigma / 12.0).abs() < 1e-15);
        }

        // Unbalanced partitions are rejected.
        let lopsided = Partition::new(vec![1, 11]).unwrap();
        assert!(matches!(
            variance_mean_momentum(&lopsided, coupling, beta, 0.0),
            Err(EnsembleError::UnbalancedPartition)
        ));
    }

    #[test]
    fn physical_units_variant_scales_by_hbar_m_omega() {
        let partition = Partition::balanced(6, 2).unwrap();
        let (coupling, beta, tau) = (0.2, 1.3, 0.9);
        let natural = variance_mean_momentum(&partition, coupling, beta, tau).unwrap();
        let (hbar, mass, omega) = (1.0545718e-34, 2.0e-26, 5.0e5);
        let physical = variance_mean_momentum_physical(
            &partition, coupling, beta, tau, hbar, mass, omega,
        )
        .unwrap();
        assert!((physical - hbar * mass * omega * natural).abs() <= 1e-12 * physical.abs());
    }

    #[test]
    fn natural_units_validation() {
        assert!(NaturalUnits::new(0.0, 1.0, 0.0).is_ok());
        assert!(NaturalUnits::new(-0.1, 1.0, 0.0).is_err());
        assert!(NaturalUnits::new(0.1, 0.0, 0.0).is_err());
        assert!(NaturalUnits::new(0.1, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn macroscopic_ensemble_amplification_numbers() {
        // N = 10!, K = 10, R = 1e-6.
        let n = 3_628_800;
        let r_k = amplification(n, 10, 1e-6);
        assert!((r_k - 3.26592).abs() < 1e-9);
        let max_ratio = 1.0 + r_k;
        assert!((max_ratio - 4.26592).abs() < 1e-9);
        let half_period = PI / (1.0 + r_k).sqrt();
        assert!((half_period - 1.5210).abs() < 1e-4);
    }

    #[test]
    fn structured_variance_matches_closed_form() {
        let n = 12;
        for k in [1, 2, 3, 4, 6, 12] {
            let partition = Partition::balanced(n, k).unwrap();
            let cov = BlockCovariance::thermal(0.9, &partition).unwrap();
            for tau in [0.0, 0.4, 1.7, 6.0] {
                let fast = cov.propagate(0.2, tau).variance_mean_momentum();
                let closed = variance_mean_momentum(&partition, 0.2, 0.9, tau).unwrap();
                assert!((fast - closed).abs() <= 1e-12, "K = {k}, tau = {tau}");
            }
        }
    }

    #[test]
    fn mean_propagation_examples() {
        let partition = Partition::balanced(4, 2).unwrap();
        // Zero moments stay zero.
        let (xi, pi) = mean_propagation(&[0.0; 4], &[0.0; 4], &partition, 0.3, 1.7).unwrap();
        assert!(xi.iter().chain(&pi).all(|v| v.abs() < 1e-15));

        // R = 0: unit-frequency rotation in every (xi_k, pi_k) plane.
        let xi0 = [1.0, -0.5, 0.2, 0.0];
        let pi0 = [0.0, 0.3, -0.1, 1.0];
        let tau = 0.8;
        let (xi, pi) = mean_propagation(&xi0, &pi0, &partition, 0.0, tau).unwrap();
        let (s, c) = tau.sin_cos();
        for i in 0..4 {
            assert!((xi[i] - (c * xi0[i] + s * pi0[i])).abs() < 1e-14);
            assert!((pi[i] - (-s * xi0[i] + c * pi0[i])).abs() < 1e-14);
        }

        // The partition does not affect the first moments.
        let other = Partition::balanced(4, 1).unwrap();
        let (xi_a, pi_a) = mean_propagation(&xi0, &pi0, &partition, 0.6, 1.1).unwrap();
        let (xi_b, pi_b) = mean_propagation(&xi0, &pi0, &other, 0.6, 1.1).unwrap();
        for i in 0..4 {
            assert!((xi_a[i] - xi_b[i]).abs() < 1e-12);
            assert!((pi_a[i] - pi_b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn sweep_properties() {
        let n = 3_628_800;
        let ks: Vec<usize> = (2..=10).collect();
        let taus: Vec<f64> = (0..=400).map(|i| i as f64 * 0.01).collect();
        let table = variance_ratio_sweep(n, &ks, 1e-6, &taus).unwrap();
        assert!(table.rows.iter().all(|r| r.ratio >= 1.0 - 1e-12));

        // Early growth is ordered in K.
        let probe = 0.1;
        let at_probe: Vec<f64> = ks
            .iter()
            .map(|&k| {
                table
                    .rows
                    .iter()
                    .find(|r| r.k == k && (r.tau - probe).abs() < 1e-12)
                    .unwrap()
                    .ratio
            })
            .collect();
        assert!(at_probe.windows(2).all(|w| w[1] > w[0]));

        // Envelope touches each curve's maximum.
        for &k in &ks {
            let r_k = amplification(n, k, 1e-6);
            let peak = table
                .rows
                .iter()
                .filter(|r| r.k == k)
                .map(|r| r.ratio)
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((peak - (1.0 + r_k)).abs() < 1e-9, "K = {k}");
        }
    }

    #[test]
    fn invalid_partition_count_lists_divisors() {
        let err = Partition::balanced(12, 5).unwrap_err();
        match err {
            EnsembleError::InvalidDivision { valid, .. } => {
                assert_eq!(valid, vec![1, 2, 3, 4, 6, 12]);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn uncertainty_relation_is_preserved_along_propagation() {
        use num_complex::Complex64 as C64;
        let partition = Partition::new(vec![2, 2]).unwrap();
        let cov = BlockCovariance::thermal(2.0, &partition).unwrap();
        let n = partition.total();
        for tau in [0.0, 0.9, 3.1] {
            let dense = cov.propagate(0.5, tau).to_dense();
            let dim = 2 * n;
            let mut herm = DMatrix::from_fn(dim, dim, |i, j| C64::new(dense.matrix()[(i, j)], 0.0));
            for i in 0..n {
                herm[(i, n + i)] += C64::new(0.0, 0.5);
                herm[(n + i, i)] -= C64::new(0.0, 0.5);
            }
            let eig = herm.symmetric_eigen();
            let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(min >= -1e-9, "tau = {tau}: {min:.3e}");
        }
    }
}
