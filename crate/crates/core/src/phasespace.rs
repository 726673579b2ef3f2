//! Wigner functions of truncated Fock-basis states and Liouville transport
//! of phase-space distributions along invertible classical flows.
//!
//! Phase-space convention: grid coordinates are the real and imaginary parts
//! of the coherent amplitude, alpha = x + i p. With the quadrature pair
//! (q, pq) defined through alpha = (q + i pq)/sqrt(2), a grid point (x, p)
//! sits at position q = sqrt(2) x and momentum pq = sqrt(2) p. The area
//! element is d^2alpha = dx dp, so a normalized state integrates to one on a
//! window containing its support.

use std::f64::consts::FRAC_2_PI;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{ln_factorial_table, poisson_tail};

/// Truncation budget for the Fock tail of constructed states.
pub const TRUNCATION_BUDGET: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum PhaseSpaceError {
    #[error("cutoff {given} too small; tail mass {tail:.3e} exceeds {budget:.1e} (need cutoff >= {required})")]
    InsufficientCutoff {
        given: usize,
        required: usize,
        tail: f64,
        budget: f64,
    },
    #[error("degenerate superposition: squared norm {norm_sq:.3e} below 1e-12")]
    DegenerateState { norm_sq: f64 },
    #[error("grid mass {found:.6} outside the window tolerance around 1")]
    NormalizationOutOfRange { found: f64 },
    #[error("flow inverse(forward(alpha)) deviates by {residual:.3e}")]
    FlowInconsistent { residual: f64 },
    #[error("invalid density: {0}")]
    InvalidDensity(String),
    #[error("{0}")]
    BadInput(String),
}

/// Pure state in the truncated photon-number basis, coefficients c_0..c_cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct FockVector {
    coeffs: Vec<C64>,
}

impl FockVector {
    /// Wraps raw coefficients; callers are responsible for normalization.
    pub fn from_coeffs(coeffs: Vec<C64>) -> Result<Self, PhaseSpaceError> {
        if coeffs.is_empty() {
            return Err(PhaseSpaceError::BadInput("empty coefficient vector".into()));
        }
        if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(PhaseSpaceError::BadInput("non-finite coefficient".into()));
        }
        Ok(Self { coeffs })
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn cutoff(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn norm(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|c| c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Mass in the top five coefficient slots; small values certify that the
    /// truncation window is wide enough.
    pub fn tail_mass(&self) -> f64 {
        let start = self.coeffs.len().saturating_sub(5);
        self.coeffs[start..].iter().map(|c| c.norm_sqr()).sum()
    }

    /// Expectation of the annihilation operator, sum_n sqrt(n) c*_{n-1} c_n.
    pub fn mean_annihilation(&self) -> C64 {
        self.coeffs
            .windows(2)
            .enumerate()
            .map(|(n, w)| w[0].conj() * w[1] * ((n + 1) as f64).sqrt())
            .sum()
    }

    pub fn mean_photon_number(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(n, c)| n as f64 * c.norm_sqr())
            .sum()
    }

    /// Applies the number-operator phase c_n -> e^{i n theta} c_n (a phase-space
    /// rotation by theta).
    pub fn rotated(&self, theta: f64) -> Self {
        Self {
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .map(|(n, c)| c * C64::from_polar(1.0, n as f64 * theta))
                .collect(),
        }
    }

    pub fn overlap(&self, other: &FockVector) -> C64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn to_density(&self) -> FockDensity {
        FockDensity::from_pure(self)
    }
}

/// Coherent state |alpha> truncated at `cutoff`, c_n = e^{-|a|^2/2} a^n/sqrt(n!),
/// renormalized after truncation.
///
/// Fails unless the Poisson tail beyond the cutoff is below the truncation
/// budget; the error carries the smallest sufficient cutoff.
pub fn coherent_fock(alpha: C64, cutoff: usize) -> Result<FockVector, PhaseSpaceError> {
    let lambda = alpha.norm_sqr();
    let tail = poisson_tail(lambda, cutoff);
    if tail > TRUNCATION_BUDGET {
        let mut required = cutoff + 1;
        while poisson_tail(lambda, required) > TRUNCATION_BUDGET {
            required += 1;
        }
        return Err(PhaseSpaceError::InsufficientCutoff {
            given: cutoff,
            required,
            tail,
            budget: TRUNCATION_BUDGET,
        });
    }
    let mut coeffs = Vec::with_capacity(cutoff + 1);
    let mut c = C64::new((-0.5 * lambda).exp(), 0.0);
    coeffs.push(c);
    for n in 1..=cutoff {
        c = c * alpha / (n as f64).sqrt();
        coeffs.push(c);
    }
    let mut state = FockVector { coeffs };
    let norm = state.norm();
    for c in &mut state.coeffs {
        *c /= norm;
    }
    Ok(state)
}

/// Normalized two-branch superposition (|a1> + sign |a2>)/N with
/// N^2 = 2 + 2 sign Re<a1|a2> and <a1|a2> = e^{-(|a1|^2+|a2|^2)/2} e^{a1* a2}.
pub fn cat_fock(
    alpha1: C64,
    alpha2: C64,
    rel_sign: f64,
    cutoff: usize,
) -> Result<FockVector, PhaseSpaceError> {
    assert!(
        rel_sign == 1.0 || rel_sign == -1.0,
        "relative sign must be +1 or -1"
    );
    let b1 = coherent_fock(alpha1, cutoff)?;
    let b2 = coherent_fock(alpha2, cutoff)?;
    let overlap = coherent_overlap(alpha1, alpha2);
    let norm_sq = 2.0 + 2.0 * rel_sign * overlap.re;
    if norm_sq < 1e-12 {
        return Err(PhaseSpaceError::DegenerateState { norm_sq });
    }
    let coeffs: Vec<C64> = b1
        .coeffs
        .iter()
        .zip(&b2.coeffs)
        .map(|(a, b)| a + b.scale(rel_sign))
        .collect();
    let mut state = FockVector { coeffs };
    let norm = state.norm();
    for c in &mut state.coeffs {
        *c /= norm;
    }
    Ok(state)
}

/// <a1|a2> for ideal (untruncated) coherent states.
pub fn coherent_overlap(alpha1: C64, alpha2: C64) -> C64 {
    (alpha1.conj() * alpha2 - 0.5 * (alpha1.norm_sqr() + alpha2.norm_sqr())).exp()
}

/// Density matrix in the truncated photon-number basis.
#[derive(Debug, Clone)]
pub struct FockDensity {
    matrix: DMatrix<C64>,
}

impl FockDensity {
    /// Outer product |psi><psi|; the state must be normalized for the unit
    /// trace invariant to hold.
    pub fn from_pure(state: &FockVector) -> Self {
        let n = state.coeffs.len();
        let mut matrix = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                matrix[(i, j)] = state.coeffs[i] * state.coeffs[j].conj();
            }
        }
        Self { matrix }
    }

    pub fn from_matrix(matrix: DMatrix<C64>) -> Result<Self, PhaseSpaceError> {
        if matrix.nrows() != matrix.ncols() || matrix.is_empty() {
            return Err(PhaseSpaceError::InvalidDensity(
                "density must be square and nonempty".into(),
            ));
        }
        let rho = Self { matrix };
        rho.validate()?;
        Ok(rho)
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn cutoff(&self) -> usize {
        self.matrix.nrows() - 1
    }

    /// Hermiticity within 1e-12, unit trace within 1e-10, eigenvalues above
    /// -1e-10.
    pub fn validate(&self) -> Result<(), PhaseSpaceError> {
        let m = &self.matrix;
        let herm_err = (m - m.adjoint()).iter().map(|v| v.norm()).fold(0.0, f64::max);
        if herm_err > 1e-12 {
            return Err(PhaseSpaceError::InvalidDensity(format!(
                "Hermiticity violation {herm_err:.3e}"
            )));
        }
        let trace: C64 = m.diagonal().iter().sum();
        if (trace.re - 1.0).abs() > 1e-10 || trace.im.abs() > 1e-12 {
            return Err(PhaseSpaceError::InvalidDensity(format!(
                "trace {trace} differs from 1"
            )));
        }
        let eig = m.clone().symmetric_eigen();
        let min_eig = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if min_eig < -1e-10 {
            return Err(PhaseSpaceError::InvalidDensity(format!(
                "negative eigenvalue {min_eig:.3e}"
            )));
        }
        Ok(())
    }

    fn diagonal_tail_mass(&self) -> f64 {
        let n = self.matrix.nrows();
        let start = n.saturating_sub(5);
        (start..n).map(|i| self.matrix[(i, i)].re).sum()
    }
}

/// Rectangular evaluation window in the alpha plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub x_min: f64,
    pub x_max: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub nx: usize,
    pub np: usize,
}

impl GridGeometry {
    pub fn new(
        x_range: (f64, f64),
        p_range: (f64, f64),
        nx: usize,
        np: usize,
    ) -> Result<Self, PhaseSpaceError> {
        let edges = [x_range.0, x_range.1, p_range.0, p_range.1];
        if edges.iter().any(|v| !v.is_finite())
            || x_range.0 >= x_range.1
            || p_range.0 >= p_range.1
            || nx < 2
            || np < 2
        {
            return Err(PhaseSpaceError::BadInput(
                "grid window must be nonempty with at least 2 points per axis".into(),
            ));
        }
        Ok(Self {
            x_min: x_range.0,
            x_max: x_range.1,
            p_min: p_range.0,
            p_max: p_range.1,
            nx,
            np,
        })
    }

    /// Square window [-6, 6]^2 at 301 x 301, adequate for |alpha| <= 3
    /// states.
    pub fn default_panel() -> Self {
        Self::new((-6.0, 6.0), (-6.0, 6.0), 301, 301).unwrap()
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    pub fn dp(&self) -> f64 {
        (self.p_max - self.p_min) / (self.np - 1) as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dp()
    }

    pub fn node(&self, ix: usize, ip: usize) -> C64 {
        C64::new(
            self.x_min + ix as f64 * self.dx(),
            self.p_min + ip as f64 * self.dp(),
        )
    }

    pub fn len(&self) -> usize {
        self.nx * self.np
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Real Wigner values on a rectangular grid, row-major over x then p.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WignerGrid {
    pub geometry: GridGeometry,
    pub values: Vec<f64>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl WignerGrid {
    pub fn value(&self, ix: usize, ip: usize) -> f64 {
        self.values[ix * self.geometry.np + ip]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Riemann quadrature of the grid, an estimate of the total mass
    /// integral W d^2alpha.
    pub fn quadrature_mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.geometry.cell_area()
    }

    /// CSV with header `x,p,w`, one row per node in row-major order, values
    /// in shortest round-trip decimal form.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,p,w")?;
        for ix in 0..self.geometry.nx {
            for ip in 0..self.geometry.np {
                let a = self.geometry.node(ix, ip);
                writeln!(out, "{},{},{}", a.re, a.im, self.value(ix, ip))?;
            }
        }
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> std::io::Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// JSON envelope carrying geometry metadata alongside the values.
    pub fn write_json<W: Write>(&self, out: W) -> serde_json::Result<()> {
        serde_json::to_writer(out, self)
    }
}

/// Wigner function of a density matrix by the displaced-parity kernel.
///
/// W(alpha) = (2/pi) sum_{m >= n} weight * Re[rho_{nm} (2 alpha)^{m-n}] with
/// kernel (-1)^n sqrt(n!/m!) e^{-2|alpha|^2} L_n^{m-n}(4|alpha|^2); the lower
/// triangle enters through Hermitian symmetry, so the accumulated value is
/// real by construction (no imaginary residue to discard). The associated
/// Laguerre values are generated by upward recurrence in n with e^{-2|alpha|^2}
/// folded into the seed so intermediates stay bounded.
pub fn wigner_of_density(rho: &FockDensity, geometry: &GridGeometry) -> WignerGrid {
    let kernel = WignerKernel::new(rho.matrix());
    let values: Vec<f64> = (0..geometry.len())
        .into_par_iter()
        .map(|idx| {
            let (ix, ip) = (idx / geometry.np, idx % geometry.np);
            kernel.eval(geometry.node(ix, ip))
        })
        .collect();
    let mut warnings = Vec::new();
    let tail = rho.diagonal_tail_mass();
    if tail > TRUNCATION_BUDGET {
        warnings.push(format!(
            "state occupies the top Fock levels (tail mass {tail:.3e}); \
             Wigner values far from the origin are truncation-limited"
        ));
    }
    WignerGrid {
        geometry: geometry.clone(),
        values,
        warnings,
    }
}

struct WignerKernel<'a> {
    rho: &'a DMatrix<C64>,
    ln_fact: Vec<f64>,
    /// ratio[k][n] = sqrt((n+1)/(n+1+k)), the prefactor update from n to n+1.
    ratio: Vec<Vec<f64>>,
}

impl<'a> WignerKernel<'a> {
    fn new(rho: &'a DMatrix<C64>) -> Self {
        let n_max = rho.nrows() - 1;
        let ln_fact = ln_factorial_table(n_max);
        let ratio = (0..=n_max)
            .map(|k| {
                (0..n_max.saturating_sub(k))
                    .map(|n| ((n + 1) as f64 / (n + 1 + k) as f64).sqrt())
                    .collect()
            })
            .collect();
        Self {
            rho,
            ln_fact,
            ratio,
        }
    }

    fn eval(&self, alpha: C64) -> f64 {
        let n_max = self.rho.nrows() - 1;
        let r2 = alpha.norm_sqr();
        let u = 4.0 * r2;
        let base = (-2.0 * r2).exp();

        // Diagonal: sum_n rho_nn (-1)^n e^{-u/2} L_n(u).
        let mut total = self.rho[(0, 0)].re * base;
        if n_max >= 1 {
            let mut m_prev = base;
            let mut m_curr = (1.0 - u) * base;
            let mut sign = -1.0;
            total += self.rho[(1, 1)].re * sign * m_curr;
            for n in 1..n_max {
                let m_next =
                    (((2 * n + 1) as f64 - u) * m_curr - n as f64 * m_prev) / (n + 1) as f64;
                m_prev = m_curr;
                m_curr = m_next;
                sign = -sign;
                total += self.rho[(n + 1, n + 1)].re * sign * m_curr;
            }
        }

        // Off-diagonals k = m - n >= 1, doubled real part by Hermiticity.
        let amp = 2.0 * r2.sqrt();
        if amp > 0.0 {
            let theta = alpha.arg();
            for k in 1..=n_max {
                let kf = k as f64;
                let mag0 = (kf * amp.ln() - 0.5 * self.ln_fact[k]).exp();
                if mag0 == 0.0 {
                    continue;
                }
                // (2 alpha)^k phase; magnitude tracked separately against
                // overflow for large k.
                let dir = C64::from_polar(1.0, kf * theta);
                let mut mag = mag0;
                let mut acc = C64::new(0.0, 0.0);
                let mut m_prev = base;
                acc += self.rho[(0, k)] * (mag * m_prev);
                if n_max - k >= 1 {
                    let mut m_curr = (1.0 + kf - u) * base;
                    mag *= self.ratio[k][0];
                    let mut sign = -1.0;
                    acc += self.rho[(1, k + 1)] * (sign * mag * m_curr);
                    for n in 1..(n_max - k) {
                        let m_next = (((2 * n + 1) as f64 + kf - u) * m_curr
                            - (n as f64 + kf) * m_prev)
                            / (n + 1) as f64;
                        m_prev = m_curr;
                        m_curr = m_next;
                        mag *= self.ratio[k][n];
                        sign = -sign;
                        acc += self.rho[(n + 1, n + 1 + k)] * (sign * mag * m_curr);
                    }
                }
                total += 2.0 * (acc * dir).re;
            }
        }
        FRAC_2_PI * total
    }
}

/// Invertible classical flow of the alpha plane.
#[derive(Clone)]
pub struct FlowMap {
    forward: Arc<dyn Fn(C64, f64) -> C64 + Send + Sync>,
    inverse: Arc<dyn Fn(C64, f64) -> C64 + Send + Sync>,
}

impl std::fmt::Debug for FlowMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("FlowMap {..}")
    }
}

impl FlowMap {
    pub fn new(
        forward: impl Fn(C64, f64) -> C64 + Send + Sync + 'static,
        inverse: impl Fn(C64, f64) -> C64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            forward: Arc::new(forward),
            inverse: Arc::new(inverse),
        }
    }

    pub fn forward(&self, alpha: C64, t: f64) -> C64 {
        (self.forward)(alpha, t)
    }

    pub fn inverse(&self, alpha: C64, t: f64) -> C64 {
        (self.inverse)(alpha, t)
    }

    /// Checks inverse(forward(alpha, t), t) = alpha on the given probes.
    pub fn check_consistency(
        &self,
        t: f64,
        probes: &[C64],
        tol: f64,
    ) -> Result<(), PhaseSpaceError> {
        let residual = probes
            .iter()
            .map(|&a| (self.inverse(self.forward(a, t), t) - a).norm())
            .fold(0.0, f64::max);
        if residual > tol {
            return Err(PhaseSpaceError::FlowInconsistent { residual });
        }
        Ok(())
    }
}

const FLOW_PROBES: [C64; 5] = [
    C64::new(0.3, 0.2),
    C64::new(-1.1, 0.7),
    C64::new(2.0, -1.5),
    C64::new(3.0, 0.0),
    C64::new(-0.4, -2.2),
];

/// Closed-form initial Wigner functions that can be evaluated pointwise
/// exactly, as needed for Liouville transport.
#[derive(Debug, Clone)]
pub enum AnalyticWigner {
    /// W(a) = (2/pi) e^{-2|a - a0|^2}.
    Coherent { alpha0: C64 },
    /// Two coherent branches plus their interference term.
    Cat {
        alpha1: C64,
        alpha2: C64,
        rel_sign: f64,
    },
}

impl AnalyticWigner {
    pub fn coherent(alpha0: C64) -> Self {
        Self::Coherent { alpha0 }
    }

    pub fn cat(alpha1: C64, alpha2: C64, rel_sign: f64) -> Result<Self, PhaseSpaceError> {
        assert!(rel_sign == 1.0 || rel_sign == -1.0);
        let norm_sq = 2.0 + 2.0 * rel_sign * coherent_overlap(alpha1, alpha2).re;
        if norm_sq < 1e-12 {
            return Err(PhaseSpaceError::DegenerateState { norm_sq });
        }
        Ok(Self::Cat {
            alpha1,
            alpha2,
            rel_sign,
        })
    }

    pub fn eval(&self, alpha: C64) -> f64 {
        match *self {
            Self::Coherent { alpha0 } => FRAC_2_PI * (-2.0 * (alpha - alpha0).norm_sqr()).exp(),
            Self::Cat {
                alpha1,
                alpha2,
                rel_sign,
            } => {
                let norm_sq = 2.0 + 2.0 * rel_sign * coherent_overlap(alpha1, alpha2).re;
                let g1 = (-2.0 * (alpha - alpha1).norm_sqr()).exp();
                let g2 = (-2.0 * (alpha - alpha2).norm_sqr()).exp();
                // Wigner transform of |a1><a2| is
                // (2/pi) <a2|a1> e^{-2 (a - a1)(a* - a2*)}.
                let cross = (coherent_overlap(alpha2, alpha1)
                    * (-2.0 * (alpha - alpha1) * (alpha.conj() - alpha2.conj())).exp())
                .re;
                FRAC_2_PI * (g1 + g2 + 2.0 * rel_sign * cross) / norm_sq
            }
        }
    }
}

/// Liouville transport: W_t(alpha) = W_0(flow.inverse(alpha, t)) on every
/// grid node. The flow is probed for forward/inverse consistency first.
pub fn wigner_pullback(
    w0: &AnalyticWigner,
    flow: &FlowMap,
    t: f64,
    geometry: &GridGeometry,
) -> Result<WignerGrid, PhaseSpaceError> {
    flow.check_consistency(t, &FLOW_PROBES, 1e-10)?;
    let values: Vec<f64> = (0..geometry.len())
        .into_par_iter()
        .map(|idx| {
            let (ix, ip) = (idx / geometry.np, idx % geometry.np);
            w0.eval(flow.inverse(geometry.node(ix, ip), t))
        })
        .collect();
    Ok(WignerGrid {
        geometry: geometry.clone(),
        values,
        warnings: Vec::new(),
    })
}

/// First moment of the grid, quadrature of alpha W / quadrature of W.
///
/// Requires the window to capture the state: total mass must be within 1e-2
/// of one.
pub fn mean_from_grid(grid: &WignerGrid) -> Result<C64, PhaseSpaceError> {
    let cell = grid.geometry.cell_area();
    let mut mass = 0.0;
    let mut first = C64::new(0.0, 0.0);
    for ix in 0..grid.geometry.nx {
        for ip in 0..grid.geometry.np {
            let w = grid.value(ix, ip) * cell;
            mass += w;
            first += grid.geometry.node(ix, ip) * w;
        }
    }
    if (mass - 1.0).abs() > 1e-2 {
        return Err(PhaseSpaceError::NormalizationOutOfRange { found: mass });
    }
    Ok(first / mass)
}

/// Quadrature of the transported distribution's mean, computed in the
/// initial frame: integral of flow.forward(beta, t) W_0(beta) d^2beta.
/// Equivalent to the mean of the pulled-back grid by measure preservation,
/// but free of the fine spiral structure the pullback develops at late
/// times, so a fixed quadrature grid stays accurate for all t.
///
/// The initial weights are evaluated once at construction; sampling many
/// times along a trajectory then only costs flow evaluations over the
/// support nodes.
#[derive(Debug, Clone)]
pub struct PushforwardMean {
    support: Vec<(C64, f64)>,
    mass: f64,
}

impl PushforwardMean {
    pub fn new(w0: &AnalyticWigner, geometry: &GridGeometry) -> Result<Self, PhaseSpaceError> {
        let cell = geometry.cell_area();
        let rows: Vec<(f64, Vec<(C64, f64)>)> = (0..geometry.nx)
            .into_par_iter()
            .map(|ix| {
                let mut mass = 0.0;
                let mut kept = Vec::new();
                for ip in 0..geometry.np {
                    let beta = geometry.node(ix, ip);
                    let w = w0.eval(beta) * cell;
                    mass += w;
                    if w.abs() > 1e-14 * cell {
                        kept.push((beta, w));
                    }
                }
                (mass, kept)
            })
            .collect();
        // Sequential reduction in row order keeps results bit-reproducible.
        let mut mass = 0.0;
        let mut support = Vec::new();
        for (m, kept) in rows {
            mass += m;
            support.extend(kept);
        }
        if (mass - 1.0).abs() > 1e-2 {
            return Err(PhaseSpaceError::NormalizationOutOfRange { found: mass });
        }
        Ok(Self { support, mass })
    }

    pub fn eval(&self, flow: &FlowMap, t: f64) -> C64 {
        let first: C64 = self
            .support
            .iter()
            .map(|&(beta, w)| flow.forward(beta, t) * w)
            .sum();
        first / self.mass
    }
}

/// One-shot convenience wrapper around [`PushforwardMean`].
pub fn mean_pushforward(
    w0: &AnalyticWigner,
    flow: &FlowMap,
    t: f64,
    geometry: &GridGeometry,
) -> Result<C64, PhaseSpaceError> {
    Ok(PushforwardMean::new(w0, geometry)?.eval(flow, t))
}

/// Uniform rotation flow alpha -> e^{-i omega t} alpha, the free-evolution
/// special case used in tests and frame changes.
pub fn rotation_flow(omega: f64) -> FlowMap {
    FlowMap::new(
        move |a, t| a * C64::from_polar(1.0, -omega * t),
        move |a, t| a * C64::from_polar(1.0, omega * t),
    )
}
