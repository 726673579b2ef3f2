//! Constrained classical evolution of parametrized state families.
//!
//! A family of states |psi_zeta> is described by a complex parameter vector
//! zeta together with a Hamiltonian function H(zeta, zeta*). The evolution
//! engine integrates
//!
//! ```text
//! i d(zeta)/dt = (1/hbar) dH/d(zeta^dag)
//! ```
//!
//! which conserves H along trajectories and reduces to the Schroedinger
//! equation when zeta holds the full state-vector coefficients. Statistical
//! mixtures evolve member by member under time-independent weights.

use std::ops::Range;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use thiserror::Error;

use crate::ode::{Dopri5, OdeError};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("non-finite energy evaluation{}", component_suffix(.component))]
    NonFiniteEnergy { component: Option<usize> },
    #[error("non-finite observable value")]
    NonFiniteObservable,
    #[error("integration failed at t = {t_last}: {reason}")]
    IntegrationFailure { t_last: f64, reason: String },
    #[error("energy drift {drift:.3e} exceeds tolerance {tol:.3e}")]
    EnergyDriftExceeded { drift: f64, tol: f64 },
    #[error("unit-norm group drift {drift:.3e} exceeds tolerance {tol:.3e}")]
    NormDriftExceeded { drift: f64, tol: f64 },
    #[error("ensemble member {index} failed: {source}")]
    MemberFailed {
        index: usize,
        source: Box<EngineError>,
    },
    #[error("{0}")]
    BadInput(String),
}

fn component_suffix(component: &Option<usize>) -> String {
    match component {
        Some(k) => format!(" while probing component {k}"),
        None => String::new(),
    }
}

impl From<OdeError> for EngineError {
    fn from(err: OdeError) -> Self {
        match err {
            OdeError::BadGrid => {
                EngineError::BadInput("time grid must be nonempty and strictly increasing".into())
            }
            OdeError::StepUnderflow { t } => EngineError::IntegrationFailure {
                t_last: t,
                reason: "step size underflow".into(),
            },
            OdeError::MaxStepsExceeded { t } => EngineError::IntegrationFailure {
                t_last: t,
                reason: "step budget exhausted".into(),
            },
            OdeError::NonFinite { t } => EngineError::IntegrationFailure {
                t_last: t,
                reason: "non-finite right-hand side".into(),
            },
        }
    }
}

/// Complex parameter vector of a classical-state family, with per-entry
/// labels and optional contiguous sub-vectors required to stay unit-norm
/// (state-vector components embedded in the parametrization).
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalParameter {
    pub values: Vec<C64>,
    pub labels: Vec<String>,
    pub unit_norm_groups: Vec<Range<usize>>,
}

impl ClassicalParameter {
    pub fn new(values: Vec<C64>) -> Self {
        let labels = (0..values.len()).map(|k| format!("zeta[{k}]")).collect();
        Self {
            values,
            labels,
            unit_norm_groups: Vec::new(),
        }
    }

    pub fn with_labels(values: Vec<C64>, labels: Vec<String>) -> Self {
        assert_eq!(values.len(), labels.len(), "one label per entry");
        Self {
            values,
            labels,
            unit_norm_groups: Vec::new(),
        }
    }

    pub fn with_unit_norm_group(mut self, group: Range<usize>) -> Self {
        assert!(group.end <= self.values.len(), "group out of bounds");
        self.unit_norm_groups.push(group);
        self
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Worst deviation of any declared unit-norm sub-vector from norm one.
    pub fn norm_group_error(&self) -> f64 {
        self.unit_norm_groups
            .iter()
            .map(|g| {
                let norm_sq: f64 = self.values[g.clone()].iter().map(|v| v.norm_sqr()).sum();
                (norm_sq.sqrt() - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    fn like(&self, values: Vec<C64>) -> Self {
        Self {
            values,
            labels: self.labels.clone(),
            unit_norm_groups: self.unit_norm_groups.clone(),
        }
    }
}

type EnergyFn = dyn Fn(&[C64]) -> f64 + Send + Sync;
type GradientFn = dyn Fn(&[C64]) -> Vec<C64> + Send + Sync;

/// Scalar energy H(zeta, zeta*) with an optional analytic Wirtinger gradient
/// dH/d(zeta^dag); absent gradients fall back to central differences.
#[derive(Clone)]
pub struct HamiltonianModel {
    energy: Arc<EnergyFn>,
    gradient: Option<Arc<GradientFn>>,
    hbar: f64,
}

impl std::fmt::Debug for HamiltonianModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HamiltonianModel")
            .field("analytic_gradient", &self.gradient.is_some())
            .field("hbar", &self.hbar)
            .finish()
    }
}

/// Default relative step for finite-difference Wirtinger gradients.
pub const DEFAULT_FD_STEP: f64 = 1e-6;

impl HamiltonianModel {
    pub fn new(energy: impl Fn(&[C64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            energy: Arc::new(energy),
            gradient: None,
            hbar: 1.0,
        }
    }

    pub fn with_gradient(
        mut self,
        gradient: impl Fn(&[C64]) -> Vec<C64> + Send + Sync + 'static,
    ) -> Self {
        self.gradient = Some(Arc::new(gradient));
        self
    }

    /// Natural units (hbar = 1) are the default; a physical value may be set.
    pub fn with_hbar(mut self, hbar: f64) -> Self {
        assert!(hbar > 0.0 && hbar.is_finite(), "hbar must be positive");
        self.hbar = hbar;
        self
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn has_analytic_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    pub fn energy(&self, zeta: &ClassicalParameter) -> Result<f64, EngineError> {
        self.energy_values(&zeta.values)
    }

    pub fn energy_values(&self, values: &[C64]) -> Result<f64, EngineError> {
        let e = (self.energy)(values);
        if e.is_finite() {
            Ok(e)
        } else {
            Err(EngineError::NonFiniteEnergy { component: None })
        }
    }

    /// dH/d(zeta^dag): analytic when supplied, otherwise central differences.
    pub fn gradient(&self, zeta: &ClassicalParameter) -> Result<Vec<C64>, EngineError> {
        self.gradient_values(&zeta.values)
    }

    pub fn gradient_values(&self, values: &[C64]) -> Result<Vec<C64>, EngineError> {
        match &self.gradient {
            Some(g) => {
                let out = g(values);
                if let Some(k) = out.iter().position(|v| !v.re.is_finite() || !v.im.is_finite()) {
                    return Err(EngineError::NonFiniteEnergy { component: Some(k) });
                }
                Ok(out)
            }
            None => wirtinger_gradient_values(self, values, DEFAULT_FD_STEP),
        }
    }
}

/// Central-difference Wirtinger gradient dH/d(zeta^dag).
///
/// Each component zeta_k = (q + i p)/sqrt(2) is probed along its real and
/// imaginary parts, combining the two partials as (dH/dq' + i dH/dp')/2 in
/// the (Re, Im) chart; the step is `h * max(1, |zeta_k|)` per component.
pub fn wirtinger_gradient(
    model: &HamiltonianModel,
    zeta: &ClassicalParameter,
    h: f64,
) -> Result<Vec<C64>, EngineError> {
    if !h.is_finite() || h <= 0.0 {
        return Err(EngineError::BadInput("step h must be positive".into()));
    }
    wirtinger_gradient_values(model, &zeta.values, h)
}

fn wirtinger_gradient_values(
    model: &HamiltonianModel,
    values: &[C64],
    h: f64,
) -> Result<Vec<C64>, EngineError> {
    let mut probe = values.to_vec();
    let mut grad = Vec::with_capacity(values.len());
    for k in 0..values.len() {
        let hk = h * values[k].norm().max(1.0);
        let base = values[k];
        let mut eval = |v: C64| -> Result<f64, EngineError> {
            probe[k] = v;
            let e = (model.energy)(&probe);
            if e.is_finite() {
                Ok(e)
            } else {
                Err(EngineError::NonFiniteEnergy { component: Some(k) })
            }
        };
        let d_re = (eval(base + hk)? - eval(base - hk)?) / (2.0 * hk);
        let d_im = (eval(base + C64::new(0.0, hk))? - eval(base - C64::new(0.0, hk))?) / (2.0 * hk);
        probe[k] = base;
        grad.push(C64::new(d_re, d_im).scale(0.5));
    }
    Ok(grad)
}

/// Options for the adaptive trajectory integrator.
#[derive(Debug, Clone)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    pub initial_step: Option<f64>,
    pub max_steps: usize,
    /// Relative energy-conservation gate; trajectories exceeding it fail.
    pub energy_tol: f64,
    /// Gate on unit-norm sub-vector drift at the sampled times.
    pub norm_tol: f64,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-11,
            atol: 1e-13,
            initial_step: None,
            max_steps: 10_000_000,
            energy_tol: 1e-8,
            norm_tol: 1e-6,
        }
    }
}

impl IntegratorOptions {
    /// Tightened tolerances for oracle-grade integrations.
    pub fn strict() -> Self {
        Self {
            rtol: 1e-12,
            atol: 1e-14,
            ..Self::default()
        }
    }

    fn solver(&self) -> Dopri5 {
        Dopri5 {
            rtol: self.rtol,
            atol: self.atol,
            h0: self.initial_step,
            max_steps: self.max_steps,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
}

/// A sampled trajectory with conservation diagnostics.
///
/// `energy_drift` is max_t |H(t) - H(0)| / max(1, |H(0)|); `norm_drift` is
/// the worst unit-norm-group deviation over the samples. Sub-vectors are
/// never renormalized during integration; drift is reported, not hidden.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub states: Vec<ClassicalParameter>,
    pub energy_drift: f64,
    pub norm_drift: f64,
    pub step_stats: StepStats,
}

impl TrajectoryRecord {
    pub fn final_state(&self) -> &ClassicalParameter {
        self.states.last().expect("trajectory is never empty")
    }
}

/// Integrate the constrained equation of motion from `zeta0`, sampling at
/// `t_grid` (whose first entry is the initial time).
pub fn evolve_constrained(
    model: &HamiltonianModel,
    zeta0: &ClassicalParameter,
    t_grid: &[f64],
    opts: &IntegratorOptions,
) -> Result<TrajectoryRecord, EngineError> {
    let e0 = model.energy(zeta0)?;
    let inv_hbar = 1.0 / model.hbar;
    let minus_i = C64::new(0.0, -1.0);

    let mut rhs_failure: Option<EngineError> = None;
    let sol = opts.solver().solve(&zeta0.values, t_grid, |_, y, dy| {
        match model.gradient_values(y) {
            Ok(g) => {
                for (d, gk) in dy.iter_mut().zip(g) {
                    *d = minus_i * gk.scale(inv_hbar);
                }
            }
            Err(e) => {
                if rhs_failure.is_none() {
                    rhs_failure = Some(e);
                }
                dy.fill(C64::new(f64::NAN, f64::NAN));
            }
        }
    });
    let sol = match sol {
        Ok(sol) => sol,
        Err(err) => {
            return Err(rhs_failure.unwrap_or_else(|| err.into()));
        }
    };

    let states: Vec<ClassicalParameter> = sol.states.into_iter().map(|v| zeta0.like(v)).collect();
    let mut energy_drift = 0.0_f64;
    for s in &states {
        let e = model.energy(s)?;
        energy_drift = energy_drift.max((e - e0).abs());
    }
    energy_drift /= e0.abs().max(1.0);
    let norm_drift = states
        .iter()
        .map(|s| s.norm_group_error())
        .fold(0.0, f64::max);

    if energy_drift > opts.energy_tol {
        return Err(EngineError::EnergyDriftExceeded {
            drift: energy_drift,
            tol: opts.energy_tol,
        });
    }
    if norm_drift > opts.norm_tol {
        return Err(EngineError::NormDriftExceeded {
            drift: norm_drift,
            tol: opts.norm_tol,
        });
    }

    Ok(TrajectoryRecord {
        times: sol.times,
        states,
        energy_drift,
        norm_drift,
        step_stats: StepStats {
            accepted: sol.accepted,
            rejected: sol.rejected,
        },
    })
}

/// Statistical mixture of classical parameters with fixed weights.
///
/// Weights are probabilities for ordinary ensembles; quasiprobability
/// ensembles (signed weights) must be flagged explicitly at construction.
#[derive(Debug, Clone)]
pub struct MixedEnsemble {
    weights: Vec<f64>,
    members: Vec<ClassicalParameter>,
    signed: bool,
}

impl MixedEnsemble {
    pub fn new(weights: Vec<f64>, members: Vec<ClassicalParameter>) -> Result<Self, EngineError> {
        if weights.len() != members.len() {
            return Err(EngineError::BadInput(
                "weights and members must be index-aligned".into(),
            ));
        }
        if weights.is_empty() {
            return Err(EngineError::BadInput("ensemble must be nonempty".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(EngineError::BadInput(
                "unsigned ensembles require finite nonnegative weights".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(EngineError::BadInput(format!(
                "weights sum to {total}, expected 1 within 1e-12"
            )));
        }
        Ok(Self {
            weights,
            members,
            signed: false,
        })
    }

    /// Quasiprobability ensemble; weights may be negative and need not sum
    /// to one.
    pub fn new_signed(
        weights: Vec<f64>,
        members: Vec<ClassicalParameter>,
    ) -> Result<Self, EngineError> {
        if weights.len() != members.len() || weights.is_empty() {
            return Err(EngineError::BadInput(
                "weights and members must be index-aligned and nonempty".into(),
            ));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(EngineError::BadInput("weights must be finite".into()));
        }
        Ok(Self {
            weights,
            members,
            signed: true,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn members(&self) -> &[ClassicalParameter] {
        &self.members
    }

    pub fn is_signed(&self) -> bool {
        self.signed
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Evolve every member independently; weights are copied bitwise into each
/// snapshot. Returns one ensemble per grid time.
pub fn evolve_ensemble(
    model: &HamiltonianModel,
    ensemble: &MixedEnsemble,
    t_grid: &[f64],
    opts: &IntegratorOptions,
) -> Result<Vec<MixedEnsemble>, EngineError> {
    let trajectories: Vec<TrajectoryRecord> = ensemble
        .members
        .par_iter()
        .enumerate()
        .map(|(index, member)| {
            evolve_constrained(model, member, t_grid, opts).map_err(|e| {
                EngineError::MemberFailed {
                    index,
                    source: Box::new(e),
                }
            })
        })
        .collect::<Result<_, _>>()?;

    Ok((0..t_grid.len())
        .map(|ti| MixedEnsemble {
            weights: ensemble.weights.clone(),
            members: trajectories.iter().map(|tr| tr.states[ti].clone()).collect(),
            signed: ensemble.signed,
        })
        .collect())
}

/// Weighted ensemble average of an observable, `sum_n p_n f(zeta_n)`.
pub fn ensemble_expectation(
    ensemble: &MixedEnsemble,
    f: impl Fn(&ClassicalParameter) -> C64,
) -> Result<C64, EngineError> {
    let mut acc = C64::new(0.0, 0.0);
    for (w, member) in ensemble.weights.iter().zip(&ensemble.members) {
        let v = f(member);
        if !v.re.is_finite() || !v.im.is_finite() {
            return Err(EngineError::NonFiniteObservable);
        }
        acc += v.scale(*w);
    }
    Ok(acc)
}

/// Model for zeta = full state-vector coefficients and H = <psi|H_op|psi>
/// with a Hermitian matrix, for which the engine reproduces the Schroedinger
/// equation exactly.
pub fn hermitian_model(h_op: DMatrix<C64>, hbar: f64) -> HamiltonianModel {
    assert_eq!(h_op.nrows(), h_op.ncols(), "Hamilton operator must be square");
    let h_energy = h_op.clone();
    HamiltonianModel::new(move |values: &[C64]| {
        let psi = nalgebra::DVector::from_column_slice(values);
        (psi.adjoint() * &h_energy * &psi)[(0, 0)].re
    })
    .with_gradient(move |values: &[C64]| {
        let psi = nalgebra::DVector::from_column_slice(values);
        (&h_op * psi).iter().copied().collect()
    })
    .with_hbar(hbar)
}
