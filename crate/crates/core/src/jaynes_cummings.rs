//! Semi-classical Jaynes-Cummings dynamics.
//!
//! A classical field amplitude alpha is coupled resonantly to a quantum
//! two-level atom |phi> = phi_g |g> + phi_e |e>. The coupled equations of
//! motion derive from the constrained-evolution engine with zeta =
//! (alpha, phi_g, phi_e); for the initial condition alpha(0) = 0,
//! |phi(0)> = (|g> + |e>)/sqrt(2) the solution is known in closed form
//! through the elliptic amplitude function theta with d(theta)/dx =
//! sqrt(1 + sin^2 theta). The exact quantum solution of the same model is
//! entangled whenever sin(kappa t) != 0 and serves as the comparison point.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::manifold::{
    evolve_constrained, ClassicalParameter, EngineError, HamiltonianModel, IntegratorOptions,
    StepStats,
};
use crate::math::bisect;
use crate::ode::Dopri5;

/// Field frequency and coupling strength, resonant case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JcParams {
    omega: f64,
    kappa: f64,
}

impl JcParams {
    pub fn new(omega: f64, kappa: f64) -> Self {
        assert!(omega > 0.0 && omega.is_finite(), "omega must be positive");
        assert!(kappa >= 0.0 && kappa.is_finite(), "kappa must be nonnegative");
        Self { omega, kappa }
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }
}

/// Classical field amplitude plus atom ket, basis order (g, e).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemiClassicalState {
    pub alpha: C64,
    pub atom_g: C64,
    pub atom_e: C64,
}

impl SemiClassicalState {
    /// The initial condition used throughout: vacuum field, atom in the
    /// balanced superposition (|g> + |e>)/sqrt(2).
    pub fn initial_superposition() -> Self {
        Self {
            alpha: C64::new(0.0, 0.0),
            atom_g: C64::new(FRAC_1_SQRT_2, 0.0),
            atom_e: C64::new(FRAC_1_SQRT_2, 0.0),
        }
    }

    pub fn atom_norm(&self) -> f64 {
        (self.atom_g.norm_sqr() + self.atom_e.norm_sqr()).sqrt()
    }

    /// Conserved excitation |alpha|^2 + |<e|phi>|^2.
    pub fn excitation(&self) -> f64 {
        self.alpha.norm_sqr() + self.atom_e.norm_sqr()
    }

    fn to_parameter(self) -> ClassicalParameter {
        ClassicalParameter::with_labels(
            vec![self.alpha, self.atom_g, self.atom_e],
            vec![
                "field amplitude".into(),
                "atom ket g".into(),
                "atom ket e".into(),
            ],
        )
        .with_unit_norm_group(1..3)
    }

    fn from_values(values: &[C64]) -> Self {
        Self {
            alpha: values[0],
            atom_g: values[1],
            atom_e: values[2],
        }
    }
}

/// Semi-classical Hamiltonian
/// H/hbar = omega |alpha|^2 + omega |phi_e|^2
///          + i kappa (alpha phi_e* phi_g - alpha* phi_g* phi_e),
/// with its analytic Wirtinger gradient.
pub fn hamiltonian_model(params: &JcParams) -> HamiltonianModel {
    let JcParams { omega, kappa } = *params;
    HamiltonianModel::new(move |v: &[C64]| {
        let (alpha, g, e) = (v[0], v[1], v[2]);
        omega * (alpha.norm_sqr() + e.norm_sqr()) - 2.0 * kappa * (alpha * e.conj() * g).im
    })
    .with_gradient(move |v: &[C64]| {
        let (alpha, g, e) = (v[0], v[1], v[2]);
        let i = C64::new(0.0, 1.0);
        vec![
            alpha * omega - i * kappa * g.conj() * e,
            -i * kappa * alpha.conj() * e,
            e * omega + i * kappa * alpha * g,
        ]
    })
}

/// Integrated semi-classical trajectory with conservation diagnostics.
#[derive(Debug, Clone)]
pub struct SemiClassicalTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<SemiClassicalState>,
    pub atom_norm_drift: f64,
    pub excitation_drift: f64,
    pub energy_drift: f64,
    pub step_stats: StepStats,
}

/// Integrates the coupled field/atom equations of motion with the generic
/// engine, sampling at `t_grid`.
pub fn integrate_semiclassical(
    s0: &SemiClassicalState,
    params: &JcParams,
    t_grid: &[f64],
    opts: &IntegratorOptions,
) -> Result<SemiClassicalTrajectory, EngineError> {
    let model = hamiltonian_model(params);
    let record = evolve_constrained(&model, &s0.to_parameter(), t_grid, opts)?;
    let states: Vec<SemiClassicalState> = record
        .states
        .iter()
        .map(|s| SemiClassicalState::from_values(&s.values))
        .collect();
    let exc0 = states[0].excitation();
    let excitation_drift = states
        .iter()
        .map(|s| (s.excitation() - exc0).abs())
        .fold(0.0, f64::max);
    Ok(SemiClassicalTrajectory {
        times: record.times,
        states,
        atom_norm_drift: record.norm_drift,
        excitation_drift,
        energy_drift: record.energy_drift,
        step_stats: record.step_stats,
    })
}

/// Elliptic amplitude function defined by d(theta)/dx = sqrt(1 + sin^2
/// theta), theta(0) = 0, extended oddly to x < 0.
///
/// Computed by adaptive integration of the defining equation to an absolute
/// accuracy of about 1e-10; for small arguments the linear expansion is
/// exact to machine precision.
pub fn jacobi_theta(x: f64) -> f64 {
    if x < 0.0 {
        return -jacobi_theta(-x);
    }
    if x < 1e-8 {
        // theta(x) = x + x^3/6 + ...: the cubic term is below f64 epsilon.
        return x;
    }
    let solver = Dopri5 {
        rtol: 1e-12,
        atol: 1e-13,
        ..Default::default()
    };
    let sol = solver
        .solve(&[0.0_f64], &[0.0, x], |_, y, dy| {
            dy[0] = (1.0 + y[0].sin().powi(2)).sqrt()
        })
        .expect("smooth bounded right-hand side cannot fail");
    sol.states[1][0]
}

/// Smallest x with theta(x) = pi/2; the analytic field amplitude reaches
/// its extremum there.
pub fn theta_quarter_period() -> f64 {
    bisect(|x| jacobi_theta(x) - 0.5 * PI, 1.2, 1.4, 1e-12)
}

/// Closed-form semi-classical solution for the vacuum-field,
/// balanced-superposition initial condition:
/// alpha(t) = -e^{-i omega t} sin(theta)/sqrt(2) and
/// |phi(t)> = (sqrt(1 + sin^2 theta) |g> + e^{-i omega t} cos(theta) |e>)/sqrt(2)
/// with theta = theta(kappa t / sqrt(2)).
pub fn analytic_semiclassical(t: f64, params: &JcParams) -> SemiClassicalState {
    let theta = jacobi_theta(params.kappa * t * FRAC_1_SQRT_2);
    let (s, c) = theta.sin_cos();
    let rot = C64::from_polar(1.0, -params.omega * t);
    SemiClassicalState {
        alpha: -rot * (s * FRAC_1_SQRT_2),
        atom_g: C64::new((1.0 + s * s).sqrt() * FRAC_1_SQRT_2, 0.0),
        atom_e: rot * (c * FRAC_1_SQRT_2),
    }
}

/// Joint field-atom pure state on (photon number n <= cutoff) x (g, e).
#[derive(Debug, Clone, PartialEq)]
pub struct JointFockAtomState {
    /// Row n, column 0 = g, column 1 = e.
    amplitudes: DMatrix<C64>,
}

impl JointFockAtomState {
    pub fn new(amplitudes: DMatrix<C64>) -> Self {
        assert_eq!(amplitudes.ncols(), 2, "atom space has two levels");
        assert!(amplitudes.nrows() >= 1);
        Self { amplitudes }
    }

    pub fn amplitudes(&self) -> &DMatrix<C64> {
        &self.amplitudes
    }

    pub fn cutoff(&self) -> usize {
        self.amplitudes.nrows() - 1
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(|a| a.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Same state with the photon cutoff raised to `cutoff`.
    pub fn embedded(&self, cutoff: usize) -> Self {
        assert!(cutoff >= self.cutoff());
        let mut amplitudes = DMatrix::zeros(cutoff + 1, 2);
        amplitudes
            .view_mut((0, 0), (self.amplitudes.nrows(), 2))
            .copy_from(&self.amplitudes);
        Self { amplitudes }
    }

    /// Field mean <a x 1>.
    pub fn mean_annihilation(&self) -> C64 {
        let n_rows = self.amplitudes.nrows();
        let mut acc = C64::new(0.0, 0.0);
        for n in 1..n_rows {
            for s in 0..2 {
                acc += self.amplitudes[(n - 1, s)].conj()
                    * self.amplitudes[(n, s)]
                    * (n as f64).sqrt();
            }
        }
        acc
    }

    /// <n_photons> + <|e><e|>, conserved by the resonant model.
    pub fn excitation(&self) -> f64 {
        let mut acc = 0.0;
        for n in 0..self.amplitudes.nrows() {
            acc += n as f64 * (self.amplitudes[(n, 0)].norm_sqr() + self.amplitudes[(n, 1)].norm_sqr());
            acc += self.amplitudes[(n, 1)].norm_sqr();
        }
        acc
    }

    /// Reduced atom density matrix, rows/columns ordered (g, e).
    pub fn reduced_atom(&self) -> [[C64; 2]; 2] {
        let mut rho = [[C64::new(0.0, 0.0); 2]; 2];
        for n in 0..self.amplitudes.nrows() {
            for (s, row) in rho.iter_mut().enumerate() {
                for (sp, entry) in row.iter_mut().enumerate() {
                    *entry += self.amplitudes[(n, s)] * self.amplitudes[(n, sp)].conj();
                }
            }
        }
        rho
    }
}

/// Exact solution of the quantum model for the vacuum-field,
/// balanced-superposition initial condition; support stays on
/// {(0, g), (1, g), (0, e)} so cutoff 1 is exact.
pub fn exact_quantum_solution(t: f64, params: &JcParams) -> JointFockAtomState {
    let rot = C64::from_polar(1.0, -params.omega * t);
    let (s, c) = (params.kappa * t).sin_cos();
    let mut amplitudes = DMatrix::zeros(2, 2);
    amplitudes[(0, 0)] = C64::new(FRAC_1_SQRT_2, 0.0);
    amplitudes[(1, 0)] = -rot * (s * FRAC_1_SQRT_2);
    amplitudes[(0, 1)] = rot * (c * FRAC_1_SQRT_2);
    JointFockAtomState::new(amplitudes)
}

/// Applies the joint operator
/// `H/hbar = omega n x 1 + omega 1 x |e><e| + i kappa a x |e><g| - i kappa a^dag x |g><e|`
/// to a state. Components the creation operator would push past the cutoff
/// are dropped; embed the state with headroom first when that matters.
pub fn apply_hamiltonian(state: &JointFockAtomState, params: &JcParams) -> JointFockAtomState {
    let amps = &state.amplitudes;
    let rows = amps.nrows();
    let i = C64::new(0.0, 1.0);
    let mut out = DMatrix::zeros(rows, 2);
    for n in 0..rows {
        let nf = n as f64;
        out[(n, 0)] += amps[(n, 0)] * (params.omega * nf);
        out[(n, 1)] += amps[(n, 1)] * (params.omega * nf + params.omega);
        // a x |e><g|: (n, g) -> sqrt(n) (n-1, e).
        if n >= 1 {
            out[(n - 1, 1)] += i * params.kappa * nf.sqrt() * amps[(n, 0)];
        }
        // a^dag x |g><e|: (n, e) -> sqrt(n+1) (n+1, g).
        if n + 1 < rows {
            out[(n + 1, 0)] -= i * params.kappa * (nf + 1.0).sqrt() * amps[(n, 1)];
        }
    }
    JointFockAtomState::new(out)
}

/// Von Neumann entropy (base 2) of the reduced atom state; zero exactly
/// when the joint state is a product.
pub fn entanglement_entropy(state: &JointFockAtomState) -> f64 {
    let rho = state.reduced_atom();
    let a = rho[0][0].re;
    let d = rho[1][1].re;
    let off = rho[0][1].norm_sqr();
    let half_gap = (0.25 * (a - d) * (a - d) + off).sqrt();
    let mid = 0.5 * (a + d);
    let entropy_term = |lambda: f64| {
        let l = lambda.clamp(0.0, 1.0);
        if l <= 0.0 {
            0.0
        } else {
            -l * l.log2()
        }
    };
    entropy_term(mid + half_gap) + entropy_term(mid - half_gap)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn params() -> JcParams {
        JcParams::new(10.0, 1.0)
    }

    fn kt_grid(params: &JcParams, kt_max: f64, n: usize) -> Vec<f64> {
        (0..=n)
            .map(|i| kt_max * i as f64 / n as f64 / params.kappa())
            .collect()
    }

    #[test]
    fn decoupled_atom_precesses_freely() {
        let p = JcParams::new(10.0, 0.0);
        let grid = kt_grid(&JcParams::new(10.0, 1.0), 3.0, 30);
        let traj = integrate_semiclassical(
            &SemiClassicalState::initial_superposition(),
            &p,
            &grid,
            &IntegratorOptions::default(),
        )
        .unwrap();
        for (t, s) in traj.times.iter().zip(&traj.states) {
            assert!(s.alpha.norm() < 1e-12);
            let expect = C64::from_polar(FRAC_1_SQRT_2, -p.omega() * t);
            assert!((s.atom_e - expect).norm() < 1e-9, "t = {t}");
            assert!((s.atom_g - c(FRAC_1_SQRT_2, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn excitation_and_norm_are_conserved() {
        let p = params();
        let grid = kt_grid(&p, 10.0, 400);
        let traj = integrate_semiclassical(
            &SemiClassicalState::initial_superposition(),
            &p,
            &grid,
            &IntegratorOptions::default(),
        )
        .unwrap();
        for s in &traj.states {
            assert!((s.excitation() - 0.5).abs() <= 1e-9);
        }
        assert!(traj.excitation_drift <= 1e-9, "{}", traj.excitation_drift);
        assert!(traj.atom_norm_drift <= 1e-9, "{}", traj.atom_norm_drift);
        assert!(traj.energy_drift <= 1e-8, "{}", traj.energy_drift);
    }

    #[test]
    fn theta_at_zero_and_small_arguments() {
        assert_eq!(jacobi_theta(0.0), 0.0);
        assert!((jacobi_theta(1e-6) - 1e-6).abs() <= 1e-16);
        assert_eq!(jacobi_theta(-0.3), -jacobi_theta(0.3));
    }

    #[test]
    fn theta_slope_at_origin_is_one() {
        let x = 1e-4;
        assert!((jacobi_theta(x) / x - 1.0).abs() < 1e-8);
    }

    #[test]
    fn quarter_period_and_mu_constant() {
        let qp = theta_quarter_period();
        assert!((jacobi_theta(qp) - 0.5 * PI).abs() < 1e-10);
        assert!((qp - 1.311_029).abs() < 1e-6);
        let mu = PI / (2.0 * qp);
        assert!((mu - 1.198_140).abs() < 5e-7);
    }

    #[test]
    fn analytic_solution_initial_condition_and_norm() {
        let p = params();
        let s0 = analytic_semiclassical(0.0, &p);
        assert!((s0.alpha).norm() < 1e-15);
        assert!((s0.atom_g - c(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
        assert!((s0.atom_e - c(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
        for kt in [0.1, 0.9, 3.3, 7.7] {
            let s = analytic_semiclassical(kt / p.kappa(), &p);
            // (1 + sin^2)/2 + cos^2/2 = 1 is an identity.
            assert!((s.atom_norm() - 1.0).abs() < 1e-15);
            assert!((s.excitation() - 0.5).abs() < 1e-15);
            // The field amplitude never exceeds 1/sqrt(2).
            assert!(s.alpha.norm() <= FRAC_1_SQRT_2 + 1e-15);
        }
    }

    #[test]
    fn field_extremum_at_quarter_period() {
        let p = params();
        let t = theta_quarter_period() * 2.0_f64.sqrt() / p.kappa();
        let s = analytic_semiclassical(t, &p);
        assert!((s.alpha.norm() - FRAC_1_SQRT_2).abs() < 1e-6);
        assert!(s.atom_e.norm() < 1e-6);

        // The integrated trajectory reaches the same extremum.
        let traj = integrate_semiclassical(
            &SemiClassicalState::initial_superposition(),
            &p,
            &[0.0, 0.5 * t, t],
            &IntegratorOptions::default(),
        )
        .unwrap();
        let end = traj.states.last().unwrap();
        assert!((end.alpha.norm() - FRAC_1_SQRT_2).abs() < 1e-6);
        assert!(end.atom_e.norm() < 1e-6);
    }

    #[test]
    fn numeric_integration_tracks_analytic_solution() {
        let p = params();
        let grid = kt_grid(&p, 3.0, 120);
        let traj = integrate_semiclassical(
            &SemiClassicalState::initial_superposition(),
            &p,
            &grid,
            &IntegratorOptions::default(),
        )
        .unwrap();
        for (t, s) in traj.times.iter().zip(&traj.states) {
            let a = analytic_semiclassical(*t, &p);
            let dev = (s.alpha - a.alpha)
                .norm()
                .max((s.atom_g - a.atom_g).norm())
                .max((s.atom_e - a.atom_e).norm());
            assert!(dev < 1e-7, "t = {t}, dev = {dev:.3e}");
        }
    }

    #[test]
    fn exact_solution_starts_in_product_form_and_stays_normalized() {
        let p = params();
        let s0 = exact_quantum_solution(0.0, &p);
        assert!((s0.amplitudes()[(0, 0)] - c(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
        assert!((s0.amplitudes()[(0, 1)] - c(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
        assert!(s0.amplitudes()[(1, 0)].norm() < 1e-15);
        for kt in [0.0, 0.4, 1.2, PI, 6.0] {
            assert!((exact_quantum_solution(kt / p.kappa(), &p).norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn atom_disentangles_at_half_pi_coupling_phase() {
        // kappa t = pi/2: field in (|0> - e^{-i omega t}|1>)/sqrt(2), atom in |g>.
        let p = params();
        let t = 0.5 * PI / p.kappa();
        let s = exact_quantum_solution(t, &p);
        let rot = C64::from_polar(1.0, -p.omega() * t);
        assert!((s.amplitudes()[(0, 0)] - c(FRAC_1_SQRT_2, 0.0)).norm() < 1e-12);
        assert!((s.amplitudes()[(1, 0)] + rot * FRAC_1_SQRT_2).norm() < 1e-12);
        assert!(s.amplitudes()[(0, 1)].norm() < 1e-12);
        assert!(entanglement_entropy(&s) < 1e-10);
    }

    #[test]
    fn entropy_vanishes_at_multiples_of_pi_and_grows_between() {
        let p = params();
        assert!(entanglement_entropy(&exact_quantum_solution(0.0, &p)) < 1e-12);
        let t_pi = PI / p.kappa();
        assert!(entanglement_entropy(&exact_quantum_solution(t_pi, &p)) < 1e-10);
        for kt in [0.3, PI / 4.0, 2.0] {
            let s = exact_quantum_solution(kt / p.kappa(), &p);
            assert!(entanglement_entropy(&s) > 0.0);
        }
        let quarter = exact_quantum_solution(PI / 4.0 / p.kappa(), &p);
        assert!(entanglement_entropy(&quarter) > 0.1);
    }

    #[test]
    fn exact_solution_satisfies_schroedinger_equation() {
        let p = params();
        let h = 1e-5;
        for t in [0.13, 0.9, 2.4] {
            let plus = exact_quantum_solution(t + h, &p).embedded(3);
            let minus = exact_quantum_solution(t - h, &p).embedded(3);
            let mid = exact_quantum_solution(t, &p).embedded(3);
            let h_psi = apply_hamiltonian(&mid, &p);
            let mut residual = 0.0_f64;
            for idx in 0..plus.amplitudes().len() {
                let dt = (plus.amplitudes()[idx] - minus.amplitudes()[idx]) / (2.0 * h);
                let r = C64::new(0.0, 1.0) * dt - h_psi.amplitudes()[idx];
                residual += r.norm_sqr();
            }
            assert!(residual.sqrt() <= 1e-6, "t = {t}: {residual:.3e}");
        }
    }

    #[test]
    fn quantum_excitation_is_constant() {
        let p = params();
        for kt in [0.0, 0.7, 2.9] {
            let s = exact_quantum_solution(kt / p.kappa(), &p);
            assert!((s.excitation() - 0.5).abs() < 1e-13);
        }
    }
}
