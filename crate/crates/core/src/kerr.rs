//! Kerr-medium case study: intensity-dependent phase rotation.
//!
//! The single-mode Kerr Hamilton operator `hbar omega a^dag a +
//! (hbar kappa / 2) a^dag^2 a^2` admits closed forms for both the classical
//! flow of the coherent amplitude and the quantum mean field, and is diagonal
//! in the photon-number basis, so the exact quantum propagation is a pure
//! phase map on Fock coefficients. This module combines those ingredients
//! into the four phase-space comparison panels (initial state classical or
//! quantum, dynamics classical or quantum).

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::manifold::HamiltonianModel;
use crate::phasespace::{
    cat_fock, coherent_fock, wigner_of_density, wigner_pullback, AnalyticWigner, FlowMap,
    FockVector, GridGeometry, PhaseSpaceError, PushforwardMean, WignerGrid,
};

/// Mode frequency and Kerr coupling, both in inverse time units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KerrParams {
    omega: f64,
    kappa: f64,
}

impl KerrParams {
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

    /// Dimensionless ratio kappa/omega quantifying the intensity-dependent
    /// part of the refractive index.
    pub fn chi(&self) -> f64 {
        self.kappa / self.omega
    }
}

/// Classical trajectory of the coherent amplitude:
/// alpha(t) = e^{-i t (omega + kappa |alpha0|^2)} alpha0.
pub fn classical_flow(alpha0: C64, params: &KerrParams, t: f64) -> C64 {
    alpha0 * C64::from_polar(1.0, -t * (params.omega + params.kappa * alpha0.norm_sqr()))
}

/// Quantum mean field from the coherent initial state:
/// <a(t)> = e^{-i omega t + (e^{-i kappa t} - 1) |alpha0|^2} alpha0.
pub fn quantum_mean_coherent(alpha0: C64, params: &KerrParams, t: f64) -> C64 {
    let exponent = C64::new(0.0, -params.omega * t)
        + (C64::from_polar(1.0, -params.kappa * t) - 1.0) * alpha0.norm_sqr();
    alpha0 * exponent.exp()
}

/// Exact quantum propagation in the photon-number basis:
/// c_n -> e^{-i t (omega n + (kappa/2) n (n-1))} c_n.
pub fn quantum_evolve_fock(state: &FockVector, params: &KerrParams, t: f64) -> FockVector {
    let coeffs = state
        .coeffs()
        .iter()
        .enumerate()
        .map(|(n, c)| {
            let nf = n as f64;
            let phase = -t * (params.omega * nf + 0.5 * params.kappa * nf * (nf - 1.0));
            c * C64::from_polar(1.0, phase)
        })
        .collect();
    FockVector::from_coeffs(coeffs).expect("phase map preserves finiteness")
}

/// Classical Kerr Hamiltonian H = omega |a|^2 + (kappa/2) |a|^4 in natural
/// units, with its analytic gradient, for the generic evolution engine.
pub fn hamiltonian_model(params: &KerrParams) -> HamiltonianModel {
    let KerrParams { omega, kappa } = *params;
    HamiltonianModel::new(move |v: &[C64]| {
        let n = v[0].norm_sqr();
        omega * n + 0.5 * kappa * n * n
    })
    .with_gradient(move |v: &[C64]| vec![v[0] * (omega + kappa * v[0].norm_sqr())])
}

/// The classical flow as an invertible map; the modulus is conserved, so
/// the inverse rotates back by the phase computed from |alpha| itself.
///
/// With `co_rotating` the free rotation e^{-i omega t} is divided out, which
/// is how the phase-space panels are displayed.
pub fn flow_map(params: &KerrParams, co_rotating: bool) -> FlowMap {
    let KerrParams { omega, kappa } = *params;
    let omega_eff = if co_rotating { 0.0 } else { omega };
    FlowMap::new(
        move |a, t| a * C64::from_polar(1.0, -t * (omega_eff + kappa * a.norm_sqr())),
        move |a, t| a * C64::from_polar(1.0, t * (omega_eff + kappa * a.norm_sqr())),
    )
}

/// Initial state of a comparison panel.
#[derive(Debug, Clone, Copy)]
pub enum PanelInitial {
    /// Classical initial state: coherent amplitude alpha0.
    Coherent(C64),
    /// Quantum initial state: two-branch coherent superposition.
    Cat {
        alpha1: C64,
        alpha2: C64,
        rel_sign: f64,
    },
}

/// Which dynamics propagates the panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PanelDynamics {
    Classical,
    Quantum,
}

/// One panel of the four-way comparison; the label is two letters, initial
/// state first, dynamics second, each C(lassical) or Q(uantum).
#[derive(Debug, Clone, Copy)]
pub struct PanelSpec {
    pub initial: PanelInitial,
    pub dynamics: PanelDynamics,
    pub time: f64,
    pub co_rotating: bool,
}

impl PanelSpec {
    pub fn label(&self) -> &'static str {
        match (&self.initial, &self.dynamics) {
            (PanelInitial::Coherent(_), PanelDynamics::Classical) => "cc",
            (PanelInitial::Coherent(_), PanelDynamics::Quantum) => "cq",
            (PanelInitial::Cat { .. }, PanelDynamics::Classical) => "qc",
            (PanelInitial::Cat { .. }, PanelDynamics::Quantum) => "qq",
        }
    }
}

/// Rendered panel: the Wigner grid at the final time plus the mean-field
/// trajectory sampled uniformly on [0, time].
#[derive(Debug, Clone)]
pub struct PanelOutput {
    pub wigner: WignerGrid,
    /// (t, mean) samples; in the co-rotating frame the mean carries the
    /// counter-rotation factor e^{i omega t}.
    pub trajectory: Vec<(f64, C64)>,
}

/// Renders one panel: classical dynamics transports the initial Wigner
/// function along the Kerr flow; quantum dynamics propagates the Fock state
/// exactly and evaluates its Wigner function. Mean trajectories use the
/// closed forms where one exists (coherent initial state), the Fock
/// expectation for quantum cat dynamics, and initial-frame Wigner quadrature
/// for classical cat transport.
pub fn render_panel(
    spec: &PanelSpec,
    params: &KerrParams,
    geometry: &GridGeometry,
    cutoff: usize,
    trajectory_samples: usize,
) -> Result<PanelOutput, PhaseSpaceError> {
    let t_final = spec.time;
    let sample_times: Vec<f64> = if trajectory_samples < 2 || t_final == 0.0 {
        vec![t_final]
    } else {
        (0..trajectory_samples)
            .map(|i| t_final * i as f64 / (trajectory_samples - 1) as f64)
            .collect()
    };
    let frame = |t: f64| {
        if spec.co_rotating {
            C64::from_polar(1.0, params.omega * t)
        } else {
            C64::new(1.0, 0.0)
        }
    };

    let wigner = match spec.dynamics {
        PanelDynamics::Classical => {
            let w0 = analytic_initial(&spec.initial)?;
            wigner_pullback(&w0, &flow_map(params, spec.co_rotating), t_final, geometry)?
        }
        PanelDynamics::Quantum => {
            let state0 = fock_initial(&spec.initial, cutoff)?;
            let mut evolved = quantum_evolve_fock(&state0, params, t_final);
            if spec.co_rotating {
                evolved = evolved.rotated(params.omega * t_final);
            }
            wigner_of_density(&evolved.to_density(), geometry)
        }
    };

    let trajectory = match (&spec.initial, spec.dynamics) {
        (PanelInitial::Coherent(alpha0), PanelDynamics::Classical) => sample_times
            .iter()
            .map(|&t| (t, classical_flow(*alpha0, params, t) * frame(t)))
            .collect(),
        (PanelInitial::Coherent(alpha0), PanelDynamics::Quantum) => sample_times
            .iter()
            .map(|&t| (t, quantum_mean_coherent(*alpha0, params, t) * frame(t)))
            .collect(),
        (PanelInitial::Cat { .. }, PanelDynamics::Quantum) => {
            let state0 = fock_initial(&spec.initial, cutoff)?;
            sample_times
                .iter()
                .map(|&t| {
                    let mean = quantum_evolve_fock(&state0, params, t).mean_annihilation();
                    (t, mean * frame(t))
                })
                .collect()
        }
        (PanelInitial::Cat { .. }, PanelDynamics::Classical) => {
            // No closed form for the transported mean of a two-branch
            // distribution; quadrature against the initial Wigner function
            // with the flow pushed forward stays exact at all times.
            let w0 = analytic_initial(&spec.initial)?;
            let flow = flow_map(params, /* co_rotating: */ false);
            let quadrature = PushforwardMean::new(&w0, &quadrature_geometry(geometry))?;
            sample_times
                .par_iter()
                .map(|&t| (t, quadrature.eval(&flow, t) * frame(t)))
                .collect()
        }
    };

    Ok(PanelOutput { wigner, trajectory })
}

fn analytic_initial(initial: &PanelInitial) -> Result<AnalyticWigner, PhaseSpaceError> {
    match *initial {
        PanelInitial::Coherent(alpha0) => Ok(AnalyticWigner::coherent(alpha0)),
        PanelInitial::Cat {
            alpha1,
            alpha2,
            rel_sign,
        } => AnalyticWigner::cat(alpha1, alpha2, rel_sign),
    }
}

fn fock_initial(initial: &PanelInitial, cutoff: usize) -> Result<FockVector, PhaseSpaceError> {
    match *initial {
        PanelInitial::Coherent(alpha0) => coherent_fock(alpha0, cutoff),
        PanelInitial::Cat {
            alpha1,
            alpha2,
            rel_sign,
        } => cat_fock(alpha1, alpha2, rel_sign, cutoff),
    }
}

/// Finer window used for mean quadrature of transported distributions; the
/// pushforward integrand oscillates radially with the accumulated Kerr
/// phase, so it needs more resolution than the display grid.
fn quadrature_geometry(display: &GridGeometry) -> GridGeometry {
    GridGeometry::new(
        (display.x_min, display.x_max),
        (display.p_min, display.p_max),
        display.nx.max(1201),
        display.np.max(1201),
    )
    .expect("display geometry already validated")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{evolve_constrained, ClassicalParameter, IntegratorOptions};
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn params() -> KerrParams {
        KerrParams::new(1.0, 0.1)
    }

    #[test]
    fn free_rotation_reaches_minus_alpha_at_pi() {
        let p = KerrParams::new(1.0, 0.0);
        let z = classical_flow(c(3.0, 0.0), &p, PI);
        assert!((z - c(-3.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn classical_flow_preserves_modulus() {
        let p = params();
        for (a, t) in [(c(3.0, 0.0), 7.3), (c(-1.2, 2.2), 0.4), (c(0.0, 0.1), 100.0)] {
            let z = classical_flow(a, &p, t);
            assert!((z.norm() - a.norm()).abs() <= 1e-14 * a.norm().max(1.0));
        }
    }

    #[test]
    fn half_kerr_period_lands_on_minus_three() {
        // omega = 1, kappa = 0.1, alpha0 = 3, t = pi/kappa: total phase is
        // -(10 pi + 9 pi), an odd multiple of pi.
        let p = params();
        let t = PI / p.kappa();
        let z = classical_flow(c(3.0, 0.0), &p, t);
        assert!((z - c(-3.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn quantum_mean_reduces_to_classical_without_kerr() {
        let p = KerrParams::new(1.3, 0.0);
        for t in [0.0, 0.7, 5.0] {
            let a0 = c(1.1, -0.6);
            assert!((quantum_mean_coherent(a0, &p, t) - classical_flow(a0, &p, t)).norm() < 1e-13);
        }
    }

    #[test]
    fn quantum_mean_revives_at_full_kerr_period() {
        let p = params();
        let t = 2.0 * PI / p.kappa();
        let a0 = c(3.0, 0.0);
        let mean = quantum_mean_coherent(a0, &p, t);
        let free = a0 * C64::from_polar(1.0, -p.omega() * t);
        assert!((mean - free).norm() < 1e-9);
    }

    #[test]
    fn quantum_mean_collapses_to_three_e_minus_nine() {
        let p = params();
        let t = 0.5 * PI / p.kappa();
        let mean = quantum_mean_coherent(c(3.0, 0.0), &p, t);
        assert!((mean.norm() - 3.0 * (-9.0_f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn fock_phase_map_on_single_photon_is_free_phase() {
        let p = params();
        let one = FockVector::from_coeffs(vec![c(0.0, 0.0), c(1.0, 0.0)]).unwrap();
        let t = 0.37;
        let out = quantum_evolve_fock(&one, &p, t);
        assert!((out.coeffs()[1] - C64::from_polar(1.0, -p.omega() * t)).norm() < 1e-15);
    }

    #[test]
    fn fock_evolution_preserves_norm() {
        let p = params();
        let state = coherent_fock(c(3.0, 0.0), 60).unwrap();
        let out = quantum_evolve_fock(&state, &p, 17.3);
        assert!((out.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn kerr_phases_vanish_at_two_pi_over_kappa() {
        // At t = 2 pi / kappa every Kerr phase is pi n (n - 1), an even
        // multiple of pi, so the state equals the freely evolved one.
        let p = params();
        let t = 2.0 * PI / p.kappa();
        let state = coherent_fock(c(3.0, 0.0), 60).unwrap();
        let evolved = quantum_evolve_fock(&state, &p, t);
        let free: Vec<C64> = state
            .coeffs()
            .iter()
            .enumerate()
            .map(|(n, c)| c * C64::from_polar(1.0, -p.omega() * t * n as f64))
            .collect();
        for (a, b) in evolved.coeffs().iter().zip(&free) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn fock_mean_tracks_closed_form() {
        let p = params();
        let state = coherent_fock(c(3.0, 0.0), 60).unwrap();
        for kt in [0.1, 1.0, PI / 2.0] {
            let t = kt / p.kappa();
            let mean = quantum_evolve_fock(&state, &p, t).mean_annihilation();
            let exact = quantum_mean_coherent(c(3.0, 0.0), &p, t);
            assert!((mean - exact).norm() < 1e-8, "kt = {kt}");
        }
    }

    #[test]
    fn vector_field_coefficients_match_heisenberg_symbol() {
        // The engine's vector field is -i f(|a|^2) a with f = omega +
        // omega chi |a|^2; extract (omega, omega chi) from two radii and
        // compare against the parameters.
        let p = KerrParams::new(1.7, 0.23);
        let model = hamiltonian_model(&p);
        let field = |a: C64| -> C64 {
            let g = model
                .gradient(&ClassicalParameter::new(vec![a]))
                .unwrap()[0];
            C64::new(0.0, -1.0) * g
        };
        let f_at = |r2: f64| {
            let a = c(r2.sqrt(), 0.0);
            (field(a) / (C64::new(0.0, -1.0) * a)).re
        };
        let (r2a, r2b) = (1.0, 4.0);
        let (fa, fb) = (f_at(r2a), f_at(r2b));
        let omega_chi = (fb - fa) / (r2b - r2a);
        let omega = fa - omega_chi * r2a;
        assert!((omega - p.omega()).abs() < 1e-12);
        assert!((omega_chi - p.omega() * p.chi()).abs() < 1e-12);
    }

    #[test]
    fn engine_trajectory_matches_closed_form_flow() {
        let p = params();
        let model = hamiltonian_model(&p);
        let a0 = c(3.0, 0.0);
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.1).collect();
        let record = evolve_constrained(
            &model,
            &ClassicalParameter::new(vec![a0]),
            &grid,
            &IntegratorOptions::strict(),
        )
        .unwrap();
        for (t, s) in grid.iter().zip(&record.states) {
            let exact = classical_flow(a0, &p, *t);
            assert!((s.values[0] - exact).norm() < 1e-8, "t = {t}");
        }
    }

    #[test]
    fn small_time_gap_shrinks_quadratically() {
        let p = params();
        let a0 = c(3.0, 0.0);
        let gap = |kt: f64| {
            let t = kt / p.kappa();
            (classical_flow(a0, &p, t) - quantum_mean_coherent(a0, &p, t)).norm()
        };
        let ratio = gap(1e-2) / gap(1e-3);
        assert!((80.0..=120.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn panel_labels_follow_initial_and_dynamics() {
        let coh = PanelInitial::Coherent(c(3.0, 0.0));
        let cat = PanelInitial::Cat {
            alpha1: C64::from_polar(3.0, -PI / 4.0),
            alpha2: C64::from_polar(3.0, PI / 4.0),
            rel_sign: -1.0,
        };
        let spec = |initial, dynamics| PanelSpec {
            initial,
            dynamics,
            time: 1.0,
            co_rotating: true,
        };
        assert_eq!(spec(coh, PanelDynamics::Classical).label(), "cc");
        assert_eq!(spec(coh, PanelDynamics::Quantum).label(), "cq");
        assert_eq!(spec(cat, PanelDynamics::Classical).label(), "qc");
        assert_eq!(spec(cat, PanelDynamics::Quantum).label(), "qq");
    }

    #[test]
    fn classical_panel_of_coherent_state_stays_nonnegative() {
        let p = params();
        let spec = PanelSpec {
            initial: PanelInitial::Coherent(c(3.0, 0.0)),
            dynamics: PanelDynamics::Classical,
            time: PI / p.kappa(),
            co_rotating: true,
        };
        let geom = GridGeometry::new((-6.0, 6.0), (-6.0, 6.0), 151, 151).unwrap();
        let out = render_panel(&spec, &p, &geom, 60, 8).unwrap();
        assert!(out.wigner.min() >= -1e-9);
        // Trajectory endpooints: starts at alpha0, ends at the co-rotated
        // closed-form point.
        let (t0, m0) = out.trajectory[0];
        assert_eq!(t0, 0.0);
        assert!((m0 - c(3.0, 0.0)).norm() < 1e-12);
        let (tf, mf) = *out.trajectory.last().unwrap();
        let expected = classical_flow(c(3.0, 0.0), &p, tf) * C64::from_polar(1.0, p.omega() * tf);
        assert!((mf - expected).norm() < 1e-12);
    }

    #[test]
    fn quantum_panel_of_coherent_state_develops_negativity() {
        let p = params();
        let spec = PanelSpec {
            initial: PanelInitial::Coherent(c(3.0, 0.0)),
            dynamics: PanelDynamics::Quantum,
            time: PI / p.kappa(),
            co_rotating: true,
        };
        let geom = GridGeometry::new((-6.0, 6.0), (-6.0, 6.0), 151, 151).unwrap();
        let out = render_panel(&spec, &p, &geom, 60, 4).unwrap();
        assert!(out.wigner.min() < -0.01 * std::f64::consts::FRAC_2_PI);
    }
}
