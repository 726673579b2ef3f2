//! Adaptive embedded Runge-Kutta 5(4) integrator (Dormand-Prince) with
//! fourth-order dense output, generic over real and complex state scalars.
//!
//! The solver samples the solution exactly at the requested output times via
//! the interpolation polynomial of each accepted step, so output resolution
//! never forces the step size.

use num_complex::Complex64 as C64;
use thiserror::Error;

/// Scalar types an ODE state vector may be built from.
pub trait OdeScalar: Copy + Send + Sync + 'static {
    fn zero() -> Self;
    fn add(self, other: Self) -> Self;
    fn sub(self, other: Self) -> Self;
    fn scale(self, factor: f64) -> Self;
    fn magnitude(self) -> f64;
    fn is_finite(self) -> bool;
}

impl OdeScalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn add(self, other: Self) -> Self {
        self + other
    }
    fn sub(self, other: Self) -> Self {
        self - other
    }
    fn scale(self, factor: f64) -> Self {
        self * factor
    }
    fn magnitude(self) -> f64 {
        self.abs()
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

impl OdeScalar for C64 {
    fn zero() -> Self {
        C64::new(0.0, 0.0)
    }
    fn add(self, other: Self) -> Self {
        self + other
    }
    fn sub(self, other: Self) -> Self {
        self - other
    }
    fn scale(self, factor: f64) -> Self {
        self * factor
    }
    fn magnitude(self) -> f64 {
        self.norm()
    }
    fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

#[derive(Debug, Error)]
pub enum OdeError {
    #[error("output grid must be nonempty and strictly increasing")]
    BadGrid,
    #[error("step size underflow at t = {t} (stiff or singular right-hand side)")]
    StepUnderflow { t: f64 },
    #[error("step budget exhausted at t = {t}; tolerance unachievable")]
    MaxStepsExceeded { t: f64 },
    #[error("non-finite right-hand side at t = {t}")]
    NonFinite { t: f64 },
}

/// Integration result sampled at the requested output times.
#[derive(Debug, Clone)]
pub struct OdeSolution<S> {
    pub times: Vec<f64>,
    pub states: Vec<Vec<S>>,
    pub accepted: usize,
    pub rejected: usize,
}

/// Dormand-Prince 5(4) with PI-free classic step control.
#[derive(Debug, Clone)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; estimated from the right-hand side when absent.
    pub h0: Option<f64>,
    pub max_steps: usize,
}

impl Default for Dopri5 {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            h0: None,
            max_steps: 10_000_000,
        }
    }
}

// Butcher tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// Embedded error coefficients (5th minus 4th order weights).
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
// Dense-output coefficients.
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

impl Dopri5 {
    /// Integrate `dy/dt = f(t, y)` from `t_grid[0]`, returning states at every
    /// grid time. The grid must be strictly increasing.
    pub fn solve<S, F>(&self, y0: &[S], t_grid: &[f64], mut f: F) -> Result<OdeSolution<S>, OdeError>
    where
        S: OdeScalar,
        F: FnMut(f64, &[S], &mut [S]),
    {
        if t_grid.is_empty() || t_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(OdeError::BadGrid);
        }
        let dim = y0.len();
        let t0 = t_grid[0];
        let tf = *t_grid.last().unwrap();

        let mut states = Vec::with_capacity(t_grid.len());
        states.push(y0.to_vec());
        if t_grid.len() == 1 {
            return Ok(OdeSolution {
                times: t_grid.to_vec(),
                states,
                accepted: 0,
                rejected: 0,
            });
        }

        let mut t = t0;
        let mut y = y0.to_vec();
        let mut k: [Vec<S>; 7] = std::array::from_fn(|_| vec![S::zero(); dim]);
        let mut y_stage = vec![S::zero(); dim];
        let mut y_new = vec![S::zero(); dim];

        let eval =
            |f: &mut F, t: f64, y: &[S], out: &mut Vec<S>| -> Result<(), OdeError> {
                f(t, y, out);
                if out.iter().any(|v| !v.is_finite()) {
                    return Err(OdeError::NonFinite { t });
                }
                Ok(())
            };

        eval(&mut f, t, &y, &mut k[0])?;
        let mut h = match self.h0 {
            Some(h0) => h0.min(tf - t0),
            None => self.initial_step(&mut f, t, &y, &k[0].clone(), tf, &eval)?,
        };

        let mut next_out = 1usize;
        let mut accepted = 0usize;
        let mut rejected = 0usize;
        let mut steps = 0usize;
        let mut last_rejected = false;

        while t < tf {
            if steps >= self.max_steps {
                return Err(OdeError::MaxStepsExceeded { t });
            }
            steps += 1;
            if t + h > tf {
                h = tf - t;
            }
            if h <= f64::EPSILON * t.abs().max(1.0) {
                // A sub-epsilon sliver left by rounding at the horizon is
                // completion, not stiffness.
                if tf - t <= 4.0 * f64::EPSILON * tf.abs().max(1.0) {
                    break;
                }
                return Err(OdeError::StepUnderflow { t });
            }

            // Stages 2..7 (k1 is fresh from FSAL or the initial evaluation).
            for s in 1..7 {
                for i in 0..dim {
                    let mut acc = S::zero();
                    for (j, kj) in k.iter().enumerate().take(s) {
                        let a = A[s][j];
                        if a != 0.0 {
                            acc = acc.add(kj[i].scale(a));
                        }
                    }
                    y_stage[i] = y[i].add(acc.scale(h));
                }
                eval(&mut f, t + C[s] * h, &y_stage, &mut k[s])?;
            }
            // 5th-order solution is stage 7's argument (A[6] row equals b).
            for i in 0..dim {
                let mut acc = S::zero();
                for (j, kj) in k.iter().enumerate().take(6) {
                    let a = A[6][j];
                    if a != 0.0 {
                        acc = acc.add(kj[i].scale(a));
                    }
                }
                y_new[i] = y[i].add(acc.scale(h));
            }

            // Scaled RMS error norm over the embedded difference.
            let mut err_sq = 0.0;
            for i in 0..dim {
                let mut e = S::zero();
                for (j, kj) in k.iter().enumerate() {
                    if E[j] != 0.0 {
                        e = e.add(kj[i].scale(E[j]));
                    }
                }
                let sc = self.atol + self.rtol * y[i].magnitude().max(y_new[i].magnitude());
                let r = e.magnitude() * h / sc;
                err_sq += r * r;
            }
            let err = (err_sq / dim as f64).sqrt();

            if err <= 1.0 {
                accepted += 1;
                // k[6] currently holds f(t + h, y_new): FSAL.
                let t_new = t + h;
                let eps = 1e-14 * t_new.abs().max(1.0);

                // Dense output for grid points inside (t, t_new].
                if next_out < t_grid.len() && t_grid[next_out] <= t_new + eps {
                    let cont = dense_coefficients(&y, &y_new, &k, h, dim);
                    while next_out < t_grid.len() {
                        let t_out = t_grid[next_out];
                        if t_out > t_new + eps {
                            break;
                        }
                        if (t_out - t_new).abs() <= eps {
                            states.push(y_new.clone());
                        } else {
                            let theta = (t_out - t) / h;
                            states.push(eval_dense(&cont, theta, dim));
                        }
                        next_out += 1;
                    }
                }

                t = t_new;
                std::mem::swap(&mut y, &mut y_new);
                k.swap(0, 6);

                let fac = if err == 0.0 {
                    10.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, if last_rejected { 1.0 } else { 10.0 })
                };
                h *= fac;
                last_rejected = false;
            } else {
                rejected += 1;
                last_rejected = true;
                h *= (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            }
        }

        // Numerical slack can leave the final grid point unemitted.
        while next_out < t_grid.len() {
            states.push(y.clone());
            next_out += 1;
        }

        Ok(OdeSolution {
            times: t_grid.to_vec(),
            states,
            accepted,
            rejected,
        })
    }

    /// Hairer-style automatic initial step selection.
    fn initial_step<S, F>(
        &self,
        f: &mut F,
        t0: f64,
        y0: &[S],
        f0: &[S],
        tf: f64,
        eval: &impl Fn(&mut F, f64, &[S], &mut Vec<S>) -> Result<(), OdeError>,
    ) -> Result<f64, OdeError>
    where
        S: OdeScalar,
        F: FnMut(f64, &[S], &mut [S]),
    {
        let dim = y0.len();
        let span = tf - t0;
        let sc: Vec<f64> = y0
            .iter()
            .map(|v| self.atol + self.rtol * v.magnitude())
            .collect();
        let rms = |v: &[S]| -> f64 {
            let s: f64 = v
                .iter()
                .zip(&sc)
                .map(|(x, s)| (x.magnitude() / s).powi(2))
                .sum();
            (s / dim as f64).sqrt()
        };
        let d0 = rms(y0);
        let d1 = rms(f0);
        let mut h = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6 * span
        } else {
            0.01 * (d0 / d1)
        };
        h = h.min(span);

        let y1: Vec<S> = y0
            .iter()
            .zip(f0)
            .map(|(y, f)| y.add(f.scale(h)))
            .collect();
        let mut f1 = vec![S::zero(); dim];
        eval(f, t0 + h, &y1, &mut f1)?;
        let d2 = {
            let s: f64 = f1
                .iter()
                .zip(f0)
                .zip(&sc)
                .map(|((a, b), s)| (a.sub(*b).magnitude() / s).powi(2))
                .sum();
            (s / dim as f64).sqrt() / h
        };
        let d_max = d1.max(d2);
        let h1 = if d_max <= 1e-15 {
            (h * 1e-3).max(1e-6 * span)
        } else {
            (0.01 / d_max).powf(0.2)
        };
        Ok((100.0 * h).min(h1).min(span))
    }
}

fn dense_coefficients<S: OdeScalar>(
    y_old: &[S],
    y_new: &[S],
    k: &[Vec<S>; 7],
    h: f64,
    dim: usize,
) -> [Vec<S>; 5] {
    let mut cont: [Vec<S>; 5] = std::array::from_fn(|_| vec![S::zero(); dim]);
    for i in 0..dim {
        let ydiff = y_new[i].sub(y_old[i]);
        let bspl = k[0][i].scale(h).sub(ydiff);
        cont[0][i] = y_old[i];
        cont[1][i] = ydiff;
        cont[2][i] = bspl;
        cont[3][i] = ydiff.sub(k[6][i].scale(h)).sub(bspl);
        let mut c5 = S::zero();
        for (j, kj) in k.iter().enumerate() {
            if D[j] != 0.0 {
                c5 = c5.add(kj[i].scale(D[j]));
            }
        }
        cont[4][i] = c5.scale(h);
    }
    cont
}

fn eval_dense<S: OdeScalar>(cont: &[Vec<S>; 5], theta: f64, dim: usize) -> Vec<S> {
    let theta1 = 1.0 - theta;
    (0..dim)
        .map(|i| {
            let inner = cont[3][i].add(cont[4][i].scale(theta1));
            let mid = cont[2][i].add(inner.scale(theta));
            cont[0][i].add(cont[1][i].add(mid.scale(theta1)).scale(theta))
        })
        .collect()
}
