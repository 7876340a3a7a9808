//! Log-barrier interior-point method for small smooth convex programs
//!
//! ```text
//! minimize f₀(z)  subject to  f_i(z) ≤ 0,  i = 1..m
//! ```
//!
//! using damped Newton steps on `t·f₀ − Σ ln(−f_i)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Value, gradient and Hessian of one function at a point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

impl Evaluation {
    pub fn zeros(n: usize) -> Self {
        Evaluation {
            value: 0.0,
            grad: DVector::zeros(n),
            hess: DMatrix::zeros(n, n),
        }
    }

    /// Marks a point outside the function's domain.
    pub fn outside(n: usize) -> Self {
        Evaluation {
            value: f64::INFINITY,
            ..Self::zeros(n)
        }
    }
}

pub trait ConvexProgram {
    fn dim(&self) -> usize;
    fn num_constraints(&self) -> usize;
    /// `None` outside the objective's domain.
    fn objective(&self, z: &DVector<f64>) -> Option<Evaluation>;
    /// The i-th constraint function in `f_i(z) ≤ 0` form; an infinite value
    /// marks a point outside its domain.
    fn constraint(&self, i: usize, z: &DVector<f64>) -> Evaluation;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierOptions {
    /// Initial t as a multiple of m/max(1, |f₀(z₀)|).
    pub initial_t: f64,
    /// Barrier growth factor per centering step.
    pub growth: f64,
    /// Stop once m/t ≤ gap_tol·max(1, |f₀|).
    pub gap_tol: f64,
    /// Centering stops once λ²/2 falls below this.
    pub newton_tol: f64,
    pub max_newton: usize,
    pub max_centering: usize,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        BarrierOptions {
            initial_t: 1.0,
            growth: 10.0,
            gap_tol: 1e-10,
            newton_tol: 1e-9,
            max_newton: 200,
            max_centering: 60,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BarrierReport {
    pub z: DVector<f64>,
    pub objective: f64,
    /// m/t at termination.
    pub duality_gap: f64,
    pub newton_iterations: usize,
    pub centering_steps: usize,
}

struct Barrier<'a, P: ConvexProgram> {
    prog: &'a P,
    t: f64,
}

impl<P: ConvexProgram> Barrier<'_, P> {
    /// Barrier value only; `None` when infeasible.
    fn value(&self, z: &DVector<f64>) -> Option<f64> {
        let f0 = self.prog.objective(z)?;
        let mut v = self.t * f0.value;
        for i in 0..self.prog.num_constraints() {
            let fi = self.prog.constraint(i, z).value;
            if !(fi < 0.0) {
                return None;
            }
            v -= (-fi).ln();
        }
        v.is_finite().then_some(v)
    }

    fn full(&self, z: &DVector<f64>) -> Option<Evaluation> {
        let n = self.prog.dim();
        let f0 = self.prog.objective(z)?;
        let mut out = Evaluation {
            value: self.t * f0.value,
            grad: f0.grad * self.t,
            hess: f0.hess * self.t,
        };
        for i in 0..self.prog.num_constraints() {
            let fi = self.prog.constraint(i, z);
            if !(fi.value < 0.0) {
                return None;
            }
            let s = -fi.value;
            out.value -= s.ln();
            out.grad += &fi.grad / s;
            out.hess += &fi.hess / s;
            out.hess.ger(1.0 / (s * s), &fi.grad, &fi.grad, 1.0);
        }
        debug_assert_eq!(out.grad.len(), n);
        Some(out)
    }
}

fn newton_direction(h: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = h.clone().cholesky() {
        return Some(ch.solve(&(-g)));
    }
    // nearly singular: fall back to a regularized solve
    let scale = h.diagonal().amax().max(1e-300);
    let reg = h + DMatrix::identity(h.nrows(), h.ncols()) * (1e-12 * scale);
    reg.cholesky().map(|ch| ch.solve(&(-g))).or_else(|| h.clone().lu().solve(&(-g)))
}

/// Runs the barrier method from the strictly feasible point `z0`.
pub fn minimize<P: ConvexProgram>(prog: &P, z0: DVector<f64>, opts: &BarrierOptions) -> Result<BarrierReport> {
    let m = prog.num_constraints() as f64;
    let infeasible = || Error::SolverFailure {
        iterations: 0,
        reason: "starting point is not strictly feasible".into(),
    };
    let f_start = prog.objective(&z0).ok_or_else(infeasible)?.value;
    let mut barrier = Barrier {
        prog,
        t: opts.initial_t * m.max(1.0) / f_start.abs().max(1.0),
    };
    if barrier.value(&z0).is_none() {
        return Err(infeasible());
    }
    let mut z = z0;
    let mut newton_total = 0;
    for step in 1..=opts.max_centering {
        let mut centered = false;
        let mut last_decrement = f64::INFINITY;
        for _ in 0..opts.max_newton {
            let ev = barrier.full(&z).expect("iterate stays feasible");
            let dz = newton_direction(&ev.hess, &ev.grad).ok_or_else(|| Error::SolverFailure {
                iterations: newton_total,
                reason: "singular Newton system".into(),
            })?;
            let decrement = -ev.grad.dot(&dz);
            newton_total += 1;
            if !decrement.is_finite() {
                return Err(Error::SolverFailure {
                    iterations: newton_total,
                    reason: "non-finite Newton decrement".into(),
                });
            }
            if decrement / 2.0 <= opts.newton_tol {
                centered = true;
                break;
            }
            // rounding floor: the decrement has stopped shrinking
            if decrement < 1e-6 && decrement > 0.5 * last_decrement {
                centered = true;
                break;
            }
            last_decrement = decrement;
            // near the center the Armijo test drowns in rounding of t·f₀,
            // so plain Newton steps only need to stay feasible
            let pure = decrement < 0.0625;
            let mut s = 1.0;
            let mut accepted = false;
            for _ in 0..80 {
                let cand = &z + &dz * s;
                if let Some(v) = barrier.value(&cand) {
                    if pure || v <= ev.value - 0.25 * s * decrement {
                        if cand == z {
                            break;
                        }
                        z = cand;
                        accepted = true;
                        break;
                    }
                }
                s *= 0.5;
            }
            if !accepted {
                // no further progress possible at machine precision
                centered = decrement < 1e-6;
                break;
            }
        }
        if !centered {
            return Err(Error::SolverFailure {
                iterations: newton_total,
                reason: format!("centering did not converge at t = {:e}", barrier.t),
            });
        }
        let f0 = prog.objective(&z).expect("feasible").value;
        let gap = m / barrier.t;
        if gap <= opts.gap_tol * f0.abs().max(1.0) {
            return Ok(BarrierReport {
                z,
                objective: f0,
                duality_gap: gap,
                newton_iterations: newton_total,
                centering_steps: step,
            });
        }
        barrier.t *= opts.growth;
    }
    Err(Error::SolverFailure {
        iterations: newton_total,
        reason: "barrier parameter limit reached".into(),
    })
}
