use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::barrier::{minimize, ConvexProgram, Evaluation};
use super::{DacScenario, PowerScenario, SolverOptions};
use crate::error::{Error, Result};
use crate::link::{dac_coefficients, uplink_time_async, PowerAllocation, RateVector, SinrCoefficients, TimingReport};

/// Concave minorant of `ln(1 + SINR_k)` in `u = √p`, tight at the expansion
/// point `uₙ`:
///
/// ```text
/// ln(1 + Υ²/Π) ≥ ln(1+a) − a + 2ΥₙΥ/Πₙ − a(Υ² + Π)/(Υₙ² + Πₙ),   a = Υₙ²/Πₙ
/// ```
///
/// with `Υ_k = u_k√A_k` and `Π_k = Σ_i u_i² c_ki + n_k`. Expanded, this is
/// `c0_k + λ_k u_k − w_k Σ_i q_ki u_i²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate {
    pub c0: Vec<f64>,
    pub lambda: Vec<f64>,
    pub w: Vec<f64>,
    /// `q_ki = c_ki + A_k δ_ki`
    pub q: DMatrix<f64>,
}

impl Surrogate {
    pub fn new(coeffs: &SinrCoefficients, expansion: &[f64]) -> Result<Self> {
        let n = coeffs.num_ues();
        if expansion.len() != n {
            return Err(Error::InvalidArgument("expansion point has the wrong length".into()));
        }
        let mut c0 = vec![0.0; n];
        let mut lambda = vec![0.0; n];
        let mut w = vec![0.0; n];
        let mut q = coeffs.cross.clone();
        for k in 0..n {
            let pi: f64 = (0..n).map(|i| expansion[i] * expansion[i] * coeffs.cross[(k, i)]).sum::<f64>() + coeffs.noise[k];
            if !(pi > 0.0) {
                return Err(Error::InvalidExpansionPoint(format!("interference-plus-noise of UE {k} is {pi}")));
            }
            let ups = expansion[k] * coeffs.signal[k].sqrt();
            let a = ups * ups / pi;
            w[k] = a / (ups * ups + pi);
            lambda[k] = 2.0 * ups * coeffs.signal[k].sqrt() / pi;
            c0[k] = a.ln_1p() - a - w[k] * coeffs.noise[k];
            q[(k, k)] += coeffs.signal[k];
        }
        Ok(Surrogate { c0, lambda, w, q })
    }

    /// Bound on `ln(1 + SINR_k)` at `u`, for every k.
    pub fn eval_nats(&self, u: &[f64]) -> Vec<f64> {
        (0..self.c0.len())
            .map(|k| {
                let quad: f64 = u.iter().enumerate().map(|(i, ui)| self.q[(k, i)] * ui * ui).sum();
                self.c0[k] + self.lambda[k] * u[k] - self.w[k] * quad
            })
            .collect()
    }
}

/// Lower bound on every UE's rate (bit/s) at `u`, expanded around `expansion`.
pub fn rate_lower_bound(u: &[f64], expansion: &[f64], scenario: &PowerScenario) -> Result<Vec<f64>> {
    let s = Surrogate::new(&scenario.coeffs, expansion)?;
    let scale = scenario.prelog_hz / std::f64::consts::LN_2;
    Ok(s.eval_nats(u).into_iter().map(|r| scale * r).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaState {
    /// √p (W^½)
    pub u: Vec<f64>,
    /// Rates (bit/s) certified by the surrogate at `u`.
    pub rates: Vec<f64>,
    /// x₁ + x₂ (s)
    pub x: f64,
    /// max_k S·T/R_k (s)
    pub x1: f64,
    /// K·S·T/Σ R_k (s)
    pub x2: f64,
    pub iteration: usize,
}

impl ScaState {
    fn from_rates(u: Vec<f64>, rates: Vec<f64>, scenario: &PowerScenario, iteration: usize) -> Self {
        let st = scenario.update_bits * scenario.rounds as f64;
        let min_r = rates.iter().cloned().fold(f64::INFINITY, f64::min);
        let x1 = st / min_r;
        let x2 = rates.len() as f64 * st / rates.iter().sum::<f64>();
        ScaState { u, rates, x: x1 + x2, x1, x2, iteration }
    }

    pub fn powers(&self) -> PowerAllocation {
        PowerAllocation(self.u.iter().map(|u| u * u).collect())
    }
}

/// Subproblem in normalized variables `z = (v, x)`, `u = √p_max·v`:
///
/// ```text
/// minimize x + K/Σ_k r_k(v)   s.t.  1/x ≤ r_k(v),  0 ≤ v ≤ 1
/// r_k(v) = c0_k + l_k v_k − Σ_i Q_ki v_i²
/// ```
struct Subproblem {
    c0: Vec<f64>,
    l: Vec<f64>,
    /// w_k q_ki p_max
    big_q: DMatrix<f64>,
}

impl Subproblem {
    fn new(s: &Surrogate, max_power: f64) -> Self {
        let root = max_power.sqrt();
        let big_q = DMatrix::from_fn(s.q.nrows(), s.q.ncols(), |k, i| s.w[k] * s.q[(k, i)] * max_power);
        Subproblem {
            c0: s.c0.clone(),
            l: s.lambda.iter().map(|l| l * root).collect(),
            big_q,
        }
    }

    fn k(&self) -> usize {
        self.c0.len()
    }

    fn rate(&self, k: usize, v: &[f64]) -> f64 {
        let quad: f64 = v.iter().enumerate().map(|(i, vi)| self.big_q[(k, i)] * vi * vi).sum();
        self.c0[k] + self.l[k] * v[k] - quad
    }

    /// ∂r_k/∂v_j
    fn rate_grad(&self, k: usize, v: &[f64], j: usize) -> f64 {
        let lin = if j == k { self.l[k] } else { 0.0 };
        lin - 2.0 * self.big_q[(k, j)] * v[j]
    }
}

impl ConvexProgram for Subproblem {
    fn dim(&self) -> usize {
        self.k() + 1
    }

    fn num_constraints(&self) -> usize {
        3 * self.k()
    }

    fn objective(&self, z: &DVector<f64>) -> Option<Evaluation> {
        let k_n = self.k();
        let v = &z.as_slice()[..k_n];
        let sum: f64 = (0..k_n).map(|k| self.rate(k, v)).sum();
        if !(sum > 0.0) {
            return None;
        }
        let kf = k_n as f64;
        let mut ev = Evaluation::zeros(k_n + 1);
        ev.value = z[k_n] + kf / sum;
        let grad_sum: Vec<f64> = (0..k_n).map(|j| (0..k_n).map(|k| self.rate_grad(k, v, j)).sum()).collect();
        for j in 0..k_n {
            ev.grad[j] = -kf * grad_sum[j] / (sum * sum);
            for i in 0..k_n {
                ev.hess[(j, i)] = 2.0 * kf * grad_sum[j] * grad_sum[i] / sum.powi(3);
            }
            // ∇²Σr = −2 diag(Σ_k Q_kj)
            let curv: f64 = (0..k_n).map(|k| self.big_q[(k, j)]).sum();
            ev.hess[(j, j)] += kf * 2.0 * curv / (sum * sum);
        }
        ev.grad[k_n] = 1.0;
        Some(ev)
    }

    fn constraint(&self, i: usize, z: &DVector<f64>) -> Evaluation {
        let k_n = self.k();
        let v = &z.as_slice()[..k_n];
        let mut ev = Evaluation::zeros(k_n + 1);
        if i < k_n {
            let x = z[k_n];
            if !(x > 0.0) {
                return Evaluation::outside(k_n + 1);
            }
            ev.value = 1.0 / x - self.rate(i, v);
            for j in 0..k_n {
                ev.grad[j] = -self.rate_grad(i, v, j);
                ev.hess[(j, j)] = 2.0 * self.big_q[(i, j)];
            }
            ev.grad[k_n] = -1.0 / (x * x);
            ev.hess[(k_n, k_n)] = 2.0 / (x * x * x);
        } else if i < 2 * k_n {
            let j = i - k_n;
            ev.value = -v[j];
            ev.grad[j] = -1.0;
        } else {
            let j = i - 2 * k_n;
            ev.value = v[j] - 1.0;
            ev.grad[j] = 1.0;
        }
        ev
    }
}

/// Solves the convex approximation expanded at `state.u`.
pub fn solve_subproblem(state: &ScaState, scenario: &PowerScenario, options: &SolverOptions) -> Result<ScaState> {
    scenario.check()?;
    let k_n = scenario.num_ues();
    let root = scenario.max_power.sqrt();
    let sur = Surrogate::new(&scenario.coeffs, &state.u)?;
    let prog = Subproblem::new(&sur, scenario.max_power);

    // strictly interior start near the expansion point
    let vn: Vec<f64> = state.u.iter().map(|u| (u / root).clamp(0.0, 1.0)).collect();
    let margin = 1e-6;
    let inner: Vec<f64> = vn.iter().map(|v| v.clamp(margin, 1.0 - margin)).collect();
    let mut start = None;
    let mut theta = 1.0;
    for _ in 0..60 {
        let v: Vec<f64> = vn.iter().zip(&inner).map(|(a, b)| a + theta * (b - a)).collect();
        let min_r = (0..k_n).map(|k| prog.rate(k, &v)).fold(f64::INFINITY, f64::min);
        if min_r > 0.0 && v.iter().all(|&x| x > 0.0 && x < 1.0) {
            let mut z = v;
            z.push(2.0 / min_r);
            start = Some(DVector::from_vec(z));
            break;
        }
        theta *= 0.5;
    }
    let z0 = start.ok_or_else(|| Error::InvalidExpansionPoint("no strictly feasible point near the expansion point".into()))?;
    let report = minimize(&prog, z0, &options.barrier)?;

    let v: Vec<f64> = report.z.as_slice()[..k_n].iter().map(|x| x.clamp(0.0, 1.0)).collect();
    let u: Vec<f64> = v.iter().map(|x| x * root).collect();
    let scale = scenario.prelog_hz / std::f64::consts::LN_2;
    let rates: Vec<f64> = sur.eval_nats(&u).into_iter().map(|r| scale * r).collect();
    if rates.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::SolverFailure {
            iterations: report.newton_iterations,
            reason: "subproblem solution has a non-positive certified rate".into(),
        });
    }
    Ok(ScaState::from_rates(u, rates, scenario, state.iteration + 1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaOutcome {
    pub powers: PowerAllocation,
    /// Exact rates at `powers`.
    pub rates: RateVector,
    /// Exact timing at `powers`.
    pub timing: TimingReport,
    /// Exact objective (s) at the start point and after each outer iteration.
    pub trace: Vec<f64>,
    pub converged: bool,
    pub state: ScaState,
}

/// Successive convex approximation from `u⁽⁰⁾ = √(p_max/2)` (or full power).
pub fn sca_solve(scenario: &PowerScenario, options: &SolverOptions) -> Result<ScaOutcome> {
    scenario.check()?;
    options.check()?;
    let k_n = scenario.num_ues();
    let p0 = if options.start_at_full_power { scenario.max_power } else { scenario.max_power / 2.0 };
    let u0 = vec![p0.sqrt(); k_n];
    let rates0 = scenario.true_rates(&vec![p0; k_n]).0;
    let mut state = ScaState::from_rates(u0, rates0, scenario, 0);
    let mut trace = vec![state.x];
    let mut converged = false;
    for _ in 0..options.max_outer_iters {
        let next = solve_subproblem(&state, scenario, options)?;
        let prev = *trace.last().expect("non-empty");
        let now = scenario.true_time(next.powers().as_slice())?.total;
        if now > prev + options.monotonicity_slack * prev.abs().max(1.0) {
            return Err(Error::Internal(format!(
                "objective increased from {prev} to {now} at outer iteration {}",
                next.iteration
            )));
        }
        trace.push(now);
        state = next;
        if (now - prev).abs() <= options.tolerance_s {
            converged = true;
            break;
        }
    }
    let powers = state.powers();
    let rates = scenario.true_rates(powers.as_slice());
    let timing = scenario.true_time(powers.as_slice())?;
    Ok(ScaOutcome {
        powers,
        rates,
        timing,
        trace,
        converged,
        state,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DacOutcome {
    /// Per-round powers; UEs outside the round's active set transmit nothing.
    pub powers: Vec<PowerAllocation>,
    /// Per-round exact rates (0 for inactive UEs).
    pub rates: Vec<Vec<f64>>,
    pub timing: TimingReport,
    /// Number of distinct masks actually solved.
    pub distinct_masks: usize,
}

fn solve_dac_rounds<F>(scenario: &DacScenario, mut solve_round: F) -> Result<DacOutcome>
where
    F: FnMut(&PowerScenario) -> Result<Vec<f64>>,
{
    let k_n = scenario.beta.ncols();
    let mut memo: HashMap<_, (Vec<f64>, Vec<f64>)> = HashMap::new();
    let mut powers = Vec::with_capacity(scenario.masks.len());
    let mut rates = Vec::with_capacity(scenario.masks.len());
    for mask in &scenario.masks {
        if !memo.contains_key(mask) {
            let active = mask.active_set()?;
            let coeffs = dac_coefficients(&scenario.beta, scenario.zeta, mask, scenario.noise_power, scenario.grad_dim).restrict(&active);
            let round = PowerScenario {
                coeffs,
                max_power: scenario.max_power,
                prelog_hz: scenario.prelog_hz,
                update_bits: scenario.update_bits,
                rounds: 1,
            };
            let p_active = solve_round(&round).map_err(|e| match e {
                Error::UnservedUe { ue } => Error::UnservedUe { ue: active[ue] },
                other => other,
            })?;
            let r_active = round.true_rates(&p_active).0;
            let mut p = vec![0.0; k_n];
            let mut r = vec![0.0; k_n];
            for (j, &k) in active.iter().enumerate() {
                p[k] = p_active[j];
                r[k] = r_active[j];
            }
            memo.insert(mask.clone(), (p, r));
        }
        let (p, r) = &memo[mask];
        powers.push(PowerAllocation(p.clone()));
        rates.push(r.clone());
    }
    let timing = uplink_time_async(&rates, &scenario.masks, scenario.update_bits)?;
    Ok(DacOutcome {
        powers,
        rates,
        timing,
        distinct_masks: memo.len(),
    })
}

/// Round-by-round SCA for the masked DAC setting.
pub fn sca_solve_dac(scenario: &DacScenario, options: &SolverOptions) -> Result<DacOutcome> {
    solve_dac_rounds(scenario, |round| Ok(sca_solve(round, options)?.powers.0))
}

/// Every active UE at `p_max` in every round.
pub fn full_power_dac(scenario: &DacScenario) -> Result<DacOutcome> {
    solve_dac_rounds(scenario, |round| {
        round.check()?;
        Ok(vec![round.max_power; round.num_ues()])
    })
}
