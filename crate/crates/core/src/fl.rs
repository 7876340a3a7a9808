//! Federated training over the simulated uplink.
//!
//! Each round: the CPU broadcasts `w`, every scheduled UE computes
//! `s_k = B_k ∇F_k(w)`, the updates are superposed over the air with
//! per-UE power normalization `√(p_k/‖s_k‖²)`, combined by MRC at the APs,
//! descaled at the CPU and averaged into the global gradient estimate.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::convergence::{bound_trace, estimate_constants, ConvergenceParams};
use crate::error::{Error, Result};
use crate::link::PowerAllocation;
use crate::privacy::{effective_noise_std_adc, effective_noise_std_dac, sensitivity_adc, sensitivity_dac, DpLedger, SensitivityMode};
use crate::rng::{SeedPath, Stream};
use crate::schedule::ServingMask;
use crate::topology::{complex_normal, ChannelRealization};

/// Sample-wise loss.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Loss {
    /// ½(wᵀx − y)²
    #[default]
    Quadratic,
    /// ln(1 + exp(−y wᵀx)), y ∈ {−1, 1}
    Logistic,
}

impl Loss {
    pub fn value(&self, w: &DVector<f64>, x: &[f64], y: f64) -> f64 {
        let z: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
        match self {
            Loss::Quadratic => 0.5 * (z - y).powi(2),
            Loss::Logistic => (-y * z).exp().ln_1p(),
        }
    }

    /// Derivative of the loss with respect to `wᵀx`.
    fn slope(&self, z: f64, y: f64) -> f64 {
        match self {
            Loss::Quadratic => z - y,
            Loss::Logistic => -y / (1.0 + (y * z).exp()),
        }
    }
}

/// Samples of one UE, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalDataset {
    pub features: DMatrix<f64>,
    pub labels: DVector<f64>,
}

impl LocalDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// F_k(w) = (1/B_k) Σ_n f(w; x_n, y_n)
    pub fn loss(&self, loss: Loss, w: &DVector<f64>) -> f64 {
        let rows = self.features.nrows();
        let x: Vec<Vec<f64>> = (0..rows).map(|n| self.features.row(n).iter().copied().collect()).collect();
        x.iter().zip(self.labels.iter()).map(|(x, &y)| loss.value(w, x, y)).sum::<f64>() / rows as f64
    }
}

/// ∇F_k(w) = (1/B_k) Σ_n ∇f(w; x_n, y_n)
pub fn local_gradient(loss: Loss, w: &DVector<f64>, data: &LocalDataset) -> Result<DVector<f64>> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("local dataset is empty".into()));
    }
    if data.features.ncols() != w.len() {
        return Err(Error::InvalidArgument("model and feature dimensions differ".into()));
    }
    let z = &data.features * w;
    let slopes = DVector::from_fn(data.len(), |n, _| loss.slope(z[n], data.labels[n]));
    Ok(data.features.transpose() * slopes / data.len() as f64)
}

/// w − η ĝ
pub fn global_update(w: &DVector<f64>, gradient: &DVector<f64>, learning_rate: f64) -> Result<DVector<f64>> {
    if !(learning_rate > 0.0) {
        return Err(Error::InvalidArgument(format!("learning rate must be > 0, got {learning_rate}")));
    }
    Ok(w - gradient * learning_rate)
}

/// Per-round transmit energy p_k·S/R_k (J); zero for silent UEs.
pub fn transmit_energy(powers: &[f64], rates: &[f64], update_bits: f64) -> Vec<f64> {
    powers
        .iter()
        .zip(rates)
        .map(|(&p, &r)| if p > 0.0 && r > 0.0 { p * update_bits / r } else { 0.0 })
        .collect()
}

/// All UEs' data.
#[derive(Debug, Clone, PartialEq)]
pub struct FederatedData {
    pub locals: Vec<LocalDataset>,
}

impl FederatedData {
    pub fn batch_total(&self) -> usize {
        self.locals.iter().map(LocalDataset::len).sum()
    }

    pub fn dim(&self) -> usize {
        self.locals.first().map_or(0, |d| d.features.ncols())
    }

    pub fn stacked_features(&self) -> DMatrix<f64> {
        let rows: Vec<_> = self.locals.iter().flat_map(|d| d.features.row_iter().map(|r| r.into_owned())).collect();
        DMatrix::from_rows(&rows)
    }

    fn stacked_labels(&self) -> DVector<f64> {
        DVector::from_iterator(self.batch_total(), self.locals.iter().flat_map(|d| d.labels.iter().copied()))
    }

    /// F(w) = (1/B_tot) Σ_k B_k F_k(w)
    pub fn loss(&self, loss: Loss, w: &DVector<f64>) -> f64 {
        let b = self.batch_total() as f64;
        self.locals.iter().map(|d| d.len() as f64 * d.loss(loss, w)).sum::<f64>() / b
    }

    /// ∇F(w) = (1/B_tot) Σ_k B_k ∇F_k(w)
    pub fn gradient(&self, loss: Loss, w: &DVector<f64>) -> Result<DVector<f64>> {
        let mut g = DVector::zeros(w.len());
        for d in &self.locals {
            g += local_gradient(loss, w, d)? * d.len() as f64;
        }
        Ok(g / self.batch_total() as f64)
    }

    /// Minimizer of the quadratic loss from the normal equations.
    pub fn quadratic_optimum(&self) -> Result<DVector<f64>> {
        let x = self.stacked_features();
        let y = self.stacked_labels();
        (x.transpose() * &x)
            .cholesky()
            .map(|c| c.solve(&(x.transpose() * y)))
            .ok_or_else(|| Error::InvalidArgument("feature Gram matrix is singular".into()))
    }
}

/// Linear-regression data `y = xᵀw* + e` with standard normal features.
pub fn synthetic_quadratic(num_ues: usize, samples_per_ue: usize, dim: usize, label_noise: f64, seed: u64) -> FederatedData {
    let base = SeedPath::root(seed).stream(Stream::Dataset);
    let mut rng = base.child(u64::MAX).rng();
    let truth = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
    let locals = (0..num_ues)
        .map(|k| {
            let mut rng = base.child(k as u64).rng();
            let features = DMatrix::from_fn(samples_per_ue, dim, |_, _| StandardNormal.sample(&mut rng));
            let noise = DVector::from_fn(samples_per_ue, |_, _| {
                let e: f64 = StandardNormal.sample(&mut rng);
                label_noise * e
            });
            let labels = &features * &truth + noise;
            LocalDataset { features, labels }
        })
        .collect();
    FederatedData { locals }
}

/// Which converter is quantized and with what gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Chain {
    Adc { alpha: f64 },
    Dac { zeta: f64 },
}

impl Chain {
    pub fn gain(&self) -> f64 {
        match *self {
            Chain::Adc { alpha } => alpha,
            Chain::Dac { zeta } => zeta,
        }
    }
}

/// Coefficient removed from each UE's combined signal at the CPU.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Descaler {
    /// gain·√(p_k/‖s_k‖²)·Σ_l d_kl|h_kl|²
    #[default]
    PerfectCsi,
    /// gain·√(p_k/‖s_k‖²)·Σ_l d_kl β_kl
    Statistical,
}

/// Simulation switches for the impairments of the uplink.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Impairments {
    pub thermal_noise: bool,
    pub quantization_noise: bool,
    pub interference: bool,
}

impl Default for Impairments {
    fn default() -> Self {
        Impairments {
            thermal_noise: true,
            quantization_noise: true,
            interference: true,
        }
    }
}

impl Impairments {
    pub fn none() -> Self {
        Impairments {
            thermal_noise: false,
            quantization_noise: false,
            interference: false,
        }
    }
}

/// One round of over-the-air aggregation.
#[derive(Debug, Clone)]
pub struct OtaInput<'a> {
    /// s_k; UEs outside the mask may pass anything.
    pub updates: &'a [DVector<f64>],
    pub channel: &'a ChannelRealization,
    pub powers: &'a [f64],
    pub chain: Chain,
    pub noise_power: f64,
    /// `None` serves everyone.
    pub mask: Option<&'a ServingMask>,
    pub impairments: Impairments,
    pub descaler: Descaler,
    /// UEs whose descaled update enters the global estimate.
    pub include: &'a [bool],
    /// Normalizer of the global estimate (served data size).
    pub batch_size: f64,
}

#[derive(Debug, Clone)]
pub struct OtaOutput {
    /// r_k after MRC combining; zero for unserved UEs.
    pub received: Vec<DVector<Complex64>>,
    /// Re(r_k)/c_k for served UEs.
    pub descaled: Vec<Option<DVector<f64>>>,
    /// Cross-UE part of each descaled update (including any scale mismatch).
    pub interference: Vec<DVector<f64>>,
    /// Per-coordinate variance of the descaled complex noise of each UE.
    pub noise_var: Vec<f64>,
    /// (1/batch_size) Σ_{included} descaled_k
    pub global: DVector<f64>,
}

fn served(mask: Option<&ServingMask>, l: usize, k: usize) -> bool {
    mask.is_none_or(|m| m.serves(l, k))
}

/// Simulates the received signals, descales them and forms the global estimate.
pub fn ota_aggregate(input: &OtaInput<'_>, seed: SeedPath) -> Result<OtaOutput> {
    let h = &input.channel.h;
    let beta = &input.channel.beta;
    let (n_ap, n_ue) = h.shape();
    if input.updates.len() != n_ue || input.powers.len() != n_ue || input.include.len() != n_ue {
        return Err(Error::InvalidArgument("updates, powers and include flags need one entry per UE".into()));
    }
    let dim = input.updates.iter().map(|s| s.len()).max().unwrap_or(0);
    let gain = input.chain.gain();
    let mask = input.mask;
    let ue_served: Vec<bool> = (0..n_ue).map(|k| (0..n_ap).any(|l| served(mask, l, k))).collect();

    // √(p_i/‖s_i‖²), zero for silent UEs
    let mut amp = vec![0.0; n_ue];
    for i in 0..n_ue {
        if !ue_served[i] {
            continue;
        }
        let norm = input.updates[i].norm();
        if norm > 0.0 {
            if !(input.powers[i] > 0.0) {
                return Err(Error::CannotDescale { ue: i });
            }
            amp[i] = (input.powers[i]).sqrt() / norm;
        }
    }

    // effective cross gain Σ_l (d_kl d_il) h_kl* h_il
    let cross = |k: usize, i: usize| -> Complex64 {
        (0..n_ap)
            .filter(|&l| served(mask, l, k) && (matches!(input.chain, Chain::Adc { .. }) || served(mask, l, i)))
            .map(|l| h[(l, k)].conj() * h[(l, i)])
            .sum()
    };

    let zero_c = DVector::from_element(dim, Complex64::new(0.0, 0.0));
    let mut noise = vec![zero_c.clone(); n_ue];
    let mut noise_raw_var = vec![0.0; n_ue];
    let mut thermal_rng = seed.stream(Stream::ThermalNoise).rng();
    let mut quant_rng = seed.stream(Stream::Quantizer).rng();
    let draw = |rng: &mut rand_chacha::ChaCha8Rng, sd: f64| DVector::from_fn(dim, |_, _| complex_normal(rng) * sd);
    match input.chain {
        Chain::Adc { alpha } => {
            for l in 0..n_ap {
                let thermal = if input.impairments.thermal_noise {
                    draw(&mut thermal_rng, input.noise_power.sqrt()) * Complex64::new(alpha, 0.0)
                } else {
                    zero_c.clone()
                };
                let rx: f64 = (0..n_ue).map(|i| input.powers[i] * beta[(l, i)]).sum();
                let q_var = alpha * (1.0 - alpha) * (rx + input.noise_power);
                let quant = if input.impairments.quantization_noise && q_var > 0.0 {
                    draw(&mut quant_rng, q_var.sqrt())
                } else {
                    zero_c.clone()
                };
                let at_ap = thermal + quant;
                let var = if input.impairments.thermal_noise { alpha * alpha * input.noise_power } else { 0.0 }
                    + if input.impairments.quantization_noise { q_var } else { 0.0 };
                for k in 0..n_ue {
                    noise[k] += &at_ap * h[(l, k)].conj();
                    noise_raw_var[k] += h[(l, k)].norm_sqr() * var;
                }
            }
        }
        Chain::Dac { zeta } => {
            for i in 0..n_ue {
                let q_var = zeta * (1.0 - zeta) * input.powers[i];
                if !(ue_served[i] && input.impairments.quantization_noise && q_var > 0.0) {
                    continue;
                }
                let nq = draw(&mut quant_rng, q_var.sqrt());
                for k in 0..n_ue {
                    if !ue_served[k] {
                        continue;
                    }
                    let c = cross(k, i);
                    noise[k] += &nq * c;
                    noise_raw_var[k] += c.norm_sqr() * q_var;
                }
            }
            if input.impairments.thermal_noise {
                for l in 0..n_ap {
                    let n_l = draw(&mut thermal_rng, input.noise_power.sqrt());
                    for k in 0..n_ue {
                        if served(mask, l, k) {
                            noise[k] += &n_l * h[(l, k)].conj();
                            noise_raw_var[k] += h[(l, k)].norm_sqr() * input.noise_power;
                        }
                    }
                }
            }
        }
    }

    let mut received = Vec::with_capacity(n_ue);
    let mut descaled = Vec::with_capacity(n_ue);
    let mut interference = Vec::with_capacity(n_ue);
    let mut noise_var = Vec::with_capacity(n_ue);
    let mut global = DVector::zeros(dim);
    for k in 0..n_ue {
        if !ue_served[k] {
            received.push(zero_c.clone());
            descaled.push(None);
            interference.push(DVector::zeros(dim));
            noise_var.push(0.0);
            continue;
        }
        let own: f64 = (0..n_ap).filter(|&l| served(mask, l, k)).map(|l| h[(l, k)].norm_sqr()).sum();
        let own_coeff = gain * amp[k] * own;
        let mut cross_sig = zero_c.clone();
        if input.impairments.interference {
            for i in (0..n_ue).filter(|&i| i != k && ue_served[i] && amp[i] > 0.0) {
                let c = cross(k, i) * (gain * amp[i]);
                cross_sig += input.updates[i].map(|v| c * v);
            }
        }
        let signal = input.updates[k].map(|v| Complex64::new(own_coeff * v, 0.0));
        let r = &signal + &cross_sig + &noise[k];
        let desc = match input.descaler {
            Descaler::PerfectCsi => own_coeff,
            Descaler::Statistical => {
                gain * amp[k] * (0..n_ap).filter(|&l| served(mask, l, k)).map(|l| beta[(l, k)]).sum::<f64>()
            }
        };
        if input.updates[k].norm() == 0.0 {
            received.push(r);
            descaled.push(Some(DVector::zeros(dim)));
            interference.push(DVector::zeros(dim));
            noise_var.push(0.0);
            continue;
        }
        if !(desc > 0.0) {
            return Err(Error::CannotDescale { ue: k });
        }
        let d_k = r.map(|z| z.re / desc);
        let interf = cross_sig.map(|z| z.re / desc) + &input.updates[k] * (own_coeff / desc - 1.0);
        if input.include[k] {
            global += &d_k;
        }
        received.push(r);
        descaled.push(Some(d_k));
        interference.push(interf);
        noise_var.push(noise_raw_var[k] / (desc * desc));
    }
    if input.batch_size > 0.0 {
        global /= input.batch_size;
    }
    Ok(OtaOutput {
        received,
        descaled,
        interference,
        noise_var,
        global,
    })
}

/// What happens to an update computed on an outdated model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StalePolicy {
    /// Aggregated like any other update.
    #[default]
    Aggregate,
    /// Transmitted but left out of the global estimate.
    Drop,
}

/// Transmit powers over the run.
#[derive(Debug, Clone, PartialEq)]
pub enum PowerPlan {
    Fixed(PowerAllocation),
    PerRound(Vec<PowerAllocation>),
}

impl PowerPlan {
    fn at(&self, t: usize) -> &[f64] {
        match self {
            PowerPlan::Fixed(p) => p.as_slice(),
            PowerPlan::PerRound(v) => v[t % v.len()].as_slice(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingOptions {
    /// Defaults to 1/M.
    pub learning_rate: Option<f64>,
    pub impairments: Impairments,
    pub descaler: Descaler,
    pub stale_policy: StalePolicy,
    pub sensitivity: SensitivityMode,
}

impl Default for TrainingOptions {
    fn default() -> Self {
        TrainingOptions {
            learning_rate: None,
            impairments: Impairments::default(),
            descaler: Descaler::PerfectCsi,
            stale_policy: StalePolicy::Aggregate,
            sensitivity: SensitivityMode::SumOverAps,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainingScenario {
    pub beta: DMatrix<f64>,
    pub data: FederatedData,
    pub loss: Loss,
    pub chain: Chain,
    pub noise_power: f64,
    pub powers: PowerPlan,
    /// One mask per round (cycled); `None` serves everyone.
    pub masks: Option<Vec<ServingMask>>,
    pub initial_model: DVector<f64>,
    pub options: TrainingOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub round: usize,
    pub loss: f64,
    pub gap: f64,
    pub bound: f64,
    /// Worst accumulated Λ over UEs (ADC) or APs (DAC).
    pub lambda: f64,
    pub served_count: usize,
    /// ‖I_t‖ with I_t = B·(interference part of ĝ).
    pub interference_norm: f64,
    /// Σ_k m̃_k²
    pub noise_power: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrace {
    pub rows: Vec<TraceRow>,
    pub params: ConvergenceParams,
    pub optimum: DVector<f64>,
    pub final_model: DVector<f64>,
}

impl TrainingTrace {
    /// `round,loss,gap,bound,lambda,served_count`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("round,loss,gap,bound,lambda,served_count\n");
        for r in &self.rows {
            out.push_str(&format!("{},{:e},{:e},{:e},{:e},{}\n", r.round, r.loss, r.gap, r.bound, r.lambda, r.served_count));
        }
        out
    }
}

/// Runs `rounds` rounds of the four-step protocol.
pub fn run_training(scenario: &TrainingScenario, rounds: usize, seed: u64) -> Result<TrainingTrace> {
    let loss = scenario.loss;
    if loss != Loss::Quadratic {
        return Err(Error::Unsupported("training traces need the quadratic loss (known optimum)".into()));
    }
    let data = &scenario.data;
    let (n_ap, n_ue) = scenario.beta.shape();
    if data.locals.len() != n_ue {
        return Err(Error::InvalidArgument("one local dataset per UE is required".into()));
    }
    if scenario.initial_model.len() != data.dim() {
        return Err(Error::InvalidArgument("initial model has the wrong dimension".into()));
    }
    if let Some(masks) = &scenario.masks {
        if masks.is_empty() || masks.iter().any(|m| (m.num_aps(), m.num_ues()) != (n_ap, n_ue)) {
            return Err(Error::InvalidArgument("masks must be nonempty and match the network size".into()));
        }
    }
    let b_tot = data.batch_total() as f64;
    let optimum = data.quadratic_optimum()?;
    let f_star = data.loss(loss, &optimum);
    let mut params = estimate_constants(loss, &data.stacked_features())?;
    let eta = scenario.options.learning_rate.unwrap_or(1.0 / params.smoothness);
    let mut w = scenario.initial_model.clone();
    params.initial_gap = data.loss(loss, &w) - f_star;

    let mut rows = vec![TraceRow {
        round: 0,
        loss: data.loss(loss, &w),
        gap: params.initial_gap,
        bound: params.initial_gap,
        lambda: 0.0,
        served_count: 0,
        interference_norm: 0.0,
        noise_power: 0.0,
    }];
    let mut int_norms = Vec::with_capacity(rounds);
    let mut noise_pows = Vec::with_capacity(rounds);
    let ledger_len = match scenario.chain {
        Chain::Adc { .. } => n_ue,
        Chain::Dac { .. } => n_ap,
    };
    let mut ledgers = vec![DpLedger::new(); ledger_len];
    // model each UE last received, as a round index
    let mut held: Vec<DVector<f64>> = vec![w.clone(); n_ue];
    let mut held_round = vec![0usize; n_ue];
    let base = SeedPath::root(seed);

    for t in 0..rounds {
        let round_seed = base.child(t as u64);
        let channel = ChannelRealization::draw(&scenario.beta, round_seed);
        let mask = scenario.masks.as_ref().map(|m| &m[t % m.len()]);
        let powers = scenario.powers.at(t);
        let is_served: Vec<bool> = (0..n_ue).map(|k| mask.is_none_or(|m| m.is_served(k))).collect();

        let mut updates = Vec::with_capacity(n_ue);
        for k in 0..n_ue {
            if is_served[k] {
                updates.push(local_gradient(loss, &held[k], &data.locals[k])? * data.locals[k].len() as f64);
            } else {
                updates.push(DVector::zeros(data.dim()));
            }
        }
        let include: Vec<bool> = (0..n_ue)
            .map(|k| is_served[k] && (scenario.options.stale_policy == StalePolicy::Aggregate || held_round[k] == t))
            .collect();
        let used: f64 = (0..n_ue).filter(|&k| include[k]).map(|k| data.locals[k].len() as f64).sum();
        let input = OtaInput {
            updates: &updates,
            channel: &channel,
            powers,
            chain: scenario.chain,
            noise_power: scenario.noise_power,
            mask,
            impairments: scenario.options.impairments,
            descaler: scenario.options.descaler,
            include: &include,
            batch_size: used,
        };
        let out = ota_aggregate(&input, round_seed)?;

        let mut interf = DVector::zeros(data.dim());
        let mut noise_pow = 0.0;
        for k in (0..n_ue).filter(|&k| include[k]) {
            interf += &out.interference[k];
            noise_pow += out.noise_var[k];
        }
        int_norms.push(interf.norm() * b_tot / used.max(1.0));
        noise_pows.push(noise_pow);

        match scenario.chain {
            Chain::Adc { alpha } => {
                for (k, ledger) in ledgers.iter_mut().enumerate() {
                    if is_served[k] {
                        let d = sensitivity_adc(powers, alpha, &channel, k, scenario.options.sensitivity);
                        let m = effective_noise_std_adc(powers, alpha, &scenario.beta, scenario.noise_power, k);
                        ledger.push(d, m)?;
                    }
                }
            }
            Chain::Dac { zeta } => {
                let full = ServingMask::full(n_ap, n_ue);
                let m = mask.unwrap_or(&full);
                for (l, ledger) in ledgers.iter_mut().enumerate() {
                    if !m.served_by(l).is_empty() {
                        let d = sensitivity_dac(powers, &channel.h, m, l);
                        let s = effective_noise_std_dac(powers, zeta, &scenario.beta, m, scenario.noise_power, l);
                        ledger.push(d, s)?;
                    }
                }
            }
        }

        if used > 0.0 {
            w = global_update(&w, &out.global, eta)?;
        }
        for k in (0..n_ue).filter(|&k| is_served[k]) {
            held[k] = w.clone();
            held_round[k] = t + 1;
        }
        let bound = *bound_trace(&params, &int_norms, &noise_pows)?.last().expect("non-empty");
        let f = data.loss(loss, &w);
        rows.push(TraceRow {
            round: t + 1,
            loss: f,
            gap: f - f_star,
            bound,
            lambda: ledgers.iter().map(|l| l.lambda).fold(0.0, f64::max),
            served_count: include.iter().filter(|&&b| b).count(),
            interference_norm: *int_norms.last().expect("pushed"),
            noise_power: noise_pow,
        });
    }
    Ok(TrainingTrace {
        rows,
        params,
        optimum,
        final_model: w,
    })
}
