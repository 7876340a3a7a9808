//! Sweeps over one system parameter, averaged over random network drops.
//!
//! A point of a sweep is one axis value; each point is evaluated on
//! `num_drops` independent drops. Drop `j` uses the same seed at every axis
//! value, so points share placements and shadowing wherever the network size
//! allows it.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::fl::{
    run_training, synthetic_quadratic, Chain, Descaler, Impairments, Loss, PowerPlan, StalePolicy, TrainingOptions,
    TrainingScenario, TrainingTrace,
};
use crate::link::{PowerAllocation, TimingReport};
use crate::power::{full_power_baseline, full_power_dac, sca_solve, sca_solve_dac, DacScenario, PowerScenario, SolverOptions};
use crate::privacy::{
    effective_noise_std_dac, sensitivity_dac, AdcPrivacyScenario, DpLedger, PrivacyRound, SensitivityMode,
};
use crate::quantization::{DistortionTable, QuantizerModel};
use crate::rng::{SeedPath, Stream};
use crate::schedule::{asynchronous_masks, RoundSchedule, ServingMask};
use crate::topology::{large_scale_fading, place_nodes, ChannelRealization, PathLossModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Bits,
    NumAps,
    NumUes,
    LagTolerance,
    LagPercent,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Bits => "bits",
            SweepAxis::NumAps => "num_aps",
            SweepAxis::NumUes => "num_ues",
            SweepAxis::LagTolerance => "lag_tolerance",
            SweepAxis::LagPercent => "lag_percent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Every AP serves every UE each round; low-resolution ADCs at the APs.
    SyncAdc,
    /// Lag-tolerant scheduling; low-resolution DACs at the UEs.
    AsyncDac,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PowerMode {
    Sca,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            axis: SweepAxis::Bits,
            values: (1..=10).map(f64::from).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrivacySpec {
    pub epsilon: f64,
    pub delta: f64,
    pub sensitivity: SensitivityMode,
}

impl Default for PrivacySpec {
    fn default() -> Self {
        PrivacySpec {
            epsilon: 10.0,
            delta: 1e-5,
            sensitivity: SensitivityMode::SumOverAps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSpec {
    pub samples_per_ue: usize,
    pub label_noise: f64,
    pub descaler: Descaler,
    pub stale_policy: StalePolicy,
    pub impairments: Impairments,
}

impl Default for TrainingSpec {
    fn default() -> Self {
        TrainingSpec {
            samples_per_ue: 20,
            label_noise: 0.1,
            descaler: Descaler::PerfectCsi,
            stale_policy: StalePolicy::Aggregate,
            impairments: Impairments::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub num_drops: usize,
    pub mode: Mode,
    pub power: PowerMode,
    /// Quantizer resolution when bits are not the sweep axis.
    pub bits: u32,
    pub distortion_table: DistortionTable,
    pub lag_tolerance: u32,
    pub lag_percent: f64,
    pub system: SystemConfig,
    pub sweep: SweepSpec,
    pub solver: SolverOptions,
    pub privacy: PrivacySpec,
    pub training: TrainingSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            num_drops: 50,
            mode: Mode::SyncAdc,
            power: PowerMode::Sca,
            bits: 1,
            distortion_table: DistortionTable::HighResolution,
            lag_tolerance: 4,
            lag_percent: 80.0,
            system: SystemConfig::default(),
            sweep: SweepSpec::default(),
            solver: SolverOptions::default(),
            privacy: PrivacySpec::default(),
            training: TrainingSpec::default(),
        }
    }
}

/// Parameters of one sweep point, after the axis value is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct PointConfig {
    pub system: SystemConfig,
    pub bits: u32,
    pub lag_tolerance: u32,
    pub lag_percent: f64,
}

fn as_count(axis: SweepAxis, v: f64) -> Result<u64> {
    if !(v >= 1.0) || v.fract() != 0.0 || v > u32::MAX as f64 {
        return Err(Error::InvalidConfig(format!("{} values must be positive integers, got {v}", axis.name())));
    }
    Ok(v as u64)
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        if self.sweep.values.is_empty() {
            return Err(Error::InvalidConfig("sweep values must be nonempty".into()));
        }
        if self.num_drops == 0 {
            return Err(Error::InvalidConfig("num_drops must be >= 1".into()));
        }
        if !(self.privacy.epsilon > 0.0) || !(self.privacy.delta > 0.0 && self.privacy.delta < 1.0) {
            return Err(Error::InvalidConfig("privacy needs epsilon > 0 and delta in (0, 1)".into()));
        }
        for &v in &self.sweep.values {
            self.point(v)?;
        }
        self.point_base()?;
        Ok(())
    }

    /// First 12 hex digits of the SHA-256 of the canonical TOML form.
    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        digest.iter().take(6).fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    /// The configuration without any axis value applied.
    pub fn point_base(&self) -> Result<PointConfig> {
        let p = PointConfig {
            system: self.system.clone(),
            bits: self.bits,
            lag_tolerance: self.lag_tolerance,
            lag_percent: self.lag_percent,
        };
        p.check()?;
        Ok(p)
    }

    pub fn point(&self, value: f64) -> Result<PointConfig> {
        let mut p = PointConfig {
            system: self.system.clone(),
            bits: self.bits,
            lag_tolerance: self.lag_tolerance,
            lag_percent: self.lag_percent,
        };
        let axis = self.sweep.axis;
        match axis {
            SweepAxis::Bits => p.bits = as_count(axis, value)? as u32,
            SweepAxis::NumAps => p.system.num_aps = as_count(axis, value)? as usize,
            SweepAxis::NumUes => p.system.num_ues = as_count(axis, value)? as usize,
            SweepAxis::LagTolerance => p.lag_tolerance = as_count(axis, value)? as u32,
            SweepAxis::LagPercent => p.lag_percent = value,
        }
        p.check()?;
        Ok(p)
    }

    /// Seed of drop `drop`, shared by every sweep point.
    pub fn drop_seed(&self, drop: usize) -> SeedPath {
        SeedPath::root(self.seed).stream(Stream::Sweep).child(drop as u64)
    }
}

impl PointConfig {
    fn check(&self) -> Result<()> {
        self.system.validate()?;
        if self.bits == 0 {
            return Err(Error::InvalidConfig("bits must be >= 1".into()));
        }
        if self.lag_tolerance == 0 {
            return Err(Error::InvalidConfig("lag_tolerance must be >= 1".into()));
        }
        if !(self.lag_percent > 0.0 && self.lag_percent <= 100.0) {
            return Err(Error::InvalidConfig(format!("lag_percent {} outside (0, 100]", self.lag_percent)));
        }
        Ok(())
    }
}

/// A network drop: large-scale gains plus the seed for its fading blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Drop {
    pub beta: DMatrix<f64>,
    pub seed: SeedPath,
}

impl Drop {
    pub fn sample(system: &SystemConfig, seed: SeedPath) -> Self {
        let topo = place_nodes(system, seed.child(0).value());
        let beta = large_scale_fading(&topo, &PathLossModel::default(), seed.child(0).value());
        Drop { beta, seed }
    }

    /// Small-scale block of round `t`.
    pub fn channel(&self, t: usize) -> ChannelRealization {
        ChannelRealization::draw(&self.beta, self.seed.child(1).child(t as u64))
    }
}

/// Power control result for one drop, in either mode.
#[derive(Debug, Clone, PartialEq)]
pub struct DropSolution {
    /// Per-round powers (one entry per round of the run).
    pub powers: Vec<PowerAllocation>,
    pub timing: TimingReport,
    pub full_power_timing: TimingReport,
    /// Empty in synchronous mode.
    pub schedule: Vec<RoundSchedule>,
    /// Outer SCA trace of the synchronous solve.
    pub trace: Vec<f64>,
}

impl DropSolution {
    pub fn masks(&self, num_aps: usize, num_ues: usize) -> Vec<ServingMask> {
        if self.schedule.is_empty() {
            vec![ServingMask::full(num_aps, num_ues); self.powers.len()]
        } else {
            self.schedule.iter().map(|r| r.mask.clone()).collect()
        }
    }
}

/// Quantizer gain (α or ζ) at the point's resolution.
pub fn point_gain(cfg: &ExperimentConfig, point: &PointConfig) -> Result<f64> {
    Ok(QuantizerModel::new(point.bits, cfg.distortion_table)?.gain)
}

/// Schedules (async) and solves power control for one drop.
pub fn solve_drop(cfg: &ExperimentConfig, point: &PointConfig, drop: &Drop) -> Result<DropSolution> {
    let sys = &point.system;
    let gain = point_gain(cfg, point)?;
    let rounds = sys.rounds;
    match cfg.mode {
        Mode::SyncAdc => {
            let scenario = PowerScenario::adc(sys, &drop.beta, gain);
            let full_power_timing = full_power_baseline(&scenario)?;
            let (p, timing, trace) = match cfg.power {
                PowerMode::Sca => {
                    let out = sca_solve(&scenario, &cfg.solver)?;
                    (out.powers, out.timing, out.trace)
                }
                PowerMode::Full => (PowerAllocation::full(sys.num_ues, sys.max_power_w), full_power_timing.clone(), Vec::new()),
            };
            Ok(DropSolution {
                powers: vec![p; rounds],
                timing,
                full_power_timing,
                schedule: Vec::new(),
                trace,
            })
        }
        Mode::AsyncDac => {
            let schedule = asynchronous_masks(&drop.beta, point.lag_tolerance, point.lag_percent, rounds)?;
            let masks = schedule.iter().map(|r| r.mask.clone()).collect();
            let scenario = DacScenario::new(sys, &drop.beta, gain, masks);
            let full = full_power_dac(&scenario)?;
            let out = match cfg.power {
                PowerMode::Sca => sca_solve_dac(&scenario, &cfg.solver)?,
                PowerMode::Full => full.clone(),
            };
            Ok(DropSolution {
                powers: out.powers,
                timing: out.timing,
                full_power_timing: full.timing,
                schedule,
                trace: Vec::new(),
            })
        }
    }
}

/// Worst accumulated Λ over the run: over UEs for the ADC chain, over APs
/// for the DAC chain.
pub fn drop_lambda(cfg: &ExperimentConfig, point: &PointConfig, drop: &Drop, sol: &DropSolution) -> Result<f64> {
    let sys = &point.system;
    let gain = point_gain(cfg, point)?;
    match cfg.mode {
        Mode::SyncAdc => {
            let rounds = (0..sol.powers.len())
                .map(|t| PrivacyRound {
                    channel: drop.channel(t),
                    powers: sol.powers[t].0.clone(),
                })
                .collect();
            let scen = AdcPrivacyScenario {
                rounds,
                noise_power: sys.noise_power_w,
                mode: cfg.privacy.sensitivity,
                table: cfg.distortion_table,
            };
            Ok(scen.lambdas(gain)?.into_iter().fold(0.0, f64::max))
        }
        Mode::AsyncDac => {
            let masks = sol.masks(sys.num_aps, sys.num_ues);
            let mut ledgers = vec![DpLedger::new(); sys.num_aps];
            for (t, mask) in masks.iter().enumerate() {
                let ch = drop.channel(t);
                let p = sol.powers[t].as_slice();
                for (l, ledger) in ledgers.iter_mut().enumerate() {
                    if mask.served_by(l).is_empty() {
                        continue;
                    }
                    let d = sensitivity_dac(p, &ch.h, mask, l);
                    let s = effective_noise_std_dac(p, gain, &drop.beta, mask, sys.noise_power_w, l);
                    ledger.push(d, s)?;
                }
            }
            Ok(ledgers.iter().map(|l| l.lambda).fold(0.0, f64::max))
        }
    }
}

/// Metrics of one (axis value, drop) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropMetrics {
    /// Training time under the configured power mode (s).
    pub time_s: f64,
    /// Training time with every UE at p_max (s).
    pub full_power_time_s: f64,
    pub lambda: f64,
    /// Mean fraction of UEs served per round.
    pub served_fraction: f64,
}

pub fn evaluate_drop(cfg: &ExperimentConfig, point: &PointConfig, drop_index: usize) -> Result<DropMetrics> {
    let drop = Drop::sample(&point.system, cfg.drop_seed(drop_index));
    let sol = solve_drop(cfg, point, &drop)?;
    let lambda = drop_lambda(cfg, point, &drop, &sol)?;
    let k = point.system.num_ues as f64;
    let served_fraction = if sol.schedule.is_empty() {
        1.0
    } else {
        sol.schedule.iter().map(|r| r.active.len() as f64 / k).sum::<f64>() / sol.schedule.len() as f64
    };
    Ok(DropMetrics {
        time_s: sol.timing.total,
        full_power_time_s: sol.full_power_timing.total,
        lambda,
        served_fraction,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub point: usize,
    pub value: f64,
    pub drop: usize,
    /// `Err` holds the error message of a failed point.
    pub outcome: std::result::Result<DropMetrics, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub value: f64,
    pub drops_ok: usize,
    pub drops_failed: usize,
    pub mean_time_s: f64,
    /// Standard error of `mean_time_s`.
    pub std_error_s: f64,
    pub mean_full_power_time_s: f64,
    /// 1 − mean_time / mean_full_power_time
    pub reduction: f64,
    pub mean_lambda: f64,
    pub mean_served_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub mode: Mode,
    pub power: PowerMode,
    pub seed: u64,
    pub config_hash: String,
    pub values: Vec<f64>,
    /// Ordered by (point, drop).
    pub rows: Vec<SweepRow>,
}

/// Evaluates every (value, drop) pair on `workers` threads (all cores if
/// `None`). Failed pairs are kept as error rows.
pub fn run_sweep(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<SweepTable> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = (0..cfg.sweep.values.len())
        .flat_map(|p| (0..cfg.num_drops).map(move |d| (p, d)))
        .collect();
    let eval = |&(p, d): &(usize, usize)| {
        let value = cfg.sweep.values[p];
        let outcome = cfg
            .point(value)
            .and_then(|pc| evaluate_drop(cfg, &pc, d))
            .map_err(|e| e.to_string());
        SweepRow {
            point: p,
            value,
            drop: d,
            outcome,
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    let rows: Vec<SweepRow> = pool.install(|| jobs.par_iter().map(eval).collect());
    if rows.iter().all(|r| r.outcome.is_err()) {
        return Err(Error::SweepFailed);
    }
    Ok(SweepTable {
        axis: cfg.sweep.axis,
        mode: cfg.mode,
        power: cfg.power,
        seed: cfg.seed,
        config_hash: cfg.config_hash(),
        values: cfg.sweep.values.clone(),
        rows,
    })
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

impl SweepTable {
    pub fn summary(&self) -> Vec<PointSummary> {
        self.values
            .iter()
            .enumerate()
            .map(|(p, &value)| {
                let rows: Vec<&SweepRow> = self.rows.iter().filter(|r| r.point == p).collect();
                let ok: Vec<&DropMetrics> = rows.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
                let times: Vec<f64> = ok.iter().map(|m| m.time_s).collect();
                let full: Vec<f64> = ok.iter().map(|m| m.full_power_time_s).collect();
                let mean_time = mean(&times);
                let std_error_s = if times.len() > 1 {
                    let var = times.iter().map(|t| (t - mean_time).powi(2)).sum::<f64>() / (times.len() - 1) as f64;
                    (var / times.len() as f64).sqrt()
                } else {
                    f64::NAN
                };
                let mean_full = mean(&full);
                PointSummary {
                    value,
                    drops_ok: ok.len(),
                    drops_failed: rows.len() - ok.len(),
                    mean_time_s: mean_time,
                    std_error_s,
                    mean_full_power_time_s: mean_full,
                    reduction: 1.0 - mean_time / mean_full,
                    mean_lambda: mean(&ok.iter().map(|m| m.lambda).collect::<Vec<_>>()),
                    mean_served_fraction: mean(&ok.iter().map(|m| m.served_fraction).collect::<Vec<_>>()),
                }
            })
            .collect()
    }

    /// One row per (value, drop).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("seed,config_hash,axis,value,drop,status,time_s,full_power_time_s,lambda,served_fraction,error\n");
        for r in &self.rows {
            let _ = write!(out, "{},{},{},{},{},", self.seed, self.config_hash, self.axis.name(), r.value, r.drop);
            match &r.outcome {
                Ok(m) => {
                    let _ = writeln!(out, "ok,{},{},{},{},", m.time_s, m.full_power_time_s, m.lambda, m.served_fraction);
                }
                Err(e) => {
                    let _ = writeln!(out, "failed,,,,,\"{}\"", e.replace('"', "'"));
                }
            }
        }
        out
    }

    /// One row per axis value, averaged over the successful drops.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "seed,config_hash,axis,value,drops_ok,drops_failed,mean_time_s,std_error_s,mean_full_power_time_s,reduction,mean_lambda,mean_served_fraction\n",
        );
        for s in self.summary() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                self.seed,
                self.config_hash,
                self.axis.name(),
                s.value,
                s.drops_ok,
                s.drops_failed,
                s.mean_time_s,
                s.std_error_s,
                s.mean_full_power_time_s,
                s.reduction,
                s.mean_lambda,
                s.mean_served_fraction
            );
        }
        out
    }

    /// Line plot of mean training time against the axis value, with the
    /// full-power curve for reference.
    pub fn to_svg(&self) -> String {
        let summary = self.summary();
        let series: Vec<(&str, &str, Vec<(f64, f64)>)> = vec![
            (
                "configured power",
                "#1f77b4",
                summary.iter().map(|s| (s.value, s.mean_time_s)).collect(),
            ),
            (
                "full power",
                "#d62728",
                summary.iter().map(|s| (s.value, s.mean_full_power_time_s)).collect(),
            ),
        ];
        line_plot_svg(self.axis.name(), "mean training time (s)", &series)
    }
}

fn line_plot_svg(x_label: &str, y_label: &str, series: &[(&str, &str, Vec<(f64, f64)>)]) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (80.0, 20.0, 20.0, 60.0);
    let pts = series.iter().flat_map(|s| s.2.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    y0 = y0.min(0.0);
    let px = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let py = |y: f64| h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{left},{top} V{} H{}" fill="none" stroke="black"/>"#,
        h - bottom,
        w - right
    );
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" font-size="11" text-anchor="middle">{:.3}</text>"#, px(fx), h - bottom + 16.0, fx);
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" font-size="11" text-anchor="end">{:.3e}</text>"#, left - 6.0, py(fy) + 4.0, fy);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="13" text-anchor="middle">{x_label}</text>"#, (left + w - right) / 2.0, h - 16.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" font-size="13" text-anchor="middle" transform="rotate(-90 16 {})">{y_label}</text>"#,
        (top + h - bottom) / 2.0,
        (top + h - bottom) / 2.0
    );
    for (i, (name, color, data)) in series.iter().enumerate() {
        let ok: Vec<&(f64, f64)> = data.iter().filter(|(x, y)| x.is_finite() && y.is_finite()).collect();
        let path: Vec<String> = ok.iter().map(|&&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        if !path.is_empty() {
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, path.join(" "));
        }
        for &&(x, y) in &ok {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, px(x), py(y));
        }
        let ly = top + 14.0 + 16.0 * i as f64;
        let _ = writeln!(s, r#"<text x="{}" y="{ly}" font-size="12" fill="{color}" text-anchor="end">{name}</text>"#, w - right - 8.0);
    }
    s.push_str("</svg>\n");
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    Svg,
}

/// Writes `sweep.csv` and `summary.csv` into `dir`, plus `sweep.svg` for
/// the SVG format. Returns the written paths.
pub fn emit_results(table: &SweepTable, dir: &Path, format: OutputFormat) -> Result<Vec<PathBuf>> {
    if table.rows.is_empty() || table.values.is_empty() {
        return Err(Error::InvalidArgument("empty result table".into()));
    }
    std::fs::create_dir_all(dir)?;
    let mut files = vec![(dir.join("sweep.csv"), table.to_csv()), (dir.join("summary.csv"), table.summary_csv())];
    if format == OutputFormat::Svg {
        files.push((dir.join("sweep.svg"), table.to_svg()));
    }
    let mut written = Vec::with_capacity(files.len());
    for (path, body) in files {
        std::fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}

/// Builds the training run of drop `drop_index` at the base point: the
/// configured chain, schedule and power mode, on synthetic quadratic data.
pub fn training_scenario(cfg: &ExperimentConfig, drop_index: usize) -> Result<(TrainingScenario, PointConfig)> {
    cfg.validate()?;
    let point = cfg.point_base()?;
    let drop = Drop::sample(&point.system, cfg.drop_seed(drop_index));
    let sol = solve_drop(cfg, &point, &drop)?;
    let sys = &point.system;
    let gain = point_gain(cfg, &point)?;
    let data = synthetic_quadratic(
        sys.num_ues,
        cfg.training.samples_per_ue,
        sys.grad_dim,
        cfg.training.label_noise,
        drop.seed.child(2).value(),
    );
    let (chain, masks) = match cfg.mode {
        Mode::SyncAdc => (Chain::Adc { alpha: gain }, None),
        Mode::AsyncDac => (Chain::Dac { zeta: gain }, Some(sol.masks(sys.num_aps, sys.num_ues))),
    };
    let scenario = TrainingScenario {
        beta: drop.beta.clone(),
        data,
        loss: Loss::Quadratic,
        chain,
        noise_power: sys.noise_power_w,
        powers: PowerPlan::PerRound(sol.powers.clone()),
        masks,
        initial_model: DVector::zeros(sys.grad_dim),
        options: TrainingOptions {
            learning_rate: sys.learning_rate,
            impairments: cfg.training.impairments,
            descaler: cfg.training.descaler,
            stale_policy: cfg.training.stale_policy,
            sensitivity: cfg.privacy.sensitivity,
        },
    };
    Ok((scenario, point))
}

pub fn run_experiment_training(cfg: &ExperimentConfig, drop_index: usize) -> Result<TrainingTrace> {
    let (scenario, point) = training_scenario(cfg, drop_index)?;
    run_training(&scenario, point.system.rounds, cfg.drop_seed(drop_index).child(3).value())
}
