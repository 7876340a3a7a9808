use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;

use cellfree_fl::config::SystemConfig;
use cellfree_fl::experiment::{run_experiment_training, run_sweep, ExperimentConfig, Mode, PointSummary, PowerMode, SweepAxis};
use cellfree_fl::fl::Impairments;
use cellfree_fl::link::{adc_coefficients, dac_coefficients, SinrCoefficients};
use cellfree_fl::power::{rate_lower_bound, sca_solve, PowerScenario, SolverOptions};
use cellfree_fl::privacy::{dp_violation_bound, monte_carlo_violation};
use cellfree_fl::quantization::aqnm_gain;
use cellfree_fl::rng::SeedPath;
use cellfree_fl::schedule::ServingMask;
use cellfree_fl::topology::{large_scale_fading, place_nodes, PathLossModel};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

fn report(n: u32, ok: bool, detail: String) {
    println!("{} criterion {n}: {detail}", if ok { "PASS" } else { "FAIL" });
}

fn system(l: usize, k: usize) -> SystemConfig {
    SystemConfig {
        num_aps: l,
        num_ues: k,
        ..Default::default()
    }
}

fn beta(cfg: &SystemConfig, seed: u64) -> DMatrix<f64> {
    large_scale_fading(&place_nodes(cfg, seed), &PathLossModel::default(), seed)
}

/// Random ADC or full-mask DAC instance.
fn instance(rng: &mut ChaCha8Rng, l: usize, k: usize, seed: u64) -> PowerScenario {
    let cfg = system(l, k);
    let b = beta(&cfg, seed);
    let gain = aqnm_gain(rng.random_range(1..=10)).unwrap();
    let coeffs = if rng.random_bool(0.5) {
        adc_coefficients(&b, gain, cfg.noise_power_w, cfg.grad_dim)
    } else {
        dac_coefficients(&b, gain, &ServingMask::full(l, k), cfg.noise_power_w, cfg.grad_dim)
    };
    PowerScenario::new(coeffs, &cfg)
}

/// Rates from the generic SINR `p_k a_k / (Σ_i p_i c_ki + n_k)`.
fn direct_rates(c: &SinrCoefficients, p: &[f64], prelog: f64) -> Vec<f64> {
    (0..p.len())
        .map(|k| {
            let den: f64 = (0..p.len()).map(|i| p[i] * c.cross[(k, i)]).sum::<f64>() + c.noise[k];
            prelog * (1.0 + p[k] * c.signal[k] / den).log2()
        })
        .collect()
}

fn direct_time(sc: &PowerScenario, p: &[f64]) -> f64 {
    let r = direct_rates(&sc.coeffs, p, sc.prelog_hz);
    let st = sc.update_bits * sc.rounds as f64;
    let slowest = r.iter().map(|x| st / x).fold(0.0, f64::max);
    slowest + r.len() as f64 * st / r.iter().sum::<f64>()
}

#[test]
fn criterion_01_sca_matches_exhaustive_grid() {
    let mut rng = SeedPath::root(101).rng();
    let mut worst: f64 = 0.0;
    for inst in 0..20u64 {
        let sc = instance(&mut rng, 3, 2, 1000 + inst);
        let sca = sca_solve(&sc, &SolverOptions::default()).unwrap();
        let grid = |i: usize| sc.max_power * (i + 1) as f64 / 200.0;
        let best = (0..200)
            .into_par_iter()
            .map(|i| (0..200).map(|j| direct_time(&sc, &[grid(i), grid(j)])).fold(f64::INFINITY, f64::min))
            .reduce(|| f64::INFINITY, f64::min);
        worst = worst.max(sca.timing.total / best);
    }
    let ok = worst <= 1.02;
    report(1, ok, format!("worst SCA/grid time ratio {worst:.5} over 20 instances (limit 1.02)"));
    assert!(ok);
}

#[test]
fn criterion_02_sca_trace_is_non_increasing() {
    let mut rng = SeedPath::root(202).rng();
    let mut bad = 0;
    for inst in 0..100u64 {
        let (l, k) = (rng.random_range(1..=20), rng.random_range(1..=6));
        let sc = instance(&mut rng, l, k, 2000 + inst);
        let out = sca_solve(&sc, &SolverOptions::default()).unwrap();
        if out.trace.windows(2).any(|w| w[1] > w[0] + 1e-8 * w[0].max(1.0)) {
            bad += 1;
        }
    }
    report(2, bad == 0, format!("{bad} of 100 traces rose by more than the 1e-8 slack"));
    assert_eq!(bad, 0);
}

#[test]
fn criterion_03_surrogate_is_a_tight_minorant() {
    let mut rng = SeedPath::root(303).rng();
    let (mut below, mut worst_tight): (usize, f64) = (0, 0.0);
    for inst in 0..20u64 {
        let (l, k) = (rng.random_range(1..=12), rng.random_range(1..=5));
        let sc = instance(&mut rng, l, k, 3000 + inst);
        let root = sc.max_power.sqrt();
        let un: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..=1.0) * root).collect();
        let at = rate_lower_bound(&un, &un, &sc).unwrap();
        let truth = direct_rates(&sc.coeffs, &un.iter().map(|u| u * u).collect::<Vec<_>>(), sc.prelog_hz);
        for (a, t) in at.iter().zip(&truth) {
            worst_tight = worst_tight.max((a - t).abs() / t.abs().max(1.0));
        }
        for _ in 0..10_000 {
            let u: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..=root)).collect();
            let lb = rate_lower_bound(&u, &un, &sc).unwrap();
            let tr = direct_rates(&sc.coeffs, &u.iter().map(|x| x * x).collect::<Vec<_>>(), sc.prelog_hz);
            if lb.iter().zip(&tr).any(|(a, t)| *a > t + 1e-9 * t.abs().max(1.0)) {
                below += 1;
            }
        }
    }
    let ok = below == 0 && worst_tight <= 1e-9;
    report(
        3,
        ok,
        format!("{below} of 200000 points above the true rate, worst relative gap at the expansion point {worst_tight:.2e}"),
    );
    assert!(ok);
}

#[test]
fn criterion_04_dp_bound_holds_under_monte_carlo() {
    let mut rng = SeedPath::root(404).rng();
    let mut worst_excess = f64::NEG_INFINITY;
    let mut bad = 0;
    for s in 0..20u64 {
        let n = rng.random_range(1..20);
        let sens: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.5)).collect();
        let stds: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
        let lambda: f64 = sens.iter().zip(&stds).map(|(d, m)| (d / m).powi(2)).sum();
        let eps = lambda + rng.random_range(0.1..2.5) * lambda.sqrt();
        let bound = dp_violation_bound(lambda, eps).unwrap();
        let mc = monte_carlo_violation(&sens, &stds, eps, 1_000_000, s).unwrap();
        let excess = mc.probability - (bound + 2.326 * mc.std_error);
        worst_excess = worst_excess.max(excess);
        if excess > 0.0 {
            bad += 1;
        }
    }
    // closed form, written out independently
    let (lam, eps) = (1.0f64, 3.0f64);
    let oracle = (2.0 * lam).sqrt() / (std::f64::consts::PI.sqrt() * (eps - lam)) * (-(eps - lam).powi(2) / (2.0 * lam)).exp();
    let spot = dp_violation_bound(lam, eps).unwrap();
    let ok = bad == 0 && (spot - oracle).abs() <= 1e-6;
    report(
        4,
        ok,
        format!(
            "{bad} of 20 scenarios above bound + 2.326 SE (worst margin {worst_excess:.2e}); bound(1, 3) = {spot:.7} vs {oracle:.7}"
        ),
    );
    assert!(ok);
}

fn convergence_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        seed: 5,
        num_drops: 50,
        power: PowerMode::Full,
        bits: 1,
        ..Default::default()
    };
    cfg.system.num_aps = 64;
    cfg.system.area_side_km = 0.1;
    cfg.system.rounds = 100;
    cfg
}

#[test]
fn criterion_05_gap_stays_under_the_bound() {
    let cfg = convergence_config();
    let ratios: Vec<(usize, f64)> = (0..cfg.num_drops)
        .into_par_iter()
        .map(|d| {
            let tr = run_experiment_training(&cfg, d).unwrap();
            assert_eq!(tr.rows.len(), cfg.system.rounds + 1);
            let over = tr.rows.iter().filter(|r| !(r.gap <= r.bound)).count();
            let worst = tr.rows[1..].iter().map(|r| r.gap / r.bound).fold(0.0, f64::max);
            (over, worst)
        })
        .collect();
    let violating = ratios.iter().filter(|r| r.0 > 0).count();
    let worst = ratios.iter().map(|r| r.1).fold(0.0, f64::max);

    let mut quiet = cfg.clone();
    quiet.training.impairments = Impairments::none();
    let tr = run_experiment_training(&quiet, 0).unwrap();
    let kappa = tr.params.contraction();
    let g1 = tr.params.initial_gap;
    let geo_err = tr
        .rows
        .iter()
        .map(|r| (r.bound - (1.0 - kappa).powi(r.round as i32) * g1).abs() / ((1.0 - kappa).powi(r.round as i32) * g1))
        .fold(0.0, f64::max);
    let quiet_ok = tr.rows.iter().all(|r| r.gap <= r.bound);

    let ok = violating == 0 && geo_err <= 1e-9 && quiet_ok;
    report(
        5,
        ok,
        format!(
            "{violating} of 50 seeds exceed the bound (worst gap/bound after round 0 {worst:.3}); noiseless bound vs (1-κ)^t G1 relative error {geo_err:.1e}"
        ),
    );
    assert!(ok);
}

fn config_file(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn sweep_summary(name: &str, edit: impl FnOnce(&mut ExperimentConfig)) -> Vec<PointSummary> {
    let mut cfg = ExperimentConfig::load(&config_file(name)).unwrap();
    edit(&mut cfg);
    let summary = run_sweep(&cfg, None).unwrap().summary();
    for s in &summary {
        assert_eq!(s.drops_failed, 0, "{name} at {}", s.value);
    }
    summary
}

#[test]
fn criterion_06_power_control_beats_full_power() {
    let s = sweep_summary("bits_sync_adc.toml", |_| {});
    let never_worse = s.iter().all(|p| p.mean_time_s <= p.mean_full_power_time_s);
    let at_one = s.iter().find(|p| p.value == 1.0).unwrap().reduction;
    let at_ten = s.iter().find(|p| p.value == 10.0).unwrap().reduction;
    let ok = never_worse && at_one >= 0.15;
    report(
        6,
        ok,
        format!(
            "SCA <= full power at every b: {never_worse}; mean reduction {:.1}% at b=1, {:.1}% at b=10",
            100.0 * at_one,
            100.0 * at_ten
        ),
    );
    assert!(ok);
}

/// Spearman's ρ for distinct values.
fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let rank = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
        let mut r = vec![0.0; v.len()];
        for (pos, &i) in idx.iter().enumerate() {
            r[i] = pos as f64;
        }
        r
    };
    let (rx, ry) = (rank(x), rank(y));
    let n = x.len() as f64;
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

#[test]
fn criterion_07_time_trends_in_aps_and_ues() {
    let aps = sweep_summary("aps_sync_adc.toml", |_| {});
    let ues = sweep_summary("ues_sync_adc.toml", |_| {});
    let times = |s: &[PointSummary]| s.iter().map(|p| p.mean_time_s).collect::<Vec<_>>();
    let values = |s: &[PointSummary]| s.iter().map(|p| p.value).collect::<Vec<_>>();
    let (ta, tu) = (times(&aps), times(&ues));
    let falling = ta.windows(2).all(|w| w[1] < w[0]);
    let rising = tu.windows(2).all(|w| w[1] > w[0]);
    let (ra, ru) = (spearman(&values(&aps), &ta), spearman(&values(&ues), &tu));
    let ok = falling && rising && ra.abs() >= 0.9 && ru.abs() >= 0.9;
    report(
        7,
        ok,
        format!("decreasing in L: {falling} (ρ = {ra:.2}); increasing in K: {rising} (ρ = {ru:.2})"),
    );
    assert!(ok);
}

/// ν ∈ {40, 80, 100} at b = 1, L = 10, K = 4, T_tol = 4; ν = 100 is the
/// synchronous reference.
fn lag_sweep() -> &'static Vec<PointSummary> {
    static CELL: OnceLock<Vec<PointSummary>> = OnceLock::new();
    CELL.get_or_init(|| {
        sweep_summary("bits_async_dac.toml", |cfg| {
            assert_eq!(cfg.mode, Mode::AsyncDac);
            cfg.bits = 1;
            cfg.sweep.axis = SweepAxis::LagPercent;
            cfg.sweep.values = vec![40.0, 80.0, 100.0];
        })
    })
}

fn time_at(s: &[PointSummary], nu: f64) -> f64 {
    s.iter().find(|p| p.value == nu).unwrap().mean_time_s
}

#[test]
fn criterion_08_async_beats_sync() {
    let s = lag_sweep();
    let (a, sync) = (time_at(s, 80.0), time_at(s, 100.0));
    let speedup = sync / a;
    let ok = speedup >= 1.5;
    report(8, ok, format!("async {a:.1} s vs sync {sync:.1} s, speed-up {speedup:.2} (need >= 1.5)"));
    assert!(ok);
}

#[test]
fn criterion_09_lag_percent_has_interior_minimum() {
    let s = lag_sweep();
    let (t40, t80, t100) = (time_at(s, 40.0), time_at(s, 80.0), time_at(s, 100.0));
    let ok = t80 < t40 && t80 < t100;
    report(9, ok, format!("mean time at ν = 40/80/100: {t40:.1} / {t80:.1} / {t100:.1} s"));
    assert!(ok);
}

const SMALL_SYNC: &str = r#"
seed = 77
num_drops = 3
mode = "sync-adc"
power = "sca"
bits = 2

[system]
num_aps = 6
num_ues = 3
rounds = 12
learning_rate = 0.01

[sweep]
axis = "bits"
values = [1, 4]
"#;

const SMALL_ASYNC: &str = r#"
seed = 78
num_drops = 3
mode = "async-dac"
power = "sca"
lag_tolerance = 2
lag_percent = 70

[system]
num_aps = 6
num_ues = 3
rounds = 12
learning_rate = 0.01

[sweep]
axis = "lag_percent"
values = [60, 100]
"#;

/// Stdout and every written file, by name.
fn cli_run(config: &Path, args: &[&str], workers: usize, out: &Path) -> (String, Vec<(String, Vec<u8>)>) {
    let res = Command::new(env!("CARGO_BIN_EXE_cellfree-fl"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--workers")
        .arg(workers.to_string())
        .arg("--out")
        .arg(out)
        .output()
        .unwrap();
    assert!(res.status.success(), "{args:?}: {}", String::from_utf8_lossy(&res.stderr));
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(out)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    (String::from_utf8(res.stdout).unwrap(), files)
}

#[test]
fn criterion_10_cli_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut checked = Vec::new();
    let mut mismatched = Vec::new();
    for (tag, body) in [("sync", SMALL_SYNC), ("async", SMALL_ASYNC)] {
        let cfg = dir.path().join(format!("{tag}.toml"));
        std::fs::write(&cfg, body).unwrap();
        let commands: [&[&str]; 6] = [
            &["simulate"],
            &["optimize-power"],
            &["dp-check"],
            &["train"],
            &["sweep"],
            &["sweep", "--format", "svg"],
        ];
        for (i, args) in commands.iter().enumerate() {
            let runs: Vec<_> = [1, 8, 8]
                .iter()
                .enumerate()
                .map(|(j, &w)| cli_run(&cfg, args, w, &dir.path().join(format!("{tag}-{i}-{j}"))))
                .collect();
            let name = format!("{tag} {}", args.join(" "));
            assert!(!runs[0].1.is_empty(), "{name} wrote nothing");
            if runs.iter().any(|r| *r != runs[0]) {
                mismatched.push(name.clone());
            }
            checked.push(name);
        }
    }
    let ok = mismatched.is_empty();
    report(
        10,
        ok,
        format!("{} command runs byte-identical across workers 1/8/8; mismatches: {mismatched:?}", checked.len()),
    );
    assert!(ok);
}
