//! Node placement and fading.
//!
//! Matrices are indexed `(ap, ue)`: row `l` is AP `l`, column `k` is UE `k`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::rng::{SeedPath, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    /// km
    pub x: f64,
    /// km
    pub y: f64,
}

impl Position {
    pub fn distance_km(&self, other: &Position) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// AP and UE locations for one network drop.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub aps: Vec<Position>,
    pub ues: Vec<Position>,
}

/// Drops `L` APs and `K` UEs uniformly on the `D × D` square.
pub fn place_nodes(cfg: &SystemConfig, seed: u64) -> Topology {
    let base = SeedPath::root(seed).stream(Stream::Placement);
    let side = cfg.area_side_km;
    let draw = |path: SeedPath, n: usize| {
        let mut rng = path.rng();
        (0..n)
            .map(|_| Position {
                x: rng.random::<f64>() * side,
                y: rng.random::<f64>() * side,
            })
            .collect::<Vec<_>>()
    };
    Topology {
        aps: draw(base.child(0), cfg.num_aps),
        ues: draw(base.child(1), cfg.num_ues),
    }
}

/// Three-slope path loss with a COST-231 Hata constant and optional
/// log-normal shadowing in the far region.
///
/// With `d` in km and `L` the Hata constant:
///
/// ```text
/// PL(d) = -L - 35 log10(d)                          d >  d1
///       = -L - 15 log10(d1) - 20 log10(d)           d0 < d <= d1
///       = -L - 15 log10(d1) - 20 log10(d0)          d <= d0
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathLossModel {
    pub carrier_mhz: f64,
    pub ap_height_m: f64,
    pub ue_height_m: f64,
    /// Inner breakpoint (km).
    pub d0_km: f64,
    /// Outer breakpoint (km).
    pub d1_km: f64,
    /// Shadowing standard deviation in dB; 0 disables shadowing.
    pub shadowing_std_db: f64,
    /// Overrides the Hata constant `L` when set.
    pub constant_db: Option<f64>,
}

impl Default for PathLossModel {
    fn default() -> Self {
        PathLossModel {
            carrier_mhz: 1900.0,
            ap_height_m: 15.0,
            ue_height_m: 1.65,
            d0_km: 0.01,
            d1_km: 0.05,
            shadowing_std_db: 8.0,
            constant_db: None,
        }
    }
}

impl PathLossModel {
    pub fn without_shadowing(mut self) -> Self {
        self.shadowing_std_db = 0.0;
        self
    }

    pub fn hata_constant_db(&self) -> f64 {
        if let Some(c) = self.constant_db {
            return c;
        }
        let lf = self.carrier_mhz.log10();
        46.3 + 33.9 * lf - 13.82 * self.ap_height_m.log10() - (1.1 * lf - 0.7) * self.ue_height_m
            + (1.56 * lf - 0.8)
    }

    /// Deterministic path gain in dB (negative).
    pub fn path_gain_db(&self, d_km: f64) -> f64 {
        let l = self.hata_constant_db();
        if d_km > self.d1_km {
            -l - 35.0 * d_km.log10()
        } else if d_km > self.d0_km {
            -l - 15.0 * self.d1_km.log10() - 20.0 * d_km.log10()
        } else {
            -l - 15.0 * self.d1_km.log10() - 20.0 * self.d0_km.log10()
        }
    }
}

/// Large-scale gains β (linear) for every AP/UE pair.
///
/// Shadowing samples are drawn from the `(seed, Shadowing)` stream, one per
/// pair in row-major order, and only applied beyond the outer breakpoint.
pub fn large_scale_fading(topology: &Topology, model: &PathLossModel, seed: u64) -> DMatrix<f64> {
    let mut rng = SeedPath::root(seed).stream(Stream::Shadowing).rng();
    let (n_ap, n_ue) = (topology.aps.len(), topology.ues.len());
    let mut beta = DMatrix::zeros(n_ap, n_ue);
    for l in 0..n_ap {
        for k in 0..n_ue {
            let d = topology.aps[l].distance_km(&topology.ues[k]);
            let z: f64 = StandardNormal.sample(&mut rng);
            let mut db = model.path_gain_db(d);
            if model.shadowing_std_db > 0.0 && d > model.d1_km {
                db += model.shadowing_std_db * z;
            }
            beta[(l, k)] = 10f64.powf(db / 10.0);
        }
    }
    beta
}

/// One circularly-symmetric CN(0, 1) sample.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Small-scale coefficients for one fading block.
pub fn draw_small_scale(num_aps: usize, num_ues: usize, seed: SeedPath) -> DMatrix<Complex64> {
    let mut rng = seed.stream(Stream::SmallScale).rng();
    DMatrix::from_fn(num_aps, num_ues, |_, _| complex_normal(&mut rng))
}

/// β, g and the composite channel h = √β·g for one block.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub beta: DMatrix<f64>,
    pub g: DMatrix<Complex64>,
    pub h: DMatrix<Complex64>,
}

impl ChannelRealization {
    pub fn new(beta: DMatrix<f64>, g: DMatrix<Complex64>) -> Self {
        assert_eq!(beta.shape(), g.shape(), "beta and g shapes differ");
        let h = DMatrix::from_fn(beta.nrows(), beta.ncols(), |l, k| g[(l, k)] * beta[(l, k)].sqrt());
        ChannelRealization { beta, g, h }
    }

    /// Draws a fresh small-scale block on top of fixed large-scale gains.
    pub fn draw(beta: &DMatrix<f64>, seed: SeedPath) -> Self {
        let g = draw_small_scale(beta.nrows(), beta.ncols(), seed);
        Self::new(beta.clone(), g)
    }
}

/// β as CSV: one row per AP, one column per UE, linear scale.
pub fn beta_to_csv(beta: &DMatrix<f64>) -> String {
    let mut out = String::new();
    let header: Vec<String> = (0..beta.ncols()).map(|k| format!("ue{k}")).collect();
    out.push_str("ap,");
    out.push_str(&header.join(","));
    out.push('\n');
    for l in 0..beta.nrows() {
        let row: Vec<String> = (0..beta.ncols()).map(|k| format!("{:e}", beta[(l, k)])).collect();
        out.push_str(&format!("{l},{}\n", row.join(",")));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(l: usize, k: usize) -> SystemConfig {
        SystemConfig {
            num_aps: l,
            num_ues: k,
            ..SystemConfig::default()
        }
    }

    #[test]
    fn placements_lie_in_the_square_and_repeat() {
        let c = cfg(20, 30);
        let a = place_nodes(&c, 11);
        let b = place_nodes(&c, 11);
        assert_eq!(a, b);
        for p in a.aps.iter().chain(&a.ues) {
            assert!((0.0..=1.0).contains(&p.x) && (0.0..=1.0).contains(&p.y));
        }
        assert_ne!(a, place_nodes(&c, 12));
    }

    #[test]
    fn mean_coordinate_is_half_side() {
        let c = SystemConfig {
            area_side_km: 2.0,
            ..cfg(5_000, 5_000)
        };
        let t = place_nodes(&c, 3);
        let xs: Vec<f64> = t.aps.iter().chain(&t.ues).map(|p| p.x).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        // Uniform(0, 2): sd = 2/sqrt(12)
        let se = 2.0 / 12f64.sqrt() / n.sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn equidistant_ues_get_equal_beta_without_shadowing() {
        let topo = Topology {
            aps: vec![Position { x: 0.5, y: 0.5 }],
            ues: vec![Position { x: 0.8, y: 0.5 }, Position { x: 0.5, y: 0.2 }],
        };
        let beta = large_scale_fading(&topo, &PathLossModel::default().without_shadowing(), 1);
        assert!((beta[(0, 0)] / beta[(0, 1)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn far_region_is_monotone() {
        let m = PathLossModel::default().without_shadowing();
        assert!(m.path_gain_db(0.4) < m.path_gain_db(0.2));
        assert!(m.path_gain_db(0.03) < m.path_gain_db(0.02));
        assert_eq!(m.path_gain_db(0.001), m.path_gain_db(0.005));
    }

    #[test]
    fn path_gain_matches_hand_evaluation() {
        // L = 46.3 + 33.9 log10(1900) - 13.82 log10(15)
        //     - (1.1 log10(1900) - 0.7)·1.65 + (1.56 log10(1900) - 0.8)
        let lf = 1900f64.log10();
        let l = 46.3 + 33.9 * lf - 13.82 * 15f64.log10() - (1.1 * lf - 0.7) * 1.65 + 1.56 * lf - 0.8;
        assert!((l - 140.7).abs() < 0.1, "hata constant {l}");
        let m = PathLossModel::default().without_shadowing();
        // 5 m (flat), 30 m (20 dB/dec), 200 m (35 dB/dec)
        let expect_5m = -l - 15.0 * (0.05f64).log10() - 20.0 * (0.01f64).log10();
        let expect_30m = -l - 15.0 * (0.05f64).log10() - 20.0 * (0.03f64).log10();
        let expect_200m = -l - 35.0 * (0.2f64).log10();
        assert!((m.path_gain_db(0.005) - expect_5m).abs() < 1e-12);
        assert!((m.path_gain_db(0.03) - expect_30m).abs() < 1e-12);
        assert!((m.path_gain_db(0.2) - expect_200m).abs() < 1e-12);
        // numeric anchors
        assert!((expect_200m - (-116.24)).abs() < 0.05, "{expect_200m}");
    }

    #[test]
    fn small_scale_moments() {
        let g = draw_small_scale(100, 1_000, SeedPath::root(5));
        let n = g.len() as f64;
        let power = g.iter().map(|z| z.norm_sqr()).sum::<f64>() / n;
        let re = g.iter().map(|z| z.re * z.re).sum::<f64>() / n;
        let im = g.iter().map(|z| z.im * z.im).sum::<f64>() / n;
        assert!((power - 1.0).abs() < 0.01, "{power}");
        assert!((re - 0.5).abs() < 0.005, "{re}");
        assert!((im - 0.5).abs() < 0.005, "{im}");
        assert_eq!(g, draw_small_scale(100, 1_000, SeedPath::root(5)));
    }

    #[test]
    fn composite_channel_is_entrywise_consistent() {
        let c = cfg(4, 3);
        let topo = place_nodes(&c, 9);
        let beta = large_scale_fading(&topo, &PathLossModel::default(), 9);
        assert!(beta.iter().all(|&b| b > 0.0));
        let ch = ChannelRealization::draw(&beta, SeedPath::root(9));
        for l in 0..4 {
            for k in 0..3 {
                let expect = ch.g[(l, k)] * beta[(l, k)].sqrt();
                assert!((ch.h[(l, k)] - expect).norm() <= 1e-15 * expect.norm().max(1e-300));
            }
        }
        let csv = beta_to_csv(&beta);
        assert_eq!(csv.lines().count(), 5);
    }
}
