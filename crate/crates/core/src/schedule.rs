//! Lag-tolerant asynchronous UE selection.
//!
//! Each AP serves the shortest prefix of its UEs, sorted by descending
//! large-scale gain, whose share of the AP's total gain reaches the lag
//! percent ν. A UE left out for too long is forced onto its strongest AP so
//! that no UE stays unsynchronized for `T_tol` rounds.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary AP–UE serving relation `d_kl` for one round.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ServingMask {
    num_aps: usize,
    num_ues: usize,
    /// Row-major `[l * num_ues + k]`.
    bits: Vec<bool>,
}

impl ServingMask {
    pub fn empty(num_aps: usize, num_ues: usize) -> Self {
        ServingMask {
            num_aps,
            num_ues,
            bits: vec![false; num_aps * num_ues],
        }
    }

    pub fn full(num_aps: usize, num_ues: usize) -> Self {
        ServingMask {
            num_aps,
            num_ues,
            bits: vec![true; num_aps * num_ues],
        }
    }

    /// One row per AP, one entry per UE.
    pub fn from_rows(rows: &[Vec<bool>]) -> Self {
        let num_ues = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == num_ues), "ragged mask rows");
        ServingMask {
            num_aps: rows.len(),
            num_ues,
            bits: rows.concat(),
        }
    }

    pub fn num_aps(&self) -> usize {
        self.num_aps
    }

    pub fn num_ues(&self) -> usize {
        self.num_ues
    }

    pub fn serves(&self, ap: usize, ue: usize) -> bool {
        self.bits[ap * self.num_ues + ue]
    }

    pub fn set(&mut self, ap: usize, ue: usize, on: bool) {
        self.bits[ap * self.num_ues + ue] = on;
    }

    /// D_l: UEs served by AP `ap`.
    pub fn served_by(&self, ap: usize) -> Vec<usize> {
        (0..self.num_ues).filter(|&k| self.serves(ap, k)).collect()
    }

    /// M_k: APs serving UE `ue`.
    pub fn serving_aps(&self, ue: usize) -> Vec<usize> {
        (0..self.num_aps).filter(|&l| self.serves(l, ue)).collect()
    }

    pub fn is_served(&self, ue: usize) -> bool {
        (0..self.num_aps).any(|l| self.serves(l, ue))
    }

    /// K^t = D_1 ∪ … ∪ D_L, ascending.
    pub fn active_set(&self) -> Result<Vec<usize>> {
        let set: Vec<usize> = (0..self.num_ues).filter(|&k| self.is_served(k)).collect();
        if set.is_empty() {
            return Err(Error::Protocol("no UE is served by any AP".into()));
        }
        Ok(set)
    }

    /// Mask rows rendered as `0`/`1` strings, one per AP.
    pub fn to_rows_string(&self) -> Vec<String> {
        (0..self.num_aps)
            .map(|l| (0..self.num_ues).map(|k| if self.serves(l, k) { '1' } else { '0' }).collect())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UeCategory {
    Synchronous,
    Asynchronous,
    NeedToBeSynchronized,
}

/// Lag-percent selection for one AP. `beta_col[k]` is the AP's gain to UE `k`.
pub fn select_ues(beta_col: &[f64], lag_percent: f64) -> Result<Vec<usize>> {
    if !(lag_percent > 0.0 && lag_percent <= 100.0) {
        return Err(Error::InvalidArgument(format!("lag percent {lag_percent} outside (0, 100]")));
    }
    if beta_col.is_empty() {
        return Ok(Vec::new());
    }
    let mut order: Vec<usize> = (0..beta_col.len()).collect();
    // stable sort keeps lower indices first on ties
    order.sort_by(|&a, &b| beta_col[b].total_cmp(&beta_col[a]));
    if lag_percent >= 100.0 {
        return Ok(order);
    }
    let total: f64 = beta_col.iter().sum();
    let target = lag_percent / 100.0 * total;
    let mut cum = 0.0;
    for (n, &k) in order.iter().enumerate() {
        cum += beta_col[k];
        if cum >= target {
            return Ok(order[..=n].to_vec());
        }
    }
    Ok(order)
}

/// Per-AP selection for every AP in `beta`.
pub fn propose_mask(beta: &DMatrix<f64>, lag_percent: f64) -> Result<ServingMask> {
    let (n_ap, n_ue) = beta.shape();
    let mut mask = ServingMask::empty(n_ap, n_ue);
    for l in 0..n_ap {
        let row: Vec<f64> = (0..n_ue).map(|k| beta[(l, k)]).collect();
        for k in select_ues(&row, lag_percent)? {
            mask.set(l, k, true);
        }
    }
    Ok(mask)
}

/// Strongest AP of UE `ue`; ties go to the lower AP index.
pub fn strongest_ap(beta: &DMatrix<f64>, ue: usize) -> usize {
    let mut best = 0;
    for l in 1..beta.nrows() {
        if beta[(l, ue)] > beta[(best, ue)] {
            best = l;
        }
    }
    best
}

/// Schedule produced for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundSchedule {
    pub mask: ServingMask,
    pub categories: Vec<UeCategory>,
    pub active: Vec<usize>,
    /// Staleness of each UE before this round.
    pub staleness_before: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleState {
    /// Rounds since each UE was last served.
    pub staleness: Vec<u32>,
    pub lag_tolerance: u32,
    pub lag_percent: f64,
}

impl ScheduleState {
    pub fn new(num_ues: usize, lag_tolerance: u32, lag_percent: f64) -> Result<Self> {
        if lag_tolerance == 0 {
            return Err(Error::InvalidArgument("lag tolerance must be >= 1".into()));
        }
        if !(lag_percent > 0.0 && lag_percent <= 100.0) {
            return Err(Error::InvalidArgument(format!("lag percent {lag_percent} outside (0, 100]")));
        }
        Ok(ScheduleState {
            staleness: vec![0; num_ues],
            lag_tolerance,
            lag_percent,
        })
    }

    /// A UE with `staleness + 1 >= T_tol` must be served this round.
    pub fn must_sync(&self, ue: usize) -> bool {
        self.staleness[ue] + 1 >= self.lag_tolerance
    }

    /// Forces overdue UEs onto their strongest AP and advances the staleness
    /// counters. Returns the final mask and the UEs that were force-added.
    pub fn enforce_lag_tolerance(&mut self, beta: &DMatrix<f64>, proposed: ServingMask) -> (ServingMask, Vec<usize>) {
        let mut mask = proposed;
        let mut forced = Vec::new();
        for k in 0..mask.num_ues() {
            if !mask.is_served(k) && self.must_sync(k) {
                mask.set(strongest_ap(beta, k), k, true);
                forced.push(k);
            }
        }
        for k in 0..mask.num_ues() {
            if mask.is_served(k) {
                self.staleness[k] = 0;
            } else {
                self.staleness[k] += 1;
            }
        }
        (mask, forced)
    }

    /// Runs selection, enforcement and classification for one round.
    pub fn step(&mut self, beta: &DMatrix<f64>) -> Result<RoundSchedule> {
        let staleness_before = self.staleness.clone();
        let proposed = propose_mask(beta, self.lag_percent)?;
        let (mask, forced) = self.enforce_lag_tolerance(beta, proposed);
        let categories = classify_ues(&mask, &forced);
        let active = mask.active_set()?;
        Ok(RoundSchedule {
            mask,
            categories,
            active,
            staleness_before,
        })
    }
}

/// Served by selection → synchronous; force-added → need-to-be-synchronized;
/// unserved → asynchronous.
pub fn classify_ues(mask: &ServingMask, forced: &[usize]) -> Vec<UeCategory> {
    (0..mask.num_ues())
        .map(|k| {
            if forced.contains(&k) {
                UeCategory::NeedToBeSynchronized
            } else if mask.is_served(k) {
                UeCategory::Synchronous
            } else {
                UeCategory::Asynchronous
            }
        })
        .collect()
}

/// Full-service schedule (every AP serves every UE) for `rounds` rounds.
pub fn synchronous_masks(num_aps: usize, num_ues: usize, rounds: usize) -> Vec<ServingMask> {
    vec![ServingMask::full(num_aps, num_ues); rounds]
}

/// Masks of `rounds` consecutive rounds from a fresh state.
pub fn asynchronous_masks(beta: &DMatrix<f64>, lag_tolerance: u32, lag_percent: f64, rounds: usize) -> Result<Vec<RoundSchedule>> {
    let mut state = ScheduleState::new(beta.ncols(), lag_tolerance, lag_percent)?;
    (0..rounds).map(|_| state.step(beta)).collect()
}

/// CSV audit trail: round, ue, served, category, staleness_before, serving_aps.
pub fn schedule_to_csv(rounds: &[RoundSchedule]) -> String {
    let mut out = String::from("round,ue,served,category,staleness_before,serving_aps\n");
    for (t, r) in rounds.iter().enumerate() {
        for k in 0..r.mask.num_ues() {
            let aps: Vec<String> = r.mask.serving_aps(k).iter().map(|l| l.to_string()).collect();
            let cat = match r.categories[k] {
                UeCategory::Synchronous => "synchronous",
                UeCategory::Asynchronous => "asynchronous",
                UeCategory::NeedToBeSynchronized => "need-to-be-synchronized",
            };
            out.push_str(&format!(
                "{t},{k},{},{cat},{},{}\n",
                u8::from(r.mask.is_served(k)),
                r.staleness_before[k],
                aps.join(";")
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn selection_examples() {
        let b = [0.2, 0.5, 0.3];
        assert_eq!(select_ues(&b, 100.0).unwrap(), vec![1, 2, 0]);
        assert_eq!(select_ues(&b, 1e-9).unwrap(), vec![1]);
        // prefix sums 0.5 < 0.7 <= 0.8
        assert_eq!(select_ues(&b, 70.0).unwrap(), vec![1, 2]);
        assert!(select_ues(&b, 0.0).is_err());
        assert!(select_ues(&b, 101.0).is_err());
    }

    #[test]
    fn ties_prefer_lower_index() {
        assert_eq!(select_ues(&[0.25, 0.25, 0.25, 0.25], 50.0).unwrap(), vec![0, 1]);
    }

    #[test]
    fn overdue_ue_is_forced() {
        let beta = DMatrix::from_row_slice(2, 3, &[0.9, 0.8, 0.1, 0.5, 0.7, 0.2]);
        let mut st = ScheduleState::new(3, 4, 50.0).unwrap();
        st.staleness = vec![3, 0, 2];
        let mut proposed = ServingMask::empty(2, 3);
        proposed.set(0, 1, true);
        let (mask, forced) = st.enforce_lag_tolerance(&beta, proposed);
        assert_eq!(forced, vec![0]);
        assert!(mask.serves(0, 0));
        assert_eq!(st.staleness, vec![0, 0, 3]);
    }

    #[test]
    fn full_selection_resets_counters() {
        let beta = DMatrix::from_row_slice(1, 2, &[0.9, 0.8]);
        let mut st = ScheduleState::new(2, 3, 100.0).unwrap();
        st.staleness = vec![1, 1];
        let r = st.step(&beta).unwrap();
        assert_eq!(r.mask, ServingMask::full(1, 2));
        assert_eq!(st.staleness, vec![0, 0]);
        assert!(r.categories.iter().all(|&c| c == UeCategory::Synchronous));
    }

    #[test]
    fn starved_ue_becomes_need_to_be_synchronized() {
        // UE 1 is never selected at ν small
        let beta = DMatrix::from_row_slice(1, 2, &[1.0, 0.01]);
        let t_tol = 3;
        let mut st = ScheduleState::new(2, t_tol, 10.0).unwrap();
        let mut cats = Vec::new();
        for _ in 0..7 {
            cats.push(st.step(&beta).unwrap().categories[1]);
        }
        use UeCategory::*;
        assert_eq!(
            cats,
            vec![Asynchronous, Asynchronous, NeedToBeSynchronized, Asynchronous, Asynchronous, NeedToBeSynchronized, Asynchronous]
        );
    }

    #[test]
    fn active_set_union() {
        let full = ServingMask::full(3, 4);
        assert_eq!(full.active_set().unwrap(), vec![0, 1, 2, 3]);
        let m = ServingMask::from_rows(&[vec![true, false, false], vec![false, false, true]]);
        assert_eq!(m.active_set().unwrap(), vec![0, 2]);
        assert!(ServingMask::empty(2, 2).active_set().is_err());
    }

    #[test]
    fn csv_has_row_per_ue_round() {
        let beta = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.2, 0.3]);
        let rounds = asynchronous_masks(&beta, 2, 60.0, 3).unwrap();
        assert_eq!(schedule_to_csv(&rounds).lines().count(), 1 + 3 * 2);
    }

    fn beta_strategy() -> impl Strategy<Value = DMatrix<f64>> {
        (1usize..6, 1usize..8).prop_flat_map(|(l, k)| {
            proptest::collection::vec(1e-6..1.0f64, l * k).prop_map(move |v| DMatrix::from_vec(l, k, v))
        })
    }

    proptest! {
        #[test]
        fn prefix_nesting(col in proptest::collection::vec(1e-6..1.0f64, 1..10), a in 0.1..100.0f64, b in 0.1..100.0f64) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let small = select_ues(&col, lo).unwrap();
            let big = select_ues(&col, hi).unwrap();
            prop_assert!(!small.is_empty());
            prop_assert_eq!(&big[..small.len()], &small[..]);
            // prefix of the descending order
            for w in big.windows(2) {
                prop_assert!(col[w[0]] > col[w[1]] || (col[w[0]] == col[w[1]] && w[0] < w[1]));
            }
        }

        #[test]
        fn staleness_bounded_by_tolerance(beta in beta_strategy(), t_tol in 1u32..6, nu in 1.0..100.0f64) {
            let mut st = ScheduleState::new(beta.ncols(), t_tol, nu).unwrap();
            for _ in 0..20 {
                let r = st.step(&beta).unwrap();
                prop_assert!(!r.active.is_empty());
                prop_assert!(st.staleness.iter().all(|&s| s < t_tol));
                prop_assert_eq!(r.categories.len(), beta.ncols());
                for k in 0..beta.ncols() {
                    prop_assert_eq!(st.staleness[k] == 0, r.mask.is_served(k));
                }
            }
        }

        #[test]
        fn full_lag_percent_keeps_everyone_fresh(beta in beta_strategy(), t_tol in 1u32..6) {
            let mut st = ScheduleState::new(beta.ncols(), t_tol, 100.0).unwrap();
            for _ in 0..5 {
                st.step(&beta).unwrap();
                prop_assert!(st.staleness.iter().all(|&s| s == 0));
            }
        }

        #[test]
        fn active_set_matches_brute_force(bits in proptest::collection::vec(any::<bool>(), 12)) {
            let rows: Vec<Vec<bool>> = bits.chunks(4).map(|c| c.to_vec()).collect();
            let m = ServingMask::from_rows(&rows);
            let mut expect = std::collections::BTreeSet::new();
            for r in &rows {
                for (k, &b) in r.iter().enumerate() {
                    if b { expect.insert(k); }
                }
            }
            match m.active_set() {
                Ok(s) => prop_assert_eq!(s, expect.into_iter().collect::<Vec<_>>()),
                Err(_) => prop_assert!(expect.is_empty()),
            }
        }
    }
}
