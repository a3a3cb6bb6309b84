//! Deep Q-learning controller for the DPWS threshold and hysteresis.
//!
//! The agent observes an 8-component summary of the cell KPIs, nudges
//! `(zeta, xi)` by one of nine discrete steps and is rewarded by the weighted
//! relative change of the low throughput percentiles and the mean.

pub mod qnet;
pub mod replay;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kpi::{CellKpiReport, ThroughputStats, R_SENTINEL};

pub use qnet::{AdamConfig, Params, QNetwork, TargetSample, HIDDEN, INPUTS, OUTPUTS};
pub use replay::{ReplayBuffer, Transition};

pub const ZETA_STEP_DB: f64 = 1.0;
pub const XI_STEP_DB: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamBounds {
    pub zeta_min: f64,
    pub zeta_max: f64,
    pub xi_max: f64,
}

impl Default for ParamBounds {
    fn default() -> Self {
        ParamBounds {
            zeta_min: -10.0,
            zeta_max: 25.0,
            xi_max: 10.0,
        }
    }
}

impl ParamBounds {
    pub fn validate(&self) -> Result<()> {
        if !(self.zeta_min < self.zeta_max) || !(self.xi_max >= 0.0) {
            return Err(Error::invalid("parameter bounds are empty"));
        }
        Ok(())
    }
}

/// Raw state `(zeta, xi, mean_gamma, R6_snr, R5_snr, R6_ta, R3_ta, D5_snr)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub raw: [f64; INPUTS],
}

impl AgentState {
    /// Fixed affine scaling that keeps every input roughly within [-1, 1].
    pub fn normalized(&self) -> [f64; INPUTS] {
        let r = |v: f64| v.ln_1p() / 7.0;
        let s = &self.raw;
        [
            s[0] / 25.0,
            s[1] / 10.0,
            s[2] / 30.0,
            r(s[3]),
            r(s[4]),
            r(s[5]),
            r(s[6]),
            s[7],
        ]
    }
}

pub fn build_state(kpis: &CellKpiReport, zeta: f64, xi: f64) -> Result<AgentState> {
    if kpis.snr_hist.is_empty() || kpis.ta_hist.is_empty() {
        return Err(Error::UndefinedState("empty KPI histogram".into()));
    }
    if !kpis.mean_gamma_db.is_finite() {
        return Err(Error::UndefinedState(format!(
            "mean SNR is {}",
            kpis.mean_gamma_db
        )));
    }
    let snr = &kpis.snr_hist;
    let ta = &kpis.ta_hist;
    Ok(AgentState {
        raw: [
            zeta,
            xi,
            kpis.mean_gamma_db,
            snr.descriptor_r(6, R_SENTINEL)?,
            snr.descriptor_r(5, R_SENTINEL)?,
            ta.descriptor_r(6, R_SENTINEL)?,
            ta.descriptor_r(3, R_SENTINEL)?,
            snr.descriptor_d(5)?,
        ],
    })
}

/// One of the nine `(dzeta, dxi)` moves, laid out row-major with `dzeta`
/// as the row: index `3 (sz + 1) + (sx + 1)` for signs `sz, sx`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionIndex(u8);

impl ActionIndex {
    pub const CENTER: ActionIndex = ActionIndex(4);
    pub const COUNT: usize = OUTPUTS;

    pub fn new(index: usize) -> Result<Self> {
        if index >= Self::COUNT {
            return Err(Error::invalid(format!("action index {index} outside 0..9")));
        }
        Ok(ActionIndex(index as u8))
    }

    pub fn all() -> impl Iterator<Item = ActionIndex> {
        (0..Self::COUNT as u8).map(ActionIndex)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// Step signs in {-1, 0, 1}.
    pub fn signs(self) -> (i8, i8) {
        ((self.0 / 3) as i8 - 1, (self.0 % 3) as i8 - 1)
    }

    pub fn from_signs(sz: i8, sx: i8) -> Result<Self> {
        if !(-1..=1).contains(&sz) || !(-1..=1).contains(&sx) {
            return Err(Error::invalid(format!("step signs ({sz}, {sx}) outside -1..=1")));
        }
        Ok(ActionIndex((3 * (sz + 1) + (sx + 1)) as u8))
    }

    /// `(dzeta, dxi)` in dB.
    pub fn deltas(self) -> (f64, f64) {
        let (sz, sx) = self.signs();
        (sz as f64 * ZETA_STEP_DB, sx as f64 * XI_STEP_DB)
    }
}

pub fn decode_action(a: ActionIndex, zeta: f64, xi: f64, bounds: &ParamBounds) -> (f64, f64) {
    let (dz, dx) = a.deltas();
    (
        (zeta + dz).clamp(bounds.zeta_min, bounds.zeta_max),
        (xi + dx).clamp(0.0, bounds.xi_max),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardSpec {
    /// Weights of p10, p15, ..., p45 and the mean.
    pub weights: [f64; 9],
    pub theta: f64,
    pub r_clip: f64,
}

impl Default for RewardSpec {
    fn default() -> Self {
        RewardSpec {
            weights: [0.02, 0.04, 0.06, 0.08, 0.10, 0.12, 0.14, 0.16, 0.18],
            theta: 50.0,
            r_clip: 2.0,
        }
    }
}

impl RewardSpec {
    pub fn validate(&self) -> Result<()> {
        if self.weights.iter().any(|w| !w.is_finite()) || !self.theta.is_finite() {
            return Err(Error::invalid("reward weights must be finite"));
        }
        if !(self.r_clip > 0.0) {
            return Err(Error::invalid("reward clip must be positive"));
        }
        Ok(())
    }
}

/// Unclipped weighted relative gain. A factor whose previous value is not
/// positive has no meaningful relative change and contributes nothing.
pub fn raw_reward(prev: &ThroughputStats, cur: &ThroughputStats, spec: &RewardSpec) -> f64 {
    let mut sum = 0.0;
    for (k, w) in spec.weights.iter().enumerate() {
        let (p, c) = (prev.values[k], cur.values[k]);
        if p > 0.0 && p.is_finite() && c.is_finite() {
            sum += w * (c - p) / p;
        } else {
            log::warn!(
                "reward factor {} has degenerate baseline {p}; term skipped",
                crate::kpi::FACTOR_LABELS[k]
            );
        }
    }
    spec.theta * sum
}

pub fn compute_reward(prev: &ThroughputStats, cur: &ThroughputStats, spec: &RewardSpec) -> f64 {
    raw_reward(prev, cur, spec).clamp(-spec.r_clip, spec.r_clip)
}

fn greedy(q: &[f64; OUTPUTS]) -> usize {
    let mut best = 0;
    for (i, v) in q.iter().enumerate().skip(1) {
        if *v > q[best] {
            best = i;
        }
    }
    best
}

pub fn greedy_action(q: &QNetwork, s: &AgentState) -> ActionIndex {
    ActionIndex(greedy(&q.forward(&s.normalized())) as u8)
}

pub fn select_action<R: Rng + ?Sized>(
    q: &QNetwork,
    s: &AgentState,
    epsilon: f64,
    rng: &mut R,
) -> ActionIndex {
    debug_assert!((0.0..=1.0).contains(&epsilon));
    if rng.random::<f64>() < epsilon {
        ActionIndex(rng.random_range(0..ActionIndex::COUNT) as u8)
    } else {
        greedy_action(q, s)
    }
}

/// Linear decay from `start` to `end` over `decay_steps` actions, then flat.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: usize,
}

impl EpsilonSchedule {
    pub fn value(&self, step: usize) -> f64 {
        if self.decay_steps == 0 || step >= self.decay_steps {
            return self.end;
        }
        let frac = step as f64 / self.decay_steps as f64;
        self.start + (self.end - self.start) * frac
    }
}

/// Targets `r + discount * max_a' Q(s', a')` for a batch, computed from the
/// live network and then held fixed.
pub fn bellman_targets(q: &QNetwork, batch: &[Transition], discount: f64) -> Vec<TargetSample> {
    batch
        .iter()
        .map(|t| {
            let next = q.forward(&t.next_state);
            let best = next.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            TargetSample {
                state: t.state,
                action: t.action,
                target: t.reward + discount * best,
            }
        })
        .collect()
}

/// One gradient step on a sampled batch. `None` when the buffer holds fewer
/// than `batch_size` transitions.
pub fn train_step<R: Rng + ?Sized>(
    q: &mut QNetwork,
    buffer: &ReplayBuffer,
    batch_size: usize,
    discount: f64,
    adam: &AdamConfig,
    rng: &mut R,
) -> Option<f64> {
    let batch = buffer.sample(batch_size, rng)?;
    let samples = bellman_targets(q, &batch, discount);
    let loss = q.train_on(&samples, adam);
    debug_assert!(q.is_finite(), "non-finite parameters after update");
    Some(loss)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub learning_rate: f64,
    pub discount: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub epsilon_start: f64,
    pub epsilon_min: f64,
    /// Gradient steps after each stored transition.
    pub updates_per_step: usize,
    pub reward: RewardSpec,
    pub bounds: ParamBounds,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            learning_rate: 0.05,
            discount: 0.01,
            buffer_capacity: 750,
            batch_size: 350,
            epsilon_start: 1.0,
            epsilon_min: 0.01,
            updates_per_step: 1,
            reward: RewardSpec::default(),
            bounds: ParamBounds::default(),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return Err(Error::invalid("discount must lie in [0, 1]"));
        }
        if self.batch_size == 0 || self.batch_size > self.buffer_capacity {
            return Err(Error::invalid("batch_size must be in 1..=buffer_capacity"));
        }
        for e in [self.epsilon_start, self.epsilon_min] {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::invalid("epsilon values must lie in [0, 1]"));
            }
        }
        self.reward.validate()?;
        self.bounds.validate()
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            ..AdamConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use crate::kpi::{Histogram12, BINS};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn report(snr: [u64; BINS], ta: [u64; BINS]) -> CellKpiReport {
        let mut snr_hist = Histogram12::snr();
        snr_hist.counts = snr;
        let mut ta_hist = Histogram12::ta();
        ta_hist.counts = ta;
        CellKpiReport {
            snr_hist,
            ta_hist,
            mean_gamma_db: 7.5,
            throughput: None,
        }
    }

    fn stats(v: f64) -> ThroughputStats {
        ThroughputStats { values: [v; 9] }
    }

    #[test]
    fn uniform_histograms_give_hand_evaluated_descriptors() {
        let s = build_state(&report([3; BINS], [3; BINS]), 0.0, 5.0).unwrap();
        // bins 6..12 over 1..5, 5..12 over 1..4, 3..12 over 1..2
        assert!((s.raw[3] - 7.0 / 5.0).abs() < 1e-15);
        assert!((s.raw[4] - 2.0).abs() < 1e-15);
        assert!((s.raw[5] - 7.0 / 5.0).abs() < 1e-15);
        assert!((s.raw[6] - 5.0).abs() < 1e-15);
        assert!((s.raw[7] - 8.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn defaults_appear_verbatim_and_full_tail_gives_d_one() {
        let mut top = [0; BINS];
        top[BINS - 1] = 10;
        let s = build_state(&report(top, [1; BINS]), 0.0, 5.0).unwrap();
        assert_eq!(&s.raw[..3], &[0.0, 5.0, 7.5]);
        assert_eq!(s.raw[7], 1.0);
        assert_eq!(s.raw[3], R_SENTINEL);
        assert!(s.normalized().iter().all(|v| v.is_finite() && v.abs() <= 1.5));
    }

    #[test]
    fn empty_histogram_is_an_undefined_state() {
        let err = build_state(&report([0; BINS], [1; BINS]), 0.0, 5.0).unwrap_err();
        assert!(matches!(err, Error::UndefinedState(_)));
    }

    #[test]
    fn action_layout_is_row_major() {
        assert_eq!(ActionIndex::CENTER.deltas(), (0.0, 0.0));
        assert_eq!(ActionIndex::from_signs(1, -1).unwrap().index(), 6);
        for a in ActionIndex::all() {
            let (sz, sx) = a.signs();
            assert_eq!(ActionIndex::from_signs(sz, sx).unwrap(), a);
        }
        assert!(ActionIndex::new(9).is_err());
        assert!(ActionIndex::from_signs(2, 0).is_err());
    }

    #[test]
    fn decode_examples() {
        let b = ParamBounds::default();
        assert_eq!(decode_action(ActionIndex::CENTER, 0.0, 5.0, &b), (0.0, 5.0));
        let a = ActionIndex::from_signs(1, -1).unwrap();
        assert_eq!(decode_action(a, 0.0, 5.0, &b), (1.0, 4.5));
        let down = ActionIndex::from_signs(0, -1).unwrap();
        assert_eq!(decode_action(down, 0.0, 0.0, &b), (0.0, 0.0));
        let up = ActionIndex::from_signs(1, 1).unwrap();
        assert_eq!(decode_action(up, 25.0, 10.0, &b), (25.0, 10.0));
    }

    #[test]
    fn reward_examples() {
        let spec = RewardSpec::default();
        assert!((spec.weights.iter().sum::<f64>() - 0.9).abs() < 1e-15);
        assert_eq!(compute_reward(&stats(3.0), &stats(3.0), &spec), 0.0);
        let r = compute_reward(&stats(1.0), &stats(1.01), &spec);
        assert!((r - 0.45).abs() < 1e-12, "{r}");
        assert!((raw_reward(&stats(1.0), &stats(1.1), &spec) - 4.5).abs() < 1e-12);
        assert_eq!(compute_reward(&stats(1.0), &stats(1.1), &spec), 2.0);
        assert_eq!(compute_reward(&stats(1.0), &stats(0.5), &spec), -2.0);
    }

    #[test]
    fn degenerate_baseline_term_contributes_nothing() {
        let spec = RewardSpec::default();
        let mut prev = stats(1.0);
        prev.values[0] = 0.0;
        let r = raw_reward(&prev, &stats(1.01), &spec);
        let expected = 50.0 * 0.01 * (0.9 - 0.02);
        assert!((r - expected).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn reward_is_antisymmetric_to_first_order(
            base in prop::array::uniform9(0.5f64..5.0),
            gains in prop::array::uniform9(-1e-3f64..1e-3),
        ) {
            let spec = RewardSpec::default();
            let prev = ThroughputStats { values: base };
            let mut cur = prev;
            for k in 0..9 {
                cur.values[k] *= 1.0 + gains[k];
            }
            let fwd = raw_reward(&prev, &cur, &spec);
            let back = raw_reward(&cur, &prev, &spec);
            // second-order remainder: theta * sum B g^2 / (1 + g)
            prop_assert!((fwd + back).abs() <= 50.0 * 0.9 * 1.1e-6);
        }

        #[test]
        fn decode_stays_in_bounds(idx in 0usize..9, zeta in -10.0f64..25.0, xi in 0.0f64..10.0) {
            let b = ParamBounds::default();
            let (z, x) = decode_action(ActionIndex::new(idx).unwrap(), zeta, xi, &b);
            prop_assert!((b.zeta_min..=b.zeta_max).contains(&z));
            prop_assert!((0.0..=b.xi_max).contains(&x));
        }
    }

    fn net_favoring(action: usize) -> QNetwork {
        let mut p = Params::zeros();
        p.b2[action] = 1.0;
        QNetwork::from_params(p)
    }

    fn some_state() -> AgentState {
        AgentState { raw: [0.0, 5.0, 3.0, 1.0, 1.0, 1.0, 1.0, 0.5] }
    }

    #[test]
    fn full_exploration_is_uniform() {
        let q = net_favoring(7);
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let n = 10_000;
        let mut counts = [0usize; 9];
        for _ in 0..n {
            counts[select_action(&q, &some_state(), 1.0, &mut rng).index()] += 1;
        }
        let p = 1.0 / 9.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn pure_exploitation_is_greedy_with_low_index_ties() {
        let q = net_favoring(7);
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..1000 {
            assert_eq!(select_action(&q, &some_state(), 0.0, &mut rng).index(), 7);
        }
        let flat = QNetwork::from_params(Params::zeros());
        assert_eq!(select_action(&flat, &some_state(), 0.0, &mut rng).index(), 0);
    }

    #[test]
    fn half_exploration_splits_as_bernoulli() {
        let q = net_favoring(7);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 10_000;
        let hits = (0..n)
            .filter(|_| select_action(&q, &some_state(), 0.5, &mut rng).index() == 7)
            .count();
        // greedy half plus the exploring half landing on 7 by chance
        let p = 0.5 + 0.5 / 9.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((hits as f64 - n as f64 * p).abs() < 3.0 * sigma, "{hits}");
    }

    #[test]
    fn epsilon_decays_linearly_then_holds() {
        let s = EpsilonSchedule { start: 1.0, end: 0.01, decay_steps: 100 };
        assert_eq!(s.value(0), 1.0);
        assert!((s.value(50) - 0.505).abs() < 1e-12);
        assert_eq!(s.value(100), 0.01);
        assert_eq!(s.value(10_000), 0.01);
    }

    #[test]
    fn repeated_transition_converges_to_its_reward() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let mut q = QNetwork::new(&mut rng);
        let s = some_state().normalized();
        let t = Transition { state: s, action: 3, reward: 1.0, next_state: s };
        let mut buf = ReplayBuffer::new(750);
        (0..750).for_each(|_| buf.push(t));
        let adam = AdamConfig::default();
        let mut converged_at = None;
        for step in 0..500 {
            train_step(&mut q, &buf, 350, 0.0, &adam, &mut rng).unwrap();
            if (q.forward(&s)[3] - 1.0).abs() < 1e-2 {
                converged_at = Some(step);
                break;
            }
        }
        assert!(converged_at.is_some(), "Q = {}", q.forward(&s)[3]);
    }

    #[test]
    fn undersized_buffer_is_a_no_op() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let mut q = QNetwork::new(&mut rng);
        let before = q.clone();
        let buf = ReplayBuffer::new(750);
        assert!(train_step(&mut q, &buf, 350, 0.01, &AdamConfig::default(), &mut rng).is_none());
        assert_eq!(q, before);
    }

    #[test]
    fn two_state_mdp_reaches_optimal_greedy_policy() {
        let states = [
            AgentState { raw: [5.0, 2.0, 3.0, 1.0, 1.0, 1.0, 1.0, 0.2] },
            AgentState { raw: [-5.0, 8.0, 20.0, 9.0, 9.0, 9.0, 9.0, 0.9] },
        ];
        let best = [2usize, 6];
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let mut q = QNetwork::new(&mut rng);
        let mut buf = ReplayBuffer::new(750);
        let mut cur = 0;
        for _ in 0..750 {
            let a = rng.random_range(0..9);
            let r = if a == best[cur] { 1.0 } else { 0.0 };
            let next = 1 - cur;
            buf.push(Transition {
                state: states[cur].normalized(),
                action: a,
                reward: r,
                next_state: states[next].normalized(),
            });
            cur = next;
        }
        let adam = AdamConfig::default();
        let optimal = |q: &QNetwork| (0..2).all(|i| greedy_action(q, &states[i]).index() == best[i]);
        let mut solved = false;
        for _ in 0..5000 {
            train_step(&mut q, &buf, 350, 0.01, &adam, &mut rng).unwrap();
            if optimal(&q) {
                solved = true;
                break;
            }
        }
        assert!(solved);
        assert!(q.is_finite());
    }

    #[test]
    fn config_validation() {
        assert!(AgentConfig::default().validate().is_ok());
        let bad = AgentConfig { batch_size: 800, ..AgentConfig::default() };
        assert!(bad.validate().is_err());
        let bad = AgentConfig { discount: 1.5, ..AgentConfig::default() };
        assert!(bad.validate().is_err());
    }
}
