//! Episode orchestration: UE drops, slot-level simulation of one step,
//! the training loop, greedy evaluation and fixed-waveform baselines.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::agent::{
    build_state, compute_reward, decode_action, select_action, train_step, AgentConfig, EpsilonSchedule,
    QNetwork, ReplayBuffer, Transition,
};
use crate::config::{EpisodeConfig, SimConfig};
use crate::dpws::{on_slot, on_srs, DpwsConfig, DpwsState, SwitchEvent};
use crate::error::{Error, Result};
use crate::kpi::{quantile, throughput_percentiles, CellKpiReport, Histogram12, ThroughputStats, FACTOR_LABELS};
use crate::link::{path_loss_uma, select_precoder, FadingState, LinkConfig, CODEBOOK};
use crate::rng::{self, SimRng};
use crate::waveform::Waveform;

/// SRS SNR recorded when a UE has zero channel gain.
pub const GAMMA_FLOOR_DB: f64 = -60.0;

const TAG_TRAIN: u64 = 1;
const TAG_EVAL: u64 = 2;
const TAG_AGENT_INIT: u64 = 3;
const TAG_AGENT_POLICY: u64 = 4;
const SUB_DROP: u64 = 0;
const SUB_FADING: u64 = 1;
const SUB_MEASURE: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    Train,
    Evaluate,
    BaselineCp,
    BaselineDfts,
}

impl RunMode {
    pub fn fixed_waveform(self) -> Option<Waveform> {
        match self {
            RunMode::BaselineCp => Some(Waveform::CpOfdm),
            RunMode::BaselineDfts => Some(Waveform::DftSOfdm),
            _ => None,
        }
    }

    fn stream_tag(self) -> u64 {
        match self {
            RunMode::Train => TAG_TRAIN,
            _ => TAG_EVAL,
        }
    }
}

/// How UEs pick their waveform during a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WaveformPolicy {
    Dpws(DpwsConfig),
    Fixed(Waveform),
}

#[derive(Debug, Clone)]
pub struct UeContext {
    pub id: usize,
    pub distance_m: f64,
    /// Path loss including shadowing and the fixed excess loss (dB).
    pub path_loss_db: f64,
    pub fading: FadingState,
    pub precoder: usize,
    pub dpws: DpwsState,
    fading_rng: SimRng,
    measure_rng: SimRng,
}

/// Drops `cfg.ues` UEs uniformly in distance. Each UE owns RNG streams
/// keyed by `(seed, stream_path, ue)`, so identical paths replay identical
/// channels regardless of policy.
pub fn drop_ues(
    cfg: &EpisodeConfig,
    link: &LinkConfig,
    seed: u64,
    stream_path: &[u64],
) -> Result<Vec<UeContext>> {
    let path = |sub: u64, ue: u64| -> Vec<u64> {
        let mut p = stream_path.to_vec();
        p.extend([sub, ue]);
        p
    };
    let mut drop_rng = rng::stream(seed, &path(SUB_DROP, 0));
    let shadow = Normal::new(0.0, link.shadowing_sigma_db).map_err(|e| Error::invalid(e.to_string()))?;
    (0..cfg.ues)
        .map(|id| {
            let distance_m = drop_rng.random_range(cfg.min_distance_m..=cfg.max_distance_m);
            let path_loss_db = path_loss_uma(distance_m, link.carrier_ghz)?
                + shadow.sample(&mut drop_rng)
                + link.excess_loss_db;
            let mut fading_rng = rng::stream(seed, &path(SUB_FADING, id as u64));
            let fading = FadingState::random(link.rx_antennas, 2, link.fading_rho, &mut fading_rng)?;
            let precoder = select_precoder(&fading, &CODEBOOK)?;
            Ok(UeContext {
                id,
                distance_m,
                path_loss_db,
                fading,
                precoder,
                dpws: DpwsState::new(Waveform::CpOfdm),
                fading_rng,
                measure_rng: rng::stream(seed, &path(SUB_MEASURE, id as u64)),
            })
        })
        .collect()
}

/// Per-UE slot bookkeeping for one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SlotAccounting {
    pub ue_id: usize,
    pub throughput_slots: usize,
    pub guard_slots: usize,
    pub outage_slots: usize,
}

impl SlotAccounting {
    pub fn total(&self) -> usize {
        self.throughput_slots + self.guard_slots + self.outage_slots
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UeStepResult {
    pub accounting: SlotAccounting,
    /// Mean rate in bits/s over each throughput window.
    pub window_rates: Vec<f64>,
    /// Rate in bits/s of every slot.
    pub slot_rates: Vec<f64>,
    pub srs_gammas: Vec<f64>,
    pub ta_percent: f64,
    pub switches: Vec<SwitchEvent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub report: CellKpiReport,
    pub ues: Vec<UeStepResult>,
    /// Window-rate samples that entered the throughput statistics.
    pub samples: Vec<f64>,
}

impl StepOutcome {
    pub fn switches(&self) -> impl Iterator<Item = &SwitchEvent> {
        self.ues.iter().flat_map(|u| u.switches.iter())
    }
}

fn simulate_ue(
    ue: &mut UeContext,
    policy: &WaveformPolicy,
    ep: &EpisodeConfig,
    link: &LinkConfig,
) -> UeStepResult {
    if let WaveformPolicy::Fixed(w) = policy {
        ue.dpws = DpwsState::new(*w);
    }
    let mut acc = SlotAccounting {
        ue_id: ue.id,
        throughput_slots: 0,
        guard_slots: 0,
        outage_slots: 0,
    };
    let mut slot_rates = Vec::with_capacity(ep.slots_per_step);
    let mut srs_gammas = Vec::with_capacity(ep.slots_per_step / ep.srs_period_slots);
    let mut switches = Vec::new();

    for slot in 0..ep.slots_per_step {
        ue.fading.evolve(&mut ue.fading_rng);
        if slot % ep.srs_period_slots == 0 {
            // precoder tracking follows the true channel on every SRS period
            ue.precoder = select_precoder(&ue.fading, &CODEBOOK).expect("two-port channel");
            if !ue.dpws.in_guard() {
                let gamma = link.srs_snr(ue.path_loss_db, ue.dpws.waveform, &ue.fading);
                let gamma = if gamma.is_finite() { gamma } else { GAMMA_FLOOR_DB };
                srs_gammas.push(gamma);
                if let WaveformPolicy::Dpws(cfg) = policy {
                    let from = ue.dpws.waveform;
                    let (next, switched) = on_srs(ue.dpws, cfg, gamma);
                    ue.dpws = next;
                    if switched {
                        switches.push(SwitchEvent {
                            ue_id: ue.id,
                            slot,
                            from,
                            to: next.waveform,
                        });
                    }
                }
            }
        }
        if ue.dpws.in_guard() {
            acc.guard_slots += 1;
            slot_rates.push(0.0);
            ue.dpws = on_slot(ue.dpws);
            continue;
        }
        let rate = link.slot_rate(
            ue.path_loss_db,
            ue.dpws.waveform,
            &ue.fading,
            &CODEBOOK[ue.precoder],
        );
        if rate.outage {
            acc.outage_slots += 1;
        } else {
            acc.throughput_slots += 1;
        }
        slot_rates.push(rate.bits_per_s);
    }

    let window_rates = slot_rates
        .chunks(ep.throughput_window_slots)
        .map(|w| w.iter().sum::<f64>() / w.len() as f64)
        .collect();
    let jitter = if ep.ta_jitter_percent > 0.0 {
        ue.measure_rng.random_range(-ep.ta_jitter_percent..=ep.ta_jitter_percent)
    } else {
        0.0
    };
    let ta_percent = (100.0 * ue.distance_m / ep.max_distance_m + jitter).max(0.0);
    UeStepResult {
        accounting: acc,
        window_rates,
        slot_rates,
        srs_gammas,
        ta_percent,
        switches,
    }
}

/// Advances every UE by one step of `slots_per_step` slots under `policy`
/// and aggregates the cell KPIs. UEs that never got a slot through are
/// left out of the throughput samples.
pub fn simulate_step(
    ues: &mut [UeContext],
    policy: &WaveformPolicy,
    ep: &EpisodeConfig,
    link: &LinkConfig,
) -> StepOutcome {
    let results: Vec<UeStepResult> = ues
        .par_iter_mut()
        .map(|ue| simulate_ue(ue, policy, ep, link))
        .collect();

    let mut snr_hist = Histogram12::snr();
    let mut ta_hist = Histogram12::ta();
    let mut gamma_sum = 0.0;
    let mut gamma_count = 0usize;
    let mut samples = Vec::new();
    for r in &results {
        if !r.srs_gammas.is_empty() {
            let mean = r.srs_gammas.iter().sum::<f64>() / r.srs_gammas.len() as f64;
            snr_hist.add(mean);
            gamma_sum += r.srs_gammas.iter().sum::<f64>();
            gamma_count += r.srs_gammas.len();
        }
        ta_hist.add(r.ta_percent);
        if r.accounting.throughput_slots > 0 {
            samples.extend_from_slice(&r.window_rates);
        }
    }
    let mean_gamma_db = if gamma_count > 0 {
        gamma_sum / gamma_count as f64
    } else {
        GAMMA_FLOOR_DB
    };
    let report = CellKpiReport {
        snr_hist,
        ta_hist,
        mean_gamma_db,
        throughput: throughput_percentiles(&samples).ok(),
    };
    StepOutcome {
        report,
        ues: results,
        samples,
    }
}

/// One logged switch with its place in the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SwitchRecord {
    pub episode: usize,
    pub step: usize,
    pub ue_id: usize,
    pub slot: usize,
    pub from: Waveform,
    pub to: Waveform,
}

/// KPI snapshot of one simulated step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub episode: usize,
    pub step: usize,
    pub zeta: f64,
    pub xi: f64,
    pub report: CellKpiReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainLogRow {
    pub episode: usize,
    pub step: usize,
    pub epsilon: f64,
    pub action: usize,
    pub zeta: f64,
    pub xi: f64,
    pub reward: Option<f64>,
    pub loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub network: QNetwork,
    pub log: Vec<TrainLogRow>,
    /// Mean reward of each episode over the steps that produced one.
    pub episode_rewards: Vec<f64>,
    pub steps: Vec<StepRecord>,
    pub switches: Vec<SwitchRecord>,
    pub max_buffer_len: usize,
}

fn record_switches(out: &StepOutcome, episode: usize, step: usize, into: &mut Vec<SwitchRecord>) {
    into.extend(out.switches().map(|e| SwitchRecord {
        episode,
        step,
        ue_id: e.ue_id,
        slot: e.slot,
        from: e.from,
        to: e.to,
    }));
}

/// Trains a fresh network for `cfg.run.train_episodes` episodes.
pub fn run_training(cfg: &SimConfig) -> Result<TrainingOutcome> {
    run_training_with(cfg, QNetwork::new(&mut rng::stream(cfg.run.seed, &[TAG_AGENT_INIT])))
}

pub fn run_training_with(cfg: &SimConfig, mut network: QNetwork) -> Result<TrainingOutcome> {
    cfg.validate()?;
    let seed = cfg.run.seed;
    let agent: &AgentConfig = &cfg.agent;
    let adam = agent.adam();
    let actions_per_episode = cfg.run.train_steps - 1;
    let schedule = EpsilonSchedule {
        start: agent.epsilon_start,
        end: agent.epsilon_min,
        decay_steps: cfg.run.train_episodes * actions_per_episode,
    };
    let mut policy_rng = rng::stream(seed, &[TAG_AGENT_POLICY]);
    let mut buffer = ReplayBuffer::new(agent.buffer_capacity);
    let mut outcome = TrainingOutcome {
        network: network.clone(),
        log: Vec::new(),
        episode_rewards: Vec::new(),
        steps: Vec::new(),
        switches: Vec::new(),
        max_buffer_len: 0,
    };
    let mut action_count = 0usize;

    for episode in 0..cfg.run.train_episodes {
        let mut ues = drop_ues(&cfg.episode, &cfg.link, seed, &[TAG_TRAIN, episode as u64])?;
        let (mut zeta, mut xi) = (cfg.dpws.zeta, cfg.dpws.xi);
        let out = simulate_step(&mut ues, &WaveformPolicy::Dpws(cfg.dpws), &cfg.episode, &cfg.link);
        record_switches(&out, episode, 0, &mut outcome.switches);
        let mut state = build_state(&out.report, zeta, xi)?;
        let mut prev_stats = out.report.throughput;
        outcome.steps.push(StepRecord { episode, step: 0, zeta, xi, report: out.report });
        let mut rewards = Vec::new();

        for step in 1..cfg.run.train_steps {
            let epsilon = schedule.value(action_count);
            action_count += 1;
            let action = select_action(&network, &state, epsilon, &mut policy_rng);
            (zeta, xi) = decode_action(action, zeta, xi, &agent.bounds);
            let dpws = cfg.dpws.with_thresholds(zeta, xi);
            let out = simulate_step(&mut ues, &WaveformPolicy::Dpws(dpws), &cfg.episode, &cfg.link);
            record_switches(&out, episode, step, &mut outcome.switches);
            let next_state = build_state(&out.report, zeta, xi)?;
            let cur_stats = out.report.throughput;
            let reward = match (&prev_stats, &cur_stats) {
                (Some(p), Some(c)) => Some(compute_reward(p, c, &agent.reward)),
                _ => None,
            };
            if let Some(r) = reward {
                rewards.push(r);
                buffer.push(Transition {
                    state: state.normalized(),
                    action: action.index(),
                    reward: r,
                    next_state: next_state.normalized(),
                });
            }
            outcome.max_buffer_len = outcome.max_buffer_len.max(buffer.len());
            let mut loss = None;
            for _ in 0..agent.updates_per_step {
                if let Some(l) =
                    train_step(&mut network, &buffer, agent.batch_size, agent.discount, &adam, &mut policy_rng)
                {
                    loss = Some(l);
                }
            }
            if !network.is_finite() {
                return Err(Error::invalid("network parameters diverged"));
            }
            outcome.log.push(TrainLogRow {
                episode,
                step,
                epsilon,
                action: action.index(),
                zeta,
                xi,
                reward,
                loss,
            });
            outcome.steps.push(StepRecord { episode, step, zeta, xi, report: out.report });
            state = next_state;
            prev_stats = cur_stats;
        }
        let mean = if rewards.is_empty() {
            0.0
        } else {
            rewards.iter().sum::<f64>() / rewards.len() as f64
        };
        log::info!("episode {episode}: mean reward {mean:.4}, buffer {}", buffer.len());
        outcome.episode_rewards.push(mean);
    }
    outcome.network = network;
    Ok(outcome)
}

/// Result of one evaluation or baseline episode.
#[derive(Debug, Clone)]
pub struct EpisodeTrace {
    pub episode: usize,
    pub steps: Vec<StepRecord>,
    pub switches: Vec<SwitchRecord>,
    /// Throughput samples of the final step.
    pub final_samples: Vec<f64>,
    /// Throughput samples of every step.
    pub all_samples: Vec<f64>,
    pub accounting: Vec<Vec<SlotAccounting>>,
}

#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub mode: RunMode,
    pub episodes: Vec<EpisodeTrace>,
}

impl EnsembleResult {
    /// Final-step samples pooled over episodes, in episode order.
    pub fn pooled_final(&self) -> Vec<f64> {
        self.episodes.iter().flat_map(|e| e.final_samples.iter().copied()).collect()
    }

    pub fn pooled_all(&self) -> Vec<f64> {
        self.episodes.iter().flat_map(|e| e.all_samples.iter().copied()).collect()
    }

    pub fn final_stats(&self) -> Result<ThroughputStats> {
        throughput_percentiles(&self.pooled_final())
    }

    pub fn all_stats(&self) -> Result<ThroughputStats> {
        throughput_percentiles(&self.pooled_all())
    }

    /// Quantile `q` of the pooled final-step samples.
    pub fn final_quantile(&self, q: f64) -> Result<f64> {
        let mut s = self.pooled_final();
        if s.is_empty() {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        s.sort_by(f64::total_cmp);
        Ok(quantile(&s, q))
    }
}

fn run_episode(
    cfg: &SimConfig,
    episode: usize,
    mode: RunMode,
    network: Option<&QNetwork>,
) -> Result<EpisodeTrace> {
    let seed = cfg.run.seed;
    let mut ues = drop_ues(&cfg.episode, &cfg.link, seed, &[mode.stream_tag(), episode as u64])?;
    let (mut zeta, mut xi) = (cfg.dpws.zeta, cfg.dpws.xi);
    let mut trace = EpisodeTrace {
        episode,
        steps: Vec::new(),
        switches: Vec::new(),
        final_samples: Vec::new(),
        all_samples: Vec::new(),
        accounting: Vec::new(),
    };
    for step in 0..cfg.run.eval_steps {
        if step > 0 {
            if let (Some(q), Some(prev)) = (network, trace.steps.last()) {
                let state = build_state(&prev.report, zeta, xi)?;
                let action = crate::agent::greedy_action(q, &state);
                (zeta, xi) = decode_action(action, zeta, xi, &cfg.agent.bounds);
            }
        }
        let policy = match mode.fixed_waveform() {
            Some(w) => WaveformPolicy::Fixed(w),
            None => WaveformPolicy::Dpws(cfg.dpws.with_thresholds(zeta, xi)),
        };
        let out = simulate_step(&mut ues, &policy, &cfg.episode, &cfg.link);
        record_switches(&out, episode, step, &mut trace.switches);
        trace.all_samples.extend_from_slice(&out.samples);
        trace.final_samples = out.samples.clone();
        trace.accounting.push(out.ues.iter().map(|u| u.accounting).collect());
        trace.steps.push(StepRecord { episode, step, zeta, xi, report: out.report });
    }
    Ok(trace)
}

/// Greedy evaluation of `network` (or fixed (zeta, xi) when `None`) over
/// `cfg.run.eval_episodes` independent drops, run in parallel.
pub fn run_evaluation(cfg: &SimConfig, network: Option<&QNetwork>) -> Result<EnsembleResult> {
    run_ensemble(cfg, RunMode::Evaluate, network)
}

/// Fixed-waveform baseline on the same drops and channels as evaluation.
pub fn run_baseline(cfg: &SimConfig, waveform: Waveform) -> Result<EnsembleResult> {
    let mode = match waveform {
        Waveform::CpOfdm => RunMode::BaselineCp,
        Waveform::DftSOfdm => RunMode::BaselineDfts,
    };
    run_ensemble(cfg, mode, None)
}

fn run_ensemble(cfg: &SimConfig, mode: RunMode, network: Option<&QNetwork>) -> Result<EnsembleResult> {
    cfg.validate()?;
    let episodes = (0..cfg.run.eval_episodes)
        .into_par_iter()
        .map(|e| run_episode(cfg, e, mode, network))
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleResult { mode, episodes })
}

/// One row of a throughput comparison between two runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub factor: String,
    pub value_a: f64,
    pub value_b: f64,
    pub relative_percent: f64,
    pub absolute_mbps: f64,
}

/// Gains of `a` over `b` per reward factor. Rates are in bits/s.
pub fn compare_stats(a: &ThroughputStats, b: &ThroughputStats) -> Vec<ComparisonRow> {
    FACTOR_LABELS
        .iter()
        .enumerate()
        .map(|(k, label)| {
            let (va, vb) = (a.values[k], b.values[k]);
            let relative_percent = if vb != 0.0 {
                100.0 * (va - vb) / vb
            } else if va == vb {
                0.0
            } else {
                f64::INFINITY
            };
            ComparisonRow {
                factor: label.to_string(),
                value_a: va,
                value_b: vb,
                relative_percent,
                absolute_mbps: (va - vb) / 1e6,
            }
        })
        .collect()
}
