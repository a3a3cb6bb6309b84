//! Per-UE dynamic port and waveform switching.
//!
//! Each SRS reception is checked against the waveform-dependent occasion
//! predicate (`gamma < zeta` on CP-OFDM, `gamma > zeta + xi` on
//! DFT-S-OFDM). `C` occasions inside a window of `T` receptions trigger a
//! switch, after which the UE is silent for `guard_slots` slots.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::waveform::Waveform;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpwsConfig {
    /// Threshold (dB).
    pub zeta: f64,
    /// Hysteresis (dB).
    pub xi: f64,
    /// Occasions needed to trigger a switch.
    pub counter: u32,
    /// Window length in SRS receptions.
    pub timer: u32,
    pub guard_slots: u32,
}

impl Default for DpwsConfig {
    fn default() -> Self {
        DpwsConfig {
            zeta: 0.0,
            xi: 5.0,
            counter: 4,
            timer: 10,
            guard_slots: 19,
        }
    }
}

impl DpwsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.xi.is_nan() || self.xi < 0.0 || self.zeta.is_nan() {
            return Err(Error::invalid(format!("hysteresis {} must be >= 0", self.xi)));
        }
        if self.counter == 0 {
            return Err(Error::invalid("counter C must be at least 1"));
        }
        if self.timer < self.counter {
            return Err(Error::invalid(format!(
                "timer T = {} below counter C = {}: switching would be unreachable",
                self.timer, self.counter
            )));
        }
        Ok(())
    }

    pub fn with_thresholds(&self, zeta: f64, xi: f64) -> Self {
        DpwsConfig { zeta, xi, ..*self }
    }

    pub fn is_occasion(&self, waveform: Waveform, gamma: f64) -> bool {
        match waveform {
            Waveform::CpOfdm => gamma < self.zeta,
            Waveform::DftSOfdm => gamma > self.zeta + self.xi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DpwsState {
    pub waveform: Waveform,
    pub counter: u32,
    pub timer: u32,
    pub guard_remaining: u32,
}

impl DpwsState {
    pub fn new(waveform: Waveform) -> Self {
        DpwsState {
            waveform,
            counter: 0,
            timer: 0,
            guard_remaining: 0,
        }
    }

    pub fn in_guard(&self) -> bool {
        self.guard_remaining > 0
    }
}

impl Default for DpwsState {
    fn default() -> Self {
        DpwsState::new(Waveform::CpOfdm)
    }
}

/// Processes one SRS reception with measured SNR `gamma`.
///
/// A failed occasion clears `c` and `t`, after which the timer still
/// advances for this reception. A triggered switch
/// restarts the machine from `c = t = 0`. Receptions during the guard are
/// dropped.
pub fn on_srs(state: DpwsState, cfg: &DpwsConfig, gamma: f64) -> (DpwsState, bool) {
    if state.in_guard() {
        return (state, false);
    }
    let mut s = state;
    if s.timer < cfg.timer {
        if cfg.is_occasion(s.waveform, gamma) {
            s.counter += 1;
        } else {
            s.counter = 0;
            s.timer = 0;
        }
        if s.counter >= cfg.counter {
            s.waveform = s.waveform.toggled();
            s.counter = 0;
            s.timer = 0;
            s.guard_remaining = cfg.guard_slots;
            return (s, true);
        }
        s.timer += 1;
    } else {
        s.counter = 0;
        s.timer = 0;
    }
    (s, false)
}

/// Advances the guard countdown by one slot.
pub fn on_slot(state: DpwsState) -> DpwsState {
    DpwsState {
        guard_remaining: state.guard_remaining.saturating_sub(1),
        ..state
    }
}

/// A triggered switch, as written to the run's event log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SwitchEvent {
    pub ue_id: usize,
    pub slot: usize,
    pub from: Waveform,
    pub to: Waveform,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(zeta: f64, xi: f64, c: u32, t: u32) -> DpwsConfig {
        DpwsConfig {
            zeta,
            xi,
            counter: c,
            timer: t,
            guard_slots: 19,
        }
    }

    /// Straight-line transcription of the switching rule, kept separate from
    /// `on_srs`. Returns the indices of the receptions that switched.
    fn reference_switch_times(start: Waveform, cfg: &DpwsConfig, gammas: &[f64]) -> Vec<usize> {
        let mut wf = start;
        let mut c = 0u32;
        let mut t = 0u32;
        let mut out = Vec::new();
        for (i, &g) in gammas.iter().enumerate() {
            if t < cfg.timer {
                let occ = (wf == Waveform::CpOfdm && g < cfg.zeta)
                    || (wf == Waveform::DftSOfdm && g > cfg.zeta + cfg.xi);
                if occ {
                    c += 1;
                } else {
                    c = 0;
                    t = 0;
                }
                if c >= cfg.counter {
                    wf = if wf == Waveform::CpOfdm {
                        Waveform::DftSOfdm
                    } else {
                        Waveform::CpOfdm
                    };
                    out.push(i);
                    c = 0;
                    t = 0;
                    continue;
                }
                t += 1;
            } else {
                c = 0;
                t = 0;
            }
        }
        out
    }

    fn fsm_switch_times(start: Waveform, cfg: &DpwsConfig, gammas: &[f64]) -> Vec<usize> {
        let mut s = DpwsState::new(start);
        let mut out = Vec::new();
        for (i, &g) in gammas.iter().enumerate() {
            let (next, switched) = on_srs(s, cfg, g);
            s = next;
            if switched {
                out.push(i);
                s.guard_remaining = 0;
            }
        }
        out
    }

    #[test]
    fn three_low_reports_switch_on_third() {
        let c = cfg(0.0, 5.0, 3, 8);
        let mut s = DpwsState::default();
        for i in 0..3 {
            let (next, switched) = on_srs(s, &c, -1.0);
            s = next;
            assert_eq!(switched, i == 2);
        }
        assert_eq!(s.waveform, Waveform::DftSOfdm);
        assert_eq!((s.counter, s.timer, s.guard_remaining), (0, 0, 19));
    }

    #[test]
    fn dead_zone_resets_and_never_switches() {
        let c = cfg(0.0, 5.0, 1, 8);
        let mut s = DpwsState::new(Waveform::DftSOfdm);
        for _ in 0..100 {
            let (next, switched) = on_srs(s, &c, 3.0);
            assert!(!switched);
            assert_eq!(next.counter, 0);
            s = next;
        }
        assert_eq!(s.waveform, Waveform::DftSOfdm);
    }

    #[test]
    fn equality_is_not_an_occasion() {
        let c = cfg(0.0, 5.0, 1, 4);
        assert!(!on_srs(DpwsState::default(), &c, 0.0).1);
        assert!(!on_srs(DpwsState::new(Waveform::DftSOfdm), &c, 5.0).1);
        assert!(on_srs(DpwsState::new(Waveform::DftSOfdm), &c, 5.0001).1);
    }

    #[test]
    fn timer_expiry_resets_without_evaluating() {
        let c = cfg(0.0, 5.0, 3, 3);
        // one miss puts t at 1, so the window is too short afterwards
        let seq = [1.0, -1.0, -1.0, -1.0];
        let mut s = DpwsState::default();
        let mut switched = false;
        for g in seq {
            let (n, sw) = on_srs(s, &c, g);
            s = n;
            switched |= sw;
        }
        assert!(!switched);
        assert_eq!((s.counter, s.timer), (0, 0));
    }

    #[test]
    fn srs_during_guard_is_dropped() {
        let c = cfg(0.0, 5.0, 1, 4);
        let s = DpwsState {
            guard_remaining: 3,
            ..DpwsState::default()
        };
        assert_eq!(on_srs(s, &c, -50.0), (s, false));
    }

    #[test]
    fn guard_countdown() {
        let s = DpwsState {
            guard_remaining: 19,
            ..DpwsState::default()
        };
        assert_eq!(on_slot(s).guard_remaining, 18);
        assert_eq!(on_slot(DpwsState::default()).guard_remaining, 0);
    }

    #[test]
    fn config_validation() {
        assert!(DpwsConfig::default().validate().is_ok());
        assert!(cfg(0.0, -1.0, 3, 8).validate().is_err());
        assert!(cfg(0.0, 1.0, 0, 8).validate().is_err());
        assert!(cfg(0.0, 1.0, 5, 4).validate().is_err());
    }

    #[test]
    fn matches_reference_on_random_traces() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..5_000 {
            let c: u32 = rng.random_range(1..=5);
            let t: u32 = rng.random_range(c..=5);
            let conf = cfg(rng.random_range(-3.0..3.0), rng.random_range(0.0..4.0), c, t);
            let start = if rng.random() { Waveform::CpOfdm } else { Waveform::DftSOfdm };
            let len = rng.random_range(1..60);
            let gammas: Vec<f64> = (0..len).map(|_| rng.random_range(-8.0..10.0)).collect();
            assert_eq!(
                fsm_switch_times(start, &conf, &gammas),
                reference_switch_times(start, &conf, &gammas)
            );
        }
    }

    /// Exhaustive check over small machines: for every trace of occasion /
    /// non-occasion outcomes, counters stay in range and consecutive switches
    /// are at least `C` receptions apart.
    #[test]
    fn exhaustive_state_space_safety() {
        for c in 1..=4u32 {
            for t in c..=4u32 {
                let conf = cfg(0.0, 1.0, c, t);
                for len in 1..=12usize {
                    for mask in 0u32..(1 << len) {
                        let mut s = DpwsState::default();
                        let mut last_switch: Option<usize> = None;
                        for i in 0..len {
                            let occasion = mask & (1 << i) != 0;
                            // pick gamma that realises the outcome on the current waveform
                            let gamma = match (s.waveform, occasion) {
                                (Waveform::CpOfdm, true) => -1.0,
                                (Waveform::CpOfdm, false) => 0.5,
                                (Waveform::DftSOfdm, true) => 2.0,
                                (Waveform::DftSOfdm, false) => 0.5,
                            };
                            let (n, switched) = on_srs(s, &conf, gamma);
                            s = n;
                            assert!(s.counter <= c && s.timer <= t);
                            if switched {
                                if let Some(prev) = last_switch {
                                    assert!(i - prev >= c as usize);
                                }
                                last_switch = Some(i);
                                s.guard_remaining = 0;
                            }
                        }
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn cp_above_threshold_never_switches(
            zeta in -10.0f64..10.0,
            offsets in prop::collection::vec(0.0f64..20.0, 1..200),
        ) {
            let c = cfg(zeta, 2.0, 1, 3);
            let mut s = DpwsState::default();
            for o in offsets {
                let (n, sw) = on_srs(s, &c, zeta + o);
                prop_assert!(!sw);
                s = n;
            }
        }

        #[test]
        fn dft_below_hysteresis_never_switches(
            zeta in -10.0f64..10.0,
            xi in 0.0f64..6.0,
            offsets in prop::collection::vec(0.0f64..20.0, 1..200),
        ) {
            let c = cfg(zeta, xi, 1, 3);
            let mut s = DpwsState::new(Waveform::DftSOfdm);
            for o in offsets {
                let (n, sw) = on_srs(s, &c, zeta + xi - o);
                prop_assert!(!sw);
                s = n;
            }
        }

        #[test]
        fn raising_zeta_never_delays_first_switch(
            gammas in prop::collection::vec(-10.0f64..10.0, 1..80),
            zeta in -5.0f64..5.0,
            raise in 0.0f64..5.0,
            c in 1u32..4,
        ) {
            // with the window as long as the trace, only consecutive occasions matter
            let t = 100;
            let first = |z: f64| fsm_switch_times(Waveform::CpOfdm, &cfg(z, 1.0, c, t), &gammas).first().copied();
            match (first(zeta), first(zeta + raise)) {
                (Some(lo), Some(hi)) => prop_assert!(hi <= lo),
                (Some(_), None) => prop_assert!(false, "higher threshold lost the switch"),
                _ => {}
            }
        }
    }
}
