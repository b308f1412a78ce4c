//! Three-level heuristic selection of the proximal parameter.
//!
//! Long-term gates decide whether the stage of the run permits a change,
//! middle-term counters demand a minimum number of consecutive steps of the
//! same kind before acting, and the short-term rule applies a multiplicative
//! update clamped to `[eta_min, eta_max]`. The baseline intent is the
//! conventional one: grow after serious steps, shrink after null steps.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EtaKind {
    Constant,
    Soft,
    Hard,
    Balancing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Serious,
    Null,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EtaConfig {
    pub kind: EtaKind,
    pub eta0: f64,
    pub eta_incr: f64,
    pub eta_decr: f64,
    pub eta_max: f64,
    pub eta_min: f64,
    /// Long-term comparison factor, usually 0.01.
    pub m_tilde: f64,
    /// Large reference parameter for predicted improvements and stopping.
    pub eta_star: f64,
    pub min_consec_ss: usize,
    pub min_consec_ns: usize,
}

impl EtaConfig {
    pub fn new(kind: EtaKind, eta0: f64) -> Self {
        EtaConfig {
            kind,
            eta0,
            ..EtaConfig::default()
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        let ok = self.eta_min > 0.0
            && self.eta_min <= self.eta0
            && self.eta0 <= self.eta_max
            && self.eta_incr > 1.0
            && self.eta_decr > 0.0
            && self.eta_decr < 1.0
            && (0.0..1.0).contains(&self.m_tilde)
            && self.eta_star > 0.0;
        if ok {
            Ok(())
        } else {
            Err(crate::Error::contract("invalid eta configuration"))
        }
    }
}

impl Default for EtaConfig {
    fn default() -> Self {
        EtaConfig {
            kind: EtaKind::Constant,
            eta0: 1.0,
            eta_incr: 1.1,
            eta_decr: 0.9,
            eta_max: 1e6,
            eta_min: 1e-6,
            m_tilde: 0.01,
            eta_star: 1e4,
            min_consec_ss: 2,
            min_consec_ns: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaState {
    pub eta: f64,
    /// Consecutive serious steps observed at an unchanged eta.
    pub consec_ss: usize,
    /// Consecutive null steps observed at an unchanged eta.
    pub consec_ns: usize,
}

impl EtaState {
    pub fn new(config: &EtaConfig) -> Self {
        EtaState {
            eta: config.eta0.clamp(config.eta_min, config.eta_max),
            consec_ss: 0,
            consec_ns: 0,
        }
    }
}

/// What the long-term strategy permits this iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gates {
    pub allow_increase: bool,
    pub allow_decrease: bool,
}

/// Long-term gate decisions from the master problem's predicted improvements.
///
/// - `constant`: never change.
/// - `soft`: after a null step, decreases are inhibited when `v* < m~ eps*`
///   (eta already small enough that the proximal prediction undercuts the
///   cutting-plane one).
/// - `hard`: increases are allowed even after null steps when `v* < m~ eps*`.
/// - `balancing`: keeps the quadratic and linear master terms comparable;
///   increases are inhibited after a serious step when `quad <= m~ lin`, and
///   decreases are inhibited when `m~ quad >= lin`.
pub fn long_term_gate(
    kind: EtaKind,
    v_star: f64,
    eps_star: f64,
    quad: f64,
    lin: f64,
    m_tilde: f64,
    outcome: StepOutcome,
) -> Gates {
    match kind {
        EtaKind::Constant => Gates {
            allow_increase: false,
            allow_decrease: false,
        },
        EtaKind::Soft => Gates {
            allow_increase: true,
            allow_decrease: !(outcome == StepOutcome::Null && v_star < m_tilde * eps_star),
        },
        EtaKind::Hard => Gates {
            allow_increase: outcome == StepOutcome::Serious || v_star < m_tilde * eps_star,
            allow_decrease: true,
        },
        EtaKind::Balancing => Gates {
            allow_increase: !(outcome == StepOutcome::Serious && quad <= m_tilde * lin),
            allow_decrease: !(m_tilde * quad >= lin),
        },
    }
}

/// Applies the middle- and short-term rules for one observed step.
///
/// Serious steps propose an increase, null steps a decrease. A change fires
/// only when the matching consecutive-step counter has reached its minimum
/// and the long-term gate permits it; the hard-kind increase granted after a
/// null step bypasses the counter. Counters reset when eta changes, and an
/// outcome flip resets the opposite counter.
pub fn update_eta(
    state: EtaState,
    config: &EtaConfig,
    outcome: StepOutcome,
    gates: Gates,
) -> EtaState {
    if config.kind == EtaKind::Constant {
        return state;
    }
    let mut next = state;
    match outcome {
        StepOutcome::Serious => {
            next.consec_ss += 1;
            next.consec_ns = 0;
        }
        StepOutcome::Null => {
            next.consec_ns += 1;
            next.consec_ss = 0;
        }
    }

    let mut eta = next.eta;
    match outcome {
        StepOutcome::Serious => {
            if gates.allow_increase && next.consec_ss >= config.min_consec_ss {
                eta = (next.eta * config.eta_incr).min(config.eta_max);
            }
        }
        StepOutcome::Null => {
            if config.kind == EtaKind::Hard && gates.allow_increase {
                eta = (next.eta * config.eta_incr).min(config.eta_max);
            } else if gates.allow_decrease && next.consec_ns >= config.min_consec_ns {
                eta = (next.eta * config.eta_decr).max(config.eta_min);
            }
        }
    }
    if eta != next.eta {
        next.eta = eta;
        next.consec_ss = 0;
        next.consec_ns = 0;
    }
    next
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_kind_never_moves() {
        let config = EtaConfig::new(EtaKind::Constant, 2.5);
        let mut state = EtaState::new(&config);
        for i in 0..50 {
            let outcome = if i % 3 == 0 {
                StepOutcome::Serious
            } else {
                StepOutcome::Null
            };
            let gates = long_term_gate(config.kind, 0.1, 100.0, 0.0, 1.0, 0.01, outcome);
            state = update_eta(state, &config, outcome, gates);
            assert_eq!(state.eta.to_bits(), 2.5f64.to_bits());
        }
    }

    #[test]
    fn soft_blocks_decrease_when_v_star_small() {
        let g = long_term_gate(EtaKind::Soft, 0.5, 100.0, 0.0, 0.0, 0.01, StepOutcome::Null);
        assert!(!g.allow_decrease);
        let g = long_term_gate(EtaKind::Soft, 5.0, 100.0, 0.0, 0.0, 0.01, StepOutcome::Null);
        assert!(g.allow_decrease);
        // Serious steps never block the decrease gate under soft.
        let g = long_term_gate(EtaKind::Soft, 0.5, 100.0, 0.0, 0.0, 0.01, StepOutcome::Serious);
        assert!(g.allow_decrease);
    }

    #[test]
    fn hard_allows_increase_after_null_when_v_star_small() {
        let g = long_term_gate(EtaKind::Hard, 0.5, 100.0, 0.0, 0.0, 0.01, StepOutcome::Null);
        assert!(g.allow_increase);
        let g = long_term_gate(EtaKind::Hard, 5.0, 100.0, 0.0, 0.0, 0.01, StepOutcome::Null);
        assert!(!g.allow_increase);
    }

    #[test]
    fn balancing_gates_follow_term_sizes() {
        // quad small vs lin: increase blocked after serious.
        let g = long_term_gate(
            EtaKind::Balancing,
            0.0,
            0.0,
            0.1,
            100.0,
            0.01,
            StepOutcome::Serious,
        );
        assert!(!g.allow_increase);
        assert!(g.allow_decrease); // m~*quad = 0.001 < lin, so decreases stay open
        let g2 = long_term_gate(
            EtaKind::Balancing,
            0.0,
            0.0,
            1000.0,
            0.5,
            0.01,
            StepOutcome::Serious,
        );
        assert!(g2.allow_increase);
        assert!(!g2.allow_decrease); // 0.01*1000 = 10 >= 0.5
    }

    #[test]
    fn increase_needs_two_consecutive_serious_steps() {
        let config = EtaConfig::new(EtaKind::Soft, 1.0);
        let gates = Gates {
            allow_increase: true,
            allow_decrease: true,
        };
        let s0 = EtaState::new(&config);
        let s1 = update_eta(s0, &config, StepOutcome::Serious, gates);
        assert_eq!(s1.eta, 1.0);
        assert_eq!(s1.consec_ss, 1);
        let s2 = update_eta(s1, &config, StepOutcome::Serious, gates);
        assert!((s2.eta - 1.1).abs() < 1e-12);
        assert_eq!(s2.consec_ss, 0); // counters reset with the change
    }

    #[test]
    fn outcome_flip_resets_the_opposite_counter() {
        let config = EtaConfig::new(EtaKind::Soft, 1.0);
        let gates = Gates {
            allow_increase: true,
            allow_decrease: true,
        };
        let s0 = EtaState::new(&config);
        let s1 = update_eta(s0, &config, StepOutcome::Serious, gates);
        let s2 = update_eta(s1, &config, StepOutcome::Null, gates);
        assert_eq!(s2.consec_ss, 0);
        assert_eq!(s2.consec_ns, 1);
        assert_eq!(s2.eta, 1.0);
    }

    #[test]
    fn hard_override_bypasses_counter_on_null() {
        let config = EtaConfig::new(EtaKind::Hard, 1.0);
        let gates = Gates {
            allow_increase: true, // the hard condition held
            allow_decrease: true,
        };
        let s0 = EtaState::new(&config);
        let s1 = update_eta(s0, &config, StepOutcome::Null, gates);
        assert!((s1.eta - 1.1).abs() < 1e-12);
    }

    #[test]
    fn eta_clamps_at_bounds() {
        let mut config = EtaConfig::new(EtaKind::Soft, 1.0);
        config.eta_max = 1.05;
        config.eta_min = 0.97;
        let gates = Gates {
            allow_increase: true,
            allow_decrease: true,
        };
        let mut state = EtaState::new(&config);
        for _ in 0..10 {
            state = update_eta(state, &config, StepOutcome::Serious, gates);
            assert!(state.eta <= 1.05);
        }
        assert_eq!(state.eta, 1.05);
        for _ in 0..10 {
            state = update_eta(state, &config, StepOutcome::Null, gates);
            assert!(state.eta >= 0.97);
        }
        assert_eq!(state.eta, 0.97);
    }

    #[test]
    fn gate_truth_table_matches_strategy_definitions() {
        let m_tilde = 0.01;
        // (v*, eps*) pairs placing v* below/above m~ * eps*.
        let below = (0.5, 100.0);
        let above = (5.0, 100.0);
        // (quad, lin) pairs for the balancing comparisons.
        for &outcome in &[StepOutcome::Serious, StepOutcome::Null] {
            for &(v, e) in &[below, above] {
                let small_v = v < m_tilde * e;

                let g = long_term_gate(EtaKind::Constant, v, e, 1.0, 1.0, m_tilde, outcome);
                assert!(!g.allow_increase && !g.allow_decrease);

                let g = long_term_gate(EtaKind::Soft, v, e, 1.0, 1.0, m_tilde, outcome);
                assert!(g.allow_increase);
                assert_eq!(
                    g.allow_decrease,
                    !(outcome == StepOutcome::Null && small_v)
                );

                let g = long_term_gate(EtaKind::Hard, v, e, 1.0, 1.0, m_tilde, outcome);
                assert!(g.allow_decrease);
                assert_eq!(
                    g.allow_increase,
                    outcome == StepOutcome::Serious || small_v
                );

                for &(quad, lin) in &[(0.1f64, 100.0f64), (1000.0, 0.5)] {
                    let g = long_term_gate(EtaKind::Balancing, v, e, quad, lin, m_tilde, outcome);
                    assert_eq!(
                        g.allow_increase,
                        !(outcome == StepOutcome::Serious && quad <= m_tilde * lin)
                    );
                    assert_eq!(g.allow_decrease, !(m_tilde * quad >= lin));
                }
            }
        }
    }
}
