// Copyright 2026 The culvertd Authors
// SPDX-License-Identifier: Apache-2.0

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::QuantError;
use crate::orchestrator::BudgetSpec;

/// A candidate deployment configuration with its measured costs.
///
/// Units: `param_count` is a raw count of (trainable/adapted) parameters,
/// `latency_s` seconds per summary, `memory_gb` gigabytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub name: String,
    pub param_count: f64,
    pub latency_s: f64,
    pub memory_gb: f64,
    pub nlg_loss: f64,
    #[serde(default)]
    pub quality_ratio: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ObjectiveWeights {
    pub lambda_p: f64,
    pub lambda_t: f64,
    pub lambda_m: f64,
}

/// Token cross-entropy `-Σ ln p_t`.
pub fn nlg_loss(token_probs: &[f64]) -> Result<f64, QuantError> {
    token_probs.iter().try_fold(0.0, |acc, p| {
        if !(*p > 0.0 && *p <= 1.0) {
            return Err(QuantError::InvalidProbability(*p));
        }
        Ok(acc - p.ln())
    })
}

/// `L_NLG + λ_P·P + λ_T·T + λ_M·M`.
pub fn total_objective(cfg: &ModelConfig, w: &ObjectiveWeights) -> f64 {
    cfg.nlg_loss + w.lambda_p * cfg.param_count + w.lambda_t * cfg.latency_s + w.lambda_m * cfg.memory_gb
}

/// Strict `T < T_max`, `M < M_max`, `P < P_max`.
pub fn is_feasible(cfg: &ModelConfig, budgets: &BudgetSpec) -> bool {
    cfg.latency_s < budgets.t_max_s && cfg.memory_gb < budgets.m_max_gb && cfg.param_count < budgets.p_max
}

/// Minimizes the objective over feasible candidates.
/// Ties go to the lower latency, then the lexicographically smaller name.
pub fn select_configuration<'a>(
    candidates: &'a [ModelConfig],
    budgets: &BudgetSpec,
    w: &ObjectiveWeights,
) -> Result<&'a ModelConfig, QuantError> {
    if candidates.is_empty() {
        return Err(QuantError::EmptyCandidates);
    }
    candidates
        .iter()
        .filter(|c| is_feasible(c, budgets))
        .min_by(|a, b| {
            total_objective(a, w)
                .partial_cmp(&total_objective(b, w))
                .unwrap_or(Ordering::Equal)
                .then(a.latency_s.total_cmp(&b.latency_s))
                .then_with(|| a.name.cmp(&b.name))
        })
        .ok_or(QuantError::NoFeasibleCandidate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(name: &str, t: f64, m: f64) -> ModelConfig {
        ModelConfig { name: name.into(), param_count: 67e6, latency_s: t, memory_gb: m, nlg_loss: 1.0, quality_ratio: None }
    }

    #[test]
    fn loss_examples() {
        assert_eq!(nlg_loss(&[1.0, 1.0, 1.0]).unwrap(), 0.0);
        assert!((nlg_loss(&[0.5, 0.5]).unwrap() - 2.0 * 2f64.ln()).abs() < 1e-12);
        assert!((nlg_loss(&[1.0, (-3f64).exp()]).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(nlg_loss(&[0.0]), Err(QuantError::InvalidProbability(0.0)));
        assert_eq!(nlg_loss(&[1.5]), Err(QuantError::InvalidProbability(1.5)));
        assert_eq!(nlg_loss(&[]).unwrap(), 0.0);
    }

    #[test]
    fn objective_examples() {
        let c = cfg("int8", 2.3, 4.2);
        assert_eq!(total_objective(&c, &ObjectiveWeights::default()), 1.0);
        let w = ObjectiveWeights { lambda_p: 1e-8, lambda_t: 0.1, lambda_m: 0.01 };
        assert!((total_objective(&c, &w) - 1.942).abs() < 1e-12);
        let w2 = ObjectiveWeights { lambda_p: 2e-8, lambda_t: 0.2, lambda_m: 0.02 };
        assert!(((total_objective(&c, &w2) - 1.0) - 2.0 * (total_objective(&c, &w) - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn selection() {
        let b = BudgetSpec::default();
        let rows = vec![cfg("Full Precision", 8.7, 12.4), cfg("FP16 Quantized", 4.1, 6.2), cfg("INT8 + TensorRT", 2.3, 4.2)];
        assert!(!is_feasible(&rows[0], &b));
        let w = ObjectiveWeights { lambda_t: 1.0, ..Default::default() };
        assert_eq!(select_configuration(&rows, &b, &w).unwrap().name, "INT8 + TensorRT");
        // single feasible candidate wins regardless of weights
        let w = ObjectiveWeights { lambda_p: 5.0, lambda_t: 0.0, lambda_m: 100.0 };
        assert_eq!(select_configuration(&rows[..2], &b, &w).unwrap().name, "FP16 Quantized");
        assert_eq!(select_configuration(&rows[..1], &b, &w), Err(QuantError::NoFeasibleCandidate));
        assert_eq!(select_configuration(&[], &b, &w), Err(QuantError::EmptyCandidates));
    }

    #[test]
    fn ties_break_on_latency_then_name() {
        let b = BudgetSpec::default();
        let w = ObjectiveWeights::default();
        let rows = vec![cfg("b", 3.0, 1.0), cfg("a", 3.0, 1.0), cfg("c", 2.0, 1.0)];
        assert_eq!(select_configuration(&rows, &b, &w).unwrap().name, "c");
        assert_eq!(select_configuration(&rows[..2], &b, &w).unwrap().name, "a");
    }

    fn arb_cfg() -> impl Strategy<Value = ModelConfig> {
        (0u32..1000, 0.0f64..1.5e8, 0.0f64..10.0, 0.0f64..16.0, 0.0f64..5.0).prop_map(|(id, p, t, m, l)| ModelConfig {
            name: format!("c{id}"),
            param_count: p,
            latency_s: t,
            memory_gb: m,
            nlg_loss: l,
            quality_ratio: None,
        })
    }

    proptest! {
        #[test]
        fn objective_monotone(c in arb_cfg(), dp in 0.0f64..1e7, dt in 0.0f64..3.0, dm in 0.0f64..3.0,
                              lp in 1e-9f64..1e-6, lt in 1e-3f64..1.0, lm in 1e-3f64..1.0) {
            let w = ObjectiveWeights { lambda_p: lp, lambda_t: lt, lambda_m: lm };
            let base = total_objective(&c, &w);
            let mut c2 = c.clone();
            c2.param_count += dp;
            prop_assert!(total_objective(&c2, &w) >= base);
            let mut c3 = c.clone();
            c3.latency_s += dt;
            prop_assert!(total_objective(&c3, &w) >= base);
            let mut c4 = c.clone();
            c4.memory_gb += dm;
            prop_assert!(total_objective(&c4, &w) >= base);
        }

        #[test]
        fn selection_is_feasible_and_stable(cands in proptest::collection::vec(arb_cfg(), 1..12),
                                            lt in 0.0f64..1.0, lm in 0.0f64..1.0) {
            let b = BudgetSpec::default();
            let w = ObjectiveWeights { lambda_p: 1e-8, lambda_t: lt, lambda_m: lm };
            if let Ok(sel) = select_configuration(&cands, &b, &w) {
                prop_assert!(is_feasible(sel, &b));
                let sel = sel.clone();
                for i in 0..cands.len() {
                    if cands[i] == sel { continue; }
                    let mut fewer = cands.clone();
                    fewer.remove(i);
                    prop_assert_eq!(select_configuration(&fewer, &b, &w).unwrap(), &sel);
                }
            }
        }
    }
}
