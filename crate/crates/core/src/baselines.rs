//! Classical `(ε, δ)` composition and subsampling, used as reference points
//! for the RDP accountant.

use serde::{Deserialize, Serialize};

use crate::accountant::{CgfLedger, PrivacyParams};
use crate::error::{invalid, Error, Result};
use crate::mechanisms::RdpCurve;

/// Per-round guarantee repeated `rounds` times. When `gamma` is set the
/// per-round guarantee is first amplified by [`subsample_dp`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineQuery {
    pub per_round: PrivacyParams,
    pub rounds: u64,
    pub delta_slack: f64,
    pub gamma: Option<f64>,
}

impl BaselineQuery {
    fn effective_round(&self) -> Result<PrivacyParams> {
        if self.rounds == 0 {
            return Err(invalid("rounds", "must be at least 1"));
        }
        match self.gamma {
            Some(g) => subsample_dp(self.per_round.eps, self.per_round.delta, g),
            None => Ok(self.per_round),
        }
    }
}

/// `(kε, kδ)`, with `δ` clamped to 1.
pub fn naive_compose(q: &BaselineQuery) -> Result<PrivacyParams> {
    let r = q.effective_round()?;
    let k = q.rounds as f64;
    PrivacyParams::new(k * r.eps, (k * r.delta).min(1.0))
}

/// `(ε sqrt(2k ln(1/δ*)) + 2kε², kδ + δ*)`; requires `ε <= 1`.
pub fn strong_compose(q: &BaselineQuery) -> Result<PrivacyParams> {
    let r = q.effective_round()?;
    if r.eps > 1.0 {
        return Err(invalid("eps", format!("strong composition needs per-round eps <= 1, got {}", r.eps)));
    }
    if !(q.delta_slack > 0.0 && q.delta_slack < 1.0) {
        return Err(invalid("delta_slack", format!("{} must lie in (0, 1)", q.delta_slack)));
    }
    let k = q.rounds as f64;
    let eps = r.eps * (2.0 * k * (-q.delta_slack.ln())).sqrt() + 2.0 * k * r.eps * r.eps;
    PrivacyParams::new(eps, (k * r.delta + q.delta_slack).min(1.0))
}

/// Amplification of an `(ε, δ)` guarantee by subsampling a `γ` fraction:
/// `(log(1 + γ(e^ε - 1)), γδ)`.
pub fn subsample_dp(eps: f64, delta: f64, gamma: f64) -> Result<PrivacyParams> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(invalid("gamma", format!("{gamma} must lie in (0, 1]")));
    }
    if gamma == 1.0 {
        return PrivacyParams::new(eps, delta);
    }
    PrivacyParams::new((gamma * eps.exp_m1()).ln_1p(), gamma * delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineMethod {
    Naive,
    Strong,
}

/// Best total ε found by the calibration search, with the choice that
/// achieved it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibrated {
    pub eps: f64,
    pub delta: f64,
    /// Per-round `(ε̃, δ̃)` of the base mechanism before subsampling.
    pub per_round: PrivacyParams,
    /// Slack `δ*` given to strong composition (0 for naive).
    pub delta_slack: f64,
    pub method: BaselineMethod,
}

pub const CALIBRATION_CANDIDATES: usize = 40;

/// Calibrates a classical baseline for `rounds` subsampled runs of `base`
/// under a total budget `target_delta`.
///
/// Candidate per-round `δ̃` are log-spaced over
/// `[target/(10 γ k), target/(γ k)]`; each is turned into `ε̃` through the
/// base mechanism's own RDP curve, amplified with [`subsample_dp`] and then
/// composed. For the strong method `δ*` takes whatever budget is left, and
/// naive composition of the same candidate is also considered, so a single
/// round reduces to the amplified single-round conversion.
pub fn calibrated_baseline(
    base: &RdpCurve,
    gamma: f64,
    rounds: u64,
    target_delta: f64,
    method: BaselineMethod,
) -> Result<Calibrated> {
    if rounds == 0 {
        return Err(invalid("rounds", "must be at least 1"));
    }
    if !(target_delta > 0.0 && target_delta < 1.0) {
        return Err(invalid("target_delta", format!("{target_delta} must lie in (0, 1)")));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(invalid("gamma", format!("{gamma} must lie in (0, 1]")));
    }
    let single = CgfLedger::new().compose(base.clone(), 1)?;
    let k = rounds as f64;
    let top = target_delta / (gamma * k);
    let (lo, hi) = ((top / 10.0).ln(), top.ln());
    let mut best: Option<Calibrated> = None;
    for i in 0..CALIBRATION_CANDIDATES {
        let t = i as f64 / (CALIBRATION_CANDIDATES - 1) as f64;
        let delta_tilde = (lo + (hi - lo) * t).exp();
        if !(delta_tilde > 0.0 && delta_tilde < 1.0) {
            continue;
        }
        let eps_tilde = single.eps_from_delta(delta_tilde)?.eps;
        let per_round = PrivacyParams::new(eps_tilde, delta_tilde)?;
        let mut query = BaselineQuery {
            per_round,
            rounds,
            delta_slack: 0.0,
            gamma: Some(gamma),
        };
        let mut consider = |composed: PrivacyParams, slack: f64, m: BaselineMethod| {
            if composed.delta <= target_delta * (1.0 + 1e-12) && best.is_none_or(|b| composed.eps < b.eps) {
                best = Some(Calibrated {
                    eps: composed.eps,
                    delta: composed.delta,
                    per_round,
                    delta_slack: slack,
                    method: m,
                });
            }
        };
        consider(naive_compose(&query)?, 0.0, BaselineMethod::Naive);
        if method == BaselineMethod::Strong {
            let slack = target_delta - k * gamma * delta_tilde;
            if slack > 0.0 {
                query.delta_slack = slack;
                if let Ok(composed) = strong_compose(&query) {
                    consider(composed, slack, BaselineMethod::Strong);
                }
            }
        }
    }
    best.ok_or_else(|| {
        Error::Infeasible(format!(
            "no per-round delta in the calibration grid meets total delta {target_delta} over {rounds} rounds"
        ))
    })
}

/// Total ε of the calibrated strong-composition baseline.
pub fn calibrated_strong_baseline(base: &RdpCurve, gamma: f64, rounds: u64, target_delta: f64) -> Result<f64> {
    calibrated_baseline(base, gamma, rounds, target_delta, BaselineMethod::Strong).map(|c| c.eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::{gaussian_rdp, laplace_rdp_curve};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn query(eps: f64, delta: f64, rounds: u64, slack: f64) -> BaselineQuery {
        BaselineQuery {
            per_round: PrivacyParams::new(eps, delta).unwrap(),
            rounds,
            delta_slack: slack,
            gamma: None,
        }
    }

    #[test]
    fn naive_examples() {
        let p = naive_compose(&query(0.5, 1e-9, 3, 0.0)).unwrap();
        assert_relative_eq!(p.eps, 1.5);
        assert_relative_eq!(p.delta, 3e-9, max_relative = 1e-15);
        assert_eq!(naive_compose(&query(0.5, 1e-9, 1, 0.0)).unwrap(), PrivacyParams::new(0.5, 1e-9).unwrap());
        let p = naive_compose(&query(0.1, 0.0, 10, 0.0)).unwrap();
        assert_relative_eq!(p.eps, 1.0, max_relative = 1e-15);
        assert_eq!(p.delta, 0.0);
        assert!(naive_compose(&query(0.1, 0.0, 0, 0.0)).is_err());
        assert_eq!(naive_compose(&query(0.1, 0.3, 10, 0.0)).unwrap().delta, 1.0);
    }

    #[test]
    fn strong_examples() {
        let p = strong_compose(&query(0.1, 1e-6, 100, 1e-6)).unwrap();
        assert_relative_eq!(p.eps, 0.1 * (200.0 * 1e6f64.ln()).sqrt() + 2.0, max_relative = 1e-14);
        assert_relative_eq!(p.eps, 7.257, max_relative = 1e-4);
        assert_relative_eq!(p.delta, 1.01e-4, max_relative = 1e-12);
        assert!(strong_compose(&query(0.1, 1e-6, 0, 1e-6)).is_err());
        assert!(strong_compose(&query(1.5, 1e-6, 10, 1e-6)).is_err());
        let near_one = strong_compose(&query(0.1, 0.0, 100, 1.0 - 1e-15)).unwrap();
        assert!((near_one.eps - 2.0).abs() < 1e-5);
        let (s, n) = (strong_compose(&query(0.1, 0.0, 10_000, 1e-6)).unwrap(), naive_compose(&query(0.1, 0.0, 10_000, 1e-6)).unwrap());
        assert!(s.eps < n.eps);
    }

    #[test]
    fn subsample_examples() {
        assert_eq!(subsample_dp(0.7, 1e-5, 1.0).unwrap(), PrivacyParams::new(0.7, 1e-5).unwrap());
        assert_eq!(subsample_dp(0.0, 1e-5, 0.3).unwrap().eps, 0.0);
        let p = subsample_dp(0.5, 1e-6, 0.001).unwrap();
        assert_relative_eq!(p.eps, (0.001 * 0.5f64.exp_m1()).ln_1p(), max_relative = 1e-15);
        assert_relative_eq!(p.eps, 6.4847e-4, max_relative = 1e-4);
        assert_relative_eq!(p.delta, 1e-9, max_relative = 1e-15);
        assert!(subsample_dp(0.5, 0.1, 0.0).is_err());
    }

    #[test]
    fn calibrated_single_round_is_amplified_conversion() {
        let base = gaussian_rdp(5.0).unwrap();
        let c = calibrated_baseline(&base, 0.001, 1, 1e-8, BaselineMethod::Strong).unwrap();
        let direct = CgfLedger::new().compose(base, 1).unwrap().eps_from_delta(1e-5).unwrap().eps;
        assert_relative_eq!(c.eps, subsample_dp(direct, 1e-5, 0.001).unwrap().eps, max_relative = 1e-9);
        assert_eq!(c.method, BaselineMethod::Naive);
        assert!(c.delta <= 1e-8 * (1.0 + 1e-12));
    }

    #[test]
    fn calibrated_is_monotone_in_rounds() {
        let base = laplace_rdp_curve(2.0).unwrap();
        let mut prev = 0.0;
        for k in [1u64, 10, 100, 1000, 10_000, 100_000] {
            let e = calibrated_strong_baseline(&base, 0.001, k, 1e-8).unwrap();
            assert!(e >= prev);
            prev = e;
        }
    }

    #[test]
    fn calibrated_rejects_bad_input() {
        let base = gaussian_rdp(5.0).unwrap();
        assert!(calibrated_baseline(&base, 0.001, 0, 1e-8, BaselineMethod::Naive).is_err());
        assert!(calibrated_baseline(&base, 0.001, 10, 0.0, BaselineMethod::Naive).is_err());
    }

    proptest! {
        #[test]
        fn subsample_bracket(eps in 0.0f64..5.0, gamma in 1e-4f64..1.0) {
            let x = gamma * eps.exp_m1();
            let e = subsample_dp(eps, 0.0, gamma).unwrap().eps;
            prop_assert!(e <= x * (1.0 + 1e-15));
            prop_assert!(e >= x / (1.0 + x) * (1.0 - 1e-15));
        }

        #[test]
        fn deltas_stay_in_unit_interval(eps in 0.0f64..1.0, delta in 0.0f64..1.0, k in 1u64..1000, slack in 1e-9f64..0.9) {
            let q = query(eps, delta, k, slack);
            let n = naive_compose(&q).unwrap();
            let s = strong_compose(&q).unwrap();
            prop_assert!((0.0..=1.0).contains(&n.delta) && (0.0..=1.0).contains(&s.delta));
        }
    }
}
