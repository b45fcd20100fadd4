//! Base mechanisms and their RDP curves `ε(α)`.
//!
//! All constructors assume sensitivity 1; callers rescale noise parameters
//! (e.g. `σ / S_f`) before building a curve.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fmt::sig12;
use crate::numerics::log_add_exp;

/// Step used for the numerical right-limit `α → 1⁺`.
const KL_STEP: f64 = 1e-7;

/// A nondecreasing function of the radius `κ`, as used by the exponential
/// family bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum KappaFn {
    Constant { value: f64 },
    Affine { intercept: f64, slope: f64 },
    /// `+∞` everywhere; disables the corresponding branch.
    Unbounded,
}

impl KappaFn {
    pub fn at(&self, kappa: f64) -> f64 {
        match *self {
            KappaFn::Constant { value } => value,
            KappaFn::Affine { intercept, slope } => intercept + slope * kappa,
            KappaFn::Unbounded => f64::INFINITY,
        }
    }

    fn validate(&self, name: &'static str) -> Result<()> {
        match *self {
            KappaFn::Constant { value } if value.is_nan() || value < 0.0 => {
                Err(invalid(name, format!("constant {value} must be non-negative")))
            }
            KappaFn::Affine { intercept, slope }
                if !(intercept.is_finite() && slope.is_finite()) || slope < 0.0 || intercept < 0.0 =>
            {
                Err(invalid(name, "affine parameters must be finite, non-negative"))
            }
            _ => Ok(()),
        }
    }

    fn describe(&self) -> String {
        match *self {
            KappaFn::Constant { value } => sig12(value),
            KappaFn::Affine { intercept, slope } => format!("{}+{}k", sig12(intercept), sig12(slope)),
            KappaFn::Unbounded => "inf".into(),
        }
    }
}

fn default_improved() -> bool {
    true
}

/// JSON-facing description of a base mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Mechanism {
    Gaussian {
        sigma: f64,
    },
    Laplace {
        b: f64,
    },
    #[serde(rename = "randresp")]
    RandResp {
        p: f64,
    },
    #[serde(rename = "puredp")]
    PureDp {
        eps: f64,
    },
    /// Exponential-family mechanism with parameter distance `delta`,
    /// Lipschitz function `b`, smoothness function `l` and radius `kappa_max`.
    #[serde(rename = "expfamily")]
    ExpFamily {
        delta: f64,
        b: KappaFn,
        l: KappaFn,
        kappa_max: f64,
        /// Use `[B((α-1)Δ) + B(Δ)]Δ` instead of `2B(αΔ)Δ`.
        #[serde(default = "default_improved")]
        improved: bool,
    },
}

impl Mechanism {
    pub fn name(&self) -> &'static str {
        match self {
            Mechanism::Gaussian { .. } => "gaussian",
            Mechanism::Laplace { .. } => "laplace",
            Mechanism::RandResp { .. } => "randresp",
            Mechanism::PureDp { .. } => "puredp",
            Mechanism::ExpFamily { .. } => "expfamily",
        }
    }

    /// Canonical name plus parameters rounded to 12 significant digits.
    pub fn identity(&self) -> String {
        match self {
            Mechanism::Gaussian { sigma } => format!("gaussian(sigma={})", sig12(*sigma)),
            Mechanism::Laplace { b } => format!("laplace(b={})", sig12(*b)),
            Mechanism::RandResp { p } => format!("randresp(p={})", sig12(*p)),
            Mechanism::PureDp { eps } => format!("puredp(eps={})", sig12(*eps)),
            Mechanism::ExpFamily {
                delta,
                b,
                l,
                kappa_max,
                improved,
            } => format!(
                "expfamily(delta={},b={},l={},kappa_max={},improved={})",
                sig12(*delta),
                b.describe(),
                l.describe(),
                sig12(*kappa_max),
                improved
            ),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Mechanism::Gaussian { sigma } if !(sigma > 0.0 && sigma.is_finite()) => {
                Err(invalid("sigma", format!("{sigma} must be positive and finite")))
            }
            Mechanism::Laplace { b } if !(b > 0.0 && b.is_finite()) => {
                Err(invalid("b", format!("{b} must be positive and finite")))
            }
            Mechanism::RandResp { p } if !(p > 0.0 && p < 1.0) => {
                Err(invalid("p", format!("{p} must lie in (0, 1)")))
            }
            Mechanism::PureDp { eps } if !(eps >= 0.0 && eps.is_finite()) => {
                Err(invalid("eps", format!("{eps} must be non-negative and finite")))
            }
            Mechanism::ExpFamily {
                delta,
                ref b,
                ref l,
                kappa_max,
                ..
            } => {
                if !(delta >= 0.0 && delta.is_finite()) {
                    return Err(invalid("delta", format!("{delta} must be non-negative and finite")));
                }
                if !(kappa_max > 0.0) || kappa_max < delta {
                    return Err(invalid(
                        "kappa_max",
                        format!("{kappa_max} must be positive and at least delta = {delta}"),
                    ));
                }
                b.validate("b")?;
                l.validate("l")
            }
            _ => Ok(()),
        }
    }

    /// Builds the RDP curve, validating parameters.
    pub fn curve(&self) -> Result<RdpCurve> {
        self.validate()?;
        let (eps_inf, tight) = match *self {
            Mechanism::Gaussian { .. } => (f64::INFINITY, true),
            Mechanism::Laplace { b } => (1.0 / b, true),
            Mechanism::RandResp { p } => ((p / (1.0 - p)).ln().abs(), true),
            Mechanism::PureDp { eps } => (eps, false),
            Mechanism::ExpFamily { delta, .. } => (if delta == 0.0 { 0.0 } else { f64::INFINITY }, false),
        };
        let mut curve = RdpCurve {
            identity: self.identity(),
            source: Source::Mechanism(self.clone()),
            eps_inf,
            eps_kl: None,
            is_tight: tight,
            is_self_consistent: tight,
        };
        curve.eps_kl = Some(match *self {
            Mechanism::Gaussian { sigma } => 1.0 / (2.0 * sigma * sigma),
            Mechanism::PureDp { eps } => eps,
            _ => right_limit_at_one(|a| curve.eval(a)),
        });
        Ok(curve)
    }

    fn eval(&self, alpha: f64) -> f64 {
        let eps = match *self {
            Mechanism::Gaussian { sigma } => alpha / (2.0 * sigma * sigma),
            Mechanism::Laplace { b } => laplace_rdp(b, alpha),
            Mechanism::RandResp { p } => randresp_rdp(p, alpha),
            Mechanism::PureDp { eps } => eps,
            Mechanism::ExpFamily {
                delta,
                ref b,
                ref l,
                kappa_max,
                improved,
            } => expfamily_rdp(delta, b, l, kappa_max, improved, alpha),
        };
        eps.max(0.0)
    }
}

fn laplace_rdp(b: f64, alpha: f64) -> f64 {
    if alpha == f64::INFINITY {
        return 1.0 / b;
    }
    let denom = 2.0 * alpha - 1.0;
    let (w_up, w_down) = (alpha / denom, (alpha - 1.0) / denom);
    let inner = if (alpha - 1.0) / b <= 1.0 {
        // Expanded around 1 so that α → 1⁺ keeps full precision.
        (w_up * ((alpha - 1.0) / b).exp_m1() + w_down * (-alpha / b).exp_m1()).ln_1p()
    } else {
        log_add_exp(w_up.ln() + (alpha - 1.0) / b, w_down.ln() - alpha / b)
    };
    inner / (alpha - 1.0)
}

fn randresp_rdp(p: f64, alpha: f64) -> f64 {
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    if alpha == f64::INFINITY {
        return (lp - lq).abs();
    }
    // p (p/q)^{α-1} + q (q/p)^{α-1}
    let x = (alpha - 1.0) * (lp - lq);
    let inner = if x.abs() <= 1.0 {
        (p * x.exp_m1() + (1.0 - p) * (-x).exp_m1()).ln_1p()
    } else {
        log_add_exp(lp + x, lq - x)
    };
    inner / (alpha - 1.0)
}

fn expfamily_rdp(delta: f64, b: &KappaFn, l: &KappaFn, kappa_max: f64, improved: bool, alpha: f64) -> f64 {
    if delta == 0.0 {
        return 0.0;
    }
    if alpha > kappa_max / delta + 1.0 {
        return f64::INFINITY;
    }
    // B and L are nondecreasing, so the smallest feasible radius is optimal.
    let kappa = (alpha * delta).min(kappa_max);
    let smooth = alpha * l.at(kappa) * delta * delta / 2.0;
    let lipschitz = if improved {
        (b.at(((alpha - 1.0) * delta).min(kappa_max)) + b.at(delta)) * delta
    } else {
        2.0 * b.at(kappa) * delta
    };
    smooth.min(lipschitz)
}

/// Richardson-refined limit of `f(α)` as `α → 1⁺`.
fn right_limit_at_one(f: impl Fn(f64) -> f64) -> f64 {
    let coarse = f(1.0 + KL_STEP);
    let fine = f(1.0 + KL_STEP / 2.0);
    (2.0 * fine - coarse).max(0.0)
}

type CustomEval = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Source {
    Mechanism(Mechanism),
    Custom(CustomEval),
}

/// A mechanism's RDP parameter as a function of the order `α ∈ (1, ∞]`.
///
/// Immutable once built; cheap to clone and safe to evaluate from many
/// threads.
#[derive(Clone)]
pub struct RdpCurve {
    identity: String,
    source: Source,
    eps_inf: f64,
    eps_kl: Option<f64>,
    is_tight: bool,
    is_self_consistent: bool,
}

impl fmt::Debug for RdpCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RdpCurve")
            .field("identity", &self.identity)
            .field("eps_inf", &self.eps_inf)
            .field("eps_kl", &self.eps_kl)
            .field("is_tight", &self.is_tight)
            .field("is_self_consistent", &self.is_self_consistent)
            .finish()
    }
}

impl RdpCurve {
    /// Wraps an arbitrary evaluator. The caller vouches that `eval` is a valid
    /// RDP bound with pure-DP level `eps_inf`; the curve is marked neither tight
    /// nor self-consistent.
    pub fn custom<F>(name: impl Into<String>, eval: F, eps_inf: f64) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            identity: name.into(),
            source: Source::Custom(Arc::new(eval)),
            eps_inf,
            eps_kl: None,
            is_tight: false,
            is_self_consistent: false,
        }
    }

    /// Overrides the tightness flags of a custom curve.
    pub fn with_flags(mut self, tight: bool, self_consistent: bool) -> Self {
        self.is_tight = tight;
        self.is_self_consistent = self_consistent;
        self
    }

    /// `ε(α)`. At `α = ∞` this is the pure-DP level; at `α <= 1` the KL level
    /// (zero when unknown).
    pub fn eval(&self, alpha: f64) -> f64 {
        if alpha == f64::INFINITY {
            return self.eps_inf;
        }
        if alpha <= 1.0 {
            return self.eps_kl.unwrap_or(0.0);
        }
        match &self.source {
            Source::Mechanism(m) => m.eval(alpha),
            Source::Custom(f) => f(alpha),
        }
    }

    /// `K(λ) = λ ε(λ + 1)`.
    pub fn cgf(&self, lambda: f64) -> f64 {
        if lambda <= 0.0 {
            return 0.0;
        }
        lambda * self.eval(lambda + 1.0)
    }

    pub fn eps_inf(&self) -> f64 {
        self.eps_inf
    }

    pub fn eps_kl(&self) -> Option<f64> {
        self.eps_kl
    }

    pub fn is_tight(&self) -> bool {
        self.is_tight
    }

    pub fn is_self_consistent(&self) -> bool {
        self.is_self_consistent
    }

    pub fn identity(&self) -> &str {
        &self.identity
    }

    /// The serializable description, if this curve came from one.
    pub fn mechanism(&self) -> Option<&Mechanism> {
        match &self.source {
            Source::Mechanism(m) => Some(m),
            Source::Custom(_) => None,
        }
    }
}

pub fn gaussian_rdp(sigma: f64) -> Result<RdpCurve> {
    Mechanism::Gaussian { sigma }.curve()
}

pub fn laplace_rdp_curve(b: f64) -> Result<RdpCurve> {
    Mechanism::Laplace { b }.curve()
}

pub fn randresp_rdp_curve(p: f64) -> Result<RdpCurve> {
    Mechanism::RandResp { p }.curve()
}

pub fn pure_dp_rdp(eps: f64) -> Result<RdpCurve> {
    Mechanism::PureDp { eps }.curve()
}

pub fn expfamily_rdp_curve(delta: f64, b: KappaFn, l: KappaFn, kappa_max: f64) -> Result<RdpCurve> {
    Mechanism::ExpFamily {
        delta,
        b,
        l,
        kappa_max,
        improved: true,
    }
    .curve()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn catalog() -> Vec<RdpCurve> {
        vec![
            gaussian_rdp(1.0).unwrap(),
            gaussian_rdp(5.0).unwrap(),
            gaussian_rdp(0.5).unwrap(),
            laplace_rdp_curve(0.5).unwrap(),
            laplace_rdp_curve(2.0).unwrap(),
            randresp_rdp_curve(0.6).unwrap(),
            randresp_rdp_curve(0.9).unwrap(),
            pure_dp_rdp(0.5).unwrap(),
            expfamily_rdp_curve(
                1.0,
                KappaFn::Affine { intercept: 0.5, slope: 0.1 },
                KappaFn::Constant { value: 0.2 },
                100.0,
            )
            .unwrap(),
        ]
    }

    #[test]
    fn gaussian_examples() {
        let g5 = gaussian_rdp(5.0).unwrap();
        assert_relative_eq!(g5.eval(2.0), 0.04, max_relative = 1e-15);
        assert_eq!(gaussian_rdp(1.0).unwrap().eval(2.0), 1.0);
        assert_eq!(g5.eval(f64::INFINITY), f64::INFINITY);
        assert_eq!(g5.eps_kl(), Some(0.02));
        assert!(g5.is_tight() && g5.is_self_consistent());
        assert!(gaussian_rdp(0.0).is_err());
        assert!(gaussian_rdp(-1.0).is_err());
    }

    #[test]
    fn gaussian_is_exactly_linear() {
        let sigma = 3.7;
        let g = gaussian_rdp(sigma).unwrap();
        for alpha in [1.5, 2.0, 17.0, 1234.5] {
            assert_relative_eq!(g.eval(alpha) * 2.0 * sigma * sigma, alpha, max_relative = 1e-15);
        }
    }

    #[test]
    fn laplace_examples() {
        let l2 = laplace_rdp_curve(2.0).unwrap();
        let expected = ((2.0 / 3.0) * 0.5f64.exp() + (1.0 / 3.0) * (-1.0f64).exp()).ln();
        assert_relative_eq!(l2.eval(2.0), expected, max_relative = 1e-14);
        assert_relative_eq!(expected, 0.200_30, max_relative = 1e-4);
        assert_eq!(laplace_rdp_curve(0.5).unwrap().eps_inf(), 2.0);
        assert!(laplace_rdp_curve(0.0).is_err());
    }

    #[test]
    fn laplace_alpha_two_specialisation() {
        for b in [0.3f64, 0.5, 1.0, 2.0, 7.0] {
            let special = ((2.0 / 3.0) * (1.0 / b).exp() + (1.0 / 3.0) * (-2.0 / b).exp()).ln();
            assert_relative_eq!(laplace_rdp_curve(b).unwrap().eval(2.0), special, max_relative = 1e-12);
        }
    }

    #[test]
    fn laplace_near_one_approaches_kl() {
        let b: f64 = 2.0;
        let kl = 1.0 / b + (-1.0 / b).exp() - 1.0;
        let l = laplace_rdp_curve(b).unwrap();
        let near = l.eval(1.000_000_1);
        assert!(near.is_finite());
        assert!((near - kl).abs() < 1e-3);
        assert_relative_eq!(l.eps_kl().unwrap(), kl, max_relative = 1e-6);
    }

    #[test]
    fn randresp_examples() {
        let r = randresp_rdp_curve(0.6).unwrap();
        let expected = (0.36 / 0.4 + 0.16 / 0.6f64).ln();
        assert_relative_eq!(r.eval(2.0), expected, max_relative = 1e-13);
        assert_relative_eq!(expected, 0.154_15, max_relative = 1e-4);
        let half = randresp_rdp_curve(0.5).unwrap();
        for alpha in [1.1, 2.0, 50.0] {
            assert!(half.eval(alpha).abs() < 1e-15);
        }
        assert_relative_eq!(randresp_rdp_curve(0.9).unwrap().eps_inf(), 9f64.ln(), max_relative = 1e-15);
        assert!(randresp_rdp_curve(1.0).is_err());
        assert!(randresp_rdp_curve(0.0).is_err());
        // Stays finite at very high order where p^α underflows.
        assert_relative_eq!(r.eval(1e6), 1.5f64.ln(), max_relative = 1e-5);
    }

    #[test]
    fn randresp_kl_limit() {
        let p: f64 = 0.6;
        let kl = p * (p / (1.0 - p)).ln() + (1.0 - p) * ((1.0 - p) / p).ln();
        assert_relative_eq!(randresp_rdp_curve(p).unwrap().eps_kl().unwrap(), kl, max_relative = 1e-6);
    }

    #[test]
    fn pure_dp_examples() {
        assert_eq!(pure_dp_rdp(0.0).unwrap().eval(5.0), 0.0);
        assert_eq!(pure_dp_rdp(0.5).unwrap().eval(10.0), 0.5);
        assert_eq!(pure_dp_rdp(2.0).unwrap().eval(f64::INFINITY), 2.0);
        assert!(pure_dp_rdp(-0.1).is_err());
    }

    #[test]
    fn expfamily_examples() {
        let sigma: f64 = 2.0;
        let gauss_like = expfamily_rdp_curve(
            1.0,
            KappaFn::Unbounded,
            KappaFn::Constant { value: 1.0 / (sigma * sigma) },
            50.0,
        )
        .unwrap();
        for alpha in [1.5, 2.0, 10.0, 51.0] {
            assert_relative_eq!(gauss_like.eval(alpha), alpha / (2.0 * sigma * sigma), max_relative = 1e-15);
        }
        assert_eq!(gauss_like.eval(51.5), f64::INFINITY);

        let zero = expfamily_rdp_curve(0.0, KappaFn::Constant { value: 3.0 }, KappaFn::Constant { value: 3.0 }, 1.0)
            .unwrap();
        assert_eq!(zero.eval(7.0), 0.0);

        let lipschitz = expfamily_rdp_curve(1.0, KappaFn::Constant { value: 0.25 }, KappaFn::Unbounded, 10.0).unwrap();
        assert_eq!(lipschitz.eval(2.0), 0.5);

        assert!(expfamily_rdp_curve(2.0, KappaFn::Unbounded, KappaFn::Unbounded, 1.0).is_err());
    }

    #[test]
    fn expfamily_unimproved_branch() {
        let m = Mechanism::ExpFamily {
            delta: 1.0,
            b: KappaFn::Affine { intercept: 1.0, slope: 1.0 },
            l: KappaFn::Unbounded,
            kappa_max: 10.0,
            improved: false,
        };
        // 2 B(αΔ) Δ = 2 (1 + 3) at α = 3.
        assert_eq!(m.curve().unwrap().eval(3.0), 8.0);
        let improved = match m {
            Mechanism::ExpFamily { delta, b, l, kappa_max, .. } => Mechanism::ExpFamily { delta, b, l, kappa_max, improved: true },
            _ => unreachable!(),
        };
        // [B(2) + B(1)] = 3 + 2.
        assert_eq!(improved.curve().unwrap().eval(3.0), 5.0);
    }

    #[test]
    fn identities_round_parameters() {
        assert_eq!(
            Mechanism::Gaussian { sigma: 5.0 }.identity(),
            Mechanism::Gaussian { sigma: 5.000_000_000_000_01 }.identity()
        );
        assert_eq!(Mechanism::Laplace { b: 0.5 }.identity(), "laplace(b=0.5)");
    }

    #[test]
    fn mechanism_json_shape() {
        let m: Mechanism = serde_json::from_str(r#"{"kind":"gaussian","sigma":5}"#).unwrap();
        assert_eq!(m, Mechanism::Gaussian { sigma: 5.0 });
        let e: Mechanism = serde_json::from_str(
            r#"{"kind":"expfamily","delta":1,"b":{"type":"constant","value":2},"l":{"type":"unbounded"},"kappa_max":4}"#,
        )
        .unwrap();
        assert!(matches!(e, Mechanism::ExpFamily { improved: true, .. }));
        assert!(serde_json::from_str::<Mechanism>(r#"{"kind":"cauchy","s":1}"#).is_err());
    }

    #[test]
    fn monotone_on_log_grid_and_bounded_by_eps_inf() {
        for curve in catalog() {
            let grid: Vec<f64> = (0..50).map(|i| 1.0 + 10f64.powf(-3.0 + 6.0 * i as f64 / 49.0)).collect();
            let mut prev: f64 = 0.0;
            for &a in &grid {
                let e = curve.eval(a);
                assert!(
                    e >= prev || (e.is_infinite() && prev.is_infinite()) || e >= prev - 1e-12 * prev,
                    "{} not monotone at {a}",
                    curve.identity()
                );
                assert!(e <= curve.eps_inf() * (1.0 + 1e-12), "{} above eps_inf at {a}", curve.identity());
                prev = e;
            }
        }
    }

    proptest! {
        #[test]
        fn cgf_is_midpoint_convex(idx in 0usize..9, a in 0.01f64..200.0, b in 0.01f64..200.0) {
            let curve = &catalog()[idx];
            let m = 0.5 * (a + b);
            let (ka, kb, km) = (curve.cgf(a), curve.cgf(b), curve.cgf(m));
            if ka.is_finite() && kb.is_finite() {
                prop_assert!(km <= 0.5 * (ka + kb) + 1e-9 * (1.0 + ka.abs() + kb.abs()),
                    "{}: K({m}) = {km} > mean of {ka}, {kb}", curve.identity());
            }
            prop_assert_eq!(curve.cgf(0.0), 0.0);
        }
    }
}
