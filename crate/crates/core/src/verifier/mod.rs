//! Independent numerical check of the amplification bounds.
//!
//! For a neighbouring pair `(q, p)` the subsampled mechanism outputs the
//! mixture `(1 - γ) q + γ p`. Its Rényi divergence from `q` is computed here
//! by direct integration, without going through any of the bound formulas,
//! and compared against the lower and upper bounds.
//!
//! With `r = p/q` and `y = γ (r - 1)` the divergence is
//! `log(1 + ∫ q φ(y)) / (α - 1)` where `φ(y) = (1 + y)^α - 1 - α y >= 0`;
//! the subtracted linear part integrates to zero, so the integrand has no
//! sign changes and stays accurate for very small `γ`.

pub mod quadrature;

use serde::{Deserialize, Serialize};

use crate::amplification::{
    amplify_lower, amplify_tight, asymptotic_gaussian, AsymptoticCase, BoundKind, SubsampledCurve,
};
use crate::error::{invalid, Error, Result};
use crate::fmt::fixed12;
use crate::mechanisms::Mechanism;
use crate::numerics::{log1p_exp, log_expm1, log_sum_exp};
use crate::parallel::{self, Execution};

pub use quadrature::{Estimate, Tolerance};

/// How far below the peak (in nats) the integration window must reach.
const TAIL_NATS: f64 = 40.0;
const COARSE_POINTS: usize = 2001;
const INITIAL_SEGMENTS: usize = 64;

/// The shifted pair realising a mechanism's worst case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairFamily {
    /// `q = N(0, σ²)`, `p = N(shift, σ²)`.
    Gaussian { sigma: f64, shift: f64 },
    /// `q = Lap(0, b)`, `p = Lap(shift, b)`.
    Laplace { b: f64, shift: f64 },
    /// `q = Bernoulli(p)`, `p = Bernoulli(1 - p)`.
    RandResp { p: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorstCasePair {
    pub family: PairFamily,
    pub gamma: f64,
}

/// Either a window for quadrature or a finite support.
enum Support {
    Continuous { lo: f64, hi: f64, breaks: Vec<f64> },
    Discrete(Vec<f64>),
}

impl WorstCasePair {
    pub fn new(family: PairFamily, gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(invalid("gamma", format!("{gamma} must lie in [0, 1]")));
        }
        let ok = match family {
            PairFamily::Gaussian { sigma, shift } => sigma > 0.0 && shift.is_finite(),
            PairFamily::Laplace { b, shift } => b > 0.0 && shift.is_finite(),
            PairFamily::RandResp { p } => p > 0.0 && p < 1.0,
        };
        if !ok {
            return Err(invalid("pair", format!("{family:?} has invalid parameters")));
        }
        Ok(Self { family, gamma })
    }

    /// The sensitivity-1 pair for a catalog mechanism.
    pub fn for_mechanism(mechanism: &Mechanism, gamma: f64) -> Result<Self> {
        let family = match *mechanism {
            Mechanism::Gaussian { sigma } => PairFamily::Gaussian { sigma, shift: 1.0 },
            Mechanism::Laplace { b } => PairFamily::Laplace { b, shift: 1.0 },
            Mechanism::RandResp { p } => PairFamily::RandResp { p },
            ref other => {
                return Err(Error::NotApplicable {
                    bound: "verifier",
                    reason: format!("no worst-case pair is defined for {}", other.name()),
                })
            }
        };
        Self::new(family, gamma)
    }

    pub fn log_q(&self, x: f64) -> f64 {
        match self.family {
            PairFamily::Gaussian { sigma, .. } => gaussian_log_density(x, sigma),
            PairFamily::Laplace { b, .. } => -x.abs() / b - (2.0 * b).ln(),
            PairFamily::RandResp { p } => bernoulli_log_mass(x, p),
        }
    }

    pub fn log_p(&self, x: f64) -> f64 {
        match self.family {
            PairFamily::Gaussian { sigma, shift } => gaussian_log_density(x - shift, sigma),
            PairFamily::Laplace { b, shift } => -(x - shift).abs() / b - (2.0 * b).ln(),
            PairFamily::RandResp { p } => bernoulli_log_mass(x, 1.0 - p),
        }
    }

    /// `log(p(x)/q(x))`, in closed form so no density underflows.
    pub fn log_ratio(&self, x: f64) -> f64 {
        match self.family {
            PairFamily::Gaussian { sigma, shift } => shift * (2.0 * x - shift) / (2.0 * sigma * sigma),
            PairFamily::Laplace { b, shift } => (x.abs() - (x - shift).abs()) / b,
            PairFamily::RandResp { p } => {
                let l = ((1.0 - p) / p).ln();
                if x == 1.0 {
                    l
                } else {
                    -l
                }
            }
        }
    }

    /// Integration window for `q(x) e^{t log r(x)}` with `t` up to `order`.
    fn support(&self, order: f64) -> Support {
        match self.family {
            PairFamily::Gaussian { sigma, shift } => {
                let peak = order.max(1.0) * shift;
                Support::Continuous {
                    lo: peak.min(0.0) - TAIL_NATS * sigma,
                    hi: peak.max(shift).max(0.0) + 1.0 + TAIL_NATS * sigma,
                    breaks: vec![],
                }
            }
            PairFamily::Laplace { b, shift } => Support::Continuous {
                lo: shift.min(0.0) - TAIL_NATS * b,
                hi: shift.max(0.0) + TAIL_NATS * b,
                breaks: vec![0.0, shift],
            },
            PairFamily::RandResp { .. } => Support::Discrete(vec![0.0, 1.0]),
        }
    }

    /// Integrals of `q` and `p` over the verifier's window; both should be 1.
    pub fn normalization(&self, tol: Tolerance) -> Result<(f64, f64)> {
        let lq = integrate_log(|x| self.log_q(x), self.support(1.0), tol)?;
        let lp = integrate_log(|x| self.log_p(x), self.support(1.0), tol)?;
        Ok((lq.log_value.exp(), lp.log_value.exp()))
    }
}

fn gaussian_log_density(x: f64, sigma: f64) -> f64 {
    -x * x / (2.0 * sigma * sigma) - (sigma * (2.0 * std::f64::consts::PI).sqrt()).ln()
}

fn bernoulli_log_mass(x: f64, p: f64) -> f64 {
    if x == 1.0 {
        p.ln()
    } else {
        (1.0 - p).ln()
    }
}

/// `log φ(y)` for `φ(y) = (1 + y)^α - 1 - α y`, `y > -1`.
pub fn log_phi(alpha: f64, y: f64) -> f64 {
    if y == 0.0 {
        return f64::NEG_INFINITY;
    }
    if (alpha * y).abs() <= 0.5 && y.abs() < 0.5 {
        let mut term = alpha * (alpha - 1.0) / 2.0 * y * y;
        let mut sum = term;
        let mut k = 2.0;
        while term != 0.0 && term.abs() > 1e-17 * sum.abs() && k < 400.0 {
            term *= (alpha - k) / (k + 1.0) * y;
            sum += term;
            k += 1.0;
        }
        return sum.ln();
    }
    let a = alpha * y.ln_1p();
    if a > 30.0 {
        return a + (-(1.0 + alpha * y) * (-a).exp()).ln_1p();
    }
    (a.exp_m1() - alpha * y).ln()
}

/// `log φ(γ (r - 1))` from `log r`, staying in log space when `r` is huge.
fn log_phi_from_log_ratio(alpha: f64, gamma: f64, log_r: f64) -> f64 {
    if gamma == 0.0 {
        return f64::NEG_INFINITY;
    }
    if log_r <= 30.0 {
        return log_phi(alpha, gamma * log_r.exp_m1());
    }
    let log_y = gamma.ln() + log_expm1(log_r);
    let a = alpha * log1p_exp(log_y);
    let log_linear = log1p_exp(alpha.ln() + log_y);
    a + (-(log_linear - a).exp()).ln_1p()
}

struct LogIntegral {
    log_value: f64,
    /// Absolute error of `exp(log_value)`, expressed relative to it.
    rel_error: f64,
}

/// `log ∫ e^{g(x)} dx` over `support`, scaling by the peak of `g` so the
/// quadrature sees values of order one.
fn integrate_log(g: impl Fn(f64) -> f64, support: Support, tol: Tolerance) -> Result<LogIntegral> {
    let (mut lo, mut hi, breaks) = match support {
        Support::Discrete(points) => {
            let logs: Vec<f64> = points.iter().map(|&x| g(x)).collect();
            return Ok(LogIntegral {
                log_value: log_sum_exp(&logs),
                rel_error: 0.0,
            });
        }
        Support::Continuous { lo, hi, breaks } => (lo, hi, breaks),
    };
    let coarse = |lo: f64, hi: f64| -> (f64, f64) {
        let mut best = (f64::NEG_INFINITY, lo);
        for i in 0..COARSE_POINTS {
            let x = lo + (hi - lo) * i as f64 / (COARSE_POINTS - 1) as f64;
            let v = g(x);
            if v > best.0 {
                best = (v, x);
            }
        }
        for &x in &breaks {
            if x > lo && x < hi && g(x) > best.0 {
                best = (g(x), x);
            }
        }
        best
    };
    let (mut peak, mut argmax) = coarse(lo, hi);
    for _ in 0..60 {
        let width = hi - lo;
        let mut grown = false;
        if g(lo) > peak - TAIL_NATS {
            lo -= width / 2.0;
            grown = true;
        }
        if g(hi) > peak - TAIL_NATS {
            hi += width / 2.0;
            grown = true;
        }
        if !grown {
            break;
        }
        (peak, argmax) = coarse(lo, hi);
    }
    if peak == f64::NEG_INFINITY {
        return Ok(LogIntegral {
            log_value: f64::NEG_INFINITY,
            rel_error: 0.0,
        });
    }
    let mut points: Vec<f64> = (0..=INITIAL_SEGMENTS)
        .map(|i| lo + (hi - lo) * i as f64 / INITIAL_SEGMENTS as f64)
        .collect();
    points.extend(breaks.iter().copied().filter(|&x| x > lo && x < hi));
    points.push(argmax);
    points.sort_by(f64::total_cmp);
    points.dedup();
    let est = quadrature::integrate(|x| (g(x) - peak).exp(), &points, tol)?;
    Ok(LogIntegral {
        log_value: peak + est.value.ln(),
        rel_error: est.error / est.value,
    })
}

/// A divergence value with its numerical error estimate, both in the same
/// units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleValue {
    pub value: f64,
    pub error: f64,
}

/// `D_α((1 - γ) q + γ p ‖ q)` by direct integration (or summation for
/// discrete pairs).
pub fn oracle_renyi(pair: &WorstCasePair, alpha: f64, tol: Tolerance) -> Result<OracleValue> {
    if !(alpha > 1.0) {
        return Err(invalid("alpha", format!("{alpha} must exceed 1")));
    }
    let gamma = pair.gamma;
    let integral = integrate_log(
        |x| pair.log_q(x) + log_phi_from_log_ratio(alpha, gamma, pair.log_ratio(x)),
        pair.support(alpha),
        tol,
    )?;
    let value = (log1p_exp(integral.log_value) / (alpha - 1.0)).max(0.0);
    // d/dI log(1 + I) = 1/(1 + I); the quadrature error is relative to I.
    let i = integral.log_value.exp();
    let error = if i.is_finite() {
        integral.rel_error * i / ((1.0 + i) * (alpha - 1.0))
    } else {
        integral.rel_error / (alpha - 1.0)
    };
    Ok(OracleValue { value, error })
}

/// Randomized-response divergence by plain two-point summation of
/// `(1 - γ + γ r)^α`, the reference for the generic path.
pub fn randresp_two_point(p: f64, gamma: f64, alpha: f64) -> f64 {
    let l = ((1.0 - p) / p).ln();
    let moment = |q: f64, lr: f64| q * (alpha * (gamma * lr.exp_m1()).ln_1p()).exp_m1();
    let excess = moment(p, l) + moment(1.0 - p, -l);
    excess.ln_1p() / (alpha - 1.0)
}

/// Which moment of `p/q - 1` under `q` to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChiMoment {
    /// `E_q[(p/q - 1)^j]`.
    Signed,
    /// `E_q[|p/q - 1|^j]`.
    Absolute,
}

/// Pearson–Vajda moment `E_q[(p/q - 1)^j]` (or its absolute version) of the
/// pair's two components, ignoring `γ`.
pub fn oracle_chi(pair: &WorstCasePair, order: u32, moment: ChiMoment, tol: Tolerance) -> Result<OracleValue> {
    if order < 2 {
        return Err(invalid("order", "must be at least 2"));
    }
    let j = order as f64;
    let log_abs_dev = |lr: f64| {
        if lr >= 0.0 {
            log_expm1(lr)
        } else {
            (-lr.exp_m1()).ln()
        }
    };
    let part = |want_positive: bool| {
        integrate_log(
            |x| {
                let lr = pair.log_ratio(x);
                let negative = lr < 0.0 && order % 2 == 1 && moment == ChiMoment::Signed;
                if negative == want_positive {
                    f64::NEG_INFINITY
                } else {
                    pair.log_q(x) + j * log_abs_dev(lr)
                }
            },
            pair.support(j),
            tol,
        )
    };
    let pos = part(true)?;
    let (pv, pe) = (pos.log_value.exp(), pos.log_value.exp() * pos.rel_error);
    if moment == ChiMoment::Absolute || order.is_multiple_of(2) {
        return Ok(OracleValue { value: pv, error: pe });
    }
    let neg = part(false)?;
    let (nv, ne) = (neg.log_value.exp(), neg.log_value.exp() * neg.rel_error);
    Ok(OracleValue {
        value: pv - nv,
        error: pe + ne,
    })
}

/// One row of a sandwich sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub alpha: f64,
    pub lower: Option<f64>,
    pub oracle: Option<f64>,
    pub oracle_error: Option<f64>,
    pub upper_general: f64,
    pub upper_tight: Option<f64>,
    pub asymptotic_bad: Option<f64>,
    pub asymptotic_good: Option<f64>,
    pub pass: bool,
    pub failure: Option<String>,
}

impl BoundReport {
    pub const CSV_HEADER: &'static str =
        "alpha,lower,oracle,upper_general,upper_tight,asymptotic_bad,asymptotic_good,pass";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(fixed12).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            fixed12(self.alpha),
            opt(self.lower),
            opt(self.oracle),
            fixed12(self.upper_general),
            opt(self.upper_tight),
            opt(self.asymptotic_bad),
            opt(self.asymptotic_good),
            self.pass
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyConfig {
    pub tol: Tolerance,
    /// Population size for the asymptotic Gaussian columns.
    pub n: Option<u64>,
    pub execution: Execution,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            tol: Tolerance::default(),
            n: Some(100_000),
            execution: Execution::default(),
        }
    }
}

fn within(lhs: f64, rhs: f64, slack: f64) -> bool {
    lhs <= rhs + slack + 1e-12 * lhs.abs().max(rhs.abs())
}

/// Lower bound, oracle and upper bounds over `alphas` for the worst-case pair
/// of `mechanism`. Rows whose oracle fails carry the failure and `pass =
/// false`; the sweep itself continues.
pub fn sandwich_report(
    mechanism: &Mechanism,
    gamma: f64,
    alphas: &[f64],
    cfg: &VerifyConfig,
) -> Result<Vec<BoundReport>> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(invalid("gamma", format!("{gamma} must lie in (0, 1) for verification")));
    }
    let pair = WorstCasePair::for_mechanism(mechanism, gamma)?;
    if let Some(bad) = alphas.iter().find(|a| !(**a > 1.0 && a.is_finite())) {
        return Err(invalid("alpha", format!("{bad} must be a finite order above 1")));
    }
    let base = mechanism.curve()?;
    let general = SubsampledCurve::new(base.clone(), gamma, BoundKind::General)?;
    let sigma = match mechanism {
        Mechanism::Gaussian { sigma } => Some(*sigma),
        _ => None,
    };
    let rows = parallel::map(alphas, cfg.execution, |&alpha| {
        let integer = (alpha.fract() == 0.0).then_some(alpha as u64);
        let upper_general = general.eval(alpha);
        let lower = integer.and_then(|a| amplify_lower(&base, gamma, a).ok());
        let upper_tight = integer.and_then(|a| amplify_tight(&base, gamma, a).ok());
        let (asymptotic_bad, asymptotic_good) = match (sigma, cfg.n) {
            (Some(s), Some(n)) => (
                Some(asymptotic_gaussian(s, gamma, n, alpha, AsymptoticCase::Bad)),
                Some(asymptotic_gaussian(s, gamma, n, alpha, AsymptoticCase::Good)),
            ),
            _ => (None, None),
        };
        let mut row = BoundReport {
            alpha,
            lower,
            oracle: None,
            oracle_error: None,
            upper_general,
            upper_tight,
            asymptotic_bad,
            asymptotic_good,
            pass: false,
            failure: None,
        };
        match oracle_renyi(&pair, alpha, cfg.tol) {
            Ok(o) => {
                row.oracle = Some(o.value);
                row.oracle_error = Some(o.error);
                let mut failures = Vec::new();
                if let Some(l) = lower {
                    if !within(l, o.value, o.error) {
                        failures.push(format!("lower {l:e} exceeds oracle {:e}", o.value));
                    }
                }
                if !within(o.value, upper_general, o.error) {
                    failures.push(format!("oracle {:e} exceeds general bound {upper_general:e}", o.value));
                }
                if let Some(t) = upper_tight {
                    if !within(o.value, t, o.error) {
                        failures.push(format!("oracle {:e} exceeds tight bound {t:e}", o.value));
                    }
                }
                row.pass = failures.is_empty();
                row.failure = (!failures.is_empty()).then(|| failures.join("; "));
            }
            Err(e) => row.failure = Some(e.to_string()),
        }
        row
    });
    Ok(rows)
}
