//! RDP of a mechanism run on a subsample drawn without replacement.
//!
//! Every bound here is a `log(1 + Σ_j t_j) / (α - 1)` over log-space terms
//! `t_j`; the sums are assembled with [`log_sum_exp`] so that orders in the
//! thousands do not overflow.

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fmt::sig12;
use crate::mechanisms::{Mechanism, RdpCurve};
use crate::numerics::{forward_difference_table, log1p_exp, log_binomial, log_expm1, log_sum_exp, SignedLogReal};

/// Orders up to this value are summed exactly; above it the general bound
/// switches to the bracketing approximation.
pub const DEFAULT_ALPHA_THRESH: u64 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    General,
    Tight,
    Lower,
    PuredpForm,
    AsymptoticBad,
    AsymptoticGood,
}

impl BoundKind {
    pub const ALL: [BoundKind; 6] = [
        BoundKind::General,
        BoundKind::Tight,
        BoundKind::Lower,
        BoundKind::PuredpForm,
        BoundKind::AsymptoticBad,
        BoundKind::AsymptoticGood,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BoundKind::General => "general",
            BoundKind::Tight => "tight",
            BoundKind::Lower => "lower",
            BoundKind::PuredpForm => "puredp_form",
            BoundKind::AsymptoticBad => "asymptotic_bad",
            BoundKind::AsymptoticGood => "asymptotic_good",
        }
    }

    /// Whether the bound is only defined at integer orders and needs the
    /// CGF interpolation elsewhere.
    fn integer_only(self) -> bool {
        matches!(self, BoundKind::General | BoundKind::Tight | BoundKind::Lower)
    }
}

impl fmt::Display for BoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BoundKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        BoundKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| invalid("bound_kind", format!("unknown bound kind `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AsymptoticCase {
    Bad,
    Good,
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma <= 1.0 {
        Ok(())
    } else {
        Err(invalid("gamma", format!("{gamma} must lie in (0, 1]")))
    }
}

/// Log of the `j`-th term of the general bound, `j >= 2`.
fn general_log_term(base: &RdpCurve, log_gamma: f64, alpha: u64, j: u64) -> f64 {
    let eps_inf = base.eps_inf();
    let log_choose = log_binomial(alpha, j);
    if j == 2 {
        let eps2 = base.eval(2.0);
        // min{4(e^{ε(2)} - 1), e^{ε(2)} min{2, (e^{ε(∞)} - 1)^2}}; an infinite ε(∞)
        // selects the constant 2 through `min` without forming ∞ - ∞.
        let chi = (4f64.ln() + log_expm1(eps2)).min(eps2 + 2f64.ln().min(2.0 * log_expm1(eps_inf)));
        return 2.0 * log_gamma + log_choose + chi;
    }
    if eps_inf == 0.0 {
        return f64::NEG_INFINITY;
    }
    let eps_j = base.eval(j as f64);
    let pure = 2f64.ln().min(j as f64 * log_expm1(eps_inf));
    j as f64 * log_gamma + log_choose + (j - 1) as f64 * eps_j + pure
}

fn lower_log_term(base: &RdpCurve, log_gamma: f64, log_keep: f64, alpha: u64, j: u64) -> f64 {
    let moment = (j - 1) as f64 * base.eval(j as f64);
    log_binomial(alpha, j) + j as f64 * log_gamma + (alpha - j) as f64 * log_keep + log_expm1(moment)
}

fn finish(log_excess: f64, alpha: u64) -> f64 {
    (log1p_exp(log_excess) / (alpha - 1) as f64).max(0.0)
}

/// General upper bound at integer `alpha >= 2`, summed exactly over all terms.
pub fn amplify_general_exact(base: &RdpCurve, gamma: f64, alpha: u64) -> f64 {
    assert!(alpha >= 2, "the general bound needs alpha >= 2");
    let log_gamma = gamma.ln();
    let terms: Vec<f64> = (2..=alpha).map(|j| general_log_term(base, log_gamma, alpha, j)).collect();
    finish(log_sum_exp(&terms), alpha)
}

/// Upper bound on the RDP of the subsampled mechanism at integer order
/// `alpha >= 2`.
///
/// Orders above [`DEFAULT_ALPHA_THRESH`] use the upper end of
/// [`approx_general_bound`].
pub fn amplify_general(base: &RdpCurve, gamma: f64, alpha: u64) -> f64 {
    amplify_general_with(base, gamma, alpha, DEFAULT_ALPHA_THRESH)
}

fn amplify_general_with(base: &RdpCurve, gamma: f64, alpha: u64, thresh: u64) -> f64 {
    if alpha <= thresh {
        amplify_general_exact(base, gamma, alpha)
    } else {
        approx_general_bound(base, gamma, alpha).hi
    }
}

/// Closed form available for bounded `ε(∞)`, valid at every real `α > 1`:
/// `α/(α-1) · log(1 + γ e^{ε(α)} (e^{ε(∞)} - 1))`.
pub fn amplify_puredp_form(base: &RdpCurve, gamma: f64, alpha: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let eps_inf = base.eps_inf();
    if !eps_inf.is_finite() {
        return Err(Error::NotApplicable {
            bound: "puredp_form",
            reason: format!("{} has unbounded eps(inf)", base.identity()),
        });
    }
    if eps_inf == 0.0 {
        return Ok(0.0);
    }
    let inner = log1p_exp(gamma.ln() + base.eval(alpha) + log_expm1(eps_inf));
    if alpha == f64::INFINITY {
        Ok(inner)
    } else {
        Ok(alpha / (alpha - 1.0) * inner)
    }
}

/// Tighter bound plus how many of its terms fell back to the general bound
/// because their finite differences were cancellation-limited.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TightBound {
    pub value: f64,
    pub fallback_terms: u64,
}

/// `B(ε, l)` for `l = 0..=max_order`: forward differences of
/// `x ↦ e^{(x-1)ε(x)}` at 0, with `f(0) = f(1) = 1`.
pub fn moment_differences(base: &RdpCurve, max_order: u64) -> Vec<crate::numerics::Difference> {
    MomentTable::new(base, max_order).diffs
}

/// Upper bound for tight, self-consistent base mechanisms, where the `j >= 3`
/// terms use `4 sqrt(B(ε, 2⌊j/2⌋) B(ε, 2⌈j/2⌉))`.
pub fn amplify_tight(base: &RdpCurve, gamma: f64, alpha: u64) -> Result<f64> {
    amplify_tight_detailed(base, gamma, alpha).map(|t| t.value)
}

pub fn amplify_tight_detailed(base: &RdpCurve, gamma: f64, alpha: u64) -> Result<TightBound> {
    check_gamma(gamma)?;
    check_tight(base)?;
    if alpha < 2 {
        return Err(invalid("alpha", "the tight bound needs alpha >= 2"));
    }
    let table = MomentTable::new(base, 2 * alpha.div_ceil(2));
    Ok(tight_with_table(base, gamma, alpha, &table))
}

fn check_tight(base: &RdpCurve) -> Result<()> {
    if base.is_tight() && base.is_self_consistent() {
        Ok(())
    } else {
        Err(Error::NotApplicable {
            bound: "tight",
            reason: format!("{} is not tight and self-consistent", base.identity()),
        })
    }
}

/// `e^{(i-1)ε(i)}` and its forward differences for `i = 0..=max_order`.
/// Both are prefix-stable, so one table serves every order up to its size.
#[derive(Debug)]
struct MomentTable {
    values: Vec<SignedLogReal>,
    diffs: Vec<crate::numerics::Difference>,
}

impl MomentTable {
    fn new(base: &RdpCurve, max_order: u64) -> Self {
        let values: Vec<SignedLogReal> = (0..=max_order)
            .map(|i| {
                if i < 2 {
                    SignedLogReal::ONE
                } else {
                    SignedLogReal::from_log((i - 1) as f64 * base.eval(i as f64))
                }
            })
            .collect();
        let diffs = forward_difference_table(&values);
        Self { values, diffs }
    }
}

fn tight_with_table(base: &RdpCurve, gamma: f64, alpha: u64, table: &MomentTable) -> TightBound {
    let log_gamma = gamma.ln();
    let max_order = 2 * alpha.div_ceil(2);
    let finite = table.values[2..=max_order as usize].iter().all(|v| v.logmag().is_finite());
    if !finite {
        return TightBound {
            value: amplify_general_exact(base, gamma, alpha),
            fallback_terms: alpha.saturating_sub(2),
        };
    }
    let diffs = &table.diffs;
    let mut fallback_terms = 0;
    let mut terms = Vec::with_capacity(alpha as usize);
    terms.push(general_log_term(base, log_gamma, alpha, 2));
    for j in 3..=alpha {
        let (lo, hi) = (&diffs[(2 * (j / 2)) as usize], &diffs[(2 * j.div_ceil(2)) as usize]);
        let usable = |d: &crate::numerics::Difference| {
            !d.cancellation_limited && d.value.sign() == crate::numerics::Sign::Positive
        };
        if usable(lo) && usable(hi) {
            let log_chi = 4f64.ln() + 0.5 * (lo.value.logmag() + hi.value.logmag());
            terms.push(j as f64 * log_gamma + log_binomial(alpha, j) + log_chi);
        } else {
            fallback_terms += 1;
            terms.push(general_log_term(base, log_gamma, alpha, j));
        }
    }
    TightBound {
        value: finish(log_sum_exp(&terms), alpha),
        fallback_terms,
    }
}

/// Lower bound attained by the worst-case pair that realises `ε(·)`; exact
/// summation. Defined as 0 at `alpha = 1`.
pub fn amplify_lower_exact(base: &RdpCurve, gamma: f64, alpha: u64) -> Result<f64> {
    check_lower(base, gamma)?;
    if alpha <= 1 {
        return Ok(0.0);
    }
    let (log_gamma, log_keep) = (gamma.ln(), (-gamma).ln_1p());
    let terms: Vec<f64> = (2..=alpha)
        .map(|j| lower_log_term(base, log_gamma, log_keep, alpha, j))
        .collect();
    Ok(finish(log_sum_exp(&terms), alpha))
}

/// Lower bound on the RDP of the subsampled mechanism at integer
/// `alpha >= 1`. Above [`DEFAULT_ALPHA_THRESH`] the lower end of the
/// bracketing approximation is used, which is still a valid lower bound.
pub fn amplify_lower(base: &RdpCurve, gamma: f64, alpha: u64) -> Result<f64> {
    amplify_lower_with(base, gamma, alpha, DEFAULT_ALPHA_THRESH)
}

fn amplify_lower_with(base: &RdpCurve, gamma: f64, alpha: u64, thresh: u64) -> Result<f64> {
    if alpha <= thresh {
        return amplify_lower_exact(base, gamma, alpha);
    }
    check_lower(base, gamma)?;
    let (log_gamma, log_keep) = (gamma.ln(), (-gamma).ln_1p());
    Ok(bracket(alpha, |j| lower_log_term(base, log_gamma, log_keep, alpha, j)).lo)
}

fn check_lower(base: &RdpCurve, gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(invalid("gamma", format!("{gamma} must lie in (0, 1) for the lower bound")));
    }
    if !base.is_tight() {
        return Err(Error::NotApplicable {
            bound: "lower",
            reason: format!("{} is not tight", base.identity()),
        });
    }
    Ok(())
}

/// Closed-form interval `[lo, hi]` around a bound at integer order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Bracket for `log(1 + Σ_{j=2}^{α} e^{t(j)}) / (α - 1)` from the largest term:
/// the sum lies between `e^{max}` and `(α - 1) e^{max}`.
fn bracket(alpha: u64, term: impl Fn(u64) -> f64) -> Interval {
    let max = max_term(2, alpha, &term);
    let count = (alpha - 1) as f64;
    Interval {
        lo: finish(max, alpha),
        hi: finish(max + count.ln(), alpha),
    }
}

/// Maximum of `term` over the integers in `[first, last]`, assuming the
/// sequence has at most two local maxima.
///
/// A coarse probe set (geometric from both ends plus a uniform skeleton) picks
/// the best neighbourhood; integer ternary search then refines inside it.
fn max_term(first: u64, last: u64, term: &impl Fn(u64) -> f64) -> f64 {
    let mut probes = vec![first, last];
    let span = last - first;
    let mut step = 1u64;
    while step <= span {
        probes.push(first + step);
        probes.push(last - step);
        step = step.saturating_mul(2);
    }
    for i in 1..32 {
        probes.push(first + span * i / 32);
    }
    probes.sort_unstable();
    probes.dedup();
    let values: Vec<f64> = probes.iter().map(|&j| term(j)).collect();

    let mut best = f64::NEG_INFINITY;
    for (i, &v) in values.iter().enumerate() {
        let is_local_max = (i == 0 || v >= values[i - 1]) && (i + 1 == values.len() || v >= values[i + 1]);
        if !is_local_max {
            continue;
        }
        let lo = probes[i.saturating_sub(1)];
        let hi = probes[(i + 1).min(probes.len() - 1)];
        best = best.max(ternary_max(lo, hi, term)).max(v);
    }
    best
}

fn ternary_max(mut lo: u64, mut hi: u64, term: &impl Fn(u64) -> f64) -> f64 {
    while hi - lo > 2 {
        let m1 = lo + (hi - lo) / 3;
        let m2 = hi - (hi - lo) / 3;
        if term(m1) < term(m2) {
            lo = m1 + 1;
        } else {
            hi = m2 - 1;
        }
    }
    (lo..=hi).map(term).fold(f64::NEG_INFINITY, f64::max)
}

/// Interval containing the general bound at integer order `alpha`, using
/// `O(log α)` evaluations of `ε(·)`. Width at most `log(α + 1)/(α - 1)`.
pub fn approx_general_bound(base: &RdpCurve, gamma: f64, alpha: u64) -> Interval {
    assert!(alpha >= 2, "the general bound needs alpha >= 2");
    let log_gamma = gamma.ln();
    bracket(alpha, |j| general_log_term(base, log_gamma, alpha, j))
}

/// Rényi divergence of the large-sample Gaussian approximation to the
/// subsampled Gaussian mechanism on a population of `n` points.
///
/// `Bad` is the homogeneous dataset with one outlier; it diverges at the pole
/// `α* = σ²/γ · n/(n-1) + 1`. `Good` is the balanced dataset.
pub fn asymptotic_gaussian(sigma: f64, gamma: f64, n: u64, alpha: f64, case: AsymptoticCase) -> f64 {
    let s2 = sigma * sigma;
    let nf = n as f64;
    match case {
        AsymptoticCase::Good => alpha * gamma * gamma / (2.0 * s2 + gamma * (nf - 1.0 / nf) / 2.0),
        AsymptoticCase::Bad => {
            let pole = s2 / gamma * nf / (nf - 1.0) + 1.0;
            if alpha >= pole {
                return f64::INFINITY;
            }
            let mean = alpha * gamma * gamma / (2.0 * s2) * (pole - 1.0) / (pole - alpha);
            let var_ratio = 0.5 * ((pole - 1.0) / pole).ln();
            let shape = ((pole - 1.0) / (pole - alpha)).ln() / (2.0 * (alpha - 1.0));
            (mean + var_ratio + shape).max(0.0)
        }
    }
}

/// A base mechanism composed with subsampling, evaluated through one of the
/// bounds above.
#[derive(Debug, Clone)]
pub struct SubsampledCurve {
    base: RdpCurve,
    gamma: f64,
    kind: BoundKind,
    alpha_thresh: u64,
    n: Option<u64>,
    /// Built on first use by the tight kind, up to the exact-summation limit.
    moments: Arc<OnceLock<MomentTable>>,
}

impl SubsampledCurve {
    /// Validates that `kind` applies to `base`. The asymptotic kinds need a
    /// population size; use [`SubsampledCurve::asymptotic`] for those.
    pub fn new(base: RdpCurve, gamma: f64, kind: BoundKind) -> Result<Self> {
        Self::build(base, gamma, kind, None)
    }

    pub fn asymptotic(sigma: f64, gamma: f64, n: u64, case: AsymptoticCase) -> Result<Self> {
        let base = Mechanism::Gaussian { sigma }.curve()?;
        let kind = match case {
            AsymptoticCase::Bad => BoundKind::AsymptoticBad,
            AsymptoticCase::Good => BoundKind::AsymptoticGood,
        };
        Self::build(base, gamma, kind, Some(n))
    }

    /// General constructor used by deserialization.
    pub fn build(base: RdpCurve, gamma: f64, kind: BoundKind, n: Option<u64>) -> Result<Self> {
        check_gamma(gamma)?;
        let not_applicable = |reason: String| Error::NotApplicable {
            bound: kind.as_str(),
            reason,
        };
        match kind {
            BoundKind::General => {}
            BoundKind::Tight => check_tight(&base)?,
            BoundKind::Lower => check_lower(&base, gamma)?,
            BoundKind::PuredpForm => {
                if !base.eps_inf().is_finite() {
                    return Err(not_applicable(format!("{} has unbounded eps(inf)", base.identity())));
                }
            }
            BoundKind::AsymptoticBad | BoundKind::AsymptoticGood => {
                if !matches!(base.mechanism(), Some(Mechanism::Gaussian { .. })) {
                    return Err(not_applicable("asymptotic bounds exist for the Gaussian mechanism only".into()));
                }
                if gamma >= 1.0 {
                    return Err(invalid("gamma", "asymptotic bounds need gamma < 1"));
                }
                match n {
                    Some(n) if n >= 2 => {}
                    _ => return Err(invalid("n", "asymptotic bounds need a population size n >= 2")),
                }
            }
        }
        Ok(Self {
            base,
            gamma,
            kind,
            alpha_thresh: DEFAULT_ALPHA_THRESH,
            n: if kind == BoundKind::AsymptoticBad || kind == BoundKind::AsymptoticGood {
                n
            } else {
                None
            },
            moments: Arc::default(),
        })
    }

    pub fn with_alpha_thresh(mut self, alpha_thresh: u64) -> Self {
        self.alpha_thresh = alpha_thresh.max(2);
        self.moments = Arc::default();
        self
    }

    pub fn base(&self) -> &RdpCurve {
        &self.base
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn kind(&self) -> BoundKind {
        self.kind
    }

    pub fn alpha_thresh(&self) -> u64 {
        self.alpha_thresh
    }

    pub fn n(&self) -> Option<u64> {
        self.n
    }

    pub fn identity(&self) -> String {
        let mut id = format!("subsampled[{}]({}, gamma={}", self.kind, self.base.identity(), sig12(self.gamma));
        if let Some(n) = self.n {
            id.push_str(&format!(", n={n}"));
        }
        if self.alpha_thresh != DEFAULT_ALPHA_THRESH {
            id.push_str(&format!(", alpha_thresh={}", self.alpha_thresh));
        }
        id.push(')');
        id
    }

    /// Pure-DP level: the classical amplification `log(1 + γ(e^{ε(∞)} - 1))`
    /// for upper-bound kinds, unbounded for the others.
    pub fn eps_inf(&self) -> f64 {
        match self.kind {
            BoundKind::General | BoundKind::Tight | BoundKind::PuredpForm => {
                let e = self.base.eps_inf();
                if e.is_finite() {
                    (self.gamma * e.exp_m1()).ln_1p()
                } else {
                    f64::INFINITY
                }
            }
            _ => f64::INFINITY,
        }
    }

    /// Bound at an integer order.
    pub fn eval_integer(&self, alpha: u64) -> f64 {
        match self.kind {
            BoundKind::General => amplify_general_with(&self.base, self.gamma, alpha, self.alpha_thresh),
            BoundKind::Tight => {
                if alpha <= self.alpha_thresh {
                    let table = self
                        .moments
                        .get_or_init(|| MomentTable::new(&self.base, 2 * self.alpha_thresh.div_ceil(2)));
                    tight_with_table(&self.base, self.gamma, alpha, table).value
                } else {
                    approx_general_bound(&self.base, self.gamma, alpha).hi
                }
            }
            BoundKind::Lower => {
                amplify_lower_with(&self.base, self.gamma, alpha, self.alpha_thresh).expect("validated at construction")
            }
            _ => self.eval(alpha as f64),
        }
    }

    /// `ε'(α)` at any real order `α > 1`.
    ///
    /// Integer-only bounds are extended by interpolating the CGF linearly
    /// between neighbouring integer orders, anchored at `K(0) = 0`.
    pub fn eval(&self, alpha: f64) -> f64 {
        if alpha == f64::INFINITY {
            return self.eps_inf();
        }
        match self.kind {
            BoundKind::PuredpForm => {
                amplify_puredp_form(&self.base, self.gamma, alpha).expect("validated at construction")
            }
            BoundKind::AsymptoticBad => asymptotic_gaussian(
                self.sigma(),
                self.gamma,
                self.n.unwrap_or(2),
                alpha,
                AsymptoticCase::Bad,
            ),
            BoundKind::AsymptoticGood => asymptotic_gaussian(
                self.sigma(),
                self.gamma,
                self.n.unwrap_or(2),
                alpha,
                AsymptoticCase::Good,
            ),
            _ => amplify_fractional(self, alpha),
        }
    }

    /// `K(λ) = λ ε'(λ + 1)`.
    pub fn cgf(&self, lambda: f64) -> f64 {
        if lambda <= 0.0 {
            return 0.0;
        }
        lambda * self.eval(lambda + 1.0)
    }

    fn integer_cgf(&self, lambda: u64) -> f64 {
        if lambda == 0 {
            0.0
        } else {
            lambda as f64 * self.eval_integer(lambda + 1)
        }
    }

    fn sigma(&self) -> f64 {
        match self.base.mechanism() {
            Some(Mechanism::Gaussian { sigma }) => *sigma,
            _ => unreachable!("asymptotic kinds are validated to have a Gaussian base"),
        }
    }
}

/// Extends an integer-order bound to real `alpha > 1`:
/// `K(λ) <= (1 - λ + ⌊λ⌋) K(⌊λ⌋) + (λ - ⌊λ⌋) K(⌈λ⌉)` with `λ = α - 1`.
/// Integer orders pass through unchanged.
pub fn amplify_fractional(curve: &SubsampledCurve, alpha: f64) -> f64 {
    assert!(alpha > 1.0, "fractional orders need alpha > 1");
    if !curve.kind.integer_only() {
        return curve.eval(alpha);
    }
    if alpha.fract() == 0.0 && alpha < u64::MAX as f64 {
        return curve.eval_integer(alpha as u64);
    }
    let lambda = alpha - 1.0;
    let floor = lambda.floor();
    let weight = lambda - floor;
    let lo = floor as u64;
    let k_lo = curve.integer_cgf(lo);
    let k_hi = curve.integer_cgf(lo + 1);
    let k = if weight == 0.0 { k_lo } else { (1.0 - weight) * k_lo + weight * k_hi };
    k / lambda
}
