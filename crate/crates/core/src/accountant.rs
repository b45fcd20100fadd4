//! Symbolic CGF ledger and `(ε, δ)` conversion.
//!
//! The ledger stores each distinct mechanism once with a repetition count, so
//! composing the same mechanism a million times costs one hash lookup. The
//! total CGF is `K(λ) = Σ count_i · λ · ε_i(λ + 1)`.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::amplification::{BoundKind, SubsampledCurve, DEFAULT_ALPHA_THRESH};
use crate::error::{invalid, Error, Result};
use crate::mechanisms::{Mechanism, RdpCurve};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    pub eps: f64,
    pub delta: f64,
}

impl PrivacyParams {
    pub fn new(eps: f64, delta: f64) -> Result<Self> {
        if !(eps >= 0.0) {
            return Err(invalid("eps", format!("{eps} must be nonnegative")));
        }
        if !(0.0..=1.0).contains(&delta) {
            return Err(invalid("delta", format!("{delta} must lie in [0, 1]")));
        }
        Ok(Self { eps, delta })
    }
}

/// `(ε(α) + log(1/δ)/(α - 1), δ)`.
pub fn rdp_to_dp(eps_alpha: f64, alpha: f64, delta: f64) -> Result<PrivacyParams> {
    if !(alpha > 1.0) {
        return Err(invalid("alpha", format!("{alpha} must exceed 1")));
    }
    check_delta(delta)?;
    let slack = if alpha.is_infinite() { 0.0 } else { -delta.ln() / (alpha - 1.0) };
    PrivacyParams::new(eps_alpha + slack, delta)
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(invalid("delta", format!("{delta} must lie in (0, 1)")))
    }
}

/// Either a plain mechanism curve or a subsampled one.
#[derive(Debug, Clone)]
pub enum LedgerCurve {
    Plain(RdpCurve),
    Subsampled(SubsampledCurve),
}

impl From<RdpCurve> for LedgerCurve {
    fn from(c: RdpCurve) -> Self {
        LedgerCurve::Plain(c)
    }
}

impl From<SubsampledCurve> for LedgerCurve {
    fn from(c: SubsampledCurve) -> Self {
        LedgerCurve::Subsampled(c)
    }
}

impl LedgerCurve {
    pub fn identity(&self) -> String {
        match self {
            LedgerCurve::Plain(c) => c.identity().to_string(),
            LedgerCurve::Subsampled(c) => c.identity(),
        }
    }

    pub fn eval(&self, alpha: f64) -> f64 {
        match self {
            LedgerCurve::Plain(c) => c.eval(alpha),
            LedgerCurve::Subsampled(c) => c.eval(alpha),
        }
    }

    pub fn cgf(&self, lambda: f64) -> f64 {
        match self {
            LedgerCurve::Plain(c) => c.cgf(lambda),
            LedgerCurve::Subsampled(c) => c.cgf(lambda),
        }
    }

    pub fn eps_inf(&self) -> f64 {
        match self {
            LedgerCurve::Plain(c) => c.eps_inf(),
            LedgerCurve::Subsampled(c) => c.eps_inf(),
        }
    }

    pub fn eps_kl(&self) -> Option<f64> {
        match self {
            LedgerCurve::Plain(c) => c.eps_kl(),
            LedgerCurve::Subsampled(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LedgerEntry {
    pub curve: LedgerCurve,
    pub count: u64,
}

/// Solver and projection knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AccountantConfig {
    pub grid_points: usize,
    pub grid_min: f64,
    pub grid_max: f64,
    pub lambda_cap: f64,
    pub lambda_floor: f64,
    pub tol: f64,
}

impl Default for AccountantConfig {
    fn default() -> Self {
        Self {
            grid_points: 512,
            grid_min: 1e-4,
            grid_max: 1_048_576.0,
            lambda_cap: 1_099_511_627_776.0,
            lambda_floor: 1e-12,
            tol: 1e-10,
        }
    }
}

impl AccountantConfig {
    /// The log-spaced λ grid used by the projection.
    pub fn grid(&self) -> Vec<f64> {
        let n = self.grid_points.max(2);
        let (a, b) = (self.grid_min.ln(), self.grid_max.ln());
        (0..n)
            .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
            .collect()
    }
}

/// Piecewise-linear convex minorant of the total CGF on the grid.
#[derive(Debug, Clone)]
struct Projection {
    /// Hull vertices, starting at the origin.
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Projection {
    fn build(grid: &[f64], values: &[f64]) -> Self {
        let mut xs = vec![0.0];
        let mut ys = vec![0.0];
        for (&x, &y) in grid.iter().zip(values) {
            if !y.is_finite() {
                break;
            }
            // Pop the last vertex while it lies on or above the chord from its
            // predecessor to the new point.
            while xs.len() >= 2 {
                let (x0, y0) = (xs[xs.len() - 2], ys[ys.len() - 2]);
                let (x1, y1) = (xs[xs.len() - 1], ys[ys.len() - 1]);
                if (x1 - x0) * (y - y0) - (y1 - y0) * (x - x0) <= 0.0 {
                    xs.pop();
                    ys.pop();
                } else {
                    break;
                }
            }
            xs.push(x);
            ys.push(y);
        }
        Self { xs, ys }
    }

    /// Projected value at `lambda`, or `None` past the last hull vertex.
    fn eval(&self, lambda: f64) -> Option<f64> {
        let last = *self.xs.last()?;
        if self.xs.len() < 2 || lambda > last {
            return None;
        }
        let i = self.xs.partition_point(|&x| x < lambda).max(1);
        let (x0, x1) = (self.xs[i - 1], self.xs[i]);
        let (y0, y1) = (self.ys[i - 1], self.ys[i]);
        if lambda == x1 {
            return Some(y1);
        }
        Some(y0 + (y1 - y0) * (lambda - x0) / (x1 - x0))
    }
}

/// Conditions worth reporting next to a conversion result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flag {
    /// The optimum is approached only as `λ → ∞` (or `λ → 0`); the value at
    /// the search limit was returned.
    InfimumLimited,
    /// The pure-DP track gave the better answer.
    PureDp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conversion {
    pub eps: f64,
    pub delta: f64,
    pub lambda_star: f64,
    pub flags: Vec<Flag>,
}

#[derive(Debug, Clone, Default)]
pub struct CgfLedger {
    entries: Vec<LedgerEntry>,
    index: HashMap<String, usize>,
    eps_inf_total: f64,
    eps_kl_total: Option<f64>,
    config: AccountantConfig,
    projection: Option<Arc<Projection>>,
}

impl CgfLedger {
    pub fn new() -> Self {
        Self {
            eps_kl_total: Some(0.0),
            ..Self::default()
        }
    }

    pub fn with_config(mut self, config: AccountantConfig) -> Self {
        self.config = config;
        self.projection = None;
        self
    }

    pub fn config(&self) -> &AccountantConfig {
        &self.config
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn eps_inf_total(&self) -> f64 {
        self.eps_inf_total
    }

    pub fn eps_kl_total(&self) -> Option<f64> {
        self.eps_kl_total
    }

    pub fn is_projected(&self) -> bool {
        self.projection.is_some()
    }

    /// Adds `count` runs of `curve`. A projection, if any, is discarded.
    pub fn compose(mut self, curve: impl Into<LedgerCurve>, count: u64) -> Result<Self> {
        self.compose_in_place(curve, count)?;
        Ok(self)
    }

    pub fn compose_in_place(&mut self, curve: impl Into<LedgerCurve>, count: u64) -> Result<()> {
        if count == 0 {
            return Err(invalid("count", "must be at least 1"));
        }
        let curve = curve.into();
        let k = count as f64;
        self.eps_inf_total += k * curve.eps_inf();
        self.eps_kl_total = match (self.eps_kl_total, curve.eps_kl()) {
            (Some(total), Some(kl)) => Some(total + k * kl),
            _ => None,
        };
        let id = curve.identity();
        match self.index.get(&id) {
            Some(&i) => {
                let entry = &mut self.entries[i];
                entry.count = entry.count.checked_add(count).ok_or_else(|| invalid("count", "overflow"))?;
            }
            None => {
                self.index.insert(id, self.entries.len());
                self.entries.push(LedgerEntry { curve, count });
            }
        }
        self.projection = None;
        Ok(())
    }

    /// Total CGF without any projection.
    pub fn cgf_raw(&self, lambda: f64) -> f64 {
        if lambda <= 0.0 {
            return 0.0;
        }
        self.entries
            .iter()
            .map(|e| e.count as f64 * e.curve.cgf(lambda))
            .sum()
    }

    /// Total CGF `K(λ)`, through the projection when one is attached.
    pub fn cgf(&self, lambda: f64) -> f64 {
        if lambda <= 0.0 {
            return 0.0;
        }
        if let Some(p) = &self.projection {
            if let Some(v) = p.eval(lambda) {
                return v;
            }
        }
        self.cgf_raw(lambda)
    }

    /// Replaces the CGF by the largest convex function through the origin
    /// lying below its samples on the configured grid. Beyond the last finite
    /// grid sample the raw CGF is used.
    pub fn project_cgf(&self) -> Self {
        let grid = self.config.grid();
        let values: Vec<f64> = grid.iter().map(|&l| self.cgf_raw(l)).collect();
        let mut out = self.clone();
        out.projection = Some(Arc::new(Projection::build(&grid, &values)));
        out
    }

    /// Central difference `K'(λ)` with step `1e-6 λ`; `None` when the CGF is
    /// infinite just above `λ`.
    fn slope(&self, lambda: f64) -> Option<f64> {
        let h = 1e-6 * lambda;
        let (up, down) = (self.cgf(lambda + h), self.cgf(lambda - h));
        if !up.is_finite() {
            return None;
        }
        Some((up - down) / (2.0 * h))
    }

    /// Bracket-and-bisect for a quasi-convex objective given by the sign of
    /// its derivative. Returns `(λ*, limited)`.
    fn minimize(&self, increasing: impl Fn(f64) -> bool) -> (f64, bool) {
        let cfg = &self.config;
        let mut lambda = 1.0;
        let (mut lo, mut hi);
        if increasing(lambda) {
            loop {
                let next = lambda / 2.0;
                if next < cfg.lambda_floor {
                    return (lambda, true);
                }
                if !increasing(next) {
                    lo = next;
                    hi = lambda;
                    break;
                }
                lambda = next;
            }
        } else {
            loop {
                let next = lambda * 2.0;
                if next > cfg.lambda_cap {
                    return (cfg.lambda_cap, true);
                }
                if increasing(next) {
                    lo = lambda;
                    hi = next;
                    break;
                }
                lambda = next;
            }
        }
        while hi - lo > cfg.tol * lo.max(1.0) {
            let mid = lo + (hi - lo) / 2.0;
            if mid <= lo || mid >= hi {
                break;
            }
            if increasing(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        (lo + (hi - lo) / 2.0, false)
    }

    /// Smallest `ε` such that the composition is `(ε, δ)`-DP:
    /// `min_λ (log(1/δ) + K(λ))/λ`, capped by the pure-DP total.
    pub fn eps_from_delta(&self, delta: f64) -> Result<Conversion> {
        check_delta(delta)?;
        let c = -delta.ln();
        let objective = |l: f64| (c + self.cgf(l)) / l;
        let (lambda, limited) = self.minimize(|l| match self.slope(l) {
            None => true,
            Some(d) => l * d - self.cgf(l) - c > 0.0,
        });
        let eps = objective(lambda).max(0.0);
        let mut flags = Vec::new();
        if limited {
            flags.push(Flag::InfimumLimited);
        }
        let eps = if !self.is_empty() && self.eps_inf_total < eps {
            flags.push(Flag::PureDp);
            self.eps_inf_total
        } else {
            eps
        };
        Ok(Conversion {
            eps,
            delta,
            lambda_star: lambda,
            flags,
        })
    }

    /// Smallest `δ` such that the composition is `(ε, δ)`-DP:
    /// `min_λ exp(K(λ) - λ ε)`, clamped to 1, and 0 once `ε` reaches the
    /// pure-DP total.
    pub fn delta_from_eps(&self, eps: f64) -> Result<Conversion> {
        if !(eps >= 0.0) {
            return Err(invalid("eps", format!("{eps} must be nonnegative")));
        }
        let (lambda, limited) = self.minimize(|l| match self.slope(l) {
            None => true,
            Some(d) => d - eps > 0.0,
        });
        let mut flags = Vec::new();
        if limited {
            flags.push(Flag::InfimumLimited);
        }
        if !self.is_empty() && eps >= self.eps_inf_total {
            flags.push(Flag::PureDp);
            return Ok(Conversion {
                eps,
                delta: 0.0,
                lambda_star: lambda,
                flags,
            });
        }
        let delta = (self.cgf(lambda) - lambda * eps).exp().min(1.0);
        Ok(Conversion {
            eps,
            delta,
            lambda_star: lambda,
            flags,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let records = self
            .entries
            .iter()
            .map(EntryRecord::from_entry)
            .collect::<Result<Vec<_>>>()?;
        Ok(serde_json::to_string_pretty(&records).expect("ledger records serialize"))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let records: Vec<EntryRecord> = serde_json::from_str(text).map_err(|e| Error::Ledger(e.to_string()))?;
        let mut ledger = CgfLedger::new();
        for record in records {
            let count = record.count;
            let curve = record.into_curve()?;
            ledger.compose_in_place(curve, count)?;
        }
        Ok(ledger)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EntryRecord {
    identity: String,
    mechanism: Mechanism,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bound_kind: Option<BoundKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha_thresh: Option<u64>,
    count: u64,
}

impl EntryRecord {
    fn from_entry(entry: &LedgerEntry) -> Result<Self> {
        let identity = entry.curve.identity();
        let not_serializable = || Error::NotSerializable(identity.clone());
        let (mechanism, gamma, bound_kind, n, alpha_thresh) = match &entry.curve {
            LedgerCurve::Plain(c) => (c.mechanism().ok_or_else(not_serializable)?.clone(), None, None, None, None),
            LedgerCurve::Subsampled(s) => (
                s.base().mechanism().ok_or_else(not_serializable)?.clone(),
                Some(s.gamma()),
                Some(s.kind()),
                s.n(),
                (s.alpha_thresh() != DEFAULT_ALPHA_THRESH).then_some(s.alpha_thresh()),
            ),
        };
        Ok(Self {
            identity,
            mechanism,
            gamma,
            bound_kind,
            n,
            alpha_thresh,
            count: entry.count,
        })
    }

    fn into_curve(self) -> Result<LedgerCurve> {
        let base = self.mechanism.curve()?;
        let curve: LedgerCurve = match (self.gamma, self.bound_kind) {
            (None, None) => base.into(),
            (Some(gamma), kind) => {
                let kind = kind.unwrap_or(BoundKind::General);
                let mut s = SubsampledCurve::build(base, gamma, kind, self.n)?;
                if let Some(t) = self.alpha_thresh {
                    s = s.with_alpha_thresh(t);
                }
                s.into()
            }
            (None, Some(_)) => return Err(Error::Ledger(format!("entry `{}` has a bound kind but no gamma", self.identity))),
        };
        if curve.identity() != self.identity {
            return Err(Error::Ledger(format!(
                "identity `{}` does not match its parameters (expected `{}`)",
                self.identity,
                curve.identity()
            )));
        }
        Ok(curve)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amplification::AsymptoticCase;
    use crate::mechanisms::{gaussian_rdp, laplace_rdp_curve, pure_dp_rdp};
    use approx::assert_relative_eq;

    fn gaussian_ledger(sigma: f64) -> CgfLedger {
        CgfLedger::new().compose(gaussian_rdp(sigma).unwrap(), 1).unwrap()
    }

    #[test]
    fn compose_examples() {
        let l = gaussian_ledger(5.0);
        assert_relative_eq!(l.cgf(30.0), 18.6, max_relative = 1e-14);
        assert_relative_eq!(l.cgf(2.0), 6.0 / 50.0, max_relative = 1e-14);
        assert_eq!(CgfLedger::new().cgf(3.0), 0.0);
        let twice = l.clone().compose(gaussian_rdp(5.0).unwrap(), 1).unwrap();
        assert_eq!(twice.entries().len(), 1);
        assert_eq!(twice.entries()[0].count, 2);
        for lambda in [0.5, 3.0, 100.0] {
            assert_eq!(twice.cgf(lambda), 2.0 * l.cgf(lambda));
        }
        let sub = SubsampledCurve::new(gaussian_rdp(5.0).unwrap(), 0.001, BoundKind::General).unwrap();
        let mut big = CgfLedger::new();
        for _ in 0..600_000 {
            big.compose_in_place(sub.clone(), 1).unwrap();
        }
        assert_eq!(big.entries().len(), 1);
        assert_eq!(big.entries()[0].count, 600_000);
    }

    #[test]
    fn totals_accumulate() {
        let l = CgfLedger::new()
            .compose(pure_dp_rdp(0.5).unwrap(), 3)
            .unwrap()
            .compose(laplace_rdp_curve(2.0).unwrap(), 2)
            .unwrap();
        assert_relative_eq!(l.eps_inf_total(), 2.5, max_relative = 1e-15);
        let lap_kl = 0.5 + (-0.5f64).exp() - 1.0;
        assert_relative_eq!(l.eps_kl_total().unwrap(), 1.5 + 2.0 * lap_kl, max_relative = 1e-6);
        assert!(gaussian_ledger(1.0).eps_inf_total().is_infinite());
    }

    #[test]
    fn rejects_zero_count() {
        assert!(CgfLedger::new().compose(gaussian_rdp(1.0).unwrap(), 0).is_err());
    }

    #[test]
    fn eps_from_delta_gaussian() {
        let r = gaussian_ledger(5.0).eps_from_delta(1e-8).unwrap();
        let lambda = (50.0 * 1e8f64.ln()).sqrt();
        assert_relative_eq!(r.lambda_star, lambda, max_relative = 1e-6);
        let expected = (lambda + 1.0) / 50.0 + 1e8f64.ln() / lambda;
        assert_relative_eq!(r.eps, expected, max_relative = 1e-12);
        assert!((r.eps - 1.2339).abs() < 1e-3);
        assert!(r.flags.is_empty());
    }

    #[test]
    fn empty_ledger_is_infimum_limited() {
        let r = CgfLedger::new().eps_from_delta(1e-8).unwrap();
        assert!(r.eps > 0.0 && r.eps <= 1e-10);
        assert!(r.flags.contains(&Flag::InfimumLimited));
        assert_eq!(r.lambda_star, AccountantConfig::default().lambda_cap);
    }

    #[test]
    fn pure_dp_track_dominates() {
        let l = CgfLedger::new().compose(pure_dp_rdp(0.1).unwrap(), 1).unwrap();
        let r = l.eps_from_delta(1e-8).unwrap();
        assert_eq!(r.eps, 0.1);
        assert!(r.flags.contains(&Flag::PureDp));
        assert_eq!(l.delta_from_eps(0.1).unwrap().delta, 0.0);
        assert_eq!(l.delta_from_eps(5.0).unwrap().delta, 0.0);
    }

    #[test]
    fn delta_from_eps_round_trip() {
        let l = gaussian_ledger(5.0);
        let e = l.eps_from_delta(1e-8).unwrap().eps;
        let d = l.delta_from_eps(e).unwrap().delta;
        assert!((d - 1e-8).abs() / 1e-8 < 0.05, "{d}");
        assert!(d <= 1e-8 * (1.0 + 1e-3));
        let at_zero = l.delta_from_eps(0.0).unwrap();
        assert!(at_zero.delta <= 1.0);
        assert!(l.eps_from_delta(0.0).is_err());
        assert!(l.eps_from_delta(1.0).is_err());
        assert!(l.delta_from_eps(-1.0).is_err());
    }

    #[test]
    fn conversions_are_monotone() {
        let sub = SubsampledCurve::new(gaussian_rdp(2.0).unwrap(), 0.01, BoundKind::General).unwrap();
        let l = CgfLedger::new().compose(sub, 1000).unwrap();
        let mut prev = f64::INFINITY;
        for e in -10..=-2 {
            let eps = l.eps_from_delta(10f64.powi(e)).unwrap().eps;
            assert!(eps <= prev * (1.0 + 1e-12));
            prev = eps;
        }
        let mut prev = 1.0;
        for i in 0..20 {
            let d = l.delta_from_eps(0.1 * i as f64).unwrap().delta;
            assert!(d <= prev * (1.0 + 1e-12));
            prev = d;
        }
    }

    #[test]
    fn rdp_to_dp_examples() {
        let p = rdp_to_dp(0.04, 2.0, 1e-8).unwrap();
        assert_relative_eq!(p.eps, 0.04 + 1e8f64.ln(), max_relative = 1e-15);
        assert_eq!(p.delta, 1e-8);
        assert!((rdp_to_dp(0.04, 2.0, 1.0 - 1e-15).unwrap().eps - 0.04).abs() < 1e-14);
        assert_eq!(rdp_to_dp(0.04, f64::INFINITY, 0.5).unwrap().eps, 0.04);
        assert!(rdp_to_dp(0.04, 1.0, 0.5).is_err());
    }

    #[test]
    fn projection_of_convex_cgf_is_identity_on_grid() {
        let l = gaussian_ledger(5.0);
        let p = l.project_cgf();
        for lambda in l.config().grid() {
            assert_relative_eq!(p.cgf(lambda), l.cgf(lambda), max_relative = 1e-9);
        }
        assert!(!p.clone().compose(gaussian_rdp(1.0).unwrap(), 1).unwrap().is_projected());
    }

    #[test]
    fn projection_repairs_non_convex_input() {
        let bumpy = RdpCurve::custom("bumpy", |a: f64| 0.02 * a + 0.5 * (a.ln()).sin().abs(), f64::INFINITY);
        let l = CgfLedger::new().compose(bumpy, 1).unwrap();
        let p = l.project_cgf();
        let grid = l.config().grid();
        let vals: Vec<f64> = grid.iter().map(|&x| p.cgf(x)).collect();
        for i in 0..grid.len() {
            assert!(vals[i] <= l.cgf(grid[i]) * (1.0 + 1e-12));
            if i > 0 {
                assert!(vals[i] / grid[i] >= vals[i - 1] / grid[i - 1] * (1.0 - 1e-12));
            }
        }
        for i in 1..grid.len() - 1 {
            let (x0, x1, x2) = (grid[i - 1], grid[i], grid[i + 1]);
            let chord = vals[i - 1] + (vals[i + 1] - vals[i - 1]) * (x1 - x0) / (x2 - x0);
            assert!(vals[i] <= chord * (1.0 + 1e-9) + 1e-15);
        }
        assert_eq!(p.cgf(0.0), 0.0);
    }

    #[test]
    fn json_round_trip() {
        let l = CgfLedger::new()
            .compose(gaussian_rdp(5.0).unwrap(), 7)
            .unwrap()
            .compose(
                SubsampledCurve::new(laplace_rdp_curve(0.3).unwrap(), 0.001, BoundKind::Tight)
                    .unwrap()
                    .with_alpha_thresh(100),
                600_000,
            )
            .unwrap()
            .compose(SubsampledCurve::asymptotic(2.0, 0.01, 5000, AsymptoticCase::Bad).unwrap(), 3)
            .unwrap();
        let text = l.to_json().unwrap();
        let back = CgfLedger::from_json(&text).unwrap();
        assert_eq!(back.to_json().unwrap(), text);
        for lambda in [0.3, 2.0, 17.5] {
            assert_eq!(back.cgf(lambda), l.cgf(lambda));
        }
        let custom = CgfLedger::new().compose(RdpCurve::custom("c", |_| 0.0, 0.0), 1).unwrap();
        assert!(matches!(custom.to_json(), Err(Error::NotSerializable(_))));
        assert!(CgfLedger::from_json("{").is_err());
        let tampered = text.replacen("sigma=5", "sigma=6", 1);
        assert!(matches!(CgfLedger::from_json(&tampered), Err(Error::Ledger(_))));
    }
}
