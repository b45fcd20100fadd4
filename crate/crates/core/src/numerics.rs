//! Log-domain arithmetic used by every bound evaluation.
//!
//! Amplification bounds are sums of terms like `C(α, j) γ^j e^{(j-1)ε(j)}` whose
//! magnitudes span hundreds of orders of magnitude, and the tighter bound needs
//! alternating binomial sums of such terms. Everything here works on logarithms
//! of magnitudes so that nothing overflows before the final `log`.

use std::cmp::Ordering;
use std::ops::{Add, Mul, Neg, Sub};

/// Relative size below which an alternating sum is considered dominated by
/// rounding error in its largest term.
pub const CANCELLATION_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sign {
    Negative,
    Zero,
    Positive,
}

impl Sign {
    fn flip(self) -> Sign {
        match self {
            Sign::Negative => Sign::Positive,
            Sign::Zero => Sign::Zero,
            Sign::Positive => Sign::Negative,
        }
    }

    fn times(self, other: Sign) -> Sign {
        match (self, other) {
            (Sign::Zero, _) | (_, Sign::Zero) => Sign::Zero,
            (a, b) if a == b => Sign::Positive,
            _ => Sign::Negative,
        }
    }
}

/// A real number stored as a sign and the natural log of its magnitude.
///
/// Zero is the unique value with `logmag == -inf`. Infinite magnitudes are
/// allowed (`logmag == +inf`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedLogReal {
    sign: Sign,
    logmag: f64,
}

impl SignedLogReal {
    pub const ZERO: SignedLogReal = SignedLogReal {
        sign: Sign::Zero,
        logmag: f64::NEG_INFINITY,
    };
    pub const ONE: SignedLogReal = SignedLogReal {
        sign: Sign::Positive,
        logmag: 0.0,
    };

    pub fn new(sign: Sign, logmag: f64) -> Self {
        debug_assert!(!logmag.is_nan(), "NaN log-magnitude");
        if sign == Sign::Zero || logmag == f64::NEG_INFINITY {
            Self::ZERO
        } else {
            Self { sign, logmag }
        }
    }

    /// The positive number `e^logmag`.
    pub fn from_log(logmag: f64) -> Self {
        Self::new(Sign::Positive, logmag)
    }

    pub fn encode(x: f64) -> Self {
        debug_assert!(!x.is_nan(), "cannot encode NaN");
        match x.partial_cmp(&0.0) {
            Some(Ordering::Greater) => Self::new(Sign::Positive, x.ln()),
            Some(Ordering::Less) => Self::new(Sign::Negative, (-x).ln()),
            _ => Self::ZERO,
        }
    }

    pub fn decode(self) -> f64 {
        match self.sign {
            Sign::Zero => 0.0,
            Sign::Positive => self.logmag.exp(),
            Sign::Negative => -self.logmag.exp(),
        }
    }

    pub fn sign(self) -> Sign {
        self.sign
    }

    pub fn logmag(self) -> f64 {
        self.logmag
    }

    pub fn is_zero(self) -> bool {
        self.sign == Sign::Zero
    }

    pub fn abs(self) -> Self {
        if self.is_zero() {
            self
        } else {
            Self::new(Sign::Positive, self.logmag)
        }
    }

    /// Square root of a non-negative value; negative input is clamped to zero.
    pub fn sqrt(self) -> Self {
        match self.sign {
            Sign::Positive => Self::from_log(0.5 * self.logmag),
            _ => Self::ZERO,
        }
    }
}

impl Neg for SignedLogReal {
    type Output = SignedLogReal;
    fn neg(self) -> Self::Output {
        Self {
            sign: self.sign.flip(),
            logmag: self.logmag,
        }
    }
}

impl Add for SignedLogReal {
    type Output = SignedLogReal;
    fn add(self, rhs: Self) -> Self::Output {
        slr_add(self, rhs)
    }
}

impl Sub for SignedLogReal {
    type Output = SignedLogReal;
    fn sub(self, rhs: Self) -> Self::Output {
        slr_add(self, -rhs)
    }
}

impl Mul for SignedLogReal {
    type Output = SignedLogReal;
    fn mul(self, rhs: Self) -> Self::Output {
        let sign = self.sign.times(rhs.sign);
        if sign == Sign::Zero {
            return Self::ZERO;
        }
        Self::new(sign, self.logmag + rhs.logmag)
    }
}

/// Sum of two signed-log reals.
///
/// Exact cancellation yields zero. Opposite infinities have no meaningful sum
/// and also yield zero.
pub fn slr_add(a: SignedLogReal, b: SignedLogReal) -> SignedLogReal {
    if a.is_zero() {
        return b;
    }
    if b.is_zero() {
        return a;
    }
    let (hi, lo) = if a.logmag >= b.logmag { (a, b) } else { (b, a) };
    if hi.logmag == f64::INFINITY {
        if hi.sign != lo.sign && lo.logmag == f64::INFINITY {
            debug_assert!(false, "inf - inf in signed-log arithmetic");
            return SignedLogReal::ZERO;
        }
        return hi;
    }
    let d = lo.logmag - hi.logmag;
    if hi.sign == lo.sign {
        SignedLogReal::new(hi.sign, hi.logmag + d.exp().ln_1p())
    } else if d == 0.0 {
        SignedLogReal::ZERO
    } else {
        SignedLogReal::new(hi.sign, hi.logmag + (-d.exp_m1()).ln())
    }
}

/// `log(Σ exp(x_i))`, shifted by the maximum so large inputs do not overflow.
/// Empty and all-`-inf` inputs give `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// `log(1 + e^x)` without overflow or loss of precision for very negative `x`.
pub fn log1p_exp(x: f64) -> f64 {
    if x > 33.3 {
        x + (-x).exp()
    } else if x < -37.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// `log(e^a + e^b)`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi.is_infinite() {
        return hi;
    }
    hi + log1p_exp(lo - hi)
}

/// `log(e^x - 1)` for `x >= 0`; `-inf` at zero.
pub fn log_expm1(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x > 37.0 {
        x + (-(-x).exp()).ln_1p()
    } else {
        x.exp_m1().ln()
    }
}

fn exact_binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Natural log of the binomial coefficient `C(n, k)`.
///
/// Small arguments are computed exactly in integer arithmetic; larger ones use
/// log-gamma. Panics if `k > n`.
pub fn log_binomial(n: u64, k: u64) -> f64 {
    assert!(k <= n, "log_binomial: k = {k} exceeds n = {n}");
    if k == 0 || k == n {
        return 0.0;
    }
    if n <= 66 {
        return (exact_binomial(n, k) as f64).ln();
    }
    let short = k.min(n - k);
    if short <= 64 {
        // Log-gamma differences lose absolute precision once n is huge;
        // the product form stays accurate when one side is short.
        let far = (n - short) as f64;
        return (1..=short).map(|i| (far / i as f64).ln_1p()).sum();
    }
    log_binomial_real(n as f64, k as f64)
}

/// `log C(n, k)` for real arguments with `0 <= k <= n`, via log-gamma.
pub fn log_binomial_real(n: f64, k: f64) -> f64 {
    debug_assert!(0.0 <= k && k <= n);
    if k == 0.0 || k == n {
        return 0.0;
    }
    libm::lgamma(n + 1.0) - libm::lgamma(k + 1.0) - libm::lgamma(n - k + 1.0)
}

/// A finite difference together with a flag saying whether rounding in its
/// largest term could account for its entire value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Difference {
    pub value: SignedLogReal,
    pub cancellation_limited: bool,
}

/// Log-magnitude of the largest term `C(order, i) |f(i)|` of the explicit
/// alternating sum.
fn largest_term(values: &[SignedLogReal], order: usize) -> f64 {
    (0..=order)
        .map(|i| log_binomial(order as u64, i as u64) + values[i].logmag())
        .fold(f64::NEG_INFINITY, f64::max)
}

fn flag(value: SignedLogReal, largest: f64) -> Difference {
    let limited = largest > f64::NEG_INFINITY
        && largest.is_finite()
        && value.logmag() < largest + CANCELLATION_FLOOR.ln();
    Difference {
        value: if limited { SignedLogReal::ZERO } else { value },
        cancellation_limited: limited,
    }
}

/// `Δ^(k)[f](0)` for every `k = 0..values.len()`, given `values[i] = f(i)`.
///
/// Uses the recursive definition `Δ^(k) = Δ ∘ Δ^(k-1)`, so the whole table costs
/// `O(n²)` additions and no extra evaluations of `f`.
pub fn forward_difference_table(values: &[SignedLogReal]) -> Vec<Difference> {
    let mut row = values.to_vec();
    let mut out = Vec::with_capacity(values.len());
    for order in 0..values.len() {
        out.push(flag(row[0], largest_term(values, order)));
        for i in 0..row.len().saturating_sub(1) {
            row[i] = row[i + 1] - row[i];
        }
        row.pop();
    }
    out
}

/// `Δ^(order)[f](0) = Σ_{i=0}^{order} (-1)^{order-i} C(order, i) f(i)`.
pub fn forward_difference<F>(f: F, order: u64) -> Difference
where
    F: Fn(u64) -> SignedLogReal,
{
    let values: Vec<SignedLogReal> = (0..=order).map(f).collect();
    let mut row = values.clone();
    for _ in 0..order {
        for i in 0..row.len() - 1 {
            row[i] = row[i + 1] - row[i];
        }
        row.pop();
    }
    flag(row[0], largest_term(&values, order as usize))
}

/// The same quantity as [`forward_difference`], summed term by term.
pub fn alternating_binomial_sum(values: &[SignedLogReal], order: usize) -> Difference {
    let mut pos = Vec::with_capacity(order + 1);
    let mut neg = Vec::with_capacity(order + 1);
    for (i, v) in values.iter().enumerate().take(order + 1) {
        if v.is_zero() {
            continue;
        }
        let term = log_binomial(order as u64, i as u64) + v.logmag();
        let positive = (order - i).is_multiple_of(2) == (v.sign() == Sign::Positive);
        if positive {
            pos.push(term);
        } else {
            neg.push(term);
        }
    }
    let total = SignedLogReal::from_log(log_sum_exp(&pos)) - SignedLogReal::from_log(log_sum_exp(&neg));
    flag(total, largest_term(values, order))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn slr(x: f64) -> SignedLogReal {
        SignedLogReal::encode(x)
    }

    #[test]
    fn add_cancels_exactly() {
        assert_eq!(slr(3.0) + slr(-3.0), SignedLogReal::ZERO);
    }

    #[test]
    fn add_doubles_in_log_space() {
        let big = SignedLogReal::from_log(100.0);
        let s = big + big;
        assert_eq!(s.sign(), Sign::Positive);
        assert_relative_eq!(s.logmag(), 100.0 + 2f64.ln(), max_relative = 1e-15);
    }

    #[test]
    fn add_mixed_signs() {
        assert_relative_eq!((slr(2.5) + slr(-1.5)).decode(), 1.0, max_relative = 1e-12);
        assert_relative_eq!((slr(-2.5) + slr(1.5)).decode(), -1.0, max_relative = 1e-12);
    }

    #[test]
    fn zero_invariant() {
        let z = SignedLogReal::new(Sign::Positive, f64::NEG_INFINITY);
        assert!(z.is_zero());
        assert_eq!(SignedLogReal::new(Sign::Zero, 3.0).logmag(), f64::NEG_INFINITY);
        assert_eq!(slr(0.0), SignedLogReal::ZERO);
    }

    #[test]
    fn log_sum_exp_examples() {
        assert_relative_eq!(log_sum_exp(&[0.0, 0.0]), 2f64.ln(), max_relative = 1e-15);
        assert_relative_eq!(log_sum_exp(&[1000.0, 1000.0]), 1000.0 + 2f64.ln(), max_relative = 1e-15);
        assert_relative_eq!(
            log_sum_exp(&[0.0, f64::NEG_INFINITY, 3f64.ln()]),
            4f64.ln(),
            max_relative = 1e-15
        );
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[1.0, f64::INFINITY]), f64::INFINITY);
    }

    #[test]
    fn log_binomial_small() {
        assert_eq!(log_binomial(2, 2), 0.0);
        assert_relative_eq!(log_binomial(4, 2), 6f64.ln(), max_relative = 1e-15);
        assert_relative_eq!(log_binomial(66, 33), (7219428434016265740u64 as f64).ln(), max_relative = 1e-15);
    }

    #[test]
    fn log_binomial_large_matches_independent_log_gamma() {
        use statrs::function::gamma::ln_gamma;
        for &(n, k) in &[(600_000u64, 300_000u64), (100, 50), (67, 3)] {
            let oracle = ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0);
            assert_relative_eq!(log_binomial(n, k), oracle, max_relative = 1e-12);
        }
        // Log-gamma differences are too coarse here; reference value from
        // 40-digit arithmetic.
        assert_relative_eq!(log_binomial(1_000_000, 17), 201.358_470_034_507_77, max_relative = 1e-15);
        assert_relative_eq!(log_binomial(1_000_000, 999_983), 201.358_470_034_507_77, max_relative = 1e-15);
    }

    #[test]
    #[should_panic]
    fn log_binomial_rejects_k_above_n() {
        log_binomial(3, 4);
    }

    #[test]
    fn second_difference_of_square() {
        let d = forward_difference(|i| slr((i * i) as f64), 2);
        assert_relative_eq!(d.value.decode(), 2.0, max_relative = 1e-14);
        assert!(!d.cancellation_limited);
    }

    #[test]
    fn difference_of_constant_vanishes() {
        for order in 1..12 {
            let d = forward_difference(|_| slr(7.5), order);
            assert!(d.value.is_zero());
        }
    }

    #[test]
    fn gaussian_mgf_second_difference_is_chi_square() {
        // i -> e^{i(i-1)/2}: values 1, 1, e.
        let d = forward_difference(|i| SignedLogReal::from_log((i * (i.max(1) - 1)) as f64 / 2.0), 2);
        assert_relative_eq!(d.value.decode(), std::f64::consts::E - 1.0, max_relative = 1e-14);
    }

    #[test]
    fn cancellation_is_flagged() {
        // 1 + 1e-14 x is nearly constant; its second difference is pure rounding noise.
        let d = forward_difference(|i| slr(1e6 + 1e-9 * i as f64), 2);
        assert!(d.cancellation_limited);
        assert!(d.value.is_zero());
    }

    #[test]
    fn table_matches_single_orders() {
        let vals: Vec<_> = (0..10).map(|i| SignedLogReal::from_log(0.3 * (i * i) as f64)).collect();
        let table = forward_difference_table(&vals);
        for (k, d) in table.iter().enumerate() {
            let single = forward_difference(|i| vals[i as usize], k as u64);
            assert_relative_eq!(d.value.decode(), single.value.decode(), max_relative = 1e-13);
        }
    }

    fn magnitude() -> impl Strategy<Value = f64> {
        (-300.0f64..300.0, prop::bool::ANY).prop_map(|(e, neg)| {
            let x = 10f64.powf(e);
            if neg { -x } else { x }
        })
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(x in magnitude()) {
            let back = SignedLogReal::encode(x).decode();
            prop_assert!(((back - x) / x).abs() <= 1e-12);
        }

        #[test]
        fn add_commutes_and_associates(xs in prop::collection::vec(magnitude(), 3)) {
            let [a, b, c] = [slr(xs[0]), slr(xs[1]), slr(xs[2])];
            let ab = a + b;
            let ba = b + a;
            prop_assert_eq!(ab, ba);
            let left = (a + b) + c;
            let right = a + (b + c);
            // Associativity only holds when no cancellation happens in between.
            let scale = xs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let total = left.decode();
            if total.abs() > 1e-6 * scale {
                prop_assert!(((left.decode() - right.decode()) / total).abs() <= 1e-10);
            }
        }

        #[test]
        fn log_sum_exp_is_shift_invariant(
            xs in prop::collection::vec(-500.0f64..500.0, 1..20),
            c in -1000.0f64..1000.0,
        ) {
            let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
            let lhs = log_sum_exp(&shifted);
            let rhs = log_sum_exp(&xs) + c;
            let scale = xs.iter().fold(c.abs(), |m, x| m.max(x.abs())).max(1.0);
            prop_assert!((lhs - rhs).abs() <= 4.0 * f64::EPSILON * scale);
        }

        #[test]
        fn recursion_matches_explicit_sum(
            a in -2.0f64..2.0,
            b in -0.5f64..0.5,
            c in 0.0f64..0.3,
            order in 1usize..=20,
        ) {
            // Smooth, sign-changing test function f(i) = sin(a + b i) e^{c i}.
            let vals: Vec<_> = (0..=order)
                .map(|i| slr((a + b * i as f64).sin() * (c * i as f64).exp()))
                .collect();
            let rec = forward_difference(|i| vals[i as usize], order as u64);
            let direct = alternating_binomial_sum(&vals, order);
            let largest = largest_term(&vals, order);
            if !rec.cancellation_limited && rec.value.logmag() > largest + (1e-6f64).ln() {
                let (r, d) = (rec.value.decode(), direct.value.decode());
                // Both evaluations carry rounding proportional to the absolute
                // binomial mass, which can exceed the largest single term.
                let mass: f64 = (0..=order)
                    .map(|i| (log_binomial(order as u64, i as u64) + vals[i].logmag()).exp())
                    .sum();
                prop_assert!((r - d).abs() <= 1e-9 * d.abs() + 1e-13 * mass, "order {} rec {} direct {}", order, r, d);
            }
        }
    }
}
