//! Numeric foundations: the base `q`, intervals, truncation policy and the
//! Jackson summation engine every q-integral in the crate goes through.
//!
//! A Jackson sum is `scale * (1 - q) * sum_{n >= 0} q^n * term(n)`. The engine
//! truncates it once a geometric tail bound drops below the requested
//! relative tolerance.

use serde::{Deserialize, Serialize};

use crate::error::{QError, Result};

/// Number of trailing terms whose running maximum feeds the tail bound.
pub const TAIL_WINDOW: usize = 8;

/// Steps between re-synchronisations of the running power `q^n` with `powi`.
const POWER_RESYNC: usize = 64;

/// The base `q` of the calculus, strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct QParam(f64);

impl QParam {
    pub fn new(q: f64) -> Result<Self> {
        if q.is_finite() && q > 0.0 && q < 1.0 {
            Ok(Self(q))
        } else {
            Err(QError::InvalidQ(q))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// `q^n`.
    #[inline]
    pub fn pow(self, n: usize) -> f64 {
        match i32::try_from(n) {
            Ok(k) => self.0.powi(k),
            Err(_) => self.0.powf(n as f64),
        }
    }
}

impl TryFrom<f64> for QParam {
    type Error = QError;

    fn try_from(q: f64) -> Result<Self> {
        Self::new(q)
    }
}

impl From<QParam> for f64 {
    fn from(q: QParam) -> f64 {
        q.0
    }
}

/// A closed interval `[a, b]` with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    a: f64,
    b: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if a.is_finite() && b.is_finite() && a < b {
            Ok(Self { a, b })
        } else {
            Err(QError::InvalidInterval { a, b })
        }
    }

    /// `[0, 1]`.
    pub fn unit() -> Self {
        Self { a: 0.0, b: 1.0 }
    }

    #[inline]
    pub fn a(&self) -> f64 {
        self.a
    }

    #[inline]
    pub fn b(&self) -> f64 {
        self.b
    }

    #[inline]
    pub fn len(&self) -> f64 {
        self.b - self.a
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.a && t <= self.b
    }

    /// Jackson node `q^n b + (1 - q^n) a`, given `q^n`.
    #[inline]
    pub fn node(&self, q_pow_n: f64) -> f64 {
        self.a + q_pow_n * (self.b - self.a)
    }

    /// Normalised position `(x - a) / (b - a)`, clamped into `[0, 1]`.
    pub fn normalize(&self, x: f64) -> f64 {
        ((x - self.a) / self.len()).clamp(0.0, 1.0)
    }

    /// `n` evenly spaced points including both endpoints (`n >= 2`), or the
    /// midpoint when `n == 1`.
    pub fn uniform_grid(&self, n: usize) -> Vec<f64> {
        match n {
            0 => Vec::new(),
            1 => vec![0.5 * (self.a + self.b)],
            _ => (0..n)
                .map(|i| {
                    if i == n - 1 {
                        self.b
                    } else {
                        self.a + self.len() * (i as f64) / ((n - 1) as f64)
                    }
                })
                .collect(),
        }
    }
}

/// When to stop summing a Jackson series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    pub eps_rel: f64,
    pub n_max: usize,
}

impl TruncationPolicy {
    pub fn new(eps_rel: f64, n_max: usize) -> Result<Self> {
        if !(eps_rel.is_finite() && eps_rel > 0.0) {
            return Err(QError::InvalidPolicy(format!(
                "eps_rel must be > 0, got {eps_rel}"
            )));
        }
        if n_max == 0 {
            return Err(QError::InvalidPolicy("n_max must be >= 1".into()));
        }
        Ok(Self { eps_rel, n_max })
    }
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self {
            eps_rel: 1e-14,
            n_max: 200_000,
        }
    }
}

/// Outcome of a truncated series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesResult {
    pub value: f64,
    pub terms_used: usize,
    pub tail_estimate: f64,
    pub converged: bool,
}

/// `[n]_q = (1 - q^n) / (1 - q) = 1 + q + ... + q^(n-1)`.
pub fn q_bracket(n: usize, q: QParam) -> f64 {
    (0..n)
        .fold((0.0, 1.0), |(acc, qk), _| (acc + qk, qk * q.value()))
        .0
}

/// `scale * (1 - q) * sum_{n >= 0} q^n * term(n)`.
pub fn jackson_sum<F>(
    mut term: F,
    q: QParam,
    scale: f64,
    policy: &TruncationPolicy,
) -> Result<SeriesResult>
where
    F: FnMut(usize) -> f64,
{
    jackson_sum_weighted(|n, _| term(n), q, scale, policy)
}

/// Same as [`jackson_sum`], but the term also receives `q^n`, which saves
/// callers from recomputing the power when they need the node position.
pub fn jackson_sum_weighted<F>(
    mut term: F,
    q: QParam,
    scale: f64,
    policy: &TruncationPolicy,
) -> Result<SeriesResult>
where
    F: FnMut(usize, f64) -> f64,
{
    let qv = q.value();
    let factor = scale * (1.0 - qv);
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    let mut window = [0.0_f64; TAIL_WINDOW];
    let mut q_pow = 1.0_f64;
    let mut tail = f64::INFINITY;

    for n in 0..policy.n_max {
        if n > 0 && n % POWER_RESYNC == 0 {
            q_pow = q.pow(n);
        }
        let t = term(n, q_pow);
        if !t.is_finite() {
            return Err(QError::NonFiniteTerm { index: n });
        }
        // Neumaier compensated accumulation of q^n * term(n).
        let x = q_pow * t;
        let s = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - s) + x;
        } else {
            comp += (x - s) + sum;
        }
        sum = s;
        window[n % TAIL_WINDOW] = t.abs();

        q_pow *= qv;
        if n + 1 >= TAIL_WINDOW {
            let recent = window.iter().copied().fold(0.0, f64::max);
            tail = recent * q_pow * scale.abs();
            let value = factor * (sum + comp);
            if tail <= policy.eps_rel * (1.0 + value.abs()) {
                return Ok(SeriesResult {
                    value,
                    terms_used: n + 1,
                    tail_estimate: tail,
                    converged: true,
                });
            }
        }
    }

    Ok(SeriesResult {
        value: factor * (sum + comp),
        terms_used: policy.n_max,
        tail_estimate: tail,
        converged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn q(v: f64) -> QParam {
        QParam::new(v).unwrap()
    }

    #[test]
    fn qparam_rejects_out_of_range() {
        for bad in [0.0, 1.0, -0.2, 1.5, f64::NAN] {
            assert!(QParam::new(bad).is_err(), "{bad}");
        }
        assert!(QParam::new(0.5).is_ok());
    }

    #[test]
    fn interval_requires_a_below_b() {
        assert!(Interval::new(1.0, 1.0).is_err());
        assert!(Interval::new(2.0, 1.0).is_err());
        assert!(Interval::new(-1.0, 2.0).is_ok());
    }

    #[test]
    fn policy_validation() {
        assert!(TruncationPolicy::new(0.0, 10).is_err());
        assert!(TruncationPolicy::new(1e-12, 0).is_err());
    }

    #[test]
    fn bracket_small_values() {
        assert_eq!(q_bracket(1, q(0.3)), 1.0);
        assert_eq!(q_bracket(2, q(0.5)), 1.5);
        assert_eq!(q_bracket(3, q(0.5)), 1.75);
    }

    #[test]
    fn grid_includes_endpoints() {
        let g = Interval::new(-1.0, 2.0).unwrap().uniform_grid(9);
        assert_eq!(g.len(), 9);
        assert_eq!(g[0], -1.0);
        assert_eq!(g[8], 2.0);
        assert_abs_diff_eq!(g[4], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn geometric_series_sums_to_one() {
        let r = jackson_sum(|_| 1.0, q(0.5), 1.0, &TruncationPolicy::default()).unwrap();
        assert!(r.converged);
        assert_abs_diff_eq!(r.value, 1.0, epsilon = 1e-13);
    }

    #[test]
    fn power_terms_sum_to_reciprocal_of_one_plus_q() {
        // Oracle: the exact value (1-q)/(1-q^2) = 1/(1+q) checked against a
        // long explicit partial sum, independent of the engine's stopping rule.
        let qv = 0.5_f64;
        let brute: f64 = (0..200).map(|n| qv.powi(n) * qv.powi(n)).sum::<f64>() * (1.0 - qv);
        assert_abs_diff_eq!(brute, 2.0 / 3.0, epsilon = 1e-15);
        let qq = q(qv);
        let r = jackson_sum(|n| qq.pow(n), qq, 1.0, &TruncationPolicy::default()).unwrap();
        assert_abs_diff_eq!(r.value, 2.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn nan_term_reports_index() {
        let err = jackson_sum(
            |n| if n == 3 { f64::NAN } else { 1.0 },
            q(0.5),
            1.0,
            &TruncationPolicy::default(),
        )
        .unwrap_err();
        assert_eq!(err, QError::NonFiniteTerm { index: 3 });
    }

    #[test]
    fn cap_reached_is_flagged() {
        let policy = TruncationPolicy::new(1e-14, 10).unwrap();
        let r = jackson_sum(|_| 1.0, q(0.99), 1.0, &policy).unwrap();
        assert!(!r.converged);
        assert_eq!(r.terms_used, 10);
    }

    #[test]
    fn converged_result_respects_tail_invariant() {
        let policy = TruncationPolicy::default();
        for qv in [0.1, 0.5, 0.9, 0.999] {
            let r = jackson_sum(|n| 1.0 + (n as f64).sin(), q(qv), 2.5, &policy).unwrap();
            assert!(r.converged);
            assert!(r.tail_estimate <= policy.eps_rel * (1.0 + r.value.abs()));
        }
    }

    proptest! {
        #[test]
        fn bracket_identity(n in 1usize..200, qv in 0.001f64..0.999) {
            let qq = q(qv);
            let lhs = q_bracket(n, qq) * (1.0 - qv) + qv.powi(n as i32);
            prop_assert!((lhs - 1.0).abs() <= 1e-14);
        }

        #[test]
        fn sum_is_linear(
            qv in 0.05f64..0.95,
            c1 in -3.0f64..3.0, c2 in -3.0f64..3.0,
            alpha in -2.0f64..2.0, beta in -2.0f64..2.0,
        ) {
            let qq = q(qv);
            let f = |n: usize| c1 * qq.pow(n) + 1.0;
            let g = |n: usize| (c2 * n as f64).cos();
            let p = TruncationPolicy::default();
            let sf = jackson_sum(f, qq, 1.0, &p).unwrap().value;
            let sg = jackson_sum(g, qq, 1.0, &p).unwrap().value;
            let sfg = jackson_sum(|n| alpha * f(n) + beta * g(n), qq, 1.0, &p).unwrap().value;
            prop_assert!((sfg - (alpha * sf + beta * sg)).abs() <= 1e-12);
        }

        #[test]
        fn nonnegative_partial_sums_nondecreasing(qv in 0.05f64..0.95, k in 1usize..60) {
            let qq = q(qv);
            let term = |n: usize| ((n * 7 + 3) % 5) as f64;
            let mut prev = f64::NEG_INFINITY;
            for cap in 1..=k {
                let p = TruncationPolicy::new(1e-300, cap).unwrap();
                let v = jackson_sum(term, qq, 1.0, &p).unwrap().value;
                prop_assert!(v >= prev);
                prev = v;
            }
        }
    }
}
