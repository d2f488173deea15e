//! The left-anchored q-derivative and Jackson q-integral on an arbitrary
//! interval, plus probes of their classical limits as `q -> 1`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{QError, Result};
use crate::qcore::{jackson_sum_weighted, Interval, QParam, SeriesResult, TruncationPolicy};

/// Shared real-valued function handle.
pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A truncated Jackson integral together with its convergence diagnostics.
pub type QIntegralResult = SeriesResult;

/// Which convexity properties a function is declared to have on its interval.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvexityClaims {
    /// `f` itself is convex.
    pub function: bool,
    /// `t -> |aD_q f(t)|^r` is convex for every `r >= 1` and every `q`.
    pub abs_q_derivative_pow: bool,
}

/// An evaluatable function on an interval plus what is known about it.
#[derive(Clone)]
pub struct FuncSpec {
    name: String,
    interval: Interval,
    eval: RealFn,
    classical_derivative: Option<RealFn>,
    derivative_bound: Option<f64>,
    classical_integral: Option<f64>,
    claims: ConvexityClaims,
    continuous: bool,
    smooth: bool,
}

impl fmt::Debug for FuncSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FuncSpec")
            .field("name", &self.name)
            .field("interval", &self.interval)
            .field(
                "has_classical_derivative",
                &self.classical_derivative.is_some(),
            )
            .field("derivative_bound", &self.derivative_bound)
            .field("classical_integral", &self.classical_integral)
            .field("claims", &self.claims)
            .field("continuous", &self.continuous)
            .field("smooth", &self.smooth)
            .finish()
    }
}

impl FuncSpec {
    /// A continuous, non-smooth-by-default function with no metadata.
    pub fn new(
        name: impl Into<String>,
        interval: Interval,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            interval,
            eval: Arc::new(eval),
            classical_derivative: None,
            derivative_bound: None,
            classical_integral: None,
            claims: ConvexityClaims::default(),
            continuous: true,
            smooth: false,
        }
    }

    /// Attaches `f'`; functions with a classical derivative are smooth.
    pub fn with_derivative(mut self, df: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.classical_derivative = Some(Arc::new(df));
        self.smooth = true;
        self
    }

    /// Attaches `f'` for a function that is differentiable only almost
    /// everywhere (kinks), without marking it smooth.
    pub fn with_piecewise_derivative(
        mut self,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.classical_derivative = Some(Arc::new(df));
        self.smooth = false;
        self
    }

    pub fn with_derivative_bound(mut self, m: f64) -> Self {
        self.derivative_bound = Some(m);
        self
    }

    pub fn with_classical_integral(mut self, value: f64) -> Self {
        self.classical_integral = Some(value);
        self
    }

    pub fn with_claims(mut self, claims: ConvexityClaims) -> Self {
        self.claims = claims;
        self
    }

    pub fn discontinuous(mut self) -> Self {
        self.continuous = false;
        self.smooth = false;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    pub fn derivative_bound(&self) -> Option<f64> {
        self.derivative_bound
    }

    pub fn classical_integral(&self) -> Option<f64> {
        self.classical_integral
    }

    pub fn claims(&self) -> ConvexityClaims {
        self.claims
    }

    pub fn is_continuous(&self) -> bool {
        self.continuous
    }

    pub fn is_smooth(&self) -> bool {
        self.smooth
    }

    pub fn has_classical_derivative(&self) -> bool {
        self.classical_derivative.is_some()
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        (self.eval)(t)
    }

    /// `f(t)`, rejecting non-finite values.
    pub fn eval_checked(&self, t: f64) -> Result<f64> {
        let v = self.eval(t);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(QError::NonFiniteValue {
                function: self.name.clone(),
                t,
            })
        }
    }

    pub fn classical_derivative(&self, t: f64) -> Option<f64> {
        self.classical_derivative.as_ref().map(|df| df(t))
    }

    /// Spot-checks finiteness on the first `count` Jackson nodes.
    pub fn check_finite_on_nodes(&self, q: QParam, count: usize) -> Result<()> {
        let mut qn = 1.0;
        for _ in 0..count {
            self.eval_checked(self.interval.node(qn))?;
            qn *= q.value();
        }
        Ok(())
    }
}

/// `aD_q f(t) = [f(t) - f(qt + (1-q)a)] / [(1-q)(t-a)]` for `t` in `(a, b]`.
pub fn q_derivative(f: &FuncSpec, q: QParam, a: f64, t: f64) -> Result<f64> {
    let itv = f.interval();
    if !(itv.contains(t) && t >= a) {
        return Err(QError::Domain { t, a, b: itv.b() });
    }
    if t == a {
        return Err(QError::EndpointRequiresLimit);
    }
    let qv = q.value();
    let inner = a + qv * (t - a);
    let num = f.eval_checked(t)? - f.eval_checked(inner)?;
    Ok(num / ((1.0 - qv) * (t - a)))
}

/// Defaults for the left-endpoint limit.
pub const ENDPOINT_STEP_SCALE: f64 = 0.5;
pub const ENDPOINT_PROBES: usize = 40;
pub const ENDPOINT_TOLERANCE: f64 = 1e-8;

/// Richardson depth used to accelerate the endpoint probe sequence.
const RICHARDSON_DEPTH: usize = 3;

/// `aD_q f(a)` as the limit of `aD_q f(t_k)` along `t_k = a + (b-a) step^k`.
///
/// The probe sequence is Richardson-accelerated (the error of a smooth
/// q-difference quotient is a power series in `t - a`) and accepted once two
/// successive accelerated values agree to [`ENDPOINT_TOLERANCE`].
pub fn q_derivative_at_left_endpoint(
    f: &FuncSpec,
    q: QParam,
    a: f64,
    step_scale: f64,
) -> Result<f64> {
    if !(step_scale > 0.0 && step_scale < 1.0) {
        return Err(QError::Precondition(format!(
            "step_scale must lie in (0,1), got {step_scale}"
        )));
    }
    let b = f.interval().b();
    let mut prev_row: Vec<f64> = Vec::new();
    let mut prev_best: Option<f64> = None;
    let mut last = f64::NAN;
    for k in 1..=ENDPOINT_PROBES {
        let t = a + (b - a) * step_scale.powi(k as i32);
        if t <= a {
            break;
        }
        let d = q_derivative(f, q, a, t)?;
        let depth = prev_row.len().min(RICHARDSON_DEPTH);
        let mut row = Vec::with_capacity(depth + 1);
        row.push(d);
        let mut ratio = 1.0;
        for j in 1..=depth {
            ratio *= step_scale;
            let v = (row[j - 1] - ratio * prev_row[j - 1]) / (1.0 - ratio);
            row.push(v);
        }
        let best = *row.last().expect("row has at least one entry");
        if !best.is_finite() {
            return Err(QError::LimitDoesNotExist(format!(
                "non-finite probe at k = {k}"
            )));
        }
        if depth == RICHARDSON_DEPTH {
            if let Some(p) = prev_best {
                if (best - p).abs() <= ENDPOINT_TOLERANCE * best.abs().max(1.0) {
                    return Ok(best);
                }
            }
        }
        prev_best = (depth == RICHARDSON_DEPTH).then_some(best);
        last = best;
        prev_row = row;
    }
    Err(QError::LimitDoesNotExist(format!(
        "`{}`: probe sequence not Cauchy after {ENDPOINT_PROBES} probes (last value {last})",
        f.name()
    )))
}

/// Jackson integral `(1-q)(b-a) sum q^n f(q^n b + (1-q^n) a)`.
pub fn q_integral(
    f: &FuncSpec,
    q: QParam,
    itv: Interval,
    policy: &TruncationPolicy,
) -> Result<QIntegralResult> {
    jackson_sum_weighted(|_, qn| f.eval(itv.node(qn)), q, itv.len(), policy)
}

/// `int_c^b f d_q t` in the formal-difference sense
/// `int_a^b - int_a^c`, both integrals anchored at `a`.
pub fn q_integral_between(
    f: &FuncSpec,
    q: QParam,
    a: f64,
    c: f64,
    b: f64,
    policy: &TruncationPolicy,
) -> Result<f64> {
    if !(a <= c && c <= b) {
        return Err(QError::Precondition(format!(
            "require a <= c <= b, got a={a}, c={c}, b={b}"
        )));
    }
    let full = q_integral(f, q, Interval::new(a, b)?, policy)?.value;
    let part = if c == a {
        0.0
    } else {
        q_integral(f, q, Interval::new(a, c)?, policy)?.value
    };
    Ok(full - part)
}

/// Behaviour of a q-quantity along a schedule of `q` values approaching 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub probe: String,
    pub function: String,
    pub probe_points: Vec<(f64, f64)>,
    pub extrapolated_limit: f64,
    pub reference: f64,
    pub tolerance: f64,
    pub converged: bool,
}

impl ConvergenceRecord {
    fn build(
        probe: &str,
        function: &str,
        points: Vec<(f64, f64)>,
        reference: f64,
        tolerance: f64,
        all_ok: bool,
    ) -> Self {
        let limit = extrapolate_to_q_one(&points);
        let converged = all_ok && (limit - reference).abs() <= tolerance;
        Self {
            probe: probe.to_string(),
            function: function.to_string(),
            probe_points: points,
            extrapolated_limit: limit,
            reference,
            tolerance,
            converged,
        }
    }

    /// `|value - reference|` at each probe.
    pub fn deviations(&self) -> Vec<f64> {
        self.probe_points
            .iter()
            .map(|&(_, v)| (v - self.reference).abs())
            .collect()
    }
}

/// Linear extrapolation in `h = 1 - q` through the two probes closest to 1.
fn extrapolate_to_q_one(points: &[(f64, f64)]) -> f64 {
    match points {
        [] => f64::NAN,
        [(_, v)] => *v,
        _ => {
            let (q1, v1) = points[points.len() - 2];
            let (q2, v2) = points[points.len() - 1];
            let (h1, h2) = (1.0 - q1, 1.0 - q2);
            if h1 == h2 {
                v2
            } else {
                (h1 * v2 - h2 * v1) / (h1 - h2)
            }
        }
    }
}

/// `q -> 1` limit of `aD_q f(t)` compared with `f'(t)`.
pub fn classical_limit_probe_derivative(
    f: &FuncSpec,
    a: f64,
    t: f64,
    q_schedule: &[QParam],
    tolerance: f64,
) -> Result<ConvergenceRecord> {
    let reference = f
        .classical_derivative(t)
        .ok_or_else(|| QError::Config(format!("`{}` has no classical derivative", f.name())))?;
    if q_schedule.is_empty() {
        return Err(QError::Precondition("empty q schedule".into()));
    }
    let points = q_schedule
        .iter()
        .map(|&q| q_derivative(f, q, a, t).map(|v| (q.value(), v)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceRecord::build(
        "derivative",
        f.name(),
        points,
        reference,
        tolerance,
        true,
    ))
}

/// `q -> 1` limit of the Jackson integral compared with a supplied classical
/// integral. Non-convergent sums mark the record unconverged.
pub fn classical_limit_probe_integral(
    f: &FuncSpec,
    itv: Interval,
    q_schedule: &[QParam],
    reference: f64,
    policy: &TruncationPolicy,
    tolerance: f64,
) -> Result<ConvergenceRecord> {
    if q_schedule.is_empty() {
        return Err(QError::Precondition("empty q schedule".into()));
    }
    let mut all_ok = true;
    let mut points = Vec::with_capacity(q_schedule.len());
    for &q in q_schedule {
        let r = q_integral(f, q, itv, policy)?;
        all_ok &= r.converged;
        points.push((q.value(), r.value));
    }
    Ok(ConvergenceRecord::build(
        "integral",
        f.name(),
        points,
        reference,
        tolerance,
        all_ok,
    ))
}

/// `q_k = 1 - 2^-k` for `k = 1..=k_max`.
pub fn dyadic_schedule(k_max: u32) -> Vec<QParam> {
    (1..=k_max)
        .map(|k| QParam::new(1.0 - 0.5_f64.powi(k as i32)).expect("1 - 2^-k lies in (0,1)"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn q(v: f64) -> QParam {
        QParam::new(v).unwrap()
    }

    fn unit(name: &str, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> FuncSpec {
        FuncSpec::new(name, Interval::unit(), f)
    }

    #[test]
    fn derivative_of_constant_and_identity() {
        let c = unit("c", |_| 4.0);
        let id = unit("t", |t| t);
        for (qv, t) in [(0.1, 0.3), (0.5, 1.0), (0.9, 0.01)] {
            assert_eq!(q_derivative(&c, q(qv), 0.0, t).unwrap(), 0.0);
            assert_abs_diff_eq!(
                q_derivative(&id, q(qv), 0.0, t).unwrap(),
                1.0,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn derivative_of_square_off_origin() {
        let sq = FuncSpec::new("sq", Interval::new(1.0, 3.0).unwrap(), |t| t * t);
        // (4 - 2.25) / (0.5 * 1)
        assert_abs_diff_eq!(
            q_derivative(&sq, q(0.5), 1.0, 2.0).unwrap(),
            3.5,
            epsilon = 1e-14
        );
    }

    #[test]
    fn derivative_rejects_endpoint_and_outside() {
        let id = unit("t", |t| t);
        assert_eq!(
            q_derivative(&id, q(0.5), 0.0, 0.0),
            Err(QError::EndpointRequiresLimit)
        );
        assert!(matches!(
            q_derivative(&id, q(0.5), 0.0, 1.5),
            Err(QError::Domain { .. })
        ));
    }

    #[test]
    fn endpoint_limits() {
        let sq = unit("sq", |t| t * t);
        let id = unit("t", |t| t);
        let ex = unit("exp", f64::exp);
        assert_abs_diff_eq!(
            q_derivative_at_left_endpoint(&sq, q(0.5), 0.0, 0.5).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            q_derivative_at_left_endpoint(&id, q(0.5), 0.0, 0.5).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            q_derivative_at_left_endpoint(&ex, q(0.3), 0.0, 0.5).unwrap(),
            1.0,
            epsilon = 1e-8
        );
    }

    #[test]
    fn endpoint_limit_of_sqrt_does_not_exist() {
        let rt = unit("sqrt", f64::sqrt);
        let err = q_derivative_at_left_endpoint(&rt, q(0.5), 0.0, 0.5).unwrap_err();
        assert!(matches!(err, QError::LimitDoesNotExist(_)), "{err:?}");
    }

    #[test]
    fn integral_basic_values() {
        let p = TruncationPolicy::default();
        let one = FuncSpec::new("one", Interval::new(-1.0, 2.0).unwrap(), |_| 1.0);
        assert_abs_diff_eq!(
            q_integral(&one, q(0.7), one.interval(), &p).unwrap().value,
            3.0,
            epsilon = 1e-12
        );
        let id = unit("t", |t| t);
        assert_abs_diff_eq!(
            q_integral(&id, q(0.5), Interval::unit(), &p).unwrap().value,
            2.0 / 3.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn integral_between_formal_difference() {
        let p = TruncationPolicy::default();
        let id = unit("t", |t| t);
        let full = q_integral(&id, q(0.5), Interval::unit(), &p).unwrap().value;
        assert_eq!(
            q_integral_between(&id, q(0.5), 0.0, 0.0, 1.0, &p).unwrap(),
            full
        );
        assert_eq!(
            q_integral_between(&id, q(0.5), 0.0, 1.0, 1.0, &p).unwrap(),
            0.0
        );
        assert_abs_diff_eq!(
            q_integral_between(&id, q(0.5), 0.0, 0.5, 1.0, &p).unwrap(),
            0.5,
            epsilon = 1e-14
        );
        assert!(q_integral_between(&id, q(0.5), 0.0, 1.2, 1.0, &p).is_err());
    }

    #[test]
    fn derivative_probe_of_square() {
        let sq = unit("sq", |t| t * t).with_derivative(|t| 2.0 * t);
        let rec =
            classical_limit_probe_derivative(&sq, 0.0, 0.5, &dyadic_schedule(12), 1e-9).unwrap();
        assert!(rec.converged);
        assert_abs_diff_eq!(rec.extrapolated_limit, 1.0, epsilon = 1e-12);
        let dev = rec.deviations();
        for w in dev.windows(2) {
            assert_abs_diff_eq!(w[1] / w[0], 0.5, epsilon = 1e-9);
        }
    }

    #[test]
    fn derivative_probe_without_metadata_errors() {
        let sq = unit("sq", |t| t * t);
        let err =
            classical_limit_probe_derivative(&sq, 0.0, 0.5, &dyadic_schedule(3), 1e-9).unwrap_err();
        assert!(matches!(err, QError::Config(_)));
    }

    #[test]
    fn integral_probe_of_square_and_identity() {
        let p = TruncationPolicy::default();
        let sq = unit("sq", |t| t * t);
        let r = q_integral(&sq, q(0.999), Interval::unit(), &p).unwrap();
        let closed = 1.0 / (1.0 + 0.999 + 0.999 * 0.999);
        assert_abs_diff_eq!(r.value, closed, epsilon = 1e-12);
        assert!((r.value - 1.0 / 3.0).abs() < 4e-4);

        let id = unit("t", |t| t);
        let rec = classical_limit_probe_integral(
            &id,
            Interval::unit(),
            &dyadic_schedule(12),
            0.5,
            &p,
            1e-6,
        )
        .unwrap();
        assert!(rec.converged);
        let dev = rec.deviations();
        for (w, k) in dev.windows(2).zip(1..) {
            // (1-q)/(2(1+q)) with 1-q = 2^-k
            let h1 = 0.5_f64.powi(k);
            let h2 = 0.5_f64.powi(k + 1);
            let expect = (h2 / (2.0 * (2.0 - h2))) / (h1 / (2.0 * (2.0 - h1)));
            assert_abs_diff_eq!(w[1] / w[0], expect, epsilon = 1e-9);
        }
    }

    proptest! {
        #[test]
        fn integral_is_linear(
            qv in 0.05f64..0.95,
            c in proptest::collection::vec(-2.0f64..2.0, 6),
            alpha in -2.0f64..2.0, beta in -2.0f64..2.0,
        ) {
            let p = TruncationPolicy::default();
            let (c0, c1, c2, d0, d1, d2) = (c[0], c[1], c[2], c[3], c[4], c[5]);
            let f = move |t: f64| c0 + c1 * t + c2 * t * t;
            let g = move |t: f64| d0 + d1 * t * t * t + d2 * t.powi(4);
            let itv = Interval::new(-1.0, 2.0).unwrap();
            let ff = FuncSpec::new("f", itv, f);
            let gg = FuncSpec::new("g", itv, g);
            let fg = FuncSpec::new("fg", itv, move |t| alpha * f(t) + beta * g(t));
            let qq = q(qv);
            let lhs = q_integral(&fg, qq, itv, &p).unwrap().value;
            let rhs = alpha * q_integral(&ff, qq, itv, &p).unwrap().value + beta * q_integral(&gg, qq, itv, &p).unwrap().value;
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        }

        #[test]
        fn positivity_and_triangle(qv in 0.05f64..0.95, k in 0.0f64..6.0, c in 0.0f64..1.0) {
            let p = TruncationPolicy::default();
            let qq = q(qv);
            let f = unit("f", move |t| (k * t).sin() - c);
            let absf = unit("absf", move |t| ((k * t).sin() - c).abs());
            let i = q_integral(&f, qq, Interval::unit(), &p).unwrap().value;
            let ia = q_integral(&absf, qq, Interval::unit(), &p).unwrap().value;
            prop_assert!(ia >= 0.0);
            prop_assert!(i.abs() <= ia + 1e-12);
        }

        #[test]
        fn integral_of_q_derivative_telescopes(qv in 0.05f64..0.95, k in -2.0f64..2.0) {
            let p = TruncationPolicy::default();
            let qq = q(qv);
            let itv = Interval::new(-1.0, 2.0).unwrap();
            let big_f = FuncSpec::new("F", itv, move |t| (k * t).exp() + t * t);
            let df = FuncSpec::new("dF", itv, {
                let big_f = big_f.clone();
                move |t| if t == -1.0 { 0.0 } else { q_derivative(&big_f, qq, -1.0, t).unwrap() }
            });
            let v = q_integral(&df, qq, itv, &p).unwrap().value;
            let expect = big_f.eval(2.0) - big_f.eval(-1.0);
            prop_assert!((v - expect).abs() <= 1e-9 * (1.0 + expect.abs()));
        }

        #[test]
        fn integral_of_identity_matches_closed_form(qv in 0.05f64..0.95, a in -3.0f64..1.0, w in 0.1f64..4.0) {
            let p = TruncationPolicy::default();
            let b = a + w;
            let itv = Interval::new(a, b).unwrap();
            let id = FuncSpec::new("t", itv, |t| t);
            let v = q_integral(&id, q(qv), itv, &p).unwrap().value;
            let expect = (b - a) * (qv * a + b) / (1.0 + qv);
            prop_assert!((v - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
        }
    }
}
