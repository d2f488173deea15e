//! Built-in test functions with known q-calculus behaviour, and a sampled
//! midpoint-convexity checker.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{QError, Result};
use crate::qcore::{Interval, QParam, TruncationPolicy};
use crate::qops::{q_derivative, ConvexityClaims, FuncSpec};

pub const DEFAULT_SEED: u64 = 0x5EED;

/// Name of the discontinuous node indicator on `[-1, 2]`.
pub const NODE_INDICATOR: &str = "node_indicator";

const CLAIM_ALL: ConvexityClaims = ConvexityClaims {
    function: true,
    abs_q_derivative_pow: true,
};
const CLAIM_NONE: ConvexityClaims = ConvexityClaims {
    function: false,
    abs_q_derivative_pow: false,
};
const CLAIM_FUNCTION: ConvexityClaims = ConvexityClaims {
    function: true,
    abs_q_derivative_pow: false,
};

/// The built-in corpus with the node indicator built for `q = 0.5`.
pub fn builtin_corpus() -> Vec<FuncSpec> {
    builtin_corpus_at(QParam::new(0.5).expect("0.5 is a valid q"))
}

/// The built-in corpus; `q` only affects the node indicator, whose support is
/// the Jackson node set of that `q`.
pub fn builtin_corpus_at(q: QParam) -> Vec<FuncSpec> {
    let unit = Interval::unit();
    let wide = Interval::new(-1.0, 2.0).expect("valid interval");
    let e = std::f64::consts::E;

    let mut out = vec![
        FuncSpec::new("constant", unit, |_| 0.75)
            .with_derivative(|_| 0.0)
            .with_derivative_bound(0.0)
            .with_classical_integral(0.75)
            .with_claims(CLAIM_ALL),
        FuncSpec::new("affine", unit, |t| t)
            .with_derivative(|_| 1.0)
            .with_derivative_bound(1.0)
            .with_classical_integral(0.5)
            .with_claims(CLAIM_ALL),
        FuncSpec::new("affine_decreasing", unit, |t| 3.0 - 2.0 * t)
            .with_derivative(|_| -2.0)
            .with_derivative_bound(2.0)
            .with_classical_integral(2.0)
            .with_claims(CLAIM_ALL),
        FuncSpec::new("square", unit, |t| t * t)
            .with_derivative(|t| 2.0 * t)
            .with_derivative_bound(2.0)
            .with_classical_integral(1.0 / 3.0)
            .with_claims(CLAIM_ALL),
        FuncSpec::new("cube", unit, |t| t * t * t)
            .with_derivative(|t| 3.0 * t * t)
            .with_derivative_bound(3.0)
            .with_classical_integral(0.25)
            .with_claims(CLAIM_ALL),
        FuncSpec::new("quartic", unit, |t| t.powi(4))
            .with_derivative(|t| 4.0 * t.powi(3))
            .with_derivative_bound(4.0)
            .with_classical_integral(0.2)
            .with_claims(CLAIM_ALL),
        FuncSpec::new("quintic", unit, |t| t.powi(5))
            .with_derivative(|t| 5.0 * t.powi(4))
            .with_derivative_bound(5.0)
            .with_classical_integral(1.0 / 6.0)
            .with_claims(CLAIM_ALL),
        FuncSpec::new("exp", unit, f64::exp)
            .with_derivative(f64::exp)
            .with_derivative_bound(e)
            .with_classical_integral(e - 1.0)
            .with_claims(CLAIM_ALL),
        FuncSpec::new("abs_kink", unit, |t| (t - 0.5).abs())
            .with_piecewise_derivative(|t| if t < 0.5 { -1.0 } else { 1.0 })
            .with_derivative_bound(1.0)
            .with_classical_integral(0.25)
            .with_claims(CLAIM_FUNCTION),
    ];

    // Polynomials of degree 0..=5 on [-1, 2]; M is left to estimation.
    let wide_claims = [
        CLAIM_ALL,
        CLAIM_ALL,
        CLAIM_ALL,
        CLAIM_NONE,
        CLAIM_FUNCTION,
        CLAIM_NONE,
    ];
    let names = ["constant", "affine", "square", "cube", "quartic", "quintic"];
    for (deg, (name, claims)) in names.iter().zip(wide_claims).enumerate() {
        let k = deg as i32;
        let integral = if deg == 0 {
            2.25
        } else {
            (2f64.powi(k + 1) - (-1f64).powi(k + 1)) / (k + 1) as f64
        };
        let spec = if deg == 0 {
            FuncSpec::new(format!("{name}_wide"), wide, |_| 0.75).with_derivative(|_| 0.0)
        } else {
            FuncSpec::new(format!("{name}_wide"), wide, move |t| t.powi(k))
                .with_derivative(move |t| k as f64 * t.powi(k - 1))
        };
        out.push(spec.with_classical_integral(integral).with_claims(claims));
    }

    out.push(node_indicator(q));
    out
}

/// Indicator of the Jackson node set `{q^n 2 + (1 - q^n)(-1) : n >= 0}` on
/// `[-1, 2]`. Membership is decided by inverting the node index and
/// accepting points within `3e-12` of the nearest node.
pub fn node_indicator(q: QParam) -> FuncSpec {
    let itv = Interval::new(-1.0, 2.0).expect("valid interval");
    let ln_q = q.value().ln();
    let is_node = move |t: f64| -> bool {
        let offset = t - (-1.0);
        if offset <= 0.0 {
            return false;
        }
        let n_star = ((offset / 3.0).ln() / ln_q).round();
        if n_star < 0.0 {
            return false;
        }
        let qn = q.value().powf(n_star);
        let node = qn * 2.0 + -(1.0 - qn);
        (t - node).abs() <= 1e-12 * 3.0
    };
    FuncSpec::new(
        NODE_INDICATOR,
        itv,
        move |t| if is_node(t) { 1.0 } else { 0.0 },
    )
    .with_classical_integral(0.0)
    .with_claims(CLAIM_NONE)
    .discontinuous()
}

/// Sampling parameters for [`check_midpoint_convexity`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvexityCheck {
    pub samples: usize,
    pub seed: u64,
    pub tolerance: f64,
}

impl Default for ConvexityCheck {
    fn default() -> Self {
        Self {
            samples: 10_000,
            seed: DEFAULT_SEED,
            tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvexityVerdict {
    pub passed: bool,
    pub worst_violation: f64,
    /// `(t1, t2, lambda)` of the worst sampled chord.
    pub witness: (f64, f64, f64),
}

/// Largest sampled `g(l t1 + (1-l) t2) - [l g(t1) + (1-l) g(t2)]`.
///
/// Even-numbered samples use `l = 1/2`, odd ones a uniform random `l`.
pub fn check_midpoint_convexity<G>(
    g: G,
    itv: Interval,
    check: &ConvexityCheck,
) -> Result<ConvexityVerdict>
where
    G: Fn(f64) -> f64,
{
    if check.samples == 0 {
        return Err(QError::Precondition(
            "convexity check needs at least one sample".into(),
        ));
    }
    let eval = |t: f64| -> Result<f64> {
        let v = g(t);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(QError::NonFiniteValue {
                function: "convexity probe".into(),
                t,
            })
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(check.seed);
    let mut worst = f64::NEG_INFINITY;
    let mut witness = (itv.a(), itv.b(), 0.5);
    for i in 0..check.samples {
        let t1 = rng.gen_range(itv.a()..=itv.b());
        let t2 = rng.gen_range(itv.a()..=itv.b());
        let lambda = if i % 2 == 0 {
            0.5
        } else {
            rng.gen_range(0.0..=1.0)
        };
        let mid = lambda * t1 + (1.0 - lambda) * t2;
        let chord = lambda * eval(t1)? + (1.0 - lambda) * eval(t2)?;
        let v = eval(mid)? - chord;
        if v > worst {
            worst = v;
            witness = (t1, t2, lambda);
        }
    }
    Ok(ConvexityVerdict {
        passed: worst <= check.tolerance,
        worst_violation: worst,
        witness,
    })
}

/// Convexity of `t -> |aD_q f(t)|^r` on `[a + 1e-3 (b - a), b]`, away from
/// the endpoint where the difference quotient is a limit.
pub fn check_q_derivative_power_convexity(
    f: &FuncSpec,
    q: QParam,
    r: f64,
    check: &ConvexityCheck,
) -> Result<ConvexityVerdict> {
    let itv = f.interval();
    let a = itv.a();
    let probe = Interval::new(a + 1e-3 * itv.len(), itv.b())?;
    check_midpoint_convexity(
        |t| {
            q_derivative(f, q, a, t)
                .map(|d| d.abs().powf(r))
                .unwrap_or(f64::NAN)
        },
        probe,
        check,
    )
}

/// Estimate of `sup |aD_q f|` from the Jackson nodes of `[a, b]` and the
/// midpoints between consecutive nodes.
pub fn estimate_derivative_bound(
    f: &FuncSpec,
    q: QParam,
    policy: &TruncationPolicy,
) -> Result<f64> {
    let itv = f.interval();
    let a = itv.a();
    let cap = policy.n_max.min(10_000);
    let mut best = 0.0_f64;
    let mut qn = 1.0;
    let mut prev = itv.node(qn);
    for n in 0..cap {
        let node = itv.node(qn);
        if node <= a || qn < 1e-12 {
            break;
        }
        best = best.max(q_derivative(f, q, a, node)?.abs());
        if n > 0 {
            let mid = 0.5 * (node + prev);
            best = best.max(q_derivative(f, q, a, mid)?.abs());
        }
        prev = node;
        qn *= q.value();
    }
    Ok(best)
}
