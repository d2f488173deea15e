//! The quantum Montgomery kernel and both sides of the quantum Montgomery
//! identity
//!
//! ```text
//! f(x) - mean_q(f) = (b - a) * int_0^1 K_q(t) aD_q f(tb + (1-t)a) d_q t
//! ```
//!
//! The right-hand side is evaluated in two ways:
//!
//! * [`KernelForm::FormalSplit`] reads `int_s^1` as `int_0^1 - int_0^s`, so
//!   the right side becomes `int_0^1 (qt - 1) D d_q t + int_0^s D d_q t`.
//!   The second sum samples the nodes `s q^n`. This form is exact for every
//!   `x` whenever `f` is continuous at `a`.
//! * [`KernelForm::Pointwise`] is a single Jackson sum on the nodes `q^n` with
//!   the kernel branch picked node by node. It telescopes to
//!   `f(p_N) - mean` where `p_N` is the largest node not exceeding `x`, so it
//!   matches the left side only when `x` is itself a node.

use serde::{Deserialize, Serialize};

use crate::error::{QError, Result};
use crate::qcore::{jackson_sum_weighted, Interval, QParam, SeriesResult, TruncationPolicy};
use crate::qops::{q_derivative, q_integral, FuncSpec, QIntegralResult};

/// Position of `x` inside `[a, b]`: `s = (x-a)/(b-a)`, `u = 1 - s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedPoint {
    pub s: f64,
    pub u: f64,
}

impl NormalizedPoint {
    pub fn new(itv: Interval, x: f64) -> Result<Self> {
        if !itv.contains(x) {
            return Err(QError::Domain {
                t: x,
                a: itv.a(),
                b: itv.b(),
            });
        }
        let s = if x == itv.b() { 1.0 } else { itv.normalize(x) };
        Ok(Self { s, u: 1.0 - s })
    }

    /// `Some(k)` when `s = q^k` to within `1e-12` relative, i.e. `x` is a
    /// Jackson node of `[a, b]`.
    pub fn node_index(&self, q: QParam) -> Option<usize> {
        if self.s <= 0.0 {
            return None;
        }
        let k = (self.s.ln() / q.value().ln()).round();
        if !(0.0..=1e9).contains(&k) {
            return None;
        }
        let k = k as usize;
        ((q.pow(k) - self.s).abs() <= 1e-12 * self.s).then_some(k)
    }
}

/// `K_q(t) = qt` for `t <= s`, `qt - 1` for `t > s`.
#[inline]
pub fn kernel(t: f64, s: f64, q: QParam) -> f64 {
    if t <= s {
        q.value() * t
    } else {
        q.value() * t - 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelForm {
    FormalSplit,
    Pointwise,
}

impl KernelForm {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::FormalSplit => "formal_split",
            Self::Pointwise => "pointwise",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityDiagnostics {
    /// The Jackson integral of `f` on `[a, b]`.
    pub mean_integral: QIntegralResult,
    /// The kernel-side series (combined over its sub-sums).
    pub kernel_series: SeriesResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentitySides {
    pub function: String,
    pub q: f64,
    pub x: f64,
    pub form: KernelForm,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub diagnostics: IdentityDiagnostics,
}

impl IdentitySides {
    /// `|residual| <= tol * (1 + |lhs|)`.
    pub fn holds(&self, tol: f64) -> bool {
        self.residual.abs() <= tol * (1.0 + self.lhs.abs())
    }

    pub fn converged(&self) -> bool {
        self.diagnostics.mean_integral.converged && self.diagnostics.kernel_series.converged
    }
}

/// `aD_q f` at `t b + (1 - t) a`, `t > 0`.
pub(crate) fn derivative_at_unit(f: &FuncSpec, q: QParam, itv: Interval, t: f64) -> Result<f64> {
    let point = itv.node(t);
    q_derivative(f, q, itv.a(), point).map_err(|e| QError::NodeEvaluation {
        t: point,
        source: Box::new(e),
    })
}

/// Jackson sum over `[0, width]` of `t -> g(t)` where `g` may fail.
pub(crate) fn unit_sum<G>(
    mut g: G,
    q: QParam,
    width: f64,
    policy: &TruncationPolicy,
) -> Result<SeriesResult>
where
    G: FnMut(f64) -> Result<f64>,
{
    let mut failure = None;
    let r = jackson_sum_weighted(
        |_, qn| match g(width * qn) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        },
        q,
        width,
        policy,
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(r),
    }
}

pub(crate) fn combine(parts: &[SeriesResult], value: f64) -> SeriesResult {
    SeriesResult {
        value,
        terms_used: parts.iter().map(|p| p.terms_used).sum(),
        tail_estimate: parts.iter().map(|p| p.tail_estimate).sum(),
        converged: parts.iter().all(|p| p.converged),
    }
}

/// Both sides of the identity, right side in the formal-split form.
pub fn identity_sides(
    f: &FuncSpec,
    q: QParam,
    itv: Interval,
    x: f64,
    policy: &TruncationPolicy,
) -> Result<IdentitySides> {
    identity_sides_with(f, q, itv, x, policy, KernelForm::FormalSplit)
}

/// Both sides of the identity, right side as a single node-wise sum.
pub fn identity_sides_pointwise(
    f: &FuncSpec,
    q: QParam,
    itv: Interval,
    x: f64,
    policy: &TruncationPolicy,
) -> Result<IdentitySides> {
    identity_sides_with(f, q, itv, x, policy, KernelForm::Pointwise)
}

pub fn identity_sides_with(
    f: &FuncSpec,
    q: QParam,
    itv: Interval,
    x: f64,
    policy: &TruncationPolicy,
    form: KernelForm,
) -> Result<IdentitySides> {
    let point = NormalizedPoint::new(itv, x)?;
    let s = point.s;
    let mean_integral = q_integral(f, q, itv, policy)?;
    let lhs = f.eval_checked(x)? - mean_integral.value / itv.len();

    let qv = q.value();
    let kernel_series = match form {
        KernelForm::FormalSplit => {
            let full = unit_sum(
                |t| Ok((qv * t - 1.0) * derivative_at_unit(f, q, itv, t)?),
                q,
                1.0,
                policy,
            )?;
            if s > 0.0 {
                let lower = unit_sum(|t| derivative_at_unit(f, q, itv, t), q, s, policy)?;
                combine(&[full, lower], itv.len() * (full.value + lower.value))
            } else {
                combine(&[full], itv.len() * full.value)
            }
        }
        KernelForm::Pointwise => {
            let sum = unit_sum(
                |t| Ok(kernel(t, s, q) * derivative_at_unit(f, q, itv, t)?),
                q,
                1.0,
                policy,
            )?;
            combine(&[sum], itv.len() * sum.value)
        }
    };
    let rhs = kernel_series.value;
    Ok(IdentitySides {
        function: f.name().to_string(),
        q: qv,
        x,
        form,
        lhs,
        rhs,
        residual: lhs - rhs,
        diagnostics: IdentityDiagnostics {
            mean_integral,
            kernel_series,
        },
    })
}
