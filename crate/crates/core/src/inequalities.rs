//! Evaluators for the Ostrowski-, midpoint- and Hermite-Hadamard-type
//! bounds built on the quantum Montgomery identity. Every evaluator returns
//! a [`Verdict`]; none of them assumes the bound is valid.

use std::collections::BTreeMap;
use std::str::FromStr;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::corpus::{
    check_midpoint_convexity, check_q_derivative_power_convexity, estimate_derivative_bound,
    ConvexityCheck, ConvexityVerdict,
};
use crate::error::{QError, Result};
use crate::moments::{moment_series, MomentKind, MomentSet, MomentSource};
use crate::montgomery::{derivative_at_unit, kernel, unit_sum, NormalizedPoint};
use crate::numfmt::nullable_f64;
use crate::qcore::{Interval, QParam, TruncationPolicy};
use crate::qops::{
    q_derivative, q_derivative_at_left_endpoint, q_integral, ConvergenceRecord, FuncSpec,
    ENDPOINT_STEP_SCALE,
};

/// Relative slack in `holds`: `margin >= -HOLDS_TOLERANCE * (1 + |rhs|)`.
pub const HOLDS_TOLERANCE: f64 = 1e-12;

/// `q` used as the stand-in for the classical integral.
pub const CLASSICAL_PROXY_Q: f64 = 1.0 - 1e-6;

/// Which endpoint derivative multiplies the `t`-weighted moments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// `|aD_q f(a)|^r` pairs with `K2`, `K5` and the `t` moments.
    AsStated,
    /// `|aD_q f(b)|^r` pairs with `K2`, `K5` and the `t` moments.
    Swapped,
}

/// First Hölder factor: `int_0^s qt` or `int_0^s (qt)^p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HolderFirstFactor {
    StatedQt,
    ProofQtPowP,
}

macro_rules! string_enum {
    ($ty:ident { $($variant:ident => $name:literal),+ $(,)? }) => {
        impl $ty {
            pub const ALL: &'static [$ty] = &[$($ty::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($ty::$variant => $name),+
                }
            }
        }

        impl FromStr for $ty {
            type Err = QError;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($ty::$variant),)+
                    other => Err(QError::Config(format!(concat!("unknown ", stringify!($ty), " `{}`"), other))),
                }
            }
        }
    };
}

string_enum!(Pairing { AsStated => "as_stated", Swapped => "swapped" });
string_enum!(HolderFirstFactor { StatedQt => "stated_qt", ProofQtPowP => "proof_qt_pow_p" });

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub r: f64,
    pub pairing: Pairing,
    pub holder_first_factor: HolderFirstFactor,
    pub moment_source: MomentSource,
}

impl Default for BoundParams {
    fn default() -> Self {
        Self {
            r: 1.0,
            pairing: Pairing::AsStated,
            holder_first_factor: HolderFirstFactor::StatedQt,
            moment_source: MomentSource::Series,
        }
    }
}

impl BoundParams {
    pub fn new(
        r: f64,
        pairing: Pairing,
        holder_first_factor: HolderFirstFactor,
        moment_source: MomentSource,
    ) -> Result<Self> {
        if !(r.is_finite() && r >= 1.0) {
            return Err(QError::Precondition(format!("r must be >= 1, got {r}")));
        }
        Ok(Self {
            r,
            pairing,
            holder_first_factor,
            moment_source,
        })
    }

    pub fn with_r(self, r: f64) -> Result<Self> {
        Self::new(
            r,
            self.pairing,
            self.holder_first_factor,
            self.moment_source,
        )
    }

    /// Hölder conjugate `r / (r - 1)`, defined for `r > 1`.
    pub fn p(&self) -> Option<f64> {
        (self.r > 1.0).then(|| self.r / (self.r - 1.0))
    }

    /// Coefficients of the `t`-weighted and `(1-t)`-weighted moments.
    fn weights(&self, at_a: f64, at_b: f64) -> (f64, f64) {
        match self.pairing {
            Pairing::AsStated => (at_a, at_b),
            Pairing::Swapped => (at_b, at_a),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasonCode {
    Ok,
    Violated,
    MalformedBound,
    HypothesisUnmet,
    NonConvergent,
}

impl ReasonCode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ok => "ok",
            Self::Violated => "violated",
            Self::MalformedBound => "malformed_bound",
            Self::HypothesisUnmet => "hypothesis_unmet",
            Self::NonConvergent => "non_convergent",
        }
    }
}

/// One evaluated inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub inequality_id: String,
    pub function: String,
    pub q: f64,
    pub a: f64,
    pub b: f64,
    #[serde(with = "nullable_f64")]
    pub x: f64,
    pub params: Option<BoundParams>,
    #[serde(with = "nullable_f64")]
    pub lhs: f64,
    #[serde(with = "nullable_f64")]
    pub rhs: f64,
    #[serde(with = "nullable_f64")]
    pub margin: f64,
    pub holds: bool,
    pub reason_code: ReasonCode,
    /// Whether the stated hypotheses (convexity, endpoint limit) were verified.
    pub hypotheses_met: bool,
    /// Whether a failure of this verdict counts against the run.
    pub asserted: bool,
    pub diagnostics: Vec<String>,
    /// Auxiliary finite quantities such as endpoint derivatives or `M`.
    pub extras: BTreeMap<String, f64>,
}

impl Verdict {
    pub fn new(
        id: &str,
        function: &str,
        q: f64,
        itv: Interval,
        x: f64,
        lhs: f64,
        rhs: f64,
    ) -> Self {
        let margin = rhs - lhs;
        let holds = margin >= -HOLDS_TOLERANCE * (1.0 + rhs.abs());
        Self {
            inequality_id: id.to_string(),
            function: function.to_string(),
            q,
            a: itv.a(),
            b: itv.b(),
            x,
            params: None,
            lhs,
            rhs,
            margin,
            holds,
            reason_code: if holds {
                ReasonCode::Ok
            } else {
                ReasonCode::Violated
            },
            hypotheses_met: true,
            asserted: false,
            diagnostics: Vec::new(),
            extras: BTreeMap::new(),
        }
    }

    fn with_params(mut self, params: BoundParams) -> Self {
        self.params = Some(params);
        self.diagnostics
            .push(format!("moment_source={}", params.moment_source.as_str()));
        self
    }

    pub fn note(mut self, msg: impl Into<String>) -> Self {
        self.diagnostics.push(msg.into());
        self
    }

    pub fn extra(mut self, key: &str, value: f64) -> Self {
        if value.is_finite() {
            self.extras.insert(key.to_string(), value);
        }
        self
    }

    fn malformed(mut self, notes: Vec<String>) -> Self {
        self.holds = false;
        self.reason_code = ReasonCode::MalformedBound;
        self.diagnostics.push("malformed bound".into());
        self.diagnostics.extend(notes);
        self
    }

    fn hypothesis_unmet(mut self, msg: impl Into<String>) -> Self {
        self.hypotheses_met = false;
        self.holds = false;
        self.reason_code = ReasonCode::HypothesisUnmet;
        self.diagnostics.push(msg.into());
        self
    }

    fn unconverged(mut self, what: &str) -> Self {
        self.diagnostics.push(format!("{what} did not converge"));
        if self.reason_code == ReasonCode::Ok || self.reason_code == ReasonCode::Violated {
            self.reason_code = ReasonCode::NonConvergent;
        }
        self
    }

    fn convexity(mut self, verdict: &ConvexityVerdict, what: &str) -> Self {
        if !verdict.passed {
            self.hypotheses_met = false;
            self.diagnostics.push(format!(
                "convexity of {what} not verified (worst violation {:e})",
                verdict.worst_violation
            ));
        }
        self
    }
}

/// Builds `base^e` products while tracking ill-defined real powers.
struct PowerTerms {
    malformed: Vec<String>,
    notes: Vec<String>,
}

impl PowerTerms {
    fn new() -> Self {
        Self {
            malformed: Vec::new(),
            notes: Vec::new(),
        }
    }

    /// `base^e` with `0^0 = 1`; `slack` absorbs rounding below zero.
    fn pow(&mut self, label: &str, base: f64, e: f64, slack: f64) -> f64 {
        if e == 0.0 {
            return 1.0;
        }
        if e == 1.0 {
            if base < -slack {
                self.notes.push(format!("{label} is negative ({base:e})"));
            }
            return base;
        }
        if base < -slack {
            self.malformed.push(format!(
                "{label} = {base:e} is negative under a power of {e}"
            ));
            return f64::NAN;
        }
        base.max(0.0).powf(e)
    }
}

fn bracket_slack(parts: &[f64]) -> f64 {
    1e-12 * parts.iter().map(|v| v.abs()).sum::<f64>() + 1e-15
}

/// Everything about `(f, q, [a, b])` that does not depend on `x` or the
/// bound variant: the integral mean, endpoint derivatives and convexity
/// checks.
pub struct BoundContext<'f> {
    f: &'f FuncSpec,
    q: QParam,
    itv: Interval,
    policy: TruncationPolicy,
    check: ConvexityCheck,
    mean: f64,
    mean_converged: bool,
    dfa: std::result::Result<f64, String>,
    dfb: f64,
    derivative_convexity: Mutex<Vec<(f64, ConvexityVerdict)>>,
    function_convexity: OnceLock<ConvexityVerdict>,
    derivative_bound: OnceLock<(f64, bool)>,
}

impl<'f> BoundContext<'f> {
    pub fn new(
        f: &'f FuncSpec,
        q: QParam,
        itv: Interval,
        policy: &TruncationPolicy,
    ) -> Result<Self> {
        Self::with_check(f, q, itv, policy, ConvexityCheck::default())
    }

    pub fn with_check(
        f: &'f FuncSpec,
        q: QParam,
        itv: Interval,
        policy: &TruncationPolicy,
        check: ConvexityCheck,
    ) -> Result<Self> {
        let integral = q_integral(f, q, itv, policy)?;
        let dfa = q_derivative_at_left_endpoint(f, q, itv.a(), ENDPOINT_STEP_SCALE)
            .map_err(|e| e.to_string());
        let dfb = q_derivative(f, q, itv.a(), itv.b())?;
        Ok(Self {
            f,
            q,
            itv,
            policy: *policy,
            check,
            mean: integral.value / itv.len(),
            mean_converged: integral.converged,
            dfa,
            dfb,
            derivative_convexity: Mutex::new(Vec::new()),
            function_convexity: OnceLock::new(),
            derivative_bound: OnceLock::new(),
        })
    }

    pub fn function(&self) -> &FuncSpec {
        self.f
    }

    pub fn q(&self) -> QParam {
        self.q
    }

    pub fn interval(&self) -> Interval {
        self.itv
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// `aD_q f(a)` as a limit, or the reason it does not exist.
    pub fn derivative_at_a(&self) -> std::result::Result<f64, &str> {
        self.dfa.as_ref().copied().map_err(String::as_str)
    }

    pub fn derivative_at_b(&self) -> f64 {
        self.dfb
    }

    /// `|f(x) - mean|`.
    pub fn deviation(&self, x: f64) -> Result<f64> {
        Ok((self.f.eval_checked(x)? - self.mean).abs())
    }

    pub fn derivative_power_convexity(&self, r: f64) -> Result<ConvexityVerdict> {
        let mut cache = self
            .derivative_convexity
            .lock()
            .expect("convexity cache poisoned");
        if let Some((_, v)) = cache
            .iter()
            .find(|(cached, _)| cached.to_bits() == r.to_bits())
        {
            return Ok(*v);
        }
        let v = check_q_derivative_power_convexity(self.f, self.q, r, &self.check)?;
        cache.push((r, v));
        Ok(v)
    }

    pub fn function_convexity(&self) -> Result<ConvexityVerdict> {
        if let Some(v) = self.function_convexity.get() {
            return Ok(*v);
        }
        let v = check_midpoint_convexity(|t| self.f.eval(t), self.itv, &self.check)?;
        Ok(*self.function_convexity.get_or_init(|| v))
    }

    /// `M` from the function metadata, else estimated from the node set.
    /// The flag is true for an estimate.
    pub fn derivative_bound(&self) -> Result<(f64, bool)> {
        if let Some(v) = self.derivative_bound.get() {
            return Ok(*v);
        }
        let v = match self.f.derivative_bound() {
            Some(m) => (m, false),
            None => (
                estimate_derivative_bound(self.f, self.q, &self.policy)?,
                true,
            ),
        };
        Ok(*self.derivative_bound.get_or_init(|| v))
    }

    fn verdict(&self, id: &str, x: f64, lhs: f64, rhs: f64) -> Verdict {
        let v = Verdict::new(id, self.f.name(), self.q.value(), self.itv, x, lhs, rhs);
        if self.mean_converged {
            v
        } else {
            v.unconverged("integral mean")
        }
    }

    fn endpoint_powers(&self, r: f64) -> std::result::Result<(f64, f64), String> {
        let dfa = self.dfa.clone()?;
        Ok((dfa.abs().powf(r), self.dfb.abs().powf(r)))
    }

    fn moments(&self, s: f64, source: MomentSource) -> Result<MomentSet> {
        MomentSet::compute(self.q, s, source, &self.policy)
    }

    /// The power-mean bound
    /// `(b-a)[K1^(1-1/r)(A K2 + B K3)^(1/r) + K4^(1-1/r)(A K5 + B K6)^(1/r)]`.
    pub fn power_mean(&self, x: f64, params: BoundParams) -> Result<Verdict> {
        self.power_mean_with_moments(x, params, None)
    }

    fn power_mean_with_moments(
        &self,
        x: f64,
        params: BoundParams,
        fixed: Option<[f64; 6]>,
    ) -> Result<Verdict> {
        let point = NormalizedPoint::new(self.itv, x)?;
        let lhs = self.deviation(x)?;
        let r = params.r;
        let (pa, pb) = match self.endpoint_powers(r) {
            Ok(v) => v,
            Err(e) => {
                return Ok(self
                    .verdict("power_mean", x, lhs, f64::NAN)
                    .with_params(params)
                    .hypothesis_unmet(format!("endpoint derivative at a: {e}")));
            }
        };
        let [k1, k2, k3, k4, k5, k6] = match fixed {
            Some(k) => k,
            None => {
                let m = self.moments(point.s, params.moment_source)?;
                [m.k1, m.k2, m.k3, m.k4, m.k5, m.k6]
            }
        };
        let (ca, cb) = params.weights(pa, pb);
        let mut pt = PowerTerms::new();
        let lower = ca * k2 + cb * k3;
        let upper = ca * k5 + cb * k6;
        let term1 = pt.pow("K1", k1, 1.0 - 1.0 / r, 0.0)
            * pt.pow(
                "lower bracket",
                lower,
                1.0 / r,
                bracket_slack(&[ca * k2, cb * k3]),
            );
        let term2 = pt.pow("K4", k4, 1.0 - 1.0 / r, 0.0)
            * pt.pow(
                "upper bracket",
                upper,
                1.0 / r,
                bracket_slack(&[ca * k5, cb * k6]),
            );
        let rhs = self.itv.len() * (term1 + term2);
        let mut v = self
            .verdict("power_mean", x, lhs, rhs)
            .with_params(params)
            .extra("dfa", self.dfa.clone().unwrap_or(f64::NAN))
            .extra("dfb", self.dfb);
        v.diagnostics.extend(std::mem::take(&mut pt.notes));
        if !pt.malformed.is_empty() {
            v = v.malformed(pt.malformed);
        }
        let conv = self.derivative_power_convexity(r)?;
        Ok(v.convexity(&conv, &format!("|aD_q f|^{r}")))
    }

    /// The Hölder-type bound with the `t` and `1 - t` moments in the brackets.
    pub fn holder(&self, x: f64, params: BoundParams) -> Result<Verdict> {
        let p = params.p().ok_or_else(|| {
            QError::Precondition(format!("Hölder bound needs r > 1, got {}", params.r))
        })?;
        let point = NormalizedPoint::new(self.itv, x)?;
        let lhs = self.deviation(x)?;
        let r = params.r;
        let (pa, pb) = match self.endpoint_powers(r) {
            Ok(v) => v,
            Err(e) => {
                return Ok(self
                    .verdict("holder", x, lhs, f64::NAN)
                    .with_params(params)
                    .hypothesis_unmet(format!("endpoint derivative at a: {e}")));
            }
        };
        let m = self.moments(point.s, params.moment_source)?;
        let first_base = match params.holder_first_factor {
            HolderFirstFactor::StatedQt => m.k1,
            HolderFirstFactor::ProofQtPowP => {
                moment_series(MomentKind::HolderLower(p), self.q, point.s, &self.policy)?
            }
        };
        let second_base = moment_series(MomentKind::HolderUpper(p), self.q, point.s, &self.policy)?;
        let (ca, cb) = params.weights(pa, pb);
        let lower = ca * m.m_t_lower + cb * m.m_1mt_lower;
        let upper = ca * m.m_t_upper + cb * m.m_1mt_upper;
        let mut pt = PowerTerms::new();
        let term1 = pt.pow("first factor", first_base, 1.0 / p, 0.0)
            * pt.pow(
                "lower bracket",
                lower,
                1.0 / r,
                bracket_slack(&[ca * m.m_t_lower, cb * m.m_1mt_lower]),
            );
        let term2 = pt.pow(
            "second factor",
            second_base,
            1.0 / p,
            bracket_slack(&[second_base]),
        ) * pt.pow(
            "upper bracket",
            upper,
            1.0 / r,
            bracket_slack(&[ca * m.m_t_upper, cb * m.m_1mt_upper]),
        );
        let rhs = self.itv.len() * (term1 + term2);
        let mut v = self
            .verdict("holder", x, lhs, rhs)
            .with_params(params)
            .extra("p", p)
            .extra("dfa", self.dfa.clone().unwrap_or(f64::NAN))
            .extra("dfb", self.dfb);
        v.diagnostics.extend(std::mem::take(&mut pt.notes));
        if !pt.malformed.is_empty() {
            v = v.malformed(pt.malformed);
        }
        let conv = self.derivative_power_convexity(r)?;
        Ok(v.convexity(&conv, &format!("|aD_q f|^{r}")))
    }

    /// Triangle inequality applied to the exact kernel representation of
    /// `f(x) - mean`. When `x` is a node the node-wise kernel sum is used,
    /// otherwise the formal split
    /// `(b-a)[int_0^1 (1 - qt)|D| + int_0^s |D|]`.
    pub fn sound_kernel(&self, x: f64) -> Result<Verdict> {
        let point = NormalizedPoint::new(self.itv, x)?;
        let lhs = self.deviation(x)?;
        let (q, itv, s) = (self.q, self.itv, point.s);
        let qv = q.value();
        let d = |t: f64| derivative_at_unit(self.f, q, itv, t).map(f64::abs);
        let aligned = point.node_index(q).is_some();
        let (value, converged, form) = if aligned {
            let r = unit_sum(|t| Ok(kernel(t, s, q).abs() * d(t)?), q, 1.0, &self.policy)?;
            (r.value, r.converged, "pointwise")
        } else {
            let full = unit_sum(|t| Ok((1.0 - qv * t) * d(t)?), q, 1.0, &self.policy)?;
            if s > 0.0 {
                let lower = unit_sum(d, q, s, &self.policy)?;
                (
                    full.value + lower.value,
                    full.converged && lower.converged,
                    "formal_split",
                )
            } else {
                (full.value, full.converged, "formal_split")
            }
        };
        let v = self
            .verdict("sound_kernel_bound", x, lhs, itv.len() * value)
            .note(format!("kernel_form={form}"));
        Ok(if converged {
            v
        } else {
            v.unconverged("kernel series")
        })
    }

    /// `(b-a) int_0^1 |K_q| |D|` as a single node-wise sum. Matches the
    /// identity only when `x` is a node.
    pub fn pointwise_kernel(&self, x: f64) -> Result<Verdict> {
        let point = NormalizedPoint::new(self.itv, x)?;
        let lhs = self.deviation(x)?;
        let (q, itv, s) = (self.q, self.itv, point.s);
        let r = unit_sum(
            |t| Ok(kernel(t, s, q).abs() * derivative_at_unit(self.f, q, itv, t)?.abs()),
            q,
            1.0,
            &self.policy,
        )?;
        let v = self
            .verdict("pointwise_kernel_bound", x, lhs, itv.len() * r.value)
            .note(if point.node_index(q).is_some() {
                "x is a node"
            } else {
                "x is not a node"
            });
        Ok(if r.converged {
            v
        } else {
            v.unconverged("kernel series")
        })
    }

    fn resolve_bound(&self, m: Option<f64>) -> Result<(f64, bool)> {
        match m {
            Some(m) if m.is_finite() && m >= 0.0 => Ok((m, false)),
            Some(m) => Err(QError::Precondition(format!(
                "M must be a nonnegative number, got {m}"
            ))),
            None => self.derivative_bound(),
        }
    }

    /// `qM[(x-a)^2 + (b-x)^2] / ((1+q)(b-a))`.
    pub fn ostrowski_final(&self, x: f64, m: Option<f64>) -> Result<Verdict> {
        NormalizedPoint::new(self.itv, x)?;
        let (m, estimated) = self.resolve_bound(m)?;
        let lhs = self.deviation(x)?;
        let qv = self.q.value();
        let (a, b) = (self.itv.a(), self.itv.b());
        let rhs = qv * m * ((x - a).powi(2) + (b - x).powi(2)) / ((1.0 + qv) * (b - a));
        let v = self
            .verdict("ostrowski_final_form", x, lhs, rhs)
            .extra("m", m);
        Ok(if estimated { v.note("M estimated") } else { v })
    }

    /// `(b-a) M [K1^(1-1/r)(K2+K3)^(1/r) + K4^(1-1/r)(K5+K6)^(1/r)]`.
    pub fn ostrowski_power_mean(
        &self,
        x: f64,
        m: Option<f64>,
        params: BoundParams,
    ) -> Result<Verdict> {
        let point = NormalizedPoint::new(self.itv, x)?;
        let (m, estimated) = self.resolve_bound(m)?;
        let lhs = self.deviation(x)?;
        let k = self.moments(point.s, params.moment_source)?;
        let r = params.r;
        let mut pt = PowerTerms::new();
        let t1 = pt.pow("K1", k.k1, 1.0 - 1.0 / r, 0.0)
            * pt.pow("K2+K3", k.k2 + k.k3, 1.0 / r, bracket_slack(&[k.k2, k.k3]));
        let t2 = pt.pow("K4", k.k4, 1.0 - 1.0 / r, 0.0)
            * pt.pow("K5+K6", k.k5 + k.k6, 1.0 / r, bracket_slack(&[k.k5, k.k6]));
        let rhs = self.itv.len() * m * (t1 + t2);
        let mut v = self
            .verdict("ostrowski_power_mean", x, lhs, rhs)
            .with_params(params)
            .extra("m", m);
        if estimated {
            v = v.note("M estimated");
        }
        v.diagnostics.extend(pt.notes);
        if !pt.malformed.is_empty() {
            v = v.malformed(pt.malformed);
        }
        Ok(v)
    }

    /// The power-mean bound at one of the three midpoint placements, with
    /// the printed coefficients evaluated alongside.
    pub fn midpoint(&self, which: Midpoint, params: BoundParams) -> Result<Verdict> {
        let x = which.point(self.q, self.itv);
        let s = NormalizedPoint::new(self.itv, x)?.s;
        let printed = which.printed_coefficients(self.q);
        let paper = self.moments(s, MomentSource::ClosedPaper)?;
        let generic = [paper.k1, paper.k2, paper.k3, paper.k4, paper.k5, paper.k6];
        let deviation = printed
            .iter()
            .zip(generic)
            .map(|(p, g)| (p - g).abs())
            .fold(0.0, f64::max);
        let printed_verdict = self.power_mean_with_moments(x, params, Some(printed))?;
        let mut v = self.power_mean(x, params)?;
        v.inequality_id = format!("midpoint_{}", which.as_str());
        let v = v
            .extra("printed_coefficient_deviation", deviation)
            .extra("printed_rhs", printed_verdict.rhs);
        Ok(if deviation > 1e-12 {
            v.note("printed coefficients disagree with the closed forms")
        } else {
            v
        })
    }

    /// `f((qa+b)/(1+q)) <= mean` and `mean <= (q f(a) + f(b))/(1+q)`.
    pub fn hermite_hadamard(&self) -> Result<(Verdict, Verdict)> {
        let qv = self.q.value();
        let (a, b) = (self.itv.a(), self.itv.b());
        let x = (qv * a + b) / (1.0 + qv);
        let left = self.verdict(
            "hermite_hadamard_left",
            x,
            self.f.eval_checked(x)?,
            self.mean,
        );
        let upper = (qv * self.f.eval_checked(a)? + self.f.eval_checked(b)?) / (1.0 + qv);
        let right = self.verdict("hermite_hadamard_right", f64::NAN, self.mean, upper);
        let conv = self.function_convexity()?;
        Ok((left.convexity(&conv, "f"), right.convexity(&conv, "f")))
    }
}

/// Interior points at which the midpoint-type corollaries are stated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Midpoint {
    /// `(qa + b)/(1 + q)`
    QMid,
    /// `(a + b)/2`
    ArithMid,
    /// `(a + qb)/(1 + q)`
    DualQMid,
}

string_enum!(Midpoint { QMid => "q_mid", ArithMid => "arith_mid", DualQMid => "dual_q_mid" });

impl Midpoint {
    pub fn point(self, q: QParam, itv: Interval) -> f64 {
        let qv = q.value();
        let (a, b) = (itv.a(), itv.b());
        match self {
            Self::QMid => (qv * a + b) / (1.0 + qv),
            Self::ArithMid => 0.5 * (a + b),
            Self::DualQMid => (a + qv * b) / (1.0 + qv),
        }
    }

    /// `K1..K6` as printed for this placement.
    pub fn printed_coefficients(self, q: QParam) -> [f64; 6] {
        let q = q.value();
        let b2 = 1.0 + q;
        let b3 = 1.0 + q + q * q;
        let c3 = b2.powi(3);
        let d = c3 * b3;
        match self {
            Self::QMid => [
                q / c3,
                q / d,
                (q * q + q.powi(3)) / d,
                q.powi(3) / c3,
                2.0 * q / d,
                (-2.0 * q + q.powi(3) + q.powi(4) + q.powi(5)) / d,
            ],
            Self::ArithMid => {
                let e = 8.0 * b2 * b3;
                [
                    q / (4.0 * b2),
                    q / (8.0 * b3),
                    (q + q * q + 2.0 * q.powi(3)) / e,
                    q / (4.0 * b2),
                    (6.0 - q - q * q) / e,
                    (3.0 * q + 3.0 * q * q + 2.0 * q.powi(3) - 6.0) / e,
                ]
            }
            Self::DualQMid => [
                q.powi(3) / c3,
                q.powi(4) / d,
                (q.powi(3) + q.powi(5)) / d,
                q / c3,
                (1.0 + 2.0 * q - q.powi(3)) / d,
                (-1.0 - q + q * q + 2.0 * q.powi(3)) / d,
            ],
        }
    }
}

/// Convenience wrappers building a fresh [`BoundContext`].
pub fn power_mean_bound(
    f: &FuncSpec,
    q: QParam,
    itv: Interval,
    x: f64,
    params: BoundParams,
    policy: &TruncationPolicy,
) -> Result<Verdict> {
    BoundContext::new(f, q, itv, policy)?.power_mean(x, params)
}

pub fn holder_bound(
    f: &FuncSpec,
    q: QParam,
    itv: Interval,
    x: f64,
    params: BoundParams,
    policy: &TruncationPolicy,
) -> Result<Verdict> {
    BoundContext::new(f, q, itv, policy)?.holder(x, params)
}

pub fn sound_kernel_bound(
    f: &FuncSpec,
    q: QParam,
    itv: Interval,
    x: f64,
    policy: &TruncationPolicy,
) -> Result<Verdict> {
    BoundContext::new(f, q, itv, policy)?.sound_kernel(x)
}

pub fn ostrowski_final_form(
    f: &FuncSpec,
    q: QParam,
    itv: Interval,
    x: f64,
    m: f64,
    policy: &TruncationPolicy,
) -> Result<Verdict> {
    BoundContext::new(f, q, itv, policy)?.ostrowski_final(x, Some(m))
}

pub fn midpoint_bounds(
    f: &FuncSpec,
    q: QParam,
    itv: Interval,
    which: Midpoint,
    params: BoundParams,
    policy: &TruncationPolicy,
) -> Result<Verdict> {
    BoundContext::new(f, q, itv, policy)?.midpoint(which, params)
}

pub fn hermite_hadamard(
    f: &FuncSpec,
    q: QParam,
    itv: Interval,
    policy: &TruncationPolicy,
) -> Result<(Verdict, Verdict)> {
    BoundContext::new(f, q, itv, policy)?.hermite_hadamard()
}

/// Classical bounds, with the Jackson integral at `q = 1 - 1e-6` standing in
/// for the Riemann integral.
pub struct ClassicalContext<'f> {
    f: &'f FuncSpec,
    itv: Interval,
    mean: f64,
    converged: bool,
}

impl<'f> ClassicalContext<'f> {
    pub fn proxy_policy() -> TruncationPolicy {
        TruncationPolicy {
            eps_rel: 1e-12,
            n_max: 40_000_000,
        }
    }

    pub fn new(f: &'f FuncSpec, itv: Interval) -> Result<Self> {
        if !f.has_classical_derivative() {
            return Err(QError::Config(format!(
                "`{}` has no classical derivative",
                f.name()
            )));
        }
        let q = QParam::new(CLASSICAL_PROXY_Q)?;
        let r = q_integral(f, q, itv, &Self::proxy_policy())?;
        Ok(Self {
            f,
            itv,
            mean: r.value / itv.len(),
            converged: r.converged,
        })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    fn derivative(&self, t: f64) -> f64 {
        self.f.classical_derivative(t).expect("checked in new")
    }

    /// `M` from metadata, else the max of `|f'|` on a 10 001-point grid.
    fn sup_derivative(&self) -> (f64, bool) {
        match self.f.derivative_bound() {
            Some(m) => (m, false),
            None => {
                let m = self
                    .itv
                    .uniform_grid(10_001)
                    .into_iter()
                    .map(|t| self.derivative(t).abs())
                    .fold(0.0, f64::max);
                (m, true)
            }
        }
    }

    fn verdict(&self, id: &str, x: f64, lhs: f64, rhs: f64) -> Verdict {
        let v = Verdict::new(id, self.f.name(), CLASSICAL_PROXY_Q, self.itv, x, lhs, rhs);
        if self.converged {
            v
        } else {
            v.unconverged("classical integral proxy")
        }
    }

    /// `|f(x) - mean| <= M [(x-a)^2 + (b-x)^2] / (2(b-a))`.
    pub fn ostrowski(&self, x: f64, m: Option<f64>) -> Result<Verdict> {
        NormalizedPoint::new(self.itv, x)?;
        let (m, estimated) = match m {
            Some(m) => (m, false),
            None => self.sup_derivative(),
        };
        let (a, b) = (self.itv.a(), self.itv.b());
        let lhs = (self.f.eval_checked(x)? - self.mean).abs();
        let rhs = m * ((x - a).powi(2) + (b - x).powi(2)) / (2.0 * (b - a));
        let v = self
            .verdict("classical_ostrowski", x, lhs, rhs)
            .extra("m", m);
        Ok(if estimated { v.note("M estimated") } else { v })
    }

    /// `|f((a+b)/2) - mean| <= (b-a)(|f'(a)| + |f'(b)|)/8`.
    pub fn midpoint(&self) -> Result<Verdict> {
        let (a, b) = (self.itv.a(), self.itv.b());
        let x = 0.5 * (a + b);
        let lhs = (self.f.eval_checked(x)? - self.mean).abs();
        let rhs = (b - a) * (self.derivative(a).abs() + self.derivative(b).abs()) / 8.0;
        Ok(self.verdict("classical_midpoint", x, lhs, rhs))
    }

    /// `|f((a+b)/2) - mean| <= (b-a) 2^(3/r-3) [(A/24 + B/12)^(1/r) + (A/12 + B/24)^(1/r)]`
    /// with `A = |f'(a)|^r`, `B = |f'(b)|^r`.
    pub fn midpoint_power(&self, r: f64) -> Result<Verdict> {
        if !(r.is_finite() && r >= 1.0) {
            return Err(QError::Precondition(format!("r must be >= 1, got {r}")));
        }
        let (a, b) = (self.itv.a(), self.itv.b());
        let x = 0.5 * (a + b);
        let lhs = (self.f.eval_checked(x)? - self.mean).abs();
        let pa = self.derivative(a).abs().powf(r);
        let pb = self.derivative(b).abs().powf(r);
        let rhs = (b - a)
            * 2f64.powf(3.0 / r - 3.0)
            * ((pa / 24.0 + pb / 12.0).powf(1.0 / r) + (pa / 12.0 + pb / 24.0).powf(1.0 / r));
        let mut v = self.verdict("classical_midpoint_power", x, lhs, rhs);
        v.params = Some(BoundParams {
            r,
            ..BoundParams::default()
        });
        Ok(v)
    }
}

pub fn classical_ostrowski(f: &FuncSpec, m: f64, itv: Interval, x: f64) -> Result<Verdict> {
    ClassicalContext::new(f, itv)?.ostrowski(x, Some(m))
}

/// Compares the `r = 1` power-mean bound at `(qa+b)/(1+q)` with the
/// classical midpoint constant `(b-a)(|f'(a)| + |f'(b)|)/8`. The record
/// converges when the two agree to 1% relative.
pub fn midpoint_classical_consistency(
    f: &FuncSpec,
    q: QParam,
    params: BoundParams,
    policy: &TruncationPolicy,
) -> Result<ConvergenceRecord> {
    let itv = f.interval();
    let (a, b) = (itv.a(), itv.b());
    let target = match (f.classical_derivative(a), f.classical_derivative(b)) {
        (Some(da), Some(db)) => (b - a) * (da.abs() + db.abs()) / 8.0,
        _ => {
            return Err(QError::Config(format!(
                "`{}` has no classical derivative",
                f.name()
            )))
        }
    };
    let ctx = BoundContext::new(f, q, itv, policy)?;
    let v = ctx.midpoint(Midpoint::QMid, params.with_r(1.0)?)?;
    let tolerance = 0.01 * target.abs();
    let converged = (v.rhs - target).abs() <= tolerance;
    Ok(ConvergenceRecord {
        probe: "midpoint_bound".into(),
        function: f.name().to_string(),
        probe_points: vec![(q.value(), v.rhs)],
        extrapolated_limit: v.rhs,
        reference: target,
        tolerance,
        converged,
    })
}
