//! The q-moment integrals of the kernel weights, from printed closed forms,
//! from a corrected closed form, and from direct Jackson sums.
//!
//! Upper-segment integrals `int_s^1` are always read as the formal difference
//! `int_0^1 - int_0^s`.

use serde::{Deserialize, Serialize};

use crate::error::{QError, Result};
use crate::montgomery::unit_sum;
use crate::qcore::{QParam, TruncationPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentKind {
    /// `int_0^s qt`
    K1,
    /// `int_0^s q t^2`
    K2,
    /// `int_0^s qt (1 - t)`
    K3,
    /// `int_s^1 (1 - qt)`
    K4,
    /// `int_s^1 (1 - qt) t`
    K5,
    /// `int_s^1 (1 - qt)(1 - t)`
    K6,
    /// `int_0^s t`
    MTLower,
    /// `int_0^s (1 - t)`
    M1mtLower,
    /// `int_s^1 t`
    MTUpper,
    /// `int_s^1 (1 - t)`
    M1mtUpper,
    /// `int_0^s (qt)^p`
    HolderLower(f64),
    /// `int_s^1 (1 - qt)^p`
    HolderUpper(f64),
}

impl MomentKind {
    /// Every kind that has a closed form.
    pub const CLOSED: [MomentKind; 10] = [
        Self::K1,
        Self::K2,
        Self::K3,
        Self::K4,
        Self::K5,
        Self::K6,
        Self::MTLower,
        Self::M1mtLower,
        Self::MTUpper,
        Self::M1mtUpper,
    ];

    pub fn label(&self) -> String {
        match self {
            Self::K1 => "K1".into(),
            Self::K2 => "K2".into(),
            Self::K3 => "K3".into(),
            Self::K4 => "K4".into(),
            Self::K5 => "K5".into(),
            Self::K6 => "K6".into(),
            Self::MTLower => "M_T_LOWER".into(),
            Self::M1mtLower => "M_1MT_LOWER".into(),
            Self::MTUpper => "M_T_UPPER".into(),
            Self::M1mtUpper => "M_1MT_UPPER".into(),
            Self::HolderLower(p) => format!("HOLDER_LOWER({p})"),
            Self::HolderUpper(p) => format!("HOLDER_UPPER({p})"),
        }
    }

    fn is_upper(&self) -> bool {
        matches!(
            self,
            Self::K4 | Self::K5 | Self::K6 | Self::MTUpper | Self::M1mtUpper | Self::HolderUpper(_)
        )
    }

    fn integrand(&self, q: f64) -> impl Fn(f64) -> f64 {
        let kind = *self;
        move |t| match kind {
            Self::K1 => q * t,
            Self::K2 => q * t * t,
            Self::K3 => q * t * (1.0 - t),
            Self::K4 => 1.0 - q * t,
            Self::K5 => (1.0 - q * t) * t,
            Self::K6 => (1.0 - q * t) * (1.0 - t),
            Self::MTLower | Self::MTUpper => t,
            Self::M1mtLower | Self::M1mtUpper => 1.0 - t,
            Self::HolderLower(p) => (q * t).powf(p),
            Self::HolderUpper(p) => (1.0 - q * t).powf(p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentSource {
    ClosedPaper,
    ClosedCorrected,
    Series,
}

impl MomentSource {
    pub const ALL: [MomentSource; 3] = [Self::Series, Self::ClosedPaper, Self::ClosedCorrected];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::ClosedPaper => "closed_paper",
            Self::ClosedCorrected => "closed_corrected",
            Self::Series => "series",
        }
    }
}

impl std::str::FromStr for MomentSource {
    type Err = QError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closed_paper" => Ok(Self::ClosedPaper),
            "closed_corrected" => Ok(Self::ClosedCorrected),
            "series" => Ok(Self::Series),
            other => Err(QError::Config(format!("unknown moment source `{other}`"))),
        }
    }
}

fn check_s(s: f64) -> Result<()> {
    if (0.0..=1.0).contains(&s) {
        Ok(())
    } else {
        Err(QError::Precondition(format!(
            "s must lie in [0, 1], got {s}"
        )))
    }
}

/// Closed-form value of a moment. `variant` must be one of the closed sources.
pub fn moment_closed_form(
    kind: MomentKind,
    q: QParam,
    s: f64,
    variant: MomentSource,
) -> Result<f64> {
    check_s(s)?;
    let q = q.value();
    let u = 1.0 - s;
    let b2 = 1.0 + q;
    let b3 = 1.0 + q + q * q;
    let corrected = match variant {
        MomentSource::ClosedPaper => false,
        MomentSource::ClosedCorrected => true,
        MomentSource::Series => {
            return Err(QError::Precondition(
                "series is not a closed-form variant".into(),
            ));
        }
    };
    let k1 = q * s * s / b2;
    let k2 = q * s.powi(3) / b3;
    let k4 = if corrected {
        u * (1.0 - q + q * u) / b2
    } else {
        q * u * u / b2
    };
    let k5 = 1.0 / (b2 * b3) - s * s / b2 + q * s.powi(3) / b3;
    Ok(match kind {
        MomentKind::K1 => k1,
        MomentKind::K2 => k2,
        MomentKind::K3 => k1 - k2,
        MomentKind::K4 => k4,
        MomentKind::K5 => k5,
        MomentKind::K6 => k4 - k5,
        MomentKind::MTLower => s * s / b2,
        MomentKind::M1mtLower => s - s * s / b2,
        MomentKind::MTUpper => (1.0 - s * s) / b2,
        MomentKind::M1mtUpper => q / b2 - s + s * s / b2,
        MomentKind::HolderLower(_) | MomentKind::HolderUpper(_) => {
            return Err(QError::UnsupportedKind(kind.label()));
        }
    })
}

/// Direct Jackson-sum value of a moment.
pub fn moment_series(
    kind: MomentKind,
    q: QParam,
    s: f64,
    policy: &TruncationPolicy,
) -> Result<f64> {
    check_s(s)?;
    let g = kind.integrand(q.value());
    let lower = if s > 0.0 {
        unit_sum(|t| Ok(g(t)), q, s, policy)?.value
    } else {
        0.0
    };
    if kind.is_upper() {
        let full = unit_sum(|t| Ok(g(t)), q, 1.0, policy)?.value;
        Ok(full - lower)
    } else {
        Ok(lower)
    }
}

/// Every closed-form moment at one `(q, s)` from a single source. `K3` and
/// `K6` are obtained by subtraction so that they are consistent with the
/// other entries bit for bit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    pub source: MomentSource,
    pub q: f64,
    pub s: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub k5: f64,
    pub k6: f64,
    pub m_t_lower: f64,
    pub m_1mt_lower: f64,
    pub m_t_upper: f64,
    pub m_1mt_upper: f64,
}

impl MomentSet {
    pub fn compute(
        q: QParam,
        s: f64,
        source: MomentSource,
        policy: &TruncationPolicy,
    ) -> Result<Self> {
        let eval = |kind| match source {
            MomentSource::Series => moment_series(kind, q, s, policy),
            closed => moment_closed_form(kind, q, s, closed),
        };
        let k1 = eval(MomentKind::K1)?;
        let k2 = eval(MomentKind::K2)?;
        let k4 = eval(MomentKind::K4)?;
        let k5 = eval(MomentKind::K5)?;
        Ok(Self {
            source,
            q: q.value(),
            s,
            k1,
            k2,
            k3: k1 - k2,
            k4,
            k5,
            k6: k4 - k5,
            m_t_lower: eval(MomentKind::MTLower)?,
            m_1mt_lower: eval(MomentKind::M1mtLower)?,
            m_t_upper: eval(MomentKind::MTUpper)?,
            m_1mt_upper: eval(MomentKind::M1mtUpper)?,
        })
    }

    pub fn get(&self, kind: MomentKind) -> Option<f64> {
        Some(match kind {
            MomentKind::K1 => self.k1,
            MomentKind::K2 => self.k2,
            MomentKind::K3 => self.k3,
            MomentKind::K4 => self.k4,
            MomentKind::K5 => self.k5,
            MomentKind::K6 => self.k6,
            MomentKind::MTLower => self.m_t_lower,
            MomentKind::M1mtLower => self.m_1mt_lower,
            MomentKind::MTUpper => self.m_t_upper,
            MomentKind::M1mtUpper => self.m_1mt_upper,
            MomentKind::HolderLower(_) | MomentKind::HolderUpper(_) => return None,
        })
    }
}

/// Relative tolerance above which a printed closed form is flagged.
pub const AUDIT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentAuditEntry {
    pub kind: String,
    pub closed_paper: f64,
    pub closed_corrected: f64,
    pub series: f64,
    pub paper_deviation: f64,
    pub corrected_deviation: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentAuditReport {
    pub q: f64,
    pub s: f64,
    pub entries: Vec<MomentAuditEntry>,
}

impl MomentAuditReport {
    pub fn flagged(&self) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| e.flagged)
            .map(|e| e.kind.as_str())
            .collect()
    }

    pub fn entry(&self, kind: MomentKind) -> Option<&MomentAuditEntry> {
        let label = kind.label();
        self.entries.iter().find(|e| e.kind == label)
    }
}

/// Compares both closed forms against the series for every closed kind.
pub fn audit_moments(q: QParam, s: f64, policy: &TruncationPolicy) -> Result<MomentAuditReport> {
    let paper = MomentSet::compute(q, s, MomentSource::ClosedPaper, policy)?;
    let corrected = MomentSet::compute(q, s, MomentSource::ClosedCorrected, policy)?;
    let entries = MomentKind::CLOSED
        .iter()
        .map(|&kind| {
            let series = moment_series(kind, q, s, policy)?;
            let cp = paper.get(kind).expect("closed kind");
            let cc = corrected.get(kind).expect("closed kind");
            let paper_deviation = (cp - series).abs();
            Ok(MomentAuditEntry {
                kind: kind.label(),
                closed_paper: cp,
                closed_corrected: cc,
                series,
                paper_deviation,
                corrected_deviation: (cc - series).abs(),
                flagged: paper_deviation > AUDIT_TOLERANCE * (1.0 + series.abs()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MomentAuditReport {
        q: q.value(),
        s,
        entries,
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

    /// Node-by-node Jackson sum written out longhand, independent of the
    /// truncation engine.
    fn brute(g: impl Fn(f64) -> f64, q: f64, width: f64) -> f64 {
        let mut acc = 0.0;
        let mut qn = 1.0;
        for _ in 0..4000 {
            acc += qn * g(width * qn);
            qn *= q;
        }
        (1.0 - q) * width * acc
    }

    #[test]
    fn spot_values_at_half() {
        let p = TruncationPolicy::default();
        let cp = MomentSource::ClosedPaper;
        assert_abs_diff_eq!(
            moment_closed_form(MomentKind::K1, q(0.5), 0.5, cp).unwrap(),
            1.0 / 12.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            moment_closed_form(MomentKind::K4, q(0.5), 0.5, cp).unwrap(),
            1.0 / 12.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            moment_closed_form(MomentKind::K4, q(0.5), 0.5, MomentSource::ClosedCorrected).unwrap(),
            0.25,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            moment_series(MomentKind::K1, q(0.5), 0.5, &p).unwrap(),
            1.0 / 12.0,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            moment_series(MomentKind::K4, q(0.5), 0.5, &p).unwrap(),
            0.25,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            moment_series(MomentKind::K6, q(0.5), 0.5, &p).unwrap(),
            0.0,
            epsilon = 1e-14
        );
        assert_eq!(
            moment_closed_form(MomentKind::K1, q(0.5), 0.0, cp).unwrap(),
            0.0
        );
    }

    #[test]
    fn holder_kinds_are_series_only() {
        let p = TruncationPolicy::default();
        assert!(matches!(
            moment_closed_form(
                MomentKind::HolderUpper(2.0),
                q(0.5),
                0.5,
                MomentSource::ClosedPaper
            ),
            Err(QError::UnsupportedKind(_))
        ));
        assert_abs_diff_eq!(
            moment_series(MomentKind::HolderUpper(2.0), q(0.5), 0.5, &p).unwrap(),
            0.125,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            moment_series(MomentKind::HolderLower(2.0), q(0.5), 0.5, &p).unwrap(),
            0.25 * 0.125 / (1.0 + 0.5 + 0.25),
            epsilon = 1e-15
        );
    }

    #[test]
    fn series_agrees_with_brute_force() {
        let p = TruncationPolicy::default();
        for &qv in &[0.2, 0.5, 0.8] {
            for &s in &[0.0, 0.3, 0.7, 1.0] {
                for kind in MomentKind::CLOSED {
                    let g = kind.integrand(qv);
                    let expect = if kind.is_upper() {
                        brute(&g, qv, 1.0) - brute(&g, qv, s)
                    } else {
                        brute(&g, qv, s)
                    };
                    let got = moment_series(kind, q(qv), s, &p).unwrap();
                    assert_abs_diff_eq!(got, expect, epsilon = 1e-13);
                }
            }
        }
    }

    #[test]
    fn audit_flags_k4_and_k6_at_half() {
        let r = audit_moments(q(0.5), 0.5, &TruncationPolicy::default()).unwrap();
        assert_eq!(r.flagged(), vec!["K4", "K6"]);
    }

    #[test]
    fn audit_quarter_k4_values() {
        let r = audit_moments(q(0.5), 0.25, &TruncationPolicy::default()).unwrap();
        let k4 = r.entry(MomentKind::K4).unwrap();
        assert!(k4.flagged);
        assert_abs_diff_eq!(k4.closed_paper, 0.1875, epsilon = 1e-15);
        assert_abs_diff_eq!(k4.series, 0.4375, epsilon = 1e-14);
    }

    #[test]
    fn audit_at_left_endpoint_flags_the_printed_upper_kernel_moment() {
        // At s = 0 the printed K4 reduces to q/(1+q) but int_0^1 (1 - qt) is 1/(1+q).
        let r = audit_moments(q(0.5), 0.0, &TruncationPolicy::default()).unwrap();
        assert_eq!(r.flagged(), vec!["K4", "K6"]);
        let k4 = r.entry(MomentKind::K4).unwrap();
        assert_abs_diff_eq!(k4.closed_paper, 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(k4.series, 2.0 / 3.0, epsilon = 1e-13);
    }

    #[test]
    fn corrected_form_matches_grid() {
        let p = TruncationPolicy::default();
        for i in 1..=9 {
            let qq = q(i as f64 / 10.0);
            for j in 0..=10 {
                let s = j as f64 / 10.0;
                let series = moment_series(MomentKind::K4, qq, s, &p).unwrap();
                let cc = moment_closed_form(MomentKind::K4, qq, s, MomentSource::ClosedCorrected)
                    .unwrap();
                assert!((cc - series).abs() <= 1e-10 * (1.0 + series.abs()));
            }
        }
    }

    #[test]
    fn classical_limits_near_one() {
        let p = TruncationPolicy::default();
        let qq = q(0.999);
        for &s in &[0.0, 0.25, 0.5, 0.9] {
            let u = 1.0 - s;
            assert!(
                (moment_series(MomentKind::K1, qq, s, &p).unwrap() - s * s / 2.0).abs() <= 2e-3
            );
            assert!(
                (moment_series(MomentKind::K2, qq, s, &p).unwrap() - s.powi(3) / 3.0).abs() <= 2e-3
            );
            assert!(
                (moment_series(MomentKind::K4, qq, s, &p).unwrap() - u * u / 2.0).abs() <= 2e-3
            );
            for v in [MomentSource::ClosedPaper, MomentSource::ClosedCorrected] {
                assert!(
                    (moment_closed_form(MomentKind::K4, qq, s, v).unwrap() - u * u / 2.0).abs()
                        <= 2e-3
                );
            }
        }
    }

    proptest! {
        #[test]
        fn differences_are_exact_within_a_source(qv in 0.05f64..0.95, s in 0.0f64..=1.0) {
            let p = TruncationPolicy::default();
            for src in MomentSource::ALL {
                let m = MomentSet::compute(q(qv), s, src, &p).unwrap();
                prop_assert_eq!(m.k3, m.k1 - m.k2);
                prop_assert_eq!(m.k6, m.k4 - m.k5);
            }
        }

        #[test]
        fn direct_k3_and_k6_series_match_differences(qv in 0.05f64..0.95, s in 0.0f64..=1.0) {
            let p = TruncationPolicy::default();
            let m = MomentSet::compute(q(qv), s, MomentSource::Series, &p).unwrap();
            prop_assert!((moment_series(MomentKind::K3, q(qv), s, &p).unwrap() - m.k3).abs() <= 1e-13);
            prop_assert!((moment_series(MomentKind::K6, q(qv), s, &p).unwrap() - m.k6).abs() <= 1e-13);
        }
    }
}
