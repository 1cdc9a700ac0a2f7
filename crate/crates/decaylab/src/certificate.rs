//! Evaluation records for one inequality or threshold.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertStatus {
    Pass,
    Fail,
    /// Both sides vanish or the check does not apply (e.g. a vacuous implication).
    Indeterminate,
}

/// Outcome of checking `lhs <= rhs * (1 + tol)`.
///
/// `rhs` already includes the constant; `constant` is kept for reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub constant: f64,
    pub tol: f64,
    /// `rhs - lhs`; infinite when the left side vanishes identically.
    pub margin: f64,
    pub status: CertStatus,
}

impl BoundCertificate {
    /// Standard one-sided comparison. A zero left side passes with infinite margin.
    pub fn compare(name: impl Into<String>, lhs: f64, rhs: f64, constant: f64, tol: f64) -> Self {
        let pass = lhs.is_finite() && rhs.is_finite() && lhs <= rhs * (1.0 + tol);
        let margin = if lhs == 0.0 && rhs >= 0.0 { f64::INFINITY } else { rhs - lhs };
        Self {
            name: name.into(),
            lhs,
            rhs,
            constant,
            tol,
            margin,
            status: if pass { CertStatus::Pass } else { CertStatus::Fail },
        }
    }

    /// Like [`compare`](Self::compare) but flags `0 <= 0` as indeterminate.
    pub fn compare_nondegenerate(
        name: impl Into<String>,
        lhs: f64,
        rhs: f64,
        constant: f64,
        tol: f64,
    ) -> Self {
        if lhs == 0.0 && rhs == 0.0 {
            Self::indeterminate(name, constant, tol)
        } else {
            Self::compare(name, lhs, rhs, constant, tol)
        }
    }

    /// Two-sided check `|lhs - rhs| <= tol |rhs|`; margin is `tol |rhs| - |lhs - rhs|`.
    pub fn equality(name: impl Into<String>, lhs: f64, rhs: f64, tol: f64) -> Self {
        let slack = tol * rhs.abs();
        let defect = (lhs - rhs).abs();
        let pass = defect.is_finite() && defect <= slack;
        Self {
            name: name.into(),
            lhs,
            rhs,
            constant: 1.0,
            tol,
            margin: slack - defect,
            status: if pass { CertStatus::Pass } else { CertStatus::Fail },
        }
    }

    pub fn indeterminate(name: impl Into<String>, constant: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            lhs: 0.0,
            rhs: 0.0,
            constant,
            tol,
            margin: f64::INFINITY,
            status: CertStatus::Indeterminate,
        }
    }

    pub fn passed(&self) -> bool {
        self.status == CertStatus::Pass
    }

    /// Pass or indeterminate.
    pub fn not_failed(&self) -> bool {
        self.status != CertStatus::Fail
    }

    /// `lhs / rhs`, or 0 when the left side vanishes.
    pub fn ratio(&self) -> f64 {
        if self.lhs == 0.0 {
            0.0
        } else {
            self.lhs / self.rhs
        }
    }

    /// Fold a sequence of per-sample certificates into one: worst margin, any failure fails.
    pub fn aggregate(name: impl Into<String>, certs: &[BoundCertificate]) -> Self {
        let name = name.into();
        let evaluated: Vec<&BoundCertificate> =
            certs.iter().filter(|c| c.status != CertStatus::Indeterminate).collect();
        let Some(worst) = evaluated
            .iter()
            .min_by(|a, b| a.margin.partial_cmp(&b.margin).unwrap_or(std::cmp::Ordering::Less))
        else {
            let (constant, tol) = certs.first().map(|c| (c.constant, c.tol)).unwrap_or((0.0, 0.0));
            return Self::indeterminate(name, constant, tol);
        };
        let failed = evaluated.iter().any(|c| c.status == CertStatus::Fail);
        Self {
            name,
            lhs: worst.lhs,
            rhs: worst.rhs,
            constant: worst.constant,
            tol: worst.tol,
            margin: worst.margin,
            status: if failed { CertStatus::Fail } else { CertStatus::Pass },
        }
    }
}
