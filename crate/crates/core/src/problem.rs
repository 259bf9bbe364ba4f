//! Full problem description: energy, flux, right-hand side, data, declared
//! constants, domain, and boundary values, plus the hypothesis classifier
//! that decides which boundedness result, if any, covers the problem.

use serde::{Deserialize, Serialize};

use crate::energy::{
    check_coercivity, check_gradient_growth, check_u_monotonicity, estimate_delta2, CheckOutcome,
    Delta2Estimate, EnergyDensity, GrowthCheck, GrowthEnvelope, TOL_IDENTITY,
};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::sampling::SamplingDomain;
use crate::structure::{
    check_comparison, check_rhs_growth, delta_exponent, gamma_exponent, CheckVariant,
    ComparisonReport, DataFunctions, GrowthForm, ParameterPack, RhsGrowthReport, RightHandSide,
    VectorField,
};

/// A fully specified boundary-value problem div a(x,u,Du) = b(x,u,Du) in a
/// box, u = boundary datum on the edge, together with every declared
/// hypothesis constant the checks audit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub name: String,
    pub energy: EnergyDensity,
    pub envelope: GrowthEnvelope,
    pub vector_field: VectorField,
    pub rhs: RightHandSide,
    #[serde(default = "default_form")]
    pub rhs_form: GrowthForm,
    #[serde(default)]
    pub data: DataFunctions,
    pub parameters: ParameterPack,
    pub domain: SamplingDomain,
    /// Boundary datum u0 as an expression in x alone.
    pub boundary: Expr,
}

fn default_form() -> GrowthForm {
    GrowthForm::Unilateral
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        self.parameters.validate()?;
        self.envelope.validate()?;
        self.domain.validate()?;
        let n = self.parameters.n;
        if self.domain.dim() != n {
            return Err(Error::input(format!(
                "domain dimension {} disagrees with n={n}",
                self.domain.dim()
            )));
        }
        self.energy.check_dim(n)?;
        self.vector_field.validate(n)?;
        // The envelope's coercivity data must agree with the declared pack;
        // both appear in config files and silent drift would make the audit
        // constants meaningless.
        if self.envelope.p != self.parameters.p {
            return Err(Error::input(format!(
                "envelope exponent p={} disagrees with pack p={}",
                self.envelope.p, self.parameters.p
            )));
        }
        if self.envelope.c5 != self.parameters.c5 {
            return Err(Error::input(format!(
                "envelope c5={} disagrees with pack c5={}",
                self.envelope.c5, self.parameters.c5
            )));
        }
        if self.envelope.c6 != self.parameters.c6 {
            return Err(Error::input(format!(
                "envelope c6={} disagrees with pack c6={}",
                self.envelope.c6, self.parameters.c6
            )));
        }
        if let Some(label) = self.rhs.detached_custom() {
            return Err(Error::input(format!(
                "custom right-hand side `{label}` has no callback attached; \
                 custom sources can only be added programmatically"
            )));
        }
        for (label, e) in [
            ("boundary", &self.boundary),
            ("b1", &self.data.b1),
            ("b2", &self.data.b2),
            ("b3", &self.data.b3),
            ("b4", &self.data.b4),
        ] {
            if e.max_coord() > n {
                return Err(Error::input(format!(
                    "{label} references coordinate x{} beyond n={n}",
                    e.max_coord()
                )));
            }
        }
        Ok(())
    }

    /// Boundary datum at a point.
    pub fn u0(&self, x: &[f64]) -> f64 {
        self.boundary.eval(x, 0.0)
    }

    /// Sup of |u0| over the domain boundary, by dense 1-D sweeps along each
    /// edge of the box (the datum is a closed-form expression, so a fine
    /// sweep is adequate and deterministic).
    pub fn u0_sup(&self) -> f64 {
        let bx = &self.domain.x_box;
        let n = bx.len();
        let mut sup = 0.0f64;
        let steps = 2048;
        let mut x = vec![0.0; n];
        for face_dim in 0..n {
            for side in 0..2 {
                // Sweep the face with all other coordinates on a coarse
                // lattice; for n=2 this is exact edge sampling.
                let sweep = |x: &mut Vec<f64>, sup: &mut f64| {
                    for i in 0..=steps {
                        let t = i as f64 / steps as f64;
                        let free = (face_dim + 1) % n;
                        x[free] = bx[free][0] + t * (bx[free][1] - bx[free][0]);
                        let v = self.u0(x).abs();
                        if v > *sup {
                            *sup = v;
                        }
                    }
                };
                x[face_dim] = bx[face_dim][side];
                for (d, b) in bx.iter().enumerate() {
                    if d != face_dim {
                        x[d] = b[0];
                    }
                }
                sweep(&mut x, &mut sup);
            }
        }
        sup
    }
}

/// Which boundedness statement covers the problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Exact hypotheses hold: solutions are globally bounded.
    Theorem1,
    /// Strict-interior hypotheses hold: the quantitative sup estimate with
    /// its explicit exponent applies.
    Theorem2,
    /// Some hypothesis failed; the reasons name each one.
    Uncovered,
}

/// Output of the hypothesis classifier: one verdict plus every check report
/// that fed into it. The verdict is a deterministic fold over the reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Classification {
    pub verdict: Verdict,
    pub reasons: Vec<String>,
    pub doubling: Delta2Estimate,
    pub envelope_contained: bool,
    pub coercivity: CheckOutcome,
    pub u_monotonicity: CheckOutcome,
    pub gradient_growth: GrowthCheck,
    pub comparison_exact: ComparisonReport,
    pub rhs_exact: RhsGrowthReport,
    pub comparison_eps: Option<ComparisonReport>,
    pub rhs_eps: Option<RhsGrowthReport>,
    pub strictness_violations: Vec<String>,
    pub gamma: Option<f64>,
    pub delta: Option<f64>,
}

/// Run every hypothesis check and fold the reports into a verdict.
///
/// The sharper classification requires the strict-interior exponents with
/// relative slack, the epsilon-variant inequalities, and computable gamma
/// and delta; the exact classification requires the boundary-exponent
/// inequalities. Both legs share the doubling, coercivity, monotonicity,
/// and gradient-pairing checks.
pub fn classify(problem: &ProblemSpec) -> Result<Classification> {
    problem.validate()?;
    let pk = &problem.parameters;
    let dom = &problem.domain;
    let tol = TOL_IDENTITY;

    let doubling = estimate_delta2(&problem.energy, dom)?;
    let envelope_contained = problem.envelope.contains(&doubling);
    let coercivity = check_coercivity(&problem.energy, pk.c5, pk.p, dom, tol)?;
    let u_monotonicity = check_u_monotonicity(&problem.energy, pk.c6, dom, tol)?;
    let gradient_growth = check_gradient_growth(
        &problem.energy,
        crate::energy::GradMode::Analytic,
        problem.envelope.m,
        problem.envelope.big_m,
        dom,
        tol,
    )?;

    let comparison_exact = check_comparison(
        &problem.vector_field,
        &problem.energy,
        &problem.data,
        pk,
        dom,
        CheckVariant::Exact,
        tol,
    )?;
    let exact_form = match problem.rhs_form {
        GrowthForm::Absolute => GrowthForm::Absolute,
        _ => GrowthForm::Unilateral,
    };
    let rhs_exact = check_rhs_growth(
        &problem.rhs,
        &problem.energy,
        &problem.data,
        pk,
        dom,
        exact_form,
        tol,
    )?;

    let strictness_violations = pk.strictness_violations();
    let (comparison_eps, rhs_eps, gamma, delta) = if strictness_violations.is_empty() {
        let ce = check_comparison(
            &problem.vector_field,
            &problem.energy,
            &problem.data,
            pk,
            dom,
            CheckVariant::Epsilon,
            tol,
        )?;
        let re = check_rhs_growth(
            &problem.rhs,
            &problem.energy,
            &problem.data,
            pk,
            dom,
            GrowthForm::UnilateralEps,
            tol,
        )?;
        (Some(ce), Some(re), gamma_exponent(pk).ok(), delta_exponent(pk).ok())
    } else {
        (None, None, None, delta_exponent(pk).ok())
    };

    let mut reasons = Vec::new();
    let common_ok = {
        let mut ok = true;
        if !envelope_contained {
            ok = false;
            reasons.push(format!(
                "doubling (Δ₂) envelope violated: estimated ratio range [{:.6e}, {:.6e}] \
                 escapes declared [m={}, M={}]",
                doubling.m_est, doubling.big_m_est, problem.envelope.m, problem.envelope.big_m
            ));
        }
        if !coercivity.passed {
            ok = false;
            reasons.push(format!(
                "coercivity f >= c5 |xi|^p failed (worst margin {:.3e})",
                coercivity.worst_margin
            ));
        }
        if !u_monotonicity.passed {
            ok = false;
            reasons.push(format!(
                "u-monotonicity f(x,v,xi) <= c6 f(x,u,xi) for |v| <= |u| failed \
                 (worst margin {:.3e})",
                u_monotonicity.worst_margin
            ));
        }
        if !gradient_growth.passed() {
            ok = false;
            reasons.push(format!(
                "gradient pairing bounds 2(1-1/m) f <= (D_xi f, xi) <= (M-1) f failed \
                 (lower margin {:.3e}, upper margin {:.3e})",
                gradient_growth.lower.worst_margin, gradient_growth.upper.worst_margin
            ));
        }
        ok
    };

    let eps_ok = common_ok
        && strictness_violations.is_empty()
        && comparison_eps.as_ref().is_some_and(|c| c.passed())
        && rhs_eps.as_ref().is_some_and(|r| r.passed())
        && gamma.is_some()
        && delta.is_some();

    let exact_ok = common_ok && comparison_exact.passed() && rhs_exact.passed();

    let verdict = if eps_ok {
        Verdict::Theorem2
    } else if exact_ok {
        Verdict::Theorem1
    } else {
        if common_ok {
            if !comparison_exact.passed() {
                reasons.push(format!(
                    "comparison inequality failed (lower margin {:.3e}, upper margin {:.3e})",
                    comparison_exact.lower.worst_margin, comparison_exact.upper.worst_margin
                ));
            }
            if !rhs_exact.passed() {
                reasons.push(format!(
                    "right-hand side growth bound failed (primary margin {:.3e}, \
                     secondary margin {:.3e})",
                    rhs_exact.primary.worst_margin, rhs_exact.secondary.worst_margin
                ));
            }
        }
        Verdict::Uncovered
    };
    if verdict == Verdict::Theorem1 {
        // Explain why the sharper classification was not reached.
        reasons.extend(strictness_violations.iter().cloned());
        if strictness_violations.is_empty() {
            if let Some(c) = &comparison_eps {
                if !c.passed() {
                    reasons.push("epsilon-variant comparison inequality failed".into());
                }
            }
            if let Some(r) = &rhs_eps {
                if !r.passed() {
                    reasons.push("epsilon-variant growth bound failed".into());
                }
            }
        }
    }

    Ok(Classification {
        verdict,
        reasons,
        doubling,
        envelope_contained,
        coercivity,
        u_monotonicity,
        gradient_growth,
        comparison_exact,
        rhs_exact,
        comparison_eps,
        rhs_eps,
        strictness_violations,
        gamma,
        delta,
    })
}
