//! Energy densities f(x, u, xi) and their pointwise hypothesis checks.
//!
//! A density is admissible for the certification pipeline when it is convex
//! in xi, doubles controllably (m f(xi) <= f(2 xi) <= M f(xi) with
//! M >= m > 1), lies above a power coercivity floor, and depends on u only
//! up to a bounded factor. None of that is assumed here: each property is
//! estimated or checked over a seeded sample cloud, with witnesses reported
//! on failure. The exponential families are included deliberately as
//! negative controls whose doubling ratio exceeds any bound.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::sampling::{dot, norm, Sample, SamplingDomain};

/// Below this value a density sample counts as degenerate for ratio
/// estimation: the quotient f(2 xi)/f(xi) stops carrying information.
pub const DEGENERACY_FLOOR: f64 = 1e-300;

/// Tolerance for identity-style comparisons (same quantity computed two ways).
pub const TOL_IDENTITY: f64 = 1e-9;

/// Tolerance when one side comes from a finite-difference approximation.
pub const TOL_FD: f64 = 1e-6;

/// How xi-gradients are produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GradMode {
    Analytic,
    /// Central differences; the step is scaled by max(1, |xi|).
    FiniteDifference { step: f64 },
}

impl Default for GradMode {
    fn default() -> Self {
        GradMode::Analytic
    }
}

/// Declared structural constants for a density: doubling ratios, the
/// coercivity floor f >= c5 |xi|^p, and the u-comparison factor c6.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthEnvelope {
    pub m: f64,
    pub big_m: f64,
    pub c5: f64,
    pub c6: f64,
    pub p: f64,
}

impl GrowthEnvelope {
    pub fn validate(&self) -> Result<()> {
        if !(self.m > 1.0 && self.big_m >= self.m && self.big_m.is_finite()) {
            return Err(Error::input(format!(
                "doubling envelope needs M >= m > 1, got m={}, M={}",
                self.m, self.big_m
            )));
        }
        if !(self.c5 > 0.0) {
            return Err(Error::input(format!("coercivity constant c5={} must be positive", self.c5)));
        }
        if !(self.c6 >= 1.0) {
            return Err(Error::input(format!("u-comparison constant c6={} must be >= 1", self.c6)));
        }
        if !(self.p > 1.0) {
            return Err(Error::input(format!("growth exponent p={} must exceed 1", self.p)));
        }
        Ok(())
    }

    /// Whether the declared envelope contains a measured one, with a hair of
    /// slack for rounding in the measured ratios.
    pub fn contains(&self, est: &Delta2Estimate) -> bool {
        let slack = 1e-9;
        self.m * (1.0 - slack) <= est.m_est && est.big_m_est <= self.big_m * (1.0 + slack)
    }
}

/// Built-in density families plus weighted sums of two of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum EnergyDensity {
    /// coef * |xi|^p
    Power {
        #[serde(default = "one")]
        coef: f64,
        p: f64,
    },
    /// |xi|^p(x) + a(x) |xi|^q(x)
    DoublePhase { p: Expr, q: Expr, a: Expr },
    /// |xi|^p(x,u)
    VariableExponent { p: Expr },
    /// sum_i coef_i(x,u) |xi_i|^{p_i}
    Anisotropic { coef: Vec<Expr>, p: Vec<f64> },
    /// |xi|^p log(1 + |xi|)
    LogPerturbed { p: f64 },
    /// alpha(x,u) f + beta(x,u) g
    TwoEnergySum { alpha: Expr, f: Box<EnergyDensity>, beta: Expr, g: Box<EnergyDensity> },
    /// exp(|xi|^power); doubling ratio unbounded, kept as a negative control
    ExponentialControl { power: f64 },
}

fn one() -> f64 {
    1.0
}

impl EnergyDensity {
    pub fn power(p: f64) -> EnergyDensity {
        EnergyDensity::Power { coef: 1.0, p }
    }

    /// Raw evaluation; may return inf or NaN for out-of-range inputs.
    pub fn eval_raw(&self, x: &[f64], u: f64, xi: &[f64]) -> f64 {
        let t = norm(xi);
        match self {
            EnergyDensity::Power { coef, p } => coef * t.powf(*p),
            EnergyDensity::DoublePhase { p, q, a } => {
                t.powf(p.eval(x, u)) + a.eval(x, u) * t.powf(q.eval(x, u))
            }
            EnergyDensity::VariableExponent { p } => t.powf(p.eval(x, u)),
            EnergyDensity::Anisotropic { coef, p } => coef
                .iter()
                .zip(p)
                .zip(xi)
                .map(|((c, pi), v)| c.eval(x, u) * v.abs().powf(*pi))
                .sum(),
            EnergyDensity::LogPerturbed { p } => t.powf(*p) * t.ln_1p(),
            EnergyDensity::TwoEnergySum { alpha, f, beta, g } => {
                alpha.eval(x, u) * f.eval_raw(x, u, xi) + beta.eval(x, u) * g.eval_raw(x, u, xi)
            }
            EnergyDensity::ExponentialControl { power } => t.powf(*power).exp(),
        }
    }

    /// Checked evaluation: errors on non-finite results.
    pub fn eval(&self, x: &[f64], u: f64, xi: &[f64]) -> Result<f64> {
        let v = self.eval_raw(x, u, xi);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite {
                what: "energy density".into(),
                x: x.to_vec(),
                u,
                xi: xi.to_vec(),
            })
        }
    }

    /// xi-gradient with an optional regularization floor on the singular
    /// power kernels: each |.|^{e-2} factor is evaluated at
    /// sqrt(reg^2 + |.|^2). reg = 0 is the exact gradient; the solver passes
    /// its configured floor. The subgradient selection at xi = 0 is the zero
    /// vector.
    pub fn grad_xi_reg(&self, x: &[f64], u: f64, xi: &[f64], reg: f64) -> Vec<f64> {
        let t = norm(xi);
        let teff = |s: f64| if reg == 0.0 { s } else { (reg * reg + s * s).sqrt() };
        match self {
            EnergyDensity::Power { coef, p } => {
                if t == 0.0 && reg == 0.0 {
                    return vec![0.0; xi.len()];
                }
                let factor = coef * p * teff(t).powf(p - 2.0);
                xi.iter().map(|v| factor * v).collect()
            }
            EnergyDensity::DoublePhase { p, q, a } => {
                if t == 0.0 && reg == 0.0 {
                    return vec![0.0; xi.len()];
                }
                let (pv, qv, av) = (p.eval(x, u), q.eval(x, u), a.eval(x, u));
                let tr = teff(t);
                let factor = pv * tr.powf(pv - 2.0) + av * qv * tr.powf(qv - 2.0);
                xi.iter().map(|v| factor * v).collect()
            }
            EnergyDensity::VariableExponent { p } => {
                if t == 0.0 && reg == 0.0 {
                    return vec![0.0; xi.len()];
                }
                let pv = p.eval(x, u);
                let factor = pv * teff(t).powf(pv - 2.0);
                xi.iter().map(|v| factor * v).collect()
            }
            EnergyDensity::Anisotropic { coef, p } => coef
                .iter()
                .zip(p)
                .zip(xi)
                .map(|((c, pi), v)| {
                    if *v == 0.0 && reg == 0.0 {
                        0.0
                    } else {
                        c.eval(x, u) * pi * teff(v.abs()).powf(pi - 2.0) * v
                    }
                })
                .collect(),
            EnergyDensity::LogPerturbed { p } => {
                if t == 0.0 && reg == 0.0 {
                    return vec![0.0; xi.len()];
                }
                let factor = teff(t).powf(p - 2.0) * (p * t.ln_1p() + t / (1.0 + t));
                xi.iter().map(|v| factor * v).collect()
            }
            EnergyDensity::TwoEnergySum { alpha, f, beta, g } => {
                let (av, bv) = (alpha.eval(x, u), beta.eval(x, u));
                let df = f.grad_xi_reg(x, u, xi, reg);
                let dg = g.grad_xi_reg(x, u, xi, reg);
                df.iter().zip(&dg).map(|(a, b)| av * a + bv * b).collect()
            }
            EnergyDensity::ExponentialControl { power } => {
                if t == 0.0 && reg == 0.0 {
                    return vec![0.0; xi.len()];
                }
                let factor = power * teff(t).powf(power - 2.0) * t.powf(*power).exp();
                xi.iter().map(|v| factor * v).collect()
            }
        }
    }

    /// Checked xi-gradient honoring the density's gradient mode.
    pub fn grad_xi(&self, mode: GradMode, x: &[f64], u: f64, xi: &[f64]) -> Result<Vec<f64>> {
        let g = match mode {
            GradMode::Analytic => self.grad_xi_reg(x, u, xi, 0.0),
            GradMode::FiniteDifference { step } => {
                let h = step * norm(xi).max(1.0);
                let mut g = Vec::with_capacity(xi.len());
                let mut shifted = xi.to_vec();
                for i in 0..xi.len() {
                    shifted[i] = xi[i] + h;
                    let hi = self.eval_raw(x, u, &shifted);
                    shifted[i] = xi[i] - h;
                    let lo = self.eval_raw(x, u, &shifted);
                    shifted[i] = xi[i];
                    g.push((hi - lo) / (2.0 * h));
                }
                g
            }
        };
        if g.iter().all(|v| v.is_finite()) {
            Ok(g)
        } else {
            Err(Error::NonFinite {
                what: "density gradient".into(),
                x: x.to_vec(),
                u,
                xi: xi.to_vec(),
            })
        }
    }

    /// Whether any coefficient or exponent depends on the solution value.
    pub fn depends_on_u(&self) -> bool {
        match self {
            EnergyDensity::Power { .. }
            | EnergyDensity::LogPerturbed { .. }
            | EnergyDensity::ExponentialControl { .. } => false,
            EnergyDensity::DoublePhase { p, q, a } => {
                p.references_u() || q.references_u() || a.references_u()
            }
            EnergyDensity::VariableExponent { p } => p.references_u(),
            EnergyDensity::Anisotropic { coef, .. } => coef.iter().any(|c| c.references_u()),
            EnergyDensity::TwoEnergySum { alpha, f, beta, g } => {
                alpha.references_u()
                    || beta.references_u()
                    || f.depends_on_u()
                    || g.depends_on_u()
            }
        }
    }

    /// Frozen linear kernel at state (x, u, xi): the matrix A with
    /// A xi = D_xi f(x, u, xi) under the same regularization, linear in its
    /// argument once (x, u, |xi|) are frozen. Isotropic families give a
    /// scalar multiple of the identity, the anisotropic family a diagonal.
    /// The fixed-point map built on this kernel has the true discrete
    /// solution as its fixed point.
    pub fn kernel(&self, x: &[f64], u: f64, xi: &[f64], reg: f64) -> Vec<Vec<f64>> {
        let n = xi.len();
        let t = norm(xi);
        let teff = |s: f64| if reg == 0.0 { s } else { (reg * reg + s * s).sqrt() };
        let scaled_identity = |s: f64| {
            let mut a = vec![vec![0.0; n]; n];
            for (i, row) in a.iter_mut().enumerate() {
                row[i] = s;
            }
            a
        };
        match self {
            EnergyDensity::Power { coef, p } => scaled_identity(coef * p * teff(t).powf(p - 2.0)),
            EnergyDensity::DoublePhase { p, q, a } => {
                let (pv, qv, av) = (p.eval(x, u), q.eval(x, u), a.eval(x, u));
                let tr = teff(t);
                scaled_identity(pv * tr.powf(pv - 2.0) + av * qv * tr.powf(qv - 2.0))
            }
            EnergyDensity::VariableExponent { p } => {
                let pv = p.eval(x, u);
                scaled_identity(pv * teff(t).powf(pv - 2.0))
            }
            EnergyDensity::Anisotropic { coef, p } => {
                let mut a = vec![vec![0.0; n]; n];
                for (i, ((c, pi), v)) in coef.iter().zip(p).zip(xi).enumerate() {
                    a[i][i] = c.eval(x, u) * pi * teff(v.abs()).powf(pi - 2.0);
                }
                a
            }
            EnergyDensity::LogPerturbed { p } => {
                scaled_identity(teff(t).powf(p - 2.0) * (p * t.ln_1p() + t / (1.0 + t)))
            }
            EnergyDensity::TwoEnergySum { alpha, f, beta, g } => {
                let (av, bv) = (alpha.eval(x, u), beta.eval(x, u));
                let kf = f.kernel(x, u, xi, reg);
                let kg = g.kernel(x, u, xi, reg);
                kf.into_iter()
                    .zip(kg)
                    .map(|(rf, rg)| {
                        rf.into_iter().zip(rg).map(|(a, b)| av * a + bv * b).collect()
                    })
                    .collect()
            }
            EnergyDensity::ExponentialControl { power } => {
                scaled_identity(power * teff(t).powf(power - 2.0) * t.powf(*power).exp())
            }
        }
    }

    /// Reject densities whose per-component data disagree with the gradient
    /// dimension n.
    pub fn check_dim(&self, n: usize) -> Result<()> {
        match self {
            EnergyDensity::Anisotropic { coef, p } => {
                if coef.len() != n || p.len() != n {
                    return Err(Error::input(format!(
                        "anisotropic density has {} coefficients and {} exponents, expected {n}",
                        coef.len(),
                        p.len()
                    )));
                }
                Ok(())
            }
            EnergyDensity::TwoEnergySum { f, g, .. } => {
                f.check_dim(n)?;
                g.check_dim(n)
            }
            _ => Ok(()),
        }
    }
}

/// Extremal doubling-ratio sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatioWitness {
    pub sample: Sample,
    pub f_value: f64,
    pub f_doubled: f64,
    pub ratio: f64,
}

/// Measured doubling envelope over a sample cloud.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Delta2Estimate {
    pub m_est: f64,
    pub big_m_est: f64,
    pub used: usize,
    pub skipped: usize,
    pub witness_low: Option<RatioWitness>,
    pub witness_high: Option<RatioWitness>,
}

/// Estimate inf and sup of f(x, u, 2 xi) / f(x, u, xi) over the domain.
///
/// Samples with f below the degeneracy floor (or non-finite) are skipped and
/// counted; more than half skipped means the family is degenerate on this
/// domain and no envelope can be measured. A doubled value that overflows a
/// finite base reports the largest finite ratio, exactly the witness an
/// uncontrolled family should produce.
pub fn estimate_delta2(f: &EnergyDensity, dom: &SamplingDomain) -> Result<Delta2Estimate> {
    dom.validate()?;
    let mut sampler = dom.sampler();
    let mut est = Delta2Estimate {
        m_est: f64::INFINITY,
        big_m_est: f64::NEG_INFINITY,
        used: 0,
        skipped: 0,
        witness_low: None,
        witness_high: None,
    };
    for _ in 0..dom.n_samples {
        let s = sampler.next_sample();
        let fv = f.eval_raw(&s.x, s.u, &s.xi);
        if !fv.is_finite() || fv < DEGENERACY_FLOOR {
            est.skipped += 1;
            continue;
        }
        let doubled: Vec<f64> = s.xi.iter().map(|v| 2.0 * v).collect();
        let f2 = f.eval_raw(&s.x, s.u, &doubled);
        // Overflowed doublings saturate instead of going infinite: estimates
        // land in serialized reports, which only admit finite numbers.
        let ratio = if f2.is_nan() {
            est.skipped += 1;
            continue;
        } else if f2.is_infinite() {
            f64::MAX
        } else {
            f2 / fv
        };
        est.used += 1;
        let f2s = f2.min(f64::MAX);
        if ratio < est.m_est {
            est.m_est = ratio;
            est.witness_low = Some(RatioWitness { sample: s.clone(), f_value: fv, f_doubled: f2s, ratio });
        }
        if ratio > est.big_m_est {
            est.big_m_est = ratio;
            est.witness_high = Some(RatioWitness { sample: s, f_value: fv, f_doubled: f2s, ratio });
        }
    }
    if est.skipped * 2 > dom.n_samples || est.used == 0 {
        return Err(Error::AllDegenerate { skipped: est.skipped, total: dom.n_samples });
    }
    Ok(est)
}

/// A sample where a checked inequality failed; `aux` carries any secondary
/// scalar draw involved (e.g. the comparison value v in the u-monotonicity
/// check).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Witness {
    pub sample: Sample,
    pub aux: Option<f64>,
    pub lhs: f64,
    pub rhs: f64,
}

pub const MAX_WITNESSES: usize = 10;

/// Outcome of a sampled inequality check. `worst_margin` is the minimum of
/// (rhs - lhs) / scale over the cloud: negative means a violation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub passed: bool,
    pub checked: usize,
    pub skipped: usize,
    pub worst_margin: f64,
    pub violations: Vec<Witness>,
}

impl CheckOutcome {
    pub(crate) fn empty() -> CheckOutcome {
        CheckOutcome {
            passed: true,
            checked: 0,
            skipped: 0,
            // MAX, not infinity: margins are serialized and JSON has no inf.
            worst_margin: f64::MAX,
            violations: Vec::new(),
        }
    }

    pub(crate) fn record(
        &mut self,
        lhs: f64,
        rhs: f64,
        scale: f64,
        tol: f64,
        witness: impl FnOnce() -> Witness,
    ) {
        self.checked += 1;
        let margin = (rhs - lhs) / scale;
        if margin < self.worst_margin {
            self.worst_margin = margin;
        }
        if lhs > rhs + tol * scale {
            self.passed = false;
            if self.violations.len() < MAX_WITNESSES {
                self.violations.push(witness());
            }
        }
    }
}

/// Check f(x, u, xi) >= c5 |xi|^p over the domain (as lhs <= rhs with sides
/// swapped), i.e. the power coercivity floor.
pub fn check_coercivity(
    f: &EnergyDensity,
    c5: f64,
    p: f64,
    dom: &SamplingDomain,
    tol: f64,
) -> Result<CheckOutcome> {
    dom.validate()?;
    let mut sampler = dom.sampler();
    let mut out = CheckOutcome::empty();
    for _ in 0..dom.n_samples {
        let s = sampler.next_sample();
        let fv = f.eval_raw(&s.x, s.u, &s.xi);
        let floor = c5 * norm(&s.xi).powf(p);
        if !fv.is_finite() || !floor.is_finite() {
            out.skipped += 1;
            continue;
        }
        let scale = 1.0 + fv.abs() + floor;
        out.record(floor, fv, scale, tol, || Witness {
            sample: s.clone(),
            aux: None,
            lhs: floor,
            rhs: fv,
        });
    }
    Ok(out)
}

/// Check f(x, v, xi) <= c6 f(x, u, xi) for sampled pairs with |v| <= |u|.
pub fn check_u_monotonicity(
    f: &EnergyDensity,
    c6: f64,
    dom: &SamplingDomain,
    tol: f64,
) -> Result<CheckOutcome> {
    dom.validate()?;
    let mut sampler = dom.sampler();
    let mut out = CheckOutcome::empty();
    for _ in 0..dom.n_samples {
        let s = sampler.next_sample();
        let v = sampler.next_in(-s.u.abs(), s.u.abs());
        let smaller = f.eval_raw(&s.x, v, &s.xi);
        let larger = f.eval_raw(&s.x, s.u, &s.xi);
        if !smaller.is_finite() || !larger.is_finite() {
            out.skipped += 1;
            continue;
        }
        let bound = c6 * larger;
        let scale = 1.0 + smaller.abs() + bound.abs();
        out.record(smaller, bound, scale, tol, || Witness {
            sample: s.clone(),
            aux: Some(v),
            lhs: smaller,
            rhs: bound,
        });
    }
    Ok(out)
}

/// Two-sided gradient growth over a sample cloud.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrowthCheck {
    pub lower: CheckOutcome,
    pub upper: CheckOutcome,
}

impl GrowthCheck {
    pub fn passed(&self) -> bool {
        self.lower.passed && self.upper.passed
    }
}

/// Check 2 (1 - 1/m) f <= (D_xi f, xi) <= (M - 1) f over the domain.
///
/// Both sides are consequences of convexity plus the doubling envelope
/// (m, M); checking them against a *measured* envelope is the lemma suite's
/// job and against a declared one is part of classification.
pub fn check_gradient_growth(
    f: &EnergyDensity,
    mode: GradMode,
    m: f64,
    big_m: f64,
    dom: &SamplingDomain,
    tol: f64,
) -> Result<GrowthCheck> {
    dom.validate()?;
    if !(m > 1.0 && big_m >= m) {
        return Err(Error::input(format!("need M >= m > 1, got m={m}, M={big_m}")));
    }
    let mut sampler = dom.sampler();
    let mut lower = CheckOutcome::empty();
    let mut upper = CheckOutcome::empty();
    let lower_coef = 2.0 * (1.0 - 1.0 / m);
    for _ in 0..dom.n_samples {
        let s = sampler.next_sample();
        let fv = f.eval_raw(&s.x, s.u, &s.xi);
        let grad = match mode {
            GradMode::Analytic => f.grad_xi_reg(&s.x, s.u, &s.xi, 0.0),
            GradMode::FiniteDifference { .. } => match f.grad_xi(mode, &s.x, s.u, &s.xi) {
                Ok(g) => g,
                Err(_) => {
                    lower.skipped += 1;
                    upper.skipped += 1;
                    continue;
                }
            },
        };
        let pair = dot(&grad, &s.xi);
        if !fv.is_finite() || !pair.is_finite() {
            lower.skipped += 1;
            upper.skipped += 1;
            continue;
        }
        let scale = 1.0 + pair.abs() + fv.abs() * (big_m - 1.0).max(lower_coef);
        lower.record(lower_coef * fv, pair, scale, tol, || Witness {
            sample: s.clone(),
            aux: None,
            lhs: lower_coef * fv,
            rhs: pair,
        });
        upper.record(pair, (big_m - 1.0) * fv, scale, tol, || Witness {
            sample: s.clone(),
            aux: None,
            lhs: pair,
            rhs: (big_m - 1.0) * fv,
        });
    }
    Ok(GrowthCheck { lower, upper })
}

/// Shared handle type for code-level callbacks (used by the right-hand sides
/// and boundary data that have no closed-form expression in the grammar).
pub type ScalarFn = Arc<dyn Fn(&[f64], f64, &[f64]) -> f64 + Send + Sync>;

#[cfg(test)]
mod tests {
    use super::*;

    fn dom(n_samples: usize) -> SamplingDomain {
        let mut d = SamplingDomain::unit_box(2);
        d.n_samples = n_samples;
        d
    }

    fn double_phase(p: f64, q: f64, a: &str) -> EnergyDensity {
        EnergyDensity::DoublePhase {
            p: Expr::constant(p),
            q: Expr::constant(q),
            a: Expr::parse(a).unwrap(),
        }
    }

    #[test]
    fn power_values() {
        let f = EnergyDensity::power(2.0);
        assert_eq!(f.eval(&[0.0, 0.0], 0.0, &[3.0, 4.0]).unwrap(), 25.0);
        let half = EnergyDensity::Power { coef: 0.5, p: 2.0 };
        assert_eq!(half.eval(&[0.0, 0.0], 0.0, &[3.0, 4.0]).unwrap(), 12.5);
    }

    #[test]
    fn double_phase_value() {
        let f = double_phase(2.0, 3.0, "1");
        assert_eq!(f.eval(&[0.5, 0.5], 0.0, &[1.0, 0.0]).unwrap(), 2.0);
    }

    #[test]
    fn log_perturbed_value() {
        let f = EnergyDensity::LogPerturbed { p: 2.0 };
        let v = f.eval(&[0.0, 0.0], 0.0, &[1.0, 0.0]).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn vanishing_at_zero_gradient_argument() {
        for f in [
            EnergyDensity::power(2.0),
            double_phase(2.0, 3.0, "x1"),
            EnergyDensity::LogPerturbed { p: 2.0 },
        ] {
            assert_eq!(f.eval(&[0.5, 0.5], 0.0, &[0.0, 0.0]).unwrap(), 0.0);
            assert_eq!(f.grad_xi_reg(&[0.5, 0.5], 0.0, &[0.0, 0.0], 0.0), vec![0.0, 0.0]);
        }
    }

    #[test]
    fn power_gradient() {
        let f = EnergyDensity::power(2.0);
        let g = f.grad_xi(GradMode::Analytic, &[0.0, 0.0], 0.0, &[1.0, 2.0]).unwrap();
        assert_eq!(g, vec![2.0, 4.0]);
    }

    #[test]
    fn double_phase_gradient() {
        // p=2, q=4, a=1 at xi=(1,0): D = (2 + 4)e1.
        let f = double_phase(2.0, 4.0, "1");
        let g = f.grad_xi(GradMode::Analytic, &[0.0, 0.0], 0.0, &[1.0, 0.0]).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-14 && g[1] == 0.0);
    }

    #[test]
    fn euler_identity_for_powers() {
        // (D_xi f, xi) = p f for f = |xi|^p, any xi != 0.
        let d = dom(2000);
        for p in [1.5, 2.0, 3.0] {
            let f = EnergyDensity::power(p);
            let mut sampler = d.sampler();
            for _ in 0..d.n_samples {
                let s = sampler.next_sample();
                let fv = f.eval_raw(&s.x, s.u, &s.xi);
                let pair = dot(&f.grad_xi_reg(&s.x, s.u, &s.xi, 0.0), &s.xi);
                assert!(
                    (pair - p * fv).abs() <= 1e-12 * (1.0 + (p * fv).abs()),
                    "p={p}: pair={pair}, p*f={}",
                    p * fv
                );
            }
        }
    }

    #[test]
    fn finite_difference_matches_analytic() {
        let fd = GradMode::FiniteDifference { step: 1e-6 };
        let families = [
            EnergyDensity::power(3.0),
            double_phase(2.0, 3.0, "1 + x1"),
            EnergyDensity::LogPerturbed { p: 2.0 },
            EnergyDensity::Anisotropic {
                coef: vec![Expr::constant(1.0), Expr::constant(1.0)],
                p: vec![2.0, 3.0],
            },
        ];
        let mut sampler = dom(200).sampler();
        for _ in 0..200 {
            let s = sampler.next_sample();
            if norm(&s.xi) < 1e-2 {
                continue; // FD step would straddle the kink at the origin
            }
            for f in &families {
                let a = f.grad_xi(GradMode::Analytic, &s.x, s.u, &s.xi).unwrap();
                let n = f.grad_xi(fd, &s.x, s.u, &s.xi).unwrap();
                let scale = 1.0 + norm(&a);
                for i in 0..2 {
                    assert!(
                        (a[i] - n[i]).abs() <= TOL_FD * scale,
                        "{f:?} at {:?}: analytic {a:?} vs fd {n:?}",
                        s.xi
                    );
                }
            }
        }
    }

    #[test]
    fn delta2_power_is_exact() {
        for (p, want) in [(1.5, 2.0f64.powf(1.5)), (2.0, 4.0), (3.0, 8.0)] {
            let est = estimate_delta2(&EnergyDensity::power(p), &dom(20_000)).unwrap();
            assert!((est.m_est - want).abs() < 1e-9 * want, "p={p}: m_est={}", est.m_est);
            assert!((est.big_m_est - want).abs() < 1e-9 * want, "p={p}: M_est={}", est.big_m_est);
            assert_eq!(est.skipped, 0);
        }
    }

    #[test]
    fn delta2_double_phase_bracketed() {
        let est = estimate_delta2(&double_phase(2.0, 3.0, "1"), &dom(20_000)).unwrap();
        assert!(est.m_est >= 4.0 - 1e-9, "m_est={}", est.m_est);
        assert!(est.big_m_est <= 8.0 + 1e-9, "M_est={}", est.big_m_est);
        // The extremes are approached at the ends of the radius range.
        assert!(est.m_est < 4.1 && est.big_m_est > 7.9);
    }

    #[test]
    fn delta2_log_perturbed_bracketed() {
        // Ratio = 2^p * log(1+2t)/log(1+t); the log factor lives in (1, 2).
        let est = estimate_delta2(&EnergyDensity::LogPerturbed { p: 2.0 }, &dom(20_000)).unwrap();
        assert!(est.m_est > 4.0 && est.big_m_est < 8.0 + 1e-9);
        assert!(est.big_m_est / 4.0 <= 2.0 + 1e-6, "log factor sup {}", est.big_m_est / 4.0);
    }

    #[test]
    fn delta2_exponential_unbounded() {
        let est = estimate_delta2(&EnergyDensity::ExponentialControl { power: 1.0 }, &dom(20_000))
            .unwrap();
        assert!(est.big_m_est > 1e6, "M_est={}", est.big_m_est);
        let w = est.witness_high.unwrap();
        assert!(w.ratio > 1e6);
    }

    #[test]
    fn delta2_all_degenerate_errors() {
        let zero = EnergyDensity::Anisotropic {
            coef: vec![Expr::zero(), Expr::zero()],
            p: vec![2.0, 2.0],
        };
        match estimate_delta2(&zero, &dom(1000)) {
            Err(Error::AllDegenerate { skipped, total }) => {
                assert_eq!((skipped, total), (1000, 1000));
            }
            other => panic!("expected AllDegenerate, got {other:?}"),
        }
    }

    #[test]
    fn coercivity_pass_and_fail() {
        let ok = check_coercivity(&EnergyDensity::power(2.0), 1.0, 2.0, &dom(5000), TOL_IDENTITY)
            .unwrap();
        assert!(ok.passed && ok.skipped == 0);

        // |xi|^1.5 sits below |xi|^2 once |xi| > 1.
        let bad = check_coercivity(&EnergyDensity::power(1.5), 1.0, 2.0, &dom(5000), TOL_IDENTITY)
            .unwrap();
        assert!(!bad.passed);
        let w = &bad.violations[0];
        assert!(norm(&w.sample.xi) > 1.0);
    }

    #[test]
    fn u_monotonicity_cases() {
        // u-independent density: passes with c6 = 1.
        let indep = check_u_monotonicity(&EnergyDensity::power(2.0), 1.0, &dom(5000), TOL_IDENTITY)
            .unwrap();
        assert!(indep.passed);

        // Weight 2 + 1/(1+u^2) in [2,3]: ratio bounded by 3/2.
        let weighted = EnergyDensity::TwoEnergySum {
            alpha: Expr::parse("2 + 1/(1+u*u)").unwrap(),
            f: Box::new(EnergyDensity::power(2.0)),
            beta: Expr::zero(),
            g: Box::new(EnergyDensity::power(2.0)),
        };
        assert!(check_u_monotonicity(&weighted, 1.5, &dom(5000), TOL_IDENTITY).unwrap().passed);
        assert!(!check_u_monotonicity(&weighted, 1.2, &dom(5000), TOL_IDENTITY).unwrap().passed);

        // Weight |u|: increasing in |u|, so c6 = 1 suffices.
        let increasing = EnergyDensity::TwoEnergySum {
            alpha: Expr::parse("abs(u)").unwrap(),
            f: Box::new(EnergyDensity::power(2.0)),
            beta: Expr::zero(),
            g: Box::new(EnergyDensity::power(2.0)),
        };
        assert!(check_u_monotonicity(&increasing, 1.0, &dom(5000), TOL_IDENTITY).unwrap().passed);
    }

    #[test]
    fn gradient_growth_with_measured_envelope() {
        let d = dom(20_000);
        let families: Vec<EnergyDensity> = vec![
            EnergyDensity::power(1.5),
            EnergyDensity::power(2.0),
            EnergyDensity::power(3.0),
            double_phase(2.0, 3.0, "1"),
            EnergyDensity::LogPerturbed { p: 2.0 },
        ];
        for f in &families {
            let est = estimate_delta2(f, &d).unwrap();
            let chk =
                check_gradient_growth(f, GradMode::Analytic, est.m_est, est.big_m_est, &d, TOL_FD)
                    .unwrap();
            assert!(chk.passed(), "{f:?}: lower {:?} upper {:?}", chk.lower.worst_margin, chk.upper.worst_margin);
        }
    }

    #[test]
    fn gradient_growth_rejects_tight_envelope() {
        // Claiming M = 2.5 for |xi|^2 makes the upper bound (M-1) f = 1.5 f
        // sit below (D f, xi) = 2 f.
        let chk = check_gradient_growth(
            &EnergyDensity::power(2.0),
            GradMode::Analytic,
            2.5,
            2.5,
            &dom(2000),
            TOL_IDENTITY,
        )
        .unwrap();
        assert!(!chk.upper.passed && chk.lower.passed);
    }

    #[test]
    fn envelope_validation() {
        let good = GrowthEnvelope { m: 4.0, big_m: 8.0, c5: 1.0, c6: 1.0, p: 2.0 };
        assert!(good.validate().is_ok());
        for bad in [
            GrowthEnvelope { m: 1.0, ..good },
            GrowthEnvelope { big_m: 2.0, ..good },
            GrowthEnvelope { c5: 0.0, ..good },
            GrowthEnvelope { c6: 0.5, ..good },
            GrowthEnvelope { p: 1.0, ..good },
        ] {
            assert!(bad.validate().is_err(), "{bad:?} should fail validation");
        }
    }

    #[test]
    fn serde_round_trip() {
        let f = double_phase(2.0, 3.0, "x1*x2");
        let json = serde_json::to_string(&f).unwrap();
        let back: EnergyDensity = serde_json::from_str(&json).unwrap();
        assert_eq!(f, back);
    }
}
