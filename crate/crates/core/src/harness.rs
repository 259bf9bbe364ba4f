//! Scenario library, pipeline runners, verdict evaluation, and the file
//! emission behind the command-line interface.
//!
//! A report is closed over itself: every pass/fail verdict it carries can
//! be recomputed from its own numeric fields by [`evaluate`], and the
//! `report` subcommand does exactly that against previously written files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::degiorgi::{
    caccioppoli_audit, find_threshold_d_with, superlevel, verify_estimate, Certificate,
    CertifyOptions, EstimateFit,
};
use crate::energy::{EnergyDensity, GrowthEnvelope};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::{DiscreteFunction, Grid};
use crate::problem::{classify, Classification, ProblemSpec, Verdict};
use crate::sampling::SamplingDomain;
use crate::solver::{self, SolveLogEntry, SolveMethod, SolveOptions};
use crate::structure::{DataFunctions, GrowthForm, ParameterPack, RightHandSide, VectorField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
}

/// Declared qualitative outcomes a run is judged against. Absent fields
/// simply skip the corresponding verdict.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Expectations {
    /// The emitted certificate should exist and be valid.
    pub certificate_valid: Option<bool>,
    /// Cap on required_c over the audit level sweep.
    pub audit_required_c_max: Option<f64>,
    /// Window for the observed refinement order (needs `reference`).
    pub order_window: Option<[f64; 2]>,
    /// Interior max may exceed the boundary max by at most this.
    pub max_principle_tol: Option<f64>,
    /// Boundary-datum scale family for the estimate fit.
    pub estimate_scalings: Option<Vec<f64>>,
    /// Cap on max/min of the estimate ratios (default 10).
    pub estimate_stability_factor: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub problem: ProblemSpec,
    pub grid: GridSpec,
    #[serde(default)]
    pub solve: SolveOptions,
    pub expected_classification: Verdict,
    #[serde(default)]
    pub expect: Expectations,
    /// Exact solution for manufactured cases; enables the refinement study.
    #[serde(default)]
    pub reference: Option<Expr>,
    /// Hypothesis-check scenario only: excluded from default solve and
    /// certify batches.
    #[serde(default)]
    pub check_only: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Check,
    Solve,
    Certify,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveSummary {
    pub method: SolveMethod,
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub iterations: usize,
    pub final_residual: f64,
    pub residual_tol: f64,
    pub energy: f64,
    pub boundary_sup: f64,
    pub interior_sup: f64,
    pub log: Vec<SolveLogEntry>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RefinementSummary {
    pub coarse_nx: usize,
    pub fine_nx: usize,
    pub err_coarse: f64,
    pub err_fine: f64,
    pub order: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MaxPrincipleSummary {
    pub interior_max: f64,
    pub boundary_max: f64,
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AuditRow {
    pub k: f64,
    pub measure: f64,
    pub j: f64,
    pub required_c: f64,
    pub rhs_terms: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictLine {
    pub name: String,
    pub passed: bool,
}

impl VerdictLine {
    fn new(name: &str, passed: bool) -> VerdictLine {
        VerdictLine { name: name.into(), passed }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub mode: RunMode,
    pub expected_classification: Verdict,
    pub expect: Expectations,
    pub classification: Option<Classification>,
    pub solve: Option<SolveSummary>,
    pub refinement: Option<RefinementSummary>,
    pub max_principle: Option<MaxPrincipleSummary>,
    pub audits: Option<Vec<AuditRow>>,
    pub certificate: Option<Certificate>,
    /// Reason certification produced no certificate (threshold or soundness
    /// failure); recorded instead of aborting so the report stays whole.
    pub certificate_failure: Option<String>,
    pub estimate: Option<EstimateFit>,
    pub verdicts: Vec<VerdictLine>,
    pub passed: bool,
}

/// A finished run: the report plus the payloads that are emitted as files
/// but deliberately kept out of the report body.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub solution: Option<DiscreteFunction>,
}

pub fn verdict_token(v: Verdict) -> &'static str {
    match v {
        Verdict::Theorem1 => "theorem1",
        Verdict::Theorem2 => "theorem2",
        Verdict::Uncovered => "uncovered",
    }
}

/// Recompute every verdict from the report's own numeric fields.
pub fn evaluate(r: &RunReport) -> Vec<VerdictLine> {
    let mut v = Vec::new();
    if let Some(cls) = &r.classification {
        v.push(VerdictLine::new(
            "classification",
            cls.verdict == r.expected_classification,
        ));
    }
    if let Some(sv) = &r.solve {
        v.push(VerdictLine::new("converged", sv.final_residual <= sv.residual_tol));
    }
    if let Some(rf) = &r.refinement {
        let w = r.expect.order_window.unwrap_or([1.8, 2.2]);
        v.push(VerdictLine::new("refinement_order", rf.order >= w[0] && rf.order <= w[1]));
    }
    if let Some(mp) = &r.max_principle {
        v.push(VerdictLine::new(
            "max_principle",
            mp.interior_max <= mp.boundary_max + mp.tol,
        ));
    }
    if let Some(rows) = &r.audits {
        if let Some(bound) = r.expect.audit_required_c_max {
            let worst = rows.iter().fold(0.0f64, |m, a| m.max(a.required_c));
            v.push(VerdictLine::new(
                "audit_bounded",
                worst.is_finite() && worst <= bound,
            ));
        }
        // Levels rise along the sweep, so measures and gradient masses must
        // fall; exact comparisons, no tolerance.
        let mono = rows
            .windows(2)
            .all(|w| w[1].measure <= w[0].measure && w[1].j <= w[0].j);
        v.push(VerdictLine::new("audit_monotone", mono));
    }
    if let Some(c) = &r.certificate {
        let sound = c.observed_max <= c.d + c.cell_tolerance;
        v.push(VerdictLine::new("certificate", c.valid && c.threshold_ok && sound));
        let steps_ok = c.trace.steps.iter().all(|st| match st.step_bound {
            Some(b) => st.j <= b * (1.0 + 1e-12) + 1e-300,
            None => true,
        });
        v.push(VerdictLine::new("per_step_recursion", steps_ok));
    } else if r.mode == RunMode::Certify {
        v.push(VerdictLine::new("certificate", false));
    }
    if let Some(est) = &r.estimate {
        let cap = r.expect.estimate_stability_factor.unwrap_or(10.0);
        let stable = est.stability.map_or(true, |s| s <= cap);
        v.push(VerdictLine::new("estimate_stability", stable));
    }
    v
}

fn finish(mut report: RunReport) -> RunReport {
    report.verdicts = evaluate(&report);
    report.passed = report.verdicts.iter().all(|l| l.passed);
    report
}

fn blank_report(s: &Scenario, mode: RunMode) -> RunReport {
    RunReport {
        scenario: s.name.clone(),
        mode,
        expected_classification: s.expected_classification,
        expect: s.expect.clone(),
        classification: None,
        solve: None,
        refinement: None,
        max_principle: None,
        audits: None,
        certificate: None,
        certificate_failure: None,
        estimate: None,
        verdicts: Vec::new(),
        passed: false,
    }
}

fn scenario_grid(s: &Scenario) -> Result<Grid> {
    let bx = &s.problem.domain.x_box;
    if bx.len() != 2 {
        return Err(Error::input(format!(
            "scenario '{}' needs a two-dimensional domain box, got {}",
            s.name,
            bx.len()
        )));
    }
    Grid::new([bx[0], bx[1]], s.grid.nx, s.grid.ny)
}

fn split_sup(u: &DiscreteFunction) -> (f64, f64) {
    let g = &u.grid;
    let (mut bnd, mut int) = (0.0f64, 0.0f64);
    for j in 0..g.ny {
        for i in 0..g.nx {
            let a = u.value(i, j).abs();
            if g.is_boundary(i, j) {
                bnd = bnd.max(a);
            } else {
                int = int.max(a);
            }
        }
    }
    (bnd, int)
}

fn max_node_err(u: &DiscreteFunction, reference: &Expr) -> f64 {
    let g = &u.grid;
    let mut worst = 0.0f64;
    for j in 0..g.ny {
        for i in 0..g.nx {
            worst = worst.max((u.value(i, j) - reference.eval(&g.node_xy(i, j), 0.0)).abs());
        }
    }
    worst
}

fn solve_on(s: &Scenario, g: Grid) -> Result<(SolveSummary, DiscreteFunction)> {
    let start = DiscreteFunction::interpolate(g, &s.problem.boundary);
    let rec = solver::solve(&s.problem, &start, &s.solve)?;
    let (boundary_sup, interior_sup) = split_sup(&rec.u);
    let summary = SolveSummary {
        method: s.solve.method,
        nx: g.nx,
        ny: g.ny,
        hx: g.hx,
        hy: g.hy,
        iterations: rec.log.len(),
        final_residual: rec.final_residual,
        residual_tol: s.solve.residual_tol,
        energy: rec.energy,
        boundary_sup,
        interior_sup,
        log: rec.log,
    };
    Ok((summary, rec.u))
}

/// Hypothesis audit only: classify the problem and compare against the
/// scenario's expectation.
pub fn run_checks(s: &Scenario) -> Result<RunOutcome> {
    let cls = classify(&s.problem)?;
    let mut report = blank_report(s, RunMode::Check);
    report.classification = Some(cls);
    Ok(RunOutcome { report: finish(report), solution: None })
}

/// Solve on the scenario grid; with a reference solution also solve one
/// refinement deeper and report the observed order.
pub fn run_solve(s: &Scenario) -> Result<RunOutcome> {
    let g = scenario_grid(s)?;
    let (summary, u) = solve_on(s, g)?;
    let mut report = blank_report(s, RunMode::Solve);
    if let Some(reference) = &s.reference {
        let gf = Grid::new(
            [s.problem.domain.x_box[0], s.problem.domain.x_box[1]],
            2 * g.nx - 1,
            2 * g.ny - 1,
        )?;
        let (_, uf) = solve_on(s, gf)?;
        let err_coarse = max_node_err(&u, reference);
        let err_fine = max_node_err(&uf, reference);
        report.refinement = Some(RefinementSummary {
            coarse_nx: g.nx,
            fine_nx: gf.nx,
            err_coarse,
            err_fine,
            order: (err_coarse / err_fine).log2(),
        });
    }
    if let Some(tol) = s.expect.max_principle_tol {
        report.max_principle = Some(MaxPrincipleSummary {
            interior_max: summary.interior_sup,
            boundary_max: summary.boundary_sup,
            tol,
        });
    }
    report.solve = Some(summary);
    Ok(RunOutcome { report: finish(report), solution: Some(u) })
}

fn audit_sweep(s: &Scenario, u: &DiscreteFunction) -> Result<Vec<AuditRow>> {
    let floor = s.problem.u0_sup().max(1.0);
    let hi = u.max_abs().max(2.0 * floor);
    let mut rows = Vec::with_capacity(10);
    for i in 0..10 {
        let k = floor + (i as f64 + 1.0) / 11.0 * (hi - floor);
        let audit = caccioppoli_audit(&s.problem, u, k)?;
        let measure = superlevel(u, k)?.measure;
        rows.push(AuditRow {
            k,
            measure,
            j: audit.lhs,
            required_c: audit.required_c,
            rhs_terms: audit.rhs_terms,
        });
    }
    Ok(rows)
}

/// Full pipeline: hypothesis checks, solve, audit sweep, certificate, and
/// (for the sharper classification with a declared scale family) the
/// estimate fit.
pub fn run_certify(s: &Scenario, copts: &CertifyOptions) -> Result<RunOutcome> {
    let cls = classify(&s.problem)?;
    if cls.verdict == Verdict::Uncovered {
        return Err(Error::input(format!(
            "scenario '{}' classifies as uncovered, certification refused: {}",
            s.name,
            cls.reasons.join("; ")
        )));
    }
    let g = scenario_grid(s)?;
    let (summary, u) = solve_on(s, g)?;
    let mut report = blank_report(s, RunMode::Certify);
    report.audits = Some(audit_sweep(s, &u)?);
    match find_threshold_d_with(&s.problem, &u, copts) {
        Ok(cert) => report.certificate = Some(cert),
        Err(err) => match err {
            Error::NoThreshold(_) | Error::InvalidCertificate(_) => {
                report.certificate_failure = Some(err.to_string());
            }
            other => return Err(other),
        },
    }
    if let Some(scalings) = &s.expect.estimate_scalings {
        if cls.verdict == Verdict::Theorem2 {
            let cap = s.expect.estimate_stability_factor.unwrap_or(10.0);
            report.estimate = Some(verify_estimate(&s.problem, g, &s.solve, scalings, cap)?);
        }
    }
    report.classification = Some(cls);
    report.solve = Some(summary);
    Ok(RunOutcome { report: finish(report), solution: Some(u) })
}

// ---------------------------------------------------------------------------
// Configuration loading and the scenario library.

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Config {
    pub scenarios: Vec<Scenario>,
}

fn legal_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

/// Structural validation: legal unique names and well-formed problems.
pub fn validate_scenarios(list: &[Scenario]) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for s in list {
        if !legal_name(&s.name) {
            return Err(Error::Config(format!(
                "scenario name '{}' must be nonempty [a-zA-Z0-9_-]",
                s.name
            )));
        }
        if !seen.insert(s.name.clone()) {
            return Err(Error::Config(format!("duplicate scenario name '{}'", s.name)));
        }
        s.problem.validate()?;
        s.solve.validate()?;
    }
    Ok(())
}

pub fn load_config(path: &Path) -> Result<Vec<Scenario>> {
    let text = fs::read_to_string(path)?;
    let config: Config = serde_json::from_str(&text)?;
    validate_scenarios(&config.scenarios)?;
    Ok(config.scenarios)
}

pub fn select<'a>(scenarios: &'a [Scenario], names: &[String]) -> Result<Vec<&'a Scenario>> {
    if names.is_empty() {
        return Ok(scenarios.iter().collect());
    }
    names
        .iter()
        .map(|n| {
            scenarios.iter().find(|s| &s.name == n).ok_or_else(|| {
                Error::Config(format!(
                    "unknown scenario '{n}'; known: {}",
                    scenarios.iter().map(|s| s.name.as_str()).collect::<Vec<_>>().join(", ")
                ))
            })
        })
        .collect()
}

fn e(src: &str) -> Expr {
    Expr::parse(src).expect("library expression parses")
}

fn base_pack() -> ParameterPack {
    ParameterPack {
        n: 2,
        p: 2.0,
        p_star: Some(4.0),
        s1: 4.0,
        s3: 4.0,
        theta: None,
        alpha: None,
        r: None,
        s: None,
        c1: 1.0,
        c2: 0.0,
        c3: 1.0,
        c4: 0.0,
        c5: 1.0,
        c6: 1.0,
        c7: 1.0,
        c8: 1.0,
        c9: 1.0,
        norm_b1: None,
        norm_b2: None,
        norm_b3: None,
        norm_b4: None,
    }
}

fn eps_pack() -> ParameterPack {
    ParameterPack {
        theta: Some(2.0),
        alpha: Some(0.0),
        r: Some(1.0),
        s: Some(2.0),
        ..base_pack()
    }
}

fn envelope_2_3(c5: f64) -> GrowthEnvelope {
    GrowthEnvelope { m: 4.0, big_m: 8.0, c5, c6: 1.0, p: 2.0 }
}

fn dp_energy() -> EnergyDensity {
    EnergyDensity::DoublePhase { p: e("2"), q: e("3"), a: e("0.5*(1 + x1)") }
}

fn problem(
    name: &str,
    energy: EnergyDensity,
    envelope: GrowthEnvelope,
    vector_field: VectorField,
    rhs: RightHandSide,
    data: DataFunctions,
    parameters: ParameterPack,
    boundary: Expr,
) -> ProblemSpec {
    ProblemSpec {
        name: name.into(),
        energy,
        envelope,
        vector_field,
        rhs,
        rhs_form: GrowthForm::Unilateral,
        data,
        parameters,
        domain: SamplingDomain::unit_box(2),
        boundary,
    }
}

fn double_phase_basic() -> Scenario {
    let mut pack = base_pack();
    pack.c8 = 540.0;
    let data = DataFunctions {
        b3: e("360 + 180*x1"),
        b4: e("540"),
        ..DataFunctions::default()
    };
    Scenario {
        name: "double_phase_basic".into(),
        problem: problem(
            "double_phase_basic",
            dp_energy(),
            envelope_2_3(1.0),
            VectorField::GradientOfF,
            RightHandSide::XOnly { expr: e("-(360 + 180*x1)") },
            data,
            pack,
            Expr::zero(),
        ),
        grid: GridSpec { nx: 33, ny: 33 },
        solve: SolveOptions::default(),
        expected_classification: Verdict::Theorem1,
        expect: Expectations {
            certificate_valid: Some(true),
            audit_required_c_max: Some(1e3),
            ..Expectations::default()
        },
        reference: None,
        check_only: false,
    }
}

fn double_phase_eps() -> Scenario {
    Scenario {
        name: "double_phase_eps".into(),
        problem: problem(
            "double_phase_eps",
            dp_energy(),
            envelope_2_3(1.0),
            VectorField::GradientOfF,
            RightHandSide::Zero,
            DataFunctions::default(),
            eps_pack(),
            e("0.75*(x1 - x2)"),
        ),
        grid: GridSpec { nx: 17, ny: 17 },
        solve: SolveOptions::default(),
        expected_classification: Verdict::Theorem2,
        expect: Expectations {
            certificate_valid: Some(true),
            audit_required_c_max: Some(1e3),
            estimate_scalings: Some(vec![0.5, 1.0, 2.0, 4.0, 8.0]),
            estimate_stability_factor: Some(10.0),
            ..Expectations::default()
        },
        reference: None,
        check_only: false,
    }
}

fn exp_control() -> Scenario {
    Scenario {
        name: "exp_control".into(),
        problem: problem(
            "exp_control",
            EnergyDensity::ExponentialControl { power: 1.0 },
            GrowthEnvelope { m: 2.0, big_m: 1e6, c5: 1.0, c6: 1.0, p: 2.0 },
            VectorField::GradientOfF,
            RightHandSide::Zero,
            DataFunctions::default(),
            base_pack(),
            Expr::zero(),
        ),
        grid: GridSpec { nx: 9, ny: 9 },
        solve: SolveOptions::default(),
        expected_classification: Verdict::Uncovered,
        expect: Expectations::default(),
        reference: None,
        check_only: true,
    }
}

fn poisson_manufactured() -> Scenario {
    let pi = std::f64::consts::PI;
    let mut pack = eps_pack();
    pack.c5 = 0.5;
    pack.c8 = 20.0;
    let data = DataFunctions { b3: e("20.0"), b4: e("20.0"), ..DataFunctions::default() };
    Scenario {
        name: "poisson_manufactured".into(),
        problem: problem(
            "poisson_manufactured",
            EnergyDensity::Power { coef: 0.5, p: 2.0 },
            GrowthEnvelope { m: 4.0, big_m: 4.0, c5: 0.5, c6: 1.0, p: 2.0 },
            VectorField::GradientOfF,
            RightHandSide::XOnly {
                expr: e(&format!("-(2.0*{pi:?}*{pi:?})*sin({pi:?}*x1)*sin({pi:?}*x2)")),
            },
            data,
            pack,
            Expr::zero(),
        ),
        grid: GridSpec { nx: 17, ny: 17 },
        solve: SolveOptions::default(),
        expected_classification: Verdict::Theorem2,
        expect: Expectations {
            order_window: Some([1.8, 2.2]),
            ..Expectations::default()
        },
        reference: Some(e(&format!("sin({pi:?}*x1)*sin({pi:?}*x2)"))),
        check_only: false,
    }
}

fn nonsymmetric_linear_plus_q() -> Scenario {
    let mut pack = base_pack();
    pack.c1 = 0.45;
    // f = |xi|^2 + 0.2 |xi_1|^3 matches the flux: the quadratic part
    // brackets the matrix (symmetric-part eigenvalues in [0.988, 1.212])
    // and the cubic part is exactly the q-term's potential.
    let energy = EnergyDensity::TwoEnergySum {
        alpha: e("1"),
        f: Box::new(EnergyDensity::Power { coef: 1.0, p: 2.0 }),
        beta: e("0.2"),
        g: Box::new(EnergyDensity::Anisotropic { coef: vec![e("1"), e("0")], p: vec![3.0, 3.0] }),
    };
    let field = VectorField::LinearPlusPower {
        matrix: vec![vec![e("1.2"), e("0.3")], vec![e("-0.2"), e("1.0")]],
        weight: e("0.6"),
        q: 3.0,
    };
    Scenario {
        name: "nonsymmetric_linear_plus_q".into(),
        problem: problem(
            "nonsymmetric_linear_plus_q",
            energy,
            envelope_2_3(1.0),
            field,
            RightHandSide::Zero,
            DataFunctions::default(),
            pack,
            e("0.9*sin(4.0*x1)*x2"),
        ),
        grid: GridSpec { nx: 33, ny: 33 },
        solve: SolveOptions::default(),
        expected_classification: Verdict::Theorem1,
        expect: Expectations {
            certificate_valid: Some(true),
            audit_required_c_max: Some(1e3),
            max_principle_tol: Some(1e-3),
            ..Expectations::default()
        },
        reference: None,
        check_only: false,
    }
}

fn generalized_double_phase() -> Scenario {
    let mut pack = base_pack();
    // The exponent rises to 2.3, so near the sampling floor |xi| = 1e-4 the
    // density undershoots |xi|^2 by up to 1e-4^0.3 ~ 0.063.
    pack.c5 = 0.05;
    Scenario {
        name: "generalized_double_phase".into(),
        problem: problem(
            "generalized_double_phase",
            EnergyDensity::DoublePhase {
                p: e("2 + 0.3*x1"),
                q: e("3 - 0.2*x2"),
                a: e("0.5*(1 + x1)"),
            },
            envelope_2_3(0.05),
            VectorField::GradientOfF,
            RightHandSide::Zero,
            DataFunctions::default(),
            pack,
            Expr::zero(),
        ),
        grid: GridSpec { nx: 9, ny: 9 },
        solve: SolveOptions::default(),
        expected_classification: Verdict::Theorem1,
        expect: Expectations::default(),
        reference: None,
        check_only: true,
    }
}

fn variable_exponent_basic() -> Scenario {
    let mut pack = base_pack();
    pack.c5 = 0.02;
    Scenario {
        name: "variable_exponent_basic".into(),
        problem: problem(
            "variable_exponent_basic",
            EnergyDensity::VariableExponent { p: e("2 + 0.4*x1") },
            envelope_2_3(0.02),
            VectorField::GradientOfF,
            RightHandSide::Zero,
            DataFunctions::default(),
            pack,
            Expr::zero(),
        ),
        grid: GridSpec { nx: 9, ny: 9 },
        solve: SolveOptions::default(),
        expected_classification: Verdict::Theorem1,
        expect: Expectations::default(),
        reference: None,
        check_only: true,
    }
}

fn log_perturbed_basic() -> Scenario {
    let mut pack = base_pack();
    // f / |xi|^2 = log(1 + |xi|), about 1e-4 at the sampling floor.
    pack.c5 = 5e-5;
    Scenario {
        name: "log_perturbed_basic".into(),
        problem: problem(
            "log_perturbed_basic",
            EnergyDensity::LogPerturbed { p: 2.0 },
            envelope_2_3(5e-5),
            VectorField::GradientOfF,
            RightHandSide::Zero,
            DataFunctions::default(),
            pack,
            Expr::zero(),
        ),
        grid: GridSpec { nx: 9, ny: 9 },
        solve: SolveOptions::default(),
        expected_classification: Verdict::Theorem1,
        expect: Expectations::default(),
        reference: None,
        check_only: true,
    }
}

fn anisotropic_mixed() -> Scenario {
    let mut pack = base_pack();
    // Along the xi_2 axis f / |xi|^2 = |xi_2|, about 1e-4 at the floor.
    pack.c5 = 1e-5;
    Scenario {
        name: "anisotropic_mixed".into(),
        problem: problem(
            "anisotropic_mixed",
            EnergyDensity::Anisotropic {
                coef: vec![e("1 + 0.5*x1"), e("1")],
                p: vec![2.0, 3.0],
            },
            envelope_2_3(1e-5),
            VectorField::GradientOfF,
            RightHandSide::Zero,
            DataFunctions::default(),
            pack,
            Expr::zero(),
        ),
        grid: GridSpec { nx: 9, ny: 9 },
        solve: SolveOptions::default(),
        expected_classification: Verdict::Theorem1,
        expect: Expectations::default(),
        reference: None,
        check_only: true,
    }
}

pub fn builtin_scenarios() -> Vec<Scenario> {
    vec![
        double_phase_basic(),
        double_phase_eps(),
        exp_control(),
        poisson_manufactured(),
        nonsymmetric_linear_plus_q(),
        generalized_double_phase(),
        variable_exponent_basic(),
        log_perturbed_basic(),
        anisotropic_mixed(),
    ]
}

pub fn builtin(name: &str) -> Result<Scenario> {
    builtin_scenarios()
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| Error::Config(format!("no built-in scenario named '{name}'")))
}

// ---------------------------------------------------------------------------
// Emission.

fn fmt_f(v: f64) -> String {
    format!("{v:?}")
}

pub fn report_json(report: &RunReport) -> Result<String> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    Ok(text)
}

pub fn trace_csv(cert: &Certificate) -> String {
    let mut out = String::from("h,k_h,measure,J_h,bound\n");
    for st in &cert.trace.steps {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            st.h,
            fmt_f(st.k),
            fmt_f(st.measure),
            fmt_f(st.j),
            fmt_f(st.bound)
        ));
    }
    out
}

pub fn solution_csv(u: &DiscreteFunction) -> String {
    let g = &u.grid;
    let mut out = String::from("x,y,u\n");
    for j in 0..g.ny {
        for i in 0..g.nx {
            let xy = g.node_xy(i, j);
            out.push_str(&format!("{},{},{}\n", fmt_f(xy[0]), fmt_f(xy[1]), fmt_f(u.value(i, j))));
        }
    }
    out
}

pub fn solution_raw(u: &DiscreteFunction) -> String {
    let g = &u.grid;
    let mut out = format!("{},{},{},{}\n", g.nx, g.ny, fmt_f(g.hx), fmt_f(g.hy));
    for v in &u.values {
        out.push_str(&fmt_f(*v));
        out.push('\n');
    }
    out
}

pub fn solve_log_csv(log: &[SolveLogEntry]) -> String {
    let mut out = String::from("iteration,residual,damping\n");
    for l in log {
        out.push_str(&format!("{},{},{}\n", l.iteration, fmt_f(l.residual), fmt_f(l.damping)));
    }
    out
}

/// Write the report (always) and, when `csv` is set, the trace, solution,
/// and solve-log files. Returns the paths written.
pub fn write_outputs(outcome: &RunOutcome, out_dir: &Path, csv: bool) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let name = &outcome.report.scenario;
    let mut written = Vec::new();
    let mut put = |file: PathBuf, text: String| -> Result<()> {
        fs::write(&file, text)?;
        written.push(file);
        Ok(())
    };
    put(out_dir.join(format!("report_{name}.json")), report_json(&outcome.report)?)?;
    if csv {
        if let Some(cert) = &outcome.report.certificate {
            put(out_dir.join(format!("trace_{name}.csv")), trace_csv(cert))?;
        }
        if let Some(u) = &outcome.solution {
            put(out_dir.join(format!("solution_{name}.csv")), solution_csv(u))?;
            put(out_dir.join(format!("solution_{name}.raw")), solution_raw(u))?;
        }
        if let Some(sv) = &outcome.report.solve {
            put(out_dir.join(format!("solve_log_{name}.csv")), solve_log_csv(&sv.log))?;
        }
    }
    Ok(written)
}

/// Re-read a written report and recompute its verdicts from the stored
/// numbers; the boolean says whether they agree with what was stored.
pub fn reevaluate_report(path: &Path) -> Result<(RunReport, bool)> {
    let text = fs::read_to_string(path)?;
    let report: RunReport = serde_json::from_str(&text)?;
    let fresh = evaluate(&report);
    let consistent =
        fresh == report.verdicts && report.passed == fresh.iter().all(|l| l.passed);
    Ok((report, consistent))
}

/// Process exit code for an error, per the interface contract: 2 for input
/// problems, 3 for numerical ones.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Expr(_)
        | Error::Input(_)
        | Error::Config(_)
        | Error::Exponent(_)
        | Error::Io(_)
        | Error::Json(_) => 2,
        Error::NonFinite { .. }
        | Error::AllDegenerate { .. }
        | Error::Numerical(_)
        | Error::NonConvergence(_)
        | Error::NoThreshold(_)
        | Error::InvalidCertificate(_) => 3,
    }
}
