//! Release gate: one test per shipped guarantee, each printing a single
//! pass/fail line through the test harness. Tolerances here are contract,
//! not implementation detail; do not loosen them to make a change land.

use std::time::Instant;

use dglab::degiorgi::recursion_lemma;
use dglab::degiorgi::CertifyOptions;
use dglab::energy::{
    check_gradient_growth, estimate_delta2, EnergyDensity, GradMode, GrowthEnvelope,
};
use dglab::expr::Expr;
use dglab::harness::{self, builtin, run_certify, run_solve, write_outputs};
use dglab::problem::Verdict;
use dglab::sampling::SamplingDomain;
use dglab::structure::{
    delta_exponent, gamma_exponent, sigma_exponent, ParameterPack, SigmaForm,
};
use dglab::Error;

fn e(src: &str) -> Expr {
    Expr::parse(src).unwrap()
}

fn pack(n: usize, p: f64, p_star: Option<f64>, s1: f64, s3: f64) -> ParameterPack {
    serde_json::from_value(serde_json::json!({
        "n": n, "p": p, "p_star": p_star, "s1": s1, "s3": s3
    }))
    .unwrap()
}

/// Doubling families the lemma is guaranteed for, at the stated exponents.
fn lemma_families() -> Vec<(String, EnergyDensity)> {
    let mut fams: Vec<(String, EnergyDensity)> = Vec::new();
    for p in [1.5, 2.0, 3.0] {
        fams.push((format!("power p={p}"), EnergyDensity::Power { coef: 1.0, p }));
    }
    fams.push((
        "double phase p=2 q=3".into(),
        EnergyDensity::DoublePhase { p: e("2"), q: e("3"), a: e("0.5*(1 + x1)") },
    ));
    fams.push((
        "variable exponent p in [1.5, 3]".into(),
        EnergyDensity::VariableExponent { p: e("1.5 + 1.5*x1") },
    ));
    fams.push((
        "anisotropic p=(2, 3)".into(),
        EnergyDensity::Anisotropic { coef: vec![e("1"), e("1")], p: vec![2.0, 3.0] },
    ));
    fams.push(("log-perturbed p=2".into(), EnergyDensity::LogPerturbed { p: 2.0 }));
    fams
}

#[test]
fn criterion_1_gradient_growth_lemma_suite() {
    let started = Instant::now();
    let dom = SamplingDomain::unit_box(2);
    assert_eq!(dom.n_samples, 100_000);
    for (label, family) in lemma_families() {
        let est = estimate_delta2(&family, &dom).unwrap();
        assert!(
            est.m_est > 1.0 && est.big_m_est >= est.m_est,
            "{label}: measured envelope [{}, {}] is not a doubling envelope",
            est.m_est,
            est.big_m_est
        );
        // Both pairing inequalities at the measured constants; the sampler
        // is seeded, so the same point stream backs estimate and check.
        let check =
            check_gradient_growth(&family, GradMode::Analytic, est.m_est, est.big_m_est, &dom, 1e-6)
                .unwrap();
        assert!(
            check.passed(),
            "{label}: m_est={} M_est={} lower margin {} upper margin {}",
            est.m_est,
            est.big_m_est,
            check.lower.worst_margin,
            check.upper.worst_margin
        );
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() <= 30.0, "lemma suite took {elapsed:?}, budget 30 s");
}

#[test]
fn criterion_2_model_case_identities() {
    let dom = SamplingDomain::unit_box(2);

    // Pure powers pair exactly: (D g, xi) = p g.
    for p in [1.5, 2.0, 3.0] {
        let g = EnergyDensity::Power { coef: 1.0, p };
        let mut sampler = dom.sampler();
        for _ in 0..10_000 {
            let s = sampler.next_sample();
            let f = g.eval(&s.x, s.u, &s.xi).unwrap();
            let grad = g.grad_xi_reg(&s.x, s.u, &s.xi, 0.0);
            let pair: f64 = grad.iter().zip(&s.xi).map(|(a, b)| a * b).sum();
            assert!(
                (pair - p * f).abs() <= 1e-12 * (1.0 + pair.abs() + (p * f).abs()),
                "p={p}: pairing {pair} vs {}",
                p * f
            );
        }
    }

    // Double phase doubles by at most 2^q.
    let dp = EnergyDensity::DoublePhase { p: e("2"), q: e("3"), a: e("0.5*(1 + x1)") };
    let est = estimate_delta2(&dp, &dom).unwrap();
    assert!(est.big_m_est <= 8.0 + 1e-9, "double phase M_est = {}", est.big_m_est);

    // The logarithmic factor itself never more than doubles.
    let mut sampler = dom.sampler();
    let mut worst = 0.0f64;
    for _ in 0..dom.n_samples {
        let s = sampler.next_sample();
        let t = s.xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        if t > 0.0 {
            worst = worst.max((1.0 + 2.0 * t).ln() / (1.0 + t).ln());
        }
    }
    assert!(worst <= 2.0 + 1e-6, "log factor ratio sup = {worst}");

    // Exponential growth escapes every declared envelope, with a witness.
    let exp = EnergyDensity::ExponentialControl { power: 1.0 };
    let est = estimate_delta2(&exp, &dom).unwrap();
    assert!(est.big_m_est > 1e6, "witnessed ratio {}", est.big_m_est);
    let envelope = GrowthEnvelope { m: 2.0, big_m: 1e6, c5: 1.0, c6: 1.0, p: 2.0 };
    assert!(!envelope.contains(&est));
    assert!(est.witness_high.is_some());
}

#[test]
fn criterion_3_exponent_formulas() {
    let mut pk = pack(3, 2.0, None, 3.0, 3.0);
    pk.theta = Some(3.0);
    pk.alpha = Some(0.5);
    pk.r = Some(2.0);
    pk.s = Some(3.0);
    assert!((gamma_exponent(&pk).unwrap() - 4.0 / 3.0).abs() <= 1e-12);
    assert!((sigma_exponent(&pk, SigmaForm::Epsilon).unwrap() - 3.0).abs() <= 1e-12);

    let pk = pack(4, 2.0, None, 4.0, 4.0);
    assert!((delta_exponent(&pk).unwrap() - 0.5).abs() <= 1e-12);
    assert!((sigma_exponent(&pk, SigmaForm::Exact).unwrap() - 2.0).abs() <= 1e-12);

    // Boundary packs: the defining denominators and differences hit zero.
    let mut pk = pack(3, 2.0, None, 3.0, 6.0 / 5.0);
    pk.theta = Some(0.0);
    pk.alpha = Some(0.0);
    pk.r = Some(1.0);
    pk.s = Some(1.0);
    assert!(matches!(gamma_exponent(&pk), Err(Error::Exponent(_))));
    assert!(matches!(delta_exponent(&pack(4, 2.0, None, 2.0, 4.0)), Err(Error::Exponent(_))));
    assert!(matches!(
        sigma_exponent(&pack(4, 2.0, None, 4.0, 4.0 / 3.0), SigmaForm::Exact),
        Err(Error::Exponent(_))
    ));
}

#[test]
fn criterion_4_recursion_threshold_equality() {
    // At the threshold start the decay bound is an equality, step by step.
    let check = recursion_lemma(0.5, 1.0, 2.0, 1.0, 50).unwrap();
    assert!(check.converges);
    assert!((check.threshold - 0.5).abs() <= 1e-12);
    assert_eq!(check.sequence.len(), 51);
    for (h, (z, bound)) in check.sequence.iter().zip(&check.bounds).enumerate() {
        assert!(
            (z - bound).abs() <= 1e-12 * (1.0 + bound.abs()),
            "h={h}: z={z} bound={bound}"
        );
    }

    let above = recursion_lemma(0.5 + 1e-6, 1.0, 2.0, 1.0, 50).unwrap();
    assert!(!above.converges);
}

#[test]
fn criterion_5_solver_order_and_maximum_principle() {
    let started = Instant::now();

    // Manufactured case: order between the 17^2 and 33^2 grids.
    let out = run_solve(&builtin("poisson_manufactured").unwrap()).unwrap();
    let rf = out.report.refinement.expect("refinement study");
    assert_eq!((rf.coarse_nx, rf.fine_nx), (17, 33));
    assert!(
        rf.order >= 1.8 && rf.order <= 2.2,
        "order {} (errors {} -> {})",
        rf.order,
        rf.err_coarse,
        rf.err_fine
    );

    // Same operator, zero source, harmonic boundary: linear SPD system
    // whose interior must sit below the boundary to solver accuracy.
    let mut spd = builtin("poisson_manufactured").unwrap();
    spd.problem.rhs = serde_json::from_value(serde_json::json!({"kind": "zero"})).unwrap();
    spd.problem.boundary = e("0.3*(x1 - x2)");
    spd.reference = None;
    spd.expect.order_window = None;
    spd.expect.max_principle_tol = Some(1e-10);
    let out = run_solve(&spd).unwrap();
    let mp = out.report.max_principle.expect("maximum principle summary");
    assert!(
        mp.interior_max <= mp.boundary_max + 1e-10,
        "interior {} boundary {}",
        mp.interior_max,
        mp.boundary_max
    );
    assert!(out.report.passed);

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() <= 60.0, "solver criterion took {elapsed:?}, budget 60 s");
}

#[test]
fn criterion_6_audit_bounded_and_monotone() {
    for name in ["double_phase_basic", "nonsymmetric_linear_plus_q"] {
        let s = builtin(name).unwrap();
        assert_eq!((s.grid.nx, s.grid.ny), (33, 33));
        let out = run_certify(&s, &CertifyOptions::default()).unwrap();
        let rows = out.report.audits.expect("audit sweep");
        assert_eq!(rows.len(), 10);
        let worst = rows.iter().fold(0.0f64, |m, r| m.max(r.required_c));
        assert!(worst.is_finite() && worst <= 1e3, "{name}: required_c {worst}");
        for w in rows.windows(2) {
            assert!(
                w[1].measure <= w[0].measure && w[1].j <= w[0].j,
                "{name}: level-set invariants must be monotone in k"
            );
        }
    }
}

#[test]
fn criterion_7_certificates_for_every_covered_scenario() {
    let mut certified = 0;
    for s in harness::builtin_scenarios() {
        if s.expected_classification == Verdict::Uncovered {
            continue;
        }
        let out = run_certify(&s, &CertifyOptions::default()).unwrap();
        let report = out.report;
        assert!(
            report.certificate_failure.is_none(),
            "{}: {:?}",
            s.name,
            report.certificate_failure
        );
        let cert = report.certificate.expect("certificate");
        assert!(cert.valid, "{}: certificate invalid", s.name);
        assert!(
            cert.observed_max <= cert.d + cert.cell_tolerance,
            "{}: observed {} exceeds d={} plus one-cell tolerance {}",
            s.name,
            cert.observed_max,
            cert.d,
            cert.cell_tolerance
        );
        // Recompute the one-step recursion bound at every recorded step
        // from the certified constants alone.
        for w in cert.trace.steps.windows(2) {
            let bound = cert.l * cert.zeta.powi(w[0].h as i32) * w[0].j.powf(1.0 + cert.delta);
            assert!(
                w[1].j <= bound * (1.0 + 1e-12) + 1e-300,
                "{}: step h={} J={} exceeds recursion bound {}",
                s.name,
                w[1].h,
                w[1].j,
                bound
            );
        }
        certified += 1;
    }
    assert_eq!(certified, 8, "every covered library scenario must certify");
}

#[test]
fn criterion_8_estimate_stability_under_boundary_scaling() {
    let s = builtin("double_phase_eps").unwrap();
    let out = run_certify(&s, &CertifyOptions::default()).unwrap();
    let est = out.report.estimate.expect("estimate fit");
    assert_eq!(est.instances.len(), 5);
    let spread = est.stability.expect("spread over positive ratios");
    assert!(spread <= 10.0, "ratio max/min = {spread}");
    assert!(est.stability_ok);
}

#[test]
fn criterion_9_byte_identical_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let mut emitted = Vec::new();
    for sub in ["one", "two"] {
        let s = builtin("double_phase_eps").unwrap();
        let out = run_certify(&s, &CertifyOptions::default()).unwrap();
        emitted.push(write_outputs(&out, &dir.path().join(sub), true).unwrap());
    }
    assert_eq!(emitted[0].len(), emitted[1].len());
    assert!(emitted[0].len() >= 4, "report, trace, solution, and log files");
    for (a, b) in emitted[0].iter().zip(&emitted[1]) {
        assert_eq!(a.file_name(), b.file_name());
        let (ba, bb) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
        assert_eq!(ba, bb, "{} differs between identical runs", a.display());
    }
}
