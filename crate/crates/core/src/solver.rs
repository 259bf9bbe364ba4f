//! Discretization and solution of the Dirichlet problem on 2-D grids.
//!
//! The weak form is discretized literally: the residual at an interior node
//! is the midpoint-rule pairing of (a, D phi) + b phi against that node's
//! hat function, so a zero residual vector IS the discrete weak-solution
//! property, term for term. Hat functions have cell value 1/4 and cell
//! gradient (+-1/(2hx), +-1/(2hy)) under the edge-averaged gradient, which
//! makes every pairing below a short explicit sum.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::energy::EnergyDensity;
use crate::error::{Error, Result};
use crate::grid::{DiscreteFunction, Grid};
use crate::problem::ProblemSpec;

/// Regularization floor for singular power kernels inside the solver; the
/// analysis-side checks always run unregularized.
pub const DELTA_REG: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Newton,
    Picard,
    EnergyDescent,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolveOptions {
    pub method: SolveMethod,
    pub max_iters: usize,
    /// Bound on the max-norm of the weak residual vector.
    pub residual_tol: f64,
    /// Smallest damping factor tried before declaring stagnation.
    pub min_damping: f64,
    /// Relative step for finite-difference Jacobians.
    pub fd_step: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            method: SolveMethod::Newton,
            max_iters: 60,
            residual_tol: 1e-10,
            min_damping: 1e-6,
            fd_step: 1e-6,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.residual_tol > 0.0) {
            return Err(Error::input("residual_tol must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::input("max_iters must be at least 1"));
        }
        if !(self.fd_step > 0.0 && self.min_damping > 0.0) {
            return Err(Error::input("fd_step and min_damping must be positive"));
        }
        Ok(())
    }
}

/// One line of the solve log.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolveLogEntry {
    pub iteration: usize,
    pub residual: f64,
    pub damping: f64,
}

/// Converged solution with its iteration history.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveRecord {
    pub u: DiscreteFunction,
    pub log: Vec<SolveLogEntry>,
    pub final_residual: f64,
    /// Discrete energy F(u) of the returned iterate; the stand-in for
    /// membership of u in the energy class.
    pub energy: f64,
}

/// Midpoint-rule energy F(u) = sum_cells f(x_c, u_c, Du_c) area.
pub fn discrete_energy(f: &EnergyDensity, u: &DiscreteFunction) -> Result<f64> {
    u.validate()?;
    let g = &u.grid;
    let area = g.cell_area();
    let mut acc = 0.0;
    for cj in 0..g.ncy() {
        for ci in 0..g.ncx() {
            let x = g.cell_center(ci, cj);
            let v = f.eval(&x, u.cell_avg(ci, cj), &u.cell_grad(ci, cj))?;
            acc += v * area;
        }
    }
    Ok(acc)
}

/// Hat-function cell gradient component for a corner offset in {0, 1}.
#[inline]
fn hat_grad(offset: usize, h: f64) -> f64 {
    (2.0 * offset as f64 - 1.0) / (2.0 * h)
}

/// Assemble the nodal residual vector (zeros at boundary nodes) with the
/// given kernel regularization.
fn assemble_residual(problem: &ProblemSpec, u: &DiscreteFunction, reg: f64) -> Result<Vec<f64>> {
    let g = &u.grid;
    let area = g.cell_area();
    let mut r = vec![0.0; g.n_nodes()];
    for cj in 0..g.ncy() {
        for ci in 0..g.ncx() {
            let x = g.cell_center(ci, cj);
            let uc = u.cell_avg(ci, cj);
            let du = u.cell_grad(ci, cj);
            let a = problem.vector_field.eval_reg(&problem.energy, &x, uc, &du, reg);
            let b = problem.rhs.eval(&problem.energy, &x, uc, &du);
            if !(a.iter().all(|v| v.is_finite()) && b.is_finite()) {
                return Err(Error::NonFinite {
                    what: format!("residual integrand at cell ({ci},{cj})"),
                    x: x.to_vec(),
                    u: uc,
                    xi: du.to_vec(),
                });
            }
            for dj in 0..2usize {
                for di in 0..2usize {
                    let (i, j) = (ci + di, cj + dj);
                    if g.is_boundary(i, j) {
                        continue;
                    }
                    let pairing =
                        a[0] * hat_grad(di, g.hx) + a[1] * hat_grad(dj, g.hy) + 0.25 * b;
                    r[g.node_index(i, j)] += pairing * area;
                }
            }
        }
    }
    Ok(r)
}

/// Weak residual of u against every interior hat function, unregularized.
/// Errors if u does not carry the problem's boundary datum.
pub fn weak_residual(problem: &ProblemSpec, u: &DiscreteFunction) -> Result<Vec<f64>> {
    u.validate()?;
    let g = &u.grid;
    for j in 0..g.ny {
        for i in 0..g.nx {
            if !g.is_boundary(i, j) {
                continue;
            }
            let datum = problem.u0(&g.node_xy(i, j));
            let got = u.value(i, j);
            if (got - datum).abs() > 1e-12 * (1.0 + datum.abs()) {
                return Err(Error::input(format!(
                    "boundary node ({i},{j}) carries {got}, datum is {datum}"
                )));
            }
        }
    }
    assemble_residual(problem, u, 0.0)
}

fn max_norm(r: &[f64]) -> f64 {
    r.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Solve the Dirichlet problem starting from (and keeping the boundary
/// values of) u0.
pub fn solve(problem: &ProblemSpec, u0: &DiscreteFunction, opts: &SolveOptions) -> Result<SolveRecord> {
    problem.validate()?;
    opts.validate()?;
    u0.validate()?;
    if problem.parameters.n != 2 {
        return Err(Error::input("the grid solver is two-dimensional; n must be 2"));
    }
    match opts.method {
        SolveMethod::Newton => solve_newton(problem, u0, opts),
        SolveMethod::Picard => solve_picard(problem, u0, opts),
        SolveMethod::EnergyDescent => solve_descent(problem, u0, opts),
    }
}

/// Interior node list and the dense index of each node (usize::MAX at
/// boundary).
fn interior_map(g: &Grid) -> (Vec<(usize, usize)>, Vec<usize>) {
    let mut nodes = Vec::with_capacity(g.n_interior());
    let mut dense = vec![usize::MAX; g.n_nodes()];
    for j in 1..g.ny - 1 {
        for i in 1..g.nx - 1 {
            dense[g.node_index(i, j)] = nodes.len();
            nodes.push((i, j));
        }
    }
    (nodes, dense)
}

fn solve_newton(
    problem: &ProblemSpec,
    u0: &DiscreteFunction,
    opts: &SolveOptions,
) -> Result<SolveRecord> {
    let g = u0.grid;
    let (nodes, dense) = interior_map(&g);
    let nint = nodes.len();
    let mut u = u0.clone();
    let mut log = Vec::new();

    let mut r_full = assemble_residual(problem, &u, DELTA_REG)?;
    let mut res = max_norm(&r_full);
    log.push(SolveLogEntry { iteration: 0, residual: res, damping: 1.0 });

    for iter in 1..=opts.max_iters {
        if res <= opts.residual_tol {
            break;
        }
        // Finite-difference Jacobian, assembled 9 columns-colors at a time:
        // residual row (i,j) only senses nodes within one step in each
        // direction, so nodes congruent mod 3 in both indices can be
        // perturbed simultaneously without overlap.
        let mut jac = DMatrix::<f64>::zeros(nint, nint);
        for color in 0..9 {
            let mut pert = u.clone();
            let mut steps = vec![0.0; nint];
            for (col, &(i, j)) in nodes.iter().enumerate() {
                if (i % 3) + 3 * (j % 3) == color {
                    let idx = g.node_index(i, j);
                    let h = opts.fd_step * (1.0 + pert.values[idx].abs());
                    pert.values[idx] += h;
                    steps[col] = h;
                }
            }
            let r_pert = assemble_residual(problem, &pert, DELTA_REG)?;
            for (col, &(i, j)) in nodes.iter().enumerate() {
                if steps[col] == 0.0 {
                    continue;
                }
                for dj in -1i64..=1 {
                    for di in -1i64..=1 {
                        let (ri, rj) = (i as i64 + di, j as i64 + dj);
                        if ri < 1 || rj < 1 || ri >= g.nx as i64 - 1 || rj >= g.ny as i64 - 1 {
                            continue;
                        }
                        let row = dense[g.node_index(ri as usize, rj as usize)];
                        let node = g.node_index(ri as usize, rj as usize);
                        jac[(row, col)] = (r_pert[node] - r_full[node]) / steps[col];
                    }
                }
            }
        }

        let rhs = DVector::from_iterator(
            nint,
            nodes.iter().map(|&(i, j)| -r_full[g.node_index(i, j)]),
        );
        let lu = jac.lu();
        let step = lu.solve(&rhs).ok_or_else(|| {
            Error::Numerical(format!(
                "singular Jacobian at iteration {iter}; damping history: {:?}",
                log.iter().map(|e| e.damping).collect::<Vec<_>>()
            ))
        })?;

        // Damped line search on the residual max-norm.
        let mut lambda = 1.0;
        let mut accepted = false;
        while lambda >= opts.min_damping {
            let mut trial = u.clone();
            for (col, &(i, j)) in nodes.iter().enumerate() {
                trial.values[g.node_index(i, j)] += lambda * step[col];
            }
            let r_trial = assemble_residual(problem, &trial, DELTA_REG)?;
            let res_trial = max_norm(&r_trial);
            if res_trial <= (1.0 - 1e-4 * lambda) * res {
                u = trial;
                r_full = r_trial;
                res = res_trial;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::NonConvergence(format!(
                "line search stalled at iteration {iter} with residual {res:.3e}"
            )));
        }
        log.push(SolveLogEntry { iteration: iter, residual: res, damping: lambda });
    }

    finish(problem, u, log, res, opts)
}

fn solve_picard(
    problem: &ProblemSpec,
    u0: &DiscreteFunction,
    opts: &SolveOptions,
) -> Result<SolveRecord> {
    let g = u0.grid;
    let (nodes, dense) = interior_map(&g);
    let nint = nodes.len();
    let area = g.cell_area();
    let mut u = u0.clone();
    let mut log = Vec::new();

    let mut res = max_norm(&assemble_residual(problem, &u, DELTA_REG)?);
    log.push(SolveLogEntry { iteration: 0, residual: res, damping: 1.0 });
    let mut omega = 1.0f64;

    for iter in 1..=opts.max_iters {
        if res <= opts.residual_tol {
            break;
        }
        // Freeze (x, u, |Du|) in the kernel and assemble the linear system
        // K u_new = F over interior nodes.
        let mut k = DMatrix::<f64>::zeros(nint, nint);
        let mut f = DVector::<f64>::zeros(nint);
        for cj in 0..g.ncy() {
            for ci in 0..g.ncx() {
                let x = g.cell_center(ci, cj);
                let uc = u.cell_avg(ci, cj);
                let du = u.cell_grad(ci, cj);
                let a_mat =
                    problem
                        .vector_field
                        .frozen_matrix(&problem.energy, &x, uc, &du, DELTA_REG);
                let b = problem.rhs.eval(&problem.energy, &x, uc, &du);
                if !(b.is_finite() && a_mat.iter().flatten().all(|v| v.is_finite())) {
                    return Err(Error::NonFinite {
                        what: format!("frozen coefficients at cell ({ci},{cj})"),
                        x: x.to_vec(),
                        u: uc,
                        xi: du.to_vec(),
                    });
                }
                for dj in 0..2usize {
                    for di in 0..2usize {
                        let (mi, mj) = (ci + di, cj + dj);
                        if g.is_boundary(mi, mj) {
                            continue;
                        }
                        let row = dense[g.node_index(mi, mj)];
                        let gm = [hat_grad(di, g.hx), hat_grad(dj, g.hy)];
                        f[row] -= 0.25 * b * area;
                        for nj in 0..2usize {
                            for ni in 0..2usize {
                                let (xi_, yj) = (ci + ni, cj + nj);
                                let gn = [hat_grad(ni, g.hx), hat_grad(nj, g.hy)];
                                // (A gn) . gm
                                let ag = [
                                    a_mat[0][0] * gn[0] + a_mat[0][1] * gn[1],
                                    a_mat[1][0] * gn[0] + a_mat[1][1] * gn[1],
                                ];
                                let coeff = (ag[0] * gm[0] + ag[1] * gm[1]) * area;
                                if g.is_boundary(xi_, yj) {
                                    f[row] -= coeff * u.value(xi_, yj);
                                } else {
                                    k[(row, dense[g.node_index(xi_, yj)])] += coeff;
                                }
                            }
                        }
                    }
                }
            }
        }
        let sol = k.lu().solve(&f).ok_or_else(|| {
            Error::Numerical(format!("singular frozen-coefficient system at iteration {iter}"))
        })?;

        // Relax toward the fixed-point candidate, halving on residual
        // increase.
        let mut advanced = false;
        while omega >= opts.min_damping {
            let mut trial = u.clone();
            for (col, &(i, j)) in nodes.iter().enumerate() {
                let idx = g.node_index(i, j);
                trial.values[idx] = (1.0 - omega) * u.values[idx] + omega * sol[col];
            }
            let res_trial = max_norm(&assemble_residual(problem, &trial, DELTA_REG)?);
            if res_trial < res || res_trial <= opts.residual_tol {
                u = trial;
                res = res_trial;
                advanced = true;
                break;
            }
            omega *= 0.5;
        }
        if !advanced {
            return Err(Error::NonConvergence(format!(
                "fixed-point relaxation stalled at iteration {iter} with residual {res:.3e}"
            )));
        }
        log.push(SolveLogEntry { iteration: iter, residual: res, damping: omega });
        omega = (omega * 1.5).min(1.0);
    }

    finish(problem, u, log, res, opts)
}

fn solve_descent(
    problem: &ProblemSpec,
    u0: &DiscreteFunction,
    opts: &SolveOptions,
) -> Result<SolveRecord> {
    use crate::structure::{RightHandSide, VectorField};
    if !matches!(problem.vector_field, VectorField::GradientOfF) {
        return Err(Error::input(
            "energy descent requires the flux to be the energy gradient a = D_xi f",
        ));
    }
    if problem.energy.depends_on_u() {
        return Err(Error::input(
            "energy descent requires a density without u-dependence \
             (otherwise the equation is not the Euler-Lagrange equation of F)",
        ));
    }
    if !matches!(problem.rhs, RightHandSide::Zero | RightHandSide::XOnly { .. }) {
        return Err(Error::input(
            "energy descent requires b = b(x) so that the load derives from a potential",
        ));
    }
    let g = u0.grid;
    let (nodes, _) = interior_map(&g);
    let area = g.cell_area();
    let mut u = u0.clone();
    let mut log = Vec::new();

    // E(u) = F(u) + sum b(x_c) u_c area; its nodal gradient is exactly the
    // weak residual vector.
    let objective = |u: &DiscreteFunction| -> Result<f64> {
        let mut e = discrete_energy(&problem.energy, u)?;
        if !problem.rhs.is_zero() {
            for cj in 0..g.ncy() {
                for ci in 0..g.ncx() {
                    let x = g.cell_center(ci, cj);
                    let b = problem.rhs.eval(&problem.energy, &x, 0.0, &[0.0, 0.0]);
                    e += b * u.cell_avg(ci, cj) * area;
                }
            }
        }
        Ok(e)
    };

    let mut r = assemble_residual(problem, &u, DELTA_REG)?;
    let mut res = max_norm(&r);
    let mut energy = objective(&u)?;
    log.push(SolveLogEntry { iteration: 0, residual: res, damping: 1.0 });
    let mut lambda = 1.0f64;

    for iter in 1..=opts.max_iters {
        if res <= opts.residual_tol {
            break;
        }
        let grad_sq: f64 = nodes.iter().map(|&(i, j)| r[g.node_index(i, j)].powi(2)).sum();
        lambda = (lambda * 2.0).min(1e6);
        let mut accepted = false;
        while lambda >= opts.min_damping * 1e-6 {
            let mut trial = u.clone();
            for &(i, j) in &nodes {
                let idx = g.node_index(i, j);
                trial.values[idx] -= lambda * r[idx];
            }
            let e_trial = objective(&trial)?;
            if e_trial <= energy - 1e-4 * lambda * grad_sq {
                u = trial;
                energy = e_trial;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::NonConvergence(format!(
                "descent stalled at iteration {iter} with residual {res:.3e}"
            )));
        }
        r = assemble_residual(problem, &u, DELTA_REG)?;
        res = max_norm(&r);
        log.push(SolveLogEntry { iteration: iter, residual: res, damping: lambda });
    }

    finish(problem, u, log, res, opts)
}

fn finish(
    problem: &ProblemSpec,
    u: DiscreteFunction,
    log: Vec<SolveLogEntry>,
    res: f64,
    opts: &SolveOptions,
) -> Result<SolveRecord> {
    if res > opts.residual_tol {
        return Err(Error::NonConvergence(format!(
            "residual {res:.6e} above tolerance {:.1e} after {} iterations",
            opts.residual_tol,
            log.len() - 1
        )));
    }
    let energy = discrete_energy(&problem.energy, &u)?;
    Ok(SolveRecord { u, log, final_residual: res, energy })
}

/// One inequality of a pairing report.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PairingBound {
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

fn bound(lhs: f64, rhs: f64) -> PairingBound {
    PairingBound { lhs, rhs, ok: lhs <= rhs + 1e-9 * (1.0 + lhs.abs() + rhs.abs()) }
}

/// Discrete audit that the solution's pairings are controlled by the
/// declared structure constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairingReport {
    /// Integral of |(a, Du)| against
    /// c3 (M-1) F(u) + (c2+c4)||u||_{p*}^{p*} + c2 |Omega| + ||b1||_1 + ||b2||_1.
    pub flux_pairing: PairingBound,
    /// Integral of |b phi_k| against the sum assembled from the two
    /// one-sided growth bounds at cell states.
    pub rhs_pairing: PairingBound,
    /// F(phi_k) against c6 F(u) + sum f(x, 0, 0) area.
    pub truncation_energy: PairingBound,
}

impl PairingReport {
    pub fn passed(&self) -> bool {
        self.flux_pairing.ok && self.rhs_pairing.ok && self.truncation_energy.ok
    }
}

/// Nodal truncation (|u|-k)+ sgn(u) without precondition checks.
pub(crate) fn truncate_values(u: &DiscreteFunction, k: f64) -> DiscreteFunction {
    let values = u
        .values
        .iter()
        .map(|&v| (v.abs() - k).max(0.0) * v.signum())
        .collect();
    DiscreteFunction { grid: u.grid, values }
}

/// Verify the two pairing chains and the truncation-energy bound at level k.
pub fn validate_weak_pairings(
    problem: &ProblemSpec,
    u: &DiscreteFunction,
    k: f64,
) -> Result<PairingReport> {
    u.validate()?;
    if k <= problem.u0_sup() {
        return Err(Error::input(format!(
            "level k={k} must exceed the boundary sup {}",
            problem.u0_sup()
        )));
    }
    let pk = &problem.parameters;
    let ps = pk.p_star()?;
    let g = &u.grid;
    let area = g.cell_area();
    let phi = truncate_values(u, k);

    let mut pairing_lhs = 0.0;
    let mut norm_pstar = 0.0;
    let mut b1_l1 = 0.0;
    let mut b2_l1 = 0.0;
    let mut rhs_lhs = 0.0;
    let mut rhs_rhs = 0.0;
    let mut f_at_zero = 0.0;
    let f_exp = 1.0 - 1.0 / ps;
    let xi_exp = pk.p * (ps - 1.0) / ps;
    for cj in 0..g.ncy() {
        for ci in 0..g.ncx() {
            let x = g.cell_center(ci, cj);
            let uc = u.cell_avg(ci, cj);
            let du = u.cell_grad(ci, cj);
            let a = problem.vector_field.eval_reg(&problem.energy, &x, uc, &du, 0.0);
            pairing_lhs += (a[0] * du[0] + a[1] * du[1]).abs() * area;
            norm_pstar += uc.abs().powf(ps) * area;
            b1_l1 += problem.data.b1.eval(&x, 0.0).abs() * area;
            b2_l1 += problem.data.b2.eval(&x, 0.0).abs() * area;
            f_at_zero += problem.energy.eval_raw(&x, 0.0, &[0.0, 0.0]) * area;

            // Second pairing: both sides share the cell-averaged nodal
            // truncation magnitude, so the bound follows pointwise from the
            // two one-sided growth conditions evaluated at cell states.
            let phi_abs = 0.25
                * ((u.value(ci, cj).abs() - k).max(0.0)
                    + (u.value(ci + 1, cj).abs() - k).max(0.0)
                    + (u.value(ci, cj + 1).abs() - k).max(0.0)
                    + (u.value(ci + 1, cj + 1).abs() - k).max(0.0));
            if phi_abs > 0.0 {
                let b = problem.rhs.eval(&problem.energy, &x, uc, &du);
                rhs_lhs += (b * phi.cell_avg(ci, cj)).abs() * area;
                let fv = problem.energy.eval_raw(&x, uc, &du);
                let t = (du[0] * du[0] + du[1] * du[1]).sqrt();
                let lower_brk = pk.c7
                    * (fv.powf(f_exp) + t.powf(xi_exp) + uc.abs().powf(ps - 1.0))
                    + problem.data.b3.eval(&x, 0.0);
                let upper_brk = pk.c8 * (fv + uc.abs().powf(ps)) + problem.data.b4.eval(&x, 0.0);
                rhs_rhs += (lower_brk + upper_brk / uc.abs().max(f64::MIN_POSITIVE))
                    * phi_abs
                    * area;
            }
        }
    }
    let f_u = discrete_energy(&problem.energy, u)?;
    let flux_rhs = pk.c3 * (problem.envelope.big_m - 1.0) * f_u
        + (pk.c2 + pk.c4) * norm_pstar
        + pk.c2 * g.total_area()
        + b1_l1
        + b2_l1;

    let f_phi = discrete_energy(&problem.energy, &phi)?;
    let trunc_rhs = pk.c6 * f_u + f_at_zero;

    Ok(PairingReport {
        flux_pairing: bound(pairing_lhs, flux_rhs),
        rhs_pairing: bound(rhs_lhs, rhs_rhs),
        truncation_energy: bound(f_phi, trunc_rhs),
    })
}
