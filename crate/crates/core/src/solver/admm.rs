//! Operator-splitting fallback (ADMM on `A·x ∈ b − K`).
//!
//! Each iteration solves one quasi-definite system with a fixed matrix,
//! projects onto the cone and updates the multipliers. Step sizes are
//! adapted from the ratio of primal and dual residuals. Lower accuracy
//! than the interior-point method but cheap per iteration.

use super::conic::ConicProblem;
use super::ipm::{ConicSolution, ConicStatus};
use super::ldl::{LdlFactor, LdlSymbolic};
use super::scaling::equilibrate;
use super::sparse::{dot, inf_norm};
use crate::error::Result;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug)]
pub struct AdmmSettings<T> {
    pub tol: T,
    pub max_iter: usize,
}

pub fn solve_conic<T: Real>(prob: &ConicProblem<T>, settings: &AdmmSettings<T>) -> Result<ConicSolution<T>> {
    let sc = equilibrate(prob, 15);
    let cones = &prob.cones;
    let (n, m) = (prob.num_vars(), prob.num_rows());
    let zero_rows = cones.zero_mask();
    let sigma = T::lit(1e-6);
    let alpha = T::lit(1.6);
    let mut rho_base = T::lit(0.1);

    let mut entries: Vec<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
    let mut vals: Vec<T> = vec![sigma; n];
    for j in 0..n {
        for p in sc.a.colptr[j]..sc.a.colptr[j + 1] {
            entries.push((j, n + sc.a.rowind[p]));
            vals.push(sc.a.values[p]);
        }
    }
    let diag_at = vals.len();
    entries.extend((0..m).map(|i| (n + i, n + i)));
    vals.extend(std::iter::repeat(T::zero()).take(m));
    let sym = LdlSymbolic::analyze(n + m, &entries)?;
    let mut signs = vec![1i8; n];
    signs.extend(std::iter::repeat(-1i8).take(m));

    let rho_of = |base: T| -> Vec<T> {
        zero_rows.iter().map(|&z| if z { base * T::lit(1e3) } else { base }).collect()
    };
    let factor = |rho: &[T], vals: &mut Vec<T>| -> Result<LdlFactor<T>> {
        for i in 0..m {
            vals[diag_at + i] = -T::one() / rho[i];
        }
        LdlFactor::factor(&sym, vals, &signs, T::lit(1e-13), T::lit(1e-7))
    };
    let mut rho = rho_of(rho_base);
    let mut fac = factor(&rho, &mut vals)?;

    let project_c = |v: &mut [T]| {
        let mut w: Vec<T> = sc.b.iter().zip(v.iter()).map(|(b, v)| *b - *v).collect();
        cones.project(&mut w);
        for i in 0..m {
            v[i] = sc.b[i] - w[i];
        }
    };

    let mut x = vec![T::zero(); n];
    let mut zc = vec![T::zero(); m];
    project_c(&mut zc);
    let mut y = vec![T::zero(); m];
    let mut status = ConicStatus::IterationLimit;
    let mut iterations = 0;
    let (mut pres, mut dres) = (T::infinity(), T::infinity());
    let b_norm = T::one().max(inf_norm(&prob.b));
    let c_norm = T::one().max(inf_norm(&prob.c));
    let mut rhs = vec![T::zero(); n + m];
    let mut y_prev = y.clone();

    while iterations < settings.max_iter {
        iterations += 1;
        for i in 0..n {
            rhs[i] = sigma * x[i] - sc.c[i];
        }
        for i in 0..m {
            rhs[n + i] = zc[i] - y[i] / rho[i];
        }
        let mut sol = rhs.clone();
        fac.solve(&sym, &mut sol);
        let mut zrel = vec![T::zero(); m];
        for i in 0..n {
            x[i] = alpha * sol[i] + (T::one() - alpha) * x[i];
        }
        for i in 0..m {
            let zt = zc[i] + (sol[n + i] - y[i]) / rho[i];
            zrel[i] = alpha * zt + (T::one() - alpha) * zc[i];
        }
        y_prev.copy_from_slice(&y);
        let mut znew: Vec<T> = (0..m).map(|i| zrel[i] + y[i] / rho[i]).collect();
        project_c(&mut znew);
        for i in 0..m {
            y[i] += rho[i] * (zrel[i] - znew[i]);
        }
        zc = znew;

        if iterations % 10 != 0 && iterations != settings.max_iter {
            continue;
        }
        let ax = sc.a.mul(&x);
        let aty = sc.a.mul_t(&y);
        let p_abs = (0..m).fold(T::zero(), |acc, i| acc.max(((ax[i] - zc[i]) / sc.e[i]).abs()));
        let d_abs = (0..n).fold(T::zero(), |acc, i| acc.max(((sc.c[i] + aty[i]) / sc.d[i]).abs())) / sc.cost_scale;
        pres = p_abs / b_norm;
        dres = d_abs / c_norm;
        let pobj = dot(&sc.c, &x) / sc.cost_scale;
        let dobj = -dot(&sc.b, &y) / sc.cost_scale;
        let gap = (pobj - dobj).abs() / T::one().max(pobj.abs().min(dobj.abs()));
        if pres <= settings.tol && dres <= settings.tol && gap <= T::lit(10.0) * settings.tol {
            status = ConicStatus::Optimal;
            break;
        }
        // Infeasibility from the multiplier increment.
        let dy: Vec<T> = y.iter().zip(&y_prev).map(|(a, b)| *a - *b).collect();
        let dy_norm = inf_norm(&dy);
        if dy_norm > T::zero() {
            let mut proj = dy.clone();
            cones.project_dual(&mut proj);
            let in_dual = proj.iter().zip(&dy).all(|(p, q)| (*p - *q).abs() <= T::lit(1e-9) * dy_norm);
            let bdy = dot(&sc.b, &dy);
            let atdy = inf_norm(&sc.a.mul_t(&dy));
            if in_dual && bdy < -settings.tol * dy_norm && atdy <= settings.tol * -bdy {
                status = ConicStatus::PrimalInfeasible;
                y = dy;
                break;
            }
        }
        // Step-size adaptation.
        if iterations % 50 == 0 {
            let p_rel = p_abs / T::lit(1e-10).max(inf_norm(&ax).max(inf_norm(&zc)));
            let d_rel = d_abs / T::lit(1e-10).max(inf_norm(&aty).max(inf_norm(&sc.c)));
            let ratio = (p_rel / T::lit(1e-10).max(d_rel)).sqrt();
            let new_base = (rho_base * ratio).max(T::lit(1e-6)).min(T::lit(1e6));
            if new_base > rho_base * T::lit(5.0) || new_base < rho_base / T::lit(5.0) {
                rho_base = new_base;
                rho = rho_of(rho_base);
                fac = factor(&rho, &mut vals)?;
            }
        }
    }

    let reduced = T::lit(1e-4).max(settings.tol);
    if status == ConicStatus::IterationLimit && pres <= reduced && dres <= reduced {
        status = ConicStatus::Inaccurate;
    }
    let (xo, so, zo): (Vec<T>, Vec<T>, Vec<T>) = if status == ConicStatus::PrimalInfeasible {
        let zu: Vec<T> = y.iter().zip(&sc.e).map(|(v, e)| *v * *e).collect();
        let bz = dot(&prob.b, &zu);
        (vec![T::zero(); n], vec![T::zero(); m], zu.iter().map(|v| *v / -bz).collect())
    } else {
        (
            x.iter().zip(&sc.d).map(|(v, d)| *v * *d).collect::<Vec<T>>(),
            (0..m).map(|i| (sc.b[i] - zc[i]) / sc.e[i]).collect(),
            y.iter().zip(&sc.e).map(|(v, e)| *v * *e / sc.cost_scale).collect(),
        )
    };
    let objective = dot(&prob.c, &xo) + prob.c0;
    let gap = (dot(&prob.c, &xo) + dot(&prob.b, &zo)).abs();
    Ok(ConicSolution {
        status,
        x: xo,
        s: so,
        z: zo,
        objective,
        iterations,
        primal_residual: pres,
        dual_residual: dres,
        gap,
    })
}
