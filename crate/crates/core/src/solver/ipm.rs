//! Primal-dual interior-point method on the homogeneous self-dual
//! embedding with Nesterov-Todd scaling and Mehrotra predictor-corrector
//! steps.
//!
//! Each iteration factors the quasi-definite system
//!
//! ```text
//!   [ δI      Aᵀ     ] [Δx]   [r_x]
//!   [ A   −(W² + δI) ] [Δz] = [r_z]
//! ```
//!
//! once and solves it three times (the constant `[−c; b]` column plus the
//! affine and combined directions), with iterative refinement against the
//! unregularized matrix.

use super::cones::{h_pattern, ConeSet, NtScaling};
use super::conic::ConicProblem;
use super::ldl::{LdlFactor, LdlSymbolic};
use super::scaling::{equilibrate, Scaled};
use super::sparse::{axpy, dot, inf_norm};
use crate::error::Result;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConicStatus {
    Optimal,
    /// Converged to a reduced tolerance before stalling.
    Inaccurate,
    PrimalInfeasible,
    DualInfeasible,
    IterationLimit,
    NumericalError,
}

#[derive(Clone, Debug)]
pub struct ConicSolution<T> {
    pub status: ConicStatus,
    pub x: Vec<T>,
    pub s: Vec<T>,
    /// Dual variables; for infeasible problems the Farkas certificate
    /// normalized to `bᵀz = −1`.
    pub z: Vec<T>,
    pub objective: T,
    pub iterations: usize,
    pub primal_residual: T,
    pub dual_residual: T,
    pub gap: T,
}

#[derive(Clone, Copy, Debug)]
pub struct IpmSettings<T> {
    pub tol: T,
    pub max_iter: usize,
    pub equilibrate_iters: usize,
}

struct Kkt<T> {
    n: usize,
    sym: LdlSymbolic,
    signs: Vec<i8>,
    /// Triplet values: n diagonal, then A entries, then H pattern.
    vals: Vec<T>,
    a_entries: usize,
    h_pat: Vec<(usize, usize)>,
    h_vals: Vec<T>,
    reg: T,
    factor: Option<LdlFactor<T>>,
}

impl<T: Real> Kkt<T> {
    fn new(sc: &Scaled<T>, cones: &ConeSet) -> Result<Self> {
        let (n, m) = (sc.a.ncols, sc.a.nrows);
        let mut entries: Vec<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
        let mut vals: Vec<T> = vec![T::zero(); n];
        for j in 0..n {
            for p in sc.a.colptr[j]..sc.a.colptr[j + 1] {
                entries.push((j, n + sc.a.rowind[p]));
                vals.push(sc.a.values[p]);
            }
        }
        let a_entries = vals.len() - n;
        let h_pat = h_pattern(cones);
        for &(r, c) in &h_pat {
            entries.push((n + r, n + c));
            vals.push(T::zero());
        }
        let sym = LdlSymbolic::analyze(n + m, &entries)?;
        let mut signs = vec![1i8; n];
        signs.extend(std::iter::repeat(-1i8).take(m));
        Ok(Kkt { n, sym, signs, vals, a_entries, h_pat, h_vals: Vec::new(), reg: T::lit(1e-8), factor: None })
    }

    fn set_h(&mut self, h: Vec<T>) -> Result<()> {
        let (n, off) = (self.n, self.n + self.a_entries);
        for i in 0..n {
            self.vals[i] = self.reg;
        }
        for (k, (&(r, c), &v)) in self.h_pat.iter().zip(&h).enumerate() {
            self.vals[off + k] = if r == c { -(v + self.reg) } else { -v };
        }
        self.h_vals = h;
        self.factor = Some(LdlFactor::factor(&self.sym, &self.vals, &self.signs, T::lit(1e-13), T::lit(1e-7))?);
        Ok(())
    }

    /// Unregularized product.
    fn mul(&self, a: &super::sparse::CscMatrix<T>, v: &[T], out: &mut [T]) {
        let n = self.n;
        out.iter_mut().for_each(|o| *o = T::zero());
        let (vx, vz) = v.split_at(n);
        let (ox, oz) = out.split_at_mut(n);
        a.gemv_t(T::one(), vz, ox);
        a.gemv(T::one(), vx, oz);
        for (&(r, c), &h) in self.h_pat.iter().zip(&self.h_vals) {
            oz[r] -= h * vz[c];
            if r != c {
                oz[c] -= h * vz[r];
            }
        }
    }

    fn solve(&self, a: &super::sparse::CscMatrix<T>, rhs: &[T]) -> Vec<T> {
        let f = self.factor.as_ref().expect("factored");
        let mut x = rhs.to_vec();
        f.solve(&self.sym, &mut x);
        let bnorm = inf_norm(rhs);
        let mut r = vec![T::zero(); rhs.len()];
        let mut last = T::infinity();
        for _ in 0..10 {
            self.mul(a, &x, &mut r);
            for (ri, bi) in r.iter_mut().zip(rhs) {
                *ri = *bi - *ri;
            }
            let rn = inf_norm(&r);
            if rn <= T::lit(1e-14) * (T::one() + bnorm) || rn >= last * T::lit(0.9) {
                break;
            }
            last = rn;
            f.solve(&self.sym, &mut r);
            axpy(T::one(), &r, &mut x);
        }
        x
    }
}

pub fn solve_conic<T: Real>(prob: &ConicProblem<T>, settings: &IpmSettings<T>) -> Result<ConicSolution<T>> {
    let sc = equilibrate(prob, settings.equilibrate_iters);
    let cones = &prob.cones;
    let (n, m) = (prob.num_vars(), prob.num_rows());
    let zero_rows = cones.zero_mask();
    let nu = T::from_usize(cones.degree()).unwrap();
    let mut kkt = Kkt::new(&sc, cones)?;

    let b_norm = T::one().max(inf_norm(&prob.b));
    let c_norm = T::one().max(inf_norm(&prob.c));

    // Initial point.
    let mut h0 = Vec::new();
    {
        let mut unit = vec![T::zero(); m];
        cones.add_identity(&mut unit, T::one());
        let w = NtScaling::compute(cones, &unit, &unit);
        w.h_values(cones, &mut h0);
    }
    kkt.set_h(h0)?;
    let mut rhs = vec![T::zero(); n + m];
    rhs[n..].copy_from_slice(&sc.b);
    let sol = kkt.solve(&sc.a, &rhs);
    let mut x: Vec<T> = sol[..n].to_vec();
    let mut s: Vec<T> = sol[n..].iter().zip(&zero_rows).map(|(v, &z)| if z { T::zero() } else { -*v }).collect();
    let mut rhs = vec![T::zero(); n + m];
    for i in 0..n {
        rhs[i] = -sc.c[i];
    }
    let sol = kkt.solve(&sc.a, &rhs);
    let mut z: Vec<T> = sol[n..].to_vec();
    for v in [&mut s, &mut z] {
        let alpha = -cones.min_eig(v);
        if alpha >= -T::lit(1e-8) {
            cones.add_identity(v, T::one() + alpha);
        }
    }
    let mut tau = T::one();
    let mut kappa = T::one();

    let mut status = ConicStatus::IterationLimit;
    let mut iterations = 0;
    let (mut pres, mut dres, mut gap);
    let mut best_reduced: Option<(Vec<T>, Vec<T>, Vec<T>, T)> = None;
    let mut small_steps = 0;

    let mut rx = vec![T::zero(); n];
    let mut rz = vec![T::zero(); m];
    let mut h = Vec::new();
    let mut tmp = vec![T::zero(); m];
    let mut tmp2 = vec![T::zero(); m];

    loop {
        // Residuals.
        rx.iter_mut().zip(&sc.c).for_each(|(r, c)| *r = *c * tau);
        sc.a.gemv_t(T::one(), &z, &mut rx);
        rz.iter_mut().zip(&s).zip(&sc.b).for_each(|((r, s), b)| *r = *s - *b * tau);
        sc.a.gemv(T::one(), &x, &mut rz);
        let cx = dot(&sc.c, &x);
        let bz = dot(&sc.b, &z);
        let rtau = cx + bz + kappa;

        let pres_u = rz.iter().zip(&sc.e).fold(T::zero(), |acc, (r, e)| acc.max((*r / *e).abs())) / tau;
        let dres_u =
            rx.iter().zip(&sc.d).fold(T::zero(), |acc, (r, d)| acc.max((*r / *d).abs())) / (sc.cost_scale * tau);
        let pobj = cx / (sc.cost_scale * tau);
        let dobj = -bz / (sc.cost_scale * tau);
        pres = pres_u / b_norm;
        dres = dres_u / c_norm;
        gap = (pobj - dobj).abs();
        let rel_gap = gap / T::one().max(pobj.abs().min(dobj.abs()));

        log::trace!("ipm {iterations}: pres {pres:e} dres {dres:e} gap {gap:e} tau {tau:e} kappa {kappa:e}");
        if pres <= settings.tol && dres <= settings.tol && (gap <= settings.tol || rel_gap <= settings.tol) {
            status = ConicStatus::Optimal;
            break;
        }
        let reduced = T::lit(1e-5).max(settings.tol);
        if pres <= reduced && dres <= reduced && (gap <= reduced || rel_gap <= reduced) {
            best_reduced = Some((x.clone(), s.clone(), z.clone(), tau));
        }
        // Infeasibility.
        if bz < T::zero() {
            let atz = sc.a.mul_t(&z);
            let atz_u = atz.iter().zip(&sc.d).fold(T::zero(), |acc, (r, d)| acc.max((*r / *d).abs()));
            let z_norm = z.iter().zip(&sc.e).fold(T::zero(), |acc, (v, e)| acc.max((*v * *e).abs()));
            if atz_u <= settings.tol * -bz && -bz > settings.tol * z_norm {
                status = ConicStatus::PrimalInfeasible;
                break;
            }
        }
        if cx < T::zero() {
            let mut axs = s.clone();
            sc.a.gemv(T::one(), &x, &mut axs);
            let axs_u = axs.iter().zip(&sc.e).fold(T::zero(), |acc, (r, e)| acc.max((*r / *e).abs()));
            let x_norm = x.iter().zip(&sc.d).fold(T::zero(), |acc, (v, d)| acc.max((*v * *d).abs()));
            if axs_u <= settings.tol * -cx && -cx > settings.tol * x_norm {
                status = ConicStatus::DualInfeasible;
                break;
            }
        }
        if iterations >= settings.max_iter {
            break;
        }
        iterations += 1;

        // Scaling and factorization.
        let w = NtScaling::compute(cones, &s, &z);
        w.h_values(cones, &mut h);
        if kkt.set_h(h.clone()).is_err() {
            status = ConicStatus::NumericalError;
            break;
        }
        let mut rhs1 = vec![T::zero(); n + m];
        for i in 0..n {
            rhs1[i] = -sc.c[i];
        }
        rhs1[n..].copy_from_slice(&sc.b);
        let sol1 = kkt.solve(&sc.a, &rhs1);
        let (x1, z1) = sol1.split_at(n);
        let denom = dot(&sc.c, x1) + dot(&sc.b, z1) - kappa / tau;

        let mu = (dot(&s, &z) + tau * kappa) / (nu + T::one());
        let lambda = &w.lambda;

        // Direction for given ds, dkappa, eta.
        let direction = |ds: &[T], dkappa: T, eta: T, tmp: &mut Vec<T>, tmp2: &mut Vec<T>| {
            // tmp = λ \ ds ; tmp2 = W·tmp
            cones.inv_circ(lambda, ds, tmp);
            w.apply(cones, tmp, tmp2, false);
            let mut rhs2 = vec![T::zero(); n + m];
            for i in 0..n {
                rhs2[i] = -eta * rx[i];
            }
            for i in 0..m {
                rhs2[n + i] = -eta * rz[i] - tmp2[i];
            }
            let sol2 = kkt.solve(&sc.a, &rhs2);
            let (x2, z2) = sol2.split_at(n);
            let dtau = (-eta * rtau - dkappa / tau - dot(&sc.c, x2) - dot(&sc.b, z2)) / denom;
            let dx: Vec<T> = x2.iter().zip(x1).map(|(a, b)| *a + dtau * *b).collect();
            let dz: Vec<T> = z2.iter().zip(z1).map(|(a, b)| *a + dtau * *b).collect();
            // ds = W(λ\ds − W·dz)
            let mut wdz = vec![T::zero(); m];
            w.apply(cones, &dz, &mut wdz, false);
            for i in 0..m {
                tmp[i] -= wdz[i];
            }
            let mut dsv = vec![T::zero(); m];
            w.apply(cones, tmp, &mut dsv, false);
            let dk = (dkappa - kappa * dtau) / tau;
            (dx, dz, dsv, dtau, dk)
        };
        let step = |ds: &[T], dz: &[T], dtau: T, dk: T| {
            let mut a = cones.step_length(&s, ds, T::lit(1e10));
            a = a.min(cones.step_length(&z, dz, T::lit(1e10)));
            if dtau < T::zero() {
                a = a.min(-tau / dtau);
            }
            if dk < T::zero() {
                a = a.min(-kappa / dk);
            }
            a
        };

        // Affine.
        let mut ds_aff = vec![T::zero(); m];
        cones.circ(lambda, lambda, &mut ds_aff);
        ds_aff.iter_mut().for_each(|v| *v = -*v);
        let (_, dz_a, ds_a, dtau_a, dk_a) = direction(&ds_aff, -tau * kappa, T::one(), &mut tmp, &mut tmp2);
        let alpha_aff = step(&ds_a, &dz_a, dtau_a, dk_a).min(T::one());
        let sigma = (T::one() - alpha_aff).powi(3);

        // Combined.
        let mut wi_ds = vec![T::zero(); m];
        let mut w_dz = vec![T::zero(); m];
        w.apply(cones, &ds_a, &mut wi_ds, true);
        w.apply(cones, &dz_a, &mut w_dz, false);
        let mut corr = vec![T::zero(); m];
        cones.circ(&wi_ds, &w_dz, &mut corr);
        let mut ds_c = vec![T::zero(); m];
        cones.circ(lambda, lambda, &mut ds_c);
        for i in 0..m {
            ds_c[i] = -ds_c[i] - corr[i];
        }
        let mut e = vec![T::zero(); m];
        cones.add_identity(&mut e, sigma * mu);
        axpy(T::one(), &e, &mut ds_c);
        let dk_c = -tau * kappa - dtau_a * dk_a + sigma * mu;
        let (dx, dz, ds, dtau, dk) = direction(&ds_c, dk_c, T::one() - sigma, &mut tmp, &mut tmp2);
        let alpha = (T::lit(0.99) * step(&ds, &dz, dtau, dk)).min(T::one());
        if !alpha.is_finite() || dx.iter().chain(&dz).any(|v| !v.is_finite()) {
            status = ConicStatus::NumericalError;
            break;
        }
        axpy(alpha, &dx, &mut x);
        axpy(alpha, &dz, &mut z);
        axpy(alpha, &ds, &mut s);
        tau += alpha * dtau;
        kappa += alpha * dk;
        for (v, &zr) in s.iter_mut().zip(&zero_rows) {
            if zr {
                *v = T::zero();
            }
        }
        if alpha < T::lit(1e-8) {
            small_steps += 1;
            if small_steps >= 5 {
                status = ConicStatus::NumericalError;
                break;
            }
        } else {
            small_steps = 0;
        }
    }

    if matches!(status, ConicStatus::IterationLimit | ConicStatus::NumericalError) {
        if let Some((bx, bs, bzv, bt)) = best_reduced {
            x = bx;
            s = bs;
            z = bzv;
            tau = bt;
            status = ConicStatus::Inaccurate;
        }
    }

    // Unscale.
    let (xo, so, zo) = match status {
        ConicStatus::PrimalInfeasible => {
            let zu: Vec<T> = z.iter().zip(&sc.e).map(|(v, e)| *v * *e).collect();
            let bz = dot(&prob.b, &zu);
            (vec![T::zero(); n], vec![T::zero(); m], zu.iter().map(|v| *v / -bz).collect())
        }
        ConicStatus::DualInfeasible => {
            let xu: Vec<T> = x.iter().zip(&sc.d).map(|(v, d)| *v * *d).collect();
            let cx = dot(&prob.c, &xu);
            (xu.iter().map(|v| *v / -cx).collect(), vec![T::zero(); m], vec![T::zero(); m])
        }
        _ => (
            x.iter().zip(&sc.d).map(|(v, d)| *v * *d / tau).collect(),
            s.iter().zip(&sc.e).map(|(v, e)| *v / *e / tau).collect(),
            z.iter().zip(&sc.e).map(|(v, e)| *v * *e / (sc.cost_scale * tau)).collect::<Vec<T>>(),
        ),
    };
    let objective = dot(&prob.c, &xo) + prob.c0;
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
