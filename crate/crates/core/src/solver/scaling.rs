//! Ruiz equilibration of conic problems.

use super::cones::Cone;
use super::conic::ConicProblem;
use super::sparse::{inf_norm, CscMatrix};
use crate::scalar::Real;

/// `Ã = E·A·D`, `b̃ = E·b`, `c̃ = σ·D·c`. Row scalings are uniform inside
/// each second-order cone so that cone membership is preserved.
#[derive(Clone, Debug)]
pub struct Scaled<T> {
    pub a: CscMatrix<T>,
    pub b: Vec<T>,
    pub c: Vec<T>,
    pub d: Vec<T>,
    pub e: Vec<T>,
    pub cost_scale: T,
}

fn clamp_norm<T: Real>(v: T) -> T {
    if v == T::zero() {
        T::one()
    } else {
        v.max(T::lit(1e-4)).min(T::lit(1e4))
    }
}

pub fn equilibrate<T: Real>(prob: &ConicProblem<T>, iterations: usize) -> Scaled<T> {
    let (m, n) = (prob.num_rows(), prob.num_vars());
    let mut a = prob.a.clone();
    let mut d = vec![T::one(); n];
    let mut e = vec![T::one(); m];
    for _ in 0..iterations {
        let dd: Vec<T> = a.col_inf_norms().into_iter().map(|v| T::one() / clamp_norm(v).sqrt()).collect();
        let mut rn = a.row_inf_norms();
        for (cone, r) in prob.cones.blocks() {
            if let Cone::SecondOrder(_) = cone {
                let mx = rn[r.clone()].iter().fold(T::zero(), |acc, v| acc.max(*v));
                rn[r].iter_mut().for_each(|v| *v = mx);
            }
        }
        let de: Vec<T> = rn.into_iter().map(|v| T::one() / clamp_norm(v).sqrt()).collect();
        a.scale(&de, &dd);
        for (x, y) in d.iter_mut().zip(&dd) {
            *x *= *y;
        }
        for (x, y) in e.iter_mut().zip(&de) {
            *x *= *y;
        }
    }
    let mut c: Vec<T> = prob.c.iter().zip(&d).map(|(c, d)| *c * *d).collect();
    let cn = inf_norm(&c);
    let cost_scale = if cn > T::zero() { T::one() / clamp_norm(cn) } else { T::one() };
    c.iter_mut().for_each(|v| *v *= cost_scale);
    let b = prob.b.iter().zip(&e).map(|(b, e)| *b * *e).collect();
    Scaled { a, b, c, d, e, cost_scale }
}
