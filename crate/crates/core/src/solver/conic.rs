//! Conic standard form `min cᵀx + c₀  s.t.  A·x + s = b,  s ∈ K`.
//!
//! Built from a [`MixedIntegerConicProgram`] with binaries relaxed to their
//! bounds. A light presolve removes fixed variables, turns singleton
//! inequalities into bounds and merges opposite inequality pairs into
//! equalities, so that fixing binaries in branch-and-bound does not leave
//! the relaxation without a strict interior. Tightenings that would make a
//! variable's box empty are never applied; such rows are kept so the
//! interior-point method can certify infeasibility.

use std::collections::HashMap;

use super::cones::{Cone, ConeSet};
use super::sparse::CscMatrix;
use crate::model::MixedIntegerConicProgram;
use crate::scalar::Real;

#[derive(Clone, Debug)]
pub struct ConicProblem<T> {
    pub a: CscMatrix<T>,
    pub b: Vec<T>,
    pub c: Vec<T>,
    pub c0: T,
    pub cones: ConeSet,
    pub row_labels: Vec<String>,
    /// Column of each program variable, or its fixed value.
    pub columns: Vec<Column<T>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Column<T> {
    Free(usize),
    Fixed(T),
}

impl<T: Real> ConicProblem<T> {
    pub fn num_vars(&self) -> usize {
        self.a.ncols
    }

    pub fn num_rows(&self) -> usize {
        self.a.nrows
    }

    /// Expands a reduced solution to program variables.
    pub fn expand(&self, x: &[T]) -> Vec<T> {
        self.columns
            .iter()
            .map(|c| match *c {
                Column::Free(j) => x[j],
                Column::Fixed(v) => v,
            })
            .collect()
    }

    /// Checks a Farkas certificate: `y ∈ K*`, `Aᵀy ≈ 0`, `bᵀy < 0`.
    /// Returns `‖Aᵀy‖∞ / (−bᵀy)` when `bᵀy < 0` and `y` is dual feasible.
    pub fn certificate_quality(&self, y: &[T]) -> Option<T> {
        let mut proj = y.to_vec();
        self.cones.project_dual(&mut proj);
        let scale = super::sparse::inf_norm(y).max(T::min_positive_value());
        let off = proj.iter().zip(y).fold(T::zero(), |m, (p, q)| m.max((*p - *q).abs()));
        if off > T::lit(1e-9) * scale {
            return None;
        }
        let by = super::sparse::dot(&self.b, y);
        if !(by < T::zero()) {
            return None;
        }
        Some(super::sparse::inf_norm(&self.a.mul_t(y)) / -by)
    }
}

#[derive(Clone, Debug)]
struct Row<T> {
    terms: Vec<(usize, T)>,
    rhs: T,
    label: String,
    alive: bool,
}

fn close<T: Real>(a: T, b: T) -> bool {
    (a - b).abs() <= T::lit(1e-12) * T::one().max(a.abs()).max(b.abs())
}

/// Builds the conic form using `bounds` in place of the program's own.
pub fn to_conic<T: Real>(
    program: &MixedIntegerConicProgram<T>,
    bounds: &[(Option<T>, Option<T>)],
    presolve: bool,
) -> ConicProblem<T> {
    let nv = program.num_vars();
    let mut lb: Vec<Option<T>> = bounds.iter().map(|b| b.0).collect();
    let mut ub: Vec<Option<T>> = bounds.iter().map(|b| b.1).collect();
    let to_row = |r: &crate::model::LinearRow<T>| Row {
        terms: r.terms.iter().map(|(v, a)| (v.0, *a)).collect(),
        rhs: r.rhs,
        label: r.label.clone(),
        alive: true,
    };
    let mut eqs: Vec<Row<T>> = program.eq_rows().iter().map(to_row).collect();
    let mut ineqs: Vec<Row<T>> = program.ineq_rows().iter().map(to_row).collect();
    let mut fixed: Vec<Option<T>> = vec![None; nv];

    let mark_fixed = |k: usize, lb: &[Option<T>], ub: &[Option<T>], fixed: &mut Vec<Option<T>>| {
        if fixed[k].is_none() {
            if let (Some(l), Some(u)) = (lb[k], ub[k]) {
                if close(l, u) {
                    fixed[k] = Some(if l == u { l } else { (l + u) / T::lit(2.0) });
                }
            }
        }
    };
    for k in 0..nv {
        mark_fixed(k, &lb, &ub, &mut fixed);
    }

    if presolve {
        for _round in 0..50 {
            let mut changed = false;
            // Substitute fixed variables.
            for row in eqs.iter_mut().chain(ineqs.iter_mut()).filter(|r| r.alive) {
                let before = row.terms.len();
                let mut rhs = row.rhs;
                row.terms.retain(|&(v, a)| match fixed[v] {
                    Some(val) => {
                        rhs -= a * val;
                        false
                    }
                    None => a != T::zero(),
                });
                row.rhs = rhs;
                changed |= row.terms.len() != before;
            }
            // Empty and singleton rows.
            for row in ineqs.iter_mut().filter(|r| r.alive) {
                match row.terms.len() {
                    0 if row.rhs >= -T::lit(1e-12) => {
                        row.alive = false;
                        changed = true;
                    }
                    1 => {
                        let (v, a) = row.terms[0];
                        let bound = row.rhs / a;
                        let applied = if a > T::zero() {
                            if lb[v].map_or(true, |l| bound >= l - T::lit(1e-12) * T::one().max(l.abs())) {
                                ub[v] = Some(ub[v].map_or(bound, |u| u.min(bound)));
                                if let Some(l) = lb[v] {
                                    ub[v] = ub[v].map(|u| u.max(l));
                                }
                                true
                            } else {
                                false
                            }
                        } else if ub[v].map_or(true, |u| bound <= u + T::lit(1e-12) * T::one().max(u.abs())) {
                            lb[v] = Some(lb[v].map_or(bound, |l| l.max(bound)));
                            if let Some(u) = ub[v] {
                                lb[v] = lb[v].map(|l| l.min(u));
                            }
                            true
                        } else {
                            false
                        };
                        if applied {
                            row.alive = false;
                            changed = true;
                            mark_fixed(v, &lb, &ub, &mut fixed);
                        }
                    }
                    _ => {}
                }
            }
            for row in eqs.iter_mut().filter(|r| r.alive) {
                match row.terms.len() {
                    0 if row.rhs.abs() <= T::lit(1e-12) => {
                        row.alive = false;
                        changed = true;
                    }
                    1 => {
                        let (v, a) = row.terms[0];
                        let val = row.rhs / a;
                        let tol = T::lit(1e-12) * T::one().max(val.abs());
                        let inside = lb[v].map_or(true, |l| val >= l - tol) && ub[v].map_or(true, |u| val <= u + tol);
                        if inside && fixed[v].is_none() {
                            lb[v] = Some(val);
                            ub[v] = Some(val);
                            fixed[v] = Some(val);
                            row.alive = false;
                            changed = true;
                        }
                    }
                    _ => {}
                }
            }
            // Opposite inequality pairs become equalities; parallel
            // duplicates keep the tighter one.
            let mut groups: HashMap<Vec<(usize, i64)>, Vec<(usize, T, T)>> = HashMap::new();
            for (idx, row) in ineqs.iter().enumerate().filter(|(_, r)| r.alive && r.terms.len() >= 2) {
                let mut terms = row.terms.clone();
                terms.sort_by_key(|t| t.0);
                let lead = terms[0].1;
                let norm = lead.abs();
                let sign = if lead > T::zero() { T::one() } else { -T::one() };
                let key: Vec<(usize, i64)> = terms
                    .iter()
                    .map(|&(v, a)| (v, (sign * a / norm * T::lit(1e10)).round().to_i64().unwrap_or(i64::MAX)))
                    .collect();
                groups.entry(key).or_default().push((idx, sign, row.rhs / norm));
            }
            let mut keys: Vec<_> = groups.keys().cloned().collect();
            keys.sort();
            for key in keys {
                let members = &groups[&key];
                if members.len() < 2 {
                    continue;
                }
                // upper: canonical·x ≤ u ; lower: canonical·x ≥ l
                let mut upper: Option<(usize, T)> = None;
                let mut lower: Option<(usize, T)> = None;
                for &(idx, sign, r) in members {
                    let slot = if sign > T::zero() { &mut upper } else { &mut lower };
                    let bound = if sign > T::zero() { r } else { -r };
                    let tighter = match *slot {
                        None => true,
                        Some((_, old)) if sign > T::zero() => bound < old,
                        Some((_, old)) => bound > old,
                    };
                    if tighter {
                        if let Some((old, _)) = *slot {
                            ineqs[old].alive = false;
                            changed = true;
                        }
                        *slot = Some((idx, bound));
                    } else {
                        ineqs[idx].alive = false;
                        changed = true;
                    }
                }
                if let (Some((iu, u)), Some((il, l))) = (upper, lower) {
                    if close(u, l) {
                        let row = ineqs[iu].clone();
                        eqs.push(Row { label: format!("{}&{}", row.label, ineqs[il].label), ..row });
                        ineqs[iu].alive = false;
                        ineqs[il].alive = false;
                        changed = true;
                    }
                }
            }
            for k in 0..nv {
                mark_fixed(k, &lb, &ub, &mut fixed);
            }
            if !changed {
                break;
            }
        }
    }

    // Column numbering.
    let mut columns = Vec::with_capacity(nv);
    let mut ncols = 0;
    for k in 0..nv {
        match fixed[k] {
            Some(v) if presolve || bounds[k].0 == bounds[k].1 => columns.push(Column::Fixed(v)),
            _ => {
                columns.push(Column::Free(ncols));
                ncols += 1;
            }
        }
    }
    let mut trip: Vec<(usize, usize, T)> = Vec::new();
    let mut b = Vec::new();
    let mut labels = Vec::new();
    let mut cones = Vec::new();
    let mut push_row = |terms: &[(usize, T)], rhs: T, label: String, trip: &mut Vec<(usize, usize, T)>| {
        let r = b.len();
        let mut rhs = rhs;
        for &(v, a) in terms {
            match columns[v] {
                Column::Free(j) => trip.push((r, j, a)),
                Column::Fixed(val) => rhs -= a * val,
            }
        }
        b.push(rhs);
        labels.push(label);
    };
    let live_eq: Vec<&Row<T>> = eqs.iter().filter(|r| r.alive).collect();
    for row in &live_eq {
        push_row(&row.terms, row.rhs, row.label.clone(), &mut trip);
    }
    if !live_eq.is_empty() {
        cones.push(Cone::Zero(live_eq.len()));
    }
    let mut nonneg = 0;
    for row in ineqs.iter().filter(|r| r.alive) {
        push_row(&row.terms, row.rhs, row.label.clone(), &mut trip);
        nonneg += 1;
    }
    for k in 0..nv {
        if let Column::Free(_) = columns[k] {
            let name = &program.variables()[k].name;
            if let Some(l) = lb[k] {
                push_row(&[(k, -T::one())], -l, format!("lb[{name}]"), &mut trip);
                nonneg += 1;
            }
            if let Some(u) = ub[k] {
                push_row(&[(k, T::one())], u, format!("ub[{name}]"), &mut trip);
                nonneg += 1;
            }
        }
    }
    if nonneg > 0 {
        cones.push(Cone::NonNeg(nonneg));
    }
    let two = T::lit(2.0);
    for cone in program.cones() {
        let (l, u) = (cone.l.0, cone.u.0);
        push_row(&[(l, -T::one()), (u, -T::one())], T::zero(), format!("{}[0]", cone.label), &mut trip);
        push_row(&[(l, -T::one()), (u, T::one())], T::zero(), format!("{}[1]", cone.label), &mut trip);
        for (i, v) in cone.rest.iter().enumerate() {
            push_row(&[(v.0, -two)], T::zero(), format!("{}[{}]", cone.label, i + 2), &mut trip);
        }
        cones.push(Cone::SecondOrder(2 + cone.rest.len()));
    }

    let mut c = vec![T::zero(); ncols];
    let mut c0 = T::zero();
    for &(v, coef) in program.objective() {
        match columns[v.0] {
            Column::Free(j) => c[j] += coef,
            Column::Fixed(val) => c0 += coef * val,
        }
    }
    let m = b.len();
    ConicProblem {
        a: CscMatrix::from_triplets(m, ncols, &trip),
        b,
        c,
        c0,
        cones: ConeSet::new(cones),
        row_labels: labels,
        columns,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Element;

    #[test]
    fn fixed_binaries_collapse_big_m_rows() {
        // x ≤ M·λ, x ≤ u, x ≥ u − M(1 − λ), 0 ≤ x ≤ M, 0 ≤ u ≤ M
        let mut p = MixedIntegerConicProgram::<f64>::new();
        let lam = p.add_binary("lam", Element::None);
        let u = p.add_var("u", Some(0.0), Some(2.0), Element::None);
        let x = p.add_var("x", Some(0.0), Some(2.0), Element::None);
        p.add_le(vec![(x, 1.0), (lam, -2.0)], 0.0, "xhi");
        p.add_le(vec![(x, 1.0), (u, -1.0)], 0.0, "xlo");
        p.add_le(vec![(x, -1.0), (u, 1.0), (lam, 2.0)], 2.0, "xon");
        p.add_objective(u, 1.0);

        let mut off = p.bounds();
        off[lam.0] = (Some(0.0), Some(0.0));
        let c = to_conic(&p, &off, true);
        assert_eq!(c.columns[x.0], Column::Fixed(0.0));
        assert_eq!(c.num_vars(), 1);
        assert!(c.row_labels.iter().all(|l| l.starts_with("lb[") || l.starts_with("ub[")));

        let mut on = p.bounds();
        on[lam.0] = (Some(1.0), Some(1.0));
        let c = to_conic(&p, &on, true);
        assert_eq!(c.num_vars(), 2);
        assert_eq!(c.cones.cones[0], Cone::Zero(1));
        assert_eq!(c.row_labels[0], "xon&xlo");

        let raw = to_conic(&p, &p.bounds(), false);
        assert_eq!(raw.num_vars(), 3);
        assert_eq!(raw.num_rows(), 3 + 6);
    }

    #[test]
    fn conflicting_bounds_are_kept_for_certification() {
        let mut p = MixedIntegerConicProgram::<f64>::new();
        let x = p.add_var("x", Some(1.0), Some(2.0), Element::None);
        p.add_le(vec![(x, 1.0)], 0.5, "cap");
        let c = to_conic(&p, &p.bounds(), true);
        assert!(c.row_labels.contains(&"cap".to_string()));
        // y on `cap` and on `lb[x]` proves infeasibility: 0.5 − 1 < 0.
        let mut y = vec![0.0; c.num_rows()];
        y[c.row_labels.iter().position(|l| l == "cap").unwrap()] = 1.0;
        y[c.row_labels.iter().position(|l| l == "lb[x]").unwrap()] = 1.0;
        assert!(c.certificate_quality(&y).unwrap() < 1e-12);
    }

    #[test]
    fn rotated_cone_rows() {
        let mut p = MixedIntegerConicProgram::<f64>::new();
        let l = p.add_var("l", Some(0.0), None, Element::None);
        let u = p.add_var("u", Some(1.0), Some(1.0), Element::None);
        let q = p.add_var("q", None, None, Element::None);
        p.add_rotated_cone(l, u, vec![q], "cone");
        let c = to_conic(&p, &p.bounds(), true);
        assert_eq!(c.cones.cones.last(), Some(&Cone::SecondOrder(3)));
        let m = c.num_rows();
        assert_eq!(&c.b[m - 3..], &[1.0, -1.0, 0.0]);
        assert_eq!(c.expand(&[0.5, 0.25]), vec![0.5, 1.0, 0.25]);
    }
}
