use std::fmt::Write;

use crate::scalar::Field;

use super::{LinearRow, MixedIntegerConicProgram};

/// Human-auditable listing of a program. Layout documented in
/// `docs/model-format.md`.
pub fn dump_program<T: Field>(program: &MixedIntegerConicProgram<T>) -> String {
    let mut out = String::new();
    let p = program;
    writeln!(out, "# tapflow model listing v1").unwrap();
    writeln!(
        out,
        "# variables {} binaries {} equalities {} inequalities {} cones {}",
        p.num_vars(),
        p.num_binaries(),
        p.eq_rows().len(),
        p.ineq_rows().len(),
        p.cones().len()
    )
    .unwrap();

    writeln!(out, "[variables]").unwrap();
    for (k, v) in p.variables().iter().enumerate() {
        let bound = |b: &Option<T>| b.as_ref().map_or("free".to_string(), |x| x.to_string());
        write!(out, "v{k} {} lb={} ub={}", v.name, bound(&v.lb), bound(&v.ub)).unwrap();
        if v.binary {
            write!(out, " binary").unwrap();
        }
        writeln!(out).unwrap();
    }

    writeln!(out, "[objective] minimize").unwrap();
    writeln!(out, "  {}", terms(p.objective())).unwrap();

    writeln!(out, "[equalities]").unwrap();
    for (k, row) in p.eq_rows().iter().enumerate() {
        writeln!(out, "e{k} {}", row_text(row, "=")).unwrap();
    }
    writeln!(out, "[inequalities]").unwrap();
    for (k, row) in p.ineq_rows().iter().enumerate() {
        writeln!(out, "i{k} {}", row_text(row, "<=")).unwrap();
    }

    writeln!(out, "[cones]").unwrap();
    for (k, c) in p.cones().iter().enumerate() {
        let rest: Vec<String> = c.rest.iter().map(|v| format!("v{}^2", v.0)).collect();
        writeln!(out, "c{k} {}: v{} * v{} >= {}", c.label, c.l.0, c.u.0, rest.join(" + ")).unwrap();
    }

    if !p.tap_groups().is_empty() {
        writeln!(out, "[tap-groups]").unwrap();
        for g in p.tap_groups() {
            let bits: Vec<String> = g.bits.iter().map(|v| format!("v{}", v.0)).collect();
            writeln!(out, "t{} K={} bits={}", g.transformer, g.k_taps, bits.join(",")).unwrap();
        }
    }
    out
}

fn terms<T: Field>(terms: &[(super::VarId, T)]) -> String {
    if terms.is_empty() {
        return "0".to_string();
    }
    let zero = T::zero();
    terms
        .iter()
        .map(|(v, a)| {
            if *a < zero {
                format!("- {} v{}", -a.clone(), v.0)
            } else {
                format!("+ {} v{}", a, v.0)
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn row_text<T: Field>(row: &LinearRow<T>, sense: &str) -> String {
    format!("{}: {} {sense} {}", row.label, terms(&row.terms), row.rhs)
}
