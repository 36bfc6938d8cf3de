//! Mixed-integer linear encoding of transformer tap ratios.
//!
//! The ratio is `t = t_min + Δt·T` with integer tap `T ∈ [0, K]`, written
//! in binary as `T = Σ 2^n λ_n`. The downstream squared voltage `U` enters
//! the transformer relation `U_jt = t²·U` through two bilinear products,
//! `m = t·U` and `U_jt = t·m`. Each product with a bit is replaced by an
//! auxiliary variable tied down by a pair of big-M inequalities:
//!
//! ```text
//!   Σ 2^n λ_n ≤ K
//!   m    = t_min·U + Δt·Σ 2^n x_n      0 ≤ U − x_n ≤ (1 − λ_n)·M_x    0 ≤ x_n ≤ λ_n·M_x
//!   U_jt = t_min·m + Δt·Σ 2^n y_n      0 ≤ m − y_n ≤ (1 − λ_n)·M_y    0 ≤ y_n ≤ λ_n·M_y
//! ```
//!
//! For integral λ the rows force `x_n = λ_n·U` and `y_n = λ_n·m`, hence
//! `U_jt = t²·U` with no approximation. The first-order model that drops
//! the `(T·Δt)²` term is provided as a comparison baseline.

use std::fmt::Write;

use crate::error::{Error, Result};
use crate::model::{Element, MixedIntegerConicProgram, TapGroup, VarId};
use crate::network::TapChanger;
use crate::scalar::{Exact, Field};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum BitLengthMode {
    /// Smallest `b` with `2^b − 1 ≥ K`.
    #[default]
    Minimal,
    /// One bit more than the binary length of `K`.
    Extended,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub enum BigMMode<T> {
    /// Per-row constants from the voltage bounds.
    #[default]
    Tight,
    Uniform(T),
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct LinearizationConfig<T> {
    pub big_m: BigMMode<T>,
    pub bit_length: BitLengthMode,
}

/// Approximate tap model used as a baseline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ApproxVariant {
    /// `U_jt = t_min²·U + 2·t_min·T·Δt·U`: first order in `T·Δt`, so the
    /// error against the exact relation is exactly `(T·Δt)²·U`.
    #[default]
    FirstOrder,
    /// `U_jt = t_min²·U + 2·T·Δt·U`, the coefficient as usually printed
    /// for this baseline (only first order when `t_min = 1`).
    Literal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncodingKind {
    Exact,
    Approximate(ApproxVariant),
}

/// Row indices (into the program's equality / inequality lists) emitted
/// for one transformer.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct EncodingRows {
    pub eq: Vec<usize>,
    pub ineq: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TapEncoding<T> {
    /// Position in the case transformer list.
    pub transformer: usize,
    pub label: String,
    pub tap: TapChanger,
    pub kind: EncodingKind,
    pub t_min: T,
    pub t_max: T,
    pub k_taps: u32,
    pub delta_t: T,
    pub n_bits: u32,
    pub u_var: VarId,
    pub bit_vars: Vec<VarId>,
    /// `m = t·U`; absent in the approximate model.
    pub m_var: Option<VarId>,
    pub x_vars: Vec<VarId>,
    pub y_vars: Vec<VarId>,
    pub ujt_var: VarId,
    pub big_m_x: T,
    /// Unused by the approximate model.
    pub big_m_y: T,
    pub rows: EncodingRows,
}

/// Number of binary variables used to expand `k_taps`.
pub fn bit_length(k_taps: u32, mode: BitLengthMode) -> u32 {
    assert!(k_taps >= 1, "tap changer needs at least one tap");
    let minimal = u32::BITS - k_taps.leading_zeros();
    match mode {
        BitLengthMode::Minimal => minimal,
        BitLengthMode::Extended => minimal + 1,
    }
}

/// Tight big-M constants `(M_x, M_y) = (u_hi, t_max·u_hi)`.
pub fn tight_big_m<T: Field>(u_bounds: (T, T), tap: &TapChanger) -> Result<(T, T)> {
    let (u_lo, u_hi) = u_bounds;
    if u_hi <= T::zero() || u_lo < T::zero() || u_lo > u_hi {
        return Err(Error::Encoding(format!("voltage bounds [{u_lo}, {u_hi}] cannot bound big-M")));
    }
    let t_max = T::from_ratio(&tap.t_max);
    Ok((u_hi.clone(), t_max * u_hi))
}

/// Canonical bit pattern of a tap position, least significant bit first.
pub fn canonical_bits(tap: u32, n_bits: u32) -> Vec<u8> {
    (0..n_bits).map(|n| ((tap >> n) & 1) as u8).collect()
}

/// Integer value `Σ 2^n λ_n` of a bit pattern.
pub fn bits_value(bits: &[u8]) -> u64 {
    bits.iter().enumerate().map(|(n, &b)| (b as u64) << n).sum()
}

fn pow2<T: Field>(n: usize) -> T {
    T::from_int(1i64 << n)
}

struct Prepared<T> {
    t_min: T,
    t_max: T,
    delta_t: T,
    u_lo: Option<T>,
    u_hi: Option<T>,
    big_m_x: T,
    big_m_y: T,
    n_bits: u32,
}

fn prepare<T: Field>(
    program: &MixedIntegerConicProgram<T>,
    tap: &TapChanger,
    u_var: VarId,
    config: &LinearizationConfig<T>,
) -> Result<Prepared<T>> {
    let u = program.var(u_var);
    let (u_lo, u_hi) = (u.lb.clone(), u.ub.clone());
    let (big_m_x, big_m_y) = match (&config.big_m, &u_lo, &u_hi) {
        (BigMMode::Tight, Some(lo), Some(hi)) => tight_big_m((lo.clone(), hi.clone()), tap)?,
        (BigMMode::Tight, _, _) => {
            return Err(Error::Encoding(format!(
                "variable {} needs finite bounds for a tight big-M",
                u.name
            )))
        }
        (BigMMode::Uniform(m), lo, hi) => {
            if *m <= T::zero() {
                return Err(Error::Encoding(format!("uniform big-M must be positive, got {m}")));
            }
            if let (Some(lo), Some(hi)) = (lo, hi) {
                let (mx, my) = tight_big_m((lo.clone(), hi.clone()), tap)?;
                if *m < mx || *m < my {
                    return Err(Error::Encoding(format!(
                        "uniform big-M {m} is below the valid value {my}"
                    )));
                }
            }
            (m.clone(), m.clone())
        }
    };
    Ok(Prepared {
        t_min: T::from_ratio(&tap.t_min),
        t_max: T::from_ratio(&tap.t_max),
        delta_t: T::from_ratio(&tap.delta_t()),
        u_lo,
        u_hi,
        big_m_x,
        big_m_y,
        n_bits: bit_length(tap.k_taps, config.bit_length),
    })
}

/// Adds bits, `x_n` and the rows linking them to `u`. Shared by the exact
/// and approximate encodings.
fn emit_bits_and_x<T: Field>(
    program: &mut MixedIntegerConicProgram<T>,
    transformer: usize,
    label: &str,
    tap: &TapChanger,
    u_var: VarId,
    prep: &Prepared<T>,
    rows: &mut EncodingRows,
) -> (Vec<VarId>, Vec<VarId>) {
    let el = Element::Transformer(transformer);
    let one = T::one();
    let bits: Vec<VarId> = (0..prep.n_bits)
        .map(|n| program.add_binary(format!("lambda[{label},{n}]"), el))
        .collect();
    let mx = prep.big_m_x.clone();
    let xs: Vec<VarId> = (0..prep.n_bits)
        .map(|n| program.add_var(format!("x[{label},{n}]"), Some(T::zero()), Some(mx.clone()), el))
        .collect();

    let limit: Vec<_> = bits.iter().enumerate().map(|(n, &b)| (b, pow2::<T>(n))).collect();
    rows.ineq.push(program.add_le(limit, T::from_int(tap.k_taps as i64), format!("taplimit[{label}]")));

    for (n, (&b, &x)) in bits.iter().zip(&xs).enumerate() {
        rows.ineq.push(program.add_le(
            vec![(x, one.clone()), (u_var, -one.clone())],
            T::zero(),
            format!("xlo[{label},{n}]"),
        ));
        rows.ineq.push(program.add_le(
            vec![(u_var, one.clone()), (x, -one.clone()), (b, mx.clone())],
            mx.clone(),
            format!("xhi[{label},{n}]"),
        ));
        rows.ineq.push(program.add_le(
            vec![(x, one.clone()), (b, -mx.clone())],
            T::zero(),
            format!("xon[{label},{n}]"),
        ));
    }
    program.add_tap_group(TapGroup { transformer, bits: bits.clone(), k_taps: tap.k_taps });
    (bits, xs)
}

/// Emits the exact encoding of `U_jt = t²·U` for one transformer, where
/// `u_var` is the downstream squared voltage. Returns the encoding with a
/// fresh `U_jt` variable.
pub fn encode_tap<T: Field>(
    program: &mut MixedIntegerConicProgram<T>,
    transformer: usize,
    label: &str,
    tap: &TapChanger,
    u_var: VarId,
    config: &LinearizationConfig<T>,
) -> Result<TapEncoding<T>> {
    let prep = prepare(program, tap, u_var, config)?;
    let mut rows = EncodingRows::default();
    let (bits, xs) = emit_bits_and_x(program, transformer, label, tap, u_var, &prep, &mut rows);
    let el = Element::Transformer(transformer);
    let one = T::one();
    let (t_min, t_max) = (prep.t_min.clone(), prep.t_max.clone());

    let mul = |a: &Option<T>, k: &T| a.as_ref().map(|v| v.clone() * k.clone());
    let m = program.add_var(
        format!("m[{label}]"),
        mul(&prep.u_lo, &t_min),
        mul(&prep.u_hi, &t_max),
        el,
    );
    let my = prep.big_m_y.clone();
    let ys: Vec<VarId> = (0..prep.n_bits)
        .map(|n| program.add_var(format!("y[{label},{n}]"), Some(T::zero()), Some(my.clone()), el))
        .collect();
    let ujt = program.add_var(
        format!("Ujt[{label}]"),
        mul(&prep.u_lo, &(t_min.clone() * t_min.clone())),
        mul(&prep.u_hi, &(t_max.clone() * t_max.clone())),
        el,
    );

    let mut m_row = vec![(m, one.clone()), (u_var, -t_min.clone())];
    m_row.extend(xs.iter().enumerate().map(|(n, &x)| (x, -(prep.delta_t.clone() * pow2(n)))));
    rows.eq.push(program.add_eq(m_row, T::zero(), format!("mdef[{label}]")));

    let mut ujt_row = vec![(ujt, one.clone()), (m, -t_min.clone())];
    ujt_row.extend(ys.iter().enumerate().map(|(n, &y)| (y, -(prep.delta_t.clone() * pow2(n)))));
    rows.eq.push(program.add_eq(ujt_row, T::zero(), format!("ujtdef[{label}]")));

    for (n, (&b, &y)) in bits.iter().zip(&ys).enumerate() {
        rows.ineq.push(program.add_le(
            vec![(y, one.clone()), (m, -one.clone())],
            T::zero(),
            format!("ylo[{label},{n}]"),
        ));
        rows.ineq.push(program.add_le(
            vec![(m, one.clone()), (y, -one.clone()), (b, my.clone())],
            my.clone(),
            format!("yhi[{label},{n}]"),
        ));
        rows.ineq.push(program.add_le(
            vec![(y, one.clone()), (b, -my.clone())],
            T::zero(),
            format!("yon[{label},{n}]"),
        ));
    }

    Ok(TapEncoding {
        transformer,
        label: label.to_string(),
        tap: tap.clone(),
        kind: EncodingKind::Exact,
        t_min: prep.t_min,
        t_max: prep.t_max,
        k_taps: tap.k_taps,
        delta_t: prep.delta_t,
        n_bits: prep.n_bits,
        u_var,
        bit_vars: bits,
        m_var: Some(m),
        x_vars: xs,
        y_vars: ys,
        ujt_var: ujt,
        big_m_x: prep.big_m_x,
        big_m_y: prep.big_m_y,
        rows,
    })
}

/// Emits the approximate baseline `U_jt = t_min²·U + c·Δt·T·U` with the
/// product `T·U` linearized through the same `x_n` rows.
pub fn encode_tap_approximate<T: Field>(
    program: &mut MixedIntegerConicProgram<T>,
    transformer: usize,
    label: &str,
    tap: &TapChanger,
    u_var: VarId,
    config: &LinearizationConfig<T>,
    variant: ApproxVariant,
) -> Result<TapEncoding<T>> {
    let prep = prepare(program, tap, u_var, config)?;
    let mut rows = EncodingRows::default();
    let (bits, xs) = emit_bits_and_x(program, transformer, label, tap, u_var, &prep, &mut rows);
    let el = Element::Transformer(transformer);
    let (t_min, t_max) = (prep.t_min.clone(), prep.t_max.clone());
    let slope = approx_slope(&t_min, variant);

    // Bounds of the approximate U_jt follow from T ∈ [0, K].
    let k = T::from_int(tap.k_taps as i64);
    let hi_factor = t_min.clone() * t_min.clone() + slope.clone() * prep.delta_t.clone() * k;
    let lo = prep.u_lo.as_ref().map(|v| v.clone() * t_min.clone() * t_min.clone());
    let hi = prep.u_hi.as_ref().map(|v| v.clone() * hi_factor.clone());
    let ujt = program.add_var(format!("Ujt[{label}]"), lo, hi, el);

    let mut row = vec![(ujt, T::one()), (u_var, -(t_min.clone() * t_min.clone()))];
    row.extend(
        xs.iter()
            .enumerate()
            .map(|(n, &x)| (x, -(slope.clone() * prep.delta_t.clone() * pow2(n)))),
    );
    rows.eq.push(program.add_eq(row, T::zero(), format!("ujtapprox[{label}]")));

    Ok(TapEncoding {
        transformer,
        label: label.to_string(),
        tap: tap.clone(),
        kind: EncodingKind::Approximate(variant),
        t_min,
        t_max,
        k_taps: tap.k_taps,
        delta_t: prep.delta_t,
        n_bits: prep.n_bits,
        u_var,
        bit_vars: bits,
        m_var: None,
        x_vars: xs,
        y_vars: Vec::new(),
        ujt_var: ujt,
        big_m_x: prep.big_m_x,
        big_m_y: prep.big_m_y,
        rows,
    })
}

fn approx_slope<T: Field>(t_min: &T, variant: ApproxVariant) -> T {
    match variant {
        ApproxVariant::FirstOrder => T::from_int(2) * t_min.clone(),
        ApproxVariant::Literal => T::from_int(2),
    }
}

/// `U_jt` of the approximate model at tap position `tap_pos`.
pub fn approximate_ujt<T: Field>(tap: &TapChanger, tap_pos: u32, u: T, variant: ApproxVariant) -> T {
    let t_min = T::from_ratio(&tap.t_min);
    let step = T::from_ratio(&(tap.delta_t() * Exact::from_integer(tap_pos as i64)));
    (t_min.clone() * t_min.clone() + approx_slope(&t_min, variant) * step) * u
}

/// `U_jt = t²·U` at tap position `tap_pos`.
pub fn exact_ujt<T: Field>(tap: &TapChanger, tap_pos: u32, u: T) -> Result<T> {
    let t = T::from_ratio(&tap.ratio(tap_pos)?);
    Ok(t.clone() * t * u)
}

impl<T: Field> TapEncoding<T> {
    /// Tap position and ratio for a bit pattern (least significant first).
    pub fn decode(&self, bits: &[u8]) -> Result<(u32, T)> {
        decode_tap(self, bits)
    }

    pub fn canonical_bits(&self, tap: u32) -> Vec<u8> {
        canonical_bits(tap, self.n_bits)
    }
}

/// Decodes a 0/1 pattern into `(T, t)`; fails when the pattern encodes a
/// value above `K`.
pub fn decode_tap<T: Field>(encoding: &TapEncoding<T>, bits: &[u8]) -> Result<(u32, T)> {
    if bits.len() != encoding.n_bits as usize {
        return Err(Error::Encoding(format!(
            "expected {} bits, got {}",
            encoding.n_bits,
            bits.len()
        )));
    }
    if bits.iter().any(|&b| b > 1) {
        return Err(Error::Encoding(format!("bit pattern {bits:?} is not 0/1")));
    }
    let value = bits_value(bits);
    if value > encoding.k_taps as u64 {
        return Err(Error::Encoding(format!(
            "bits encode tap {value} above K = {}",
            encoding.k_taps
        )));
    }
    let tap = value as u32;
    Ok((tap, T::from_ratio(&encoding.tap.ratio(tap)?)))
}

/// Lists every variable and row of one encoding for hand verification.
pub fn audit<T: Field>(program: &MixedIntegerConicProgram<T>, enc: &TapEncoding<T>) -> String {
    let mut out = String::new();
    let name = |v: VarId| program.var(v).name.clone();
    writeln!(out, "transformer {} ({:?})", enc.label, enc.kind).unwrap();
    writeln!(
        out,
        "  t in [{}, {}], K = {}, dt = {} ({}), bits = {}",
        enc.tap.t_min,
        enc.tap.t_max,
        enc.k_taps,
        enc.tap.delta_t(),
        enc.delta_t,
        enc.n_bits
    )
    .unwrap();
    writeln!(out, "  M_x = {}, M_y = {}", enc.big_m_x, enc.big_m_y).unwrap();
    writeln!(out, "  U = {}, U_jt = {}", name(enc.u_var), name(enc.ujt_var)).unwrap();
    writeln!(out, "variables:").unwrap();
    let mut vars: Vec<VarId> = enc.bit_vars.clone();
    vars.extend(enc.m_var);
    vars.extend(&enc.x_vars);
    vars.extend(&enc.y_vars);
    vars.push(enc.ujt_var);
    for v in vars {
        let var = program.var(v);
        let b = |x: &Option<T>| x.as_ref().map_or("free".into(), |x| x.to_string());
        writeln!(
            out,
            "  {} in [{}, {}]{}",
            var.name,
            b(&var.lb),
            b(&var.ub),
            if var.binary { " binary" } else { "" }
        )
        .unwrap();
    }
    let terms = |terms: &[(VarId, T)]| {
        terms
            .iter()
            .map(|(v, a)| format!("({a})*{}", name(*v)))
            .collect::<Vec<_>>()
            .join(" + ")
    };
    writeln!(out, "rows:").unwrap();
    for &k in &enc.rows.eq {
        let row = &program.eq_rows()[k];
        writeln!(out, "  {}: {} = {}", row.label, terms(&row.terms), row.rhs).unwrap();
    }
    for &k in &enc.rows.ineq {
        let row = &program.ineq_rows()[k];
        writeln!(out, "  {}: {} <= {}", row.label, terms(&row.terms), row.rhs).unwrap();
    }
    out
}

#[cfg(test)]
mod tests;
