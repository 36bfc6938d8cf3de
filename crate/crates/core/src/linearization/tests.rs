use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;

use super::*;
use crate::model::MixedIntegerConicProgram;

type Q = BigRational;

fn q(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

fn tap(k: u32) -> TapChanger {
    TapChanger::new(Exact::new(19, 20), Exact::new(21, 20), k).unwrap()
}

/// Program with a single bounded voltage variable U ∈ [0.95², 1.05²].
fn base_program() -> (MixedIntegerConicProgram<Q>, VarId) {
    let mut p = MixedIntegerConicProgram::new();
    let u = p.add_var("U", Some(q(9025, 10000)), Some(q(11025, 10000)), Element::Bus(1));
    (p, u)
}

/// Interval bound propagation over all linear rows. Returns `None` when
/// the rows are infeasible, otherwise the tightened box. Independent of
/// the encoder: it only sees generic rows and bounds.
fn propagate(p: &MixedIntegerConicProgram<Q>) -> Option<Vec<(Q, Q)>> {
    let mut bx: Vec<(Q, Q)> = p
        .variables()
        .iter()
        .map(|v| (v.lb.clone().expect("bounded"), v.ub.clone().expect("bounded")))
        .collect();
    let mut rows: Vec<(Vec<(VarId, Q)>, Q)> = Vec::new();
    for r in p.ineq_rows() {
        rows.push((r.terms.clone(), r.rhs.clone()));
    }
    for r in p.eq_rows() {
        rows.push((r.terms.clone(), r.rhs.clone()));
        rows.push((r.terms.iter().map(|(v, a)| (*v, -a.clone())).collect(), -r.rhs.clone()));
    }
    let zero = Q::from_integer(BigInt::from(0));
    for _ in 0..50 {
        let mut changed = false;
        for (terms, rhs) in &rows {
            let lo_of = |v: VarId, a: &Q, bx: &[(Q, Q)]| {
                if *a >= zero {
                    a.clone() * bx[v.0].0.clone()
                } else {
                    a.clone() * bx[v.0].1.clone()
                }
            };
            let total_min: Q = terms.iter().fold(zero.clone(), |acc, (v, a)| acc + lo_of(*v, a, &bx));
            if total_min > *rhs {
                return None;
            }
            for (v, a) in terms {
                if *a == zero {
                    continue;
                }
                let others = total_min.clone() - lo_of(*v, a, &bx);
                let limit = (rhs.clone() - others) / a.clone();
                let entry = &mut bx[v.0];
                if *a > zero && limit < entry.1 {
                    entry.1 = limit;
                    changed = true;
                } else if *a < zero && limit > entry.0 {
                    entry.0 = limit;
                    changed = true;
                }
                if entry.0 > entry.1 {
                    return None;
                }
            }
        }
        if !changed {
            break;
        }
    }
    Some(bx)
}

fn fix_pattern(p: &mut MixedIntegerConicProgram<Q>, enc: &TapEncoding<Q>, bits: &[u8], u: &Q) {
    for (&v, &b) in enc.bit_vars.iter().zip(bits) {
        p.fix(v, Q::from_integer(BigInt::from(b)));
    }
    p.fix(enc.u_var, u.clone());
}

fn exact_ratio(tc: &TapChanger, t: u32) -> Q {
    Q::from_ratio(&tc.ratio(t).unwrap())
}

#[test]
fn bit_length_examples() {
    assert_eq!(bit_length(1, BitLengthMode::Minimal), 1);
    assert_eq!(bit_length(20, BitLengthMode::Minimal), 5);
    assert_eq!(bit_length(5, BitLengthMode::Minimal), 3);
    assert_eq!(bit_length(10, BitLengthMode::Minimal), 4);
    assert_eq!(bit_length(100, BitLengthMode::Minimal), 7);
    assert_eq!(bit_length(200, BitLengthMode::Minimal), 8);
    assert_eq!(bit_length(20, BitLengthMode::Extended), 6);
    for k in 1..=1000u32 {
        let b = bit_length(k, BitLengthMode::Minimal);
        assert!((1u64 << b) - 1 >= k as u64);
        assert!((1u64 << (b - 1)) - 1 < k as u64);
    }
}

#[test]
fn emitted_row_and_variable_counts() {
    let (mut p, u) = base_program();
    let enc = encode_tap(&mut p, 0, "1-2", &tap(20), u, &LinearizationConfig::default()).unwrap();
    assert_eq!(enc.n_bits, 5);
    assert_eq!(enc.rows.eq.len(), 2);
    assert_eq!(enc.rows.ineq.len(), 1 + 6 * 5);
    // U + 5 bits + 5 x + m + 5 y + U_jt
    assert_eq!(p.num_vars(), 1 + 5 + 5 + 1 + 5 + 1);
    assert_eq!(p.num_binaries(), 5);
    assert_eq!(p.tap_groups().len(), 1);
    p.validate().unwrap();
}

#[test]
fn zero_bits_give_minimum_ratio() {
    let tc = tap(20);
    let (mut p, u) = base_program();
    let enc = encode_tap(&mut p, 0, "t", &tc, u, &LinearizationConfig::default()).unwrap();
    fix_pattern(&mut p, &enc, &[0; 5], &q(1, 1));
    let bx = propagate(&p).unwrap();
    let m = &bx[enc.m_var.unwrap().0];
    assert_eq!(m.0, q(19, 20));
    assert_eq!(m.1, q(19, 20));
    assert_eq!(bx[enc.ujt_var.0], (q(361, 400), q(361, 400)));
}

#[test]
fn mid_tap_is_unity_ratio() {
    let tc = tap(20);
    let (mut p, u) = base_program();
    let enc = encode_tap(&mut p, 0, "t", &tc, u, &LinearizationConfig::default()).unwrap();
    fix_pattern(&mut p, &enc, &canonical_bits(10, 5), &q(1, 1));
    let bx = propagate(&p).unwrap();
    assert_eq!(bx[enc.ujt_var.0], (q(1, 1), q(1, 1)));
}

#[test]
fn top_tap_at_upper_voltage() {
    let tc = tap(20);
    let (mut p, u) = base_program();
    let enc = encode_tap(&mut p, 0, "t", &tc, u, &LinearizationConfig::default()).unwrap();
    fix_pattern(&mut p, &enc, &canonical_bits(20, 5), &q(11025, 10000));
    let bx = propagate(&p).unwrap();
    // 1.05² · 1.1025 = 1.21550625
    assert_eq!(bx[enc.ujt_var.0].0, q(121550625, 100000000));
    assert_eq!(bx[enc.ujt_var.0].1, q(121550625, 100000000));
    let f = 1.05f64 * 1.05 * 1.1025;
    assert!((f - 1.2155).abs() < 1e-4);
}

/// Every bit pattern, every grid voltage: feasible patterns have a unique
/// completion with `U_jt = t²·U`; patterns above K are infeasible.
fn exhaustive_exactness(k: u32, mode: BitLengthMode, big_m: BigMMode<Q>) {
    let tc = tap(k);
    let config = LinearizationConfig { big_m, bit_length: mode };
    let n_bits = bit_length(k, mode);
    let grid: Vec<Q> = (0..=4).map(|i| q(9025, 10000) + q(2000 * i, 4 * 10000)).collect();
    for pattern in 0u32..(1 << n_bits) {
        let bits = canonical_bits(pattern, n_bits);
        for u in &grid {
            let (mut p, uv) = base_program();
            let enc = encode_tap(&mut p, 0, "t", &tc, uv, &config).unwrap();
            fix_pattern(&mut p, &enc, &bits, u);
            let result = propagate(&p);
            if pattern > k {
                assert!(result.is_none(), "pattern {pattern} > K must be infeasible");
                continue;
            }
            let bx = result.expect("feasible pattern");
            for (k, (lo, hi)) in bx.iter().enumerate() {
                assert_eq!(lo, hi, "variable {} not pinned", p.variables()[k].name);
            }
            let t = exact_ratio(&tc, pattern);
            assert_eq!(bx[enc.ujt_var.0].0, t.clone() * t * u.clone());
            // the pinned point satisfies every row
            let x: Vec<Q> = bx.iter().map(|b| b.0.clone()).collect();
            for r in p.eq_rows() {
                assert_eq!(r.lhs(&x), r.rhs);
            }
            for r in p.ineq_rows() {
                assert!(r.lhs(&x) <= r.rhs);
            }
        }
    }
}

#[test]
fn exactness_k5_minimal_tight() {
    exhaustive_exactness(5, BitLengthMode::Minimal, BigMMode::Tight);
}

#[test]
fn exactness_k20_minimal_tight() {
    exhaustive_exactness(20, BitLengthMode::Minimal, BigMMode::Tight);
}

#[test]
fn exactness_k10_literal_uniform() {
    exhaustive_exactness(10, BitLengthMode::Extended, BigMMode::Uniform(q(10, 1)));
}

#[test]
fn decode_examples() {
    let (mut p, u) = base_program();
    let enc = encode_tap(&mut p, 0, "t", &tap(20), u, &LinearizationConfig::default()).unwrap();
    assert_eq!(enc.decode(&[0, 0, 0, 0, 0]).unwrap(), (0, q(19, 20)));
    assert_eq!(enc.decode(&canonical_bits(20, 5)).unwrap(), (20, q(21, 20)));
    assert!(matches!(enc.decode(&canonical_bits(25, 5)), Err(Error::Encoding(_))));
    assert!(enc.decode(&[0, 1]).is_err());
    assert!(enc.decode(&[0, 2, 0, 0, 0]).is_err());
}

#[test]
fn coverage_and_monotone_decode() {
    for k in [1u32, 5, 7, 8, 10, 20, 100] {
        let (mut p, u) = base_program();
        let tc = tap(k);
        let enc = encode_tap(&mut p, 0, "t", &tc, u, &LinearizationConfig::default()).unwrap();
        let mut seen = Vec::new();
        for pattern in 0u32..(1 << enc.n_bits) {
            if let Ok((t, ratio)) = enc.decode(&canonical_bits(pattern, enc.n_bits)) {
                assert_eq!(t, pattern);
                seen.push(ratio);
            }
        }
        let expected: Vec<Q> = (0..=k).map(|t| exact_ratio(&tc, t)).collect();
        assert_eq!(seen, expected);
        assert!(seen.windows(2).all(|w| w[0] < w[1]));
    }
}

#[test]
fn tight_big_m_values() {
    let tc = tap(20);
    let (mx, my) = tight_big_m((q(9025, 10000), q(11025, 10000)), &tc).unwrap();
    assert_eq!(mx, q(11025, 10000));
    assert_eq!(my, q(1157625, 1000000));
    assert!(tight_big_m((q(0, 1), q(0, 1)), &tc).is_err());
}

#[test]
fn uniform_big_m() {
    let (mut p, u) = base_program();
    let cfg = LinearizationConfig { big_m: BigMMode::Uniform(q(10, 1)), ..Default::default() };
    let enc = encode_tap(&mut p, 0, "t", &tap(5), u, &cfg).unwrap();
    assert_eq!((enc.big_m_x.clone(), enc.big_m_y.clone()), (q(10, 1), q(10, 1)));

    let (mut p, u) = base_program();
    let cfg = LinearizationConfig { big_m: BigMMode::Uniform(q(1, 1)), ..Default::default() };
    assert!(encode_tap(&mut p, 0, "t", &tap(5), u, &cfg).is_err());
}

#[test]
fn unbounded_voltage_rejected_in_tight_mode() {
    let mut p = MixedIntegerConicProgram::<f64>::new();
    let u = p.add_var("U", Some(0.0), None, Element::None);
    let err = encode_tap(&mut p, 0, "t", &tap(5), u, &LinearizationConfig::default());
    assert!(matches!(err, Err(Error::Encoding(_))));
}

#[test]
fn approximate_examples() {
    let tc = tap(20);
    let one = q(1, 1);
    for variant in [ApproxVariant::FirstOrder, ApproxVariant::Literal] {
        assert_eq!(approximate_ujt(&tc, 0, one.clone(), variant), q(9025, 10000));
    }
    // literal coefficient: 0.9025 + 2·10·0.005 = 1.0025, exact 1.0
    assert_eq!(approximate_ujt(&tc, 10, one.clone(), ApproxVariant::Literal), q(10025, 10000));
    assert_eq!(approximate_ujt(&tc, 20, one.clone(), ApproxVariant::Literal), q(11025, 10000));
    // first order: 0.9025 + 2·0.95·0.05 = 0.9975, gap (0.05)² = 0.0025
    assert_eq!(approximate_ujt(&tc, 10, one.clone(), ApproxVariant::FirstOrder), q(9975, 10000));
    assert_eq!(exact_ujt(&tc, 10, one).unwrap(), q(1, 1));
}

#[test]
fn approximate_rows_match_formula() {
    let tc = tap(20);
    for variant in [ApproxVariant::FirstOrder, ApproxVariant::Literal] {
        for t in [0u32, 3, 10, 17, 20] {
            let (mut p, u) = base_program();
            let cfg = LinearizationConfig::default();
            let enc = encode_tap_approximate(&mut p, 0, "t", &tc, u, &cfg, variant).unwrap();
            let uval = q(1, 1);
            fix_pattern(&mut p, &enc, &canonical_bits(t, 5), &uval);
            let bx = propagate(&p).unwrap();
            let expected = approximate_ujt(&tc, t, uval, variant);
            assert_eq!(bx[enc.ujt_var.0], (expected.clone(), expected));
        }
    }
}

#[test]
fn audit_lists_all_rows() {
    let (mut p, u) = base_program();
    let enc = encode_tap(&mut p, 0, "1-2", &tap(5), u, &LinearizationConfig::default()).unwrap();
    let text = audit(&p, &enc);
    assert!(text.contains("taplimit[1-2]"));
    assert!(text.contains("mdef[1-2]"));
    assert!(text.contains("ujtdef[1-2]"));
    assert_eq!(text.matches("yhi[").count(), 3);
}

proptest! {
    #[test]
    fn first_order_gap_identity(k in 1u32..=200, pos_frac in 0.0f64..=1.0, u in 0.8f64..1.2) {
        let tc = tap(k);
        let t = ((k as f64) * pos_frac).round() as u32;
        let exact = exact_ujt(&tc, t, u).unwrap();
        let approx = approximate_ujt(&tc, t, u, ApproxVariant::FirstOrder);
        let step = f64::from_ratio(&(tc.delta_t() * Exact::from_integer(t as i64)));
        prop_assert!(((exact - approx) - step * step * u).abs() <= 1e-12);
    }

    #[test]
    fn literal_gap_identity(k in 1u32..=200, pos_frac in 0.0f64..=1.0, u in 0.8f64..1.2) {
        let tc = tap(k);
        let t = ((k as f64) * pos_frac).round() as u32;
        let exact = exact_ujt(&tc, t, u).unwrap();
        let approx = approximate_ujt(&tc, t, u, ApproxVariant::Literal);
        let step = f64::from_ratio(&(tc.delta_t() * Exact::from_integer(t as i64)));
        let gap = 2.0 * step * u * (0.95 - 1.0) + step * step * u;
        prop_assert!(((exact - approx) - gap).abs() <= 1e-12);
    }

    #[test]
    fn random_exactness(k in 1u32..=40, pos_frac in 0.0f64..=1.0, ui in 0i64..=20) {
        let tc = tap(k);
        let t = ((k as f64) * pos_frac).round() as u32;
        let (mut p, uv) = base_program();
        let enc = encode_tap(&mut p, 0, "t", &tc, uv, &LinearizationConfig::default()).unwrap();
        let u = q(9025, 10000) + q(2000 * ui, 20 * 10000);
        fix_pattern(&mut p, &enc, &enc.canonical_bits(t), &u);
        let bx = propagate(&p).unwrap();
        let r = exact_ratio(&tc, t);
        prop_assert_eq!(bx[enc.ujt_var.0].0.clone(), r.clone() * r.clone() * u.clone());
        prop_assert_eq!(bx[enc.ujt_var.0].1.clone(), r.clone() * r * u);
    }
}
