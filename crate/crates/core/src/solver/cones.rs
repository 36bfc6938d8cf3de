//! Cone algebra for the interior-point method: membership, Jordan
//! products, Nesterov-Todd scaling and step lengths.

use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cone {
    /// `s = 0`; the dual variable is free.
    Zero(usize),
    NonNeg(usize),
    /// `{ s : s₀ ≥ ‖s₁..‖ }`
    SecondOrder(usize),
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Zero(n) | Cone::NonNeg(n) | Cone::SecondOrder(n) => n,
        }
    }

    fn degree(&self) -> usize {
        match *self {
            Cone::Zero(_) => 0,
            Cone::NonNeg(n) => n,
            Cone::SecondOrder(_) => 1,
        }
    }
}

/// A product of cones laid out contiguously.
#[derive(Clone, Debug, PartialEq)]
pub struct ConeSet {
    pub cones: Vec<Cone>,
    pub offsets: Vec<usize>,
    pub dim: usize,
}

impl ConeSet {
    pub fn new(cones: Vec<Cone>) -> Self {
        let mut offsets = Vec::with_capacity(cones.len());
        let mut dim = 0;
        for c in &cones {
            offsets.push(dim);
            dim += c.dim();
        }
        ConeSet { cones, offsets, dim }
    }

    pub fn degree(&self) -> usize {
        self.cones.iter().map(Cone::degree).sum()
    }

    pub fn blocks(&self) -> impl Iterator<Item = (Cone, std::ops::Range<usize>)> + '_ {
        self.cones.iter().zip(&self.offsets).map(|(c, &o)| (*c, o..o + c.dim()))
    }

    /// Rows that belong to a zero cone.
    pub fn zero_mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.dim];
        for (c, r) in self.blocks() {
            if let Cone::Zero(_) = c {
                m[r].iter_mut().for_each(|v| *v = true);
            }
        }
        m
    }

    /// Smallest "eigenvalue" of `s` over the non-zero cones.
    pub fn min_eig<T: Real>(&self, s: &[T]) -> T {
        let mut m = T::infinity();
        for (c, r) in self.blocks() {
            match c {
                Cone::Zero(_) => {}
                Cone::NonNeg(_) => {
                    for &v in &s[r] {
                        m = m.min(v);
                    }
                }
                Cone::SecondOrder(_) => {
                    let v = &s[r];
                    m = m.min(v[0] - norm(&v[1..]));
                }
            }
        }
        m
    }

    /// Adds `alpha·e` (the cone identity) to every non-zero block.
    pub fn add_identity<T: Real>(&self, s: &mut [T], alpha: T) {
        for (c, r) in self.blocks() {
            match c {
                Cone::Zero(_) => {}
                Cone::NonNeg(_) => s[r].iter_mut().for_each(|v| *v += alpha),
                Cone::SecondOrder(_) => s[r.start] += alpha,
            }
        }
    }

    /// Projects onto the cone (zero blocks map to zero).
    pub fn project<T: Real>(&self, v: &mut [T]) {
        for (c, r) in self.blocks() {
            match c {
                Cone::Zero(_) => v[r].iter_mut().for_each(|x| *x = T::zero()),
                Cone::NonNeg(_) => v[r].iter_mut().for_each(|x| *x = x.max(T::zero())),
                Cone::SecondOrder(_) => project_soc(&mut v[r]),
            }
        }
    }

    /// Projects onto the dual cone (zero blocks are unconstrained).
    pub fn project_dual<T: Real>(&self, v: &mut [T]) {
        for (c, r) in self.blocks() {
            match c {
                Cone::Zero(_) => {}
                Cone::NonNeg(_) => v[r].iter_mut().for_each(|x| *x = x.max(T::zero())),
                Cone::SecondOrder(_) => project_soc(&mut v[r]),
            }
        }
    }

    /// Largest `α ≤ cap` keeping `s + α·ds` in the cone.
    pub fn step_length<T: Real>(&self, s: &[T], ds: &[T], cap: T) -> T {
        let mut alpha = cap;
        for (c, r) in self.blocks() {
            match c {
                Cone::Zero(_) => {}
                Cone::NonNeg(_) => {
                    for (&v, &d) in s[r.clone()].iter().zip(&ds[r]) {
                        if d < T::zero() {
                            alpha = alpha.min(-v / d);
                        }
                    }
                }
                Cone::SecondOrder(_) => alpha = alpha.min(soc_step(&s[r.clone()], &ds[r])),
            }
        }
        alpha
    }

    /// Jordan product `u ∘ v` per block (zero blocks give zero).
    pub fn circ<T: Real>(&self, u: &[T], v: &[T], out: &mut [T]) {
        for (c, r) in self.blocks() {
            match c {
                Cone::Zero(_) => out[r].iter_mut().for_each(|x| *x = T::zero()),
                Cone::NonNeg(_) => {
                    for i in r {
                        out[i] = u[i] * v[i];
                    }
                }
                Cone::SecondOrder(_) => {
                    let (u, v) = (&u[r.clone()], &v[r.clone()]);
                    let o = &mut out[r];
                    o[0] = u.iter().zip(v).map(|(a, b)| *a * *b).sum();
                    for i in 1..u.len() {
                        o[i] = u[0] * v[i] + v[0] * u[i];
                    }
                }
            }
        }
    }

    /// Solves `λ ∘ x = d` per block (zero blocks give zero).
    pub fn inv_circ<T: Real>(&self, lambda: &[T], d: &[T], out: &mut [T]) {
        for (c, r) in self.blocks() {
            match c {
                Cone::Zero(_) => out[r].iter_mut().for_each(|x| *x = T::zero()),
                Cone::NonNeg(_) => {
                    for i in r {
                        out[i] = d[i] / lambda[i];
                    }
                }
                Cone::SecondOrder(_) => {
                    let (l, d) = (&lambda[r.clone()], &d[r.clone()]);
                    let o = &mut out[r];
                    let rho = l[0] * l[0] - l[1..].iter().map(|x| *x * *x).sum::<T>();
                    let tail: T = l[1..].iter().zip(&d[1..]).map(|(a, b)| *a * *b).sum();
                    o[0] = (l[0] * d[0] - tail) / rho;
                    for i in 1..l.len() {
                        o[i] = (d[i] - o[0] * l[i]) / l[0];
                    }
                }
            }
        }
    }
}

pub fn norm<T: Real>(v: &[T]) -> T {
    v.iter().map(|x| *x * *x).sum::<T>().sqrt()
}

fn project_soc<T: Real>(v: &mut [T]) {
    let t = v[0];
    let nx = norm(&v[1..]);
    if nx <= t {
        return;
    }
    if nx <= -t {
        v.iter_mut().for_each(|x| *x = T::zero());
        return;
    }
    let a = (t + nx) / T::lit(2.0);
    v[0] = a;
    for x in &mut v[1..] {
        *x = *x * a / nx;
    }
}

/// Largest `α ≥ 0` with `u + α·d` in the second-order cone, for `u` in its
/// interior.
fn soc_step<T: Real>(u: &[T], d: &[T]) -> T {
    let two = T::lit(2.0);
    let mut alpha = T::infinity();
    if d[0] < T::zero() {
        alpha = -u[0] / d[0];
    }
    let a = d[0] * d[0] - d[1..].iter().map(|x| *x * *x).sum::<T>();
    let b = two * (u[0] * d[0] - u[1..].iter().zip(&d[1..]).map(|(p, q)| *p * *q).sum::<T>());
    let c = (u[0] * u[0] - u[1..].iter().map(|x| *x * *x).sum::<T>()).max(T::zero());
    let root = if a == T::zero() {
        if b < T::zero() {
            -c / b
        } else {
            T::infinity()
        }
    } else {
        let disc = b * b - T::lit(4.0) * a * c;
        if disc < T::zero() {
            T::infinity()
        } else {
            let sq = disc.sqrt();
            let q = if b >= T::zero() { -(b + sq) / two } else { -(b - sq) / two };
            let mut best = T::infinity();
            for r in [q / a, if q != T::zero() { c / q } else { T::infinity() }] {
                if r >= T::zero() && r < best {
                    best = r;
                }
            }
            best
        }
    };
    alpha.min(root)
}

/// Nesterov-Todd scaling `W` with `W·z = W⁻¹·s = λ`.
#[derive(Clone, Debug)]
pub struct NtScaling<T> {
    blocks: Vec<BlockScaling<T>>,
    pub lambda: Vec<T>,
}

#[derive(Clone, Debug)]
enum BlockScaling<T> {
    Zero,
    NonNeg(Vec<T>),
    Soc { eta: T, w: Vec<T> },
}

impl<T: Real> NtScaling<T> {
    pub fn compute(cones: &ConeSet, s: &[T], z: &[T]) -> Self {
        let mut blocks = Vec::with_capacity(cones.cones.len());
        let mut lambda = vec![T::zero(); cones.dim];
        for (c, r) in cones.blocks() {
            match c {
                Cone::Zero(_) => blocks.push(BlockScaling::Zero),
                Cone::NonNeg(_) => {
                    let mut w = Vec::with_capacity(r.len());
                    for i in r {
                        w.push((s[i] / z[i]).sqrt());
                        lambda[i] = (s[i] * z[i]).sqrt();
                    }
                    blocks.push(BlockScaling::NonNeg(w));
                }
                Cone::SecondOrder(_) => {
                    let (sb, zb) = (&s[r.clone()], &z[r.clone()]);
                    let sj = jnorm(sb);
                    let zj = jnorm(zb);
                    let sbar: Vec<T> = sb.iter().map(|v| *v / sj).collect();
                    let zbar: Vec<T> = zb.iter().map(|v| *v / zj).collect();
                    let dotp: T = sbar.iter().zip(&zbar).map(|(a, b)| *a * *b).sum();
                    let gamma = ((T::one() + dotp) / T::lit(2.0)).sqrt();
                    let mut w: Vec<T> = Vec::with_capacity(r.len());
                    w.push((sbar[0] + zbar[0]) / (T::lit(2.0) * gamma));
                    for i in 1..sbar.len() {
                        w.push((sbar[i] - zbar[i]) / (T::lit(2.0) * gamma));
                    }
                    let eta = (sj / zj).sqrt();
                    let block = BlockScaling::Soc { eta, w };
                    let mut lz = vec![T::zero(); r.len()];
                    apply_block(&block, zb, &mut lz, false);
                    lambda[r].copy_from_slice(&lz);
                    blocks.push(block);
                }
            }
        }
        NtScaling { blocks, lambda }
    }

    /// `out = W·v` (or `W⁻¹·v` when `inverse`).
    pub fn apply(&self, cones: &ConeSet, v: &[T], out: &mut [T], inverse: bool) {
        for (b, (_, r)) in self.blocks.iter().zip(cones.blocks()) {
            apply_block(b, &v[r.clone()], &mut out[r], inverse);
        }
    }

    /// Upper triangle of `W²` per block as `(row, col, value)` with block
    /// relative indices, in a fixed order matching [`Self::h_pattern`].
    pub fn h_values(&self, cones: &ConeSet, out: &mut Vec<T>) {
        out.clear();
        for (b, (c, r)) in self.blocks.iter().zip(cones.blocks()) {
            match (b, c) {
                (BlockScaling::Zero, _) => out.extend(r.map(|_| T::zero())),
                (BlockScaling::NonNeg(w), _) => out.extend(w.iter().map(|w| *w * *w)),
                (BlockScaling::Soc { eta, w }, _) => {
                    let e2 = *eta * *eta;
                    let n = w.len();
                    for col in 0..n {
                        for row in 0..=col {
                            let v = if row == 0 && col == 0 {
                                T::lit(2.0) * w[0] * w[0] - T::one()
                            } else if row == 0 {
                                T::lit(2.0) * w[0] * w[col]
                            } else {
                                let id = if row == col { T::one() } else { T::zero() };
                                id + T::lit(2.0) * w[row] * w[col]
                            };
                            out.push(e2 * v);
                        }
                    }
                }
            }
        }
    }
}

/// Pattern of `W²` upper triangles matching [`NtScaling::h_values`].
pub fn h_pattern(cones: &ConeSet) -> Vec<(usize, usize)> {
    let mut pat = Vec::new();
    for (c, r) in cones.blocks() {
        match c {
            Cone::Zero(_) | Cone::NonNeg(_) => pat.extend(r.map(|i| (i, i))),
            Cone::SecondOrder(n) => {
                for col in 0..n {
                    for row in 0..=col {
                        pat.push((r.start + row, r.start + col));
                    }
                }
            }
        }
    }
    pat
}

fn jnorm<T: Real>(v: &[T]) -> T {
    (v[0] * v[0] - v[1..].iter().map(|x| *x * *x).sum::<T>()).max(T::min_positive_value()).sqrt()
}

fn apply_block<T: Real>(b: &BlockScaling<T>, v: &[T], out: &mut [T], inverse: bool) {
    match b {
        BlockScaling::Zero => out.iter_mut().for_each(|x| *x = T::zero()),
        BlockScaling::NonNeg(w) => {
            for i in 0..v.len() {
                out[i] = if inverse { v[i] / w[i] } else { v[i] * w[i] };
            }
        }
        BlockScaling::Soc { eta, w } => {
            let sgn = if inverse { -T::one() } else { T::one() };
            let tail: T = w[1..].iter().zip(&v[1..]).map(|(a, b)| *a * *b).sum();
            let scale = if inverse { T::one() / *eta } else { *eta };
            out[0] = scale * (w[0] * v[0] + sgn * tail);
            let coef = sgn * v[0] + tail / (T::one() + w[0]);
            for i in 1..v.len() {
                out[i] = scale * (v[i] + coef * w[i]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn interior(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        v[0] = norm(&v[1..]) + rng.gen_range(0.05..2.0);
        v
    }

    #[test]
    fn nt_scaling_maps_s_and_z_to_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cones = ConeSet::new(vec![Cone::Zero(1), Cone::NonNeg(2), Cone::SecondOrder(4), Cone::SecondOrder(3)]);
        for _ in 0..50 {
            let mut s = vec![0.0];
            let mut z = vec![rng.gen_range(-1.0..1.0)];
            s.extend([rng.gen_range(0.1..2.0), rng.gen_range(0.1..2.0)]);
            z.extend([rng.gen_range(0.1..2.0), rng.gen_range(0.1..2.0)]);
            s.extend(interior(&mut rng, 4));
            z.extend(interior(&mut rng, 4));
            s.extend(interior(&mut rng, 3));
            z.extend(interior(&mut rng, 3));
            let w = NtScaling::compute(&cones, &s, &z);
            let mut wz = vec![0.0; cones.dim];
            let mut wis = vec![0.0; cones.dim];
            w.apply(&cones, &z, &mut wz, false);
            w.apply(&cones, &s, &mut wis, true);
            for i in 1..cones.dim {
                assert!((wz[i] - w.lambda[i]).abs() < 1e-10);
                assert!((wis[i] - w.lambda[i]).abs() < 1e-10);
            }
            // W² from h_values agrees with applying W twice.
            let mut h = Vec::new();
            w.h_values(&cones, &mut h);
            let pat = h_pattern(&cones);
            let v: Vec<f64> = (0..cones.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut hv = vec![0.0; cones.dim];
            for (&(r, c), &x) in pat.iter().zip(&h) {
                hv[r] += x * v[c];
                if r != c {
                    hv[c] += x * v[r];
                }
            }
            let mut t = vec![0.0; cones.dim];
            let mut ww = vec![0.0; cones.dim];
            w.apply(&cones, &v, &mut t, false);
            w.apply(&cones, &t, &mut ww, false);
            for i in 1..cones.dim {
                assert!((hv[i] - ww[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn jordan_inverse_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cones = ConeSet::new(vec![Cone::NonNeg(3), Cone::SecondOrder(5)]);
        for _ in 0..50 {
            let mut l: Vec<f64> = (0..3).map(|_| rng.gen_range(0.1..2.0)).collect();
            l.extend(interior(&mut rng, 5));
            let d: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut x = vec![0.0; 8];
            cones.inv_circ(&l, &d, &mut x);
            let mut back = vec![0.0; 8];
            cones.circ(&l, &x, &mut back);
            for i in 0..8 {
                assert!((back[i] - d[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn step_length_lands_on_boundary() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cones = ConeSet::new(vec![Cone::SecondOrder(4)]);
        for _ in 0..100 {
            let u = interior(&mut rng, 4);
            let d: Vec<f64> = (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let a = cones.step_length(&u, &d, 1e6);
            let at: Vec<f64> = u.iter().zip(&d).map(|(p, q)| p + a * q).collect();
            if a < 1e6 {
                assert!(cones.min_eig(&at).abs() < 1e-8, "{}", cones.min_eig(&at));
            }
            let inside: Vec<f64> = u.iter().zip(&d).map(|(p, q)| p + 0.99 * a.min(1e3) * q).collect();
            assert!(cones.min_eig(&inside) > -1e-12);
        }
    }

    #[test]
    fn projections() {
        let cones = ConeSet::new(vec![Cone::Zero(1), Cone::NonNeg(2), Cone::SecondOrder(3)]);
        let mut v = vec![5.0, -1.0, 2.0, 0.0, 3.0, 4.0];
        cones.project(&mut v);
        assert_eq!(v, vec![0.0, 0.0, 2.0, 2.5, 1.5, 2.0]);
        let mut w = vec![5.0, -1.0, 2.0, -6.0, 3.0, 4.0];
        cones.project_dual(&mut w);
        assert_eq!(w, vec![5.0, 0.0, 2.0, 0.0, 0.0, 0.0]);
    }
}
