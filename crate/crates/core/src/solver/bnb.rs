//! Branch-and-bound over the binary variables of a mixed-integer conic
//! program.
//!
//! Nodes are explored depth-first until the first incumbent exists and
//! best-bound first afterwards. Every solved relaxation feeds a rounding
//! heuristic that rounds each tap group's fractional value
//! `Σ 2ⁿ·λₙ` to the nearest admissible integer and solves the resulting
//! fixed-binary problem (memoized per assignment). With more than one
//! thread, batches of nodes are solved concurrently and their results are
//! processed in the order they were taken from the queue, so runs are
//! reproducible for a given thread count.
//!
//! The interior-point relaxations land in the middle of a degenerate face
//! where every bit of a tap group is equally fractional, and branching on
//! a low bit only splits the taps by parity without moving the bound. The
//! branching rule is therefore applied to [`canonical_relaxed_bits`], which
//! carries each group's fractional tap value on its highest free bits; the
//! raw point is used only when that representation is already integral.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use rayon::prelude::*;

use super::{solve_socp_with_bounds, Certificate, SocpResult, SocpStatus, SolverSettings};
use crate::error::{Error, Result};
use crate::model::{MixedIntegerConicProgram, VarId};
use crate::scalar::Real;

const INT_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnbStatus {
    Optimal,
    Infeasible,
    NodeLimit,
    /// Relaxations failed and no incumbent was found.
    SolverFailure,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BnbResult<T> {
    pub status: BnbStatus,
    /// Incumbent values of every program variable (empty without one).
    pub x: Vec<T>,
    pub objective: T,
    pub best_bound: T,
    /// `(objective − best_bound) / max(|objective|, 1e-12)`.
    pub gap: T,
    pub root_bound: T,
    pub nodes: usize,
    pub relaxations: usize,
    pub failed_relaxations: usize,
    pub incumbent_updates: usize,
    /// Root infeasibility certificate, when the relaxation is infeasible.
    pub certificate: Option<Certificate<T>>,
}

#[derive(Clone, Debug)]
struct Node<T> {
    fixings: Vec<(usize, bool)>,
    bound: T,
    seq: u64,
}

struct Queued<T>(Node<T>);

impl<T: Real> PartialEq for Queued<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<T: Real> Eq for Queued<T> {}
impl<T: Real> PartialOrd for Queued<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Real> Ord for Queued<T> {
    // BinaryHeap is a max-heap: smallest bound, then oldest, comes first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.bound.partial_cmp(&self.0.bound).unwrap_or(Ordering::Equal).then(other.0.seq.cmp(&self.0.seq))
    }
}

/// Picks the most fractional free binary. Ties go to the bit with the
/// larger weight `2ⁿ` in its tap group, then to the earlier tap group,
/// then to the lower variable index.
pub fn branching_rule<T: Real>(
    program: &MixedIntegerConicProgram<T>,
    x: &[T],
    bounds: &[(Option<T>, Option<T>)],
) -> Option<VarId> {
    let mut meta: HashMap<usize, (usize, usize)> = HashMap::new();
    for (g, group) in program.tap_groups().iter().enumerate() {
        for (n, v) in group.bits.iter().enumerate() {
            meta.insert(v.0, (g, n));
        }
    }
    let int_tol = T::lit(INT_TOL);
    let mut best: Option<(T, usize, usize, usize)> = None;
    for v in program.binaries() {
        let (lb, ub) = bounds[v.0];
        if lb.is_some() && lb == ub {
            continue;
        }
        let val = x[v.0];
        let frac = (val - val.floor()).min(val.ceil() - val);
        if frac <= int_tol {
            continue;
        }
        let (g, n) = meta.get(&v.0).copied().unwrap_or((usize::MAX, 0));
        let better = match best {
            None => true,
            Some((bf, bn, bg, bv)) => {
                if (frac - bf).abs() > T::lit(1e-9) {
                    frac > bf
                } else if n != bn {
                    n > bn
                } else if g != bg {
                    g < bg
                } else {
                    v.0 < bv
                }
            }
        };
        if better {
            best = Some((frac, n, g, v.0));
        }
    }
    best.map(|b| VarId(b.3))
}

/// Rewrites each tap group's free bits as the representation of the same
/// fractional tap value that fills the highest free bit first. Fixed bits
/// and binaries outside tap groups are left alone.
pub fn canonical_relaxed_bits<T: Real>(
    program: &MixedIntegerConicProgram<T>,
    x: &[T],
    bounds: &[(Option<T>, Option<T>)],
) -> Vec<T> {
    let mut out = x.to_vec();
    for group in program.tap_groups() {
        let weight = |n: usize| T::from_u64(1 << n).unwrap();
        let fixed = |v: &VarId| {
            let (lb, ub) = bounds[v.0];
            lb.is_some() && lb == ub
        };
        let mut rest = T::zero();
        for (n, v) in group.bits.iter().enumerate() {
            if !fixed(v) {
                rest += weight(n) * x[v.0].max(T::zero()).min(T::one());
            }
        }
        for (n, v) in group.bits.iter().enumerate().rev() {
            if fixed(v) {
                continue;
            }
            let val = (rest / weight(n)).min(T::one()).max(T::zero());
            out[v.0] = val;
            rest -= val * weight(n);
        }
    }
    out
}

struct Search<'a, T> {
    program: &'a MixedIntegerConicProgram<T>,
    base: Vec<(Option<T>, Option<T>)>,
    settings: &'a SolverSettings<T>,
    cache: HashMap<Vec<u8>, Option<(T, Vec<T>)>>,
    incumbent: Option<(T, Vec<T>, Vec<u8>)>,
    updates: usize,
    relaxations: usize,
    failed: usize,
}

impl<'a, T: Real> Search<'a, T> {
    fn bounds_for(&self, fixings: &[(usize, bool)]) -> Vec<(Option<T>, Option<T>)> {
        let mut b = self.base.clone();
        for &(v, val) in fixings {
            let t = if val { T::one() } else { T::zero() };
            b[v] = (Some(t), Some(t));
        }
        b
    }

    fn relax(&self, fixings: &[(usize, bool)]) -> Result<SocpResult<T>> {
        solve_socp_with_bounds(self.program, &self.bounds_for(fixings), self.settings)
    }

    fn cutoff(&self) -> T {
        match &self.incumbent {
            Some((obj, _, _)) => *obj - self.settings.rel_gap * obj.abs(),
            None => T::infinity(),
        }
    }

    /// Integer values for every binary, rounding tap groups as integers.
    fn round(&self, x: &[T]) -> Vec<(usize, bool)> {
        let mut assigned: HashMap<usize, bool> = HashMap::new();
        for group in self.program.tap_groups() {
            let frac: T = group
                .bits
                .iter()
                .enumerate()
                .map(|(n, v)| T::from_u64(1 << n).unwrap() * x[v.0].max(T::zero()).min(T::one()))
                .sum();
            let tap = frac.round().max(T::zero()).min(T::from_u32(group.k_taps).unwrap()).to_u32().unwrap_or(0);
            for (v, bit) in group.bits.iter().zip(group.canonical_bits(tap)) {
                assigned.insert(v.0, bit == 1);
            }
        }
        self.program
            .binaries()
            .into_iter()
            .map(|v| (v.0, *assigned.get(&v.0).unwrap_or(&(x[v.0] >= T::lit(0.5)))))
            .collect()
    }

    /// Solves with every binary fixed and offers the result as incumbent.
    fn try_assignment(&mut self, assignment: Vec<(usize, bool)>) -> Result<()> {
        let key: Vec<u8> = assignment.iter().map(|&(_, b)| b as u8).collect();
        if !self.cache.contains_key(&key) {
            self.relaxations += 1;
            let res = self.relax(&assignment)?;
            let entry = if res.status.has_solution() { Some((res.objective, res.x)) } else { None };
            self.cache.insert(key.clone(), entry);
        }
        if let Some((obj, x)) = self.cache[&key].clone() {
            let better = match &self.incumbent {
                None => true,
                Some((inc, _, inc_key)) => {
                    let tie = T::lit(1e-9) * T::one().max(inc.abs());
                    obj < *inc - tie || ((obj - *inc).abs() <= tie && self.tap_key(&key) < self.tap_key(inc_key))
                }
            };
            if better {
                log::debug!("incumbent {obj:e}");
                self.incumbent = Some((obj, x, key));
                self.updates += 1;
            }
        }
        Ok(())
    }

    /// Tap values in group order, for canonical tie-breaking.
    fn tap_key(&self, key: &[u8]) -> Vec<u64> {
        let pos: HashMap<usize, usize> =
            self.program.binaries().into_iter().enumerate().map(|(i, v)| (v.0, i)).collect();
        self.program
            .tap_groups()
            .iter()
            .map(|g| g.bits.iter().enumerate().map(|(n, v)| (key[pos[&v.0]] as u64) << n).sum())
            .collect()
    }
}

/// Minimizes `program` over its binaries.
pub fn branch_and_bound<T: Real>(
    program: &MixedIntegerConicProgram<T>,
    settings: &SolverSettings<T>,
) -> Result<BnbResult<T>> {
    program.validate()?;
    let threads = settings.threads.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Solver(format!("thread pool: {e}")))?;
    let mut search = Search {
        program,
        base: program.bounds(),
        settings,
        cache: HashMap::new(),
        incumbent: None,
        updates: 0,
        relaxations: 0,
        failed: 0,
    };

    let mut heap: BinaryHeap<Queued<T>> = BinaryHeap::new();
    let mut stack: Vec<Node<T>> = Vec::new();
    let mut seq = 0u64;
    stack.push(Node { fixings: Vec::new(), bound: T::neg_infinity(), seq });
    let mut nodes = 0usize;
    let mut min_pruned = T::infinity();
    let mut root_bound = T::neg_infinity();
    let mut certificate = None;
    let mut hit_limit = false;

    loop {
        if search.incumbent.is_some() && !stack.is_empty() {
            heap.extend(stack.drain(..).map(Queued));
        }
        // Take a batch.
        let mut batch: Vec<Node<T>> = Vec::new();
        while batch.len() < threads {
            let node = if search.incumbent.is_none() {
                match stack.pop() {
                    Some(n) => n,
                    None => match heap.pop() {
                        Some(q) => q.0,
                        None => break,
                    },
                }
            } else {
                match heap.pop() {
                    Some(q) => q.0,
                    None => break,
                }
            };
            if node.bound >= search.cutoff() {
                min_pruned = min_pruned.min(node.bound);
                continue;
            }
            batch.push(node);
        }
        if batch.is_empty() {
            break;
        }
        if nodes + batch.len() > settings.node_limit {
            hit_limit = true;
            for n in batch {
                heap.push(Queued(n));
            }
            break;
        }
        nodes += batch.len();
        let results: Vec<Result<SocpResult<T>>> = if threads > 1 {
            let s = &search;
            pool.install(|| batch.par_iter().map(|n| s.relax(&n.fixings)).collect())
        } else {
            batch.iter().map(|n| search.relax(&n.fixings)).collect()
        };
        search.relaxations += batch.len();

        for (node, res) in batch.into_iter().zip(results) {
            let res = res?;
            let depth = node.fixings.len();
            if node.seq == 0 {
                if res.status == SocpStatus::Infeasible {
                    certificate = res.certificate.clone();
                }
                if res.status.has_solution() {
                    root_bound = res.objective;
                }
            }
            let bounds = search.bounds_for(&node.fixings);
            let (bound, branch_var) = match res.status {
                SocpStatus::Infeasible => continue,
                s if s.has_solution() => {
                    let bound = res.objective.max(node.bound);
                    if bound >= search.cutoff() {
                        min_pruned = min_pruned.min(bound);
                        continue;
                    }
                    let assignment = search.round(&res.x);
                    search.try_assignment(assignment)?;
                    let canonical = canonical_relaxed_bits(program, &res.x, &bounds);
                    let pick = branching_rule(program, &canonical, &bounds);
                    (bound, pick.or_else(|| branching_rule(program, &res.x, &bounds)))
                }
                _ => {
                    search.failed += 1;
                    log::warn!("relaxation at depth {depth} ended with {:?}", res.status);
                    let free = program.binaries().into_iter().find(|v| {
                        let (lb, ub) = bounds[v.0];
                        !(lb.is_some() && lb == ub)
                    });
                    (node.bound, free)
                }
            };
            match branch_var {
                // Integral relaxation: its rounding was offered above.
                None => {}
                Some(v) => {
                    let near_one = res.status.has_solution() && res.x[v.0] >= T::lit(0.5);
                    let mut children = Vec::with_capacity(2);
                    for val in [!near_one, near_one] {
                        seq += 1;
                        let mut fixings = node.fixings.clone();
                        fixings.push((v.0, val));
                        children.push(Node { fixings, bound, seq });
                    }
                    if search.incumbent.is_none() {
                        stack.extend(children);
                    } else {
                        heap.extend(children.into_iter().map(Queued));
                    }
                }
            }
        }
    }

    let open_bound = heap
        .iter()
        .map(|q| q.0.bound)
        .chain(stack.iter().map(|n| n.bound))
        .fold(T::infinity(), |a, b| a.min(b));
    let (status, x, objective) = match search.incumbent.take() {
        Some((obj, x, _)) => (if hit_limit { BnbStatus::NodeLimit } else { BnbStatus::Optimal }, x, obj),
        None if hit_limit => (BnbStatus::NodeLimit, Vec::new(), T::nan()),
        None if search.failed > 0 => (BnbStatus::SolverFailure, Vec::new(), T::nan()),
        None => (BnbStatus::Infeasible, Vec::new(), T::nan()),
    };
    let best_bound = if x.is_empty() { open_bound.min(min_pruned) } else { objective.min(open_bound).min(min_pruned) };
    let gap = if x.is_empty() {
        T::infinity()
    } else {
        ((objective - best_bound) / objective.abs().max(T::lit(1e-12))).max(T::zero())
    };
    log::info!(
        "branch-and-bound: {status:?}, {nodes} nodes, {} relaxations, objective {objective:e}, gap {gap:e}",
        search.relaxations
    );
    Ok(BnbResult {
        status,
        x,
        objective,
        best_bound,
        gap,
        root_bound,
        nodes,
        relaxations: search.relaxations,
        failed_relaxations: search.failed,
        incumbent_updates: search.updates,
        certificate,
    })
}
