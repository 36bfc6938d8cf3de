use std::collections::VecDeque;

use crate::error::TopologyError;

use super::{Branch, Bus, BusKind};

/// Rooted tree view of a radial case.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Topology {
    /// Slack bus index.
    pub root: usize,
    pub parent: Vec<Option<usize>>,
    /// Branch feeding each bus from its parent.
    pub parent_branch: Vec<Option<usize>>,
    /// Child branch indices per bus.
    pub children: Vec<Vec<usize>>,
    /// Neighbor buses per bus.
    pub adjacency: Vec<Vec<usize>>,
    /// Breadth-first order from the root.
    pub order: Vec<usize>,
    pub depth: Vec<usize>,
}

impl Topology {
    pub fn leaves_to_root(&self) -> impl Iterator<Item = usize> + '_ {
        self.order.iter().rev().copied()
    }
}

/// Checks that the branch set forms a tree rooted at the unique slack bus.
pub fn validate_radial<T>(
    buses: &[Bus<T>],
    branches: &[Branch<T>],
) -> Result<Topology, TopologyError> {
    build(buses, branches)
}

pub(super) fn build<T>(buses: &[Bus<T>], branches: &[Branch<T>]) -> Result<Topology, TopologyError> {
    let slacks: Vec<usize> =
        (0..buses.len()).filter(|&i| buses[i].kind == BusKind::Slack).collect();
    let root = match slacks.as_slice() {
        [] => return Err(TopologyError::MissingSlack),
        [r] => *r,
        _ => return Err(TopologyError::MultipleSlack(slacks.iter().map(|&i| buses[i].id).collect())),
    };
    let n = buses.len();

    let mut uf: Vec<usize> = (0..n).collect();
    fn find(uf: &mut [usize], mut i: usize) -> usize {
        while uf[i] != i {
            uf[i] = uf[uf[i]];
            i = uf[i];
        }
        i
    }
    for br in branches {
        let (a, b) = (find(&mut uf, br.from), find(&mut uf, br.to));
        if a == b {
            return Err(TopologyError::Cycle { from: buses[br.from].id, to: buses[br.to].id });
        }
        uf[a] = b;
    }

    let mut adjacency = vec![Vec::new(); n];
    let mut incident = vec![Vec::new(); n];
    for (k, br) in branches.iter().enumerate() {
        adjacency[br.from].push(br.to);
        adjacency[br.to].push(br.from);
        incident[br.from].push(k);
        incident[br.to].push(k);
    }

    let mut parent = vec![None; n];
    let mut parent_branch = vec![None; n];
    let mut children = vec![Vec::new(); n];
    let mut depth = vec![0; n];
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::from([root]);
    visited[root] = true;
    while let Some(i) = queue.pop_front() {
        order.push(i);
        for &k in &incident[i] {
            let br = &branches[k];
            let j = if br.from == i { br.to } else { br.from };
            if visited[j] {
                continue;
            }
            visited[j] = true;
            parent[j] = Some(i);
            parent_branch[j] = Some(k);
            depth[j] = depth[i] + 1;
            children[i].push(k);
            queue.push_back(j);
        }
    }
    if let Some(i) = (0..n).find(|&i| !visited[i]) {
        return Err(TopologyError::Disconnected(buses[i].id));
    }
    Ok(Topology { root, parent, parent_branch, children, adjacency, order, depth })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn buses(n: u32) -> Vec<Bus<f64>> {
        (1..=n)
            .map(|id| Bus {
                id,
                kind: if id == 1 { BusKind::Slack } else { BusKind::Load },
                p_load: 0.0,
                q_load: 0.0,
                v_min: 0.9,
                v_max: 1.1,
                v_set: 1.0,
            })
            .collect()
    }

    fn br(from: usize, to: usize) -> Branch<f64> {
        Branch { from, to, r: 0.1, x: 0.1, i_max: None, tap: None }
    }

    #[test]
    fn loop_is_a_cycle_error() {
        let err = validate_radial(&buses(3), &[br(0, 1), br(1, 2), br(2, 0)]).unwrap_err();
        assert_eq!(err, TopologyError::Cycle { from: 3, to: 1 });
    }

    #[test]
    fn disjoint_trees_are_disconnected() {
        let err = validate_radial(&buses(4), &[br(0, 1), br(2, 3)]).unwrap_err();
        assert_eq!(err, TopologyError::Disconnected(3));
    }

    #[test]
    fn multiple_slacks_rejected() {
        let mut b = buses(2);
        b[1].kind = BusKind::Slack;
        assert_eq!(
            validate_radial(&b, &[br(0, 1)]).unwrap_err(),
            TopologyError::MultipleSlack(vec![1, 2])
        );
    }

    #[test]
    fn parent_map_and_order() {
        let topo = validate_radial(&buses(4), &[br(0, 1), br(1, 2), br(3, 1)]).unwrap();
        assert_eq!(topo.parent, vec![None, Some(0), Some(1), Some(1)]);
        assert_eq!(topo.order, vec![0, 1, 2, 3]);
        assert_eq!(topo.leaves_to_root().collect::<Vec<_>>(), vec![3, 2, 1, 0]);
        assert_eq!(topo.children[1], vec![1, 2]);
        assert_eq!(topo.depth, vec![0, 1, 2, 2]);
    }
}
