use crate::grid_model::GridCase;

/// Disjoint-set forest with path halving.
#[derive(Debug, Clone)]
pub(crate) struct DisjointSets {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSets {
    pub(crate) fn new(n: usize) -> Self {
        DisjointSets { parent: (0..n).collect(), size: vec![1; n] }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        let (big, small) = if self.size[ra] >= self.size[rb] { (ra, rb) } else { (rb, ra) };
        self.parent[small] = big;
        self.size[big] += self.size[small];
    }
}

/// Component label per bus position, numbered in order of first appearance.
/// `active[k]` says whether branch `k` conducts.
pub fn island_labels(case: &GridCase, active: &[bool]) -> (Vec<usize>, usize) {
    let n = case.buses.len();
    let mut sets = DisjointSets::new(n);
    for (br, _) in case.branches.iter().zip(active).filter(|(_, &a)| a) {
        let f = case.bus_position(br.from_bus).expect("validated bus");
        let t = case.bus_position(br.to_bus).expect("validated bus");
        sets.union(f, t);
    }
    let mut label_of_root = vec![usize::MAX; n];
    let mut labels = vec![0; n];
    let mut count = 0;
    for (b, label) in labels.iter_mut().enumerate() {
        let r = sets.find(b);
        if label_of_root[r] == usize::MAX {
            label_of_root[r] = count;
            count += 1;
        }
        *label = label_of_root[r];
    }
    (labels, count)
}

/// Partition of bus ids into connected components over in-service branches.
/// Components are ordered by their first bus in case order.
pub fn find_islands(case: &GridCase) -> Vec<Vec<u32>> {
    let active: Vec<bool> = case.branches.iter().map(|b| b.in_service).collect();
    islands_with(case, &active)
}

pub fn islands_with(case: &GridCase, active: &[bool]) -> Vec<Vec<u32>> {
    let (labels, count) = island_labels(case, active);
    let mut out = vec![Vec::new(); count];
    for (bus, &l) in case.buses.iter().zip(&labels) {
        out[l].push(bus.id);
    }
    out
}

/// Marks branches whose removal splits their component (Tarjan low-link).
/// Parallel branches between the same pair of buses are never bridges.
pub fn find_bridges(case: &GridCase, active: &[bool]) -> Vec<bool> {
    let mut edges = Vec::new();
    let mut index = Vec::new();
    for (k, br) in case.branches.iter().enumerate() {
        if active[k] {
            let f = case.bus_position(br.from_bus).expect("validated bus");
            let t = case.bus_position(br.to_bus).expect("validated bus");
            edges.push((f, t));
            index.push(k);
        }
    }
    let local = bridges(case.buses.len(), &edges);
    let mut out = vec![false; case.branches.len()];
    for (flag, k) in local.into_iter().zip(index) {
        out[k] = flag;
    }
    out
}

/// Bridge flags for an undirected multigraph given as an edge list.
pub(crate) fn bridges(n: usize, edges: &[(usize, usize)]) -> Vec<bool> {
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (k, &(f, t)) in edges.iter().enumerate() {
        adj[f].push((t, k));
        adj[t].push((f, k));
    }
    let mut bridge = vec![false; edges.len()];
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut timer = 0;
    for root in 0..n {
        if disc[root] != usize::MAX {
            continue;
        }
        // (vertex, edge used to reach it, next adjacency index)
        let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
        disc[root] = timer;
        low[root] = timer;
        timer += 1;
        while let Some(top) = stack.len().checked_sub(1) {
            let (v, via, next) = stack[top];
            if next < adj[v].len() {
                let (w, edge) = adj[v][next];
                stack[top].2 += 1;
                if edge == via {
                    continue;
                }
                if disc[w] == usize::MAX {
                    disc[w] = timer;
                    low[w] = timer;
                    timer += 1;
                    stack.push((w, edge, 0));
                } else {
                    low[v] = low[v].min(disc[w]);
                }
            } else {
                stack.pop();
                if let Some(&(parent, _, _)) = stack.last() {
                    low[parent] = low[parent].min(low[v]);
                    if low[v] > disc[parent] {
                        bridge[via] = true;
                    }
                }
            }
        }
    }
    bridge
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_model::{Branch, Bus, Generator, GridCase, LoadPoint};

    fn case(n: u32, edges: &[(u32, u32)]) -> GridCase {
        GridCase::new(
            "t",
            (1..=n).map(|id| Bus { id, area: 1 }).collect(),
            edges
                .iter()
                .map(|&(f, t)| Branch {
                    from_bus: f,
                    to_bus: t,
                    reactance: 0.1,
                    rating_long: 100.0,
                    rating_short: 120.0,
                    outage_rate: 1.0,
                    in_service: true,
                })
                .collect(),
            vec![Generator { bus: 1, p_max: 10.0, marginal_cost: 1.0, p_scheduled: 0.0 }],
            vec![LoadPoint { bus: n, p_nominal: 5.0, shed_cost: 100.0 }],
            100.0,
        )
        .unwrap()
    }

    /// Bridge iff removing the branch increases the component count.
    fn brute_bridges(c: &GridCase) -> Vec<bool> {
        let all = vec![true; c.branches.len()];
        let base = island_labels(c, &all).1;
        (0..c.branches.len())
            .map(|k| {
                let mut a = all.clone();
                a[k] = false;
                island_labels(c, &a).1 > base
            })
            .collect()
    }

    #[test]
    fn bridges_match_removal_oracle() {
        let c = case(7, &[(1, 2), (2, 3), (3, 1), (3, 4), (4, 5), (4, 5), (5, 6), (6, 7), (7, 5)]);
        let active = vec![true; c.branches.len()];
        let got = find_bridges(&c, &active);
        assert_eq!(got, brute_bridges(&c));
        assert_eq!(got, vec![false, false, false, true, false, false, false, false, false]);
    }

    #[test]
    fn islands_of_split_network() {
        let mut c = case(4, &[(1, 2), (3, 4)]);
        assert_eq!(find_islands(&c), vec![vec![1, 2], vec![3, 4]]);
        c.branches[0].in_service = false;
        assert_eq!(find_islands(&c), vec![vec![1], vec![2], vec![3, 4]]);
    }

    proptest::proptest! {
        #[test]
        fn random_graph_bridges(edges in proptest::collection::vec((1u32..9, 1u32..9), 1..16)) {
            let edges: Vec<(u32, u32)> = edges.into_iter().filter(|(a, b)| a != b).collect();
            proptest::prop_assume!(!edges.is_empty());
            let c = case(8, &edges);
            let active = vec![true; c.branches.len()];
            proptest::prop_assert_eq!(find_bridges(&c, &active), brute_bridges(&c));
        }
    }
}
