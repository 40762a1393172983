//! Conflict graphs and extraction-set selection.
//!
//! A conflict graph has one node per candidate binary expression and an edge
//! between candidates that share an operand occurrence. Extracting a set `S`
//! saves `|S| - |classes(S)|` operations, where a class is the set of nodes
//! with equal expression keys. The best `S` is a maximum independent set of
//! an auxiliary graph with one extra node per class joined to the members of
//! that class.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConflictGraph<K> {
    /// Class key of each node.
    pub classes: Vec<K>,
    /// Sorted neighbour lists.
    pub adj: Vec<Vec<usize>>,
    /// Levels at which each node's operand offsets coincide.
    pub zero_levels: Vec<BTreeSet<usize>>,
}

impl<K: Ord + Clone> ConflictGraph<K> {
    /// Builds the graph from the operand occurrences of each node.
    pub fn from_occurrences<T: Ord>(classes: Vec<K>, occurrences: &[Vec<T>], zero_levels: Vec<BTreeSet<usize>>) -> Self {
        let n = classes.len();
        let mut owners: BTreeMap<&T, Vec<usize>> = BTreeMap::new();
        for (v, occ) in occurrences.iter().enumerate() {
            for o in occ {
                owners.entry(o).or_default().push(v);
            }
        }
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for vs in owners.values() {
            for &a in vs {
                for &b in vs {
                    if a != b {
                        adj[a].insert(b);
                    }
                }
            }
        }
        ConflictGraph { classes, adj: adj.into_iter().map(|s| s.into_iter().collect()).collect(), zero_levels }
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.classes.iter().collect::<BTreeSet<_>>().len()
    }

    /// Node count of the auxiliary graph.
    pub fn auxiliary_size(&self) -> usize {
        self.len() + self.class_count()
    }

    pub fn is_independent(&self, set: &[usize]) -> bool {
        set.iter().all(|a| set.iter().all(|b| self.adj[*a].binary_search(b).is_err()))
    }

    /// `|S| - |classes(S)|`.
    pub fn objective(&self, set: &[usize]) -> i64 {
        let classes: BTreeSet<&K> = set.iter().map(|v| &self.classes[*v]).collect();
        set.len() as i64 - classes.len() as i64
    }

    /// Adjacency bitsets of the auxiliary graph: the conflict nodes first,
    /// then one node per class in key order.
    pub fn auxiliary_graph(&self) -> Vec<u64> {
        let keys: Vec<&K> = self.classes.iter().collect::<BTreeSet<_>>().into_iter().collect();
        let n = self.len();
        let mut adj = vec![0u64; n + keys.len()];
        for (v, ns) in self.adj.iter().enumerate() {
            for &u in ns {
                adj[v] |= 1 << u;
            }
        }
        for (v, k) in self.classes.iter().enumerate() {
            let c = n + keys.binary_search(&k).unwrap();
            adj[v] |= 1 << c;
            adj[c] |= 1 << v;
        }
        adj
    }
}

/// Maximum independent set of a graph with at most 64 nodes, by branch and
/// bound with a greedy clique-cover bound.
pub fn max_independent_set(adj: &[u64]) -> u64 {
    assert!(adj.len() <= 64, "at most 64 nodes");
    let all = if adj.len() == 64 { u64::MAX } else { (1u64 << adj.len()) - 1 };
    let mut best = 0u64;
    expand(adj, all, 0, &mut best);
    best
}

fn clique_cover(adj: &[u64], mut cand: u64) -> u32 {
    let mut cliques = 0;
    while cand != 0 {
        let v = cand.trailing_zeros() as usize;
        let mut common = cand & adj[v];
        cand &= !(1 << v);
        while common != 0 {
            let u = common.trailing_zeros() as usize;
            common &= adj[u];
            cand &= !(1 << u);
        }
        cliques += 1;
    }
    cliques
}

fn expand(adj: &[u64], mut cand: u64, mut cur: u64, best: &mut u64) {
    // Nodes without neighbours among the candidates are always taken.
    loop {
        let mut free = 0u64;
        let mut rest = cand;
        while rest != 0 {
            let v = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            if adj[v] & cand == 0 {
                free |= 1 << v;
            }
        }
        if free == 0 {
            break;
        }
        cur |= free;
        cand &= !free;
    }
    if cand == 0 {
        if cur.count_ones() > best.count_ones() {
            *best = cur;
        }
        return;
    }
    if cur.count_ones() + clique_cover(adj, cand) <= best.count_ones() {
        return;
    }
    let mut pick = 0;
    let mut deg = 0;
    let mut rest = cand;
    while rest != 0 {
        let v = rest.trailing_zeros() as usize;
        rest &= rest - 1;
        let d = (adj[v] & cand).count_ones();
        if d > deg {
            deg = d;
            pick = v;
        }
    }
    expand(adj, cand & !adj[pick] & !(1 << pick), cur | (1 << pick), best);
    expand(adj, cand & !(1 << pick), cur, best);
}

/// The auxiliary graph has more nodes than the budget allows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BudgetExceeded {
    pub nodes: usize,
    pub budget: usize,
}

/// Drops nodes whose class has a single member in `set`.
fn drop_singletons<K: Ord>(g: &ConflictGraph<K>, set: Vec<usize>) -> Vec<usize> {
    let mut count: BTreeMap<&K, usize> = BTreeMap::new();
    for v in &set {
        *count.entry(&g.classes[*v]).or_default() += 1;
    }
    set.into_iter().filter(|v| count[&g.classes[*v]] >= 2).collect()
}

/// Extraction set maximizing `|S| - |classes(S)|`, exactly.
pub fn select_exact<K: Ord + Clone>(g: &ConflictGraph<K>, budget: usize) -> Result<Vec<usize>, BudgetExceeded> {
    let nodes = g.auxiliary_size();
    if nodes > budget.min(64) {
        return Err(BudgetExceeded { nodes, budget });
    }
    let mis = max_independent_set(&g.auxiliary_graph());
    let set: Vec<usize> = (0..g.len()).filter(|v| mis & (1 << v) != 0).collect();
    Ok(drop_singletons(g, set))
}

/// Greedy class-by-class selection among the nodes marked `allowed`.
fn greedy<K: Ord + Clone>(g: &ConflictGraph<K>, allowed: &[bool]) -> Vec<usize> {
    let mut avail = allowed.to_vec();
    let mut chosen = Vec::new();
    loop {
        let mut by_class: BTreeMap<&K, Vec<usize>> = BTreeMap::new();
        for v in 0..g.len() {
            if avail[v] {
                by_class.entry(&g.classes[v]).or_default().push(v);
            }
        }
        let mut best: Option<Vec<usize>> = None;
        for members in by_class.values() {
            let mut pick: Vec<usize> = Vec::new();
            for &v in members {
                if pick.iter().all(|u| g.adj[v].binary_search(u).is_err()) {
                    pick.push(v);
                }
            }
            if pick.len() >= 2 && best.as_ref().is_none_or(|b| pick.len() > b.len()) {
                best = Some(pick);
            }
        }
        let Some(pick) = best else { break };
        for &v in &pick {
            avail[v] = false;
            for &u in &g.adj[v] {
                avail[u] = false;
            }
        }
        chosen.extend(pick);
    }
    chosen.sort_unstable();
    chosen
}

/// Dimension-first selection. Tries the nodes whose operands coincide at
/// the innermost level, then at each outer level, and finally every node.
/// Returns the first non-empty selection and the stage that produced it
/// (`Some(level)`, or `None` for the unrestricted stage).
pub fn select_dimension_first<K: Ord + Clone>(g: &ConflictGraph<K>, depth: usize) -> (Vec<usize>, Option<usize>) {
    for level in (1..=depth).rev() {
        let allowed: Vec<bool> = g.zero_levels.iter().map(|z| z.contains(&level)).collect();
        let s = greedy(g, &allowed);
        if !s.is_empty() {
            return (s, Some(level));
        }
    }
    (greedy(g, &vec![true; g.len()]), None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn graph(classes: &[u8], edges: &[(usize, usize)]) -> ConflictGraph<u8> {
        let mut adj = vec![Vec::new(); classes.len()];
        for &(a, b) in edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for l in &mut adj {
            l.sort_unstable();
            l.dedup();
        }
        ConflictGraph { classes: classes.to_vec(), adj, zero_levels: vec![BTreeSet::new(); classes.len()] }
    }

    /// Best objective over every independent set, by enumeration.
    fn brute_force(g: &ConflictGraph<u8>) -> i64 {
        let n = g.len();
        let mut best = 0;
        for mask in 0u32..(1 << n) {
            let set: Vec<usize> = (0..n).filter(|v| mask & (1 << v) != 0).collect();
            if g.is_independent(&set) {
                best = best.max(g.objective(&set));
            }
        }
        best
    }

    #[test]
    fn small_cases() {
        let tri = graph(&[0, 1, 2], &[(0, 1), (1, 2), (0, 2)]);
        assert!(select_exact(&tri, 40).unwrap().is_empty());
        let pair = graph(&[0, 0], &[]);
        assert_eq!(select_exact(&pair, 40).unwrap(), [0, 1]);
        let path = graph(&[0, 1, 0], &[(0, 1), (1, 2)]);
        assert_eq!(select_exact(&path, 40).unwrap(), [0, 2]);
        assert_eq!(path.objective(&[0, 2]), 1);
        assert_eq!(select_dimension_first(&graph(&[], &[]), 2), (vec![], None));
    }

    #[test]
    fn budget_is_enforced() {
        let g = graph(&[0; 10], &[]);
        assert_eq!(select_exact(&g, 10), Err(BudgetExceeded { nodes: 11, budget: 10 }));
    }

    #[test]
    fn occurrences_define_edges() {
        let g = ConflictGraph::from_occurrences(vec![0u8, 0, 1], &[vec![1, 2], vec![2, 3], vec![4, 5]], vec![BTreeSet::new(); 3]);
        assert_eq!(g.adj, [vec![1], vec![0], vec![]]);
    }

    #[test]
    fn dimension_first_prefers_inner_level() {
        let mut g = graph(&[0, 0, 1, 1, 1], &[]);
        g.zero_levels = vec![[1].into(), [1].into(), [2].into(), [2].into(), BTreeSet::new()];
        let (s, stage) = select_dimension_first(&g, 2);
        assert_eq!((s, stage), (vec![2, 3], Some(2)));
        g.zero_levels = vec![BTreeSet::new(); 5];
        assert_eq!(select_dimension_first(&g, 2), (vec![0, 1, 2, 3, 4], None));
    }

    fn random_graph() -> impl Strategy<Value = ConflictGraph<u8>> {
        (1usize..=12, 1u8..=5).prop_flat_map(|(n, k)| {
            (proptest::collection::vec(0..k, n), proptest::collection::vec(any::<bool>(), n * (n - 1) / 2)).prop_map(
                move |(classes, bits)| {
                    let mut edges = Vec::new();
                    let mut b = bits.iter();
                    for a in 0..n {
                        for c in a + 1..n {
                            if *b.next().unwrap() {
                                edges.push((a, c));
                            }
                        }
                    }
                    graph(&classes, &edges)
                },
            )
        })
    }

    proptest! {
        #[test]
        fn reduction_matches_enumeration(g in random_graph()) {
            let mis = max_independent_set(&g.auxiliary_graph()).count_ones() as i64;
            prop_assert_eq!(brute_force(&g), mis - g.class_count() as i64);
            let s = select_exact(&g, 40).unwrap();
            prop_assert!(g.is_independent(&s));
            prop_assert_eq!(g.objective(&s), brute_force(&g));
        }

        #[test]
        fn heuristic_returns_independent_sets(g in random_graph(), z in proptest::collection::vec(0usize..3, 12)) {
            let mut g = g;
            g.zero_levels = (0..g.len()).map(|v| if z[v] == 0 { BTreeSet::new() } else { [z[v]].into() }).collect();
            let (s, stage) = select_dimension_first(&g, 2);
            prop_assert!(g.is_independent(&s));
            if let Some(level) = stage {
                prop_assert!(s.iter().all(|v| g.zero_levels[*v].contains(&level)));
            }
        }
    }
}
