//! Reachability, strongly connected components and end components.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::model::Mdp;

/// Tarjan's algorithm over an adjacency list, iterative.
///
/// Components come out in reverse topological order of the condensation
/// (every component is emitted after all components it can reach).
pub fn scc_graph(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = adj.len();
    const UNSEEN: usize = usize::MAX;
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut out = Vec::new();
    let mut counter = 0;
    let mut call: Vec<(usize, usize)> = Vec::new();
    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        call.push((root, 0));
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut next)) = call.last_mut() {
            if *next < adj[v].len() {
                let w = adj[v][*next];
                *next += 1;
                if index[w] == UNSEEN {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack");
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    out.push(comp);
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scc {
    pub states: Vec<usize>,
    /// A single state without a self-loop.
    pub trivial: bool,
}

/// SCCs of the MDP graph, optionally restricted to the edges whose index is
/// flagged in `edge_filter`.
pub fn sccs(mdp: &Mdp, edge_filter: Option<&[bool]>) -> Vec<Scc> {
    let keep = |e: usize| edge_filter.is_none_or(|f| f[e]);
    let mut adj = vec![Vec::new(); mdp.n_states()];
    for (i, e) in mdp.edges().iter().enumerate() {
        if keep(i) {
            adj[e.from].push(e.to);
        }
    }
    scc_graph(&adj)
        .into_iter()
        .map(|states| {
            let trivial = states.len() == 1 && !adj[states[0]].contains(&states[0]);
            Scc { states, trivial }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EndComponent {
    /// State indices, ascending.
    pub states: Vec<usize>,
    /// Indices of the edges internal to `states`, ascending.
    pub edges: Vec<usize>,
}

impl EndComponent {
    pub fn from_states(mdp: &Mdp, mut states: Vec<usize>) -> EndComponent {
        states.sort_unstable();
        states.dedup();
        let mask = mask_of(mdp.n_states(), &states);
        let edges = (0..mdp.n_edges())
            .filter(|&e| mask[mdp.edge(e).from] && mask[mdp.edge(e).to])
            .collect();
        EndComponent { states, edges }
    }

    pub fn mask(&self, n: usize) -> Vec<bool> {
        mask_of(n, &self.states)
    }

    pub fn contains(&self, s: usize) -> bool {
        self.states.binary_search(&s).is_ok()
    }

    pub fn state_ids(&self, mdp: &Mdp) -> Vec<String> {
        self.states.iter().map(|&s| mdp.state(s).id.clone()).collect()
    }

    pub fn edge_ids(&self, mdp: &Mdp) -> Vec<u64> {
        self.edges.iter().map(|&e| mdp.edge(e).id).collect()
    }
}

pub fn mask_of(n: usize, states: &[usize]) -> Vec<bool> {
    let mut m = vec![false; n];
    for &s in states {
        m[s] = true;
    }
    m
}

/// Maximal end components by iterated SCC refinement, in the order of their
/// smallest state index.
pub fn mecs(mdp: &Mdp) -> Vec<EndComponent> {
    let all = vec![true; mdp.n_states()];
    mecs_within(mdp, &all)
}

/// Maximal end components of the sub-MDP induced by `alive`. Random states
/// with an edge leaving `alive` are never part of one.
pub fn mecs_within(mdp: &Mdp, alive: &[bool]) -> Vec<EndComponent> {
    let n = mdp.n_states();
    let mut state_on = alive.to_vec();
    let mut edge_on: Vec<bool> = mdp
        .edges()
        .iter()
        .map(|e| state_on[e.from] && state_on[e.to])
        .collect();
    loop {
        let mut changed = false;
        let comps = sccs(mdp, Some(&edge_on));
        let mut comp = vec![usize::MAX; n];
        for (i, c) in comps.iter().enumerate() {
            for &s in &c.states {
                comp[s] = i;
            }
        }
        for (i, e) in mdp.edges().iter().enumerate() {
            if edge_on[i] && comp[e.from] != comp[e.to] {
                edge_on[i] = false;
                changed = true;
            }
        }
        for s in 0..n {
            if !state_on[s] {
                continue;
            }
            let outs = mdp.out_edges(s);
            let dead = if mdp.is_random(s) {
                outs.iter().any(|&e| !edge_on[e])
            } else {
                outs.iter().all(|&e| !edge_on[e])
            };
            if dead {
                state_on[s] = false;
                changed = true;
                for &e in outs.iter().chain(mdp.in_edges(s)) {
                    edge_on[e] = false;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut out: Vec<EndComponent> = sccs(mdp, Some(&edge_on))
        .into_iter()
        .filter(|c| state_on[c.states[0]])
        .map(|c| EndComponent::from_states(mdp, c.states))
        .collect();
    out.sort();
    out
}

/// Checks the end-component conditions, naming the first violated one.
pub fn check_end_component(mdp: &Mdp, states: &[usize]) -> std::result::Result<(), String> {
    if states.is_empty() {
        return Err("empty state set".into());
    }
    let mask = mask_of(mdp.n_states(), states);
    for &s in states {
        let outs = mdp.out_edges(s);
        if mdp.is_random(s) {
            if let Some(&e) = outs.iter().find(|&&e| !mask[mdp.edge(e).to]) {
                return Err(format!(
                    "random state {} has edge {} leaving the set",
                    mdp.state(s).id,
                    mdp.edge(e).id
                ));
            }
        } else if !outs.iter().any(|&e| mask[mdp.edge(e).to]) {
            return Err(format!("state {} has no edge inside the set", mdp.state(s).id));
        }
    }
    let internal: Vec<bool> = mdp
        .edges()
        .iter()
        .map(|e| mask[e.from] && mask[e.to])
        .collect();
    let comps = sccs(mdp, Some(&internal));
    if !comps.iter().any(|c| c.states.len() == states.len() && mask[c.states[0]]) {
        return Err("set is not strongly connected".into());
    }
    Ok(())
}

pub fn is_end_component(mdp: &Mdp, states: &[usize]) -> bool {
    check_end_component(mdp, states).is_ok()
}

/// `mdp` restricted to an end component, with only its internal edges.
pub fn restrict(mdp: &Mdp, states: &[usize]) -> Result<Mdp> {
    check_end_component(mdp, states).map_err(Error::NotEndComponent)?;
    let mask = mask_of(mdp.n_states(), states);
    let sub = mdp.induced(&mask, |_| true);
    let initial = sub.initial().or(Some(0));
    Ok(sub.with_initial(initial))
}

/// States reachable from `s0` using edges accepted by `keep`.
pub fn reachable_mask_with(mdp: &Mdp, s0: usize, keep: impl Fn(usize) -> bool) -> Vec<bool> {
    let mut seen = vec![false; mdp.n_states()];
    let mut queue = VecDeque::from([s0]);
    seen[s0] = true;
    while let Some(s) = queue.pop_front() {
        for &e in mdp.out_edges(s) {
            let t = mdp.edge(e).to;
            if keep(e) && !seen[t] {
                seen[t] = true;
                queue.push_back(t);
            }
        }
    }
    seen
}

pub fn reachable_mask(mdp: &Mdp, s0: usize) -> Vec<bool> {
    reachable_mask_with(mdp, s0, |_| true)
}

pub fn reachable(mdp: &Mdp, s0: &str) -> Result<Vec<usize>> {
    let s = mdp.require_state(s0)?;
    let mask = reachable_mask(mdp, s);
    Ok((0..mdp.n_states()).filter(|&i| mask[i]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{fixture, Fixture};

    fn ids(mdp: &Mdp, states: &[usize]) -> Vec<String> {
        states.iter().map(|&s| mdp.state(s).id.clone()).collect()
    }

    /// Brute force: every subset that satisfies the EC conditions.
    fn all_ecs(mdp: &Mdp) -> Vec<Vec<usize>> {
        let n = mdp.n_states();
        (1u32..(1 << n))
            .map(|bits| (0..n).filter(|&i| bits >> i & 1 == 1).collect::<Vec<_>>())
            .filter(|s| is_end_component(mdp, s))
            .collect()
    }

    #[test]
    fn sccs_of_run_ex() {
        let m = fixture(Fixture::RunEx);
        let comps = sccs(&m, None);
        let named: Vec<(Vec<String>, bool)> =
            comps.iter().map(|c| (ids(&m, &c.states), c.trivial)).collect();
        assert_eq!(
            named,
            vec![
                (vec!["t".to_string()], false),
                (vec!["u".to_string(), "v".to_string()], false),
                (vec!["s".to_string()], true),
            ]
        );
    }

    #[test]
    fn sccs_approx_and_empty_filter() {
        let m = fixture(Fixture::ApproxEx);
        assert_eq!(sccs(&m, None).len(), 1);
        let r = fixture(Fixture::RunEx);
        let none = vec![false; r.n_edges()];
        let comps = sccs(&r, Some(&none[..]));
        assert_eq!(comps.len(), 4);
        assert!(comps.iter().all(|c| c.trivial));
    }

    #[test]
    fn reverse_topological_order() {
        let m = fixture(Fixture::TaskEx);
        for mdp in [fixture(Fixture::RunEx), fixture(Fixture::RunExBas), m] {
            let comps = sccs(&mdp, None);
            let mut pos = vec![0; mdp.n_states()];
            for (i, c) in comps.iter().enumerate() {
                for &s in &c.states {
                    pos[s] = i;
                }
            }
            for e in mdp.edges() {
                assert!(pos[e.from] >= pos[e.to]);
            }
        }
    }

    #[test]
    fn mecs_of_fixtures() {
        let m = fixture(Fixture::RunEx);
        let got: Vec<Vec<String>> = mecs(&m).iter().map(|c| ids(&m, &c.states)).collect();
        assert_eq!(got, vec![vec!["t"], vec!["u", "v"]]);
        let t = fixture(Fixture::TaskEx);
        let got = mecs(&t);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].states.len(), 6);
        assert_eq!(got[0].edges.len(), 12);
        assert_eq!(mecs(&fixture(Fixture::ApproxEx)).len(), 1);
    }

    #[test]
    fn mecs_are_maximal_by_brute_force() {
        for f in Fixture::ALL {
            let m = fixture(f);
            let found = mecs(&m);
            for ec in all_ecs(&m) {
                assert!(found
                    .iter()
                    .any(|mec| ec.iter().all(|s| mec.contains(*s))));
            }
            for mec in &found {
                assert!(is_end_component(&m, &mec.states));
            }
        }
    }

    #[test]
    fn restrict_examples() {
        let m = fixture(Fixture::RunEx);
        let u = m.require_state("u").unwrap();
        let v = m.require_state("v").unwrap();
        let t = m.require_state("t").unwrap();
        let s = m.require_state("s").unwrap();
        let uv = restrict(&m, &[u, v]).unwrap();
        assert_eq!((uv.n_states(), uv.n_edges()), (2, 3));
        let tt = restrict(&m, &[t]).unwrap();
        assert_eq!(tt.n_edges(), 1);
        assert_eq!(tt.edge(0).weight, vec![5, 15]);
        assert!(matches!(restrict(&m, &[s, t]), Err(Error::NotEndComponent(_))));
    }

    #[test]
    fn reachability() {
        let m = fixture(Fixture::RunEx);
        assert_eq!(reachable(&m, "s").unwrap().len(), 4);
        assert_eq!(ids(&m, &reachable(&m, "t").unwrap()), vec!["t"]);
        let b = fixture(Fixture::RunExBas);
        assert_eq!(ids(&b, &reachable(&b, "u").unwrap()), vec!["u", "v"]);
        assert!(reachable(&m, "zz").is_err());
    }
}
