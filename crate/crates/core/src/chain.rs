//! Markov chains induced by finite strategies, and their exact analysis.
//!
//! Large products (monitors that count steps or sums) are mostly acyclic.
//! The analysis picks a feedback vertex set of "checkpoints" (targets of DFS
//! back edges), runs dynamic programming over the acyclic rest, and works on
//! the small embedded chain between checkpoints.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::decomposition::scc_graph;
use crate::error::Result;
use crate::machine::StrategyMachine;
use crate::model::{nontrivial_dims, Mdp};
use crate::rational::{self, Rational};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Step {
    pub to: usize,
    pub prob: Rational,
    /// Index of the MDP edge (or of the chain's own weight table).
    pub edge: usize,
}

#[derive(Clone, Debug)]
pub struct InducedChain {
    /// `(state, memory)` pairs.
    pub nodes: Vec<(usize, usize)>,
    pub succ: Vec<Vec<Step>>,
    pub initial: Vec<(usize, Rational)>,
    /// Weight vector of each edge index used by the steps.
    pub weights: Vec<Vec<i64>>,
}

impl InducedChain {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn dimension(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        self.succ.iter().map(|s| s.iter().map(|x| x.to).collect()).collect()
    }

    /// Display name of a node.
    pub fn label(&self, mdp: &Mdp, machine: &StrategyMachine, v: usize) -> String {
        let (s, m) = self.nodes[v];
        format!("({}, {})", mdp.state(s).id, machine.memory[m])
    }
}

/// Product of `mdp` and `machine` started at `s0`, restricted to reachable
/// pairs. Transition probabilities multiply the edge probability (or the
/// machine's choice) with the memory update.
pub fn induced_chain(mdp: &Mdp, machine: &StrategyMachine, s0: usize) -> Result<InducedChain> {
    induced_chain_from(mdp, machine, &[s0])
}

/// Like [`induced_chain`], started uniformly from each state in `starts`.
pub fn induced_chain_from(mdp: &Mdp, machine: &StrategyMachine, starts: &[usize]) -> Result<InducedChain> {
    let share = Rational::new(1.into(), starts.len().into());
    let mut index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut nodes = Vec::new();
    let mut queue = VecDeque::new();
    let mut intern = |pair: (usize, usize), nodes: &mut Vec<(usize, usize)>, queue: &mut VecDeque<usize>| {
        *index.entry(pair).or_insert_with(|| {
            nodes.push(pair);
            queue.push_back(nodes.len() - 1);
            nodes.len() - 1
        })
    };
    let mut initial: Vec<(usize, Rational)> = Vec::new();
    for &s0 in starts {
        for (m, p) in &machine.initial {
            initial.push((intern((s0, *m), &mut nodes, &mut queue), p * &share));
        }
    }
    let mut succ: Vec<Vec<Step>> = Vec::new();
    while let Some(v) = queue.pop_front() {
        let (s, m) = nodes[v];
        let choices: Vec<(usize, Rational)> = if mdp.is_random(s) {
            mdp.out_edges(s).iter().map(|&e| (e, mdp.prob(e))).collect()
        } else {
            machine.output_at(mdp, s, m)?.clone()
        };
        let mut steps: Vec<Step> = Vec::new();
        for (e, p) in choices {
            let t = mdp.edge(e).to;
            for (m2, q) in machine.update_at(mdp, e, m)? {
                let to = intern((t, *m2), &mut nodes, &mut queue);
                let prob = &p * q;
                match steps.iter_mut().find(|x| x.to == to && x.edge == e) {
                    Some(x) => x.prob += prob,
                    None => steps.push(Step { to, prob, edge: e }),
                }
            }
        }
        if succ.len() <= v {
            succ.resize(v + 1, Vec::new());
        }
        succ[v] = steps;
    }
    succ.resize(nodes.len(), Vec::new());
    Ok(InducedChain {
        nodes,
        succ,
        initial,
        weights: mdp.edges().iter().map(|e| e.weight.clone()).collect(),
    })
}

/// Checkpoints and a topological order of the remaining nodes.
struct Skeleton {
    checkpoint: Vec<bool>,
    /// Position in a topological order of the non-checkpoint subgraph.
    topo: Vec<usize>,
    /// Reachable checkpoints, ascending.
    points: Vec<usize>,
}

fn skeleton(chain: &InducedChain) -> Skeleton {
    let n = chain.n_nodes();
    // 0 unseen, 1 on stack, 2 done
    let mut color = vec![0u8; n];
    let mut checkpoint = vec![false; n];
    let mut stack: Vec<(usize, usize)> = Vec::new();
    for &(root, _) in &chain.initial {
        if color[root] != 0 {
            continue;
        }
        color[root] = 1;
        stack.push((root, 0));
        while let Some(&mut (v, ref mut i)) = stack.last_mut() {
            if *i < chain.succ[v].len() {
                let w = chain.succ[v][*i].to;
                *i += 1;
                match color[w] {
                    0 => {
                        color[w] = 1;
                        stack.push((w, 0));
                    }
                    1 => checkpoint[w] = true,
                    _ => {}
                }
            } else {
                color[v] = 2;
                stack.pop();
            }
        }
    }
    // Kahn's algorithm on the graph without checkpoints.
    let mut indeg = vec![0usize; n];
    for v in 0..n {
        if color[v] == 0 || checkpoint[v] {
            continue;
        }
        for s in &chain.succ[v] {
            if !checkpoint[s.to] {
                indeg[s.to] += 1;
            }
        }
    }
    let mut queue: VecDeque<usize> =
        (0..n).filter(|&v| color[v] != 0 && !checkpoint[v] && indeg[v] == 0).collect();
    let mut topo = vec![usize::MAX; n];
    let mut next = 0;
    while let Some(v) = queue.pop_front() {
        topo[v] = next;
        next += 1;
        for s in &chain.succ[v] {
            if !checkpoint[s.to] {
                indeg[s.to] -= 1;
                if indeg[s.to] == 0 {
                    queue.push_back(s.to);
                }
            }
        }
    }
    let points = (0..n).filter(|&v| checkpoint[v]).collect();
    Skeleton {
        checkpoint,
        topo,
        points,
    }
}

/// Every reachable node as a checkpoint. The sparse solver then picks the
/// elimination order, which beats replaying excursions through long
/// acyclic stretches.
fn every_node(chain: &InducedChain) -> Skeleton {
    let n = chain.n_nodes();
    let mut seen = vec![false; n];
    let mut stack: Vec<usize> = chain.initial.iter().map(|&(v, _)| v).collect();
    for &v in &stack {
        seen[v] = true;
    }
    while let Some(v) = stack.pop() {
        for s in &chain.succ[v] {
            if !seen[s.to] {
                seen[s.to] = true;
                stack.push(s.to);
            }
        }
    }
    Skeleton {
        checkpoint: seen.clone(),
        topo: vec![usize::MAX; n],
        points: (0..n).filter(|&v| seen[v]).collect(),
    }
}

/// What happens between leaving a set of source nodes and the first arrival
/// at a checkpoint.
struct Excursion {
    hits: BTreeMap<usize, Rational>,
    reward: Vec<Rational>,
    length: Rational,
    visits: Option<HashMap<usize, Rational>>,
}

/// `sources` are visited first (even when they are checkpoints); from then
/// on mass stops at checkpoints.
fn excursion(chain: &InducedChain, sk: &Skeleton, sources: &[(usize, Rational)], keep_visits: bool) -> Excursion {
    let d = chain.dimension();
    let mut hits: BTreeMap<usize, Rational> = BTreeMap::new();
    let mut reward = vec![rational::zero(); d];
    let mut length = rational::zero();
    let mut visits = keep_visits.then(HashMap::new);
    let mut pending: BTreeMap<usize, (usize, Rational)> = BTreeMap::new();
    let mut visit = |v: usize,
                     mass: Rational,
                     hits: &mut BTreeMap<usize, Rational>,
                     pending: &mut BTreeMap<usize, (usize, Rational)>,
                     reward: &mut Vec<Rational>,
                     length: &mut Rational| {
        *length += &mass;
        if let Some(vs) = visits.as_mut() {
            *vs.entry(v).or_insert_with(rational::zero) += &mass;
        }
        for s in &chain.succ[v] {
            let m = &mass * &s.prob;
            for (i, w) in chain.weights[s.edge].iter().enumerate() {
                if *w != 0 {
                    reward[i] += &m * rational::int(*w);
                }
            }
            if sk.checkpoint[s.to] {
                *hits.entry(s.to).or_insert_with(rational::zero) += m;
            } else {
                let slot = pending.entry(sk.topo[s.to]).or_insert_with(|| (s.to, rational::zero()));
                slot.1 += m;
            }
        }
    };
    for (v, p) in sources {
        if sk.checkpoint[*v] {
            visit(*v, p.clone(), &mut hits, &mut pending, &mut reward, &mut length);
        } else {
            let slot = pending.entry(sk.topo[*v]).or_insert_with(|| (*v, rational::zero()));
            slot.1 += p;
        }
    }
    while let Some((_, (v, mass))) = pending.pop_first() {
        visit(v, mass, &mut hits, &mut pending, &mut reward, &mut length);
    }
    Excursion {
        hits,
        reward,
        length,
        visits,
    }
}

/// Sparse square system: `rows[i]` maps columns to coefficients.
type SparseRows = Vec<BTreeMap<usize, Rational>>;

/// Exact sparse Gaussian elimination with min-degree pivoting; `None` if
/// singular. Fill-in stays small on the near-cyclic systems built here,
/// where dense elimination spends its time on gcds of huge entries.
fn solve_linear(mut rows: SparseRows, mut b: Vec<Rational>) -> Option<Vec<Rational>> {
    let n = b.len();
    let mut col_rows: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for (r, row) in rows.iter_mut().enumerate() {
        row.retain(|_, v| !v.is_zero());
        if row.is_empty() {
            return None;
        }
        for &c in row.keys() {
            col_rows[c].insert(r);
        }
    }
    // Rows by current length; the shortest row pivots on its sparsest column.
    let mut queue: BTreeSet<(usize, usize)> = rows.iter().enumerate().map(|(r, row)| (row.len(), r)).collect();
    let mut order = Vec::with_capacity(n);
    while let Some((_, r)) = queue.pop_first() {
        let c = *rows[r].keys().min_by_key(|&&c| col_rows[c].len())?;
        for &c2 in rows[r].keys() {
            col_rows[c2].remove(&r);
        }
        let pivot_row = rows[r].clone();
        let p = pivot_row[&c].clone();
        let targets: Vec<usize> = col_rows[c].iter().copied().collect();
        for k in targets {
            queue.remove(&(rows[k].len(), k));
            let f = &rows[k][&c] / &p;
            for (c2, v) in &pivot_row {
                let e = rows[k].entry(*c2).or_insert_with(rational::zero);
                *e -= &f * v;
                if e.is_zero() {
                    rows[k].remove(c2);
                    col_rows[*c2].remove(&k);
                } else {
                    col_rows[*c2].insert(k);
                }
            }
            let d = &f * &b[r];
            b[k] -= d;
            if rows[k].is_empty() {
                return None;
            }
            queue.insert((rows[k].len(), k));
        }
        order.push((r, c));
    }
    let mut x = vec![rational::zero(); n];
    for &(r, c) in order.iter().rev() {
        let mut acc = b[r].clone();
        for (c2, v) in &rows[r] {
            if *c2 != c {
                acc -= v * &x[*c2];
            }
        }
        x[c] = acc / &rows[r][&c];
    }
    Some(x)
}

#[derive(Clone, Debug)]
pub struct Bscc {
    /// Chain nodes of the component, ascending.
    pub nodes: Vec<usize>,
    pub reach: Rational,
    /// Long-run mean payoff inside the component.
    pub mean_payoff: Vec<Rational>,
    /// Stationary distribution over `nodes`, when requested.
    pub stationary: Option<Vec<(usize, Rational)>>,
}

/// Bottom SCCs with exact reach probabilities and mean payoffs. Stationary
/// distributions are computed when `stationary` is set.
pub fn bscc_analysis(chain: &InducedChain, stationary: bool) -> Vec<Bscc> {
    let sk = every_node(chain);
    let k = sk.points.len();
    let pos: HashMap<usize, usize> = sk.points.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let trips: Vec<Excursion> = sk
        .points
        .iter()
        .map(|&c| excursion(chain, &sk, &[(c, rational::one())], stationary))
        .collect();
    let adj: Vec<Vec<usize>> = trips
        .iter()
        .map(|t| t.hits.keys().map(|c| pos[c]).collect())
        .collect();
    let comps = scc_graph(&adj);
    let mut comp_of = vec![0; k];
    for (i, c) in comps.iter().enumerate() {
        for &x in c {
            comp_of[x] = i;
        }
    }
    let bottoms: Vec<usize> = (0..comps.len())
        .filter(|&i| comps[i].iter().all(|&x| adj[x].iter().all(|&y| comp_of[y] == i)))
        .collect();

    // Absorption probabilities from transient checkpoints.
    let transient: Vec<usize> = (0..k).filter(|&x| !bottoms.contains(&comp_of[x])).collect();
    let tpos: HashMap<usize, usize> = transient.iter().enumerate().map(|(i, &x)| (x, i)).collect();
    let start = excursion(chain, &sk, &chain.initial, false);

    // Full-chain SCCs identify the nodes of each bottom component.
    let full = scc_graph(&chain.adjacency());
    let mut full_of = vec![usize::MAX; chain.n_nodes()];
    for (i, c) in full.iter().enumerate() {
        for &v in c {
            full_of[v] = i;
        }
    }

    bottoms
        .iter()
        .map(|&b| {
            let members = &comps[b];
            // Stationary distribution of the embedded chain on this class.
            let m = members.len();
            let local: HashMap<usize, usize> = members.iter().enumerate().map(|(i, &x)| (x, i)).collect();
            // Balance equations with pi_0 = 1; the one for node 0 is implied.
            let mut a: SparseRows = vec![BTreeMap::new(); m - 1];
            let mut rhs = vec![rational::zero(); m - 1];
            for (j, &x) in members.iter().enumerate() {
                for (c, p) in &trips[x].hits {
                    let y = local[&pos[c]];
                    if y == 0 {
                        continue;
                    }
                    if j == 0 {
                        rhs[y - 1] -= p;
                    } else {
                        *a[y - 1].entry(j - 1).or_insert_with(rational::zero) += p;
                    }
                }
                if j > 0 {
                    *a[j - 1].entry(j - 1).or_insert_with(rational::zero) -= rational::one();
                }
            }
            let mut pi = vec![rational::one()];
            pi.extend(solve_linear(a, rhs).expect("irreducible embedded class"));
            let mass: Rational = pi.iter().sum();
            let pi: Vec<Rational> = pi.into_iter().map(|p| p / &mass).collect();
            let total_len: Rational = members
                .iter()
                .zip(&pi)
                .map(|(&x, p)| p * &trips[x].length)
                .sum();
            let d = chain.dimension();
            let mean_payoff: Vec<Rational> = (0..d)
                .map(|i| {
                    let r: Rational = members.iter().zip(&pi).map(|(&x, p)| p * &trips[x].reward[i]).sum();
                    r / &total_len
                })
                .collect();

            // Reach probability: direct hits plus absorption via transients.
            let in_b = |c: &usize| comp_of[pos[c]] == b;
            let mut reach: Rational = start.hits.iter().filter(|(c, _)| in_b(c)).map(|(_, p)| p.clone()).sum();
            if !transient.is_empty() {
                let t = transient.len();
                let mut a: SparseRows = vec![BTreeMap::new(); t];
                let mut rhs = vec![rational::zero(); t];
                for (i, &x) in transient.iter().enumerate() {
                    *a[i].entry(i).or_insert_with(rational::zero) += rational::one();
                    for (c, p) in &trips[x].hits {
                        let y = pos[c];
                        if comp_of[y] == b {
                            rhs[i] += p;
                        } else if let Some(&j) = tpos.get(&y) {
                            *a[i].entry(j).or_insert_with(rational::zero) -= p;
                        }
                    }
                }
                let h = solve_linear(a, rhs).expect("transient checkpoints are absorbed");
                for (c, p) in &start.hits {
                    if let Some(&j) = tpos.get(&pos[c]) {
                        reach += p * &h[j];
                    }
                }
            }

            let rep = sk.points[members[0]];
            let mut nodes = full[full_of[rep]].clone();
            nodes.sort_unstable();
            let stationary = stationary.then(|| {
                let mut acc: HashMap<usize, Rational> = HashMap::new();
                for (&x, p) in members.iter().zip(&pi) {
                    for (v, q) in trips[x].visits.as_ref().expect("visits kept") {
                        *acc.entry(*v).or_insert_with(rational::zero) += p * q;
                    }
                }
                nodes
                    .iter()
                    .map(|v| (*v, acc.get(v).cloned().unwrap_or_else(rational::zero) / &total_len))
                    .collect()
            });
            Bscc {
                nodes,
                reach,
                mean_payoff,
                stationary,
            }
        })
        .collect()
}

/// Expected mean payoff of the chain from its initial distribution.
pub fn expected_mp(chain: &InducedChain) -> Vec<Rational> {
    let mut total = vec![rational::zero(); chain.dimension()];
    for b in bscc_analysis(chain, false) {
        for (t, v) in total.iter_mut().zip(&b.mean_payoff) {
            *t += &b.reach * v;
        }
    }
    total
}

/// Karp's minimum cycle mean over a graph given as `(from, to, weight)`,
/// returning the mean and one cycle (as edge positions) attaining it.
pub fn karp(n: usize, edges: &[(usize, usize, i128)]) -> Option<(Rational, Vec<usize>)> {
    let mut adj = vec![Vec::new(); n];
    for &(u, v, _) in edges {
        adj[u].push(v);
    }
    let mut best: Option<(Rational, Vec<usize>)> = None;
    for comp in scc_graph(&adj) {
        let local: HashMap<usize, usize> = comp.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let inner: Vec<usize> = (0..edges.len())
            .filter(|&i| local.contains_key(&edges[i].0) && local.contains_key(&edges[i].1))
            .collect();
        if inner.is_empty() {
            continue;
        }
        let k = comp.len();
        let mut dist: Vec<Vec<Option<i128>>> = vec![vec![None; k]; k + 1];
        let mut parent: Vec<Vec<usize>> = vec![vec![usize::MAX; k]; k + 1];
        dist[0][0] = Some(0);
        for j in 1..=k {
            for &i in &inner {
                let (u, v, w) = edges[i];
                let (u, v) = (local[&u], local[&v]);
                if let Some(du) = dist[j - 1][u] {
                    let cand = du + w;
                    if dist[j][v].is_none_or(|dv| cand < dv) {
                        dist[j][v] = Some(cand);
                        parent[j][v] = i;
                    }
                }
            }
        }
        let mut comp_best: Option<(Rational, usize)> = None;
        for v in 0..k {
            let Some(dk) = dist[k][v] else { continue };
            let worst = (0..k)
                .filter_map(|j| dist[j][v].map(|dj| ratio128(dk - dj, (k - j) as i128)))
                .max()
                .expect("some level reaches v");
            if comp_best.as_ref().is_none_or(|(b, _)| worst < *b) {
                comp_best = Some((worst, v));
            }
        }
        let Some((mean, v)) = comp_best else { continue };
        // Walk back k steps and pick the best cycle on the walk.
        let mut walk = Vec::with_capacity(k);
        let mut at = v;
        for j in (1..=k).rev() {
            let i = parent[j][at];
            walk.push(i);
            at = local[&edges[i].0];
        }
        walk.reverse();
        let cycle = best_cycle_on_walk(edges, &walk).expect("a walk of k edges repeats a vertex");
        if best.as_ref().is_none_or(|(b, _)| mean < *b) {
            best = Some((mean, cycle));
        }
    }
    best
}

fn ratio128(a: i128, b: i128) -> Rational {
    Rational::new(a.into(), b.into())
}

fn best_cycle_on_walk(edges: &[(usize, usize, i128)], walk: &[usize]) -> Option<Vec<usize>> {
    let mut best: Option<(Rational, Vec<usize>)> = None;
    for start in 0..walk.len() {
        let origin = edges[walk[start]].0;
        let mut total = 0i128;
        for end in start..walk.len() {
            total += edges[walk[end]].2;
            if edges[walk[end]].1 == origin {
                let mean = ratio128(total, (end - start + 1) as i128);
                if best.as_ref().is_none_or(|(b, _)| mean < *b) {
                    best = Some((mean, walk[start..=end].to_vec()));
                }
                break;
            }
        }
    }
    best.map(|(_, c)| c)
}

/// Minimum cycle mean in dimension `dim` over cycles reachable from the
/// initial distribution. `None` when no cycle is reachable.
pub fn karp_min_mean(chain: &InducedChain, dim: usize) -> Option<Rational> {
    let edges: Vec<(usize, usize, i128)> = (0..chain.n_nodes())
        .flat_map(|v| {
            chain.succ[v]
                .iter()
                .map(move |s| (v, s.to, chain.weights[s.edge][dim] as i128))
        })
        .collect();
    karp(chain.n_nodes(), &edges).map(|(m, _)| m)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CycleWitness {
    pub dim: usize,
    /// Chain nodes along the cycle, starting point first.
    pub nodes: Vec<usize>,
    /// MDP edge indices taken along the cycle.
    pub edges: Vec<usize>,
    pub mean: Rational,
}

#[derive(Clone, Debug)]
pub struct WorstCaseVerdict {
    pub holds: bool,
    pub witness: Option<CycleWitness>,
}

/// Minimal shifted path sums from `c` to every checkpoint over the acyclic
/// part, with the step (node, position in succ) used to reach each node.
fn min_paths(
    chain: &InducedChain,
    sk: &Skeleton,
    c: usize,
    weight: &dyn Fn(usize) -> i128,
) -> (BTreeMap<usize, i128>, HashMap<usize, (usize, usize)>, HashMap<usize, (usize, usize)>) {
    let mut dist: HashMap<usize, i128> = HashMap::new();
    let mut via: HashMap<usize, (usize, usize)> = HashMap::new();
    let mut hit: BTreeMap<usize, i128> = BTreeMap::new();
    let mut hit_via: HashMap<usize, (usize, usize)> = HashMap::new();
    let mut pending: BTreeMap<usize, usize> = BTreeMap::new();
    let relax = |v: usize,
                 dv: i128,
                 dist: &mut HashMap<usize, i128>,
                 via: &mut HashMap<usize, (usize, usize)>,
                 hit: &mut BTreeMap<usize, i128>,
                 hit_via: &mut HashMap<usize, (usize, usize)>,
                 pending: &mut BTreeMap<usize, usize>| {
        for (i, s) in chain.succ[v].iter().enumerate() {
            let cand = dv + weight(s.edge);
            if sk.checkpoint[s.to] {
                if hit.get(&s.to).is_none_or(|&d| cand < d) {
                    hit.insert(s.to, cand);
                    hit_via.insert(s.to, (v, i));
                }
            } else if dist.get(&s.to).is_none_or(|&d| cand < d) {
                dist.insert(s.to, cand);
                via.insert(s.to, (v, i));
                pending.insert(sk.topo[s.to], s.to);
            }
        }
    };
    relax(c, 0, &mut dist, &mut via, &mut hit, &mut hit_via, &mut pending);
    while let Some((_, v)) = pending.pop_first() {
        let dv = dist[&v];
        relax(v, dv, &mut dist, &mut via, &mut hit, &mut hit_via, &mut pending);
    }
    (hit, via, hit_via)
}

/// Worst-case check on the support of the induced chain: every reachable
/// cycle must have mean above `mu[i]` for each `i` in `dims`.
pub fn verify_worstcase_chain(chain: &InducedChain, mu: &[Rational], dims: &[usize]) -> WorstCaseVerdict {
    let sk = skeleton(chain);
    for &i in dims {
        let a = mu[i].numer().to_i128().expect("threshold fits in i128");
        let b = mu[i].denom().to_i128().expect("threshold fits in i128");
        let weight = |e: usize| b * chain.weights[e][i] as i128 - a;
        let pos: HashMap<usize, usize> = sk.points.iter().enumerate().map(|(j, &c)| (c, j)).collect();
        let mut embedded: Vec<(usize, usize, i128)> = Vec::new();
        for (j, &c) in sk.points.iter().enumerate() {
            let (hit, _, _) = min_paths(chain, &sk, c, &weight);
            for (t, d) in hit {
                embedded.push((j, pos[&t], d));
            }
        }
        let Some((mean, cycle)) = karp(sk.points.len(), &embedded) else {
            continue;
        };
        if mean.is_positive() {
            continue;
        }
        // Expand the embedded cycle into chain steps.
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        for &k in &cycle {
            let (from, to, _) = embedded[k];
            let c = sk.points[from];
            let target = sk.points[to];
            let (_, via, hit_via) = min_paths(chain, &sk, c, &weight);
            let mut path = Vec::new();
            let (mut v, mut idx) = hit_via[&target];
            loop {
                path.push((v, idx));
                if v == c {
                    break;
                }
                (v, idx) = via[&v];
            }
            path.reverse();
            for (v, idx) in path {
                nodes.push(v);
                edges.push(chain.succ[v][idx].edge);
            }
        }
        let total: i128 = edges.iter().map(|&e| chain.weights[e][i] as i128).sum();
        let mean = ratio128(total, edges.len() as i128);
        debug_assert!(mean <= mu[i]);
        return WorstCaseVerdict {
            holds: false,
            witness: Some(CycleWitness {
                dim: i,
                nodes,
                edges,
                mean,
            }),
        };
    }
    WorstCaseVerdict {
        holds: true,
        witness: None,
    }
}

pub fn verify_worstcase(mdp: &Mdp, machine: &StrategyMachine, s0: usize, mu: &[Rational]) -> Result<WorstCaseVerdict> {
    let chain = induced_chain(mdp, machine, s0)?;
    Ok(verify_worstcase_chain(&chain, mu, &nontrivial_dims(mu, mdp.max_abs_weight())))
}

/// Whether every cycle reachable from any state has positive mean on `dims`.
pub fn wins_everywhere(mdp: &Mdp, machine: &StrategyMachine, dims: &[usize]) -> Result<bool> {
    let all: Vec<usize> = (0..mdp.n_states()).collect();
    let chain = induced_chain_from(mdp, machine, &all)?;
    let zero = vec![rational::zero(); mdp.dimension()];
    Ok(verify_worstcase_chain(&chain, &zero, dims).holds)
}

/// Every reachable bottom component has mean payoff above `mu` on the
/// non-trivial dimensions.
pub fn verify_almost_sure_chain(chain: &InducedChain, mu: &[Rational], w_max: i64) -> bool {
    let dims = nontrivial_dims(mu, w_max);
    bscc_analysis(chain, false)
        .iter()
        .filter(|b| b.reach.is_positive())
        .all(|b| dims.iter().all(|&i| b.mean_payoff[i] > mu[i]))
}

pub fn verify_almost_sure(mdp: &Mdp, machine: &StrategyMachine, s0: usize, mu: &[Rational]) -> Result<bool> {
    let chain = induced_chain(mdp, machine, s0)?;
    Ok(verify_almost_sure_chain(&chain, mu, mdp.max_abs_weight()))
}

pub fn dominates(value: &[Rational], nu: &[Rational]) -> bool {
    value.iter().zip(nu).all(|(v, n)| v > n)
}

pub fn verify_expectation(mdp: &Mdp, machine: &StrategyMachine, s0: usize, nu: &[Rational]) -> Result<(bool, Vec<Rational>)> {
    let chain = induced_chain(mdp, machine, s0)?;
    let e = expected_mp(&chain);
    Ok((dominates(&e, nu), e))
}

/// Probability mass check used by tests and validation.
pub fn is_stochastic(chain: &InducedChain) -> bool {
    chain
        .succ
        .iter()
        .all(|s| s.iter().map(|x| x.prob.clone()).sum::<Rational>().is_one())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{fixture, Fixture};
    use crate::machine::{point, Dist};
    use crate::rational::{int, ratio};

    fn memoryless(mdp: &Mdp, picks: &[(&str, u64)]) -> StrategyMachine {
        let choice: Vec<Dist<usize>> = (0..mdp.n_states())
            .map(|s| {
                let id = &mdp.state(s).id;
                match picks.iter().find(|(n, _)| n == id) {
                    Some((_, e)) => point(mdp.edge_index(*e).unwrap()),
                    None => point(mdp.out_edges(s)[0]),
                }
            })
            .collect();
        StrategyMachine::memoryless(mdp, &choice)
    }

    /// Plain Markov chain from (from, to, prob, weight) rows.
    fn chain(n: usize, rows: &[(usize, usize, Rational, Vec<i64>)], init: usize) -> InducedChain {
        let mut succ = vec![Vec::new(); n];
        let mut weights = Vec::new();
        for (i, (u, v, p, w)) in rows.iter().enumerate() {
            succ[*u].push(Step {
                to: *v,
                prob: p.clone(),
                edge: i,
            });
            weights.push(w.clone());
        }
        InducedChain {
            nodes: (0..n).map(|v| (v, 0)).collect(),
            succ,
            initial: vec![(init, int(1))],
            weights,
        }
    }

    #[test]
    fn t_loop_chain() {
        let m = fixture(Fixture::RunEx);
        let f = memoryless(&m, &[("s", 0)]);
        let t = m.require_state("t").unwrap();
        let c = induced_chain(&m, &f, t).unwrap();
        assert_eq!(c.n_nodes(), 1);
        assert_eq!(c.succ[0][0].prob, int(1));
        let b = bscc_analysis(&c, true);
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].reach, int(1));
        assert_eq!(b[0].stationary, Some(vec![(0, int(1))]));
        assert_eq!(expected_mp(&c), vec![int(5), int(15)]);
        assert_eq!(karp_min_mean(&c, 0), Some(int(5)));
    }

    #[test]
    fn fig3_chains() {
        // Stay at s or t with probability 1/2 each.
        let two = chain(
            3,
            &[
                (0, 1, ratio(1, 2), vec![0, 0]),
                (0, 2, ratio(1, 2), vec![0, 0]),
                (1, 1, int(1), vec![0, 1]),
                (2, 2, int(1), vec![1, 0]),
            ],
            0,
        );
        let b = bscc_analysis(&two, false);
        assert_eq!(b.len(), 2);
        assert!(b.iter().all(|x| x.reach == ratio(1, 2)));
        // The 4-node cycle.
        let four = chain(
            4,
            &[
                (0, 1, int(1), vec![0, 1]),
                (1, 2, int(1), vec![0, 0]),
                (2, 3, int(1), vec![1, 0]),
                (3, 0, int(1), vec![0, 0]),
            ],
            0,
        );
        let b = bscc_analysis(&four, true);
        assert_eq!(b.len(), 1);
        let st = b[0].stationary.clone().unwrap();
        assert!(st.iter().all(|(_, p)| *p == ratio(1, 4)));
        assert_eq!(expected_mp(&four), vec![ratio(1, 4), ratio(1, 4)]);
    }

    #[test]
    fn forced_uv_chain() {
        let m = fixture(Fixture::RunEx);
        let f = memoryless(&m, &[("s", 1), ("u", 4)]);
        let c = induced_chain(&m, &f, 0).unwrap();
        assert!(is_stochastic(&c));
        assert_eq!(expected_mp(&c), vec![int(15), int(5)]);
    }

    #[test]
    fn karp_examples() {
        // Full RUN_EX graph as a chain over states: all edges, any probability.
        let m = fixture(Fixture::RunEx);
        let rows: Vec<(usize, usize, Rational, Vec<i64>)> = m
            .edges()
            .iter()
            .map(|e| (e.from, e.to, int(1), e.weight.clone()))
            .collect();
        let g = chain(m.n_states(), &rows, 0);
        assert_eq!(karp_min_mean(&g, 1), Some(int(-30)));
        let a = fixture(Fixture::ApproxEx);
        let rows: Vec<(usize, usize, Rational, Vec<i64>)> = a
            .edges()
            .iter()
            .map(|e| (e.from, e.to, int(1), e.weight.clone()))
            .collect();
        assert_eq!(karp_min_mean(&chain(2, &rows, 0), 0), Some(int(0)));
    }

    #[test]
    fn worst_case_examples() {
        let m = fixture(Fixture::RunEx);
        let zero = vec![int(0), int(0)];
        let good = memoryless(&m, &[("s", 0)]);
        assert!(verify_worstcase(&m, &good, 0, &zero).unwrap().holds);
        let bad = memoryless(&m, &[("s", 1), ("u", 4)]);
        let v = verify_worstcase(&m, &bad, 0, &zero).unwrap();
        assert!(!v.holds);
        let w = v.witness.unwrap();
        assert_eq!(w.dim, 1);
        assert_eq!(w.mean, int(-30));
        let ids: Vec<u64> = w.edges.iter().map(|&e| m.edge(e).id).collect();
        assert!(ids == vec![4, 6] || ids == vec![6, 4], "{ids:?}");
        let vacuous = vec![int(-81), int(-81)];
        assert!(verify_worstcase(&m, &bad, 0, &vacuous).unwrap().holds);
        assert!(verify_almost_sure(&m, &bad, 0, &zero).unwrap());
        assert!(!verify_almost_sure(&m, &bad, 0, &[int(15), int(5)]).unwrap());
    }
}
