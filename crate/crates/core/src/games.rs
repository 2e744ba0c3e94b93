//! Worst-case mean-payoff games: random states become adversarial.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

use num_traits::Signed;
use rayon::prelude::*;

use crate::decomposition::{mask_of, mecs_within, scc_graph, EndComponent};
use crate::error::{Error, Result};
use crate::lp::{self, LinearSystem, Optimum, Relation};
use crate::model::Mdp;
use crate::rational::{self, Rational};

pub const DEFAULT_ADVERSARY_CAP: u128 = 1 << 20;

/// One outgoing edge index for every random state, as (state, edge) pairs in
/// state order.
pub type AdversaryChoice = Vec<(usize, usize)>;

/// Maximal `y` such that some distribution over the cycles formed by the
/// `allowed` edges inside `states` has mean at least `y` in every dimension of
/// `dims`. `None` when no allowed edge is internal to `states`.
///
/// With no dimensions the value is `W + 1`, standing for a vacuous win.
pub fn positive_multicycle(
    mdp: &Mdp,
    states: &[usize],
    allowed: &[bool],
    dims: &[usize],
) -> Option<Rational> {
    let mask = mask_of(mdp.n_states(), states);
    let edges: Vec<usize> = (0..mdp.n_edges())
        .filter(|&e| allowed[e] && mask[mdp.edge(e).from] && mask[mdp.edge(e).to])
        .collect();
    multicycle_on_edges(mdp, states, &edges, dims)
}

fn multicycle_on_edges(
    mdp: &Mdp,
    states: &[usize],
    edges: &[usize],
    dims: &[usize],
) -> Option<Rational> {
    if edges.is_empty() {
        return None;
    }
    let w = mdp.max_abs_weight();
    let mut sys = LinearSystem::new(true);
    let x: Vec<usize> = edges.iter().map(|&e| sys.var(format!("x{e}"))).collect();
    // y is shifted by W so that it stays non-negative.
    let y = sys.var("y");
    for &s in states {
        let mut terms = Vec::new();
        for (k, &e) in edges.iter().enumerate() {
            let edge = mdp.edge(e);
            if edge.to == s {
                terms.push((x[k], rational::one()));
            }
            if edge.from == s {
                terms.push((x[k], -rational::one()));
            }
        }
        if !terms.is_empty() {
            sys.add(format!("flow_{s}"), terms, Relation::Eq, rational::zero());
        }
    }
    sys.add(
        "total",
        x.iter().map(|&v| (v, rational::one())).collect(),
        Relation::Eq,
        rational::one(),
    );
    for &i in dims {
        let mut terms: Vec<(usize, Rational)> = edges
            .iter()
            .enumerate()
            .map(|(k, &e)| (x[k], rational::int(mdp.edge(e).weight[i])))
            .collect();
        terms.push((y, -rational::one()));
        sys.add(format!("dim_{i}"), terms, Relation::Ge, rational::int(-w));
    }
    sys.add("cap", vec![(y, rational::one())], Relation::Le, rational::int(2 * w + 1));
    match lp::maximize(&sys, &[(y, rational::one())]).expect("well-formed multicycle LP") {
        Optimum::Optimal { value, .. } => Some(value - rational::int(w)),
        Optimum::Infeasible => None,
        Optimum::Unbounded => unreachable!("slack is capped"),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WinningRegion {
    pub winning: Vec<bool>,
    /// Spoiling adversary for each losing state.
    pub certificates: BTreeMap<usize, AdversaryChoice>,
}

impl WinningRegion {
    pub fn states(&self) -> Vec<usize> {
        (0..self.winning.len()).filter(|&s| self.winning[s]).collect()
    }

    pub fn all(&self) -> bool {
        self.winning.iter().all(|&w| w)
    }
}

fn random_states(mdp: &Mdp) -> Vec<usize> {
    (0..mdp.n_states()).filter(|&s| mdp.is_random(s)).collect()
}

fn adversary_count(mdp: &Mdp) -> u128 {
    random_states(mdp)
        .iter()
        .map(|&s| mdp.out_edges(s).len() as u128)
        .try_fold(1u128, |acc, k| acc.checked_mul(k))
        .unwrap_or(u128::MAX)
}

fn decode_adversary(mdp: &Mdp, randoms: &[usize], mut index: u128) -> AdversaryChoice {
    randoms
        .iter()
        .map(|&s| {
            let outs = mdp.out_edges(s);
            let k = outs.len() as u128;
            let e = outs[(index % k) as usize];
            index /= k;
            (s, e)
        })
        .collect()
}

pub fn allowed_edges(mdp: &Mdp, sigma: &[(usize, usize)]) -> Vec<bool> {
    let mut allowed: Vec<bool> = mdp.edges().iter().map(|e| !mdp.is_random(e.from)).collect();
    for &(_, e) in sigma {
        allowed[e] = true;
    }
    allowed
}

type Cache = Mutex<HashMap<Vec<usize>, Option<Rational>>>;

/// States of the one-player graph `G[sigma]` from which a positive SCC can
/// be reached.
fn winning_against(mdp: &Mdp, allowed: &[bool], dims: &[usize], cache: &Cache) -> Vec<bool> {
    let n = mdp.n_states();
    let mut adj = vec![Vec::new(); n];
    for (i, e) in mdp.edges().iter().enumerate() {
        if allowed[i] {
            adj[e.from].push(e.to);
        }
    }
    let comps = scc_graph(&adj);
    let mut comp_of = vec![0; n];
    for (k, c) in comps.iter().enumerate() {
        for &s in c {
            comp_of[s] = k;
        }
    }
    // Components come sinks first, so one pass settles reachability.
    let mut good = vec![false; comps.len()];
    for (k, c) in comps.iter().enumerate() {
        let internal: Vec<usize> = (0..mdp.n_edges())
            .filter(|&e| allowed[e] && comp_of[mdp.edge(e).from] == k && comp_of[mdp.edge(e).to] == k)
            .collect();
        let positive = if internal.is_empty() {
            false
        } else {
            let cached = cache.lock().expect("cache").get(&internal).cloned();
            let y = match cached {
                Some(y) => y,
                None => {
                    let y = multicycle_on_edges(mdp, c, &internal, dims);
                    cache.lock().expect("cache").insert(internal.clone(), y.clone());
                    y
                }
            };
            y.is_some_and(|y| y.is_positive())
        };
        let reaches = c
            .iter()
            .any(|&s| adj[s].iter().any(|&t| comp_of[t] != k && good[comp_of[t]]));
        good[k] = positive || reaches;
    }
    (0..n).map(|s| good[comp_of[s]]).collect()
}

/// Worst-case winning region for "mean payoff > 0 in every dimension of
/// `dims`" on a normalized MDP, by enumerating memoryless adversaries.
/// A single dimension is solved by value iteration instead.
pub fn wc_winning_region(mdp: &Mdp, dims: &[usize], cap: u128) -> Result<WinningRegion> {
    if dims.len() == 1 {
        if let Some(region) = unidim_region(mdp, dims[0]) {
            return Ok(region);
        }
    }
    enumerate_region(mdp, dims, cap)
}

fn enumerate_region(mdp: &Mdp, dims: &[usize], cap: u128) -> Result<WinningRegion> {
    let count = adversary_count(mdp);
    if count > cap {
        return Err(Error::AdversaryCap { count, cap });
    }
    let randoms = random_states(mdp);
    let cache: Cache = Mutex::new(HashMap::new());
    let n = mdp.n_states();
    // For each state, the first adversary index that spoils it.
    let spoilers: Vec<Option<u128>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let sigma = decode_adversary(mdp, &randoms, i);
            let win = winning_against(mdp, &allowed_edges(mdp, &sigma), dims, &cache);
            win.into_iter().map(|w| (!w).then_some(i)).collect::<Vec<_>>()
        })
        .reduce(
            || vec![None; n],
            |a, b| {
                a.into_iter()
                    .zip(b)
                    .map(|(x, y)| match (x, y) {
                        (Some(x), Some(y)) => Some(x.min(y)),
                        (x, y) => x.or(y),
                    })
                    .collect()
            },
        );
    let winning = spoilers.iter().map(Option::is_none).collect();
    let certificates = spoilers
        .iter()
        .enumerate()
        .filter_map(|(s, i)| i.map(|i| (s, decode_adversary(mdp, &randoms, i))))
        .collect();
    Ok(WinningRegion {
        winning,
        certificates,
    })
}

/// Replays a certificate: under `sigma`, `s` reaches no positive SCC.
pub fn certificate_holds(mdp: &Mdp, s: usize, sigma: &[(usize, usize)], dims: &[usize]) -> bool {
    let cache: Cache = Mutex::new(HashMap::new());
    !winning_against(mdp, &allowed_edges(mdp, sigma), dims, &cache)[s]
}

/// Value iteration on the projection to `dim`, with positional adversary
/// certificates. Returns `None` if a certificate fails to replay.
fn unidim_region(mdp: &Mdp, dim: usize) -> Option<WinningRegion> {
    let proj = mdp.project(&[dim]);
    let solved = solve_unidim(&proj);
    let winning: Vec<bool> = solved.values.iter().map(|v| v.is_positive()).collect();
    let sigma: AdversaryChoice = (0..mdp.n_states())
        .filter(|&s| mdp.is_random(s))
        .map(|s| (s, solved.choice[s]))
        .collect();
    let mut certificates = BTreeMap::new();
    let cache: Cache = Mutex::new(HashMap::new());
    let win = winning_against(&proj, &allowed_edges(&proj, &sigma), &[0], &cache);
    for s in 0..mdp.n_states() {
        if !winning[s] {
            if win[s] {
                return None;
            }
            certificates.insert(s, sigma.clone());
        }
    }
    Some(WinningRegion {
        winning,
        certificates,
    })
}

pub struct UnidimSolution {
    pub values: Vec<Rational>,
    /// A value-preserving edge per state, optimal for its owner at the last
    /// iteration.
    pub choice: Vec<usize>,
}

/// Exact values of the mean-payoff game on a one-dimensional MDP where the
/// controller maximizes and random states minimize.
///
/// Runs `k = 4 n^3 W` rounds of value iteration, then rounds each `v_k / k`
/// to the unique rational with denominator at most `n` in the error window.
pub fn wc_value_unidim(mdp: &Mdp) -> Result<Vec<Rational>> {
    if mdp.dimension() != 1 {
        return Err(Error::NotUnidimensional(mdp.dimension()));
    }
    Ok(solve_unidim(mdp).values)
}

pub fn solve_unidim(mdp: &Mdp) -> UnidimSolution {
    assert_eq!(mdp.dimension(), 1);
    let n = mdp.n_states() as i64;
    let w = mdp.max_abs_weight();
    let k = 4 * n * n * n * w;
    let mut v = vec![0i64; mdp.n_states()];
    let mut prev = v.clone();
    let step = |prev: &[i64], s: usize| -> (i64, usize) {
        let outs = mdp.out_edges(s).iter().map(|&e| {
            let edge = mdp.edge(e);
            (edge.weight[0] + prev[edge.to], e)
        });
        if mdp.is_random(s) {
            outs.min_by_key(|&(x, _)| x).expect("successor")
        } else {
            outs.max_by_key(|&(x, _)| x).expect("successor")
        }
    };
    for _ in 0..k {
        std::mem::swap(&mut v, &mut prev);
        for s in 0..mdp.n_states() {
            v[s] = step(&prev, s).0;
        }
    }
    let values: Vec<Rational> = if k == 0 {
        vec![rational::zero(); mdp.n_states()]
    } else {
        v.iter().map(|&x| round_value(x, k, n, w)).collect()
    };
    // Prefer value-preserving edges that were optimal in the last round.
    let choice = (0..mdp.n_states())
        .map(|s| {
            let keep: Vec<usize> = mdp
                .out_edges(s)
                .iter()
                .copied()
                .filter(|&e| values[mdp.edge(e).to] == values[s])
                .collect();
            let score = |e: usize| mdp.edge(e).weight[0] + prev[mdp.edge(e).to];
            let pick = if mdp.is_random(s) {
                keep.iter().copied().min_by_key(|&e| score(e))
            } else {
                keep.iter().copied().max_by_key(|&e| score(e))
            };
            pick.unwrap_or_else(|| step(&prev, s).1)
        })
        .collect();
    UnidimSolution { values, choice }
}

fn round_value(total: i64, k: i64, n: i64, w: i64) -> Rational {
    let approx = rational::ratio(total, k);
    let window = rational::ratio(2 * n * w, k);
    for q in 1..=n.max(1) {
        let p = (&approx * rational::int(q)).round();
        let candidate = p / rational::int(q);
        if (&candidate - &approx).abs() <= window {
            return candidate;
        }
    }
    // Unreachable for valid games; keep the closest integer as a fallback.
    approx.round()
}

/// Maximal winning end components: MECs on which the controller wins from
/// every state while staying inside, refined recursively.
pub fn mwecs(mdp: &Mdp, dims: &[usize], cap: u128) -> Result<Vec<EndComponent>> {
    let all = vec![true; mdp.n_states()];
    let mut out = Vec::new();
    mwecs_in(mdp, &all, dims, cap, &mut out)?;
    out.sort();
    Ok(out)
}

fn mwecs_in(
    mdp: &Mdp,
    alive: &[bool],
    dims: &[usize],
    cap: u128,
    out: &mut Vec<EndComponent>,
) -> Result<()> {
    for mec in mecs_within(mdp, alive) {
        let mask = mec.mask(mdp.n_states());
        let sub = mdp.induced(&mask, |_| true);
        let region = wc_winning_region(&sub, dims, cap)?;
        if region.all() {
            out.push(mec);
        } else {
            let keep: Vec<usize> = region
                .states()
                .into_iter()
                .map(|s| mdp.lift_state(&sub, s))
                .collect();
            if !keep.is_empty() {
                mwecs_in(mdp, &mask_of(mdp.n_states(), &keep), dims, cap, out)?;
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub enum Pruned {
    Mdp(Mdp),
    Unsatisfiable,
}

/// Keeps the worst-case winning states reachable from `s0` inside the
/// winning region. The result has `s0` as its initial state.
pub fn prune(mdp: &Mdp, s0: usize, dims: &[usize], cap: u128) -> Result<Pruned> {
    let region = wc_winning_region(mdp, dims, cap)?;
    Ok(prune_with(mdp, s0, &region))
}

pub fn prune_with(mdp: &Mdp, s0: usize, region: &WinningRegion) -> Pruned {
    if !region.winning[s0] {
        return Pruned::Unsatisfiable;
    }
    let inside = region.winning.clone();
    let reach = crate::decomposition::reachable_mask_with(mdp, s0, |e| {
        inside[mdp.edge(e).from] && inside[mdp.edge(e).to]
    });
    let keep: Vec<bool> = (0..mdp.n_states()).map(|s| inside[s] && reach[s]).collect();
    let sub = mdp.induced(&keep, |_| true);
    let init = sub.state_index(&mdp.state(s0).id);
    Pruned::Mdp(sub.with_initial(init))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{fixture, Fixture};
    use crate::model::{EdgeSpec, Owner, State};
    use crate::rational::{int, ratio};

    fn ids(mdp: &Mdp, states: &[usize]) -> Vec<String> {
        states.iter().map(|&s| mdp.state(s).id.clone()).collect()
    }

    #[test]
    fn multicycle_examples() {
        let m = fixture(Fixture::RunEx);
        let all = vec![true; m.n_edges()];
        let t = m.require_state("t").unwrap();
        assert_eq!(positive_multicycle(&m, &[t], &all, &[0, 1]), Some(int(5)));
        let u = m.require_state("u").unwrap();
        let v = m.require_state("v").unwrap();
        let mut forced = all.clone();
        forced[m.edge_index(5).unwrap()] = false;
        assert_eq!(positive_multicycle(&m, &[u, v], &forced, &[0, 1]), Some(int(-30)));
        let a = fixture(Fixture::ApproxEx);
        let all = vec![true; a.n_edges()];
        assert_eq!(positive_multicycle(&a, &[0, 1], &all, &[0, 1]), Some(ratio(1, 2)));
        let s = m.require_state("s").unwrap();
        assert_eq!(positive_multicycle(&m, &[s], &[true; 7], &[0, 1]), None);
    }

    #[test]
    fn regions() {
        let m = fixture(Fixture::RunEx);
        let r = wc_winning_region(&m, &[0, 1], DEFAULT_ADVERSARY_CAP).unwrap();
        assert!(r.all());
        let b = fixture(Fixture::RunExBas);
        let r = wc_winning_region(&b, &[0, 1], DEFAULT_ADVERSARY_CAP).unwrap();
        assert_eq!(ids(&b, &r.states()), vec!["s", "t"]);
        for (&s, sigma) in &r.certificates {
            assert!(certificate_holds(&b, s, sigma, &[0, 1]));
        }
        let lone = Mdp::new(
            1,
            vec![State {
                id: "a".into(),
                owner: Owner::Controller,
            }],
            vec![EdgeSpec {
                id: 0,
                from: "a".into(),
                to: "a".into(),
                weight: vec![-1],
                prob: None,
            }],
            Some("a"),
        )
        .unwrap();
        let r = wc_winning_region(&lone, &[0], DEFAULT_ADVERSARY_CAP).unwrap();
        assert!(r.states().is_empty());
        assert_eq!(wc_value_unidim(&lone.map_weights(1, |_| vec![7])).unwrap(), vec![int(7)]);
    }

    #[test]
    fn unidim_values() {
        // The u-v cycle pays 30 every other step in the first dimension, so
        // the controller prefers it to the t loop wherever it is available.
        let m = fixture(Fixture::RunEx).project(&[0]);
        assert_eq!(
            wc_value_unidim(&m).unwrap(),
            vec![int(15), int(5), int(15), int(15)]
        );
        let m = fixture(Fixture::RunEx).project(&[1]);
        assert_eq!(wc_value_unidim(&m).unwrap(), vec![int(15); 4]);
        let b = fixture(Fixture::RunExBas).project(&[1]);
        assert_eq!(
            wc_value_unidim(&b).unwrap(),
            vec![int(15), int(15), int(-30), int(-30)]
        );
        assert!(matches!(
            wc_value_unidim(&fixture(Fixture::RunEx)),
            Err(Error::NotUnidimensional(2))
        ));
    }

    #[test]
    fn enumeration_agrees_with_fast_path() {
        let b = fixture(Fixture::RunExBas);
        for d in 0..2 {
            let fast = wc_winning_region(&b, &[d], DEFAULT_ADVERSARY_CAP).unwrap();
            let slow = enumerate_region(&b, &[d], DEFAULT_ADVERSARY_CAP).unwrap();
            assert_eq!(fast.winning, slow.winning);
        }
    }

    #[test]
    fn adversary_cap() {
        let b = fixture(Fixture::RunEx);
        assert!(matches!(
            enumerate_region(&b, &[0, 1], 1),
            Err(Error::AdversaryCap { count: 2, cap: 1 })
        ));
    }

    #[test]
    fn mwec_examples() {
        let m = fixture(Fixture::RunEx);
        let got = mwecs(&m, &[0, 1], DEFAULT_ADVERSARY_CAP).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(ids(&m, &got[0].states), vec!["t"]);
        let b = fixture(Fixture::RunExBas);
        let got = mwecs(&b, &[0, 1], DEFAULT_ADVERSARY_CAP).unwrap();
        assert_eq!(ids(&b, &got[0].states), vec!["t"]);
    }

    #[test]
    fn task_ex_single_mwec() {
        let q = crate::model::ThresholdQuery::new(
            crate::model::Mode::BwcFinite,
            "0",
            vec![ratio(-49, 4), int(-64)],
            vec![ratio(-49, 4), ratio(-29, 4)],
        );
        let m = crate::fixtures::task_ex_negated();
        let (norm, _) = crate::model::normalize(&m, &q).unwrap();
        let dims = crate::model::nontrivial_dims(&q.mu, m.max_abs_weight());
        assert_eq!(dims, vec![0]);
        let got = mwecs(&norm, &dims, DEFAULT_ADVERSARY_CAP).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].states.len(), 6);
    }

    #[test]
    fn pruning() {
        let m = fixture(Fixture::RunEx);
        match prune(&m, 0, &[0, 1], DEFAULT_ADVERSARY_CAP).unwrap() {
            Pruned::Mdp(p) => assert_eq!(p, m),
            Pruned::Unsatisfiable => panic!(),
        }
        let b = fixture(Fixture::RunExBas);
        match prune(&b, 0, &[0, 1], DEFAULT_ADVERSARY_CAP).unwrap() {
            Pruned::Mdp(p) => {
                assert_eq!(ids(&p, &(0..p.n_states()).collect::<Vec<_>>()), vec!["s", "t"]);
                let e: Vec<u64> = p.edges().iter().map(|e| e.id).collect();
                assert_eq!(e, vec![0, 2]);
                assert!(crate::model::validate(&p).is_empty());
            }
            Pruned::Unsatisfiable => panic!(),
        }
        let u = b.require_state("u").unwrap();
        assert!(matches!(
            prune(&b, u, &[0, 1], DEFAULT_ADVERSARY_CAP).unwrap(),
            Pruned::Unsatisfiable
        ));
    }
}
