//! Brute-force oracles and random instance generators shared by the
//! integration tests.
#![allow(dead_code)]

use bwc_core::lp::{LinearSystem, Relation};
use bwc_core::model::{EdgeSpec, Mdp, Mode, Owner, State, ThresholdQuery};
use bwc_core::rational::{int, ratio, Rational};
use num_traits::{Signed, Zero};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Splits `q` into `k` positive integer parts.
fn composition(rng: &mut ChaCha8Rng, q: i64, k: usize) -> Vec<i64> {
    let mut parts = vec![1i64; k];
    for _ in 0..(q - k as i64) {
        parts[rng.random_range(0..k)] += 1;
    }
    parts
}

/// A random MDP with at most `max_states` states, dimension `d`, integer
/// weights in [-w, w] and probability denominators at most 4. State 0 is
/// initial; every state has between one and three distinct successors.
pub fn random_mdp(rng: &mut ChaCha8Rng, max_states: usize, d: usize, w: i64) -> Mdp {
    let n = rng.random_range(1..=max_states);
    let states: Vec<State> = (0..n)
        .map(|i| State {
            id: format!("q{i}"),
            owner: if rng.random_bool(0.4) { Owner::Random } else { Owner::Controller },
        })
        .collect();
    let mut edges = Vec::new();
    for s in &states {
        let k = rng.random_range(1..=3.min(n));
        let all: Vec<usize> = (0..n).collect();
        let targets: Vec<usize> = all.choose_multiple(rng, k).copied().collect();
        let probs = match s.owner {
            Owner::Random => {
                let q = rng.random_range(k as i64..=4);
                composition(rng, q, k).into_iter().map(|p| Some(ratio(p, q))).collect()
            }
            Owner::Controller => vec![None; k],
        };
        for (t, p) in targets.into_iter().zip(probs) {
            edges.push(EdgeSpec {
                id: edges.len() as u64,
                from: s.id.clone(),
                to: format!("q{t}"),
                weight: (0..d).map(|_| rng.random_range(-w..=w)).collect(),
                prob: p,
            });
        }
    }
    Mdp::new(d, states, edges, Some("q0")).expect("generated MDP")
}

/// A threshold component in [-3, 3] with step 1/2.
pub fn random_threshold(rng: &mut ChaCha8Rng) -> Rational {
    ratio(rng.random_range(-6..=6), 2)
}

pub fn query(mode: Mode, mu: Vec<Rational>, nu: Vec<Rational>) -> ThresholdQuery {
    ThresholdQuery::new(mode, "q0", mu, nu)
}

/// Mean payoff of the lasso from `s` when every state has exactly one
/// successor edge `pick[s]`.
fn lasso_mean(mdp: &Mdp, pick: &[usize], s: usize) -> Rational {
    let mut seen = vec![usize::MAX; mdp.n_states()];
    let mut path = Vec::new();
    let mut v = s;
    while seen[v] == usize::MAX {
        seen[v] = path.len();
        path.push(v);
        v = mdp.edge(pick[v]).to;
    }
    let cycle = &path[seen[v]..];
    let total: i64 = cycle.iter().map(|&u| mdp.edge(pick[u]).weight[0]).sum();
    ratio(total, cycle.len() as i64)
}

/// Values of the one-dimensional mean-payoff game (controller maximizes,
/// random states minimize) by max-min over all memoryless pure strategy
/// pairs.
pub fn brute_unidim_values(mdp: &Mdp) -> Vec<Rational> {
    let ctrl: Vec<usize> = (0..mdp.n_states()).filter(|&s| mdp.is_controller(s)).collect();
    let rand: Vec<usize> = (0..mdp.n_states()).filter(|&s| mdp.is_random(s)).collect();
    let count = |set: &[usize]| set.iter().map(|&s| mdp.out_edges(s).len()).product::<usize>();
    let decode = |set: &[usize], mut index: usize, pick: &mut Vec<usize>| {
        for &s in set {
            let outs = mdp.out_edges(s);
            pick[s] = outs[index % outs.len()];
            index /= outs.len();
        }
    };
    let mut best: Vec<Option<Rational>> = vec![None; mdp.n_states()];
    let mut pick = vec![0usize; mdp.n_states()];
    for i in 0..count(&ctrl) {
        decode(&ctrl, i, &mut pick);
        let mut worst: Vec<Option<Rational>> = vec![None; mdp.n_states()];
        for j in 0..count(&rand) {
            decode(&rand, j, &mut pick);
            for s in 0..mdp.n_states() {
                let m = lasso_mean(mdp, &pick, s);
                if worst[s].as_ref().is_none_or(|w| m < *w) {
                    worst[s] = Some(m);
                }
            }
        }
        for s in 0..mdp.n_states() {
            let w = worst[s].clone().expect("one adversary at least");
            if best[s].as_ref().is_none_or(|b| w > *b) {
                best[s] = Some(w);
            }
        }
    }
    best.into_iter().map(|b| b.expect("one strategy at least")).collect()
}

/// Rows `a·z (=|<=) b` over the variables of a system plus one slack `y`.
struct Rows {
    eq: Vec<(Vec<Rational>, Rational)>,
    le: Vec<(Vec<Rational>, Rational)>,
}

fn rows(system: &LinearSystem) -> Rows {
    let n = system.n_vars();
    let y = n;
    let mut out = Rows { eq: Vec::new(), le: Vec::new() };
    for c in &system.constraints {
        let mut a = vec![Rational::zero(); n + 1];
        for (v, k) in &c.terms {
            a[*v] += k;
        }
        let neg = |a: &[Rational]| a.iter().map(|x| -x).collect::<Vec<_>>();
        match c.relation {
            Relation::Eq => out.eq.push((a, c.rhs.clone())),
            Relation::Le => out.le.push((a, c.rhs.clone())),
            Relation::Ge => out.le.push((neg(&a), -c.rhs.clone())),
            Relation::Lt => {
                a[y] = int(1);
                out.le.push((a, c.rhs.clone()));
            }
            Relation::Gt => {
                let mut a = neg(&a);
                a[y] = int(1);
                out.le.push((a, -c.rhs.clone()));
            }
        }
    }
    for v in 0..=n {
        if v < n && !system.nonneg {
            continue;
        }
        let mut a = vec![Rational::zero(); n + 1];
        a[v] = int(-1);
        out.le.push((a, Rational::zero()));
    }
    let mut cap = vec![Rational::zero(); n + 1];
    cap[y] = int(1);
    out.le.push((cap, int(1)));
    out
}

/// Unique solution of a square system, if the matrix is regular.
fn solve_square(mut a: Vec<Vec<Rational>>, mut b: Vec<Rational>) -> Option<Vec<Rational>> {
    let n = b.len();
    for col in 0..n {
        let p = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, p);
        b.swap(col, p);
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let f = &a[r][col] / &a[col][col];
                for c in col..n {
                    let d = &f * &a[col][c];
                    a[r][c] -= d;
                }
                let d = &f * &b[col];
                b[r] -= d;
            }
        }
    }
    Some((0..n).map(|i| &b[i] / &a[i][i]).collect())
}

fn dot(a: &[Rational], x: &[Rational]) -> Rational {
    a.iter().zip(x).map(|(p, q)| p * q).sum()
}

/// Largest slack `y <= 1` over the vertices of the relaxed polyhedron, by
/// enumerating every choice of tight rows. `None` when there is no vertex.
/// Only valid for non-negative systems, whose polyhedra are pointed.
pub fn vertex_max_slack(system: &LinearSystem) -> Option<Rational> {
    assert!(system.nonneg, "vertex enumeration needs a pointed polyhedron");
    let r = rows(system);
    let n = system.n_vars() + 1;
    let all: Vec<&(Vec<Rational>, Rational)> = r.eq.iter().chain(&r.le).collect();
    let mut best: Option<Rational> = None;
    let m = all.len();
    let mut pick: Vec<usize> = (0..n).collect();
    if m < n {
        return None;
    }
    loop {
        let a: Vec<Vec<Rational>> = pick.iter().map(|&i| all[i].0.clone()).collect();
        let b: Vec<Rational> = pick.iter().map(|&i| all[i].1.clone()).collect();
        if let Some(z) = solve_square(a, b) {
            let ok = r.eq.iter().all(|(a, b)| dot(a, &z) == *b) && r.le.iter().all(|(a, b)| dot(a, &z) <= *b);
            if ok && best.as_ref().is_none_or(|y| z[n - 1] > *y) {
                best = Some(z[n - 1].clone());
            }
        }
        // next combination
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if pick[i] < m - n + i {
                pick[i] += 1;
                for j in i + 1..n {
                    pick[j] = pick[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Feasibility of a system with strict rows by vertex enumeration.
pub fn vertex_feasible(system: &LinearSystem) -> bool {
    match vertex_max_slack(system) {
        None => false,
        Some(y) => !system.has_strict() || y.is_positive(),
    }
}

/// A random non-negative system with `vars` variables and `rows` rows.
pub fn random_system(rng: &mut ChaCha8Rng, vars: usize, rows: usize) -> LinearSystem {
    let mut s = LinearSystem::new(true);
    for i in 0..vars {
        s.var(format!("x{i}"));
    }
    let relations = [Relation::Eq, Relation::Ge, Relation::Gt, Relation::Le, Relation::Lt];
    for r in 0..rows {
        let mut terms: Vec<(usize, Rational)> = Vec::new();
        for v in 0..vars {
            if rng.random_bool(0.7) {
                terms.push((v, int(rng.random_range(-3..=3))));
            }
        }
        let rel = *relations.choose(rng).unwrap();
        s.add(format!("r{r}"), terms, rel, int(rng.random_range(-4..=4)));
    }
    s
}
