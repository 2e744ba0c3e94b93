//! Multi-weighted Markov decision processes and threshold queries.

use std::collections::HashMap;
use std::fmt;

use num_integer::Integer;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{self, Rational};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Owner {
    Controller,
    Random,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct State {
    pub id: String,
    pub owner: Owner,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub id: u64,
    pub from: usize,
    pub to: usize,
    pub weight: Vec<i64>,
    /// Defined exactly for edges leaving random states.
    pub prob: Option<Rational>,
}

/// A multi-weighted game graph with a controller/random partition.
///
/// States and edges keep their declared order; every iteration in the crate
/// follows it. Parallel edges are allowed and are told apart by edge id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mdp {
    dimension: usize,
    states: Vec<State>,
    edges: Vec<Edge>,
    initial: Option<usize>,
    state_index: HashMap<String, usize>,
    edge_index: HashMap<u64, usize>,
    out_edges: Vec<Vec<usize>>,
    in_edges: Vec<Vec<usize>>,
}

/// Edge description using state identifiers, as found in files.
#[derive(Clone, Debug)]
pub struct EdgeSpec {
    pub id: u64,
    pub from: String,
    pub to: String,
    pub weight: Vec<i64>,
    pub prob: Option<Rational>,
}

impl Mdp {
    pub fn new(
        dimension: usize,
        states: Vec<State>,
        edges: Vec<EdgeSpec>,
        initial: Option<&str>,
    ) -> Result<Mdp> {
        let mut state_index = HashMap::new();
        for (i, s) in states.iter().enumerate() {
            if state_index.insert(s.id.clone(), i).is_some() {
                return Err(Error::InvalidMdp(format!("duplicate state id `{}`", s.id)));
            }
        }
        let lookup = |id: &str| {
            state_index
                .get(id)
                .copied()
                .ok_or_else(|| Error::UnknownState(id.to_string()))
        };
        let edges = edges
            .into_iter()
            .map(|e| {
                Ok(Edge {
                    id: e.id,
                    from: lookup(&e.from)?,
                    to: lookup(&e.to)?,
                    weight: e.weight,
                    prob: e.prob,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let initial = initial.map(lookup).transpose()?;
        Mdp::from_indexed(dimension, states, edges, initial)
    }

    pub(crate) fn from_indexed(
        dimension: usize,
        states: Vec<State>,
        edges: Vec<Edge>,
        initial: Option<usize>,
    ) -> Result<Mdp> {
        if dimension == 0 {
            return Err(Error::InvalidMdp("dimension must be positive".into()));
        }
        let state_index: HashMap<String, usize> = states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.clone(), i))
            .collect();
        let mut edge_index = HashMap::new();
        let mut out_edges = vec![Vec::new(); states.len()];
        let mut in_edges = vec![Vec::new(); states.len()];
        for (i, e) in edges.iter().enumerate() {
            if edge_index.insert(e.id, i).is_some() {
                return Err(Error::InvalidMdp(format!("duplicate edge id {}", e.id)));
            }
            out_edges[e.from].push(i);
            in_edges[e.to].push(i);
        }
        Ok(Mdp {
            dimension,
            states,
            edges,
            initial,
            state_index,
            edge_index,
            out_edges,
            in_edges,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn state(&self, s: usize) -> &State {
        &self.states[s]
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    pub fn initial(&self) -> Option<usize> {
        self.initial
    }

    pub fn state_index(&self, id: &str) -> Option<usize> {
        self.state_index.get(id).copied()
    }

    pub fn require_state(&self, id: &str) -> Result<usize> {
        self.state_index(id)
            .ok_or_else(|| Error::UnknownState(id.to_string()))
    }

    pub fn edge_index(&self, id: u64) -> Option<usize> {
        self.edge_index.get(&id).copied()
    }

    pub fn out_edges(&self, s: usize) -> &[usize] {
        &self.out_edges[s]
    }

    pub fn in_edges(&self, s: usize) -> &[usize] {
        &self.in_edges[s]
    }

    pub fn is_random(&self, s: usize) -> bool {
        self.states[s].owner == Owner::Random
    }

    pub fn is_controller(&self, s: usize) -> bool {
        self.states[s].owner == Owner::Controller
    }

    /// Probability of an edge under the stochastic semantics (1 is never used
    /// for controller edges; callers only ask for random ones).
    pub fn prob(&self, e: usize) -> Rational {
        self.edges[e].prob.clone().unwrap_or_else(rational::one)
    }

    /// Largest absolute weight component, `W`.
    pub fn max_abs_weight(&self) -> i64 {
        self.edges
            .iter()
            .flat_map(|e| e.weight.iter())
            .map(|w| w.abs())
            .max()
            .unwrap_or(0)
    }

    /// Largest denominator among random-edge probabilities, `Q`.
    pub fn max_denominator(&self) -> i64 {
        self.edges
            .iter()
            .filter_map(|e| e.prob.as_ref())
            .filter_map(|p| p.denom().to_i64())
            .max()
            .unwrap_or(1)
    }

    /// The same graph with the initial state replaced.
    pub fn with_initial(&self, initial: Option<usize>) -> Mdp {
        let mut m = self.clone();
        m.initial = initial;
        m
    }

    /// Keeps the given states and those edges (among their internal edges)
    /// accepted by `keep_edge`. Ids are preserved, so strategies built on
    /// the result remain meaningful on `self`.
    pub fn induced(&self, keep_state: &[bool], keep_edge: impl Fn(usize) -> bool) -> Mdp {
        let mut map = vec![usize::MAX; self.n_states()];
        let mut states = Vec::new();
        for (i, s) in self.states.iter().enumerate() {
            if keep_state[i] {
                map[i] = states.len();
                states.push(s.clone());
            }
        }
        let edges = self
            .edges
            .iter()
            .enumerate()
            .filter(|(i, e)| keep_state[e.from] && keep_state[e.to] && keep_edge(*i))
            .map(|(_, e)| Edge {
                from: map[e.from],
                to: map[e.to],
                ..e.clone()
            })
            .collect();
        let initial = self
            .initial
            .filter(|&s| keep_state[s])
            .map(|s| map[s]);
        Mdp::from_indexed(self.dimension, states, edges, initial).expect("induced sub-MDP")
    }

    /// Same graph, weights replaced edge by edge.
    pub fn map_weights(&self, dimension: usize, f: impl Fn(&Edge) -> Vec<i64>) -> Mdp {
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                weight: f(e),
                ..e.clone()
            })
            .collect();
        Mdp::from_indexed(dimension, self.states.clone(), edges, self.initial).expect("reweighted MDP")
    }

    /// Keeps only the listed weight components.
    pub fn project(&self, dims: &[usize]) -> Mdp {
        self.map_weights(dims.len(), |e| dims.iter().map(|&i| e.weight[i]).collect())
    }

    /// Translates a sub-MDP state index into this MDP's index.
    pub fn lift_state(&self, sub: &Mdp, s: usize) -> usize {
        self.state_index[&sub.states[s].id]
    }

    pub fn lift_edge(&self, sub: &Mdp, e: usize) -> usize {
        self.edge_index[&sub.edges[e].id]
    }
}

/// One violated model invariant.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub subject: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}", self.message, self.subject)
    }
}

/// Lists every violated invariant; an empty report means the MDP is valid.
pub fn validate(mdp: &Mdp) -> Vec<Violation> {
    let mut report = Vec::new();
    let mut push = |subject: String, message: &str| {
        report.push(Violation {
            subject,
            message: message.to_string(),
        })
    };
    for e in mdp.edges() {
        let subject = format!("edge {}", e.id);
        if e.weight.len() != mdp.dimension() {
            push(subject.clone(), "weight length differs from dimension");
        }
        let from_random = mdp.is_random(e.from);
        match (&e.prob, from_random) {
            (None, true) => push(subject.clone(), "missing probability on random edge"),
            (Some(_), false) => push(subject.clone(), "probability on controller edge"),
            _ => {}
        }
    }
    for (s, state) in mdp.states().iter().enumerate() {
        if mdp.out_edges(s).is_empty() {
            push(state.id.clone(), "no successor");
        }
        if mdp.is_random(s) {
            let mut total = rational::zero();
            for &e in mdp.out_edges(s) {
                if let Some(p) = &mdp.edge(e).prob {
                    if p.is_zero() {
                        push(state.id.clone(), "zero-probability edge");
                    } else if p.is_negative() {
                        push(state.id.clone(), "negative probability");
                    }
                    total += p;
                }
            }
            if !mdp.out_edges(s).is_empty() && total != rational::one() {
                push(state.id.clone(), "probabilities do not sum to 1");
            }
        }
    }
    report
}

pub fn ensure_valid(mdp: &Mdp) -> Result<()> {
    let report = validate(mdp);
    if report.is_empty() {
        Ok(())
    } else {
        let text: Vec<String> = report.iter().map(|v| v.to_string()).collect();
        Err(Error::InvalidMdp(text.join("; ")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "wc")]
    WorstCase,
    #[serde(rename = "exp")]
    Expectation,
    #[serde(rename = "bas")]
    BeyondAlmostSure,
    #[serde(rename = "bwc-fin")]
    BwcFinite,
    #[serde(rename = "bwc-inf")]
    BwcInfinite,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::WorstCase,
        Mode::Expectation,
        Mode::BeyondAlmostSure,
        Mode::BwcFinite,
        Mode::BwcInfinite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::WorstCase => "wc",
            Mode::Expectation => "exp",
            Mode::BeyondAlmostSure => "bas",
            Mode::BwcFinite => "bwc-fin",
            Mode::BwcInfinite => "bwc-inf",
        }
    }

    pub fn uses_mu(self) -> bool {
        self != Mode::Expectation
    }

    pub fn uses_nu(self) -> bool {
        self != Mode::WorstCase
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Mode> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown mode `{s}`")))
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ThresholdQuery {
    pub mode: Mode,
    pub from: String,
    pub mu: Vec<Rational>,
    pub nu: Vec<Rational>,
}

impl ThresholdQuery {
    pub fn new(mode: Mode, from: &str, mu: Vec<Rational>, nu: Vec<Rational>) -> ThresholdQuery {
        ThresholdQuery {
            mode,
            from: from.to_string(),
            mu,
            nu,
        }
    }

    pub fn check_dimensions(&self, d: usize) -> Result<()> {
        for v in [&self.mu, &self.nu] {
            if v.len() != d {
                return Err(Error::Dimension {
                    expected: d,
                    got: v.len(),
                });
            }
        }
        Ok(())
    }
}

/// Shifts weights so the worst-case threshold becomes zero and clamps the
/// expectation threshold at zero.
///
/// Component `i` with `mu[i] = a/b` maps every weight `w` to `w*b - a` and
/// `nu[i]` to `max(0, nu[i]*b - a)`. Weights stay integral.
pub fn normalize(mdp: &Mdp, query: &ThresholdQuery) -> Result<(Mdp, ThresholdQuery)> {
    query.check_dimensions(mdp.dimension())?;
    let scale: Vec<(i64, i64)> = query
        .mu
        .iter()
        .map(|m| {
            let b = m.denom().to_i64().expect("threshold denominator too large");
            let a = m.numer().to_i64().expect("threshold numerator too large");
            (a, b)
        })
        .collect();
    let shifted = mdp.map_weights(mdp.dimension(), |e| {
        e.weight
            .iter()
            .zip(&scale)
            .map(|(&w, &(a, b))| w * b - a)
            .collect()
    });
    let nu = query
        .nu
        .iter()
        .zip(&scale)
        .map(|(n, &(a, b))| {
            let v = n * rational::int(b) - rational::int(a);
            if v.is_negative() {
                rational::zero()
            } else {
                v
            }
        })
        .collect();
    let normalized = ThresholdQuery {
        mode: query.mode,
        from: query.from.clone(),
        mu: vec![rational::zero(); mdp.dimension()],
        nu,
    };
    Ok((shifted, normalized))
}

/// Dimensions whose worst-case threshold is at most `-W` and can be ignored
/// when solving worst-case problems. With `W = 0` every mean payoff is 0, so
/// no threshold is trivial.
pub fn detect_trivial(mu: &[Rational], max_abs_weight: i64) -> Vec<usize> {
    if max_abs_weight == 0 {
        return Vec::new();
    }
    let bound = rational::int(-max_abs_weight);
    mu.iter()
        .enumerate()
        .filter(|(_, m)| **m <= bound)
        .map(|(i, _)| i)
        .collect()
}

/// Complement of [`detect_trivial`].
pub fn nontrivial_dims(mu: &[Rational], max_abs_weight: i64) -> Vec<usize> {
    let trivial = detect_trivial(mu, max_abs_weight);
    (0..mu.len()).filter(|i| !trivial.contains(i)).collect()
}

/// Greatest common divisor helper for integer weight vectors.
pub fn gcd_all(values: impl IntoIterator<Item = i64>) -> i64 {
    values.into_iter().fold(0i64, |g, v| g.gcd(&v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{fixture, Fixture};
    use crate::rational::{int, ratio};

    fn single_loop(weight: i64) -> Mdp {
        Mdp::new(
            1,
            vec![State {
                id: "a".into(),
                owner: Owner::Controller,
            }],
            vec![EdgeSpec {
                id: 0,
                from: "a".into(),
                to: "a".into(),
                weight: vec![weight],
                prob: None,
            }],
            Some("a"),
        )
        .unwrap()
    }

    #[test]
    fn fixtures_are_valid() {
        for f in Fixture::ALL {
            assert!(validate(&fixture(f)).is_empty(), "{f:?}");
        }
    }

    #[test]
    fn zero_probability_is_reported() {
        let mdp = fixture(Fixture::RunEx);
        let v = mdp.require_state("v").unwrap();
        let edges = mdp
            .edges()
            .iter()
            .map(|e| EdgeSpec {
                id: e.id,
                from: mdp.state(e.from).id.clone(),
                to: mdp.state(e.to).id.clone(),
                weight: e.weight.clone(),
                prob: if e.from == v && e.prob.is_some() && e.id == mdp.edge(mdp.out_edges(v)[0]).id {
                    Some(int(0))
                } else {
                    e.prob.clone()
                },
            })
            .collect();
        let broken = Mdp::new(2, mdp.states().to_vec(), edges, Some("s")).unwrap();
        let report = validate(&broken);
        assert!(report
            .iter()
            .any(|r| r.subject == "v" && r.message == "zero-probability edge"));
    }

    #[test]
    fn missing_successor_is_reported() {
        let mdp = fixture(Fixture::RunEx);
        let t = mdp.require_state("t").unwrap();
        let keep = vec![true; mdp.n_states()];
        let broken = mdp.induced(&keep, |e| !(mdp.edge(e).from == t && mdp.edge(e).to == t));
        let report = validate(&broken);
        assert_eq!(
            report,
            vec![Violation {
                subject: "t".into(),
                message: "no successor".into()
            }]
        );
    }

    #[test]
    fn max_abs_weight_values() {
        assert_eq!(fixture(Fixture::RunEx).max_abs_weight(), 80);
        assert_eq!(fixture(Fixture::TaskEx).max_abs_weight(), 64);
        assert_eq!(single_loop(0).max_abs_weight(), 0);
    }

    #[test]
    fn normalize_identity_when_already_normal() {
        let mdp = fixture(Fixture::RunEx);
        let q = ThresholdQuery::new(Mode::BwcFinite, "s", vec![int(0), int(0)], vec![int(0), int(9)]);
        let (m2, q2) = normalize(&mdp, &q).unwrap();
        assert_eq!(m2, mdp);
        assert_eq!(q2, q);
    }

    #[test]
    fn normalize_scales_by_denominator() {
        let mdp = single_loop(1);
        let q = ThresholdQuery::new(Mode::BwcFinite, "a", vec![ratio(1, 2)], vec![ratio(3, 4)]);
        let (m2, q2) = normalize(&mdp, &q).unwrap();
        assert_eq!(m2.edge(0).weight, vec![1]);
        assert_eq!(q2.nu, vec![ratio(1, 2)]);
        assert_eq!(q2.mu, vec![int(0)]);
    }

    #[test]
    fn normalize_clamps_nu() {
        let mdp = single_loop(3);
        let q = ThresholdQuery::new(Mode::BwcFinite, "a", vec![int(2)], vec![int(-5)]);
        let (m2, q2) = normalize(&mdp, &q).unwrap();
        assert_eq!(m2.edge(0).weight, vec![1]);
        assert_eq!(q2.nu, vec![int(0)]);
    }

    #[test]
    fn normalize_is_idempotent() {
        let mdp = fixture(Fixture::TaskEx);
        let q = ThresholdQuery::new(
            Mode::BwcFinite,
            "0",
            vec![ratio(-49, 4), int(-64)],
            vec![ratio(-49, 4), ratio(-29, 4)],
        );
        let once = normalize(&mdp, &q).unwrap();
        let twice = normalize(&once.0, &once.1).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn trivial_dimensions() {
        assert_eq!(detect_trivial(&[ratio(-49, 4), int(-64)], 64), vec![1]);
        assert!(detect_trivial(&[int(0), int(0)], 64).is_empty());
        assert_eq!(detect_trivial(&[int(-100), int(-100)], 64), vec![0, 1]);
        assert!(detect_trivial(&[int(0)], 0).is_empty());
    }
}
