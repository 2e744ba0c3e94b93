//! Stochastic Moore machines.
//!
//! The update observes the edge just taken (and therefore its target), which
//! keeps parallel edges apart. A play at state `s` with memory `m` picks an
//! edge from `output(s, m)` (controller) or the MDP distribution (random),
//! then draws the next memory from `update(edge, m)`.

use std::collections::{HashMap, VecDeque};
use std::hash::Hash;

use num_traits::{One, Signed, Zero};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::model::Mdp;
use crate::rational::{self, Rational};

pub type Dist<T> = Vec<(T, Rational)>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StrategyMachine {
    pub memory: Vec<String>,
    pub initial: Dist<usize>,
    /// `(edge index, memory) -> next memory`.
    pub update: HashMap<(usize, usize), Dist<usize>>,
    /// `(controller state index, memory) -> edge`.
    pub output: HashMap<(usize, usize), Dist<usize>>,
}

fn check_dist<T>(d: &Dist<T>, what: &str) -> Result<()> {
    if d.iter().any(|(_, p)| !p.is_positive()) {
        return Err(Error::Strategy(format!("{what}: non-positive probability")));
    }
    let total: Rational = d.iter().map(|(_, p)| p.clone()).sum();
    if !total.is_one() {
        return Err(Error::Strategy(format!("{what}: probabilities sum to {}", rational::format(&total))));
    }
    Ok(())
}

impl StrategyMachine {
    /// A memoryless machine playing `choice[s]` at every controller state.
    pub fn memoryless(mdp: &Mdp, choice: &[Dist<usize>]) -> StrategyMachine {
        let mut output = HashMap::new();
        for s in 0..mdp.n_states() {
            if mdp.is_controller(s) {
                output.insert((s, 0), choice[s].clone());
            }
        }
        let update = (0..mdp.n_edges())
            .map(|e| ((e, 0), vec![(0, rational::one())]))
            .collect();
        StrategyMachine {
            memory: vec!["m0".into()],
            initial: vec![(0, rational::one())],
            update,
            output,
        }
    }

    pub fn memory_size(&self) -> usize {
        self.memory.len()
    }

    /// Support and normalization checks against `mdp`.
    pub fn check(&self, mdp: &Mdp) -> Result<()> {
        let m = self.memory.len();
        check_dist(&self.initial, "initial")?;
        if self.initial.iter().any(|(k, _)| *k >= m) {
            return Err(Error::Strategy("initial memory out of range".into()));
        }
        for (&(e, k), d) in &self.update {
            if e >= mdp.n_edges() || k >= m || d.iter().any(|(j, _)| *j >= m) {
                return Err(Error::Strategy("update refers to unknown edge or memory".into()));
            }
            check_dist(d, &format!("update(e{}, {})", mdp.edge(e).id, self.memory[k]))?;
        }
        for (&(s, k), d) in &self.output {
            if s >= mdp.n_states() || k >= m {
                return Err(Error::Strategy("output refers to unknown state or memory".into()));
            }
            let what = format!("output({}, {})", mdp.state(s).id, self.memory[k]);
            if mdp.is_random(s) {
                return Err(Error::Strategy(format!("{what}: random state")));
            }
            if d.iter().any(|(e, _)| *e >= mdp.n_edges() || mdp.edge(*e).from != s) {
                return Err(Error::Strategy(format!("{what}: edge outside E(s)")));
            }
            check_dist(d, &what)?;
        }
        Ok(())
    }

    pub fn output_at(&self, mdp: &Mdp, s: usize, m: usize) -> Result<&Dist<usize>> {
        self.output.get(&(s, m)).ok_or_else(|| {
            Error::Strategy(format!("no output for ({}, {})", mdp.state(s).id, self.memory[m]))
        })
    }

    pub fn update_at(&self, mdp: &Mdp, e: usize, m: usize) -> Result<&Dist<usize>> {
        self.update.get(&(e, m)).ok_or_else(|| {
            Error::Strategy(format!("no update for (e{}, {})", mdp.edge(e).id, self.memory[m]))
        })
    }

    /// Re-indexes a machine built on `sub` (a sub-MDP with shared ids) for
    /// `full`.
    pub fn lift(&self, sub: &Mdp, full: &Mdp) -> StrategyMachine {
        StrategyMachine {
            memory: self.memory.clone(),
            initial: self.initial.clone(),
            update: self
                .update
                .iter()
                .map(|(&(e, m), d)| ((full.lift_edge(sub, e), m), d.clone()))
                .collect(),
            output: self
                .output
                .iter()
                .map(|(&(s, m), d)| {
                    let d = d.iter().map(|(e, p)| (full.lift_edge(sub, *e), p.clone())).collect();
                    ((full.lift_state(sub, s), m), d)
                })
                .collect(),
        }
    }

    pub fn to_json(&self, mdp: &Mdp) -> Value {
        let dist = |d: &Dist<usize>, name: &dyn Fn(usize) -> String| -> Value {
            let m: Map<String, Value> = d
                .iter()
                .map(|(k, p)| (name(*k), Value::String(rational::format(p))))
                .collect();
            Value::Object(m)
        };
        let mem = |k: usize| self.memory[k].clone();
        let edge = |e: usize| mdp.edge(e).id.to_string();
        let update: Map<String, Value> = self
            .update
            .iter()
            .map(|(&(e, m), d)| (format!("{},{}", mdp.edge(e).id, self.memory[m]), dist(d, &mem)))
            .collect();
        let output: Map<String, Value> = self
            .output
            .iter()
            .map(|(&(s, m), d)| (format!("{},{}", mdp.state(s).id, self.memory[m]), dist(d, &edge)))
            .collect();
        json!({
            "memory": self.memory,
            "initial": dist(&self.initial, &mem),
            "update": update,
            "output": output,
        })
    }

    pub fn from_json(mdp: &Mdp, value: &Value) -> Result<StrategyMachine> {
        let bad = |m: &str| Error::Strategy(m.to_string());
        let memory: Vec<String> = serde_json::from_value(value["memory"].clone())
            .map_err(|_| bad("`memory` must be a list of strings"))?;
        let index: HashMap<&str, usize> =
            memory.iter().enumerate().map(|(i, m)| (m.as_str(), i)).collect();
        let mem = |k: &str| index.get(k).copied().ok_or_else(|| bad(&format!("unknown memory `{k}`")));
        let dist = |v: &Value, key: &dyn Fn(&str) -> Result<usize>| -> Result<Dist<usize>> {
            let obj = v.as_object().ok_or_else(|| bad("distribution must be an object"))?;
            obj.iter()
                .map(|(k, p)| {
                    let p = p.as_str().ok_or_else(|| bad("probability must be a string"))?;
                    Ok((key(k)?, rational::parse(p)?))
                })
                .collect()
        };
        let split = |k: &str| -> Result<(String, String)> {
            let (a, b) = k.rsplit_once(',').ok_or_else(|| bad(&format!("malformed key `{k}`")))?;
            Ok((a.to_string(), b.to_string()))
        };
        let edge_by_id = |text: &str| -> Result<usize> {
            let id: u64 = text.parse().map_err(|_| bad(&format!("bad edge id `{text}`")))?;
            mdp.edge_index(id).ok_or(Error::UnknownEdge(id))
        };
        let initial = dist(&value["initial"], &mem)?;
        let mut update = HashMap::new();
        for (k, d) in value["update"].as_object().ok_or_else(|| bad("`update` missing"))? {
            let (e, m) = split(k)?;
            update.insert((edge_by_id(&e)?, mem(&m)?), dist(d, &mem)?);
        }
        let mut output = HashMap::new();
        for (k, d) in value["output"].as_object().ok_or_else(|| bad("`output` missing"))? {
            let (s, m) = split(k)?;
            output.insert((mdp.require_state(&s)?, mem(&m)?), dist(d, &edge_by_id)?);
        }
        let machine = StrategyMachine {
            memory,
            initial,
            update,
            output,
        };
        machine.check(mdp)?;
        Ok(machine)
    }
}

/// A machine described by functions over a structured memory type, turned
/// into an explicit [`StrategyMachine`] by exploring the pairs reachable from
/// a start state.
pub trait MachineSpec {
    type Mem: Clone + Eq + Hash;

    fn initial(&self) -> Dist<Self::Mem>;
    fn output(&self, s: usize, m: &Self::Mem) -> Dist<usize>;
    fn update(&self, e: usize, m: &Self::Mem) -> Dist<Self::Mem>;
    fn name(&self, m: &Self::Mem) -> String;
}

/// Fails once more than `cap` memory states are needed.
pub fn materialize<S: MachineSpec>(mdp: &Mdp, spec: &S, starts: &[usize], cap: usize) -> Result<StrategyMachine> {
    let mut index: HashMap<S::Mem, usize> = HashMap::new();
    let mut mems: Vec<S::Mem> = Vec::new();
    let mut intern = |m: &S::Mem, mems: &mut Vec<S::Mem>| -> usize {
        if let Some(&i) = index.get(m) {
            return i;
        }
        index.insert(m.clone(), mems.len());
        mems.push(m.clone());
        mems.len() - 1
    };
    let initial: Dist<usize> = merge(
        spec.initial()
            .iter()
            .map(|(m, p)| (intern(m, &mut mems), p.clone()))
            .collect(),
    );
    let mut seen: HashMap<(usize, usize), ()> = HashMap::new();
    let mut queue: VecDeque<(usize, usize)> = starts
        .iter()
        .flat_map(|&s| initial.iter().map(move |(m, _)| (s, *m)))
        .collect();
    for &pair in &queue {
        seen.insert(pair, ());
    }
    let mut update = HashMap::new();
    let mut output = HashMap::new();
    while let Some((s, k)) = queue.pop_front() {
        if mems.len() > cap {
            return Err(Error::Synthesis(format!("memory budget of {cap} states exceeded")));
        }
        let m = mems[k].clone();
        let edges: Dist<usize> = if mdp.is_random(s) {
            mdp.out_edges(s).iter().map(|&e| (e, mdp.prob(e))).collect()
        } else {
            let d = merge(spec.output(s, &m));
            output.insert((s, k), d.clone());
            d
        };
        for (e, _) in edges {
            let t = mdp.edge(e).to;
            let next: Dist<usize> = merge(
                spec.update(e, &m)
                    .iter()
                    .map(|(m2, p)| (intern(m2, &mut mems), p.clone()))
                    .collect(),
            );
            for (k2, _) in &next {
                if seen.insert((t, *k2), ()).is_none() {
                    queue.push_back((t, *k2));
                }
            }
            update.insert((e, k), next);
        }
    }
    let mut names: HashMap<String, usize> = HashMap::new();
    let memory = mems
        .iter()
        .map(|m| {
            let base = spec.name(m).replace(',', ";");
            let n = names.entry(base.clone()).or_insert(0);
            *n += 1;
            if *n == 1 {
                base
            } else {
                format!("{base}#{n}")
            }
        })
        .collect();
    Ok(StrategyMachine {
        memory,
        initial,
        update,
        output,
    })
}

/// Merges duplicate outcomes and drops zero-probability ones, keeping first
/// occurrence order.
pub fn merge<T: Eq + Hash + Clone>(d: Dist<T>) -> Dist<T> {
    let mut pos: HashMap<T, usize> = HashMap::new();
    let mut out: Dist<T> = Vec::new();
    for (k, p) in d {
        if p.is_zero() {
            continue;
        }
        match pos.get(&k) {
            Some(&i) => out[i].1 += p,
            None => {
                pos.insert(k.clone(), out.len());
                out.push((k, p));
            }
        }
    }
    out
}

pub fn point<T>(x: T) -> Dist<T> {
    vec![(x, rational::one())]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{fixture, Fixture};
    use crate::rational::ratio;

    #[test]
    fn json_round_trip() {
        let m = fixture(Fixture::RunEx);
        let choice: Vec<Dist<usize>> = (0..m.n_states())
            .map(|s| {
                if s == 0 {
                    vec![(0, ratio(1, 2)), (1, ratio(1, 2))]
                } else {
                    point(m.out_edges(s)[0])
                }
            })
            .collect();
        let machine = StrategyMachine::memoryless(&m, &choice);
        machine.check(&m).unwrap();
        let back = StrategyMachine::from_json(&m, &machine.to_json(&m)).unwrap();
        assert_eq!(back, machine);
    }

    #[test]
    fn rejects_bad_support() {
        let m = fixture(Fixture::RunEx);
        let mut choice: Vec<Dist<usize>> = (0..m.n_states()).map(|s| point(m.out_edges(s)[0])).collect();
        choice[0] = point(2);
        let machine = StrategyMachine::memoryless(&m, &choice);
        assert!(machine.check(&m).is_err());
        choice[0] = vec![(0, ratio(1, 2))];
        assert!(StrategyMachine::memoryless(&m, &choice).check(&m).is_err());
    }
}
