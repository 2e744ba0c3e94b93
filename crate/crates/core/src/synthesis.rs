//! Witness strategies built from the solutions of the decision systems.
//!
//! Parameters (step caps, stage lengths, period lengths) are found by
//! doubling until an exact check of the induced chain succeeds.

use std::collections::{BTreeMap, VecDeque};

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};
use serde_json::{json, Map, Value};

use crate::chain::{self, bscc_analysis, dominates, expected_mp, induced_chain, induced_chain_from, wins_everywhere};
use crate::decomposition::{restrict, scc_graph, EndComponent};
use crate::error::{Error, Result};
use crate::games::{self, DEFAULT_ADVERSARY_CAP};
use crate::machine::{materialize, point, Dist, MachineSpec, StrategyMachine};
use crate::model::{Mdp, Mode, ThresholdQuery};
use crate::rational::{self, Rational};
use crate::systems::{decide_with, DecideOptions, Witness};

#[derive(Clone, Debug)]
pub struct SynthOptions {
    pub adversary_cap: u128,
    /// Candidates tried by [`memoryless_wc_search`].
    pub search_budget: u64,
    /// Largest value tried for N, A and K.
    pub max_parameter: u64,
    /// Largest number of memory states of a materialized machine.
    pub memory_cap: usize,
    /// Fraction of the LP slack spent on approximations.
    pub margin: Rational,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            adversary_cap: DEFAULT_ADVERSARY_CAP,
            search_budget: 1 << 16,
            max_parameter: 1 << 16,
            memory_cap: 1 << 18,
            margin: rational::ratio(1, 2),
        }
    }
}

/// Randomized Phase I: at each state, the probability of switching to the
/// component strategy on arrival, and the edge distribution otherwise.
#[derive(Clone, Debug, PartialEq)]
pub struct Phase1 {
    pub switch: Vec<Rational>,
    pub play: Vec<Dist<usize>>,
    /// Component index of each state, if any.
    pub component: Vec<Option<usize>>,
}

pub fn phase1_strategy(w: &Witness) -> Result<Phase1> {
    let m = &w.mdp;
    let mut component = vec![None; m.n_states()];
    for (j, c) in w.components.iter().enumerate() {
        for &s in &c.states {
            component[s] = Some(j);
        }
    }
    let mut switch = Vec::with_capacity(m.n_states());
    let mut play = Vec::with_capacity(m.n_states());
    for s in 0..m.n_states() {
        let id = &m.state(s).id;
        let mut inflow: Rational = m.in_edges(s).iter().map(|&e| w.y_edge(e)).sum();
        if s == w.s0 {
            inflow += rational::one();
        }
        let out: Rational = m.out_edges(s).iter().map(|&e| w.y_edge(e)).sum();
        let ys = w.y_state(s);
        if inflow != &out + &ys {
            return Err(Error::Synthesis(format!("flow conservation fails at {id}")));
        }
        if ys.is_positive() && component[s].is_none() {
            return Err(Error::Synthesis(format!("switching mass outside every component at {id}")));
        }
        switch.push(if inflow.is_zero() { rational::zero() } else { &ys / &inflow });
        play.push(if m.is_random(s) {
            Vec::new()
        } else {
            let rest = &inflow - &ys;
            if rest.is_positive() {
                m.out_edges(s)
                    .iter()
                    .map(|&e| (e, w.y_edge(e) / &rest))
                    .filter(|(_, p)| p.is_positive())
                    .collect()
            } else {
                point(m.out_edges(s)[0])
            }
        });
    }
    Ok(Phase1 {
        switch,
        play,
        component,
    })
}

impl Phase1 {
    pub fn to_json(&self, mdp: &Mdp) -> Value {
        let switch: Map<String, Value> = (0..mdp.n_states())
            .filter(|&s| self.switch[s].is_positive())
            .map(|s| (mdp.state(s).id.clone(), json!(rational::format(&self.switch[s]))))
            .collect();
        let play: Map<String, Value> = (0..mdp.n_states())
            .filter(|&s| !self.play[s].is_empty())
            .map(|s| {
                let d: Map<String, Value> = self.play[s]
                    .iter()
                    .map(|(e, p)| (mdp.edge(*e).id.to_string(), json!(rational::format(p))))
                    .collect();
                (mdp.state(s).id.clone(), Value::Object(d))
            })
            .collect();
        json!({ "switch": switch, "play": play })
    }

    /// Reads a Phase I description back; `components` are state-id lists.
    pub fn from_json(mdp: &Mdp, value: &Value, components: &[Vec<String>]) -> Result<Phase1> {
        let bad = |m: &str| Error::Strategy(m.to_string());
        let n = mdp.n_states();
        let mut switch = vec![rational::zero(); n];
        for (id, p) in value["switch"].as_object().ok_or_else(|| bad("`switch` missing"))? {
            let p = p.as_str().ok_or_else(|| bad("probability must be a string"))?;
            switch[mdp.require_state(id)?] = rational::parse(p)?;
        }
        let mut play = vec![Vec::new(); n];
        for (id, d) in value["play"].as_object().ok_or_else(|| bad("`play` missing"))? {
            let s = mdp.require_state(id)?;
            for (e, p) in d.as_object().ok_or_else(|| bad("distribution must be an object"))? {
                let eid: u64 = e.parse().map_err(|_| bad("bad edge id"))?;
                let e = mdp.edge_index(eid).ok_or(Error::UnknownEdge(eid))?;
                if mdp.edge(e).from != s {
                    return Err(bad("phase I edge outside E(s)"));
                }
                let p = p.as_str().ok_or_else(|| bad("probability must be a string"))?;
                play[s].push((e, rational::parse(p)?));
            }
        }
        let mut component = vec![None; n];
        for (j, ids) in components.iter().enumerate() {
            for id in ids {
                component[mdp.require_state(id)?] = Some(j);
            }
        }
        Ok(Phase1 {
            switch,
            play,
            component,
        })
    }
}

/// A memoryless randomized strategy on one positive-frequency part of an
/// end component.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalStrategy {
    pub states: Vec<usize>,
    /// Long-run share of time spent in `states`.
    pub x: Rational,
    /// Mean payoff of `choice` inside `states`.
    pub nu: Vec<Rational>,
    /// Edge distribution at each controller state of `states`.
    pub choice: BTreeMap<usize, Dist<usize>>,
}

/// Splits a frequency vector `x` (indexed by the edges of `ec`, any positive
/// scale) into the strongly connected parts of its support.
pub fn local_strategies(ec: &Mdp, x: &[Rational]) -> Vec<LocalStrategy> {
    let total: Rational = x.iter().cloned().sum();
    let mut xs = vec![rational::zero(); ec.n_states()];
    for e in 0..ec.n_edges() {
        xs[ec.edge(e).from] += &x[e];
    }
    let adj: Vec<Vec<usize>> = (0..ec.n_states())
        .map(|s| {
            ec.out_edges(s)
                .iter()
                .filter(|&&e| x[e].is_positive())
                .map(|&e| ec.edge(e).to)
                .collect()
        })
        .collect();
    let mut out: Vec<LocalStrategy> = scc_graph(&adj)
        .into_iter()
        .filter(|c| c.iter().all(|&s| xs[s].is_positive()))
        .map(|states| {
            let mass: Rational = states.iter().map(|&s| xs[s].clone()).sum();
            let mut nu = vec![rational::zero(); ec.dimension()];
            let mut choice = BTreeMap::new();
            for &s in &states {
                for &e in ec.out_edges(s) {
                    if x[e].is_positive() {
                        for (i, w) in ec.edge(e).weight.iter().enumerate() {
                            nu[i] += &x[e] * rational::int(*w);
                        }
                    }
                }
                if ec.is_controller(s) {
                    let d = ec
                        .out_edges(s)
                        .iter()
                        .filter(|&&e| x[e].is_positive())
                        .map(|&e| (e, &x[e] / &xs[s]))
                        .collect();
                    choice.insert(s, d);
                }
            }
            LocalStrategy {
                states,
                x: &mass / &total,
                nu: nu.into_iter().map(|v| v / &mass).collect(),
                choice,
            }
        })
        .collect();
    out.sort_by(|a, b| a.states.cmp(&b.states));
    out
}

fn mix(locals: &[LocalStrategy]) -> Vec<Rational> {
    let d = locals.first().map_or(0, |l| l.nu.len());
    (0..d)
        .map(|i| locals.iter().map(|l| &l.x * &l.nu[i]).sum())
        .collect()
}

/// Replaces the shares `x_i` by fractions with a small common denominator
/// while keeping the mixed mean payoff strictly above `target`. Parts that
/// get share 0 are dropped.
pub fn coarsen(locals: &[LocalStrategy], target: &[Rational]) -> Vec<LocalStrategy> {
    for b in 1..=4096i64 {
        let c: Vec<i64> = locals
            .iter()
            .map(|l| (&l.x * rational::int(b)).round().to_integer().to_i64().unwrap_or(0))
            .collect();
        let sum: i64 = c.iter().sum();
        if sum == 0 {
            continue;
        }
        let picked: Vec<LocalStrategy> = locals
            .iter()
            .zip(&c)
            .filter(|(_, &k)| k > 0)
            .map(|(l, &k)| LocalStrategy {
                x: rational::ratio(k, sum),
                ..l.clone()
            })
            .collect();
        if dominates(&mix(&picked), target) {
            return picked;
        }
    }
    locals.to_vec()
}

/// Plain-graph distance to `goal` inside `ec`; controller states step along
/// a shortest path.
fn reach_choice(ec: &Mdp, goal: &[usize]) -> Vec<usize> {
    let mut dist = vec![usize::MAX; ec.n_states()];
    let mut queue: VecDeque<usize> = goal.iter().copied().collect();
    for &s in goal {
        dist[s] = 0;
    }
    while let Some(t) = queue.pop_front() {
        for &e in ec.in_edges(t) {
            let s = ec.edge(e).from;
            if dist[s] == usize::MAX {
                dist[s] = dist[t] + 1;
                queue.push_back(s);
            }
        }
    }
    (0..ec.n_states())
        .map(|s| {
            ec.out_edges(s)
                .iter()
                .copied()
                .min_by_key(|&e| dist[ec.edge(e).to])
                .expect("successor")
        })
        .collect()
}

#[derive(Clone, PartialEq, Eq, Hash)]
enum StageMem {
    Reach(usize),
    Play(usize, u64),
}

struct Stages<'a> {
    ec: &'a Mdp,
    locals: &'a [LocalStrategy],
    inside: Vec<Vec<bool>>,
    reach: Vec<Vec<usize>>,
    length: Vec<u64>,
}

impl Stages<'_> {
    fn advance(&self, i: usize, c: u64) -> StageMem {
        if self.locals.len() == 1 {
            StageMem::Reach(0)
        } else if c + 1 >= self.length[i] {
            StageMem::Reach((i + 1) % self.locals.len())
        } else {
            StageMem::Play(i, c + 1)
        }
    }
}

impl MachineSpec for Stages<'_> {
    type Mem = StageMem;

    fn initial(&self) -> Dist<StageMem> {
        point(StageMem::Reach(0))
    }

    fn output(&self, s: usize, m: &StageMem) -> Dist<usize> {
        let i = match m {
            StageMem::Reach(i) | StageMem::Play(i, _) => *i,
        };
        if self.inside[i][s] {
            self.locals[i].choice[&s].clone()
        } else {
            point(self.reach[i][s])
        }
    }

    // In `Reach(i)` at a state of part `i` the machine already plays as
    // `Play(i, 0)`.
    fn update(&self, e: usize, m: &StageMem) -> Dist<StageMem> {
        let from = self.ec.edge(e).from;
        point(match m {
            StageMem::Reach(i) if self.inside[*i][from] => self.advance(*i, 0),
            StageMem::Reach(i) => StageMem::Reach(*i),
            StageMem::Play(i, c) => self.advance(*i, *c),
        })
    }

    fn name(&self, m: &StageMem) -> String {
        match m {
            StageMem::Reach(i) => format!("reach{i}"),
            StageMem::Play(i, c) => format!("play{i}.{c}"),
        }
    }
}

/// Cycles through the parts: reach part `i`, then play `g_i` for `A·c_i`
/// steps, where `c_i = b·x_i` and `b` is the common denominator of the
/// shares. Defined from every state of `ec`.
pub fn global_unichain(ec: &Mdp, locals: &[LocalStrategy], a: u64, cap: usize) -> Result<StrategyMachine> {
    if a == 0 {
        return Err(Error::Parameter("A must be positive".into()));
    }
    if locals.is_empty() {
        return Err(Error::Parameter("no local strategies".into()));
    }
    let b = rational::lcm_denominators(locals.iter().map(|l| &l.x));
    let length = locals
        .iter()
        .map(|l| {
            let c = (&l.x * Rational::from_integer(b.clone())).to_integer();
            c.to_u64()
                .and_then(|c| c.checked_mul(a))
                .ok_or_else(|| Error::Parameter("stage length overflows".into()))
        })
        .collect::<Result<Vec<u64>>>()?;
    let inside: Vec<Vec<bool>> = locals
        .iter()
        .map(|l| crate::decomposition::mask_of(ec.n_states(), &l.states))
        .collect();
    let reach = locals.iter().map(|l| reach_choice(ec, &l.states)).collect();
    let spec = Stages {
        ec,
        locals,
        inside,
        reach,
        length,
    };
    let all: Vec<usize> = (0..ec.n_states()).collect();
    let machine = materialize(ec, &spec, &all, cap)?;
    if (a as usize) < ec.n_states() {
        let chain = induced_chain_from(ec, &machine, &all)?;
        if bscc_analysis(&chain, false).len() != 1 {
            return Err(Error::Parameter(format!("A = {a} does not give a unichain strategy")));
        }
    }
    Ok(machine)
}

/// `⌈(2K(W + μ* − δ) + m(2W + 2μ* − δ)) / δ⌉`.
pub fn recovery_length(k: u64, delta: &Rational, w: i64, mu_star: &Rational, m: u64) -> u64 {
    let w = rational::int(w);
    let k = Rational::from_integer(BigInt::from(k));
    let m = Rational::from_integer(BigInt::from(m));
    let two = rational::int(2);
    let num = &two * &k * (&w + mu_star - delta) + m * (&two * &w + &two * mu_star - delta);
    rational::ceil_i64(&(num / delta)) as u64
}

/// Smallest cycle mean over `dims` of `machine` started anywhere in `mdp`.
pub fn wc_margin(mdp: &Mdp, machine: &StrategyMachine, dims: &[usize]) -> Result<Rational> {
    let all: Vec<usize> = (0..mdp.n_states()).collect();
    let chain = induced_chain_from(mdp, machine, &all)?;
    Ok(dims
        .iter()
        .filter_map(|&i| chain::karp_min_mean(&chain, i))
        .min()
        .unwrap_or_else(|| rational::int(mdp.max_abs_weight() + 1)))
}

#[derive(Clone, PartialEq, Eq, Hash)]
enum CmbMem {
    /// Step in the period, running sums (`None` once a dimension surely
    /// passes; the whole track is `None` once the period surely fails), and
    /// the memory of `g`.
    Play {
        k: u64,
        track: Option<Vec<Option<i64>>>,
        g: usize,
    },
    Recover {
        j: u64,
        m: usize,
    },
}

struct Combined<'a> {
    mdp: &'a Mdp,
    g: &'a StrategyMachine,
    fwc: &'a StrategyMachine,
    dims: &'a [usize],
    k: u64,
    l: u64,
    /// τ·K: the period passes when every sum reaches it.
    bar: Rational,
    w: i64,
}

impl Combined<'_> {
    fn fresh(&self, g: &Dist<usize>) -> Dist<CmbMem> {
        g.iter()
            .map(|(m, p)| {
                let track = Some(vec![Some(0); self.dims.len()]);
                (CmbMem::Play { k: 0, track, g: *m }, p.clone())
            })
            .collect()
    }

    fn recover(&self) -> Dist<CmbMem> {
        self.fwc
            .initial
            .iter()
            .map(|(m, p)| (CmbMem::Recover { j: 0, m: *m }, p.clone()))
            .collect()
    }
}

impl MachineSpec for Combined<'_> {
    type Mem = CmbMem;

    fn initial(&self) -> Dist<CmbMem> {
        self.fresh(&self.g.initial)
    }

    fn output(&self, s: usize, m: &CmbMem) -> Dist<usize> {
        match m {
            CmbMem::Play { g, .. } => self.g.output[&(s, *g)].clone(),
            CmbMem::Recover { m, .. } => self.fwc.output[&(s, *m)].clone(),
        }
    }

    fn update(&self, e: usize, m: &CmbMem) -> Dist<CmbMem> {
        match m {
            CmbMem::Recover { j, m } => {
                if j + 1 >= self.l {
                    self.fresh(&self.g.initial)
                } else {
                    self.fwc.update[&(e, *m)]
                        .iter()
                        .map(|(m2, p)| (CmbMem::Recover { j: j + 1, m: *m2 }, p.clone()))
                        .collect()
                }
            }
            CmbMem::Play { k, track, g } => {
                let step = k + 1;
                let left = rational::int(((self.k - step) as i64) * self.w);
                let weight = &self.mdp.edge(e).weight;
                let track = track.as_ref().and_then(|sums| {
                    let mut next = Vec::with_capacity(sums.len());
                    for (slot, &i) in sums.iter().zip(self.dims) {
                        match slot {
                            None => next.push(None),
                            Some(v) => {
                                let v = v + weight[i];
                                let r = rational::int(v);
                                if &r - &left >= self.bar {
                                    next.push(None);
                                } else if &r + &left < self.bar {
                                    return None;
                                } else {
                                    next.push(Some(v));
                                }
                            }
                        }
                    }
                    Some(next)
                });
                if step >= self.k {
                    return if track.is_some() {
                        self.fresh(&self.g.initial)
                    } else {
                        self.recover()
                    };
                }
                self.g.update[&(e, *g)]
                    .iter()
                    .map(|(g2, p)| {
                        let m = CmbMem::Play {
                            k: step,
                            track: track.clone(),
                            g: *g2,
                        };
                        (m, p.clone())
                    })
                    .collect()
            }
        }
    }

    fn name(&self, m: &CmbMem) -> String {
        match m {
            CmbMem::Play { k, track, g } => {
                let t = match track {
                    None => "F".to_string(),
                    Some(v) => v
                        .iter()
                        .map(|x| x.map_or("P".to_string(), |x| x.to_string()))
                        .collect::<Vec<_>>()
                        .join(";"),
                };
                format!("g{k}:{t}:{}", self.g.memory[*g])
            }
            CmbMem::Recover { j, m } => format!("r{j}:{}", self.fwc.memory[*m]),
        }
    }
}

/// Parameters of a combined machine, for inspection.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CombinedShape {
    pub period: u64,
    pub recovery: u64,
}

/// Plays `g` in periods of `k` steps, tracking the sums on `dims`; a period
/// whose sum misses `(μ* − δ)·K` in some dimension is followed by a recovery
/// of `L` steps of `fwc`. Thresholds are 0 on `dims` (normalized weights).
pub fn wec_combined(
    wec: &Mdp,
    g: &StrategyMachine,
    fwc: &StrategyMachine,
    dims: &[usize],
    k: u64,
    delta: &Rational,
    cap: usize,
) -> Result<(StrategyMachine, CombinedShape)> {
    if k == 0 {
        return Err(Error::Parameter("K must be positive".into()));
    }
    let mu_star = wc_margin(wec, fwc, dims)?;
    if !mu_star.is_positive() {
        return Err(Error::Parameter("the worst-case strategy does not win".into()));
    }
    if !delta.is_positive() || *delta >= mu_star {
        return Err(Error::Parameter(format!(
            "delta must lie in (0, {})",
            rational::format(&mu_star)
        )));
    }
    let w = wec
        .edges()
        .iter()
        .flat_map(|e| dims.iter().map(move |&i| e.weight[i].abs()))
        .max()
        .unwrap_or(0);
    let m = (fwc.memory_size() * wec.n_states()) as u64;
    let l = recovery_length(k, delta, w, &mu_star, m);
    let tau = &mu_star - delta;
    let spec = Combined {
        mdp: wec,
        g,
        fwc,
        dims,
        k,
        l,
        bar: tau * Rational::from_integer(BigInt::from(k)),
        w,
    };
    let all: Vec<usize> = (0..wec.n_states()).collect();
    let machine = materialize(wec, &spec, &all, cap)?;
    Ok((machine, CombinedShape { period: k, recovery: l }))
}

/// A controller strategy winning the worst-case objective (mean payoff
/// above 0 on `dims`) from every state: positional game solution for one
/// dimension, else memoryless candidates, then two-memory candidates, up to
/// `budget` candidates in total.
pub fn memoryless_wc_search(mdp: &Mdp, dims: &[usize], budget: u64) -> Result<Option<StrategyMachine>> {
    let controllers: Vec<usize> = (0..mdp.n_states()).filter(|&s| mdp.is_controller(s)).collect();
    let memoryless = |pick: &dyn Fn(usize) -> usize| {
        let choice: Vec<Dist<usize>> = (0..mdp.n_states()).map(|s| point(pick(s))).collect();
        StrategyMachine::memoryless(mdp, &choice)
    };
    if dims.is_empty() {
        return Ok(Some(memoryless(&|s| mdp.out_edges(s)[0])));
    }
    if dims.len() == 1 {
        let sol = games::solve_unidim(&mdp.project(dims));
        let f = memoryless(&|s| sol.choice[s]);
        if wins_everywhere(mdp, &f, dims)? {
            return Ok(Some(f));
        }
    }
    let mut tried = 0u64;
    let degrees: Vec<u64> = controllers.iter().map(|&s| mdp.out_edges(s).len() as u64).collect();
    let count: u128 = degrees.iter().map(|&d| d as u128).product();
    for index in 0..count {
        if tried >= budget {
            return Ok(None);
        }
        tried += 1;
        let mut rest = index;
        let mut pick = vec![0usize; mdp.n_states()];
        for (&s, &d) in controllers.iter().zip(&degrees) {
            pick[s] = mdp.out_edges(s)[(rest % d as u128) as usize];
            rest /= d as u128;
        }
        let f = memoryless(&|s| if mdp.is_controller(s) { pick[s] } else { 0 });
        if wins_everywhere(mdp, &f, dims)? {
            return Ok(Some(f));
        }
    }
    // Two memory states: outputs per (state, memory), updates per (edge, memory).
    let mut radix: Vec<u128> = Vec::new();
    for &s in &controllers {
        radix.push(mdp.out_edges(s).len() as u128);
        radix.push(mdp.out_edges(s).len() as u128);
    }
    radix.extend(std::iter::repeat_n(2u128, 2 * mdp.n_edges()));
    let mut digits = vec![0u128; radix.len()];
    loop {
        if tried >= budget {
            return Ok(None);
        }
        tried += 1;
        let mut output = std::collections::HashMap::new();
        for (k, &s) in controllers.iter().enumerate() {
            for m in 0..2 {
                let e = mdp.out_edges(s)[digits[2 * k + m] as usize];
                output.insert((s, m), point(e));
            }
        }
        let base = 2 * controllers.len();
        let mut update = std::collections::HashMap::new();
        for e in 0..mdp.n_edges() {
            for m in 0..2 {
                update.insert((e, m), point(digits[base + 2 * e + m] as usize));
            }
        }
        let f = StrategyMachine {
            memory: vec!["m0".into(), "m1".into()],
            initial: point(0),
            update,
            output,
        };
        if wins_everywhere(mdp, &f, dims)? {
            return Ok(Some(f));
        }
        // Next candidate in mixed radix.
        let mut i = 0;
        loop {
            if i == digits.len() {
                return Ok(None);
            }
            digits[i] += 1;
            if digits[i] < radix[i] {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}

/// Frequencies of a witness restricted to component `j`, with the target
/// mean payoff the component strategy has to reach.
pub struct ComponentTarget {
    pub sub: Mdp,
    pub x: Vec<Rational>,
    /// Phase II mass `y_U`.
    pub mass: Rational,
    /// Mean payoff of the witness frequencies inside the component.
    pub lp_value: Vec<Rational>,
    pub target: Vec<Rational>,
    /// Room between `lp_value` and `target`.
    pub room: Rational,
}

pub fn component_target(w: &Witness, j: usize, margin: &Rational) -> Result<Option<ComponentTarget>> {
    let c: &EndComponent = &w.components[j];
    let sub = restrict(&w.mdp, &c.states)?;
    let x: Vec<Rational> = (0..sub.n_edges())
        .map(|e| w.x_edge(w.mdp.lift_edge(&sub, e)))
        .collect();
    let mass: Rational = x.iter().cloned().sum();
    if mass.is_zero() {
        return Ok(None);
    }
    let lp_value: Vec<Rational> = (0..sub.dimension())
        .map(|i| {
            let total: Rational = (0..sub.n_edges())
                .map(|e| &x[e] * rational::int(sub.edge(e).weight[i]))
                .sum();
            total / &mass
        })
        .collect();
    let room = margin * &w.margin;
    let target = lp_value.iter().map(|v| v - &room).collect();
    Ok(Some(ComponentTarget {
        sub,
        x,
        mass,
        lp_value,
        target,
        room,
    }))
}

/// Lowest mean payoff (per dimension) over the bottom components reachable
/// from any state.
fn worst_bscc(mdp: &Mdp, machine: &StrategyMachine) -> Result<Vec<Rational>> {
    let all: Vec<usize> = (0..mdp.n_states()).collect();
    let chain = induced_chain_from(mdp, machine, &all)?;
    let bsccs = bscc_analysis(&chain, false);
    Ok((0..mdp.dimension())
        .map(|i| {
            bsccs
                .iter()
                .map(|b| b.mean_payoff[i].clone())
                .min()
                .expect("a finite chain has a bottom component")
        })
        .collect())
}

fn at_least(v: &[Rational], t: &[Rational]) -> bool {
    v.iter().zip(t).all(|(a, b)| a >= b)
}

/// Unichain expectation strategy on a component whose every bottom
/// component has mean payoff at least `target`. Returns the machine and A.
pub fn expectation_machine(ct: &ComponentTarget, target: &[Rational], opts: &SynthOptions) -> Result<(StrategyMachine, u64)> {
    let locals = local_strategies(&ct.sub, &ct.x);
    // Coarsened shares keep half of the remaining room.
    let aim: Vec<Rational> = ct
        .lp_value
        .iter()
        .zip(target)
        .map(|(v, t)| (v + t) / rational::int(2))
        .collect();
    let locals = coarsen(&locals, &aim);
    let mut a = 1u64;
    while a <= opts.max_parameter {
        match global_unichain(&ct.sub, &locals, a, opts.memory_cap) {
            Ok(g) => {
                if at_least(&worst_bscc(&ct.sub, &g)?, target) {
                    return Ok((g, a));
                }
            }
            Err(Error::Parameter(_)) => {}
            Err(e) => return Err(e),
        }
        a *= 2;
    }
    Err(Error::Synthesis(format!(
        "no stage length up to {} reaches the component target",
        opts.max_parameter
    )))
}

/// A worst-case winning strategy on a winning component whose bottom
/// components reach `target`. Returns the machine and K (0 when the
/// expectation strategy already wins).
pub fn combined_machine(ct: &ComponentTarget, dims: &[usize], opts: &SynthOptions) -> Result<(StrategyMachine, u64)> {
    let half: Vec<Rational> = ct.target.iter().map(|t| t + &ct.room / rational::int(2)).collect();
    let (g, _) = expectation_machine(ct, &half, opts)?;
    if wins_everywhere(&ct.sub, &g, dims)? {
        return Ok((g, 0));
    }
    let fwc = memoryless_wc_search(&ct.sub, dims, opts.search_budget)?.ok_or(Error::FallbackUnavailable)?;
    let mu_star = wc_margin(&ct.sub, &fwc, dims)?;
    let eg = worst_bscc(&ct.sub, &g)?;
    let low = dims.iter().map(|&i| eg[i].clone()).fold(mu_star.clone(), |a, b| a.min(b));
    let tau = low / rational::int(4);
    let delta = &mu_star - &tau;
    let mut k = 16u64;
    while k <= opts.max_parameter {
        let (h, _) = wec_combined(&ct.sub, &g, &fwc, dims, k, &delta, opts.memory_cap)?;
        if at_least(&worst_bscc(&ct.sub, &h)?, &ct.target) {
            return Ok((h, k));
        }
        k *= 2;
    }
    Err(Error::Synthesis(format!("no period up to {} reaches the component target", opts.max_parameter)))
}

#[derive(Clone, PartialEq, Eq, Hash)]
enum CompMem {
    Phase1(u64),
    Part(usize, usize),
    Fallback(usize),
}

struct Composite<'a> {
    mdp: &'a Mdp,
    s0: usize,
    phase1: &'a Phase1,
    cap: Option<u64>,
    parts: &'a [Option<StrategyMachine>],
    fallback: Option<&'a StrategyMachine>,
}

impl Composite<'_> {
    fn part_at(&self, t: usize) -> Option<usize> {
        self.phase1.component[t].filter(|&j| self.parts[j].is_some())
    }

    fn enter(&self, j: usize, p: &Rational) -> Dist<CompMem> {
        let m = self.parts[j].as_ref().expect("entered component has a strategy");
        m.initial.iter().map(|(k, q)| (CompMem::Part(j, *k), p * q)).collect()
    }

    fn arrive(&self, t: usize, steps: u64) -> Dist<CompMem> {
        let sw = &self.phase1.switch[t];
        let mut out = Vec::new();
        if sw.is_positive() {
            let j = self.part_at(t).expect("switching into a component with a strategy");
            out.extend(self.enter(j, sw));
        }
        let rest = rational::one() - sw;
        if rest.is_positive() {
            match self.cap {
                Some(n) if steps >= n => match self.part_at(t) {
                    Some(j) => out.extend(self.enter(j, &rest)),
                    None => {
                        let f = self.fallback.expect("capped phase I has a fallback");
                        out.extend(f.initial.iter().map(|(k, q)| (CompMem::Fallback(*k), &rest * q)));
                    }
                },
                Some(_) => out.push((CompMem::Phase1(steps), rest)),
                None => out.push((CompMem::Phase1(0), rest)),
            }
        }
        out
    }
}

impl MachineSpec for Composite<'_> {
    type Mem = CompMem;

    fn initial(&self) -> Dist<CompMem> {
        self.arrive(self.s0, 0)
    }

    fn output(&self, s: usize, m: &CompMem) -> Dist<usize> {
        match m {
            CompMem::Phase1(_) => self.phase1.play[s].clone(),
            CompMem::Part(j, k) => self.parts[*j].as_ref().expect("part").output[&(s, *k)].clone(),
            CompMem::Fallback(k) => self.fallback.expect("fallback").output[&(s, *k)].clone(),
        }
    }

    fn update(&self, e: usize, m: &CompMem) -> Dist<CompMem> {
        match m {
            CompMem::Phase1(k) => self.arrive(self.mdp.edge(e).to, k + 1),
            CompMem::Part(j, k) => self.parts[*j].as_ref().expect("part").update[&(e, *k)]
                .iter()
                .map(|(k2, p)| (CompMem::Part(*j, *k2), p.clone()))
                .collect(),
            CompMem::Fallback(k) => self.fallback.expect("fallback").update[&(e, *k)]
                .iter()
                .map(|(k2, p)| (CompMem::Fallback(*k2), p.clone()))
                .collect(),
        }
    }

    fn name(&self, m: &CompMem) -> String {
        match m {
            CompMem::Phase1(k) => format!("p1.{k}"),
            CompMem::Part(j, k) => format!("c{j}.{}", self.parts[*j].as_ref().expect("part").memory[*k]),
            CompMem::Fallback(k) => format!("wc.{}", self.fallback.expect("fallback").memory[*k]),
        }
    }
}

/// Phase I followed by per-component machines (defined on the component
/// sub-MDPs), with an optional step cap after which the play moves to the
/// component it is in, or to `fallback`.
pub fn compose(
    w: &Witness,
    phase1: &Phase1,
    parts: &[Option<StrategyMachine>],
    cap: Option<u64>,
    fallback: Option<&StrategyMachine>,
    memory_cap: usize,
) -> Result<StrategyMachine> {
    let lifted: Vec<Option<StrategyMachine>> = parts
        .iter()
        .zip(&w.components)
        .map(|(p, c)| {
            p.as_ref()
                .map(|m| -> Result<StrategyMachine> { Ok(m.lift(&restrict(&w.mdp, &c.states)?, &w.mdp)) })
                .transpose()
        })
        .collect::<Result<_>>()?;
    compose_on(&w.mdp, w.s0, phase1, &lifted, cap, fallback, memory_cap)
}

/// [`compose`] with the parts already defined on `mdp`.
pub fn compose_on(
    mdp: &Mdp,
    s0: usize,
    phase1: &Phase1,
    parts: &[Option<StrategyMachine>],
    cap: Option<u64>,
    fallback: Option<&StrategyMachine>,
    memory_cap: usize,
) -> Result<StrategyMachine> {
    let spec = Composite {
        mdp,
        s0,
        phase1,
        cap,
        parts,
        fallback,
    };
    let machine = materialize(mdp, &spec, &[s0], memory_cap)?;
    machine.check(mdp)?;
    Ok(machine)
}

/// Everything needed to build h^cmb_N for any N.
pub struct FinitePlan {
    pub phase1: Phase1,
    /// Worst-case winning expectation machine per component (on the
    /// component sub-MDP), absent for components without Phase II mass.
    pub parts: Vec<Option<StrategyMachine>>,
    /// Winning strategy on the pruned MDP.
    pub fallback: StrategyMachine,
}

pub fn plan_bwc_finite(w: &Witness, opts: &SynthOptions) -> Result<FinitePlan> {
    let phase1 = phase1_strategy(w)?;
    let mut parts = Vec::new();
    for j in 0..w.components.len() {
        parts.push(match component_target(w, j, &opts.margin)? {
            Some(ct) => Some(combined_machine(&ct, &w.dims, opts)?.0),
            None => None,
        });
    }
    let fallback = memoryless_wc_search(&w.mdp, &w.dims, opts.search_budget)?.ok_or(Error::FallbackUnavailable)?;
    Ok(FinitePlan {
        phase1,
        parts,
        fallback,
    })
}

/// h^cmb_N on the witness MDP.
pub fn compose_bwc_finite(w: &Witness, plan: &FinitePlan, n: u64, opts: &SynthOptions) -> Result<StrategyMachine> {
    if n == 0 {
        return Err(Error::Parameter("N must be positive".into()));
    }
    compose(w, &plan.phase1, &plan.parts, Some(n), Some(&plan.fallback), opts.memory_cap)
}

#[derive(Clone, Debug)]
pub struct Synthesis {
    /// Strategy on the input MDP.
    pub machine: StrategyMachine,
    /// N for bwc-fin, the largest stage multiplier A for bas.
    pub parameter: u64,
    /// Exact expected mean payoff on the input MDP.
    pub expectation: Vec<Rational>,
}

fn witness_for(mdp: &Mdp, query: &ThresholdQuery, mode: Mode, opts: &SynthOptions) -> Result<Witness> {
    if query.mode != mode {
        return Err(Error::Parameter(format!("expected a {} query", mode.name())));
    }
    let decision = decide_with(
        mdp,
        query,
        DecideOptions {
            adversary_cap: opts.adversary_cap,
        },
    )?;
    decision
        .witness
        .ok_or_else(|| Error::Synthesis(format!("the {} threshold is not achievable", mode.name())))
}

/// h^cmb_N for a given N, on the input MDP.
pub fn bwc_finite_strategy(mdp: &Mdp, query: &ThresholdQuery, n: u64, opts: &SynthOptions) -> Result<StrategyMachine> {
    let w = witness_for(mdp, query, Mode::BwcFinite, opts)?;
    let plan = plan_bwc_finite(&w, opts)?;
    Ok(compose_bwc_finite(&w, &plan, n, opts)?.lift(&w.mdp, mdp))
}

/// Searches N by doubling until h^cmb_N meets the expectation threshold,
/// then checks the result on the input MDP.
pub fn synthesize_bwc_finite(mdp: &Mdp, query: &ThresholdQuery, opts: &SynthOptions) -> Result<Synthesis> {
    let w = witness_for(mdp, query, Mode::BwcFinite, opts)?;
    let plan = plan_bwc_finite(&w, opts)?;
    let mut n = 1u64;
    while n <= opts.max_parameter {
        let h = compose_bwc_finite(&w, &plan, n, opts)?;
        let e = expected_mp(&induced_chain(&w.mdp, &h, w.s0)?);
        if dominates(&e, &w.query.nu) {
            let machine = h.lift(&w.mdp, mdp);
            return finish(mdp, query, machine, n, true);
        }
        n *= 2;
    }
    Err(Error::Synthesis(format!("no step cap up to {} meets the expectation", opts.max_parameter)))
}

fn finish(mdp: &Mdp, query: &ThresholdQuery, machine: StrategyMachine, parameter: u64, worst_case: bool) -> Result<Synthesis> {
    machine.check(mdp)?;
    let s0 = mdp.require_state(&query.from)?;
    let chain = induced_chain(mdp, &machine, s0)?;
    let expectation = expected_mp(&chain);
    let dims = crate::model::nontrivial_dims(&query.mu, mdp.max_abs_weight());
    let sure = if worst_case {
        chain::verify_worstcase_chain(&chain, &query.mu, &dims).holds
    } else {
        query.mode == Mode::Expectation || chain::verify_almost_sure_chain(&chain, &query.mu, mdp.max_abs_weight())
    };
    if !sure || !dominates(&expectation, &query.nu) {
        return Err(Error::Synthesis("the synthesized strategy fails its exact check".into()));
    }
    Ok(Synthesis {
        machine,
        parameter,
        expectation,
    })
}

/// Per-component expectation machines for a T′ (or expectation) witness.
pub fn expectation_parts(w: &Witness, opts: &SynthOptions) -> Result<(Vec<Option<StrategyMachine>>, u64)> {
    let mut parts = Vec::new();
    let mut largest = 0;
    for j in 0..w.components.len() {
        parts.push(match component_target(w, j, &opts.margin)? {
            Some(ct) => {
                let (g, a) = expectation_machine(&ct, &ct.target, opts)?;
                largest = largest.max(a);
                Some(g)
            }
            None => None,
        });
    }
    Ok((parts, largest))
}

/// Phase I followed by a unichain expectation strategy in each component.
/// Also accepts expectation-mode queries.
pub fn bas_strategy(mdp: &Mdp, query: &ThresholdQuery, opts: &SynthOptions) -> Result<Synthesis> {
    let mode = match query.mode {
        Mode::Expectation => Mode::Expectation,
        _ => Mode::BeyondAlmostSure,
    };
    let w = witness_for(mdp, query, mode, opts)?;
    let phase1 = phase1_strategy(&w)?;
    let (parts, a) = expectation_parts(&w, opts)?;
    let machine = compose(&w, &phase1, &parts, None, None, opts.memory_cap)?.lift(&w.mdp, mdp);
    finish(mdp, query, machine, a, false)
}

/// Dispatches on the query mode (bas, exp and bwc-fin).
pub fn synthesize(mdp: &Mdp, query: &ThresholdQuery, opts: &SynthOptions) -> Result<Synthesis> {
    match query.mode {
        Mode::BwcFinite => synthesize_bwc_finite(mdp, query, opts),
        Mode::BeyondAlmostSure | Mode::Expectation => bas_strategy(mdp, query, opts),
        m => Err(Error::Parameter(format!("no finite-memory synthesis for mode {}", m.name()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{verify_almost_sure, verify_worstcase};
    use crate::fixtures::{fixture, Fixture};
    use crate::model::normalize;
    use crate::rational::{int, parse_vector, ratio};

    fn q(mode: Mode, mu: &str, nu: &str) -> ThresholdQuery {
        ThresholdQuery::new(mode, "s", parse_vector(mu).unwrap(), parse_vector(nu).unwrap())
    }

    fn witness(f: Fixture, query: &ThresholdQuery) -> Witness {
        crate::systems::decide(&fixture(f), query).unwrap().witness.unwrap()
    }

    fn edge(m: &Mdp, id: u64) -> usize {
        m.edge_index(id).unwrap()
    }

    #[test]
    fn phase1_trivial_witness() {
        let w = witness(Fixture::RunEx, &q(Mode::BwcFinite, "0,0", "0,9"));
        let p = phase1_strategy(&w).unwrap();
        let m = &w.mdp;
        let (s, t, u) = (0, m.require_state("t").unwrap(), m.require_state("u").unwrap());
        assert_eq!(p.play[s], point(edge(m, 0)));
        assert_eq!(p.switch[s], int(0));
        assert_eq!(p.switch[t], int(1));
        // Zero inflow: fixed edge, never used.
        assert_eq!(p.switch[u], int(0));
        assert_eq!(p.play[u].len(), 1);
    }

    #[test]
    fn phase1_half_witness() {
        let w = witness(Fixture::RunEx, &q(Mode::BwcInfinite, "0,0", "99/10,99/10"));
        let p = phase1_strategy(&w).unwrap();
        let m = &w.mdp;
        assert_eq!(p.play[0], vec![(edge(m, 0), ratio(1, 2)), (edge(m, 1), ratio(1, 2))]);
        assert_eq!(p.switch[m.require_state("t").unwrap()], int(1));
        assert_eq!(p.switch[m.require_state("u").unwrap()], int(1));
    }

    #[test]
    fn local_strategy_examples() {
        let m = fixture(Fixture::RunEx);
        let uv = restrict(&m, &[2, 3]).unwrap();
        let x: Vec<Rational> = (0..uv.n_edges())
            .map(|e| match uv.edge(e).id {
                4 => ratio(1, 2),
                _ => ratio(1, 4),
            })
            .collect();
        let l = local_strategies(&uv, &x);
        assert_eq!(l.len(), 1);
        assert_eq!(l[0].x, int(1));
        assert_eq!(l[0].nu, vec![int(15), int(5)]);
        let u = uv.require_state("u").unwrap();
        assert_eq!(l[0].choice[&u], point(edge(&uv, 4)));

        let a = fixture(Fixture::ApproxEx);
        let x: Vec<Rational> = (0..a.n_edges())
            .map(|e| if a.edge(e).from == a.edge(e).to { ratio(1, 2) } else { int(0) })
            .collect();
        let l = local_strategies(&a, &x);
        assert_eq!(l.len(), 2);
        assert!(l.iter().all(|p| p.x == ratio(1, 2)));
        assert_eq!(l[0].nu, vec![int(0), int(1)]);
        assert_eq!(l[1].nu, vec![int(1), int(0)]);

        let t = restrict(&m, &[1]).unwrap();
        let l = local_strategies(&t, &[int(1)]);
        assert_eq!(l[0].nu, vec![int(5), int(15)]);
    }

    fn approx_locals() -> (Mdp, Vec<LocalStrategy>) {
        let a = fixture(Fixture::ApproxEx);
        let x: Vec<Rational> = (0..a.n_edges())
            .map(|e| if a.edge(e).from == a.edge(e).to { ratio(1, 2) } else { int(0) })
            .collect();
        let l = local_strategies(&a, &x);
        (a, l)
    }

    #[test]
    fn global_unichain_closed_form() {
        let (a, l) = approx_locals();
        for k in [1u64, 2, 3, 10] {
            let g = global_unichain(&a, &l, k, 1 << 16).unwrap();
            let c = induced_chain(&a, &g, 0).unwrap();
            let v = ratio(k as i64, 2 * k as i64 + 2);
            assert_eq!(expected_mp(&c), vec![v.clone(), v]);
            assert_eq!(bscc_analysis(&c, false).len(), 1);
        }
        assert!(global_unichain(&a, &l, 0, 16).is_err());
        let m = fixture(Fixture::RunEx);
        let t = restrict(&m, &[1]).unwrap();
        let l = local_strategies(&t, &[int(1)]);
        for k in [1, 5] {
            let g = global_unichain(&t, &l, k, 16).unwrap();
            assert_eq!(g.memory_size(), 1);
            assert_eq!(expected_mp(&induced_chain(&t, &g, 0).unwrap()), vec![int(5), int(15)]);
        }
    }

    #[test]
    fn recovery_length_formula() {
        assert_eq!(recovery_length(100, &ratio(1, 8), 1, &ratio(1, 2), 2), 2246);
    }

    /// Loops twice at each state between moves: mean (1/3, 1/3) on APPROX_EX.
    fn twice_each(a: &Mdp) -> StrategyMachine {
        let (s, t) = (0, 1);
        let lp = |x: usize| a.out_edges(x).iter().copied().find(|&e| a.edge(e).to == x).unwrap();
        let go = |x: usize| a.out_edges(x).iter().copied().find(|&e| a.edge(e).to != x).unwrap();
        let mut output = std::collections::HashMap::new();
        let mut update = std::collections::HashMap::new();
        for x in [s, t] {
            output.insert((x, 0), point(lp(x)));
            output.insert((x, 1), point(lp(x)));
            output.insert((x, 2), point(go(x)));
            for m in 0..3 {
                update.insert((lp(x), m), point((m + 1).min(2)));
                update.insert((go(x), m), point(0));
            }
        }
        StrategyMachine {
            memory: vec!["a".into(), "b".into(), "c".into()],
            initial: point(0),
            update,
            output,
        }
    }

    #[test]
    fn combined_period_lengths() {
        let a = fixture(Fixture::ApproxEx);
        let query = ThresholdQuery::new(Mode::BwcFinite, "s", vec![ratio(1, 4); 2], vec![ratio(1, 4); 2]);
        let (n, _) = normalize(&a, &query).unwrap();
        let fwc = twice_each(&n);
        assert!(wins_everywhere(&n, &fwc, &[0, 1]).unwrap());
        let mu_star = wc_margin(&n, &fwc, &[0, 1]).unwrap();
        assert_eq!(mu_star, ratio(1, 3));
        let (_, l) = approx_locals();
        let g = global_unichain(&n, &l, 1, 64).unwrap();
        let k = 4;
        let delta = ratio(1, 4);
        let (h, shape) = wec_combined(&n, &g, &fwc, &[0, 1], k, &delta, 1 << 16).unwrap();
        let w = n.max_abs_weight();
        assert_eq!(shape.period, k);
        assert_eq!(shape.recovery, recovery_length(k, &delta, w, &mu_star, 6));
        let max_of = |prefix: char| {
            h.memory
                .iter()
                .filter(|m| m.starts_with(prefix))
                .map(|m| m[1..].split(':').next().unwrap().parse::<u64>().unwrap())
                .max()
                .unwrap()
        };
        assert_eq!(max_of('g'), k - 1);
        assert_eq!(max_of('r'), shape.recovery - 1);
        assert!(wins_everywhere(&n, &h, &[0, 1]).unwrap());
        assert!(wec_combined(&n, &g, &fwc, &[0, 1], k, &mu_star, 16).is_err());
    }

    #[test]
    fn wc_search_tiers() {
        let m = fixture(Fixture::RunEx);
        let f = memoryless_wc_search(&m, &[0, 1], 1 << 10).unwrap().unwrap();
        assert_eq!(f.memory_size(), 1);
        let s = m.require_state("s").unwrap();
        let u = m.require_state("u").unwrap();
        assert_eq!(f.output[&(s, 0)], point(edge(&m, 0)));
        assert_eq!(f.output[&(u, 0)], point(edge(&m, 3)));

        let a = fixture(Fixture::ApproxEx);
        let query = ThresholdQuery::new(Mode::WorstCase, "s", vec![ratio(1, 5); 2], vec![int(0); 2]);
        let (n, _) = normalize(&a, &query).unwrap();
        let f = memoryless_wc_search(&n, &[0, 1], 1 << 16).unwrap().unwrap();
        assert_eq!(f.memory_size(), 2);
        assert!(wins_everywhere(&n, &f, &[0, 1]).unwrap());
        // Unidimensional: the positional game solution.
        let one = m.project(&[1]);
        assert!(memoryless_wc_search(&one, &[0], 0).unwrap().is_some());
    }

    #[test]
    fn bwc_finite_run_ex() {
        let m = fixture(Fixture::RunEx);
        let query = q(Mode::BwcFinite, "0,0", "0,9");
        let opts = SynthOptions::default();
        for n in [1, 2, 4] {
            let h = bwc_finite_strategy(&m, &query, n, &opts).unwrap();
            assert!(verify_worstcase(&m, &h, 0, &query.mu).unwrap().holds);
            assert_eq!(expected_mp(&induced_chain(&m, &h, 0).unwrap()), vec![int(5), int(15)]);
        }
        let syn = synthesize(&m, &query, &opts).unwrap();
        assert_eq!(syn.parameter, 1);
    }

    #[test]
    fn bas_examples() {
        let m = fixture(Fixture::RunExBas);
        let query = q(Mode::BeyondAlmostSure, "0,0", "99/10,99/10");
        let syn = bas_strategy(&m, &query, &SynthOptions::default()).unwrap();
        assert_eq!(syn.expectation, vec![int(10), int(10)]);
        assert!(verify_almost_sure(&m, &syn.machine, 0, &query.mu).unwrap());
        let chain = induced_chain(&m, &syn.machine, 0).unwrap();
        let mut parts: Vec<Vec<String>> = bscc_analysis(&chain, false)
            .iter()
            .map(|b| {
                let mut ids: Vec<String> = b.nodes.iter().map(|&v| m.state(chain.nodes[v].0).id.clone()).collect();
                ids.sort();
                ids.dedup();
                ids
            })
            .collect();
        parts.sort();
        assert_eq!(parts, vec![vec!["t".to_string()], vec!["u".to_string(), "v".to_string()]]);

        let r = fixture(Fixture::RunEx);
        let syn = bas_strategy(&r, &q(Mode::BeyondAlmostSure, "0,0", "0,9"), &SynthOptions::default()).unwrap();
        assert!(dominates(&syn.expectation, &[int(0), int(9)]));
        let syn = bas_strategy(&r, &q(Mode::Expectation, "0,0", "9,9"), &SynthOptions::default()).unwrap();
        assert!(dominates(&syn.expectation, &[int(9), int(9)]));
    }
}
