//! The infinite-memory strategy f_K: expectation play monitored by the
//! running total payoff, with a permanent switch to a worst-case strategy.

use num_bigint::BigInt;
use num_traits::ToPrimitive;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::chain::{
    dominates, expected_mp, induced_chain, induced_chain_from, verify_almost_sure_chain, verify_worstcase_chain,
    WorstCaseVerdict,
};
use crate::machine::StrategyMachine;
use crate::model::{Mdp, Mode, ThresholdQuery};
use crate::rational::{self, Rational};
use crate::sim::{sample, CompiledMachine, Policy};
use crate::synthesis::{compose_on, expectation_parts, memoryless_wc_search, phase1_strategy, Phase1, SynthOptions};
use crate::systems::{decide_with, DecideOptions};

#[derive(Clone, Debug)]
pub struct FkComponent {
    /// States of the end component (input MDP indices).
    pub states: Vec<usize>,
    /// Monitored mean payoff ν per monitored dimension, in normalized units.
    pub monitor: Vec<Rational>,
    /// Unichain expectation strategy on the component.
    pub exp: StrategyMachine,
}

#[derive(Clone, Debug)]
pub struct ProceduralStrategy {
    pub k: u64,
    /// Worst-case threshold; fixes the normalization of the monitored sums.
    pub mu: Vec<Rational>,
    pub nu: Vec<Rational>,
    /// Monitored (non-trivial) dimensions.
    pub dims: Vec<usize>,
    pub phase1: Phase1,
    pub components: Vec<FkComponent>,
    pub wc: StrategyMachine,
}

/// `N_i = ν·i·K/2`.
pub fn phase_threshold(nu: &[Rational], i: u64, k: u64) -> Vec<Rational> {
    let f = rational::ratio((i * k) as i64, 2);
    nu.iter().map(|v| v * &f).collect()
}

/// Builds f_K for a bwc-inf query: Phase I of the T′ witness, unichain
/// expectation strategies in the components, and a worst-case strategy on
/// the pruned MDP.
pub fn bwc_infinite_strategy(mdp: &Mdp, query: &ThresholdQuery, k: u64, opts: &SynthOptions) -> Result<ProceduralStrategy> {
    if k == 0 {
        return Err(Error::Parameter("K must be positive".into()));
    }
    if query.mode != Mode::BwcInfinite {
        return Err(Error::Parameter("expected a bwc-inf query".into()));
    }
    let decision = decide_with(
        mdp,
        query,
        DecideOptions {
            adversary_cap: opts.adversary_cap,
        },
    )?;
    let w = decision
        .witness
        .ok_or_else(|| Error::Synthesis("the bwc-inf threshold is not achievable".into()))?;
    let ids: Vec<Vec<String>> = w.components.iter().map(|c| c.state_ids(&w.mdp)).collect();
    let phase1 = Phase1::from_json(mdp, &phase1_strategy(&w)?.to_json(&w.mdp), &ids)?;
    let (parts, _) = expectation_parts(&w, opts)?;
    let mut components = Vec::new();
    for (c, part) in w.components.iter().zip(parts) {
        let Some(g) = part else { continue };
        let sub = crate::decomposition::restrict(&w.mdp, &c.states)?;
        let all: Vec<usize> = (0..sub.n_states()).collect();
        let chain = crate::chain::induced_chain_from(&sub, &g, &all)?;
        let bsccs = crate::chain::bscc_analysis(&chain, false);
        let monitor = w
            .dims
            .iter()
            .map(|&i| {
                let low = bsccs.iter().map(|b| b.mean_payoff[i].clone()).min().expect("bottom component");
                low / rational::int(2)
            })
            .collect();
        components.push(FkComponent {
            states: c.states.iter().map(|&s| mdp.lift_state(&w.mdp, s)).collect(),
            monitor,
            exp: g.lift(&sub, mdp),
        });
    }
    let wc = memoryless_wc_search(&w.mdp, &w.dims, opts.search_budget)?.ok_or(Error::FallbackUnavailable)?;
    // Components without Phase II mass are dropped; renumber the entries.
    let mut phase1 = phase1;
    for s in 0..mdp.n_states() {
        phase1.component[s] = components.iter().position(|c| c.states.contains(&s));
    }
    Ok(ProceduralStrategy {
        k,
        mu: query.mu.clone(),
        nu: query.nu.clone(),
        dims: w.dims.clone(),
        phase1,
        components,
        wc: wc.lift(&w.mdp, mdp),
    })
}

impl ProceduralStrategy {
    pub fn to_json(&self, mdp: &Mdp) -> Value {
        let components: Vec<Value> = self
            .components
            .iter()
            .map(|c| {
                json!({
                    "states": c.states.iter().map(|&s| mdp.state(s).id.clone()).collect::<Vec<_>>(),
                    "monitor": rational::format_vector(&c.monitor),
                    "exp": c.exp.to_json(mdp),
                })
            })
            .collect();
        json!({
            "kind": "f_K",
            "K": self.k,
            "mu": rational::format_vector(&self.mu),
            "nu": rational::format_vector(&self.nu),
            "dims": self.dims,
            "phase1": self.phase1.to_json(mdp),
            "components": components,
            "wc": self.wc.to_json(mdp),
        })
    }

    pub fn from_json(mdp: &Mdp, v: &Value) -> Result<ProceduralStrategy> {
        let bad = |m: &str| Error::Strategy(m.to_string());
        if v["kind"] != "f_K" {
            return Err(bad("not an f_K record"));
        }
        let k = v["K"].as_u64().filter(|&k| k > 0).ok_or_else(|| bad("`K` must be a positive integer"))?;
        let text = |key: &str| v[key].as_str().ok_or_else(|| bad(&format!("`{key}` missing")));
        let mu = rational::parse_vector(text("mu")?)?;
        let nu = rational::parse_vector(text("nu")?)?;
        let dims: Vec<usize> = serde_json::from_value(v["dims"].clone()).map_err(|_| bad("bad `dims`"))?;
        if dims.iter().any(|&i| i >= mdp.dimension()) || mu.len() != mdp.dimension() {
            return Err(Error::Dimension {
                expected: mdp.dimension(),
                got: mu.len(),
            });
        }
        let mut components = Vec::new();
        let mut ids = Vec::new();
        for c in v["components"].as_array().ok_or_else(|| bad("`components` missing"))? {
            let names: Vec<String> = serde_json::from_value(c["states"].clone()).map_err(|_| bad("bad `states`"))?;
            let states = names.iter().map(|id| mdp.require_state(id)).collect::<Result<Vec<_>>>()?;
            let monitor = rational::parse_vector(c["monitor"].as_str().ok_or_else(|| bad("`monitor` missing"))?)?;
            if monitor.len() != dims.len() {
                return Err(bad("monitor length differs from dims"));
            }
            components.push(FkComponent {
                states,
                monitor,
                exp: StrategyMachine::from_json(mdp, &c["exp"])?,
            });
            ids.push(names);
        }
        Ok(ProceduralStrategy {
            k,
            mu,
            nu,
            dims,
            phase1: Phase1::from_json(mdp, &v["phase1"], &ids)?,
            components,
            wc: StrategyMachine::from_json(mdp, &v["wc"])?,
        })
    }

    /// The machine f_K tends to as K grows: Phase I, then the expectation
    /// strategy of the component forever.
    pub fn limit_machine(&self, mdp: &Mdp, s0: usize, memory_cap: usize) -> Result<StrategyMachine> {
        let parts: Vec<Option<StrategyMachine>> = self.components.iter().map(|c| Some(c.exp.clone())).collect();
        compose_on(mdp, s0, &self.phase1, &parts, None, None, memory_cap)
    }

    /// Exact checks of the finite parts: the worst-case strategy from every
    /// component state, and the expectation of the limit machine.
    pub fn verify_parts(&self, mdp: &Mdp, s0: usize, memory_cap: usize) -> Result<PartsVerdict> {
        let mut starts: Vec<usize> = self.components.iter().flat_map(|c| c.states.iter().copied()).collect();
        starts.sort_unstable();
        starts.dedup();
        let worst_case = if starts.is_empty() {
            WorstCaseVerdict {
                holds: true,
                witness: None,
            }
        } else {
            let chain = induced_chain_from(mdp, &self.wc, &starts)?;
            verify_worstcase_chain(&chain, &self.mu, &self.dims)
        };
        let limit = self.limit_machine(mdp, s0, memory_cap)?;
        let chain = induced_chain(mdp, &limit, s0)?;
        let expectation = expected_mp(&chain);
        Ok(PartsVerdict {
            worst_case,
            almost_sure: verify_almost_sure_chain(&chain, &self.mu, mdp.max_abs_weight()),
            expectation_holds: dominates(&expectation, &self.nu),
            expectation,
            monitors_positive: self.components.iter().all(|c| c.monitor.iter().all(rational::is_positive)),
        })
    }

    pub fn runner<'a>(&'a self, mdp: &'a Mdp) -> FkRunner<'a> {
        FkRunner::new(self, mdp)
    }
}

#[derive(Clone, Debug)]
pub struct PartsVerdict {
    pub worst_case: WorstCaseVerdict,
    /// Almost-sure check of the limit machine.
    pub almost_sure: bool,
    /// Exact expected mean payoff of the limit machine.
    pub expectation: Vec<Rational>,
    pub expectation_holds: bool,
    pub monitors_positive: bool,
}

/// Searches K by doubling from 16 until pilot simulations switch to the
/// worst-case strategy in at most 1/20 of the runs.
pub fn tune_k(
    mdp: &Mdp,
    query: &ThresholdQuery,
    opts: &SynthOptions,
    horizon: u64,
    runs: u64,
    seed: u64,
) -> Result<ProceduralStrategy> {
    let s0 = mdp.require_state(&query.from)?;
    let mut k = 16;
    loop {
        let f = bwc_infinite_strategy(mdp, query, k, opts)?;
        let report = crate::sim::simulate_procedural(mdp, &f, s0, horizon, runs, seed, Some(&query.mu))?;
        if report.switched * 20 <= runs || k >= opts.max_parameter {
            return Ok(f);
        }
        k *= 2;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FkMode {
    Phase1,
    Expectation { component: usize },
    WorstCase,
}

/// Monitor state of one f_K run.
#[derive(Clone, Debug)]
pub struct FkMonitor {
    pub mode: FkMode,
    /// Steps since entering the component.
    pub steps: u64,
    /// Normalized total payoff since entering the component, per monitored
    /// dimension.
    pub total: Vec<i128>,
    pub violations: u64,
}

impl FkMonitor {
    pub fn phase(&self, k: u64) -> u64 {
        self.steps.saturating_sub(1) / k
    }
}

pub struct FkRunner<'a> {
    f: &'a ProceduralStrategy,
    mdp: &'a Mdp,
    play: Vec<Vec<(f64, usize)>>,
    switch: Vec<f64>,
    exp: Vec<CompiledMachine>,
    wc: CompiledMachine,
    /// Normalized weight per edge and monitored dimension.
    weights: Vec<Vec<i128>>,
    /// Monitor values as (numerator, denominator).
    monitor: Vec<Vec<(i128, i128)>>,
    pub state: FkMonitor,
    mem: usize,
}

fn small(r: &BigInt) -> i128 {
    r.to_i128().expect("value fits in i128")
}

impl<'a> FkRunner<'a> {
    fn new(f: &'a ProceduralStrategy, mdp: &'a Mdp) -> FkRunner<'a> {
        let play = f
            .phase1
            .play
            .iter()
            .map(CompiledMachine::cumulative)
            .collect();
        let switch = f.phase1.switch.iter().map(rational::to_f64).collect();
        let weights = mdp
            .edges()
            .iter()
            .map(|e| {
                f.dims
                    .iter()
                    .map(|&i| small(f.mu[i].denom()) * e.weight[i] as i128 - small(f.mu[i].numer()))
                    .collect()
            })
            .collect();
        let monitor = f
            .components
            .iter()
            .map(|c| c.monitor.iter().map(|v| (small(v.numer()), small(v.denom()))).collect())
            .collect();
        FkRunner {
            f,
            mdp,
            play,
            switch,
            exp: f.components.iter().map(|c| CompiledMachine::new(mdp, &c.exp)).collect(),
            wc: CompiledMachine::new(mdp, &f.wc),
            weights,
            monitor,
            state: FkMonitor {
                mode: FkMode::Phase1,
                steps: 0,
                total: vec![0; f.dims.len()],
                violations: 0,
            },
            mem: 0,
        }
    }

    fn arrive(&mut self, t: usize, rng: &mut ChaCha8Rng) {
        if self.state.mode == FkMode::Phase1 && rng.random::<f64>() < self.switch[t] {
            let j = self.f.phase1.component[t].expect("switch into a component");
            self.state.mode = FkMode::Expectation { component: j };
            self.state.steps = 0;
            self.state.total.iter_mut().for_each(|x| *x = 0);
            self.mem = self.exp[j].start(rng);
        }
    }

    /// Whether `total > factor·N_i` in every monitored dimension.
    fn above(&self, j: usize, i: u64, factor: i128) -> bool {
        let k = self.f.k as i128;
        self.state
            .total
            .iter()
            .zip(&self.monitor[j])
            .all(|(&t, &(p, q))| 2 * q * t > factor * p * i as i128 * k)
    }
}

impl Policy for FkRunner<'_> {
    fn start(&mut self, s0: usize, rng: &mut ChaCha8Rng) {
        self.state = FkMonitor {
            mode: FkMode::Phase1,
            steps: 0,
            total: vec![0; self.f.dims.len()],
            violations: 0,
        };
        self.mem = 0;
        self.arrive(s0, rng);
    }

    fn choose(&mut self, s: usize, rng: &mut ChaCha8Rng) -> usize {
        match self.state.mode {
            FkMode::Phase1 => sample(&self.play[s], rng),
            FkMode::Expectation { component } => self.exp[component].choose(s, self.mem, rng),
            FkMode::WorstCase => self.wc.choose(s, self.mem, rng),
        }
    }

    fn observe(&mut self, e: usize, rng: &mut ChaCha8Rng) {
        match self.state.mode {
            FkMode::Phase1 => self.arrive(self.mdp.edge(e).to, rng),
            FkMode::WorstCase => self.mem = self.wc.update(e, self.mem, rng),
            FkMode::Expectation { component: j } => {
                self.mem = self.exp[j].update(e, self.mem, rng);
                self.state.steps += 1;
                for (t, w) in self.state.total.iter_mut().zip(&self.weights[e]) {
                    *t += w;
                }
                let k = self.f.k;
                let i = self.state.phase(k);
                // SC1 from phase 1 on; SC2 at the end of every phase.
                let sc1 = i >= 1 && !self.above(j, i, 1);
                let sc2 = self.state.steps.is_multiple_of(k) && !self.above(j, i + 1, 2);
                if sc1 || sc2 {
                    self.state.mode = FkMode::WorstCase;
                    self.mem = self.wc.start(rng);
                }
                // Runs still in the expectation mode must satisfy TP > N_i.
                if !self.switched() && i >= 1 && !self.above(j, i, 1) {
                    self.state.violations += 1;
                }
            }
        }
    }

    fn switched(&self) -> bool {
        self.state.mode == FkMode::WorstCase
    }

    fn violations(&self) -> u64 {
        self.state.violations
    }
}

/// Reads any strategy file: a finite machine or an f_K record.
#[derive(Clone, Debug)]
pub enum AnyStrategy {
    Machine(StrategyMachine),
    Procedural(ProceduralStrategy),
}

impl AnyStrategy {
    pub fn from_json(mdp: &Mdp, v: &Value) -> Result<AnyStrategy> {
        if v.get("kind").is_some() {
            Ok(AnyStrategy::Procedural(ProceduralStrategy::from_json(mdp, v)?))
        } else {
            Ok(AnyStrategy::Machine(StrategyMachine::from_json(mdp, v)?))
        }
    }
}
