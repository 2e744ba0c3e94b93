//! Seeded Monte Carlo simulation. Statistics are floating point and only
//! reported; no decision depends on them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::machine::{Dist, StrategyMachine};
use crate::model::Mdp;
use crate::procedural::{AnyStrategy, ProceduralStrategy};
use crate::rational::{self, Rational};

/// A strategy that can be run step by step.
pub trait Policy {
    fn start(&mut self, s0: usize, rng: &mut ChaCha8Rng);
    /// Edge taken at controller state `s`.
    fn choose(&mut self, s: usize, rng: &mut ChaCha8Rng) -> usize;
    fn observe(&mut self, e: usize, rng: &mut ChaCha8Rng);
    fn switched(&self) -> bool {
        false
    }
    fn violations(&self) -> u64 {
        0
    }
}

pub fn sample(cum: &[(f64, usize)], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    cum.iter().find(|(c, _)| u < *c).unwrap_or(cum.last().expect("non-empty distribution")).1
}

/// A machine turned into flat lookup tables.
pub struct CompiledMachine {
    memories: usize,
    initial: Vec<(f64, usize)>,
    output: Vec<Vec<(f64, usize)>>,
    update: Vec<Vec<(f64, usize)>>,
}

impl CompiledMachine {
    pub fn cumulative(d: &Dist<usize>) -> Vec<(f64, usize)> {
        let mut acc = 0.0;
        d.iter()
            .map(|(k, p)| {
                acc += rational::to_f64(p);
                (acc, *k)
            })
            .collect()
    }

    pub fn new(mdp: &Mdp, m: &StrategyMachine) -> CompiledMachine {
        let memories = m.memory_size();
        let mut output = vec![Vec::new(); mdp.n_states() * memories];
        for (&(s, k), d) in &m.output {
            output[s * memories + k] = Self::cumulative(d);
        }
        let mut update = vec![Vec::new(); mdp.n_edges() * memories];
        for (&(e, k), d) in &m.update {
            update[e * memories + k] = Self::cumulative(d);
        }
        CompiledMachine {
            memories,
            initial: Self::cumulative(&m.initial),
            output,
            update,
        }
    }

    pub fn start(&self, rng: &mut ChaCha8Rng) -> usize {
        sample(&self.initial, rng)
    }

    pub fn choose(&self, s: usize, m: usize, rng: &mut ChaCha8Rng) -> usize {
        sample(&self.output[s * self.memories + m], rng)
    }

    pub fn update(&self, e: usize, m: usize, rng: &mut ChaCha8Rng) -> usize {
        sample(&self.update[e * self.memories + m], rng)
    }
}

struct MachineRunner<'a> {
    m: &'a CompiledMachine,
    mem: usize,
}

impl Policy for MachineRunner<'_> {
    fn start(&mut self, _s0: usize, rng: &mut ChaCha8Rng) {
        self.mem = self.m.start(rng);
    }

    fn choose(&mut self, s: usize, rng: &mut ChaCha8Rng) -> usize {
        self.m.choose(s, self.mem, rng)
    }

    fn observe(&mut self, e: usize, rng: &mut ChaCha8Rng) {
        self.mem = self.m.update(e, self.mem, rng);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DimStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimReport {
    pub runs: u64,
    pub horizon: u64,
    pub seed: u64,
    pub approximate: bool,
    /// Statistics of the per-run mean payoff over the horizon.
    pub mean_payoff: Vec<DimStats>,
    /// Runs whose mean payoff exceeds the threshold in every dimension.
    pub exceed_fraction: Option<f64>,
    pub monitor_violations: u64,
    pub switched: u64,
}

impl SimReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serializes")
    }
}

struct RunResult {
    totals: Vec<i64>,
    switched: bool,
    violations: u64,
}

fn one_run<P: Policy>(mdp: &Mdp, random: &[Vec<(f64, usize)>], policy: &mut P, s0: usize, horizon: u64, rng: &mut ChaCha8Rng) -> RunResult {
    let mut totals = vec![0i64; mdp.dimension()];
    let mut s = s0;
    policy.start(s0, rng);
    for _ in 0..horizon {
        let e = if mdp.is_random(s) {
            sample(&random[s], rng)
        } else {
            policy.choose(s, rng)
        };
        for (t, w) in totals.iter_mut().zip(&mdp.edge(e).weight) {
            *t += w;
        }
        policy.observe(e, rng);
        s = mdp.edge(e).to;
    }
    RunResult {
        totals,
        switched: policy.switched(),
        violations: policy.violations(),
    }
}

fn run_all<F, P>(mdp: &Mdp, s0: usize, horizon: u64, runs: u64, seed: u64, mu: Option<&[Rational]>, make: F) -> Result<SimReport>
where
    F: Fn() -> P + Sync,
    P: Policy,
{
    if horizon == 0 || runs == 0 {
        return Err(Error::Parameter("horizon and runs must be at least 1".into()));
    }
    let random: Vec<Vec<(f64, usize)>> = (0..mdp.n_states())
        .map(|s| {
            if mdp.is_random(s) {
                let d: Dist<usize> = mdp.out_edges(s).iter().map(|&e| (e, mdp.prob(e))).collect();
                CompiledMachine::cumulative(&d)
            } else {
                Vec::new()
            }
        })
        .collect();
    let results: Vec<RunResult> = (0..runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(run);
            let mut policy = make();
            one_run(mdp, &random, &mut policy, s0, horizon, &mut rng)
        })
        .collect();
    let h = horizon as f64;
    let d = mdp.dimension();
    let mean_payoff = (0..d)
        .map(|i| {
            let xs: Vec<f64> = results.iter().map(|r| r.totals[i] as f64 / h).collect();
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = if xs.len() > 1 {
                xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            DimStats {
                mean,
                min: xs.iter().copied().fold(f64::INFINITY, f64::min),
                max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                std: var.sqrt(),
            }
        })
        .collect();
    let exceed_fraction = mu.map(|mu| {
        let hits = results
            .iter()
            .filter(|r| {
                r.totals
                    .iter()
                    .zip(mu)
                    .all(|(&t, m)| Rational::from_integer(t.into()) > m * Rational::from_integer(horizon.into()))
            })
            .count();
        hits as f64 / runs as f64
    });
    Ok(SimReport {
        runs,
        horizon,
        seed,
        approximate: true,
        mean_payoff,
        exceed_fraction,
        monitor_violations: results.iter().map(|r| r.violations).sum(),
        switched: results.iter().filter(|r| r.switched).count() as u64,
    })
}

pub fn simulate_machine(
    mdp: &Mdp,
    machine: &StrategyMachine,
    s0: usize,
    horizon: u64,
    runs: u64,
    seed: u64,
    mu: Option<&[Rational]>,
) -> Result<SimReport> {
    machine.check(mdp)?;
    let compiled = CompiledMachine::new(mdp, machine);
    run_all(mdp, s0, horizon, runs, seed, mu, || MachineRunner { m: &compiled, mem: 0 })
}

pub fn simulate_procedural(
    mdp: &Mdp,
    f: &ProceduralStrategy,
    s0: usize,
    horizon: u64,
    runs: u64,
    seed: u64,
    mu: Option<&[Rational]>,
) -> Result<SimReport> {
    run_all(mdp, s0, horizon, runs, seed, mu, || f.runner(mdp))
}

pub fn simulate(
    mdp: &Mdp,
    strategy: &AnyStrategy,
    s0: usize,
    horizon: u64,
    runs: u64,
    seed: u64,
    mu: Option<&[Rational]>,
) -> Result<SimReport> {
    match strategy {
        AnyStrategy::Machine(m) => simulate_machine(mdp, m, s0, horizon, runs, seed, mu),
        AnyStrategy::Procedural(f) => simulate_procedural(mdp, f, s0, horizon, runs, seed, mu),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{fixture, Fixture};
    use crate::machine::point;
    use crate::model::{Mode, ThresholdQuery};
    use crate::procedural::{bwc_infinite_strategy, phase_threshold, FkMode};
    use crate::rational::{int, parse_vector};
    use crate::synthesis::SynthOptions;

    fn t_loop(m: &Mdp) -> StrategyMachine {
        let choice: Vec<Dist<usize>> = (0..m.n_states()).map(|s| point(m.out_edges(s)[0])).collect();
        StrategyMachine::memoryless(m, &choice)
    }

    #[test]
    fn deterministic_loop() {
        let m = fixture(Fixture::RunEx);
        let f = t_loop(&m);
        let t = m.require_state("t").unwrap();
        let r = simulate_machine(&m, &f, t, 1000, 20, 7, Some(&[int(0), int(0)])).unwrap();
        assert_eq!(r.mean_payoff[0].min, 5.0);
        assert_eq!(r.mean_payoff[0].max, 5.0);
        assert_eq!(r.mean_payoff[1].mean, 15.0);
        assert_eq!(r.exceed_fraction, Some(1.0));
    }

    #[test]
    fn seeded_reports_repeat() {
        let m = fixture(Fixture::RunEx);
        let mut choice: Vec<Dist<usize>> = (0..m.n_states()).map(|s| point(m.out_edges(s)[0])).collect();
        choice[0] = vec![(0, crate::rational::ratio(1, 2)), (1, crate::rational::ratio(1, 2))];
        choice[2] = point(m.edge_index(4).unwrap());
        let f = StrategyMachine::memoryless(&m, &choice);
        let a = simulate_machine(&m, &f, 0, 500, 64, 3, None).unwrap();
        let b = simulate_machine(&m, &f, 0, 500, 64, 3, None).unwrap();
        assert_eq!(a, b);
        let c = simulate_machine(&m, &f, 0, 500, 64, 4, None).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn thresholds() {
        let n = phase_threshold(&[int(1), int(1)], 3, 10);
        assert_eq!(n, vec![int(15), int(15)]);
        let twice: Vec<Rational> = n.iter().map(|x| x * int(2)).collect();
        assert_eq!(twice, vec![int(30), int(30)]);
    }

    #[test]
    fn fk_monitor_holds_on_runs() {
        let m = fixture(Fixture::RunEx);
        let q = ThresholdQuery::new(
            Mode::BwcInfinite,
            "s",
            parse_vector("0,0").unwrap(),
            parse_vector("99/10,99/10").unwrap(),
        );
        let f = bwc_infinite_strategy(&m, &q, 64, &SynthOptions::default()).unwrap();
        let back = ProceduralStrategy::from_json(&m, &f.to_json(&m)).unwrap();
        assert_eq!(back.to_json(&m), f.to_json(&m));
        let parts = f.verify_parts(&m, 0, 1 << 16).unwrap();
        assert!(parts.worst_case.holds && parts.almost_sure && parts.monitors_positive);
        assert!(parts.expectation_holds, "{:?}", parts.expectation);
        let mut runner = f.runner(&m);
        for run in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            rng.set_stream(run);
            runner.start(0, &mut rng);
            let mut s = 0;
            for _ in 0..2000 {
                let e = if m.is_random(s) {
                    let outs = m.out_edges(s);
                    outs[rng.random_range(0..outs.len())]
                } else {
                    runner.choose(s, &mut rng)
                };
                runner.observe(e, &mut rng);
                s = m.edge(e).to;
                if let FkMode::Expectation { component } = runner.state.mode {
                    let i = runner.state.phase(f.k);
                    if i >= 1 {
                        let bound = phase_threshold(&f.components[component].monitor, i, f.k);
                        for (t, b) in runner.state.total.iter().zip(&bound) {
                            assert!(Rational::from_integer((*t).into()) > *b);
                        }
                    }
                }
            }
            assert_eq!(runner.state.violations, 0);
        }
    }
}
