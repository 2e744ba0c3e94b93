use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use bwc_core::chain::{verify_almost_sure, verify_expectation, verify_worstcase, CycleWitness};
use bwc_core::decomposition::{mecs, sccs};
use bwc_core::error::{Error, Result};
use bwc_core::fixtures::fixture_by_name;
use bwc_core::games::{self, Pruned, WinningRegion, DEFAULT_ADVERSARY_CAP};
use bwc_core::io::mdp_from_json;
use bwc_core::machine::StrategyMachine;
use bwc_core::model::{self, nontrivial_dims, Mdp, Mode, ThresholdQuery};
use bwc_core::procedural::{bwc_infinite_strategy, tune_k, AnyStrategy};
use bwc_core::rational::{self, Rational};
use bwc_core::sim::simulate;
use bwc_core::synthesis::{synthesize, SynthOptions};
use bwc_core::systems::{decide_with, DecideOptions};

/// Beyond worst-case synthesis for multidimensional mean-payoff MDPs.
#[derive(Parser)]
#[command(name = "bwc", version)]
struct Cli {
    /// Progress and timings on stderr.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct MdpArg {
    /// MDP JSON file, or `fixture:NAME` for a built-in model.
    #[arg(long)]
    mdp: String,
}

#[derive(Args)]
struct Thresholds {
    /// Start state (defaults to the MDP's initial state).
    #[arg(long)]
    from: Option<String>,
    /// Worst-case threshold, comma-separated rationals.
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<String>,
    /// Expectation threshold, comma-separated rationals.
    #[arg(long, allow_hyphen_values = true)]
    nu: Option<String>,
}

#[derive(Args)]
struct Budgets {
    /// Largest number of adversary strategies enumerated per game.
    #[arg(long, default_value_t = DEFAULT_ADVERSARY_CAP)]
    adversary_cap: u128,
    /// Largest value tried for the N, A and K parameters.
    #[arg(long, default_value_t = 1 << 16)]
    max_parameter: u64,
    /// Largest number of memory states of a synthesized machine.
    #[arg(long, default_value_t = 1 << 18)]
    memory_cap: usize,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, default_value_t = 1000)]
    runs: u64,
    #[arg(long, default_value_t = 10_000)]
    horizon: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Scc,
    Mec,
    Mwec,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthMode {
    Bas,
    #[value(name = "bwc-fin")]
    BwcFin,
    #[value(name = "bwc-inf")]
    BwcInf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Check {
    Wc,
    As,
    Exp,
}

#[derive(Subcommand)]
enum Command {
    /// Check the model invariants.
    Validate(MdpArg),
    /// Dimension, largest weight, largest probability denominator, counts.
    Info(MdpArg),
    /// SCCs, maximal end components or maximal winning end components.
    Decompose {
        #[command(flatten)]
        mdp: MdpArg,
        #[arg(long, value_enum)]
        kind: Kind,
        /// Worst-case threshold for `mwec` (default: all zeros).
        #[arg(long, allow_hyphen_values = true)]
        mu: Option<String>,
        #[command(flatten)]
        budgets: Budgets,
    },
    /// Remove the states losing the worst-case game.
    Prune {
        #[command(flatten)]
        mdp: MdpArg,
        #[command(flatten)]
        thresholds: Thresholds,
        #[command(flatten)]
        budgets: Budgets,
    },
    /// Answer a threshold query (exit 0 yes, 1 no, 2 error).
    Decide {
        #[command(flatten)]
        mdp: MdpArg,
        #[arg(long)]
        mode: String,
        #[command(flatten)]
        thresholds: Thresholds,
        /// Write the linear system in text form.
        #[arg(long)]
        dump_lp: Option<PathBuf>,
        #[command(flatten)]
        budgets: Budgets,
    },
    /// Build a witness strategy.
    Synthesize {
        #[command(flatten)]
        mdp: MdpArg,
        #[arg(long, value_enum)]
        mode: SynthMode,
        #[command(flatten)]
        thresholds: Thresholds,
        /// Strategy file; without it the strategy goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Phase length of f_K for bwc-inf; tuned by pilot simulation if absent.
        #[arg(long)]
        k: Option<u64>,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        budgets: Budgets,
    },
    /// Exact check of a strategy file (exit 0 yes, 1 no, 2 error).
    Verify {
        #[command(flatten)]
        mdp: MdpArg,
        #[arg(long)]
        strategy: PathBuf,
        #[arg(long, value_enum)]
        check: Check,
        #[command(flatten)]
        thresholds: Thresholds,
        #[command(flatten)]
        budgets: Budgets,
    },
    /// Seeded Monte Carlo runs of a strategy file.
    Simulate {
        #[command(flatten)]
        mdp: MdpArg,
        #[arg(long)]
        strategy: PathBuf,
        #[command(flatten)]
        thresholds: Thresholds,
        #[command(flatten)]
        sim: SimArgs,
    },
}

/// What a command prints and how the process exits.
struct Outcome {
    stdout: String,
    code: u8,
}

fn print(v: &Value, code: u8) -> Outcome {
    Outcome {
        stdout: serde_json::to_string_pretty(v).expect("json"),
        code,
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn load_mdp(arg: &MdpArg) -> Result<Mdp> {
    match arg.mdp.strip_prefix("fixture:") {
        Some(name) => fixture_by_name(name),
        None => mdp_from_json(&read(Path::new(&arg.mdp))?),
    }
}

fn start_state(mdp: &Mdp, from: &Option<String>) -> Result<String> {
    match from {
        Some(s) => {
            mdp.require_state(s)?;
            Ok(s.clone())
        }
        None => mdp
            .initial()
            .map(|s| mdp.state(s).id.clone())
            .ok_or_else(|| Error::Parameter("--from is required when the MDP has no initial state".into())),
    }
}

fn vector(mdp: &Mdp, text: &Option<String>, flag: &str, needed: bool) -> Result<Vec<Rational>> {
    match text {
        Some(t) => {
            let v = rational::parse_vector(t)?;
            if v.len() != mdp.dimension() {
                return Err(Error::Dimension {
                    expected: mdp.dimension(),
                    got: v.len(),
                });
            }
            Ok(v)
        }
        None if needed => Err(Error::Parameter(format!("--{flag} is required"))),
        None => Ok(vec![rational::zero(); mdp.dimension()]),
    }
}

fn query(mdp: &Mdp, mode: Mode, t: &Thresholds) -> Result<ThresholdQuery> {
    let from = start_state(mdp, &t.from)?;
    let mu = vector(mdp, &t.mu, "mu", mode.uses_mu())?;
    let nu = vector(mdp, &t.nu, "nu", mode.uses_nu())?;
    Ok(ThresholdQuery::new(mode, &from, mu, nu))
}

fn synth_options(b: &Budgets) -> SynthOptions {
    SynthOptions {
        adversary_cap: b.adversary_cap,
        max_parameter: b.max_parameter,
        memory_cap: b.memory_cap,
        ..SynthOptions::default()
    }
}

fn ids(mdp: &Mdp, states: &[usize]) -> Vec<String> {
    states.iter().map(|&s| mdp.state(s).id.clone()).collect()
}

/// Spoiling adversary choices per losing state, as state id → {random state id: edge id}.
fn certificates(mdp: &Mdp, region: &WinningRegion) -> Value {
    let map: serde_json::Map<String, Value> = region
        .certificates
        .iter()
        .map(|(&s, sigma)| {
            let choice: serde_json::Map<String, Value> = sigma
                .iter()
                .map(|&(r, e)| (mdp.state(r).id.clone(), json!(mdp.edge(e).id)))
                .collect();
            (mdp.state(s).id.clone(), Value::Object(choice))
        })
        .collect();
    Value::Object(map)
}

fn witness_json(mdp: &Mdp, w: &CycleWitness) -> Value {
    json!({
        "dimension": w.dim,
        "mean": rational::format(&w.mean),
        "edges": w.edges.iter().map(|&e| mdp.edge(e).id).collect::<Vec<_>>(),
        "states": w.edges.iter().map(|&e| mdp.state(mdp.edge(e).from).id.clone()).collect::<Vec<_>>(),
    })
}

fn run(cli: Cli) -> Result<Outcome> {
    let clock = Instant::now();
    let verbose = cli.verbose > 0;
    let outcome = match cli.command {
        Command::Validate(arg) => {
            let report = match load_mdp(&arg) {
                Ok(mdp) => model::validate(&mdp)
                    .iter()
                    .map(|v| json!({"subject": v.subject, "message": v.message}))
                    .collect(),
                Err(Error::InvalidMdp(m) | Error::UnknownState(m)) => vec![json!({"subject": "mdp", "message": m})],
                Err(e) => return Err(e),
            };
            let valid = report.is_empty();
            print(&json!({"valid": valid, "violations": report}), if valid { 0 } else { 1 })
        }
        Command::Info(arg) => {
            let mdp = load_mdp(&arg)?;
            model::ensure_valid(&mdp)?;
            let random = (0..mdp.n_states()).filter(|&s| mdp.is_random(s)).count();
            print(
                &json!({
                    "dimension": mdp.dimension(),
                    "max_weight": mdp.max_abs_weight(),
                    "max_denominator": mdp.max_denominator(),
                    "states": mdp.n_states(),
                    "controller_states": mdp.n_states() - random,
                    "random_states": random,
                    "edges": mdp.n_edges(),
                    "initial": mdp.initial().map(|s| mdp.state(s).id.clone()),
                }),
                0,
            )
        }
        Command::Decompose { mdp, kind, mu, budgets } => {
            let mdp = load_mdp(&mdp)?;
            model::ensure_valid(&mdp)?;
            let out = match kind {
                Kind::Scc => {
                    let parts: Vec<Vec<String>> = sccs(&mdp, None).iter().map(|c| ids(&mdp, &c.states)).collect();
                    json!({"kind": "scc", "components": parts})
                }
                Kind::Mec => {
                    let parts: Vec<Vec<String>> = mecs(&mdp).iter().map(|c| ids(&mdp, &c.states)).collect();
                    json!({"kind": "mec", "components": parts})
                }
                Kind::Mwec => {
                    let mu = vector(&mdp, &mu, "mu", false)?;
                    let q = ThresholdQuery::new(Mode::WorstCase, "", mu.clone(), mu.clone());
                    let (work, _) = model::normalize(&mdp, &q)?;
                    let dims = nontrivial_dims(&mu, mdp.max_abs_weight());
                    let parts: Vec<Vec<String>> = games::mwecs(&work, &dims, budgets.adversary_cap)?
                        .iter()
                        .map(|c| ids(&work, &c.states))
                        .collect();
                    let region = games::wc_winning_region(&work, &dims, budgets.adversary_cap)?;
                    json!({"kind": "mwec", "components": parts, "losing": certificates(&work, &region)})
                }
            };
            print(&out, 0)
        }
        Command::Prune { mdp, thresholds, budgets } => {
            let mdp = load_mdp(&mdp)?;
            model::ensure_valid(&mdp)?;
            let q = query(&mdp, Mode::WorstCase, &thresholds)?;
            let (work, _) = model::normalize(&mdp, &q)?;
            let dims = nontrivial_dims(&q.mu, mdp.max_abs_weight());
            let s0 = work.require_state(&q.from)?;
            let region = games::wc_winning_region(&work, &dims, budgets.adversary_cap)?;
            let losing = certificates(&work, &region);
            let out = match games::prune_with(&work, s0, &region) {
                Pruned::Unsatisfiable => json!({"satisfiable": false, "states": [], "losing": losing}),
                Pruned::Mdp(p) => {
                    let all: Vec<usize> = (0..p.n_states()).collect();
                    json!({"satisfiable": true, "states": ids(&p, &all), "losing": losing})
                }
            };
            print(&out, 0)
        }
        Command::Decide {
            mdp,
            mode,
            thresholds,
            dump_lp,
            budgets,
        } => {
            let mdp = load_mdp(&mdp)?;
            let mode: Mode = mode.parse()?;
            let q = query(&mdp, mode, &thresholds)?;
            let d = decide_with(
                &mdp,
                &q,
                DecideOptions {
                    adversary_cap: budgets.adversary_cap,
                },
            )?;
            if let Some(path) = dump_lp {
                let text = d.system.as_ref().map(|s| s.to_lp_text()).unwrap_or_default();
                std::fs::write(&path, text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
            }
            print(&d.to_json(), if d.answer { 0 } else { 1 })
        }
        Command::Synthesize {
            mdp,
            mode,
            thresholds,
            out,
            k,
            sim,
            budgets,
        } => {
            let mdp = load_mdp(&mdp)?;
            let opts = synth_options(&budgets);
            let mode = match mode {
                SynthMode::Bas => Mode::BeyondAlmostSure,
                SynthMode::BwcFin => Mode::BwcFinite,
                SynthMode::BwcInf => Mode::BwcInfinite,
            };
            let q = query(&mdp, mode, &thresholds)?;
            let (strategy, summary) = if mode == Mode::BwcInfinite {
                let f = match k {
                    Some(k) => bwc_infinite_strategy(&mdp, &q, k, &opts)?,
                    None => tune_k(&mdp, &q, &opts, sim.horizon, sim.runs, sim.seed)?,
                };
                (f.to_json(&mdp), json!({"mode": mode.name(), "kind": "f_K", "K": f.k}))
            } else {
                let s = synthesize(&mdp, &q, &opts)?;
                (
                    s.machine.to_json(&mdp),
                    json!({
                        "mode": mode.name(),
                        "kind": "machine",
                        "memory": s.machine.memory_size(),
                        "parameter": s.parameter,
                        "expectation": rational::format_vector(&s.expectation),
                    }),
                )
            };
            match out {
                Some(path) => {
                    let text = serde_json::to_string_pretty(&strategy).expect("json");
                    std::fs::write(&path, text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
                    print(&summary, 0)
                }
                None => print(&strategy, 0),
            }
        }
        Command::Verify {
            mdp,
            strategy,
            check,
            thresholds,
            budgets,
        } => {
            let mdp = load_mdp(&mdp)?;
            model::ensure_valid(&mdp)?;
            let s0 = mdp.require_state(&start_state(&mdp, &thresholds.from)?)?;
            let strategy = AnyStrategy::from_json(&mdp, &serde_json::from_str(&read(&strategy)?)?)?;
            let name = match check {
                Check::Wc => "wc",
                Check::As => "as",
                Check::Exp => "exp",
            };
            let (holds, mut out) = match strategy {
                AnyStrategy::Machine(m) => verify_machine(&mdp, &m, s0, check, &thresholds)?,
                AnyStrategy::Procedural(mut f) => {
                    if thresholds.mu.is_some() {
                        f.mu = vector(&mdp, &thresholds.mu, "mu", true)?;
                    }
                    if thresholds.nu.is_some() {
                        f.nu = vector(&mdp, &thresholds.nu, "nu", true)?;
                    }
                    let p = f.verify_parts(&mdp, s0, budgets.memory_cap)?;
                    let mut out = json!({"scope": "finite parts of f_K"});
                    let holds = match check {
                        Check::Wc => {
                            if let Some(w) = &p.worst_case.witness {
                                out["witness"] = witness_json(&mdp, w);
                            }
                            p.worst_case.holds
                        }
                        Check::As => p.almost_sure,
                        Check::Exp => {
                            out["value"] = json!(rational::format_vector(&p.expectation));
                            p.expectation_holds && p.monitors_positive
                        }
                    };
                    (holds, out)
                }
            };
            out["check"] = json!(name);
            out["answer"] = json!(if holds { "yes" } else { "no" });
            print(&out, if holds { 0 } else { 1 })
        }
        Command::Simulate {
            mdp,
            strategy,
            thresholds,
            sim,
        } => {
            let mdp = load_mdp(&mdp)?;
            model::ensure_valid(&mdp)?;
            let s0 = mdp.require_state(&start_state(&mdp, &thresholds.from)?)?;
            let strategy = AnyStrategy::from_json(&mdp, &serde_json::from_str(&read(&strategy)?)?)?;
            let mu = match (&thresholds.mu, &strategy) {
                (Some(_), _) => Some(vector(&mdp, &thresholds.mu, "mu", true)?),
                (None, AnyStrategy::Procedural(f)) => Some(f.mu.clone()),
                (None, AnyStrategy::Machine(_)) => None,
            };
            let report = simulate(&mdp, &strategy, s0, sim.horizon, sim.runs, sim.seed, mu.as_deref())?;
            print(&report.to_json(), 0)
        }
    };
    if verbose {
        eprintln!("done in {:.3}s", clock.elapsed().as_secs_f64());
    }
    Ok(outcome)
}

fn verify_machine(mdp: &Mdp, m: &StrategyMachine, s0: usize, check: Check, t: &Thresholds) -> Result<(bool, Value)> {
    Ok(match check {
        Check::Wc => {
            let mu = vector(mdp, &t.mu, "mu", true)?;
            let v = verify_worstcase(mdp, m, s0, &mu)?;
            let mut out = json!({});
            if let Some(w) = &v.witness {
                out["witness"] = witness_json(mdp, w);
            }
            (v.holds, out)
        }
        Check::As => {
            let mu = vector(mdp, &t.mu, "mu", true)?;
            (verify_almost_sure(mdp, m, s0, &mu)?, json!({}))
        }
        Check::Exp => {
            let nu = vector(mdp, &t.nu, "nu", true)?;
            let (holds, value) = verify_expectation(mdp, m, s0, &nu)?;
            (holds, json!({"value": rational::format_vector(&value)}))
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(o) => {
            // A closed pipe (`bwc ... | head`) is not an error.
            let _ = writeln!(std::io::stdout().lock(), "{}", o.stdout);
            ExitCode::from(o.code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
