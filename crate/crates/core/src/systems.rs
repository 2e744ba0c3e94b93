//! The linear systems T and T′, the end-component expectation system, and
//! the top-level decision procedures.

use serde_json::{json, Value};

use crate::decomposition::{mecs, reachable_mask, EndComponent};
use crate::error::Result;
use crate::games::{self, Pruned, DEFAULT_ADVERSARY_CAP};
use crate::lp::{self, LinearSystem, LpOutcome, Relation};
use crate::model::{self, ensure_valid, nontrivial_dims, Mdp, Mode, ThresholdQuery};
use crate::rational::{self, Rational};

pub fn y_state(mdp: &Mdp, s: usize) -> String {
    format!("y_{}", mdp.state(s).id)
}

pub fn y_edge(mdp: &Mdp, e: usize) -> String {
    format!("y_e{}", mdp.edge(e).id)
}

pub fn x_edge(mdp: &Mdp, e: usize) -> String {
    format!("x_e{}", mdp.edge(e).id)
}

pub fn x_state(mdp: &Mdp, s: usize) -> String {
    format!("x_{}", mdp.state(s).id)
}

/// Options shared by the systems: which components the frequencies live in,
/// and on which dimensions the local positivity rows are imposed (`None`
/// drops those rows).
struct Shape<'a> {
    components: &'a [EndComponent],
    local_dims: Option<&'a [usize]>,
}

fn build_two_phase(mdp: &Mdp, s0: usize, nu: &[Rational], shape: Shape<'_>) -> LinearSystem {
    let mut sys = LinearSystem::new(true);
    let one = rational::one;
    let ys: Vec<usize> = (0..mdp.n_states()).map(|s| sys.var(y_state(mdp, s))).collect();
    let ye: Vec<usize> = (0..mdp.n_edges()).map(|e| sys.var(y_edge(mdp, e))).collect();
    let xe: Vec<usize> = (0..mdp.n_edges()).map(|e| sys.var(x_edge(mdp, e))).collect();
    let init = |s: usize| if s == s0 { one() } else { rational::zero() };

    for s in 0..mdp.n_states() {
        let id = &mdp.state(s).id;
        // (A1): inflow equals outflow plus the switching leak.
        let mut terms: Vec<(usize, Rational)> = mdp.in_edges(s).iter().map(|&e| (ye[e], one())).collect();
        terms.extend(mdp.out_edges(s).iter().map(|&e| (ye[e], -one())));
        terms.push((ys[s], -one()));
        sys.add(format!("A1[{id}]"), terms, Relation::Eq, -init(s));
        if mdp.is_random(s) {
            // (A1'): y_e = p(e) * (1_{s0} + inflow - y_s).
            for &e in mdp.out_edges(s) {
                let p = mdp.prob(e);
                let mut terms = vec![(ye[e], one())];
                terms.extend(mdp.in_edges(s).iter().map(|&f| (ye[f], -p.clone())));
                terms.push((ys[s], p.clone()));
                sys.add(format!("A1'[e{}]", mdp.edge(e).id), terms, Relation::Eq, &p * init(s));
            }
        }
    }

    let mut internal = vec![false; mdp.n_edges()];
    let mut in_comp = Vec::new();
    for c in shape.components {
        in_comp.extend(c.states.iter().map(|&s| (ys[s], one())));
        for &e in &c.edges {
            internal[e] = true;
        }
    }
    // (A2)
    sys.add("A2", in_comp, Relation::Eq, one());
    // (B)
    for (k, c) in shape.components.iter().enumerate() {
        let mut terms: Vec<(usize, Rational)> = c.states.iter().map(|&s| (ys[s], one())).collect();
        terms.extend(c.edges.iter().map(|&e| (xe[e], -one())));
        sys.add(format!("B[{k}]"), terms, Relation::Eq, rational::zero());
    }
    // Frequencies only live inside the components.
    for e in 0..mdp.n_edges() {
        if !internal[e] {
            sys.add(
                format!("X0[e{}]", mdp.edge(e).id),
                vec![(xe[e], one())],
                Relation::Eq,
                rational::zero(),
            );
        }
    }
    for s in 0..mdp.n_states() {
        let id = &mdp.state(s).id;
        // (C1)
        let mut terms: Vec<(usize, Rational)> = mdp.in_edges(s).iter().map(|&e| (xe[e], one())).collect();
        terms.extend(mdp.out_edges(s).iter().map(|&e| (xe[e], -one())));
        sys.add(format!("C1[{id}]"), terms, Relation::Eq, rational::zero());
        if mdp.is_random(s) {
            // (C1')
            for &e in mdp.out_edges(s) {
                let p = mdp.prob(e);
                let mut terms = vec![(xe[e], one())];
                terms.extend(mdp.in_edges(s).iter().map(|&f| (xe[f], -p.clone())));
                sys.add(format!("C1'[e{}]", mdp.edge(e).id), terms, Relation::Eq, rational::zero());
            }
        }
    }
    // (C2)
    for (i, n) in nu.iter().enumerate() {
        let terms = (0..mdp.n_edges())
            .filter(|&e| mdp.edge(e).weight[i] != 0)
            .map(|e| (xe[e], rational::int(mdp.edge(e).weight[i])))
            .collect();
        sys.add(format!("C2[{i}]"), terms, Relation::Gt, n.clone());
    }
    // (C3)
    if let Some(dims) = shape.local_dims {
        for (k, c) in shape.components.iter().enumerate() {
            for &i in dims {
                let terms = c
                    .edges
                    .iter()
                    .filter(|&&e| mdp.edge(e).weight[i] != 0)
                    .map(|&e| (xe[e], rational::int(mdp.edge(e).weight[i])))
                    .collect();
                sys.add(format!("C3[{k},{i}]"), terms, Relation::Gt, rational::zero());
            }
        }
    }
    sys
}

/// System T over the given maximal winning end components. Local positivity
/// rows are imposed on the dimensions in `dims`.
pub fn build_t(mdp: &Mdp, s0: usize, nu: &[Rational], mwecs: &[EndComponent], dims: &[usize]) -> LinearSystem {
    build_two_phase(
        mdp,
        s0,
        nu,
        Shape {
            components: mwecs,
            local_dims: Some(dims),
        },
    )
}

/// System T′: as T, over maximal end components.
pub fn build_tprime(mdp: &Mdp, s0: usize, nu: &[Rational], mecs: &[EndComponent], dims: &[usize]) -> LinearSystem {
    build_two_phase(
        mdp,
        s0,
        nu,
        Shape {
            components: mecs,
            local_dims: Some(dims),
        },
    )
}

/// T′ without local positivity rows: the plain expectation problem.
pub fn build_expectation(mdp: &Mdp, s0: usize, nu: &[Rational], mecs: &[EndComponent]) -> LinearSystem {
    build_two_phase(
        mdp,
        s0,
        nu,
        Shape {
            components: mecs,
            local_dims: None,
        },
    )
}

/// Long-run frequencies inside an end component with mean payoff at least
/// (or, if `strict`, above) `nu` on every dimension.
pub fn build_ec_expectation(mdp: &Mdp, ec: &EndComponent, nu: &[Rational], strict: bool) -> LinearSystem {
    let dims: Vec<usize> = (0..mdp.dimension()).collect();
    ec_expectation_on(mdp, ec, nu, &dims, strict)
}

pub(crate) fn ec_expectation_on(
    mdp: &Mdp,
    ec: &EndComponent,
    nu: &[Rational],
    dims: &[usize],
    strict: bool,
) -> LinearSystem {
    let one = rational::one;
    let mut sys = LinearSystem::new(true);
    let xs: Vec<usize> = ec.states.iter().map(|&s| sys.var(x_state(mdp, s))).collect();
    let mut xe = vec![usize::MAX; mdp.n_edges()];
    for &e in &ec.edges {
        xe[e] = sys.var(x_edge(mdp, e));
    }
    sys.add("EC-1", xs.iter().map(|&v| (v, one())).collect(), Relation::Eq, one());
    for (k, &s) in ec.states.iter().enumerate() {
        let id = &mdp.state(s).id;
        let inside = |e: &usize| xe[*e] != usize::MAX;
        let mut terms = vec![(xs[k], one())];
        terms.extend(mdp.in_edges(s).iter().filter(|e| inside(e)).map(|&e| (xe[e], -one())));
        sys.add(format!("EC-IN[{id}]"), terms, Relation::Eq, rational::zero());
        let mut terms = vec![(xs[k], one())];
        terms.extend(mdp.out_edges(s).iter().filter(|e| inside(e)).map(|&e| (xe[e], -one())));
        sys.add(format!("EC-OUT[{id}]"), terms, Relation::Eq, rational::zero());
        if mdp.is_random(s) {
            for &e in mdp.out_edges(s) {
                sys.add(
                    format!("EC-RAND[e{}]", mdp.edge(e).id),
                    vec![(xe[e], one()), (xs[k], -mdp.prob(e))],
                    Relation::Eq,
                    rational::zero(),
                );
            }
        }
    }
    let rel = if strict { Relation::Gt } else { Relation::Ge };
    for &i in dims {
        let terms = ec
            .edges
            .iter()
            .filter(|&&e| mdp.edge(e).weight[i] != 0)
            .map(|&e| (xe[e], rational::int(mdp.edge(e).weight[i])))
            .collect();
        sys.add(format!("EC-MP[{i}]"), terms, rel, nu[i].clone());
    }
    sys
}

/// Whether some frequency vector inside `ec` has strictly positive mean
/// payoff on every dimension of `dims`.
pub fn admits_positive_frequency(mdp: &Mdp, ec: &EndComponent, dims: &[usize]) -> bool {
    let zeros = vec![rational::zero(); mdp.dimension()];
    let sys = ec_expectation_on(mdp, ec, &zeros, dims, true);
    lp::solve(&sys).expect("well-formed EC system").is_feasible()
}

#[derive(Clone, Debug)]
pub struct Witness {
    /// The MDP the system was built on: normalized, restricted to the states
    /// reachable from the start, and pruned for the BWC modes.
    pub mdp: Mdp,
    pub s0: usize,
    pub components: Vec<EndComponent>,
    pub system: LinearSystem,
    pub assignment: Vec<Rational>,
    /// Margin of the strict rows in `assignment`.
    pub margin: Rational,
    /// Query in the coordinates of `mdp`.
    pub query: ThresholdQuery,
    /// Dimensions that are not trivial for the worst-case threshold.
    pub dims: Vec<usize>,
}

impl Witness {
    pub fn value(&self, name: &str) -> Rational {
        self.system
            .lookup(name)
            .map(|v| self.assignment[v].clone())
            .unwrap_or_else(rational::zero)
    }

    pub fn y_state(&self, s: usize) -> Rational {
        self.value(&y_state(&self.mdp, s))
    }

    pub fn y_edge(&self, e: usize) -> Rational {
        self.value(&y_edge(&self.mdp, e))
    }

    pub fn x_edge(&self, e: usize) -> Rational {
        self.value(&x_edge(&self.mdp, e))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FailedStage {
    /// The start state loses the worst-case game.
    Pruned,
    /// No component can hold the Phase II mass.
    NoComponent,
    /// The linear system has no solution with positive slack.
    Infeasible,
}

impl FailedStage {
    pub fn name(self) -> &'static str {
        match self {
            FailedStage::Pruned => "pruned",
            FailedStage::NoComponent => "no-component",
            FailedStage::Infeasible => "infeasible",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Decision {
    pub answer: bool,
    pub mode: Mode,
    pub witness: Option<Witness>,
    pub failure: Option<FailedStage>,
    /// The system that was solved, if one was built.
    pub system: Option<LinearSystem>,
    /// Worst-case winning states (ids) for mode wc.
    pub region: Option<Vec<String>>,
}

impl Decision {
    fn no(mode: Mode, stage: FailedStage, system: Option<LinearSystem>) -> Decision {
        Decision {
            answer: false,
            mode,
            witness: None,
            failure: Some(stage),
            system,
            region: None,
        }
    }

    pub fn to_json(&self) -> Value {
        let mut out = json!({
            "answer": if self.answer { "yes" } else { "no" },
            "mode": self.mode.name(),
        });
        if let Some(w) = &self.witness {
            let assignment: serde_json::Map<String, Value> = w
                .system
                .vars()
                .iter()
                .zip(&w.assignment)
                .map(|(n, v)| (n.clone(), Value::String(rational::format(v))))
                .collect();
            let decomposition: Vec<Value> = w
                .components
                .iter()
                .map(|c| json!(c.state_ids(&w.mdp)))
                .collect();
            out["witness"] = json!({
                "assignment": assignment,
                "decomposition": decomposition,
                "slack": rational::format(&w.margin),
            });
        }
        if let Some(r) = &self.region {
            out["witness"] = json!({ "region": r });
        }
        if let Some(f) = self.failure {
            out["failure"] = json!(f.name());
        }
        out
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DecideOptions {
    pub adversary_cap: u128,
}

impl Default for DecideOptions {
    fn default() -> Self {
        DecideOptions {
            adversary_cap: DEFAULT_ADVERSARY_CAP,
        }
    }
}

pub fn decide(mdp: &Mdp, query: &ThresholdQuery) -> Result<Decision> {
    decide_with(mdp, query, DecideOptions::default())
}

pub fn decide_with(mdp: &Mdp, query: &ThresholdQuery, opts: DecideOptions) -> Result<Decision> {
    ensure_valid(mdp)?;
    query.check_dimensions(mdp.dimension())?;
    let start = mdp.require_state(&query.from)?;
    let mode = query.mode;
    let dims = nontrivial_dims(&query.mu, mdp.max_abs_weight());

    let (work, q) = if mode == Mode::Expectation {
        (mdp.clone(), query.clone())
    } else {
        model::normalize(mdp, query)?
    };
    let reach = reachable_mask(&work, start);
    let work = work.induced(&reach, |_| true);
    let s0 = work.require_state(&query.from)?;

    if mode == Mode::WorstCase {
        let region = games::wc_winning_region(&work, &dims, opts.adversary_cap)?;
        let ids = region.states().iter().map(|&s| work.state(s).id.clone()).collect();
        let answer = region.winning[s0];
        return Ok(Decision {
            answer,
            mode,
            witness: None,
            failure: (!answer).then_some(FailedStage::Pruned),
            system: None,
            region: Some(ids),
        });
    }

    let work = match mode {
        Mode::BwcFinite | Mode::BwcInfinite => {
            match games::prune(&work, s0, &dims, opts.adversary_cap)? {
                Pruned::Unsatisfiable => return Ok(Decision::no(mode, FailedStage::Pruned, None)),
                Pruned::Mdp(p) => p,
            }
        }
        _ => work,
    };
    let s0 = work.require_state(&query.from)?;

    let components: Vec<EndComponent> = match mode {
        Mode::BwcFinite => games::mwecs(&work, &dims, opts.adversary_cap)?,
        Mode::Expectation => mecs(&work),
        _ => mecs(&work)
            .into_iter()
            .filter(|c| admits_positive_frequency(&work, c, &dims))
            .collect(),
    };
    let system = match mode {
        Mode::BwcFinite => build_t(&work, s0, &q.nu, &components, &dims),
        Mode::Expectation => build_expectation(&work, s0, &q.nu, &components),
        _ => build_tprime(&work, s0, &q.nu, &components, &dims),
    };
    if components.is_empty() {
        return Ok(Decision::no(mode, FailedStage::NoComponent, Some(system)));
    }
    let outcome = lp::solve(&system)?;
    let (assignment, margin) = match &outcome {
        LpOutcome::Infeasible { .. } => {
            return Ok(Decision::no(mode, FailedStage::Infeasible, Some(system)))
        }
        _ => (
            outcome.assignment().expect("feasible").to_vec(),
            outcome.margin().expect("strict rows present"),
        ),
    };
    let witness = Witness {
        mdp: work,
        s0,
        components,
        system: system.clone(),
        assignment,
        margin,
        query: q,
        dims,
    };
    Ok(Decision {
        answer: true,
        mode,
        witness: Some(witness),
        failure: None,
        system: Some(system),
        region: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{fixture, Fixture};
    use crate::rational::{int, parse_vector, ratio};

    fn q(mode: Mode, from: &str, mu: &str, nu: &str) -> ThresholdQuery {
        ThresholdQuery::new(mode, from, parse_vector(mu).unwrap(), parse_vector(nu).unwrap())
    }

    fn answer(f: Fixture, query: ThresholdQuery) -> bool {
        decide(&fixture(f), &query).unwrap().answer
    }

    fn t_of_run_ex(nu: &[Rational]) -> (Mdp, LinearSystem) {
        let m = fixture(Fixture::RunEx);
        let t = m.require_state("t").unwrap();
        let comps = vec![EndComponent::from_states(&m, vec![t])];
        let sys = build_t(&m, 0, nu, &comps, &[0, 1]);
        (m, sys)
    }

    #[test]
    fn system_t_hand_solution() {
        let (m, sys) = t_of_run_ex(&[int(0), int(9)]);
        assert_eq!(sys.n_vars(), 4 + 7 + 7);
        let mut x = vec![rational::zero(); sys.n_vars()];
        for name in ["y_e0", "y_t", "x_e2"] {
            x[sys.lookup(name).unwrap()] = int(1);
        }
        assert!(sys.satisfied_by(&x, Some(&int(1))));
        let out = lp::solve(&sys).unwrap();
        assert!(out.is_feasible());
        let a = out.assignment().unwrap();
        assert_eq!(a[sys.lookup("x_e2").unwrap()], int(1));
        assert_eq!(a[sys.lookup("y_t").unwrap()], int(1));
        let _ = m;
    }

    #[test]
    fn system_t_rejects_nine_nine() {
        let (_, sys) = t_of_run_ex(&[int(9), int(9)]);
        assert!(!lp::solve(&sys).unwrap().is_feasible());
    }

    #[test]
    fn system_tprime_hand_solution() {
        let m = fixture(Fixture::RunEx);
        let comps = mecs(&m);
        let nu = vec![ratio(99, 10), ratio(99, 10)];
        let sys = build_tprime(&m, 0, &nu, &comps, &[0, 1]);
        let mut x = vec![rational::zero(); sys.n_vars()];
        let set = |x: &mut Vec<Rational>, n: &str, v: Rational| x[sys.lookup(n).unwrap()] = v;
        set(&mut x, "y_e0", ratio(1, 2));
        set(&mut x, "y_e1", ratio(1, 2));
        set(&mut x, "y_t", ratio(1, 2));
        set(&mut x, "y_u", ratio(1, 2));
        set(&mut x, "x_e2", ratio(1, 2));
        set(&mut x, "x_e4", ratio(1, 4));
        set(&mut x, "x_e5", ratio(1, 8));
        set(&mut x, "x_e6", ratio(1, 8));
        assert!(sys.satisfied_by(&x, Some(&ratio(1, 10))));
        assert!(lp::solve(&sys).unwrap().is_feasible());
        let sys = build_tprime(&m, 0, &[int(10), int(10)], &comps, &[0, 1]);
        assert!(!lp::solve(&sys).unwrap().is_feasible());
    }

    #[test]
    fn ec_expectation_examples() {
        let m = fixture(Fixture::RunEx);
        let t = m.require_state("t").unwrap();
        let ec_t = EndComponent::from_states(&m, vec![t]);
        let sys = build_ec_expectation(&m, &ec_t, &[int(5), int(15)], false);
        let out = lp::solve(&sys).unwrap();
        assert_eq!(out.assignment().unwrap(), &[int(1), int(1)]);
        let uv = EndComponent::from_states(&m, vec![2, 3]);
        let sys = build_ec_expectation(&m, &uv, &[int(15), int(5)], false);
        let out = lp::solve(&sys).unwrap();
        let a = out.assignment().unwrap();
        assert_eq!(a[sys.lookup("x_u").unwrap()], ratio(1, 2));
        assert_eq!(a[sys.lookup("x_e4").unwrap()], ratio(1, 2));
        assert_eq!(a[sys.lookup("x_e5").unwrap()], ratio(1, 4));
        let sys = build_ec_expectation(&m, &ec_t, &[int(6), int(0)], false);
        assert!(!lp::solve(&sys).unwrap().is_feasible());
    }

    #[test]
    fn run_ex_truth_table() {
        use Mode::*;
        assert!(answer(Fixture::RunEx, q(BwcFinite, "s", "0,0", "0,9")));
        assert!(!answer(Fixture::RunEx, q(BwcFinite, "s", "0,0", "9,9")));
        assert!(answer(Fixture::RunEx, q(BwcInfinite, "s", "0,0", "99/10,99/10")));
        assert!(!answer(Fixture::RunEx, q(BwcInfinite, "s", "0,0", "10,10")));
        assert!(answer(Fixture::RunEx, q(BwcInfinite, "s", "0,0", "0,9")));
        assert!(answer(Fixture::RunEx, q(WorstCase, "s", "0,0", "0,0")));
        assert!(answer(Fixture::RunEx, q(Expectation, "s", "0,0", "99/10,99/10")));
        assert!(!answer(Fixture::RunEx, q(Expectation, "s", "0,0", "10,10")));
    }

    #[test]
    fn run_ex_bas_table() {
        use Mode::*;
        assert!(answer(Fixture::RunExBas, q(BeyondAlmostSure, "s", "0,0", "99/10,99/10")));
        assert!(!answer(Fixture::RunExBas, q(BwcInfinite, "s", "0,0", "6,6")));
        assert!(answer(Fixture::RunExBas, q(BwcInfinite, "s", "0,0", "4,14")));
        assert!(answer(Fixture::RunExBas, q(BwcFinite, "s", "0,0", "4,14")));
        let d = decide(&fixture(Fixture::RunExBas), &q(BwcFinite, "u", "0,0", "0,0")).unwrap();
        assert_eq!(d.failure, Some(FailedStage::Pruned));
        assert!(!answer(Fixture::RunExBas, q(WorstCase, "v", "0,0", "0,0")));
    }

    #[test]
    fn decision_json() {
        let d = decide(&fixture(Fixture::RunEx), &q(Mode::BwcFinite, "s", "0,0", "0,9")).unwrap();
        let j = d.to_json();
        assert_eq!(j["answer"], "yes");
        assert_eq!(j["mode"], "bwc-fin");
        assert_eq!(j["witness"]["decomposition"], json!([["t"]]));
        let d = decide(&fixture(Fixture::RunEx), &q(Mode::BwcFinite, "s", "0,0", "9,9")).unwrap();
        assert_eq!(d.to_json()["failure"], "infeasible");
    }

    #[test]
    fn errors_propagate() {
        let m = fixture(Fixture::RunEx);
        assert!(decide(&m, &q(Mode::BwcFinite, "nowhere", "0,0", "0,0")).is_err());
        assert!(decide(&m, &q(Mode::BwcFinite, "s", "0", "0,0")).is_err());
    }
}
