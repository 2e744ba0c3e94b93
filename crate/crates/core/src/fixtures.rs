//! The four built-in example MDPs.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{EdgeSpec, Mdp, Owner, State};
use crate::rational::{ratio, Rational};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Fixture {
    RunEx,
    RunExBas,
    TaskEx,
    ApproxEx,
}

impl Fixture {
    pub const ALL: [Fixture; 4] = [
        Fixture::RunEx,
        Fixture::RunExBas,
        Fixture::TaskEx,
        Fixture::ApproxEx,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Fixture::RunEx => "RUN_EX",
            Fixture::RunExBas => "RUN_EX_BAS",
            Fixture::TaskEx => "TASK_EX",
            Fixture::ApproxEx => "APPROX_EX",
        }
    }
}

impl FromStr for Fixture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Fixture> {
        Fixture::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownFixture(s.to_string()))
    }
}

pub fn fixture_by_name(name: &str) -> Result<Mdp> {
    Ok(fixture(name.parse()?))
}

pub fn fixture(which: Fixture) -> Mdp {
    match which {
        Fixture::RunEx => run_ex(true),
        Fixture::RunExBas => run_ex(false),
        Fixture::TaskEx => task_ex(),
        Fixture::ApproxEx => approx_ex(),
    }
}

fn st(id: &str, owner: Owner) -> State {
    State {
        id: id.to_string(),
        owner,
    }
}

fn e(id: u64, from: &str, to: &str, weight: &[i64], prob: Option<Rational>) -> EdgeSpec {
    EdgeSpec {
        id,
        from: from.to_string(),
        to: to.to_string(),
        weight: weight.to_vec(),
        prob,
    }
}

fn run_ex(with_ut: bool) -> Mdp {
    use Owner::*;
    let states = vec![
        st("s", Controller),
        st("t", Controller),
        st("u", Controller),
        st("v", Random),
    ];
    let half = || Some(ratio(1, 2));
    let mut edges = vec![
        e(0, "s", "t", &[0, 0], None),
        e(1, "s", "u", &[0, 0], None),
        e(2, "t", "t", &[5, 15], None),
        e(3, "u", "t", &[0, 0], None),
        e(4, "u", "v", &[0, 0], None),
        e(5, "v", "u", &[30, 80], half()),
        e(6, "v", "u", &[30, -60], half()),
    ];
    if !with_ut {
        edges.retain(|x| x.id != 3);
    }
    Mdp::new(2, states, edges, Some("s")).expect("fixture")
}

/// Two configurations (0 and 1) and two task types; a random state draws the
/// next task, the controller picks the configuration to serve it in.
/// Weights are (time, energy).
fn task_ex() -> Mdp {
    use Owner::*;
    let states = vec![
        st("0", Random),
        st("1", Random),
        st("(0,0)", Controller),
        st("(0,1)", Controller),
        st("(1,0)", Controller),
        st("(1,1)", Controller),
    ];
    let half = || Some(ratio(1, 2));
    let edges = vec![
        e(0, "0", "(0,0)", &[0, 0], half()),
        e(1, "0", "(0,1)", &[0, 0], half()),
        e(2, "1", "(1,0)", &[0, 0], half()),
        e(3, "1", "(1,1)", &[0, 0], half()),
        e(4, "(0,0)", "0", &[30, 2], None),
        e(5, "(0,1)", "0", &[60, 4], None),
        e(6, "(0,0)", "1", &[10, 16], None),
        e(7, "(0,1)", "1", &[16, 26], None),
        e(8, "(1,0)", "1", &[2, 10], None),
        e(9, "(1,1)", "1", &[8, 20], None),
        e(10, "(1,0)", "0", &[34, 4], None),
        e(11, "(1,1)", "0", &[64, 6], None),
    ];
    Mdp::new(2, states, edges, Some("0")).expect("fixture")
}

fn approx_ex() -> Mdp {
    use Owner::*;
    let states = vec![st("s", Controller), st("t", Controller)];
    let edges = vec![
        e(0, "s", "s", &[0, 1], None),
        e(1, "s", "t", &[0, 0], None),
        e(2, "t", "t", &[1, 0], None),
        e(3, "t", "s", &[0, 0], None),
    ];
    Mdp::new(2, states, edges, Some("s")).expect("fixture")
}

/// TASK_EX with every weight negated, so that time and energy become
/// quantities to keep above (negative) thresholds.
pub fn task_ex_negated() -> Mdp {
    let m = task_ex();
    m.map_weights(2, |e| e.weight.iter().map(|w| -w).collect())
}
