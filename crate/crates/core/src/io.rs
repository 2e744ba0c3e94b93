//! JSON encoding of MDPs.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{EdgeSpec, Mdp, Owner, State};
use crate::rational::{self, Rational};

#[derive(Serialize, Deserialize)]
struct StateJson {
    id: String,
    owner: Owner,
}

#[derive(Serialize, Deserialize)]
struct EdgeJson {
    id: u64,
    from: String,
    to: String,
    weight: Vec<i64>,
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        with = "rational::serde_str::option"
    )]
    prob: Option<Rational>,
}

#[derive(Serialize, Deserialize)]
struct MdpJson {
    dimension: usize,
    states: Vec<StateJson>,
    edges: Vec<EdgeJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    initial: Option<String>,
}

pub fn mdp_from_json(text: &str) -> Result<Mdp> {
    let raw: MdpJson = serde_json::from_str(text)?;
    let states = raw
        .states
        .into_iter()
        .map(|s| State {
            id: s.id,
            owner: s.owner,
        })
        .collect();
    let edges = raw
        .edges
        .into_iter()
        .map(|e| EdgeSpec {
            id: e.id,
            from: e.from,
            to: e.to,
            weight: e.weight,
            prob: e.prob,
        })
        .collect();
    Mdp::new(raw.dimension, states, edges, raw.initial.as_deref())
}

pub fn mdp_to_value(mdp: &Mdp) -> serde_json::Value {
    let raw = MdpJson {
        dimension: mdp.dimension(),
        states: mdp
            .states()
            .iter()
            .map(|s| StateJson {
                id: s.id.clone(),
                owner: s.owner,
            })
            .collect(),
        edges: mdp
            .edges()
            .iter()
            .map(|e| EdgeJson {
                id: e.id,
                from: mdp.state(e.from).id.clone(),
                to: mdp.state(e.to).id.clone(),
                weight: e.weight.clone(),
                prob: e.prob.clone(),
            })
            .collect(),
        initial: mdp.initial().map(|s| mdp.state(s).id.clone()),
    };
    serde_json::to_value(raw).expect("MDP serializes")
}

pub fn mdp_to_json(mdp: &Mdp) -> String {
    serde_json::to_string_pretty(&mdp_to_value(mdp)).expect("MDP serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{fixture, Fixture};

    #[test]
    fn round_trip_fixtures() {
        for f in Fixture::ALL {
            let m = fixture(f);
            assert_eq!(mdp_from_json(&mdp_to_json(&m)).unwrap(), m);
        }
    }

    #[test]
    fn probabilities_are_strings() {
        let text = mdp_to_json(&fixture(Fixture::RunEx));
        assert!(text.contains("\"prob\": \"1/2\""));
    }

    #[test]
    fn unknown_state_is_an_error() {
        let text = r#"{"dimension":1,"states":[{"id":"a","owner":"controller"}],
            "edges":[{"id":0,"from":"a","to":"b","weight":[1]}],"initial":"a"}"#;
        assert!(mdp_from_json(text).is_err());
    }
}
