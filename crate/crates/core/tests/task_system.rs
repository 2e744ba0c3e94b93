//! The task system with time and energy negated. The per-edge threshold
//! asked for by the acceptance suite is out of reach; doubling it (one task
//! spans two edges) gives a yes-instance whose finite-memory witness does not
//! fit a materialized machine.

use bwc_core::error::Error;
use bwc_core::fixtures::task_ex_negated;
use bwc_core::model::{Mode, ThresholdQuery};
use bwc_core::rational::{format, parse_vector};
use bwc_core::synthesis::{synthesize, SynthOptions};
use bwc_core::systems::{decide, FailedStage};

fn q(mu: &str, nu: &str) -> ThresholdQuery {
    ThresholdQuery::new(Mode::BwcFinite, "0", parse_vector(mu).unwrap(), parse_vector(nu).unwrap())
}

#[test]
fn halved_threshold_is_infeasible() {
    let m = task_ex_negated();
    let d = decide(&m, &q("-49/8,-64", "-49/8,-29/8")).unwrap();
    assert!(!d.answer);
    assert_eq!(d.failure, Some(FailedStage::Infeasible));
}

#[test]
fn per_task_threshold_decides_yes() {
    let m = task_ex_negated();
    let d = decide(&m, &q("-49/4,-64", "-49/4,-29/4")).unwrap();
    assert!(d.answer);
    let w = d.witness.unwrap();
    assert_eq!(format(&w.margin), "107/43");
}

#[test]
fn per_task_synthesis_exceeds_the_memory_budget() {
    let m = task_ex_negated();
    let opts = SynthOptions {
        memory_cap: 1 << 14,
        ..SynthOptions::default()
    };
    match synthesize(&m, &q("-49/4,-64", "-49/4,-29/4"), &opts) {
        Err(Error::Synthesis(msg)) => assert!(msg.contains("memory budget"), "{msg}"),
        other => panic!("expected a budget error, got {:?}", other.map(|s| s.parameter)),
    }
}
