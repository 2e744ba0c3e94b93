"""Smoke test for the bwc extension module: decide, synthesize, verify, simulate."""

import json

import bwc

run_ex = bwc.Mdp.fixture("RUN_EX")
print(run_ex)
assert run_ex.validate() == []
assert run_ex.initial == "s"

assert bwc.decide(run_ex, "bwc-fin", mu="0,0", nu="0,9")["answer"] == "yes"
assert bwc.decide(run_ex, "bwc-fin", mu=[0, 0], nu=[9, 9])["answer"] == "no"
assert bwc.decide(run_ex, "bwc-inf", mu="0,0", nu="99/10,99/10")["answer"] == "yes"

fin = bwc.synthesize(run_ex, "bwc-fin", mu="0,0", nu="0,9")
assert fin.kind == "machine"
assert fin.verify(run_ex, "wc", threshold="0,0")
assert fin.expected_mp(run_ex) == ["5", "15"]

# strategies survive a JSON round trip
again = bwc.Strategy.from_json(run_ex, fin.to_json())
assert again.verify(run_ex, "exp", threshold="0,9")

bas_mdp = bwc.Mdp.from_json(bwc.Mdp.fixture("RUN_EX_BAS").to_json())
assert bas_mdp.mecs() == [["t"], ["u", "v"]]
assert bas_mdp.mwecs("0,0") == [["t"]]
bas = bwc.synthesize(bas_mdp, "bas", mu="0,0", nu="99/10,99/10")
assert bas.verify(bas_mdp, "as", threshold="0,0")
assert not bas.verify(bas_mdp, "wc", threshold="0,0")

fk = bwc.synthesize(run_ex, "bwc-inf", mu="0,0", nu="99/10,99/10", k=512)
assert fk.kind == "f_K" and json.loads(fk.to_json())["K"] == 512
assert all(fk.verify(run_ex, c) for c in ("wc", "as", "exp"))
report = fk.simulate(run_ex, horizon=2000, runs=100, seed=1)
assert report["monitor_violations"] == 0
print("mean payoff", [round(d["mean"], 2) for d in report["mean_payoff"]])
print("ok")
