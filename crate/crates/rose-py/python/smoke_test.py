"""Smoke test for the rose_py extension; run after `pip install`."""

import json
import tempfile

import rose_py

one = rose_py.design(0.3, 0.1, 0.6, 0.6)
assert (round(one.lambda_, 3), one.n_low, one.n_high) == (0.052, 11, 11), one
print(one)

two = rose_py.design(0.3, 0.1, 0.6, 0.6, omega=0.5, method="exact")
assert (two.lambda1, two.n1_low, round(two.lambda_, 3), two.n_low) == (0.1, 10, 0.054, 19), two
oc = two.exact_oc()
print("exact OC", {k: round(v, 4) for k, v in oc.items()})

sims = two.simulate(seed=7, n_reps=4000)
assert [s["label"] for s in sims] == ["s_low", "s_high"]
assert abs(sims[0]["result"]["pcs"] - oc["pcs_low"]) < 0.04

again = rose_py.Design.from_json(two.to_json())
assert again.to_dict() == two.to_dict()

envelope = json.loads(rose_py.call("design", json.dumps({"p_high": 0.4, "delta": 0.15, "alpha_low": 0.7, "alpha_high": 0.8, "omega": 0.5})))
assert envelope["result"]["design"]["n_low"] == 41

report = rose_py.reproduce("T1")
assert all(c["pass"] for c in report["cells"]), "T1 mismatch"
print("T1", len(report["cells"]), "cells match")

try:
    rose_py.design(1.3, 0.1, 0.6, 0.6)
except ValueError as e:
    print("rejected:", e)
else:
    raise AssertionError("invalid p_high accepted")

with tempfile.TemporaryDirectory() as d:
    store = rose_py.TrialStore(d)
    trial = store.create(one, trial_id="py-1")
    store.record("py-1", "stage1", "low", 11, 3)
    store.record("py-1", "stage1", "high", 11, 3)
    out = store.decide("py-1")
    assert out["decision"]["kind"] == "select_low", out
    try:
        store.record("py-1", "stage1", "low", 1, 0, expected_version=1)
    except rose_py.ConflictError:
        pass
    else:
        raise AssertionError("stale version accepted")

print("ok")
