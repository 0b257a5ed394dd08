"""Smoke test for the pyonesim extension.

Build and install first:  maturin build --release -m crates/py/Cargo.toml && pip install target/wheels/pyonesim-*.whl
"""
import json
import math
import tempfile
from pathlib import Path

import pyonesim as osim


def main():
    assert "axelrod" in osim.bundled_scenarios()

    ax = osim.Scenario.bundled("axelrod")
    assert ax.population == 100
    a = ax.run(seed=7, rounds=20)
    b = ax.run(seed=7, rounds=20)
    assert a.to_json() == b.to_json()
    conv = a.metric("local_convergence")
    assert len(conv) == 21
    assert abs(conv[0] - 0.2) < 0.05, conv[0]
    d = ax.run(seed=7, rounds=20, workers=2)
    assert d.to_json() == a.to_json()

    text = (Path(__file__).resolve().parents[1] / "crates/core/scenarios/axelrod.onesim").read_text()
    ok, findings = osim.validate_scenario(text)
    assert ok, findings

    assert abs(osim.dpo_loss(-1.0, -1.0, -2.0, -2.0, 0.1) - math.log(2)) < 1e-12
    assert abs(osim.spearman([1, 2, 3, 4], [10, 20, 30, 45]) - 1.0) < 1e-12
    _, _, beta, r2 = osim.ols_simple([0, 1, 2, 3], [1, 3, 5, 7])
    assert abs(beta - 1.0) < 1e-12 and abs(r2 - 1.0) < 1e-12

    frame = osim.encode_frame(0x03, json.dumps({"round": 1}))
    assert frame[:4] == b"OSIM"
    assert osim.decode_frame(frame) == (0x03, '{"round": 1}', len(frame))
    try:
        osim.decode_frame(b"XXXX\x01\x03\x00\x00\x00\x00")
        raise AssertionError("bad magic accepted")
    except ValueError:
        pass

    workers, cut = osim.partition(4, [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)], 2, slack=1.0)
    assert cut == 1.0 and sorted(workers) == [0, 0, 1, 1]

    pg = osim.Scenario.bundled("public_goods")
    plan = """
name = "smoke"
paradigm = "deductive"
replicates = 2
base_seed = 5

[[groups]]
name = "control"

[[groups]]
name = "forced"
interventions = [{ agent_type = "Leader", set = { field = "mechanism", value = "forced" } }]
"""
    with tempfile.TemporaryDirectory() as out:
        runs = osim.run_experiment(plan, pg, out)
        assert len(runs) == 4
        assert len(list(Path(out).glob("*/*/metrics.csv"))) == 4

    print("pyonesim smoke test ok")


if __name__ == "__main__":
    main()
