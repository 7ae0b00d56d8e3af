"""Smoke test for the sgd_landscape extension module.

Build and install first:  maturin build --release -m crates/python/Cargo.toml && pip install target/wheels/*.whl
"""
import math
import tempfile

import sgd_landscape as sl


def close(a, b, rel):
    return abs(a - b) <= rel * abs(b)


def main():
    q = sl.Field("quadratic_1d")
    assert q.dim == 1 and q.value([2.0]) == 2.0 and q.gradient([2.0]) == [2.0]
    assert "double_well_tilted" in sl.Field.names()

    # quadratic: eps = s/4 and lambda_s = 1
    assert abs(sl.epsilon(q, 0.1) - 0.025) < 1e-4
    sp = sl.spectrum(q, 0.1)
    assert close(sp["lambda_s"], 1.0, 0.02), sp["lambda_s"]

    assert close(sl.lambda_ratio(0.05, 0.1, 0.001), math.exp(99), 1e-9)
    assert close(sl.idealized_iterations(1.0, 99.9, 0.1, 0.1), 250.0, 0.05)

    rep = sl.morse_analysis(sl.Field("nonconvex_2d_paper"), 2.0, 161)
    assert len(rep["minima"]) == 4

    ens = sl.ensemble(q, 0.1, 50, [1.0], n_replicas=400, seed=3)
    assert ens == sl.ensemble(q, 0.1, 50, [1.0], n_replicas=400, seed=3)

    hit = sl.hitting_time(q, 0.5, 0.0, 1.0, n_replicas=2000, seed=1)
    assert close(hit["mean"], sl.ou_hitting_time(1.0, 1.0, 0.5), 0.2)

    fp = sl.fokker_planck(q, 0.2, [0.5], 0.05, dt=0.01, horizon=1.0, snapshots=5, nodes=400)
    assert all(abs(s["mass"] - 1.0) < 1e-9 for s in fp["snapshots"])

    try:
        sl.Field("no_such_field")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown field accepted")

    crit = sl.run_criterion(3, "fast", 0)
    assert crit["passed"], crit

    with tempfile.TemporaryDirectory() as d:
        report = sl.run_experiment('version = 1\ncommand = "decay-study"\n', d)
        assert all(a["passed"] for a in report["assertions"])

    print("smoke test ok")


if __name__ == "__main__":
    main()
