import itertools
import json
import os
from pathlib import Path

import numpy as np
import pytest

import crashscen as cs

DATA = Path(os.environ.get("CRASHSCEN_DATA_DIR", Path(__file__).resolve().parents[2] / "data"))


def edit_distance(a, b, indel=1.0, sub=1.0):
    prev = [indel * j for j in range(len(b) + 1)]
    for i in range(1, len(a) + 1):
        cur = [indel * i] + [0.0] * len(b)
        for j in range(1, len(b) + 1):
            cur[j] = min(prev[j] + indel, cur[j - 1] + indel, prev[j - 1] + (0.0 if a[i - 1] == b[j - 1] else sub))
        prev = cur
    return prev[-1]


SEQS = [
    "1ST-1OEO-1N-2ST-2OEO-2N-2XV-1XV",
    "1ST-1OEO-1N-2ST-2OEO-2N-2XV",
    "2L-2OIS-2N-1ST-1OIS-1NA-2XV-2RLO",
    "2L-2OIS-2N-1ST-1OIS-1NA-2XV",
]


def test_parse_and_align():
    toks = cs.parse_sequence(SEQS[0])
    assert toks == SEQS[0].split("-")
    for a, b in itertools.product(SEQS, SEQS):
        ta, tb = a.split("-"), b.split("-")
        assert cs.align_cost(a, b, 1.0, 2.0) == pytest.approx(edit_distance(ta, tb, 1.0, 2.0))
    with pytest.raises(cs.DataError):
        cs.parse_sequence("1ST-1QQQ")
    with pytest.raises(cs.ConfigError):
        cs.align_cost(SEQS[0], SEQS[1], 0.0, 1.0)


def test_distance_matrix_and_clustering():
    d = cs.distance_matrix(SEQS)
    assert d.shape == (4, 4)
    assert np.allclose(d, d.T)
    assert d[0, 1] == pytest.approx(1.0)
    p = cs.k_medoids(d, 2)
    assert p["assignment"][0] == p["assignment"][1]
    assert p["assignment"][2] == p["assignment"][3]
    assert p["assignment"][0] != p["assignment"][2]
    q = cs.quality_indices(d, p["assignment"])
    assert q["asw_w"] > 0.5
    assert q["hg"] == pytest.approx(1.0)
    sweep = cs.k_sweep(d, 2, 3)
    assert [r["k"] for r in sweep["rows"]] == [2, 3]
    assert sweep["chosen_k"] in (2, 3)


def test_weighted_medoid_prefers_heavy_point():
    d = np.array([[0, 1, 2], [1, 0, 1], [2, 1, 0]], dtype=float)
    assert cs.k_medoids(d, 1)["medoids"] == [1]
    assert cs.k_medoids(d, 1, weights=[10.0, 1.0, 1.0])["medoids"] == [0]


def test_learning_and_query():
    rng = np.random.default_rng(0)
    light = rng.choice(["day", "dark"], size=2000, p=[0.7, 0.3])
    weather = np.where(light == "dark", rng.choice(["clear", "rain"], 2000, p=[0.3, 0.7]),
                       rng.choice(["clear", "rain"], 2000, p=[0.9, 0.1]))
    cols = {"light": list(light), "weather": list(weather)}
    res = cs.hill_climb(cols)
    assert len(res["arcs"]) == 1
    assert all(s < 0 for _, _, s in res["strengths"])
    forbidden = cs.hill_climb(cols, forbid=[("light", "weather")])
    assert forbidden["arcs"] == [("weather", "light")]
    ll, k, aic = cs.score(cols, res["arcs"])
    assert aic == pytest.approx(ll - 2 * k)

    r = cs.query(res["network_json"], {"weather": "rain"}, ["light"], replications=10, samples=4000, seed=1)
    probs = {c["levels"][0]: c["probability"] for c in r["cells"]}
    p_dark = 0.3 * 0.7 / (0.3 * 0.7 + 0.7 * 0.1)
    assert probs["dark"] == pytest.approx(p_dark, abs=0.05)
    assert sum(probs.values()) == pytest.approx(1.0)
    again = cs.query(res["network_json"], {"weather": "rain"}, ["light"], replications=10, samples=4000, seed=1)
    assert again["csv"] == r["csv"]
    with pytest.raises(cs.ConfigError):
        cs.query(res["network_json"], {}, [], replications=1, samples=10)


def test_pipeline(tmp_path):
    settings = {
        "workdir": str(tmp_path / "w"),
        "synth_crashes": "400",
        "seed": "9",
        "k_range": "2..4",
        "replications": "10",
        "samples": "300",
    }
    summary = cs.run_all(settings, synth=True)
    assert [s["stage"] for s in summary["stages"]] == cs.pipeline_stages()
    assert (tmp_path / "w" / "report.md").exists()
    clusters = json.loads((tmp_path / "w" / "clusters.json").read_text())
    assert sum(c["share_of_all"] for c in clusters["configs"]) == pytest.approx(1.0)

    cs.run_stage("learn", dict(settings, constraints=str(DATA / "constraints_alternative.json")))
    assert "dashed" in (tmp_path / "w" / "network.dot").read_text()
    with pytest.raises(cs.ConfigError):
        cs.run_stage("learn", dict(settings, bogus="1"))
    with pytest.raises(cs.DataError):
        cs.run_stage("cluster", {"workdir": str(tmp_path / "empty")})
