import json

import numpy as np
import pytest

from cbb.environment import BLOCK, LP_SKIP, PLAY, SKIP
from cbb.errors import ConfigError
from cbb.harness import CSV_COLUMNS, ExperimentConfig, parse_param, quantile, run_experiment, run_policy
from cbb.instance import integral, noninteg_3x3


def cfg(tmp_path, **kw):
    base = {
        "instance": {"name": "noninteg_3x3", "params": {}},
        "policies": ["fi_cbb", "ucb_cbb", "ucb_greedy"],
        "horizon": 200,
        "seeds": 3,
        "output_dir": str(tmp_path),
    }
    base.update(kw)
    return ExperimentConfig.from_dict(base)


def test_config_validation(tmp_path):
    with pytest.raises(ConfigError):
        cfg(tmp_path, colour="red")
    with pytest.raises(ConfigError):
        cfg(tmp_path, horizon=0)
    with pytest.raises(ConfigError):
        cfg(tmp_path, policies=["thompson"])
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"instance": {"name": "integral"}})


def test_config_file(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"instance": {"name": "integral", "params": {"gap": 0.4}}, "policies": ["fi_cbb"], "horizon": 5, "seeds": 1}))
    c = ExperimentConfig.from_json(path)
    assert c.build_instance() == integral(0.4)
    assert c.label() == "integral_gap0.4"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json(path)


def test_single_round_single_seed(tmp_path):
    res = run_experiment(cfg(tmp_path, horizon=1, seeds=1))
    for ms in res.values():
        assert ms.regret.shape == (1, 1)
        for name in ("lp_skip", "skip", "block"):
            assert ms.rates[name][0, 0] in (0.0, 1.0)


def test_events_partition_rounds():
    inst = noninteg_3x3()
    for p in ("fi_cbb", "ucb_cbb", "ucb_greedy"):
        tr = run_policy(inst, p, 400, seed=3)
        assert set(np.unique(tr.events)) <= {PLAY, LP_SKIP, SKIP, BLOCK}
        assert np.all(tr.rewards[tr.events != PLAY] == 0)
        if p == "ucb_greedy":
            assert not np.any(np.isin(tr.events, [LP_SKIP, SKIP]))


def test_common_random_numbers():
    inst = integral(0.6)
    a = run_policy(inst, "fi_cbb", 300, seed=5, trace=True)
    b = run_policy(inst, "ucb_greedy", 300, seed=5, trace=True)
    assert [r[2] for r in a.trace] == [r[2] for r in b.trace]


def test_outputs_and_determinism(tmp_path):
    c1 = cfg(tmp_path / "a", trace=True)
    c2 = cfg(tmp_path / "b", trace=True)
    run_experiment(c1)
    run_experiment(c2)
    files = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    assert "noninteg_3x3__ucb_cbb.csv" in files
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    header = (tmp_path / "a" / "noninteg_3x3__fi_cbb.csv").read_text().splitlines()[0]
    assert header.split(",") == CSV_COLUMNS
    trace = (tmp_path / "a" / "noninteg_3x3__ucb_cbb__seed0_trace.csv").read_text().splitlines()
    assert trace[0] == "t,M_t,context,sampled_arm,event,reward,lp_value_used"
    meta = json.loads((tmp_path / "a" / "noninteg_3x3__metadata.json").read_text())
    assert meta["config_sha256"] == c1.digest()
    assert {"git_describe", "wall_time_s"} <= set(meta)


def test_worker_pool_matches_serial(tmp_path):
    a = run_experiment(cfg(tmp_path / "a", horizon=100, seeds=2, workers=1), write=False)
    b = run_experiment(cfg(tmp_path / "b", horizon=100, seeds=2, workers=2), write=False)
    for p in a:
        assert np.array_equal(a[p].regret, b[p].regret)


def test_rates_and_quantiles(tmp_path):
    res = run_experiment(cfg(tmp_path, seeds=5), write=False)
    for ms in res.values():
        total = sum(ms.rates[n] for n in ("lp_skip", "skip", "block", "play"))
        assert np.allclose(total, 1.0)
        assert np.all(ms.regret_q25() <= ms.regret_q75())
    x = np.array([[1.0], [2.0], [3.0], [4.0]])
    assert quantile(x, 0.25)[0] == 1.0 and quantile(x, 0.75)[0] == 3.0


def test_parse_param():
    assert parse_param("gap=0.4,0.6,0.8") == ("gap", [0.4, 0.6, 0.8])
    assert parse_param("seed=1,2") == ("seed", [1, 2])
    with pytest.raises(ConfigError):
        parse_param("gap")
    with pytest.raises(ConfigError):
        parse_param("gap=a")


def test_raw_instance_spec(tmp_path):
    spec = {"delays": [2], "context_probs": [1.0], "means": [[0.5]]}
    res = run_experiment(cfg(tmp_path, instance=spec, policies=["fi_cbb"], horizon=50), write=True)
    assert "fi_cbb" in res
    assert list(tmp_path.glob("custom_*__fi_cbb.csv"))
