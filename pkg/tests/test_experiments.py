import json

import pytest

from fractal_chebyshev import experiments as ex


@pytest.mark.parametrize("name", sorted(ex.DEFAULTS))
def test_defaults_pass(name):
    res = ex.run_experiment(name)
    s = res.summary
    assert set(s) >= {"experiment", "config", "seed", "precision", "version", "metrics", "passes"}
    assert s["seed"] == ex.DEFAULT_SEED
    assert res.all_pass, s["passes"]
    json.dumps(s, default=float)


def test_same_seed_same_files():
    a = ex.run_experiment("cg_schedule", {"instances": 3}, seed=5)
    b = ex.run_experiment("cg_schedule", {"instances": 3}, seed=5)
    assert a.files == b.files


def test_unknown_experiment():
    with pytest.raises(ex.UnknownExperimentError):
        ex.run_experiment("nope")


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv("CHEB_FRACTAL_THREADS", "3")
    assert ex.thread_count() == 3
    monkeypatch.setenv("CHEB_FRACTAL_THREADS", "0")
    assert 1 <= ex.thread_count() <= 8
    assert ex.pmap(lambda v: v * v, range(5)) == [0, 1, 4, 9, 16]


def test_atomic_write_leaves_no_temp(tmp_path):
    target = tmp_path / "sub" / "x.csv"
    ex.atomic_write(target, "a,b\n")
    ex.atomic_write(target, "c,d\n")
    assert target.read_text() == "c,d\n"
    assert [p.name for p in target.parent.iterdir()] == ["x.csv"]
