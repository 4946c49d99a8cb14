import json

import pytest

from rcising.config import SENSITIVITY_SHIFT, ConfigError, load_config, parse_config


def base(**kw):
    d = {"name": "t", "boundary": "periodic", "d": 2, "L": 8, "beta": 0.3, "sampler": {"seed": 1}}
    d.update(kw)
    return d


def test_minimal_config_defaults():
    cfg = parse_config(base())
    assert cfg.sampler.algorithm == "cluster-flip" and cfg.sampler.sweeps == 10000
    assert cfg.beta_grid() == [("beta0", 0.3)]
    assert cfg.observables.names == ["two_point"]


@pytest.mark.parametrize("mut,where", [
    (lambda d: d.update(colour="red"), "colour"),
    (lambda d: d["sampler"].update(foo=1), "sampler.foo"),
    (lambda d: d.update(observables={"names": ["x"], "bogus": 1}), "observables.bogus"),
])
def test_unknown_keys_are_named(mut, where):
    d = base()
    mut(d)
    with pytest.raises(ConfigError) as ei:
        parse_config(d)
    paths = [p for p, _ in ei.value.problems]
    assert where in paths
    assert any("unknown key" in m for p, m in ei.value.problems if p == where)


@pytest.mark.parametrize("kw", [
    dict(beta=None),
    dict(betas=[0.1]),
    dict(L=None),
    dict(boundary="free"),
    dict(boundary="graph"),
    dict(beta=-0.1),
    dict(sampler={}),
    dict(sampler={"seed": 1, "algorithm": "gibbs"}),
    dict(model="phi4"),
    dict(sampler={"seed": 1, "algorithm": "phi4-site", "g": 1.0, "a": 0.0}),
    dict(model="gs-block"),
    dict(observables={"names": ["magic"]}),
    dict(checks={"names": ["theorem99"]}),
    dict(block={"N": 2, "J": [[0, 1]], "Q": [1, 1]}),
])
def test_invalid_configs(kw):
    d = base()
    for k, v in kw.items():
        if v is None:
            d.pop(k, None)
        else:
            d[k] = v
    with pytest.raises(ConfigError):
        parse_config(d)


def test_sensitivity_companions():
    cfg = parse_config(base(beta=0.44, beta_c=0.44, sensitivity=True))
    labels = dict(cfg.beta_grid())
    assert labels["beta_c-"] == pytest.approx(0.44 - SENSITIVITY_SHIFT)
    assert labels["beta_c+"] == pytest.approx(0.44 + SENSITIVITY_SHIFT)
    assert len(parse_config(base(beta=0.3, beta_c=0.44, sensitivity=True)).beta_grid()) == 1


def test_digest_is_stable_and_sensitive():
    a = parse_config(base())
    assert a.digest() == parse_config(json.loads(a.canonical_json())).digest()
    assert a.digest() != parse_config(base(beta=0.31)).digest()


def test_load_toml_and_json(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text('name = "x"\nboundary = "graph"\nfixture = "edge"\nbeta = 0.2\n[sampler]\nseed = 3\n')
    cfg = load_config(p)
    q = tmp_path / "c.json"
    q.write_text(cfg.canonical_json())
    assert load_config(q) == cfg
    bad = tmp_path / "bad.toml"
    bad.write_text("name = \n")
    with pytest.raises(ConfigError):
        load_config(bad)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")


def test_shipped_configs_parse():
    from pathlib import Path

    files = sorted((Path(__file__).parent.parent / "configs").glob("*.toml"))
    assert files
    for f in files:
        load_config(f)
