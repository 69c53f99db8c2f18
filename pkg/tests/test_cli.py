import json
import math

import numpy as np
import pytest
import yaml

from pamlab.cli import (
    ExperimentConfig, config_from_dict, load_config, main, run, write_csv,
)
from pamlab.environments import EnvModelSpec
from pamlab.lattice import LatticeTorus


def base_config(**over):
    defaults = dict(
        kind="env-sample",
        lattice=LatticeTorus(1, 8),
        env=EnvModelSpec("iid_markov"),
        horizon=2.0,
        seed=3,
    )
    defaults.update(over)
    return ExperimentConfig(**defaults)


# -- validation -------------------------------------------------------------

def test_valid_config_has_no_violations():
    assert base_config().validate() == []


@pytest.mark.parametrize(
    "over, field",
    [
        (dict(t_grid=(5.0,), horizon=2.0), "t_grid"),
        (dict(env=EnvModelSpec("zero_range", beta=1.5)), "env.beta"),
        (dict(kind="mystery"), "kind"),
        (dict(horizon=-1.0), "horizon"),
        (dict(seed=-4), "seed"),
        (dict(threads=0), "threads"),
        (dict(t_grid=(2.0, 1.0)), "t_grid"),
        (dict(kind="fk", n_samples=0), "n_samples"),
        (dict(kind="percolation", alpha_grid=()), "alpha_grid"),
        (dict(kind="percolation", alpha_grid=(0.0,), T=5.0), "T"),
        (dict(kind="diagnostics", block=None), "block"),
        (dict(kind="lyapunov-sweep", kappa_grid=()), "kappa_grid"),
        (dict(n_replicas=0), "n_replicas"),
    ],
)
def test_violations_name_the_field(over, field):
    problems = base_config(**over).validate()
    assert any(p.startswith(field) for p in problems), problems


def test_size_guard_violation_mentions_override():
    cfg = base_config(
        kind="lyapunov-sweep", lattice=LatticeTorus(1, 8),
        kappa_grid=(1.0,), t_grid=(4.0,), horizon=4.0,
    )
    problems = cfg.validate()
    assert any("override_size_guard" in p for p in problems)
    relaxed = base_config(
        kind="lyapunov-sweep", lattice=LatticeTorus(1, 8),
        kappa_grid=(1.0,), t_grid=(4.0,), horizon=4.0,
        override_size_guard=True,
    )
    assert relaxed.validate() == []


def test_require_valid_raises():
    with pytest.raises(ValueError, match="horizon"):
        base_config(horizon=-1.0).require_valid()


# -- config loading ---------------------------------------------------------

def test_unknown_key_is_an_error():
    with pytest.raises(ValueError, match="mistyped_key"):
        config_from_dict({
            "kind": "solve", "env": {"model": "iid_markov"}, "mistyped_key": 1,
        })


def test_load_config_round_trip(tmp_path):
    path = tmp_path / "exp.yaml"
    path.write_text(yaml.safe_dump({
        "kind": "solve",
        "lattice": {"d": 2, "L": 6},
        "env": {"model": "constant", "value": 0.5, "centering": "none"},
        "horizon": 3.0,
        "kappa": 0.25,
        "t_grid": [1.0, 3.0],
        "seed": 9,
    }))
    cfg = load_config(path)
    assert cfg.lattice == LatticeTorus(2, 6)
    assert cfg.env.model == "constant"
    assert cfg.t_grid == (1.0, 3.0)
    assert cfg.kappa == 0.25


def test_load_config_rejects_non_mapping(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("- just\n- a\n- list\n")
    with pytest.raises(ValueError):
        load_config(path)


# -- persistence ------------------------------------------------------------

def test_write_csv_is_byte_stable(tmp_path):
    path = tmp_path / "x.csv"
    write_csv(path, ("a", "b"), [(1, 0.1), (2, float("0.30000000000000004"))])
    body = path.read_bytes()
    assert body == b"a,b\n1,0.1\n2,0.30000000000000004\n"


# -- runners ----------------------------------------------------------------

def test_env_sample_outputs(tmp_path):
    cfg = base_config(out=str(tmp_path / "run"))
    manifest = run(cfg)
    out = tmp_path / "run"
    events = (out / "events.csv").read_text().splitlines()
    assert events[0] == "time,site,new_value"
    assert (out / "initial.csv").exists()
    data = json.loads((out / "manifest.json").read_text())
    assert data["kind"] == "env-sample"
    assert set(data["outputs"]) == {"events.csv", "initial.csv"}
    assert manifest.extra["n_events"] > 0
    # times are sorted and within the horizon
    times = [float(line.split(",")[0]) for line in events[1:]]
    assert times == sorted(times)
    assert all(0.0 < t <= cfg.horizon for t in times)


def test_solve_zero_field_gives_zero_log(tmp_path):
    cfg = base_config(
        kind="solve",
        env=EnvModelSpec("constant", value=0.0, centering="none"),
        kappa=0.7, u0="ones", t_grid=(1.0, 2.0),
        out=str(tmp_path / "run"),
    )
    run(cfg)
    lines = (tmp_path / "run" / "solution.csv").read_text().splitlines()
    assert lines[0] == "t,log_u_origin"
    for line in lines[1:]:
        assert abs(float(line.split(",")[1])) < 1e-10


def test_lyapunov_constant_env_exact(tmp_path):
    cfg = base_config(
        kind="lyapunov-sweep",
        env=EnvModelSpec("constant", value=0.6, centering="none"),
        kappa_grid=(0.0,), p_list=(1,), t_grid=(2.0,),
        u0="ones", n_replicas=3,
        out=str(tmp_path / "run"),
    )
    run(cfg)
    lines = (tmp_path / "run" / "sweep.csv").read_text().splitlines()
    header = lines[0].split(",")
    assert header == ["kappa", "p", "t", "u0", "estimate",
                      "ci_half_width", "n_replicas", "seed", "model"]
    for line in lines[1:]:
        row = dict(zip(header, line.split(",")))
        assert float(row["estimate"]) == pytest.approx(0.6, abs=1e-9)
        assert row["model"] == "constant"


def test_fk_csv_schema(tmp_path):
    cfg = base_config(
        kind="fk", kappa=0.5, u0="ones", t_grid=(1.0,),
        n_samples=200, out=str(tmp_path / "run"),
    )
    run(cfg)
    lines = (tmp_path / "run" / "fk.csv").read_text().splitlines()
    assert lines[0] == "kappa,t,u0,estimate,std_error,n_samples,n_effective,degenerate"
    row = lines[1].split(",")
    assert row[2] == "ones"
    assert row[7] in ("true", "false")


def test_percolation_run_and_alpha_star(tmp_path):
    cfg = base_config(
        kind="percolation",
        lattice=LatticeTorus(2, 8),
        env=EnvModelSpec("constant", value=1.0, centering="none"),
        horizon=1.0, T=1.0, alpha_grid=(0.5, 1.0, 2.0),
        out=str(tmp_path / "run"),
    )
    run(cfg)
    data = json.loads((tmp_path / "run" / "manifest.json").read_text())
    assert float(data["extra"]["alpha_star"]) == 1.0
    lines = (tmp_path / "run" / "percolation.csv").read_text().splitlines()
    assert lines[0] == "alpha,largest_fraction,n_components,spanning"


def test_partial_outputs_removed_on_failure(tmp_path, monkeypatch):
    out = tmp_path / "run"
    out.mkdir()
    keep = out / "keep.txt"
    keep.write_text("existing\n")
    cfg = base_config(kind="solve", out=str(out))

    import pamlab.cli as cli

    def boom(config, out_dir):
        (out_dir / "solution.csv").write_text("t,log_u_origin\n")
        raise RuntimeError("mid-run failure")

    monkeypatch.setitem(cli._RUNNERS, "solve", boom)
    with pytest.raises(RuntimeError):
        run(cfg)
    assert keep.exists()
    assert not (out / "solution.csv").exists()


# -- determinism ------------------------------------------------------------

def sweep_config(out, seed=11, threads=1):
    return base_config(
        kind="lyapunov-sweep",
        env=EnvModelSpec("iid_markov"),
        kappa_grid=(0.0, 0.5), p_list=(1, 2), t_grid=(2.0,),
        n_replicas=4, seed=seed, threads=threads,
        override_size_guard=True, out=str(out),
    )


def test_reruns_are_byte_identical(tmp_path):
    run(sweep_config(tmp_path / "a"))
    run(sweep_config(tmp_path / "b"))
    assert (tmp_path / "a" / "sweep.csv").read_bytes() == \
        (tmp_path / "b" / "sweep.csv").read_bytes()


def test_threads_do_not_change_output(tmp_path):
    run(sweep_config(tmp_path / "a", threads=1))
    run(sweep_config(tmp_path / "b", threads=8))
    assert (tmp_path / "a" / "sweep.csv").read_bytes() == \
        (tmp_path / "b" / "sweep.csv").read_bytes()


def test_seed_changes_output(tmp_path):
    run(sweep_config(tmp_path / "a", seed=11))
    run(sweep_config(tmp_path / "b", seed=12))
    assert (tmp_path / "a" / "sweep.csv").read_bytes() != \
        (tmp_path / "b" / "sweep.csv").read_bytes()


# -- entry point ------------------------------------------------------------

def write_yaml(path, data):
    path.write_text(yaml.safe_dump(data))
    return str(path)


def test_main_success_and_overrides(tmp_path, capsys):
    cfg_path = write_yaml(tmp_path / "c.yaml", {
        "kind": "env-sample",
        "lattice": {"d": 1, "L": 8},
        "env": {"model": "iid_markov"},
        "horizon": 1.0,
        "out": str(tmp_path / "ignored"),
    })
    out = tmp_path / "actual"
    code = main(["env-sample", "--config", cfg_path, "--seed", "7", "--out", str(out)])
    assert code == 0
    data = json.loads((out / "manifest.json").read_text())
    assert data["seed"] == 7


def test_main_invalid_config_exits_2(tmp_path, capsys):
    cfg_path = write_yaml(tmp_path / "c.yaml", {
        "kind": "env-sample",
        "lattice": {"d": 1, "L": 2},
        "env": {"model": "iid_markov"},
        "horizon": 1.0,
        "out": str(tmp_path / "out"),
    })
    code = main(["env-sample", "--config", cfg_path])
    assert code == 2
    assert "side must be >= 3" in capsys.readouterr().err


def test_main_unparseable_config_exits_2(tmp_path, capsys):
    cfg_path = write_yaml(tmp_path / "c.yaml", {"kind": "solve", "bogus": 1})
    assert main(["solve", "--config", cfg_path]) == 2


def test_main_missing_file_exits_2(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "nope.yaml")]) == 2
