import json

import numpy as np
import pytest

from ionforge.circuit import Circuit, circuit_unitary, fidelity_cost
from ionforge.cli import bench_gates, main
from ionforge.config import ConfigError, load_config, parse_config
from ionforge.environment import read_best_circuit, read_episodes_csv
from ionforge.gatekit import MS
from ionforge.targets import save_matrix

IDENTITY = """
[target]
kind = "identity"
n = 2

[environment]
l_max = 3
e_max = 5

[optimizer]
n_restarts = 2
max_iterations = 40

[run]
n_agents = 1
seed = 11
"""


def write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_parse_full_config():
    cfg = parse_config(IDENTITY + '\n[provenance]\nbatch_size = 64\n')
    assert cfg.target.kind == "identity" and cfg.seed == 11
    assert cfg.opt.n_restarts == 2
    assert cfg.provenance == {"batch_size": 64}
    assert cfg.env_config().l_max == 3


def test_unknown_key_reports_its_line():
    text = IDENTITY.replace("e_max = 5", "e_max = 5\nepisodes = 9")
    with pytest.raises(ConfigError, match=r":9: unknown key 'episodes'"):
        parse_config(text)


def test_syntax_error_is_a_config_error():
    with pytest.raises(ConfigError, match="line"):
        parse_config("[target\nkind = 1")


def test_bad_values_are_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, IDENTITY.replace("l_max = 3", "l_max = 0")))
    with pytest.raises(ConfigError):
        parse_config(IDENTITY.replace('kind = "identity"', 'kind = "qft"'))


def test_compile_identity(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["compile", "--config", write(tmp_path, IDENTITY), "--out", str(out)])
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["found"] and summary["best_length"] == 0
    rows = read_episodes_csv(out / "episodes.csv")
    assert {r["episode"] for r in rows} == set(range(5))
    c, a = read_best_circuit(out / "best_circuit.txt", 2)
    assert len(c) == 0 and fidelity_cost(c, a, np.eye(4)) == summary["best_cost"]


def test_compile_is_deterministic(tmp_path):
    path = write(tmp_path, IDENTITY.replace('kind = "identity"', 'kind = "ucc"'))
    for name in ("a", "b"):
        main(["compile", "--config", path, "--out", str(tmp_path / name), "--seed", "3"])
    assert (tmp_path / "a" / "episodes.csv").read_bytes() == (tmp_path / "b" / "episodes.csv").read_bytes()


def test_provenance_is_copied_to_summary(tmp_path):
    text = IDENTITY + '\n[provenance]\nbatch_size = 64\n'
    main(["compile", "--config", write(tmp_path, text), "--out", str(tmp_path / "p")])
    summary = json.loads((tmp_path / "p" / "summary.json").read_text())
    assert summary["provenance"] == {"batch_size": 64}


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("IONFORGE_OUT", str(tmp_path / "env_out"))
    assert main(["compile", "--config", write(tmp_path, IDENTITY)]) == 0
    assert (tmp_path / "env_out" / "summary.json").exists()


def test_malformed_config_exits_2(tmp_path, capsys):
    assert main(["compile", "--config", write(tmp_path, "[target]\nkind = ")]) == 2
    assert "config error" in capsys.readouterr().err
    assert main(["compile", "--config", str(tmp_path / "missing.toml")]) == 2
    assert main(["frobnicate"]) == 2


def test_check_grads_exit_and_report(capsys):
    assert main(["check-grads", "--n", "2", "--trials", "2", "--seed", "1"]) == 0
    first = capsys.readouterr().out
    for fam in ("Z-theta", "Cxy-theta", "MS-theta", "phi"):
        assert fam in first
    main(["check-grads", "--n", "2", "--trials", "2", "--seed", "1"])
    assert capsys.readouterr().out == first
    assert main(["check-grads", "--n", "7"]) == 2


def test_bench_gates_rows(tmp_path):
    rows, speedups = bench_gates(1, 3, 2)
    assert len(rows) == 3 * 2
    assert all(r[3] <= 1e-10 for r in rows)
    csv_path = tmp_path / "bench.csv"
    assert main(["bench-gates", "--n-min", "2", "--n-max", "3", "--repetitions", "2",
                 "--csv", str(csv_path)]) == 0
    assert len(csv_path.read_text().splitlines()) == 1 + 2 * 2
    assert main(["bench-gates", "--n-min", "3", "--n-max", "2"]) == 2


LAYER = """
[target]
kind = "matrix_file"
n = 2
path = "ms.txt"

[layer_search]
l_ms_max = 1
eps = {eps}

[optimizer]
n_restarts = 2
max_iterations = 60
"""


def test_layer_search_finds_single_ms(tmp_path, capsys):
    save_matrix(tmp_path / "ms.txt", circuit_unitary(Circuit(2, [MS]), [1.3, -0.4]))
    path = write(tmp_path, LAYER.format(eps=1e-6))
    assert main(["layer-search", "--config", path, "--out", str(tmp_path / "o")]) == 0
    report = json.loads((tmp_path / "o" / "layer_search.json").read_text())
    assert report["found"] and report["active_gates"] == ["MS"]


def test_layer_search_not_found(tmp_path):
    # a 2-qubit SWAP does not fit one MS gate with rotations on n=2 at 1e-12
    swap = np.eye(4)[[0, 2, 1, 3]]
    save_matrix(tmp_path / "ms.txt", swap)
    path = write(tmp_path, LAYER.format(eps=1e-12).replace("n_restarts = 2", "n_restarts = 1"))
    assert main(["layer-search", "--config", path, "--out", str(tmp_path / "o")]) == 1


def test_layer_search_refusal_prints_count(tmp_path, capsys):
    text = '[target]\nkind = "identity"\nn = 4\n[layer_search]\nl_ms_max = 5\n'
    assert main(["layer-search", "--config", write(tmp_path, text)]) == 3
    out = capsys.readouterr().out
    assert "refused" in out and "~2^36" in out
