from __future__ import annotations

from pathlib import Path

import pytest

from _support import BINARY_RATES, binary_tree, two_source_topology
from losstomo.cli import main
from losstomo.simulator import parse_observations
from losstomo.topology import format_topology, parse_topology


@pytest.fixture
def tree_file(tmp_path):
    path = tmp_path / "tree.txt"
    path.write_text(format_topology(binary_tree(), BINARY_RATES))
    return path


@pytest.fixture
def general_file(tmp_path):
    path = tmp_path / "general.txt"
    path.write_text(format_topology(two_source_topology()))
    return path


def _simulate(topology, tmp_path, n=2000, seed=1):
    out = tmp_path / "sim"
    assert main(["simulate", "--topology", str(topology), "--n", str(n), "--seed", str(seed), "--out", str(out)]) == 0
    return out / f"obs_n{n}_seed{seed}.txt"


def test_simulate_writes_one_file_per_cell(tree_file, tmp_path):
    out = tmp_path / "grid"
    code = main(["simulate", "--topology", str(tree_file), "--n", "100", "1000", "--seed", "1", "2", "3", "--out", str(out)])
    assert code == 0
    files = sorted(p.name for p in out.iterdir())
    assert len(files) == 7 and "manifest.txt" in files
    obs = parse_observations((out / "obs_n100_seed2.txt").read_text())
    assert obs.n == 100


def test_classify_output(tree_file, tmp_path, capsys):
    obs = _simulate(tree_file, tmp_path)
    assert main(["classify", "--topology", str(tree_file), "--obs", str(obs)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert [line.split()[0] for line in lines] == ["1", "2", "3"]
    assert all(line.split()[1] == "perfect" for line in lines)


def test_estimate_tree_csv(tree_file, tmp_path):
    obs = _simulate(tree_file, tmp_path, n=20000)
    out = tmp_path / "est.csv"
    assert main(["estimate", "--topology", str(tree_file), "--obs", str(obs), "--out", str(out)]) == 0
    nodes, links = out.read_text().strip().split("\n\n")
    assert nodes.splitlines()[0] == "node,class,method,A_hat,residual,iterations,flags"
    rows = [r.split(",") for r in links.splitlines()[1:]]
    assert [r[0] for r in rows] == list(binary_tree().links)
    assert all(abs(float(r[1]) - float(r[3])) < 0.05 for r in rows)


def test_estimate_general(general_file, tmp_path):
    obs = _simulate(general_file, tmp_path, n=5000)
    out = tmp_path / "est.csv"
    code = main(["estimate", "--general", "--topology", str(general_file), "--obs", str(obs), "--out", str(out)])
    assert code == 0
    joint, nodes, links = out.read_text().strip().split("\n\n")
    assert joint.splitlines()[1].startswith("c,perfect/perfect,")
    assert len(links.splitlines()) == 11
    trees = Path(f"{out}.trees.txt").read_text()
    assert trees.count("# region") == 3
    parse_topology(trees.split("# region c")[1].split("\n", 1)[1])


def test_oracle_subcommand(tree_file, tmp_path, capsys):
    obs = _simulate(tree_file, tmp_path)
    assert main(["oracle", "--topology", str(tree_file), "--obs", str(obs), "--node", "1", "--points", "21"]) == 0
    captured = capsys.readouterr()
    lines = captured.out.splitlines()
    assert lines[0] == "A,loglik" and len(lines) == 22
    assert "grid maximizer" in captured.err


def test_experiment_is_deterministic(tree_file, tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["experiment", "--topology", str(tree_file), "--n", "500", "--seed", "1", "2", "--out", str(out)]) == 0
        outs.append(out)
    for path in sorted(outs[0].rglob("*")):
        if path.is_file() and path.name != "manifest.txt":
            assert path.read_bytes() == (outs[1] / path.relative_to(outs[0])).read_bytes()
    assert (outs[0] / "summary.csv").read_text().startswith("n,cells,links,failed_nodes,mae\n500,2,")


def test_missing_input_exits_3(tree_file, tmp_path, capsys):
    assert main(["estimate", "--topology", str(tmp_path / "nope.txt"), "--obs", "x"]) == 3
    bad = tmp_path / "bad.txt"
    bad.write_text("obs 1 4\n0 0 10\n")
    assert main(["estimate", "--topology", str(tree_file), "--obs", str(bad)]) == 3
    assert main(["oracle", "--topology", str(tree_file), "--obs", str(_simulate(tree_file, tmp_path)), "--node", "4"]) == 3


def test_tree_command_on_general_topology_exits_3(general_file, tmp_path):
    obs = _simulate(general_file, tmp_path, n=100)
    assert main(["estimate", "--topology", str(general_file), "--obs", str(obs)]) == 3


def test_usage_error_exits_2():
    with pytest.raises(SystemExit) as info:
        main(["estimate", "--bogus"])
    assert info.value.code == 2


def test_total_failure_exits_4(tmp_path):
    topo = tmp_path / "t.txt"
    topo.write_text("source 0\nlink 1 0 1 0.9\nlink 2 1 2 0.9\nlink 3 1 3 0.9\n")
    obs = tmp_path / "o.txt"
    obs.write_text("obs 3 2\n# receivers 2 3\n0 0 10\n1 0 01\n2 0 00\n")
    assert main(["estimate", "--topology", str(topo), "--obs", str(obs)]) == 4
