"""End-to-end command-line flows, run in process through main(argv)."""

import numpy as np
import pytest

import metaheat as mh
from metaheat.cli import main
from metaheat.containers import read_container
from metaheat.instances import read_dimacs, read_tsp


def run(argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Shared artifacts: generated instances plus two tiny checkpoints."""
    root = tmp_path_factory.mktemp("cliwork")
    run(["gen-tsp", "--n", 6, "--count", 3, "--seed", 1,
         "--out-dir", root / "tsp"])
    run(["gen-er", "--n-lo", 8, "--n-hi", 9, "--p", 0.3, "--count", 2,
         "--seed", 2, "--out-dir", root / "mis"])
    run(["train", "--problem", "tsp", "--out", root / "tsp.npz",
         "--override", "steps=1", "--override", "batch=1",
         "--override", "t=0", "--override", "n=6"])
    run(["train", "--problem", "mis", "--out", root / "mis.npz",
         "--override", "steps=2", "--override", "batch=2",
         "--override", "t=1", "--override", "n_lo=8",
         "--override", "n_hi=9", "--log", root / "mis.log.csv"])
    return root


def first_file(d, ext):
    return str(sorted(p for p in d.iterdir() if p.suffix == ext)[0])


def test_generate_tour_instances(workdir, capsys):
    files = sorted((workdir / "tsp").glob("*.tsp"))
    assert len(files) == 3
    inst = read_tsp(str(files[0]))
    assert inst.n == 6


def test_generate_graph_instances(workdir):
    files = sorted((workdir / "mis").glob("*.dimacs"))
    assert len(files) == 2
    g = read_dimacs(str(files[0]))
    assert 8 <= g.n <= 9


def test_cnf_reduction_command(tmp_path, capsys):
    cnf = tmp_path / "pair.cnf"
    cnf.write_text("c tiny\np cnf 1 2\n1 0\n-1 0\n")
    out = tmp_path / "pair.dimacs"
    assert run(["reduce-cnf", "--cnf", cnf, "--out", out]) == 0
    g = read_dimacs(str(out))
    assert (g.n, g.edge_count) == (2, 1)
    mapping = (tmp_path / "pair.dimacs.map").read_text().splitlines()
    assert len(mapping) == 2
    assert mapping[0].split() == ["0", "0", "1"]
    assert "2 nodes" in capsys.readouterr().out


def test_train_writes_checkpoint_and_log(workdir, capsys):
    assert (workdir / "mis.npz").exists()
    lines = (workdir / "mis.log.csv").read_text().splitlines()
    assert lines[0] == "step,mean_cost,wall_ms"
    assert len(lines) == 3
    assert int(lines[1].split(",")[0]) == 1
    # default log path sits next to the checkpoint
    assert (workdir / "tsp.npz.log.csv").exists()


def test_train_config_file_and_bad_key(tmp_path, capsys):
    ini = tmp_path / "train.ini"
    ini.write_text("[train]\nsteps = 5\nbatch = 1\nt = 0\nn = 6\nwidth = 8\n")
    out = tmp_path / "ck.npz"
    assert run(["train", "--problem", "tsp", "--config", ini,
                "--override", "steps=2", "--out", out]) == 0
    lines = (tmp_path / "ck.npz.log.csv").read_text().splitlines()
    assert len(lines) == 3  # the override beat the config file
    params, _, _ = mh.load_params(str(out))
    assert params.arch["width"] == 8

    with pytest.raises(SystemExit) as ei:
        run(["train", "--problem", "tsp", "--override", "bogus=1",
             "--out", tmp_path / "x.npz"])
    assert ei.value.code == 2
    assert "error:" in capsys.readouterr().err


def test_tune_then_solve_with_score_table(workdir, tmp_path, capsys):
    inst_file = first_file(workdir / "mis", ".dimacs")
    table = tmp_path / "scores.npz"
    assert run(["tune", "--ckpt", workdir / "mis.npz", "--instance",
                inst_file, "--steps", 3, "--out", table]) == 0
    meta_kv, arrays = read_container(str(table))
    assert meta_kv["kind"] == "theta"
    assert meta_kv["problem"] == "mis"
    assert arrays["values"].shape == (read_dimacs(inst_file).n,)

    sol = tmp_path / "set.txt"
    assert run(["solve", "--theta", table, "--instance", inst_file,
                "--decoder", "sample", "--K", 64, "--out", sol]) == 0
    header, ids = sol.read_text().splitlines()
    kind, n, k = header.split()
    assert kind == "set" and int(n) == read_dimacs(inst_file).n
    assert len(ids.split()) == int(k)
    assert "objective" in capsys.readouterr().out


def test_tune_rejects_problem_mismatch(workdir, tmp_path, capsys):
    with pytest.raises(SystemExit) as ei:
        run(["tune", "--ckpt", workdir / "mis.npz",
             "--instance", first_file(workdir / "tsp", ".tsp"),
             "--steps", 1, "--out", tmp_path / "x.npz"])
    assert ei.value.code == 2
    capsys.readouterr()


def test_solve_tour_with_pinned_start(workdir, tmp_path, capsys):
    inst_file = first_file(workdir / "tsp", ".tsp")
    sol = tmp_path / "tour.txt"
    assert run(["solve", "--ckpt", workdir / "tsp.npz", "--instance",
                inst_file, "--decoder", "greedy", "--start", 2,
                "--out", sol]) == 0
    header, perm_line = sol.read_text().splitlines()
    assert header == "tour 6"
    perm = [int(v) for v in perm_line.split()]
    assert perm[0] == 2
    assert sorted(perm) == list(range(6))
    out = capsys.readouterr().out
    assert "greedy objective" in out


def test_solve_argument_errors(workdir, capsys):
    tsp_file = first_file(workdir / "tsp", ".tsp")
    mis_file = first_file(workdir / "mis", ".dimacs")
    with pytest.raises(SystemExit) as ei:
        run(["solve", "--instance", tsp_file])  # neither --ckpt nor --theta
    assert ei.value.code == 2
    with pytest.raises(SystemExit) as ei:
        run(["solve", "--ckpt", workdir / "mis.npz", "--instance", mis_file,
             "--decoder", "mcts"])
    assert ei.value.code == 2
    capsys.readouterr()


def test_oracle_commands(workdir, capsys):
    tsp_file = first_file(workdir / "tsp", ".tsp")
    mis_file = first_file(workdir / "mis", ".dimacs")
    assert run(["oracle", "--instance", tsp_file, "--method",
                "held-karp"]) == 0
    assert "proven True" in capsys.readouterr().out
    assert run(["oracle", "--instance", tsp_file, "--method", "nearest"]) == 0
    assert "nearest-insertion" in capsys.readouterr().out
    assert run(["oracle", "--instance", mis_file, "--method",
                "exact-mis"]) == 0
    assert "maximum" in capsys.readouterr().out
    assert run(["oracle", "--instance", mis_file, "--method",
                "greedy-mis"]) == 0
    assert "greedy size" in capsys.readouterr().out


def test_oracle_size_cap_exits_cleanly(tmp_path, capsys):
    run(["gen-tsp", "--n", 25, "--count", 1, "--seed", 3,
         "--out-dir", tmp_path / "big"])
    with pytest.raises(SystemExit) as ei:
        run(["oracle", "--instance", first_file(tmp_path / "big", ".tsp"),
             "--method", "held-karp"])
    assert ei.value.code == 2
    assert capsys.readouterr().err.startswith("error:")


def test_eval_command_end_to_end(workdir, tmp_path, capsys):
    ini = tmp_path / "eval.ini"
    ini.write_text(f"[eval]\nproblem = tsp\ninstance_dir = {workdir / 'tsp'}\n"
                   "heatmap = rank\ndecoder = greedy\n")
    csv = tmp_path / "rows.csv"
    assert run(["eval", "--config", ini, "--override", "seed=4",
                "--out", csv]) == 0
    lines = csv.read_text().splitlines()
    assert len(lines) == 4
    assert "mean drop" in capsys.readouterr().out


def test_missing_file_paths_fail_cleanly(workdir, tmp_path, capsys):
    """Nonexistent files named by the user exit 2 with error:, not a traceback."""
    ini = tmp_path / "eval.ini"
    ini.write_text(f"[eval]\nproblem = tsp\ninstance_dir = {workdir / 'tsp'}\n"
                   f"ckpt = {tmp_path / 'nope.npz'}\ndecoder = greedy\n")
    with pytest.raises(SystemExit) as ei:
        run(["eval", "--config", ini, "--out", tmp_path / "rows.csv"])
    assert ei.value.code == 2
    assert capsys.readouterr().err.startswith("error:")
    assert not (tmp_path / "rows.csv").exists()
    with pytest.raises(SystemExit) as ei:
        run(["solve", "--ckpt", tmp_path / "nope.npz",
             "--instance", first_file(workdir / "tsp", ".tsp")])
    assert ei.value.code == 2
    assert capsys.readouterr().err.startswith("error:")


def test_unknown_subcommand_fails():
    with pytest.raises(SystemExit):
        run(["frobnicate"])
