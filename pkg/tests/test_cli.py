import io
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from hnswpy import brute_force_knn, load_index, read_fvecs, read_ivecs
from hnswpy.bench import TIMING_FIELDS, read_csv
from hnswpy.cli import main
from hnswpy.dataset import write_fvecs

from support import adjacency_lists, is_connected


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def files(tmp_path, capsys):
    base = tmp_path / "base.fvecs"
    queries = tmp_path / "q.fvecs"
    code, _, _ = run(capsys, "gen", "--n", 500, "--dim", 4, "--seed", 1, "--holdout", 30,
                     "--out", base, "--queries-out", queries)
    assert code == 0
    return tmp_path, base, queries


def test_gen_writes_records(tmp_path, capsys):
    out = tmp_path / "d.fvecs"
    assert run(capsys, "gen", "--family", "uniform", "--n", 1000, "--dim", 4, "--seed", 1,
               "--out", out)[0] == 0
    assert out.stat().st_size == 1000 * (4 + 16)
    assert read_fvecs(str(out)).vectors.shape == (1000, 4)


def test_gen_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.fvecs", tmp_path / "b.fvecs"
    for path in (a, b):
        run(capsys, "gen", "--family", "clusters", "--n", 300, "--dim", 5, "--seed", 4, "--out", path)
    assert a.read_bytes() == b.read_bytes()


def test_gen_empty(tmp_path, capsys):
    out = tmp_path / "e.fvecs"
    assert run(capsys, "gen", "--n", 0, "--dim", 4, "--out", out)[0] == 0
    assert out.read_bytes() == b""
    assert len(read_fvecs(str(out))) == 0


def test_gen_bad_flags(capsys):
    with pytest.raises(SystemExit) as err:
        main(["gen", "--n", "10", "--dim", "2", "--family", "gaussian", "--out", "x"])
    assert err.value.code == 2


def test_gt_self_queries_k1(files, capsys):
    tmp, base, _ = files
    out = tmp / "gt.ivecs"
    assert run(capsys, "gt", "--dataset", base, "--queries", base, "--k", 1, "--out", out)[0] == 0
    assert [int(r[0]) for r in read_ivecs(str(out))] == list(range(500))


def test_gt_matches_oracle_on_200_points(tmp_path, capsys):
    X = np.random.default_rng(8).random((200, 3)).astype(np.float32)
    Q = np.random.default_rng(9).random((25, 3)).astype(np.float32)
    write_fvecs(X, str(tmp_path / "x.fvecs"))
    write_fvecs(Q, str(tmp_path / "q.fvecs"))
    run(capsys, "gt", "--dataset", tmp_path / "x.fvecs", "--queries", tmp_path / "q.fvecs",
        "--k", 7, "--out", tmp_path / "gt.ivecs")
    rows = read_ivecs(str(tmp_path / "gt.ivecs"))
    for q, row in zip(Q, rows):
        assert row.tolist() == [r.id for r in brute_force_knn(X, q, 7)]


def test_gt_k_above_n(files, capsys):
    tmp, base, queries = files
    code, _, err = run(capsys, "gt", "--dataset", base, "--queries", queries, "--k", 501,
                       "--out", tmp / "gt.ivecs")
    assert code != 0
    assert len(err.strip().splitlines()) == 1


def test_gt_dimension_mismatch(files, tmp_path, capsys):
    _, base, _ = files
    write_fvecs(np.zeros((3, 5)), str(tmp_path / "q5.fvecs"))
    code, _, err = run(capsys, "gt", "--dataset", base, "--queries", tmp_path / "q5.fvecs",
                       "--out", tmp_path / "gt.ivecs")
    assert code != 0 and "dimension" in err


def test_build_defaults_and_reload(files, capsys):
    tmp, base, _ = files
    code, out, _ = run(capsys, "build", "--dataset", base, "--out", tmp / "i.hnsw")
    assert code == 0
    report = json.loads(out)
    assert report["params"]["m"] == 16
    assert round(report["params"]["level_mult"], 6) == round(1 / math.log(16), 6)
    assert report["snapshot_bytes"] == (tmp / "i.hnsw").stat().st_size
    index = load_index(str(tmp / "i.hnsw"))
    index.validate()
    assert report["stats"]["max_layer"] == index.max_layer


def test_build_flat_mode(files, capsys):
    tmp, base, _ = files
    code, out, _ = run(capsys, "build", "--dataset", base, "--m", 6, "--mmax0", 6,
                       "--level-mult", 0, "--out", tmp / "flat.hnsw")
    assert code == 0
    stats = json.loads(out)["stats"]
    assert stats["max_layer"] == 0
    assert max(d for d, c in enumerate(stats["degree_histogram"][0]) if c) <= 6


def test_build_bad_params(files, capsys):
    tmp, base, _ = files
    code, _, err = run(capsys, "build", "--dataset", base, "--m", 8, "--mmax", 4,
                       "--out", tmp / "x.hnsw")
    assert code == 1 and err.startswith("hnswpy: error:")


def test_build_missing_file(tmp_path, capsys):
    code, _, err = run(capsys, "build", "--dataset", tmp_path / "nope.fvecs", "--out", tmp_path / "x")
    assert code == 1 and len(err.strip().splitlines()) == 1


def test_query_full_beam_recall_one(files, capsys):
    tmp, base, queries = files
    run(capsys, "build", "--dataset", base, "--m", 6, "--out", tmp / "i.hnsw")
    assert is_connected(adjacency_lists(load_index(str(tmp / "i.hnsw")))[0])
    run(capsys, "gt", "--dataset", base, "--queries", queries, "--k", 10, "--out", tmp / "gt.ivecs")
    code, out, _ = run(capsys, "query", "--index", tmp / "i.hnsw", "--queries", queries,
                       "--gt", tmp / "gt.ivecs", "--k", 10, "--ef", "10,50,500")
    assert code == 0
    rows = read_csv(io.StringIO(out))
    assert [r.ef for r in rows] == [10, 50, 500]
    assert rows[-1].recall == 1.0
    assert all(r.build_time_ms is None for r in rows)


def test_query_k_above_ef(files, capsys):
    tmp, base, queries = files
    run(capsys, "build", "--dataset", base, "--m", 6, "--out", tmp / "i.hnsw")
    code, _, err = run(capsys, "query", "--index", tmp / "i.hnsw", "--queries", queries,
                       "--k", 10, "--ef", "5,20")
    assert code == 2 and "ef" in err


def test_query_without_queries_is_usage_error(files, capsys):
    tmp, base, _ = files
    run(capsys, "build", "--dataset", base, "--m", 6, "--out", tmp / "i.hnsw")
    assert run(capsys, "query", "--index", tmp / "i.hnsw")[0] == 2


def test_query_self_queries(files, capsys):
    tmp, base, _ = files
    run(capsys, "build", "--dataset", base, "--m", 6, "--out", tmp / "i.hnsw")
    code, out, _ = run(capsys, "query", "--index", tmp / "i.hnsw", "--self-queries",
                       "--n-queries", 20, "--k", 1, "--ef", 10)
    assert code == 0 and read_csv(io.StringIO(out))[0].recall == 1.0


def _strip_timing(rows):
    return [{k: v for k, v in vars(r).items() if k not in TIMING_FIELDS + ("dataset",)} for r in rows]


def test_single_point_sweep_equals_build_plus_query(files, capsys):
    tmp, base, queries = files
    common = ["--m", 5, "--ef-construction", 40, "--seed", 3]
    run(capsys, "build", "--dataset", base, *common, "--out", tmp / "i.hnsw")
    _, q_out, _ = run(capsys, "query", "--index", tmp / "i.hnsw", "--queries", queries,
                      "--k", 5, "--ef", "5,30")
    code, s_out, _ = run(capsys, "sweep", "--dataset", base, "--queries", queries, *common,
                         "--k", 5, "--ef", "5,30", "--out", tmp / "s.csv")
    assert code == 0
    with open(tmp / "s.csv") as fh:
        swept = read_csv(fh)
    assert _strip_timing(swept) == _strip_timing(read_csv(io.StringIO(q_out)))
    assert all(r.build_time_ms is not None for r in swept)


def test_sweep_rerun_reproduces_measurements(files, capsys):
    tmp, base, queries = files
    argv = ["sweep", "--dataset", base, "--queries", queries, "--m", "4,6",
            "--level-mult", "0,auto", "--selector", "simple,heuristic", "--k", 5, "--ef", "5,20",
            "--sizes", "200,500", "--seed", 2]
    _, a, _ = run(capsys, *argv)
    _, b, _ = run(capsys, *argv)
    ra, rb = read_csv(io.StringIO(a)), read_csv(io.StringIO(b))
    assert len(ra) == 2 * 2 * 2 * 2 * 2
    assert _strip_timing(ra) == _strip_timing(rb)


def test_sweep_auto_selector(files, capsys):
    _, base, queries = files
    code, out, _ = run(capsys, "sweep", "--dataset", base, "--queries", queries, "--m", 5,
                       "--selector", "auto", "--k", 5, "--ef", 10)
    rows = read_csv(io.StringIO(out))
    assert code == 0 and rows[0].status == "ok" and rows[0].selector == "heuristic"


def test_sweep_bad_grid_point_is_recorded(files, capsys):
    _, base, queries = files
    code, out, _ = run(capsys, "sweep", "--dataset", base, "--queries", queries, "--m", "8,4",
                       "--ef-construction", 6, "--k", 5, "--ef", 10)
    rows = read_csv(io.StringIO(out))
    assert code == 0
    assert rows[0].status.startswith("error:") and rows[1].status == "ok"


def test_exit_codes_via_subprocess(tmp_path):
    ok = subprocess.run([sys.executable, "-m", "hnswpy", "gen", "--n", "5", "--dim", "2",
                         "--out", str(tmp_path / "g.fvecs")], capture_output=True, text=True)
    assert ok.returncode == 0
    bad = subprocess.run([sys.executable, "-m", "hnswpy", "query", "--index",
                          str(tmp_path / "g.fvecs"), "--self-queries"], capture_output=True, text=True)
    assert bad.returncode != 0
    assert len(bad.stderr.strip().splitlines()) == 1


def _comps_at_recall(rows, target):
    hits = [r.dist_comps for r in rows if r.recall >= target]
    return min(hits) if hits else math.inf


@pytest.mark.slow
def test_level_mult_sweep_hierarchy_saves_work(tmp_path, capsys):
    base, queries = tmp_path / "b.fvecs", tmp_path / "q.fvecs"
    run(capsys, "gen", "--n", 50_000, "--dim", 4, "--seed", 5, "--holdout", 100,
        "--out", base, "--queries-out", queries)
    code, out, _ = run(capsys, "sweep", "--dataset", base, "--queries", queries, "--m", 6,
                       "--level-mult", "0,auto", "--k", 10, "--ef", "10,12,15,20,30,40,60")
    assert code == 0
    rows = read_csv(io.StringIO(out))
    flat = [r for r in rows if r.levelMult == 0]
    layered = [r for r in rows if r.levelMult > 0]
    assert _comps_at_recall(layered, 0.9) <= _comps_at_recall(flat, 0.9) < math.inf
