import csv
import io

import pytest

from ssrk.cli import load_config, main, matrix_payload


def run_cli(args):
    return main(args)


class TestGen:
    def test_writes_matrix_market(self, tmp_path):
        out = tmp_path / "c.mtx"
        code = run_cli(["gen", "--kind", "circulant", "--m", "8", "--seed", "3", "--out", str(out)])
        assert code == 0
        text = out.read_text()
        assert text.startswith("%%MatrixMarket matrix coordinate real general")

    def test_stencil_flag(self, tmp_path):
        out = tmp_path / "c.mtx"
        run_cli(["gen", "--kind", "circulant", "--m", "6", "--stencil", "1,1", "--out", str(out)])
        from ssrk.linalg import read_matrix_market

        A = read_matrix_market(out.read_text())
        assert A.nnz == 12

    def test_banded_flags(self, tmp_path):
        out = tmp_path / "b.mtx"
        run_cli(["gen", "--kind", "banded", "--m", "9", "--l1", "1", "--l2", "1", "--out", str(out)])
        from ssrk.linalg import read_matrix_market

        assert read_matrix_market(out.read_text()).num_rows == 9


class TestSolve:
    def test_trace_to_file(self, tmp_path):
        mtx = tmp_path / "m.mtx"
        run_cli(["gen", "--kind", "path", "--m", "6", "--seed", "1", "--out", str(mtx)])
        out = tmp_path / "trace.csv"
        code = run_cli(
            ["solve", "--matrix", str(mtx), "--method", "gssrk", "--iters", "40",
             "--seed", "2", "--out", str(out)]
        )
        assert code == 0
        rows = list(csv.DictReader(io.StringIO(out.read_text())))
        assert rows[0]["iteration"] == "0"
        assert rows[0]["chosen"] == "-1"

    def test_spec_source_to_stdout(self, capsys):
        code = run_cli(["solve", "--matrix", "cycle:m=8", "--method", "rk", "--iters", "20"])
        assert code == 0
        captured = capsys.readouterr()
        assert captured.out.startswith("iteration,chosen,attempts,")

    def test_bad_matrix_exits_nonzero(self, tmp_path):
        bad = tmp_path / "bad.mtx"
        bad.write_text("%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1 0\n")
        with pytest.raises(SystemExit) as exc:
            run_cli(["solve", "--matrix", str(bad), "--method", "rk"])
        assert exc.value.code == 2


class TestBench:
    def test_bench_csv(self, tmp_path, capsys):
        out = tmp_path / "bench.csv"
        code = run_cli(
            ["bench", "--matrix", "circulant:m=10", "--method", "rk,gssrk",
             "--trials", "2", "--iters", "15", "--seed", "1", "--out", str(out)]
        )
        assert code == 0
        rows = list(csv.DictReader(io.StringIO(out.read_text())))
        assert {r["method"] for r in rows} == {"rk", "gssrk"}
        err = capsys.readouterr().err
        assert "final mean sq error" in err


class TestBounds:
    def test_prints_report_and_writes_csv(self, tmp_path, capsys):
        out = tmp_path / "bounds.csv"
        code = run_cli(["bounds", "--matrix", "path:m=6", "--out", str(out)])
        assert code == 0
        assert "sigma_min^2(A)" in capsys.readouterr().out
        assert out.read_text().startswith("quantity,value")


class TestVerify:
    def test_passing_instance_exit_zero(self, capsys):
        code = run_cli(["verify", "--matrix", "path:m=8", "--seed", "2"])
        assert code == 0
        out = capsys.readouterr().out
        assert out.count("PASS") == 5
        assert "all checks passed" in out


class TestConfig:
    def test_config_supplies_defaults(self, tmp_path, capsys):
        cfg = tmp_path / "bench.cfg"
        cfg.write_text("trials=2\niters=12  # small run\nmethod=nssrk\n")
        out = tmp_path / "o.csv"
        code = run_cli(
            ["bench", "--matrix", "cycle:m=6", "--config", str(cfg), "--out", str(out)]
        )
        assert code == 0
        rows = list(csv.DictReader(io.StringIO(out.read_text())))
        assert len(rows) == 13  # iters=12 from config -> 13 records
        assert {r["method"] for r in rows} == {"nssrk"}

    def test_explicit_flag_beats_config(self, tmp_path):
        cfg = tmp_path / "bench.cfg"
        cfg.write_text("iters=50\n")
        out = tmp_path / "o.csv"
        run_cli(
            ["bench", "--matrix", "cycle:m=6", "--method", "rk", "--trials", "1",
             "--iters", "7", "--config", str(cfg), "--out", str(out)]
        )
        rows = list(csv.DictReader(io.StringIO(out.read_text())))
        assert len(rows) == 8

    def test_unknown_key_rejected(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("warp_speed=9\n")
        with pytest.raises(SystemExit):
            run_cli(["bench", "--matrix", "cycle:m=6", "--config", str(cfg)])

    def test_load_config_parses_comments(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("# full line comment\ntrials=4\n\nweights=rownorm # inline\n")
        assert load_config(str(cfg)) == {"trials": "4", "weights": "rownorm"}


def test_matrix_payload_dispatch(tmp_path):
    spec = matrix_payload("circulant:m=5")
    assert spec == {"source": "circulant:m=5"}
    f = tmp_path / "x.mtx"
    f.write_text("%%MatrixMarket matrix coordinate real general\n1 1 1\n1 1 2.0\n")
    inline = matrix_payload(str(f))
    assert "matrix_market" in inline
