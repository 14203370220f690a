import json

import numpy as np
import pytest

from epgforge.cli import main
from epgforge import surrogate as sg


def write_config(path, n_tr=24, flip="explicit", extra=()):
    lines = [f"n_tr = {n_tr}", "tr_ms = 9.0", "te_ms = 4.0"]
    if flip == "explicit":
        lines.append("flip_kind = explicit")
        lines.append("explicit_deg = " + ",".join(["35"] * n_tr))
    elif flip == "zero":
        lines.append("flip_kind = explicit")
        lines.append("explicit_deg = " + ",".join(["0"] * n_tr))
    elif flip == "const120":
        lines.append("flip_kind = explicit")
        lines.append("explicit_deg = " + ",".join(["120"] * n_tr))
    elif flip == "const10":
        lines.append("flip_kind = explicit")
        lines.append("explicit_deg = " + ",".join(["10"] * n_tr))
    lines += ["rf.shape = gaussian", "rf.duration_ms = 0.6", "rf.n_rf = 4",
              "slice.thickness_mm = 5.0", "slice.n_z = 3", "inversion = true",
              "ti_ms = 5.0"]
    lines += list(extra)
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def run_cli(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out.strip().splitlines()
    report = json.loads(out[-1]) if out else None
    return code, report


class TestSimulate:
    def test_zero_flip_train_zero_csv(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "seq.cfg", flip="zero")
        out = tmp_path / "sig.csv"
        code, report = run_cli(capsys, "simulate", "--config", cfg,
                               "--model", "epgbloch", "--t1", "0.8",
                               "--t2", "0.08", "--out", out)
        assert code == 0
        assert report["metrics"]["rms"] == 0.0
        rows = np.genfromtxt(out, delimiter=",", names=True)
        assert np.all(rows["re"] == 0.0) and np.all(rows["im"] == 0.0)

    def test_reproducible_output(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "seq.cfg")
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            code, _ = run_cli(capsys, "simulate", "--config", cfg, "--model",
                              "epg", "--t1", "0.8", "--t2", "0.08", "--out", out)
            assert code == 0
        assert a.read_bytes() == b.read_bytes()

    def test_missing_config_is_config_error(self, tmp_path, capsys):
        code, _ = run_cli(capsys, "simulate", "--config", tmp_path / "nope.cfg",
                          "--model", "epg", "--t1", "0.8", "--t2", "0.08",
                          "--out", tmp_path / "x.csv")
        assert code == 2

    def test_gru_without_weights_is_config_error(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "seq.cfg")
        code, _ = run_cli(capsys, "simulate", "--config", cfg, "--model", "gru",
                          "--t1", "0.8", "--t2", "0.08", "--out", tmp_path / "x.csv")
        assert code == 2


class TestCompare:
    def test_engine_against_itself_zero(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "seq.cfg")
        code, report = run_cli(capsys, "compare", "--config", cfg,
                               "--model-a", "epgbloch", "--model-b", "epgbloch",
                               "--t1", "0.8", "--t2", "0.08")
        assert code == 0
        assert report["metrics"]["nrmse"] == 0.0

    def test_large_flip_divergence_exceeds_small(self, tmp_path, capsys):
        errs = {}
        for name in ("const120", "const10"):
            cfg = write_config(tmp_path / f"{name}.cfg", flip=name)
            code, report = run_cli(capsys, "compare", "--config", cfg,
                                   "--model-a", "epg", "--model-b", "epgbloch",
                                   "--t1", "0.8", "--t2", "0.08")
            assert code == 0
            errs[name] = report["metrics"]["nrmse"]
        assert errs["const120"] > errs["const10"]

    def test_epgbloch_close_to_bloch_oracle(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "seq.cfg")
        out = tmp_path / "diff.csv"
        code, report = run_cli(capsys, "compare", "--config", cfg,
                               "--model-a", "epgbloch", "--model-b", "bloch",
                               "--t1", "0.8", "--t2", "0.08", "--niso", "256",
                               "--out", out)
        assert code == 0
        assert report["metrics"]["nrmse"] < 5e-3
        assert out.exists()


class TestDictFlow:
    def test_dictgen_then_match(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "seq.cfg")
        dpath = tmp_path / "atoms.dict"
        code, report = run_cli(capsys, "dictgen", "--seq", cfg,
                               "--engine", "epgbloch", "--t1", "0.2:3.0:4",
                               "--t2", "0.03:0.3:4", "--b1", "1:1:1",
                               "--nk", "8", "--out", dpath)
        assert code == 0
        assert report["metrics"]["n_atoms"] > 0

        sig = tmp_path / "sig.csv"
        code, _ = run_cli(capsys, "simulate", "--config", cfg, "--model",
                          "epgbloch", "--nk", "8", "--t1", "0.7578582832552"
                          , "--t2", "0.0646330407", "--out", sig)
        # t1/t2 exactly on grid nodes: geomspace(0.2,3,4)[2], geomspace(0.03,.3,4)[2]
        import numpy as np
        t1 = float(np.geomspace(0.2, 3.0, 4)[2])
        t2 = float(np.geomspace(0.03, 0.3, 4)[2])
        code, _ = run_cli(capsys, "simulate", "--config", cfg, "--model",
                          "epgbloch", "--nk", "8", "--t1", t1, "--t2", t2,
                          "--out", sig)
        assert code == 0
        code, report = run_cli(capsys, "match", "--dict", dpath, "--signal", sig)
        assert code == 0
        assert report["metrics"]["t1"] == pytest.approx(t1, rel=1e-12)
        assert report["metrics"]["t2"] == pytest.approx(t2, rel=1e-12)
        assert report["metrics"]["correlation"] > 0.999999

    def test_corrupt_dictionary_is_format_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.dict"
        bad.write_bytes(b"NOTADICT")
        sig = tmp_path / "sig.csv"
        sig.write_text("tr_index,re,im\n0,1,0\n")
        code, _ = run_cli(capsys, "match", "--dict", bad, "--signal", sig)
        assert code == 4


class TestSurrogateFlow:
    def test_train_data_eval_and_dump(self, tmp_path, capsys):
        data = tmp_path / "train.epgt"
        code, report = run_cli(capsys, "train-data", "--n", "5", "--seed", "3",
                               "--out", data, "--ntr", "120", "--nrf", "4",
                               "--nz", "2", "--nk", "6")
        assert code == 0
        assert report["metrics"]["n_records"] == 5

        weights = tmp_path / "w.gruw"
        sg.save_weights(sg.random_network(seed=1), weights)
        rep = tmp_path / "report.csv"
        dump = tmp_path / "pred.epgt"
        code, report = run_cli(capsys, "eval-surrogate", "--weights", weights,
                               "--data", data, "--report", rep,
                               "--dump-pred", dump)
        assert code == 0
        lines = rep.read_text().strip().splitlines()
        assert lines[0] == "kind,signal_nrmse,derivative_nrmse"
        pred = sg.read_dataset(dump)
        assert pred.n_records == 5

    def test_wrong_weights_file_is_format_error(self, tmp_path, capsys):
        data = tmp_path / "d.epgt"
        data.write_bytes(b"EPGT" + b"\x00" * 16)
        bad = tmp_path / "w.gruw"
        bad.write_bytes(b"JUNK")
        code, _ = run_cli(capsys, "eval-surrogate", "--weights", bad, "--data", data)
        assert code == 4


class TestOptimize:
    def test_small_run_writes_outputs(self, tmp_path, capsys):
        out = tmp_path / "train.csv"
        code, report = run_cli(capsys, "optimize", "--tissues", "900,85;500,65",
                               "--te", "4.9", "--tr", "8.7", "--ntr", "60",
                               "--pop", "5", "--maxgen", "3", "--tol", "0",
                               "--nk", "6", "--nz", "2", "--nrf", "2",
                               "--seed", "1", "--out", out)
        assert code == 0
        assert out.exists()
        hist = (tmp_path / "train.csv.history.csv").read_text().splitlines()
        assert hist[0] == "generation,best_objective"
        assert len(hist) == 4
        assert np.isfinite(report["metrics"]["best_objective"])

    def test_bad_tissue_string(self, tmp_path, capsys):
        code, _ = run_cli(capsys, "optimize", "--tissues", "garbage",
                          "--te", "4.9", "--tr", "8.7", "--ntr", "60",
                          "--out", tmp_path / "x.csv")
        assert code == 2

    def test_degenerate_search_is_numeric_failure(self, tmp_path, capsys):
        # flip ceiling of zero leaves every candidate singular
        code, _ = run_cli(capsys, "optimize", "--tissues", "900,85",
                          "--te", "4.9", "--tr", "8.7", "--ntr", "60",
                          "--maxflip", "0", "--pop", "4", "--maxgen", "2",
                          "--nk", "6", "--nz", "2", "--nrf", "2",
                          "--out", tmp_path / "x.csv")
        assert code == 3


class TestBench:
    def test_timing_table(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "seq.cfg", n_tr=20)
        weights = tmp_path / "w.gruw"
        sg.save_weights(sg.random_network(seed=2), weights)
        out = tmp_path / "bench.csv"
        code, report = run_cli(capsys, "bench", "--config", cfg,
                               "--engines", "gru,epgbloch,epg",
                               "--batches", "2,8", "--nk", "6",
                               "--weights", weights, "--out", out)
        assert code == 0
        rows = report["metrics"]["rows"]
        assert len(rows) == 6
        assert all(r["seconds"] > 0 and r["signals_per_s"] > 0 for r in rows)
        assert set(report["metrics"]["time_growth_vs_linear"]) == \
            {"gru", "epgbloch", "epg"}
        assert out.read_text().startswith("engine,batch,seconds,signals_per_s")
