"""Command-line entry point exposing every workflow.

Subcommands: simulate, compare, dictgen, match, train-data, eval-surrogate,
optimize, bench.  Every command prints a machine-readable JSON run report to
stdout and is reproducible byte for byte under a fixed --seed and --threads 1.
Exit codes: 0 success, 2 configuration error, 3 numeric failure, 4 file
format error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

import numpy as np

from . import dictionary as dictmod
from . import seqopt, surrogate
from .bloch import simulate_isochromats
from .epg import simulate_epg_conventional
from .epgbloch import EpgBlochConfig, simulate_epg_bloch
from .sequence import (SliceGrid, TissueParams, load_sequence_config,
                       make_gaussian_pulse, write_flip_csv)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_FORMAT = 4


class CliError(Exception):
    def __init__(self, message, code=EXIT_CONFIG):
        super().__init__(message)
        self.code = code


def _default_threads():
    try:
        return max(1, int(os.environ.get("EPGFORGE_THREADS", "1")))
    except ValueError:
        return 1


def _report(command, t0, threads, inputs, outputs, metrics):
    print(json.dumps({"command": command,
                      "wall_ms": round((time.time() - t0) * 1e3, 3),
                      "threads": threads,
                      "inputs": inputs,
                      "outputs": outputs,
                      "metrics": metrics}, default=str))


def _load_seq(path):
    try:
        return load_sequence_config(path)
    except FileNotFoundError as exc:
        raise CliError(f"config not found: {exc}", EXIT_CONFIG)
    except (ValueError, KeyError) as exc:
        raise CliError(f"bad sequence config {path}: {exc}", EXIT_CONFIG)


def _check_finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise CliError(f"non-finite values in {what}", EXIT_NUMERIC)


def _write_signal_csv(path, sig):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tr_index", "re", "im"])
        for i, v in enumerate(sig):
            w.writerow([i, f"{v.real:.9g}", f"{v.imag:.9g}"])


def _read_signal_csv(path):
    try:
        rows = np.genfromtxt(path, delimiter=",", names=True)
    except OSError as exc:
        raise CliError(str(exc), EXIT_CONFIG)
    try:
        return rows["re"] + 1j * rows["im"]
    except (KeyError, ValueError) as exc:
        raise CliError(f"{path}: expected columns re,im", EXIT_FORMAT) from exc


def _nrmse(a, b):
    return float(np.sqrt(np.mean(np.abs(a - b) ** 2)) / np.sqrt(np.mean(np.abs(b) ** 2)))


def _run_engine(model, tissue, seq, cfg, n_iso, net):
    if model == "bloch":
        return simulate_isochromats(tissue, seq, n_iso)
    if model == "epg":
        return simulate_epg_conventional(tissue, seq, cfg.n_k)
    if model == "epgbloch":
        return simulate_epg_bloch(tissue, seq, cfg)
    if model == "gru":
        if net is None:
            raise CliError("--model gru requires --weights", EXIT_CONFIG)
        return surrogate.predict_sequence_batch(
            net, tissue.t1, tissue.t2, seq, b1=tissue.b1_plus).s[0]
    raise CliError(f"unknown model {model!r}", EXIT_CONFIG)


def _maybe_net(args):
    if getattr(args, "weights", None):
        try:
            return surrogate.load_weights(args.weights)
        except surrogate.WeightsFormatError as exc:
            raise CliError(str(exc), EXIT_FORMAT)
    return None


def _tissue(args):
    try:
        return TissueParams(t1=args.t1, t2=args.t2, b1_plus=args.b1)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_CONFIG)


def cmd_simulate(args):
    t0 = time.time()
    seq = _load_seq(args.config)
    cfg = EpgBlochConfig(n_k=args.nk)
    sig = _run_engine(args.model, _tissue(args), seq, cfg, args.niso, _maybe_net(args))
    _check_finite(sig, "simulated signal")
    _write_signal_csv(args.out, sig)
    _report("simulate", t0, args.threads,
            {"config": args.config, "seq_fingerprint": seq.fingerprint()},
            [args.out], {"n_tr": seq.n_tr, "model": args.model,
                         "rms": float(np.sqrt(np.mean(np.abs(sig) ** 2)))})


def cmd_compare(args):
    t0 = time.time()
    seq = _load_seq(args.config)
    cfg = EpgBlochConfig(n_k=args.nk)
    net = _maybe_net(args)
    tis = _tissue(args)
    sig_a = _run_engine(args.model_a, tis, seq, cfg, args.niso, net)
    sig_b = _run_engine(args.model_b, tis, seq, cfg, args.niso, net)
    _check_finite(sig_a, args.model_a)
    _check_finite(sig_b, args.model_b)
    err = _nrmse(sig_a, sig_b) if np.any(sig_b) else float(np.sqrt(np.mean(np.abs(sig_a)**2)))
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tr_index", "re_a", "im_a", "re_b", "im_b", "abs_diff"])
            for i, (a, b) in enumerate(zip(sig_a, sig_b)):
                w.writerow([i, f"{a.real:.9g}", f"{a.imag:.9g}",
                            f"{b.real:.9g}", f"{b.imag:.9g}", f"{abs(a - b):.9g}"])
    _report("compare", t0, args.threads,
            {"config": args.config, "seq_fingerprint": seq.fingerprint()},
            [args.out] if args.out else [],
            {"model_a": args.model_a, "model_b": args.model_b, "nrmse": err})


def _parse_axis(text, name):
    try:
        a, b, n = text.split(":")
        return (float(a), float(b)), int(n)
    except ValueError as exc:
        raise CliError(f"--{name} expects lo:hi:count, got {text!r}") from exc


def cmd_dictgen(args):
    t0 = time.time()
    seq = _load_seq(args.seq)
    t1_range, n_t1 = _parse_axis(args.t1, "t1")
    t2_range, n_t2 = _parse_axis(args.t2, "t2")
    b1_range, n_b1 = _parse_axis(args.b1, "b1")
    try:
        grid = dictmod.build_grid(t1_range, n_t1, t2_range, n_t2, b1_range, n_b1)
        d = dictmod.generate_dictionary(grid, seq, EpgBlochConfig(n_k=args.nk),
                                        engine=args.engine, net=_maybe_net(args),
                                        threads=args.threads)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_CONFIG)
    _check_finite(d.atoms, "dictionary atoms")
    dictmod.save_dictionary(d, args.out)
    _report("dictgen", t0, args.threads,
            {"seq": args.seq, "seq_fingerprint": d.seq_fingerprint},
            [args.out], {"n_atoms": d.n_atoms, "n_tr": d.n_tr, "engine": args.engine})


def cmd_match(args):
    t0 = time.time()
    try:
        d = dictmod.load_dictionary(args.dict)
    except dictmod.DictionaryFormatError as exc:
        raise CliError(str(exc), EXIT_FORMAT)
    sig = _read_signal_csv(args.signal)
    try:
        m = dictmod.match_signal(sig, d)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_CONFIG)
    _report("match", t0, args.threads, {"dict": args.dict, "signal": args.signal}, [],
            {"t1": m.t1, "t2": m.t2, "b1": m.b1, "correlation": m.correlation,
             "pd_abs": abs(m.pd), "atom_index": m.atom_index})


def cmd_train_data(args):
    t0 = time.time()
    rf = make_gaussian_pulse(args.rf_duration, n_rf=args.nrf, slice_thickness_mm=3.0)
    grid = SliceGrid(slice_thickness_mm=3.0, n_z=args.nz)
    ds = surrogate.export_training_set(args.n, args.seed, args.out, n_tr=args.ntr,
                                       rf=rf, slice_grid=grid,
                                       cfg=EpgBlochConfig(n_k=args.nk))
    _check_finite(ds.signal, "training signals")
    _report("train-data", t0, args.threads, {"seed": args.seed}, [args.out],
            {"n_records": ds.n_records, "n_tr": ds.n_tr})


def cmd_eval_surrogate(args):
    t0 = time.time()
    net = _maybe_net(args)
    if net is None:
        raise CliError("--weights is required", EXIT_CONFIG)
    try:
        ds = surrogate.read_dataset(args.data)
        table = surrogate.evaluate_nrmse(net, ds)
    except surrogate.DatasetFormatError as exc:
        raise CliError(str(exc), EXIT_FORMAT)
    outputs = []
    if args.report:
        with open(args.report, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "signal_nrmse", "derivative_nrmse"])
            for kind, row in table.items():
                w.writerow([kind, f"{row['signal']:.9g}", f"{row['derivative']:.9g}"])
        outputs.append(args.report)
    if args.dump_pred:
        theta, beta, m0 = ds.theta(), ds.beta(), ds.m0()
        sig, d1, d2 = surrogate.gru_forward_batch(net, theta, beta, m0)
        pred = surrogate.Dataset(kind=ds.kind, inversion=ds.inversion, t1=ds.t1,
                                 t2=ds.t2, tr_ms=ds.tr_ms, te_ms=ds.te_ms,
                                 flip_deg=ds.flip_deg, signal=sig,
                                 ds_dlogt1=d1, ds_dlogt2=d2)
        surrogate.save_dataset(pred, args.dump_pred)
        outputs.append(args.dump_pred)
    flat = {f"{k}_{m}": v for k, row in table.items() for m, v in row.items()}
    _report("eval-surrogate", t0, args.threads,
            {"weights": args.weights, "data": args.data}, outputs, flat)


def _parse_tissues(text):
    out = []
    try:
        for part in text.split(";"):
            t1, t2 = part.split(",")
            out.append(TissueParams(t1=float(t1) * 1e-3, t2=float(t2) * 1e-3))
    except ValueError as exc:
        raise CliError(f"--tissues expects 't1_ms,t2_ms;...', got {text!r}") from exc
    return out


def cmd_optimize(args):
    t0 = time.time()
    obj = seqopt.CrlbObjective(
        target_tissues=_parse_tissues(args.tissues),
        te_ms=args.te, tr_ms=args.tr, n_tr=args.ntr,
        inversion=args.inversion, max_flip_deg=args.maxflip,
        cfg=EpgBlochConfig(n_k=args.nk,
                           n_z=args.nz) if args.nz else EpgBlochConfig(n_k=args.nk),
        rf=make_gaussian_pulse(args.rf_duration, n_rf=args.nrf,
                               slice_thickness_mm=3.0),
        slice_grid=SliceGrid(slice_thickness_mm=3.0, n_z=args.nz or 8))
    de_cfg = seqopt.DeConfig(population=args.pop, max_generations=args.maxgen,
                             rel_tol=args.tol, seed=args.seed)
    net = _maybe_net(args)
    if args.engine == "gru" and net is None:
        raise CliError("--engine gru requires --weights", EXIT_CONFIG)
    best, best_obj, history = seqopt.optimize_de(obj, de_cfg, engine=args.engine,
                                                 net=net)
    if not np.isfinite(best_obj):
        raise CliError("optimization ended on a singular objective", EXIT_NUMERIC)
    train = obj.sequence_for(best).flip_deg
    write_flip_csv(args.out, train)
    hist_path = args.out + ".history.csv"
    with open(hist_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["generation", "best_objective"])
        for g, v in enumerate(history):
            w.writerow([g, f"{v:.9g}"])
    _report("optimize", t0, args.threads, {"tissues": args.tissues},
            [args.out, hist_path],
            {"best_objective": best_obj, "generations": len(history),
             "control_deg": [round(float(c), 4) for c in best]})


def cmd_bench(args):
    t0 = time.time()
    seq = _load_seq(args.config)
    cfg = EpgBlochConfig(n_k=args.nk)
    net = _maybe_net(args)
    batches = [int(b) for b in args.batches.split(",")]
    engines = args.engines.split(",")
    rng = np.random.default_rng(args.seed)
    nmax = max(batches)
    t1s = np.exp(rng.uniform(np.log(0.1), np.log(5.0), nmax))
    t2s = np.minimum(t1s, np.exp(rng.uniform(np.log(0.01), np.log(2.0), nmax)))
    rows = []
    for engine in engines:
        for nb in batches:
            tic = time.time()
            if engine == "epgbloch":
                from .epgbloch import simulate_epg_bloch_batch
                sig = simulate_epg_bloch_batch(t1s[:nb], t2s[:nb], 1.0, seq, cfg)
            elif engine == "epg":
                from .epg import _simulate_conventional_batch
                sig = _simulate_conventional_batch(t1s[:nb], t2s[:nb], 1.0, seq, cfg.n_k)
            elif engine == "gru":
                if net is None:
                    raise CliError("gru bench requires --weights", EXIT_CONFIG)
                sig = surrogate.predict_sequence_batch(net, t1s[:nb], t2s[:nb], seq).s
            else:
                raise CliError(f"unknown bench engine {engine!r}", EXIT_CONFIG)
            _check_finite(sig, f"{engine} bench signals")
            dt = time.time() - tic
            rows.append({"engine": engine, "batch": nb, "seconds": round(dt, 6),
                         "signals_per_s": round(nb / dt, 3)})
    # time-vs-batch growth relative to perfectly linear scaling, per engine
    scaling = {}
    for engine in engines:
        es = [r for r in rows if r["engine"] == engine]
        if len(es) > 1 and min(r["seconds"] for r in es) > 0:
            lo, hi = min(es, key=lambda r: r["batch"]), max(es, key=lambda r: r["batch"])
            scaling[engine] = round((hi["seconds"] / lo["seconds"])
                                    / (hi["batch"] / lo["batch"]), 4)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["engine", "batch", "seconds", "signals_per_s"])
            for r in rows:
                w.writerow([r["engine"], r["batch"], r["seconds"], r["signals_per_s"]])
    _report("bench", t0, args.threads, {"config": args.config},
            [args.out] if args.out else [],
            {"rows": rows, "time_growth_vs_linear": scaling})


def build_parser():
    p = argparse.ArgumentParser(prog="epgforge", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None,
                        help="worker count for batch axes (env EPGFORGE_THREADS)")
    sub = p.add_subparsers(dest="cmd", required=True)

    def add(name, fn, **kwargs):
        sp = sub.add_parser(name, parents=[common], **kwargs)
        sp.set_defaults(fn=fn)
        return sp

    sp = add("simulate", cmd_simulate, help="simulate one voxel signal")
    sp.add_argument("--config", required=True)
    sp.add_argument("--model", required=True,
                    choices=["bloch", "epg", "epgbloch", "gru"])
    sp.add_argument("--t1", type=float, required=True, help="seconds")
    sp.add_argument("--t2", type=float, required=True, help="seconds")
    sp.add_argument("--b1", type=float, default=1.0)
    sp.add_argument("--nk", type=int, default=20)
    sp.add_argument("--niso", type=int, default=512)
    sp.add_argument("--weights")
    sp.add_argument("--out", required=True)

    sp = add("compare", cmd_compare, help="NRMSE between two engines")
    sp.add_argument("--config", required=True)
    sp.add_argument("--model-a", required=True,
                    choices=["bloch", "epg", "epgbloch", "gru"])
    sp.add_argument("--model-b", required=True,
                    choices=["bloch", "epg", "epgbloch", "gru"])
    sp.add_argument("--t1", type=float, required=True)
    sp.add_argument("--t2", type=float, required=True)
    sp.add_argument("--b1", type=float, default=1.0)
    sp.add_argument("--nk", type=int, default=20)
    sp.add_argument("--niso", type=int, default=512)
    sp.add_argument("--weights")
    sp.add_argument("--out")

    sp = add("dictgen", cmd_dictgen, help="generate a parameter dictionary")
    sp.add_argument("--seq", required=True)
    sp.add_argument("--engine", default="epgbloch", choices=["epg", "epgbloch", "gru"])
    sp.add_argument("--t1", required=True, help="lo:hi:count, seconds")
    sp.add_argument("--t2", required=True)
    sp.add_argument("--b1", default="1:1:1")
    sp.add_argument("--nk", type=int, default=20)
    sp.add_argument("--weights")
    sp.add_argument("--out", required=True)

    sp = add("match", cmd_match, help="matched-filter search of a signal")
    sp.add_argument("--dict", required=True)
    sp.add_argument("--signal", required=True, help="CSV with re,im columns")

    sp = add("train-data", cmd_train_data, help="export a training dataset")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--ntr", type=int, default=1120)
    sp.add_argument("--nrf", type=int, default=16)
    sp.add_argument("--nz", type=int, default=32)
    sp.add_argument("--nk", type=int, default=20)
    sp.add_argument("--rf-duration", type=float, default=1.0)

    sp = add("eval-surrogate", cmd_eval_surrogate, help="NRMSE table of a weight file")
    sp.add_argument("--weights", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--report", help="CSV output path")
    sp.add_argument("--dump-pred", help="write predictions as a dataset file")

    sp = add("optimize", cmd_optimize, help="CRLB flip-train design")
    sp.add_argument("--tissues", required=True, help="'t1_ms,t2_ms;t1_ms,t2_ms'")
    sp.add_argument("--te", type=float, required=True, help="ms")
    sp.add_argument("--tr", type=float, required=True, help="ms")
    sp.add_argument("--ntr", type=int, required=True)
    sp.add_argument("--maxflip", type=float, default=90.0)
    sp.add_argument("--pop", type=int, default=10)
    sp.add_argument("--maxgen", type=int, default=1000)
    sp.add_argument("--tol", type=float, default=0.002)
    sp.add_argument("--engine", default="epgbloch", choices=["epgbloch", "gru"])
    sp.add_argument("--weights")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--inversion", action="store_true", default=True)
    sp.add_argument("--no-inversion", dest="inversion", action="store_false")
    sp.add_argument("--nk", type=int, default=10)
    sp.add_argument("--nz", type=int, default=None)
    sp.add_argument("--nrf", type=int, default=8)
    sp.add_argument("--rf-duration", type=float, default=1.0)
    sp.add_argument("--out", required=True)

    sp = add("bench", cmd_bench, help="self-timing over batch sizes")
    sp.add_argument("--config", required=True)
    sp.add_argument("--engines", default="gru,epgbloch")
    sp.add_argument("--batches", default="100,400,1600,6400")
    sp.add_argument("--nk", type=int, default=10)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--weights")
    sp.add_argument("--out")
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is None:
        args.threads = _default_threads()
    try:
        args.fn(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (dictmod.DictionaryFormatError, surrogate.WeightsFormatError,
            surrogate.DatasetFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
