"""Command-line entry point: ``rfsense {synth,train,eval,bench,cost}``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import amc, dsp, energy, frcnn, metrics, synth
from .errors import ConfigurationError, InputError, RfsenseError

log = logging.getLogger("rfsense")


def parse_snr_list(spec: str) -> list:
    """``"a:step:b"`` (inclusive), ``"a,b,c"`` or a single value."""
    try:
        if ":" in spec:
            parts = [float(p) for p in spec.split(":")]
            if len(parts) != 3 or parts[1] <= 0:
                raise ConfigurationError(f"SNR sweep must be lo:step:hi with step > 0, got {spec!r}")
            lo, step, hi = parts
            n = int(np.floor((hi - lo) / step + 1e-9)) + 1
            return [round(lo + k * step, 9) for k in range(n)]
        return [float(p) for p in spec.split(",")]
    except ValueError as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"bad SNR list {spec!r}") from None


def provenance(args) -> str:
    flags = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    return "rfsense " + json.dumps(flags, sort_keys=True, default=str)


def _write_rows(path, header, rows, prov):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {prov}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# synth


def cmd_synth(args) -> int:
    if args.snr.count(":") == 2:
        snrs = parse_snr_list(args.snr)
        paths = synth.generate_snr_sets(snrs, args.n, args.seed, args.out, args.with_baseband, args.jobs)
        for idx, _ in paths:
            print(idx)
        return 0
    idx, bin_ = synth.generate_dataset(args.n, args.snr, args.seed, args.out, args.with_baseband, args.jobs)
    print(f"{idx}\n{bin_}")
    return 0


# train


def cmd_train(args) -> int:
    records, _ = synth.load_dataset(args.data)
    out = Path(args.out)
    log_path = Path(args.log) if args.log else Path(f"{out}.loss.csv")
    prov = provenance(args)
    if args.model == "frcnn":
        ext = frcnn.FeatureExtractorConfig(args.family, args.stride, args.downscaled, args.width_divisor)
        mcfg = frcnn.ModelConfig(extractor=ext)
        epoch_len = args.epoch_len if args.epoch_len else len(records)
        tcfg = frcnn.TrainConfig(epochs=args.epochs, epoch_length=epoch_len, lr=args.lr if args.lr else 1e-5,
                                 seed=args.seed, alternation=args.alternation)
        model, history = frcnn.train_alternating(records, tcfg, model_config=mcfg)
        model.save(out, {"provenance": prov})
        frcnn.write_loss_csv(history, log_path, prov)
    else:
        rng = np.random.default_rng(args.seed)
        data = amc.make_amc_dataset(records, rng)
        val, train = data.split([args.val_fraction, 1 - args.val_fraction], rng)
        cfg = amc.AMCTrainConfig(epochs=args.epochs, lr=args.lr if args.lr else 1e-3, batch_size=args.batch_size, seed=args.seed)
        model, history = amc.train_amc(train, cfg, val if len(val) else None)
        model.save(out, {"provenance": prov})
        _write_rows(log_path, ["epoch", "loss", "train_accuracy", "val_accuracy"],
                    [[h.epoch, repr(h.loss), repr(h.train_accuracy), repr(h.val_accuracy)] for h in history], prov)
    print(out)
    return 0


# eval

_WORKER = {}


def _load_models(method, model_path, amc_path):
    key = (method, model_path, amc_path)
    if key not in _WORKER:
        det = frcnn.FRCNN1D.load(model_path) if method.startswith("frcnn") else None
        cls = amc.AMCModel.load(amc_path) if method == "frcnn+amc" else None
        _WORKER.clear()
        _WORKER[key] = (det, cls)
    return _WORKER[key]


def run_detector(method: str, record, p_min: float, det_model=None, amc_model=None, sample_rate_hz=200e3) -> list:
    if method == "energy":
        return energy.energy_detect(record.spectrum)
    if method == "frcnn":
        return det_model.detect(record.spectrum, p_min)
    if method == "frcnn+amc":
        if record.baseband is None:
            raise InputError("frcnn+amc evaluation needs records with baseband samples")
        frame = dsp.BasebandFrame(np.asarray(record.baseband, dtype=np.complex128), sample_rate_hz)
        return amc.classify_detections(frame, det_model.detect(record.spectrum, p_min), amc_model, record.spectrum.size)
    raise ConfigurationError(f"unknown method {method!r}")


def _eval_chunk(job):
    method, model_path, amc_path, p_min, records = job
    det_model, amc_model = _load_models(method, model_path, amc_path)
    out = []
    for r in records:
        t0 = time.perf_counter()
        dets = run_detector(method, r, p_min, det_model, amc_model)
        out.append((dets, time.perf_counter() - t0))
    return out


def truth_classes(record, method: str) -> np.ndarray:
    if method == "frcnn+amc":
        return np.asarray([int(amc.AMCClass.from_label(l)) for l in record.labels], dtype=np.int64)
    return np.zeros(len(record.labels), dtype=np.int64)


def evaluate_records(records, method, p_min=0.9, classful=False, model_path=None, amc_path=None, jobs=1,
                     snr_db=float("nan")) -> tuple:
    """Run one detector over ``records``; returns ``(EvalReport, frames)``."""
    if method.startswith("frcnn") and not model_path:
        raise ConfigurationError(f"--model is required for method {method}")
    if method == "frcnn+amc" and not amc_path:
        raise ConfigurationError("--amc is required for method frcnn+amc")
    if jobs > 1:
        chunks = np.array_split(np.arange(len(records)), jobs)
        jobs_ = [(method, model_path, amc_path, p_min, [records[i] for i in c]) for c in chunks if c.size]
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = [x for part in ex.map(_eval_chunk, jobs_) for x in part]
    else:
        results = _eval_chunk((method, model_path, amc_path, p_min, records))
    frames = [metrics.FrameResult(d, r.truths, truth_classes(r, method)) for (d, _), r in zip(results, records)]
    mean_t = float(np.mean([t for _, t in results])) if results else float("nan")
    report = metrics.evaluate_frames(frames, method, snr_db, classful, mean_inference_s=mean_t)
    return report, frames


def _test_records(args, snr):
    if args.data:
        prefix = args.data.format(snr=f"{snr:g}")
        return synth.load_dataset(prefix)[0]
    seed = args.seed * 1_000_003 + int(round((snr + 1000.0) * 1000))  # distinct, non-negative per SNR
    return synth.generate_records(args.n, snr, seed, with_baseband=args.method == "frcnn+amc")


def cmd_eval(args) -> int:
    snrs = parse_snr_list(args.snr)
    prov = provenance(args)
    reports = []
    for snr in snrs:
        records = _test_records(args, snr)
        report, frames = evaluate_records(records, args.method, args.p_min, args.classful, args.model, args.amc,
                                          args.jobs, snr)
        reports.append(report)
        if args.pr_dir:
            Path(args.pr_dir).mkdir(parents=True, exist_ok=True)
            metrics.write_pr_csv(frames, Path(args.pr_dir) / f"pr_{args.method}_snr{snr:g}.csv", prov, args.classful)
    fields = metrics.REPORT_FIELDS if args.timing else [f for f in metrics.REPORT_FIELDS if f != "mean_inference_s"]
    metrics.write_reports_csv(reports, args.out, prov, fields)
    print(metrics.summary_text(reports))
    return 0


# bench


def cmd_bench(args) -> int:
    records = synth.load_dataset(args.data)[0][: args.n] if args.data else synth.generate_records(args.n, args.snr, args.seed)
    spectra = [np.asarray(r.spectrum) for r in records]  # preprocessing stays outside the timed region
    model = frcnn.FRCNN1D.load(args.model) if args.model else frcnn.FRCNN1D(
        frcnn.ModelConfig(extractor=frcnn.FeatureExtractorConfig(width_divisor=args.width_divisor)), seed=args.seed)
    stats = {
        "energy": metrics.time_inference(energy.energy_detect, spectra, args.repeat),
        "frcnn": metrics.time_inference(lambda s: model.detect(s, 0.9), spectra, args.repeat),
    }
    norm = metrics.timing_report({k: v[0] for k, v in stats.items()})
    rows = [[k, repr(stats[k][0]), repr(stats[k][1]), f"{norm[k]:.6g}"] for k in stats]
    _write_rows(args.out, ["method", "mean_s", "std_s", "normalized"], rows, provenance(args))
    for k in stats:
        print(f"{k:<8} {stats[k][0]:.3e} s +- {stats[k][1]:.1e}  normalized {norm[k]:.3g}")
    return 0


# cost


def cmd_cost(args) -> int:
    rows = []
    for kind, spec in (("frame", False), ("spectrogram", True)):
        n, sec = synth.acquisition_cost(args.fs, args.fft, spec)
        rows.append([kind, args.fs, args.fft, n, repr(sec)])
    header = ["input", "sample_rate_hz", "fft_size", "samples", "seconds"]
    if args.out:
        _write_rows(args.out, header, rows, provenance(args))
    print(",".join(header))
    for r in rows:
        print(",".join(str(v) for v in r))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rfsense", description="Wideband spectrum sensing toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a dataset pair (.idx/.f32)")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--snr", default="-5:20", help="value, lo:hi (uniform), or lo:step:hi (one set per value)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="path prefix, or directory for a sweep")
    s.add_argument("--with-baseband", action="store_true")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train a detector or modulation classifier")
    t.add_argument("model", choices=["frcnn", "amc"])
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--log", default=None, help="loss CSV (default: <out>.loss.csv)")
    t.add_argument("--epochs", type=int, default=None)
    t.add_argument("--epoch-len", type=int, default=None, help="frames per epoch (default 10000)")
    t.add_argument("--lr", type=float, default=None)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--family", choices=list(frcnn.FAMILIES), default="vgg")
    t.add_argument("--stride", type=int, default=16)
    t.add_argument("--downscaled", action="store_true")
    t.add_argument("--width-divisor", type=int, default=1)
    t.add_argument("--alternation", choices=["sample", "epoch"], default="sample")
    t.add_argument("--batch-size", type=int, default=32)
    t.add_argument("--val-fraction", type=float, default=0.05)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a method over an SNR sweep")
    e.add_argument("--method", choices=["energy", "frcnn", "frcnn+amc"], required=True)
    e.add_argument("--snr", default="-5:5:20")
    e.add_argument("--data", default=None, help="dataset prefix template with {snr}; synthesized if omitted")
    e.add_argument("--n", type=int, default=200, help="frames per SNR when synthesizing")
    e.add_argument("--seed", type=int, default=1)
    e.add_argument("--model", default=None)
    e.add_argument("--amc", default=None)
    e.add_argument("--p-min", type=float, default=0.9)
    e.add_argument("--classful", action="store_true")
    e.add_argument("--jobs", type=int, default=1)
    e.add_argument("--timing", action="store_true", help="include mean inference time column")
    e.add_argument("--pr-dir", default=None, help="also write precision/recall curves here")
    e.add_argument("--out", default="eval.csv")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="normalized inference times")
    b.add_argument("--model", default=None)
    b.add_argument("--data", default=None)
    b.add_argument("--n", type=int, default=1000)
    b.add_argument("--snr", type=float, default=10.0)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--repeat", type=int, default=1)
    b.add_argument("--width-divisor", type=int, default=1, help="for an untrained model when --model is omitted")
    b.add_argument("--out", default="bench.csv")
    b.set_defaults(func=cmd_bench)

    c = sub.add_parser("cost", help="acquisition time per detector input")
    c.add_argument("--fs", type=float, default=200e3)
    c.add_argument("--fft", type=int, default=1024)
    c.add_argument("--out", default=None)
    c.set_defaults(func=cmd_cost)
    return p


def _apply_defaults(args):
    if args.command == "train" and args.epochs is None:
        args.epochs = 20 if args.model == "frcnn" else 40
    if args.command == "train" and args.model == "frcnn" and args.epoch_len is None:
        args.epoch_len = 10000


def _attach_negative_values(argv):
    """Rewrite ``--snr -5:20`` as ``--snr=-5:20`` so argparse does not read it as a flag."""
    out = []
    for tok in argv:
        if out and out[-1] == "--snr" and len(tok) > 1 and tok[0] == "-" and (tok[1].isdigit() or tok[1] == "."):
            out[-1] = f"--snr={tok}"
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(_attach_negative_values(argv))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    _apply_defaults(args)
    try:
        return args.func(args)
    except (RfsenseError, ValueError, OSError, KeyError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"rfsense: error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
