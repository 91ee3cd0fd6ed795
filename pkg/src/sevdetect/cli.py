"""Command-line entry point: synth, extract, train, evaluate, benchmark.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 training error.
Failures print one JSON line to stderr and leave no partial outputs behind.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .bench import DEFAULT_SIZES, benchmark_signal, feature_table, format_table, scaling_sweep
from .config import PipelineConfig
from .core import ConfigError, DataError, SevDetectError
from .dataio import atomic_write_text, dump_json, load_features, load_manifest, output_set, save_features
from .evaluation import repeated_split_eval
from .pipeline import extract_manifest
from .svm import save_model, train_ova
from .synth import generate

log = logging.getLogger("sevdetect")

INTERPRETATIONS = {
    "filter": "2nd-order Butterworth high-pass, forward-backward; Gaussian sigma = 0.1325 / lp_cutoff; "
              "smoothing skipped when lp_cutoff > fs/2",
    "segment": "windows never span files; overlap as configured",
    "features": "zero gradients count positive; s_neg signed; bands [ceil(lo), ceil(hi)) with last band "
                "closed at Nyquist; low-frequency magnitudes include DC; no taper",
    "svm": "SMO (maximal violating pair), z-score fitted on training split, gamma=1/(d*mean var) if unset, "
           "argmax tie-break by class order",
    "repeats": "repeat r re-draws the split with seed+r and re-seeds the solver's tie-break order",
}


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def run_metadata(command: str, cfg: PipelineConfig, inputs: list[Path], notes: dict | None = None) -> dict:
    return {
        "command": command,
        "config": cfg.to_dict(),
        "config_digest": cfg.digest(),
        "seed": cfg.seed,
        "versions": {
            "sevdetect": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "inputs": {str(p): _sha256(p) for p in inputs},
        "interpretations": INTERPRETATIONS,
        "notes": notes or {},
    }


def _write(written: list, path: Path, text: str) -> None:
    atomic_write_text(path, text)
    written.append(path)


def _config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config)
    groups = None
    if getattr(args, "groups", None):
        groups = [g.strip() for g in args.groups.split(",") if g.strip()]
    return cfg.override(**{
        "seed": args.seed,
        "segment.duration_s": getattr(args, "window_s", None),
        "features.include_groups": groups,
        "eval.split_mode": getattr(args, "split_mode", None),
        "eval.repeats": getattr(args, "repeats", None),
        "eval.positive_label": getattr(args, "positive_label", None),
        "kernel.kind": getattr(args, "kernel", None),
    })


def cmd_synth(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    with output_set() as written:
        manifest = generate(cfg.synth_config(), out)
        written += [manifest.resolve(r) for r in manifest.records]
        written.append(out / "manifest.json")
        _write(written, out / "run_meta.json", dump_json(run_metadata("synth", cfg, [])))
    print(f"wrote {len(manifest.records)} records and {out / 'manifest.json'}")
    return 0


def cmd_extract(args) -> int:
    cfg = _config(args)
    manifest = load_manifest(args.manifest)
    result = extract_manifest(manifest, cfg, threads=args.threads)
    if not result.vectors:
        raise DataError("no windows extracted")
    out = Path(args.out)
    inputs = [Path(args.manifest)] + [manifest.resolve(r) for r in manifest.records]
    with output_set() as written:
        save_features(result.vectors, result.layout, out)
        written.append(out)
        meta = run_metadata("extract", cfg, inputs, {**result.notes, "n_vectors": len(result.vectors),
                                                      "dim": result.layout.total_dim})
        _write(written, out.with_name(out.name + ".meta.json"), dump_json(meta))
    print(f"wrote {len(result.vectors)} vectors of dim {result.layout.total_dim} to {out}")
    return 0


def _labelled(path: str):
    vectors, layout = load_features(path)
    if not vectors:
        raise DataError(f"{path}: no feature vectors")
    unlabelled = [i for i, v in enumerate(vectors) if v.label is None]
    if unlabelled:
        raise DataError(f"{path}: vector {unlabelled[0]} has no label")
    X = np.vstack([v.values for v in vectors])
    return vectors, layout, X, [v.label for v in vectors]


def cmd_train(args) -> int:
    cfg = _config(args)
    vectors, layout, X, labels = _labelled(args.features)
    model = train_ova(X, labels, cfg.train, cfg.kernel)
    model.meta.update({"config_digest": cfg.digest(), "layout": layout.column_names()})
    out = Path(args.out)
    with output_set() as written:
        save_model(model, out)
        written.append(out)
        meta = run_metadata("train", cfg, [Path(args.features)], {"n_train": len(vectors)})
        _write(written, out.with_name(out.name + ".meta.json"), dump_json(meta))
    print(f"trained {len(model.classes)}-class model on {len(vectors)} vectors -> {out}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    vectors, _, X, labels = _labelled(args.features)
    report = repeated_split_eval(
        X, labels, cfg.eval, cfg.train, cfg.kernel,
        patients=[v.patient_id for v in vectors], threads=args.threads,
    )
    report.meta.update({
        "kernel": cfg.kernel.kind.value,
        "repeats": cfg.eval.repeats,
        "train_frac": cfg.eval.train_frac,
        "positive_label": cfg.eval.positive_label,
        "averaging": "binary" if cfg.eval.positive_label else "one-vs-all macro",
    })
    out = Path(args.out)
    with output_set() as written:
        _write(written, out / "report.json", dump_json(report.to_dict()))
        _write(written, out / "confusion_percent.csv", report.confusion_csv())
        notes = {"split_mode": report.split_mode.value}
        if report.split_mode.value == "sample":
            notes["leak_risk"] = "windows of one patient may fall on both sides of a split"
        _write(written, out / "run_meta.json",
               dump_json(run_metadata("evaluate", cfg, [Path(args.features)], notes)))
    print("\n".join(report.summary_lines()))
    return 0


def cmd_benchmark(args) -> int:
    cfg = _config(args)
    sizes = DEFAULT_SIZES
    if args.sizes:
        try:
            sizes = tuple(int(s) for s in args.sizes.split(","))
        except ValueError:
            raise ConfigError(f"--sizes must be comma-separated integers, got {args.sizes!r}") from None
    win = benchmark_signal(seed=cfg.seed)
    rows, total = feature_table(win, cfg.features, runs=args.runs)
    print(f"signal: {win.L} samples at {win.fs:g} Hz ({win.L / win.fs:.0f} s)")
    print(format_table(rows, total))
    times, slopes = scaling_sweep(sizes, cfg.features, seed=cfg.seed)
    print("\nscaling (median ms):")
    print("L".rjust(9) + "".join(g.rjust(12) for g in times))
    for i, L in enumerate(sizes):
        print(f"{L:>9}" + "".join(f"{1e3 * times[g][i]:>12.4f}" for g in times))
    print("log-log slope:" + "".join(f"  {g}={s:.3f}" for g, s in slopes.items()))
    if args.out:
        out = Path(args.out)
        doc = {
            "signal": {"samples": win.L, "fs": win.fs},
            "rows": [r.__dict__ for r in rows],
            "total": total.__dict__,
            "scaling": {"sizes": list(sizes), "median_s": times, "slopes": slopes},
        }
        with output_set() as written:
            _write(written, out / "benchmark.json", dump_json(doc))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline config (JSON); defaults apply when omitted")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--split-mode", choices=["sample", "patient"])
    common.add_argument("--window-s", type=float, help="window duration in seconds")
    common.add_argument("--groups", help="comma list of time,gradient,lowfreq,wholefreq")
    common.add_argument("--kernel", choices=["LINEAR", "GAUSSIAN"], type=str.upper)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="sevdetect", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("extract", parents=[common], help="manifest -> feature table")
    s.add_argument("manifest")
    s.add_argument("--out", required=True, help="feature table path (CSV)")
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("train", parents=[common], help="feature table -> model")
    s.add_argument("features")
    s.add_argument("--out", required=True, help="model path (JSON)")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", parents=[common], help="repeated hold-out evaluation")
    s.add_argument("features")
    s.add_argument("--out", required=True, help="report directory")
    s.add_argument("--repeats", type=int)
    s.add_argument("--positive-label", help="report binary metrics for this class instead of OVA")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("benchmark", parents=[common], help="per-feature timing and scaling sweep")
    s.add_argument("--sizes", help="comma list of window lengths for the sweep")
    s.add_argument("--runs", type=int, default=30)
    s.add_argument("--out", help="directory for benchmark.json")
    s.set_defaults(func=cmd_benchmark)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except SevDetectError as exc:
        print(json.dumps({"error": exc.kind, "exit_code": exc.exit_code, "message": str(exc)}), file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(json.dumps({"error": "data", "exit_code": 3, "message": str(exc)}), file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
