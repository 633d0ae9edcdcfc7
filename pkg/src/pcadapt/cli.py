"""Command-line interface.

Subcommands: gen-data, train-classifier, corrupt, adapt, run, report,
denoiser-check. Exit codes: 0 success, 2 configuration error, 3 wire
protocol error, 4 conformance-check failure.
"""

from __future__ import annotations

import argparse
import json
import shlex
import sys
from pathlib import Path

import numpy as np

from .classifier import PointClassifier, evaluate_accuracy, train_source
from .cloud import PointCloud, load_ply, load_xyz, normalize_for_diffusion, save_xyz
from .corruptions import CorruptionSpec, corrupt
from .denoisers import EmpiricalPosteriorDenoiser, EmpiricalSource, ExternalDenoiser, PointMixtureDenoiser
from .engine import AdaptConfig, adapt_input, write_trace_csv
from .errors import ConfigError, PcAdaptError, ProtocolError, RemoteFailure, ShapeMismatch, Timeout
from .harness import LabeledDataset, PipelineConfig, gen_source_dataset, run_pipeline
from .rng import stream
from .schedule import make_polynomial_schedule

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PROTOCOL = 3
EXIT_CHECK_FAILED = 4


def _load_cloud(path: str) -> np.ndarray:
    return load_ply(path) if path.endswith(".ply") else load_xyz(path)


def _save_cloud(path: str, points) -> None:
    if str(path).endswith(".ply"):
        from .cloud import save_ply

        save_ply(path, points)
    else:
        save_xyz(path, points)


def _load_dataset_dir(path: str) -> LabeledDataset:
    index = json.loads((Path(path) / "index.json").read_text())
    clouds = [
        PointCloud(_load_cloud(str(Path(path) / item["file"])), label=item["label"])
        for item in index["items"]
    ]
    return LabeledDataset(clouds=clouds, class_names=index["classes"])


def _cmd_gen_data(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    classes = args.classes.split(",")
    data = gen_source_dataset(classes, args.per_class, args.points, args.seed)
    items = []
    for i, cloud in enumerate(data.clouds):
        name = f"cloud_{i:05d}.xyz"
        save_xyz(out / name, cloud.points)
        items.append({"file": name, "label": cloud.label})
    (out / "index.json").write_text(json.dumps({"classes": classes, "items": items}))
    print(f"wrote {len(items)} clouds to {out}")
    return EXIT_OK


def _cmd_train_classifier(args) -> int:
    data = _load_dataset_dir(args.data)
    model = PointClassifier.init(data.n_classes, args.hidden, args.seed)
    train_source(model, data.clouds, args.epochs, args.lr, args.seed, args.batch_size)
    acc = evaluate_accuracy(model, data.clouds)
    model.save(args.out)
    print(f"trained on {len(data.clouds)} clouds; train accuracy {acc:.4f}; saved {args.out}")
    return EXIT_OK


def _cmd_corrupt(args) -> int:
    pts = _load_cloud(args.infile)
    spec = CorruptionSpec(args.kind, args.severity, args.seed)
    out = corrupt(pts, spec)
    _save_cloud(args.out, out.points)
    print(f"{args.kind}:{args.severity} {pts.shape[0]} -> {out.n} points; wrote {args.out}")
    return EXIT_OK


def _build_adapt_cfg(args) -> AdaptConfig:
    if args.config:
        cfg = AdaptConfig.from_dict(json.loads(Path(args.config).read_text()))
    else:
        cfg = AdaptConfig()
    if args.seed is not None:
        from dataclasses import replace

        cfg = replace(cfg, seed=args.seed)
    return cfg


def _cmd_adapt(args) -> int:
    pts = _load_cloud(args.infile)
    cfg = _build_adapt_cfg(args)
    sched = make_polynomial_schedule(args.t_total)
    sources = [normalize_for_diffusion(_load_cloud(p))[0].points for p in args.source]
    source = EmpiricalSource(sources)
    if args.denoiser == "external":
        if not args.server_cmd:
            raise ConfigError("--denoiser external requires --server-cmd")
        denoiser = ExternalDenoiser.spawn(shlex.split(args.server_cmd), sched.T)
    elif args.denoiser == "mixture":
        denoiser = PointMixtureDenoiser(source, sched, seed=cfg.seed)
    else:
        denoiser = EmpiricalPosteriorDenoiser(source, sched)

    diff, center, scale = normalize_for_diffusion(pts)
    result = adapt_input(diff, denoiser, sched, cfg, return_trace=bool(args.trace))
    adapted, traces = result if args.trace else (result, None)
    from .cloud import denormalize

    for m, cloud in enumerate(adapted):
        path = args.out if len(adapted) == 1 else f"{args.out}.vote{m}"
        _save_cloud(path, denormalize(cloud, center, scale))
    if args.trace:
        write_trace_csv(args.trace, traces[0])
    print(f"adapted {pts.shape[0]} points with {cfg.votes} vote(s); wrote {args.out}")
    return EXIT_OK


def _cmd_run(args) -> int:
    cfg = PipelineConfig.from_dict(json.loads(Path(args.config).read_text()))
    if args.seed is not None:
        from dataclasses import replace

        cfg = replace(cfg, seed=args.seed)
    if args.workers is not None:
        from dataclasses import replace

        cfg = replace(cfg, workers=args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report, timing = run_pipeline(cfg)
    (out / "report.json").write_text(report.to_json())
    (out / "timing.json").write_text(json.dumps(timing))
    for key, sec in report.sections.items():
        un = sec.get("unadapted_accuracy")
        ad = sec.get("accuracy")
        msg = f"{key}: unadapted {un:.4f}" if un is not None else key
        if ad is not None:
            msg += f" adapted {ad:.4f}"
        print(msg)
    print(f"wrote {out / 'report.json'}")
    return EXIT_OK


def _cmd_report(args) -> int:
    from .harness import Report

    report = Report.from_json(Path(args.infile).read_text())
    if args.format == "json":
        Path(args.out).write_text(report.to_json())
    else:
        lines = ["corruption,n_instances,n_errors,unadapted_accuracy,accuracy,"
                 "unadapted_macro_recall,macro_recall,chamfer_before_median,chamfer_after_median"]
        for key, sec in report.sections.items():
            def g(name, sub=None):
                v = sec.get(name)
                if sub is not None and v is not None:
                    v = v.get(sub)
                return "" if v is None else repr(v)

            lines.append(",".join([
                key, str(sec["n_instances"]), str(sec["n_errors"]),
                g("unadapted_accuracy"), g("accuracy"),
                g("unadapted_macro_recall"), g("macro_recall"),
                g("chamfer_before", "median"), g("chamfer_after", "median"),
            ]))
        Path(args.out).write_text("\n".join(lines) + "\n")
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_denoiser_check(args) -> int:
    sched = make_polynomial_schedule(args.t_total)
    sources = [normalize_for_diffusion(_load_cloud(p))[0].points for p in args.source]
    oracle = EmpiricalPosteriorDenoiser(EmpiricalSource(sources), sched)
    n = sources[0].shape[0]
    rng = stream(args.seed, "denoiser-check")
    client = ExternalDenoiser.spawn(shlex.split(args.server_cmd), sched.T)
    lo, hi = 1, sched.T - 1
    worst = 0.0
    try:
        for i in range(args.requests):
            t = int(rng.integers(lo, hi + 1))
            x_t = rng.standard_normal((n, 3))
            want = oracle.denoise(x_t, t)
            got = client.denoise(x_t, t)
            err = float(np.max(np.abs(want - got) / np.maximum(1e-12, np.maximum(np.abs(want), np.abs(got)))))
            worst = max(worst, err)
            if not np.allclose(got, want, rtol=1e-9, atol=1e-12):
                print(f"request {i}: mismatch beyond 9 significant digits (rel err {err:.3e})")
                return EXIT_CHECK_FAILED
        print(f"{args.requests} requests matched the in-process oracle "
              f"(worst relative error {worst:.3e})")
        if args.fuzz:
            bad = _fuzz_server(client, rng, args.fuzz)
            if bad:
                return EXIT_CHECK_FAILED
            print(f"{args.fuzz} malformed lines all answered with error objects")
        return EXIT_OK
    finally:
        client.close()


def _fuzz_server(client: ExternalDenoiser, rng, count: int) -> int:
    """Throw malformed lines at the server; it must answer and stay alive."""
    junk = [
        "{", "[]", "null", "42", '"x"', '{"op":"bogus"}',
        '{"op":"denoise"}', '{"op":"denoise","id":0}',
        '{"op":"denoise","id":1,"t":99999,"points":[[0,0,0]]}',
        '{"op":"denoise","id":2,"t":1,"points":"nope"}',
        '{"op":"denoise","id":3,"t":1,"points":[[1,2],[3]]}',
        '{"op":"denoise","id":4,"t":-5,"points":[[0,0,0]]}',
    ]
    failures = 0
    for i in range(count):
        line = junk[i % len(junk)] if i % 2 == 0 else _random_junk(rng)
        client._transport.send_line(line)
        try:
            reply = client._transport.recv_line(client._timeout)
        except PcAdaptError as e:
            print(f"fuzz line {i}: server stopped answering ({e})")
            return failures + 1
        try:
            obj = json.loads(reply)
            if not (isinstance(obj, dict) and obj.get("op") == "error"):
                failures += 1
        except json.JSONDecodeError:
            failures += 1
    if failures:
        print(f"fuzz: {failures} replies were not protocol error objects")
    return failures


def _random_junk(rng) -> str:
    chars = "{}[],:\"abcdefop0123456789 "
    length = int(rng.integers(1, 60))
    line = "".join(chars[int(rng.integers(len(chars)))] for _ in range(length))
    # blank lines are skippable by convention, not malformed input
    return line if line.strip() else line + "x"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pcadapt",
                                     description="Point-cloud test-time adaptation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic labeled dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", default=",".join(("sphere", "cube", "cylinder", "cone",
                                                  "torus", "table", "pyramid", "capsule")))
    p.add_argument("--per-class", type=int, default=20)
    p.add_argument("--points", type=int, default=1024)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train-classifier", help="train the point classifier")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_train_classifier)

    p = sub.add_parser("corrupt", help="apply one corruption to an XYZ/PLY cloud")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kind", required=True)
    p.add_argument("--severity", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_corrupt)

    p = sub.add_parser("adapt", help="adapt one cloud toward a source set")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--source", nargs="+", required=True, help="source cloud files")
    p.add_argument("--config", help="AdaptConfig JSON file")
    p.add_argument("--seed", type=int)
    p.add_argument("--denoiser", choices=("empirical", "mixture", "external"),
                   default="empirical")
    p.add_argument("--server-cmd", help="external denoiser command line")
    p.add_argument("--t-total", type=int, default=500)
    p.add_argument("--trace", help="write per-step trace CSV here")
    p.set_defaults(func=_cmd_adapt)

    p = sub.add_parser("run", help="run the full benchmark pipeline")
    p.add_argument("--config", required=True, help="PipelineConfig JSON file")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("report", help="export a report as CSV or JSON")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("denoiser-check", help="wire-protocol conformance check")
    p.add_argument("--server-cmd", required=True)
    p.add_argument("--source", nargs="+", required=True)
    p.add_argument("--requests", type=int, default=100)
    p.add_argument("--fuzz", type=int, default=0)
    p.add_argument("--t-total", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_denoiser_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ProtocolError, RemoteFailure, Timeout) as e:
        print(f"protocol error: {e}", file=sys.stderr)
        return EXIT_PROTOCOL
    except (ConfigError, ShapeMismatch, FileNotFoundError, json.JSONDecodeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except PcAdaptError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
