"""Command-line interface: ``mob {fetch,benchmark,train,predict,explain}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .data import DataError, default_cache_dir, fetch_openml, read_feature_csv
from .evaluation import run_benchmark
from .multioutput import MultiOutputModel, Variant, predict_multioutput, train
from .report import dependency_matrix, render_heatmap_svg, render_results_table

logger = logging.getLogger("mob")


def _write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


def cmd_fetch(args) -> int:
    cache = Path(args.cache_dir) if args.cache_dir else default_cache_dir()
    text = fetch_openml(args.openml_id, cache)
    _write_text(args.out, text)
    logger.info("wrote %s", args.out)
    return 0


def cmd_benchmark(args) -> int:
    cfg = load_config(args.config)
    dataset = cfg.load_dataset()
    logger.info("benchmark on %s: n=%d d=%d m=%d", dataset.name, dataset.n, dataset.d, dataset.m)
    result = run_benchmark(dataset, cfg.benchmark_config())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = dataset.name or "dataset"
    _write_text(out / f"{stem}_result.json", result.to_json() + "\n")
    table = render_results_table(result)
    _write_text(out / f"{stem}_table.csv", table)
    sys.stdout.write(table)
    for a, secs in result.durations.items():
        logger.info("%s: %.1fs", a, secs)
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    dataset = cfg.load_dataset()
    model = train(Variant(args.algo), dataset, cfg.forest, cfg.boost, cfg.inner_k, cfg.seed)
    _write_text(args.out, _dump_json(model.to_dict()))
    logger.info("wrote %s model to %s", args.algo, args.out)
    return 0


def _load_model(path) -> MultiOutputModel:
    return MultiOutputModel.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def cmd_predict(args) -> int:
    model = _load_model(args.model)
    X = read_feature_csv(args.data, model.schema)
    pred = predict_multioutput(model, X)
    header, cols = [], []
    for j, (name, kind) in enumerate(zip(model.schema.target_names, model.schema.target_kinds)):
        header.append(name)
        cols.append(pred.response[:, j])
        if kind.value == "binary":
            header.append(f"{name}_prob")
            cols.append(pred.prob[:, j])
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(X.shape[0]):
            w.writerow([repr(float(c[i])) for c in cols])
    return 0


def cmd_explain(args) -> int:
    model = _load_model(args.model)
    if model.variant is not Variant.CMOB:
        raise ValueError("explain requires a CMOB model")
    matrix = dependency_matrix(model)
    if args.out_json:
        _write_text(args.out_json, json.dumps(matrix.to_dict(), indent=2, sort_keys=True) + "\n")
    if args.out_svg:
        _write_text(args.out_svg, render_heatmap_svg(matrix) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mob", description="Multi-output prediction with CMOB, IM and STA.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fetch", help="download an OpenML dataset as ARFF")
    p.add_argument("--openml-id", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--cache-dir", help="overrides MOB_CACHE_DIR")
    p.set_defaults(func=cmd_fetch)

    p = sub.add_parser("benchmark", help="nested cross-validation benchmark")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="results")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("train", help="train a model on the full dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--algo", choices=[v.value for v in Variant], required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict all targets for the rows of a CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("explain", help="export the target-dependency matrix of a CMOB model")
    p.add_argument("--model", required=True)
    p.add_argument("--out-json")
    p.add_argument("--out-svg")
    p.set_defaults(func=cmd_explain)
    return parser


def run_cli(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on usage errors
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ConfigError, DataError, ValueError, OSError, ConnectionError, KeyError) as exc:
        print(f"mob {args.command}: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
