"""Command line entry point: ``gsheaf {gen,train,sweep,energy,verify}``.

Exit codes: 0 on success, 1 when training hit a numeric failure (outputs
are still written and the affected rows flagged), 2 for usage errors and
invalid inputs.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import experiments
from .data import Dataset, load_weather, synthesize
from .errors import GSheafError, NumericError
from .models import MODEL_NAMES, make_model

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2

# CLI flag -> estimator keyword; only keywords a model accepts are forwarded
HYPER_FLAGS = {
    "layers": "layers", "hidden": "hidden", "stalk_dim": "stalk_dim", "lr": "lr", "epochs": "epochs",
    "sinkhorn_eps": "sinkhorn_eps", "sinkhorn_iters": "sinkhorn_iters",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _csv_list(kind):
    def parse(text):
        try:
            return [kind(x) for x in text.split(",") if x.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad list {text!r}") from None
    return parse


def _period(text):
    start, sep, end = text.partition(":")
    if not sep:
        raise argparse.ArgumentTypeError("period must look like START:END (either side may be empty)")
    return (start or None, end or None)


def _add_hyper(p, with_layers=True):
    if with_layers:
        p.add_argument("--layers", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--stalk-dim", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--sinkhorn-eps", type=float)
    p.add_argument("--sinkhorn-iters", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gsheaf", description="Gaussian sheaf networks: data, training and diagnostics.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="write a dataset JSON")
    g.add_argument("--generator", default="BA", choices=["BA", "WS", "ba", "ws"])
    g.add_argument("--n", type=int, default=200)
    g.add_argument("--m", type=int, default=25)
    g.add_argument("--k", type=int, default=10)
    g.add_argument("--p", type=float, default=0.1)
    g.add_argument("--s", type=int, default=2)
    g.add_argument("--n-target", type=int, default=30)
    g.add_argument("--df", type=float)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--stations", help="weather stations CSV (switches to the weather loader)")
    g.add_argument("--measurements", help="weather measurements CSV")
    g.add_argument("--radius-km", type=float, default=200.0)
    g.add_argument("--input-columns", type=_csv_list(str), default=["tmin", "tmax"])
    g.add_argument("--target-columns", type=_csv_list(str))
    g.add_argument("--input-period", type=_period)
    g.add_argument("--target-period", type=_period)
    g.add_argument("--out", required=True)

    t = sub.add_parser("train", help="train one model on one dataset")
    t.add_argument("--dataset", required=True)
    t.add_argument("--model", required=True, choices=MODEL_NAMES)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out-dir", required=True)
    _add_hyper(t)

    s = sub.add_parser("sweep", help="models x seeds grid")
    s.add_argument("--dataset", required=True)
    s.add_argument("--model", required=True, action="append", choices=MODEL_NAMES,
                   help="repeat for several models")
    s.add_argument("--seeds", type=int, default=10)
    s.add_argument("--base-seed", type=int, default=0)
    s.add_argument("--workers", type=int, help="worker processes (capped by GSL_THREADS)")
    s.add_argument("--out-dir", required=True)
    _add_hyper(s)

    e = sub.add_parser("energy", help="depth sweep with per-layer Dirichlet energies")
    e.add_argument("--dataset", required=True)
    e.add_argument("--model", action="append", choices=MODEL_NAMES,
                   help=f"repeat for several models (default: {', '.join(experiments.ENERGY_MODELS)})")
    e.add_argument("--depths", type=_csv_list(int), default=list(experiments.DEPTHS))
    e.add_argument("--seeds", type=int, default=1)
    e.add_argument("--base-seed", type=int, default=0)
    e.add_argument("--workers", type=int)
    e.add_argument("--out-dir", required=True)
    _add_hyper(e, with_layers=False)

    v = sub.add_parser("verify", help="run the invariant and property suite")
    v.add_argument("--check", action="append", choices=sorted(_check_names()),
                   help="run only these checks (repeatable)")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--json", help="also write the report here")
    return parser


def _check_names():
    from .verify import CHECKS
    return CHECKS


def model_params(name: str, args) -> dict:
    accepted = make_model(name).get_params()
    out = {}
    for flag, key in HYPER_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None and key in accepted:
            out[key] = value
    return out


def _cmd_gen(args) -> int:
    if bool(args.stations) != bool(args.measurements):
        raise GSheafError("--stations and --measurements must be given together")
    if args.stations:
        ds = load_weather(args.stations, args.measurements, radius_km=args.radius_km,
                          input_columns=args.input_columns, target_columns=args.target_columns,
                          input_period=args.input_period, target_period=args.target_period, seed=args.seed)
    else:
        ds = synthesize(args.generator, n=args.n, m=args.m, k=args.k, p=args.p, s=args.s,
                        n_target=args.n_target, df=args.df, seed=args.seed)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    ds.save(args.out)
    print(f"wrote {args.out}: {ds.n} nodes, {ds.graph.n_edges} edges")
    return EXIT_OK


def _cmd_train(args) -> int:
    ds = Dataset.load(args.dataset)
    est = make_model(args.model, seed=args.seed, **model_params(args.model, args))
    t0 = time.perf_counter()
    est.fit(ds)
    res = est.evaluate(ds, "test")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    est.save(out / "checkpoint.json")
    est.write_history(out / "history.csv")
    metrics = {"model": args.model, "dataset": Path(args.dataset).stem, "seed": args.seed,
               "epochs": est.n_epochs_, "seconds": time.perf_counter() - t0, "aborted": est.aborted_,
               "test": res.to_dict()}
    (out / "metrics.json").write_text(json.dumps(metrics, indent=1))
    print(f"{args.model} seed {args.seed}: test W2 {res.mean:.6g} +/- {res.sd:.6g} after {est.n_epochs_} epochs")
    if est.aborted_:
        print("training stopped early on a numeric failure", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _cmd_sweep(args) -> int:
    ds = Dataset.load(args.dataset)
    models = list(dict.fromkeys(args.model))
    params = {m: model_params(m, args) for m in models}
    records = []
    for m in models:
        records += experiments.sweep(ds, [m], seeds=args.seeds, base_seed=args.base_seed, params=params[m],
                                     dataset_id=Path(args.dataset).stem, workers=args.workers)
    experiments.write_sweep(records, args.out_dir)
    for row in experiments.summarize(records):
        print(f"{row['model']:>14}  {row['table']}  ({row['runs']} runs)")
    failed = [r for r in records if not r.ok]
    if failed:
        print(f"{len(failed)} run(s) failed numerically; see status column", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _cmd_energy(args) -> int:
    ds = Dataset.load(args.dataset)
    models = list(dict.fromkeys(args.model or experiments.ENERGY_MODELS))
    if not args.depths or min(args.depths) < 1:
        raise GSheafError("--depths must be positive integers")
    runs, w2, energy = [], [], []
    for m in models:
        res = experiments.energy_sweep(ds, [m], depths=args.depths, seeds=args.seeds, base_seed=args.base_seed,
                                       params=model_params(m, args), workers=args.workers)
        runs += res["runs"]
        w2 += res["w2"]
        energy += res["energy"]
    experiments.write_energy({"runs": runs, "w2": w2, "energy": energy}, args.out_dir)
    for row in w2:
        print(f"{row['model']:>14}  depth {row['depth']}  W2 {row['mean_w2']:.6g}")
    if not all(r["ok"] for r in runs):
        print("some runs stopped on a numeric failure", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _cmd_verify(args) -> int:
    from .verify import run_all
    results = run_all(args.check, seed=args.seed, echo=print)
    passed = all(r.passed for r in results)
    print(f"{sum(r.passed for r in results)}/{len(results)} checks passed")
    if args.json:
        Path(args.json).write_text(json.dumps([r.to_dict() for r in results], indent=1))
    return EXIT_OK if passed else EXIT_NUMERIC


COMMANDS = {"gen": _cmd_gen, "train": _cmd_train, "sweep": _cmd_sweep, "energy": _cmd_energy,
            "verify": _cmd_verify}


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except NumericError as exc:
        print(f"gsheaf: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (GSheafError, OSError, json.JSONDecodeError) as exc:
        print(f"gsheaf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
