"""Command-line entry point: ``strassen-lab <command> ...``.

Exit codes: 0 success, 1 a verification or check failed, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bench, constructions, data, splitvc, trainer
from .nn import gradcheck_mechanism

RANDOM_SIZES = {"funccomp": (2, 10), "binrel": (2, 6), "match3": (3, 12), "quotient": (2, 6)}
LEMMAS = {"ind": "Ind", "sum2": "Sum2", "disj": "Disj"}


class UsageError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="strassen-lab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a JSONL dataset")
    g.add_argument("task", choices=("funccomp", "binrel", "match3", "quotient", "disj"))
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--count", type=int, default=100)
    g.add_argument("--out", help="output file (default: stdout)")
    g.add_argument("--nmin", type=int)
    g.add_argument("--nmax", type=int)
    g.add_argument("--prob", type=float, help="Bernoulli probability (binrel, quotient)")
    g.add_argument("--modulus", type=int, help="Match3 modulus")
    g.add_argument("--p", help="disj: first bit string")
    g.add_argument("--q", help="disj: second bit string")

    v = sub.add_parser("verify", help="check a hand-set construction against the oracle")
    v.add_argument("task", choices=constructions.TASK_TAGS)
    src = v.add_mutually_exclusive_group(required=True)
    src.add_argument("--instances", help="JSONL file of stored instances")
    src.add_argument("--random", type=int, metavar="N", help="N random theory instances")
    v.add_argument("--size", type=int, help="fixed n (funccomp, match3) or m (grids)")
    v.add_argument("--modulus", type=int, help="Match3 modulus (default 2n-2)")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--path", choices=("naive", "fast"), default="naive")

    s = sub.add_parser("splitvc", help="splitting VC dimension")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--table", help="truth-table file")
    src.add_argument("--lemma", choices=tuple(LEMMAS))
    s.add_argument("--param", type=int, help="lemma size parameter")
    s.add_argument("--exhaustive", action="store_true", help="also run the exhaustive search for a lemma")
    s.add_argument("--budget", type=int, default=splitvc.DEFAULT_BUDGET)

    c = sub.add_parser("gradcheck", help="finite-difference gradient check")
    c.add_argument("--mechanism", choices=("standard", "triangular", "third_order", "strassen", "layer"),
                   required=True)
    c.add_argument("--n", type=int, default=4)
    c.add_argument("--d", type=int, default=3)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--points", type=int, default=1)
    c.add_argument("--tol", type=float, default=1e-5)

    t = sub.add_parser("train", help="train a one-layer model")
    t.add_argument("--config", help="key=value config file")
    t.add_argument("--data", help="JSONL dataset (default: generate one)")
    t.add_argument("--count", type=int, help="generated dataset size")
    t.add_argument("--data-seed", type=int)
    t.add_argument("--nmin", type=int)
    t.add_argument("--nmax", type=int)
    for name in ("task", "mechanism", "metrics_path", "checkpoint_path"):
        t.add_argument("--" + name.replace("_", "-"), dest=name)
    for name in ("d", "heads", "batch_size", "epochs", "seed"):
        t.add_argument("--" + name.replace("_", "-"), dest=name, type=int)
    for name in ("lr", "dropout", "weight_decay", "val_fraction", "stop_at_accuracy"):
        t.add_argument("--" + name.replace("_", "-"), dest=name, type=float)

    b = sub.add_parser("bench", help="forward-pass timing sweep")
    b.add_argument("--mechanism", required=True,
                   choices=("standard", "triangular", "third_order", "strassen", "matmul"))
    b.add_argument("--path", default="naive", choices=("naive", "fast", "strassen", "blas"))
    b.add_argument("--n-list", type=_int_list, default=[16, 32, 64])
    b.add_argument("--d-list", type=_int_list, default=[8])
    b.add_argument("--reps", type=int, default=5)
    b.add_argument("--threads", type=int, default=1, help="BLAS threads (0 = library default)")
    b.add_argument("--out", help=f"CSV path (default: ${bench.OUT_ENV}/bench.csv)")
    return ap


def _cmd_gen(args) -> int:
    if args.task == "disj":
        if args.p is None or args.q is None:
            raise UsageError("gen disj needs --p and --q")
        instances = [data.build_disj_instance(args.p, args.q)]
    else:
        kw = {}
        if args.nmin is not None:
            kw["nmin"] = args.nmin
        if args.nmax is not None:
            kw["nmax"] = args.nmax
        if args.prob is not None:
            if args.task not in ("binrel", "quotient"):
                raise UsageError("--prob applies to binrel and quotient")
            kw["prob"] = args.prob
        if args.modulus is not None:
            if args.task != "match3":
                raise UsageError("--modulus applies to match3")
            kw["modulus"] = args.modulus
        if args.task == "match3" and args.count % 4:
            raise UsageError("match3 dataset size must be a multiple of 4")
        instances = data.generate(args.task, args.seed, args.count, **kw)
    if args.out:
        data.write_jsonl(instances, args.out)
    else:
        for inst in instances:
            sys.stdout.write(inst.to_json() + "\n")
    return 0


def _cmd_verify(args) -> int:
    if args.instances:
        insts = [i for i in data.read_jsonl(args.instances) if i.task == args.task]
        if not insts:
            raise UsageError(f"no {args.task} instances in {args.instances}")
    else:
        rng = np.random.default_rng(args.seed)
        lo, hi = RANDOM_SIZES[args.task]
        insts = []
        for _ in range(args.random):
            size = args.size or int(rng.integers(lo, hi + 1))
            insts += constructions.random_instances(args.task, size, 1, rng, modulus=args.modulus)
    report = constructions.verify_construction(args.task, None, insts, strassen_path=args.path)
    print(report.to_json())
    return 0 if report.ok else 1


def _cmd_splitvc(args) -> int:
    if args.table:
        f = splitvc.parse_truth_table(Path(args.table).read_text())
        try:
            rep = splitvc.split_vc(f, args.budget)
        except splitvc.BudgetExceeded as exc:
            print(json.dumps({"error": str(exc)}))
            return 1
        print(rep.to_json())
        return 0 if rep.validate(f) else 1
    if args.param is None:
        raise UsageError("--lemma needs --param")
    tag = LEMMAS[args.lemma]
    cert = splitvc.lemma_certificate(tag, args.param)
    out = {
        "lemma": tag, "param": args.param, "passed": cert.passed,
        "value": len(cert.rows) if cert.passed else None,
        "positions": list(cert.positions),
        "rows": [list(r) for r in cert.rows],
        "certificate": [{"pattern": list(p), "column": list(c)} for p, c in cert.columns.items()],
    }
    ok = cert.passed
    if args.exhaustive:
        f = splitvc.lemma_function(tag, args.param)
        try:
            rep = splitvc.split_vc(f, args.budget)
        except splitvc.BudgetExceeded as exc:
            print(json.dumps({"error": str(exc)}))
            return 1
        out["exhaustive"] = json.loads(rep.to_json())
        ok = ok and rep.validate(f) and rep.value >= len(cert.rows)
    print(json.dumps(out))
    return 0 if ok else 1


def _cmd_gradcheck(args) -> int:
    errs = [gradcheck_mechanism(args.mechanism, args.n, args.d, seed=args.seed + k) for k in range(args.points)]
    worst = max(errs)
    print(json.dumps({"mechanism": args.mechanism, "n": args.n, "d": args.d, "points": args.points,
                      "max_relative_error": worst}))
    return 0 if worst <= args.tol else 1


TRAIN_DATA_KEYS = ("data", "count", "data_seed", "nmin", "nmax")


def _cmd_train(args) -> int:
    values = trainer.load_config_file(args.config) if args.config else {}
    for key in TRAIN_DATA_KEYS + tuple(f for f in trainer.TrainConfig.__dataclass_fields__):
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag              # flags win over the file
    extra = {k: values.pop(k) for k in TRAIN_DATA_KEYS if k in values}
    try:
        config = trainer.TrainConfig.from_mapping(values)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    if extra.get("data"):
        dataset = data.read_jsonl(extra["data"])
    else:
        kw = {k: int(extra[k]) for k in ("nmin", "nmax") if k in extra}
        count = int(extra.get("count", 1000))
        dataset = data.generate(config.task, int(extra.get("data_seed", config.seed)), count, **kw)
    result = trainer.train_model(config, dataset)
    last = result.metrics[-1]
    print(json.dumps({"task": config.task, "mechanism": config.mechanism, "epochs": last.epoch,
                      "train_loss": last.train_loss, "train_accuracy": last.train_accuracy,
                      "val_accuracy": last.val_accuracy, "majority_baseline": result.baseline}))
    return 0


def _cmd_bench(args) -> int:
    records = bench.bench_forward(args.mechanism, args.path, args.n_list, args.d_list, reps=args.reps,
                                  threads=args.threads or None)
    out = Path(args.out) if args.out else bench.output_dir() / "bench.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    bench.write_csv(records, out)
    print(out)
    return 0 if all(r.status == "ok" for r in records) else 1


COMMANDS = {"gen": _cmd_gen, "verify": _cmd_verify, "splitvc": _cmd_splitvc,
            "gradcheck": _cmd_gradcheck, "train": _cmd_train, "bench": _cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:          # argparse: 0 for --help, 2 for usage errors
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, data.GenerationError, ValueError, FileNotFoundError) as exc:
        print(f"strassen-lab {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
