"""Command-line entry point: ``evpkit <command> ...``.

Every artifact written gets a sibling ``<artifact>.manifest.json`` recording
how it was produced; ``evpkit rerun <manifest>`` replays it.

Exit codes: 0 success, 2 usage or configuration error, 3 numeric failure
(diverged training).
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import math
import os
import sys
import time
import warnings
from pathlib import Path
from typing import Any, Callable, Sequence

from . import __version__
from ._io import atomic_write_text
from .curve import NonMonotoneCurveWarning, NormLabel, read_curve, write_curve
from .errors import DivergedLoss, EvpError, InvalidConfig
from .lab import scenario
from .lab.data import GeneratorSpec, Split, generate_dataset, load_spec
from .lab.model import MlpModel
from .lab.pgd import PgdConfig
from .lab.sweep import budget_sweep, mean_min_perturbation
from .lab.train import TrainConfig, accuracy, train
from .metrics import (
    MetricReport,
    adversarial_accuracy_report,
    ara,
    cohens_d_threshold,
    evp_refined,
    evp_trapezoid,
    interval_sum_robustness,
    roby,
)
from .sampling import adaptive_grid, check_step_size, convergence_study, uniform_grid

SEED_ENV = "EVPKIT_SEED"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class UsageError(EvpError):
    pass


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


# -- parsing helpers ---------------------------------------------------------

def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    if text.strip() == "":
        return []
    try:
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _norm(text: str) -> NormLabel:
    t = text.strip().lower()
    if t in ("l2", "2"):
        return NormLabel.L2
    if t in ("linf", "inf", "l-inf"):
        return NormLabel.LINF
    raise argparse.ArgumentTypeError(f"unknown norm {text!r} (use l2 or linf)")


def _load_data(path: str, split: Split):
    spec, declared = load_spec(path)
    if declared is not None and declared is not split:
        raise InvalidConfig(f"{path} declares split {declared.value}, this command needs {split.value}")
    return spec, generate_dataset(spec, split)


# -- manifests ---------------------------------------------------------------

class Run:
    """Collects what a command read and wrote, then emits manifests."""

    def __init__(self, command: str, argv: Sequence[str], params: dict[str, Any]):
        self.command = command
        self.argv = list(argv)
        self.params = params
        self.inputs: list[str] = []
        self.outputs: list[str] = []
        self.seeds: dict[str, int] = {}
        seed_env = os.environ.get(SEED_ENV)
        self.env = {} if seed_env is None else {SEED_ENV: seed_env}
        self.started = time.perf_counter()

    def write(self, path: str | Path, text: str) -> None:
        atomic_write_text(path, text)
        self.outputs.append(str(path))

    def finish(self) -> None:
        doc = {
            "command": self.command,
            "argv": self.argv,
            "params": self.params,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "seeds": self.seeds,
            "env": self.env,
            "version": __version__,
            "duration_s": time.perf_counter() - self.started,
        }
        text = json.dumps(doc, indent=2) + "\n"
        for out in self.outputs:
            atomic_write_text(manifest_path(out), text)


def manifest_path(artifact: str | Path) -> Path:
    p = Path(artifact)
    return p.with_name(p.name + ".manifest.json")


def _params(args: argparse.Namespace) -> dict[str, Any]:
    out = {}
    for k, v in vars(args).items():
        if k == "func":
            continue
        out[k] = v.value if isinstance(v, NormLabel) else v
    return out


# -- commands ----------------------------------------------------------------

def cmd_data(args, run: Run) -> None:
    if args.preset == "scenario":
        spec = scenario.DATA_SPEC
    else:
        noise = args.noise[0] if len(args.noise) == 1 else tuple(args.noise)
        spec = GeneratorSpec(
            kind=args.kind,
            classes=args.classes,
            per_class=args.per_class,
            seed=default_seed() if args.seed is None else args.seed,
            noise=noise,
            radius=args.radius,
        )
    generate_dataset(spec, Split.TRAIN)  # reject bad specs before writing
    run.seeds["data"] = spec.seed
    doc = spec.to_dict()
    if args.split:
        doc["split"] = Split(args.split).value
    run.write(args.out, json.dumps(doc, indent=2) + "\n")


def cmd_train(args, run: Run) -> None:
    seed = default_seed() if args.seed is None else args.seed
    model_seed = seed if args.model_seed is None else args.model_seed
    run.seeds.update(train=seed, model_init=model_seed)
    run.inputs.append(args.data)
    spec, data = _load_data(args.data, Split.TRAIN)
    run.seeds["data"] = spec.seed
    adv = None
    if args.adv_eps is not None:
        step = args.adv_step if args.adv_step is not None else args.adv_eps / 5
        adv = PgdConfig(args.adv_norm, args.adv_eps, step, args.adv_iters, seed, False)
    cfg = TrainConfig(args.epochs, args.batch_size, args.lr, seed, adv)
    model = train(model_seed, data, cfg, hidden=tuple(args.hidden))
    run.write(args.out, model.to_json())
    print(f"train accuracy {accuracy(model, data):.4f}", file=sys.stderr)


def _plan(args):
    if args.grid_from is None:
        return uniform_grid(args.max_eps, args.delta)
    if args.points is None or args.grid_tau is None:
        raise UsageError("--grid-from needs --points and --grid-tau")
    return adaptive_grid(read_curve(args.grid_from), args.grid_tau, args.points)


def cmd_attack(args, run: Run) -> None:
    if args.grid_from is None:
        check_step_size(args.step, args.delta)
    plan = _plan(args)
    check_step_size(args.step, plan.min_spacing)
    seed = default_seed() if args.seed is None else args.seed
    run.seeds["pgd"] = seed
    run.inputs += [args.model, args.data] + ([args.grid_from] if args.grid_from else [])
    model = MlpModel.load(args.model)
    spec, data = _load_data(args.data, Split.TEST)
    run.seeds["data"] = spec.seed
    template = PgdConfig(args.norm, 0.0, args.step, args.iterations, seed, args.random_start)
    curve = budget_sweep(model, data, plan, template, source=args.source or Path(args.model).stem)
    write_curve(curve, args.out)
    run.outputs.append(str(args.out))


def _tau(args) -> float:
    if args.tau_from_cohens_d:
        if args.classes is None:
            raise UsageError("--tau-from-cohens-d needs --classes")
        return cohens_d_threshold(args.classes, args.d).tau
    if args.tau is None:
        raise UsageError(f"metric {args.name} needs --tau or --tau-from-cohens-d")
    return args.tau


def cmd_metric(args, run: Run) -> None:
    name = args.name
    if name == "min-perturbation":
        if not (args.model and args.data):
            raise UsageError("min-perturbation needs --model and --data")
        run.inputs += [args.model, args.data]
        model = MlpModel.load(args.model)
        _, data = _load_data(args.data, Split.TEST)
        report = mean_min_perturbation(
            model, data, args.norm, args.search_step, args.max_budget, source=Path(args.model).stem
        )
    else:
        if args.curve is None:
            raise UsageError(f"metric {name} needs --curve")
        run.inputs.append(args.curve)
        curve = read_curve(args.curve)
        if name in ("evp", "evp-refined", "interval-sum", "roby"):
            tau = _tau(args)
            if name == "evp":
                report = evp_trapezoid(curve, tau)
            elif name == "evp-refined":
                report = evp_refined(curve, tau)
            elif name == "interval-sum":
                report = interval_sum_robustness(curve, tau)
            else:
                if args.bound is None:
                    raise UsageError("roby needs --bound")
                report = roby(curve, tau, args.bound)
            if args.tau_from_cohens_d:
                report = MetricReport(
                    report.metric,
                    report.value,
                    {**report.params, "tau_from": "cohens_d", "classes": args.classes, "d": args.d},
                    report.curve_source,
                )
        elif name == "ara":
            if args.classes is None:
                raise UsageError("ara needs --classes")
            report = ara(curve, args.classes)
        else:
            if args.epsilon is None:
                raise UsageError("adv-accuracy needs --epsilon")
            report = adversarial_accuracy_report(curve, args.epsilon)
    text = report.to_json()
    if args.out:
        run.write(args.out, text)
    sys.stdout.write(text)


def tau_grid(lo: float, hi: float, step: float) -> list[float]:
    """Inclusive grid ``lo, lo+step, ...  <= hi``, rounded to kill float drift."""
    if not (0 < lo <= hi <= 1) or not step > 0:
        raise UsageError("need 0 < tau-min <= tau-max <= 1 and tau-step > 0")
    n = int(math.floor((hi - lo) / step + 1e-9))
    return [round(lo + k * step, 12) for k in range(n + 1)]


def compare_rows(curves, names, taus, variant="trapezoid") -> list[tuple[str, str, float, float, str]]:
    """Long-form ``(model, metric, tau, value, best_model)`` rows.

    ``best_model`` is the model with the largest EVP at that tau, the first
    listed on ties, and ``none`` when every EVP is zero.
    """
    fn = evp_trapezoid if variant == "trapezoid" else evp_refined
    label = "evp" if variant == "trapezoid" else "evp-refined"
    rows = []
    for tau in taus:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NonMonotoneCurveWarning)
            values = [fn(c, tau).value for c in curves]
        top = max(values)
        best = "none" if top <= 0 else names[values.index(top)]
        rows.extend((n, label, tau, v, best) for n, v in zip(names, values))
    return rows


def rows_to_csv(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def cmd_compare(args, run: Run) -> None:
    names = args.names or [Path(p).stem for p in args.curves]
    if len(names) != len(args.curves):
        raise UsageError("--names must match the number of curves")
    if len(set(names)) != len(names):
        raise UsageError(f"model names must be distinct: {names}")
    run.inputs += list(args.curves)
    curves = [read_curve(p) for p in args.curves]
    taus = tau_grid(args.tau_min, args.tau_max, args.tau_step)
    rows = compare_rows(curves, names, taus, args.variant)
    run.write(args.out, rows_to_csv(("model", "metric", "tau", "value", "best_model"), rows))


def cmd_converge(args, run: Run) -> None:
    deltas = args.deltas
    for d in deltas:
        check_step_size(args.step, d)
    seed = default_seed() if args.seed is None else args.seed
    run.seeds["pgd"] = seed
    run.inputs += [args.model, args.data]
    model = MlpModel.load(args.model)
    spec, data = _load_data(args.data, Split.TEST)
    run.seeds["data"] = spec.seed
    template = PgdConfig(args.norm, 0.0, args.step, args.iterations, seed, False)
    src = Path(args.model).stem

    def sweep_fn(plan):
        return budget_sweep(model, data, plan, template, source=src)

    report = convergence_study(sweep_fn, args.tau, args.max_eps, deltas, args.tolerance, args.step)
    run.write(args.out, report.to_csv())
    print(f"stable_at {report.stable_at}", file=sys.stderr)


def cmd_rerun(args, run: Run | None) -> int:
    doc = json.loads(Path(args.manifest).read_text())
    argv = doc.get("argv")
    if not isinstance(argv, list) or not argv or argv[0] == "rerun":
        raise UsageError(f"{args.manifest} does not hold a replayable command")
    env_seed = doc.get("env", {}).get(SEED_ENV)
    with _env(SEED_ENV, env_seed):
        return main(argv)


@contextlib.contextmanager
def _env(key: str, value: str | None):
    old = os.environ.get(key)
    if value is None:
        os.environ.pop(key, None)
    else:
        os.environ[key] = value
    try:
        yield
    finally:
        if old is None:
            os.environ.pop(key, None)
        else:
            os.environ[key] = old


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="evpkit", description="Robustness curves and viable-performance metrics.")
    p.add_argument("--version", action="version", version=f"evpkit {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("data", help="write a dataset generator spec")
    d.add_argument("--out", required=True)
    d.add_argument("--preset", choices=["scenario"])
    d.add_argument("--kind", default="GaussianBlobs", choices=["GaussianBlobs", "ConcentricRings"])
    d.add_argument("--classes", type=int, default=2)
    d.add_argument("--per-class", type=int, default=200)
    d.add_argument("--seed", type=int)
    d.add_argument("--noise", type=_float_list, default=[0.3], help="scalar or per-dimension list")
    d.add_argument("--radius", type=float, default=1.0)
    d.add_argument("--split", choices=["Train", "Test"])
    d.set_defaults(func=cmd_data)

    t = sub.add_parser("train", help="train an MLP, optionally adversarially")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--epochs", type=int, default=50)
    t.add_argument("--seed", type=int)
    t.add_argument("--model-seed", type=int, help="initialization seed (default: --seed)")
    t.add_argument("--hidden", type=_int_list, default=[32], help="comma-separated hidden widths; empty for linear")
    t.add_argument("--lr", type=float, default=0.1)
    t.add_argument("--batch-size", type=int, default=32)
    t.add_argument("--adv-eps", type=float)
    t.add_argument("--adv-step", type=float)
    t.add_argument("--adv-iters", type=int)
    t.add_argument("--adv-norm", type=_norm, default=NormLabel.L2)
    t.set_defaults(func=cmd_train)

    a = sub.add_parser("attack", help="sweep PGD budgets and write an accuracy curve")
    a.add_argument("--model", required=True)
    a.add_argument("--data", required=True)
    a.add_argument("--out", required=True)
    a.add_argument("--norm", type=_norm, default=NormLabel.L2)
    a.add_argument("--max-eps", type=float, default=1.0)
    a.add_argument("--delta", type=float, default=0.1)
    a.add_argument("--step", type=float, default=0.005)
    a.add_argument("--iterations", type=int)
    a.add_argument("--seed", type=int)
    a.add_argument("--random-start", action="store_true")
    a.add_argument("--grid-from", help="pilot curve for an adaptive grid")
    a.add_argument("--points", type=int, help="adaptive grid size")
    a.add_argument("--grid-tau", type=float, help="threshold the adaptive grid refines around")
    a.add_argument("--source")
    a.set_defaults(func=cmd_attack)

    m = sub.add_parser("metric", help="compute one metric")
    m.add_argument(
        "name",
        choices=["evp", "evp-refined", "interval-sum", "ara", "roby", "adv-accuracy", "min-perturbation"],
    )
    m.add_argument("--curve")
    m.add_argument("--tau", type=float)
    m.add_argument("--tau-from-cohens-d", action="store_true")
    m.add_argument("--d", type=float, default=0.5)
    m.add_argument("--classes", type=int)
    m.add_argument("--bound", type=float)
    m.add_argument("--epsilon", type=float)
    m.add_argument("--model")
    m.add_argument("--data")
    m.add_argument("--norm", type=_norm, default=NormLabel.L2)
    m.add_argument("--search-step", type=float, default=0.05)
    m.add_argument("--max-budget", type=float, default=2.0)
    m.add_argument("--out")
    m.set_defaults(func=cmd_metric)

    c = sub.add_parser("compare", help="EVP of several curves over a tau sweep")
    c.add_argument("--curves", nargs="+", required=True)
    c.add_argument("--names", nargs="+")
    c.add_argument("--tau-min", type=float, default=0.05)
    c.add_argument("--tau-max", type=float, default=0.99)
    c.add_argument("--tau-step", type=float, default=0.01)
    c.add_argument("--variant", choices=["trapezoid", "refined"], default="trapezoid")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_compare)

    v = sub.add_parser("converge", help="EVP stability under grid refinement")
    v.add_argument("--model", required=True)
    v.add_argument("--data", required=True)
    v.add_argument("--out", required=True)
    v.add_argument("--deltas", type=_float_list, required=True)
    v.add_argument("--tau", type=float, required=True)
    v.add_argument("--tolerance", type=float, default=0.01)
    v.add_argument("--max-eps", type=float, default=1.0)
    v.add_argument("--norm", type=_norm, default=NormLabel.L2)
    v.add_argument("--step", type=float, default=0.005)
    v.add_argument("--iterations", type=int)
    v.add_argument("--seed", type=int)
    v.set_defaults(func=cmd_converge)

    r = sub.add_parser("rerun", help="replay the command recorded in a manifest")
    r.add_argument("manifest")
    r.set_defaults(func=cmd_rerun)
    return p


def _fail(code: int, msg: str) -> int:
    print(f"evpkit: error: {msg}", file=sys.stderr)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    func: Callable = args.func
    try:
        if args.command == "rerun":
            return func(args, None)
        run = Run(args.command, argv, _params(args))
        func(args, run)
        run.finish()
        return EXIT_OK
    except DivergedLoss as exc:
        return _fail(EXIT_NUMERIC, f"diverged: {exc}")
    except EvpError as exc:
        return _fail(EXIT_CONFIG, f"{type(exc).__name__}: {exc}")
    except FileNotFoundError as exc:
        return _fail(EXIT_CONFIG, f"file not found: {exc.filename}")
    except (OSError, json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
        return _fail(EXIT_CONFIG, f"{type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())
