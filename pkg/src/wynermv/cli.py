"""Command line harness: data generation, solves, sweeps and evaluation.

Every output file is byte-deterministic for a given invocation; progress
messages with timestamps go to stderr only.  Existing files are never
overwritten silently: identical content is treated as already done,
conflicting content is an error unless --force is given.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .evaluation import best_label_accuracy, cluster_predict
from .info_measures import JointPmf, load_joint, mutual_information
from .model_state import Encoder
from .records import RunRecord, load_record, render_plane_csv
from .representation_solvers import AdmmConfig, solve_admm, solve_baseline
from .synthetic_data import (
    DatasetSpec,
    compose_dataset_joint,
    draw_samples,
    empirical_joint,
    load_samples_csv,
)
from .variational_solver import VariationalConfig, run_to_record, solve_variational

log = logging.getLogger("wynermv")

THREADS_ENV = "WYNER_MV_THREADS"
SOLVERS = ("admm", "baseline", "variational")


def derive_seed(base_seed: int, solver: str, grid_index: int, trial: int) -> int:
    """Stable per-run seed from the sweep coordinates (never Python hash())."""
    text = f"{base_seed}:{solver}:{grid_index}:{trial}"
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def _file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_text(path: Path, content: str, force: bool) -> bool:
    """Write unless the identical file is already there; refuse clobbering."""
    if path.exists():
        if path.read_text() == content:
            log.info("unchanged: %s", path)
            return False
        if not force:
            raise FileExistsError(
                f"{path} exists with different content (pass --force to replace)"
            )
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(content)
    return True


def _render_csv(rows, header) -> str:
    import csv

    buf = io.StringIO(newline="")
    writer = csv.writer(buf)
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _record_json(record: RunRecord, sweep_key: str | None = None) -> str:
    data = record.to_dict()
    if sweep_key is not None:
        data["sweep_key"] = sweep_key
    return json.dumps(data, sort_keys=True) + "\n"


def _worker_count(requested: int | None) -> int:
    n = requested if requested else (os.cpu_count() or 1)
    cap = os.environ.get(THREADS_ENV)
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def _build_config(args, solver: str, seed: int, z_card: int):
    if solver in ("admm", "baseline"):
        if args.gamma is None:
            raise ValueError(f"--gamma is required for the {solver} solver")
        return AdmmConfig(
            gamma=args.gamma,
            z_card=z_card,
            c=args.c,
            step_size=args.step,
            inner_tol=args.inner_tol,
            inner_max_iters=args.inner_iters,
            primal_tol=args.tol,
            max_iters=args.max_iters,
            seed=seed,
        )
    if args.beta is None:
        raise ValueError("--beta is required for the variational solver")
    return VariationalConfig(
        beta=args.beta,
        z_card=z_card,
        step_size=args.step,
        inner_tol=args.inner_tol,
        inner_max_iters=args.inner_iters,
        outer_tol=args.tol,
        outer_max_iters=args.max_iters,
        xi_filter=args.xi,
        seed=seed,
    )


def _run_one(solver: str, joint: JointPmf, config) -> RunRecord:
    if solver == "admm":
        return solve_admm(joint, config)
    if solver == "baseline":
        return solve_baseline(joint, config)
    return run_to_record(solve_variational(joint, config))


def cmd_gen_data(args) -> int:
    spec = DatasetSpec(
        y_card=args.y_card,
        x_card=args.x_card,
        delta=args.delta,
        block=args.block,
        n_train=args.n_train,
        n_test=args.n_test,
        seed=args.seed,
    )
    out = Path(args.out)
    joint = compose_dataset_joint(spec)
    train = draw_samples(spec, "train")
    test = draw_samples(spec, "test")
    emp = empirical_joint(train, (spec.x_card, spec.x_card))

    header = ["y", "x1", "x2"]
    _write_text(out / "joint.json", json.dumps(joint.to_dict(), sort_keys=True) + "\n", args.force)
    _write_text(
        out / "empirical_joint.json",
        json.dumps(emp.to_dict(), sort_keys=True) + "\n",
        args.force,
    )
    _write_text(
        out / "train.csv",
        _render_csv(zip(train.labels.tolist(), *[v.tolist() for v in train.views]), header),
        args.force,
    )
    _write_text(
        out / "test.csv",
        _render_csv(zip(test.labels.tolist(), *[v.tolist() for v in test.views]), header),
        args.force,
    )
    _write_text(
        out / "spec.json", json.dumps(spec.to_dict(), sort_keys=True) + "\n", args.force
    )
    mi = mutual_information(joint, (0,), (1,), base="bits")
    print(
        f"dataset delta={spec.delta} n_train={spec.n_train} n_test={spec.n_test} "
        f"I(X1;X2)={mi:.3f} bits -> {out}"
    )
    return 0


def cmd_solve(args) -> int:
    joint = load_joint(args.joint)
    config = _build_config(args, args.solver, args.seed, args.z_card)
    record = _run_one(args.solver, joint, config)
    record.config["joint_sha256"] = _file_sha256(args.joint)
    if args.out:
        _write_text(Path(args.out), _record_json(record), args.force)
    m = record.metrics
    print(
        f"{args.solver} converged={str(record.converged).lower()} "
        f"iterations={record.iterations} "
        f"residual_cmi_bits={m.get('residual_cmi_bits', float('nan')):.6f} "
        f"joint_mi_bits={m.get('joint_mi_bits', float('nan')):.6f}"
    )
    return 0


def _parse_grid(text: str, solver: str) -> list[float]:
    if text.startswith("geom:"):
        _, lo, hi, n = text.split(":")
        return [float(v) for v in np.geomspace(float(lo), float(hi), int(n))]
    return [float(v) for v in text.split(",") if v]


def _sweep_tasks(args, joint_hash: str):
    z_cards = [int(v) for v in str(args.z_card).split(",") if v]
    grid = _parse_grid(args.grid, args.solver)
    tasks = []
    for zi, z in enumerate(z_cards):
        for pi, param in enumerate(grid):
            grid_index = zi * len(grid) + pi
            for trial in range(args.trials):
                seed = derive_seed(args.seed, args.solver, grid_index, trial)
                ns = argparse.Namespace(**vars(args))
                if args.solver == "variational":
                    ns.beta = param
                else:
                    ns.gamma = param
                config = _build_config(ns, args.solver, seed, z)
                name = f"{args.solver}_z{z}_g{grid_index:03d}_t{trial:02d}.json"
                key_src = json.dumps(
                    {
                        "config": config.to_dict(),
                        "grid_index": grid_index,
                        "joint_sha256": joint_hash,
                        "solver": args.solver,
                        "trial": trial,
                    },
                    sort_keys=True,
                )
                key = hashlib.sha256(key_src.encode("utf-8")).hexdigest()[:16]
                tasks.append((grid_index, trial, config, name, key))
    return tasks


def _sweep_worker(payload):
    solver, joint_path, config, trial, grid_index, out_path, key, joint_hash = payload
    joint = load_joint(joint_path)
    record = _run_one(solver, joint, config)
    record.trial = trial
    record.grid_index = grid_index
    record.config["joint_sha256"] = joint_hash
    Path(out_path).write_text(_record_json(record, sweep_key=key))
    return out_path


def cmd_sweep(args) -> int:
    joint_hash = _file_sha256(args.joint)
    out = Path(args.out)
    runs_dir = out / "runs"
    runs_dir.mkdir(parents=True, exist_ok=True)
    tasks = _sweep_tasks(args, joint_hash)

    pending = []
    for grid_index, trial, config, name, key in tasks:
        path = runs_dir / name
        if path.exists():
            data = json.loads(path.read_text())
            if data.get("sweep_key") == key:
                log.info("resume: keeping %s", name)
                continue
            raise FileExistsError(
                f"{path} is from a different sweep configuration; "
                "remove it or choose another output directory"
            )
        pending.append(
            (args.solver, args.joint, config, trial, grid_index, str(path), key, joint_hash)
        )

    workers = _worker_count(args.threads)
    log.info("sweep: %d runs total, %d to do, %d workers", len(tasks), len(pending), workers)
    if workers == 1 or len(pending) <= 1:
        for payload in pending:
            _sweep_worker(payload)
            log.info("done: %s", payload[5])
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for path in pool.map(_sweep_worker, pending):
                log.info("done: %s", path)

    points = []
    for grid_index, trial, config, name, key in tasks:
        record = load_record(runs_dir / name)
        points.append(record.plane_point())
    csv_path = out / "plane.csv"
    _write_text(csv_path, render_plane_csv(points), args.force)
    n_conv = sum(1 for p in points if p.converged)
    print(f"sweep {args.solver}: {len(points)} runs, {n_conv} converged -> {csv_path}")
    return 0


def _load_encoder_any(path) -> Encoder:
    with open(path) as fh:
        data = json.load(fh)
    if "neglog" in data:
        return Encoder.from_dict(data)
    if data.get("encoder"):
        return Encoder.from_dict(data["encoder"])
    raise ValueError(f"{path} holds neither an encoder nor a run record with one")


def cmd_eval_clustering(args) -> int:
    encoder = _load_encoder_any(args.encoder)
    samples = load_samples_csv(args.test)
    hyp = cluster_predict(encoder, samples, seed=args.seed, mode=args.hyp)
    report = best_label_accuracy(
        hyp, samples.labels, encoder.z_card, args.y_card, mode=args.match
    )
    if args.out:
        _write_text(
            Path(args.out),
            json.dumps(report.to_dict(), sort_keys=True) + "\n",
            args.force,
        )
    print(
        f"clustering accuracy={report.accuracy:.4f} mode={report.mode} "
        f"n={report.n_samples}"
    )
    return 0


def cmd_plane(args) -> int:
    runs_dir = Path(args.runs)
    records = [load_record(p) for p in sorted(runs_dir.glob("*.json"))]
    records.sort(key=lambda r: (r.solver, r.config.get("z_card", 0), r.grid_index, r.trial))
    points = [r.plane_point() for r in records]
    _write_text(Path(args.out), render_plane_csv(points), args.force)
    print(f"plane: {len(points)} points -> {args.out}")
    return 0


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--gamma", type=float, default=None, help="relaxation weight")
    p.add_argument("--beta", type=float, default=None, help="fit penalty weight")
    p.add_argument("--c", type=float, default=128.0, help="consensus penalty")
    p.add_argument("--step", type=float, default=1e-2, help="gradient step size")
    p.add_argument("--z-card", default="8", help="latent alphabet size")
    p.add_argument("--tol", type=float, default=2e-6, help="outer tolerance")
    p.add_argument("--max-iters", type=int, default=None, help="outer iteration cap")
    p.add_argument("--inner-tol", type=float, default=1e-8, help="inner tolerance")
    p.add_argument("--inner-iters", type=int, default=None, help="inner iteration cap")
    p.add_argument("--xi", type=float, default=0.1, help="fit filter threshold")
    p.add_argument("--seed", type=int, default=0, help="base RNG seed")


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(
        prog="wyner-mv",
        description="Common-information solvers for discrete two-view data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = sub.add_parser("gen-data", help="write a synthetic dataset directory")
    p.add_argument("--out", required=True)
    p.add_argument("--y-card", type=int, default=8)
    p.add_argument("--x-card", type=int, default=16)
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--block", type=int, default=2)
    p.add_argument("--n-train", type=int, default=100_000)
    p.add_argument("--n-test", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_data)
    subs["gen-data"] = p

    p = sub.add_parser("solve", help="run one solver on a joint")
    p.add_argument("--solver", choices=SOLVERS, required=True)
    p.add_argument("--joint", required=True)
    p.add_argument("--out", default=None)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_solve)
    subs["solve"] = p

    p = sub.add_parser("sweep", help="run a parameter grid of seeded trials")
    p.add_argument("--solver", choices=SOLVERS, required=True)
    p.add_argument("--joint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--grid", default=None, help="geom:lo:hi:n or comma list")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--threads", type=int, default=None)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_sweep)
    subs["sweep"] = p

    p = sub.add_parser("eval-clustering", help="score an encoder on labeled samples")
    p.add_argument("--encoder", required=True, help="encoder JSON or run record")
    p.add_argument("--test", required=True, help="sample CSV with labels")
    p.add_argument("--y-card", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hyp", choices=("sample", "argmax"), default="sample")
    p.add_argument("--match", choices=("exhaustive", "assignment"), default="exhaustive")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval_clustering)
    subs["eval-clustering"] = p

    p = sub.add_parser("plane", help="merge run records into a plane CSV")
    p.add_argument("--runs", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plane)
    subs["plane"] = p

    for sp in subs.values():
        sp.add_argument("--config", default=None, help="JSON file of flag defaults")
        sp.add_argument("--force", action="store_true", help="replace conflicting files")

    return parser, subs


def _apply_config_defaults(argv, subs) -> None:
    if "--config" not in argv:
        return
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        return
    with open(argv[idx + 1]) as fh:
        cfg = json.load(fh)
    command = argv[0] if argv and not argv[0].startswith("-") else None
    if command not in subs:
        raise ValueError("--config needs a recognized subcommand")
    sp = subs[command]
    allowed = {a.dest for a in sp._actions}
    defaults = {}
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        if dest not in allowed:
            raise ValueError(f"config key {key!r} is not a flag of {command}")
        defaults[dest] = value
    sp.set_defaults(**defaults)


def main(argv=None) -> int:
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subs = build_parser()
    try:
        _apply_config_defaults(argv, subs)
        args = parser.parse_args(argv)
        _fill_iteration_defaults(args)
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _fill_iteration_defaults(args) -> None:
    solver = getattr(args, "solver", None)
    if solver is None:
        return
    args.z_card = int(str(args.z_card).split(",")[0]) if args.command == "solve" else args.z_card
    if args.max_iters is None:
        args.max_iters = 100_000 if solver == "variational" else 300_000
    if args.inner_iters is None:
        args.inner_iters = 500 if solver == "variational" else 100


if __name__ == "__main__":
    sys.exit(main())
