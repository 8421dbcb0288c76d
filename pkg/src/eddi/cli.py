"""Command-line interface.

Subcommands: train, acquire, experiment, inpaint, oracle-check, serve.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure. Every writing command puts its outputs under --out and closes
the directory with a manifest.json of content hashes.

Tabular data arrives as CSV with a header of schema variable names and
empty cells for missing values. Image data arrives as a .npy array of
flattened rows already in [0, 1]; image pixels are not min-max rescaled.
"""

from __future__ import annotations

import argparse
import itertools
import json
import sys
from pathlib import Path

import numpy as np

from . import checkpoint, oracle
from .acquisition import Strategy, run_episode, single_best_ordering
from .data import (
    _read_table,
    ingest_csv,
    load_schema,
    save_schema,
    scale_rows,
    split_indices,
)
from .datasets import image_schema
from .errors import (
    CapabilityError,
    CheckpointError,
    ConfigError,
    DataError,
    EvidenceError,
    NumericError,
    ShapeError,
)
from .experiment import (
    ExperimentSpec,
    inpaint_eval,
    run_experiment,
    write_manifest,
)
from .metrics import AuicEntry, AuicTable, auic
from .model import PartialVae, TrainConfig, save_loss_trace, tabular_preset, train
from .rng import SeedKey, derive_seed

ORACLE_TOL = 1e-10


def _load_rows(path: str, schema_path: str | None, test_fraction: float, seed: int):
    """(schema, train_rows, test_rows) from CSV+schema or a raw .npy file."""
    if path.endswith(".npy"):
        rows = np.load(path)
        schema = load_schema(schema_path) if schema_path else image_schema()
        if rows.ndim != 2 or rows.shape[1] != schema.n_variables:
            raise DataError(f"{path}: shape {rows.shape} does not fit the schema")
        train_idx, test_idx = split_indices(rows.shape[0], test_fraction, seed)
        return schema, rows[train_idx], rows[test_idx]
    if schema_path is None:
        raise ConfigError("--schema is required for CSV data")
    schema = load_schema(schema_path)
    train_ds, test_ds = ingest_csv(path, schema, test_fraction=test_fraction, seed=seed)
    test_rows = test_ds.rows if test_ds is not None else np.empty((0, schema.n_variables))
    return train_ds.schema, train_ds.rows, test_rows


def _cmd_train(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    schema, train_rows, _ = _load_rows(args.data, args.schema, args.test_fraction, args.seed)
    config, decoder_hidden = tabular_preset(args.variant, latent_dim=args.latent)
    model = PartialVae.build(
        schema, config, decoder_hidden=decoder_hidden, seed=args.seed
    )
    cfg = TrainConfig(
        iterations=args.iterations, batch_size=args.batch, seed=args.seed
    )
    model, trace = train(model, train_rows, cfg)
    checkpoint.save(model, out / "model.pvae")
    save_loss_trace(out / "loss.csv", trace)
    save_schema(schema, out / "schema.json")
    write_manifest(out, {"command": "train", **_arg_dict(args)})
    print(f"trained {args.variant} for {args.iterations} iterations; final elbo {trace[-1]:.4f}")
    return 0


def _cmd_acquire(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = checkpoint.load(args.model)
    schema = model.schema
    if args.schema is not None:
        declared = load_schema(args.schema)
        ours = [(v.name, v.kind, v.target, v.group) for v in schema.variables]
        theirs = [(v.name, v.kind, v.target, v.group) for v in declared.variables]
        if ours != theirs:
            raise DataError("data schema does not match the model checkpoint schema")
    if args.data.endswith(".npy"):
        scaled = np.load(args.data)
        if scaled.ndim != 2 or scaled.shape[1] != schema.n_variables:
            raise DataError(f"{args.data}: shape {scaled.shape} does not fit the model")
    else:
        scaled = scale_rows(_read_table(args.data, schema), schema)
    train_idx, test_idx = split_indices(scaled.shape[0], args.test_fraction, args.seed)
    train_rows, test_rows = scaled[train_idx], scaled[test_idx]
    phi = schema.target_indices
    if args.strategy == "sing":
        ordering = single_best_ordering(
            model, train_rows, phi, args.samples, SeedKey(derive_seed(args.seed, 11))
        )
        strategy = Strategy.sing(ordering)
    elif args.strategy == "rand":
        strategy = Strategy.rand()
    else:
        strategy = Strategy.eddi(args.samples)

    rows = test_rows
    indices = range(rows.shape[0])
    if args.row is not None:
        if not 0 <= args.row < rows.shape[0]:
            raise DataError(f"--row {args.row} outside the {rows.shape[0]}-row test split")
        indices = [args.row]
    entries = []
    lines = ["row,step,candidate,cost,cumulative_cost,neg_log_likelihood"]
    for k in indices:
        key = SeedKey(args.seed) if args.row is not None else SeedKey(args.seed).child(k)
        curve = run_episode(
            model, rows[k], phi, strategy, key, budget=args.budget, nll_samples=args.samples
        )
        entries.append(AuicEntry("model", args.strategy, k, auic(curve, grouped=args.grouped)))
        for s in curve.steps:
            cand = "" if s.candidate is None else str(s.candidate)
            lines.append(
                f"{k},{s.step},{cand},{s.cost!r},{s.cumulative_cost!r},{s.neg_log_likelihood!r}"
            )
    (out / "curves.csv").write_text("\n".join(lines) + "\n")
    table = AuicTable(tuple(entries))
    (out / "auic.csv").write_text("\n".join(table.to_csv_lines()) + "\n")
    write_manifest(out, {"command": "acquire", **_arg_dict(args)})
    mean = float(np.mean([e.value for e in entries]))
    print(f"{args.strategy}: mean AUIC {mean:.4f} over {len(entries)} rows")
    return 0


def _cmd_experiment(args) -> int:
    spec = ExperimentSpec(
        data=args.data,
        schema=args.schema,
        variants=tuple(args.variant.split(",")),
        strategies=tuple(args.strategy.split(",")),
        repetitions=args.reps,
        test_fraction=args.test_fraction,
        iterations=args.iterations,
        seed=args.seed,
        budget=args.budget,
        reward_samples=args.samples,
        grouped=args.grouped,
        max_test_rows=args.max_test_rows,
    )
    result = run_experiment(spec, args.out)
    for (variant, strategy) in sorted(
        {(e.variant, e.strategy) for e in result.auic_table.entries}
    ):
        mean = result.auic_table.mean(variant, strategy)
        se = result.auic_table.stderr(variant, strategy)
        print(f"{variant}/{strategy}: AUIC {mean:.4f} (se {se:.4f})")
    for method, rank in sorted(result.rankings.items()):
        print(f"rank {method}: {rank:.3f}")
    return 0


def _cmd_inpaint(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = checkpoint.load(args.model)
    rows = np.load(args.data) if args.data.endswith(".npy") else np.loadtxt(args.data, delimiter=",")
    report = inpaint_eval(
        model, rows, args.mode, seed=args.seed, out_dir=out, max_images=args.max_images
    )
    write_manifest(out, {"command": "inpaint", **_arg_dict(args)})
    print(f"{args.mode}: mean ELBO {report.mean:.4f} over {rows.shape[0]} images")
    return 0


def _cmd_oracle_check(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.fixture:
        models = [oracle.TabularModel.load(args.fixture)]
    else:
        models = [
            oracle.random_model(
                rng,
                n_variables=int(rng.integers(2, 6)),
                latent_cardinality=int(rng.integers(2, 5)),
                cardinalities=None,
            )
            for _ in range(args.models)
        ]
    worst_pair = 0.0
    worst_bald = 0.0
    checked = 0
    for m in models:
        d = m.n_variables
        for i, p in itertools.permutations(range(d), 2):
            r5 = oracle.reward_observed(m, {}, i, [p])
            r6 = oracle.reward_latent(m, {}, i, [p])
            before, after = oracle.bald_decomposition(m, {}, i, [p])
            worst_pair = max(worst_pair, abs(r5 - r6))
            worst_bald = max(worst_bald, abs((before - after) - r5))
            checked += 1
    ok = worst_pair < ORACLE_TOL and worst_bald < ORACLE_TOL
    print(
        f"{'PASS' if ok else 'FAIL'}: {checked} rewards on {len(models)} models; "
        f"max |observed-latent| {worst_pair:.3e}, max BALD gap {worst_bald:.3e}"
    )
    if not ok:
        raise NumericError("oracle identities violated beyond 1e-10")
    return 0


def _cmd_serve(args) -> int:
    import os

    import uvicorn

    from .service import build_app

    app = build_app(model_dir=args.model_dir)
    bind = args.bind or os.environ.get("EDDI_BIND_ADDR", "127.0.0.1:8000")
    host, _, port = bind.rpartition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port))
    return 0


def _arg_dict(args) -> dict:
    out = {}
    for k, v in sorted(vars(args).items()):
        if k == "func":
            continue
        out[k] = v
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eddi", description="Partial VAE training and information-driven acquisition"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, data=True, out=True):
        if data:
            p.add_argument("--data", required=True, help="CSV table or .npy image rows")
            p.add_argument("--schema", help="schema JSON path")
        p.add_argument("--seed", type=int, default=0)
        if out:
            p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("train", help="fit a partial VAE")
    common(p)
    p.add_argument("--variant", choices=["zi", "zim", "pn", "pnp"], default="pnp")
    p.add_argument("--iterations", type=int, default=3000)
    p.add_argument("--batch", type=int, default=100)
    p.add_argument("--latent", type=int, default=10)
    p.add_argument("--test-fraction", type=float, default=0.10, dest="test_fraction")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("acquire", help="run acquisition episodes on the test split")
    common(p)
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--strategy", choices=["eddi", "rand", "sing"], default="eddi")
    p.add_argument("--budget", type=float, default=None)
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--row", type=int, default=None, help="run a single test row")
    p.add_argument("--grouped", action="store_true")
    p.add_argument("--test-fraction", type=float, default=0.10, dest="test_fraction")
    p.set_defaults(func=_cmd_acquire)

    p = sub.add_parser("experiment", help="full multi-repetition comparison")
    common(p)
    p.add_argument("--variant", default="pnp", help="comma-separated encoder variants")
    p.add_argument("--strategy", default="eddi,rand", help="comma-separated strategies")
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--iterations", type=int, default=3000)
    p.add_argument("--budget", type=float, default=None)
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--grouped", action="store_true")
    p.add_argument("--test-fraction", type=float, default=0.10, dest="test_fraction")
    p.add_argument("--max-test-rows", type=int, default=None, dest="max_test_rows")
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("inpaint", help="masked image ELBO evaluation")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--mode", choices=["none", "random", "top"], default="random")
    p.add_argument("--max-images", type=int, default=16, dest="max_images")
    p.set_defaults(func=_cmd_inpaint)

    p = sub.add_parser("oracle-check", help="verify exact reward identities")
    p.add_argument("--models", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fixture", help="JSON model to check instead of random models")
    p.set_defaults(func=_cmd_oracle_check)

    p = sub.add_parser("serve", help="start the questionnaire HTTP service")
    p.add_argument("--model-dir", default=None, dest="model_dir")
    p.add_argument("--bind", default=None, help="host:port (default from EDDI_BIND_ADDR)")
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ShapeError, CapabilityError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, EvidenceError, CheckpointError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
