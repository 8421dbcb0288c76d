"""Experiment orchestration: train, acquire, aggregate, and manifest.

Every run is a pure function of its spec. All randomness flows from the
spec seed through fixed derivation paths, outputs are written with
deterministic formatting, and the closing manifest records a hash of the
canonical spec plus a SHA-256 per output file, so re-running the same
spec must reproduce the bundle byte for byte.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from . import checkpoint
from .acquisition import InfoCurve, Strategy, run_episode, single_best_ordering
from .data import ingest_csv, load_schema
from .encoder import VARIANTS, EncoderConfig, encode_arrays
from .errors import ConfigError, DataError, ShapeError
from .metrics import AuicEntry, AuicTable, auic, average_ranking
from .model import (
    _STEPS,
    PartialVae,
    TrainConfig,
    decode_arrays,
    save_loss_trace,
    train,
)
from .numerics.distributions import bernoulli_logpmf, gaussian_logpdf
from .rng import TAG_EVAL, SeedKey, derive_seed

STRATEGY_NAMES = ("eddi", "rand", "sing")

# Role constants separating the derived seed spaces of one experiment.
_ROLE_MODEL = 7
_ROLE_ORDERING = 11
_ROLE_EPISODE = 13


@dataclass(frozen=True)
class ExperimentSpec:
    data: str
    schema: str
    variants: tuple[str, ...] = ("pnp",)
    strategies: tuple[str, ...] = ("eddi", "rand")
    repetitions: int = 10
    test_fraction: float = 0.10
    iterations: int = 3000
    batch_size: int = 100
    learning_rate: float = 0.001
    seed: int = 0
    budget: float | None = None
    reward_samples: int = 50
    nll_samples: int = 50
    grouped: bool = False
    latent_dim: int = 10
    embed_dim: int = 10
    feature_dim: int = 20
    post_hidden: tuple[int, ...] = (100, 50)
    decoder_hidden: tuple[int, ...] = (50, 100)
    max_test_rows: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "variants", tuple(self.variants))
        object.__setattr__(self, "strategies", tuple(self.strategies))
        object.__setattr__(self, "post_hidden", tuple(self.post_hidden))
        object.__setattr__(self, "decoder_hidden", tuple(self.decoder_hidden))
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError("test fraction must lie strictly between 0 and 1")
        for v in self.variants:
            if v not in VARIANTS:
                raise ConfigError(f"unknown encoder variant {v!r}")
        for s in self.strategies:
            if s not in STRATEGY_NAMES:
                raise ConfigError(f"unknown strategy {s!r}")
        if not self.variants or not self.strategies:
            raise ConfigError("need at least one variant and one strategy")

    def encoder_config(self, variant: str) -> EncoderConfig:
        return EncoderConfig(
            variant,
            latent_dim=self.latent_dim,
            embed_dim=self.embed_dim,
            feature_dim=self.feature_dim,
            steps=_STEPS[variant],
            post_hidden=self.post_hidden,
        )

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            iterations=self.iterations,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            seed=seed,
        )

    def to_json_dict(self) -> dict:
        return {
            "data": self.data,
            "schema": self.schema,
            "variants": list(self.variants),
            "strategies": list(self.strategies),
            "repetitions": self.repetitions,
            "test_fraction": self.test_fraction,
            "iterations": self.iterations,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "seed": self.seed,
            "budget": self.budget,
            "reward_samples": self.reward_samples,
            "nll_samples": self.nll_samples,
            "grouped": self.grouped,
            "latent_dim": self.latent_dim,
            "embed_dim": self.embed_dim,
            "feature_dim": self.feature_dim,
            "post_hidden": list(self.post_hidden),
            "decoder_hidden": list(self.decoder_hidden),
            "max_test_rows": self.max_test_rows,
        }

    @staticmethod
    def from_json_dict(data: Mapping) -> "ExperimentSpec":
        kwargs = dict(data)
        for key in ("variants", "strategies", "post_hidden", "decoder_hidden"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return ExperimentSpec(**kwargs)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1)


def write_manifest(out_dir: str | Path, config_obj) -> Path:
    """Hash the config and every output file into manifest.json."""
    out_dir = Path(out_dir)
    spec_text = canonical_json(config_obj)
    files = {}
    for p in sorted(out_dir.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            rel = p.relative_to(out_dir).as_posix()
            files[rel] = hashlib.sha256(p.read_bytes()).hexdigest()
    manifest = {
        "config_hash": hashlib.sha256(spec_text.encode()).hexdigest(),
        "spec": json.loads(spec_text),
        "files": files,
    }
    path = out_dir / "manifest.json"
    path.write_text(canonical_json(manifest) + "\n")
    return path


@dataclass(frozen=True)
class ExperimentResult:
    auic_table: AuicTable
    rankings: dict[str, float]
    scores: dict[str, dict[str, list[float]]]
    out_dir: Path


def _write_curves(path: Path, curves: list[InfoCurve]) -> None:
    lines = ["row,step,candidate,cost,cumulative_cost,neg_log_likelihood"]
    for k, curve in enumerate(curves):
        for s in curve.steps:
            cand = "" if s.candidate is None else str(s.candidate)
            lines.append(
                f"{k},{s.step},{cand},{s.cost!r},{s.cumulative_cost!r},{s.neg_log_likelihood!r}"
            )
    path.write_text("\n".join(lines) + "\n")


def _write_mean_curve(path: Path, curves: list[InfoCurve]) -> None:
    depth = min(len(c.steps) for c in curves)
    lines = ["step,mean_nll,stderr"]
    for t in range(depth):
        vals = np.array([c.steps[t].neg_log_likelihood for c in curves])
        se = float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else float("nan")
        lines.append(f"{t},{float(vals.mean())!r},{se!r}")
    path.write_text("\n".join(lines) + "\n")


def run_experiment(spec: ExperimentSpec, out_dir: str | Path) -> ExperimentResult:
    """Split, train, acquire, and aggregate per the spec; write the bundle."""
    out = Path(out_dir)
    for sub in ("curves", "checkpoints", "losses"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    (out / "spec.json").write_text(canonical_json(spec.to_json_dict()) + "\n")

    schema = load_schema(spec.schema)
    entries: list[AuicEntry] = []
    scores: dict[str, dict[str, list[float]]] = {}
    curves_by_combo: dict[tuple[str, str], list[InfoCurve]] = {}

    for rep in range(spec.repetitions):
        rep_seed = derive_seed(spec.seed, rep)
        train_ds, test_ds = ingest_csv(
            spec.data, schema, test_fraction=spec.test_fraction, seed=rep_seed
        )
        if test_ds is None:
            raise DataError(f"repetition {rep}: test split is empty")
        phi = train_ds.schema.target_indices
        test_rows = test_ds.rows
        if spec.max_test_rows is not None:
            test_rows = test_rows[: spec.max_test_rows]

        for vi, variant in enumerate(spec.variants):
            mseed = derive_seed(spec.seed, rep, _ROLE_MODEL, vi)
            model = PartialVae.build(
                train_ds.schema,
                spec.encoder_config(variant),
                decoder_hidden=spec.decoder_hidden,
                seed=mseed,
            )
            model, trace = train(model, train_ds.rows, spec.train_config(mseed))
            tag = f"{variant}_rep{rep:02d}"
            checkpoint.save(model, out / "checkpoints" / f"{tag}.pvae")
            save_loss_trace(out / "losses" / f"{tag}.csv", trace)

            strategies = {}
            for name in spec.strategies:
                if name == "eddi":
                    strategies[name] = Strategy.eddi(spec.reward_samples)
                elif name == "rand":
                    strategies[name] = Strategy.rand()
                else:
                    ordering = single_best_ordering(
                        model,
                        train_ds.rows,
                        phi,
                        spec.reward_samples,
                        SeedKey(derive_seed(spec.seed, rep, _ROLE_ORDERING, vi)),
                    )
                    strategies[name] = Strategy.sing(ordering)

            for name, strategy in strategies.items():
                # All strategies share one episode stream per (rep, variant,
                # row) so their NLL curves see identical evaluation noise and
                # per-rep comparisons are paired.
                base = SeedKey(derive_seed(spec.seed, rep, _ROLE_EPISODE, vi))
                curves = []
                per_row = []
                for k, row in enumerate(test_rows):
                    curve = run_episode(
                        model,
                        row,
                        phi,
                        strategy,
                        base.child(k),
                        budget=spec.budget,
                        nll_samples=spec.nll_samples,
                    )
                    curves.append(curve)
                    per_row.append(auic(curve, grouped=spec.grouped))
                entries.append(AuicEntry(variant, name, rep, float(np.mean(per_row))))
                method = f"{variant}/{name}"
                scores.setdefault(method, {}).setdefault(spec.data, []).extend(per_row)
                curves_by_combo.setdefault((variant, name), []).extend(curves)
                _write_curves(out / "curves" / f"{variant}_{name}_rep{rep:02d}.csv", curves)

    table = AuicTable(tuple(entries))
    (out / "auic.csv").write_text("\n".join(table.to_csv_lines()) + "\n")
    for (variant, name), curves in sorted(curves_by_combo.items()):
        _write_mean_curve(out / f"ic_{variant}_{name}.csv", curves)

    rankings = average_ranking(scores)
    ranking_lines = ["method,mean_rank"]
    for method in sorted(rankings):
        ranking_lines.append(f"{method},{rankings[method]!r}")
    (out / "ranking.csv").write_text("\n".join(ranking_lines) + "\n")

    write_manifest(out, spec.to_json_dict())
    return ExperimentResult(table, rankings, scores, out)


# -- image evaluation ---------------------------------------------------------

MASK_MODES = ("none", "random", "top")
TOP_MASK_FRACTION = 0.6


def masked_elbo(
    model: PartialVae, x: np.ndarray, mask: np.ndarray, noise: np.ndarray
) -> np.ndarray:
    """Single-sample partial variational bound per row, plain numpy.

    x, mask and noise are all batched: (N, D), (N, D) and (N, H).
    Unobserved entries of x are ignored; callers may pass rows with their
    true values still present and the mask alone decides what the encoder
    and the likelihood see.
    """
    x = x * mask
    mean, logvar = encode_arrays(model.encoder_config, model.params, x, mask)
    z = mean + np.exp(0.5 * logvar) * noise
    cont = np.array(model.schema.continuous_indices, dtype=int)
    binary = np.array(model.schema.binary_indices, dtype=int)
    cm, cv, bp = decode_arrays(model, z)
    recon = np.zeros(z.shape[0])
    if cont.size:
        ll = gaussian_logpdf(x[:, cont], cm, np.log(cv))
        recon += (ll * mask[:, cont]).sum(axis=1)
    if binary.size:
        ll = bernoulli_logpmf(x[:, binary], bp)
        recon += (ll * mask[:, binary]).sum(axis=1)
    log_prior = -0.5 * (z * z + np.log(2.0 * np.pi)).sum(axis=1)
    log_q = -0.5 * (
        logvar + np.log(2.0 * np.pi) + (z - mean) ** 2 * np.exp(-logvar)
    ).sum(axis=1)
    return recon + log_prior - log_q


@dataclass(frozen=True)
class InpaintReport:
    mode: str
    per_image: np.ndarray
    mean: float
    observed_per_image: np.ndarray


def top_region_mask(n_pixels: int) -> np.ndarray:
    """Hide the first floor(0.6 * D) pixels in row-major order."""
    hidden = int(np.floor(TOP_MASK_FRACTION * n_pixels))
    mask = np.ones(n_pixels)
    mask[:hidden] = 0.0
    return mask


def inpaint_eval(
    model: PartialVae,
    rows: np.ndarray,
    mode: str,
    seed: int = 0,
    out_dir: str | Path | None = None,
    max_images: int = 16,
) -> InpaintReport:
    """Test ELBO under masking, with reconstructions written as PGM files.

    Modes: "none" observes everything, "random" drops each pixel with a
    per-image rate drawn from U(0, 0.7), "top" hides the upper 60% of
    pixels in row-major order.
    """
    rows = np.asarray(rows, dtype=np.float64)
    d = model.schema.n_variables
    if rows.ndim != 2 or rows.shape[1] != d:
        raise ShapeError(f"image rows have shape {rows.shape}, model expects (N, {d})")
    if mode not in MASK_MODES:
        raise ConfigError(f"unknown masking mode {mode!r}")
    n = rows.shape[0]
    gen = SeedKey(seed, TAG_EVAL).generator()
    if mode == "none":
        mask = np.ones_like(rows)
    elif mode == "random":
        rates = gen.uniform(0.0, 0.7, size=(n, 1))
        mask = (gen.uniform(size=rows.shape) >= rates).astype(np.float64)
    else:
        mask = np.tile(top_region_mask(d), (n, 1))
    x = np.where(mask > 0, rows, 0.0)
    noise = gen.standard_normal((n, model.latent_dim))
    elbo = masked_elbo(model, x, mask, noise)
    report = InpaintReport(mode, elbo, float(elbo.mean()), mask.sum(axis=1))

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        lines = ["image,observed_pixels,elbo"]
        for i in range(n):
            lines.append(f"{i},{int(report.observed_per_image[i])},{float(elbo[i])!r}")
        lines.append(f"mean,,{report.mean!r}")
        (out / f"inpaint_{mode}.csv").write_text("\n".join(lines) + "\n")
        side = int(round(np.sqrt(d)))
        if side * side == d:
            mean_z, _ = encode_arrays(model.encoder_config, model.params, x, mask)
            cont_mean, _, bin_p = decode_arrays(model, mean_z[:max_images])
            recon = np.zeros((min(n, max_images), d))
            recon[:, model.schema.continuous_indices] = cont_mean
            recon[:, model.schema.binary_indices] = bin_p
            for i in range(recon.shape[0]):
                _write_pgm(out / f"recon_{mode}_{i:03d}.pgm", recon[i].reshape(side, side))
    return report


def _write_pgm(path: Path, image: np.ndarray) -> None:
    levels = np.clip(np.round(image * 255.0), 0, 255).astype(int)
    body = "\n".join(" ".join(str(v) for v in row) for row in levels)
    path.write_text(f"P2\n{image.shape[1]} {image.shape[0]}\n255\n{body}\n")
