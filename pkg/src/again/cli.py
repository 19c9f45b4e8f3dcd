"""Command-line operator surface: train / eval / perturb / embed / gradcheck / sweep."""

from __future__ import annotations

import concurrent.futures
import datetime
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import click
import numpy as np

from . import autodiff as ad
from .adversary import PriorConfig
from .evaluation import (
    embed_nodes,
    evaluate_accuracy,
    performance_gap,
    robustness_sweep,
)
from .graph import (
    AttributedGraph,
    DataError,
    load_fixed_split,
    load_graph,
    make_split,
)
from .model import ConfigError, EncoderConfig, classify, encode
from .params import CheckpointError, init_parameters, load_checkpoint, save_checkpoint
from .sampling import exhaustive_neighborhood
from .training import MODES, TrainConfig, default_train_config, train

DATA_ROOT_ENV = "AGAIN_DATA_ROOT"

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    """Everything needed to reproduce one command invocation."""

    command: str
    config: dict
    inputs: dict[str, dict] = field(default_factory=dict)  # path -> {sha256}
    outputs: list[str] = field(default_factory=list)
    seed: int | None = None
    started: str = field(default_factory=_now)
    finished: str | None = None

    def add_input(self, path):
        p = Path(path)
        self.inputs[str(p)] = {"sha256": _sha256(p)}

    def add_output(self, path):
        self.outputs.append(str(path))

    def write(self, path):
        self.finished = _now()
        self.add_output(path)
        Path(path).write_text(
            json.dumps(
                {
                    "command": self.command,
                    "config": self.config,
                    "inputs": self.inputs,
                    "outputs": self.outputs,
                    "seed": self.seed,
                    "started": self.started,
                    "finished": self.finished,
                },
                indent=2,
                sort_keys=True,
            )
            + "\n"
        )


def _find_file(directory: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz"):
        candidate = directory / name
        if candidate.exists():
            return candidate
    raise DataError(f"missing {stem}[.gz] in {directory}")


def resolve_dataset_dir(dataset: str) -> Path:
    """A dataset argument is either a directory path or a name under the
    data root (``$AGAIN_DATA_ROOT``, falling back to ./data)."""
    direct = Path(dataset)
    if direct.is_dir():
        return direct
    root = Path(os.environ.get(DATA_ROOT_ENV, "data"))
    candidate = root / dataset
    if candidate.is_dir():
        return candidate
    raise DataError(
        f"dataset {dataset!r} is neither a directory nor found under {root}"
    )


def load_dataset(dataset: str, manifest: RunManifest | None = None):
    directory = resolve_dataset_dir(dataset)
    paths = {stem: _find_file(directory, f"{stem}.txt") for stem in ("edges", "features", "labels")}
    g = load_graph(paths["edges"], paths["features"], paths["labels"])
    split_path = None
    for name in ("split.txt", "split.txt.gz"):
        if (directory / name).exists():
            split_path = directory / name
            break
    if manifest is not None:
        for p in paths.values():
            manifest.add_input(p)
        if split_path is not None:
            manifest.add_input(split_path)
    return g, split_path, directory


def _obtain_split(g, split_path, cfg: TrainConfig, test_count: int = 1000):
    if split_path is not None:
        return load_fixed_split(split_path, g)
    return make_split(
        g, cfg.labeled_per_class, min(test_count, g.node_count // 3), seed=cfg.seed
    )


_FLAG_FIELDS = {
    "epochs": "max_epochs",
    "disc_steps": "disc_steps",
    "lr_model": "lr_model",
    "lr_disc": "lr_disc",
    "weight_decay": "weight_decay_model",
    "dropout": "dropout",
    "batch_size": "batch_size",
}


def build_config(
    dataset_name: str,
    mode: str,
    n: int,
    seed: int,
    config_file: str | None,
    flag_values: dict,
) -> TrainConfig:
    """Defaults for the dataset, overridden by the config file, overridden by
    explicit command-line flags."""
    cfg = default_train_config(dataset_name, n, mode, seed=seed)
    merged: dict = {}
    if config_file:
        merged.update(json.loads(Path(config_file).read_text()))
    merged.update({k: v for k, v in flag_values.items() if v is not None})

    for key, attr in _FLAG_FIELDS.items():
        if key in merged:
            setattr(cfg, attr, merged[key])
    if "sample_sizes" in merged:
        v = merged["sample_sizes"]
        cfg.sample_sizes = (
            [int(x) for x in v.split(",")] if isinstance(v, str) else list(v)
        )
    enc = {
        "depth": merged.get("depth", cfg.encoder.depth),
        "hidden_dim": merged.get("hidden_dim", cfg.encoder.hidden_dim),
        "attention_vector_dim": merged.get(
            "attention_vector_dim", cfg.encoder.attention_vector_dim
        ),
        "aggregator_kind": cfg.encoder.aggregator_kind,
    }
    cfg.encoder = EncoderConfig(**enc)
    cfg.prior = PriorConfig(
        power_exponent=merged.get("prior_exponent", cfg.prior.power_exponent),
        dim=cfg.encoder.hidden_dim,
    )
    if len(cfg.sample_sizes) != cfg.encoder.depth and cfg.mode != "mlp":
        cfg.sample_sizes = cfg.sample_sizes[: cfg.encoder.depth] or [10] * cfg.encoder.depth
    cfg.__post_init__()
    return cfg


def _dataset_name(dataset: str) -> str:
    return Path(dataset).name.lower()


@click.group()
def main():
    """Inductive attention-aggregation node classification toolkit."""


def _fail(message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(EXIT_RUNTIME)


_COMMON_TRAIN_FLAGS = [
    click.option("--mode", type=click.Choice(MODES), default="again", show_default=True),
    click.option("--n", type=int, default=20, show_default=True, help="Labeled nodes per class."),
    click.option("--seed", type=int, default=0, show_default=True),
    click.option("--epochs", type=int, default=None, help="Training epochs [default: 200]."),
    click.option("--disc-steps", type=int, default=None, help="Discriminator updates per epoch [default: 1]."),
    click.option("--lr-model", type=float, default=None, help="Model learning rate [default: 0.001]."),
    click.option("--lr-disc", type=float, default=None, help="Discriminator learning rate [default: per dataset]."),
    click.option("--weight-decay", type=float, default=None, help="Model L2 coefficient [default: 0.05]."),
    click.option("--dropout", type=float, default=None, help="Dropout rate [default: 0.5]."),
    click.option("--batch-size", type=int, default=None, help="Minibatch size [default: 256]."),
    click.option("--sample-sizes", default=None, help="Comma-separated per-depth sample sizes [default: 25,10]."),
    click.option("--hidden-dim", type=int, default=None, help="Embedding dimension [default: 256]."),
    click.option("--att-dim", "attention_vector_dim", type=int, default=None, help="Attention vector dimension [default: 512]."),
    click.option("--prior-exponent", type=int, default=None, help="Prior variance exponent p in 10^p [default: 0]."),
    click.option("--config", "config_file", type=click.Path(exists=True), default=None, help="JSON config file."),
]


def _with_train_flags(fn):
    for deco in reversed(_COMMON_TRAIN_FLAGS):
        fn = deco(fn)
    return fn


def _collect_flag_values(kwargs) -> dict:
    return {
        "epochs": kwargs["epochs"],
        "disc_steps": kwargs["disc_steps"],
        "lr_model": kwargs["lr_model"],
        "lr_disc": kwargs["lr_disc"],
        "weight_decay": kwargs["weight_decay"],
        "dropout": kwargs["dropout"],
        "batch_size": kwargs["batch_size"],
        "sample_sizes": kwargs["sample_sizes"],
        "hidden_dim": kwargs["hidden_dim"],
        "attention_vector_dim": kwargs["attention_vector_dim"],
        "prior_exponent": kwargs["prior_exponent"],
    }


@main.command("train")
@click.option("--dataset", required=True, help="Dataset directory or name under the data root.")
@click.option("--out-dir", type=click.Path(), default="runs/latest", show_default=True)
@_with_train_flags
def cmd_train(dataset, out_dir, mode, n, seed, config_file, **kwargs):
    """Train a model and write checkpoint, epoch log and manifest."""
    try:
        cfg = build_config(
            _dataset_name(dataset), mode, n, seed, config_file, _collect_flag_values(kwargs)
        )
        manifest = RunManifest(command="train", config=cfg.to_dict(), seed=seed)
        g, split_path, _ = load_dataset(dataset, manifest)
        split = _obtain_split(g, split_path, cfg)
        params, log = train(g, split, cfg)

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        ckpt = out / "checkpoint.bin"
        save_checkpoint(params, ckpt)
        log_path = out / "train_log.csv"
        log_path.write_text(log.to_csv())
        manifest.add_output(ckpt)
        manifest.add_output(log_path)
        manifest.write(out / "manifest.json")
        click.echo(f"trained {cfg.mode} for {cfg.max_epochs} epochs -> {ckpt}")
    except (DataError, ConfigError, ad.NumericError, OSError, ValueError) as exc:
        _fail(str(exc))


def _restore_for_dataset(checkpoint_path, g):
    params = load_checkpoint(checkpoint_path)
    meta = params.meta
    if meta["feature_dim"] != g.feature_dim or meta["class_count"] != g.class_count:
        raise DataError(
            f"checkpoint expects {meta['feature_dim']} features / "
            f"{meta['class_count']} classes, dataset has "
            f"{g.feature_dim} / {g.class_count}"
        )
    cfg_dict = meta.get("train_config")
    if cfg_dict is None:
        raise CheckpointError("checkpoint lacks an embedded training config")
    cfg_dict = dict(cfg_dict)
    cfg_dict["prior"] = PriorConfig(**cfg_dict["prior"])
    cfg_dict["encoder"] = EncoderConfig(**cfg_dict["encoder"])
    return params, TrainConfig(**cfg_dict)


@main.command("eval")
@click.option("--dataset", required=True)
@click.option("--checkpoint", "checkpoint_path", required=True, type=click.Path(exists=True))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), default=None, help="Optional JSON report path.")
def cmd_eval(dataset, checkpoint_path, seed, out):
    """Accuracy of a trained checkpoint on the unseen test nodes."""
    try:
        manifest = RunManifest(command="eval", config={"seed": seed}, seed=seed)
        g, split_path, _ = load_dataset(dataset, manifest)
        manifest.add_input(checkpoint_path)
        params, cfg = _restore_for_dataset(checkpoint_path, g)
        if split_path is None:
            raise DataError(f"dataset {dataset!r} has no split.txt; eval needs one")
        split = load_fixed_split(split_path, g)
        acc = evaluate_accuracy(g, split, params, cfg, seed=seed)
        click.echo(f"accuracy {acc:.4f} on {len(split.unseen_test)} test nodes")
        if out:
            Path(out).write_text(
                json.dumps({"accuracy": acc, "seed": seed, "mode": cfg.mode}, indent=2) + "\n"
            )
            manifest.write(Path(out).with_suffix(".manifest.json"))
    except (DataError, CheckpointError, ConfigError, ad.NumericError, OSError, ValueError) as exc:
        _fail(str(exc))


@main.command("perturb")
@click.option("--dataset", required=True)
@click.option("--checkpoint", "checkpoints", required=True, multiple=True, type=click.Path(exists=True))
@click.option("--lambdas", default="0,0.5,1.0,1.5", show_default=True)
@click.option("--etas", default="0.1", show_default=True)
@click.option("--seeds", default="0,1,2,3,4,5,6,7,8,9", show_default=True)
@click.option("--test-only", is_flag=True, help="Corrupt unseen test nodes only.")
@click.option("--out-dir", type=click.Path(), default="reports", show_default=True)
def cmd_perturb(dataset, checkpoints, lambdas, etas, seeds, test_only, out_dir):
    """Feature-noise robustness grid for one or more trained checkpoints."""
    try:
        lam_list = [float(x) for x in lambdas.split(",")]
        eta_list = [float(x) for x in etas.split(",")]
        seed_list = [int(x) for x in seeds.split(",")]
        manifest = RunManifest(
            command="perturb",
            config={
                "lambdas": lam_list,
                "etas": eta_list,
                "seeds": seed_list,
                "test_only": test_only,
            },
        )
        g, split_path, _ = load_dataset(dataset, manifest)
        if split_path is None:
            raise DataError(f"dataset {dataset!r} has no split.txt")
        split = load_fixed_split(split_path, g)

        trained = {}
        for path in checkpoints:
            manifest.add_input(path)
            params, cfg = _restore_for_dataset(path, g)
            trained[cfg.mode] = (params, cfg)
        reports = robustness_sweep(
            g, split, trained, lam_list, eta_list, seed_list,
            noise_on_test_only=test_only,
        )

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for mode, report in reports.items():
            csv_path = out / f"robustness_{mode}.csv"
            csv_path.write_text(report.to_csv())
            json_path = out / f"robustness_{mode}.json"
            json_path.write_text(report.to_json() + "\n")
            manifest.add_output(csv_path)
            manifest.add_output(json_path)
            click.echo(f"{mode}: mean accuracy grid written to {csv_path}")
        if "gain" in reports:
            for mode, report in reports.items():
                if mode == "gain":
                    continue
                gap = performance_gap(report, reports["gain"])
                gap_path = out / f"gap_{mode}.csv"
                gap_path.write_text(gap.to_csv())
                manifest.add_output(gap_path)
        manifest.write(out / "perturb_manifest.json")
    except (DataError, CheckpointError, ConfigError, ad.NumericError, OSError, ValueError) as exc:
        _fail(str(exc))


@main.command("embed")
@click.option("--dataset", required=True)
@click.option("--checkpoint", "checkpoint_path", required=True, type=click.Path(exists=True))
@click.option("--nodes", default=None, help="Comma-separated node ids [default: all].")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
def cmd_embed(dataset, checkpoint_path, nodes, seed, out):
    """Write embedding rows `<id> <u_1> ... <u_d>` for the requested nodes."""
    try:
        manifest = RunManifest(command="embed", config={"seed": seed}, seed=seed)
        g, _, _ = load_dataset(dataset, manifest)
        manifest.add_input(checkpoint_path)
        params, cfg = _restore_for_dataset(checkpoint_path, g)
        if nodes is None:
            idx = np.arange(g.node_count)
        else:
            idx = np.array([g.id_index[x] for x in nodes.split(",")], dtype=np.int64)
        vectors = embed_nodes(g, idx, params, cfg, seed=seed)
        with open(out, "w") as fh:
            for node, row in zip(idx, vectors):
                fh.write(
                    str(g.ids[node]) + " " + " ".join(f"{v:.8g}" for v in row) + "\n"
                )
        manifest.write(Path(out).with_suffix(".manifest.json"))
        click.echo(f"wrote {len(idx)} embeddings to {out}")
    except (DataError, CheckpointError, ConfigError, KeyError, ad.NumericError, OSError, ValueError) as exc:
        _fail(str(exc))


def _toy_graph(seed=0):
    rng = np.random.default_rng(seed)
    n, d, c = 8, 5, 3
    adjacency = [set() for _ in range(n)]
    for v in range(n):
        for u in ((v + 1) % n, (v + 3) % n):
            adjacency[v].add(u)
            adjacency[u].add(v)
    neighbors = [np.array(sorted(s), dtype=np.int64) for s in adjacency]
    return AttributedGraph(
        ids=[str(i) for i in range(n)],
        features=rng.normal(size=(n, d)),
        labels=rng.integers(0, c, size=n),
        class_count=c,
        neighbors=neighbors,
    )


@main.command("gradcheck")
@click.option("--tolerance", type=float, default=1e-3, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def cmd_gradcheck(tolerance, seed):
    """Finite-difference check of the whole pipeline on a toy graph; exit 1
    if any relative error exceeds the tolerance."""
    g = _toy_graph(seed)
    enc_cfg = EncoderConfig(depth=2, hidden_dim=8, attention_vector_dim=8)
    params = init_parameters(enc_cfg, g.feature_dim, g.class_count, "gain", seed=seed, dtype=np.float64)
    targets = np.arange(4)
    batch = exhaustive_neighborhood(g, targets, enc_cfg.depth)
    labels = g.labels[targets]

    def forward():
        emb = encode(g, batch, params, enc_cfg)
        return ad.cross_entropy(classify(emb, params), labels)

    report = ad.grad_check(forward, list(params.tensors.values()), tolerance)
    click.echo(f"max relative error {report['max_rel_error']:.3e} (tolerance {tolerance:g})")
    sys.exit(EXIT_OK if report["passed"] else EXIT_RUNTIME)


def _sweep_cell(args):
    dataset, mode, n, base_seed, param, value, config_file, flag_values = args
    flag_values = dict(flag_values)
    if param == "hidden-dim":
        flag_values["hidden_dim"] = value
    elif param == "att-dim":
        flag_values["attention_vector_dim"] = value
    elif param == "sample-size":
        flag_values["sample_sizes"] = ",".join([str(value)] * 2)
    cfg = build_config(_dataset_name(dataset), mode, n, base_seed, config_file, flag_values)
    g, split_path, _ = load_dataset(dataset)
    split = _obtain_split(g, split_path, cfg)
    params, _ = train(g, split, cfg)
    acc = evaluate_accuracy(g, split, params, cfg, seed=base_seed)
    return value, acc


@main.command("sweep")
@click.option("--dataset", required=True)
@click.option("--param", type=click.Choice(["hidden-dim", "att-dim", "sample-size"]), required=True)
@click.option("--values", required=True, help="Comma-separated values to sweep.")
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--out", type=click.Path(), default="sweep.csv", show_default=True)
@_with_train_flags
def cmd_sweep(dataset, param, values, jobs, out, mode, n, seed, config_file, **kwargs):
    """Vary one hyperparameter (all others at defaults), train, and report
    test accuracy per value as CSV."""
    try:
        value_list = [int(x) for x in values.split(",")]
        flag_values = _collect_flag_values(kwargs)
        cells = [
            (dataset, mode, n, seed, param, v, config_file, flag_values)
            for v in value_list
        ]
        if jobs > 1:
            with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_sweep_cell, cells))
        else:
            results = [_sweep_cell(c) for c in cells]
        lines = [f"{param},accuracy"] + [f"{v},{acc:.6f}" for v, acc in results]
        Path(out).write_text("\n".join(lines) + "\n")
        manifest = RunManifest(
            command="sweep",
            config={"param": param, "values": value_list, "mode": mode, "n": n},
            seed=seed,
        )
        manifest.write(Path(out).with_suffix(".manifest.json"))
        for v, acc in results:
            click.echo(f"{param}={v}: accuracy {acc:.4f}")
    except (DataError, ConfigError, ad.NumericError, OSError, ValueError) as exc:
        _fail(str(exc))


if __name__ == "__main__":
    main()
