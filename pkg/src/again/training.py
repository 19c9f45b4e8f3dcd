"""Interleaved minibatch training: supervised step, discriminator steps, generator step."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from .adversary import PriorConfig, discriminator_loss, generator_loss, sample_prior
from .graph import AttributedGraph, NodeSplit
from .model import ConfigError, EncoderConfig, classify, encode, mlp_forward, predict
from .optim import OptimConfig, adam_step, clipped_sgd_step
from .params import ParameterSet, init_parameters, load_checkpoint, save_checkpoint
from .sampling import iterate_batches, sample_neighborhood

MODES = ("gain", "again", "gs-mean", "mlp")

_MODE_AGGREGATOR = {
    "gain": "attention",
    "again": "attention",
    "gs-mean": "mean",
    "mlp": "none-mlp",
}


@dataclass
class TrainConfig:
    """Everything a training run depends on, including per-dataset defaults."""

    mode: str = "again"
    labeled_per_class: int = 20
    max_epochs: int = 200
    disc_steps: int = 1
    sample_sizes: list[int] = field(default_factory=lambda: [25, 10])
    lr_model: float = 0.001
    lr_disc: float = 0.001
    weight_decay_model: float = 0.05
    weight_decay_disc: float = 0.0
    dropout: float = 0.5
    batch_size: int = 256
    prior: PriorConfig = field(default_factory=PriorConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; pick one of {MODES}")
        if self.max_epochs < 1 or self.batch_size < 1:
            raise ConfigError("max_epochs and batch_size must be >= 1")
        if self.mode == "again" and self.disc_steps < 1:
            raise ConfigError("adversarial mode needs disc_steps >= 1")
        expected = _MODE_AGGREGATOR[self.mode]
        if self.encoder.aggregator_kind != expected:
            raise ConfigError(
                f"mode {self.mode!r} requires aggregator_kind {expected!r}, "
                f"got {self.encoder.aggregator_kind!r}"
            )
        if self.mode != "mlp" and len(self.sample_sizes) != self.encoder.depth:
            raise ConfigError("sample_sizes length must equal encoder depth")
        if self.prior.dim != self.encoder.hidden_dim:
            raise ConfigError("prior dim must equal the embedding dimension")

    def to_dict(self) -> dict:
        return asdict(self)


# Discriminator learning rates from the per-dataset tuning grid; everything
# else shares the common defaults above.
_DISC_LR = {
    ("cora", 20): 0.0001,
    ("cora", 60): 0.001,
    ("cora", 100): 0.0001,
    ("citeseer", 20): 0.001,
    ("citeseer", 60): 0.001,
    ("citeseer", 100): 0.0001,
}


def default_train_config(dataset: str, n: int, mode: str, seed: int = 0) -> TrainConfig:
    """Published per-dataset hyperparameters, keyed by dataset name and the
    number of labeled nodes per class."""
    dataset = dataset.lower()
    encoder = EncoderConfig(aggregator_kind=_MODE_AGGREGATOR[mode])
    cfg = TrainConfig(
        mode=mode,
        labeled_per_class=n,
        encoder=encoder,
        prior=PriorConfig(dim=encoder.hidden_dim),
        seed=seed,
    )
    if dataset == "blogcatalog":
        cfg.disc_steps = 5
        cfg.lr_disc = 0.0002
        cfg.weight_decay_model = 0.005
    elif dataset == "pubmed":
        cfg.lr_disc = 0.001
    else:
        cfg.lr_disc = _DISC_LR.get((dataset, n), 0.001)
    return cfg


@dataclass
class TrainLog:
    """One record per completed epoch."""

    records: list[dict] = field(default_factory=list)

    def append(self, **record):
        self.records.append(record)

    def to_csv(self, include_timing: bool = True) -> str:
        lines = ["epoch,sup_loss,dis_loss,gen_loss,seconds,val_acc"]
        for r in self.records:
            val = "" if r.get("val_acc") is None else f"{r['val_acc']:.6f}"
            dis = "" if r.get("dis_loss") is None else f"{r['dis_loss']:.6f}"
            gen = "" if r.get("gen_loss") is None else f"{r['gen_loss']:.6f}"
            seconds = f"{r['seconds']:.3f}" if include_timing else "0.000"
            lines.append(
                f"{r['epoch']},{r['sup_loss']:.6f},{dis},{gen},{seconds},{val}"
            )
        return "\n".join(lines) + "\n"

    def column(self, key: str) -> list:
        return [r.get(key) for r in self.records]


def build_training_view(g: AttributedGraph, split: NodeSplit) -> AttributedGraph:
    """The graph as seen during training: every edge touching an unseen test
    node removed, node indexing and feature/label rows untouched."""
    hidden = np.zeros(g.node_count, dtype=bool)
    hidden[list(split.unseen_test)] = True
    neighbors = [
        np.array([], dtype=np.int64) if hidden[v] else nbrs[~hidden[nbrs]]
        for v, nbrs in enumerate(g.neighbors)
    ]
    view = AttributedGraph.__new__(AttributedGraph)
    view.ids = g.ids
    view.features = g.features
    view.labels = g.labels
    view.class_count = g.class_count
    view.neighbors = neighbors
    view.id_index = g.id_index
    return view


def _supervised_scores(view, nodes, params, cfg, rng_sample, rng_dropout, train):
    if cfg.mode == "mlp":
        dtype = params.tensors["cls.W"].data.dtype
        feats = ad.constant(np.ascontiguousarray(view.features[nodes], dtype=dtype))
        return mlp_forward(feats, params, train, rng_dropout, cfg.dropout)
    batch = sample_neighborhood(
        view, nodes, cfg.sample_sizes, seed=int(rng_sample.integers(2**63))
    )
    emb = encode(view, batch, params, cfg.encoder, train, rng_dropout, cfg.dropout)
    return classify(emb, params)


def _encode_batch(view, nodes, params, cfg, rng_sample, rng_dropout, train):
    batch = sample_neighborhood(
        view, nodes, cfg.sample_sizes, seed=int(rng_sample.integers(2**63))
    )
    return encode(view, batch, params, cfg.encoder, train, rng_dropout, cfg.dropout)


def train(
    g: AttributedGraph,
    split: NodeSplit,
    cfg: TrainConfig,
    validation: np.ndarray | None = None,
) -> tuple[ParameterSet, TrainLog]:
    """Run the full interleaved loop for ``cfg.max_epochs`` epochs.

    Per epoch: supervised minibatches over the labeled nodes; then, in
    adversarial mode, ``disc_steps`` discriminator updates followed by one
    generator update, both on fresh batches of observed nodes.  Test nodes
    and their incident edges are invisible throughout.
    """
    split.validate(g)
    view = build_training_view(g, split)
    labeled = np.array(sorted(split.labeled), dtype=np.int64)
    observed = np.array(sorted(split.observed), dtype=np.int64)

    master = np.random.default_rng(cfg.seed)
    init_seed = int(master.integers(2**63))
    rng_order = np.random.default_rng(int(master.integers(2**63)))
    rng_sample = np.random.default_rng(int(master.integers(2**63)))
    rng_dropout = np.random.default_rng(int(master.integers(2**63)))
    rng_adv = np.random.default_rng(int(master.integers(2**63)))

    params = init_parameters(
        cfg.encoder,
        g.feature_dim,
        g.class_count,
        cfg.mode,
        seed=init_seed,
        with_discriminator=cfg.mode == "again",
    )
    params.meta["train_config"] = cfg.to_dict()
    model_opt = OptimConfig(cfg.lr_model, cfg.weight_decay_model)
    disc_opt = OptimConfig(cfg.lr_disc, cfg.weight_decay_disc)

    log = TrainLog()
    labels = g.labels
    for epoch in range(cfg.max_epochs):
        started = time.perf_counter()
        try:
            sup_losses, sup_sizes = [], []
            for nodes in iterate_batches(
                labeled, cfg.batch_size, seed=int(rng_order.integers(2**63))
            ):
                scores = _supervised_scores(
                    view, nodes, params, cfg, rng_sample, rng_dropout, train=True
                )
                loss = ad.cross_entropy(scores, labels[nodes])
                params.zero_grad()
                loss.backward()
                adam_step(params.model_group(), params.model_adam, model_opt)
                sup_losses.append(float(loss.data))
                sup_sizes.append(len(nodes))
            sup_loss = float(np.average(sup_losses, weights=sup_sizes))

            dis_loss = gen_loss = None
            if cfg.mode == "again":
                for _ in range(cfg.disc_steps):
                    nodes = rng_adv.choice(
                        observed,
                        size=min(cfg.batch_size, len(observed)),
                        replace=False,
                    )
                    emb = _encode_batch(
                        view, nodes, params, cfg, rng_sample, rng_dropout, train=True
                    )
                    real = sample_prior(
                        cfg.prior,
                        len(nodes),
                        seed=int(rng_adv.integers(2**63)),
                        dtype=emb.matrix.dtype,
                    )
                    d_loss = discriminator_loss(real, emb.matrix, params)
                    params.zero_grad()
                    d_loss.backward()
                    adam_step(params.disc_group(), params.disc_adam, disc_opt)
                    dis_loss = float(d_loss.data)

                nodes = rng_adv.choice(
                    observed, size=min(cfg.batch_size, len(observed)), replace=False
                )
                emb = _encode_batch(
                    view, nodes, params, cfg, rng_sample, rng_dropout, train=True
                )
                g_loss = generator_loss(emb.vectors, params)
                params.zero_grad()
                g_loss.backward()
                clipped_sgd_step(params.encoder_group(), cfg.lr_model)
                gen_loss = float(g_loss.data)
        except ad.NumericError as exc:
            raise ad.NumericError(f"epoch {epoch}: {exc}") from exc

        val_acc = None
        if validation is not None and len(validation):
            scores = _supervised_scores(
                view, validation, params, cfg, rng_sample, rng_dropout, train=False
            )
            val_acc = float(np.mean(predict(scores) == labels[validation]))

        log.append(
            epoch=epoch,
            sup_loss=sup_loss,
            dis_loss=dis_loss,
            gen_loss=gen_loss,
            seconds=time.perf_counter() - started,
            val_acc=val_acc,
        )
    return params, log


def checkpoint(params: ParameterSet, path):
    save_checkpoint(params, path)


def restore(path) -> ParameterSet:
    return load_checkpoint(path)
