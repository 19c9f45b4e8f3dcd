"""Learnable parameter store, seeded initialization and checkpoint I/O."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, parameter
from .optim import AdamState

CHECKPOINT_VERSION = 1
_MAGIC = b"AGNC"

DISC_HIDDEN = (1024, 1024, 256)


class CheckpointError(ValueError):
    pass


def _uniform_init(rng, shape, fan_in, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


@dataclass
class ParameterSet:
    """All trainable tensors, keyed by role, plus per-group Adam state.

    Names are hierarchical: ``enc.k<depth>.{W,a,Wv,Ws}`` for the aggregation
    layers, ``mlp.{W1,b1}`` for the features-only variant, ``cls.{W,b}`` for
    the output layer and ``disc.<i>.{W,b}`` for the discriminator.  The model
    group (everything but ``disc.*``) and the discriminator group are updated
    by disjoint optimizers.
    """

    tensors: dict[str, Tensor]
    meta: dict
    model_adam: AdamState = field(default_factory=AdamState)
    disc_adam: AdamState = field(default_factory=AdamState)

    def model_group(self) -> dict[str, Tensor]:
        return {n: t for n, t in self.tensors.items() if not n.startswith("disc.")}

    def encoder_group(self) -> dict[str, Tensor]:
        return {n: t for n, t in self.tensors.items() if n.startswith(("enc.", "mlp."))}

    def disc_group(self) -> dict[str, Tensor]:
        return {n: t for n, t in self.tensors.items() if n.startswith("disc.")}

    def layer(self, depth: int) -> dict[str, Tensor]:
        prefix = f"enc.k{depth}."
        return {
            name[len(prefix):]: t
            for name, t in self.tensors.items()
            if name.startswith(prefix)
        }

    def discriminator_layers(self) -> list[tuple[Tensor, Tensor]]:
        layers = []
        i = 0
        while f"disc.{i}.W" in self.tensors:
            layers.append((self.tensors[f"disc.{i}.W"], self.tensors[f"disc.{i}.b"]))
            i += 1
        return layers

    def zero_grad(self):
        for t in self.tensors.values():
            t.zero_grad()

    def clone(self) -> "ParameterSet":
        import copy

        def copy_state(state: AdamState) -> AdamState:
            return AdamState(
                m={n: a.copy() for n, a in state.m.items()},
                v={n: a.copy() for n, a in state.v.items()},
                step=dict(state.step),
            )

        return ParameterSet(
            tensors={n: parameter(t.data.copy()) for n, t in self.tensors.items()},
            meta=copy.deepcopy(self.meta),
            model_adam=copy_state(self.model_adam),
            disc_adam=copy_state(self.disc_adam),
        )


def init_parameters(
    encoder_cfg,
    feature_dim: int,
    class_count: int,
    mode: str,
    seed: int,
    with_discriminator: bool = False,
    dtype=np.float32,
) -> ParameterSet:
    """Seeded uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] initialization of every
    tensor the requested mode needs."""
    rng = np.random.default_rng(seed)
    tensors: dict[str, Tensor] = {}
    d = encoder_cfg.hidden_dim
    half = d // 2
    att_half = encoder_cfg.attention_vector_dim // 2

    if mode == "mlp":
        tensors["mlp.W1"] = parameter(_uniform_init(rng, (feature_dim, d), feature_dim, dtype))
        tensors["mlp.b1"] = parameter(_uniform_init(rng, (d,), feature_dim, dtype))
    else:
        in_dim = feature_dim
        for k in range(1, encoder_cfg.depth + 1):
            if mode != "gs-mean":
                tensors[f"enc.k{k}.W"] = parameter(
                    _uniform_init(rng, (in_dim, att_half), in_dim, dtype)
                )
                tensors[f"enc.k{k}.a"] = parameter(
                    _uniform_init(
                        rng,
                        (encoder_cfg.attention_vector_dim, 1),
                        encoder_cfg.attention_vector_dim,
                        dtype,
                    )
                )
            tensors[f"enc.k{k}.Wv"] = parameter(_uniform_init(rng, (in_dim, half), in_dim, dtype))
            tensors[f"enc.k{k}.Ws"] = parameter(_uniform_init(rng, (in_dim, half), in_dim, dtype))
            in_dim = d

    tensors["cls.W"] = parameter(_uniform_init(rng, (d, class_count), d, dtype))
    tensors["cls.b"] = parameter(_uniform_init(rng, (class_count,), d, dtype))

    if with_discriminator:
        dims = (d, *DISC_HIDDEN, 1)
        for i, (din, dout) in enumerate(zip(dims[:-1], dims[1:])):
            tensors[f"disc.{i}.W"] = parameter(_uniform_init(rng, (din, dout), din, dtype))
            tensors[f"disc.{i}.b"] = parameter(_uniform_init(rng, (dout,), din, dtype))

    meta = {
        "mode": mode,
        "feature_dim": feature_dim,
        "class_count": class_count,
        "encoder": {
            "depth": encoder_cfg.depth,
            "hidden_dim": encoder_cfg.hidden_dim,
            "attention_vector_dim": encoder_cfg.attention_vector_dim,
            "aggregator_kind": encoder_cfg.aggregator_kind,
            "attention_heads": encoder_cfg.attention_heads,
        },
        "init_seed": seed,
    }
    return ParameterSet(tensors=tensors, meta=meta)


def save_checkpoint(pset: ParameterSet, path):
    """Single deterministic binary file: JSON header plus raw array payload."""
    arrays: list[tuple[str, np.ndarray]] = [
        (name, t.data) for name, t in pset.tensors.items()
    ]
    for group, state in (("model", pset.model_adam), ("disc", pset.disc_adam)):
        for kind, buffers in (("m", state.m), ("v", state.v)):
            for name in sorted(buffers):
                arrays.append((f"adam.{group}.{kind}.{name}", buffers[name]))

    specs = []
    offset = 0
    for name, arr in arrays:
        nbytes = arr.nbytes
        specs.append(
            {
                "name": name,
                "dtype": str(arr.dtype),
                "shape": list(arr.shape),
                "offset": offset,
            }
        )
        offset += nbytes
    header = {
        "version": CHECKPOINT_VERSION,
        "meta": pset.meta,
        "adam_steps": {
            "model": pset.model_adam.step,
            "disc": pset.disc_adam.step,
        },
        "arrays": specs,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(len(header_bytes).to_bytes(8, "little"))
        fh.write(header_bytes)
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr).tobytes())


def load_checkpoint(path) -> ParameterSet:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    header_len = int.from_bytes(blob[4:12], "little")
    try:
        header = json.loads(blob[12: 12 + header_len])
    except (ValueError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header: {exc}")
    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: checkpoint version {header.get('version')} "
            f"!= supported {CHECKPOINT_VERSION}"
        )
    payload = blob[12 + header_len:]
    loaded: dict[str, np.ndarray] = {}
    for spec in header["arrays"]:
        arr = np.frombuffer(
            payload,
            dtype=np.dtype(spec["dtype"]),
            count=int(np.prod(spec["shape"], dtype=np.int64)) if spec["shape"] else 1,
            offset=spec["offset"],
        ).reshape(spec["shape"]).copy()
        loaded[spec["name"]] = arr
    tensors = {
        name: parameter(arr)
        for name, arr in loaded.items()
        if not name.startswith("adam.")
    }

    def state_for(group, steps):
        prefix_m, prefix_v = f"adam.{group}.m.", f"adam.{group}.v."
        m = {
            name[len(prefix_m):]: arr.astype(np.float64)
            for name, arr in loaded.items()
            if name.startswith(prefix_m)
        }
        v = {
            name[len(prefix_v):]: arr.astype(np.float64)
            for name, arr in loaded.items()
            if name.startswith(prefix_v)
        }
        if set(m) != set(v) or set(m) != set(steps):
            raise CheckpointError(f"{path}: inconsistent optimizer buffers for {group}")
        return AdamState(m=m, v=v, step={n: int(s) for n, s in steps.items()})

    steps = header.get("adam_steps", {"model": {}, "disc": {}})
    return ParameterSet(
        tensors=tensors,
        meta=header["meta"],
        model_adam=state_for("model", steps["model"]),
        disc_adam=state_for("disc", steps["disc"]),
    )
