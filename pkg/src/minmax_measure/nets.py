"""Feed-forward networks: generator ensembles and per-constraint discriminators."""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from .autodiff import Node, Parameter, Tape, input_gradient_graph, mlp_graph

CHECKPOINT_FORMAT = "minmax-measure-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class MLPConfig:
    input_dim: int
    output_dim: int
    depth: int = 4
    hidden_dim: int = 64
    activation: str = "relu"
    init: str = "glorot_normal"

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError(f"input/output dims must be >= 1, got {self.input_dim}, {self.output_dim}")
        if self.depth < 2:
            raise ValueError(f"depth must be >= 2, got {self.depth}")
        if self.hidden_dim < 1:
            raise ValueError(f"hidden_dim must be >= 1, got {self.hidden_dim}")
        if self.activation not in ("relu", "tanh"):
            raise ValueError(f"activation must be relu or tanh, got {self.activation!r}")
        if self.init != "glorot_normal":
            raise ValueError(f"unknown init {self.init!r}")

    def layer_shapes(self) -> list[tuple[int, int]]:
        dims = [self.input_dim] + [self.hidden_dim] * (self.depth - 1) + [self.output_dim]
        return [(dims[i + 1], dims[i]) for i in range(self.depth)]


class MLP:
    """Affine layers with a hidden activation; the last layer is affine only."""

    def __init__(self, cfg: MLPConfig, weights: Sequence[Parameter], biases: Sequence[Parameter]):
        self.cfg = cfg
        self.weights = list(weights)
        self.biases = list(biases)

    @property
    def params(self) -> list[Parameter]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Plain numpy forward pass (no tape)."""
        h = np.asarray(x, dtype=np.float64)
        if h.ndim != 2 or h.shape[1] != self.cfg.input_dim:
            raise ValueError(f"expected input (n, {self.cfg.input_dim}), got {h.shape}")
        act = np.tanh if self.cfg.activation == "tanh" else (lambda z: np.maximum(z, 0.0))
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W.value.T + b.value
            if i < last:
                h = act(h)
        return h

    def layer_nodes(self, tape: Tape, trainable: bool = True):
        return [(tape.param(W, trainable), tape.param(b, trainable))
                for W, b in zip(self.weights, self.biases)]

    def graph(self, tape: Tape, x: Node, trainable: bool = True) -> Node:
        if x.shape[-1] != self.cfg.input_dim:
            raise ValueError(f"expected input (n, {self.cfg.input_dim}), got {x.shape}")
        out, _ = mlp_graph(tape, x, self.layer_nodes(tape, trainable), self.cfg.activation)
        return out

    def graph_with_input_grad(self, tape: Tape, x: Node, trainable: bool = True):
        return input_gradient_graph(tape, x, self.layer_nodes(tape, trainable), self.cfg.activation)

    def state(self) -> list[np.ndarray]:
        return [p.value.copy() for p in self.params]

    def load_state(self, arrays: Sequence[np.ndarray]):
        for p, a in zip(self.params, arrays):
            if p.value.shape != a.shape:
                raise ValueError(f"{p.name}: shape {a.shape} != {p.value.shape}")
            p.value[...] = a


def init_mlp(cfg: MLPConfig, rng: np.random.Generator, name: str = "mlp") -> MLP:
    """Glorot-normal weights, zero biases."""
    weights, biases = [], []
    for i, (fan_out, fan_in) in enumerate(cfg.layer_shapes()):
        std = np.sqrt(2.0 / (fan_in + fan_out))
        weights.append(Parameter(rng.normal(0.0, std, size=(fan_out, fan_in)), f"{name}.W{i}"))
        biases.append(Parameter(np.zeros(fan_out), f"{name}.b{i}"))
    return MLP(cfg, weights, biases)


class GeneratorEnsemble:
    """The map T, possibly a mixture of members with uniform random routing.

    If ``support_box`` is given (shape (d, 2)), outputs are clamped into it.
    """

    def __init__(self, members: Sequence[MLP], support_box=None):
        if not members:
            raise ValueError("ensemble needs at least one member")
        k, d = members[0].cfg.input_dim, members[0].cfg.output_dim
        for m in members:
            if (m.cfg.input_dim, m.cfg.output_dim) != (k, d):
                raise ValueError("all ensemble members must share latent and output dims")
        self.members = list(members)
        self.latent_dim = k
        self.dim = d
        if support_box is not None:
            support_box = np.asarray(support_box, dtype=np.float64)
            if support_box.shape != (d, 2) or np.any(support_box[:, 0] > support_box[:, 1]):
                raise ValueError(f"support_box must be (d, 2) with lo <= hi, got {support_box}")
        self.support_box = support_box

    @property
    def params(self) -> list[Parameter]:
        return [p for m in self.members for p in m.params]

    def route(self, n: int, rng: np.random.Generator) -> list[np.ndarray]:
        """Row indices assigned to each member."""
        if len(self.members) == 1:
            return [np.arange(n)]
        choice = rng.integers(0, len(self.members), size=n)
        return [np.flatnonzero(choice == i) for i in range(len(self.members))]

    def _clamp(self, x):
        if self.support_box is None:
            return x
        return np.clip(x, self.support_box[:, 0], self.support_box[:, 1])

    def generate(self, latents: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        latents = np.asarray(latents, dtype=np.float64)
        if latents.ndim != 2 or latents.shape[1] != self.latent_dim:
            raise ValueError(f"latents must be (n, {self.latent_dim}), got {latents.shape}")
        rows = self.route(len(latents), rng)
        out = np.empty((len(latents), self.dim))
        for member, r in zip(self.members, rows):
            if len(r):
                out[r] = member(latents[r])
        return self._clamp(out)

    def graph(self, tape: Tape, latents: np.ndarray, rng: np.random.Generator,
              trainable: bool = True) -> Node:
        n = len(latents)
        rows = self.route(n, rng)
        if len(self.members) == 1:
            out = self.members[0].graph(tape, tape.constant(latents), trainable)
        else:
            parts, used = [], []
            for member, r in zip(self.members, rows):
                if len(r):
                    parts.append(member.graph(tape, tape.constant(latents[r]), trainable))
                    used.append(r)
            out = tape.scatter_rows(parts, used, n)
        if self.support_box is not None:
            out = tape.clamp(out, self.support_box[:, 0], self.support_box[:, 1])
        return out


def generate(ens: GeneratorEnsemble, latents: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return ens.generate(latents, rng)


class DiscriminatorSet:
    """One scalar network h_j per constraint term."""

    def __init__(self, nets: Sequence[MLP]):
        for j, net in enumerate(nets):
            if net.cfg.output_dim != 1:
                raise ValueError(f"discriminator {j} must have scalar output")
        self.nets = list(nets)

    def __len__(self):
        return len(self.nets)

    def __getitem__(self, j) -> MLP:
        return self.nets[j]

    @property
    def params(self) -> list[Parameter]:
        return [p for net in self.nets for p in net.params]


def eval_h(ds: DiscriminatorSet, j: int, z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 1:
        z = z[:, None]
    if z.shape[1] != ds[j].cfg.input_dim:
        raise ValueError(f"h_{j} expects dimension {ds[j].cfg.input_dim}, got {z.shape[1]}")
    return ds[j](z)[:, 0]


def build_networks(problem, rng: np.random.Generator, *, gen_hidden: int = 64,
                   disc_hidden: int = 64, depth: int = 4, mixture: int = 1):
    """Generator ensemble (tanh) and discriminators (ReLU) sized for ``problem``."""
    gen_cfg = MLPConfig(problem.latent.dim, problem.d, depth, gen_hidden, "tanh")
    members = [init_mlp(gen_cfg, rng, f"T{i}") for i in range(mixture)]
    discs = [init_mlp(MLPConfig(term.dim, 1, depth, disc_hidden, "relu"), rng, f"h{j}")
             for j, term in enumerate(problem.terms)]
    return GeneratorEnsemble(members, problem.support_box), DiscriminatorSet(discs)


# checkpoints ------------------------------------------------------------------

def save_checkpoint(path, gen: GeneratorEnsemble, disc: DiscriminatorSet, meta: dict | None = None):
    """Write all network arrays to an ``.npz`` with a JSON header entry."""
    arrays = {}
    layout = {"generator": [], "discriminators": []}
    for i, m in enumerate(gen.members):
        layout["generator"].append(asdict(m.cfg))
        for p in m.params:
            arrays[p.name] = p.value
    for j, net in enumerate(disc.nets):
        layout["discriminators"].append(asdict(net.cfg))
        for p in net.params:
            arrays[p.name] = p.value
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "layout": layout,
        "support_box": None if gen.support_box is None else gen.support_box.tolist(),
        "names": list(arrays),
        "meta": meta or {},
    }
    arrays["__header__"] = np.array(json.dumps(header))
    with open(Path(path), "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path):
    """Rebuild (generator, discriminators, meta) from :func:`save_checkpoint` output."""
    with np.load(Path(path)) as data:
        header = json.loads(str(data["__header__"]))
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} file")
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {header.get('version')}")

        def rebuild(cfg_dict, prefix):
            cfg = MLPConfig(**cfg_dict)
            ws = [Parameter(data[f"{prefix}.W{i}"], f"{prefix}.W{i}") for i in range(cfg.depth)]
            bs = [Parameter(data[f"{prefix}.b{i}"], f"{prefix}.b{i}") for i in range(cfg.depth)]
            return MLP(cfg, ws, bs)

        members = [rebuild(c, f"T{i}") for i, c in enumerate(header["layout"]["generator"])]
        discs = [rebuild(c, f"h{j}") for j, c in enumerate(header["layout"]["discriminators"])]
    return GeneratorEnsemble(members, header["support_box"]), DiscriminatorSet(discs), header["meta"]


def clone_params(params: Sequence[Parameter]) -> list[np.ndarray]:
    return [p.value.copy() for p in params]


def restore_params(params: Sequence[Parameter], values: Sequence[np.ndarray]):
    for p, v in zip(params, values):
        p.value[...] = v


__all__ = [
    "DiscriminatorSet", "GeneratorEnsemble", "MLP", "MLPConfig", "build_networks",
    "clone_params", "eval_h", "generate", "init_mlp", "load_checkpoint", "restore_params",
    "save_checkpoint",
]
