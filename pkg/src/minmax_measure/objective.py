"""Batched MinMax objective Phi and its regularized variants.

Conventions: the discriminators minimize ``disc_loss`` and the generator
minimizes ``gen_loss = -phi``.  For the divergence variant the penalty
|e_j| * h_j^2 / c_j on the mu-batch is part of phi (it makes the inner
infimum finite); the gradient penalty of the Lipschitz variant only enters
``disc_loss``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autodiff import Node, NonFiniteError, Tape
from .nets import DiscriminatorSet
from .problems import ANALYTIC_ZERO, ProblemInstance


@dataclass(frozen=True)
class RegularizationConfig:
    mode: str = "none"
    c: tuple = (25.0,)
    L: float = 1.0
    lam: float = 10.0

    def __post_init__(self):
        if self.mode not in ("none", "divergence", "lipschitz"):
            raise ValueError(f"regularization mode must be none/divergence/lipschitz, got {self.mode!r}")
        if self.mode == "divergence" and any(not ci > 0 for ci in self.c):
            raise ValueError(f"divergence coefficients must be > 0, got {self.c}")
        if self.mode == "lipschitz" and not (self.L > 0 and self.lam > 0):
            raise ValueError(f"need L > 0 and lambda > 0, got L={self.L}, lambda={self.lam}")

    def coeff(self, j: int) -> float:
        return float(self.c[j] if len(self.c) > 1 else self.c[0])

    @classmethod
    def none(cls):
        return cls("none")

    @classmethod
    def divergence(cls, c=25.0):
        return cls("divergence", tuple(np.atleast_1d(c).astype(float)))

    @classmethod
    def lipschitz(cls, L=1.0, lam=10.0):
        return cls("lipschitz", L=float(L), lam=float(lam))

    def to_config(self) -> dict:
        if self.mode == "divergence":
            return {"mode": "divergence", "c": list(self.c)}
        if self.mode == "lipschitz":
            return {"mode": "lipschitz", "L": self.L, "lambda": self.lam}
        return {"mode": "none"}


@dataclass
class ObjectiveBreakdown:
    phi: Node
    cost_term: Node
    constraint_terms: list
    penalty_terms: list
    disc_loss: Node
    tape: Tape = field(repr=False, default=None)

    @property
    def gen_loss(self) -> Node:
        return -self.phi

    def values(self) -> dict:
        out = {"phi": float(self.phi.value), "cost_term": float(self.cost_term.value)}
        for j, c in enumerate(self.constraint_terms, 1):
            out[f"constraint_{j}"] = float(c.value)
        for j, p in enumerate(self.penalty_terms, 1):
            out[f"penalty_{j}"] = 0.0 if p is None else float(p.value)
        return out


def _as_node(tape, x):
    return x if isinstance(x, Node) else tape.constant(x)


def _check_finite(name, node):
    if not np.isfinite(node.value).all():
        raise NonFiniteError(f"non-finite value in {name}", node)


def _terms(problem, G, mu_batches, discs, tape, trainable, input_grads):
    """Per-term pieces: (gen_side, mu_side, h_mu, grads_gen, grads_mu)."""
    n = G.shape[0]
    pieces = []
    for j, term in enumerate(problem.terms):
        z_gen = term.transform(G)
        if z_gen.value.ndim == 1:
            z_gen = tape.slice(z_gen, (slice(None), None))
        x_mu = mu_batches[j]
        sampled = x_mu is not ANALYTIC_ZERO and x_mu is not None
        if sampled:
            z_all = tape.concat([z_gen, tape.constant(x_mu)], axis=0)
        else:
            z_all = z_gen
        if input_grads:
            h_all, grad_all = discs[j].graph_with_input_grad(tape, z_all, trainable)
        else:
            h_all, grad_all = discs[j].graph(tape, z_all, trainable), None
        h_gen = tape.slice(h_all, (slice(0, n), 0))
        e = term.weight(G)
        gen_side = tape.mean(h_gen if e is None else tape.mul(e, h_gen))
        if sampled:
            h_mu = tape.slice(h_all, (slice(n, None), 0))
            mu_side = tape.mean(h_mu)
        else:
            h_mu = mu_side = None
        grads = None
        if grad_all is not None:
            grads = (tape.slice(grad_all, slice(0, n)),
                     tape.slice(grad_all, slice(n, None)) if sampled else None)
        pieces.append((gen_side, mu_side, h_mu, grads))
    return pieces


def _assemble(problem, G, mu_batches, discs, tape, trainable, reg: RegularizationConfig):
    G = _as_node(tape, G)
    cost = tape.mean(problem.cost(G))
    _check_finite("cost term", cost)
    pieces = _terms(problem, G, mu_batches, discs, tape, trainable, reg.mode == "lipschitz")
    phi = cost
    constraints, penalties = [], []
    gp_total = None
    for j, (gen_side, mu_side, h_mu, grads) in enumerate(pieces):
        term = problem.terms[j]
        c_j = gen_side if mu_side is None else tape.sub(gen_side, mu_side)
        _check_finite(f"constraint term {j + 1} ({term.name})", c_j)
        constraints.append(c_j)
        phi = tape.add(phi, c_j)
        pen = None
        if reg.mode == "divergence" and h_mu is not None:
            # sampled targets carry e = 1, so |e| psi*(h) = h^2 / c
            pen = tape.scale(tape.mean(tape.square(h_mu)), 1.0 / reg.coeff(j))
            phi = tape.add(phi, pen)
        elif reg.mode == "lipschitz":
            pen = None
            for g in grads:
                if g is None:
                    continue
                excess = tape.pos(tape.sub(tape.norm(g), reg.L))
                part = tape.mean(tape.square(excess))
                pen = part if pen is None else tape.add(pen, part)
            pen = tape.scale(pen, reg.lam)
            gp_total = pen if gp_total is None else tape.add(gp_total, pen)
        if pen is not None:
            _check_finite(f"penalty term {j + 1} ({term.name})", pen)
        penalties.append(pen)
    disc_loss = phi if gp_total is None else tape.add(phi, gp_total)
    return ObjectiveBreakdown(phi, cost, constraints, penalties, disc_loss, tape)


def phi_plain(problem: ProblemInstance, generated, mu_batches: Sequence, discs: DiscriminatorSet,
              *, tape: Tape | None = None, trainable: bool = True) -> ObjectiveBreakdown:
    """Lagrangian mean f(G) + sum_j [mean e_j(G) h_j(pi_j G) - mean h_j(X_j)] on one batch."""
    return _assemble(problem, generated, mu_batches, discs, tape or Tape(), trainable,
                     RegularizationConfig.none())


def phi_divergence(problem, generated, mu_batches, discs, reg: RegularizationConfig,
                   *, tape=None, trainable=True) -> ObjectiveBreakdown:
    if reg.mode != "divergence":
        raise ValueError("phi_divergence needs a divergence regularization config")
    return _assemble(problem, generated, mu_batches, discs, tape or Tape(), trainable, reg)


def phi_lipschitz(problem, generated, mu_batches, discs, reg: RegularizationConfig,
                  *, tape=None, trainable=True) -> ObjectiveBreakdown:
    if reg.mode != "lipschitz":
        raise ValueError("phi_lipschitz needs a lipschitz regularization config")
    return _assemble(problem, generated, mu_batches, discs, tape or Tape(), trainable, reg)


def objective(problem, generated, mu_batches, discs, reg: RegularizationConfig,
              *, tape=None, trainable=True, with_penalty: bool = True) -> ObjectiveBreakdown:
    """Dispatch on ``reg.mode``; ``with_penalty=False`` skips the gradient penalty."""
    if reg.mode == "lipschitz" and not with_penalty:
        reg = RegularizationConfig.none()
    return _assemble(problem, generated, mu_batches, discs, tape or Tape(), trainable, reg)


# unboundedness witness ------------------------------------------------------------

@dataclass(frozen=True)
class WitnessResult:
    strike: float
    gap: float
    noise: float
    term_value: float
    indistinguishable: bool


def call_prices(samples, strikes) -> np.ndarray:
    x = np.asarray(samples, dtype=float).ravel()
    k = np.atleast_1d(np.asarray(strikes, dtype=float))
    return np.array([np.maximum(x - b, 0.0).mean() for b in k])


def witness_unboundedness(nu_samples, mu_samples, a: float = 1.0, strikes=None,
                          n_sigma: float = 3.0) -> WitnessResult:
    """Strike b maximizing |E_nu (x-b)^+ - E_mu (x-b)^+| and the resulting Lagrangian term.

    With h(x) = a * (x - b)^+ (sign chosen against the gap) the constraint term of
    the Lagrangian equals -a * |gap|, which diverges to -inf as a grows whenever
    the two laws differ.
    """
    nu = np.asarray(nu_samples, dtype=float).ravel()
    mu = np.asarray(mu_samples, dtype=float).ravel()
    if strikes is None:
        pooled = np.concatenate([nu, mu])
        strikes = np.quantile(pooled, np.linspace(0.01, 0.99, 99))
    strikes = np.atleast_1d(np.asarray(strikes, dtype=float))
    gaps = call_prices(nu, strikes) - call_prices(mu, strikes)
    i = int(np.argmax(np.abs(gaps)))
    b = float(strikes[i])
    cn, cm = np.maximum(nu - b, 0.0), np.maximum(mu - b, 0.0)
    noise = float(np.sqrt(cn.var() / len(cn) + cm.var() / len(cm)))
    gap = float(abs(gaps[i]))
    indistinguishable = gap <= n_sigma * noise
    return WitnessResult(b, gap, noise, 0.0 if indistinguishable else -a * gap, indistinguishable)
