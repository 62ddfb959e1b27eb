"""Gradient descent-ascent training of generator against discriminators.

One iteration t: (after warm-up) ``n_inf`` discriminator Adam steps on fresh
batches, then one generator Adam step on a fresh batch whose objective value
is recorded as Phi_t.  Optional unrolling evaluates the generator loss against
a copy of the discriminators advanced by ``unroll`` extra Adam steps
(first-order lookahead: the copy is treated as constant).
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .autodiff import AdamHyper, AdamState, NonFiniteError, Tape, adam_step, backward
from .nets import DiscriminatorSet, GeneratorEnsemble, clone_params, restore_params
from .objective import RegularizationConfig, objective
from .problems import ProblemInstance, sample_mu_side

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch: int = 256
    iterations: int = 15000
    n_inf: int = 1
    n_return: int = 500
    warmup: int = 0
    unroll: int = 0
    mixture: int = 1
    regularization: RegularizationConfig = RegularizationConfig()
    adam_gen: AdamHyper = AdamHyper()
    adam_disc: AdamHyper = AdamHyper()
    seed: int = 0
    trace_stride: int = 1

    def __post_init__(self):
        if not self.iterations >= self.n_return >= 1:
            raise ValueError(f"need iterations >= n_return >= 1, got {self.iterations}, {self.n_return}")
        if self.n_inf < 1 or self.unroll < 0 or self.mixture < 1 or self.warmup < 0:
            raise ValueError("need n_inf >= 1, unroll >= 0, mixture >= 1, warmup >= 0")
        if self.batch < 1 or self.trace_stride < 1:
            raise ValueError("batch and trace_stride must be >= 1")

    def to_config(self) -> dict:
        out = asdict(self)
        out["regularization"] = self.regularization.to_config()
        return out


class NumericalAbort(RuntimeError):
    """Phi or a gradient became non-finite during training."""

    def __init__(self, iteration: int, breakdown: dict | None, cause: Exception, trace=None):
        super().__init__(f"non-finite value at iteration {iteration}: {cause}")
        self.iteration = iteration
        self.breakdown = breakdown or {}
        self.trace = trace or {}  # completed iterations only


@dataclass
class TrainResult:
    value: float
    trace: dict
    running_return: np.ndarray
    generator: GeneratorEnsemble
    discriminators: DiscriminatorSet
    wall_clock: float
    config: TrainConfig
    draws: dict = field(default_factory=dict)

    @property
    def phi(self) -> np.ndarray:
        return self.trace["phi"]


class Streams:
    """Independent seeded streams for one run (init, latents, routing, one per term)."""

    def __init__(self, seed: int, n_terms: int):
        root = np.random.SeedSequence(seed)
        children = root.spawn(3 + n_terms)
        self.init = np.random.default_rng(children[0])
        self.latent = np.random.default_rng(children[1])
        self.routing = np.random.default_rng(children[2])
        self.terms = [np.random.default_rng(c) for c in children[3:]]
        self.draws = {"latent": 0, "terms": [0] * n_terms}


def stability_metric(trace, window: int) -> float:
    """Population standard deviation of the last ``window`` entries."""
    trace = np.asarray(trace, dtype=float)
    if window > len(trace) or window < 1:
        raise ValueError(f"window {window} not in [1, {len(trace)}]")
    return float(np.std(trace[-window:]))


def running_return(phi, n_return: int) -> np.ndarray:
    """Mean of the trailing min(t, n_return) values, for every t."""
    phi = np.asarray(phi, dtype=float)
    c = np.concatenate([[0.0], np.cumsum(phi)])
    t = np.arange(1, len(phi) + 1)
    k = np.minimum(t, n_return)
    return (c[t] - c[t - k]) / k


class _Run:
    def __init__(self, problem, gen, disc, cfg, streams):
        self.problem = problem
        self.gen = gen
        self.disc = disc
        self.cfg = cfg
        self.s = streams
        self.gen_params = gen.params
        self.disc_params = disc.params
        self.gen_state = AdamState.for_params(self.gen_params)
        self.disc_state = AdamState.for_params(self.disc_params)
        self.last_penalties = [0.0] * problem.J

    def batches(self):
        n = self.cfg.batch
        latents = self.problem.latent.sample(n, self.s.latent)
        self.s.draws["latent"] += n
        mu = []
        for j, term in enumerate(self.problem.terms):
            mu.append(sample_mu_side(term, n, self.s.terms[j]))
            if term.target.kind == "sampler":
                self.s.draws["terms"][j] += n
        return latents, mu

    def disc_step(self, state: AdamState):
        latents, mu = self.batches()
        G = self.gen.generate(latents, self.s.routing)
        tape = Tape()
        br = objective(self.problem, G, mu, self.disc, self.cfg.regularization, tape=tape)
        grads = backward(tape, br.disc_loss)
        adam_step(self.disc_params, [grads.get(p, np.zeros_like(p.value)) for p in self.disc_params],
                  state, self.cfg.adam_disc)
        return br

    def gen_step(self):
        cfg = self.cfg
        if cfg.unroll > 0:
            saved = clone_params(self.disc_params)
            saved_state = self.disc_state.copy()
            for _ in range(cfg.unroll):
                self.disc_step(saved_state)
            latents, mu = self.batches()
            tape = Tape()
            G = self.gen.graph(tape, latents, self.s.routing)
            br = objective(self.problem, G, mu, self.disc, cfg.regularization, tape=tape,
                           trainable=False, with_penalty=False)
            grads = backward(tape, br.gen_loss)
            restore_params(self.disc_params, saved)
            # Phi_t against the live discriminators on the same generated batch
            live = objective(self.problem, G.value, mu, self.disc, cfg.regularization,
                             trainable=False, with_penalty=False)
            record = live
        else:
            latents, mu = self.batches()
            tape = Tape()
            G = self.gen.graph(tape, latents, self.s.routing)
            br = objective(self.problem, G, mu, self.disc, cfg.regularization, tape=tape,
                           trainable=False, with_penalty=False)
            grads = backward(tape, br.gen_loss)
            record = br
        adam_step(self.gen_params, [grads.get(p, np.zeros_like(p.value)) for p in self.gen_params],
                  self.gen_state, cfg.adam_gen)
        return record


def train(problem: ProblemInstance, nets, cfg: TrainConfig, streams: Streams | None = None,
          callback=None) -> TrainResult:
    """Run the GDA loop; ``nets`` is a (GeneratorEnsemble, DiscriminatorSet) pair."""
    gen, disc = nets
    if gen.dim != problem.d:
        raise ValueError(f"generator output dim {gen.dim} != problem dim {problem.d}")
    if len(disc) != problem.J:
        raise ValueError(f"{len(disc)} discriminators for {problem.J} terms")
    streams = streams or Streams(cfg.seed, problem.J)
    run = _Run(problem, gen, disc, cfg, streams)
    N = cfg.iterations
    cols = ["phi", "cost_term"] + [f"constraint_{j}" for j in range(1, problem.J + 1)] \
        + [f"penalty_{j}" for j in range(1, problem.J + 1)]
    trace = {c: np.zeros(N) for c in cols}
    penalties = [0.0] * problem.J
    t0 = time.perf_counter()
    lipschitz = cfg.regularization.mode == "lipschitz"
    for t in range(1, N + 1):
        br = None
        try:
            if t > cfg.warmup:
                for _ in range(cfg.n_inf):
                    br = run.disc_step(run.disc_state)
                if lipschitz:
                    penalties = [0.0 if p is None else float(p.value) for p in br.penalty_terms]
            br = run.gen_step()
        except NonFiniteError as exc:
            partial = {c: trace[c][:t - 1].copy() for c in cols}
            raise NumericalAbort(t, br.values() if br is not None else None, exc, partial) from exc
        vals = br.values()
        if not np.isfinite(vals["phi"]):
            partial = {c: trace[c][:t - 1].copy() for c in cols}
            raise NumericalAbort(t, vals, FloatingPointError("phi is not finite"), partial)
        for c in cols:
            trace[c][t - 1] = vals[c]
        if lipschitz:
            for j in range(problem.J):
                trace[f"penalty_{j + 1}"][t - 1] = penalties[j]
        if callback is not None:
            callback(t, vals)
        if t % 1000 == 0:
            log.info("iter %d phi %.5f (%.1fs)", t, vals["phi"], time.perf_counter() - t0)
    wall = time.perf_counter() - t0
    rr = running_return(trace["phi"], cfg.n_return)
    value = float(np.mean(trace["phi"][N - cfg.n_return:]))
    return TrainResult(value, trace, rr, gen, disc, wall, cfg,
                       {"latent": streams.draws["latent"], "terms": list(streams.draws["terms"])})


def unrolled_generator_step(problem, nets, cfg: TrainConfig, streams: Streams, disc_state=None,
                            gen_state=None):
    """Apply one (possibly unrolled) generator step; returns the recorded breakdown and states.

    Exposed for tests: with ``cfg.unroll == 0`` it is the plain generator step.
    """
    gen, disc = nets
    run = _Run(problem, gen, disc, cfg, streams)
    if disc_state is not None:
        run.disc_state = disc_state
    if gen_state is not None:
        run.gen_state = gen_state
    br = run.gen_step()
    return br, run.disc_state, run.gen_state


def write_trace_csv(path, result: TrainResult, stride: int | None = None):
    stride = stride or result.config.trace_stride
    cols = list(result.trace)
    N = len(result.trace["phi"])
    with open(path, "w") as fh:
        fh.write(",".join(["iter"] + cols + ["running_return"]) + "\n")
        for i in range(0, N, stride):
            row = [str(i + 1)] + [repr(float(result.trace[c][i])) for c in cols] \
                + [repr(float(result.running_return[i]))]
            fh.write(",".join(row) + "\n")


def read_trace_csv(path) -> dict:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.size == 0:
        return {h: np.zeros(0) for h in header}
    return {h: data[:, i] for i, h in enumerate(header)}
